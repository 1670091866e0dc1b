//! Experiment configuration and its flat `key = value` file format.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::check_alpha;
use crate::extensions::mif::check_steps;
use crate::extensions::multisensor::MAX_PERIPHERALS;
use crate::gaussian_model::GaussianModel;
use crate::search::{linspace, IterConfig, SearchConfig};

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fig3,
    Fig4,
    Validate,
    Mif,
    Multisensor,
    Eval,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Fig3,
        Command::Fig4,
        Command::Validate,
        Command::Mif,
        Command::Multisensor,
        Command::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Fig3 => "fig3",
            Command::Fig4 => "fig4",
            Command::Validate => "validate",
            Command::Mif => "mif",
            Command::Multisensor => "multisensor",
            Command::Eval => "eval",
        }
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown command `{s}`")))
    }
}

/// `count` evenly spaced points from `start` to `stop`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Sweep {
    pub fn points(&self) -> Vec<f64> {
        linspace(self.start, self.stop, self.count)
    }
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.count)
    }
}

impl FromStr for Sweep {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("sweep `{s}` is not start:stop:count"));
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let [a, b, n] = parts[..] else {
            return Err(bad());
        };
        Ok(Sweep {
            start: a.parse().map_err(|_| bad())?,
            stop: b.parse().map_err(|_| bad())?,
            count: n.parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub alpha: f64,
    /// `sigma_x` values for the figure sweeps.
    pub sweep: Sweep,
    pub seed: u64,
    pub trials: u64,
    /// Samples per trial in the exponent checks.
    pub exponent_n: u64,
    pub exponent_trials: u64,
    pub n_steps: Vec<usize>,
    pub peripherals: Vec<usize>,
    pub out: Option<PathBuf>,
    pub search: SearchConfig,
    pub iter: IterConfig,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            sigma_x: 1.0,
            sigma_y: 1.0,
            alpha: 0.2,
            sweep: Sweep { start: 0.5, stop: 2.0, count: 16 },
            seed: 1,
            trials: 1_000_000,
            exponent_n: 2000,
            exponent_trials: 200,
            n_steps: vec![3, 5],
            peripherals: vec![1, 2],
            out: None,
            search: SearchConfig::default(),
            iter: IterConfig::default(),
        }
    }

    pub fn model(&self) -> Result<GaussianModel, CliError> {
        GaussianModel::new(self.sigma_x, self.sigma_y).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: crate::FusionError| CliError::Config(e.to_string());
        self.model()?;
        check_alpha(self.alpha).map_err(cfg)?;
        let s = self.sweep;
        if s.count == 0 || !(s.start > 0.0 && s.start <= s.stop && s.stop.is_finite()) {
            return Err(CliError::Config(format!(
                "sweep {s} needs 0 < start <= stop and count >= 1"
            )));
        }
        if self.trials == 0 || self.exponent_n == 0 || self.exponent_trials == 0 {
            return Err(CliError::Config("trial and sample counts must be positive".into()));
        }
        for &n in &self.n_steps {
            check_steps(n).map_err(cfg)?;
        }
        for &k in &self.peripherals {
            if k == 0 || k > MAX_PERIPHERALS {
                return Err(CliError::Config(format!(
                    "peripherals = {k} outside 1..={MAX_PERIPHERALS}"
                )));
            }
        }
        self.search.validate().map_err(cfg)?;
        let it = &self.iter;
        if !(0.0..1.0).contains(&it.damping) || it.max_steps == 0 || !(it.tolerance > 0.0) {
            return Err(CliError::Config(
                "iteration needs damping in [0, 1), max_steps >= 1 and tolerance > 0".into(),
            ));
        }
        Ok(())
    }

    /// Apply every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected `key = value`", i + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| CliError::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::new(Command::Fig3);
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("`{v}` is not a valid {key}"))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, String> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|p| num(key, p.trim())).collect()
        }
        match key {
            "command" => self.command = value.parse().map_err(|e: CliError| e.to_string())?,
            "sigma_x" => self.sigma_x = num(key, value)?,
            "sigma_y" => self.sigma_y = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "sweep" => self.sweep = value.parse().map_err(|e: CliError| e.to_string())?,
            "seed" => self.seed = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "exponent_n" => self.exponent_n = num(key, value)?,
            "exponent_trials" => self.exponent_trials = num(key, value)?,
            "n_steps" => self.n_steps = list(key, value)?,
            "peripherals" => self.peripherals = list(key, value)?,
            "out" => self.out = (!value.is_empty()).then(|| PathBuf::from(value)),
            "grid_points" => self.search.grid_points = num(key, value)?,
            "span_sigmas" => self.search.span_sigmas = num(key, value)?,
            "refine_tol" => self.search.refine_tol = num(key, value)?,
            "max_sweeps" => self.search.max_sweeps = num(key, value)?,
            "starts" => self.search.starts = num(key, value)?,
            "lambda_max" => self.search.lambda_max = num(key, value)?,
            "bisection_steps" => self.search.bisection_steps = num(key, value)?,
            "constraint_tol" => self.search.constraint_tol = num(key, value)?,
            "joint_grid_points" => self.search.joint_grid_points = num(key, value)?,
            "mif_grid_points" => self.search.mif_grid_points = num(key, value)?,
            "mif_x_cuts" => self.search.mif_x_cuts = list(key, value)?,
            "max_evaluations" => self.search.max_evaluations = num(key, value)?,
            "damping" => self.iter.damping = num(key, value)?,
            "max_steps" => self.iter.max_steps = num(key, value)?,
            "iter_tolerance" => self.iter.tolerance = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.search;
        let out = self.out.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let pairs: [(&str, String); 27] = [
            ("command", self.command.name().into()),
            ("sigma_x", self.sigma_x.to_string()),
            ("sigma_y", self.sigma_y.to_string()),
            ("alpha", self.alpha.to_string()),
            ("sweep", self.sweep.to_string()),
            ("seed", self.seed.to_string()),
            ("trials", self.trials.to_string()),
            ("exponent_n", self.exponent_n.to_string()),
            ("exponent_trials", self.exponent_trials.to_string()),
            ("n_steps", join(&self.n_steps)),
            ("peripherals", join(&self.peripherals)),
            ("out", out),
            ("grid_points", s.grid_points.to_string()),
            ("span_sigmas", s.span_sigmas.to_string()),
            ("refine_tol", s.refine_tol.to_string()),
            ("max_sweeps", s.max_sweeps.to_string()),
            ("starts", s.starts.to_string()),
            ("lambda_max", s.lambda_max.to_string()),
            ("bisection_steps", s.bisection_steps.to_string()),
            ("constraint_tol", s.constraint_tol.to_string()),
            ("joint_grid_points", s.joint_grid_points.to_string()),
            ("mif_grid_points", s.mif_grid_points.to_string()),
            ("mif_x_cuts", join(&s.mif_x_cuts)),
            ("max_evaluations", s.max_evaluations.to_string()),
            ("damping", self.iter.damping.to_string()),
            ("max_steps", self.iter.max_steps.to_string()),
            ("iter_tolerance", self.iter.tolerance.to_string()),
        ];
        for (k, v) in pairs {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        for c in Command::ALL {
            let cfg = ExperimentConfig::new(c);
            assert_eq!(ExperimentConfig::parse(&cfg.to_string()).unwrap(), cfg);
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let cfg = ExperimentConfig::parse("# sweep\n\n  sigma_x = 0.75 \ncommand=mif\n").unwrap();
        assert_eq!(cfg.sigma_x, 0.75);
        assert_eq!(cfg.command, Command::Mif);
    }

    #[test]
    fn bad_lines_are_config_errors() {
        for text in ["sigma_x 1", "colour = red", "alpha = x", "sweep = 1:2", "command = fig9"] {
            assert!(matches!(ExperimentConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn validation_catches_ranges() {
        let mut cfg = ExperimentConfig::new(Command::Mif);
        cfg.n_steps = vec![9];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::new(Command::Fig3);
        cfg.alpha = 1.0;
        assert!(cfg.validate().is_err());
        cfg.alpha = 0.2;
        cfg.sweep.count = 0;
        assert!(cfg.validate().is_err());
    }
}
