//! The subcommands, each producing one CSV table.

use rayon::prelude::*;

use crate::asymptotic::{maximize_kl_xyx, maximize_kl_yx};
use crate::extensions::mif::{mif_kl_max, mif_rates, MifDesign};
use crate::extensions::multisensor::{
    multisensor_evaluate, multisensor_kl_max, MultiSensorModel, MultiThresholds, VecYxThresholds,
    XVecYxThresholds,
};
use crate::fixed_sample::{centralized, optimize_xyx, optimize_yx, Rates};
use crate::gaussian_model::GaussianModel;
use crate::montecarlo::{estimate_exponent, simulate_fixed, ExponentDesign, McEstimate, Scenario};

use super::config::{Command, ExperimentConfig};
use super::CliError;

/// CSV text plus whether any row failed its check.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub csv: String,
    pub failed: bool,
}

struct Table {
    text: String,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { text: header.join(",") + "\n" }
    }

    fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    x.to_string()
}

pub fn run_command(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.validate()?;
    match cfg.command {
        Command::Fig3 => Ok(fig3(cfg)),
        Command::Fig4 => fig4(cfg),
        Command::Validate => validate(cfg),
        Command::Mif => mif(cfg),
        Command::Multisensor => multisensor(cfg),
        Command::Eval => eval(cfg),
    }
}

fn sweep_models(cfg: &ExperimentConfig) -> Result<Vec<GaussianModel>, CliError> {
    cfg.sweep
        .points()
        .into_iter()
        .map(|sx| GaussianModel::new(sx, cfg.sigma_y).map_err(|e| CliError::Config(e.to_string())))
        .collect()
}

fn fig3_row(cfg: &ExperimentConfig, m: &GaussianModel) -> Vec<String> {
    let result = (|| {
        let yx = optimize_yx(m, cfg.alpha, &cfg.search, &cfg.iter)?;
        let xyx = optimize_xyx(m, cfg.alpha, &cfg.search, &cfg.iter)?;
        let cen = centralized(m, cfg.alpha)?;
        Ok::<_, crate::FusionError>((yx, xyx, cen))
    })();
    match result {
        Ok((yx, xyx, cen)) => {
            let r_yx = (yx.point.pf - cfg.alpha).abs();
            let r_xyx = (xyx.point.pf - cfg.alpha).abs();
            let status = if r_yx.max(r_xyx) > cfg.search.constraint_tol {
                "pf_violation"
            } else if !(yx.iteration_converged && xyx.iteration_converged) {
                "iteration_not_converged"
            } else {
                "ok"
            };
            vec![
                fmt_f64(m.sigma_x()),
                fmt_f64(yx.point.pd),
                fmt_f64(xyx.point.pd),
                fmt_f64(cen.pd),
                fmt_f64(r_yx),
                fmt_f64(r_xyx),
                status.to_string(),
            ]
        }
        Err(e) => {
            let nan = fmt_f64(f64::NAN);
            let mut row = vec![fmt_f64(m.sigma_x())];
            row.extend(std::iter::repeat_n(nan, 5));
            row.push(format!("error: {}", e.to_string().replace(',', ";")));
            row
        }
    }
}

fn fig3(cfg: &ExperimentConfig) -> Report {
    let mut table = Table::new(&[
        "sigma_x",
        "pd_yx",
        "pd_xyx",
        "pd_centralized",
        "pf_residual_yx",
        "pf_residual_xyx",
        "status",
    ]);
    // validate() has already checked every sweep point
    let models = sweep_models(cfg).unwrap_or_default();
    let rows: Vec<Vec<String>> = models.par_iter().map(|m| fig3_row(cfg, m)).collect();
    let failed = rows.iter().any(|r| r[6] != "ok");
    for r in &rows {
        table.row(r);
    }
    Report { csv: table.text, failed }
}

fn fig4(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let mut table = Table::new(&["sigma_x", "k_yx", "k_xyx", "k_xy", "k_yxy"]);
    let rows: Vec<crate::Result<[f64; 5]>> = sweep_models(cfg)?
        .par_iter()
        .map(|m| {
            let sw = m.swapped();
            Ok([
                m.sigma_x(),
                maximize_kl_yx(m).k_total,
                maximize_kl_xyx(m, &cfg.search)?.1,
                maximize_kl_yx(&sw).k_total,
                maximize_kl_xyx(&sw, &cfg.search)?.1,
            ])
        })
        .collect();
    for r in rows {
        table.row(&r?.map(fmt_f64));
    }
    Ok(Report { csv: table.text, failed: false })
}

struct Check {
    name: String,
    analytic: f64,
    mc: McEstimate,
}

fn rate_checks(name: &str, analytic: Rates, mc: (McEstimate, McEstimate)) -> [Check; 2] {
    [
        Check { name: format!("{name}_pf"), analytic: analytic.pf, mc: mc.0 },
        Check { name: format!("{name}_pd"), analytic: analytic.pd, mc: mc.1 },
    ]
}

fn validate(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let m = cfg.model()?;
    let (trials, seed) = (cfg.trials, cfg.seed);
    let yx = optimize_yx(&m, cfg.alpha, &cfg.search, &cfg.iter)?;
    let xyx = optimize_xyx(&m, cfg.alpha, &cfg.search, &cfg.iter)?;
    let (ty, tx) = (yx.thresholds, xyx.thresholds);
    let mut checks = Vec::new();

    let rates = |p: crate::fixed_sample::OperatingPoint| Rates { pf: p.pf, pd: p.pd };
    checks.extend(rate_checks("yx", rates(yx.point), simulate_fixed(&Scenario::Yx(m, ty), trials, seed)?));
    checks.extend(rate_checks(
        "xyx",
        rates(xyx.point),
        simulate_fixed(&Scenario::Xyx(m, tx), trials, seed.wrapping_add(1))?,
    ));

    let pair = MultiSensorModel::new(m.sigma_x(), vec![m.sigma_y(); 2])?;
    let vec = VecYxThresholds {
        t_v: vec![ty.t_v; 2],
        t_w: (0..4).map(|p| ty.t_w[(p != 0) as usize]).collect(),
    };
    let xvec = XVecYxThresholds {
        t_u: tx.t_u,
        t_v: vec![tx.t_v; 2],
        t_w: (0..4).map(|p| tx.t_w[(p == 3) as usize]).collect(),
    };
    checks.extend(rate_checks(
        "vecyx2",
        multisensor_evaluate(&pair, &MultiThresholds::VecYx(vec.clone()))?,
        simulate_fixed(&Scenario::VecYx(pair.clone(), vec), trials, seed.wrapping_add(2))?,
    ));
    checks.extend(rate_checks(
        "xvecyx2",
        multisensor_evaluate(&pair, &MultiThresholds::XVecYx(xvec.clone()))?,
        simulate_fixed(&Scenario::XVecYx(pair, xvec), trials, seed.wrapping_add(3))?,
    ));

    let three = MifDesign::three_step(tx.t_u, tx.t_v);
    let final_t = [tx.t_w[0][0], tx.t_w[1][0]];
    checks.extend(rate_checks(
        "mif3",
        mif_rates(&m, &three, final_t),
        simulate_fixed(&Scenario::Mif(m, three, final_t), trials, seed.wrapping_add(4))?,
    ));

    let (n, et) = (cfg.exponent_n, cfg.exponent_trials);
    let kyx = maximize_kl_yx(&m);
    checks.push(Check {
        name: "exponent_yx".into(),
        analytic: kyx.k_total,
        mc: estimate_exponent(&m, &ExponentDesign::Yx { t_v: kyx.t_star }, n, et, seed.wrapping_add(5))?,
    });
    let (kd, kxyx) = maximize_kl_xyx(&m, &cfg.search)?;
    checks.push(Check {
        name: "exponent_xyx".into(),
        analytic: kxyx,
        mc: estimate_exponent(&m, &ExponentDesign::Xyx(kd), n, et, seed.wrapping_add(6))?,
    });

    let mut table = Table::new(&["check_name", "analytic", "mc_value", "half_width", "pass"]);
    let mut failed = false;
    for c in checks {
        let pass = c.mc.contains(c.analytic);
        failed |= !pass;
        table.row(&[
            c.name,
            fmt_f64(c.analytic),
            fmt_f64(c.mc.value),
            fmt_f64(c.mc.half_width),
            pass.to_string(),
        ]);
    }
    Ok(Report { csv: table.text, failed })
}

fn mif(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let m = cfg.model()?;
    let k_yx = maximize_kl_yx(&m).k_total;
    let mut table = Table::new(&["n_steps", "k_mif_max", "k_yx_max", "gap"]);
    let mut steps = cfg.n_steps.clone();
    steps.sort_unstable();
    steps.dedup();
    for n in steps {
        let r = mif_kl_max(&m, n, &cfg.search)?;
        table.row(&[n.to_string(), fmt_f64(r.value), fmt_f64(k_yx), fmt_f64(r.value - k_yx)]);
    }
    Ok(Report { csv: table.text, failed: false })
}

fn multisensor(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let mut table = Table::new(&["k", "k_vecyx", "k_xvecyx", "gap"]);
    let mut ks = cfg.peripherals.clone();
    ks.sort_unstable();
    ks.dedup();
    for k in ks {
        let mm = MultiSensorModel::new(cfg.sigma_x, vec![cfg.sigma_y; k])?;
        let r = multisensor_kl_max(&mm, &cfg.search)?;
        table.row(&[
            k.to_string(),
            fmt_f64(r.k_vecyx),
            fmt_f64(r.k_xvecyx),
            fmt_f64(r.k_xvecyx - r.k_vecyx),
        ]);
    }
    Ok(Report { csv: table.text, failed: false })
}

fn eval(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let m = cfg.model()?;
    let yx = optimize_yx(&m, cfg.alpha, &cfg.search, &cfg.iter)?;
    let xyx = optimize_xyx(&m, cfg.alpha, &cfg.search, &cfg.iter)?;
    let cen = centralized(&m, cfg.alpha)?;
    let k_cen = m.kl_x() + m.swapped().kl_x();
    let mut table = Table::new(&["architecture", "pf", "pd", "lambda", "k_max"]);
    for (name, p, k) in [
        ("yx", yx.point, maximize_kl_yx(&m).k_total),
        ("xyx", xyx.point, maximize_kl_xyx(&m, &cfg.search)?.1),
        ("centralized", cen, k_cen),
    ] {
        table.row(&[name.into(), fmt_f64(p.pf), fmt_f64(p.pd), fmt_f64(p.lambda), fmt_f64(k)]);
    }
    Ok(Report { csv: table.text, failed: false })
}
