//! Monte-Carlo simulation of the literal bit exchanges, used as an
//! independent check on the analytic rates and exponents.
//!
//! Trials are split into blocks of [`BLOCK_TRIALS`]. Each block draws from
//! its own ChaCha8 stream keyed by `(seed, block, hypothesis)`, so results do
//! not depend on the number of worker threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::asymptotic::XyxKlDesign;
use crate::error::{FusionError, Result};
use crate::extensions::mif::MifDesign;
use crate::extensions::multisensor::{MultiSensorModel, VecYxThresholds, XVecYxThresholds};
use crate::fixed_sample::{bit_prob, XyxThresholds, YxThresholds};
use crate::gaussian_model::{q_inv, GaussianModel, Hypothesis};

pub const BLOCK_TRIALS: u64 = 1 << 16;

/// Empirical probability or exponent with its 3-sigma half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub trials: u64,
    pub seed: u64,
    pub half_width: f64,
}

impl McEstimate {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.value).abs() <= self.half_width
    }
}

/// The random source of one block of trials.
pub struct TrialRng(ChaCha8Rng);

impl TrialRng {
    pub fn for_block(seed: u64, block: u64, hyp: Hypothesis) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((block << 1) | hyp.index() as u64);
        Self(rng)
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// `N(mean, sigma^2)` by inverting the Gaussian tail.
    pub fn normal(&mut self, mean: f64, sigma: f64) -> f64 {
        mean + sigma * q_inv(self.uniform())
    }
}

/// A design together with the process that executes it.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Yx(GaussianModel, YxThresholds),
    Xyx(GaussianModel, XyxThresholds),
    VecYx(MultiSensorModel, VecYxThresholds),
    XVecYx(MultiSensorModel, XVecYxThresholds),
    /// Multi-step process; X decides `[x > final_t[u_{N-1}]]`.
    Mif(GaussianModel, MifDesign, [f64; 2]),
}

impl Scenario {
    fn check(&self) -> Result<()> {
        match self {
            Scenario::Xyx(_, t) => t.validate(),
            Scenario::VecYx(m, t) => {
                check_len(m, t.t_v.len(), t.t_w.len())
            }
            Scenario::XVecYx(m, t) => check_len(m, t.t_v.len(), t.t_w.len()),
            _ => Ok(()),
        }
    }

    /// One trial under `hyp`: draw `x`, then each `y`, run the exchange and
    /// return the final decision.
    fn decide(&self, hyp: Hypothesis, rng: &mut TrialRng) -> bool {
        let mean = hyp.mean();
        match self {
            Scenario::Yx(m, t) => {
                let x = rng.normal(mean, m.sigma_x());
                let y = rng.normal(mean, m.sigma_y());
                let v = (y > t.t_v) as usize;
                x > t.t_w[v]
            }
            Scenario::Xyx(m, t) => {
                let x = rng.normal(mean, m.sigma_x());
                let y = rng.normal(mean, m.sigma_y());
                let u = (x > t.t_u) as usize;
                let v = (y > t.t_v[u]) as usize;
                x > t.t_w[v][u]
            }
            Scenario::VecYx(m, t) => {
                let x = rng.normal(mean, m.sigma_x());
                let mut p = 0;
                for (k, &s) in m.sigma_ys().iter().enumerate() {
                    let y = rng.normal(mean, s);
                    p |= ((y > t.t_v[k]) as usize) << k;
                }
                x > t.t_w[p]
            }
            Scenario::XVecYx(m, t) => {
                let x = rng.normal(mean, m.sigma_x());
                let u = (x > t.t_u) as usize;
                let mut p = 0;
                for (k, &s) in m.sigma_ys().iter().enumerate() {
                    let y = rng.normal(mean, s);
                    p |= ((y > t.t_v[k][u]) as usize) << k;
                }
                x > t.t_w[p][u]
            }
            Scenario::Mif(m, d, final_t) => {
                let x = rng.normal(mean, m.sigma_x());
                let y = rng.normal(mean, m.sigma_y());
                x > final_t[d.final_bit(x, y) as usize]
            }
        }
    }
}

fn check_len(m: &MultiSensorModel, n_v: usize, n_w: usize) -> Result<()> {
    if m.k() > crate::extensions::multisensor::MAX_PERIPHERALS {
        return Err(FusionError::CapExceeded(format!("K = {} peripheral sensors", m.k())));
    }
    if n_v != m.k() || n_w != 1 << m.k() {
        return Err(FusionError::Shape(format!(
            "K = {} needs {} peripheral and {} final thresholds",
            m.k(),
            m.k(),
            1 << m.k()
        )));
    }
    Ok(())
}

fn blocks(trials: u64) -> Vec<(u64, u64)> {
    let n = trials.div_ceil(BLOCK_TRIALS);
    (0..n)
        .map(|b| (b, BLOCK_TRIALS.min(trials - b * BLOCK_TRIALS)))
        .collect()
}

fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(FusionError::InvalidDesign("trials must be at least 1".into()));
    }
    Ok(())
}

fn rate(scenario: &Scenario, hyp: Hypothesis, trials: u64, seed: u64) -> McEstimate {
    let counts: Vec<u64> = blocks(trials)
        .into_par_iter()
        .map(|(b, n)| {
            let mut rng = TrialRng::for_block(seed, b, hyp);
            (0..n).filter(|_| scenario.decide(hyp, &mut rng)).count() as u64
        })
        .collect();
    let hits: u64 = counts.iter().sum();
    let value = hits as f64 / trials as f64;
    McEstimate {
        value,
        trials,
        seed,
        half_width: 3.0 * (value * (1.0 - value) / trials as f64).sqrt(),
    }
}

/// Empirical `(pf, pd)` of a design.
pub fn simulate_fixed(scenario: &Scenario, trials: u64, seed: u64) -> Result<(McEstimate, McEstimate)> {
    check_trials(trials)?;
    scenario.check()?;
    Ok((
        rate(scenario, Hypothesis::H0, trials, seed),
        rate(scenario, Hypothesis::H1, trials, seed),
    ))
}

/// Designs whose per-sample log-likelihood ratio can be averaged.
#[derive(Debug, Clone, PartialEq)]
pub enum ExponentDesign {
    Yx { t_v: f64 },
    Xyx(XyxKlDesign),
    Mif(MifDesign),
}

/// `ln p0(x, v) / p1(x, v)` of one sample, with `v` the bit X receives.
pub fn sample_llr(model: &GaussianModel, design: &ExponentDesign, x: f64, y: f64) -> f64 {
    let (sx, sy) = (model.sigma_x(), model.sigma_y());
    let x_part = (0.5 - x) / (sx * sx);
    let (p0, p1) = match design {
        ExponentDesign::Yx { t_v } => {
            let v = (y > *t_v) as usize;
            (bit_prob(*t_v, v, Hypothesis::H0, sy), bit_prob(*t_v, v, Hypothesis::H1, sy))
        }
        ExponentDesign::Xyx(d) => {
            let u = (x > d.t_u) as usize;
            let t = d.t_v[u];
            let v = (y > t) as usize;
            (bit_prob(t, v, Hypothesis::H0, sy), bit_prob(t, v, Hypothesis::H1, sy))
        }
        ExponentDesign::Mif(d) => {
            let q0 = d.final_bit_prob(x, Hypothesis::H0, sy);
            let q1 = d.final_bit_prob(x, Hypothesis::H1, sy);
            if d.final_bit(x, y) == 1 {
                (q0, q1)
            } else {
                (1.0 - q0, 1.0 - q1)
            }
        }
    };
    x_part + (p0.ln() - p1.ln())
}

/// Mean over `trials` of `(1/n) ln p0(x^n, v^n) / p1(x^n, v^n)` under H0,
/// with a 3-sigma CLT half-width.
pub fn estimate_exponent(
    model: &GaussianModel,
    design: &ExponentDesign,
    n: u64,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    check_trials(trials)?;
    if n == 0 {
        return Err(FusionError::InvalidDesign("n must be at least 1".into()));
    }
    let sums: Vec<(f64, f64)> = blocks(trials)
        .into_par_iter()
        .map(|(b, count)| {
            let mut rng = TrialRng::for_block(seed, b, Hypothesis::H0);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..count {
                let mut total = 0.0;
                for _ in 0..n {
                    let x = rng.normal(0.0, model.sigma_x());
                    let y = rng.normal(0.0, model.sigma_y());
                    total += sample_llr(model, design, x, y);
                }
                let mean = total / n as f64;
                s += mean;
                s2 += mean * mean;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = sums.iter().fold((0.0, 0.0), |(a, b), &(c, d)| (a + c, b + d));
    let t = trials as f64;
    let value = s / t;
    let half_width = if trials > 1 {
        let var = ((s2 - t * value * value) / (t - 1.0)).max(0.0);
        3.0 * (var / t).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(McEstimate { value, trials, seed, half_width })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_accept_is_exact() {
        let m = GaussianModel::new(1.0, 1.0).unwrap();
        let s = Scenario::Yx(m, YxThresholds { t_v: 0.0, t_w: [f64::NEG_INFINITY; 2] });
        let (pf, pd) = simulate_fixed(&s, 1000, 3).unwrap();
        assert_eq!((pf.value, pd.value), (1.0, 1.0));
        assert_eq!(pf.half_width, 0.0);
    }

    #[test]
    fn same_seed_same_estimate() {
        let m = GaussianModel::new(0.8, 1.2).unwrap();
        let s = Scenario::Xyx(
            m,
            XyxThresholds { t_u: 0.5, t_v: [1.0, 0.0], t_w: [[1.0, 1.5], [-0.5, 0.2]] },
        );
        let a = simulate_fixed(&s, 150_000, 42).unwrap();
        let b = simulate_fixed(&s, 150_000, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_fixed(&s, 150_000, 43).unwrap();
        assert_ne!(a.0.value, c.0.value);
    }

    #[test]
    fn uniforms_stay_open() {
        let mut rng = TrialRng::for_block(0, 0, Hypothesis::H0);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn zero_trials_rejected() {
        let m = GaussianModel::new(1.0, 1.0).unwrap();
        let s = Scenario::Yx(m, YxThresholds { t_v: 0.0, t_w: [0.0; 2] });
        assert!(simulate_fixed(&s, 0, 1).is_err());
        assert!(estimate_exponent(&m, &ExponentDesign::Yx { t_v: 0.0 }, 0, 5, 1).is_err());
    }

    #[test]
    fn single_sample_exponent_is_the_sample_llr() {
        let m = GaussianModel::new(1.3, 0.7).unwrap();
        let design = ExponentDesign::Yx { t_v: 0.2 };
        let e = estimate_exponent(&m, &design, 1, 1, 99).unwrap();
        let mut rng = TrialRng::for_block(99, 0, Hypothesis::H0);
        let x = rng.normal(0.0, 1.3);
        let y = rng.normal(0.0, 0.7);
        assert_eq!(e.value, sample_llr(&m, &design, x, y));
    }
}
