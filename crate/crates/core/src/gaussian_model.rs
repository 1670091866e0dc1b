//! Gaussian shift model and the elementary probabilities built on it.
//!
//! Both sensors observe a constant `s` in independent zero-mean Gaussian
//! noise, `x = s + n_x` and `y = s + n_y`, and the test is `s = 0` (H0)
//! against `s = 1` (H1). Every decision region used in this crate is a
//! half-line (or an intersection of half-lines), so all region
//! probabilities reduce to the Gaussian tail function [`q_tail`].

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{FusionError, Result};
use crate::fixed_sample::XyxThresholds;

/// Extended-real decision threshold. `+inf` gives an empty acceptance
/// region and `-inf` the whole line; both are legal everywhere.
pub type Threshold = f64;

/// Beyond this magnitude the tail is clamped to exactly 0 or 1.
const TAIL_CLAMP: f64 = 38.0;

/// Gaussian tail `Q(z) = P(Z > z)` for a standard normal `Z`.
pub fn q_tail(z: f64) -> f64 {
    debug_assert!(!z.is_nan(), "q_tail called with NaN");
    if z > TAIL_CLAMP {
        0.0
    } else if z < -TAIL_CLAMP {
        1.0
    } else {
        0.5 * libm::erfc(z * FRAC_1_SQRT_2)
    }
}

/// Inverse of [`q_tail`]: the `z` with `Q(z) = p`.
///
/// Rational initial guess (Acklam) followed by Halley steps against
/// `q_tail` itself, so `q_tail(q_inv(p))` is consistent to a few ulps.
pub fn q_inv(p: f64) -> f64 {
    if p.is_nan() {
        return f64::NAN;
    }
    if p <= 0.0 {
        return f64::INFINITY;
    }
    if p >= 1.0 {
        return f64::NEG_INFINITY;
    }
    // Work with the lower quantile x = Phi^-1(p) = -z.
    let mut x = acklam_lower_quantile(p);
    for _ in 0..3 {
        let err = q_tail(-x) - p;
        if err == 0.0 {
            break;
        }
        let u = err * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        if !u.is_finite() {
            break;
        }
        x -= u / (1.0 + 0.5 * x * u);
    }
    -x
}

fn acklam_lower_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_671_010_336_143,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Density of `N(mean, sigma^2)` at `x`.
pub fn normal_pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

/// The two simple hypotheses. The mean under `H{i}` is `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    pub const BOTH: [Hypothesis; 2] = [Hypothesis::H0, Hypothesis::H1];

    pub fn mean(self) -> f64 {
        match self {
            Hypothesis::H0 => 0.0,
            Hypothesis::H1 => 1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Hypothesis::H0 => 0,
            Hypothesis::H1 => 1,
        }
    }
}

/// Which of the two observing nodes a quantity refers to. `X` is always
/// the fusion center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sensor {
    X,
    Y,
}

/// Noise scales of the two sensors for the unit mean-shift test.
///
/// Other shifts `mu1 - mu0 = m` map onto this model by dividing both
/// noise scales by `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianModel {
    sigma_x: f64,
    sigma_y: f64,
}

impl GaussianModel {
    pub fn new(sigma_x: f64, sigma_y: f64) -> Result<Self> {
        check_sigma("sigma_x", sigma_x)?;
        check_sigma("sigma_y", sigma_y)?;
        Ok(Self { sigma_x, sigma_y })
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    pub fn sigma(&self, sensor: Sensor) -> f64 {
        match sensor {
            Sensor::X => self.sigma_x,
            Sensor::Y => self.sigma_y,
        }
    }

    /// The role-swapped problem: the old `Y` becomes the fusion center.
    pub fn swapped(&self) -> Self {
        Self {
            sigma_x: self.sigma_y,
            sigma_y: self.sigma_x,
        }
    }

    /// `D(p0(x) || p1(x)) = 1 / (2 sigma_x^2)` in nats.
    pub fn kl_x(&self) -> f64 {
        0.5 / (self.sigma_x * self.sigma_x)
    }
}

pub(crate) fn check_sigma(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(FusionError::InvalidModel { name, value })
    }
}

/// `P_i(obs > t) = Q((t - i) / sigma)` at the given sensor.
pub fn tail_prob(model: &GaussianModel, t: Threshold, hyp: Hypothesis, sensor: Sensor) -> f64 {
    tail(t, hyp, model.sigma(sensor))
}

#[inline]
pub(crate) fn tail(t: Threshold, hyp: Hypothesis, sigma: f64) -> f64 {
    q_tail((t - hyp.mean()) / sigma)
}

/// Probability of the interval `(lo, hi]` under `N(i, sigma^2)`, taking the
/// tails on the side that keeps precision.
#[inline]
pub(crate) fn interval_prob(lo: f64, hi: f64, hyp: Hypothesis, sigma: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let m = hyp.mean();
    let p = if lo - m >= m - hi {
        q_tail((lo - m) / sigma) - q_tail((hi - m) / sigma)
    } else {
        q_tail((m - hi) / sigma) - q_tail((m - lo) / sigma)
    };
    p.max(0.0)
}

/// Log-likelihood ratio `log p1(obs) / p0(obs) = (obs - 1/2) / sigma^2`.
pub fn llr(model: &GaussianModel, obs: f64, sensor: Sensor) -> f64 {
    let s = model.sigma(sensor);
    (obs - 0.5) / (s * s)
}

/// `P_i(x > t_w, x in R_u)` where `R_1 = {x > t_u}` and `R_0` its complement.
#[inline]
pub(crate) fn accept_in_cell(t_w: f64, t_u: f64, u: usize, hyp: Hypothesis, sigma_x: f64) -> f64 {
    let upper = tail(t_w.max(t_u), hyp, sigma_x);
    if u == 1 {
        upper
    } else {
        (tail(t_w, hyp, sigma_x) - upper).max(0.0)
    }
}

/// `P_i(x <= t_w, x in R_u)`.
#[inline]
pub(crate) fn reject_in_cell(t_w: f64, t_u: f64, u: usize, hyp: Hypothesis, sigma_x: f64) -> f64 {
    let region_u1 = tail(t_u, hyp, sigma_x);
    let upper = tail(t_w.max(t_u), hyp, sigma_x);
    if u == 1 {
        (region_u1 - upper).max(0.0)
    } else {
        (1.0 - region_u1 - tail(t_w, hyp, sigma_x) + upper).max(0.0)
    }
}

/// `P_i(R_{w|v} ∩ R_u)` for every `(w, v, u)`, stored as `[v][w][u]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointTable {
    entries: [[[f64; 2]; 2]; 2],
}

impl JointTable {
    pub fn get(&self, w: usize, v: usize, u: usize) -> f64 {
        self.entries[v][w][u]
    }

    /// Sum over `(w, u)` for a fixed `v`; equals 1 for a valid table.
    pub fn row_sum(&self, v: usize) -> f64 {
        self.entries[v].iter().flatten().sum()
    }
}

/// Intersection probabilities of X's final regions with X's first-bit
/// regions, for the interactive process.
pub fn xyx_joint_probs(
    model: &GaussianModel,
    thr: &XyxThresholds,
    hyp: Hypothesis,
) -> Result<JointTable> {
    thr.validate()?;
    let sx = model.sigma_x();
    let mut entries = [[[0.0; 2]; 2]; 2];
    for (v, row) in entries.iter_mut().enumerate() {
        for u in 0..2 {
            let t_w = thr.t_w[v][u];
            row[1][u] = accept_in_cell(t_w, thr.t_u, u, hyp, sx);
            row[0][u] = reject_in_cell(t_w, thr.t_u, u, hyp, sx);
        }
    }
    Ok(JointTable { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_basics() {
        assert_eq!(q_tail(0.0), 0.5);
        assert_eq!(q_tail(f64::INFINITY), 0.0);
        assert_eq!(q_tail(f64::NEG_INFINITY), 1.0);
        assert_eq!(q_tail(40.0), 0.0);
        assert_eq!(q_tail(-40.0), 1.0);
    }

    #[test]
    fn tail_symmetry() {
        for i in 0..=800 {
            let z = -8.0 + 0.02 * i as f64;
            assert!((q_tail(-z) - (1.0 - q_tail(z))).abs() <= 1e-15, "z = {z}");
        }
    }

    #[test]
    fn inverse_round_trip() {
        for &p in &[1e-300, 1e-17, 1e-9, 0.01, 0.2, 0.5, 0.7, 0.975, 1.0 - 1e-12] {
            let z = q_inv(p);
            let back = q_tail(z);
            assert!(((back - p) / p).abs() < 1e-12, "p = {p}, back = {back}");
        }
        assert_eq!(q_inv(0.0), f64::INFINITY);
        assert_eq!(q_inv(1.0), f64::NEG_INFINITY);
        assert_eq!(q_inv(0.5), 0.0);
    }

    #[test]
    fn model_rejects_bad_sigma() {
        assert!(GaussianModel::new(0.0, 1.0).is_err());
        assert!(GaussianModel::new(1.0, -2.0).is_err());
        assert!(GaussianModel::new(f64::NAN, 1.0).is_err());
        assert!(GaussianModel::new(f64::INFINITY, 1.0).is_err());
        assert!(GaussianModel::new(0.3, 4.0).is_ok());
    }

    #[test]
    fn tail_prob_examples() {
        let m = GaussianModel::new(1.0, 1.0).unwrap();
        assert_eq!(tail_prob(&m, 0.0, Hypothesis::H0, Sensor::X), 0.5);
        assert_eq!(tail_prob(&m, 1.0, Hypothesis::H1, Sensor::Y), 0.5);
        assert!((tail_prob(&m, 0.5, Hypothesis::H0, Sensor::X) - 0.308_537_538_725_986_9).abs() < 1e-15);
        assert_eq!(tail_prob(&m, f64::NEG_INFINITY, Hypothesis::H1, Sensor::X), 1.0);
        assert_eq!(tail_prob(&m, f64::INFINITY, Hypothesis::H0, Sensor::Y), 0.0);
    }

    #[test]
    fn role_symmetry_is_exact() {
        let m = GaussianModel::new(0.7, 1.9).unwrap();
        let s = m.swapped();
        for &t in &[-2.0, 0.1, 0.5, 3.3] {
            for h in Hypothesis::BOTH {
                assert_eq!(
                    tail_prob(&m, t, h, Sensor::X).to_bits(),
                    tail_prob(&s, t, h, Sensor::Y).to_bits()
                );
            }
        }
    }

    #[test]
    fn llr_examples() {
        let m = GaussianModel::new(1.0, 2.0).unwrap();
        assert_eq!(llr(&m, 0.5, Sensor::X), 0.0);
        assert_eq!(llr(&m, 1.5, Sensor::X), 1.0);
        assert!(llr(&m, 0.2, Sensor::Y) < llr(&m, 0.9, Sensor::Y));
    }

    #[test]
    fn joint_table_with_degenerate_first_bit() {
        let m = GaussianModel::new(1.3, 1.0).unwrap();
        let thr = XyxThresholds {
            t_u: f64::NEG_INFINITY,
            t_v: [0.9, 0.2],
            t_w: [[1.1, 1.4], [0.3, 0.6]],
        };
        for h in Hypothesis::BOTH {
            let table = xyx_joint_probs(&m, &thr, h).unwrap();
            for v in 0..2 {
                let expect = q_tail((thr.t_w[v][1] - h.mean()) / 1.3);
                assert!((table.get(1, v, 1) - expect).abs() < 1e-15);
                assert_eq!(table.get(1, v, 0), 0.0);
                assert_eq!(table.get(0, v, 0), 0.0);
            }
        }
    }

    #[test]
    fn joint_table_all_half() {
        let m = GaussianModel::new(1.0, 1.0).unwrap();
        let thr = XyxThresholds {
            t_u: 0.5,
            t_v: [0.5, 0.5],
            t_w: [[0.5, 0.5], [0.5, 0.5]],
        };
        let table = xyx_joint_probs(&m, &thr, Hypothesis::H0).unwrap();
        for v in 0..2 {
            assert!((table.row_sum(v) - 1.0).abs() < 1e-12);
            // x > 0.5 and x <= 0.5 cannot both hold
            assert_eq!(table.get(1, v, 0), 0.0);
            assert_eq!(table.get(0, v, 1), 0.0);
            assert!((table.get(1, v, 1) - q_tail(0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn joint_table_rejects_bad_ordering() {
        let m = GaussianModel::new(1.0, 1.0).unwrap();
        let thr = XyxThresholds {
            t_u: 0.0,
            t_v: [0.0, 1.0],
            t_w: [[1.0, 1.2], [0.0, 0.2]],
        };
        let err = xyx_joint_probs(&m, &thr, Hypothesis::H0).unwrap_err();
        assert!(err.to_string().contains("t_v[1]"), "{err}");
    }
}
