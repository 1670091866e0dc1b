//! KL-distance error exponents of the one-way and interactive processes and
//! their maximization over the binarizing thresholds.

use rayon::prelude::*;

use crate::error::{FusionError, Result};
use crate::gaussian_model::{q_tail, tail, GaussianModel, Hypothesis, Threshold};
use crate::search::{coordinate_ascent, golden_max, linspace, top_k, SearchConfig};

/// Bernoulli divergence `D(Bern(alpha) || Bern(beta))` in nats, with
/// `0 log 0 = 0`. A zero-probability outcome under `beta` that has positive
/// probability under `alpha` gives `+inf`.
pub fn bern_kl(alpha: f64, beta: f64) -> f64 {
    let first = if alpha == 0.0 {
        0.0
    } else if beta == 0.0 {
        return f64::INFINITY;
    } else {
        alpha * (alpha.ln() - beta.ln())
    };
    let second = if alpha == 1.0 {
        0.0
    } else if beta == 1.0 {
        return f64::INFINITY;
    } else {
        (1.0 - alpha) * ((-alpha).ln_1p() - (-beta).ln_1p())
    };
    (first + second).max(0.0)
}

/// `D(Bern(alpha) || Bern(beta))` from both tails of each probability, so
/// neither complement is lost to rounding near 0 or 1.
pub(crate) fn bern_kl_tails(alpha: f64, alpha_c: f64, beta: f64, beta_c: f64) -> f64 {
    let part = |p: f64, q: f64| {
        if p == 0.0 {
            0.0
        } else if q == 0.0 {
            f64::INFINITY
        } else {
            p * (p.ln() - q.ln())
        }
    };
    (part(alpha, beta) + part(alpha_c, beta_c)).max(0.0)
}

/// Divergence carried by the bit `[y > t]`, `f(P_0(y > t), P_1(y > t))`.
pub(crate) fn bit_kl(t: Threshold, sigma_y: f64) -> f64 {
    let (a, a_c) = tails(t, Hypothesis::H0, sigma_y);
    let (b, b_c) = tails(t, Hypothesis::H1, sigma_y);
    bern_kl_tails(a, a_c, b, b_c)
}

/// `(P_i(y > t), P_i(y <= t))`, each from its own tail.
#[inline]
pub(crate) fn tails(t: Threshold, hyp: Hypothesis, sigma: f64) -> (f64, f64) {
    let z = (t - hyp.mean()) / sigma;
    (q_tail(z), q_tail(-z))
}

/// KL distance of the one-way process at a given Y threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlResult {
    pub k_total: f64,
    /// `D(p0(x) || p1(x)) = 1 / (2 sigma_x^2)`.
    pub k_x: f64,
    pub t_star: Threshold,
    /// `P_0(y > t_star)`.
    pub alpha_star: f64,
    /// `P_1(y > t_star)`.
    pub beta_star: f64,
}

pub fn kl_yx(model: &GaussianModel, t: Threshold) -> KlResult {
    let sy = model.sigma_y();
    let alpha = tail(t, Hypothesis::H0, sy);
    let beta = tail(t, Hypothesis::H1, sy);
    let k_x = model.kl_x();
    KlResult {
        k_total: k_x + bit_kl(t, sy),
        k_x,
        t_star: t,
        alpha_star: alpha,
        beta_star: beta,
    }
}

/// The LRT multiplier that makes `t` stationary for the bit divergence,
/// `ln(beta (1 - alpha) / (alpha (1 - beta))) / ((beta - alpha) / (beta (1 - beta)))`.
pub fn kl_lambda(alpha: f64, beta: f64) -> f64 {
    let log_odds = (beta / alpha).ln() + ((-alpha).ln_1p() - (-beta).ln_1p());
    log_odds * beta * (1.0 - beta) / (beta - alpha)
}

/// `t - (sigma_y^2 ln lambda(t) + 1/2)`; zero at every stationary threshold.
pub fn kl_yx_residual(model: &GaussianModel, t: Threshold) -> f64 {
    let sy = model.sigma_y();
    let alpha = tail(t, Hypothesis::H0, sy);
    let beta = tail(t, Hypothesis::H1, sy);
    t - (sy * sy * kl_lambda(alpha, beta).ln() + 0.5)
}

const KL_GRID_POINTS: usize = 2001;
const KL_GOLDEN_TOL: f64 = 1e-8;

/// Every local maximum of `kl_yx` detected on the grid, refined, best first.
pub fn kl_yx_local_maxima(model: &GaussianModel) -> Vec<KlResult> {
    let sy = model.sigma_y();
    let grid = linspace(-3.0 * sy, 3.0 * sy + 1.0, KL_GRID_POINTS);
    let bit = |t: f64| kl_yx(model, t).k_total;
    let values: Vec<f64> = grid.iter().map(|&t| bit(t)).collect();
    let h = grid[1] - grid[0];
    let mut out = Vec::new();
    for k in 0..grid.len() {
        let left = if k == 0 { f64::NEG_INFINITY } else { values[k - 1] };
        let right = if k + 1 == grid.len() { f64::NEG_INFINITY } else { values[k + 1] };
        if values[k] >= left && values[k] > right {
            let (t, _) = golden_max(bit, grid[k] - h, grid[k] + h, KL_GOLDEN_TOL);
            out.push(kl_yx(model, polish_root(model, t)));
        }
    }
    out.sort_by(|a, b| b.k_total.total_cmp(&a.k_total).then(a.t_star.total_cmp(&b.t_star)));
    out
}

/// Replace a golden-section estimate by the nearby root of the stationarity
/// relation when one is bracketed and the objective does not drop.
pub(crate) fn polish_root(model: &GaussianModel, t: f64) -> f64 {
    let h = |s| kl_yx_residual(model, s);
    let width = 1e-4 * (1.0 + t.abs());
    let (mut lo, mut hi) = (t - width, t + width);
    let (mut h_lo, h_hi) = (h(lo), h(hi));
    if !(h_lo.is_finite() && h_hi.is_finite()) || h_lo.signum() == h_hi.signum() {
        return t;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let h_mid = h(mid);
        if h_mid.signum() == h_lo.signum() {
            lo = mid;
            h_lo = h_mid;
        } else {
            hi = mid;
        }
    }
    let root = if h(lo).abs() <= h(hi).abs() { lo } else { hi };
    let base = kl_yx(model, t).k_total;
    if kl_yx(model, root).k_total >= base - 1e-15 * base {
        root
    } else {
        t
    }
}

/// Maximum one-way KL distance over the Y threshold.
pub fn maximize_kl_yx(model: &GaussianModel) -> KlResult {
    kl_yx_local_maxima(model)
        .into_iter()
        .next()
        .unwrap_or_else(|| kl_yx(model, f64::INFINITY))
}

/// Interactive-process design for the KL objective: first bit threshold,
/// branch-dependent Y thresholds and the region probabilities they imply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XyxKlDesign {
    pub t_u: Threshold,
    pub t_v: [Threshold; 2],
    /// `P_0(x > t_u)`.
    pub alpha1: f64,
    /// `P_0(y > t_v[u])`.
    pub alpha2: [f64; 2],
    /// `P_1(y > t_v[u])`.
    pub beta2: [f64; 2],
}

impl XyxKlDesign {
    pub fn new(model: &GaussianModel, t_u: Threshold, t_v: [Threshold; 2]) -> Self {
        let sy = model.sigma_y();
        Self {
            t_u,
            t_v,
            alpha1: q_tail(t_u / model.sigma_x()),
            alpha2: [tail(t_v[0], Hypothesis::H0, sy), tail(t_v[1], Hypothesis::H0, sy)],
            beta2: [tail(t_v[0], Hypothesis::H1, sy), tail(t_v[1], Hypothesis::H1, sy)],
        }
    }

    /// Checks the stored probabilities against the thresholds to 1e-12.
    pub fn check(&self, model: &GaussianModel) -> Result<()> {
        let fresh = Self::new(model, self.t_u, self.t_v);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        let ok = close(self.alpha1, fresh.alpha1)
            && (0..2).all(|u| close(self.alpha2[u], fresh.alpha2[u]) && close(self.beta2[u], fresh.beta2[u]));
        if ok {
            Ok(())
        } else {
            Err(FusionError::InvalidDesign(format!(
                "region probabilities do not match thresholds t_u = {}, t_v = {:?}",
                self.t_u, self.t_v
            )))
        }
    }

    /// The same decisions with the first bit relabeled and branches swapped.
    pub fn relabeled(&self, model: &GaussianModel) -> RelabeledKlDesign {
        RelabeledKlDesign {
            t_u: self.t_u,
            t_v: [self.t_v[1], self.t_v[0]],
            alpha1: q_tail(-self.t_u / model.sigma_x()),
            alpha2: [self.alpha2[1], self.alpha2[0]],
            beta2: [self.beta2[1], self.beta2[0]],
        }
    }
}

/// Interactive KL design with the first bit read as `u = [x <= t_u]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelabeledKlDesign {
    pub t_u: Threshold,
    pub t_v: [Threshold; 2],
    /// `P_0(x <= t_u)`.
    pub alpha1: f64,
    pub alpha2: [f64; 2],
    pub beta2: [f64; 2],
}

fn mixture(model: &GaussianModel, alpha1: f64, t_v: [Threshold; 2]) -> f64 {
    let sy = model.sigma_y();
    model.kl_x() + alpha1 * bit_kl(t_v[1], sy) + (1.0 - alpha1) * bit_kl(t_v[0], sy)
}

/// `K[x] + alpha1 f(alpha2[1], beta2[1]) + (1 - alpha1) f(alpha2[0], beta2[0])`.
pub fn kl_xyx(model: &GaussianModel, design: &XyxKlDesign) -> Result<f64> {
    design.check(model)?;
    Ok(mixture(model, design.alpha1, design.t_v))
}

pub fn kl_xyx_relabeled(model: &GaussianModel, design: &RelabeledKlDesign) -> f64 {
    mixture(model, design.alpha1, design.t_v)
}

fn kl_xyx_at(model: &GaussianModel, p: &[f64]) -> f64 {
    mixture(model, q_tail(p[0] / model.sigma_x()), [p[1], p[2]])
}

/// Maximum interactive KL distance over `(t_u, t_v[0], t_v[1])`: a 3-D grid
/// with coordinate refinement, then each branch threshold polished on the
/// stationarity relation.
pub fn maximize_kl_xyx(model: &GaussianModel, search: &SearchConfig) -> Result<(XyxKlDesign, f64)> {
    search.validate()?;
    let gu = search.threshold_grid(model.sigma_x());
    let gv = search.threshold_grid(model.sigma_y());
    let mut points = Vec::with_capacity(gu.len() * gv.len() * gv.len());
    for &a in &gu {
        for &b in &gv {
            for &c in &gv {
                points.push(vec![a, b, c]);
            }
        }
    }
    let scored: Vec<(f64, Vec<f64>)> = points
        .into_par_iter()
        .map(|p| (kl_xyx_at(model, &p), p))
        .collect();
    let (sx, sy) = (model.sigma_x(), model.sigma_y());
    let span = search.span_sigmas + 5.0;
    let lower = [-span * sx, -span * sy, -span * sy];
    let upper = [span * sx + 1.0, span * sy + 1.0, span * sy + 1.0];
    let step = [gu[1] - gu[0], gv[1] - gv[0], gv[1] - gv[0]];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (_, p) in top_k(scored, search.starts) {
        let mut x = p;
        coordinate_ascent(
            |q| kl_xyx_at(model, q),
            &mut x,
            &lower,
            &upper,
            &step,
            search.refine_tol.max(1e-12),
            search.max_sweeps,
        );
        for u in 0..2 {
            x[1 + u] = polish_root(model, x[1 + u]);
        }
        let v = kl_xyx_at(model, &x);
        if best.as_ref().is_none_or(|b| v > b.0) {
            best = Some((v, x));
        }
    }
    let (value, x) = best.ok_or_else(|| FusionError::EmptySearch("empty KL grid".into()))?;
    Ok((XyxKlDesign::new(model, x[0], [x[1], x[2]]), value))
}

/// Coefficients of the first-bit region `sum_u I_{R_u}(x) A_u B_u > 0`,
/// evaluated post hoc at a design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionCoefficients {
    pub a: [f64; 2],
    pub b: [f64; 2],
    /// The branch regions coincide, so `B_u` is `0/0` and the first bit
    /// carries no information to Y.
    pub degenerate: bool,
}

pub fn region_coefficients(model: &GaussianModel, design: &XyxKlDesign) -> RegionCoefficients {
    let sy = model.sigma_y();
    let mut a = [0.0; 2];
    let mut b = [0.0; 2];
    let da = design.alpha2[1] - design.alpha2[0];
    let db = design.beta2[1] - design.beta2[0];
    let degenerate = da.abs() <= 1e-9;
    for u in 0..2 {
        let (al, be) = (design.alpha2[u], design.beta2[u]);
        a[u] = (be - al) / (be * (1.0 - be));
        let lambda_u = ((design.t_v[u] - 0.5) / (sy * sy)).exp();
        b[u] = if degenerate { f64::NAN } else { db / da - lambda_u };
    }
    RegionCoefficients { a, b, degenerate }
}

/// KL maxima with the final decision at X and, role-swapped, at Y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionSwap {
    pub k_final_at_x: f64,
    pub k_final_at_y: f64,
}

pub fn kl_direction_swap(model: &GaussianModel) -> DirectionSwap {
    DirectionSwap {
        k_final_at_x: maximize_kl_yx(model).k_total,
        k_final_at_y: maximize_kl_yx(&model.swapped()).k_total,
    }
}
