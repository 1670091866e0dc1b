//! Fixed-sample Neyman-Pearson design and evaluation for the one-way (YX),
//! interactive (XYX) and centralized architectures.

use rayon::prelude::*;

use crate::error::{check_alpha, FusionError, Result};
use crate::gaussian_model::{
    accept_in_cell, q_inv, q_tail, tail, GaussianModel, Hypothesis, Threshold,
};
use crate::quadrature::integrate;
use crate::search::{coordinate_ascent, golden_max, top_k, IterConfig, SearchConfig};

/// Lower end of the `ln lambda` bisection, standing in for `lambda = 0`.
const LN_LAMBDA_FLOOR: f64 = -745.0;

/// Y sends `v = [y > t_v]`; X decides `w = [x > t_w[v]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YxThresholds {
    pub t_v: Threshold,
    pub t_w: [Threshold; 2],
}

impl YxThresholds {
    /// Checks `t_w[1] <= t_w[0]`.
    pub fn validate(&self) -> Result<()> {
        check_not_nan(&[self.t_v, self.t_w[0], self.t_w[1]])?;
        if self.t_w[1] > self.t_w[0] {
            return Err(FusionError::Ordering(format!(
                "t_w[1] <= t_w[0] fails: {} > {}",
                self.t_w[1], self.t_w[0]
            )));
        }
        Ok(())
    }

    /// The v-relabeled rule: Y reports the complement bit and X swaps branches.
    /// Decisions are unchanged, so the operating point is too.
    pub fn relabeled(&self) -> RelabeledYx {
        RelabeledYx {
            t_v: self.t_v,
            t_w: [self.t_w[1], self.t_w[0]],
        }
    }
}

/// YX rule with the reversed bit convention `v = [y <= t_v]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelabeledYx {
    pub t_v: Threshold,
    pub t_w: [Threshold; 2],
}

/// X sends `u = [x > t_u]`, Y replies `v = [y > t_v[u]]`, X decides
/// `w = [x > t_w[v][u]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XyxThresholds {
    pub t_u: Threshold,
    pub t_v: [Threshold; 2],
    /// Indexed `[v][u]`.
    pub t_w: [[Threshold; 2]; 2],
}

impl XyxThresholds {
    /// Checks `t_w[1][u] <= t_w[0][u]`, `t_w[v][0] <= t_w[v][1]` and
    /// `t_v[1] <= t_v[0]`. Equality is allowed.
    pub fn validate(&self) -> Result<()> {
        check_not_nan(&[
            self.t_u,
            self.t_v[0],
            self.t_v[1],
            self.t_w[0][0],
            self.t_w[0][1],
            self.t_w[1][0],
            self.t_w[1][1],
        ])?;
        if self.t_v[1] > self.t_v[0] {
            return Err(FusionError::Ordering(format!(
                "t_v[1] <= t_v[0] fails: {} > {}",
                self.t_v[1], self.t_v[0]
            )));
        }
        for u in 0..2 {
            if self.t_w[1][u] > self.t_w[0][u] {
                return Err(FusionError::Ordering(format!(
                    "t_w[1][{u}] <= t_w[0][{u}] fails: {} > {}",
                    self.t_w[1][u], self.t_w[0][u]
                )));
            }
        }
        for v in 0..2 {
            if self.t_w[v][0] > self.t_w[v][1] {
                return Err(FusionError::Ordering(format!(
                    "t_w[{v}][0] <= t_w[{v}][1] fails: {} > {}",
                    self.t_w[v][0], self.t_w[v][1]
                )));
            }
        }
        Ok(())
    }

    /// Embeds a YX rule; the first bit is sent but ignored.
    pub fn from_yx(yx: &YxThresholds, t_u: Threshold) -> Self {
        Self {
            t_u,
            t_v: [yx.t_v; 2],
            t_w: [[yx.t_w[0]; 2], [yx.t_w[1]; 2]],
        }
    }

    /// The YX rule used on the `u` branch.
    pub fn branch(&self, u: usize) -> YxThresholds {
        YxThresholds {
            t_v: self.t_v[u],
            t_w: [self.t_w[0][u], self.t_w[1][u]],
        }
    }
}

fn check_not_nan(values: &[f64]) -> Result<()> {
    if values.iter().any(|t| t.is_nan()) {
        return Err(FusionError::InvalidThreshold("NaN threshold".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub pf: f64,
    pub pd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub pf: f64,
    pub pd: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    Yx,
    Xyx,
}

/// Thresholds of either architecture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Thresholds {
    Yx(YxThresholds),
    Xyx(XyxThresholds),
}

impl Thresholds {
    pub fn architecture(&self) -> Architecture {
        match self {
            Thresholds::Yx(_) => Architecture::Yx,
            Thresholds::Xyx(_) => Architecture::Xyx,
        }
    }
}

/// Which optimizer produced a reported design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignSource {
    /// Grid search with local refinement.
    Grid,
    /// Fixed-point iteration started from the refined grid design.
    Iteration,
    /// The optimal one-way design embedded in the interactive process.
    EmbeddedYx,
}

/// An optimized design with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Design<T> {
    pub thresholds: T,
    pub point: OperatingPoint,
    /// Sup-norm of `g(t) - t` for the coupled threshold map at `point.lambda`.
    pub residual: f64,
    /// Whether the fixed-point iteration converged from the grid design.
    pub iteration_converged: bool,
    /// pd of the refined grid design, before arbitration.
    pub grid_pd: f64,
    /// pd of the iterated design, if it converged.
    pub iteration_pd: Option<f64>,
    pub source: DesignSource,
}

/// Outcome of a damped fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint<T> {
    pub thresholds: T,
    pub residual: f64,
    pub steps: usize,
    pub converged: bool,
}

/// `P_i(v)` for a bit `v = [obs > t]`, with the complement taken as an
/// upper tail to keep precision.
#[inline]
pub(crate) fn bit_prob(t: f64, v: usize, hyp: Hypothesis, sigma: f64) -> f64 {
    if v == 1 {
        tail(t, hyp, sigma)
    } else {
        q_tail((hyp.mean() - t) / sigma)
    }
}

/// Threshold `sigma^2 ln(lambda num / den) + 1/2` of an LRT whose multiplier
/// is `lambda num / den`, with vanishing denominators mapped to infinite
/// thresholds. A zero-over-zero or negative denominator keeps `previous`.
pub fn lrt_threshold(sigma: f64, num: f64, den: f64, lambda: f64, previous: f64) -> f64 {
    if den > 0.0 {
        let ratio = lambda * num / den;
        if ratio > 0.0 {
            sigma * sigma * ratio.ln() + 0.5
        } else if ratio.is_nan() {
            previous
        } else {
            f64::NEG_INFINITY
        }
    } else if den == 0.0 {
        if lambda == 0.0 {
            previous
        } else if num > 0.0 {
            f64::INFINITY
        } else if num < 0.0 {
            f64::NEG_INFINITY
        } else {
            previous
        }
    } else {
        previous
    }
}

pub fn evaluate_yx(model: &GaussianModel, thr: &YxThresholds) -> Rates {
    let rate = |hyp| {
        let mut acc = 0.0;
        for v in 0..2 {
            acc += bit_prob(thr.t_v, v, hyp, model.sigma_y()) * tail(thr.t_w[v], hyp, model.sigma_x());
        }
        acc
    };
    Rates {
        pf: rate(Hypothesis::H0),
        pd: rate(Hypothesis::H1),
    }
}

pub fn evaluate_relabeled_yx(model: &GaussianModel, thr: &RelabeledYx) -> Rates {
    let rate = |hyp| {
        let mut acc = 0.0;
        for v in 0..2 {
            acc += bit_prob(thr.t_v, 1 - v, hyp, model.sigma_y()) * tail(thr.t_w[v], hyp, model.sigma_x());
        }
        acc
    };
    Rates {
        pf: rate(Hypothesis::H0),
        pd: rate(Hypothesis::H1),
    }
}

pub fn evaluate_xyx(model: &GaussianModel, thr: &XyxThresholds) -> Result<Rates> {
    thr.validate()?;
    Ok(xyx_rates(model, thr))
}

pub(crate) fn xyx_rate(model: &GaussianModel, thr: &XyxThresholds, hyp: Hypothesis) -> f64 {
    let mut acc = 0.0;
    for u in 0..2 {
        for v in 0..2 {
            let mut p = 1.0;
            p *= bit_prob(thr.t_v[u], v, hyp, model.sigma_y());
            acc += p * accept_in_cell(thr.t_w[v][u], thr.t_u, u, hyp, model.sigma_x());
        }
    }
    acc
}

fn xyx_rates(model: &GaussianModel, thr: &XyxThresholds) -> Rates {
    Rates {
        pf: xyx_rate(model, thr, Hypothesis::H0),
        pd: xyx_rate(model, thr, Hypothesis::H1),
    }
}

pub fn evaluate(model: &GaussianModel, thr: &Thresholds) -> Result<Rates> {
    match thr {
        Thresholds::Yx(t) => {
            t.validate()?;
            Ok(evaluate_yx(model, t))
        }
        Thresholds::Xyx(t) => evaluate_xyx(model, t),
    }
}

/// Absorbs rounding-level inversions of an ordering that holds exactly.
#[inline]
fn order_pair(lower: &mut f64, upper: &mut f64) {
    if *lower > *upper && *lower - *upper <= 1e-9 * (1.0 + upper.abs()) {
        *lower = *upper;
    }
}

/// Final LRT thresholds of the one-way process at multiplier `lambda`.
pub fn yx_final_thresholds(model: &GaussianModel, t_v: Threshold, lambda: f64) -> [Threshold; 2] {
    let sy = model.sigma_y();
    let mut out = [f64::NAN; 2];
    for (v, slot) in out.iter_mut().enumerate() {
        let p0 = bit_prob(t_v, v, Hypothesis::H0, sy);
        let p1 = bit_prob(t_v, v, Hypothesis::H1, sy);
        *slot = lrt_threshold(model.sigma_x(), p0, p1, lambda, f64::NAN);
    }
    // An unreachable branch copies the other one.
    if out[0].is_nan() {
        out[0] = out[1];
    }
    if out[1].is_nan() {
        out[1] = out[0];
    }
    let [mut a, mut b] = out;
    order_pair(&mut b, &mut a);
    [a, b]
}

/// Final LRT thresholds `t_w[v][u]` of the interactive process at `lambda`.
pub fn xyx_final_thresholds(
    model: &GaussianModel,
    t_v: [Threshold; 2],
    lambda: f64,
) -> [[Threshold; 2]; 2] {
    let sy = model.sigma_y();
    let mut t_w = [[f64::NAN; 2]; 2];
    for v in 0..2 {
        for u in 0..2 {
            let p0 = bit_prob(t_v[u], v, Hypothesis::H0, sy);
            let p1 = bit_prob(t_v[u], v, Hypothesis::H1, sy);
            t_w[v][u] = lrt_threshold(model.sigma_x(), p0, p1, lambda, f64::NAN);
        }
    }
    fill_unreachable(&mut t_w);
    for u in 0..2 {
        let (lo, hi) = split_rows(&mut t_w, u);
        order_pair(lo, hi);
    }
    for row in t_w.iter_mut() {
        let [a, b] = row;
        order_pair(a, b);
    }
    t_w
}

fn split_rows(t_w: &mut [[f64; 2]; 2], u: usize) -> (&mut f64, &mut f64) {
    let (r0, r1) = t_w.split_at_mut(1);
    (&mut r1[0][u], &mut r0[0][u])
}

/// Gives zero-probability cells a value inside their ordering interval.
fn fill_unreachable(t_w: &mut [[f64; 2]; 2]) {
    for u in 0..2 {
        for v in 0..2 {
            if t_w[v][u].is_nan() {
                t_w[v][u] = t_w[1 - v][u];
            }
        }
    }
    for u in 0..2 {
        for v in 0..2 {
            if t_w[v][u].is_nan() {
                // Both branches of this u are unreachable: u itself is.
                let other = t_w[v][1 - u];
                t_w[v][u] = if other.is_nan() { 0.5 } else { other };
            }
        }
    }
}

/// Bisection on `ln lambda` for `pf(lambda) = alpha` over `(0, lambda_max]`.
/// `pf_at` must be nonincreasing in lambda.
fn bisect_lambda<F: FnMut(f64) -> f64>(
    mut pf_at: F,
    alpha: f64,
    search: &SearchConfig,
) -> Result<(f64, f64)> {
    let pf_max = pf_at(search.lambda_max);
    if pf_max > alpha {
        return Err(FusionError::Bracket {
            alpha,
            lambda_max: search.lambda_max,
        });
    }
    let mut hi = search.lambda_max.ln();
    let mut pf_hi = pf_max;
    let mut lo = LN_LAMBDA_FLOOR;
    let mut pf_lo = pf_at(lo.exp());
    if pf_lo <= alpha {
        return Ok((lo.exp(), pf_lo));
    }
    for _ in 0..search.bisection_steps {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let pf = pf_at(mid.exp());
        if pf > alpha {
            lo = mid;
            pf_lo = pf;
        } else {
            hi = mid;
            pf_hi = pf;
        }
    }
    if (pf_lo - alpha).abs() < (pf_hi - alpha).abs() {
        Ok((lo.exp(), pf_lo))
    } else {
        Ok((hi.exp(), pf_hi))
    }
}

/// Best final stage for a fixed Y threshold: the NP test on `(x, v)`.
pub fn np_final_yx(
    model: &GaussianModel,
    t_v: Threshold,
    alpha: f64,
    search: &SearchConfig,
) -> Result<(YxThresholds, OperatingPoint)> {
    check_alpha(alpha)?;
    let build = |lambda| YxThresholds {
        t_v,
        t_w: yx_final_thresholds(model, t_v, lambda),
    };
    let (lambda, _) = bisect_lambda(|l| evaluate_yx(model, &build(l)).pf, alpha, search)?;
    let thr = build(lambda);
    let r = evaluate_yx(model, &thr);
    Ok((thr, OperatingPoint { pf: r.pf, pd: r.pd, lambda }))
}

/// Best final stage for fixed first and second bits: the NP test on `(x, v)`
/// with branch-dependent thresholds.
pub fn np_final_xyx(
    model: &GaussianModel,
    t_u: Threshold,
    t_v: [Threshold; 2],
    alpha: f64,
    search: &SearchConfig,
) -> Result<(XyxThresholds, OperatingPoint)> {
    check_alpha(alpha)?;
    if t_v[1] > t_v[0] {
        return Err(FusionError::Ordering(format!(
            "t_v[1] <= t_v[0] fails: {} > {}",
            t_v[1], t_v[0]
        )));
    }
    let build = |lambda| XyxThresholds {
        t_u,
        t_v,
        t_w: xyx_final_thresholds(model, t_v, lambda),
    };
    let (lambda, _) = bisect_lambda(|l| xyx_rate(model, &build(l), Hypothesis::H0), alpha, search)?;
    let thr = build(lambda);
    let r = evaluate_xyx(model, &thr)?;
    Ok((thr, OperatingPoint { pf: r.pf, pd: r.pd, lambda }))
}

fn pd_or_neg(r: Result<(impl Sized, OperatingPoint)>) -> f64 {
    match r {
        Ok((_, p)) => p.pd,
        Err(_) => f64::NEG_INFINITY,
    }
}

#[inline]
fn step_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

#[inline]
fn damp(t: f64, g: f64, damping: f64) -> f64 {
    if t.is_infinite() || g.is_infinite() {
        g
    } else {
        damping * t + (1.0 - damping) * g
    }
}

/// One undamped application of the coupled one-way threshold map.
pub fn yx_threshold_map(model: &GaussianModel, lambda: f64, t: &YxThresholds) -> YxThresholds {
    let sx = model.sigma_x();
    let t_w = yx_final_thresholds(model, t.t_v, lambda);
    let delta = |hyp| tail(t.t_w[1], hyp, sx) - tail(t.t_w[0], hyp, sx);
    let t_v = lrt_threshold(
        model.sigma_y(),
        delta(Hypothesis::H0),
        delta(Hypothesis::H1),
        lambda,
        t.t_v,
    );
    YxThresholds { t_v, t_w }
}

/// One undamped application of the coupled interactive threshold map.
pub fn xyx_threshold_map(model: &GaussianModel, lambda: f64, t: &XyxThresholds) -> XyxThresholds {
    let (sx, sy) = (model.sigma_x(), model.sigma_y());
    let t_w = xyx_final_thresholds(model, t.t_v, lambda);
    let mut t_v = t.t_v;
    for (u, slot) in t_v.iter_mut().enumerate() {
        let d = |hyp| {
            accept_in_cell(t.t_w[1][u], t.t_u, u, hyp, sx) - accept_in_cell(t.t_w[0][u], t.t_u, u, hyp, sx)
        };
        *slot = lrt_threshold(sy, d(Hypothesis::H0), d(Hypothesis::H1), lambda, t.t_v[u]);
    }
    let g = |hyp| tail(t.t_v[1], hyp, sy) - tail(t.t_v[0], hyp, sy);
    let t_u = lrt_threshold(sx, g(Hypothesis::H0), g(Hypothesis::H1), lambda, t.t_u);
    XyxThresholds { t_u, t_v, t_w }
}

pub fn yx_residual(model: &GaussianModel, lambda: f64, t: &YxThresholds) -> f64 {
    let g = yx_threshold_map(model, lambda, t);
    step_diff(g.t_v, t.t_v)
        .max(step_diff(g.t_w[0], t.t_w[0]))
        .max(step_diff(g.t_w[1], t.t_w[1]))
}

pub fn xyx_residual(model: &GaussianModel, lambda: f64, t: &XyxThresholds) -> f64 {
    let g = xyx_threshold_map(model, lambda, t);
    let mut r = step_diff(g.t_u, t.t_u);
    for u in 0..2 {
        r = r.max(step_diff(g.t_v[u], t.t_v[u]));
        for v in 0..2 {
            r = r.max(step_diff(g.t_w[v][u], t.t_w[v][u]));
        }
    }
    r
}

pub fn iterate_yx_thresholds(
    model: &GaussianModel,
    lambda: f64,
    init: &YxThresholds,
    iter: &IterConfig,
) -> Result<FixedPoint<YxThresholds>> {
    init.validate()?;
    check_lambda(lambda)?;
    let mut t = *init;
    for step in 0..iter.max_steps {
        let g = yx_threshold_map(model, lambda, &t);
        let residual = step_diff(g.t_v, t.t_v)
            .max(step_diff(g.t_w[0], t.t_w[0]))
            .max(step_diff(g.t_w[1], t.t_w[1]));
        if residual <= iter.tolerance {
            return Ok(FixedPoint { thresholds: t, residual, steps: step, converged: true });
        }
        t = YxThresholds {
            t_v: damp(t.t_v, g.t_v, iter.damping),
            t_w: [damp(t.t_w[0], g.t_w[0], iter.damping), damp(t.t_w[1], g.t_w[1], iter.damping)],
        };
    }
    let residual = yx_residual(model, lambda, &t);
    Ok(FixedPoint {
        thresholds: t,
        residual,
        steps: iter.max_steps,
        converged: residual <= iter.tolerance,
    })
}

/// Damped iteration of the coupled interactive threshold map at a fixed
/// multiplier. A non-converged run still returns the last iterate.
pub fn iterate_xyx_thresholds(
    model: &GaussianModel,
    lambda: f64,
    init: &XyxThresholds,
    iter: &IterConfig,
) -> Result<FixedPoint<XyxThresholds>> {
    init.validate()?;
    check_lambda(lambda)?;
    let d = iter.damping;
    let mut t = *init;
    for step in 0..iter.max_steps {
        let g = xyx_threshold_map(model, lambda, &t);
        let residual = xyx_diff(&g, &t);
        if residual <= iter.tolerance {
            return Ok(FixedPoint { thresholds: t, residual, steps: step, converged: true });
        }
        let mut next = g;
        next.t_u = damp(t.t_u, g.t_u, d);
        for u in 0..2 {
            next.t_v[u] = damp(t.t_v[u], g.t_v[u], d);
            for v in 0..2 {
                next.t_w[v][u] = damp(t.t_w[v][u], g.t_w[v][u], d);
            }
        }
        t = next;
    }
    let residual = xyx_residual(model, lambda, &t);
    Ok(FixedPoint {
        thresholds: t,
        residual,
        steps: iter.max_steps,
        converged: residual <= iter.tolerance,
    })
}

fn xyx_diff(a: &XyxThresholds, b: &XyxThresholds) -> f64 {
    let mut r = step_diff(a.t_u, b.t_u);
    for u in 0..2 {
        r = r.max(step_diff(a.t_v[u], b.t_v[u]));
        for v in 0..2 {
            r = r.max(step_diff(a.t_w[v][u], b.t_w[v][u]));
        }
    }
    r
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(FusionError::InvalidProbability {
            name: "lambda",
            value: lambda,
            range: "[0, inf)",
        })
    }
}

/// Default starting point satisfying the ordering conventions strictly.
pub fn default_init(model: &GaussianModel, arch: Architecture) -> Thresholds {
    let (sx, sy) = (model.sigma_x(), model.sigma_y());
    match arch {
        Architecture::Yx => Thresholds::Yx(YxThresholds {
            t_v: 0.5,
            t_w: [0.5 + sx, 0.5 - sx],
        }),
        Architecture::Xyx => Thresholds::Xyx(XyxThresholds {
            t_u: 0.5,
            t_v: [0.5 + 0.5 * sy, 0.5 - 0.5 * sy],
            t_w: [[0.5 + 0.5 * sx, 0.5 + sx], [0.5 - sx, 0.5 - 0.5 * sx]],
        }),
    }
}

/// Multiplier and lambda-consistent thresholds with `pf = alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSolution {
    pub lambda: f64,
    pub thresholds: Thresholds,
    pub pf: f64,
    pub pd: f64,
    pub residual: f64,
}

fn iterate_any(
    model: &GaussianModel,
    lambda: f64,
    init: &Thresholds,
    iter: &IterConfig,
) -> Result<(Thresholds, f64, bool)> {
    Ok(match init {
        Thresholds::Yx(t) => {
            let fp = iterate_yx_thresholds(model, lambda, t, iter)?;
            (Thresholds::Yx(fp.thresholds), fp.residual, fp.converged)
        }
        Thresholds::Xyx(t) => {
            let fp = iterate_xyx_thresholds(model, lambda, t, iter)?;
            (Thresholds::Xyx(fp.thresholds), fp.residual, fp.converged)
        }
    })
}

fn unchecked_rates(model: &GaussianModel, thr: &Thresholds) -> Rates {
    match thr {
        Thresholds::Yx(t) => evaluate_yx(model, t),
        Thresholds::Xyx(t) => xyx_rates(model, t),
    }
}

/// Multiplier whose lambda-consistent thresholds meet `pf = alpha`, using
/// the default starting point for the inner iteration.
pub fn solve_lambda(model: &GaussianModel, arch: Architecture, alpha: f64) -> Result<f64> {
    let init = default_init(model, arch);
    solve_lambda_from(model, &init, alpha, &SearchConfig::default(), &IterConfig::default())
        .map(|s| s.lambda)
}

/// Outer bisection on lambda with the fixed-point iteration, started at
/// `init`, as the inner solve.
pub fn solve_lambda_from(
    model: &GaussianModel,
    init: &Thresholds,
    alpha: f64,
    search: &SearchConfig,
    iter: &IterConfig,
) -> Result<LambdaSolution> {
    check_alpha(alpha)?;
    let lo = LN_LAMBDA_FLOOR;
    let hi = search.lambda_max.ln();
    solve_lambda_in(model, init, alpha, lo, hi, search.bisection_steps, iter)
}

fn solve_lambda_in(
    model: &GaussianModel,
    init: &Thresholds,
    alpha: f64,
    mut lo: f64,
    mut hi: f64,
    steps: usize,
    iter: &IterConfig,
) -> Result<LambdaSolution> {
    // unconverged iterates still steer the bracket; only the answer must converge
    let solve = |ln_lambda: f64| -> Result<LambdaSolution> {
        let lambda = ln_lambda.exp();
        let (thr, residual, _) = iterate_any(model, lambda, init, iter)?;
        let r = unchecked_rates(model, &thr);
        Ok(LambdaSolution { lambda, thresholds: thr, pf: r.pf, pd: r.pd, residual })
    };
    let mut at_hi = solve(hi)?;
    if at_hi.pf > alpha {
        return Err(FusionError::Bracket { alpha, lambda_max: hi.exp() });
    }
    let mut at_lo = solve(lo)?;
    if at_lo.pf < alpha {
        return Err(FusionError::Bracket { alpha, lambda_max: hi.exp() });
    }
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let s = solve(mid)?;
        if s.pf > alpha {
            lo = mid;
            at_lo = s;
        } else {
            hi = mid;
            at_hi = s;
        }
    }
    let best = if (at_lo.pf - alpha).abs() < (at_hi.pf - alpha).abs() { at_lo } else { at_hi };
    if best.residual > iter.tolerance {
        return Err(FusionError::NonConvergence { steps: iter.max_steps, residual: best.residual });
    }
    let gap = (best.pf - alpha).abs();
    if gap > 1e-8 {
        return Err(FusionError::NonConvergence { steps, residual: gap });
    }
    Ok(best)
}

/// Re-solve lambda with the iteration started at a nearby design, using a
/// bracket around its multiplier.
fn polish(
    model: &GaussianModel,
    init: &Thresholds,
    lambda: f64,
    alpha: f64,
    search: &SearchConfig,
    iter: &IterConfig,
) -> Option<LambdaSolution> {
    let center = lambda.max(f64::MIN_POSITIVE).ln();
    for width in [0.05, 0.5, 4.0] {
        let lo = (center - width).max(LN_LAMBDA_FLOOR);
        let hi = (center + width).min(search.lambda_max.ln());
        if let Ok(s) = solve_lambda_in(model, init, alpha, lo, hi, search.bisection_steps, iter) {
            let valid = match &s.thresholds {
                Thresholds::Yx(t) => t.validate().is_ok(),
                Thresholds::Xyx(t) => t.validate().is_ok(),
            };
            return if valid { Some(s) } else { None };
        }
    }
    None
}

fn check_search(search: &SearchConfig) -> Result<()> {
    search.validate()
}

/// Maximize pd over the Y threshold, each candidate paired with its NP
/// final stage.
fn grid_yx(model: &GaussianModel, alpha: f64, search: &SearchConfig) -> Result<(YxThresholds, OperatingPoint)> {
    let grid = search.threshold_grid(model.sigma_y());
    let spacing = grid[1] - grid[0];
    let scored: Vec<(f64, Vec<f64>)> = grid
        .par_iter()
        .map(|&t| (pd_or_neg(np_final_yx(model, t, alpha, search)), vec![t]))
        .collect();
    let mut best: Option<(YxThresholds, OperatingPoint)> = None;
    let mut consider = |cand: Result<(YxThresholds, OperatingPoint)>| {
        if let Ok(c) = cand {
            if best.as_ref().is_none_or(|b| c.1.pd > b.1.pd) {
                best = Some(c);
            }
        }
    };
    for (_, p) in top_k(scored, search.starts) {
        let (t, _) = golden_max(
            |t| pd_or_neg(np_final_yx(model, t, alpha, search)),
            p[0] - spacing,
            p[0] + spacing,
            search.refine_tol,
        );
        consider(np_final_yx(model, t, alpha, search));
        consider(np_final_yx(model, p[0], alpha, search));
    }
    consider(np_final_yx(model, f64::INFINITY, alpha, search));
    best.ok_or_else(|| FusionError::EmptySearch("no feasible one-way design on the grid".into()))
}

/// Neyman-Pearson optimal one-way design at false-alarm rate `alpha`.
pub fn optimize_yx(
    model: &GaussianModel,
    alpha: f64,
    search: &SearchConfig,
    iter: &IterConfig,
) -> Result<Design<YxThresholds>> {
    check_alpha(alpha)?;
    check_search(search)?;
    let (thr, point) = grid_yx(model, alpha, search)?;
    let grid_pd = point.pd;
    let polished = polish(model, &Thresholds::Yx(thr), point.lambda, alpha, search, iter);
    let mut design = Design {
        thresholds: thr,
        point,
        residual: yx_residual(model, point.lambda, &thr),
        iteration_converged: polished.is_some(),
        grid_pd,
        iteration_pd: polished.map(|s| s.pd),
        source: DesignSource::Grid,
    };
    if let Some(LambdaSolution { thresholds: Thresholds::Yx(t), lambda, pf, pd, residual }) = polished {
        if pd >= grid_pd - 1e-9 && (pf - alpha).abs() <= search.constraint_tol {
            design.thresholds = t;
            design.point = OperatingPoint { pf, pd, lambda };
            design.residual = residual;
            design.source = DesignSource::Iteration;
        }
    }
    Ok(design)
}

const XYX_DIM: usize = 3;

fn xyx_objective(model: &GaussianModel, alpha: f64, search: &SearchConfig, p: &[f64]) -> f64 {
    if p[2] > p[1] {
        return f64::NEG_INFINITY;
    }
    pd_or_neg(np_final_xyx(model, p[0], [p[1], p[2]], alpha, search))
}

/// Coarse grid over `(t_u, t_v[0], t_v[1])` with `t_v[1] <= t_v[0]`,
/// followed by multi-start coordinate refinement.
pub fn grid_xyx(
    model: &GaussianModel,
    alpha: f64,
    search: &SearchConfig,
) -> Result<(XyxThresholds, OperatingPoint)> {
    check_alpha(alpha)?;
    check_search(search)?;
    let gu = search.threshold_grid(model.sigma_x());
    let gv = search.threshold_grid(model.sigma_y());
    let mut points = Vec::new();
    for &tu in &gu {
        for (i, &a) in gv.iter().enumerate() {
            for &b in &gv[..=i] {
                points.push([tu, a, b]);
            }
        }
    }
    let scored: Vec<(f64, Vec<f64>)> = points
        .par_iter()
        .map(|p| (xyx_objective(model, alpha, search, p), p.to_vec()))
        .collect();
    let step = [gu[1] - gu[0], gv[1] - gv[0], gv[1] - gv[0]];
    let span = search.span_sigmas + 5.0;
    let lower = [-span * model.sigma_x(), -span * model.sigma_y(), -span * model.sigma_y()];
    let upper = [
        span * model.sigma_x() + 1.0,
        span * model.sigma_y() + 1.0,
        span * model.sigma_y() + 1.0,
    ];
    let starts = top_k(scored, search.starts);
    if starts.is_empty() {
        return Err(FusionError::EmptySearch("no feasible interactive design on the grid".into()));
    }
    let refined: Vec<(f64, Vec<f64>)> = starts
        .into_par_iter()
        .map(|(_, p)| {
            let mut x = p.clone();
            let v = coordinate_ascent(
                |q| xyx_objective(model, alpha, search, q),
                &mut x,
                &lower,
                &upper,
                &step,
                search.refine_tol,
                search.max_sweeps,
            );
            (v, x)
        })
        .collect();
    let best = top_k(refined, 1).remove(0).1;
    debug_assert_eq!(best.len(), XYX_DIM);
    np_final_xyx(model, best[0], [best[1], best[2]], alpha, search)
}

/// Neyman-Pearson optimal interactive design at false-alarm rate `alpha`.
///
/// The grid design is polished by the fixed-point iteration; the iterated
/// design is kept when it converges and is no worse. The optimal one-way
/// design is always a candidate, so the result dominates it.
pub fn optimize_xyx(
    model: &GaussianModel,
    alpha: f64,
    search: &SearchConfig,
    iter: &IterConfig,
) -> Result<Design<XyxThresholds>> {
    check_alpha(alpha)?;
    check_search(search)?;
    let (thr, point) = grid_xyx(model, alpha, search)?;
    let grid_pd = point.pd;
    let polished = polish(model, &Thresholds::Xyx(thr), point.lambda, alpha, search, iter);
    let mut design = Design {
        thresholds: thr,
        point,
        residual: xyx_residual(model, point.lambda, &thr),
        iteration_converged: polished.is_some(),
        grid_pd,
        iteration_pd: polished.map(|s| s.pd),
        source: DesignSource::Grid,
    };
    if let Some(LambdaSolution { thresholds: Thresholds::Xyx(t), lambda, pf, pd, residual }) = polished {
        if pd >= grid_pd - 1e-9 && (pf - alpha).abs() <= search.constraint_tol {
            design.thresholds = t;
            design.point = OperatingPoint { pf, pd, lambda };
            design.residual = residual;
            design.source = DesignSource::Iteration;
        }
    }
    let yx = optimize_yx(model, alpha, search, iter)?;
    if yx.point.pd > design.point.pd {
        let t = XyxThresholds::from_yx(&yx.thresholds, design.thresholds.t_u);
        design.thresholds = t;
        design.point = yx.point;
        design.residual = xyx_residual(model, yx.point.lambda, &t);
        design.source = DesignSource::EmbeddedYx;
    }
    Ok(design)
}

/// Single-sensor NP detector at X alone.
pub fn single_sensor(model: &GaussianModel, alpha: f64) -> Result<OperatingPoint> {
    check_alpha(alpha)?;
    let sx = model.sigma_x();
    let t = sx * q_inv(alpha);
    Ok(OperatingPoint {
        pf: alpha,
        pd: tail(t, Hypothesis::H1, sx),
        lambda: ((t - 0.5) / (sx * sx)).exp(),
    })
}

/// Centralized NP detector on `x / sigma_x^2 + y / sigma_y^2`.
pub fn centralized(model: &GaussianModel, alpha: f64) -> Result<OperatingPoint> {
    check_alpha(alpha)?;
    let d = centralized_snr(model);
    let z = q_inv(alpha);
    Ok(OperatingPoint {
        pf: alpha,
        pd: q_tail(z - d),
        lambda: (d * z - 0.5 * d * d).exp(),
    })
}

fn centralized_snr(model: &GaussianModel) -> f64 {
    let (sx, sy) = (model.sigma_x(), model.sigma_y());
    (1.0 / (sx * sx) + 1.0 / (sy * sy)).sqrt()
}

/// Centralized `(pf, pd)` at statistic threshold `tau` by one-dimensional
/// quadrature over `x`, conditioning on X's observation.
pub fn centralized_by_quadrature(model: &GaussianModel, tau: f64, abs_tol: f64) -> Rates {
    let (sx, sy) = (model.sigma_x(), model.sigma_y());
    let density = |x: f64, mean: f64| crate::gaussian_model::normal_pdf(x, mean, sx);
    let pf = integrate(|x| q_tail(sy * tau - sy * x / (sx * sx)) * density(x, 0.0), f64::NEG_INFINITY, f64::INFINITY, abs_tol);
    let pd = integrate(
        |x| q_tail(sy * tau - sy * x / (sx * sx) - 1.0 / sy) * density(x, 1.0),
        f64::NEG_INFINITY,
        f64::INFINITY,
        abs_tol,
    );
    Rates { pf: pf.value, pd: pd.value }
}

/// Statistic threshold of the centralized detector at false-alarm `alpha`.
pub fn centralized_threshold(model: &GaussianModel, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(centralized_snr(model) * q_inv(alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> GaussianModel {
        GaussianModel::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn all_accept_gives_one() {
        let m = unit();
        let thr = YxThresholds { t_v: f64::NEG_INFINITY, t_w: [f64::NEG_INFINITY; 2] };
        let r = evaluate_yx(&m, &thr);
        assert_eq!((r.pf, r.pd), (1.0, 1.0));
    }

    #[test]
    fn degenerate_y_bit_is_single_sensor() {
        let m = GaussianModel::new(1.3, 0.7).unwrap();
        let thr = YxThresholds { t_v: f64::INFINITY, t_w: [0.4, -2.0] };
        let r = evaluate_yx(&m, &thr);
        assert_eq!(r.pf, q_tail(0.4 / 1.3));
        assert_eq!(r.pd, q_tail((0.4 - 1.0) / 1.3));
    }

    #[test]
    fn u_ignoring_thresholds_collapse_to_yx() {
        let m = GaussianModel::new(0.8, 1.4).unwrap();
        let yx = YxThresholds { t_v: 0.3, t_w: [1.1, -0.2] };
        for t_u in [-1.0, 0.2, 0.9, f64::INFINITY, f64::NEG_INFINITY] {
            let x = evaluate_xyx(&m, &XyxThresholds::from_yx(&yx, t_u)).unwrap();
            let y = evaluate_yx(&m, &yx);
            assert!((x.pf - y.pf).abs() <= 1e-12 && (x.pd - y.pd).abs() <= 1e-12);
        }
    }

    #[test]
    fn always_one_first_bit_uses_u1_slice() {
        let m = unit();
        let thr = XyxThresholds {
            t_u: f64::NEG_INFINITY,
            t_v: [1.2, 0.1],
            t_w: [[1.0, 1.5], [-0.5, 0.2]],
        };
        let x = evaluate_xyx(&m, &thr).unwrap();
        let y = evaluate_yx(&m, &thr.branch(1));
        assert!((x.pf - y.pf).abs() <= 1e-15 && (x.pd - y.pd).abs() <= 1e-15);
    }

    #[test]
    fn relabeling_keeps_operating_point() {
        let m = GaussianModel::new(1.7, 0.6).unwrap();
        let thr = YxThresholds { t_v: 0.45, t_w: [0.9, -0.3] };
        let a = evaluate_yx(&m, &thr);
        let b = evaluate_relabeled_yx(&m, &thr.relabeled());
        assert!((a.pf - b.pf).abs() <= 1e-15 && (a.pd - b.pd).abs() <= 1e-15);
    }

    #[test]
    fn lrt_threshold_cases() {
        assert_eq!(lrt_threshold(1.0, 1.0, 1.0, 1.0, 9.0), 0.5);
        assert_eq!(lrt_threshold(2.0, 0.0, 1.0, 1.0, 9.0), f64::NEG_INFINITY);
        assert_eq!(lrt_threshold(1.0, 1.0, 0.0, 1.0, 9.0), f64::INFINITY);
        assert_eq!(lrt_threshold(1.0, -1.0, 0.0, 1.0, 9.0), f64::NEG_INFINITY);
        assert_eq!(lrt_threshold(1.0, 0.0, 0.0, 1.0, 9.0), 9.0);
        assert_eq!(lrt_threshold(1.0, 1.0, -1.0, 1.0, 9.0), 9.0);
    }

    #[test]
    fn np_final_meets_alpha() {
        let m = unit();
        let search = SearchConfig::default();
        let (thr, p) = np_final_yx(&m, 0.7, 0.2, &search).unwrap();
        assert!((p.pf - 0.2).abs() < 1e-12);
        thr.validate().unwrap();
        let (thr, p) = np_final_xyx(&m, 0.6, [1.1, 0.1], 0.2, &search).unwrap();
        assert!((p.pf - 0.2).abs() < 1e-12);
        thr.validate().unwrap();
    }

    #[test]
    fn lambda_zero_accepts_everything() {
        let m = unit();
        let Thresholds::Xyx(init) = default_init(&m, Architecture::Xyx) else { unreachable!() };
        let fp = iterate_xyx_thresholds(&m, 0.0, &init, &IterConfig::default()).unwrap();
        let r = evaluate_xyx(&m, &fp.thresholds).unwrap();
        assert_eq!(r.pf, 1.0);
    }

    #[test]
    fn single_sensor_lambda_at_half() {
        let m = GaussianModel::new(1.5, 1e6).unwrap();
        let init = Thresholds::Yx(YxThresholds { t_v: f64::INFINITY, t_w: [0.0, 0.0] });
        let s = solve_lambda_from(&m, &init, 0.5, &SearchConfig::default(), &IterConfig::default()).unwrap();
        let expected = (-0.5f64 / (1.5 * 1.5)).exp();
        assert!((s.lambda - expected).abs() < 1e-9 * expected, "{} vs {}", s.lambda, expected);
        assert!((s.pf - 0.5).abs() < 1e-8);
    }

    #[test]
    fn centralized_closed_form() {
        let m = unit();
        let p = centralized(&m, 0.2).unwrap();
        assert!((p.pd - 0.716_539_622_506_698_2).abs() < 1e-12);
        let p = centralized(&m, 0.5).unwrap();
        assert!((p.pd - 0.921_350_396_474_857_4).abs() < 1e-12);
    }

    #[test]
    fn centralized_quadrature_agrees() {
        for (sx, sy) in [(1.0, 1.0), (0.5, 1.0), (2.0, 0.7)] {
            let m = GaussianModel::new(sx, sy).unwrap();
            let p = centralized(&m, 0.2).unwrap();
            let tau = centralized_threshold(&m, 0.2).unwrap();
            let q = centralized_by_quadrature(&m, tau, 1e-13);
            assert!((q.pf - 0.2).abs() < 1e-9, "{}", q.pf);
            assert!((q.pd - p.pd).abs() < 1e-9, "{} vs {}", q.pd, p.pd);
        }
    }
}
