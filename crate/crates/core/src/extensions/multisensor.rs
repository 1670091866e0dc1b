//! X fused with `K` peripheral sensors `Y_1..Y_K`, each sending one bit.

use rayon::prelude::*;

use crate::asymptotic::{bit_kl, maximize_kl_yx, polish_root, tails};
use crate::error::{FusionError, Result};
use crate::fixed_sample::{bit_prob, Rates};
use crate::gaussian_model::{accept_in_cell, check_sigma, q_tail, tail, GaussianModel, Hypothesis};
use crate::search::{coordinate_ascent, linspace, top_k, SearchConfig};

pub const MAX_PERIPHERALS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiSensorModel {
    sigma_x: f64,
    sigma_ys: Vec<f64>,
}

impl MultiSensorModel {
    pub fn new(sigma_x: f64, sigma_ys: Vec<f64>) -> Result<Self> {
        check_sigma("sigma_x", sigma_x)?;
        if sigma_ys.is_empty() {
            return Err(FusionError::Shape("at least one peripheral sensor is required".into()));
        }
        for &s in &sigma_ys {
            check_sigma("sigma_y", s)?;
        }
        Ok(Self { sigma_x, sigma_ys })
    }

    pub fn from_pair(model: &GaussianModel) -> Self {
        Self {
            sigma_x: model.sigma_x(),
            sigma_ys: vec![model.sigma_y()],
        }
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    pub fn sigma_ys(&self) -> &[f64] {
        &self.sigma_ys
    }

    pub fn k(&self) -> usize {
        self.sigma_ys.len()
    }

    /// X paired with peripheral `k` alone.
    pub fn pair(&self, k: usize) -> GaussianModel {
        GaussianModel::new(self.sigma_x, self.sigma_ys[k]).expect("validated at construction")
    }

    fn check_cap(&self) -> Result<()> {
        if self.k() > MAX_PERIPHERALS {
            return Err(FusionError::CapExceeded(format!(
                "K = {} peripheral sensors exceeds {MAX_PERIPHERALS}",
                self.k()
            )));
        }
        Ok(())
    }
}

/// Each `Y_k` sends `v_k = [y_k > t_v[k]]`; X decides `[x > t_w[p]]` where
/// bit `k` of the pattern `p` is `v_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct VecYxThresholds {
    pub t_v: Vec<f64>,
    pub t_w: Vec<f64>,
}

/// X sends `u = [x > t_u]` to every `Y_k`, which replies
/// `v_k = [y_k > t_v[k][u]]`; X decides `[x > t_w[p][u]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct XVecYxThresholds {
    pub t_u: f64,
    pub t_v: Vec<[f64; 2]>,
    pub t_w: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MultiThresholds {
    VecYx(VecYxThresholds),
    XVecYx(XVecYxThresholds),
}

fn check_shape(model: &MultiSensorModel, n_v: usize, n_w: usize) -> Result<()> {
    model.check_cap()?;
    let k = model.k();
    if n_v != k || n_w != 1 << k {
        return Err(FusionError::Shape(format!(
            "K = {k} needs {k} peripheral thresholds and {} final thresholds, got {n_v} and {n_w}",
            1 << k
        )));
    }
    Ok(())
}

/// Probability under `hyp` of the bit pattern `p` given per-sensor thresholds.
fn pattern_prob(model: &MultiSensorModel, t_v: impl Fn(usize) -> f64, p: usize, hyp: Hypothesis) -> f64 {
    let mut prob = 1.0;
    for (k, &s) in model.sigma_ys.iter().enumerate() {
        prob *= bit_prob(t_v(k), (p >> k) & 1, hyp, s);
    }
    prob
}

/// Exact `(pf, pd)` of either multi-sensor architecture.
pub fn multisensor_evaluate(model: &MultiSensorModel, thr: &MultiThresholds) -> Result<Rates> {
    let sx = model.sigma_x;
    match thr {
        MultiThresholds::VecYx(t) => {
            check_shape(model, t.t_v.len(), t.t_w.len())?;
            let rate = |hyp| {
                let mut acc = 0.0;
                for p in 0..t.t_w.len() {
                    acc += pattern_prob(model, |k| t.t_v[k], p, hyp) * tail(t.t_w[p], hyp, sx);
                }
                acc
            };
            Ok(Rates { pf: rate(Hypothesis::H0), pd: rate(Hypothesis::H1) })
        }
        MultiThresholds::XVecYx(t) => {
            check_shape(model, t.t_v.len(), t.t_w.len())?;
            if t.t_u.is_nan() {
                return Err(FusionError::InvalidThreshold("NaN t_u".into()));
            }
            let rate = |hyp| {
                let mut acc = 0.0;
                for u in 0..2 {
                    for p in 0..t.t_w.len() {
                        acc += pattern_prob(model, |k| t.t_v[k][u], p, hyp)
                            * accept_in_cell(t.t_w[p][u], t.t_u, u, hyp, sx);
                    }
                }
                acc
            };
            Ok(Rates { pf: rate(Hypothesis::H0), pd: rate(Hypothesis::H1) })
        }
    }
}

/// `D(p0(v) || p1(v))` over the `2^K` patterns, computed term by term.
fn pattern_kl(model: &MultiSensorModel, t_v: impl Fn(usize) -> f64) -> f64 {
    // Per sensor: (P_0, ln P_0 - ln P_1) of bit 0 and of bit 1.
    let mut terms = [[(0.0, 0.0); 2]; MAX_PERIPHERALS];
    for (k, &s) in model.sigma_ys.iter().enumerate() {
        let (a, a_c) = tails(t_v(k), Hypothesis::H0, s);
        let (b, b_c) = tails(t_v(k), Hypothesis::H1, s);
        terms[k] = [(a_c, a_c.ln() - b_c.ln()), (a, a.ln() - b.ln())];
    }
    let mut total = 0.0;
    for p in 0..1usize << model.k() {
        let mut p0 = 1.0;
        let mut log_ratio = 0.0;
        for term in terms.iter().take(model.k()).enumerate().map(|(k, t)| t[(p >> k) & 1]) {
            p0 *= term.0;
            log_ratio += term.1;
        }
        if p0 > 0.0 {
            total += p0 * log_ratio;
        }
    }
    total.max(0.0)
}

/// KL distance of the vecYX process at peripheral thresholds `t_v`.
pub fn kl_vecyx(model: &MultiSensorModel, t_v: &[f64]) -> Result<f64> {
    check_shape(model, t_v.len(), 1 << model.k())?;
    let k_x = 0.5 / (model.sigma_x * model.sigma_x);
    Ok(k_x + pattern_kl(model, |k| t_v[k]))
}

/// KL distance of the XvecYX process: `K[x] + sum_u P_0(u) D(p0(v|u) || p1(v|u))`.
pub fn kl_xvecyx(model: &MultiSensorModel, t_u: f64, t_v: &[[f64; 2]]) -> Result<f64> {
    check_shape(model, t_v.len(), 1 << model.k())?;
    Ok(xvec_kl(model, t_u, |k, u| t_v[k][u]))
}

fn xvec_kl(model: &MultiSensorModel, t_u: f64, t_v: impl Fn(usize, usize) -> f64) -> f64 {
    let k_x = 0.5 / (model.sigma_x * model.sigma_x);
    let alpha1 = q_tail(t_u / model.sigma_x);
    let mut acc = k_x;
    acc += alpha1 * pattern_kl(model, |k| t_v(k, 1));
    acc += (1.0 - alpha1) * pattern_kl(model, |k| t_v(k, 0));
    acc
}

/// KL maxima of both multi-sensor architectures.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiKl {
    pub k_vecyx: f64,
    pub k_xvecyx: f64,
    /// Per-sensor maximizing thresholds of the vecYX process.
    pub t_vecyx: Vec<f64>,
    pub t_u: f64,
    /// `t_v[k][u]` of the XvecYX maximizer.
    pub t_xvecyx: Vec<[f64; 2]>,
}

/// `k_vecyx` from independent per-sensor 1-D maxima; `k_xvecyx` from a
/// joint grid over `(t_u, t_v[k][u])` with coordinate refinement.
pub fn multisensor_kl_max(model: &MultiSensorModel, search: &SearchConfig) -> Result<MultiKl> {
    model.check_cap()?;
    search.validate()?;
    let kk = model.k();
    let k_x = 0.5 / (model.sigma_x * model.sigma_x);
    let mut k_vecyx = k_x;
    let mut t_vecyx = Vec::with_capacity(kk);
    for k in 0..kk {
        let r = maximize_kl_yx(&model.pair(k));
        k_vecyx += bit_kl(r.t_star, model.sigma_ys[k]);
        t_vecyx.push(r.t_star);
    }

    let dims = 1 + 2 * kk;
    let n = search.joint_grid_points;
    let axes: Vec<Vec<f64>> = (0..dims)
        .map(|d| {
            let s = if d == 0 { model.sigma_x } else { model.sigma_ys[(d - 1) / 2] };
            linspace(-search.span_sigmas * s, search.span_sigmas * s + 1.0, n)
        })
        .collect();
    let objective = |p: &[f64]| xvec_kl(model, p[0], |k, u| p[1 + 2 * k + u]);
    let total = n.pow(dims as u32);
    let scored: Vec<(f64, Vec<f64>)> = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut p = vec![0.0; dims];
            for (d, slot) in p.iter_mut().enumerate() {
                *slot = axes[d][idx % n];
                idx /= n;
            }
            (objective(&p), p)
        })
        .collect();
    let lower: Vec<f64> = axes.iter().map(|a| a[0] - 5.0 * (a[1] - a[0])).collect();
    let upper: Vec<f64> = axes.iter().map(|a| a[n - 1] + 5.0 * (a[1] - a[0])).collect();
    let step: Vec<f64> = axes.iter().map(|a| a[1] - a[0]).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for (_, mut p) in top_k(scored, search.starts) {
        coordinate_ascent(objective, &mut p, &lower, &upper, &step, search.refine_tol.max(1e-12), search.max_sweeps);
        for k in 0..kk {
            let pair = model.pair(k);
            for u in 0..2 {
                let i = 1 + 2 * k + u;
                let polished = polish_root(&pair, p[i]);
                let mut trial = p.clone();
                trial[i] = polished;
                if objective(&trial) >= objective(&p) {
                    p = trial;
                }
            }
        }
        let v = objective(&p);
        if best.as_ref().is_none_or(|b| v > b.0) {
            best = Some((v, p));
        }
    }
    let (k_xvecyx, p) = best.ok_or_else(|| FusionError::EmptySearch("empty joint grid".into()))?;
    Ok(MultiKl {
        k_vecyx,
        k_xvecyx,
        t_vecyx,
        t_u: p[0],
        t_xvecyx: (0..kk).map(|k| [p[1 + 2 * k], p[2 + 2 * k]]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotic::{kl_xyx, kl_yx, XyxKlDesign};
    use crate::fixed_sample::{evaluate_xyx, evaluate_yx, XyxThresholds, YxThresholds};

    #[test]
    fn single_peripheral_matches_pair_bitwise() {
        let pair = GaussianModel::new(0.9, 1.3).unwrap();
        let m = MultiSensorModel::from_pair(&pair);
        let yx = YxThresholds { t_v: 0.4, t_w: [1.2, -0.1] };
        let a = evaluate_yx(&pair, &yx);
        let b = multisensor_evaluate(&m, &MultiThresholds::VecYx(VecYxThresholds { t_v: vec![0.4], t_w: vec![1.2, -0.1] })).unwrap();
        assert_eq!(a, b);
        let xyx = XyxThresholds { t_u: 0.6, t_v: [1.0, 0.1], t_w: [[1.1, 1.7], [-0.4, 0.2]] };
        let a = evaluate_xyx(&pair, &xyx).unwrap();
        let b = multisensor_evaluate(
            &m,
            &MultiThresholds::XVecYx(XVecYxThresholds {
                t_u: 0.6,
                t_v: vec![[1.0, 0.1]],
                t_w: vec![[1.1, 1.7], [-0.4, 0.2]],
            }),
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(kl_vecyx(&m, &[0.7]).unwrap(), kl_yx(&pair, 0.7).k_total);
        let d = XyxKlDesign::new(&pair, 0.3, [1.2, 0.2]);
        assert_eq!(kl_xvecyx(&m, 0.3, &[[1.2, 0.2]]).unwrap(), kl_xyx(&pair, &d).unwrap());
    }

    #[test]
    fn shape_and_cap_errors() {
        let m = MultiSensorModel::new(1.0, vec![1.0, 1.0]).unwrap();
        let bad = MultiThresholds::VecYx(VecYxThresholds { t_v: vec![0.0], t_w: vec![0.0; 4] });
        assert!(matches!(multisensor_evaluate(&m, &bad), Err(FusionError::Shape(_))));
        let big = MultiSensorModel::new(1.0, vec![1.0; 4]).unwrap();
        assert!(matches!(kl_vecyx(&big, &[0.0; 4]), Err(FusionError::CapExceeded(_))));
        assert!(MultiSensorModel::new(1.0, vec![]).is_err());
        assert!(MultiSensorModel::new(1.0, vec![-1.0]).is_err());
    }

    #[test]
    fn silent_peripherals_give_single_sensor() {
        let m = MultiSensorModel::new(1.4, vec![1.0, 0.6]).unwrap();
        let thr = MultiThresholds::VecYx(VecYxThresholds {
            t_v: vec![f64::INFINITY; 2],
            t_w: vec![0.8, 0.0, 0.0, 0.0],
        });
        let r = multisensor_evaluate(&m, &thr).unwrap();
        assert_eq!(r.pf, q_tail(0.8 / 1.4));
        assert_eq!(r.pd, q_tail((0.8 - 1.0) / 1.4));
    }
}
