//! Multi-step memoryless interactive fusion: X and Y alternate one-bit
//! messages `x, y, x, ..., y, x`, each step seeing only its own observation
//! and the previous bit.

use std::cell::Cell;

use rayon::prelude::*;

use crate::asymptotic::{bern_kl, maximize_kl_yx};
use crate::error::{FusionError, Result};
use crate::fixed_sample::Rates;
use crate::gaussian_model::{interval_prob, normal_pdf, GaussianModel, Hypothesis};
use crate::quadrature::integrate;
use crate::search::{coordinate_ascent, linspace, top_k, SearchConfig};

pub const MAX_MIF_STEPS: usize = 7;

/// Cells considered for an X-step bit pattern are capped at this many.
const MAX_PATTERN_CELLS: usize = 4;

/// A piecewise-constant X rule: `bits[j]` on the `j`-th cell of the sorted
/// `cuts`, cells being `(c[j-1], c[j]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct XRule {
    cuts: Vec<f64>,
    bits: Vec<u8>,
}

impl XRule {
    pub fn new(cuts: Vec<f64>, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != cuts.len() + 1 {
            return Err(FusionError::Shape(format!(
                "{} cuts need {} bits, got {}",
                cuts.len(),
                cuts.len() + 1,
                bits.len()
            )));
        }
        if cuts.iter().any(|c| !c.is_finite()) || cuts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FusionError::InvalidDesign(
                "X-rule cuts must be finite and strictly increasing".into(),
            ));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(FusionError::InvalidDesign("X-rule bits must be 0 or 1".into()));
        }
        Ok(Self { cuts, bits })
    }

    /// `[x > t]`; infinite `t` gives the matching constant rule.
    pub fn above(t: f64) -> Self {
        if t == f64::INFINITY {
            Self::constant(0)
        } else if t == f64::NEG_INFINITY {
            Self::constant(1)
        } else {
            Self { cuts: vec![t], bits: vec![0, 1] }
        }
    }

    pub fn constant(bit: u8) -> Self {
        Self { cuts: Vec::new(), bits: vec![bit.min(1)] }
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn bit(&self, x: f64) -> u8 {
        self.bits[self.cuts.partition_point(|&c| c < x)]
    }
}

/// An `n_steps`-step process. `x_steps[r]` is the rule of step `2r + 1`
/// indexed by the incoming bit (step 1 always reads bit 0); `y_steps[r]`
/// holds the thresholds of step `2r + 2`, also indexed by the incoming bit.
/// The final step is X's decision on `(x, u_{N-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct MifDesign {
    n_steps: usize,
    x_steps: Vec<[XRule; 2]>,
    y_steps: Vec<[f64; 2]>,
}

pub(crate) fn check_steps(n_steps: usize) -> Result<()> {
    if n_steps > MAX_MIF_STEPS {
        return Err(FusionError::CapExceeded(format!(
            "n_steps = {n_steps} exceeds {MAX_MIF_STEPS}"
        )));
    }
    if n_steps < 3 || n_steps % 2 == 0 {
        return Err(FusionError::InvalidDesign(format!(
            "n_steps = {n_steps} must be odd and at least 3"
        )));
    }
    Ok(())
}

impl MifDesign {
    pub fn new(n_steps: usize, x_steps: Vec<[XRule; 2]>, y_steps: Vec<[f64; 2]>) -> Result<Self> {
        check_steps(n_steps)?;
        let rounds = (n_steps - 1) / 2;
        if x_steps.len() != rounds || y_steps.len() != rounds {
            return Err(FusionError::Shape(format!(
                "{n_steps} steps need {rounds} X rules and {rounds} Y threshold pairs, got {} and {}",
                x_steps.len(),
                y_steps.len()
            )));
        }
        if y_steps.iter().flatten().any(|t| t.is_nan()) {
            return Err(FusionError::InvalidThreshold("NaN Y threshold".into()));
        }
        Ok(Self { n_steps, x_steps, y_steps })
    }

    /// The three-step process `u = [x > t_u]`, `v = [y > t_v[u]]`.
    pub fn three_step(t_u: f64, t_v: [f64; 2]) -> Self {
        let rule = XRule::above(t_u);
        Self {
            n_steps: 3,
            x_steps: vec![[rule.clone(), rule]],
            y_steps: vec![t_v],
        }
    }

    /// Every step ignores its input bit; X sends `[x > x_cut]` and Y
    /// always uses `t`.
    pub fn step_ignoring(n_steps: usize, x_cut: f64, t: f64) -> Result<Self> {
        check_steps(n_steps)?;
        let rounds = (n_steps - 1) / 2;
        let rule = XRule::above(x_cut);
        Self::new(n_steps, vec![[rule.clone(), rule]; rounds], vec![[t, t]; rounds])
    }

    /// Two leading steps that always send 0, then `inner`.
    pub fn prefixed(inner: &MifDesign) -> Result<Self> {
        let mut x_steps = vec![[XRule::constant(0), XRule::constant(0)]];
        x_steps.extend(inner.x_steps.iter().cloned());
        let mut y_steps = vec![[f64::INFINITY; 2]];
        y_steps.extend(inner.y_steps.iter().copied());
        Self::new(inner.n_steps + 2, x_steps, y_steps)
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn x_steps(&self) -> &[[XRule; 2]] {
        &self.x_steps
    }

    pub fn y_steps(&self) -> &[[f64; 2]] {
        &self.y_steps
    }

    /// Union of all X-rule cuts, sorted.
    pub fn cell_boundaries(&self) -> Vec<f64> {
        let mut cuts: Vec<f64> = self
            .x_steps
            .iter()
            .flat_map(|pair| pair.iter().flat_map(|r| r.cuts.iter().copied()))
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts
    }

    /// The bit `u_{N-1}` produced by the literal exchange on `(x, y)`.
    pub fn final_bit(&self, x: f64, y: f64) -> u8 {
        let mut u = 0u8;
        for (xr, ys) in self.x_steps.iter().zip(&self.y_steps) {
            u = xr[u as usize].bit(x);
            u = (y > ys[u as usize]) as u8;
        }
        u
    }

    /// `P_i(u_{N-1} = 1 | x)`, summing Y-interval probabilities over every
    /// bit history that ends in 1.
    pub fn final_bit_prob(&self, x: f64, hyp: Hypothesis, sigma_y: f64) -> f64 {
        self.history_sum(0, 0, f64::NEG_INFINITY, f64::INFINITY, x, hyp, sigma_y)
    }

    #[allow(clippy::too_many_arguments)]
    fn history_sum(&self, round: usize, u: u8, lo: f64, hi: f64, x: f64, hyp: Hypothesis, sigma_y: f64) -> f64 {
        let ux = self.x_steps[round][u as usize].bit(x);
        let s = self.y_steps[round][ux as usize];
        let last = round + 1 == self.y_steps.len();
        let mut acc = 0.0;
        // bit 1: y > s
        let lo1 = lo.max(s);
        if lo1 < hi {
            acc += if last {
                interval_prob(lo1, hi, hyp, sigma_y)
            } else {
                self.history_sum(round + 1, 1, lo1, hi, x, hyp, sigma_y)
            };
        }
        if !last {
            let hi0 = hi.min(s);
            if lo < hi0 {
                acc += self.history_sum(round + 1, 0, lo, hi0, x, hyp, sigma_y);
            }
        }
        acc
    }
}

/// Cells `(lo, hi]` cut by `boundaries`, each with an interior point.
fn cells(boundaries: &[f64]) -> Vec<(f64, f64, f64)> {
    let m = boundaries.len();
    (0..=m)
        .map(|j| {
            let lo = if j == 0 { f64::NEG_INFINITY } else { boundaries[j - 1] };
            let hi = if j == m { f64::INFINITY } else { boundaries[j] };
            let rep = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 1.0,
                (false, true) => hi - 1.0,
                (false, false) => 0.0,
            };
            (lo, hi, rep)
        })
        .collect()
}

/// Final-step KL distance `D(p0(x, u_{N-1}) || p1(x, u_{N-1}))` by adaptive
/// quadrature over `x` within each cell.
pub fn mif_kl(model: &GaussianModel, design: &MifDesign) -> Result<f64> {
    let (sx, sy) = (model.sigma_x(), model.sigma_y());
    let cells = cells(&design.cell_boundaries());
    let tol = 1e-10 / cells.len() as f64;
    let mut total = 0.0;
    for (lo, hi, rep) in cells {
        let q0 = design.final_bit_prob(rep, Hypothesis::H0, sy);
        let q1 = design.final_bit_prob(rep, Hypothesis::H1, sy);
        let bit = bern_kl(q0, q1);
        if bit.is_infinite() {
            return Ok(f64::INFINITY);
        }
        let r = integrate(
            |x| normal_pdf(x, 0.0, sx) * ((0.5 - x) / (sx * sx) + bit),
            lo,
            hi,
            tol,
        );
        total += r.value;
    }
    Ok(total)
}

/// `(pf, pd)` when X finally decides `[x > final_t[u_{N-1}]]`.
pub fn mif_rates(model: &GaussianModel, design: &MifDesign, final_t: [f64; 2]) -> Rates {
    let (sx, sy) = (model.sigma_x(), model.sigma_y());
    let mut out = [0.0; 2];
    for (i, hyp) in Hypothesis::BOTH.into_iter().enumerate() {
        for (lo, hi, rep) in cells(&design.cell_boundaries()) {
            let q = design.final_bit_prob(rep, hyp, sy);
            let above = |t: f64| interval_prob(lo.max(t), hi, hyp, sx);
            out[i] += q * above(final_t[1]) + (1.0 - q) * above(final_t[0]);
        }
    }
    Rates { pf: out[0], pd: out[1] }
}

/// Same quantity in closed form: `K[x] + sum_cells P_0(cell) f(q0, q1)`.
pub fn mif_kl_closed(model: &GaussianModel, design: &MifDesign) -> f64 {
    let (sx, sy) = (model.sigma_x(), model.sigma_y());
    let mut total = model.kl_x();
    for (lo, hi, rep) in cells(&design.cell_boundaries()) {
        let q0 = design.final_bit_prob(rep, Hypothesis::H0, sy);
        let q1 = design.final_bit_prob(rep, Hypothesis::H1, sy);
        let weight = interval_prob(lo, hi, Hypothesis::H0, sx);
        if weight > 0.0 {
            total += weight * bern_kl(q0, q1);
        }
    }
    total
}

/// Outcome of the structured multi-step search.
#[derive(Debug, Clone, PartialEq)]
pub struct MifSearch {
    pub value: f64,
    pub design: MifDesign,
    pub evaluations: usize,
    pub budget_exhausted: bool,
}

/// All X-rule choices over the cells cut by `cuts`.
fn rule_choices(cuts: &[f64]) -> Vec<XRule> {
    let n_cells = cuts.len() + 1;
    (0..1usize << n_cells)
        .map(|mask| XRule {
            cuts: cuts.to_vec(),
            bits: (0..n_cells).map(|j| ((mask >> j) & 1) as u8).collect(),
        })
        .collect()
}

/// X-step assignments: the first step has one live rule, later steps two.
fn x_patterns(rounds: usize, choices: &[XRule]) -> Vec<Vec<[XRule; 2]>> {
    let mut out: Vec<Vec<[XRule; 2]>> = choices.iter().map(|r| vec![[r.clone(), r.clone()]]).collect();
    for _ in 1..rounds {
        let mut next = Vec::with_capacity(out.len() * choices.len() * choices.len());
        for prefix in &out {
            for a in choices {
                for b in choices {
                    let mut p = prefix.clone();
                    p.push([a.clone(), b.clone()]);
                    next.push(p);
                }
            }
        }
        out = next;
    }
    out
}

fn with_y(n_steps: usize, x_steps: &[[XRule; 2]], y: &[f64]) -> MifDesign {
    MifDesign {
        n_steps,
        x_steps: x_steps.to_vec(),
        y_steps: y.chunks(2).map(|c| [c[0], c[1]]).collect(),
    }
}

/// Best final-step KL distance over X-step cell patterns and Y thresholds.
///
/// X steps range over every bit pattern on the cells cut by
/// `search.mif_x_cuts` (no cuts freezes them to constants); Y thresholds
/// are searched on a coarse grid and refined coordinate-wise. The
/// step-ignoring design at the one-way optimum and the best shorter
/// process, prefixed by two idle steps, are always candidates.
pub fn mif_kl_max(model: &GaussianModel, n_steps: usize, search: &SearchConfig) -> Result<MifSearch> {
    check_steps(n_steps)?;
    search.validate()?;
    let mut cuts = search.mif_x_cuts.clone();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    if cuts.len() + 1 > MAX_PATTERN_CELLS {
        return Err(FusionError::CapExceeded(format!(
            "{} X-rule cuts give more than {MAX_PATTERN_CELLS} cells",
            cuts.len()
        )));
    }
    let budget = search.max_evaluations;
    let mut evaluations = 0usize;
    let mut exhausted = false;

    let shorter = if n_steps > 3 {
        let s = mif_kl_max(model, n_steps - 2, search)?;
        evaluations += s.evaluations;
        exhausted |= s.budget_exhausted;
        Some(s)
    } else {
        None
    };

    let rounds = (n_steps - 1) / 2;
    let dims = 2 * rounds;
    let t_star = maximize_kl_yx(model).t_star;
    let seed_rule = match cuts.first() {
        Some(&c) => XRule::above(c),
        None => XRule::constant(0),
    };
    let seed_x = vec![[seed_rule.clone(), seed_rule]; rounds];
    let seed_y = vec![t_star; dims];
    let mut best = (mif_kl_closed(model, &with_y(n_steps, &seed_x, &seed_y)), seed_x, seed_y);
    evaluations += 1;

    let patterns = x_patterns(rounds, &rule_choices(&cuts));
    let sy = model.sigma_y();
    let axis = linspace(-3.0 * sy, 3.0 * sy + 1.0, search.mif_grid_points);
    let per_pattern = axis.len().pow(dims as u32);
    let remaining = budget.saturating_sub(evaluations);
    let n_patterns = if per_pattern == 0 { 0 } else { (remaining / per_pattern).min(patterns.len()) };
    if n_patterns < patterns.len() {
        exhausted = true;
    }
    let scored: Vec<(f64, Vec<f64>)> = patterns[..n_patterns]
        .par_iter()
        .enumerate()
        .map(|(pi, xs)| {
            let mut y = vec![0.0; dims];
            let mut top = (f64::NEG_INFINITY, Vec::new());
            for idx in 0..per_pattern {
                let mut k = idx;
                for slot in y.iter_mut() {
                    *slot = axis[k % axis.len()];
                    k /= axis.len();
                }
                let v = mif_kl_closed(model, &with_y(n_steps, xs, &y));
                if v > top.0 {
                    top = (v, y.clone());
                }
            }
            let mut key = vec![pi as f64];
            key.extend(top.1);
            (top.0, key)
        })
        .collect();
    evaluations += n_patterns * per_pattern;

    let lower = vec![-(search.span_sigmas + 5.0) * sy; dims];
    let upper = vec![(search.span_sigmas + 5.0) * sy + 1.0; dims];
    let step = vec![if axis.len() > 1 { axis[1] - axis[0] } else { sy }; dims];
    let used = Cell::new(evaluations);
    for (_, key) in top_k(scored, search.starts) {
        let xs = &patterns[key[0] as usize];
        let mut y = key[1..].to_vec();
        let v = coordinate_ascent(
            |q| {
                if used.get() >= budget {
                    return f64::NEG_INFINITY;
                }
                used.set(used.get() + 1);
                mif_kl_closed(model, &with_y(n_steps, xs, q))
            },
            &mut y,
            &lower,
            &upper,
            &step,
            search.refine_tol.max(1e-9),
            search.max_sweeps,
        );
        if v > best.0 {
            best = (v, xs.clone(), y);
        }
    }
    if used.get() >= budget {
        exhausted = true;
    }
    evaluations = used.get();

    let mut design = with_y(n_steps, &best.1, &best.2);
    let mut value = best.0;
    if let Some(s) = shorter {
        let embedded = MifDesign::prefixed(&s.design)?;
        let v = mif_kl_closed(model, &embedded);
        if v > value {
            value = v;
            design = embedded;
        }
    }
    Ok(MifSearch { value, design, evaluations, budget_exhausted: exhausted })
}
