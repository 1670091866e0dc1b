//! Search and iteration settings plus the small 1-D/N-D optimizers shared
//! by the design modules.

/// Grid and refinement settings for the direct-search optimizers.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Grid points per threshold axis.
    pub grid_points: usize,
    /// Threshold axes span `[-k sigma, k sigma + 1]`.
    pub span_sigmas: f64,
    /// Stop refining once coordinate steps fall below this.
    pub refine_tol: f64,
    pub max_sweeps: usize,
    /// Number of best grid points used as refinement starts.
    pub starts: usize,
    /// Upper end of the Lagrange multiplier bracket `[0, lambda_max]`.
    pub lambda_max: f64,
    pub bisection_steps: usize,
    /// Allowed `|pf - alpha|` for an optimized design.
    pub constraint_tol: f64,
    /// Grid points per axis of the joint multi-sensor KL search.
    pub joint_grid_points: usize,
    /// Grid points per continuous threshold in the multi-step search.
    pub mif_grid_points: usize,
    /// Cut points defining the cells of the X-side steps in the multi-step search.
    pub mif_x_cuts: Vec<f64>,
    /// Objective evaluations allowed in the multi-step search.
    pub max_evaluations: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid_points: 41,
            span_sigmas: 3.0,
            refine_tol: 1e-10,
            max_sweeps: 60,
            starts: 3,
            lambda_max: 1e6,
            bisection_steps: 64,
            constraint_tol: 1e-6,
            joint_grid_points: 9,
            mif_grid_points: 5,
            mif_x_cuts: vec![0.5],
            max_evaluations: 50_000_000,
        }
    }
}

impl SearchConfig {
    /// Grid over `[-k sigma, k sigma + 1]` with `grid_points` nodes.
    pub fn threshold_grid(&self, sigma: f64) -> Vec<f64> {
        linspace(-self.span_sigmas * sigma, self.span_sigmas * sigma + 1.0, self.grid_points)
    }

    pub(crate) fn validate(&self) -> crate::Result<()> {
        use crate::FusionError;
        if self.grid_points < 2 || self.joint_grid_points < 2 || self.mif_grid_points < 1 {
            return Err(FusionError::EmptySearch(format!(
                "grid sizes {}, {}, {} (need at least 2, 2, 1)",
                self.grid_points, self.joint_grid_points, self.mif_grid_points
            )));
        }
        if !(self.span_sigmas.is_finite() && self.span_sigmas > 0.0) {
            return Err(FusionError::EmptySearch(format!(
                "span_sigmas = {} (need a positive finite span)",
                self.span_sigmas
            )));
        }
        if !(self.lambda_max.is_finite() && self.lambda_max > 0.0) {
            return Err(FusionError::EmptySearch(format!(
                "lambda_max = {} (need a positive finite bracket)",
                self.lambda_max
            )));
        }
        if self.bisection_steps == 0 || self.max_sweeps == 0 || self.starts == 0 {
            return Err(FusionError::EmptySearch(
                "bisection_steps, max_sweeps and starts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Damped fixed-point iteration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterConfig {
    /// Weight kept on the previous iterate: `t <- d t + (1 - d) g(t)`.
    pub damping: f64,
    pub max_steps: usize,
    /// Sup-norm bound on `|g(t) - t|` at convergence.
    pub tolerance: f64,
}

impl Default for IterConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_steps: 500,
            tolerance: 1e-10,
        }
    }
}

pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (count - 1) as f64;
            (0..count)
                .map(|i| if i + 1 == count { stop } else { start + step * i as f64 })
                .collect()
        }
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximization of a unimodal `f` on `[a, b]`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Coordinate-wise golden-section ascent with shrinking brackets.
///
/// `step` gives the initial half-width per coordinate; coordinates are
/// clipped to `[lower, upper]`. Only improving moves are accepted, so the
/// returned value is never below `f(x)` at entry.
pub fn coordinate_ascent<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x: &mut [f64],
    lower: &[f64],
    upper: &[f64],
    step: &[f64],
    tol: f64,
    max_sweeps: usize,
) -> f64 {
    let n = x.len();
    let mut h: Vec<f64> = step.to_vec();
    let mut best = f(x);
    let mut probe = x.to_vec();
    for _ in 0..max_sweeps {
        let before = best;
        for i in 0..n {
            if h[i] <= tol {
                continue;
            }
            let lo = (x[i] - h[i]).max(lower[i]);
            let hi = (x[i] + h[i]).min(upper[i]);
            probe.copy_from_slice(x);
            let (xi, fi) = golden_max(
                |t| {
                    probe[i] = t;
                    f(&probe)
                },
                lo,
                hi,
                tol,
            );
            if fi > best {
                best = fi;
                x[i] = xi;
            } else {
                h[i] *= 0.5;
            }
        }
        let max_h = h.iter().cloned().fold(0.0, f64::max);
        if max_h <= tol || (best - before).abs() <= 1e-16 * best.abs().max(1.0) && max_h < 1e-6 {
            break;
        }
        for hi in h.iter_mut() {
            *hi *= 0.7;
        }
    }
    best
}

/// Deterministic "better" ordering for grid reductions: larger value wins,
/// ties go to the lexicographically smaller point.
pub fn prefer(a: &(f64, Vec<f64>), b: &(f64, Vec<f64>)) -> bool {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => {
            for (p, q) in a.1.iter().zip(&b.1) {
                match p.total_cmp(q) {
                    std::cmp::Ordering::Less => return true,
                    std::cmp::Ordering::Greater => return false,
                    std::cmp::Ordering::Equal => {}
                }
            }
            true
        }
    }
}

/// Keep the `k` best candidates under [`prefer`], best first.
pub fn top_k(mut items: Vec<(f64, Vec<f64>)>, k: usize) -> Vec<(f64, Vec<f64>)> {
    items.retain(|c| c.0.is_finite());
    items.sort_by(|a, b| {
        if prefer(a, b) && !prefer(b, a) {
            std::cmp::Ordering::Less
        } else if prefer(b, a) && !prefer(a, b) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    items.truncate(k);
    items
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, fx) = golden_max(|t| -(t - 0.3) * (t - 0.3), -1.0, 4.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-9);
        assert!(fx.abs() < 1e-18);
    }

    #[test]
    fn coordinate_ascent_on_separable_bowl() {
        let mut x = [0.0, 0.0, 0.0];
        let v = coordinate_ascent(
            |p| -(p[0] - 1.0).powi(2) - (p[1] + 0.5).powi(2) - (p[2] - 0.25).powi(2),
            &mut x,
            &[-5.0; 3],
            &[5.0; 3],
            &[2.0; 3],
            1e-10,
            100,
        );
        assert!(v > -1e-15);
        assert!((x[0] - 1.0).abs() < 1e-7 && (x[1] + 0.5).abs() < 1e-7 && (x[2] - 0.25).abs() < 1e-7);
    }

    #[test]
    fn linspace_hits_endpoints() {
        let g = linspace(-3.0, 4.0, 41);
        assert_eq!(g.len(), 41);
        assert_eq!(g[0], -3.0);
        assert_eq!(g[40], 4.0);
    }

    #[test]
    fn top_k_breaks_ties_lexicographically() {
        let items = vec![(1.0, vec![0.5]), (1.0, vec![0.2]), (0.5, vec![0.0])];
        let best = top_k(items, 2);
        assert_eq!(best[0].1, vec![0.2]);
        assert_eq!(best[1].1, vec![0.5]);
    }
}
