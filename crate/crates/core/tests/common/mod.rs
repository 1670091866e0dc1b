//! Independent reference computations shared by the integration tests.
//! Nothing here calls the library's numerics; probabilities come straight
//! from `erfc` and integrals from composite Simpson rules.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tandem_fusion::fixed_sample::{XyxThresholds, YxThresholds};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `P(N(mean, sigma^2) > t)`.
pub fn upper(t: f64, mean: f64, sigma: f64) -> f64 {
    if t == f64::INFINITY {
        return 0.0;
    }
    if t == f64::NEG_INFINITY {
        return 1.0;
    }
    0.5 * libm::erfc((t - mean) / (sigma * std::f64::consts::SQRT_2))
}

pub fn pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Composite Simpson on `[a, b]` with at least `per_unit` panels per unit length.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, per_unit: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut n = ((b - a) * per_unit).ceil() as usize;
    n = (n.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

/// `P(lo < N(mean, sigma^2) <= hi)` by integrating the density.
pub fn interval_by_quadrature(lo: f64, hi: f64, mean: f64, sigma: f64) -> f64 {
    let lo = lo.max(mean - 14.0 * sigma);
    let hi = hi.min(mean + 14.0 * sigma);
    simpson(|x| pdf(x, mean, sigma), lo, hi, 400.0 / sigma)
}

/// Side `b` of threshold `t`: `(t, inf)` for 1, `(-inf, t]` for 0.
pub fn side(t: f64, b: usize) -> (f64, f64) {
    if b == 1 {
        (t, f64::INFINITY)
    } else {
        (f64::NEG_INFINITY, t)
    }
}

/// Random thresholds obeying the interactive ordering convention; with
/// `degenerate`, some entries are replaced by infinities.
pub fn random_xyx(r: &mut ChaCha8Rng, degenerate: bool) -> XyxThresholds {
    let mut draw = |lo: f64, hi: f64| {
        if degenerate && r.gen_bool(0.1) {
            if r.gen_bool(0.5) {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }
        } else {
            r.gen_range(lo..hi)
        }
    };
    let t_u = draw(-1.5, 2.5);
    let v0 = draw(-1.5, 2.5);
    let v1 = v0.min(draw(-1.5, 2.5));
    let w10 = draw(-1.5, 2.5);
    let w11 = w10.max(draw(-1.5, 2.5));
    let w00 = w10.max(draw(-1.5, 2.5));
    let w01 = w11.max(w00).max(draw(-1.5, 2.5));
    XyxThresholds { t_u, t_v: [v0, v1], t_w: [[w00, w01], [w10, w11]] }
}

pub fn random_yx(r: &mut ChaCha8Rng) -> YxThresholds {
    let t_v = r.gen_range(-1.5..2.5);
    let a: f64 = r.gen_range(-1.5..2.5);
    let b: f64 = r.gen_range(-1.5..2.5);
    YxThresholds { t_v, t_w: [a.max(b), a.min(b)] }
}

/// Joint table entry `P_i(x in R_u, x on side w of t_w[v][u])` by quadrature.
pub fn joint_entry(thr: &XyxThresholds, w: usize, v: usize, u: usize, mean: f64, sx: f64) -> f64 {
    let (a0, b0) = side(thr.t_u, u);
    let (a1, b1) = side(thr.t_w[v][u], w);
    interval_by_quadrature(a0.max(a1), b0.min(b1), mean, sx)
}

/// `D(p0(x, v) || p1(x, v))` for the interactive process, summing over `v`
/// and integrating the literal joint log-ratio over `x`.
pub fn kl_xyx_by_quadrature(sx: f64, sy: f64, t_u: f64, t_v: [f64; 2]) -> f64 {
    let term = |x: f64, u: usize| {
        let mut acc = 0.0;
        for v in 0..2 {
            let q0 = upper(t_v[u], 0.0, sy);
            let q1 = upper(t_v[u], 1.0, sy);
            let (p0v, p1v) = if v == 1 { (q0, q1) } else { (1.0 - q0, 1.0 - q1) };
            let j0 = pdf(x, 0.0, sx) * p0v;
            let j1 = pdf(x, 1.0, sx) * p1v;
            if j0 > 0.0 {
                acc += j0 * (j0 / j1).ln();
            }
        }
        acc
    };
    let (lo, hi) = (-14.0 * sx, 14.0 * sx);
    let cut = t_u.clamp(lo, hi);
    let per_unit = 2000.0 / sx;
    simpson(|x| term(x, 0), lo, cut, per_unit) + simpson(|x| term(x, 1), cut, hi, per_unit)
}

pub fn bern_kl(a: f64, b: f64) -> f64 {
    let part = |p: f64, q: f64| if p == 0.0 { 0.0 } else { p * (p / q).ln() };
    part(a, b) + part(1.0 - a, 1.0 - b)
}

/// One-way exponent maximized on a uniform grid of spacing `step`, then
/// refined by ternary search on the best cell.
pub fn kl_yx_max_by_grid(sx: f64, sy: f64, step: f64) -> (f64, f64) {
    let bit = |t: f64| bern_kl(upper(t, 0.0, sy), upper(t, 1.0, sy));
    let (lo, hi) = (-3.0 * sy, 3.0 * sy + 1.0);
    let n = ((hi - lo) / step) as usize;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..=n {
        let t = lo + step * i as f64;
        let k = bit(t);
        if k > best.0 {
            best = (k, t);
        }
    }
    let (mut a, mut b) = (best.1 - step, best.1 + step);
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if bit(m1) < bit(m2) {
            a = m1;
        } else {
            b = m2;
        }
    }
    let t = 0.5 * (a + b);
    (0.5 / (sx * sx) + bit(t), t)
}

/// Rates of a one-way design from first principles.
pub fn yx_rates(sx: f64, sy: f64, t: &YxThresholds, mean: f64) -> f64 {
    let pv1 = upper(t.t_v, mean, sy);
    pv1 * upper(t.t_w[1], mean, sx) + (1.0 - pv1) * upper(t.t_w[0], mean, sx)
}

fn bisect_decreasing(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Best one-way pd at false alarm `alpha`: grid over `(t_v, t_w1)` with
/// `t_w0` solved from the constraint, then pattern-search refinement.
pub fn yx_np_by_grid(sx: f64, sy: f64, alpha: f64) -> (f64, YxThresholds) {
    let design = |t_v: f64, t_w1: f64| {
        let pv0 = upper(t_v, 0.0, sy);
        let hit = pv0 * upper(t_w1, 0.0, sx);
        let rest = alpha - hit;
        if rest < 0.0 || (1.0 - pv0) <= 0.0 || rest > 1.0 - pv0 {
            return None;
        }
        let t_w0 = bisect_decreasing(
            |t| (1.0 - pv0) * upper(t, 0.0, sx),
            rest,
            -40.0 * sx,
            40.0 * sx + 1.0,
        );
        let thr = YxThresholds { t_v, t_w: [t_w0, t_w1] };
        Some((yx_rates(sx, sy, &thr, 1.0), thr))
    };
    let pd = |p: &[f64]| design(p[0], p[1]).map_or(f64::NEG_INFINITY, |d| d.0);
    let gv: Vec<f64> = (0..=120).map(|i| -3.0 * sy + (6.0 * sy + 1.0) * i as f64 / 120.0).collect();
    let gw: Vec<f64> = (0..=120).map(|i| -3.0 * sx + (6.0 * sx + 1.0) * i as f64 / 120.0).collect();
    let mut best = (f64::NEG_INFINITY, vec![0.0, 0.0]);
    for &a in &gv {
        for &b in &gw {
            let v = pd(&[a, b]);
            if v > best.0 {
                best = (v, vec![a, b]);
            }
        }
    }
    let p = pattern_search(&pd, best.1, 0.05, 1e-10);
    let (v, thr) = design(p[0], p[1]).unwrap();
    (v, thr)
}

/// Compass search maximizing `f`, halving the step on failure.
pub fn pattern_search(f: &impl Fn(&[f64]) -> f64, mut x: Vec<f64>, mut step: f64, tol: f64) -> Vec<f64> {
    let mut fx = f(&x);
    while step > tol {
        let mut moved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += dir * step;
                let fy = f(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    moved = true;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    x
}

/// Interactive pd at false alarm `alpha` for fixed first-bit and Y
/// thresholds: the final rule is the Neyman-Pearson test on `(x, v)`,
/// found by bisection on the log threshold.
pub fn xyx_np_final(sx: f64, sy: f64, t_u: f64, t_v: [f64; 2], alpha: f64) -> Option<(f64, XyxThresholds)> {
    let thresholds = |ln_eta: f64| {
        let mut t_w = [[0.0; 2]; 2];
        for (u, &tv) in t_v.iter().enumerate() {
            for (v, row) in t_w.iter_mut().enumerate() {
                let (q0, q1) = (upper(tv, 0.0, sy), upper(tv, 1.0, sy));
                let (p0, p1) = if v == 1 { (q0, q1) } else { (1.0 - q0, 1.0 - q1) };
                // accept where (x - 1/2)/sx^2 + ln(p1/p0) > ln_eta
                row[u] = if p1 == 0.0 {
                    f64::INFINITY
                } else if p0 == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    sx * sx * (ln_eta - (p1 / p0).ln()) + 0.5
                };
            }
        }
        t_w
    };
    let rate = |t_w: &[[f64; 2]; 2], mean: f64| {
        let mut total = 0.0;
        for u in 0..2 {
            let (lo, hi) = side(t_u, u);
            let q = upper(t_v[u], mean, sy);
            for v in 0..2 {
                let pv = if v == 1 { q } else { 1.0 - q };
                let a = lo.max(t_w[v][u]);
                let cell = if hi <= a { 0.0 } else { upper(a, mean, sx) - upper(hi, mean, sx) };
                total += pv * cell.max(0.0);
            }
        }
        total
    };
    let (mut lo, mut hi) = (-60.0, 60.0);
    if rate(&thresholds(hi), 0.0) > alpha || rate(&thresholds(lo), 0.0) < alpha {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(&thresholds(mid), 0.0) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_w = thresholds(0.5 * (lo + hi));
    Some((rate(&t_w, 1.0), XyxThresholds { t_u, t_v, t_w }))
}

/// Best interactive pd: coarse grid over `(t_u, t_v0, t_v1)` with the exact
/// final stage, then pattern search from the best few grid points.
pub fn xyx_np_by_grid(sx: f64, sy: f64, alpha: f64, points: usize) -> (f64, XyxThresholds) {
    let value = |p: &[f64]| {
        xyx_np_final(sx, sy, p[0], [p[1], p[2]], alpha).map_or(f64::NEG_INFINITY, |d| d.0)
    };
    let axis = |s: f64| -> Vec<f64> {
        (0..points).map(|i| -3.0 * s + (6.0 * s + 1.0) * i as f64 / (points - 1) as f64).collect()
    };
    let (gu, gv) = (axis(sx), axis(sy));
    let mut all = Vec::new();
    for &a in &gu {
        for &b in &gv {
            for &c in &gv {
                all.push((value(&[a, b, c]), vec![a, b, c]));
            }
        }
    }
    all.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut best = (f64::NEG_INFINITY, vec![]);
    for (_, start) in all.into_iter().take(4) {
        let p = pattern_search(&value, start, 0.1, 1e-9);
        let v = value(&p);
        if v > best.0 {
            best = (v, p);
        }
    }
    let p = best.1;
    xyx_np_final(sx, sy, p[0], [p[1], p[2]], alpha).unwrap()
}
