mod common;

use rand::Rng;

use common::*;
use tandem_fusion::asymptotic::{maximize_kl_xyx, maximize_kl_yx, XyxKlDesign};
use tandem_fusion::extensions::{
    mif_kl, mif_rates, multisensor_evaluate, MifDesign, MultiSensorModel, MultiThresholds,
    VecYxThresholds, XRule,
};
use tandem_fusion::fixed_sample::{evaluate_xyx, evaluate_yx, optimize_xyx};
use tandem_fusion::montecarlo::{estimate_exponent, simulate_fixed, ExponentDesign, McEstimate, Scenario};
use tandem_fusion::search::{IterConfig, SearchConfig};
use tandem_fusion::GaussianModel;

const TRIALS: u64 = 1_000_000;

fn unit() -> GaussianModel {
    GaussianModel::new(1.0, 1.0).unwrap()
}

fn covers(e: &McEstimate, analytic: f64) -> bool {
    (e.value - analytic).abs() <= e.half_width
}

#[test]
fn random_one_way_designs_match_simulation() {
    let mut r = rng(21);
    for i in 0..3 {
        let thr = random_yx(&mut r);
        let a = evaluate_yx(&unit(), &thr);
        let (pf, pd) = simulate_fixed(&Scenario::Yx(unit(), thr), TRIALS, 100 + i).unwrap();
        assert!(covers(&pf, a.pf) && covers(&pd, a.pd), "{thr:?}: {a:?} vs {pf:?} {pd:?}");
    }
}

#[test]
fn random_interactive_designs_match_simulation() {
    let mut r = rng(22);
    for i in 0..3 {
        let thr = random_xyx(&mut r, false);
        let a = evaluate_xyx(&unit(), &thr).unwrap();
        let (pf, pd) = simulate_fixed(&Scenario::Xyx(unit(), thr), TRIALS, 200 + i).unwrap();
        assert!(covers(&pf, a.pf) && covers(&pd, a.pd), "{thr:?}: {a:?} vs {pf:?} {pd:?}");
    }
}

#[test]
fn random_two_peripheral_designs_match_simulation() {
    let mut r = rng(23);
    let mm = MultiSensorModel::new(1.0, vec![1.0, 1.0]).unwrap();
    for i in 0..2 {
        let thr = VecYxThresholds {
            t_v: (0..2).map(|_| r.gen_range(-1.0..2.0)).collect(),
            t_w: (0..4).map(|_| r.gen_range(-1.0..2.0)).collect(),
        };
        let a = multisensor_evaluate(&mm, &MultiThresholds::VecYx(thr.clone())).unwrap();
        let (pf, pd) = simulate_fixed(&Scenario::VecYx(mm.clone(), thr), TRIALS, 300 + i).unwrap();
        assert!(covers(&pf, a.pf) && covers(&pd, a.pd));
    }
}

#[test]
fn optimal_interactive_design_matches_simulation() {
    let d = optimize_xyx(&unit(), 0.2, &SearchConfig::default(), &IterConfig::default()).unwrap();
    let (pf, pd) = simulate_fixed(&Scenario::Xyx(unit(), d.thresholds), TRIALS, 5).unwrap();
    assert!(covers(&pf, 0.2), "{pf:?}");
    assert!(covers(&pd, d.point.pd), "{pd:?}");
}

#[test]
fn multi_step_rates_match_simulation() {
    let design = MifDesign::new(
        5,
        vec![
            [XRule::above(0.3), XRule::new(vec![0.0, 0.9], vec![1, 0, 1]).unwrap()],
            [XRule::above(0.6), XRule::constant(1)],
        ],
        vec![[0.8, 0.1], [1.2, -0.4]],
    )
    .unwrap();
    let final_t = [1.1, 0.2];
    let a = mif_rates(&unit(), &design, final_t);
    let (pf, pd) = simulate_fixed(&Scenario::Mif(unit(), design, final_t), TRIALS, 9).unwrap();
    assert!(covers(&pf, a.pf) && covers(&pd, a.pd), "{a:?} vs {pf:?} {pd:?}");
}

#[test]
fn coverage_is_calibrated() {
    let mut r = rng(24);
    let mut inside = 0;
    for i in 0..100 {
        let sx = r.gen_range(0.5..2.0);
        let m = GaussianModel::new(sx, 1.0).unwrap();
        let thr = random_xyx(&mut r, false);
        let a = evaluate_xyx(&m, &thr).unwrap();
        let (_, pd) = simulate_fixed(&Scenario::Xyx(m, thr), 100_000, 1000 + i).unwrap();
        inside += covers(&pd, a.pd) as usize;
    }
    // a 3-sigma interval misses with probability about 0.003 per design
    assert!(inside >= 95, "{inside} of 100");
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let thr = random_xyx(&mut rng(25), false);
    let s = Scenario::Xyx(unit(), thr);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_fixed(&s, 300_000, 77).unwrap())
    };
    assert_eq!(run(1), run(4));
    let design = ExponentDesign::Yx { t_v: 0.2 };
    let exp = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_exponent(&unit(), &design, 3, 200_000, 8).unwrap())
    };
    assert_eq!(exp(1), exp(3));
}

#[test]
fn one_way_exponent_matches_optimum() {
    let k = maximize_kl_yx(&unit());
    let e = estimate_exponent(&unit(), &ExponentDesign::Yx { t_v: k.t_star }, 2000, 200, 31).unwrap();
    assert!(covers(&e, k.k_total), "{e:?} vs {}", k.k_total);
}

#[test]
fn interactive_exponent_has_the_same_limit() {
    let (d, k) = maximize_kl_xyx(&unit(), &SearchConfig::default()).unwrap();
    let e_xyx = estimate_exponent(&unit(), &ExponentDesign::Xyx(d), 2000, 200, 32).unwrap();
    assert!(covers(&e_xyx, k), "{e_xyx:?} vs {k}");
    let ky = maximize_kl_yx(&unit());
    let e_yx = estimate_exponent(&unit(), &ExponentDesign::Yx { t_v: ky.t_star }, 2000, 200, 33).unwrap();
    assert!((e_xyx.value - e_yx.value).abs() <= e_xyx.half_width + e_yx.half_width);
}

#[test]
fn exponent_converges_at_large_n() {
    let m = GaussianModel::new(1.5, 0.8).unwrap();
    let d = XyxKlDesign::new(&m, 0.4, [0.9, 0.1]);
    let analytic = tandem_fusion::asymptotic::kl_xyx(&m, &d).unwrap();
    for n in [10, 100] {
        let e = estimate_exponent(&m, &ExponentDesign::Xyx(d), n, 200, 40 + n).unwrap();
        assert!(e.value.is_finite() && e.half_width.is_finite());
    }
    let e = estimate_exponent(&m, &ExponentDesign::Xyx(d), 2000, 200, 42).unwrap();
    assert!(covers(&e, analytic), "{e:?} vs {analytic}");
}

#[test]
fn multi_step_exponent_matches_simulation() {
    let design = MifDesign::new(
        5,
        vec![
            [XRule::above(0.2), XRule::new(vec![-0.3, 0.7], vec![0, 1, 0]).unwrap()],
            [XRule::above(0.5), XRule::above(-0.2)],
        ],
        vec![[0.9, 0.0], [0.4, 0.3]],
    )
    .unwrap();
    let analytic = mif_kl(&unit(), &design).unwrap();
    let e = estimate_exponent(&unit(), &ExponentDesign::Mif(design), 500, 200, 51).unwrap();
    assert!(covers(&e, analytic), "{e:?} vs {analytic}");
}
