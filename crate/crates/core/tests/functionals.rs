mod common;

use common::*;
use cylmode_core::functionals::*;
use cylmode_core::grid::{CylGrid, Parity};
use cylmode_core::state::{
    make_initial_state, ring_profile, ModeState, Params, WavenumberConvention,
};
use cylmode_core::stepper::{run, RunOptions, StepConfig};
use proptest::prelude::*;
use std::sync::Arc;

fn params(n: usize, k: usize) -> Params {
    Params {
        n,
        k_max: k,
        ..Params::default()
    }
}

fn at(s: &ModeState, t: f64, scale_by: f64) -> ModeState {
    let mut c = s.clone();
    c.t = t;
    scale(&mut c, scale_by);
    c
}

fn paper_state(g: &Arc<CylGrid>, p: &Params) -> (ModeState, cylmode_core::state::InitProfile) {
    let prof = ring_profile(
        g,
        Parity::velocity(p.n as i64),
        1.0,
        if p.n % 2 == 0 { 1.0 } else { 0.0 },
    )
    .unwrap();
    (make_initial_state(&prof, p, g.clone()).unwrap(), prof)
}

#[test]
fn zero_stream_gives_zeros() {
    let g = grid(8, 8);
    let p = params(4, 3);
    let mut h = EnergyHistory::new(p, 1, true);
    for n in 0..4 {
        let mut s = ModeState::zeros(g.clone(), p);
        s.t = n as f64 * 0.1;
        h.accumulate(&s).unwrap();
    }
    for j in 0..2 {
        assert_eq!(compute_e(&h, j, &p).unwrap(), 0.0);
        assert_eq!(compute_d(&h, j, &p).unwrap(), 0.0);
    }
    assert!(product_bounds(&h, &p)
        .unwrap()
        .iter()
        .all(|e| e.ratio == 0.0));
    h.profile_norms = Some(vec![1.0, 1.0]);
    let r = decay_report(&h, &p).unwrap();
    assert!(r.per_mode.iter().all(|e| e.ratio == 0.0));
    assert!(r.pass_flags.ratios_finite);
}

#[test]
fn empty_history_is_zero_and_reports_fail() {
    let p = params(4, 3);
    let h = EnergyHistory::new(p, 1, false);
    assert_eq!(compute_e(&h, 0, &p).unwrap(), 0.0);
    assert!(decay_report(&h, &p).is_err());
    assert!(compute_e(&h, 2, &p).is_err());
    assert!(product_bounds(&h, &p).is_err());
}

#[test]
fn time_must_increase() {
    let g = grid(8, 8);
    let p = params(4, 2);
    let s = ModeState::zeros(g, p);
    let mut h = EnergyHistory::new(p, 1, false);
    h.accumulate(&s).unwrap();
    assert!(h.accumulate(&s).is_err());
}

#[test]
fn constant_state_integrates_linearly() {
    let g = grid(10, 8);
    let p = params(3, 2);
    let s = random_divfree(&g, p, 1, &[0, 1, 2], 0.0);
    let mut h = EnergyHistory::new(p, 1, true);
    let dt = 0.01;
    for n in 0..=50 {
        h.accumulate(&at(&s, n as f64 * dt, 1.0)).unwrap();
    }
    let t = 0.5;
    for k in 0..=2 {
        let keff = p.k_eff(k, WavenumberConvention::Scaled);
        for j in 0..=1 {
            let m = mode_sample(&g, &s.modes[k], keff, j);
            let tr = &h.tracks[k][j];
            for (got, want) in [
                (tr.int_grad, m.grad),
                (tr.int_dr, m.dr),
                (tr.int_over_r, m.over_r),
                (tr.int_mean_over_r, m.mean_over_r),
            ] {
                assert!(
                    (got - t * want).abs() <= 1e-12 * (t * want).max(1.0),
                    "{got} {want}"
                );
            }
            assert_eq!(tr.sup, m.energy);
        }
    }
    assert!(h.trapezoid_error() < 1e-12);
}

#[test]
fn decaying_mode_matches_closed_form() {
    let g = grid(10, 8);
    let p = params(3, 2);
    let s = random_divfree(&g, p, 2, &[1], 0.0);
    let lambda: f64 = 2.0;
    let t_end: f64 = 1.0;
    let keff = p.k_eff(1, WavenumberConvention::Scaled);
    let g0 = mode_sample(&g, &s.modes[1], keff, 0).grad;
    let exact = (1.0 - (-2.0 * lambda * t_end).exp()) / (2.0 * lambda) * g0;
    let mut errs = Vec::new();
    for n_steps in [50, 100] {
        let dt = t_end / n_steps as f64;
        let mut h = EnergyHistory::new(p, 0, false);
        for n in 0..=n_steps {
            let t = n as f64 * dt;
            h.accumulate(&at(&s, t, (-lambda * t).exp())).unwrap();
        }
        let err = (h.tracks[1][0].int_grad - exact).abs();
        // Trapezoid error of e^{−2λt}: (2λ)² dt² t_end/12 relative scale.
        assert!(
            err <= 4.0 * lambda * lambda * dt * dt / 12.0 * g0 * 1.01,
            "{err}"
        );
        assert!(h.tracks[1][0].trapezoid_error >= 0.5 * err);
        errs.push(err);
    }
    assert!((errs[0] / errs[1] - 4.0).abs() < 0.05);
}

/// Independent re-evaluation of the weighted sums from per-snapshot samples.
fn oracle(states: &[ModeState], p: &Params, j: usize, d_form: bool) -> f64 {
    let g = &states[0].grid;
    let n = p.n as f64;
    let samples: Vec<Vec<ModeSample>> = states
        .iter()
        .map(|s| {
            s.modes
                .iter()
                .map(|m| mode_sample(g, m, p.k_eff(m.k, WavenumberConvention::Scaled), j))
                .collect()
        })
        .collect();
    let trap = |k: usize, f: &dyn Fn(&ModeSample) -> f64| -> f64 {
        (1..states.len())
            .map(|i| {
                0.5 * (states[i].t - states[i - 1].t) * (f(&samples[i][k]) + f(&samples[i - 1][k]))
            })
            .sum()
    };
    let sup = |k: usize| samples.iter().map(|s| s[k].energy).fold(0.0, f64::max);
    let grad = |k: usize| {
        if d_form {
            trap(k, &|m| m.dr)
        } else {
            trap(k, &|m| m.grad)
        }
    };
    let mut total = n.powf(0.5 - 2.0 * p.eta) * (sup(0) + grad(0) + trap(0, &|m| m.mean_over_r));
    let mut best: f64 = 0.0;
    for k in 1..=p.k_max {
        let kf = k as f64;
        let w = if d_form {
            let mj = (p.m - j) as f64;
            kf.powf(2.0 * p.sigma * mj)
                * n.powf(2.0 * f64::min(p.eta * (kf - 2.0), (0.5 - p.eta - p.delta) * mj))
        } else {
            kf * kf * n.powf(2.0 * p.eta * (kf - 2.0))
        };
        best = best.max(w * (sup(k) + grad(k) + kf * kf * n * n / 2.0 * trap(k, &|m| m.over_r)));
    }
    total += best;
    total
}

#[test]
fn synthetic_two_mode_history_matches_oracle() {
    let g = grid(10, 8);
    let p = Params {
        nu: 0.0,
        ..params(4, 3)
    };
    let base = random_divfree(&g, p, 3, &[1, 2], 0.0);
    let states: Vec<ModeState> = [
        (0.0, 1.0, 0.2),
        (0.1, 0.8, 0.5),
        (0.25, 0.5, 0.7),
        (0.3, 0.4, 0.3),
    ]
    .iter()
    .map(|&(t, a, b)| {
        let mut s = base.clone();
        s.t = t;
        s.modes[1] = s.modes[1].scaled(a);
        s.modes[2] = s.modes[2].scaled(b);
        s
    })
    .collect();
    let mut h = EnergyHistory::new(p, 1, false);
    for s in &states {
        h.accumulate(s).unwrap();
    }
    for j in 0..=1 {
        let e = compute_e(&h, j, &p).unwrap();
        let d = compute_d(&h, j, &p).unwrap();
        assert!((e - oracle(&states, &p, j, false)).abs() <= 1e-12 * e);
        assert!((d - oracle(&states, &p, j, true)).abs() <= 1e-12 * d);
    }
}

#[test]
fn initial_functionals_for_paper_data() {
    let g = grid(12, 8);
    let p = params(4, 3);
    let (s, _) = paper_state(&g, &p);
    let mut h = EnergyHistory::new(p, 1, false);
    h.accumulate(&s).unwrap();
    let n = p.n as f64;
    for j in 0..=1 {
        let u1 = mode_sample(&g, &s.modes[1], n, j).energy;
        let want = n.powf(-2.0 * p.eta) * u1;
        assert!((compute_e(&h, j, &p).unwrap() - want).abs() <= 1e-14 * want);
        assert!((compute_e_initial(&h, j, &p).unwrap() - want).abs() <= 1e-14 * want);
        // min{η(1−2), (1/2−η−δ)(m−j)} = −η
        assert!((compute_d(&h, j, &p).unwrap() - want).abs() <= 1e-14 * want);
    }
}

#[test]
fn weight_examples() {
    let p = Params {
        n: 8,
        k_max: 6,
        m: 3,
        eta: 0.25,
        delta: 0.0,
        sigma: 0.4,
        ..Params::default()
    };
    let w = decay_weights(&p).unwrap();
    assert!((w.theta[1] - 2f64.powf(-0.4 * 3.0)).abs() < 1e-15);
    assert!((w.theta[0] - 8f64.powf(0.25)).abs() < 1e-14);
    assert_eq!(w.a[0], Some(5));
    assert_eq!(threshold(&Params { eta: 0.0, ..p }, 0), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_identities(n in 2usize..64, m in 3usize..8, eta in 0.0f64..0.45, delta in 0.0f64..0.05, sigma in 0.2f64..0.5) {
        prop_assume!(eta < 0.5 - delta);
        let p = Params { n, k_max: 12, m, eta, delta, sigma, ..Params::default() };
        prop_assume!(p.validate().is_ok());
        let w = decay_weights(&p).unwrap();
        let nf = n as f64;
        for k in 1..=12 {
            let kf = k as f64;
            let th = w.theta[k - 1];
            let tt = w.theta_tilde[k - 1];
            prop_assert!(th <= kf.powf(-sigma * m as f64) * nf.powf(eta) * (1.0 + 1e-12));
            prop_assert!(tt <= kf.powf(-sigma * (m as f64 - 1.0)) * nf.powf(eta) * (1.0 + 1e-12));
            prop_assert!(th <= kf.powf(-sigma) * tt * (1.0 + 1e-12));
        }
    }

    #[test]
    fn functionals_are_quadratic(lambda in 0.1f64..10.0, seed in 0u64..1000) {
        let g = grid(8, 8);
        let p = params(3, 2);
        let s = random_divfree(&g, p, seed, &[0, 1, 2], 0.0);
        let mut h1 = EnergyHistory::new(p, 1, false);
        let mut h2 = EnergyHistory::new(p, 1, false);
        for (n, f) in [1.0, 0.7, 0.9].iter().enumerate() {
            h1.accumulate(&at(&s, n as f64 * 0.1, *f)).unwrap();
            h2.accumulate(&at(&s, n as f64 * 0.1, f * lambda)).unwrap();
        }
        for j in 0..=1 {
            let (a, b) = (compute_e(&h1, j, &p).unwrap(), compute_e(&h2, j, &p).unwrap());
            prop_assert!((b - lambda * lambda * a).abs() <= 1e-12 * b);
            let (a, b) = (compute_d(&h1, j, &p).unwrap(), compute_d(&h2, j, &p).unwrap());
            prop_assert!((b - lambda * lambda * a).abs() <= 1e-12 * b);
        }
    }
}

#[test]
fn functionals_non_decreasing_along_a_run() {
    let g = grid(12, 8);
    let p = params(4, 3);
    let (s, _) = paper_state(&g, &p);
    let cfg = StepConfig {
        dt: 2e-3,
        t_end: 0.05,
        ..StepConfig::default()
    };
    let mut h = EnergyHistory::new(p, 1, false);
    let mut prev = [0.0; 4];
    struct Watch<'a>(&'a mut EnergyHistory, &'a mut [f64; 4], Params);
    impl cylmode_core::stepper::Sink for Watch<'_> {
        fn snapshot(&mut self, s: &ModeState) -> cylmode_core::error::Result<()> {
            self.0.accumulate(s)?;
            let v = [
                compute_e(self.0, 0, &self.2)?,
                compute_e(self.0, 1, &self.2)?,
                compute_d(self.0, 0, &self.2)?,
                compute_d(self.0, 1, &self.2)?,
            ];
            for (a, b) in self.1.iter().zip(&v) {
                assert!(*b >= *a);
            }
            *self.1 = v;
            Ok(())
        }
    }
    run(
        &s,
        &cfg,
        &RunOptions::default(),
        &mut [&mut Watch(&mut h, &mut prev, p)],
    )
    .unwrap();
}

#[test]
fn stokes_run_has_no_cascade_and_bounded_energy() {
    let g = grid(12, 8);
    let p = params(4, 3);
    let (s, prof) = paper_state(&g, &p);
    let cfg = StepConfig {
        dt: 5e-3,
        t_end: 0.2,
        nonlinear: false,
        ..StepConfig::default()
    };
    let mut h = EnergyHistory::new(p, 1, false).with_profile(&prof, &g, 1);
    run(&s, &cfg, &RunOptions::default(), &mut [&mut h]).unwrap();
    let r = decay_report(&h, &p).unwrap();
    assert!(r.pass_flags.no_cascade);
    // ‖u(t)‖² + 2∫D ≤ ‖u(0)‖² with the k-block weight N²/2 ≤ (N−1)² bounds the
    // functional by 3/2 of its initial value, not by 1.
    let e0 = compute_e_initial(&h, 0, &p).unwrap();
    let growth = compute_e(&h, 0, &p).unwrap() / e0;
    eprintln!("Stokes E_0(t)/E_0(0) = {growth}");
    assert!(growth > 1.0 && growth <= 1.5 * (1.0 + 1e-10), "{growth}");
    let json = serde_json::to_value(&r).unwrap();
    for key in ["params", "per_mode", "ratios", "pass_flags", "metadata"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    let csv = r.to_csv();
    assert!(csv.starts_with("k,j,sup_norm,bound,ratio\n"));
    assert_eq!(csv.lines().count(), 1 + r.per_mode.len());
}

#[test]
fn smallness_examples() {
    let g = grid(10, 8);
    let p = Params {
        n: 8,
        m: 3,
        eta: 0.25,
        delta: 0.0,
        ..params(8, 3)
    };
    let zero = smallness_from_norms(&[0.0; 5], &p).unwrap();
    assert_eq!(zero.ns_lhs, 0.0);
    assert!(zero.ns_pass && zero.ans_pass);
    let prof = ring_profile(&g, Parity::velocity(8), 1.0, 1.0).unwrap();
    let a = smallness_check(&prof, &g, &p).unwrap();
    let b = smallness_check(&prof, &g, &Params { n: 16, ..p }).unwrap();
    let norms: Vec<f64> = (0..2).map(|j| prof.dz_norm(&g, j)).collect();
    let prod = (norms[0] * norms[1]).sqrt();
    assert!((a.ns_lhs - (8f64.powf(-0.25) + 8f64.powf(-0.25)) * prod).abs() < 1e-14 * a.ns_lhs);
    let ratio = b.ns_lhs / a.ns_lhs;
    assert!(ratio <= f64::max(2f64.powf(-0.25), 2f64.powf(-0.25)) + 1e-14);
    assert!(a.ans_sum_lhs > 0.0 && a.ans_product_lhs > 0.0);
    assert!(smallness_from_norms(&[1.0; 3], &p).is_err());
}

#[test]
fn h_ell_by_hand() {
    let p = Params {
        n: 16,
        delta: 0.1,
        ..params(16, 3)
    };
    let norms = [1.0, 2.0, 3.0, 4.0];
    let n = 16f64;
    let want0 = n.powf(-4.0 * 0.15) * (1.0 + 16.0) + n.powf(-4.0 * 0.9) * 16.0;
    assert!((h_ell(&norms, &p, 0).unwrap() - want0).abs() < 1e-14 * want0);
    let want2 =
        n.powf(-4.0 * 0.15) * (1.0 + 16.0 + 81.0) + n.powf(-4.0 * 0.9) * (16.0 + 81.0 + 256.0);
    assert!((h_ell(&norms, &p, 2).unwrap() - want2).abs() < 1e-14 * want2);
    assert!(h_ell(&norms, &p, 3).is_err());
}

#[test]
fn product_bound_ratios_finite_and_stable_under_refinement() {
    let p = params(4, 3);
    let ratios: Vec<Vec<ProductBound>> = [12, 24]
        .iter()
        .map(|&nr| {
            let g = grid(nr, 8);
            let (s, _) = paper_state(&g, &p);
            let cfg = StepConfig {
                dt: 5e-3,
                t_end: 0.1,
                nonlinear: false,
                ..StepConfig::default()
            };
            let mut h = EnergyHistory::new(p, 1, true);
            run(&s, &cfg, &RunOptions::default(), &mut [&mut h]).unwrap();
            product_bounds(&h, &p).unwrap()
        })
        .collect();
    let e9 = ratios[0]
        .iter()
        .find(|e| e.estimate == "l4_mode" && e.k == 1 && e.j == 0)
        .unwrap();
    assert!(e9.ratio.is_finite() && e9.ratio > 0.0);
    for (a, b) in ratios[0].iter().zip(&ratios[1]) {
        assert!(a.ratio.is_finite() && b.ratio.is_finite());
        if a.ratio > 0.0 {
            assert!((a.ratio / b.ratio - 1.0).abs() < 0.3, "{a:?} {b:?}");
        }
    }
}

#[test]
fn history_serialises() {
    let g = grid(8, 8);
    let p = params(3, 2);
    let s = random_divfree(&g, p, 4, &[1], 0.0);
    let mut h = EnergyHistory::new(p, 1, true);
    h.accumulate(&s).unwrap();
    let text = serde_json::to_string(&h).unwrap();
    let back: EnergyHistory = serde_json::from_str(&text).unwrap();
    assert_eq!(back.times, h.times);
    assert_eq!(back.tracks[1][0].sup, h.tracks[1][0].sup);
}
