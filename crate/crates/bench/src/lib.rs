//! Fixtures shared by the kernel benchmarks.

use std::f64::consts::PI;
use std::sync::Arc;

use cylmode_core::nonlinear::nonlinear_rhs;
use cylmode_core::state::{make_initial_state, ring_profile};
use cylmode_core::stepper::Stepper;
use cylmode_core::{
    build_grid, CylGrid, ModeState, Params, Parity, RadialScheme, Scheme, StepConfig,
};

pub fn grid(n_r: usize, n_z: usize) -> Arc<CylGrid> {
    Arc::new(build_grid(n_r, n_z, 2.0 * PI, RadialScheme::GaussRadauParity).expect("grid"))
}

/// Ring profile state after a few Euler steps, so every mode carries energy.
pub fn warm_state(n: usize, k_max: usize, n_r: usize, n_z: usize) -> ModeState {
    let g = grid(n_r, n_z);
    let p = Params {
        n,
        k_max,
        nu: 1.0,
        ..Params::default()
    };
    let prof =
        ring_profile(&g, Parity::velocity(n as i64), 0.05, ((n + 1) % 2) as f64).expect("profile");
    let mut s = make_initial_state(&prof, &p, g).expect("state");
    let cfg = StepConfig {
        dt: 1e-3,
        scheme: Scheme::ImexEuler,
        ..StepConfig::default()
    };
    let mut stepper = Stepper::new(&s, cfg, None).expect("stepper");
    for _ in 0..k_max {
        s = stepper.step(&s).expect("step").0;
    }
    assert!(nonlinear_rhs(&s).iter().all(|v| v.is_finite()));
    s
}
