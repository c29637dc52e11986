#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use cylmode_core::grid::{build_grid, CylGrid, Parity, RadialScheme, ScalarField};
use cylmode_core::state::{component_parity, slot, ModeState, Params, WavenumberConvention};
use cylmode_core::stokes::ModeOperator;
use rand::{Rng, SeedableRng};

pub fn grid(n_r: usize, n_z: usize) -> Arc<CylGrid> {
    Arc::new(build_grid(n_r, n_z, 2.0 * PI, RadialScheme::GaussRadauParity).unwrap())
}

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth random fields of the right axis parity in the populated modes. `extra`
/// multiplies every field by `r^extra` (non-integer values make it non-smooth at the axis).
pub fn random_state_with(
    g: &Arc<CylGrid>,
    params: Params,
    seed: u64,
    populated: &[usize],
    extra: f64,
) -> ModeState {
    let mut rng = rng(seed);
    let mut s = ModeState::zeros(g.clone(), params);
    for &k in populated {
        let m = (k * params.n) as f64;
        for (i, f) in s.modes[k].fields.iter_mut().enumerate() {
            let c: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let odd = component_parity(m, slot::is_axial(i)) == Parity::Odd;
            *f = ScalarField::from_fn(g, |r, z| {
                let base = if odd { r } else { 1.0 } * (1.0 - r * r) * r.powf(extra);
                base * (c[0]
                    + c[1] * r * r
                    + c[2] * z.cos()
                    + c[3] * (2.0 * z).sin()
                    + c[4] * z.sin())
            });
        }
    }
    s
}

pub fn random_state(g: &Arc<CylGrid>, params: Params, seed: u64, populated: &[usize]) -> ModeState {
    random_state_with(g, params, seed, populated, 0.0)
}

/// Discretely divergence-free version of `s`.
pub fn project(s: &mut ModeState) {
    for k in 0..s.modes.len() {
        let keff = s.params.k_eff(k, WavenumberConvention::Scaled);
        let op = ModeOperator::projection(&s.grid, k, keff).unwrap();
        s.modes[k] = op.solve(&s.grid, &s.modes[k]).unwrap().0;
    }
}

/// Random field that is divergence free up to discretisation error, then projected.
/// `u^θ` (or the mean-mode stream function) absorbs the divergence, so the projection
/// only removes a small remainder. `extra` multiplies the envelopes by `r^extra`.
pub fn random_divfree(
    g: &Arc<CylGrid>,
    params: Params,
    seed: u64,
    populated: &[usize],
    extra: f64,
) -> ModeState {
    let mut rng = rng(seed);
    let mut s = ModeState::zeros(g.clone(), params);
    let coeffs = |rng: &mut rand_chacha::ChaCha8Rng| -> [f64; 5] {
        let mut c = [0.0; 5];
        for v in c.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        c
    };
    let zf = |c: [f64; 5], z: f64| c[2] * z.cos() + c[3] * (2.0 * z).sin() + c[4] * z.sin() + c[0];
    let dzf = |c: [f64; 5], z: f64| -c[2] * z.sin() + 2.0 * c[3] * (2.0 * z).cos() + c[4] * z.cos();
    for &k in populated {
        let m = (k * params.n) as f64;
        let vpar = component_parity(m, false);
        let pf = |p: Parity, r: f64| if p == Parity::Odd { r } else { 1.0 };
        if k == 0 {
            let c = coeffs(&mut rng);
            let a =
                move |r: f64| (1.0 - r * r).powi(2) * r.powf(extra) * (1.0 + 0.5 * c[1] * r * r);
            let psi = ScalarField::from_fn(g, |r, _| r * r * a(r));
            let dpsi = g.d_r_par(&psi, Parity::Even).unwrap();
            let mode = &mut s.modes[0];
            mode.fields[slot::UR0] = ScalarField::from_fn(g, |r, z| -r * a(r) * dzf(c, z));
            let mut uz0 = g.zeros();
            for i in 0..g.n_r {
                for j in 0..g.n_z {
                    uz0.set(i, j, dpsi.at(i, j) / g.r[i] * zf(c, g.z[j]));
                }
            }
            mode.fields[slot::UZ0] = uz0;
            let c2 = coeffs(&mut rng);
            mode.fields[slot::UTH0] = ScalarField::from_fn(g, |r, z| {
                r * (1.0 - r * r) * r.powf(extra) * (c2[1] + zf(c2, z))
            });
            continue;
        }
        for (fam, sign) in [(0usize, 1.0), (1, -1.0)] {
            let cr = coeffs(&mut rng);
            let cz = coeffs(&mut rng);
            let ur = ScalarField::from_fn(g, |r, z| {
                pf(vpar, r)
                    * (1.0 - r * r).powi(2)
                    * r.powf(extra)
                    * (1.0 + 0.5 * cr[1] * r * r)
                    * zf(cr, z)
            });
            let uz = ScalarField::from_fn(g, |r, z| {
                pf(vpar.flip(), r)
                    * (1.0 - r * r)
                    * r.powf(extra)
                    * (1.0 + 0.5 * cz[1] * r * r)
                    * zf(cz, z)
            });
            let mut uth = cylmode_core::state::family_divergence(
                g,
                &[ur.clone(), g.zeros(), uz.clone()],
                sign * m,
            );
            for i in 0..g.n_r {
                for j in 0..g.n_z {
                    let v = if i + 1 == g.n_r {
                        0.0
                    } else {
                        -g.r[i] / (sign * m) * uth.at(i, j)
                    };
                    uth.set(i, j, v);
                }
            }
            let base = 3 * fam;
            s.modes[k].fields[base] = ur;
            s.modes[k].fields[base + 1] = uth;
            s.modes[k].fields[base + 2] = uz;
        }
    }
    project(&mut s);
    s
}

pub fn scale(s: &mut ModeState, a: f64) {
    for m in s.modes.iter_mut() {
        *m = m.scaled(a);
    }
}

pub fn max_diff(a: &ModeState, b: &ModeState) -> f64 {
    a.modes
        .iter()
        .zip(&b.modes)
        .flat_map(|(x, y)| x.fields.iter().zip(&y.fields))
        .map(|(f, g)| f.zip_map(g, |p, q| p - q).max_abs())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &ModeState) -> f64 {
    a.modes
        .iter()
        .flat_map(|m| m.fields.iter())
        .map(|f| f.max_abs())
        .fold(0.0, f64::max)
}

/// `L²` distance with the physical azimuthal measure.
pub fn l2_diff(a: &ModeState, b: &ModeState) -> f64 {
    let mut d = a.clone();
    for (x, y) in d.modes.iter_mut().zip(&b.modes) {
        x.axpy(-1.0, y);
    }
    d.physical_norm_sq().sqrt()
}
