//! Reference solver for the three-dimensional equations on an `(r, θ, z)` grid.
//!
//! The advective term is formed pointwise in physical space with `∂_θ` by FFT and `∂_r`
//! along diameters, then transformed to `e^{inθ}` coefficients. In that basis the map
//! `(û^r, i û^θ, û^z)` turns each wavenumber into the real family operator with `m = n`,
//! which is solved implicitly. Wavenumbers above `KN` are removed after every step, which
//! with `n_θ ≥ 4KN` makes the products alias-free in `θ`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grid::{CylGrid, Parity, ScalarField};
use crate::state::{slot, ModeState, ModeVelocity, Params};
use crate::stokes::FamilyOperator;

/// Largest supported azimuthal resolution.
pub const MAX_N_THETA: usize = 128;

/// Velocity and pressure on the full grid, one meridional slice per `θ_l = 2πl/n_θ`.
#[derive(Debug, Clone)]
pub struct FullField {
    pub grid: Arc<CylGrid>,
    pub n_theta: usize,
    pub t: f64,
    pub ur: Vec<ScalarField>,
    pub uth: Vec<ScalarField>,
    pub uz: Vec<ScalarField>,
    pub p: Vec<ScalarField>,
}

impl FullField {
    pub fn zeros(grid: Arc<CylGrid>, n_theta: usize) -> Result<Self> {
        if n_theta < 4 || n_theta % 2 != 0 || n_theta > MAX_N_THETA {
            return Err(Error::InvalidGrid(format!(
                "n_theta = {n_theta} must be even and in 4..={MAX_N_THETA}"
            )));
        }
        let z = vec![grid.zeros(); n_theta];
        Ok(Self {
            grid,
            n_theta,
            t: 0.0,
            ur: z.clone(),
            uth: z.clone(),
            uz: z.clone(),
            p: z,
        })
    }

    pub fn theta(&self, l: usize) -> f64 {
        2.0 * PI * l as f64 / self.n_theta as f64
    }

    fn velocity(&self) -> [&Vec<ScalarField>; 3] {
        [&self.ur, &self.uth, &self.uz]
    }

    /// `∫ |u|² r dr dθ dz` by the grid quadrature and the `θ` trapezoid rule.
    pub fn norm_sq(&self) -> f64 {
        let w = 2.0 * PI / self.n_theta as f64;
        self.velocity()
            .iter()
            .flat_map(|c| c.iter())
            .map(|f| w * self.grid.inner(f, f))
            .sum()
    }

    /// Largest nodal divergence `∂_r u^r + u^r/r + ∂_θ u^θ / r + ∂_z u^z`.
    pub fn divergence_max(&self) -> f64 {
        let g = &self.grid;
        let dth = theta_derivative(g, &self.uth);
        let mut worst = 0.0_f64;
        for l in 0..self.n_theta {
            let dr = diameter_dr(g, &self.ur, l, -1.0);
            let dz = g.d_z_unchecked(&self.uz[l]);
            for idx in 0..dr.data.len() {
                let r = g.r[idx / g.n_z];
                let d =
                    dr.data[idx] + self.ur[l].data[idx] / r + dz.data[idx] + dth[l].data[idx] / r;
                worst = worst.max(d.abs());
            }
        }
        worst
    }
}

/// One-sided `θ` spectrum: `spec[n]` holds the real and imaginary parts of the
/// `e^{inθ}` coefficient, `n = 0..=n_θ/2`.
fn theta_spectrum(grid: &CylGrid, f: &[ScalarField]) -> Vec<(ScalarField, ScalarField)> {
    let nt = f.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(nt);
    let np = grid.n_r * grid.n_z;
    let mut out = vec![(grid.zeros(), grid.zeros()); nt / 2 + 1];
    let mut buf = vec![Complex64::new(0.0, 0.0); nt];
    for idx in 0..np {
        for l in 0..nt {
            buf[l] = Complex64::new(f[l].data[idx], 0.0);
        }
        fft.process(&mut buf);
        for n in 0..=nt / 2 {
            let c = buf[n] / nt as f64;
            out[n].0.data[idx] = c.re;
            out[n].1.data[idx] = c.im;
        }
    }
    out
}

/// Real field from one-sided coefficients; the Nyquist entry is ignored.
fn theta_synthesize(
    grid: &CylGrid,
    spec: &[(ScalarField, ScalarField)],
    nt: usize,
) -> Vec<ScalarField> {
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(nt);
    let np = grid.n_r * grid.n_z;
    let mut out = vec![grid.zeros(); nt];
    let mut buf = vec![Complex64::new(0.0, 0.0); nt];
    for idx in 0..np {
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for n in 0..spec.len().min(nt / 2) {
            let c = Complex64::new(spec[n].0.data[idx], spec[n].1.data[idx]);
            buf[n] = c;
            if n > 0 {
                buf[nt - n] = c.conj();
            }
        }
        buf[0].im = 0.0;
        ifft.process(&mut buf);
        for l in 0..nt {
            out[l].data[idx] = buf[l].re;
        }
    }
    out
}

fn theta_derivative(grid: &CylGrid, f: &[ScalarField]) -> Vec<ScalarField> {
    let nt = f.len();
    let spec = theta_spectrum(grid, f);
    let d: Vec<_> = spec
        .into_iter()
        .enumerate()
        .map(|(n, (re, im))| {
            let n = n as f64;
            (im.scaled(-n), re.scaled(n))
        })
        .collect();
    theta_synthesize(grid, &d, nt)
}

/// `∂_r` on slice `l` using the values on the opposite half-diameter. `sign` is the
/// factor picked up by the component under `(r, θ) → (−r, θ + π)`.
fn diameter_dr(grid: &CylGrid, f: &[ScalarField], l: usize, sign: f64) -> ScalarField {
    let nt = f.len();
    let opp = &f[(l + nt / 2) % nt];
    let even = f[l].zip_map(opp, |a, b| 0.5 * (a + sign * b));
    let odd = f[l].zip_map(opp, |a, b| 0.5 * (a - sign * b));
    let mut d = grid.d_r_unchecked(&even, Parity::Even);
    d.axpy(1.0, &grid.d_r_unchecked(&odd, Parity::Odd));
    d
}

/// `(u·∇)u` in cylindrical components at every node, filtered by [`CylGrid::z_dealias`].
pub fn advection(full: &FullField) -> [Vec<ScalarField>; 3] {
    let g = &full.grid;
    let comps = full.velocity();
    let dth: Vec<Vec<ScalarField>> = comps.iter().map(|c| theta_derivative(g, c)).collect();
    let mut out = [
        vec![g.zeros(); full.n_theta],
        vec![g.zeros(); full.n_theta],
        vec![g.zeros(); full.n_theta],
    ];
    let signs = [-1.0, -1.0, 1.0];
    for l in 0..full.n_theta {
        let dr: Vec<ScalarField> = (0..3)
            .map(|c| diameter_dr(g, comps[c], l, signs[c]))
            .collect();
        let dz: Vec<ScalarField> = (0..3).map(|c| g.d_z_unchecked(&comps[c][l])).collect();
        let (ur, uth, uz) = (&full.ur[l].data, &full.uth[l].data, &full.uz[l].data);
        for idx in 0..ur.len() {
            let r = g.r[idx / g.n_z];
            let conv = |c: usize| {
                ur[idx] * dr[c].data[idx]
                    + uth[idx] / r * dth[c][l].data[idx]
                    + uz[idx] * dz[c].data[idx]
            };
            out[0][l].data[idx] = conv(0) - uth[idx] * uth[idx] / r;
            out[1][l].data[idx] = conv(1) + ur[idx] * uth[idx] / r;
            out[2][l].data[idx] = conv(2);
        }
    }
    for comp in out.iter_mut() {
        for f in comp.iter_mut() {
            *f = g.z_dealias(f);
        }
    }
    out
}

fn check_resolution(n_theta: usize, params: &Params) -> Result<()> {
    let top = params.k_max * params.n;
    if 2 * top >= n_theta {
        return Err(Error::InvalidGrid(format!(
            "n_theta = {n_theta} does not resolve wavenumber KN = {top}"
        )));
    }
    Ok(())
}

/// Mode coefficients of three physical components: `cos(kNθ)` and `sin(kNθ)`
/// parts in the slot layout of [`ModeVelocity`].
fn project_components(
    grid: &CylGrid,
    comps: [&Vec<ScalarField>; 3],
    params: &Params,
) -> Vec<ModeVelocity> {
    let spec: Vec<_> = comps.iter().map(|c| theta_spectrum(grid, c)).collect();
    let mut modes = Vec::with_capacity(params.k_max + 1);
    modes.push(ModeVelocity {
        k: 0,
        fields: (0..3).map(|c| spec[c][0].0.clone()).collect(),
    });
    for k in 1..=params.k_max {
        let n = k * params.n;
        let cos = |c: usize| spec[c][n].0.scaled(2.0);
        let sin = |c: usize| spec[c][n].1.scaled(-2.0);
        let mut w = ModeVelocity::zeros(grid, k);
        w.fields[slot::UR] = cos(0);
        w.fields[slot::VTH] = sin(1);
        w.fields[slot::UZ] = cos(2);
        w.fields[slot::VR] = sin(0);
        w.fields[slot::UTH] = cos(1);
        w.fields[slot::VZ] = sin(2);
        modes.push(w);
    }
    modes
}

/// Extracts the retained `cos(kNθ)`, `sin(kNθ)` coefficients.
pub fn project_to_modes(full: &FullField, params: &Params) -> Result<ModeState> {
    check_resolution(full.n_theta, params)?;
    let mut s = ModeState::zeros(full.grid.clone(), *params);
    s.t = full.t;
    s.modes = project_components(&full.grid, full.velocity(), params);
    Ok(s)
}

/// Evaluates a mode state on the full grid.
pub fn reconstruct_full(state: &ModeState, n_theta: usize) -> Result<FullField> {
    check_resolution(n_theta, &state.params)?;
    let mut full = FullField::zeros(state.grid.clone(), n_theta)?;
    full.t = state.t;
    let n = state.params.n;
    for l in 0..n_theta {
        let th = full.theta(l);
        let m0 = &state.modes[0];
        full.ur[l] = m0.fields[slot::UR0].clone();
        full.uth[l] = m0.fields[slot::UTH0].clone();
        full.uz[l] = m0.fields[slot::UZ0].clone();
        for m in &state.modes[1..] {
            let ph = (m.k * n) as f64 * th;
            let (c, s) = (ph.cos(), ph.sin());
            let f = &m.fields;
            full.ur[l].axpy(c, &f[slot::UR]);
            full.ur[l].axpy(s, &f[slot::VR]);
            full.uth[l].axpy(c, &f[slot::UTH]);
            full.uth[l].axpy(s, &f[slot::VTH]);
            full.uz[l].axpy(c, &f[slot::UZ]);
            full.uz[l].axpy(s, &f[slot::VZ]);
        }
    }
    Ok(full)
}

/// Projection of `−(u·∇)u` onto mode `k`, i.e. the complete explicit right side of the
/// mode-`k` equation (transport, `u_0` couplings and triads, or the mean source).
pub fn nonlinear_term_projection(
    full: &FullField,
    params: &Params,
    k: usize,
) -> Result<ModeVelocity> {
    check_resolution(full.n_theta, params)?;
    if k > params.k_max {
        return Err(Error::ModeOutOfRange {
            k,
            k_max: params.k_max,
        });
    }
    let adv = advection(full);
    let mut modes = project_components(&full.grid, [&adv[0], &adv[1], &adv[2]], params);
    Ok(modes.swap_remove(k).scaled(-1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleScheme {
    Euler,
    Bdf2,
}

/// Advective CFL limit `min(Δr/|u^r|, Δz/|u^z|, r Δθ_eff/|u^θ|)` with `Δθ_eff = 2π/(KN)`.
pub fn oracle_cfl_limit(full: &FullField, params: &Params) -> f64 {
    let g = &full.grid;
    let dth = 2.0 * PI / (params.k_max * params.n) as f64;
    let dz = g.dz();
    let mut rate = 0.0_f64;
    for l in 0..full.n_theta {
        for idx in 0..g.n_r * g.n_z {
            let i = idx / g.n_z;
            rate = rate
                .max(full.ur[l].data[idx].abs() / g.local_dr(i))
                .max(full.uz[l].data[idx].abs() / dz)
                .max(full.uth[l].data[idx].abs() / (g.r[i] * dth));
        }
    }
    if rate == 0.0 {
        f64::INFINITY
    } else {
        1.0 / rate
    }
}

/// Time integrator for the full field with factored operators for one `(ν, dt, scheme)`.
pub struct Oracle {
    params: Params,
    dt: f64,
    scheme: OracleScheme,
    euler_ops: Vec<FamilyOperator>,
    bdf_ops: Vec<FamilyOperator>,
    history: Option<(FullField, [Vec<ScalarField>; 3])>,
}

impl Oracle {
    pub fn new(grid: &CylGrid, params: &Params, dt: f64, scheme: OracleScheme) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Precondition(format!("dt = {dt} must be positive")));
        }
        let top = params.k_max * params.n;
        let build = |sigma: f64| {
            (0..=top)
                .map(|n| FamilyOperator::new(grid, n as f64, params.nu, sigma))
                .collect::<Result<Vec<_>>>()
        };
        let euler_ops = build(1.0 / dt)?;
        let bdf_ops = match scheme {
            OracleScheme::Euler => vec![],
            OracleScheme::Bdf2 => build(1.5 / dt)?,
        };
        Ok(Self {
            params: *params,
            dt,
            scheme,
            euler_ops,
            bdf_ops,
            history: None,
        })
    }

    /// Advances one step; the first BDF2 step is an Euler step.
    pub fn step(&mut self, full: &FullField) -> Result<FullField> {
        check_resolution(full.n_theta, &self.params)?;
        let limit = oracle_cfl_limit(full, &self.params);
        if self.dt > limit {
            return Err(Error::Cfl {
                dt: self.dt,
                limit,
                mode: 0,
            });
        }
        let g = full.grid.clone();
        let adv = advection(full);
        let neg = |a: &Vec<ScalarField>| a.iter().map(|f| f.scaled(-1.0)).collect::<Vec<_>>();
        let nl = [neg(&adv[0]), neg(&adv[1]), neg(&adv[2])];
        let inv_dt = 1.0 / self.dt;
        let (rhs, use_bdf) = match (&self.history, self.scheme) {
            (Some((prev, nl_prev)), OracleScheme::Bdf2) => {
                let mut rhs = nl.clone();
                for c in 0..3 {
                    let (cur, old) = (full.velocity()[c], prev.velocity()[c]);
                    for l in 0..full.n_theta {
                        rhs[c][l].data.iter_mut().enumerate().for_each(|(i, v)| {
                            *v = 2.0 * *v - nl_prev[c][l].data[i]
                                + (4.0 * cur[l].data[i] - old[l].data[i]) * 0.5 * inv_dt;
                        });
                    }
                }
                (rhs, true)
            }
            _ => {
                let mut rhs = nl.clone();
                for c in 0..3 {
                    for l in 0..full.n_theta {
                        rhs[c][l].axpy(inv_dt, &full.velocity()[c][l]);
                    }
                }
                (rhs, false)
            }
        };
        let ops = if use_bdf {
            &self.bdf_ops
        } else {
            &self.euler_ops
        };
        let spec: Vec<_> = rhs.iter().map(|c| theta_spectrum(&g, c)).collect();
        let nq = full.n_theta / 2 + 1;
        let zero = (g.zeros(), g.zeros());
        let mut out_spec = vec![vec![zero.clone(); nq]; 4];
        for (n, op) in ops.iter().enumerate() {
            // (b̂^r, i b̂^θ, b̂^z) with real and imaginary parts solved separately.
            let re = [
                spec[0][n].0.clone(),
                spec[1][n].1.scaled(-1.0),
                spec[2][n].0.clone(),
            ];
            let im = [
                spec[0][n].1.clone(),
                spec[1][n].0.clone(),
                spec[2][n].1.clone(),
            ];
            let (wr, pr) = op.solve(&g, &re)?;
            let (wi, pi) = if n == 0 {
                ([g.zeros(), g.zeros(), g.zeros()], g.zeros())
            } else {
                op.solve(&g, &im)?
            };
            // û^θ = −i w^θ
            out_spec[0][n] = (wr[0].clone(), wi[0].clone());
            out_spec[1][n] = (wi[1].clone(), wr[1].scaled(-1.0));
            out_spec[2][n] = (wr[2].clone(), wi[2].clone());
            out_spec[3][n] = (pr, pi);
        }
        let mut next = FullField::zeros(g.clone(), full.n_theta)?;
        next.t = full.t + self.dt;
        next.ur = theta_synthesize(&g, &out_spec[0], full.n_theta);
        next.uth = theta_synthesize(&g, &out_spec[1], full.n_theta);
        next.uz = theta_synthesize(&g, &out_spec[2], full.n_theta);
        next.p = theta_synthesize(&g, &out_spec[3], full.n_theta);
        if !next
            .ur
            .iter()
            .chain(&next.uth)
            .chain(&next.uz)
            .all(|f| f.is_finite())
        {
            return Err(Error::NonFinite("oracle step".into()));
        }
        self.history = Some((full.clone(), nl));
        Ok(next)
    }
}

/// One implicit-explicit Euler step of the full system.
pub fn oracle_step(full: &FullField, params: &Params, dt: f64) -> Result<FullField> {
    Oracle::new(&full.grid, params, dt, OracleScheme::Euler)?.step(full)
}

/// Runs `n_steps` oracle steps from `full`.
pub fn oracle_evolve(
    full: &FullField,
    params: &Params,
    dt: f64,
    n_steps: usize,
    scheme: OracleScheme,
) -> Result<FullField> {
    let mut o = Oracle::new(&full.grid, params, dt, scheme)?;
    let mut f = full.clone();
    for _ in 0..n_steps {
        f = o.step(&f)?;
    }
    Ok(f)
}
