//! Mode-truncated velocity state, initial data and the binary checkpoint format.
//!
//! Mode `0` carries `(u^r_0, u^θ_0, u^z_0)`. Mode `k ≥ 1` carries the cosine family
//! `(u^r_k, v^θ_k, u^z_k)` followed by the sine family `(v^r_k, u^θ_k, v^z_k)`, so that
//! `u^r = Σ u^r_k cos(kNθ) + v^r_k sin(kNθ)` and likewise for the other components.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    barycentric_weights, build_grid, CylGrid, Parity, RadialScheme, ScalarField, THETA_MEASURE,
};

/// Component slots of a mode-`k ≥ 1` velocity.
pub mod slot {
    pub const UR: usize = 0;
    pub const VTH: usize = 1;
    pub const UZ: usize = 2;
    pub const VR: usize = 3;
    pub const UTH: usize = 4;
    pub const VZ: usize = 5;
    /// Mean-mode slots.
    pub const UR0: usize = 0;
    pub const UTH0: usize = 1;
    pub const UZ0: usize = 2;

    /// Whether the slot holds a `z` component.
    pub fn is_axial(s: usize) -> bool {
        s % 3 == 2
    }
}

/// Axis parity of a component with signed azimuthal wavenumber `m`.
pub fn component_parity(m: f64, axial: bool) -> Parity {
    let m = m.round() as i64;
    if axial {
        Parity::scalar(m)
    } else {
        Parity::velocity(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Vertical viscosity; `0` is the anisotropic system, `1` the isotropic one.
    pub nu: f64,
    /// Azimuthal symmetry order.
    #[serde(rename = "N")]
    pub n: usize,
    pub delta: f64,
    pub eta: f64,
    /// Mode truncation `K`.
    #[serde(rename = "K")]
    pub k_max: usize,
    pub m: usize,
    pub sigma: f64,
    pub small_eps: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            nu: 1.0,
            n: 8,
            delta: 0.0,
            eta: 0.25,
            k_max: 4,
            m: 3,
            sigma: 0.45,
            small_eps: 0.1,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return fail(format!("nu = {} must be >= 0", self.nu));
        }
        if self.n < 2 {
            return fail(format!("N = {} must be >= 2", self.n));
        }
        if !(0.0..0.25).contains(&self.delta) {
            return fail(format!("delta = {} outside [0, 1/4)", self.delta));
        }
        if !(self.eta >= 0.0 && self.eta < 0.5 - self.delta) {
            return fail(format!("eta = {} outside [0, 1/2 - delta)", self.eta));
        }
        if self.k_max < 2 {
            return fail(format!("K = {} must be >= 2", self.k_max));
        }
        if self.m < 3 {
            return fail(format!("m = {} must be >= 3", self.m));
        }
        let lo = 1.0 / (2.0 * self.m as f64 - 3.0);
        if !(self.sigma > lo && self.sigma < 0.5) {
            return fail(format!("sigma = {} outside ({lo}, 1/2)", self.sigma));
        }
        if !(self.small_eps > 0.0) {
            return fail(format!("small_eps = {} must be > 0", self.small_eps));
        }
        Ok(())
    }

    /// Effective azimuthal wavenumber of mode `k`.
    pub fn k_eff(&self, k: usize, conv: WavenumberConvention) -> f64 {
        match conv {
            WavenumberConvention::Scaled => (k * self.n) as f64,
            WavenumberConvention::Plain => k as f64,
        }
    }
}

/// Whether mode `k` carries azimuthal wavenumber `kN` (the solver) or `k` (linear checks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WavenumberConvention {
    Scaled,
    Plain,
}

/// The profile `α = (a^r, a^θ, a^z, b^r, b^θ, b^z)` of the mode-1 initial data.
///
/// `parity` is the axis parity of the `r` and `θ` components, which must be that of
/// azimuthal wavenumber `N` on parity-aware grids.
#[derive(Debug, Clone, PartialEq)]
pub struct InitProfile {
    pub parity: Parity,
    pub a_r: ScalarField,
    pub a_th: ScalarField,
    pub a_z: ScalarField,
    pub b_r: ScalarField,
    pub b_th: ScalarField,
    pub b_z: ScalarField,
}

impl InitProfile {
    pub fn components(&self) -> [&ScalarField; 6] {
        [
            &self.a_r, &self.a_th, &self.a_z, &self.b_r, &self.b_th, &self.b_z,
        ]
    }

    /// `‖∂_z^j α‖` on the cylinder (`2π` azimuthal factor included).
    pub fn dz_norm(&self, grid: &CylGrid, j: usize) -> f64 {
        self.components()
            .iter()
            .map(|c| {
                let d = grid.d_z_pow(c, j);
                THETA_MEASURE * grid.inner(&d, &d)
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Completes `(a^r, a^z, b^r, b^z)` with the azimuthal components that make the
/// mode-1 data divergence free for every `N`:
/// `b^θ = -r(∂_r a^r + a^r/r + ∂_z a^z)`, `a^θ = r(∂_r b^r + b^r/r + ∂_z b^z)`.
pub fn make_profile_divfree(
    grid: &CylGrid,
    parity: Parity,
    a_r: ScalarField,
    a_z: ScalarField,
    b_r: ScalarField,
    b_z: ScalarField,
) -> Result<InitProfile> {
    for f in [&a_r, &a_z, &b_r, &b_z] {
        grid.check(f)?;
        let last = f.row(grid.n_r - 1);
        let bmax = last.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if bmax > 1e-12 * f.max_abs().max(1.0) {
            return Err(Error::BoundaryViolation(bmax));
        }
    }
    let flux = |fr: &ScalarField, fz: &ScalarField, sign: f64| {
        let d = grid.d_r_unchecked(fr, parity);
        let dz = grid.d_z_unchecked(fz);
        let mut out = grid.zeros();
        for i in 0..grid.n_r {
            let r = grid.r[i];
            for j in 0..grid.n_z {
                let idx = i * grid.n_z + j;
                out.data[idx] = sign * r * (d.data[idx] + fr.data[idx] / r + dz.data[idx]);
            }
        }
        out
    };
    let b_th = flux(&a_r, &a_z, -1.0);
    let a_th = flux(&b_r, &b_z, 1.0);
    Ok(InitProfile {
        parity,
        a_r,
        a_th,
        a_z,
        b_r,
        b_th,
        b_z,
    })
}

/// Built-in profile: `r^p (1-r²)²` radial envelopes with first-harmonic `z` dependence.
/// All six components vanish at `r = 1`. An integer `p` of the right parity
/// (`p ≡ N - 1 mod 2`) gives a smooth field.
pub fn ring_profile(
    grid: &CylGrid,
    parity: Parity,
    amplitude: f64,
    power: f64,
) -> Result<InitProfile> {
    let kz = 2.0 * PI / grid.l_z;
    let env2 = move |r: f64| r.powf(power) * (1.0 - r * r) * (1.0 - r * r);
    let env1 = move |r: f64| r.powf(power + 1.0) * (1.0 - r * r);
    let a_r = ScalarField::from_fn(grid, |r, z| amplitude * env2(r) * (kz * z).cos());
    let a_z = ScalarField::from_fn(grid, |r, z| 0.5 * amplitude * env1(r) * (kz * z).sin());
    let b_r = ScalarField::from_fn(grid, |r, z| 0.7 * amplitude * env2(r) * (kz * z).sin());
    let b_z = ScalarField::from_fn(grid, |r, z| -0.3 * amplitude * env1(r) * (kz * z).cos());
    let mut p = make_profile_divfree(grid, parity, a_r, a_z, b_r, b_z)?;
    // The envelopes have a double root at r = 1, so the derived components vanish there
    // up to differentiation round-off.
    for f in [&mut p.a_th, &mut p.b_th] {
        for j in 0..grid.n_z {
            f.set(grid.n_r - 1, j, 0.0);
        }
    }
    Ok(p)
}

/// Velocity coefficients of one azimuthal mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeVelocity {
    pub k: usize,
    /// Three fields for `k = 0`, six for `k ≥ 1` (see [`slot`]).
    pub fields: Vec<ScalarField>,
}

impl ModeVelocity {
    pub fn zeros(grid: &CylGrid, k: usize) -> Self {
        let n = if k == 0 { 3 } else { 6 };
        Self {
            k,
            fields: vec![grid.zeros(); n],
        }
    }

    /// Families as `(sign of the azimuthal wavenumber, (r, θ, z) fields)`.
    pub fn families(&self) -> impl Iterator<Item = (f64, &[ScalarField])> {
        self.fields.chunks(3).zip([1.0, -1.0]).map(|(c, s)| (s, c))
    }

    /// `Σ_c ∫∫ c² r dr dz` over the components (no azimuthal factor).
    pub fn sum_sq(&self, grid: &CylGrid) -> f64 {
        self.fields.iter().map(|f| grid.inner(f, f)).sum()
    }

    /// `‖u_k‖²` in the cylinder convention used by the energy functionals:
    /// each axisymmetric coefficient field carries the `2π` azimuthal measure.
    pub fn norm_sq(&self, grid: &CylGrid) -> f64 {
        THETA_MEASURE * self.sum_sq(grid)
    }

    pub fn axpy(&mut self, a: f64, x: &ModeVelocity) {
        for (f, g) in self.fields.iter_mut().zip(&x.fields) {
            f.axpy(a, g);
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            k: self.k,
            fields: self.fields.iter().map(|f| f.scaled(a)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.fields.iter().all(|f| f.is_finite())
    }
}

/// Pressure coefficients: `P_0`, or `(P_k, Q_k)` for `k ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePressure {
    pub fields: Vec<ScalarField>,
}

impl ModePressure {
    pub fn zeros(grid: &CylGrid, k: usize) -> Self {
        Self {
            fields: vec![grid.zeros(); if k == 0 { 1 } else { 2 }],
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModeState {
    pub t: f64,
    pub params: Params,
    pub grid: Arc<CylGrid>,
    pub modes: Vec<ModeVelocity>,
    pub pressure: Vec<ModePressure>,
}

impl ModeState {
    pub fn zeros(grid: Arc<CylGrid>, params: Params) -> Self {
        let modes = (0..=params.k_max)
            .map(|k| ModeVelocity::zeros(&grid, k))
            .collect();
        let pressure = (0..=params.k_max)
            .map(|k| ModePressure::zeros(&grid, k))
            .collect();
        Self {
            t: 0.0,
            params,
            grid,
            modes,
            pressure,
        }
    }

    pub fn k_max(&self) -> usize {
        self.modes.len() - 1
    }

    /// `L²(Ω)` norm squared of the reconstructed three-dimensional field.
    pub fn physical_norm_sq(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let s = m.sum_sq(&self.grid);
                if m.k == 0 {
                    THETA_MEASURE * s
                } else {
                    PI * s
                }
            })
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.modes.iter().all(|m| m.is_finite())
    }
}

/// Initial state: mode 1 set from `α`, every other mode zero.
pub fn make_initial_state(
    profile: &InitProfile,
    params: &Params,
    grid: Arc<CylGrid>,
) -> Result<ModeState> {
    params.validate()?;
    for f in profile.components() {
        grid.check(f)?;
    }
    if grid.uses_parity() && profile.parity != Parity::velocity(params.n as i64) {
        return Err(Error::InvalidParams(format!(
            "profile parity {:?} does not match N = {}",
            profile.parity, params.n
        )));
    }
    let n = params.n as f64;
    let amp = n.powf(params.delta);
    let mut state = ModeState::zeros(grid, *params);
    let m1 = &mut state.modes[1];
    m1.fields[slot::UR] = profile.a_r.scaled(amp);
    m1.fields[slot::VTH] = profile.b_th.scaled(amp / n);
    m1.fields[slot::UZ] = profile.a_z.scaled(amp);
    m1.fields[slot::VR] = profile.b_r.scaled(amp);
    m1.fields[slot::UTH] = profile.a_th.scaled(amp / n);
    m1.fields[slot::VZ] = profile.b_z.scaled(amp);
    Ok(state)
}

/// Divergence of one family with signed azimuthal wavenumber `m`:
/// `∂_r w^r + w^r/r + ∂_z w^z + m w^θ/r`.
pub fn family_divergence(grid: &CylGrid, fam: &[ScalarField], m: f64) -> ScalarField {
    let dr = grid.d_r_unchecked(&fam[0], component_parity(m, false));
    let dz = grid.d_z_unchecked(&fam[2]);
    let mut out = grid.zeros();
    for i in 0..grid.n_r {
        let inv_r = 1.0 / grid.r[i];
        for j in 0..grid.n_z {
            let idx = i * grid.n_z + j;
            out.data[idx] = dr.data[idx]
                + fam[0].data[idx] * inv_r
                + dz.data[idx]
                + m * fam[1].data[idx] * inv_r;
        }
    }
    out
}

/// Per-mode divergence residual: `L²` norm of the divergence expressions divided by the
/// mode's `H¹` magnitude `(‖u‖² + ‖∇̃u‖² + (kN)²‖u/r‖²)^{1/2}`.
pub fn divergence_residual(state: &ModeState) -> Vec<f64> {
    let g = &state.grid;
    state
        .modes
        .iter()
        .map(|mode| {
            let keff = state.params.k_eff(mode.k, WavenumberConvention::Scaled);
            let mut num = 0.0;
            for (s, fam) in mode.families() {
                let d = family_divergence(g, fam, s * keff);
                num += g.inner(&d, &d);
            }
            let mut den = 0.0;
            for (i, f) in mode.fields.iter().enumerate() {
                let dr = g.d_r_unchecked(f, component_parity(keff, slot::is_axial(i)));
                let dz = g.d_z_unchecked(f);
                den += g.inner(f, f)
                    + g.inner(&dr, &dr)
                    + g.inner(&dz, &dz)
                    + (keff * keff + 1.0) * g.inner_over_r2(f, f);
            }
            if den == 0.0 {
                0.0
            } else {
                (num / den).sqrt()
            }
        })
        .collect()
}

/// Radial interpolation weights at `r` over the grid nodes.
fn radial_weights(grid: &CylGrid, r: f64, parity: Parity) -> Vec<f64> {
    let n = grid.n_r;
    let mut w = vec![0.0; n];
    if let Some(i) = grid.r.iter().position(|&x| x == r) {
        w[i] = 1.0;
        return w;
    }
    let barycentric = |x: &[f64], at: f64| -> Vec<f64> {
        let lam = barycentric_weights(x);
        let terms: Vec<f64> = (0..x.len()).map(|j| lam[j] / (at - x[j])).collect();
        let s: f64 = terms.iter().sum();
        terms.into_iter().map(|t| t / s).collect()
    };
    match grid.scheme {
        RadialScheme::GaussRadauParity => {
            let s: Vec<f64> = grid.r.iter().map(|x| x * x).collect();
            w = barycentric(&s, r * r);
            if parity == Parity::Odd {
                for j in 0..n {
                    w[j] *= r / grid.r[j];
                }
            }
        }
        RadialScheme::ChebyshevGaussLobattoMapped => {
            w = barycentric(&grid.r, r);
        }
        RadialScheme::UniformFd2 => {
            let i = grid.r.partition_point(|&x| x < r).clamp(1, n - 1);
            let (r0, r1) = (grid.r[i - 1], grid.r[i]);
            let t = (r - r0) / (r1 - r0);
            w[i - 1] = 1.0 - t;
            w[i] = t;
        }
    }
    w
}

/// Evaluates the velocity `(u^r, u^θ, u^z)` at an arbitrary point of the cylinder.
pub fn reconstruct_point(state: &ModeState, r: f64, theta: f64, z: f64) -> Result<[f64; 3]> {
    if !(r > 0.0 && r <= 1.0) || !theta.is_finite() || !z.is_finite() {
        return Err(Error::OutOfDomain(format!(
            "(r, θ, z) = ({r}, {theta}, {z})"
        )));
    }
    let g = &state.grid;
    let w_odd = radial_weights(g, r, Parity::Odd);
    let w_even = radial_weights(g, r, Parity::Even);
    let nz = g.n_z;
    let nq = nz / 2 + 1;
    let eval_z = |f: &ScalarField, p: Parity| -> f64 {
        let wr = if p == Parity::Odd { &w_odd } else { &w_even };
        let col: Vec<f64> = (0..nz)
            .map(|j| (0..g.n_r).map(|i| wr[i] * f.at(i, j)).sum())
            .collect();
        let line = ScalarField {
            n_r: 1,
            n_z: nz,
            data: col,
        };
        let spec = z_spectrum_row(g, &line);
        let mut v = spec[0].re;
        for q in 1..nq {
            let ph = g.beta(q) * z;
            let c = spec[q];
            let term = c.re * ph.cos() - c.im * ph.sin();
            v += if q == nz / 2 { term } else { 2.0 * term };
        }
        v
    };
    let mut out = [0.0; 3];
    let phi = state.params.n as f64 * theta;
    for mode in &state.modes {
        let m = (mode.k * state.params.n) as f64;
        let (pv, pz) = (component_parity(m, false), component_parity(m, true));
        if mode.k == 0 {
            out[0] += eval_z(&mode.fields[slot::UR0], pv);
            out[1] += eval_z(&mode.fields[slot::UTH0], pv);
            out[2] += eval_z(&mode.fields[slot::UZ0], pz);
        } else {
            let f = &mode.fields;
            let (cs, sn) = ((mode.k as f64 * phi).cos(), (mode.k as f64 * phi).sin());
            out[0] += cs * eval_z(&f[slot::UR], pv) + sn * eval_z(&f[slot::VR], pv);
            out[1] += cs * eval_z(&f[slot::UTH], pv) + sn * eval_z(&f[slot::VTH], pv);
            out[2] += cs * eval_z(&f[slot::UZ], pz) + sn * eval_z(&f[slot::VZ], pz);
        }
    }
    Ok(out)
}

fn z_spectrum_row(g: &CylGrid, line: &ScalarField) -> Vec<num_complex::Complex64> {
    use num_complex::Complex64;
    let nz = g.n_z;
    (0..=nz / 2)
        .map(|q| {
            let b = 2.0 * PI * q as f64 / nz as f64;
            let s: Complex64 = line
                .data
                .iter()
                .enumerate()
                .map(|(j, v)| Complex64::from_polar(*v, -b * j as f64))
                .sum();
            s / nz as f64
        })
        .collect()
}

const MAGIC: &[u8; 8] = b"CYLMODE1";

/// Writes the state in the little-endian checkpoint layout: magic, `n_r, n_z, K, N` as
/// `u32`, `L_z, t, nu, delta, eta` as `f64`, then every mode's fields in slot order.
pub fn write_checkpoint(state: &ModeState, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    encode_checkpoint(state, &mut buf)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &buf)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn encode_checkpoint(state: &ModeState, out: &mut impl Write) -> Result<()> {
    let g = &state.grid;
    let p = &state.params;
    out.write_all(MAGIC)?;
    for v in [g.n_r, g.n_z, state.k_max(), p.n] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    for v in [g.l_z, state.t, p.nu, p.delta, p.eta] {
        out.write_all(&v.to_le_bytes())?;
    }
    for mode in &state.modes {
        for f in &mode.fields {
            for v in &f.data {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads a checkpoint. `base` supplies the parameters that are not stored in the file.
pub fn read_checkpoint(path: &Path, scheme: RadialScheme, base: &Params) -> Result<ModeState> {
    let mut file = std::fs::File::open(path)?;
    decode_checkpoint(&mut file, scheme, base)
}

pub fn decode_checkpoint(
    input: &mut impl Read,
    scheme: RadialScheme,
    base: &Params,
) -> Result<ModeState> {
    let short = |e: std::io::Error| Error::Checkpoint(format!("truncated: {e}"));
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(short)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut u = [0usize; 4];
    for v in u.iter_mut() {
        let mut b = [0u8; 4];
        input.read_exact(&mut b).map_err(short)?;
        *v = u32::from_le_bytes(b) as usize;
    }
    let mut f = [0f64; 5];
    for v in f.iter_mut() {
        let mut b = [0u8; 8];
        input.read_exact(&mut b).map_err(short)?;
        *v = f64::from_le_bytes(b);
    }
    let [n_r, n_z, k_max, n] = u;
    let [l_z, t, nu, delta, eta] = f;
    let grid = Arc::new(build_grid(n_r, n_z, l_z, scheme)?);
    let params = Params {
        nu,
        n,
        delta,
        eta,
        k_max,
        ..*base
    };
    let mut state = ModeState::zeros(grid, params);
    state.t = t;
    let mut b = [0u8; 8];
    for mode in state.modes.iter_mut() {
        for fld in mode.fields.iter_mut() {
            for v in fld.data.iter_mut() {
                input.read_exact(&mut b).map_err(short)?;
                *v = f64::from_le_bytes(b);
            }
        }
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n_r: usize, n_z: usize) -> Arc<CylGrid> {
        Arc::new(build_grid(n_r, n_z, 2.0 * PI, RadialScheme::GaussRadauParity).unwrap())
    }

    fn cgl(n_r: usize, n_z: usize) -> Arc<CylGrid> {
        Arc::new(
            build_grid(
                n_r,
                n_z,
                2.0 * PI,
                RadialScheme::ChebyshevGaussLobattoMapped,
            )
            .unwrap(),
        )
    }

    #[test]
    fn divfree_completion_examples() {
        for g in [grid(12, 8), cgl(20, 8)] {
            divfree_examples_on(&g);
        }
    }

    fn divfree_examples_on(g: &CylGrid) {
        let g = g.clone();
        let zero = g.zeros();
        let a_r = ScalarField::from_fn(&g, |r, z| r * (1.0 - r * r) * z.sin());
        let p = make_profile_divfree(
            &g,
            Parity::Odd,
            a_r,
            zero.clone(),
            zero.clone(),
            zero.clone(),
        )
        .unwrap();
        for i in 0..g.n_r {
            for j in 0..g.n_z {
                let (r, z) = (g.r[i], g.z[j]);
                assert!((p.b_th.at(i, j) + r * (2.0 - 4.0 * r * r) * z.sin()).abs() < 1e-10);
                assert!(p.a_th.at(i, j).abs() < 1e-14);
            }
        }
        let a_z = ScalarField::from_fn(&g, |r, z| (1.0 - r * r) * z.cos());
        let p =
            make_profile_divfree(&g, Parity::Odd, zero.clone(), a_z, zero.clone(), zero).unwrap();
        for i in 0..g.n_r {
            for j in 0..g.n_z {
                let (r, z) = (g.r[i], g.z[j]);
                assert!((p.b_th.at(i, j) - r * (1.0 - r * r) * z.sin()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn boundary_violation_detected() {
        let g = grid(10, 8);
        let bad = ScalarField::from_fn(&g, |r, _| r);
        let z = g.zeros();
        assert!(matches!(
            make_profile_divfree(&g, Parity::Odd, bad, z.clone(), z.clone(), z),
            Err(Error::BoundaryViolation(_))
        ));
    }

    #[test]
    fn initial_state_scaling() {
        let g = grid(16, 8);
        let params = Params {
            n: 8,
            delta: 0.0,
            ..Params::default()
        };
        let prof = ring_profile(&g, Parity::Odd, 1.0, 1.0).unwrap();
        let s = make_initial_state(&prof, &params, g.clone()).unwrap();
        let wrong = ring_profile(&g, Parity::Even, 1.0, 2.0).unwrap();
        assert!(make_initial_state(&wrong, &params, g.clone()).is_err());
        assert_eq!(s.modes[1].fields[slot::VTH], prof.b_th.scaled(1.0 / 8.0));
        assert_eq!(s.modes[1].fields[slot::UR], prof.a_r);
        assert_eq!(s.modes[0].fields[0].max_abs(), 0.0);
        let res = divergence_residual(&s);
        assert!(res.iter().all(|&r| r < 1e-10), "{res:?}");
    }

    #[test]
    fn reconstruct_matches_nodes_and_modes() {
        let g = grid(12, 8);
        let params = Params {
            n: 3,
            ..Params::default()
        };
        let prof = ring_profile(&g, Parity::Even, 1.0, 2.0).unwrap();
        let s = make_initial_state(&prof, &params, g.clone()).unwrap();
        let (i, j, th) = (5, 3, 0.4);
        let v = reconstruct_point(&s, g.r[i], th, g.z[j]).unwrap();
        let m = &s.modes[1];
        let (c, sn) = ((3.0 * th).cos(), (3.0 * th).sin());
        let ur = c * m.fields[slot::UR].at(i, j) + sn * m.fields[slot::VR].at(i, j);
        let uth = c * m.fields[slot::UTH].at(i, j) + sn * m.fields[slot::VTH].at(i, j);
        assert!((v[0] - ur).abs() < 1e-12);
        assert!((v[1] - uth).abs() < 1e-12);
        // Off-node evaluation of a resolved polynomial-trigonometric profile.
        let r0 = 0.37;
        let v = reconstruct_point(&s, r0, 0.0, 1.1).unwrap();
        let exact = r0 * r0 * (1.0 - r0 * r0).powi(2) * 1.1f64.cos();
        assert!((v[0] - exact).abs() < 1e-10);
        assert!(reconstruct_point(&s, 1.2, 0.0, 0.0).is_err());
        assert!(reconstruct_point(&s, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_and_layout() {
        let g = grid(6, 4);
        let params = Params {
            k_max: 2,
            n: 5,
            ..Params::default()
        };
        let prof = ring_profile(&g, Parity::Even, 0.3, 0.0).unwrap();
        let mut s = make_initial_state(&prof, &params, g.clone()).unwrap();
        s.t = 0.125;
        let mut buf = Vec::new();
        encode_checkpoint(&s, &mut buf).unwrap();
        assert_eq!(&buf[..8], b"CYLMODE1");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 6);
        assert_eq!(u32::from_le_bytes(buf[20..24].try_into().unwrap()), 5);
        assert_eq!(f64::from_le_bytes(buf[32..40].try_into().unwrap()), 0.125);
        assert_eq!(buf.len(), 8 + 16 + 40 + 8 * 6 * 4 * (3 + 6 + 6));
        let back = decode_checkpoint(&mut buf.as_slice(), g.scheme, &params).unwrap();
        assert_eq!(back.t, s.t);
        assert_eq!(back.modes, s.modes);
        let mut bad = buf.clone();
        bad.truncate(buf.len() - 3);
        assert!(decode_checkpoint(&mut bad.as_slice(), g.scheme, &params).is_err());
        bad = buf.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&mut bad.as_slice(), g.scheme, &params).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(Params::default().validate().is_ok());
        for p in [
            Params {
                n: 1,
                ..Params::default()
            },
            Params {
                delta: 0.25,
                ..Params::default()
            },
            Params {
                eta: 0.5,
                ..Params::default()
            },
            Params {
                k_max: 1,
                ..Params::default()
            },
            Params {
                m: 2,
                ..Params::default()
            },
            Params {
                sigma: 0.3,
                m: 3,
                ..Params::default()
            },
        ] {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }
}
