//! Quadratic couplings of the mode system: mean-mode sources, the linear terms driven by
//! `u_0`, the material transport by `(u^r_0, u^z_0)` and the triad convolutions `F_k`, `G_k`.
//!
//! Everything is evaluated pointwise on the meridional grid from the fields and their
//! `∂_r`, `∂_z` derivatives. A triad `(k₁, k₂)` is kept iff both indices are in `1..=K`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{CylGrid, Parity, ScalarField, THETA_MEASURE};
use crate::state::{component_parity, slot, ModeState, ModeVelocity};
use crate::stokes::dissipation;

use slot::{UR, UR0, UTH, UTH0, UZ, UZ0, VR, VTH, VZ};

/// Fields of one mode together with their meridional derivatives.
#[derive(Debug, Clone)]
pub struct ModeJet {
    pub k: usize,
    pub v: Vec<ScalarField>,
    pub dr: Vec<ScalarField>,
    pub dz: Vec<ScalarField>,
}

impl ModeJet {
    pub fn new(grid: &CylGrid, w: &ModeVelocity, k_eff: f64) -> Self {
        let dr = w
            .fields
            .iter()
            .enumerate()
            .map(|(s, f)| grid.d_r_unchecked(f, component_parity(k_eff, slot::is_axial(s))))
            .collect();
        let dz = w.fields.iter().map(|f| grid.d_z_unchecked(f)).collect();
        Self {
            k: w.k,
            v: w.fields.clone(),
            dr,
            dz,
        }
    }

    fn at(&self, idx: usize) -> Pt {
        let mut p = Pt::default();
        for s in 0..self.v.len() {
            p.v[s] = self.v[s].data[idx];
            p.dr[s] = self.dr[s].data[idx];
            p.dz[s] = self.dz[s].data[idx];
        }
        p
    }
}

/// Jets of every mode of the state.
pub fn mode_jets(state: &ModeState) -> Vec<ModeJet> {
    let n = state.params.n;
    state
        .modes
        .par_iter()
        .map(|m| ModeJet::new(&state.grid, m, (m.k * n) as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
struct Pt {
    v: [f64; 6],
    dr: [f64; 6],
    dz: [f64; 6],
}

impl Pt {
    /// `ũ·∇̃ b_s`
    fn ug(&self, b: &Pt, s: usize) -> f64 {
        self.v[UR] * b.dr[s] + self.v[UZ] * b.dz[s]
    }

    /// `ṽ·∇̃ b_s`
    fn vg(&self, b: &Pt, s: usize) -> f64 {
        self.v[VR] * b.dr[s] + self.v[VZ] * b.dz[s]
    }
}

/// `u^r_0 ∂_r g + u^z_0 ∂_z g` for a field `g` of the given axis parity.
pub fn d0_transport(
    grid: &CylGrid,
    u0: &ModeVelocity,
    g: &ScalarField,
    parity: Parity,
) -> ScalarField {
    let dr = grid.d_r_unchecked(g, parity);
    let dz = grid.d_z_unchecked(g);
    let mut out = grid.zeros();
    for idx in 0..out.data.len() {
        out.data[idx] =
            u0.fields[UR0].data[idx] * dr.data[idx] + u0.fields[UZ0].data[idx] * dz.data[idx];
    }
    out
}

/// Contribution of the ordered pair `(a, b) = (u_{k₁}, u_{k₂})` to `(F_k, G_k)`.
///
/// `sgn = 0` for `k₁ + k₂ = k`, `+1` for `k₁ − k₂ = k`, `−1` for `k₂ − k₁ = k`.
fn triad_point(a: &Pt, b: &Pt, c: f64, ir: f64, sgn: f64, out: &mut [f64; 6]) {
    let au = |s| a.ug(b, s);
    let av = |s| a.vg(b, s);
    let (a_ur, a_vth, a_vr, a_uth) = (a.v[UR], a.v[VTH], a.v[VR], a.v[UTH]);
    let b_ = &b.v;
    if sgn == 0.0 {
        out[UR] -= 0.5
            * (au(UR) - av(VR) + c * (a_uth * b_[VR] + a_vth * b_[UR])
                - ir * (a_uth * b_[UTH] - a_vth * b_[VTH]));
        out[VTH] -= 0.5
            * (au(VTH)
                + av(UTH)
                + c * (a_vth * b_[VTH] - a_uth * b_[UTH])
                + ir * (a_ur * b_[VTH] + a_vr * b_[UTH]));
        out[UZ] -= 0.5 * (au(UZ) - av(VZ) + c * (a_uth * b_[VZ] + a_vth * b_[UZ]));
        out[VR] -= 0.5
            * (au(VR) + av(UR) + c * (a_vth * b_[VR] - a_uth * b_[UR])
                - ir * (a_uth * b_[VTH] + a_vth * b_[UTH]));
        out[UTH] -= 0.5
            * (au(UTH) - av(VTH)
                + c * (a_uth * b_[VTH] + a_vth * b_[UTH])
                + ir * (a_ur * b_[UTH] - a_vr * b_[VTH]));
        out[VZ] -= 0.5 * (au(VZ) + av(UZ) + c * (a_vth * b_[VZ] - a_uth * b_[UZ]));
    } else {
        out[UR] -= 0.5
            * (au(UR) + av(VR) + c * (a_uth * b_[VR] - a_vth * b_[UR])
                - ir * (a_uth * b_[UTH] + a_vth * b_[VTH]));
        out[VTH] += 0.5
            * sgn
            * (au(VTH) - av(UTH) - c * (a_uth * b_[UTH] + a_vth * b_[VTH])
                + ir * (a_ur * b_[VTH] - a_vr * b_[UTH]));
        out[UZ] -= 0.5 * (au(UZ) + av(VZ) + c * (a_uth * b_[VZ] - a_vth * b_[UZ]));
        out[VR] += 0.5
            * sgn
            * (au(VR)
                - av(UR)
                - c * (a_uth * b_[UR] + a_vth * b_[VR])
                - ir * (a_uth * b_[VTH] - a_vth * b_[UTH]));
        out[UTH] -= 0.5
            * (au(UTH)
                + av(VTH)
                + c * (a_uth * b_[VTH] - a_vth * b_[UTH])
                + ir * (a_ur * b_[UTH] + a_vr * b_[VTH]));
        out[VZ] += 0.5 * sgn * (au(VZ) - av(UZ) - c * (a_uth * b_[UZ] + a_vth * b_[VZ]));
    }
}

/// Ordered pairs `(k₁, k₂, sgn)` feeding mode `k` under truncation `K`.
pub fn admissible_triads(k: usize, k_max: usize) -> Vec<(usize, usize, f64)> {
    let mut out = vec![];
    for k1 in 1..=k_max {
        for k2 in 1..=k_max {
            if k1 + k2 == k {
                out.push((k1, k2, 0.0));
            }
            if k1 == k2 + k {
                out.push((k1, k2, 1.0));
            }
            if k2 == k1 + k {
                out.push((k1, k2, -1.0));
            }
        }
    }
    out
}

fn triad_force_from_jets(grid: &CylGrid, jets: &[ModeJet], k: usize, n: usize) -> ModeVelocity {
    let k_max = jets.len() - 1;
    let triads: Vec<_> = admissible_triads(k, k_max)
        .into_iter()
        .filter(|&(k1, k2, _)| {
            jets[k1].v.iter().any(|f| f.max_abs() > 0.0)
                && jets[k2].v.iter().any(|f| f.max_abs() > 0.0)
        })
        .collect();
    let mut out = ModeVelocity::zeros(grid, k);
    if triads.is_empty() {
        return out;
    }
    let nz = grid.n_z;
    for idx in 0..grid.n_r * nz {
        let ir = 1.0 / grid.r[idx / nz];
        let mut acc = [0.0; 6];
        for &(k1, k2, sgn) in &triads {
            let c = (k2 * n) as f64 * ir;
            triad_point(&jets[k1].at(idx), &jets[k2].at(idx), c, ir, sgn, &mut acc);
        }
        for s in 0..6 {
            out.fields[s].data[idx] = acc[s];
        }
    }
    out
}

/// `(F_k, G_k)` in the slot layout of a mode-`k` velocity.
pub fn compute_triad_force(state: &ModeState, k: usize) -> Result<ModeVelocity> {
    let k_max = state.k_max();
    if k == 0 || k > k_max {
        return Err(Error::ModeOutOfRange { k, k_max });
    }
    let jets = mode_jets(state);
    Ok(triad_force_from_jets(&state.grid, &jets, k, state.params.n))
}

/// Triad forces of every mode together with the mean-mode source.
#[derive(Debug, Clone)]
pub struct TriadForce {
    /// `(S^r_0, S^θ_0, S^z_0)`
    pub mean: ModeVelocity,
    /// `(F_k, G_k)` for `k = 1..=K`, stored at index `k − 1`.
    pub modes: Vec<ModeVelocity>,
}

pub fn triad_forces(state: &ModeState) -> TriadForce {
    let jets = mode_jets(state);
    triad_forces_from_jets(state, &jets)
}

fn triad_forces_from_jets(state: &ModeState, jets: &[ModeJet]) -> TriadForce {
    let g = &state.grid;
    let modes = (1..=state.k_max())
        .into_par_iter()
        .map(|k| triad_force_from_jets(g, jets, k, state.params.n))
        .collect();
    TriadForce {
        mean: mean_source_from_jets(g, jets, state.params.n),
        modes,
    }
}

fn mean_source_from_jets(grid: &CylGrid, jets: &[ModeJet], n: usize) -> ModeVelocity {
    let mut out = ModeVelocity::zeros(grid, 0);
    let nz = grid.n_z;
    let u0 = &jets[0];
    for idx in 0..grid.n_r * nz {
        let ir = 1.0 / grid.r[idx / nz];
        let (ur0, uth0) = (u0.v[UR0].data[idx], u0.v[UTH0].data[idx]);
        let mut s = [uth0 * uth0 * ir, -uth0 * ur0 * ir, 0.0];
        for j in &jets[1..] {
            let a = j.at(idx);
            let c = (j.k * n) as f64 * ir;
            let v = &a.v;
            s[0] -= 0.5
                * (a.ug(&a, UR) + a.vg(&a, VR) + c * (v[UTH] * v[VR] - v[VTH] * v[UR])
                    - (v[UTH] * v[UTH] + v[VTH] * v[VTH]) * ir);
            s[1] -= 0.5 * (a.ug(&a, UTH) + a.vg(&a, VTH) + ir * (v[UR] * v[UTH] + v[VR] * v[VTH]));
            s[2] -= 0.5 * (a.ug(&a, UZ) + a.vg(&a, VZ) + c * (v[UTH] * v[VZ] - v[VTH] * v[UZ]));
        }
        for c in 0..3 {
            out.fields[c].data[idx] = s[c];
        }
    }
    out
}

/// Right side of the mean-mode momentum equations without transport, pressure and
/// diffusion: centrifugal and Coriolis terms of `u_0` plus the `k`-sums up to `K`.
pub fn compute_mean_source(state: &ModeState) -> ModeVelocity {
    let jets = mode_jets(state);
    mean_source_from_jets(&state.grid, &jets, state.params.n)
}

fn u0_coupling_from_jets(grid: &CylGrid, u0: &ModeJet, jk: &ModeJet, n: usize) -> ModeVelocity {
    let mut out = ModeVelocity::zeros(grid, jk.k);
    let nz = grid.n_z;
    let kn = (jk.k * n) as f64;
    for idx in 0..grid.n_r * nz {
        let ir = 1.0 / grid.r[idx / nz];
        let (ur0, uth0) = (u0.v[UR0].data[idx], u0.v[UTH0].data[idx]);
        let g0 = |s: usize, comp: usize| {
            // ũ_k·∇̃ (u_0)_comp when s = UR, ṽ_k·∇̃ when s = VR
            let (rr, zz) = if s == UR { (UR, UZ) } else { (VR, VZ) };
            jk.v[rr].data[idx] * u0.dr[comp].data[idx] + jk.v[zz].data[idx] * u0.dz[comp].data[idx]
        };
        let w = |s: usize| jk.v[s].data[idx];
        let c = kn * ir;
        let vals = [
            -g0(UR, UR0) - c * uth0 * w(VR) + 2.0 * ir * uth0 * w(UTH),
            -g0(VR, UTH0) + c * uth0 * w(UTH) - ir * (ur0 * w(VTH) + uth0 * w(VR)),
            -g0(UR, UZ0) - c * uth0 * w(VZ),
            -g0(VR, UR0) + c * uth0 * w(UR) + 2.0 * ir * uth0 * w(VTH),
            -g0(UR, UTH0) - c * uth0 * w(VTH) - ir * (ur0 * w(UTH) + uth0 * w(UR)),
            -g0(VR, UZ0) + c * uth0 * w(UZ),
        ];
        for s in 0..6 {
            out.fields[s].data[idx] = vals[s];
        }
    }
    out
}

/// Terms of the mode-`k` equations that are linear in `u_k` and driven by `u_0`,
/// excluding the transport `u^r_0 ∂_r + u^z_0 ∂_z`.
pub fn compute_u0_coupling(state: &ModeState, k: usize) -> Result<ModeVelocity> {
    let k_max = state.k_max();
    if k == 0 || k > k_max {
        return Err(Error::ModeOutOfRange { k, k_max });
    }
    let g = &state.grid;
    let n = state.params.n;
    let u0 = ModeJet::new(g, &state.modes[0], 0.0);
    let jk = ModeJet::new(g, &state.modes[k], (k * n) as f64);
    Ok(u0_coupling_from_jets(g, &u0, &jk, n))
}

fn transport_from_jets(grid: &CylGrid, u0: &ModeJet, j: &ModeJet) -> ModeVelocity {
    let mut out = ModeVelocity::zeros(grid, j.k);
    for (s, f) in out.fields.iter_mut().enumerate() {
        for idx in 0..f.data.len() {
            f.data[idx] =
                u0.v[UR0].data[idx] * j.dr[s].data[idx] + u0.v[UZ0].data[idx] * j.dz[s].data[idx];
        }
    }
    out
}

/// Complete explicit right side of every mode equation: `−D_0 u_k` transport plus the
/// `u_0` couplings and triad forces (`k ≥ 1`), or `−D_0 u_0` plus the mean source.
/// The result is filtered by [`CylGrid::z_dealias`].
pub fn nonlinear_rhs(state: &ModeState) -> Vec<ModeVelocity> {
    let g = &state.grid;
    nonlinear_rhs_raw(state)
        .into_par_iter()
        .map(|mut m| {
            for f in m.fields.iter_mut() {
                *f = g.z_dealias(f);
            }
            m
        })
        .collect()
}

/// [`nonlinear_rhs`] without the `z` filter.
pub fn nonlinear_rhs_raw(state: &ModeState) -> Vec<ModeVelocity> {
    let g = &state.grid;
    let jets = mode_jets(state);
    let tf = triad_forces_from_jets(state, &jets);
    let n = state.params.n;
    let mut out = Vec::with_capacity(jets.len());
    let mut mean = tf.mean;
    mean.axpy(-1.0, &transport_from_jets(g, &jets[0], &jets[0]));
    out.push(mean);
    let rest: Vec<ModeVelocity> = tf
        .modes
        .into_par_iter()
        .enumerate()
        .map(|(i, mut f)| {
            let jk = &jets[i + 1];
            f.axpy(1.0, &u0_coupling_from_jets(g, &jets[0], jk, n));
            f.axpy(-1.0, &transport_from_jets(g, &jets[0], jk));
            f
        })
        .collect();
    out.extend(rest);
    out
}

fn mode_measure(k: usize) -> f64 {
    if k == 0 {
        THETA_MEASURE
    } else {
        std::f64::consts::PI
    }
}

/// Physical `‖∇u‖²` of the reconstructed field.
pub fn physical_gradient_sq(state: &ModeState) -> f64 {
    let n = state.params.n;
    state
        .modes
        .iter()
        .map(|m| mode_measure(m.k) * dissipation(&state.grid, m, (m.k * n) as f64).total(1.0))
        .sum()
}

/// Total quadratic energy flux `∫ (u·∇)u·u` of the truncated system, normalised by
/// `‖u‖² ‖∇u‖`. Zero in the continuum for divergence-free fields.
pub fn flux_identity_residual(state: &ModeState) -> f64 {
    let g = &state.grid;
    let rhs = nonlinear_rhs(state);
    let t: f64 = rhs
        .iter()
        .zip(&state.modes)
        .map(|(f, u)| {
            mode_measure(u.k)
                * f.fields
                    .iter()
                    .zip(&u.fields)
                    .map(|(a, b)| g.inner(a, b))
                    .sum::<f64>()
        })
        .sum();
    let e = state.physical_norm_sq();
    let d = physical_gradient_sq(state).sqrt();
    if e == 0.0 || d == 0.0 {
        0.0
    } else {
        t.abs() / (e * d)
    }
}

/// Both sides of the triad bound for mode `k`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TriadBound {
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
}

impl TriadBound {
    pub fn ratio(&self) -> f64 {
        if self.rhs > 0.0 {
            self.lhs / self.rhs
        } else {
            0.0
        }
    }
}

fn pointwise_norm(fields: &[ScalarField], idx: usize) -> f64 {
    fields
        .iter()
        .map(|f| f.data[idx] * f.data[idx])
        .sum::<f64>()
        .sqrt()
}

fn bound_rhs(
    grid: &CylGrid,
    a: &[ModeJet],
    b: &[ModeJet],
    target: &ModeJet,
    k: usize,
    n: usize,
) -> f64 {
    let k_max = a.len() - 1;
    let kn = (k * n) as f64;
    let mut integrand = grid.zeros();
    let nz = grid.n_z;
    for (k1, k2, _) in admissible_triads(k, k_max) {
        for idx in 0..grid.n_r * nz {
            let ir = 1.0 / grid.r[idx / nz];
            let grad = target
                .dr
                .iter()
                .chain(&target.dz)
                .map(|f| f.data[idx] * f.data[idx])
                .sum::<f64>()
                .sqrt();
            integrand.data[idx] += pointwise_norm(&a[k1].v, idx)
                * pointwise_norm(&b[k2].v, idx)
                * (grad + kn * ir * pointwise_norm(&target.v, idx));
        }
    }
    THETA_MEASURE * grid.integrate_unchecked(&integrand)
}

/// `|((F_k, G_k) | u_k)|` against `Σ ∫ |u_{k₁}||u_{k₂}|(|∇̃u_k| + kN|u_k/r|)`.
pub fn triad_bound_check(state: &ModeState, k: usize) -> Result<TriadBound> {
    let k_max = state.k_max();
    if k == 0 || k > k_max {
        return Err(Error::ModeOutOfRange { k, k_max });
    }
    let g = &state.grid;
    let n = state.params.n;
    let jets = mode_jets(state);
    let f = triad_force_from_jets(g, &jets, k, n);
    let lhs = THETA_MEASURE
        * f.fields
            .iter()
            .zip(&state.modes[k].fields)
            .map(|(a, b)| g.inner(a, b))
            .sum::<f64>();
    Ok(TriadBound {
        k,
        lhs: lhs.abs(),
        rhs: bound_rhs(g, &jets, &jets, &jets[k], k, n),
    })
}

/// The vertical-derivative version: `|(∂_z(F_k, G_k) | ∂_z u_k)|` against
/// `Σ ∫ |∂_z u_{k₁}||u_{k₂}|(|∇̃∂_z u_k| + kN|∂_z u_k/r|)`.
pub fn triad_bound_check_dz(state: &ModeState, k: usize) -> Result<TriadBound> {
    let k_max = state.k_max();
    if k == 0 || k > k_max {
        return Err(Error::ModeOutOfRange { k, k_max });
    }
    let g = &state.grid;
    let n = state.params.n;
    let jets = mode_jets(state);
    let f = triad_force_from_jets(g, &jets, k, n);
    let lhs = THETA_MEASURE
        * f.fields
            .iter()
            .zip(&state.modes[k].fields)
            .map(|(a, b)| g.inner(&g.d_z_unchecked(a), &g.d_z_unchecked(b)))
            .sum::<f64>();
    let dz_jets: Vec<ModeJet> = state
        .modes
        .iter()
        .map(|m| {
            let dm = ModeVelocity {
                k: m.k,
                fields: m.fields.iter().map(|f| g.d_z_unchecked(f)).collect(),
            };
            ModeJet::new(g, &dm, (m.k * n) as f64)
        })
        .collect();
    Ok(TriadBound {
        k,
        lhs: lhs.abs(),
        rhs: bound_rhs(g, &dz_jets, &jets, &dz_jets[k], k, n),
    })
}
