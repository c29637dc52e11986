//! Per-mode Stokes operators and the implicit (backward Euler) Stokes step.
//!
//! Each family `(w^r, w^θ, w^z)` with signed azimuthal wavenumber `m` satisfies
//!
//! ```text
//! σ w^r − (Δ_m − 1/r²) w^r + (2m/r²) w^θ + ∂_r p      = b^r
//! σ w^θ − (Δ_m − 1/r²) w^θ + (2m/r²) w^r − (m/r) p    = b^θ
//! σ w^z −  Δ_m w^z                        + ∂_z p      = b^z
//! ∂_r w^r + w^r/r + ∂_z w^z + (m/r) w^θ               = 0
//! ```
//!
//! with `Δ_m = ∂_r² + ∂_r/r − m²/r² + ν²∂_z²` and no-slip at `r = 1`. The cosine family
//! of mode `k` uses `m = +kN`, the sine family `m = −kN`, the mean mode `m = 0`.
//!
//! The radial operators are applied in weak form with the `r dr` quadrature `W`:
//! viscous terms become `DᵀWD + W c/r²`, and the pressure enters through the `W`-adjoint
//! of the collocated divergence. The discrete energy balance then holds exactly. On the
//! parity grid the Radau rule integrates these forms exactly, so the weak operators also
//! agree with pointwise collocation of the differential ones.
//! In `z` each wavenumber decouples; writing `ŵ^z = i ẑ` makes every block real.

use nalgebra::{DMatrix, LU};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{CylGrid, ScalarField, THETA_MEASURE};
use crate::state::{
    component_parity, make_initial_state, slot, InitProfile, ModePressure, ModeState, ModeVelocity,
    Params, WavenumberConvention,
};

type Lu = LU<f64, nalgebra::Dyn, nalgebra::Dyn>;

/// Factored saddle-point blocks of one family, one per retained `z` wavenumber.
pub struct FamilyOperator {
    pub m: f64,
    pub nu: f64,
    pub sigma: f64,
    projection: bool,
    blocks: Vec<(Lu, bool)>,
}

impl std::fmt::Debug for FamilyOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FamilyOperator")
            .field("m", &self.m)
            .field("nu", &self.nu)
            .field("sigma", &self.sigma)
            .field("projection", &self.projection)
            .finish()
    }
}

/// `K = DᵀWD` restricted to the interior nodes.
fn stiffness(grid: &CylGrid, d: &[f64]) -> Vec<f64> {
    let n = grid.n_r;
    let ni = n - 1;
    let mut k = vec![0.0; ni * ni];
    for l in 0..n {
        let w = grid.quad_r[l];
        let row = &d[l * n..(l + 1) * n];
        for i in 0..ni {
            let a = w * row[i];
            if a == 0.0 {
                continue;
            }
            for j in 0..ni {
                k[i * ni + j] += a * row[j];
            }
        }
    }
    k
}

/// Radial matrices shared by every `z` block of one family.
struct RadialBlocks {
    /// Stiffness for the `(r, θ)` components and for the `z` component.
    k_plane: Vec<f64>,
    k_axial: Vec<f64>,
    /// Differentiation of the `r` component.
    d_plane: Vec<f64>,
}

impl RadialBlocks {
    fn new(grid: &CylGrid, m: f64) -> Self {
        let (pv, pz) = (component_parity(m, false), component_parity(m, true));
        Self {
            k_plane: stiffness(grid, grid.dr_matrix(pv)),
            k_axial: stiffness(grid, grid.dr_matrix(pz)),
            d_plane: grid.dr_matrix(pv).to_vec(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    grid: &CylGrid,
    rb: &RadialBlocks,
    m: f64,
    nu: f64,
    sigma: f64,
    beta: f64,
    projection: bool,
    bordered: bool,
) -> DMatrix<f64> {
    let n = grid.n_r;
    let ni = n - 1;
    let nvel = 3 * ni;
    let size = nvel + n + usize::from(bordered);
    let mut s = DMatrix::<f64>::zeros(size, size);
    let w = &grid.quad_r;
    let r = &grid.r;
    for c in 0..3 {
        let o = c * ni;
        let (coef, kmat) = if c < 2 {
            (1.0 + m * m, &rb.k_plane)
        } else {
            (m * m, &rb.k_axial)
        };
        for i in 0..ni {
            if !projection {
                for j in 0..ni {
                    s[(o + i, o + j)] += kmat[i * ni + j];
                }
                s[(o + i, o + i)] += w[i] * (coef / (r[i] * r[i]) + nu * nu * beta * beta);
            }
            s[(o + i, o + i)] += sigma * w[i];
        }
    }
    if !projection {
        for i in 0..ni {
            let c = w[i] * 2.0 * m / (r[i] * r[i]);
            s[(i, ni + i)] += c;
            s[(ni + i, i)] += c;
        }
    }
    for i in 0..n {
        let p = nvel + i;
        let mut put = |col: usize, v: f64| {
            s[(p, col)] += v;
            s[(col, p)] += v;
        };
        for j in 0..ni {
            put(j, -w[i] * rb.d_plane[i * n + j]);
        }
        if i < ni {
            put(i, -w[i] / r[i]);
            put(ni + i, -w[i] * m / r[i]);
            put(2 * ni + i, w[i] * beta);
        }
        if bordered {
            s[(p, size - 1)] = w[i];
            s[(size - 1, p)] = w[i];
        }
    }
    s
}

impl FamilyOperator {
    /// Operator for `σ − L_m` with the divergence constraint.
    pub fn new(grid: &CylGrid, m: f64, nu: f64, sigma: f64) -> Result<Self> {
        Self::build(grid, m, nu, sigma, false)
    }

    /// `W`-orthogonal projection onto discretely divergence-free fields.
    pub fn projection(grid: &CylGrid, m: f64) -> Result<Self> {
        Self::build(grid, m, 0.0, 1.0, true)
    }

    fn build(grid: &CylGrid, m: f64, nu: f64, sigma: f64, projection: bool) -> Result<Self> {
        let rb = RadialBlocks::new(grid, m);
        let blocks = (0..grid.n_q())
            .into_par_iter()
            .map(|q| {
                let bordered = m == 0.0 && q == 0;
                let s = assemble(grid, &rb, m, nu, sigma, grid.beta(q), projection, bordered);
                let lu = s.lu();
                if !lu.is_invertible() {
                    return Err(Error::SingularOperator { k_eff: m, q });
                }
                Ok((lu, bordered))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            m,
            nu,
            sigma,
            projection,
            blocks,
        })
    }

    /// Solves for `(w^r, w^θ, w^z, p)` given the strong-form right-hand side `b`.
    pub fn solve(
        &self,
        grid: &CylGrid,
        b: &[ScalarField],
    ) -> Result<([ScalarField; 3], ScalarField)> {
        let n = grid.n_r;
        let ni = n - 1;
        let nq1 = grid.n_z / 2 + 1;
        let specs: Vec<Vec<Complex64>> = b.iter().map(|f| grid.z_spectrum(f)).collect();
        let mut out: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); n * nq1]; 4];
        for (q, (lu, bordered)) in self.blocks.iter().enumerate() {
            let size = 3 * ni + n + usize::from(*bordered);
            let mut rhs = DMatrix::<f64>::zeros(size, 2);
            for i in 0..ni {
                let w = grid.quad_r[i];
                let br = specs[0][i * nq1 + q] * w;
                let bt = specs[1][i * nq1 + q] * w;
                let bz = specs[2][i * nq1 + q] * Complex64::new(0.0, -w);
                for (c, v) in [br, bt, bz].into_iter().enumerate() {
                    rhs[(c * ni + i, 0)] = v.re;
                    rhs[(c * ni + i, 1)] = v.im;
                }
            }
            let x = lu
                .solve(&rhs)
                .ok_or(Error::SingularOperator { k_eff: self.m, q })?;
            for i in 0..ni {
                for c in 0..3 {
                    let v = Complex64::new(x[(c * ni + i, 0)], x[(c * ni + i, 1)]);
                    out[c][i * nq1 + q] = if c == 2 {
                        v * Complex64::new(0.0, 1.0)
                    } else {
                        v
                    };
                }
            }
            for i in 0..n {
                let p = 3 * ni + i;
                out[3][i * nq1 + q] = Complex64::new(x[(p, 0)], x[(p, 1)]);
            }
        }
        let f: Vec<ScalarField> = out.iter().map(|s| grid.z_synthesize(s)).collect();
        if f.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("Stokes solve (m = {})", self.m)));
        }
        let mut it = f.into_iter();
        let w = [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()];
        Ok((w, it.next().unwrap()))
    }
}

/// Factored operators for both families of one mode.
#[derive(Debug)]
pub struct ModeOperator {
    pub k: usize,
    pub k_eff: f64,
    families: Vec<FamilyOperator>,
}

impl ModeOperator {
    pub fn new(grid: &CylGrid, k: usize, k_eff: f64, nu: f64, sigma: f64) -> Result<Self> {
        let signs: &[f64] = if k == 0 { &[0.0] } else { &[1.0, -1.0] };
        let families = signs
            .iter()
            .map(|s| FamilyOperator::new(grid, s * k_eff, nu, sigma))
            .collect::<Result<_>>()?;
        Ok(Self { k, k_eff, families })
    }

    pub fn projection(grid: &CylGrid, k: usize, k_eff: f64) -> Result<Self> {
        let signs: &[f64] = if k == 0 { &[0.0] } else { &[1.0, -1.0] };
        let families = signs
            .iter()
            .map(|s| FamilyOperator::projection(grid, s * k_eff))
            .collect::<Result<_>>()?;
        Ok(Self { k, k_eff, families })
    }

    pub fn solve(&self, grid: &CylGrid, b: &ModeVelocity) -> Result<(ModeVelocity, ModePressure)> {
        let mut w = ModeVelocity::zeros(grid, self.k);
        let mut p = ModePressure::zeros(grid, self.k);
        for (f, op) in self.families.iter().enumerate() {
            let (fam, pr) = op.solve(grid, &b.fields[3 * f..3 * f + 3])?;
            for (c, fld) in fam.into_iter().enumerate() {
                w.fields[3 * f + c] = fld;
            }
            p.fields[f] = pr;
        }
        Ok((w, p))
    }
}

/// Pieces of the viscous quadratic form of one mode (no azimuthal factor).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Dissipation {
    /// `Σ ‖∂_r w‖²`
    pub dr: f64,
    /// `Σ ‖∂_z w‖²` (multiply by `ν²` for the viscous contribution)
    pub dz: f64,
    /// `Σ_families ∫ [(1+m²)(|w^r|²+|w^θ|²) + 4m w^r w^θ + m²|w^z|²]/r²`
    pub weighted: f64,
    /// `Σ ‖w/r‖²`
    pub over_r: f64,
}

impl Dissipation {
    /// `wᵀ A w`, the exact discrete viscous dissipation rate.
    pub fn total(&self, nu: f64) -> f64 {
        self.dr + nu * nu * self.dz + self.weighted
    }

    /// The reduced form `‖∂_r w‖² + ν²‖∂_z w‖² + (k_eff − 1)²‖w/r‖²` (`k ≥ 1`) or
    /// `‖∂_r w‖² + ν²‖∂_z w‖² + ‖(w^r, w^θ)/r‖²` (mean mode), bounded by [`Dissipation::total`].
    pub fn reduced(&self, nu: f64, k_eff: f64, mean_over_r: f64, mean: bool) -> f64 {
        let base = self.dr + nu * nu * self.dz;
        if mean {
            base + mean_over_r
        } else {
            base + (k_eff - 1.0).powi(2) * self.over_r
        }
    }
}

/// Dissipation pieces of mode `w` with effective wavenumber `k_eff`.
pub fn dissipation(grid: &CylGrid, w: &ModeVelocity, k_eff: f64) -> Dissipation {
    let mut d = Dissipation::default();
    for (s, fam) in w.families() {
        let m = s * k_eff;
        for (c, f) in fam.iter().enumerate() {
            let dr = grid.d_r_unchecked(f, component_parity(m, c == 2));
            let dz = grid.d_z_unchecked(f);
            d.dr += grid.inner(&dr, &dr);
            d.dz += grid.inner(&dz, &dz);
            d.over_r += grid.inner_over_r2(f, f);
        }
        d.weighted += (1.0 + m * m)
            * (grid.inner_over_r2(&fam[0], &fam[0]) + grid.inner_over_r2(&fam[1], &fam[1]))
            + 4.0 * m * grid.inner_over_r2(&fam[0], &fam[1])
            + m * m * grid.inner_over_r2(&fam[2], &fam[2]);
    }
    d
}

/// `‖(w^r_0, w^θ_0)/r‖²` of a mean mode.
pub fn mean_over_r(grid: &CylGrid, w: &ModeVelocity) -> f64 {
    grid.inner_over_r2(&w.fields[slot::UR0], &w.fields[slot::UR0])
        + grid.inner_over_r2(&w.fields[slot::UTH0], &w.fields[slot::UTH0])
}

fn check_mode(grid: &CylGrid, w: &ModeVelocity) -> Result<()> {
    let want = if w.k == 0 { 3 } else { 6 };
    if w.fields.len() != want {
        return Err(Error::Precondition(format!(
            "mode {} has {} fields, expected {want}",
            w.k,
            w.fields.len()
        )));
    }
    for f in &w.fields {
        grid.check(f)?;
    }
    Ok(())
}

/// One backward-Euler step of the mode-`k` Stokes system with forcing `f` at the new time.
pub fn stokes_step(
    grid: &CylGrid,
    w: &ModeVelocity,
    f: Option<&ModeVelocity>,
    k_eff: f64,
    nu: f64,
    dt: f64,
) -> Result<(ModeVelocity, ModePressure)> {
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!("dt = {dt} must be positive")));
    }
    check_mode(grid, w)?;
    let op = ModeOperator::new(grid, w.k, k_eff, nu, 1.0 / dt)?;
    op.solve(grid, &be_rhs(w, f, dt))
}

fn be_rhs(w: &ModeVelocity, f: Option<&ModeVelocity>, dt: f64) -> ModeVelocity {
    let mut b = w.scaled(1.0 / dt);
    if let Some(f) = f {
        b.axpy(1.0, f);
    }
    b
}

/// One record of a Stokes evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesSnapshot {
    pub t: f64,
    /// `‖w(t)‖²` with the `2π` azimuthal factor.
    pub energy: f64,
    /// `∫_0^t` of the reduced dissipation (right-endpoint sums, matching backward Euler).
    pub dissipated: f64,
    /// `∫_0^t` of the full form `wᵀAw`.
    pub dissipated_full: f64,
    /// `∫_0^t (f | w)`.
    pub work: f64,
}

#[derive(Debug, Clone)]
pub struct StokesRun {
    pub snapshots: Vec<StokesSnapshot>,
    pub final_velocity: ModeVelocity,
    pub final_pressure: ModePressure,
}

/// Evolves the Stokes system for `n_steps` backward-Euler steps. `forcing(t)` is sampled
/// at each new time level.
pub fn stokes_evolve(
    grid: &CylGrid,
    w_in: &ModeVelocity,
    forcing: &dyn Fn(f64) -> Option<ModeVelocity>,
    k_eff: f64,
    nu: f64,
    dt: f64,
    n_steps: usize,
) -> Result<StokesRun> {
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!("dt = {dt} must be positive")));
    }
    check_mode(grid, w_in)?;
    let op = ModeOperator::new(grid, w_in.k, k_eff, nu, 1.0 / dt)?;
    let mut w = w_in.clone();
    let mut p = ModePressure::zeros(grid, w.k);
    let mut snap = StokesSnapshot {
        t: 0.0,
        energy: w.norm_sq(grid),
        dissipated: 0.0,
        dissipated_full: 0.0,
        work: 0.0,
    };
    let mut snapshots = vec![snap];
    for step in 1..=n_steps {
        let t = step as f64 * dt;
        let f = forcing(t);
        let (w1, p1) = op.solve(grid, &be_rhs(&w, f.as_ref(), dt))?;
        let d = dissipation(grid, &w1, k_eff);
        let mo = if w.k == 0 {
            mean_over_r(grid, &w1)
        } else {
            0.0
        };
        snap.t = t;
        snap.energy = w1.norm_sq(grid);
        snap.dissipated += dt * THETA_MEASURE * d.reduced(nu, k_eff, mo, w.k == 0);
        snap.dissipated_full += dt * THETA_MEASURE * d.total(nu);
        if let Some(f) = &f {
            let wk: f64 = f
                .fields
                .iter()
                .zip(&w1.fields)
                .map(|(a, b)| grid.inner(a, b))
                .sum();
            snap.work += dt * THETA_MEASURE * wk;
        }
        snapshots.push(snap);
        w = w1;
        p = p1;
    }
    Ok(StokesRun {
        snapshots,
        final_velocity: w,
        final_pressure: p,
    })
}

/// Evolves every mode of `state` by the decoupled Stokes dynamics and returns
/// `max_{k ≠ k0} sup_t ‖w_k(t)‖ / ‖w_{k0}(0)‖`. Modes other than `k0` must start at zero.
pub fn mode_invariance_check(
    state: &ModeState,
    k0: usize,
    conv: WavenumberConvention,
    dt: f64,
    n_steps: usize,
) -> Result<f64> {
    let g = &state.grid;
    if k0 > state.k_max() {
        return Err(Error::ModeOutOfRange {
            k: k0,
            k_max: state.k_max(),
        });
    }
    let scale = state.modes[k0].norm_sq(g).sqrt();
    if scale == 0.0 {
        return Err(Error::Precondition(format!("mode {k0} is zero")));
    }
    let leak = state
        .modes
        .par_iter()
        .filter(|m| m.k != k0)
        .map(|m| {
            let run = stokes_evolve(
                g,
                m,
                &|_| None,
                state.params.k_eff(m.k, conv),
                state.params.nu,
                dt,
                n_steps,
            )?;
            Ok(run
                .snapshots
                .iter()
                .fold(0.0_f64, |a, s| a.max(s.energy.sqrt())))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(leak.into_iter().fold(0.0, f64::max) / scale)
}

/// Bounds of the linear flow `u_L` for one vertical derivative order `j`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearFlowOrder {
    pub j: usize,
    pub sup_energy: f64,
    pub int_dr: f64,
    /// `N² ∫ ‖∂_z^j u_L / r‖²`
    pub int_weighted: f64,
    /// `N^{2δ} ‖∂_z^j α‖²`
    pub reference: f64,
    /// `(sup_energy + int_dr + int_weighted) / reference`
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearFlowReport {
    pub n: usize,
    pub t_end: f64,
    pub dt: f64,
    pub orders: Vec<LinearFlowOrder>,
    /// Largest relative defect of `d/dt‖u_L‖² + 2 wᵀAw = 0` over the steps.
    pub identity_residual: f64,
    pub energy_history: Vec<(f64, f64)>,
}

/// Evolves the single-mode linear flow `u_L` (mode 1 with wavenumber `N`) from `α` and
/// records the quantities controlled by its energy bound for `j = 0..=m`.
pub fn linear_flow_ul(
    grid: &std::sync::Arc<CylGrid>,
    profile: &InitProfile,
    params: &Params,
    t_end: f64,
    dt: f64,
) -> Result<LinearFlowReport> {
    if params.n < 3 {
        return Err(Error::Precondition(format!(
            "linear flow needs N >= 3, got {}",
            params.n
        )));
    }
    let state = make_initial_state(profile, params, grid.clone())?;
    let w0 = state.modes[1].clone();
    let n = params.n as f64;
    let n_steps = (t_end / dt).round() as usize;
    let op = ModeOperator::new(grid, 1, n, params.nu, 1.0 / dt)?;
    let jmax = params.m;
    let mut sup = vec![0.0_f64; jmax + 1];
    let mut int_dr = vec![0.0; jmax + 1];
    let mut int_w = vec![0.0; jmax + 1];
    let measure = |w: &ModeVelocity| -> Vec<(f64, f64, f64)> {
        (0..=jmax)
            .map(|j| {
                let dj = ModeVelocity {
                    k: 1,
                    fields: w.fields.iter().map(|f| grid.d_z_pow(f, j)).collect(),
                };
                let d = dissipation(grid, &dj, n);
                (
                    dj.norm_sq(grid),
                    THETA_MEASURE * d.dr,
                    THETA_MEASURE * n * n * d.over_r,
                )
            })
            .collect()
    };
    let mut prev = measure(&w0);
    for j in 0..=jmax {
        sup[j] = prev[j].0;
    }
    let mut w = w0;
    let mut resid = 0.0_f64;
    let mut history = vec![(0.0, prev[0].0)];
    for step in 1..=n_steps {
        let (w1, _) = op.solve(grid, &w.scaled(1.0 / dt))?;
        let cur = measure(&w1);
        for j in 0..=jmax {
            sup[j] = sup[j].max(cur[j].0);
            int_dr[j] += 0.5 * dt * (prev[j].1 + cur[j].1);
            int_w[j] += 0.5 * dt * (prev[j].2 + cur[j].2);
        }
        let q = THETA_MEASURE * dissipation(grid, &w1, n).total(params.nu);
        let rate = (cur[0].0 - prev[0].0) / dt;
        if q > 0.0 {
            resid = resid.max((rate + 2.0 * q).abs() / (2.0 * q));
        }
        history.push((step as f64 * dt, cur[0].0));
        prev = cur;
        w = w1;
    }
    let orders = (0..=jmax)
        .map(|j| {
            let reference = n.powf(2.0 * params.delta) * profile.dz_norm(grid, j).powi(2);
            let tot = sup[j] + int_dr[j] + int_w[j];
            LinearFlowOrder {
                j,
                sup_energy: sup[j],
                int_dr: int_dr[j],
                int_weighted: int_w[j],
                reference,
                ratio: if reference > 0.0 {
                    tot / reference
                } else {
                    0.0
                },
            }
        })
        .collect();
    Ok(LinearFlowReport {
        n: params.n,
        t_end: n_steps as f64 * dt,
        dt,
        orders,
        identity_residual: resid,
        energy_history: history,
    })
}

/// `W⁻¹ A w` on the interior nodes, the discrete viscous operator `−L w` without pressure.
pub fn apply_stokes_operator(g: &CylGrid, w: &ModeVelocity, m: f64, nu: f64) -> ModeVelocity {
    let mut out = ModeVelocity::zeros(g, w.k);
    for (f, (s, fam)) in w.families().enumerate() {
        let mm = s * m;
        let c = [1.0 + mm * mm, 1.0 + mm * mm, mm * mm];
        for comp in 0..3 {
            let dm = g.dr_matrix(component_parity(mm, comp == 2));
            let d = g.d_r_unchecked(&fam[comp], component_parity(mm, comp == 2));
            // Weak form: W^{-1} Dᵀ W D w, interior rows only.
            let mut wd = d.clone();
            for i in 0..g.n_r {
                for j in 0..g.n_z {
                    wd.data[i * g.n_z + j] *= g.quad_r[i];
                }
            }
            let mut lap = g.zeros();
            for i in 0..g.n_r - 1 {
                for l in 0..g.n_r {
                    let a = dm[l * g.n_r + i];
                    for j in 0..g.n_z {
                        lap.data[i * g.n_z + j] += a * wd.data[l * g.n_z + j];
                    }
                }
                for j in 0..g.n_z {
                    lap.data[i * g.n_z + j] /= g.quad_r[i];
                }
            }
            let dzz = g.d_z_pow(&fam[comp], 2);
            for i in 0..g.n_r - 1 {
                let r2 = g.r[i] * g.r[i];
                for j in 0..g.n_z {
                    let idx = i * g.n_z + j;
                    let other = if comp == 0 {
                        2.0 * mm / r2 * fam[1].data[idx]
                    } else if comp == 1 {
                        2.0 * mm / r2 * fam[0].data[idx]
                    } else {
                        0.0
                    };
                    lap.data[idx] +=
                        c[comp] / r2 * fam[comp].data[idx] - nu * nu * dzz.data[idx] + other;
                }
            }
            out.fields[3 * f + comp] = lap;
        }
    }
    out
}
