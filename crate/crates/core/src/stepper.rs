//! IMEX time integration of the coupled mode system.
//!
//! Transport, couplings and triad forces are explicit; viscosity and pressure are
//! implicit through the per-mode Stokes operators with `k_eff = kN`.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CylGrid, THETA_MEASURE};
use crate::nonlinear::nonlinear_rhs;
use crate::state::{
    divergence_residual, family_divergence, write_checkpoint, ModePressure, ModeState,
    ModeVelocity, Params, WavenumberConvention,
};
use crate::stokes::{dissipation, ModeOperator};

/// Time discretisation of the implicit part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ImexEuler,
    ImexBdf2,
}

impl Scheme {
    pub fn order(self) -> usize {
        match self {
            Scheme::ImexEuler => 1,
            Scheme::ImexBdf2 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepConfig {
    pub dt: f64,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub scheme: Scheme,
    pub div_tol: f64,
    /// Steps between budget records; 0 disables them.
    pub budget_every: usize,
    /// `false` drops every explicit term and leaves the Stokes flow.
    pub nonlinear: bool,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 1.0,
            cfl_safety: 0.5,
            scheme: Scheme::ImexEuler,
            div_tol: 1e-9,
            budget_every: 1,
            nonlinear: true,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParams(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidParams(format!(
                "t_end = {} must be non-negative",
                self.t_end
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "cfl_safety = {} must lie in (0, 1]",
                self.cfl_safety
            )));
        }
        if !(self.div_tol > 0.0) {
            return Err(Error::InvalidParams(format!(
                "div_tol = {} must be positive",
                self.div_tol
            )));
        }
        Ok(())
    }
}

/// External body force, evaluated at the new time level.
pub trait Forcing: Sync {
    /// One `ModeVelocity` per mode `0..=K`.
    fn force(&self, t: f64, grid: &CylGrid, params: &Params) -> Vec<ModeVelocity>;
}

/// Explicit terms used by one step.
#[derive(Debug, Clone)]
pub struct StepForces {
    pub dt: f64,
    /// `N(u^n)` per mode (zeros when the nonlinearity is off).
    pub nonlinear: Vec<ModeVelocity>,
    pub forcing: Option<Vec<ModeVelocity>>,
    /// Projection re-solves applied after the step.
    pub cleanups: usize,
}

/// Advective time-step limit and the mode that sets it.
pub fn cfl_limit(state: &ModeState, safety: f64) -> (f64, usize) {
    let g = &state.grid;
    let p = &state.params;
    let dtheta = 2.0 * std::f64::consts::PI / ((p.k_max * p.n).max(1) as f64);
    let dz = g.dz();
    let rates: Vec<f64> = state
        .modes
        .iter()
        .map(|m| {
            let amp = |a: usize, b: Option<usize>, i: usize, j: usize| {
                let x = m.fields[a].at(i, j);
                match b {
                    Some(b) => x.hypot(m.fields[b].at(i, j)),
                    None => x.abs(),
                }
            };
            let (r, th, z, vr, vth, vz) = if m.k == 0 {
                (0, 1, 2, None, None, None)
            } else {
                (0, 4, 2, Some(3), Some(1), Some(5))
            };
            let mut rate: f64 = 0.0;
            for i in 0..g.n_r {
                let dr = g.local_dr(i);
                for j in 0..g.n_z {
                    rate = rate
                        .max(amp(r, vr, i, j) / dr)
                        .max(amp(z, vz, i, j) / dz)
                        .max(amp(th, vth, i, j) / (g.r[i] * dtheta));
                }
            }
            rate
        })
        .collect();
    let total: f64 = rates.iter().sum();
    let mode = rates
        .iter()
        .enumerate()
        .fold(
            (0, 0.0),
            |acc, (k, &r)| if r > acc.1 { (k, r) } else { acc },
        )
        .0;
    if total == 0.0 {
        (f64::INFINITY, mode)
    } else {
        (safety / total, mode)
    }
}

fn mode_measure(k: usize) -> f64 {
    if k == 0 {
        THETA_MEASURE
    } else {
        std::f64::consts::PI
    }
}

/// Reusable integrator: caches the factored operators and the BDF2 history.
pub struct Stepper<'a> {
    pub cfg: StepConfig,
    grid: std::sync::Arc<CylGrid>,
    params: Params,
    euler: Vec<ModeOperator>,
    bdf2: Vec<ModeOperator>,
    proj: Vec<Option<ModeOperator>>,
    prev: Option<(Vec<ModeVelocity>, Vec<ModeVelocity>)>,
    forcing: Option<&'a dyn Forcing>,
    consecutive_cleanups: usize,
    pub total_cleanups: usize,
    pub steps: usize,
}

impl<'a> Stepper<'a> {
    pub fn new(
        state: &ModeState,
        cfg: StepConfig,
        forcing: Option<&'a dyn Forcing>,
    ) -> Result<Self> {
        cfg.validate()?;
        state.params.validate()?;
        let build = |sigma: f64| -> Result<Vec<ModeOperator>> {
            state
                .modes
                .par_iter()
                .map(|m| {
                    let keff = state.params.k_eff(m.k, WavenumberConvention::Scaled);
                    ModeOperator::new(&state.grid, m.k, keff, state.params.nu, sigma)
                })
                .collect()
        };
        let euler = build(1.0 / cfg.dt)?;
        let bdf2 = match cfg.scheme {
            Scheme::ImexBdf2 => build(1.5 / cfg.dt)?,
            Scheme::ImexEuler => Vec::new(),
        };
        Ok(Self {
            cfg,
            grid: state.grid.clone(),
            params: state.params,
            euler,
            bdf2,
            proj: (0..state.modes.len()).map(|_| None).collect(),
            prev: None,
            forcing,
            consecutive_cleanups: 0,
            total_cleanups: 0,
            steps: 0,
        })
    }

    /// Forgets the BDF2 history so the next step is an Euler bootstrap.
    pub fn reset_history(&mut self) {
        self.prev = None;
    }

    /// Errors with [`Error::Cfl`] when `dt` exceeds the advective limit.
    pub fn check_cfl(&self, state: &ModeState) -> Result<()> {
        if !self.cfg.nonlinear {
            return Ok(());
        }
        let (limit, mode) = cfl_limit(state, self.cfg.cfl_safety);
        if self.cfg.dt > limit {
            return Err(Error::Cfl {
                dt: self.cfg.dt,
                limit,
                mode,
            });
        }
        Ok(())
    }

    pub fn step(&mut self, state: &ModeState) -> Result<(ModeState, StepForces)> {
        let g = self.grid.clone();
        let dt = self.cfg.dt;
        let t_new = state.t + dt;
        let nl = if self.cfg.nonlinear {
            nonlinear_rhs(state)
        } else {
            state
                .modes
                .iter()
                .map(|m| ModeVelocity::zeros(&g, m.k))
                .collect()
        };
        let forcing = self.forcing.map(|f| f.force(t_new, &g, &self.params));
        if let Some(f) = &forcing {
            if f.len() != state.modes.len() {
                return Err(Error::Precondition(format!(
                    "forcing has {} modes, state has {}",
                    f.len(),
                    state.modes.len()
                )));
            }
        }
        let bdf = self.cfg.scheme == Scheme::ImexBdf2 && self.prev.is_some();
        let rhs: Vec<ModeVelocity> = state
            .modes
            .iter()
            .enumerate()
            .map(|(k, u)| {
                let mut b;
                if bdf {
                    let (u_old, n_old) = self.prev.as_ref().unwrap();
                    b = u.scaled(2.0 / dt);
                    b.axpy(-0.5 / dt, &u_old[k]);
                    b.axpy(2.0, &nl[k]);
                    b.axpy(-1.0, &n_old[k]);
                } else {
                    b = u.scaled(1.0 / dt);
                    b.axpy(1.0, &nl[k]);
                }
                if let Some(f) = &forcing {
                    b.axpy(1.0, &f[k]);
                }
                b
            })
            .collect();
        let ops = if bdf { &self.bdf2 } else { &self.euler };
        let solved: Vec<(ModeVelocity, ModePressure)> = ops
            .par_iter()
            .zip(rhs.par_iter())
            .map(|(op, b)| op.solve(&g, b))
            .collect::<Result<_>>()?;
        let mut next = state.clone();
        next.t = t_new;
        for (k, (w, p)) in solved.into_iter().enumerate() {
            next.modes[k] = w;
            next.pressure[k] = p;
        }
        let cleanups = self.cleanup(&mut next)?;
        if !next.is_finite() {
            return Err(Error::NonFinite(format!("state at t = {t_new}")));
        }
        if self.cfg.scheme == Scheme::ImexBdf2 {
            self.prev = Some((state.modes.clone(), nl.clone()));
        }
        self.steps += 1;
        Ok((
            next,
            StepForces {
                dt,
                nonlinear: nl,
                forcing,
                cleanups,
            },
        ))
    }

    fn cleanup(&mut self, state: &mut ModeState) -> Result<usize> {
        let res = divergence_residual(state);
        let mut count = 0;
        for (k, r) in res.into_iter().enumerate() {
            if r <= self.cfg.div_tol {
                continue;
            }
            if self.proj[k].is_none() {
                let keff = self.params.k_eff(k, WavenumberConvention::Scaled);
                self.proj[k] = Some(ModeOperator::projection(&self.grid, k, keff)?);
            }
            let (w, _) = self.proj[k]
                .as_ref()
                .unwrap()
                .solve(&self.grid, &state.modes[k])?;
            state.modes[k] = w;
            count += 1;
        }
        if count > 0 {
            self.consecutive_cleanups += 1;
            self.total_cleanups += count;
            if self.consecutive_cleanups > 3 {
                return Err(Error::DivergenceDrift(self.consecutive_cleanups));
            }
        } else {
            self.consecutive_cleanups = 0;
        }
        Ok(count)
    }
}

/// One IMEX Euler step with a CFL check.
pub fn step(state: &ModeState, cfg: &StepConfig) -> Result<ModeState> {
    let mut s = Stepper::new(
        state,
        StepConfig {
            scheme: Scheme::ImexEuler,
            ..*cfg
        },
        None,
    )?;
    s.check_cfl(state)?;
    Ok(s.step(state)?.0)
}

/// Energy ledger of one mode over one step. Every column carries the azimuthal measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetRecord {
    pub t: f64,
    pub k: usize,
    /// `‖u_k‖²` after the step.
    pub energy: f64,
    pub dissipation_r: f64,
    pub dissipation_z: f64,
    pub weighted_r: f64,
    /// `⟨N_k(u^n), u^n_k⟩`; sums to the total flux over `k`.
    pub transfer: f64,
    /// `−∫ P div u` after the step.
    pub pressure_work: f64,
    /// `½ d‖u_k‖²/dt + dissipation − transfer − pressure work − forcing work`.
    pub imbalance: f64,
}

pub const BUDGET_COLUMNS: [&str; 9] = [
    "t",
    "k",
    "energy",
    "dissipation_r",
    "dissipation_z",
    "weighted_r",
    "transfer",
    "pressure_work",
    "imbalance",
];

pub fn energy_budget(
    before: &ModeState,
    after: &ModeState,
    forces: &StepForces,
) -> Vec<BudgetRecord> {
    let g = &after.grid;
    let p = &after.params;
    let inner = |a: &ModeVelocity, b: &ModeVelocity| -> f64 {
        a.fields
            .iter()
            .zip(&b.fields)
            .map(|(x, y)| g.inner(x, y))
            .sum()
    };
    after
        .modes
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let mu = mode_measure(k);
            let keff = p.k_eff(k, WavenumberConvention::Scaled);
            let d = dissipation(g, u, keff);
            let e_new = mu * u.sum_sq(g);
            let e_old = mu * before.modes[k].sum_sq(g);
            let transfer = mu * inner(&forces.nonlinear[k], &before.modes[k]);
            let mut pw = 0.0;
            for (f, (s, fam)) in u.families().enumerate() {
                let div = family_divergence(g, fam, s * keff);
                pw -= mu * g.inner(&after.pressure[k].fields[f], &div);
            }
            let fw = forces
                .forcing
                .as_ref()
                .map_or(0.0, |f| mu * inner(&f[k], u));
            let diss_r = mu * d.dr;
            let diss_z = mu * p.nu * p.nu * d.dz;
            let weighted = mu * d.weighted;
            let imbalance =
                0.5 * (e_new - e_old) / forces.dt + diss_r + diss_z + weighted - transfer - pw - fw;
            BudgetRecord {
                t: after.t,
                k,
                energy: e_new,
                dissipation_r: diss_r,
                dissipation_z: diss_z,
                weighted_r: weighted,
                transfer,
                pressure_work: pw,
                imbalance,
            }
        })
        .collect()
}

/// Receives snapshots (in time order) and budget records from [`run`].
pub trait Sink {
    fn snapshot(&mut self, state: &ModeState) -> Result<()>;
    fn budget(&mut self, _records: &[BudgetRecord]) -> Result<()> {
        Ok(())
    }
}

/// Appends budget records as CSV rows.
pub struct BudgetCsv<W: Write> {
    out: W,
    header_written: bool,
}

impl<W: Write> BudgetCsv<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            header_written: false,
        }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> Sink for BudgetCsv<W> {
    fn snapshot(&mut self, _state: &ModeState) -> Result<()> {
        Ok(())
    }

    fn budget(&mut self, records: &[BudgetRecord]) -> Result<()> {
        if !self.header_written {
            writeln!(self.out, "{}", BUDGET_COLUMNS.join(","))?;
            self.header_written = true;
        }
        for r in records {
            writeln!(
                self.out,
                "{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                r.t,
                r.k,
                r.energy,
                r.dissipation_r,
                r.dissipation_z,
                r.weighted_r,
                r.transfer,
                r.pressure_work,
                r.imbalance
            )?;
        }
        Ok(())
    }
}

/// Collects budget records in memory.
#[derive(Debug, Default)]
pub struct BudgetLog {
    pub records: Vec<BudgetRecord>,
}

impl Sink for BudgetLog {
    fn snapshot(&mut self, _state: &ModeState) -> Result<()> {
        Ok(())
    }

    fn budget(&mut self, records: &[BudgetRecord]) -> Result<()> {
        self.records.extend_from_slice(records);
        Ok(())
    }
}

#[derive(Clone, Default)]
pub struct RunOptions<'a> {
    /// Steps between checkpoints; 0 disables them.
    pub checkpoint_every: usize,
    pub checkpoint_path: Option<PathBuf>,
    /// Steps between snapshots handed to the sinks. The initial and final states are
    /// always delivered.
    pub snapshot_every: usize,
    pub forcing: Option<&'a dyn Forcing>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub state: ModeState,
    pub steps: usize,
    pub cleanups: usize,
    pub initial_energy: f64,
    pub max_energy: f64,
    /// Largest post-step divergence residual over all modes and steps.
    pub max_divergence: f64,
    /// BDF2 starts with one Euler step.
    pub bootstrapped: bool,
}

#[derive(Debug)]
pub struct RunFailure {
    pub t: f64,
    pub error: Error,
    pub last_state: ModeState,
    pub last_checkpoint: Option<PathBuf>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run failed at t = {}: {}", self.t, self.error)?;
        if let Some(p) = &self.last_checkpoint {
            write!(f, " (last checkpoint {})", p.display())?;
        }
        Ok(())
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Number of fixed steps from `t0` to `t_end`.
pub fn step_count(t0: f64, cfg: &StepConfig) -> usize {
    ((cfg.t_end - t0) / cfg.dt).round().max(0.0) as usize
}

/// Integrates from `state0.t` to `cfg.t_end` with fixed `dt`.
pub fn run(
    state0: &ModeState,
    cfg: &StepConfig,
    opts: &RunOptions<'_>,
    sinks: &mut [&mut dyn Sink],
) -> std::result::Result<RunSummary, Box<RunFailure>> {
    let fail = |t: f64, error: Error, last: &ModeState, ck: &Option<PathBuf>| {
        Box::new(RunFailure {
            t,
            error,
            last_state: last.clone(),
            last_checkpoint: ck.clone(),
        })
    };
    let mut last_ck: Option<PathBuf> = None;
    if let Err(e) = cfg.validate() {
        return Err(fail(state0.t, e, state0, &last_ck));
    }
    for s in sinks.iter_mut() {
        if let Err(e) = s.snapshot(state0) {
            return Err(fail(state0.t, e, state0, &last_ck));
        }
    }
    let n_steps = step_count(state0.t, cfg);
    let initial_energy = state0.physical_norm_sq();
    let mut summary = RunSummary {
        state: state0.clone(),
        steps: 0,
        cleanups: 0,
        initial_energy,
        max_energy: initial_energy,
        max_divergence: 0.0,
        bootstrapped: cfg.scheme == Scheme::ImexBdf2 && n_steps > 0,
    };
    if n_steps == 0 {
        return Ok(summary);
    }
    let mut stepper = match Stepper::new(state0, *cfg, opts.forcing) {
        Ok(s) => s,
        Err(e) => return Err(fail(state0.t, e, state0, &last_ck)),
    };
    let snap_every = opts.snapshot_every.max(1);
    let mut state = state0.clone();
    for n in 0..n_steps {
        let res = (|| -> Result<(ModeState, StepForces)> {
            if n % 10 == 0 {
                stepper.check_cfl(&state)?;
            }
            let (next, forces) = stepper.step(&state)?;
            let e = next.physical_norm_sq();
            if initial_energy > 0.0 && e > 10.0 * initial_energy {
                return Err(Error::BlowUp {
                    energy: e,
                    initial: initial_energy,
                });
            }
            Ok((next, forces))
        })();
        let (next, forces) = match res {
            Ok(x) => x,
            Err(e) => return Err(fail(state.t, e, &state, &last_ck)),
        };
        let e = next.physical_norm_sq();
        summary.max_energy = summary.max_energy.max(e);
        summary.cleanups += forces.cleanups;
        let div = divergence_residual(&next).into_iter().fold(0.0, f64::max);
        summary.max_divergence = summary.max_divergence.max(div);
        let last = n + 1 == n_steps;
        let mut sink_res = Ok(());
        if cfg.budget_every > 0 && (n + 1) % cfg.budget_every == 0 {
            let recs = energy_budget(&state, &next, &forces);
            for s in sinks.iter_mut() {
                sink_res = sink_res.and(s.budget(&recs));
            }
        }
        if (n + 1) % snap_every == 0 || last {
            for s in sinks.iter_mut() {
                sink_res = sink_res.and(s.snapshot(&next));
            }
        }
        if let Err(e) = sink_res {
            return Err(fail(next.t, e, &next, &last_ck));
        }
        if let (Some(path), true) = (&opts.checkpoint_path, opts.checkpoint_every > 0) {
            if (n + 1) % opts.checkpoint_every == 0 {
                if let Err(e) = write_checkpoint(&next, path) {
                    return Err(fail(next.t, e, &next, &last_ck));
                }
                last_ck = Some(path.clone());
            }
        }
        state = next;
    }
    summary.steps = n_steps;
    summary.state = state;
    Ok(summary)
}

/// Convenience wrapper that checkpoints to `path` every `every` steps.
pub fn run_with_checkpoints(
    state0: &ModeState,
    cfg: &StepConfig,
    path: &Path,
    every: usize,
) -> std::result::Result<RunSummary, Box<RunFailure>> {
    let opts = RunOptions {
        checkpoint_every: every,
        checkpoint_path: Some(path.to_path_buf()),
        ..Default::default()
    };
    run(state0, cfg, &opts, &mut [])
}
