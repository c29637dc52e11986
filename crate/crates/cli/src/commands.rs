//! Subcommand implementations. Each one validates its config, computes, and writes a
//! [`Report`] (plus artifacts) into the output directory.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use cylmode_core::functionals::{
    compute_d, compute_d_initial, compute_e, compute_e_initial, decay_report, smallness_check,
    DecayReport, EnergyHistory, SmallnessCheck,
};
use cylmode_core::grid::{build_grid, CylGrid, Parity, ScalarField};
use cylmode_core::inequalities::{constant_scan, ScanReport};
use cylmode_core::nonlinear::flux_identity_residual;
use cylmode_core::oracle::{oracle_evolve, project_to_modes, reconstruct_full};
use cylmode_core::state::{
    component_parity, divergence_residual, make_initial_state, make_profile_divfree, ring_profile,
    slot, write_checkpoint, InitProfile, ModeState, ModeVelocity, Params, WavenumberConvention,
};
use cylmode_core::stepper::{run, BudgetCsv, RunOptions, Scheme, Sink, StepConfig};
use cylmode_core::stokes::{
    linear_flow_ul, mode_invariance_check, stokes_evolve, LinearFlowReport, ModeOperator,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Command, ExperimentConfig, ProfileFamily, RunMode};
use crate::report::{write_file, Report};
use crate::CliError;

pub const SIMULATE_REPORT: &str = "simulate.json";
pub const DECAY_REPORT: &str = "decay_report.json";
pub const DECAY_CSV: &str = "decay_report.csv";
pub const HISTORY: &str = "history.json";
pub const BUDGET: &str = "budget.csv";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const FINAL_STATE: &str = "final.bin";
pub const STOKES_REPORT: &str = "stokes_test.json";
pub const LINEAR_FLOW_REPORT: &str = "linear_flow.json";
pub const SCAN_REPORT: &str = "inequality_scan.json";
pub const ORACLE_REPORT: &str = "oracle_compare.json";

/// Largest cross-mode leakage accepted for decoupled linear dynamics.
pub const LEAKAGE_TOL: f64 = 1e-12;
/// Relative slack of the discrete Stokes energy inequality.
pub const ENERGY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Default)]
pub struct Context {
    pub quiet: bool,
    /// History file for `decay-report`; `<out>/history.json` when absent.
    pub history: Option<PathBuf>,
}

impl Context {
    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub report: PathBuf,
}

pub fn execute(cmd: Command, cfg: &ExperimentConfig, ctx: &Context) -> Result<Outcome, CliError> {
    cfg.validate(cmd)?;
    let out = &cfg.output.dir;
    std::fs::create_dir_all(out).map_err(|e| CliError::Output {
        path: out.clone(),
        reason: e.to_string(),
    })?;
    match cmd {
        Command::Simulate => simulate(cfg, ctx),
        Command::StokesTest => stokes_test(cfg, ctx),
        Command::LinearFlow => linear_flow(cfg, ctx),
        Command::InequalityScan => inequality_scan(cfg, ctx),
        Command::OracleCompare => oracle_compare(cfg, ctx),
        Command::DecayReport => decay_report_from_history(cfg, ctx),
    }
}

fn grid_of(cfg: &ExperimentConfig) -> Result<Arc<CylGrid>, CliError> {
    let g = &cfg.grid;
    Ok(Arc::new(build_grid(g.n_r, g.n_z, g.l_z, g.scheme)?))
}

/// Node values of `(a^r, a^z, b^r, b^z)`, row-major in `(r, z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub n_r: usize,
    pub n_z: usize,
    pub a_r: Vec<f64>,
    pub a_z: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_z: Vec<f64>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let input = |reason: String| CliError::Input {
        path: path.to_path_buf(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| input(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| input(format!("corrupt JSON: {e}")))
}

pub fn build_profile(
    cfg: &ExperimentConfig,
    grid: &CylGrid,
    n: usize,
) -> Result<InitProfile, CliError> {
    let parity = Parity::velocity(n as i64);
    let pr = &cfg.profile;
    match pr.family {
        ProfileFamily::Ring => Ok(ring_profile(grid, parity, pr.amplitude, pr.ring_power(n))?),
        ProfileFamily::File => {
            let path = pr.path.as_deref().expect("validated");
            let f: ProfileFile = read_json(path)?;
            let size = grid.n_r * grid.n_z;
            if (f.n_r, f.n_z) != (grid.n_r, grid.n_z)
                || [&f.a_r, &f.a_z, &f.b_r, &f.b_z]
                    .iter()
                    .any(|v| v.len() != size)
            {
                return Err(CliError::Input {
                    path: path.to_path_buf(),
                    reason: format!(
                        "profile arrays do not match the {} x {} grid",
                        grid.n_r, grid.n_z
                    ),
                });
            }
            let field = |data: &Vec<f64>| ScalarField {
                n_r: grid.n_r,
                n_z: grid.n_z,
                data: data.clone(),
            };
            Ok(make_profile_divfree(
                grid,
                parity,
                field(&f.a_r),
                field(&f.a_z),
                field(&f.b_r),
                field(&f.b_z),
            )?)
        }
    }
}

struct DivergenceWatch {
    max: f64,
}

impl Sink for DivergenceWatch {
    fn snapshot(&mut self, s: &ModeState) -> cylmode_core::Result<()> {
        self.max = divergence_residual(s).into_iter().fold(self.max, f64::max);
        Ok(())
    }
}

struct FluxWatch {
    max: f64,
}

impl Sink for FluxWatch {
    fn snapshot(&mut self, s: &ModeState) -> cylmode_core::Result<()> {
        self.max = self.max.max(flux_identity_residual(s));
        Ok(())
    }
}

struct EnergyWatch {
    energies: Vec<f64>,
}

impl Sink for EnergyWatch {
    fn snapshot(&mut self, s: &ModeState) -> cylmode_core::Result<()> {
        self.energies.push(s.physical_norm_sq());
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalValues {
    pub j: usize,
    pub e_initial: Option<f64>,
    pub e: Option<f64>,
    pub d_initial: Option<f64>,
    pub d: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Invariants {
    pub divergence: bool,
    pub flux_identity: bool,
    /// Only checked for `stokes_only`.
    pub dissipative: Option<bool>,
    /// Only checked for `stokes_only`: every mode but `k = 1` stays at rest.
    pub no_cascade: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSummary {
    pub n: [usize; 2],
    pub sup_mean: [f64; 2],
    pub alpha_norm: [f64; 2],
    /// `sup_t ‖u_0‖ / ‖α‖`
    pub ratio: [f64; 2],
    /// Fitted exponent of `N` in the ratio.
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResult {
    pub mode: RunMode,
    pub smallness: SmallnessCheck,
    pub completed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub steps: usize,
    pub t_final: f64,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub max_divergence: f64,
    pub max_flux_residual: f64,
    /// `max_{k≠1} sup_t ‖u_k‖ / sup_t ‖u_1‖`
    pub leakage: f64,
    pub invariants: Invariants,
    pub functionals: Vec<FunctionalValues>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paired: Option<PairedSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear_flow: Option<LinearFlowReport>,
    pub artifacts: Vec<String>,
    pub seconds: f64,
}

struct RunProducts {
    result: SimulateResult,
    history: EnergyHistory,
    alpha_norm: f64,
}

fn simulate_core(
    cfg: &ExperimentConfig,
    params: Params,
    ctx: &Context,
    artifacts: bool,
) -> Result<RunProducts, CliError> {
    let start = Instant::now();
    let grid = grid_of(cfg)?;
    let profile = build_profile(cfg, &grid, params.n)?;
    let smallness = smallness_check(&profile, &grid, &params)?;
    let s0 = make_initial_state(&profile, &params, grid.clone())?;
    let stokes_only = cfg.mode == RunMode::StokesOnly;
    let step = StepConfig {
        nonlinear: !stokes_only,
        ..cfg.step
    };
    let out = &cfg.output;
    let mut history = EnergyHistory::new(params, out.track_j, out.mixed).with_profile(
        &profile,
        &grid,
        out.track_j.max(1),
    );
    let mut div = DivergenceWatch { max: 0.0 };
    let mut flux = FluxWatch { max: 0.0 };
    let mut energy = EnergyWatch {
        energies: Vec::new(),
    };
    let mut files = Vec::new();
    let mut budget = if artifacts && out.budget_csv {
        let path = out.dir.join(BUDGET);
        let f = File::create(&path).map_err(|e| CliError::Output {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        files.push(BUDGET.to_string());
        Some(BudgetCsv::new(BufWriter::new(f)))
    } else {
        None
    };
    let ck_path = out.dir.join(CHECKPOINT);
    let opts = RunOptions {
        checkpoint_every: if artifacts { out.checkpoint_every } else { 0 },
        checkpoint_path: (artifacts && out.checkpoint_every > 0).then(|| ck_path.clone()),
        snapshot_every: out.snapshot_every,
        forcing: None,
    };
    ctx.log(format!(
        "simulate: N = {}, K = {}, nu = {}, {} steps of dt = {}",
        params.n,
        params.k_max,
        params.nu,
        cylmode_core::stepper::step_count(0.0, &step),
        step.dt
    ));
    let outcome = {
        let mut sinks: Vec<&mut dyn Sink> = vec![&mut history, &mut div, &mut flux, &mut energy];
        if let Some(b) = budget.as_mut() {
            sinks.push(b);
        }
        run(&s0, &step, &opts, &mut sinks)
    };
    drop(budget);
    if artifacts && out.checkpoint_every > 0 {
        files.push(CHECKPOINT.to_string());
    }
    let (completed, error, steps, final_state) = match outcome {
        Ok(sum) => {
            div.max = div.max.max(sum.max_divergence);
            (true, None, sum.steps, sum.state)
        }
        Err(f) => {
            ctx.log(format!("simulate: {f}"));
            (false, Some(f.to_string()), 0, f.last_state)
        }
    };
    let e0 = energy.energies.first().copied().unwrap_or(0.0);
    let dissipative = stokes_only.then(|| match step.scheme {
        Scheme::ImexEuler => energy
            .energies
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-12)),
        Scheme::ImexBdf2 => energy
            .energies
            .iter()
            .all(|&e| e <= e0 * (1.0 + ENERGY_TOL)),
    });
    let sup = |k: usize| history.series[k].iter().fold(0.0_f64, |a, &b| a.max(b));
    let leakage = {
        let s1 = sup(1);
        let worst = (0..=params.k_max)
            .filter(|&k| k != 1)
            .map(sup)
            .fold(0.0, f64::max);
        if worst == 0.0 {
            0.0
        } else {
            worst / s1
        }
    };
    let invariants = Invariants {
        divergence: div.max <= step.div_tol,
        flux_identity: flux.max <= out.flux_tol,
        dissipative,
        no_cascade: stokes_only.then_some(leakage <= LEAKAGE_TOL),
    };
    let functionals = (0..=out.track_j)
        .map(|j| FunctionalValues {
            j,
            e_initial: compute_e_initial(&history, j, &params).ok(),
            e: compute_e(&history, j, &params).ok(),
            d_initial: compute_d_initial(&history, j, &params).ok(),
            d: compute_d(&history, j, &params).ok(),
        })
        .collect();
    let alpha_norm = profile.dz_norm(&grid, 0);
    if artifacts {
        write_checkpoint(&final_state, &out.dir.join(FINAL_STATE))?;
        files.push(FINAL_STATE.to_string());
    }
    let result = SimulateResult {
        mode: cfg.mode,
        smallness,
        completed,
        error,
        steps,
        t_final: final_state.t,
        energy_initial: e0,
        energy_final: final_state.physical_norm_sq(),
        max_divergence: div.max,
        max_flux_residual: flux.max,
        leakage,
        invariants,
        functionals,
        paired: None,
        linear_flow: None,
        artifacts: files,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(RunProducts {
        result,
        history,
        alpha_norm,
    })
}

fn invariants_hold(r: &SimulateResult) -> bool {
    let i = &r.invariants;
    r.completed
        && i.divergence
        && i.flux_identity
        && i.dissipative.unwrap_or(true)
        && i.no_cascade.unwrap_or(true)
}

fn decay_envelope_report(
    cfg: &ExperimentConfig,
    history: &EnergyHistory,
) -> Result<Report<DecayReport>, CliError> {
    let rep = decay_report(history, &history.params)?;
    let passed = rep.pass_flags.ratios_finite;
    Ok(Report::new("decay_report", cfg, passed, rep))
}

fn write_decay(cfg: &ExperimentConfig, history: &EnergyHistory) -> Result<Vec<String>, CliError> {
    let rep = decay_envelope_report(cfg, history)?;
    rep.write(&cfg.output.dir.join(DECAY_REPORT))?;
    write_file(
        &cfg.output.dir.join(DECAY_CSV),
        rep.result.to_csv().as_bytes(),
    )?;
    Ok(vec![DECAY_REPORT.into(), DECAY_CSV.into()])
}

fn sup_mean(h: &EnergyHistory) -> f64 {
    h.series[0].iter().fold(0.0_f64, |a, &b| a.max(b))
}

pub fn simulate(cfg: &ExperimentConfig, ctx: &Context) -> Result<Outcome, CliError> {
    if cfg.mode == RunMode::LinearFlow {
        return linear_flow_inner(cfg, ctx, "simulate", SIMULATE_REPORT);
    }
    let RunProducts {
        mut result,
        history,
        alpha_norm,
    } = simulate_core(cfg, cfg.params, ctx, true)?;
    let out = &cfg.output.dir;
    if cfg.output.history {
        write_file(
            &out.join(HISTORY),
            serde_json::to_string(&history)
                .expect("history serialises")
                .as_bytes(),
        )?;
        result.artifacts.push(HISTORY.into());
    }
    if cfg.output.decay_report && result.completed {
        match write_decay(cfg, &history) {
            Ok(files) => result.artifacts.extend(files),
            Err(e) => ctx.log(format!("decay report skipped: {e}")),
        }
    }
    let mut passed = invariants_hold(&result);
    if let Some(pair) = &cfg.paired {
        let params = Params {
            n: pair.n,
            ..cfg.params
        };
        let other = simulate_core(cfg, params, ctx, false)?;
        passed &= invariants_hold(&other.result);
        let n = [cfg.params.n, pair.n];
        let sup_mean = [sup_mean(&history), sup_mean(&other.history)];
        let alpha = [alpha_norm, other.alpha_norm];
        let ratio = [sup_mean[0] / alpha[0], sup_mean[1] / alpha[1]];
        let exponent = (ratio[1] / ratio[0]).ln() / (n[1] as f64 / n[0] as f64).ln();
        ctx.log(format!(
            "paired: sup|u_0|/|alpha| {:.4e} -> {:.4e}, exponent {exponent:.3}",
            ratio[0], ratio[1]
        ));
        result.paired = Some(PairedSummary {
            n,
            sup_mean,
            alpha_norm: alpha,
            ratio,
            exponent,
        });
    }
    let path = out.join(SIMULATE_REPORT);
    Report::new("simulate", cfg, passed, result).write(&path)?;
    ctx.log(format!(
        "simulate: {} -> {}",
        verdict(passed),
        path.display()
    ));
    Ok(Outcome {
        passed,
        report: path,
    })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Re-derives the decay report from a stored history.
pub fn decay_report_from_history(
    cfg: &ExperimentConfig,
    ctx: &Context,
) -> Result<Outcome, CliError> {
    let path = ctx
        .history
        .clone()
        .unwrap_or_else(|| cfg.output.dir.join(HISTORY));
    let history: EnergyHistory = read_json(&path)?;
    if history.is_empty() || history.tracks.len() != history.params.k_max + 1 {
        return Err(CliError::Input {
            path,
            reason: "history is empty or inconsistent with its parameters".into(),
        });
    }
    let rep = decay_envelope_report(cfg, &history).map_err(|e| CliError::Input {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    let out = cfg.output.dir.join(DECAY_REPORT);
    rep.write(&out)?;
    write_file(
        &cfg.output.dir.join(DECAY_CSV),
        rep.result.to_csv().as_bytes(),
    )?;
    ctx.log(format!(
        "decay-report: {} -> {}",
        path.display(),
        out.display()
    ));
    Ok(Outcome {
        passed: rep.passed,
        report: out,
    })
}

/// Smooth random field of mode `k` with the axis parity of wavenumber `k_eff`, projected
/// onto the discrete divergence-free space.
pub fn random_mode(
    grid: &CylGrid,
    k: usize,
    k_eff: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ModeVelocity, CliError> {
    let kz = 2.0 * std::f64::consts::PI / grid.l_z;
    let mut w = ModeVelocity::zeros(grid, k);
    for (i, f) in w.fields.iter_mut().enumerate() {
        let c: [f64; 5] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let odd = component_parity(k_eff, slot::is_axial(i)) == Parity::Odd;
        *f = ScalarField::from_fn(grid, |r, z| {
            let base = if odd { r } else { 1.0 } * (1.0 - r * r);
            base * (c[0]
                + c[1] * r * r
                + c[2] * (kz * z).cos()
                + c[3] * (2.0 * kz * z).sin()
                + c[4] * (kz * z).sin())
        });
    }
    Ok(ModeOperator::projection(grid, k, k_eff)?.solve(grid, &w)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StokesCase {
    pub trial: usize,
    pub k: usize,
    pub nu: f64,
    /// `max_t (‖w(t)‖² + 2∫D) / ‖w_in‖² − 1`
    pub energy_excess: f64,
    pub final_energy_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceCase {
    pub k0: usize,
    pub leakage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StokesTestResult {
    pub cases: Vec<StokesCase>,
    pub max_energy_excess: f64,
    pub energy_inequality: bool,
    pub invariance: Vec<InvarianceCase>,
    pub max_leakage: f64,
    pub mode_invariance: bool,
    pub seconds: f64,
}

pub fn stokes_test(cfg: &ExperimentConfig, ctx: &Context) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let st = &cfg.stokes_test;
    let grid = grid_of(cfg)?;
    let mut cases = Vec::new();
    for trial in 0..st.trials {
        for &k in &st.k {
            for &nu in &st.nu {
                let mut rng = ChaCha8Rng::seed_from_u64(st.seed);
                rng.set_stream(trial as u64 * 1_000 + k as u64);
                let k_eff = k as f64;
                let w = random_mode(&grid, k, k_eff, &mut rng)?;
                let run = stokes_evolve(&grid, &w, &|_| None, k_eff, nu, st.dt, st.steps)?;
                let e0 = run.snapshots[0].energy;
                let excess = run
                    .snapshots
                    .iter()
                    .map(|s| (s.energy + 2.0 * s.dissipated) / e0 - 1.0)
                    .fold(f64::NEG_INFINITY, f64::max);
                cases.push(StokesCase {
                    trial,
                    k,
                    nu,
                    energy_excess: excess,
                    final_energy_ratio: run.snapshots.last().map_or(1.0, |s| s.energy / e0),
                });
            }
        }
    }
    let max_energy_excess = cases
        .iter()
        .map(|c| c.energy_excess)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut invariance = Vec::new();
    for &k0 in &st.invariance_modes {
        let mut rng = ChaCha8Rng::seed_from_u64(st.seed);
        rng.set_stream(1_000_000 + k0 as u64);
        let mut s = ModeState::zeros(grid.clone(), cfg.params);
        let k_eff = cfg.params.k_eff(k0, WavenumberConvention::Scaled);
        s.modes[k0] = random_mode(&grid, k0, k_eff, &mut rng)?;
        let leakage = mode_invariance_check(&s, k0, WavenumberConvention::Scaled, st.dt, st.steps)?;
        invariance.push(InvarianceCase { k0, leakage });
    }
    let max_leakage = invariance.iter().map(|c| c.leakage).fold(0.0, f64::max);
    let result = StokesTestResult {
        energy_inequality: max_energy_excess <= ENERGY_TOL,
        mode_invariance: max_leakage <= LEAKAGE_TOL,
        cases,
        max_energy_excess,
        invariance,
        max_leakage,
        seconds: start.elapsed().as_secs_f64(),
    };
    let passed = result.energy_inequality && result.mode_invariance;
    ctx.log(format!(
        "stokes-test: energy excess {:e}, leakage {:e}: {}",
        result.max_energy_excess,
        result.max_leakage,
        verdict(passed)
    ));
    let path = cfg.output.dir.join(STOKES_REPORT);
    Report::new("stokes_test", cfg, passed, result).write(&path)?;
    Ok(Outcome {
        passed,
        report: path,
    })
}

pub fn linear_flow(cfg: &ExperimentConfig, ctx: &Context) -> Result<Outcome, CliError> {
    linear_flow_inner(cfg, ctx, "linear_flow", LINEAR_FLOW_REPORT)
}

fn linear_flow_inner(
    cfg: &ExperimentConfig,
    ctx: &Context,
    kind: &str,
    file: &str,
) -> Result<Outcome, CliError> {
    let grid = grid_of(cfg)?;
    let profile = build_profile(cfg, &grid, cfg.params.n)?;
    let rep = linear_flow_ul(&grid, &profile, &cfg.params, cfg.step.t_end, cfg.step.dt)?;
    let passed =
        rep.orders.iter().all(|o| o.ratio.is_finite()) && rep.identity_residual.is_finite();
    ctx.log(format!(
        "linear-flow: {} orders, {}",
        rep.orders.len(),
        verdict(passed)
    ));
    let path = cfg.output.dir.join(file);
    Report::new(kind, cfg, passed, rep).write(&path)?;
    Ok(Outcome {
        passed,
        report: path,
    })
}

pub fn inequality_scan(cfg: &ExperimentConfig, ctx: &Context) -> Result<Outcome, CliError> {
    let sc = cfg.scan.as_ref().expect("validated").to_scan_config();
    let rep: ScanReport = constant_scan(&sc)?;
    let passed =
        rep.max_ratio.is_finite() && rep.refinement_delta <= 0.10 && rep.pointwise_violations == 0;
    ctx.log(format!(
        "inequality-scan: {} p = {}: max {:.4}, refinement delta {:.3}: {}",
        sc.check.name(),
        sc.p,
        rep.max_ratio,
        rep.refinement_delta,
        verdict(passed)
    ));
    let path = cfg.output.dir.join(SCAN_REPORT);
    Report::new("inequality_scan", cfg, passed, rep).write(&path)?;
    Ok(Outcome {
        passed,
        report: path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleLevel {
    pub dt: f64,
    pub steps: usize,
    /// `‖P u_oracle − u_mode‖ / ‖P u_oracle‖` at the final time.
    pub discrepancy: f64,
    pub oracle_divergence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub n_theta: usize,
    pub levels: Vec<OracleLevel>,
    /// Discrepancy at `dt` over that at `dt/2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub halving_ratio: Option<f64>,
    pub seconds: f64,
}

fn rel_l2(reference: &ModeState, other: &ModeState) -> f64 {
    let mut d = reference.clone();
    for (x, y) in d.modes.iter_mut().zip(&other.modes) {
        x.axpy(-1.0, y);
    }
    d.physical_norm_sq().sqrt() / reference.physical_norm_sq().sqrt()
}

pub fn oracle_compare(cfg: &ExperimentConfig, ctx: &Context) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let p = cfg.params;
    let grid = grid_of(cfg)?;
    let profile = build_profile(cfg, &grid, p.n)?;
    let s0 = make_initial_state(&profile, &p, grid.clone())?;
    let n_theta = cfg.oracle.resolved_n_theta(&p);
    let full0 = reconstruct_full(&s0, n_theta)?;
    let level = |dt: f64, steps: usize| -> Result<OracleLevel, CliError> {
        let step = StepConfig {
            dt,
            t_end: dt * steps as f64,
            ..cfg.step
        };
        let mode = run(&s0, &step, &RunOptions::default(), &mut [])
            .map_err(|f| CliError::Run(f.to_string()))?;
        let full = oracle_evolve(&full0, &p, dt, steps, cfg.oracle.scheme)?;
        let projected = project_to_modes(&full, &p)?;
        Ok(OracleLevel {
            dt,
            steps,
            discrepancy: rel_l2(&projected, &mode.state),
            oracle_divergence: full.divergence_max(),
        })
    };
    let mut levels = vec![level(cfg.step.dt, cfg.oracle.steps)?];
    if cfg.oracle.halving {
        levels.push(level(cfg.step.dt / 2.0, 2 * cfg.oracle.steps)?);
    }
    let halving_ratio = (levels.len() == 2).then(|| levels[0].discrepancy / levels[1].discrepancy);
    let passed = levels[0].discrepancy <= cfg.oracle.tolerance;
    ctx.log(format!(
        "oracle-compare: discrepancy {:e}{}: {}",
        levels[0].discrepancy,
        halving_ratio.map_or(String::new(), |r| format!(", halving ratio {r:.3}")),
        verdict(passed)
    ));
    let result = OracleResult {
        n_theta,
        levels,
        halving_ratio,
        seconds: start.elapsed().as_secs_f64(),
    };
    let path = cfg.output.dir.join(ORACLE_REPORT);
    Report::new("oracle_compare", cfg, passed, result).write(&path)?;
    Ok(Outcome {
        passed,
        report: path,
    })
}

impl From<Box<cylmode_core::stepper::RunFailure>> for CliError {
    fn from(f: Box<cylmode_core::stepper::RunFailure>) -> Self {
        CliError::Run(f.to_string())
    }
}
