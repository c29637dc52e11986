//! Experiment configuration.
//!
//! A config is a TOML document. Every section is optional and falls back to the
//! defaults below; unknown keys are rejected.
//!
//! ```toml
//! mode = "ns"                  # ns | ans | stokes_only | linear_flow
//!
//! [params]                     # N, K, delta, eta, m, sigma, small_eps (nu follows mode)
//! N = 8
//! K = 6
//!
//! [grid]                       # n_r, n_z, l_z, scheme
//! [step]                       # dt, t_end, cfl_safety, scheme, div_tol, budget_every
//! [profile]                    # family = "ring" (amplitude, power) or "file" (path)
//! [output]                     # dir, snapshot_every, checkpoint_every, ...
//! [scan]                       # check, p, trials, seed (required), family, n_r, n_theta, n_z
//! [oracle]                     # n_theta, scheme, steps, halving, tolerance
//! [stokes_test]                # trials, seed, k, nu, dt, steps, invariance_modes
//! [paired]                     # n: second N for the mean-mode scaling summary
//! ```
//!
//! `mode = "ns"` sets `nu = 1` and `mode = "ans"` sets `nu = 0`; the other modes keep
//! `params.nu`. The output directory can be overridden by `CYLMODE_OUT` and by `--out`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use cylmode_core::grid::RadialScheme;
use cylmode_core::inequalities::{Check, FamilySpec, ScanConfig};
use cylmode_core::oracle::OracleScheme;
use cylmode_core::state::Params;
use cylmode_core::stepper::StepConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const OUT_ENV: &str = "CYLMODE_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Ns,
    Ans,
    StokesOnly,
    LinearFlow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n_r: usize,
    pub n_z: usize,
    pub l_z: f64,
    pub scheme: RadialScheme,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n_r: 24,
            n_z: 16,
            l_z: 2.0 * PI,
            scheme: RadialScheme::GaussRadauParity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileFamily {
    #[default]
    Ring,
    File,
}

/// Built-in ring profile, or `(a^r, a^z, b^r, b^z)` node values read from a JSON file
/// (see [`crate::commands::ProfileFile`]); the azimuthal components are always derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    pub family: ProfileFamily,
    pub amplitude: f64,
    /// Radial power of the ring envelope; `N - 1 mod 2` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for ProfileSection {
    fn default() -> Self {
        Self {
            family: ProfileFamily::Ring,
            amplitude: 0.05,
            power: None,
            path: None,
        }
    }
}

impl ProfileSection {
    pub fn ring_power(&self, n: usize) -> f64 {
        self.power.unwrap_or(((n + 1) % 2) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub snapshot_every: usize,
    /// Steps between checkpoints; 0 writes only the final state.
    pub checkpoint_every: usize,
    pub budget_csv: bool,
    pub history: bool,
    pub decay_report: bool,
    /// Highest vertical derivative order tracked by the functionals.
    pub track_j: usize,
    pub mixed: bool,
    /// Largest admissible flux identity residual at any snapshot.
    pub flux_tol: f64,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshot_every: 1,
            checkpoint_every: 0,
            budget_csv: true,
            history: true,
            decay_report: true,
            track_j: 1,
            mixed: false,
            flux_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub check: Check,
    pub p: f64,
    pub trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub family: FamilySpec,
    pub n_r: usize,
    pub n_theta: usize,
    pub n_z: usize,
}

impl Default for ScanSection {
    fn default() -> Self {
        let d = ScanConfig::default();
        Self {
            check: d.check,
            p: d.p,
            trials: d.trials,
            seed: None,
            family: d.family,
            n_r: d.n_r,
            n_theta: d.n_theta,
            n_z: d.n_z,
        }
    }
}

impl ScanSection {
    pub fn to_scan_config(&self) -> ScanConfig {
        ScanConfig {
            check: self.check,
            p: self.p,
            trials: self.trials,
            seed: self.seed.unwrap_or_default(),
            family: self.family.clone(),
            n_r: self.n_r,
            n_theta: self.n_theta,
            n_z: self.n_z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    /// Azimuthal points of the 3-D field; `4KN` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_theta: Option<usize>,
    pub scheme: OracleScheme,
    pub steps: usize,
    /// Repeat at `dt/2` and report the discrepancy ratio.
    pub halving: bool,
    /// Largest admissible relative `L²` discrepancy.
    pub tolerance: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            n_theta: None,
            scheme: OracleScheme::Bdf2,
            steps: 200,
            halving: true,
            tolerance: 1e-2,
        }
    }
}

impl OracleSection {
    pub fn resolved_n_theta(&self, p: &Params) -> usize {
        self.n_theta.unwrap_or(4 * p.k_max * p.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StokesTestSection {
    pub trials: usize,
    pub seed: u64,
    pub k: Vec<usize>,
    pub nu: Vec<f64>,
    pub dt: f64,
    pub steps: usize,
    pub invariance_modes: Vec<usize>,
}

impl Default for StokesTestSection {
    fn default() -> Self {
        Self {
            trials: 10,
            seed: 0,
            k: vec![0, 1, 2, 5],
            nu: vec![0.0, 1.0],
            dt: 0.01,
            steps: 20,
            invariance_modes: vec![0, 1, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairedSection {
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: RunMode,
    pub params: Params,
    pub grid: GridSection,
    pub step: StepConfig,
    pub profile: ProfileSection,
    pub output: OutputSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSection>,
    pub oracle: OracleSection,
    pub stokes_test: StokesTestSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paired: Option<PairedSection>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Ns,
            params: Params::default(),
            grid: GridSection::default(),
            step: StepConfig::default(),
            profile: ProfileSection::default(),
            output: OutputSection::default(),
            scan: None,
            oracle: OracleSection::default(),
            stokes_test: StokesTestSection::default(),
            paired: None,
        }
    }
}

/// The subcommand a config is validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    StokesTest,
    LinearFlow,
    InequalityScan,
    OracleCompare,
    DecayReport,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::StokesTest => "stokes-test",
            Command::LinearFlow => "linear-flow",
            Command::InequalityScan => "inequality-scan",
            Command::OracleCompare => "oracle-compare",
            Command::DecayReport => "decay-report",
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    /// Applies the mode's viscosity, the output overrides (`--out` beats `CYLMODE_OUT`)
    /// and resolves relative profile paths against `base`.
    pub fn resolve(mut self, out: Option<&Path>, base: Option<&Path>) -> Self {
        match self.mode {
            RunMode::Ns => self.params.nu = 1.0,
            RunMode::Ans => self.params.nu = 0.0,
            RunMode::StokesOnly | RunMode::LinearFlow => {}
        }
        if let Some(dir) = std::env::var_os(OUT_ENV) {
            self.output.dir = PathBuf::from(dir);
        }
        if let Some(dir) = out {
            self.output.dir = dir.to_path_buf();
        }
        if let (Some(path), Some(base)) = (&self.profile.path, base) {
            if path.is_relative() {
                self.profile.path = Some(base.join(path));
            }
        }
        self
    }

    /// Every problem that makes the config unusable for `cmd`, in one pass.
    pub fn validate(&self, cmd: Command) -> Result<(), CliError> {
        let mut errs = Vec::new();
        let mut bad = |cond: bool, msg: String| {
            if cond {
                errs.push(msg);
            }
        };
        let p = &self.params;
        bad(
            !(p.nu >= 0.0 && p.nu.is_finite()),
            format!("params.nu = {} must be finite and >= 0", p.nu),
        );
        bad(p.n < 2, format!("params.N = {} must be >= 2", p.n));
        bad(
            !(0.0..0.25).contains(&p.delta),
            format!("params.delta = {} outside [0, 1/4)", p.delta),
        );
        bad(
            !(p.eta >= 0.0 && p.eta < 0.5 - p.delta),
            format!(
                "params.eta = {} must satisfy 0 <= eta < 1/2 - delta = {}",
                p.eta,
                0.5 - p.delta
            ),
        );
        bad(p.k_max < 2, format!("params.K = {} must be >= 2", p.k_max));
        bad(p.m < 3, format!("params.m = {} must be >= 3", p.m));
        if p.m >= 3 {
            let lo = 1.0 / (2.0 * p.m as f64 - 3.0);
            bad(
                !(p.sigma > lo && p.sigma < 0.5),
                format!(
                    "params.sigma = {} outside (1/(2m-3), 1/2) = ({lo}, 0.5)",
                    p.sigma
                ),
            );
        }
        bad(
            !(p.small_eps > 0.0),
            format!("params.small_eps = {} must be > 0", p.small_eps),
        );

        let g = &self.grid;
        bad(g.n_r < 4, format!("grid.n_r = {} must be >= 4", g.n_r));
        bad(
            g.n_z < 4 || g.n_z % 2 != 0,
            format!("grid.n_z = {} must be even and >= 4", g.n_z),
        );
        bad(
            !(g.l_z > 0.0 && g.l_z.is_finite()),
            format!("grid.l_z = {} must be positive", g.l_z),
        );

        let s = &self.step;
        bad(
            !(s.dt > 0.0 && s.dt.is_finite()),
            format!("step.dt = {} must be positive", s.dt),
        );
        bad(
            !(s.t_end >= 0.0 && s.t_end.is_finite()),
            format!("step.t_end = {} must be >= 0", s.t_end),
        );
        bad(
            !(s.cfl_safety > 0.0 && s.cfl_safety <= 1.0),
            format!("step.cfl_safety = {} outside (0, 1]", s.cfl_safety),
        );
        bad(
            !(s.div_tol > 0.0),
            format!("step.div_tol = {} must be > 0", s.div_tol),
        );

        let needs_profile = matches!(
            cmd,
            Command::Simulate | Command::LinearFlow | Command::OracleCompare
        );
        if needs_profile {
            let pr = &self.profile;
            match pr.family {
                ProfileFamily::Ring => {
                    bad(
                        !pr.amplitude.is_finite(),
                        format!("profile.amplitude = {} must be finite", pr.amplitude),
                    );
                    bad(
                        pr.path.is_some(),
                        "profile.path is only used with family = \"file\"".into(),
                    );
                    let mut ns = vec![p.n];
                    if let Some(pair) = &self.paired {
                        ns.push(pair.n);
                    }
                    for n in ns {
                        let pw = pr.ring_power(n);
                        bad(
                            !(pw >= 0.0 && pw.is_finite()),
                            format!("profile.power = {pw} must be >= 0"),
                        );
                        if g.scheme == RadialScheme::GaussRadauParity && n >= 1 {
                            bad(
                                pw.fract() != 0.0 || (pw as usize + 1) % 2 != n % 2,
                                format!("profile.power = {pw} is not an integer of the parity of N - 1 = {}", n - 1),
                            );
                        }
                    }
                }
                ProfileFamily::File => match &pr.path {
                    None => bad(true, "profile.family = \"file\" needs profile.path".into()),
                    Some(path) => bad(
                        !path.is_file(),
                        format!("profile.path {} does not exist", path.display()),
                    ),
                },
            }
        }

        let o = &self.output;
        if cmd == Command::Simulate {
            bad(
                o.snapshot_every == 0,
                "output.snapshot_every must be >= 1".into(),
            );
            bad(
                !(o.flux_tol > 0.0),
                format!("output.flux_tol = {} must be > 0", o.flux_tol),
            );
            bad(
                o.mixed && o.track_j < 1,
                "output.mixed needs output.track_j >= 1".into(),
            );
            if let Some(pair) = &self.paired {
                bad(pair.n < 2, format!("paired.n = {} must be >= 2", pair.n));
                bad(
                    pair.n == p.n,
                    format!("paired.n = {} repeats params.N", pair.n),
                );
                bad(
                    matches!(self.mode, RunMode::LinearFlow),
                    "paired runs need mode ns, ans or stokes_only".into(),
                );
            }
        }
        if matches!(cmd, Command::LinearFlow)
            || (cmd == Command::Simulate && self.mode == RunMode::LinearFlow)
        {
            bad(
                p.n < 3,
                format!("linear flow needs params.N >= 3, got {}", p.n),
            );
        }
        if let Some(seed) = self.scan.as_ref().and_then(|sc| sc.seed) {
            bad(
                seed > i64::MAX as u64,
                format!("scan.seed = {seed} exceeds the TOML integer range"),
            );
        }
        let seed = self.stokes_test.seed;
        bad(
            seed > i64::MAX as u64,
            format!("stokes_test.seed = {seed} exceeds the TOML integer range"),
        );

        if cmd == Command::InequalityScan {
            match &self.scan {
                None => bad(true, "inequality-scan needs a [scan] section".into()),
                Some(sc) => {
                    bad(sc.seed.is_none(), "scan.seed is required".into());
                    bad(sc.trials == 0, "scan.trials must be >= 1".into());
                    bad(!(sc.p >= 2.0), format!("scan.p = {} must be >= 2", sc.p));
                    if sc.p.is_finite() {
                        match sc.check {
                            Check::ZeroMean => {
                                bad(sc.p > 6.0, format!("scan.p = {} > 6 for zero_mean", sc.p))
                            }
                            Check::RadialL4 => bad(
                                sc.p != 4.0,
                                format!("scan.p = {} must be 4 for radial_l4", sc.p),
                            ),
                            Check::Isotropic => {}
                            Check::Radial | Check::VerticalInterp => {}
                        }
                    } else {
                        bad(true, "scan.p must be finite".into());
                    }
                    bad(sc.n_r < 2, format!("scan.n_r = {} must be >= 2", sc.n_r));
                    bad(
                        sc.n_theta < 4,
                        format!("scan.n_theta = {} must be >= 4", sc.n_theta),
                    );
                    bad(
                        sc.n_z < 4 || sc.n_z % 2 != 0,
                        format!("scan.n_z = {} must be even and >= 4", sc.n_z),
                    );
                    let a = sc.family.log10_amplitude;
                    bad(
                        !(a[0] <= a[1]),
                        format!("scan.family.log10_amplitude = {a:?} is not an interval"),
                    );
                    bad(
                        sc.family.max_terms == 0,
                        "scan.family.max_terms must be >= 1".into(),
                    );
                }
            }
        }

        if cmd == Command::OracleCompare {
            let or = &self.oracle;
            let nt = or.resolved_n_theta(p);
            bad(
                nt <= 2 * p.k_max * p.n,
                format!(
                    "oracle.n_theta = {nt} cannot resolve K N = {} (needs > 2KN)",
                    p.k_max * p.n
                ),
            );
            bad(or.steps == 0, "oracle.steps must be >= 1".into());
            bad(
                !(or.tolerance > 0.0),
                format!("oracle.tolerance = {} must be > 0", or.tolerance),
            );
        }

        if cmd == Command::StokesTest {
            let st = &self.stokes_test;
            bad(st.trials == 0, "stokes_test.trials must be >= 1".into());
            bad(st.k.is_empty(), "stokes_test.k is empty".into());
            bad(st.nu.is_empty(), "stokes_test.nu is empty".into());
            for nu in &st.nu {
                bad(
                    !(*nu >= 0.0 && nu.is_finite()),
                    format!("stokes_test.nu contains {nu}"),
                );
            }
            bad(
                !(st.dt > 0.0 && st.dt.is_finite()),
                format!("stokes_test.dt = {} must be positive", st.dt),
            );
            bad(st.steps == 0, "stokes_test.steps must be >= 1".into());
            for &k0 in &st.invariance_modes {
                bad(
                    k0 > p.k_max,
                    format!(
                        "stokes_test.invariance_modes entry {k0} exceeds K = {}",
                        p.k_max
                    ),
                );
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(errs))
        }
    }
}
