use std::path::{Path, PathBuf};
use std::process::Command as Process;

use cylmode_cli::commands::*;
use cylmode_cli::config::*;
use cylmode_cli::report::sha256_hex;
use cylmode_cli::{CliError, Command, ExperimentConfig, RunMode, SCHEMA};
use cylmode_core::functionals::{DecayReport, EnergyHistory};
use cylmode_core::grid::{build_grid, Parity};
use cylmode_core::state::{read_checkpoint, ring_profile, Params};
use proptest::prelude::*;
use serde_json::Value;

fn quiet() -> Context {
    Context {
        quiet: true,
        history: None,
    }
}

fn small(dir: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig {
        params: Params {
            n: 4,
            k_max: 3,
            ..Params::default()
        },
        ..ExperimentConfig::default()
    };
    c.grid.n_r = 12;
    c.grid.n_z = 8;
    c.step.dt = 1e-3;
    c.step.t_end = 0.02;
    c.output.dir = dir.to_path_buf();
    c
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn config_errors(r: Result<impl std::fmt::Debug, CliError>) -> Vec<String> {
    match r {
        Err(CliError::Config(v)) => v,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn default_config_round_trips() {
    let c = ExperimentConfig::default();
    let text = c.to_toml();
    let back = ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.to_toml(), text);
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let c = ExperimentConfig::load(&path).unwrap();
            assert_eq!(
                ExperimentConfig::from_toml(&c.to_toml()).unwrap(),
                c,
                "{}",
                path.display()
            );
            seen += 1;
        }
    }
    assert!(seen >= 5);
}

#[test]
fn empty_document_is_the_default() {
    assert_eq!(
        ExperimentConfig::from_toml("").unwrap(),
        ExperimentConfig::default()
    );
}

#[test]
fn partial_sections_keep_defaults() {
    let c = ExperimentConfig::from_toml("mode = \"ans\"\n[params]\nN = 16\n[grid]\nn_r = 32\n")
        .unwrap();
    assert_eq!(c.mode, RunMode::Ans);
    assert_eq!(c.params.n, 16);
    assert_eq!(c.params.k_max, Params::default().k_max);
    assert_eq!(c.grid.n_r, 32);
    assert_eq!(c.grid.n_z, GridSection::default().n_z);
}

#[test]
fn unknown_keys_rejected() {
    for text in [
        "bogus = 1",
        "[params]\nNN = 3",
        "[grid]\nnr = 3",
        "[step]\nsteps = 4",
        "[scan]\nseeds = 1",
    ] {
        assert!(
            matches!(ExperimentConfig::from_toml(text), Err(CliError::Config(_))),
            "{text}"
        );
    }
}

#[test]
fn mode_sets_viscosity_and_out_overrides() {
    let mut c = ExperimentConfig::default();
    c.params.nu = 0.3;
    c.mode = RunMode::Ans;
    assert_eq!(c.clone().resolve(None, None).params.nu, 0.0);
    c.mode = RunMode::Ns;
    assert_eq!(c.clone().resolve(None, None).params.nu, 1.0);
    c.mode = RunMode::StokesOnly;
    let r = c.resolve(Some(Path::new("elsewhere")), None);
    assert_eq!(r.params.nu, 0.3);
    assert_eq!(r.output.dir, PathBuf::from("elsewhere"));
}

#[test]
fn validation_lists_every_problem_before_computing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut c = small(&out);
    c.params.eta = 0.6;
    c.params.k_max = 1;
    c.params.sigma = 0.9;
    c.grid.n_z = 7;
    c.step.dt = -1.0;
    c.step.cfl_safety = 2.0;
    c.output.snapshot_every = 0;
    let errs = config_errors(execute(Command::Simulate, &c, &quiet()));
    for key in [
        "params.eta",
        "params.K",
        "params.sigma",
        "grid.n_z",
        "step.dt",
        "step.cfl_safety",
        "output.snapshot_every",
    ] {
        assert!(
            errs.iter().any(|e| e.starts_with(key)),
            "{key} missing from {errs:?}"
        );
    }
    assert_eq!(errs.len(), 7);
    assert!(!out.exists());
}

#[test]
fn cross_field_checks() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.params.delta = 0.2;
    c.params.eta = 0.31;
    let errs = config_errors(c.validate(Command::Simulate));
    assert!(errs[0].contains("1/2 - delta"), "{errs:?}");

    let mut c = small(dir.path());
    c.params.m = 4;
    c.params.sigma = 0.2;
    assert!(config_errors(c.validate(Command::Simulate))[0].starts_with("params.sigma"));

    let mut c = small(dir.path());
    c.oracle.n_theta = Some(2 * c.params.k_max * c.params.n);
    assert!(config_errors(c.validate(Command::OracleCompare))[0].starts_with("oracle.n_theta"));
    assert!(c.validate(Command::Simulate).is_ok());

    let mut c = small(dir.path());
    c.profile.power = Some(0.0);
    assert!(config_errors(c.validate(Command::Simulate))[0].starts_with("profile.power"));

    let mut c = small(dir.path());
    c.params.n = 2;
    assert!(config_errors(c.validate(Command::LinearFlow))[0].contains("N >= 3"));

    let mut c = small(dir.path());
    c.profile.family = ProfileFamily::File;
    assert!(config_errors(c.validate(Command::Simulate))[0].contains("profile.path"));
}

#[test]
fn scan_with_zero_trials_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.scan = Some(ScanSection {
        trials: 0,
        seed: Some(1),
        ..ScanSection::default()
    });
    let errs = config_errors(execute(Command::InequalityScan, &c, &quiet()));
    assert_eq!(errs, vec!["scan.trials must be >= 1".to_string()]);
}

#[test]
fn scan_needs_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    assert!(config_errors(c.validate(Command::InequalityScan))[0].contains("[scan]"));
    c.scan = Some(ScanSection::default());
    assert_eq!(
        config_errors(c.validate(Command::InequalityScan)),
        vec!["scan.seed is required".to_string()]
    );
}

#[test]
fn seeds_must_fit_a_toml_integer() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.scan = Some(ScanSection {
        seed: Some(u64::MAX),
        ..ScanSection::default()
    });
    c.stokes_test.seed = 1 << 63;
    let errs = config_errors(c.validate(Command::Simulate));
    assert_eq!(errs.len(), 2, "{errs:?}");
    assert!(errs[0].starts_with("scan.seed") && errs[1].starts_with("stokes_test.seed"));
}

#[test]
fn scan_report_embeds_config_and_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.scan = Some(ScanSection {
        trials: 8,
        seed: Some(5),
        ..ScanSection::default()
    });
    let o = execute(Command::InequalityScan, &c, &quiet()).unwrap();
    assert!(o.passed);
    let v = json(&o.report);
    assert_eq!(v["schema"], SCHEMA);
    assert_eq!(v["kind"], "inequality_scan");
    let embedded: ExperimentConfig = serde_json::from_value(v["config"].clone()).unwrap();
    assert_eq!(embedded, c);
    assert_eq!(v["config_hash"], sha256_hex(c.to_toml().as_bytes()));
    assert_eq!(v["code_hash"].as_str().unwrap().len(), 64);
    assert_eq!(v["result"]["trials"], 8);
}

#[test]
fn zero_horizon_reports_initial_functionals_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.step.t_end = 0.0;
    let o = execute(Command::Simulate, &c, &quiet()).unwrap();
    assert!(o.passed);
    let v = json(&o.report);
    let r = &v["result"];
    assert_eq!(r["steps"], 0);
    assert_eq!(r["t_final"], 0.0);
    for f in r["functionals"].as_array().unwrap() {
        assert_eq!(f["e"], f["e_initial"]);
        assert!(f["e_initial"].as_f64().unwrap() > 0.0);
        assert!(f["d_initial"].as_f64().unwrap() > 0.0);
    }
    let d: DecayReport =
        serde_json::from_value(json(&dir.path().join(DECAY_REPORT))["result"].clone()).unwrap();
    assert_eq!(d.metadata.snapshots, 1);
    assert_eq!(d.metadata.horizon, 0.0);
}

#[test]
fn stokes_only_run_has_no_cascade() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.mode = RunMode::StokesOnly;
    let o = execute(Command::Simulate, &c, &quiet()).unwrap();
    assert!(o.passed);
    let r = &json(&o.report)["result"];
    assert!(r["leakage"].as_f64().unwrap() <= 1e-12);
    assert_eq!(r["invariants"]["no_cascade"], true);
    assert_eq!(r["invariants"]["dissipative"], true);
    let d = json(&dir.path().join(DECAY_REPORT));
    assert_eq!(d["result"]["pass_flags"]["no_cascade"], true);
}

#[test]
fn simulate_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.output.checkpoint_every = 5;
    let o = execute(Command::Simulate, &c, &quiet()).unwrap();
    assert!(o.passed);
    let r = &json(&o.report)["result"];
    assert_eq!(r["steps"], 20);
    assert_eq!(r["completed"], true);
    assert!(r["max_divergence"].as_f64().unwrap() <= 1e-9);
    assert!(r["max_flux_residual"].as_f64().unwrap() <= c.output.flux_tol);
    assert!(r["smallness"]["ns_lhs"].as_f64().unwrap() > 0.0);
    for f in [
        SIMULATE_REPORT,
        DECAY_REPORT,
        DECAY_CSV,
        HISTORY,
        BUDGET,
        CHECKPOINT,
        FINAL_STATE,
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join(BUDGET)).unwrap();
    assert!(csv.starts_with("t,k,energy,"));
    assert_eq!(csv.lines().count(), 1 + 20 * 4);
    let last = read_checkpoint(&dir.path().join(FINAL_STATE), c.grid.scheme, &c.params).unwrap();
    assert!((last.t - 0.02).abs() < 1e-12);
    let mid = read_checkpoint(&dir.path().join(CHECKPOINT), c.grid.scheme, &c.params).unwrap();
    assert!(mid.t > 0.0 && mid.t <= last.t + 1e-12);
}

#[test]
fn decay_report_from_history_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    execute(Command::Simulate, &c, &quiet()).unwrap();
    let path = dir.path().join(DECAY_REPORT);
    let in_run = std::fs::read(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    let o = execute(Command::DecayReport, &c, &quiet()).unwrap();
    assert_eq!(o.report, path);
    assert_eq!(std::fs::read(&path).unwrap(), in_run);
}

#[test]
fn decay_report_rejects_missing_and_corrupt_history() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(dir.path());
    let missing = execute(Command::DecayReport, &c, &quiet());
    assert!(matches!(missing, Err(CliError::Input { .. })));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"params\": 3").unwrap();
    let ctx = Context {
        quiet: true,
        history: Some(bad.clone()),
    };
    match execute(Command::DecayReport, &c, &ctx) {
        Err(CliError::Input { path, reason }) => {
            assert_eq!(path, bad);
            assert!(reason.contains("corrupt"));
        }
        other => panic!("{other:?}"),
    }
    let empty = EnergyHistory::new(c.params, 1, false);
    std::fs::write(&bad, serde_json::to_string(&empty).unwrap()).unwrap();
    assert!(matches!(
        execute(Command::DecayReport, &c, &ctx),
        Err(CliError::Input { .. })
    ));
}

#[test]
fn profile_file_matches_the_ring_profile() {
    let dir = tempfile::tempdir().unwrap();
    let ring = small(&dir.path().join("ring"));
    execute(Command::Simulate, &ring, &quiet()).unwrap();
    let g = build_grid(
        ring.grid.n_r,
        ring.grid.n_z,
        ring.grid.l_z,
        ring.grid.scheme,
    )
    .unwrap();
    let p = ring_profile(&g, Parity::velocity(4), ring.profile.amplitude, 1.0).unwrap();
    let file = ProfileFile {
        n_r: g.n_r,
        n_z: g.n_z,
        a_r: p.a_r.data.clone(),
        a_z: p.a_z.data.clone(),
        b_r: p.b_r.data.clone(),
        b_z: p.b_z.data.clone(),
    };
    let path = dir.path().join("profile.json");
    std::fs::write(&path, serde_json::to_string(&file).unwrap()).unwrap();
    let mut from_file = small(&dir.path().join("file"));
    from_file.profile.family = ProfileFamily::File;
    from_file.profile.path = Some(path);
    execute(Command::Simulate, &from_file, &quiet()).unwrap();
    let e = |d: &str| {
        json(&dir.path().join(d).join(SIMULATE_REPORT))["result"]["energy_final"]
            .as_f64()
            .unwrap()
    };
    let (a, b) = (e("ring"), e("file"));
    assert!((a - b).abs() <= 1e-12 * a, "{a} vs {b}");

    let mut wrong = from_file.clone();
    wrong.grid.n_r = 14;
    assert!(matches!(
        execute(Command::Simulate, &wrong, &quiet()),
        Err(CliError::Input { .. })
    ));
}

#[test]
fn paired_run_emits_scaling_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.paired = Some(PairedSection { n: 8 });
    let o = execute(Command::Simulate, &c, &quiet()).unwrap();
    let p = &json(&o.report)["result"]["paired"];
    assert_eq!(p["n"], serde_json::json!([4, 8]));
    let ratio: Vec<f64> = serde_json::from_value(p["ratio"].clone()).unwrap();
    let exponent = p["exponent"].as_f64().unwrap();
    assert!((exponent - (ratio[1] / ratio[0]).log2()).abs() < 1e-12);
    assert!(exponent < 0.0);
}

#[test]
fn stokes_test_default_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig {
        output: OutputSection {
            dir: dir.path().to_path_buf(),
            ..OutputSection::default()
        },
        ..ExperimentConfig::default()
    };
    let o = execute(Command::StokesTest, &c, &quiet()).unwrap();
    assert!(o.passed);
    let r = &json(&o.report)["result"];
    assert_eq!(r["cases"].as_array().unwrap().len(), 10 * 4 * 2);
    assert!(r["max_energy_excess"].as_f64().unwrap() <= 1e-10);
    assert!(r["max_leakage"].as_f64().unwrap() <= 1e-12);
    for case in r["cases"].as_array().unwrap() {
        assert!(case["final_energy_ratio"].as_f64().unwrap() <= 1.0);
    }
}

#[test]
fn linear_flow_and_oracle_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(dir.path());
    c.step.t_end = 0.05;
    let o = execute(Command::LinearFlow, &c, &quiet()).unwrap();
    assert!(o.passed);
    assert_eq!(json(&o.report)["result"]["n"], 4);

    c.params.k_max = 2;
    c.step.dt = 1e-4;
    c.oracle.steps = 40;
    let o = execute(Command::OracleCompare, &c, &quiet()).unwrap();
    let r = &json(&o.report)["result"];
    assert_eq!(r["n_theta"], 32);
    assert_eq!(r["levels"].as_array().unwrap().len(), 2);
    let d = r["levels"][0]["discrepancy"].as_f64().unwrap();
    assert!(d <= 1e-2, "{d}");
    assert!((r["halving_ratio"].as_f64().unwrap() - 2.0).abs() < 0.2);
    assert!(o.passed);
}

fn binary() -> Process {
    Process::new(env!("CARGO_BIN_EXE_cylmode"))
}

#[test]
fn binary_exit_codes_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    let mut c = small(Path::new("unused"));
    c.mode = RunMode::StokesOnly;
    c.step.t_end = 0.005;
    std::fs::write(&cfg, c.to_toml()).unwrap();
    let out = dir.path().join("o");
    let run = binary()
        .args(["simulate", "--quiet", "--threads", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(
        run.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(run.stderr.is_empty());
    assert!(out.join(SIMULATE_REPORT).is_file());

    let env_out = dir.path().join("from_env");
    let run = binary()
        .args(["stokes-test", "--quiet", "--config"])
        .arg(&cfg)
        .env(OUT_ENV, &env_out)
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0));
    assert!(env_out.join(STOKES_REPORT).is_file());

    std::fs::write(&cfg, "[scan]\ntrials = 0\n").unwrap();
    let run = binary()
        .args(["inequality-scan", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(
        err.contains("scan.trials") && err.contains("scan.seed"),
        "{err}"
    );

    let run = binary()
        .args(["simulate", "--config"])
        .arg(dir.path().join("absent.toml"))
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2));

    let run = binary().args(["simulate"]).output().unwrap();
    assert_eq!(run.status.code(), Some(2));
}

fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
    (
        prop_oneof![
            Just(RunMode::Ns),
            Just(RunMode::Ans),
            Just(RunMode::StokesOnly),
            Just(RunMode::LinearFlow)
        ],
        (
            2usize..40,
            2usize..12,
            0.0..0.25f64,
            0.0..0.25f64,
            1e-6..1.0f64,
        ),
        (4usize..80, 2usize..40, 0.1..20.0f64),
        (1e-6..1e-1f64, 0.0..10.0f64, any::<bool>(), 0usize..20),
        (
            proptest::option::of(0.0..5.0f64),
            proptest::option::of(0..i64::MAX as u64),
            proptest::option::of(2usize..64),
        ),
    )
        .prop_map(
            |(
                mode,
                (n, k, delta, eta, eps),
                (n_r, half_nz, l_z),
                (dt, t_end, bdf2, every),
                (power, seed, pair),
            )| {
                let mut c = ExperimentConfig {
                    mode,
                    ..ExperimentConfig::default()
                };
                c.params = Params {
                    n,
                    k_max: k,
                    delta,
                    eta,
                    small_eps: eps,
                    ..Params::default()
                };
                c.grid.n_r = n_r;
                c.grid.n_z = 2 * half_nz;
                c.grid.l_z = l_z;
                c.step.dt = dt;
                c.step.t_end = t_end;
                if bdf2 {
                    c.step.scheme = cylmode_core::stepper::Scheme::ImexBdf2;
                }
                c.output.checkpoint_every = every;
                c.profile.power = power;
                c.scan = seed.map(|s| ScanSection {
                    seed: Some(s),
                    ..ScanSection::default()
                });
                c.paired = pair.map(|n| PairedSection { n });
                c
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip_is_identity(c in arb_config()) {
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_toml(), c.to_toml());
    }
}
