use std::fs;
use std::path::Path;

use clap::Parser;
use hjm_lv::cli::{content_hash, execute, run_pipeline, Cli, RunConfig};
use hjm_lv::engine::SimMode;

fn small(out: &Path) -> RunConfig {
    RunConfig {
        out_dir: out.to_path_buf(),
        n_paths: 600,
        workers: 2,
        expiries: vec![2.0, 10.0],
        tenors: vec![1.0, 10.0],
        ..RunConfig::default()
    }
}

fn manifest_entries(path: &Path) -> Vec<(String, String, String)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| l.starts_with("output.") || l.starts_with("input."))
        .map(|l| {
            let (k, v) = l.split_once(" = ").unwrap();
            let (h, p) = v.split_once(' ').unwrap();
            (k.to_string(), h.to_string(), p.to_string())
        })
        .collect()
}

#[test]
fn fixture_run_writes_every_artifact_with_matching_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_pipeline(&small(dir.path())).unwrap();
    for name in ["curve", "surface", "grid", "results", "bonds", "report", "config"] {
        assert!(a.files.iter().any(|(n, p)| n == name && p.is_file()), "{name}");
    }
    let entries = manifest_entries(&a.manifest);
    assert_eq!(entries.len(), 7);
    for (_, h, p) in entries {
        assert_eq!(h, content_hash(&fs::read(p).unwrap()));
    }
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "expiry,tenor,strike_offset,market_vol,model_vol,abs_err,rel_err,mc_stderr"
    );
    assert_eq!(lines.count(), 2 * 2 * 5);
    let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(results.starts_with("expiry,tenor,strike_offset,mc_price,mc_stderr,model_implied_vol\n"));
}

#[test]
fn rerun_from_written_config_is_byte_identical() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    run_pipeline(&small(d1.path())).unwrap();
    let mut again = RunConfig::from_file(d1.path().join("config.txt")).unwrap();
    again.out_dir = d2.path().to_path_buf();
    again.workers = 5;
    run_pipeline(&again).unwrap();
    for f in ["curve.csv", "surface.csv", "grid.csv", "results.csv", "bonds.csv", "report.csv"] {
        assert_eq!(
            fs::read(d1.path().join(f)).unwrap(),
            fs::read(d2.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn user_inputs_are_hashed_as_inputs() {
    let d1 = tempfile::tempdir().unwrap();
    run_pipeline(&small(d1.path())).unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        curve: Some(d1.path().join("curve.csv")),
        surface: Some(d1.path().join("surface.csv")),
        mode: SimMode::ConstantVol,
        ..small(d2.path())
    };
    let a = run_pipeline(&cfg).unwrap();
    let entries = manifest_entries(&a.manifest);
    assert!(entries.iter().any(|(k, _, _)| k == "input.curve"));
    assert!(entries.iter().any(|(k, _, _)| k == "input.surface"));
    assert!(!d2.path().join("curve.csv").exists());
    // Same inputs read back from CSV calibrate to the same grid.
    assert_eq!(
        fs::read(d1.path().join("grid.csv")).unwrap(),
        fs::read(d2.path().join("grid.csv")).unwrap()
    );
}

#[test]
fn stage_errors_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        curve: Some(dir.path().join("missing.csv")),
        surface: Some(dir.path().join("missing.csv")),
        ..small(dir.path())
    };
    let e = run_pipeline(&cfg).unwrap_err();
    assert_eq!(e.stage, "config");

    fs::write(dir.path().join("c.csv"), "tenor_years,forward_rate\n0,0.03\n").unwrap();
    fs::write(dir.path().join("s.csv"), "expiry_years,tenor_years,strike_offset,normal_vol\n1,1,0,0.01\n").unwrap();
    let cfg = RunConfig {
        curve: Some(dir.path().join("c.csv")),
        surface: Some(dir.path().join("s.csv")),
        ..small(dir.path())
    };
    let e = run_pipeline(&cfg).unwrap_err();
    assert_eq!(e.stage, "inputs");
    assert!(e.to_string().contains("stage 'inputs'"));
}

#[test]
fn cli_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let p = |f: &str| dir.path().join(f).display().to_string();
    let run = |args: &[&str]| execute(Cli::try_parse_from(args.iter().copied()).unwrap());

    run(&["hjm-lv", "fixtures", "--out", &p("s.csv"), "--seed", "3", "--curve-out", &p("c.csv")]).unwrap();
    run(&["hjm-lv", "calibrate", "--curve", &p("c.csv"), "--surface", &p("s.csv"), "--out", &p("g.csv")]).unwrap();
    assert!(fs::read_to_string(p("g.csv"))
        .unwrap()
        .starts_with("calendar_index,maturity_index,strike_offset,sigma\n"));

    run(&["hjm-lv", "report", "--smile", "12,40", "--out", &p("smile.csv")]).unwrap();
    let smile = fs::read_to_string(p("smile.csv")).unwrap();
    assert!(smile.starts_with("calendar_index,maturity_index,x,w_fitted\n"));
    assert!(smile.contains("\n12,40,0,"));
    run(&["hjm-lv", "report", "--lv", "12,40", "--out", &p("lv.csv")]).unwrap();
    assert!(fs::read_to_string(p("lv.csv"))
        .unwrap()
        .starts_with("calendar_index,maturity_index,x,v_local\n"));
    assert!(run(&["hjm-lv", "report", "--lv", "500,40", "--out", &p("bad.csv")]).is_err());

    let cfg = p("run.cfg");
    fs::write(&cfg, format!("paths = 200\nexpiries = 2\ntenors = 5\nout_dir = {}\n", p("out"))).unwrap();
    run(&["hjm-lv", "run", "--config", &cfg, "--dry-run"]).unwrap();
    assert!(!dir.path().join("out").exists());
    run(&["hjm-lv", "simulate", "--config", &cfg, "--mode", "const", "--cutoff", "none", "--out", &p("r.csv")])
        .unwrap();
    assert_eq!(fs::read_to_string(p("r.csv")).unwrap().lines().count(), 1 + 5);
    run(&["hjm-lv", "run", "--config", &cfg]).unwrap();
    assert!(dir.path().join("out/manifest.txt").is_file());

    assert!(run(&["hjm-lv", "report", "--out", &p("x.csv")]).is_err());
    assert!(Cli::try_parse_from(["hjm-lv", "simulate", "--mode", "sabr"]).is_err());
}
