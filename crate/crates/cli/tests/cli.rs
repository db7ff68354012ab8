use std::path::Path;
use std::process::{Command, Output};

use rmcam_tmr::experiment::{run_trial, ClusterSource, SWEEP_CSV_HEADER};
use rmcam_tmr::{DefectMap, RecoveryReport, RepairPlan, ResolvedAccess, TrialConfig};

fn cli(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rmcam-tmr"));
    cmd.args(args).env_remove("RMCAM_TMR_SEED");
    if let Some(s) = seed_env {
        cmd.env("RMCAM_TMR_SEED", s);
    }
    cmd.output().unwrap()
}

fn ok(args: &[&str], seed_env: Option<&str>) -> String {
    let out = cli(args, seed_env);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_matches_library_map() {
    let text = ok(
        &[
            "generate",
            "--rows",
            "64",
            "--cols",
            "48",
            "--uniform-rate",
            "0.1",
            "--seed",
            "3",
        ],
        None,
    );
    let map: DefectMap = text.parse().unwrap();
    let config = TrialConfig {
        rows: 64,
        cols: 48,
        uniform_rate: 0.1,
        seed: 3,
        ..TrialConfig::default()
    };
    assert_eq!(map, rmcam_tmr::experiment::generate_map(&config).unwrap().0);
}

#[test]
fn precedence_file_then_env_then_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(
        &cfg,
        "# small array\nrows = 32\ncols = 32\nuniform_rate = 0.2\nseed = 1\n",
    )
    .unwrap();
    let cfg = p(&cfg);
    let from_file = ok(&["generate", "--config", cfg], None);
    let from_env = ok(&["generate", "--config", cfg], Some("2"));
    let from_flag = ok(&["generate", "--config", cfg, "--seed", "2"], Some("9"));
    let base = TrialConfig {
        rows: 32,
        cols: 32,
        uniform_rate: 0.2,
        ..TrialConfig::default()
    };
    let expect = |seed| {
        rmcam_tmr::experiment::generate_map(&base.with_seed(seed))
            .unwrap()
            .0
            .to_text()
    };
    assert_eq!(from_file, expect(1));
    assert_eq!(from_env, expect(2));
    assert_eq!(from_flag, expect(2));
    let overridden = ok(
        &["generate", "--config", cfg, "--set", "uniform_rate=0"],
        None,
    );
    assert!(!overridden.lines().skip(1).any(|l| l.contains('1')));
}

#[test]
fn repair_report_matches_library_and_resolve_reads_plan() {
    let dir = tempfile::tempdir().unwrap();
    let plan_path = dir.path().join("plan.json");
    let report = ok(
        &[
            "repair",
            "--uniform-rate",
            "0.04",
            "--cluster-rate",
            "0.016",
            "--seed",
            "12",
            "--plan",
            p(&plan_path),
        ],
        None,
    );
    let report: RecoveryReport = serde_json::from_str(&report).unwrap();
    let config = TrialConfig {
        uniform_rate: 0.04,
        clusters: ClusterSource::Rate {
            rate: 0.016,
            std_dev: 5.0,
            defects_per_cluster: 200,
        },
        seed: 12,
        ..TrialConfig::default()
    };
    let lib = run_trial(&config).unwrap();
    assert_eq!(report, lib.report);
    let plan = RepairPlan::from_json(&std::fs::read_to_string(&plan_path).unwrap()).unwrap();
    assert_eq!(plan, lib.plan);

    let pipeline = plan.pipeline().unwrap();
    for (r, c) in [(0, 0), (17, 200), (255, 255), (100, 3)] {
        let out = ok(
            &[
                "resolve",
                "--plan",
                p(&plan_path),
                "--row",
                &r.to_string(),
                "--col",
                &c.to_string(),
            ],
            None,
        );
        let got: ResolvedAccess = serde_json::from_str(&out).unwrap();
        assert_eq!(got, pipeline.resolve(r, c).unwrap());
    }
    assert!(!cli(
        &[
            "resolve",
            "--plan",
            p(&plan_path),
            "--row",
            "256",
            "--col",
            "0"
        ],
        None
    )
    .status
    .success());
}

#[test]
fn repair_of_saved_map_uses_its_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let map_path = dir.path().join("m.txt");
    std::fs::write(
        &map_path,
        ok(
            &[
                "generate",
                "--rows",
                "64",
                "--cols",
                "64",
                "--uniform-rate",
                "0.02",
            ],
            None,
        ),
    )
    .unwrap();
    let report: RecoveryReport = serde_json::from_str(&ok(
        &[
            "repair",
            "--map",
            p(&map_path),
            "--set",
            "mask_height=8",
            "--set",
            "mask_width=8",
            "--set",
            "density_threshold=40",
        ],
        None,
    ))
    .unwrap();
    assert_eq!((report.rows, report.cols), (64, 64));
    assert!(report.recovery_rate > 0.0 && report.recovery_rate <= 1.0);
}

#[test]
fn sweep_then_plot() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let svg = dir.path().join("s.svg");
    ok(
        &[
            "sweep-cluster",
            "--uniform-rate",
            "0.075",
            "--rates",
            "0.005,0.015",
            "--seeds",
            "2",
            "-o",
            p(&csv),
        ],
        None,
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], SWEEP_CSV_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.005000,0.075000,2,"));
    ok(
        &[
            "plot",
            "--input",
            p(&csv),
            "-o",
            p(&svg),
            "--title",
            "cluster sweep",
        ],
        None,
    );
    let drawn = std::fs::read_to_string(&svg).unwrap();
    assert!(drawn.contains("<svg") && drawn.contains("cluster sweep"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "rows = 64\nnot a pair\n").unwrap();
    let out = cli(&["generate", "--config", p(&cfg)], None);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert!(!cli(&["generate", "--uniform-rate", "1.5"], None)
        .status
        .success());
    assert!(!cli(&["generate", "--set", "nokey"], None).status.success());
    assert!(
        !cli(&["sweep-uniform", "--rates", "0.01", "--seeds", "0"], None)
            .status
            .success()
    );
}
