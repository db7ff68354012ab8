//! End-to-end acceptance suite. Each test prints one PASS/FAIL line; run
//! with `--nocapture` to see them.

use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rmcam_tmr::address_mapper::{read, AddressClass, BitGrid};
use rmcam_tmr::cluster_finder::{extract_clusters, find_max_mask, ClusterParams};
use rmcam_tmr::experiment::{run_trial, sweep_cluster, sweep_uniform, ClusterSource, SweepTable};
use rmcam_tmr::rmcam_model::bit_serial_compare;
use rmcam_tmr::tmr_selector::vote;
use rmcam_tmr::{BitWord, ClusterSpec, CompareMode, CompareOutcome, DefectMap, Rect, TrialConfig};

fn verdict(n: u32, name: &str, pass: bool, detail: String) {
    println!(
        "criterion {n:>2} [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn clustered(uniform: f64, cluster: f64, seed: u64) -> TrialConfig {
    TrialConfig {
        uniform_rate: uniform,
        clusters: ClusterSource::Rate {
            rate: cluster,
            std_dev: 5.0,
            defects_per_cluster: 200,
        },
        seed,
        ..TrialConfig::default()
    }
}

const FIG8_RATES: [f64; 8] = [0.005, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07];
const FIG9_RATES: [f64; 6] = [0.005, 0.01, 0.015, 0.02, 0.025, 0.03];

fn fig8() -> &'static (SweepTable, Duration) {
    static CELL: OnceLock<(SweepTable, Duration)> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let t = sweep_uniform(&clustered(0.0, 0.016, 1000), &FIG8_RATES, 20).unwrap();
        (t, start.elapsed())
    })
}

fn fig9() -> &'static SweepTable {
    static CELL: OnceLock<SweepTable> = OnceLock::new();
    CELL.get_or_init(|| sweep_cluster(&clustered(0.075, 0.0, 2000), &FIG9_RATES, 20).unwrap())
}

#[test]
fn criterion_01_comparator_oracle() {
    let start = Instant::now();
    let words: Vec<BitWord> = (0..256u64).map(|v| BitWord::new(v, 8).unwrap()).collect();
    let mut wrong = 0;
    for a in 0..256usize {
        for b in 0..256usize {
            let lower = bit_serial_compare(&words[a], &words[b], CompareMode::Lower).unwrap()
                == CompareOutcome::Match;
            let upper = bit_serial_compare(&words[a], &words[b], CompareMode::Upper).unwrap()
                == CompareOutcome::Match;
            wrong += usize::from(lower != (a >= b)) + usize::from(upper != (a <= b));
        }
    }
    let took = start.elapsed();
    verdict(
        1,
        "comparator oracle",
        wrong == 0 && took < Duration::from_secs(1),
        format!("{wrong} mismatches over 65536 pairs x 2 modes in {took:.2?}"),
    );
}

#[test]
fn criterion_02_voter_truth_table() {
    let wrong = (0u8..8)
        .filter(|&b| vote(b & 1 != 0, b & 2 != 0, b & 4 != 0) != (b.count_ones() >= 2))
        .count();
    verdict(
        2,
        "voter truth table",
        wrong == 0,
        format!("{wrong}/8 cases wrong"),
    );
}

#[test]
fn criterion_03_max_mask_oracle() {
    let mut wrong = 0;
    for seed in 0..200u64 {
        let rate = 0.02 + 0.3 * (seed % 10) as f64 / 10.0;
        let map = DefectMap::new(64, 64)
            .unwrap()
            .inject_uniform(rate, seed)
            .unwrap();
        let got = find_max_mask(&map, 8, 8).unwrap();
        let mut best: Option<(Rect, usize)> = None;
        for top in 0..=56 {
            for left in 0..=56 {
                let r = Rect::new(top, left, 8, 8).unwrap();
                let n = r
                    .cells()
                    .filter(|&(a, b)| map.is_defective(a, b).unwrap())
                    .count();
                if best.is_none_or(|(_, m)| n > m) {
                    best = Some((r, n));
                }
            }
        }
        wrong += usize::from(Some(got) != best);
    }
    verdict(
        3,
        "maximum-mask oracle",
        wrong == 0,
        format!("{wrong}/200 maps differ from exhaustive scan"),
    );
}

#[test]
fn criterion_04_planted_cluster_recovery() {
    let centers = [(64, 64), (64, 192), (192, 128)];
    let specs: Vec<ClusterSpec> = centers
        .iter()
        .map(|&c| ClusterSpec::new(c, 5.0, 200).unwrap())
        .collect();
    let mut good = 0;
    for seed in 0..100u64 {
        let map = DefectMap::new(256, 256)
            .unwrap()
            .inject_clusters(&specs, seed)
            .unwrap();
        let ex = extract_clusters(&map, &ClusterParams::default()).unwrap();
        let centred = ex.windows.len() == 3
            && centers
                .iter()
                .all(|&(r, c)| ex.windows.iter().any(|w| w.bounds.contains(r, c)));
        let covered: usize = ex.windows.iter().map(|w| w.defects_covered).sum();
        if centred && covered as f64 >= 0.95 * map.defect_count() as f64 {
            good += 1;
        }
    }
    verdict(
        4,
        "planted-cluster recovery",
        good >= 95,
        format!("{good}/100 seeds"),
    );
}

#[test]
fn criterion_05_tmr_soundness() {
    let mut bad_triples = 0;
    let mut bad_reads = 0;
    let mut triples = 0;
    let mut usable = 0usize;
    let zeros = BitGrid::filled(256, 256, false);
    let ones = BitGrid::filled(256, 256, true);
    for seed in 0..100u64 {
        let config = TrialConfig {
            uniform_rate: 0.075,
            seed,
            ..TrialConfig::default()
        };
        let out = run_trial(&config).unwrap();
        let mut view = out.map.clone();
        for w in &out.plan.clusters {
            view = view.cleared(&w.bounds).unwrap();
        }
        for t in &out.plan.triples {
            triples += 1;
            let bad = (0..256)
                .filter(|&r| {
                    t.columns
                        .iter()
                        .filter(|&&c| view.is_defective(r, c).unwrap())
                        .count()
                        >= 2
                })
                .count();
            bad_triples += usize::from(bad > config.tmr_params.max_bad_rows);
        }
        let p = out.plan.pipeline().unwrap();
        for r in 0..256 {
            for c in 0..256 {
                if p.classify(&out.map, r, c).unwrap() != AddressClass::Usable {
                    continue;
                }
                usable += 1;
                bad_reads += usize::from(read(&p, &zeros, &out.map, r, c).unwrap());
                bad_reads += usize::from(!read(&p, &ones, &out.map, r, c).unwrap());
            }
        }
    }
    verdict(
        5,
        "TMR soundness",
        bad_triples == 0 && bad_reads == 0,
        format!("{bad_triples}/{triples} triples over the bad-row limit, {bad_reads} wrong reads over {usable} usable addresses x 2 values"),
    );
}

#[test]
fn criterion_06_constant_rmcam_size() {
    let mut broken = Vec::new();
    for k in 0..50u64 {
        let reports: Vec<_> = [0.01, 0.03, 0.05, 0.07]
            .iter()
            .map(|&u| run_trial(&clustered(u, 0.016, 500 + k)).unwrap().report)
            .collect();
        let same = reports
            .iter()
            .all(|r| r.rmcam_entries_used == reports[0].rmcam_entries_used);
        let four_n = reports
            .iter()
            .all(|r| r.rmcam_entries_used == 4 * r.clusters_found);
        if !(same && four_n) {
            broken.push(500 + k);
        }
    }
    verdict(
        6,
        "constant RM-CAM size",
        broken.is_empty(),
        format!("{} of 50 seed groups differ {broken:?}", broken.len()),
    );
}

#[test]
fn criterion_07_uniform_sweep_shape() {
    let (t, took) = fig8();
    let means: Vec<f64> = t.points.iter().map(|p| p.mean_recovery).collect();
    let at3 = means[3];
    let min = means.iter().copied().fold(f64::INFINITY, f64::min);
    let high: Vec<f64> = t
        .points
        .iter()
        .filter(|p| p.swept_rate > 0.04)
        .map(|p| p.mean_recovery)
        .collect();
    let high_mean = high.iter().sum::<f64>() / high.len() as f64;
    let pass = means[0] > at3 && high_mean > min && *took < Duration::from_secs(300);
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.4}")).collect();
    verdict(
        7,
        "uniform sweep shape",
        pass,
        format!(
            "means [{}], >4% mean {high_mean:.4} vs min {min:.4}, {took:.1?}",
            shown.join(", ")
        ),
    );
}

#[test]
fn criterion_08_cluster_sweep_shape() {
    let t = fig9();
    let mut violations = Vec::new();
    for w in t.points.windows(2) {
        let pooled = (w[0].std_error().powi(2) + w[1].std_error().powi(2)).sqrt();
        if w[1].mean_recovery > w[0].mean_recovery + pooled {
            violations.push(w[1].swept_rate);
        }
    }
    let shown: Vec<String> = t
        .points
        .iter()
        .map(|p| format!("{:.4}", p.mean_recovery))
        .collect();
    let failures: usize = t.points.iter().map(|p| p.failures).sum();
    verdict(
        8,
        "cluster sweep shape",
        violations.is_empty(),
        format!(
            "means [{}], rises at {violations:?}, {failures} trials with unmapped clusters",
            shown.join(", ")
        ),
    );
}

#[test]
fn criterion_09_repair_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("trial.cfg");
    std::fs::write(
        &config,
        "uniform_rate = 0.05\ncluster_rate = 0.016\nseed = 77\n",
    )
    .unwrap();
    let run = |tag: &str| {
        let report = dir.path().join(format!("report_{tag}.json"));
        let plan = dir.path().join(format!("plan_{tag}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_rmcam-tmr"))
            .arg("repair")
            .arg("--config")
            .arg(&config)
            .arg("--report")
            .arg(&report)
            .arg("--plan")
            .arg(&plan)
            .env_remove("RMCAM_TMR_SEED")
            .status()
            .unwrap();
        assert!(status.success());
        (std::fs::read(report).unwrap(), std::fs::read(plan).unwrap())
    };
    let (r1, p1) = run("a");
    let (r2, p2) = run("b");
    verdict(
        9,
        "repair determinism",
        r1 == r2 && p1 == p2,
        format!(
            "report {} bytes identical: {}, plan {} bytes identical: {}",
            r1.len(),
            r1 == r2,
            p1.len(),
            p1 == p2
        ),
    );
}

#[test]
fn criterion_10_trivial_bounds() {
    let clean = run_trial(&TrialConfig::default()).unwrap().report;
    let all: Vec<f64> = fig8()
        .0
        .points
        .iter()
        .chain(&fig9().points)
        .flat_map(|p| p.recoveries.iter().copied())
        .collect();
    let outside = all.iter().filter(|r| !(0.0..=1.0).contains(*r)).count();
    verdict(
        10,
        "trivial bounds",
        clean.recovery_rate == 1.0 && outside == 0 && all.len() == 280,
        format!(
            "zero-defect recovery {}, {outside}/{} sweep trials outside [0, 1]",
            clean.recovery_rate,
            all.len()
        ),
    );
}
