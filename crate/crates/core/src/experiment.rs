//! Three-phase repair trials and recovery-rate sweeps.
//!
//! Phase 1 extracts cluster windows, phase 2 assigns TMR triples over the
//! residual random defects, phase 3 relocates the clusters through the
//! RM-CAM. The recovery rate is usable logical cells after repair over
//! healthy cells before repair.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::address_mapper::{plan_targets, usable_cell_census, ColumnRole, MappingPipeline};
use crate::cluster_finder::{extract_clusters, ClusterParams, ClusterWindow};
use crate::defect_model::{ClusterSpec, DefectMap, Rect};
use crate::error::{invalid, Error, Result};
use crate::rmcam_model::{compile_table, RmCamEntry, RmCamTable, BOUND_WORDS_PER_ENTRY};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::tmr_selector::{select_tmr, TmrParams, TmrPlan, TripleColumns};

/// Environment variable that overrides the trial seed in the CLI.
pub const SEED_ENV: &str = "RMCAM_TMR_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ClusterSource {
    /// Generate clusters totalling `rate` of the array.
    Rate {
        rate: f64,
        std_dev: f64,
        defects_per_cluster: usize,
    },
    Specs(Vec<ClusterSpec>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub rows: usize,
    pub cols: usize,
    pub uniform_rate: f64,
    pub clusters: ClusterSource,
    pub cluster_params: ClusterParams,
    pub tmr_params: TmrParams,
    /// In single-bound words (four per cluster).
    pub rmcam_capacity: usize,
    pub seed: u64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            rows: 256,
            cols: 256,
            uniform_rate: 0.0,
            clusters: ClusterSource::Rate {
                rate: 0.0,
                std_dev: 5.0,
                defects_per_cluster: 200,
            },
            cluster_params: ClusterParams::default(),
            tmr_params: TmrParams::default(),
            rmcam_capacity: 64,
            seed: 0,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return invalid("array dimensions must be positive");
        }
        if !(0.0..=1.0).contains(&self.uniform_rate) {
            return invalid(format!(
                "uniform_rate must lie in [0, 1], got {}",
                self.uniform_rate
            ));
        }
        if let ClusterSource::Rate {
            rate,
            std_dev,
            defects_per_cluster,
        } = self.clusters
        {
            if !(0.0..=1.0).contains(&rate) {
                return invalid(format!("cluster_rate must lie in [0, 1], got {rate}"));
            }
            if !(std_dev.is_finite() && std_dev > 0.0) {
                return invalid("cluster std_dev must be positive");
            }
            if defects_per_cluster == 0 {
                return invalid("defects_per_cluster must be at least 1");
            }
        }
        self.cluster_params
            .validate(&DefectMap::new(self.rows, self.cols)?)
    }

    /// Configured cluster defect fraction.
    pub fn cluster_rate(&self) -> f64 {
        match &self.clusters {
            ClusterSource::Rate { rate, .. } => *rate,
            ClusterSource::Specs(specs) => {
                specs.iter().map(|s| s.defect_count).sum::<usize>() as f64
                    / (self.rows * self.cols) as f64
            }
        }
    }

    pub fn with_seed(&self, seed: u64) -> TrialConfig {
        TrialConfig {
            seed,
            ..self.clone()
        }
    }
}

/// Clusters for a target defect fraction: `max(1, budget / defects_per_cluster)`
/// clusters sharing the budget equally, centres at least `min_separation`
/// apart (Chebyshev) and kept `ceil(3 * std_dev)` away from the edges.
pub fn cluster_specs_for_rate(
    rows: usize,
    cols: usize,
    rate: f64,
    std_dev: f64,
    defects_per_cluster: usize,
    min_separation: usize,
    seed: u64,
) -> Result<Vec<ClusterSpec>> {
    let budget = (rate * (rows * cols) as f64).round() as usize;
    if budget == 0 {
        return Ok(Vec::new());
    }
    let n = (budget / defects_per_cluster.max(1)).max(1);
    let mut rng = stream_rng(seed, Stream::ClusterCenters);
    let margin = (3.0 * std_dev).ceil() as usize;
    let row_span = (
        margin.min((rows - 1) / 2),
        rows - margin.min((rows - 1) / 2),
    );
    let col_span = (
        margin.min((cols - 1) / 2),
        cols - margin.min((cols - 1) / 2),
    );
    let mut centers: Vec<(usize, usize)> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut attempts = 0;
        let center = loop {
            let c = (
                rng.random_range(row_span.0..row_span.1),
                rng.random_range(col_span.0..col_span.1),
            );
            attempts += 1;
            let clear = centers
                .iter()
                .all(|&(r, k)| r.abs_diff(c.0).max(k.abs_diff(c.1)) >= min_separation);
            if clear || attempts > 10_000 {
                break c;
            }
        };
        centers.push(center);
    }
    let (base, extra) = (budget / n, budget % n);
    centers
        .into_iter()
        .enumerate()
        .map(|(i, c)| ClusterSpec::new(c, std_dev, base + usize::from(i < extra)))
        .collect()
}

/// Injected defect map for a trial: clusters first, then uniform defects,
/// so trials sharing a seed share cluster cells whatever the uniform rate.
pub fn generate_map(config: &TrialConfig) -> Result<(DefectMap, Vec<ClusterSpec>)> {
    config.validate()?;
    let specs = match &config.clusters {
        ClusterSource::Specs(s) => s.clone(),
        ClusterSource::Rate {
            rate,
            std_dev,
            defects_per_cluster,
        } => cluster_specs_for_rate(
            config.rows,
            config.cols,
            *rate,
            *std_dev,
            *defects_per_cluster,
            config
                .cluster_params
                .initial_mask_height
                .max(config.cluster_params.initial_mask_width),
            config.seed,
        )?,
    };
    let map = DefectMap::new(config.rows, config.cols)?
        .inject_clusters(&specs, derive_seed(config.seed, Stream::ClusterCells))?
        .inject_uniform(
            config.uniform_rate,
            derive_seed(config.seed, Stream::Uniform),
        )?;
    Ok((map, specs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub uniform_rate: f64,
    pub cluster_rate: f64,
    pub total_defects: usize,
    pub pre_repair_healthy: usize,
    pub usable_after: usize,
    pub residual_defective_addresses: usize,
    pub consumed: usize,
    pub recovery_rate: f64,
    pub clusters_found: usize,
    pub clusters_mapped: usize,
    /// Single-bound words, four per mapped cluster.
    pub rmcam_entries_used: usize,
    pub triples_accepted: usize,
    pub failed: bool,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RmCamExport {
    pub capacity: usize,
    pub entries: Vec<RmCamEntry>,
    pub entries_consumed: usize,
}

/// Serializable repair plan; enough to rebuild the mapping pipeline.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairPlan {
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub clusters: Vec<ClusterWindow>,
    /// Relocation target per cluster, `None` when the cluster stayed unmapped.
    pub targets: Vec<Option<Rect>>,
    pub rmcam: RmCamExport,
    pub triples: Vec<TripleColumns>,
}

impl RepairPlan {
    pub fn pipeline(&self) -> Result<MappingPipeline> {
        let mut table = RmCamTable::new(self.rmcam.capacity, self.rows, self.cols)?;
        for e in &self.rmcam.entries {
            table.push(*e)?;
        }
        if table.bound_words() != self.rmcam.entries_consumed {
            return Err(Error::Consistency(format!(
                "plan declares {} bound words, entries need {}",
                self.rmcam.entries_consumed,
                table.bound_words()
            )));
        }
        MappingPipeline::new(table, &TmrPlan::from_triples(self.triples.clone()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<RepairPlan> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub report: RecoveryReport,
    pub plan: RepairPlan,
    pub map: DefectMap,
}

pub fn run_trial(config: &TrialConfig) -> Result<TrialOutcome> {
    let (map, _) = generate_map(config)?;
    repair_map(&map, config)
}

/// Runs the three repair phases on an existing map.
pub fn repair_map(map: &DefectMap, config: &TrialConfig) -> Result<TrialOutcome> {
    if (map.rows(), map.cols()) != (config.rows, config.cols) {
        return invalid("map dimensions differ from the trial config");
    }
    let mut failures = Vec::new();

    // phase 1
    let extraction = extract_clusters(map, &config.cluster_params)?;
    let windows = extraction.windows;
    let slots = config.rmcam_capacity / BOUND_WORDS_PER_ENTRY;
    if windows.len() > slots {
        failures.push(format!(
            "RM-CAM capacity of {} bound words holds {slots} clusters, {} found",
            config.rmcam_capacity,
            windows.len()
        ));
    }
    let (mappable, overflow) = windows.split_at(windows.len().min(slots));

    // phase 2: clusters beyond capacity keep their defects for TMR
    let mut tmr_view = extraction.residual;
    for w in overflow {
        for (r, c) in w.bounds.cells() {
            if map.defective_at(r, c) {
                tmr_view.mark_defective(r, c);
            }
        }
    }
    let clean: BTreeSet<usize> = (0..map.cols())
        .filter(|&c| (0..map.rows()).all(|r| !tmr_view.defective_at(r, c)))
        .collect();
    let tmr = select_tmr(&tmr_view, &clean, &config.tmr_params)?;

    // phase 3
    let overflow_rects: Vec<Rect> = overflow.iter().map(|w| w.bounds).collect();
    let mut targets = plan_targets(mappable, map, &tmr, &overflow_rects);
    targets.resize(windows.len(), None);
    let mut placed = Vec::new();
    let mut placed_targets = Vec::new();
    for (w, t) in mappable.iter().zip(&targets) {
        match t {
            Some(t) => {
                placed.push(w.clone());
                placed_targets.push(*t);
            }
            None => failures.push(format!(
                "no relocation target for cluster {}",
                w.extraction_order
            )),
        }
    }
    let table = compile_table(
        &placed,
        &placed_targets,
        config.rmcam_capacity,
        (map.rows(), map.cols()),
    )?;
    let pipeline = MappingPipeline::new(table.clone(), &tmr)?;
    let census = usable_cell_census(&pipeline, map)?;

    let pre = map.healthy_count();
    let report = RecoveryReport {
        seed: config.seed,
        rows: map.rows(),
        cols: map.cols(),
        uniform_rate: config.uniform_rate,
        cluster_rate: config.cluster_rate(),
        total_defects: map.defect_count(),
        pre_repair_healthy: pre,
        usable_after: census.usable,
        residual_defective_addresses: census.unusable,
        consumed: census.consumed,
        recovery_rate: recovery_rate(census.usable, pre),
        clusters_found: windows.len(),
        clusters_mapped: placed.len(),
        rmcam_entries_used: table.bound_words(),
        triples_accepted: tmr.len(),
        failed: !failures.is_empty(),
        failures,
    };
    let plan = RepairPlan {
        rows: map.rows(),
        cols: map.cols(),
        seed: config.seed,
        clusters: windows,
        targets,
        rmcam: RmCamExport {
            capacity: table.capacity(),
            entries: table.entries().to_vec(),
            entries_consumed: table.bound_words(),
        },
        triples: tmr.triples,
    };
    Ok(TrialOutcome {
        report,
        plan,
        map: map.clone(),
    })
}

/// Zero when nothing was healthy to begin with.
pub fn recovery_rate(usable: usize, pre_repair_healthy: usize) -> f64 {
    if pre_repair_healthy == 0 {
        0.0
    } else {
        usable as f64 / pre_repair_healthy as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralCost {
    pub rmcam_entries: usize,
    pub rmcam_bound_words: usize,
    pub triple_rom_entries: usize,
    pub physical_cells: usize,
    pub logical_cells: usize,
}

/// Structural units of a compiled pipeline; no electrical quantities.
pub fn cell_census_cost(pipeline: &MappingPipeline) -> StructuralCost {
    let (rows, cols) = pipeline.dims();
    let partner_cols = (0..cols)
        .filter(|&c| pipeline.role(c) == ColumnRole::Partner)
        .count();
    let displaced: usize = pipeline
        .targets()
        .iter()
        .map(|t| {
            (t.left..t.right())
                .filter(|&c| pipeline.role(c) != ColumnRole::Partner)
                .count()
                * t.height
        })
        .sum();
    StructuralCost {
        rmcam_entries: pipeline.rmcam().len(),
        rmcam_bound_words: pipeline.rmcam().bound_words(),
        triple_rom_entries: pipeline.triple_rom().len(),
        physical_cells: rows * cols,
        logical_cells: rows * cols - partner_cols * rows - displaced,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub swept_rate: f64,
    pub held_rate: f64,
    pub seeds: usize,
    pub mean_recovery: f64,
    pub std_recovery: f64,
    pub mean_clusters: f64,
    pub mean_triples: f64,
    pub failures: usize,
    pub recoveries: Vec<f64>,
}

impl SweepPoint {
    /// Standard error of the mean recovery.
    pub fn std_error(&self) -> f64 {
        if self.seeds == 0 {
            0.0
        } else {
            self.std_recovery / (self.seeds as f64).sqrt()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub points: Vec<SweepPoint>,
}

pub const SWEEP_CSV_HEADER: &str =
    "swept_rate,held_rate,seeds,mean_recovery,std_recovery,mean_clusters,mean_triples,failures";

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:.6},{:.6},{},{:.6},{:.6},{:.4},{:.4},{}",
                p.swept_rate,
                p.held_rate,
                p.seeds,
                p.mean_recovery,
                p.std_recovery,
                p.mean_clusters,
                p.mean_triples,
                p.failures
            );
        }
        out
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_point(config: &TrialConfig, swept: f64, held: f64, seeds: usize) -> Result<SweepPoint> {
    let reports: Vec<RecoveryReport> = (0..seeds as u64)
        .into_par_iter()
        .map(|k| run_trial(&config.with_seed(config.seed.wrapping_add(k))).map(|o| o.report))
        .collect::<Result<_>>()?;
    let recoveries: Vec<f64> = reports.iter().map(|r| r.recovery_rate).collect();
    let (mean_recovery, std_recovery) = mean_std(&recoveries);
    let n = seeds.max(1) as f64;
    Ok(SweepPoint {
        swept_rate: swept,
        held_rate: held,
        seeds,
        mean_recovery,
        std_recovery,
        mean_clusters: reports.iter().map(|r| r.clusters_found as f64).sum::<f64>() / n,
        mean_triples: reports
            .iter()
            .map(|r| r.triples_accepted as f64)
            .sum::<f64>()
            / n,
        failures: reports.iter().filter(|r| r.failed).count(),
        recoveries,
    })
}

/// Sweeps the uniform rate with the cluster configuration held fixed.
pub fn sweep_uniform(
    base: &TrialConfig,
    rates: &[f64],
    seeds_per_point: usize,
) -> Result<SweepTable> {
    let held = base.cluster_rate();
    let points = rates
        .iter()
        .map(|&rate| {
            let config = TrialConfig {
                uniform_rate: rate,
                ..base.clone()
            };
            run_point(&config, rate, held, seeds_per_point)
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable { points })
}

/// Sweeps the cluster rate with the uniform rate held fixed.
pub fn sweep_cluster(
    base: &TrialConfig,
    cluster_rates: &[f64],
    seeds_per_point: usize,
) -> Result<SweepTable> {
    let (std_dev, defects_per_cluster) = match base.clusters {
        ClusterSource::Rate {
            std_dev,
            defects_per_cluster,
            ..
        } => (std_dev, defects_per_cluster),
        ClusterSource::Specs(_) => (5.0, 200),
    };
    let points = cluster_rates
        .iter()
        .map(|&rate| {
            let config = TrialConfig {
                clusters: ClusterSource::Rate {
                    rate,
                    std_dev,
                    defects_per_cluster,
                },
                ..base.clone()
            };
            run_point(&config, rate, base.uniform_rate, seeds_per_point)
        })
        .collect::<Result<_>>()?;
    Ok(SweepTable { points })
}
