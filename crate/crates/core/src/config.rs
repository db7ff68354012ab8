//! Flat `key = value` trial configuration files.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors.
//! Missing keys keep the defaults (256x256 array, 25x25 mask, threshold 150).

use crate::error::{Error, Result};
use crate::experiment::{ClusterSource, TrialConfig};
use crate::tmr_selector::TripleSearch;

pub const KEYS: &[&str] = &[
    "rows",
    "cols",
    "uniform_rate",
    "cluster_rate",
    "cluster_std_dev",
    "defects_per_cluster",
    "mask_height",
    "mask_width",
    "density_threshold",
    "boundary_threshold",
    "background_corrected",
    "max_clusters",
    "max_bad_rows",
    "tmr_search",
    "rmcam_capacity",
    "seed",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::InvalidArgument(format!("{key}: cannot parse {value:?}: {e}")))
}

/// Sets one field. Used for both file lines and CLI overrides.
pub fn apply(config: &mut TrialConfig, key: &str, value: &str) -> Result<()> {
    let value = value.trim();
    let (mut rate, mut std_dev, mut per) = match &config.clusters {
        ClusterSource::Rate {
            rate,
            std_dev,
            defects_per_cluster,
        } => (*rate, *std_dev, *defects_per_cluster),
        ClusterSource::Specs(_) => (0.0, 5.0, 200),
    };
    let cp = &mut config.cluster_params;
    match key {
        "rows" => config.rows = parse(key, value)?,
        "cols" => config.cols = parse(key, value)?,
        "uniform_rate" => config.uniform_rate = parse(key, value)?,
        "cluster_rate" => rate = parse(key, value)?,
        "cluster_std_dev" => std_dev = parse(key, value)?,
        "defects_per_cluster" => per = parse(key, value)?,
        "mask_height" => cp.initial_mask_height = parse(key, value)?,
        "mask_width" => cp.initial_mask_width = parse(key, value)?,
        "density_threshold" => cp.density_threshold = parse(key, value)?,
        "boundary_threshold" => cp.boundary_threshold = parse(key, value)?,
        "background_corrected" => cp.background_corrected = parse(key, value)?,
        "max_clusters" => {
            cp.max_clusters = match value {
                "" | "none" => None,
                v => Some(parse(key, v)?),
            }
        }
        "max_bad_rows" => config.tmr_params.max_bad_rows = parse(key, value)?,
        "tmr_search" => {
            config.tmr_params.search = match value {
                "greedy" => TripleSearch::Greedy,
                "exhaustive" => TripleSearch::Exhaustive,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "tmr_search: unknown mode {other:?}"
                    )))
                }
            }
        }
        "rmcam_capacity" => config.rmcam_capacity = parse(key, value)?,
        "seed" => config.seed = parse(key, value)?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown config key {other:?}"
            )))
        }
    }
    if matches!(
        key,
        "cluster_rate" | "cluster_std_dev" | "defects_per_cluster"
    ) || matches!(config.clusters, ClusterSource::Rate { .. })
    {
        config.clusters = ClusterSource::Rate {
            rate,
            std_dev,
            defects_per_cluster: per,
        };
    }
    Ok(())
}

pub fn parse_config(text: &str, base: TrialConfig) -> Result<TrialConfig> {
    let mut config = base;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected `key = value`, got {line:?}"),
        })?;
        apply(&mut config, key.trim(), value).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
    }
    Ok(config)
}

/// Inverse of [`parse_config`] for rate-based cluster sources.
pub fn to_text(config: &TrialConfig) -> String {
    let cp = &config.cluster_params;
    let (rate, std_dev, per) = match &config.clusters {
        ClusterSource::Rate {
            rate,
            std_dev,
            defects_per_cluster,
        } => (*rate, *std_dev, *defects_per_cluster),
        ClusterSource::Specs(_) => (config.cluster_rate(), 5.0, 200),
    };
    let search = match config.tmr_params.search {
        TripleSearch::Greedy => "greedy",
        TripleSearch::Exhaustive => "exhaustive",
    };
    let max_clusters = cp
        .max_clusters
        .map_or("none".to_string(), |m| m.to_string());
    format!(
        "rows = {}\ncols = {}\nuniform_rate = {}\ncluster_rate = {rate}\ncluster_std_dev = {std_dev}\n\
         defects_per_cluster = {per}\nmask_height = {}\nmask_width = {}\ndensity_threshold = {}\n\
         boundary_threshold = {}\nbackground_corrected = {}\nmax_clusters = {max_clusters}\n\
         max_bad_rows = {}\ntmr_search = {search}\nrmcam_capacity = {}\nseed = {}\n",
        config.rows,
        config.cols,
        config.uniform_rate,
        cp.initial_mask_height,
        cp.initial_mask_width,
        cp.density_threshold,
        cp.boundary_threshold,
        cp.background_corrected,
        config.tmr_params.max_bad_rows,
        config.rmcam_capacity,
        config.seed,
    )
}
