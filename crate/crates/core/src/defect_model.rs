//! Synthetic defect maps: a dense health grid plus uniform and Gaussian
//! cluster defect injection.
//!
//! Maps are treated as values. Injection returns a fresh map and never turns
//! a defective cell healthy again.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Healthy,
    Defective,
}

/// Axis-aligned rectangle of cells. `top`/`left` are inclusive, the
/// exclusive ends are [`Rect::bottom`] and [`Rect::right`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn new(top: usize, left: usize, height: usize, width: usize) -> Result<Rect> {
        if height == 0 || width == 0 {
            return invalid(format!("rect must be non-empty, got {height}x{width}"));
        }
        if top.checked_add(height).is_none() || left.checked_add(width).is_none() {
            return invalid("rect extent overflows");
        }
        Ok(Rect {
            top,
            left,
            height,
            width,
        })
    }

    pub fn bottom(&self) -> usize {
        self.top + self.height
    }

    pub fn right(&self) -> usize {
        self.left + self.width
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.top && row < self.bottom() && col >= self.left && col < self.right()
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.top >= self.top
            && other.left >= self.left
            && other.bottom() <= self.bottom()
            && other.right() <= self.right()
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.top < other.bottom()
            && other.top < self.bottom()
            && self.left < other.right()
            && other.left < self.right()
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.top..self.bottom()).flat_map(move |r| (self.left..self.right()).map(move |c| (r, c)))
    }
}

/// One Gaussian defect cluster.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub center: (usize, usize),
    pub std_dev: f64,
    pub defect_count: usize,
}

impl ClusterSpec {
    pub fn new(center: (usize, usize), std_dev: f64, defect_count: usize) -> Result<ClusterSpec> {
        if !(std_dev.is_finite() && std_dev > 0.0) {
            return invalid(format!("cluster std_dev must be positive, got {std_dev}"));
        }
        if defect_count == 0 {
            return invalid("cluster defect_count must be at least 1");
        }
        Ok(ClusterSpec {
            center,
            std_dev,
            defect_count,
        })
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct DefectMap {
    rows: usize,
    cols: usize,
    cells: Vec<bool>,
    defects: usize,
}

impl fmt::Debug for DefectMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DefectMap")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("defects", &self.defects)
            .finish()
    }
}

impl DefectMap {
    pub fn new(rows: usize, cols: usize) -> Result<DefectMap> {
        if rows == 0 || cols == 0 {
            return invalid(format!(
                "map dimensions must be positive, got {rows}x{cols}"
            ));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::InvalidArgument(format!("{rows}x{cols} overflows")))?;
        Ok(DefectMap {
            rows,
            cols,
            cells: vec![false; len],
            defects: 0,
        })
    }

    /// Builds a map with the listed cells defective. Duplicates are allowed.
    pub fn from_defects<I>(rows: usize, cols: usize, defects: I) -> Result<DefectMap>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut map = DefectMap::new(rows, cols)?;
        for (r, c) in defects {
            map.check(r, c)?;
            map.mark_defective(r, c);
        }
        Ok(map)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn bounds(&self) -> Rect {
        Rect {
            top: 0,
            left: 0,
            height: self.rows,
            width: self.cols,
        }
    }

    pub fn defect_count(&self) -> usize {
        self.defects
    }

    pub fn healthy_count(&self) -> usize {
        self.len() - self.defects
    }

    pub fn defect_rate(&self) -> f64 {
        self.defects as f64 / self.len() as f64
    }

    fn check(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.rows || col >= self.cols {
            return invalid(format!(
                "cell ({row}, {col}) outside {}x{} array",
                self.rows, self.cols
            ));
        }
        Ok(())
    }

    pub fn check_rect(&self, rect: &Rect) -> Result<()> {
        if rect.height == 0 || rect.width == 0 || !self.bounds().contains_rect(rect) {
            return invalid(format!(
                "rect {rect:?} outside {}x{} array",
                self.rows, self.cols
            ));
        }
        Ok(())
    }

    pub fn cell(&self, row: usize, col: usize) -> Result<Cell> {
        self.check(row, col)?;
        Ok(if self.cells[row * self.cols + col] {
            Cell::Defective
        } else {
            Cell::Healthy
        })
    }

    pub fn is_defective(&self, row: usize, col: usize) -> Result<bool> {
        self.check(row, col)?;
        Ok(self.cells[row * self.cols + col])
    }

    /// Unchecked lookup for hot loops; callers guarantee bounds.
    #[inline]
    pub(crate) fn defective_at(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.cols + col]
    }

    pub(crate) fn mark_defective(&mut self, row: usize, col: usize) -> bool {
        let cell = &mut self.cells[row * self.cols + col];
        if *cell {
            return false;
        }
        *cell = true;
        self.defects += 1;
        true
    }

    pub(crate) fn mark_healthy(&mut self, row: usize, col: usize) {
        let cell = &mut self.cells[row * self.cols + col];
        if *cell {
            *cell = false;
            self.defects -= 1;
        }
    }

    /// Copy of the map with every cell of `rect` healthy.
    pub fn cleared(&self, rect: &Rect) -> Result<DefectMap> {
        self.check_rect(rect)?;
        let mut out = self.clone();
        for (r, c) in rect.cells() {
            out.mark_healthy(r, c);
        }
        Ok(out)
    }

    pub fn defects(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &d)| d)
            .map(move |(i, _)| (i / self.cols, i % self.cols))
    }

    /// Defective cells of column `col`, one flag per row.
    pub fn column(&self, col: usize) -> Result<Vec<bool>> {
        if col >= self.cols {
            return invalid(format!(
                "column {col} outside array of {} columns",
                self.cols
            ));
        }
        Ok((0..self.rows).map(|r| self.defective_at(r, col)).collect())
    }

    /// Each healthy cell flips to defective with probability `rate`.
    ///
    /// One uniform draw is consumed per cell in row-major order whatever the
    /// cell state, so the stream alignment does not depend on prior defects.
    pub fn inject_uniform(&self, rate: f64, seed: u64) -> Result<DefectMap> {
        if !(0.0..=1.0).contains(&rate) {
            return invalid(format!("uniform rate must lie in [0, 1], got {rate}"));
        }
        let mut rng = rng_from_seed(seed);
        let mut out = self.clone();
        for i in 0..out.cells.len() {
            let draw: f64 = rng.random();
            if draw < rate && !out.cells[i] {
                out.cells[i] = true;
                out.defects += 1;
            }
        }
        Ok(out)
    }

    /// Adds Gaussian clusters in list order.
    ///
    /// Each sample is a pair of independent normal draws rounded to the
    /// nearest cell. Samples that land outside the array or on a cell that is
    /// already defective are redrawn, so every spec contributes exactly
    /// `defect_count` new defects unless the array saturates first.
    pub fn inject_clusters(&self, specs: &[ClusterSpec], seed: u64) -> Result<DefectMap> {
        for spec in specs {
            self.check(spec.center.0, spec.center.1)?;
            ClusterSpec::new(spec.center, spec.std_dev, spec.defect_count)?;
        }
        let mut rng = rng_from_seed(seed);
        let mut out = self.clone();
        for spec in specs {
            let row_dist = Normal::new(spec.center.0 as f64, spec.std_dev)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let col_dist = Normal::new(spec.center.1 as f64, spec.std_dev)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let budget = spec.defect_count.saturating_mul(10_000);
            let mut placed = 0;
            let mut attempts = 0;
            while placed < spec.defect_count && out.defects < out.len() && attempts < budget {
                attempts += 1;
                let r = row_dist.sample(&mut rng).round();
                let c = col_dist.sample(&mut rng).round();
                if r < 0.0 || c < 0.0 || r >= out.rows as f64 || c >= out.cols as f64 {
                    continue;
                }
                if out.mark_defective(r as usize, c as usize) {
                    placed += 1;
                }
            }
        }
        Ok(out)
    }

    pub fn count_in_rect(&self, rect: &Rect) -> Result<usize> {
        self.check_rect(rect)?;
        Ok((rect.top..rect.bottom())
            .map(|r| {
                let start = r * self.cols;
                self.cells[start + rect.left..start + rect.right()]
                    .iter()
                    .filter(|&&d| d)
                    .count()
            })
            .sum())
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

/// Plain text grid: a `rows cols` header, then one line of `0`/`1` per row.
impl fmt::Display for DefectMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.rows, self.cols)?;
        let mut line = String::with_capacity(self.cols);
        for r in 0..self.rows {
            line.clear();
            line.extend((0..self.cols).map(|c| if self.defective_at(r, c) { '1' } else { '0' }));
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

impl FromStr for DefectMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<DefectMap> {
        let mut lines = s.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty input".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: 1,
                msg: format!("bad header: {e}"),
            })?;
        let [rows, cols] = dims[..] else {
            return Err(Error::Parse {
                line: 1,
                msg: "header must be `rows cols`".into(),
            });
        };
        let mut map = DefectMap::new(rows, cols)?;
        let mut r = 0;
        for (idx, line) in lines {
            let line = line.trim();
            if r >= rows {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: "more rows than declared".into(),
                });
            }
            if line.len() != cols {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected {cols} cells, found {}", line.len()),
                });
            }
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '0' => {}
                    '1' => {
                        map.mark_defective(r, c);
                    }
                    other => {
                        return Err(Error::Parse {
                            line: idx + 1,
                            msg: format!("unexpected character {other:?}"),
                        })
                    }
                }
            }
            r += 1;
        }
        if r != rows {
            return Err(Error::Parse {
                line: r + 2,
                msg: format!("expected {rows} rows, found {r}"),
            });
        }
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_map_is_healthy() {
        let map = DefectMap::new(256, 256).unwrap();
        assert_eq!(map.len(), 65536);
        assert_eq!(map.defect_count(), 0);
        let one = DefectMap::new(1, 1).unwrap();
        assert_eq!(one.cell(0, 0).unwrap(), Cell::Healthy);
        assert_eq!(DefectMap::new(32, 32).unwrap().healthy_count(), 1024);
    }

    #[test]
    fn zero_or_overflowing_dimensions_rejected() {
        assert!(DefectMap::new(0, 4).is_err());
        assert!(DefectMap::new(4, 0).is_err());
        assert!(DefectMap::new(usize::MAX, 2).is_err());
    }

    #[test]
    fn out_of_range_queries_are_errors() {
        let map = DefectMap::new(4, 4).unwrap();
        assert!(map.cell(4, 0).is_err());
        assert!(map.is_defective(0, 4).is_err());
        assert!(map.count_in_rect(&Rect::new(2, 2, 3, 1).unwrap()).is_err());
    }

    #[test]
    fn uniform_extremes() {
        let map = DefectMap::new(256, 256).unwrap();
        assert_eq!(map.inject_uniform(0.0, 7).unwrap(), map);
        let full = map.inject_uniform(1.0, 7).unwrap();
        assert_eq!(full.defect_count(), 65536);
        assert_eq!(full.defect_rate(), 1.0);
        assert!(map.inject_uniform(1.5, 0).is_err());
        assert!(map.inject_uniform(-0.1, 0).is_err());
    }

    #[test]
    fn uniform_rate_concentrates() {
        let map = DefectMap::new(256, 256).unwrap();
        let sigma = (0.07f64 * 0.93 / 65536.0).sqrt();
        for seed in 0..20 {
            let rate = map.inject_uniform(0.07, seed).unwrap().defect_rate();
            assert!((rate - 0.07).abs() < 4.0 * sigma, "seed {seed}: {rate}");
        }
    }

    #[test]
    fn clusters_empty_list_is_identity() {
        let map = DefectMap::new(16, 16)
            .unwrap()
            .inject_uniform(0.1, 3)
            .unwrap();
        assert_eq!(map.inject_clusters(&[], 9).unwrap(), map);
    }

    #[test]
    fn cluster_center_out_of_bounds_rejected() {
        let map = DefectMap::new(16, 16).unwrap();
        let spec = ClusterSpec {
            center: (16, 0),
            std_dev: 2.0,
            defect_count: 5,
        };
        assert!(map.inject_clusters(&[spec], 0).is_err());
        assert!(ClusterSpec::new((1, 1), 0.0, 5).is_err());
        assert!(ClusterSpec::new((1, 1), 1.0, 0).is_err());
    }

    #[test]
    fn cluster_adds_exact_count_and_saturates() {
        let map = DefectMap::new(64, 64).unwrap();
        let spec = ClusterSpec::new((32, 32), 4.0, 150).unwrap();
        assert_eq!(map.inject_clusters(&[spec], 1).unwrap().defect_count(), 150);
        let tiny = DefectMap::new(3, 3).unwrap();
        let big = ClusterSpec::new((1, 1), 1.0, 50).unwrap();
        assert_eq!(tiny.inject_clusters(&[big], 1).unwrap().defect_count(), 9);
    }

    #[test]
    fn cluster_mass_sits_in_three_sigma_box() {
        let map = DefectMap::new(256, 256).unwrap();
        let spec = ClusterSpec::new((128, 128), 5.0, 200).unwrap();
        let box3 = Rect::new(113, 113, 31, 31).unwrap();
        for seed in 0..100 {
            let out = map.inject_clusters(&[spec], seed).unwrap();
            let inside = out.count_in_rect(&box3).unwrap();
            assert!(inside as f64 >= 0.95 * 200.0, "seed {seed}: {inside}");
        }
    }

    #[test]
    fn ten_percent_budget() {
        let map = DefectMap::from_defects(256, 256, (0..6554).map(|i| (i / 256, i % 256))).unwrap();
        assert!((map.defect_rate() - 0.1).abs() < 1e-4);
    }

    #[test]
    fn count_in_rect_basics() {
        let empty = DefectMap::new(10, 10).unwrap();
        assert_eq!(empty.count_in_rect(&empty.bounds()).unwrap(), 0);
        let one = DefectMap::from_defects(10, 10, [(3, 3)]).unwrap();
        assert_eq!(
            one.count_in_rect(&Rect::new(0, 0, 10, 10).unwrap())
                .unwrap(),
            1
        );
        assert_eq!(
            one.count_in_rect(&Rect::new(4, 0, 6, 10).unwrap()).unwrap(),
            0
        );
    }

    #[test]
    fn text_format_round_trip() {
        let map = DefectMap::new(5, 7)
            .unwrap()
            .inject_uniform(0.3, 11)
            .unwrap();
        let text = map.to_text();
        assert!(text.starts_with("5 7\n"));
        assert_eq!(text.parse::<DefectMap>().unwrap(), map);
    }

    #[test]
    fn text_format_rejects_malformed() {
        assert!("".parse::<DefectMap>().is_err());
        assert!("2 2\n01\n".parse::<DefectMap>().is_err());
        assert!("2 2\n01\n0x\n".parse::<DefectMap>().is_err());
        assert!("2 2\n01\n011\n".parse::<DefectMap>().is_err());
        assert!("1 2\n01\n10\n".parse::<DefectMap>().is_err());
    }
}
