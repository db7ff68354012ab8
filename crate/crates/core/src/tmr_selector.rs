//! Column-triple selection for triple modular redundancy.
//!
//! A row of a triple is a Bad Row when two or three of its cells are
//! defective: the majority vote cannot mask it. Candidates are ranked by
//! fewer Bad Rows first, then by more defects, then by column indices.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::defect_model::DefectMap;
use crate::error::{invalid, Result};

/// Largest column count for which exhaustive triple enumeration is allowed.
pub const EXHAUSTIVE_MAX_COLUMNS: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TripleColumns {
    /// Ascending physical column indices. `columns[0]` is the anchor: the
    /// logical column the triple serves.
    pub columns: [usize; 3],
    pub bad_rows: usize,
    pub defects: usize,
}

impl TripleColumns {
    pub fn anchor(&self) -> usize {
        self.columns[0]
    }

    pub fn partners(&self) -> [usize; 2] {
        [self.columns[1], self.columns[2]]
    }

    pub fn contains(&self, col: usize) -> bool {
        self.columns.contains(&col)
    }

    /// Selection priority: fewer bad rows, more defects, lower columns.
    pub fn priority_cmp(&self, other: &TripleColumns) -> Ordering {
        self.bad_rows
            .cmp(&other.bad_rows)
            .then(other.defects.cmp(&self.defects))
            .then(self.columns.cmp(&other.columns))
    }
}

fn sorted_triple(cols: [usize; 3], width: usize) -> Result<[usize; 3]> {
    let mut c = cols;
    c.sort_unstable();
    if c[0] == c[1] || c[1] == c[2] {
        return invalid(format!("triple columns must be distinct, got {cols:?}"));
    }
    if c[2] >= width {
        return invalid(format!("triple {cols:?} outside array of {width} columns"));
    }
    Ok(c)
}

pub fn score_triple(map: &DefectMap, cols: [usize; 3]) -> Result<TripleColumns> {
    let columns = sorted_triple(cols, map.cols())?;
    let mut bad_rows = 0;
    let mut defects = 0;
    for r in 0..map.rows() {
        let n = columns.iter().filter(|&&c| map.defective_at(r, c)).count();
        defects += n;
        if n >= 2 {
            bad_rows += 1;
        }
    }
    Ok(TripleColumns {
        columns,
        bad_rows,
        defects,
    })
}

/// Orders already scored triples by selection priority.
pub fn rank(mut triples: Vec<TripleColumns>) -> Vec<TripleColumns> {
    triples.sort_by(TripleColumns::priority_cmp);
    triples
}

pub fn rank_candidates(map: &DefectMap, candidates: &[[usize; 3]]) -> Result<Vec<TripleColumns>> {
    let scored = candidates
        .iter()
        .map(|&c| score_triple(map, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank(scored))
}

/// Triple-majority, as settled on the shared interconnect of the inherent
/// voter.
#[inline]
pub fn vote(a: bool, b: bool, c: bool) -> bool {
    (a & b) | (a & c) | (b & c)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TripleSearch {
    /// For each column (most defects first) pick the best disjoint partner
    /// pair among the remaining columns.
    #[default]
    Greedy,
    /// Rank every possible triple; limited to small arrays.
    Exhaustive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TmrParams {
    pub max_bad_rows: usize,
    pub search: TripleSearch,
}

impl Default for TmrParams {
    fn default() -> Self {
        TmrParams {
            max_bad_rows: 0,
            search: TripleSearch::Greedy,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TmrPlan {
    pub triples: Vec<TripleColumns>,
    /// Logical (anchor) column -> index into `triples`.
    pub column_assignment: BTreeMap<usize, usize>,
}

impl TmrPlan {
    pub fn from_triples(triples: Vec<TripleColumns>) -> TmrPlan {
        let column_assignment = triples
            .iter()
            .enumerate()
            .map(|(i, t)| (t.anchor(), i))
            .collect();
        TmrPlan {
            triples,
            column_assignment,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn triple_for(&self, logical_col: usize) -> Option<&TripleColumns> {
        self.column_assignment
            .get(&logical_col)
            .map(|&i| &self.triples[i])
    }

    pub fn used_columns(&self) -> BTreeSet<usize> {
        self.triples.iter().flat_map(|t| t.columns).collect()
    }
}

/// Defect rows of every column as packed bitsets.
struct ColumnBits {
    words: usize,
    bits: Vec<u64>,
    counts: Vec<usize>,
}

impl ColumnBits {
    fn new(map: &DefectMap) -> ColumnBits {
        let words = map.rows().div_ceil(64);
        let mut bits = vec![0u64; words * map.cols()];
        let mut counts = vec![0; map.cols()];
        for (r, c) in map.defects() {
            bits[c * words + r / 64] |= 1 << (r % 64);
            counts[c] += 1;
        }
        ColumnBits {
            words,
            bits,
            counts,
        }
    }

    fn col(&self, c: usize) -> &[u64] {
        &self.bits[c * self.words..(c + 1) * self.words]
    }

    fn overlap(&self, a: usize, b: usize) -> usize {
        self.col(a)
            .iter()
            .zip(self.col(b))
            .map(|(x, y)| (x & y).count_ones() as usize)
            .sum()
    }

    fn bad_rows(&self, a: usize, b: usize, c: usize) -> usize {
        let (a, b, c) = (self.col(a), self.col(b), self.col(c));
        (0..self.words)
            .map(|i| ((a[i] & b[i]) | (a[i] & c[i]) | (b[i] & c[i])).count_ones() as usize)
            .sum()
    }

    fn triple(&self, cols: [usize; 3]) -> TripleColumns {
        let mut columns = cols;
        columns.sort_unstable();
        let [a, b, c] = columns;
        TripleColumns {
            columns,
            bad_rows: self.bad_rows(a, b, c),
            defects: self.counts[a] + self.counts[b] + self.counts[c],
        }
    }
}

/// Assigns disjoint column triples, avoiding `excluded` columns, while a
/// triple with at most `max_bad_rows` Bad Rows can still be formed.
pub fn select_tmr(
    map: &DefectMap,
    excluded: &BTreeSet<usize>,
    params: &TmrParams,
) -> Result<TmrPlan> {
    if let Some(&c) = excluded.iter().find(|&&c| c >= map.cols()) {
        return invalid(format!(
            "excluded column {c} outside array of {} columns",
            map.cols()
        ));
    }
    let bits = ColumnBits::new(map);
    let candidates: Vec<usize> = (0..map.cols()).filter(|c| !excluded.contains(c)).collect();
    let triples = match params.search {
        TripleSearch::Greedy => greedy(&bits, &candidates, params.max_bad_rows),
        TripleSearch::Exhaustive => {
            if map.cols() > EXHAUSTIVE_MAX_COLUMNS {
                return invalid(format!(
                    "exhaustive triple search limited to {EXHAUSTIVE_MAX_COLUMNS} columns, array has {}",
                    map.cols()
                ));
            }
            exhaustive(&bits, &candidates, params.max_bad_rows)
        }
    };
    Ok(TmrPlan::from_triples(triples))
}

fn greedy(bits: &ColumnBits, candidates: &[usize], max_bad: usize) -> Vec<TripleColumns> {
    let mut seeds = candidates.to_vec();
    seeds.sort_by(|&a, &b| bits.counts[b].cmp(&bits.counts[a]).then(a.cmp(&b)));
    let mut free: BTreeSet<usize> = candidates.iter().copied().collect();
    let mut accepted = Vec::new();

    for seed in seeds {
        if free.len() < 3 {
            break;
        }
        if !free.contains(&seed) {
            continue;
        }
        let others: Vec<usize> = free.iter().copied().filter(|&c| c != seed).collect();
        let mut best: Option<TripleColumns> = None;
        for (i, &b) in others.iter().enumerate() {
            let ab = bits.overlap(seed, b);
            if ab > max_bad || best.is_some_and(|t| ab > t.bad_rows) {
                continue;
            }
            for &c in &others[i + 1..] {
                let t = bits.triple([seed, b, c]);
                if t.bad_rows > max_bad {
                    continue;
                }
                if best.is_none_or(|cur| t.priority_cmp(&cur) == Ordering::Less) {
                    best = Some(t);
                }
            }
        }
        if let Some(t) = best {
            for c in t.columns {
                free.remove(&c);
            }
            accepted.push(t);
        }
    }
    accepted
}

fn exhaustive(bits: &ColumnBits, candidates: &[usize], max_bad: usize) -> Vec<TripleColumns> {
    let mut all = Vec::new();
    for (i, &a) in candidates.iter().enumerate() {
        for (j, &b) in candidates.iter().enumerate().skip(i + 1) {
            for &c in &candidates[j + 1..] {
                all.push(bits.triple([a, b, c]));
            }
        }
    }
    let mut used = BTreeSet::new();
    let mut accepted = Vec::new();
    for t in rank(all) {
        if t.bad_rows > max_bad {
            break;
        }
        if t.columns.iter().any(|c| used.contains(c)) {
            continue;
        }
        used.extend(t.columns);
        accepted.push(t);
    }
    accepted
}
