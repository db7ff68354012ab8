//! Range-matching CAM.
//!
//! Each entry stores lower and upper bound words for the row and column
//! address. A lower cell chain reports a match when the search word is at
//! least the stored word, an upper chain when it is at most the stored word.
//! The entry's match line is the AND of its four chains.

use serde::{Deserialize, Serialize};

use crate::cluster_finder::ClusterWindow;
use crate::defect_model::Rect;
use crate::error::{invalid, Error, Result};

/// Fixed-width word, most significant bit first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitWord {
    bits: Vec<bool>,
}

impl BitWord {
    pub fn new(value: u64, width: usize) -> Result<BitWord> {
        if width == 0 || width > 64 {
            return invalid(format!("word width must be in 1..=64, got {width}"));
        }
        if width < 64 && value >> width != 0 {
            return invalid(format!("value {value} does not fit in {width} bits"));
        }
        Ok(BitWord {
            bits: (0..width).rev().map(|i| (value >> i) & 1 == 1).collect(),
        })
    }

    pub fn from_bits(bits: Vec<bool>) -> Result<BitWord> {
        if bits.is_empty() || bits.len() > 64 {
            return invalid(format!("word width must be in 1..=64, got {}", bits.len()));
        }
        Ok(BitWord { bits })
    }

    pub fn width(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn value(&self) -> u64 {
        self.bits.iter().fold(0, |acc, &b| (acc << 1) | b as u64)
    }
}

/// Bits needed to address `dim` positions, at least one.
pub fn address_width(dim: usize) -> usize {
    (usize::BITS - dim.saturating_sub(1).leading_zeros()).max(1) as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompareMode {
    /// Match iff search >= stored.
    Lower,
    /// Match iff search <= stored.
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CompareOutcome {
    Match,
    NoMatch,
}

/// Walks the cell chain from the most significant bit. A cell whose search
/// and stored bits agree raises its propagate line and hands the decision to
/// the next cell; the first disagreeing cell decides. A chain that
/// propagates all the way through is an equality, which matches in both
/// modes.
pub fn bit_serial_compare(
    input: &BitWord,
    stored: &BitWord,
    mode: CompareMode,
) -> Result<CompareOutcome> {
    if input.width() != stored.width() {
        return invalid(format!(
            "word width mismatch: search {} bits, stored {} bits",
            input.width(),
            stored.width()
        ));
    }
    for (&a, &b) in input.bits.iter().zip(&stored.bits) {
        // XNOR of the cell: equal bits propagate
        if a == b {
            continue;
        }
        let greater = a & !b;
        let matched = match mode {
            CompareMode::Lower => greater,
            CompareMode::Upper => !greater,
        };
        return Ok(if matched {
            CompareOutcome::Match
        } else {
            CompareOutcome::NoMatch
        });
    }
    Ok(CompareOutcome::Match)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlacementVector {
    pub row_offset: i64,
    pub col_offset: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RmCamEntry {
    pub row_lower: usize,
    pub row_upper: usize,
    pub col_lower: usize,
    pub col_upper: usize,
    pub placement: PlacementVector,
}

impl RmCamEntry {
    pub fn range(&self) -> Rect {
        Rect {
            top: self.row_lower,
            left: self.col_lower,
            height: self.row_upper - self.row_lower + 1,
            width: self.col_upper - self.col_lower + 1,
        }
    }

    pub fn target(&self) -> Option<Rect> {
        let top = self.row_lower as i64 + self.placement.row_offset;
        let left = self.col_lower as i64 + self.placement.col_offset;
        if top < 0 || left < 0 {
            return None;
        }
        let r = self.range();
        Some(Rect {
            top: top as usize,
            left: left as usize,
            ..r
        })
    }

    pub fn from_rects(source: &Rect, target: &Rect) -> RmCamEntry {
        RmCamEntry {
            row_lower: source.top,
            row_upper: source.bottom() - 1,
            col_lower: source.left,
            col_upper: source.right() - 1,
            placement: PlacementVector {
                row_offset: target.top as i64 - source.top as i64,
                col_offset: target.left as i64 - source.left as i64,
            },
        }
    }
}

/// Behavioral RM-CAM. Capacity is counted in single-bound words, four per
/// entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RmCamTable {
    entries: Vec<RmCamEntry>,
    capacity: usize,
    rows: usize,
    cols: usize,
}

pub const BOUND_WORDS_PER_ENTRY: usize = 4;

impl RmCamTable {
    pub fn new(capacity: usize, rows: usize, cols: usize) -> Result<RmCamTable> {
        if rows == 0 || cols == 0 {
            return invalid("RM-CAM address space must be non-empty");
        }
        Ok(RmCamTable {
            entries: Vec::new(),
            capacity,
            rows,
            cols,
        })
    }

    pub fn entries(&self) -> &[RmCamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn bound_words(&self) -> usize {
        BOUND_WORDS_PER_ENTRY * self.entries.len()
    }

    pub fn row_width(&self) -> usize {
        address_width(self.rows)
    }

    pub fn col_width(&self) -> usize {
        address_width(self.cols)
    }

    /// Appends an entry after checking bounds, capacity, disjointness and
    /// that its relocation target lies inside the array.
    pub fn push(&mut self, entry: RmCamEntry) -> Result<()> {
        if entry.row_lower > entry.row_upper || entry.col_lower > entry.col_upper {
            return invalid(format!("entry bounds inverted: {entry:?}"));
        }
        let range = entry.range();
        if range.bottom() > self.rows || range.right() > self.cols {
            return invalid(format!("entry range {range:?} outside array"));
        }
        match entry.target() {
            Some(t) if t.bottom() <= self.rows && t.right() <= self.cols => {}
            _ => return invalid(format!("entry {entry:?} relocates outside the array")),
        }
        if self.entries.iter().any(|e| e.range().intersects(&range)) {
            return invalid(format!("entry range {range:?} overlaps an existing entry"));
        }
        let needed = self.bound_words() + BOUND_WORDS_PER_ENTRY;
        if needed > self.capacity {
            return Err(Error::CapacityExceeded {
                needed,
                capacity: self.capacity,
            });
        }
        self.entries.push(entry);
        Ok(())
    }

    fn entry_matches(&self, e: &RmCamEntry, row: &BitWord, col: &BitWord) -> Result<bool> {
        let (rw, cw) = (self.row_width(), self.col_width());
        let chains = [
            (
                row,
                BitWord::new(e.row_lower as u64, rw)?,
                CompareMode::Lower,
            ),
            (
                row,
                BitWord::new(e.row_upper as u64, rw)?,
                CompareMode::Upper,
            ),
            (
                col,
                BitWord::new(e.col_lower as u64, cw)?,
                CompareMode::Lower,
            ),
            (
                col,
                BitWord::new(e.col_upper as u64, cw)?,
                CompareMode::Upper,
            ),
        ];
        for (search, stored, mode) in &chains {
            if bit_serial_compare(search, stored, *mode)? == CompareOutcome::NoMatch {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Searches every entry and returns the single one whose ranges hold the
    /// address, if any.
    pub fn match_address(&self, row: usize, col: usize) -> Result<Option<&RmCamEntry>> {
        if row >= self.rows || col >= self.cols {
            return invalid(format!(
                "address ({row}, {col}) outside {}x{} array",
                self.rows, self.cols
            ));
        }
        let row_word = BitWord::new(row as u64, self.row_width())?;
        let col_word = BitWord::new(col as u64, self.col_width())?;
        let mut hit = None;
        for e in &self.entries {
            if self.entry_matches(e, &row_word, &col_word)? {
                if hit.is_some() {
                    return Err(Error::Consistency(format!(
                        "address ({row}, {col}) matches more than one RM-CAM entry"
                    )));
                }
                hit = Some(e);
            }
        }
        Ok(hit)
    }
}

/// One entry per cluster, relocating the cluster window onto its target.
pub fn compile_table(
    clusters: &[ClusterWindow],
    targets: &[Rect],
    capacity: usize,
    dims: (usize, usize),
) -> Result<RmCamTable> {
    if clusters.len() != targets.len() {
        return invalid(format!(
            "{} clusters but {} targets",
            clusters.len(),
            targets.len()
        ));
    }
    let needed = BOUND_WORDS_PER_ENTRY * clusters.len();
    if needed > capacity {
        return Err(Error::CapacityExceeded { needed, capacity });
    }
    let (rows, cols) = dims;
    let array = Rect::new(0, 0, rows, cols)?;
    for (i, (w, t)) in clusters.iter().zip(targets).enumerate() {
        let b = &w.bounds;
        if (b.height, b.width) != (t.height, t.width) {
            return invalid(format!(
                "target {i} is {}x{}, cluster is {}x{}",
                t.height, t.width, b.height, b.width
            ));
        }
        if !array.contains_rect(t) || !array.contains_rect(b) {
            return invalid(format!("cluster or target {i} outside the array"));
        }
        if clusters.iter().any(|c| c.bounds.intersects(t)) {
            return invalid(format!("target {i} overlaps a cluster window"));
        }
        if targets[..i].iter().any(|o| o.intersects(t)) {
            return invalid(format!("target {i} overlaps another target"));
        }
    }
    let mut table = RmCamTable::new(capacity, rows, cols)?;
    for (w, t) in clusters.iter().zip(targets) {
        table.push(RmCamEntry::from_rects(&w.bounds, t))?;
    }
    Ok(table)
}
