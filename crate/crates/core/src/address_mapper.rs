//! End-to-end access path: RM-CAM remap, placement-vector addition, then
//! the three-column ROM that fans a logical column out to a voted triple.
//!
//! Logical and physical columns share indices. A triple serves the logical
//! column of its anchor (its lowest physical column); the two partner
//! columns hold redundant copies and serve no logical address. Cells of a
//! relocation target hold a cluster's data, so the target's own addresses
//! are displaced. Both kinds count as consumed in the census.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster_finder::{ClusterWindow, SummedArea};
use crate::defect_model::{DefectMap, Rect};
use crate::error::{invalid, Error, Result};
use crate::rmcam_model::RmCamTable;
use crate::tmr_selector::{vote, TmrPlan, TripleColumns};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedAccess {
    pub physical_row: usize,
    pub physical_columns: Vec<usize>,
    pub voted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ColumnRole {
    Plain,
    Anchor,
    Partner,
}

#[derive(Clone, Debug)]
pub struct MappingPipeline {
    rmcam: RmCamTable,
    triple_rom: BTreeMap<usize, TripleColumns>,
    roles: Vec<ColumnRole>,
    targets: Vec<Rect>,
    rows: usize,
    cols: usize,
}

impl MappingPipeline {
    pub fn new(rmcam: RmCamTable, plan: &TmrPlan) -> Result<MappingPipeline> {
        let (rows, cols) = rmcam.dims();
        let mut roles = vec![ColumnRole::Plain; cols];
        let mut triple_rom = BTreeMap::new();
        for t in &plan.triples {
            if t.columns[2] >= cols || t.columns[0] >= t.columns[1] || t.columns[1] >= t.columns[2]
            {
                return invalid(format!("malformed triple {:?}", t.columns));
            }
            for (i, &c) in t.columns.iter().enumerate() {
                if roles[c] != ColumnRole::Plain {
                    return invalid(format!("column {c} appears in two triples"));
                }
                roles[c] = if i == 0 {
                    ColumnRole::Anchor
                } else {
                    ColumnRole::Partner
                };
            }
            triple_rom.insert(t.anchor(), *t);
        }
        for (&key, &idx) in &plan.column_assignment {
            if plan.triples.get(idx).map(|t| t.anchor()) != Some(key) {
                return invalid(format!(
                    "column assignment {key} -> {idx} does not name its anchor"
                ));
            }
        }
        let mut targets = Vec::with_capacity(rmcam.len());
        for e in rmcam.entries() {
            let target = e
                .target()
                .ok_or_else(|| Error::Consistency(format!("entry {e:?} has no target")))?;
            let source = e.range();
            for j in 0..source.width {
                let (src, dst) = (source.left + j, target.left + j);
                if roles[src] != ColumnRole::Partner && roles[dst] == ColumnRole::Partner {
                    return Err(Error::Consistency(format!(
                        "entry {e:?} relocates live column {src} onto partner column {dst}"
                    )));
                }
            }
            targets.push(target);
        }
        for (i, t) in targets.iter().enumerate() {
            if rmcam.entries().iter().any(|e| e.range().intersects(t))
                || targets[..i].iter().any(|o| o.intersects(t))
            {
                return Err(Error::Consistency(format!(
                    "target {t:?} overlaps a range or target"
                )));
            }
        }
        Ok(MappingPipeline {
            rmcam,
            triple_rom,
            roles,
            targets,
            rows,
            cols,
        })
    }

    /// Pipeline with no remapping and no redundancy.
    pub fn identity(rows: usize, cols: usize) -> Result<MappingPipeline> {
        MappingPipeline::new(RmCamTable::new(0, rows, cols)?, &TmrPlan::default())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rmcam(&self) -> &RmCamTable {
        &self.rmcam
    }

    pub fn triple_rom(&self) -> &BTreeMap<usize, TripleColumns> {
        &self.triple_rom
    }

    pub fn targets(&self) -> &[Rect] {
        &self.targets
    }

    pub fn role(&self, col: usize) -> ColumnRole {
        self.roles[col]
    }

    pub fn resolve(&self, row: usize, col: usize) -> Result<ResolvedAccess> {
        if row >= self.rows || col >= self.cols {
            return invalid(format!(
                "address ({row}, {col}) outside {}x{} array",
                self.rows, self.cols
            ));
        }
        let (mut r, mut c) = (row as i64, col as i64);
        if let Some(e) = self.rmcam.match_address(row, col)? {
            r += e.placement.row_offset;
            c += e.placement.col_offset;
        }
        if r < 0 || c < 0 || r as usize >= self.rows || c as usize >= self.cols {
            return Err(Error::Consistency(format!(
                "({row}, {col}) maps outside the array to ({r}, {c})"
            )));
        }
        let (r, c) = (r as usize, c as usize);
        Ok(match self.triple_rom.get(&c) {
            Some(t) => ResolvedAccess {
                physical_row: r,
                physical_columns: t.columns.to_vec(),
                voted: true,
            },
            None => ResolvedAccess {
                physical_row: r,
                physical_columns: vec![c],
                voted: false,
            },
        })
    }

    /// Consumed addresses: partner columns and displaced target cells.
    pub fn is_consumed(&self, row: usize, col: usize) -> bool {
        self.roles[col] == ColumnRole::Partner || self.targets.iter().any(|t| t.contains(row, col))
    }

    pub fn classify(&self, map: &DefectMap, row: usize, col: usize) -> Result<AddressClass> {
        check_dims(self, map)?;
        if self.is_consumed(row, col) {
            return Ok(AddressClass::Consumed);
        }
        let access = self.resolve(row, col)?;
        let bad = access
            .physical_columns
            .iter()
            .filter(|&&c| map.defective_at(access.physical_row, c))
            .count();
        let ok = if access.voted { bad <= 1 } else { bad == 0 };
        Ok(if ok {
            AddressClass::Usable
        } else {
            AddressClass::Unusable
        })
    }
}

fn check_dims(p: &MappingPipeline, map: &DefectMap) -> Result<()> {
    if (map.rows(), map.cols()) != p.dims() {
        return invalid(format!(
            "map is {}x{}, pipeline is {}x{}",
            map.rows(),
            map.cols(),
            p.rows,
            p.cols
        ));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AddressClass {
    Usable,
    Unusable,
    Consumed,
}

/// Row-major grid of logical bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitGrid {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BitGrid {
    pub fn filled(rows: usize, cols: usize, value: bool) -> BitGrid {
        BitGrid {
            rows,
            cols,
            bits: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> BitGrid {
        let bits = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        BitGrid { rows, cols, bits }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.cols + col] = value;
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// Reads a logical address whose value `stored_truth` was written through
/// the pipeline. A defective cell returns the complement of what it holds.
pub fn read(
    pipeline: &MappingPipeline,
    stored_truth: &BitGrid,
    map: &DefectMap,
    row: usize,
    col: usize,
) -> Result<bool> {
    check_dims(pipeline, map)?;
    let access = pipeline.resolve(row, col)?;
    let stored = stored_truth.get(row, col);
    let cell = |c: usize| stored ^ map.defective_at(access.physical_row, c);
    Ok(match access.physical_columns[..] {
        [a, b, c] => vote(cell(a), cell(b), cell(c)),
        [a] => cell(a),
        _ => unreachable!("resolve yields one or three columns"),
    })
}

/// Physical array contents behind a pipeline. Writes fan out to every cell
/// of the resolved access; reads vote over them.
#[derive(Clone, Debug)]
pub struct PhysicalMemory<'a> {
    pipeline: &'a MappingPipeline,
    map: &'a DefectMap,
    cells: BitGrid,
}

impl<'a> PhysicalMemory<'a> {
    pub fn new(pipeline: &'a MappingPipeline, map: &'a DefectMap) -> Result<PhysicalMemory<'a>> {
        check_dims(pipeline, map)?;
        Ok(PhysicalMemory {
            pipeline,
            map,
            cells: BitGrid::filled(map.rows(), map.cols(), false),
        })
    }

    pub fn write(&mut self, row: usize, col: usize, value: bool) -> Result<()> {
        let access = self.pipeline.resolve(row, col)?;
        for &c in &access.physical_columns {
            self.cells.set(access.physical_row, c, value);
        }
        Ok(())
    }

    pub fn read(&self, row: usize, col: usize) -> Result<bool> {
        let access = self.pipeline.resolve(row, col)?;
        let r = access.physical_row;
        let cell = |c: usize| self.cells.get(r, c) ^ self.map.defective_at(r, c);
        Ok(match access.physical_columns[..] {
            [a, b, c] => vote(cell(a), cell(b), cell(c)),
            [a] => cell(a),
            _ => unreachable!("resolve yields one or three columns"),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub usable: usize,
    pub unusable: usize,
    pub consumed: usize,
}

impl Census {
    pub fn logical(&self) -> usize {
        self.usable + self.unusable
    }
}

pub fn usable_cell_census(pipeline: &MappingPipeline, map: &DefectMap) -> Result<Census> {
    check_dims(pipeline, map)?;
    let mut census = Census::default();
    for row in 0..map.rows() {
        for col in 0..map.cols() {
            match pipeline.classify(map, row, col)? {
                AddressClass::Usable => census.usable += 1,
                AddressClass::Unusable => census.unusable += 1,
                AddressClass::Consumed => census.consumed += 1,
            }
        }
    }
    Ok(census)
}

/// Relocation targets: the position displacing the fewest live cells,
/// ties going to the first one in a top-left to bottom-right scan.
///
/// A target has the cluster's dimensions, avoids every cluster window and
/// earlier target, and every cell that receives data from a live source
/// column must be readable after TMR: a live column whose read at that row
/// is correct on `map` (a healthy plain cell, or an anchor whose triple has
/// at most one defect in the row). `avoid` lists further rectangles to keep
/// clear of. Windows with no such target get `None`.
pub fn plan_targets(
    windows: &[ClusterWindow],
    map: &DefectMap,
    plan: &TmrPlan,
    avoid: &[Rect],
) -> Vec<Option<Rect>> {
    let (rows, cols) = (map.rows(), map.cols());
    let mut roles = vec![ColumnRole::Plain; cols];
    for t in &plan.triples {
        roles[t.columns[0]] = ColumnRole::Anchor;
        roles[t.columns[1]] = ColumnRole::Partner;
        roles[t.columns[2]] = ColumnRole::Partner;
    }
    let anchors: BTreeMap<usize, &TripleColumns> =
        plan.triples.iter().map(|t| (t.anchor(), t)).collect();
    let good = SummedArea::from_fn(rows, cols, |r, c| match roles[c] {
        ColumnRole::Plain => !map.defective_at(r, c),
        ColumnRole::Anchor => {
            anchors[&c]
                .columns
                .iter()
                .filter(|&&x| map.defective_at(r, x))
                .count()
                <= 1
        }
        ColumnRole::Partner => false,
    });
    let clusters: Vec<Rect> = windows
        .iter()
        .map(|w| w.bounds)
        .chain(avoid.iter().copied())
        .collect();
    let ctx = TargetContext {
        rows,
        cols,
        roles: &roles,
        good: &good,
        clusters: &clusters,
    };

    let in_order: Vec<usize> = (0..windows.len()).collect();
    let first = assign_targets(&ctx, windows, &in_order);
    if first.iter().all(Option::is_some) {
        return first;
    }
    // retry with the most constrained windows placed first
    let mut options: Vec<(usize, usize)> = windows
        .iter()
        .enumerate()
        .map(|(i, w)| (ctx.candidates(&w.bounds, &[]).count(), i))
        .collect();
    options.sort();
    let order: Vec<usize> = options.into_iter().map(|(_, i)| i).collect();
    let second = assign_targets(&ctx, windows, &order);
    let mapped = |v: &[Option<Rect>]| v.iter().filter(|t| t.is_some()).count();
    if mapped(&second) > mapped(&first) {
        second
    } else {
        first
    }
}

struct TargetContext<'a> {
    rows: usize,
    cols: usize,
    roles: &'a [ColumnRole],
    good: &'a SummedArea,
    clusters: &'a [Rect],
}

impl TargetContext<'_> {
    /// Valid target positions for `w` in scan order, with displaced live column counts.
    fn candidates<'b>(
        &'b self,
        w: &'b Rect,
        chosen: &'b [Rect],
    ) -> impl Iterator<Item = (usize, Rect)> + 'b {
        let live: Vec<usize> = (0..w.width)
            .filter(|&j| self.roles[w.left + j] != ColumnRole::Partner)
            .collect();
        let tops = 0..=self.rows.saturating_sub(w.height);
        tops.flat_map(move |top| {
            (0..=self.cols.saturating_sub(w.width)).map(move |left| (top, left))
        })
        .filter_map(move |(top, left)| {
            let t = Rect {
                top,
                left,
                height: w.height,
                width: w.width,
            };
            if self.clusters.iter().chain(chosen).any(|o| o.intersects(&t)) {
                return None;
            }
            let ok = live
                .iter()
                .all(|&j| self.good.count(top, left + j, top + w.height, left + j + 1) == w.height);
            if !ok {
                return None;
            }
            let displaced = (left..left + w.width)
                .filter(|&c| self.roles[c] != ColumnRole::Partner)
                .count();
            Some((displaced, t))
        })
    }

    fn live_count(&self, w: &Rect) -> usize {
        (0..w.width)
            .filter(|&j| self.roles[w.left + j] != ColumnRole::Partner)
            .count()
    }
}

fn assign_targets(
    ctx: &TargetContext<'_>,
    windows: &[ClusterWindow],
    order: &[usize],
) -> Vec<Option<Rect>> {
    let mut chosen: Vec<Rect> = Vec::new();
    let mut out = vec![None; windows.len()];
    for &i in order {
        let w = windows[i].bounds;
        // each live source column needs a live target column, so a window
        // displacing exactly that many columns cannot be beaten
        let floor = ctx.live_count(&w);
        let mut found: Option<(usize, Rect)> = None;
        for (displaced, t) in ctx.candidates(&w, &chosen) {
            if found.is_none_or(|(best, _)| displaced < best) {
                found = Some((displaced, t));
                if displaced == floor {
                    break;
                }
            }
        }
        if let Some((_, t)) = found {
            chosen.push(t);
            out[i] = Some(t);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rmcam_model::{compile_table, RmCamEntry};
    use crate::tmr_selector::score_triple;

    #[test]
    fn identity_pipeline() {
        let p = MappingPipeline::identity(16, 16).unwrap();
        let a = p.resolve(5, 7).unwrap();
        assert_eq!(
            a,
            ResolvedAccess {
                physical_row: 5,
                physical_columns: vec![7],
                voted: false
            }
        );
        assert!(p.resolve(16, 0).is_err());
        let map = DefectMap::new(16, 16).unwrap();
        let c = usable_cell_census(&p, &map).unwrap();
        assert_eq!(
            c,
            Census {
                usable: 256,
                unusable: 0,
                consumed: 0
            }
        );
    }

    #[test]
    fn placement_vector_then_triple() {
        let map = DefectMap::new(64, 64).unwrap();
        let window = ClusterWindow {
            bounds: Rect::new(0, 20, 4, 4).unwrap(),
            defects_covered: 0,
            extraction_order: 0,
        };
        let target = Rect::new(30, 10, 4, 4).unwrap();
        let rmcam = compile_table(&[window], &[target], 64, (64, 64)).unwrap();
        let triple = score_triple(&map, [11, 40, 41]).unwrap();
        let p = MappingPipeline::new(rmcam, &TmrPlan::from_triples(vec![triple])).unwrap();
        let a = p.resolve(1, 21).unwrap();
        assert_eq!((a.physical_row, a.voted), (31, true));
        assert_eq!(a.physical_columns, vec![11, 40, 41]);
        let b = p.resolve(2, 22).unwrap();
        assert_eq!(
            (b.physical_row, b.physical_columns.clone(), b.voted),
            (32, vec![12], false)
        );
        assert!(p.is_consumed(5, 40));
        assert!(p.is_consumed(31, 11));
        assert!(!p.is_consumed(1, 21));
    }

    #[test]
    fn live_column_onto_partner_rejected() {
        let map = DefectMap::new(32, 32).unwrap();
        let entry = RmCamEntry::from_rects(
            &Rect::new(0, 0, 2, 2).unwrap(),
            &Rect::new(10, 5, 2, 2).unwrap(),
        );
        let mut rmcam = RmCamTable::new(8, 32, 32).unwrap();
        rmcam.push(entry).unwrap();
        let plan = TmrPlan::from_triples(vec![score_triple(&map, [4, 5, 9]).unwrap()]);
        assert!(matches!(
            MappingPipeline::new(rmcam, &plan),
            Err(Error::Consistency(_))
        ));
    }

    #[test]
    fn reads_mask_single_faults_only() {
        let map = DefectMap::from_defects(4, 6, [(0, 1), (1, 0), (1, 2)]).unwrap();
        let plan = TmrPlan::from_triples(vec![score_triple(&map, [0, 1, 2]).unwrap()]);
        let p = MappingPipeline::new(RmCamTable::new(0, 4, 6).unwrap(), &plan).unwrap();
        let zeros = BitGrid::filled(4, 6, false);
        let ones = BitGrid::filled(4, 6, true);
        assert!(!read(&p, &zeros, &map, 0, 0).unwrap());
        assert!(read(&p, &ones, &map, 0, 0).unwrap());
        assert!(!read(&p, &ones, &map, 1, 0).unwrap());
        assert!(read(&p, &ones, &map, 3, 4).unwrap());
        let c = usable_cell_census(&p, &map).unwrap();
        assert_eq!(
            c,
            Census {
                usable: 3 + 12,
                unusable: 1,
                consumed: 8
            }
        );
    }

    #[test]
    fn physical_memory_write_then_read() {
        let map = DefectMap::from_defects(4, 6, [(0, 1), (2, 4)]).unwrap();
        let plan = TmrPlan::from_triples(vec![score_triple(&map, [0, 1, 2]).unwrap()]);
        let p = MappingPipeline::new(RmCamTable::new(0, 4, 6).unwrap(), &plan).unwrap();
        let mut mem = PhysicalMemory::new(&p, &map).unwrap();
        mem.write(0, 0, true).unwrap();
        assert!(mem.read(0, 0).unwrap());
        mem.write(2, 4, true).unwrap();
        assert!(!mem.read(2, 4).unwrap());
    }

    #[test]
    fn targets_avoid_defects_and_partners() {
        let mut defects: Vec<(usize, usize)> = Rect::new(2, 2, 4, 4).unwrap().cells().collect();
        defects.push((10, 3));
        let map = DefectMap::from_defects(20, 12, defects).unwrap();
        let window = ClusterWindow {
            bounds: Rect::new(2, 2, 4, 4).unwrap(),
            defects_covered: 16,
            extraction_order: 0,
        };
        let residual = map.cleared(&window.bounds).unwrap();
        let plan = TmrPlan::default();
        let targets = plan_targets(std::slice::from_ref(&window), &residual, &plan, &[]);
        let t = targets[0].unwrap();
        assert!(!t.intersects(&window.bounds));
        assert!(t
            .cells()
            .all(|(r, c)| !residual.is_defective(r, c).unwrap()));
        assert_eq!(t, Rect::new(0, 6, 4, 4).unwrap());
    }
}
