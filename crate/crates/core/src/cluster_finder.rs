//! Cluster extraction: slide a fixed mask over the fault matrix, take the
//! densest position, stretch it outward while its boundary lines stay dense,
//! remove the covered defects and repeat while the densest mask still holds
//! at least `density_threshold` defects.

use serde::{Deserialize, Serialize};

use crate::defect_model::{DefectMap, Rect};
use crate::error::{invalid, Result};

/// Summed-area table over a boolean grid; any rectangle count is O(1).
#[derive(Clone, Debug)]
pub struct SummedArea {
    cols: usize,
    sums: Vec<u32>,
}

impl SummedArea {
    pub fn from_map(map: &DefectMap) -> SummedArea {
        Self::from_fn(map.rows(), map.cols(), |r, c| map.defective_at(r, c))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> SummedArea {
        let stride = cols + 1;
        let mut sums = vec![0u32; (rows + 1) * stride];
        for r in 0..rows {
            let mut run = 0u32;
            for c in 0..cols {
                run += f(r, c) as u32;
                sums[(r + 1) * stride + c + 1] = sums[r * stride + c + 1] + run;
            }
        }
        SummedArea { cols, sums }
    }

    #[inline]
    pub fn count(&self, top: usize, left: usize, bottom: usize, right: usize) -> usize {
        let s = self.cols + 1;
        let v = self.sums[bottom * s + right] + self.sums[top * s + left]
            - self.sums[top * s + right]
            - self.sums[bottom * s + left];
        v as usize
    }

    pub fn rect(&self, r: &Rect) -> usize {
        self.count(r.top, r.left, r.bottom(), r.right())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub initial_mask_height: usize,
    pub initial_mask_width: usize,
    pub density_threshold: usize,
    pub boundary_threshold: usize,
    pub max_clusters: Option<usize>,
    /// Add the expected background count of a boundary line (working-map
    /// defect density times line length) to `boundary_threshold`.
    pub background_corrected: bool,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            initial_mask_height: 25,
            initial_mask_width: 25,
            density_threshold: 150,
            boundary_threshold: 2,
            max_clusters: None,
            background_corrected: true,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self, map: &DefectMap) -> Result<()> {
        if self.initial_mask_height == 0 || self.initial_mask_width == 0 {
            return invalid("initial mask must be non-empty");
        }
        if self.initial_mask_height > map.rows() || self.initial_mask_width > map.cols() {
            return invalid(format!(
                "mask {}x{} does not fit {}x{} array",
                self.initial_mask_height,
                self.initial_mask_width,
                map.rows(),
                map.cols()
            ));
        }
        if self.density_threshold == 0 {
            return invalid("density_threshold must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterWindow {
    pub bounds: Rect,
    pub defects_covered: usize,
    pub extraction_order: usize,
}

#[derive(Clone, Debug)]
pub struct Extraction {
    pub windows: Vec<ClusterWindow>,
    /// Working copy with every extracted window's defects removed.
    pub residual: DefectMap,
}

/// Densest `height x width` window; ties go to the smallest top, then left.
pub fn find_max_mask(map: &DefectMap, height: usize, width: usize) -> Result<(Rect, usize)> {
    check_mask(map, height, width)?;
    let sat = SummedArea::from_map(map);
    Ok(scan_max(&sat, None, map.rows(), map.cols(), height, width).expect("mask fits"))
}

fn check_mask(map: &DefectMap, height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 || height > map.rows() || width > map.cols() {
        return invalid(format!(
            "mask {height}x{width} does not fit {}x{} array",
            map.rows(),
            map.cols()
        ));
    }
    Ok(())
}

fn scan_max(
    sat: &SummedArea,
    blocked: Option<&SummedArea>,
    rows: usize,
    cols: usize,
    height: usize,
    width: usize,
) -> Option<(Rect, usize)> {
    let mut best: Option<(Rect, usize)> = None;
    for top in 0..=rows - height {
        for left in 0..=cols - width {
            if let Some(b) = blocked {
                if b.count(top, left, top + height, left + width) > 0 {
                    continue;
                }
            }
            let n = sat.count(top, left, top + height, left + width);
            if best.as_ref().is_none_or(|(_, m)| n > *m) {
                best = Some((
                    Rect {
                        top,
                        left,
                        height,
                        width,
                    },
                    n,
                ));
            }
        }
    }
    best
}

#[derive(Clone, Copy, Debug)]
enum Side {
    Top,
    Bottom,
    Left,
    Right,
}

const SIDES: [Side; 4] = [Side::Top, Side::Bottom, Side::Left, Side::Right];

impl Side {
    /// The line just outside `r` on this side, if it is still in the array.
    fn outside_line(self, r: &Rect, rows: usize, cols: usize) -> Option<Rect> {
        match self {
            Side::Top if r.top > 0 => Some(Rect {
                top: r.top - 1,
                height: 1,
                ..*r
            }),
            Side::Bottom if r.bottom() < rows => Some(Rect {
                top: r.bottom(),
                height: 1,
                ..*r
            }),
            Side::Left if r.left > 0 => Some(Rect {
                left: r.left - 1,
                width: 1,
                ..*r
            }),
            Side::Right if r.right() < cols => Some(Rect {
                left: r.right(),
                width: 1,
                ..*r
            }),
            _ => None,
        }
    }

    fn grow(self, r: &mut Rect) {
        match self {
            Side::Top => {
                r.top -= 1;
                r.height += 1;
            }
            Side::Bottom => r.height += 1,
            Side::Left => {
                r.left -= 1;
                r.width += 1;
            }
            Side::Right => r.width += 1,
        }
    }
}

struct StretchRule<'a> {
    threshold: usize,
    background: f64,
    blocked: Option<&'a SummedArea>,
}

fn stretch(map: &DefectMap, sat: &SummedArea, start: Rect, rule: &StretchRule<'_>) -> Rect {
    let (rows, cols) = (map.rows(), map.cols());
    let mut rect = start;
    loop {
        let mut grew = false;
        for side in SIDES {
            let Some(line) = side.outside_line(&rect, rows, cols) else {
                continue;
            };
            if rule.blocked.is_some_and(|b| b.rect(&line) > 0) {
                continue;
            }
            let limit = rule.threshold as f64 + rule.background * line.area() as f64;
            if sat.rect(&line) as f64 > limit {
                side.grow(&mut rect);
                grew = true;
            }
        }
        if !grew {
            return rect;
        }
    }
}

/// Grows `rect` one line at a time on any side whose adjacent outside line
/// holds more than `boundary_threshold` defects. Sides are visited top,
/// bottom, left, right per pass until a pass changes nothing.
pub fn stretch_mask(map: &DefectMap, rect: Rect, boundary_threshold: usize) -> Result<Rect> {
    map.check_rect(&rect)?;
    let sat = SummedArea::from_map(map);
    let rule = StretchRule {
        threshold: boundary_threshold,
        background: 0.0,
        blocked: None,
    };
    Ok(stretch(map, &sat, rect, &rule))
}

/// Repeated max-mask search and stretch on a shrinking working copy.
///
/// Positions overlapping an already extracted window are never considered
/// and stretching never grows into one, so windows are pairwise disjoint.
pub fn extract_clusters(map: &DefectMap, params: &ClusterParams) -> Result<Extraction> {
    params.validate(map)?;
    let (rows, cols) = (map.rows(), map.cols());
    let mut residual = map.clone();
    let mut windows: Vec<ClusterWindow> = Vec::new();
    let mut blocked_grid = vec![false; rows * cols];
    let cap = params.max_clusters.unwrap_or(usize::MAX);

    while windows.len() < cap && residual.defect_count() >= params.density_threshold {
        let sat = SummedArea::from_map(&residual);
        let blocked = SummedArea::from_fn(rows, cols, |r, c| blocked_grid[r * cols + c]);
        let Some((mask, count)) = scan_max(
            &sat,
            Some(&blocked),
            rows,
            cols,
            params.initial_mask_height,
            params.initial_mask_width,
        ) else {
            break;
        };
        if count < params.density_threshold {
            break;
        }
        let background = if params.background_corrected {
            residual.defect_rate()
        } else {
            0.0
        };
        let rule = StretchRule {
            threshold: params.boundary_threshold,
            background,
            blocked: Some(&blocked),
        };
        let bounds = stretch(&residual, &sat, mask, &rule);
        let covered = sat.rect(&bounds);
        for (r, c) in bounds.cells() {
            residual.mark_healthy(r, c);
            blocked_grid[r * cols + c] = true;
        }
        windows.push(ClusterWindow {
            bounds,
            defects_covered: covered,
            extraction_order: windows.len(),
        });
    }
    Ok(Extraction { windows, residual })
}
