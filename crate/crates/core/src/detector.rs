//! Detection of maximal-size targets on a score map.
//!
//! Every axis-aligned box of the point cloud's bounding volume whose 2D
//! footprint covers at most `max_area` pixels is counted. For each point
//! count `kappa` only the smallest-volume box is kept (the most significant
//! one a priori), its Hoeffding significance is computed with the number of
//! same-shaped placements as `eta`, and the boxes whose significance exceeds
//! both `s_min` and `relative_factor * S_max` are reported.
//!
//! The minimal-volume table is defined with respect to the canonical
//! enumeration order `(w, h, zlen, x0, y0, z0)`: among boxes of equal
//! volume the first one in that order wins. The scan itself visits boxes in
//! a different order, in parallel over footprint shapes, and resolves ties
//! by comparing canonical keys, so the result does not depend on the
//! number of workers.
//!
//! Two classes of boxes are skipped during the scan because they can never
//! be minimal: boxes whose lowest or highest z-level is empty inside the
//! footprint, and boxes with an empty boundary row or column. Each has a
//! strictly smaller sub-box holding the same points.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integral::{build_integral, BoxExtent, IntegralVolume};
use crate::nfa::{eta_for_box, hoeffding_unchecked, BoxDims, SpaceDims};
use crate::scoremap_io::{DetectionRecord, ScoreMap};
use crate::transform::{build_point_cloud, PixelRect, PointCloud3D, TransformParams};

pub const DEFAULT_MAX_AREA: usize = 64;
pub const DEFAULT_RELATIVE_FACTOR: f64 = 0.8;
pub const DEFAULT_S_MIN: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    max_area: usize,
    s_min: f64,
    relative_factor: f64,
    transform: TransformParams,
}

impl DetectorParams {
    pub fn new(
        max_area: usize,
        s_min: f64,
        relative_factor: f64,
        transform: TransformParams,
    ) -> Result<Self> {
        if max_area == 0 {
            return Err(Error::Domain("max area must be at least 1".into()));
        }
        if !s_min.is_finite() {
            return Err(Error::Domain(format!("s_min must be finite, got {s_min}")));
        }
        if !(relative_factor > 0.0 && relative_factor <= 1.0) {
            return Err(Error::Domain(format!(
                "relative factor must lie in (0, 1], got {relative_factor}"
            )));
        }
        Ok(Self {
            max_area,
            s_min,
            relative_factor,
            transform,
        })
    }

    pub fn max_area(&self) -> usize {
        self.max_area
    }

    pub fn s_min(&self) -> f64 {
        self.s_min
    }

    pub fn relative_factor(&self) -> f64 {
        self.relative_factor
    }

    pub fn transform(&self) -> &TransformParams {
        &self.transform
    }

    pub fn with_s_min(self, s_min: f64) -> Result<Self> {
        Self::new(self.max_area, s_min, self.relative_factor, self.transform)
    }
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            max_area: DEFAULT_MAX_AREA,
            s_min: DEFAULT_S_MIN,
            relative_factor: DEFAULT_RELATIVE_FACTOR,
            transform: TransformParams::default(),
        }
    }
}

/// A counted box: extent in image coordinates, point count and volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Box3D {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
    pub z0: usize,
    pub zlen: usize,
    pub kappa: u64,
    pub nu: u64,
}

impl Box3D {
    pub fn new(extent: BoxExtent, kappa: u64) -> Self {
        Self {
            x0: extent.x0,
            y0: extent.y0,
            w: extent.w,
            h: extent.h,
            z0: extent.z0,
            zlen: extent.zlen,
            kappa,
            nu: extent.volume(),
        }
    }

    pub fn extent(&self) -> BoxExtent {
        BoxExtent {
            x0: self.x0,
            y0: self.y0,
            z0: self.z0,
            w: self.w,
            h: self.h,
            zlen: self.zlen,
        }
    }

    pub fn footprint(&self) -> PixelRect {
        PixelRect {
            x0: self.x0,
            y0: self.y0,
            width: self.w,
            height: self.h,
        }
    }

    pub fn dims(&self) -> BoxDims {
        BoxDims {
            w: self.w,
            h: self.h,
            zlen: self.zlen,
        }
    }

    pub fn density(&self) -> f64 {
        self.kappa as f64 / self.nu as f64
    }
}

/// Minimal-volume box per point count, indices `0..=max_area`.
///
/// Index 0 is never filled: empty boxes are not candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KappaTable {
    entries: Vec<Option<Box3D>>,
}

impl KappaTable {
    pub fn new(max_area: usize) -> Self {
        Self {
            entries: vec![None; max_area + 1],
        }
    }

    pub fn max_area(&self) -> usize {
        self.entries.len() - 1
    }

    /// Minimal volume for `kappa`, `None` standing for `+inf`.
    pub fn volume(&self, kappa: usize) -> Option<u64> {
        self.entries.get(kappa).copied().flatten().map(|b| b.nu)
    }

    pub fn get(&self, kappa: usize) -> Option<&Box3D> {
        self.entries.get(kappa).and_then(Option::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Box3D> {
        self.entries.iter().flatten()
    }

    #[inline]
    fn offer(&mut self, kappa: usize, nu: u64, extent: BoxExtent) {
        let slot = &mut self.entries[kappa];
        let better = match slot {
            None => true,
            Some(cur) => {
                nu < cur.nu
                    || (nu == cur.nu && extent.canonical_key() < cur.extent().canonical_key())
            }
        };
        if better {
            *slot = Some(Box3D::new(extent, kappa as u64));
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for b in other.entries.into_iter().flatten() {
            self.offer(b.kappa as usize, b.nu, b.extent());
        }
        self
    }
}

/// All `(w, h)` footprints with `w * h <= max_area` that fit in `rect`, in
/// canonical order.
fn footprint_shapes(rect: PixelRect, max_area: usize) -> Vec<(usize, usize)> {
    (1..=rect.width.min(max_area))
        .flat_map(|w| (1..=rect.height.min(max_area / w)).map(move |h| (w, h)))
        .collect()
}

/// Builds the minimal-volume table over the boxes of `rect x [0, bins)` with
/// footprint area at most `max_area`.
pub fn min_volume_table(iv: &IntegralVolume, max_area: usize, rect: PixelRect) -> KappaTable {
    assert!(
        rect.x0 + rect.width <= iv.width() && rect.y0 + rect.height <= iv.height(),
        "search rectangle exceeds the integral volume"
    );
    footprint_shapes(rect, max_area)
        .into_par_iter()
        .fold(
            || (KappaTable::new(max_area), vec![0u32; iv.bins() + 1]),
            |(mut table, mut profile), (w, h)| {
                scan_shape(iv, rect, w, h, &mut table, &mut profile);
                (table, profile)
            },
        )
        .map(|(table, _)| table)
        .reduce(|| KappaTable::new(max_area), KappaTable::merge)
}

fn scan_shape(
    iv: &IntegralVolume,
    rect: PixelRect,
    w: usize,
    h: usize,
    table: &mut KappaTable,
    profile: &mut [u32],
) {
    let bins = iv.bins();
    let area = (w * h) as u64;
    for y0 in rect.y0..=rect.y0 + rect.height - h {
        for x0 in rect.x0..=rect.x0 + rect.width - w {
            let empty_edge = iv.footprint_count(x0, y0, 1, h) == 0
                || iv.footprint_count(x0 + w - 1, y0, 1, h) == 0
                || iv.footprint_count(x0, y0, w, 1) == 0
                || iv.footprint_count(x0, y0 + h - 1, w, 1) == 0;
            if empty_edge {
                continue;
            }
            iv.footprint_profile(x0, y0, w, h, profile);
            for z0 in 0..bins {
                if profile[z0 + 1] == profile[z0] {
                    continue;
                }
                for z1 in z0..bins {
                    if profile[z1 + 1] == profile[z1] {
                        continue;
                    }
                    let kappa = (profile[z1 + 1] - profile[z0]) as usize;
                    let zlen = z1 - z0 + 1;
                    let extent = BoxExtent {
                        x0,
                        y0,
                        z0,
                        w,
                        h,
                        zlen,
                    };
                    table.offer(kappa, area * zlen as u64, extent);
                }
            }
        }
    }
}

/// A box and its significance, before thresholding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub bbox: Box3D,
    pub significance: f64,
    pub eta: u64,
}

/// Scores every table entry whose density exceeds `p`.
pub fn score_candidates(table: &KappaTable, space: SpaceDims, p: f64) -> Vec<Candidate> {
    table
        .iter()
        .filter(|b| b.density() > p)
        .map(|b| {
            let eta = eta_for_box(space, b.dims()).expect("table boxes fit in the space");
            Candidate {
                bbox: *b,
                significance: hoeffding_unchecked(b.kappa, b.nu, p, eta),
                eta,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: Box3D,
    pub significance: f64,
    pub rank: usize,
}

impl Detection {
    pub fn footprint(&self) -> PixelRect {
        self.bbox.footprint()
    }

    pub fn record(&self) -> DetectionRecord {
        DetectionRecord {
            x: self.bbox.x0,
            y: self.bbox.y0,
            w: self.bbox.w,
            h: self.bbox.h,
            z0: self.bbox.z0,
            zlen: self.bbox.zlen,
            kappa: self.bbox.kappa,
            nu: self.bbox.nu,
            significance: self.significance,
        }
    }
}

/// Sorts by descending significance (ties: smaller `kappa` first) and keeps
/// candidates above both `s_min` and `relative_factor * S_max`.
pub fn select_detections(
    mut candidates: Vec<(Box3D, f64)>,
    s_min: f64,
    relative_factor: f64,
) -> Vec<Detection> {
    candidates.sort_by(|(a, sa), (b, sb)| {
        sb.total_cmp(sa)
            .then(a.kappa.cmp(&b.kappa))
            .then(a.extent().canonical_key().cmp(&b.extent().canonical_key()))
    });
    let Some(&(_, s_max)) = candidates.first() else {
        return Vec::new();
    };
    let floor = relative_factor * s_max;
    candidates
        .into_iter()
        .filter(|&(_, s)| s > s_min && s > floor)
        .enumerate()
        .map(|(rank, (bbox, significance))| Detection {
            bbox,
            significance,
            rank,
        })
        .collect()
}

/// Everything one detector run produced.
#[derive(Debug, Clone)]
pub struct DetectionRun {
    pub detections: Vec<Detection>,
    pub candidates: Vec<Candidate>,
    pub table: KappaTable,
    pub num_points: usize,
    pub p: f64,
    /// Bounding rectangle of the point cloud, i.e. the searched space.
    pub space: Option<PixelRect>,
    /// The cloud fills its whole bounding volume (`p >= 1`); nothing can be
    /// denser than the background.
    pub saturated: bool,
}

impl DetectionRun {
    fn empty(max_area: usize, cloud: &PointCloud3D, saturated: bool) -> Self {
        Self {
            detections: Vec::new(),
            candidates: Vec::new(),
            table: KappaTable::new(max_area),
            num_points: cloud.num_points(),
            p: cloud.p(),
            space: cloud.bounds(),
            saturated,
        }
    }

    /// Re-applies the final selection with another `s_min`.
    pub fn reselect(&self, s_min: f64, relative_factor: f64) -> Vec<Detection> {
        select_detections(
            self.candidates
                .iter()
                .map(|c| (c.bbox, c.significance))
                .collect(),
            s_min,
            relative_factor,
        )
    }
}

/// Runs the detector on an already built point cloud.
pub fn detect_cloud(cloud: &PointCloud3D, params: &DetectorParams) -> DetectionRun {
    let Some(rect) = cloud.bounds() else {
        return DetectionRun::empty(params.max_area, cloud, false);
    };
    let p = cloud.p();
    if p >= 1.0 {
        return DetectionRun::empty(params.max_area, cloud, true);
    }
    let iv = build_integral(cloud);
    let table = min_volume_table(&iv, params.max_area, rect);
    let space = SpaceDims {
        width: rect.width,
        height: rect.height,
        bins: cloud.bins(),
    };
    let candidates = score_candidates(&table, space, p);
    let detections = select_detections(
        candidates
            .iter()
            .map(|c| (c.bbox, c.significance))
            .collect(),
        params.s_min,
        params.relative_factor,
    );
    DetectionRun {
        detections,
        candidates,
        table,
        num_points: cloud.num_points(),
        p,
        space: Some(rect),
        saturated: false,
    }
}

pub fn run(map: &ScoreMap, params: &DetectorParams) -> DetectionRun {
    let cloud = build_point_cloud(map, &params.transform);
    detect_cloud(&cloud, params)
}

/// Detections of a score map, in descending significance.
pub fn detect(map: &ScoreMap, params: &DetectorParams) -> Vec<Detection> {
    run(map, params).detections
}

/// Footprint intersection over union.
pub fn footprint_iou(a: PixelRect, b: PixelRect) -> f64 {
    let ix = (a.x0 + a.width)
        .min(b.x0 + b.width)
        .saturating_sub(a.x0.max(b.x0));
    let iy = (a.y0 + a.height)
        .min(b.y0 + b.height)
        .saturating_sub(a.y0.max(b.y0));
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

/// Presentation-only grouping: in rank order, a detection whose footprint
/// has IoU > 0.5 with an earlier group's footprint is absorbed into it and
/// the group footprint grows to their bounding rectangle. Each group is
/// represented by its leading (most significant) detection.
pub fn merge_overlaps(detections: &[Detection]) -> Vec<Detection> {
    let mut groups: Vec<Detection> = Vec::new();
    for d in detections {
        let fp = d.footprint();
        match groups
            .iter_mut()
            .find(|g| footprint_iou(g.footprint(), fp) > 0.5)
        {
            Some(g) => {
                let x1 = (g.bbox.x0 + g.bbox.w).max(fp.x0 + fp.width);
                let y1 = (g.bbox.y0 + g.bbox.h).max(fp.y0 + fp.height);
                g.bbox.x0 = g.bbox.x0.min(fp.x0);
                g.bbox.y0 = g.bbox.y0.min(fp.y0);
                g.bbox.w = x1 - g.bbox.x0;
                g.bbox.h = y1 - g.bbox.y0;
            }
            None => groups.push(*d),
        }
    }
    for (rank, g) in groups.iter_mut().enumerate() {
        g.rank = rank;
    }
    groups
}
