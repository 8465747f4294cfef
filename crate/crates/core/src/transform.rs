//! Inverse score transform and quantization into the discrete 3D space.
//!
//! A pixel with score `x > tau` becomes the point `(x, y, z)` where `z` is the
//! equal-width bin of `1 / (x - tau)` over the observed finite range. High
//! scores therefore land in low bins and the weak scores just above `tau`
//! are spread over the upper bins.

use crate::error::{Error, Result};
use crate::scoremap_io::ScoreMap;

pub const DEFAULT_TAU: f64 = 0.2;
pub const DEFAULT_BINS: usize = 16;

/// Scores closer than this to `tau` are treated as lying on it.
const TAU_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformParams {
    tau: f64,
    bins: usize,
}

impl TransformParams {
    pub fn new(tau: f64, bins: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&tau) {
            return Err(Error::Domain(format!("tau must lie in [0, 1), got {tau}")));
        }
        if bins == 0 {
            return Err(Error::Domain("bins must be at least 1".into()));
        }
        if bins > usize::from(u16::MAX) {
            return Err(Error::Domain(format!("bins must be at most {}", u16::MAX)));
        }
        Ok(Self { tau, bins })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn bins(&self) -> usize {
        self.bins
    }
}

impl Default for TransformParams {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            bins: DEFAULT_BINS,
        }
    }
}

/// `1 / (x - tau)` above the floor, `+inf` at or below it.
#[inline]
pub fn transform_score(x: f64, tau: f64) -> f64 {
    let excess = x - tau;
    if excess <= TAU_EPSILON {
        f64::INFINITY
    } else {
        1.0 / excess
    }
}

/// Inclusive-exclusive pixel rectangle `[x0, x0 + width) x [y0, y0 + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

/// Occupancy of the discrete space `E = image x bins`.
///
/// Each pixel holds at most one point, so occupancy is stored as one optional
/// z-level per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud3D {
    width: usize,
    height: usize,
    bins: usize,
    levels: Vec<Option<u16>>,
    num_points: usize,
    p: f64,
    z_edges: Vec<f64>,
    bounds: Option<PixelRect>,
}

impl PointCloud3D {
    /// Builds a cloud from explicit per-pixel levels. `p` is derived from the
    /// bounding box of the occupied pixels; `z_edges` is left empty.
    pub fn from_levels(
        width: usize,
        height: usize,
        bins: usize,
        levels: Vec<Option<u16>>,
    ) -> Result<Self> {
        if levels.len() != width * height {
            return Err(Error::Domain(format!(
                "expected {} levels, got {}",
                width * height,
                levels.len()
            )));
        }
        if let Some(z) = levels.iter().flatten().find(|&&z| usize::from(z) >= bins) {
            return Err(Error::Domain(format!("level {z} outside 0..{bins}")));
        }
        let mut cloud = Self {
            width,
            height,
            bins,
            levels,
            num_points: 0,
            p: 0.0,
            z_edges: Vec::new(),
            bounds: None,
        };
        cloud.finish();
        Ok(cloud)
    }

    fn finish(&mut self) {
        let (mut xmin, mut ymin, mut xmax, mut ymax) = (usize::MAX, usize::MAX, 0, 0);
        let mut n = 0;
        for (i, level) in self.levels.iter().enumerate() {
            if level.is_some() {
                let (x, y) = (i % self.width, i / self.width);
                xmin = xmin.min(x);
                xmax = xmax.max(x);
                ymin = ymin.min(y);
                ymax = ymax.max(y);
                n += 1;
            }
        }
        self.num_points = n;
        if n == 0 {
            self.bounds = None;
            self.p = 0.0;
            return;
        }
        let rect = PixelRect {
            x0: xmin,
            y0: ymin,
            width: xmax - xmin + 1,
            height: ymax - ymin + 1,
        };
        self.p = n as f64 / (rect.area() * self.bins) as f64;
        self.bounds = Some(rect);
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn is_empty(&self) -> bool {
        self.num_points == 0
    }

    /// Bernoulli parameter of the background model: points per cell of the
    /// bounding volume. Zero for an empty cloud.
    pub fn p(&self) -> f64 {
        self.p
    }

    /// `bins + 1` bin boundaries over the finite transformed values; empty
    /// when the cloud is empty or was built from explicit levels.
    pub fn z_edges(&self) -> &[f64] {
        &self.z_edges
    }

    /// 2D bounding box of the occupied pixels.
    pub fn bounds(&self) -> Option<PixelRect> {
        self.bounds
    }

    #[inline]
    pub fn level(&self, x: usize, y: usize) -> Option<u16> {
        self.levels[y * self.width + x]
    }

    pub fn levels(&self) -> &[Option<u16>] {
        &self.levels
    }

    pub fn is_occupied(&self, x: usize, y: usize, z: usize) -> bool {
        self.level(x, y).is_some_and(|l| usize::from(l) == z)
    }

    /// Occupied cells in row-major pixel order.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.levels
            .iter()
            .enumerate()
            .filter_map(move |(i, l)| l.map(|z| (i % self.width, i / self.width, usize::from(z))))
    }
}

/// Transforms every pixel and quantizes the finite values into
/// `params.bins()` equal-width bins, top edge inclusive.
pub fn build_point_cloud(map: &ScoreMap, params: &TransformParams) -> PointCloud3D {
    let bins = params.bins();
    let values: Vec<f64> = map
        .scores()
        .iter()
        .map(|&s| transform_score(s, params.tau()))
        .collect();
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if lo > hi {
        return PointCloud3D::from_levels(
            map.width(),
            map.height(),
            bins,
            vec![None; values.len()],
        )
        .expect("consistent dimensions");
    }
    let span = hi - lo;
    let levels = values
        .iter()
        .map(|&v| {
            v.is_finite().then(|| {
                if span > 0.0 {
                    let z = ((v - lo) / span * bins as f64).floor() as usize;
                    z.min(bins - 1) as u16
                } else {
                    0
                }
            })
        })
        .collect();
    let mut cloud = PointCloud3D::from_levels(map.width(), map.height(), bins, levels)
        .expect("levels lie in range");
    cloud.z_edges = (0..=bins)
        .map(|i| {
            if i == bins {
                hi
            } else {
                lo + span * i as f64 / bins as f64
            }
        })
        .collect();
    cloud
}
