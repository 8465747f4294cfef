//! Fixed-threshold baselines: plain binarization (S) and binarization
//! followed by a morphological opening (S+F), plus 8-connected component
//! extraction.

use std::collections::VecDeque;

use crate::scoremap_io::{BinaryMask, DetectionRecord, ScoreMap};
use crate::transform::PixelRect;

pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_RADIUS: usize = 1;

/// An 8-connected set of pixels, stored in raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pixels: Vec<(usize, usize)>,
    bounds: PixelRect,
}

impl Region {
    /// Builds a region from pixels; they are sorted into raster order.
    pub fn from_pixels(mut pixels: Vec<(usize, usize)>) -> Self {
        assert!(!pixels.is_empty(), "a region holds at least one pixel");
        pixels.sort_unstable_by_key(|&(x, y)| (y, x));
        pixels.dedup();
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for &(x, y) in &pixels {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        Self {
            pixels,
            bounds: PixelRect {
                x0,
                y0,
                width: x1 - x0 + 1,
                height: y1 - y0 + 1,
            },
        }
    }

    pub fn from_rect(rect: PixelRect) -> Self {
        let pixels = (rect.y0..rect.y0 + rect.height)
            .flat_map(|y| (rect.x0..rect.x0 + rect.width).map(move |x| (x, y)))
            .collect();
        Self::from_pixels(pixels)
    }

    pub fn pixels(&self) -> &[(usize, usize)] {
        &self.pixels
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn bounds(&self) -> PixelRect {
        self.bounds
    }

    pub fn centroid(&self) -> (f64, f64) {
        let n = self.pixels.len() as f64;
        let (sx, sy) = self.pixels.iter().fold((0.0, 0.0), |(sx, sy), &(x, y)| {
            (sx + x as f64, sy + y as f64)
        });
        (sx / n, sy / n)
    }

    /// First pixel in raster order; the canonical sort key of a region.
    pub fn anchor(&self) -> (usize, usize) {
        let (x, y) = self.pixels[0];
        (y, x)
    }

    /// Number of shared pixels.
    pub fn overlap(&self, other: &Region) -> usize {
        let (a, b) = (self.bounds, other.bounds);
        if a.x0 >= b.x0 + b.width
            || b.x0 >= a.x0 + a.width
            || a.y0 >= b.y0 + b.height
            || b.y0 >= a.y0 + a.height
        {
            return 0;
        }
        // both pixel lists are in raster order
        let key = |&(x, y): &(usize, usize)| (y, x);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.pixels.len() && j < other.pixels.len() {
            match key(&self.pixels[i]).cmp(&key(&other.pixels[j])) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    /// Detection-file record: the bounding rectangle with zeroed z fields,
    /// `kappa` = area, `nu` = rectangle area, and the peak score as `S`.
    pub fn record(&self, map: &ScoreMap) -> DetectionRecord {
        let peak = self
            .pixels
            .iter()
            .map(|&(x, y)| map.get(x, y))
            .fold(0.0, f64::max);
        DetectionRecord {
            x: self.bounds.x0,
            y: self.bounds.y0,
            w: self.bounds.width,
            h: self.bounds.height,
            z0: 0,
            zlen: 0,
            kappa: self.area() as u64,
            nu: self.bounds.area() as u64,
            significance: peak,
        }
    }
}

/// 1 where the score is strictly above `theta`.
pub fn threshold_binarize(map: &ScoreMap, theta: f64) -> BinaryMask {
    let values = map.scores().iter().map(|&s| s > theta).collect();
    BinaryMask::new(map.width(), map.height(), values).expect("same dimensions")
}

/// Running min (erosion) or max (dilation) over a window of `2 * radius + 1`
/// along one axis, with zeros outside the image.
fn sweep(mask: &BinaryMask, radius: usize, horizontal: bool, erode: bool) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut out = BinaryMask::zeros(w, h);
    let (outer, inner) = if horizontal { (h, w) } else { (w, h) };
    let at = |o: usize, i: usize| if horizontal { (i, o) } else { (o, i) };
    let mut prefix = vec![0usize; inner + 1];
    for o in 0..outer {
        for i in 0..inner {
            let (x, y) = at(o, i);
            prefix[i + 1] = prefix[i] + usize::from(mask.get(x, y));
        }
        for i in 0..inner {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius + 1).min(inner);
            let ones = prefix[hi] - prefix[lo];
            let v = if erode {
                // window pixels outside the image count as zeros
                i >= radius && i + radius < inner && ones == 2 * radius + 1
            } else {
                ones > 0
            };
            let (x, y) = at(o, i);
            out.set(x, y, v);
        }
    }
    out
}

pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    sweep(&sweep(mask, radius, true, true), radius, false, true)
}

pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    sweep(&sweep(mask, radius, true, false), radius, false, false)
}

/// Opening with a square structuring element of side `2 * radius + 1`.
pub fn morphological_open(mask: &BinaryMask, radius: usize) -> BinaryMask {
    assert!(radius >= 1, "opening radius must be at least 1");
    dilate(&erode(mask, radius), radius)
}

/// 8-connected components ordered by their first pixel in raster order.
pub fn connected_components(mask: &BinaryMask) -> Vec<Region> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || seen[y * w + x] {
                continue;
            }
            seen[y * w + x] = true;
            queue.push_back((x, y));
            let mut pixels = Vec::new();
            while let Some((cx, cy)) = queue.pop_front() {
                pixels.push((cx, cy));
                for ny in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                    for nx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                        let i = ny * w + nx;
                        if mask.get(nx, ny) && !seen[i] {
                            seen[i] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            regions.push(Region::from_pixels(pixels));
        }
    }
    regions
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    /// Threshold only.
    Threshold,
    /// Threshold then opening.
    ThresholdOpen,
}

impl std::str::FromStr for BaselineMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "s" => Ok(Self::Threshold),
            "sf" => Ok(Self::ThresholdOpen),
            other => Err(crate::Error::Domain(format!(
                "unknown baseline mode '{other}', expected 's' or 'sf'"
            ))),
        }
    }
}

/// Object-level output of a baseline.
pub fn baseline_regions(
    map: &ScoreMap,
    mode: BaselineMode,
    theta: f64,
    radius: usize,
) -> Vec<Region> {
    let mask = threshold_binarize(map, theta);
    let mask = match mode {
        BaselineMode::Threshold => mask,
        BaselineMode::ThresholdOpen => morphological_open(&mask, radius),
    };
    connected_components(&mask)
}
