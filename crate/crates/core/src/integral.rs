//! 3D integral histogram over a point cloud.
//!
//! `cum(x, y, z)` is the number of points whose coordinates are all `<=`
//! `(x, y, z)`. Any closed box count then follows from 8-term
//! inclusion-exclusion. Storage is padded by one zero plane on each axis and
//! laid out `[y][x][z]` so that the z-run of a corner is contiguous.

use std::fmt;

use crate::error::{Error, Result};
use crate::transform::PointCloud3D;

/// Closed box `[x0, x0+w-1] x [y0, y0+h-1] x [z0, z0+zlen-1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoxExtent {
    pub x0: usize,
    pub y0: usize,
    pub z0: usize,
    pub w: usize,
    pub h: usize,
    pub zlen: usize,
}

impl BoxExtent {
    pub fn volume(&self) -> u64 {
        (self.w * self.h * self.zlen) as u64
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    /// Sort key of the canonical enumeration order
    /// `(w, h, zlen, x0, y0, z0)`.
    #[inline]
    pub fn canonical_key(&self) -> (usize, usize, usize, usize, usize, usize) {
        (self.w, self.h, self.zlen, self.x0, self.y0, self.z0)
    }
}

impl fmt::Display for BoxExtent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}+{}, {}+{}, {}+{}]",
            self.x0, self.w, self.y0, self.h, self.z0, self.zlen
        )
    }
}

#[derive(Debug, Clone)]
pub struct IntegralVolume {
    width: usize,
    height: usize,
    bins: usize,
    cum: Vec<u32>,
}

impl IntegralVolume {
    #[inline]
    fn offset(&self, px: usize, py: usize, pz: usize) -> usize {
        (py * (self.width + 1) + px) * (self.bins + 1) + pz
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

    /// Number of points with coordinates `<= (x, y, z)` componentwise.
    pub fn cum(&self, x: usize, y: usize, z: usize) -> u32 {
        assert!(x < self.width && y < self.height && z < self.bins);
        self.cum[self.offset(x + 1, y + 1, z + 1)]
    }

    pub fn total(&self) -> u32 {
        self.cum[self.offset(self.width, self.height, self.bins)]
    }

    /// Exact point count of a closed box.
    pub fn count_in_box(&self, b: &BoxExtent) -> Result<u32> {
        let inside = b.w >= 1
            && b.h >= 1
            && b.zlen >= 1
            && b.x0 + b.w <= self.width
            && b.y0 + b.h <= self.height
            && b.z0 + b.zlen <= self.bins;
        if !inside {
            return Err(Error::Bounds(format!(
                "{b} in a {}x{}x{} volume",
                self.width, self.height, self.bins
            )));
        }
        let (x1, y1, z1) = (b.x0 + b.w, b.y0 + b.h, b.z0 + b.zlen);
        let (x0, y0, z0) = (b.x0, b.y0, b.z0);
        let c = |x, y, z| i64::from(self.cum[self.offset(x, y, z)]);
        let n = c(x1, y1, z1) - c(x0, y1, z1) - c(x1, y0, z1) - c(x1, y1, z0)
            + c(x0, y0, z1)
            + c(x0, y1, z0)
            + c(x1, y0, z0)
            - c(x0, y0, z0);
        Ok(n as u32)
    }

    /// Fills `out[z]` (length `bins + 1`) with the number of points of the
    /// footprint `[x0, x0+w) x [y0, y0+h)` whose level is `< z`.
    ///
    /// The footprint must lie inside the volume.
    #[inline]
    pub fn footprint_profile(&self, x0: usize, y0: usize, w: usize, h: usize, out: &mut [u32]) {
        let n = self.bins + 1;
        debug_assert_eq!(out.len(), n);
        debug_assert!(x0 + w <= self.width && y0 + h <= self.height);
        let a = self.offset(x0 + w, y0 + h, 0);
        let b = self.offset(x0, y0 + h, 0);
        let c = self.offset(x0 + w, y0, 0);
        let d = self.offset(x0, y0, 0);
        let (a, b, c, d) = (
            &self.cum[a..a + n],
            &self.cum[b..b + n],
            &self.cum[c..c + n],
            &self.cum[d..d + n],
        );
        for z in 0..n {
            // wrapping: intermediate a - b may be transiently negative
            out[z] = a[z]
                .wrapping_sub(b[z])
                .wrapping_sub(c[z])
                .wrapping_add(d[z]);
        }
    }

    /// Number of points in the footprint over all levels.
    #[inline]
    pub fn footprint_count(&self, x0: usize, y0: usize, w: usize, h: usize) -> u32 {
        let z = self.bins;
        let c = |x, y| self.cum[self.offset(x, y, z)];
        c(x0 + w, y0 + h)
            .wrapping_sub(c(x0, y0 + h))
            .wrapping_sub(c(x0 + w, y0))
            .wrapping_add(c(x0, y0))
    }
}

pub fn build_integral(cloud: &PointCloud3D) -> IntegralVolume {
    let (width, height, bins) = (cloud.width(), cloud.height(), cloud.bins());
    let mut iv = IntegralVolume {
        width,
        height,
        bins,
        cum: vec![0; (width + 1) * (height + 1) * (bins + 1)],
    };
    for (x, y, z) in cloud.points() {
        let o = iv.offset(x + 1, y + 1, z + 1);
        iv.cum[o] = 1;
    }
    let zs = bins + 1;
    let row = (width + 1) * zs;
    // prefix along z
    for col in iv.cum.chunks_exact_mut(zs) {
        for z in 1..zs {
            col[z] += col[z - 1];
        }
    }
    // along x
    for plane in iv.cum.chunks_exact_mut(row) {
        for i in zs..row {
            plane[i] += plane[i - zs];
        }
    }
    // along y
    for i in row..iv.cum.len() {
        iv.cum[i] += iv.cum[i - row];
    }
    iv
}
