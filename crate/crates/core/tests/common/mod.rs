//! Reference implementations used as oracles by the integration and
//! acceptance tests. Nothing here calls the crate's counting, table or
//! significance code; only score maps and synthetic data are shared.

#![allow(dead_code)]

use acontrario::ScoreMap;

/// Point cloud rebuilt from scratch: per-pixel level, bounding box, `p`.
pub struct RefCloud {
    pub width: usize,
    pub height: usize,
    pub bins: usize,
    pub levels: Vec<Option<usize>>,
    pub bbox: Option<(usize, usize, usize, usize)>,
    pub p: f64,
}

pub fn ref_cloud(map: &ScoreMap, tau: f64, bins: usize) -> RefCloud {
    let (w, h) = (map.width(), map.height());
    let values: Vec<Option<f64>> = map
        .scores()
        .iter()
        .map(|&s| (s - tau > 1e-12).then(|| 1.0 / (s - tau)))
        .collect();
    let finite: Vec<f64> = values.iter().flatten().copied().collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let levels: Vec<Option<usize>> = values
        .iter()
        .map(|v| {
            v.map(|v| {
                if hi > lo {
                    (((v - lo) / (hi - lo) * bins as f64).floor() as usize).min(bins - 1)
                } else {
                    0
                }
            })
        })
        .collect();
    let occupied: Vec<(usize, usize)> = (0..w * h)
        .filter(|&i| levels[i].is_some())
        .map(|i| (i % w, i / w))
        .collect();
    let bbox = if occupied.is_empty() {
        None
    } else {
        let x0 = occupied.iter().map(|p| p.0).min().unwrap();
        let x1 = occupied.iter().map(|p| p.0).max().unwrap();
        let y0 = occupied.iter().map(|p| p.1).min().unwrap();
        let y1 = occupied.iter().map(|p| p.1).max().unwrap();
        Some((x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    };
    let p = match bbox {
        Some((_, _, bw, bh)) => occupied.len() as f64 / (bw * bh * bins) as f64,
        None => 0.0,
    };
    RefCloud {
        width: w,
        height: h,
        bins,
        levels,
        bbox,
        p,
    }
}

/// `(x0, y0, w, h, z0, zlen, kappa, nu)`
pub type RefBox = (usize, usize, usize, usize, usize, usize, u64, u64);

pub fn ref_significance(kappa: u64, nu: u64, p: f64, eta: u64) -> f64 {
    let r = kappa as f64 / nu as f64;
    let a = if r > 0.0 { r * (r / p).ln() } else { 0.0 };
    let b = if r < 1.0 {
        (1.0 - r) * ((1.0 - r) / (1.0 - p)).ln()
    } else {
        0.0
    };
    nu as f64 * (a + b) - (eta as f64).ln()
}

pub struct RefResult {
    /// `table[kappa]`, index 0 unused.
    pub table: Vec<Option<RefBox>>,
    pub candidates: Vec<(RefBox, f64)>,
    pub detections: Vec<(RefBox, f64)>,
    pub p: f64,
}

fn finish(cloud: &RefCloud, table: Vec<Option<RefBox>>, s_min: f64, factor: f64) -> RefResult {
    let (bw, bh) = cloud.bbox.map(|b| (b.2, b.3)).unwrap_or((0, 0));
    let mut candidates: Vec<(RefBox, f64)> = table
        .iter()
        .flatten()
        .filter(|b| b.6 as f64 / b.7 as f64 > cloud.p)
        .map(|&b| {
            let eta = ((bw - b.2 + 1) * (bh - b.3 + 1) * (cloud.bins - b.5 + 1)) as u64;
            (b, ref_significance(b.6, b.7, cloud.p, eta))
        })
        .collect();
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0 .6.cmp(&b.0 .6)));
    let detections = match candidates.first() {
        None => Vec::new(),
        Some(&(_, s_max)) => candidates
            .iter()
            .filter(|(_, s)| *s > s_min && *s > factor * s_max)
            .copied()
            .collect(),
    };
    RefResult {
        table,
        candidates,
        detections,
        p: cloud.p,
    }
}

/// Full enumeration in canonical order `(w, h, zlen, x0, y0, z0)`, every
/// box counted cell by cell, table updated on strictly smaller volume.
pub fn naive_detect(
    map: &ScoreMap,
    tau: f64,
    bins: usize,
    max_area: usize,
    s_min: f64,
    factor: f64,
) -> RefResult {
    let cloud = ref_cloud(map, tau, bins);
    let mut table: Vec<Option<RefBox>> = vec![None; max_area + 1];
    let Some((bx, by, bw, bh)) = cloud.bbox else {
        return finish(&cloud, table, s_min, factor);
    };
    if cloud.p >= 1.0 {
        return finish(&cloud, table, s_min, factor);
    }
    for w in 1..=bw {
        for h in 1..=bh {
            if w * h > max_area {
                continue;
            }
            for zlen in 1..=bins {
                for x0 in bx..=bx + bw - w {
                    for y0 in by..=by + bh - h {
                        for z0 in 0..=bins - zlen {
                            let mut kappa = 0usize;
                            for y in y0..y0 + h {
                                for x in x0..x0 + w {
                                    if let Some(z) = cloud.levels[y * cloud.width + x] {
                                        if z >= z0 && z < z0 + zlen {
                                            kappa += 1;
                                        }
                                    }
                                }
                            }
                            if kappa == 0 {
                                continue;
                            }
                            let nu = (w * h * zlen) as u64;
                            let better = match table[kappa] {
                                None => true,
                                Some(cur) => cur.7 > nu,
                            };
                            if better {
                                table[kappa] = Some((x0, y0, w, h, z0, zlen, kappa as u64, nu));
                            }
                        }
                    }
                }
            }
        }
    }
    finish(&cloud, table, s_min, factor)
}

/// Same result as [`naive_detect`], counted through one 2D summed-area
/// table per z-level. Boxes whose end levels are empty or whose footprint
/// has an empty border line are skipped: a strictly smaller box holds the
/// same points. Footprints too large to beat any reachable table entry are
/// skipped as well. Ties between equal volumes go to the smaller canonical
/// key.
pub fn sat_detect(
    map: &ScoreMap,
    tau: f64,
    bins: usize,
    max_area: usize,
    s_min: f64,
    factor: f64,
) -> RefResult {
    let cloud = ref_cloud(map, tau, bins);
    let mut table: Vec<Option<RefBox>> = vec![None; max_area + 1];
    let Some((bx, by, bw, bh)) = cloud.bbox else {
        return finish(&cloud, table, s_min, factor);
    };
    if cloud.p >= 1.0 {
        return finish(&cloud, table, s_min, factor);
    }
    let (w_img, h_img) = (cloud.width, cloud.height);
    // one summed-area table per level, interleaved so that the `bins + 1`
    // counts of a corner are contiguous; slot `bins` counts all points
    let depth = bins + 1;
    let stride = (w_img + 1) * depth;
    let mut sat = vec![0u32; (h_img + 1) * stride];
    for y in 0..h_img {
        for x in 0..w_img {
            if let Some(z) = cloud.levels[y * w_img + x] {
                let cell = (y + 1) * stride + (x + 1) * depth;
                sat[cell + z] = 1;
                sat[cell + bins] = 1;
            }
        }
    }
    for y in 1..=h_img {
        for x in 1..=w_img {
            for z in 0..depth {
                let here = y * stride + x * depth + z;
                sat[here] += sat[here - depth] + sat[here - stride] - sat[here - stride - depth];
            }
        }
    }
    let corner = |x: usize, y: usize| y * stride + x * depth;
    let all = |x0: usize, y0: usize, w: usize, h: usize| -> u32 {
        sat[corner(x0 + w, y0 + h) + bins] + sat[corner(x0, y0) + bins]
            - sat[corner(x0 + w, y0) + bins]
            - sat[corner(x0, y0 + h) + bins]
    };
    let key = |b: &RefBox| (b.2, b.3, b.5, b.0, b.1, b.4);
    let mut hist = vec![0u32; bins];
    for w in 1..=bw {
        for h in 1..=bh {
            if w * h > max_area {
                continue;
            }
            // reach[n]: largest table volume over kappa <= n when the shape
            // starts. Volumes only shrink, so a footprint holding n points
            // cannot improve the table if reach[n] < w * h.
            let mut reach = vec![0u64; max_area + 1];
            for n in 1..=max_area {
                let nu = table[n].map_or(u64::MAX, |b| b.7);
                reach[n] = reach[n - 1].max(nu);
            }
            for y0 in by..=by + bh - h {
                for x0 in bx..=bx + bw - w {
                    let n = all(x0, y0, w, h) as usize;
                    if n == 0 || reach[n] < (w * h) as u64 {
                        continue;
                    }
                    if all(x0, y0, 1, h) == 0
                        || all(x0 + w - 1, y0, 1, h) == 0
                        || all(x0, y0, w, 1) == 0
                        || all(x0, y0 + h - 1, w, 1) == 0
                    {
                        continue;
                    }
                    let (a, b) = (corner(x0 + w, y0 + h), corner(x0, y0));
                    let (c, d) = (corner(x0 + w, y0), corner(x0, y0 + h));
                    for (z, slot) in hist.iter_mut().enumerate() {
                        *slot = sat[a + z] + sat[b + z] - sat[c + z] - sat[d + z];
                    }
                    for z0 in (0..bins).filter(|&z| hist[z] > 0) {
                        let mut kappa = 0u32;
                        for (z1, &count) in hist.iter().enumerate().skip(z0) {
                            kappa += count;
                            if count == 0 {
                                continue;
                            }
                            let zlen = z1 - z0 + 1;
                            let nu = (w * h * zlen) as u64;
                            let b = (x0, y0, w, h, z0, zlen, kappa as u64, nu);
                            let slot = &mut table[kappa as usize];
                            let better = match slot {
                                None => true,
                                Some(cur) => nu < cur.7 || (nu == cur.7 && key(&b) < key(cur)),
                            };
                            if better {
                                *slot = Some(b);
                            }
                        }
                    }
                }
            }
        }
    }
    finish(&cloud, table, s_min, factor)
}

pub fn detection_box(d: &acontrario::Detection) -> RefBox {
    let b = d.bbox;
    (b.x0, b.y0, b.w, b.h, b.z0, b.zlen, b.kappa, b.nu)
}

pub fn table_box(b: &acontrario::Box3D) -> RefBox {
    (b.x0, b.y0, b.w, b.h, b.z0, b.zlen, b.kappa, b.nu)
}
