//! Synthetic score maps: i.i.d. background noise with optional planted
//! rectangular targets and their ground-truth masks.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`) seeded through
//! `seed_from_u64`; scores are rounded to `f32` so that maps survive the
//! raw-f32 format unchanged.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::scoremap_io::{save_mask_pgm, save_scoremap, BinaryMask, ScoreMap};
use crate::transform::PixelRect;

/// Identifier of the pseudo-random generator, echoed in corpus manifests.
pub const GENERATOR_ID: &str = "chacha8-rand_chacha0.3-seed_from_u64";
pub const MANIFEST_NAME: &str = "manifest.txt";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLaw {
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Beta(a, b) on `[0, 1]`.
    Beta {
        a: f64,
        b: f64,
    },
}

impl NoiseLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            NoiseLaw::Uniform { lo, hi } if (0.0..=1.0).contains(&lo) && lo <= hi && hi <= 1.0 => {
                Ok(())
            }
            NoiseLaw::Beta { a, b } if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() => {
                Ok(())
            }
            _ => Err(Error::Domain(format!("invalid noise law {self}"))),
        }
    }
}

impl fmt::Display for NoiseLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseLaw::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            NoiseLaw::Beta { a, b } => write!(f, "beta:{a},{b}"),
        }
    }
}

/// Parses `uniform:lo,hi` or `beta:a,b`.
impl FromStr for NoiseLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Domain(format!(
                "bad noise law '{s}', expected uniform:lo,hi or beta:a,b"
            ))
        };
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let (x, y) = args.split_once(',').ok_or_else(bad)?;
        let x: f64 = x.trim().parse().map_err(|_| bad())?;
        let y: f64 = y.trim().parse().map_err(|_| bad())?;
        let law = match kind {
            "uniform" => NoiseLaw::Uniform { lo: x, hi: y },
            "beta" => NoiseLaw::Beta { a: x, b: y },
            _ => return Err(bad()),
        };
        law.validate()?;
        Ok(law)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetProfile {
    #[default]
    Solid,
    /// Intensity falls off as a Gaussian with `sigma = side / 4` on each
    /// axis; the mask still covers the full rectangle.
    Gaussian,
}

/// Rectangle of `w x h` pixels whose top-left corner is
/// `(cx - w/2, cy - h/2)` (integer division).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub cx: usize,
    pub cy: usize,
    pub w: usize,
    pub h: usize,
    pub intensity: f64,
}

impl Target {
    pub fn rect(&self) -> Option<PixelRect> {
        Some(PixelRect {
            x0: self.cx.checked_sub(self.w / 2)?,
            y0: self.cy.checked_sub(self.h / 2)?,
            width: self.w,
            height: self.h,
        })
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.cx, self.cy, self.w, self.h, self.intensity
        )
    }
}

/// Parses `cx,cy,w,h,intensity`.
impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("bad target '{s}', expected cx,cy,w,h,intensity"));
        let f: Vec<&str> = s.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(bad());
        }
        let int = |i: usize| f[i].parse::<usize>().map_err(|_| bad());
        Ok(Target {
            cx: int(0)?,
            cy: int(1)?,
            w: int(2)?,
            h: int(3)?,
            intensity: f[4].parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub noise: NoiseLaw,
    pub targets: Vec<Target>,
    pub profile: TargetProfile,
    pub seed: u64,
}

impl SynthSpec {
    pub fn noise_only(width: usize, height: usize, noise: NoiseLaw, seed: u64) -> Self {
        Self {
            width,
            height,
            noise,
            targets: Vec::new(),
            profile: TargetProfile::Solid,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Domain("image must be at least 1x1".into()));
        }
        self.noise.validate()?;
        for t in &self.targets {
            if !(t.intensity > 0.0 && t.intensity <= 1.0) {
                return Err(Error::Domain(format!(
                    "target {t}: intensity outside (0, 1]"
                )));
            }
            let inside = t.w >= 1
                && t.h >= 1
                && t.rect().is_some_and(|r| {
                    r.x0 + r.width <= self.width && r.y0 + r.height <= self.height
                });
            if !inside {
                return Err(Error::Domain(format!(
                    "target {t} does not fit in {}x{}",
                    self.width, self.height
                )));
            }
        }
        Ok(())
    }
}

fn round_score(v: f64) -> f64 {
    f64::from(v.clamp(0.0, 1.0) as f32)
}

/// I.i.d. scores drawn from the spec's noise law; targets are ignored.
pub fn generate_noise_map(spec: &SynthSpec) -> Result<ScoreMap> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.width * spec.height;
    let scores: Vec<f64> = match spec.noise {
        NoiseLaw::Uniform { lo, hi } => (0..n)
            .map(|_| round_score(lo + (hi - lo) * rng.gen::<f64>()))
            .collect(),
        NoiseLaw::Beta { a, b } => {
            let law = Beta::new(a, b).map_err(|e| Error::Domain(format!("beta law: {e}")))?;
            (0..n).map(|_| round_score(law.sample(&mut rng))).collect()
        }
    };
    ScoreMap::new(spec.width, spec.height, scores)
}

/// Noise map with every target written as `max(noise, intensity)`, and the
/// union of the target rectangles as mask.
pub fn plant_targets(spec: &SynthSpec) -> Result<(ScoreMap, BinaryMask)> {
    let noise = generate_noise_map(spec)?;
    let (w, h) = (spec.width, spec.height);
    let mut scores = noise.scores().to_vec();
    let mut mask = BinaryMask::zeros(w, h);
    for t in &spec.targets {
        let r = t.rect().expect("validated");
        let (sx, sy) = (t.w as f64 / 4.0, t.h as f64 / 4.0);
        let (mx, my) = (
            r.x0 as f64 + (t.w as f64 - 1.0) / 2.0,
            r.y0 as f64 + (t.h as f64 - 1.0) / 2.0,
        );
        for y in r.y0..r.y0 + r.height {
            for x in r.x0..r.x0 + r.width {
                let value = match spec.profile {
                    TargetProfile::Solid => t.intensity,
                    TargetProfile::Gaussian => {
                        let dx = (x as f64 - mx) / sx;
                        let dy = (y as f64 - my) / sy;
                        t.intensity * (-0.5 * (dx * dx + dy * dy)).exp()
                    }
                };
                let s = &mut scores[y * w + x];
                *s = s.max(round_score(value));
                mask.set(x, y, true);
            }
        }
    }
    Ok((ScoreMap::new(w, h, scores)?, mask))
}

/// SplitMix64 step; derives independent per-image seeds from a corpus seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A family of synthetic images sharing size, noise law and target recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub noise: NoiseLaw,
    pub profile: TargetProfile,
    /// Targets present in every image.
    pub fixed_targets: Vec<Target>,
    /// Number of extra targets placed uniformly at random in each image.
    pub random_targets: usize,
    pub random_size: (usize, usize),
    pub random_intensity: f64,
    pub seed: u64,
}

impl CorpusSpec {
    pub fn noise(count: usize, width: usize, height: usize, noise: NoiseLaw, seed: u64) -> Self {
        Self {
            count,
            width,
            height,
            noise,
            profile: TargetProfile::Solid,
            fixed_targets: Vec::new(),
            random_targets: 0,
            random_size: (5, 5),
            random_intensity: 1.0,
            seed,
        }
    }

    /// Spec of image `index`. Random targets are drawn from a stream
    /// separate from the noise stream.
    pub fn item(&self, index: usize) -> Result<SynthSpec> {
        let seed = derive_seed(self.seed, index as u64);
        let mut targets = self.fixed_targets.clone();
        if self.random_targets > 0 {
            let (tw, th) = self.random_size;
            if tw == 0 || th == 0 || tw > self.width || th > self.height {
                return Err(Error::Domain(format!(
                    "random target {tw}x{th} does not fit in {}x{}",
                    self.width, self.height
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
            for _ in 0..self.random_targets {
                let x0 = rng.gen_range(0..=self.width - tw);
                let y0 = rng.gen_range(0..=self.height - th);
                targets.push(Target {
                    cx: x0 + tw / 2,
                    cy: y0 + th / 2,
                    w: tw,
                    h: th,
                    intensity: self.random_intensity,
                });
            }
        }
        let spec = SynthSpec {
            width: self.width,
            height: self.height,
            noise: self.noise,
            targets,
            profile: self.profile,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn generate(&self, index: usize) -> Result<(ScoreMap, BinaryMask)> {
        plant_targets(&self.item(index)?)
    }
}

/// One map/mask pair of a corpus on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub map: PathBuf,
    pub mask: PathBuf,
}

fn manifest_line(spec: &SynthSpec, entry: &CorpusEntry) -> String {
    let targets: Vec<String> = spec.targets.iter().map(Target::to_string).collect();
    format!(
        "map={} mask={} width={} height={} noise={} profile={:?} seed={} generator={} targets={}",
        entry.map.display(),
        entry.mask.display(),
        spec.width,
        spec.height,
        spec.noise,
        spec.profile,
        spec.seed,
        GENERATOR_ID,
        if targets.is_empty() {
            "-".to_string()
        } else {
            targets.join(";")
        }
    )
}

/// Writes `map_NNNN.smap`, `mask_NNNN.pgm` and a manifest with one line per
/// pair into `dir`. Paths in the manifest are relative to `dir`.
pub fn write_corpus(corpus: &CorpusSpec, dir: &Path) -> Result<Vec<CorpusEntry>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut lines = Vec::with_capacity(corpus.count);
    let mut entries = Vec::with_capacity(corpus.count);
    for i in 0..corpus.count {
        let spec = corpus.item(i)?;
        let (map, mask) = plant_targets(&spec)?;
        let entry = CorpusEntry {
            map: PathBuf::from(format!("map_{i:04}.smap")),
            mask: PathBuf::from(format!("mask_{i:04}.pgm")),
        };
        save_scoremap(&map, dir.join(&entry.map))?;
        save_mask_pgm(&mask, dir.join(&entry.mask))?;
        lines.push(manifest_line(&spec, &entry));
        entries.push(CorpusEntry {
            map: dir.join(&entry.map),
            mask: dir.join(&entry.mask),
        });
    }
    let manifest = dir.join(MANIFEST_NAME);
    let mut text = lines.join("\n");
    text.push('\n');
    fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e))?;
    Ok(entries)
}

/// Reads the map/mask pairs listed in `dir/manifest.txt`.
pub fn read_manifest(dir: &Path) -> Result<Vec<CorpusEntry>> {
    let manifest = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let field = |key: &str| {
                line.split_whitespace()
                    .find_map(|f| f.strip_prefix(key))
                    .map(|p| dir.join(p))
                    .ok_or_else(|| Error::Format(format!("manifest line lacks {key}: '{line}'")))
            };
            Ok(CorpusEntry {
                map: field("map=")?,
                mask: field("mask=")?,
            })
        })
        .collect()
}
