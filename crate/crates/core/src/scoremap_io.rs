//! Score maps, binary masks and detection lists on disk.
//!
//! Supported score-map carriers:
//!
//! * PGM `P2` (ASCII) and `P5` (binary), `maxval <= 65535`. Samples are
//!   divided by `maxval`.
//! * PNG, 8- or 16-bit single-channel grayscale. Samples are divided by
//!   255 or 65535.
//! * raw-f32: an ASCII header line `SMAP <width> <height>\n` followed by
//!   `width * height` little-endian IEEE-754 `f32` values, row-major.
//!
//! Detection files are UTF-8 text. The first line is the header
//! `x y w h z0 zlen kappa nu S`; every following line holds one record with
//! space-separated fields and `S` printed with 6 significant digits.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::detector::Detection;
use crate::error::{Error, Result};

pub const DETECTION_HEADER: &str = "x y w h z0 zlen kappa nu S";
const SMAP_MAGIC: &str = "SMAP";

/// Row-major grid of detection scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    width: usize,
    height: usize,
    scores: Vec<f64>,
}

impl ScoreMap {
    /// Validates dimensions and the `[0, 1]` range of every score.
    pub fn new(width: usize, height: usize, scores: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Format(format!(
                "score map must be at least 1x1, got {width}x{height}"
            )));
        }
        if scores.len() != width * height {
            return Err(Error::Format(format!(
                "expected {} scores for {width}x{height}, got {}",
                width * height,
                scores.len()
            )));
        }
        if let Some((index, &value)) = scores
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.is_finite() && (0.0..=1.0).contains(*s)))
        {
            return Err(Error::Range { index, value });
        }
        Ok(Self {
            width,
            height,
            scores,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.scores[y * self.width + x]
    }
}

/// Row-major `{0, 1}` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, values: Vec<bool>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Format(format!(
                "expected {} mask values for {width}x{height}, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.values[y * self.width + x] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreFormat {
    Pgm,
    PngGray,
    RawF32,
}

impl ScoreFormat {
    /// Guesses the format from the file extension (`.pgm`, `.png`,
    /// `.smap`/`.f32`).
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "pgm" => Some(Self::Pgm),
            "png" => Some(Self::PngGray),
            "smap" | "f32" | "raw" => Some(Self::RawF32),
            _ => None,
        }
    }
}

impl FromStr for ScoreFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgm" => Ok(Self::Pgm),
            "png" | "png-gray" => Ok(Self::PngGray),
            "smap" | "raw-f32" => Ok(Self::RawF32),
            other => Err(Error::Domain(format!("unknown score format '{other}'"))),
        }
    }
}

/// Integer raster shared by PGM and PNG decoding.
struct GrayRaster {
    width: usize,
    height: usize,
    maxval: u32,
    samples: Vec<u32>,
}

pub fn load_scoremap(path: impl AsRef<Path>, format: ScoreFormat) -> Result<ScoreMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        ScoreFormat::Pgm => raster_to_scores(parse_pgm(&bytes)?),
        ScoreFormat::PngGray => raster_to_scores(parse_png(&bytes)?),
        ScoreFormat::RawF32 => parse_raw_f32(&bytes),
    }
}

fn raster_to_scores(raster: GrayRaster) -> Result<ScoreMap> {
    let maxval = f64::from(raster.maxval);
    let scores = raster
        .samples
        .iter()
        .map(|&v| f64::from(v) / maxval)
        .collect();
    ScoreMap::new(raster.width, raster.height, scores)
}

/// Loads a ground-truth mask: any non-zero PGM/PNG sample is a target pixel.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let raster = match ScoreFormat::from_path(path) {
        Some(ScoreFormat::PngGray) => parse_png(&bytes)?,
        Some(ScoreFormat::Pgm) | None => parse_pgm(&bytes)?,
        Some(ScoreFormat::RawF32) => {
            let map = parse_raw_f32(&bytes)?;
            let values = map.scores().iter().map(|&s| s > 0.0).collect();
            return BinaryMask::new(map.width(), map.height(), values);
        }
    };
    let values = raster.samples.iter().map(|&v| v != 0).collect();
    BinaryMask::new(raster.width, raster.height, values)
}

/// Writes a mask as binary PGM (`P5`, maxval 1).
pub fn save_mask_pgm(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = format!("P5\n{} {}\n1\n", mask.width(), mask.height()).into_bytes();
    buf.extend(mask.values().iter().map(|&v| u8::from(v)));
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Writes a score map as raw-f32. Scores are narrowed to `f32`.
pub fn save_scoremap(map: &ScoreMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = format!("{SMAP_MAGIC} {} {}\n", map.width(), map.height()).into_bytes();
    buf.reserve(map.scores().len() * 4);
    for &s in map.scores() {
        buf.extend_from_slice(&(s as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn parse_raw_f32(bytes: &[u8]) -> Result<ScoreMap> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("raw-f32 header line is missing".into()))?;
    let header = std::str::from_utf8(&bytes[..newline])
        .map_err(|_| Error::Format("raw-f32 header is not ASCII".into()))?;
    let mut fields = header.split(' ');
    if fields.next() != Some(SMAP_MAGIC) {
        return Err(Error::Format(format!("bad raw-f32 header '{header}'")));
    }
    let mut dim = |name: &str| -> Result<usize> {
        fields
            .next()
            .and_then(|f| f.parse::<usize>().ok())
            .ok_or_else(|| Error::Format(format!("raw-f32 header lacks a valid {name}")))
    };
    let width = dim("width")?;
    let height = dim("height")?;
    if fields.next().is_some() {
        return Err(Error::Format(format!(
            "trailing fields in raw-f32 header '{header}'"
        )));
    }
    let payload = &bytes[newline + 1..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("raw-f32 dimensions overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "raw-f32 payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let scores = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    ScoreMap::new(width, height, scores)
}

fn parse_pgm(bytes: &[u8]) -> Result<GrayRaster> {
    let mut cursor = PgmCursor { bytes, pos: 0 };
    let binary = match cursor.token()? {
        "P2" => false,
        "P5" => true,
        other => return Err(Error::Format(format!("unsupported PGM magic '{other}'"))),
    };
    let width = cursor.number("width")? as usize;
    let height = cursor.number("height")? as usize;
    let maxval = cursor.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!(
            "PGM dimensions {width}x{height} are empty"
        )));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!(
            "PGM maxval {maxval} outside 1..=65535"
        )));
    }
    let n = width * height;
    let samples = if binary {
        // exactly one whitespace byte separates the header from the raster
        match bytes.get(cursor.pos) {
            Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
            _ => {
                return Err(Error::Format(
                    "PGM header not terminated by whitespace".into(),
                ))
            }
        }
        let raster = &bytes[cursor.pos..];
        let depth = if maxval < 256 { 1 } else { 2 };
        if raster.len() < n * depth {
            return Err(Error::Format(format!(
                "P5 raster holds {} bytes, expected {}",
                raster.len(),
                n * depth
            )));
        }
        if depth == 1 {
            raster[..n].iter().map(|&b| u32::from(b)).collect()
        } else {
            raster[..2 * n]
                .chunks_exact(2)
                .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
                .collect()
        }
    } else {
        (0..n)
            .map(|_| cursor.number("sample"))
            .collect::<Result<Vec<_>>>()?
    };
    if let Some(v) = samples.iter().find(|&&v| v > maxval) {
        return Err(Error::Format(format!(
            "PGM sample {v} exceeds maxval {maxval}"
        )));
    }
    Ok(GrayRaster {
        width,
        height,
        maxval,
        samples,
    })
}

struct PgmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PgmCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("unexpected end of PGM data".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::Format("PGM token is not ASCII".into()))
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::Format(format!("PGM {what} '{tok}' is not a number")))
    }
}

fn parse_png(bytes: &[u8]) -> Result<GrayRaster> {
    let decoder = png::Decoder::new(bytes);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    let (color, depth) = reader.output_color_type();
    if color != png::ColorType::Grayscale {
        return Err(Error::Format(format!(
            "PNG must be single-channel grayscale, got {color:?}"
        )));
    }
    let mut buf = vec![0; reader.output_buffer_size()];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("PNG: {e}")))?;
    let width = frame.width as usize;
    let height = frame.height as usize;
    let (maxval, samples): (u32, Vec<u32>) = match depth {
        png::BitDepth::Eight => (
            255,
            (0..height)
                .flat_map(|y| {
                    let row = &buf[y * frame.line_size..y * frame.line_size + width];
                    row.iter().map(|&b| u32::from(b))
                })
                .collect(),
        ),
        png::BitDepth::Sixteen => (
            65535,
            (0..height)
                .flat_map(|y| {
                    let row = &buf[y * frame.line_size..y * frame.line_size + 2 * width];
                    row.chunks_exact(2)
                        .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
                })
                .collect(),
        ),
        other => {
            return Err(Error::Format(format!(
                "PNG bit depth {other:?} unsupported, expected 8 or 16"
            )))
        }
    };
    Ok(GrayRaster {
        width,
        height,
        maxval,
        samples,
    })
}

/// One line of a detection file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRecord {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub z0: usize,
    pub zlen: usize,
    pub kappa: u64,
    pub nu: u64,
    pub significance: f64,
}

impl DetectionRecord {
    fn to_line(self) -> String {
        format!(
            "{} {} {} {} {} {} {} {} {}",
            self.x,
            self.y,
            self.w,
            self.h,
            self.z0,
            self.zlen,
            self.kappa,
            self.nu,
            format_significant(self.significance, 6)
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 9 {
            return Err(Error::Format(format!(
                "detection line has {} fields, expected 9: '{line}'",
                fields.len()
            )));
        }
        let int = |i: usize| -> Result<u64> {
            fields[i]
                .parse()
                .map_err(|_| Error::Format(format!("bad integer '{}' in '{line}'", fields[i])))
        };
        let significance = fields[8]
            .parse()
            .map_err(|_| Error::Format(format!("bad significance '{}' in '{line}'", fields[8])))?;
        Ok(Self {
            x: int(0)? as usize,
            y: int(1)? as usize,
            w: int(2)? as usize,
            h: int(3)? as usize,
            z0: int(4)? as usize,
            zlen: int(5)? as usize,
            kappa: int(6)?,
            nu: int(7)?,
            significance,
        })
    }
}

/// Writes detections sorted by descending significance.
pub fn save_detections(detections: &[Detection], path: impl AsRef<Path>) -> Result<()> {
    let records: Vec<DetectionRecord> = detections.iter().map(Detection::record).collect();
    save_records(&records, path)
}

/// Writes records sorted by descending significance; ties keep input order.
pub fn save_records(records: &[DetectionRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| b.significance.total_cmp(&a.significance));
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(out, "{DETECTION_HEADER}")?;
        for r in &sorted {
            writeln!(out, "{}", r.to_line())?;
        }
        out.flush()
    };
    write(&mut out).map_err(|e| Error::io(path, e))
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<Vec<DetectionRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == DETECTION_HEADER => {}
        Some(Err(e)) => return Err(Error::io(path, e)),
        _ => {
            return Err(Error::Format(format!(
                "{} does not start with '{DETECTION_HEADER}'",
                path.display()
            )))
        }
    }
    let mut records = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(DetectionRecord::parse(&line)?);
    }
    Ok(records)
}

/// `printf("%.*g")`: `digits` significant digits, trailing zeros dropped,
/// scientific notation outside `1e-4 <= |v| < 10^digits`.
pub fn format_significant(value: f64, digits: usize) -> String {
    if value.is_nan() {
        return "nan".into();
    }
    if value.is_infinite() {
        return if value > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if value == 0.0 {
        return if value.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let digits = digits.max(1);
    // rounding first decides the exponent, as in C
    let sci = format!("{:.*e}", digits - 1, value);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("exponent digits");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{value:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
