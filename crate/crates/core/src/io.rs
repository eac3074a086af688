//! On-disk formats: flat binary fields, portable graymaps, phase plans and
//! homographies.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::camera::Homography;
use crate::error::{Error, Result};
use crate::grid::{Grid, RealGrid};
use crate::hologram::{DiscretePlan, PhasePlan};

const SCF_MAGIC: &[u8; 4] = b"SCF1";
const KIND_REAL: u32 = 0;
const KIND_COMPLEX: u32 = 1;

/// Contents of a flat binary field file.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Real(RealGrid),
    Complex(Grid<Complex64>),
}

fn header(w: usize, h: usize, kind: u32) -> Result<Vec<u8>> {
    let dim = |v: usize| u32::try_from(v).map_err(|_| Error::invalid("grid too large for SCF1"));
    let mut out = Vec::with_capacity(16);
    out.extend_from_slice(SCF_MAGIC);
    out.extend_from_slice(&dim(w)?.to_le_bytes());
    out.extend_from_slice(&dim(h)?.to_le_bytes());
    out.extend_from_slice(&kind.to_le_bytes());
    Ok(out)
}

pub fn encode_scf_real(grid: &RealGrid) -> Result<Vec<u8>> {
    let mut out = header(grid.width(), grid.height(), KIND_REAL)?;
    out.reserve(grid.len() * 8);
    for v in grid.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn encode_scf_complex(grid: &Grid<Complex64>) -> Result<Vec<u8>> {
    let mut out = header(grid.width(), grid.height(), KIND_COMPLEX)?;
    out.reserve(grid.len() * 16);
    for v in grid.as_slice() {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_scf(bytes: &[u8]) -> Result<FieldData> {
    let bad = |detail: &str| Error::format("SCF1", detail);
    if bytes.len() < 16 || &bytes[..4] != SCF_MAGIC {
        return Err(bad("missing SCF1 header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let (w, h, kind) = (word(4) as usize, word(8) as usize, word(12));
    let body = &bytes[16..];
    let f64_at = |i: usize| f64::from_le_bytes(body[8 * i..8 * i + 8].try_into().unwrap());
    let n = w.checked_mul(h).ok_or_else(|| bad("dimensions overflow"))?;
    match kind {
        KIND_REAL => {
            if body.len() != n * 8 {
                return Err(bad("payload length does not match dimensions"));
            }
            Ok(FieldData::Real(RealGrid::from_vec(w, h, (0..n).map(f64_at).collect())?))
        }
        KIND_COMPLEX => {
            if body.len() != n * 16 {
                return Err(bad("payload length does not match dimensions"));
            }
            let vals = (0..n).map(|i| Complex64::new(f64_at(2 * i), f64_at(2 * i + 1))).collect();
            Ok(FieldData::Complex(Grid::from_vec(w, h, vals)?))
        }
        k => Err(bad(&format!("unknown payload kind {k}"))),
    }
}

/// Bit depth of a written graymap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Depth {
    Eight,
    Sixteen,
}

/// Binary P5 graymap with the image min-max scaled to the full range.
pub fn encode_pgm(grid: &RealGrid, depth: Depth) -> Vec<u8> {
    let (min, _, max, _) = grid.extrema();
    let range = max - min;
    let maxval: u32 = match depth {
        Depth::Eight => 255,
        Depth::Sixteen => 65535,
    };
    let mut out = format!("P5\n{} {}\n{}\n", grid.width(), grid.height(), maxval).into_bytes();
    for &v in grid.as_slice() {
        let unit = if range > 0.0 { (v - min) / range } else { 0.0 };
        let q = (unit * maxval as f64).round() as u32;
        match depth {
            Depth::Eight => out.push(q as u8),
            Depth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
        }
    }
    out
}

/// Raw graymap samples with their declared maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct Graymap {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    pub pixels: Vec<f64>,
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Graymap> {
    let bad = |detail: &str| Error::format("P5 graymap", detail);
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| bad("malformed header number"))?;
    }
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(bad("header not terminated by whitespace")),
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(bad("invalid dimensions or maxval"));
    }
    let (w, h) = (w as usize, h as usize);
    let bpp = if maxval < 256 { 1 } else { 2 };
    let data = &bytes[pos..];
    if data.len() < w * h * bpp {
        return Err(bad("truncated pixel data"));
    }
    let pixels = (0..w * h)
        .map(|i| match bpp {
            1 => data[i] as f64,
            _ => u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as f64,
        })
        .collect();
    Ok(Graymap {
        width: w,
        height: h,
        maxval,
        pixels,
    })
}

fn parse_header<'a>(line: &'a str, magic: &str) -> Result<Vec<(&'a str, usize)>> {
    let bad = |detail: String| Error::format("phase plan", detail);
    let mut words = line.split_whitespace();
    if words.next() != Some(magic) {
        return Err(bad(format!("expected header starting with '{magic}'")));
    }
    words
        .map(|w| {
            let (k, v) = w.split_once('=').ok_or_else(|| bad(format!("bad header field '{w}'")))?;
            let v = v.parse().map_err(|_| bad(format!("bad value in '{w}'")))?;
            Ok((k, v))
        })
        .collect()
}

fn header_value(fields: &[(&str, usize)], key: &str) -> Result<usize> {
    fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::format("phase plan", format!("header lacks '{key}'")))
}

fn body_rows<T: std::str::FromStr>(lines: &[&str], frames: usize, per_row: usize) -> Result<Vec<T>> {
    if lines.len() != frames {
        return Err(Error::format("phase plan", format!("expected {frames} rows, found {}", lines.len())));
    }
    let mut out = Vec::with_capacity(frames * per_row);
    for (i, line) in lines.iter().enumerate() {
        let row: Vec<T> = line
            .split_whitespace()
            .map(|w| w.parse().map_err(|_| Error::format("phase plan", format!("row {i}: bad value '{w}'"))))
            .collect::<Result<_>>()?;
        if row.len() != per_row {
            return Err(Error::format("phase plan", format!("row {i}: expected {per_row} values, found {}", row.len())));
        }
        out.extend(row);
    }
    Ok(out)
}

fn content_lines(text: &str) -> Vec<&str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).collect()
}

/// `phaseplan frames=F transducers=M` then one row of radians per frame.
pub fn format_plan(plan: &PhasePlan) -> String {
    let mut s = format!("phaseplan frames={} transducers={}\n", plan.frames(), plan.transducers());
    for f in 0..plan.frames() {
        let row: Vec<String> = plan.frame(f).iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_plan(text: &str) -> Result<PhasePlan> {
    let lines = content_lines(text);
    let head = lines.first().ok_or_else(|| Error::format("phase plan", "empty file"))?;
    let fields = parse_header(head, "phaseplan")?;
    if fields.iter().any(|(k, _)| *k == "levels") {
        return Err(Error::format("phase plan", "file holds a discretized plan"));
    }
    let (f, m) = (header_value(&fields, "frames")?, header_value(&fields, "transducers")?);
    PhasePlan::new(f, m, body_rows(&lines[1..], f, m)?)
}

/// Same layout with `levels=L` in the header and integer rows.
pub fn format_discrete_plan(plan: &DiscretePlan) -> String {
    let mut s = format!(
        "phaseplan frames={} transducers={} levels={}\n",
        plan.frames, plan.transducers, plan.levels
    );
    for row in plan.values.chunks(plan.transducers.max(1)) {
        let row: Vec<String> = row.iter().map(u32::to_string).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_discrete_plan(text: &str) -> Result<DiscretePlan> {
    let lines = content_lines(text);
    let head = lines.first().ok_or_else(|| Error::format("phase plan", "empty file"))?;
    let fields = parse_header(head, "phaseplan")?;
    let (frames, transducers) = (header_value(&fields, "frames")?, header_value(&fields, "transducers")?);
    let levels = header_value(&fields, "levels")?;
    let levels = u32::try_from(levels).map_err(|_| Error::format("phase plan", "levels out of range"))?;
    let values: Vec<u32> = body_rows(&lines[1..], frames, transducers)?;
    if values.iter().any(|&v| v >= levels) {
        return Err(Error::format("phase plan", "level index exceeds levels"));
    }
    Ok(DiscretePlan {
        frames,
        transducers,
        levels,
        values,
    })
}

/// Nine whitespace-separated decimals, row-major.
pub fn format_homography(h: &Homography) -> String {
    h.matrix()
        .iter()
        .map(|r| r.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

pub fn parse_homography(text: &str) -> Result<Homography> {
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(|w| w.parse().map_err(|_| Error::format("homography", format!("bad value '{w}'"))))
        .collect::<Result<_>>()?;
    if vals.len() != 9 {
        return Err(Error::format("homography", format!("expected 9 values, found {}", vals.len())));
    }
    Homography::from_matrix([
        [vals[0], vals[1], vals[2]],
        [vals[3], vals[4], vals[5]],
        [vals[6], vals[7], vals[8]],
    ])
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    Ok(buf)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::File::create(path)?.write_all(bytes)?;
    Ok(())
}
