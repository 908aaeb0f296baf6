//! File formats: binary PGM input, PFM rasters with an embedded metadata
//! block, and CSV export. Byte layouts are documented in `docs/formats.md`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{EnvelopeImage, MapMeta, ParamMap, ScoreField};

/// Marker line that opens the metadata block after a PFM raster.
pub const META_MARKER: &[u8] = b"NKMETA\n";

/// A grayscale image with levels scaled to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub levels: Vec<f64>,
}

fn fmt_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {msg}", path.display()))
}

/// Split off `count` whitespace-separated header tokens, skipping `#`
/// comments. Returns the tokens and the offset just past the single
/// whitespace byte that ends the header.
fn header_tokens(bytes: &[u8], count: usize) -> Option<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() {
        return None;
    }
    Some((tokens, i + 1))
}

pub fn parse_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let (tokens, start) = header_tokens(bytes, 4).ok_or_else(|| fmt_err(path, "truncated PGM header"))?;
    if tokens[0] != "P5" {
        return Err(fmt_err(path, format!("expected binary PGM (P5), found {:?}", tokens[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| fmt_err(path, format!("bad PGM header field {s:?}")));
    let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(fmt_err(path, "PGM dimensions or maxval out of range"));
    }
    let bpp = if maxval < 256 { 1 } else { 2 };
    let n = width * height;
    let raster = &bytes[start..];
    if raster.len() < n * bpp {
        return Err(fmt_err(path, format!("PGM raster has {} bytes, needs {}", raster.len(), n * bpp)));
    }
    let m = maxval as f64;
    let levels = if bpp == 1 {
        raster[..n].iter().map(|&v| (v as f64 / m).min(1.0)).collect()
    } else {
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 / m).min(1.0))
            .collect()
    };
    Ok(GrayImage { width, height, levels })
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, path)
}

/// Write levels in [0, 1] as an 8-bit (`sixteen = false`) or 16-bit PGM.
pub fn write_pgm(path: &Path, img: &GrayImage, sixteen: bool) -> Result<()> {
    let maxval: u32 = if sixteen { 65535 } else { 255 };
    let mut out = format!("P5\n{} {}\n{maxval}\n", img.width, img.height).into_bytes();
    for &g in &img.levels {
        let q = (g.clamp(0.0, 1.0) * maxval as f64).round() as u32;
        if sixteen {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// `*.pgm` files in `dir`, sorted by name.
pub fn list_pgm(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    Ok(files)
}

/// What a PFM file holds, recorded in its metadata block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RasterKind {
    Envelope,
    ParamMap,
    Score,
}

/// Self-description stored after every raster this crate writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileMeta {
    pub kind: RasterKind,
    pub producer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapMeta>,
}

impl FileMeta {
    pub fn new(kind: RasterKind) -> Self {
        Self {
            kind,
            producer: producer(),
            config_hash: None,
            source: None,
            map: None,
        }
    }
}

pub fn producer() -> String {
    format!("nakagami-qus {}", env!("CARGO_PKG_VERSION"))
}

/// A decoded PFM: row-major, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub meta: Option<FileMeta>,
}

/// Encode a single-channel little-endian PFM. `values` are row-major with the
/// top row first; the file stores rows bottom to top.
pub fn encode_pfm(width: usize, height: usize, values: &[f64], meta: &FileMeta) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(Error::InvalidArgument("raster size mismatch".into()));
    }
    let mut out = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(values.len() * 4 + 256);
    for row in values.chunks(width).rev() {
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out.extend_from_slice(META_MARKER);
    let json = serde_json::to_string(meta).map_err(|e| Error::Format(e.to_string()))?;
    out.extend_from_slice(json.as_bytes());
    out.push(b'\n');
    Ok(out)
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<Raster> {
    let (tokens, start) = header_tokens(bytes, 4).ok_or_else(|| fmt_err(path, "truncated PFM header"))?;
    if tokens[0] != "Pf" {
        return Err(fmt_err(path, format!("expected single-channel PFM (Pf), found {:?}", tokens[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| fmt_err(path, format!("bad PFM size {s:?}")));
    let (width, height) = (num(&tokens[1])?, num(&tokens[2])?);
    let scale: f64 = tokens[3].parse().map_err(|_| fmt_err(path, "bad PFM scale"))?;
    if width == 0 || height == 0 || scale == 0.0 || !scale.is_finite() {
        return Err(fmt_err(path, "PFM dimensions or scale out of range"));
    }
    let n = width.checked_mul(height).ok_or_else(|| fmt_err(path, "PFM too large"))?;
    let end = start + n * 4;
    if bytes.len() < end {
        return Err(fmt_err(path, format!("PFM raster truncated ({} of {} bytes)", bytes.len() - start, n * 4)));
    }
    let little = scale < 0.0;
    let mut values = vec![0f32; n];
    for (k, c) in bytes[start..end].chunks_exact(4).enumerate() {
        let raw = [c[0], c[1], c[2], c[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row_from_bottom, x) = (k / width, k % width);
        values[(height - 1 - row_from_bottom) * width + x] = v;
    }
    let rest = &bytes[end..];
    let meta = if rest.is_empty() {
        None
    } else if let Some(json) = rest.strip_prefix(META_MARKER) {
        let json = json.strip_suffix(b"\n").unwrap_or(json);
        Some(serde_json::from_slice(json).map_err(|e| fmt_err(path, format!("bad metadata block: {e}")))?)
    } else {
        return Err(fmt_err(path, "unexpected bytes after the PFM raster"));
    };
    Ok(Raster {
        width,
        height,
        values,
        meta,
    })
}

pub fn read_pfm(path: &Path) -> Result<Raster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, path)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_envelope(path: &Path, img: &EnvelopeImage, meta: &FileMeta) -> Result<()> {
    write_bytes(path, &encode_pfm(img.width(), img.height(), img.data(), meta)?)
}

pub fn read_envelope(path: &Path) -> Result<EnvelopeImage> {
    let r = read_pfm(path)?;
    EnvelopeImage::new(r.width, r.height, r.values.iter().map(|&v| v as f64).collect())
        .map_err(|e| fmt_err(path, e))
}

/// Masked pixels are written as NaN; the map metadata goes into the block.
pub fn write_map(path: &Path, map: &ParamMap, meta: &FileMeta) -> Result<()> {
    let values: Vec<f64> = map
        .values()
        .iter()
        .zip(map.valid())
        .map(|(&v, &ok)| if ok { v } else { f64::NAN })
        .collect();
    let mut meta = meta.clone();
    meta.map = Some(map.meta.clone());
    write_bytes(path, &encode_pfm(map.width(), map.height(), &values, &meta)?)
}

pub fn read_map(path: &Path) -> Result<ParamMap> {
    let r = read_pfm(path)?;
    let valid: Vec<bool> = r.values.iter().map(|v| v.is_finite()).collect();
    let values = r.values.iter().map(|&v| v as f64).collect();
    let meta = r.meta.and_then(|m| m.map).unwrap_or_default();
    ParamMap::new(r.width, r.height, values, valid, meta).map_err(|e| fmt_err(path, e))
}

pub fn write_score(path: &Path, score: &ScoreField, meta: &FileMeta) -> Result<()> {
    write_bytes(path, &encode_pfm(score.width(), score.height(), score.values(), meta)?)
}

pub fn read_score(path: &Path) -> Result<ScoreField> {
    let r = read_pfm(path)?;
    ScoreField::new(r.width, r.height, r.values.iter().map(|&v| v as f64).collect()).map_err(|e| fmt_err(path, e))
}

/// Grid CSV: `# key=value` comment lines, then one line per image row.
/// Masked or non-finite pixels are written as `nan`.
pub fn grid_csv(width: usize, values: &[f64], valid: Option<&[bool]>, header: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in header {
        out.push_str(&format!("# {k}={v}\n"));
    }
    for (y, row) in values.chunks(width).enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(x, v)| {
                let ok = valid.is_none_or(|m| m[y * width + x]) && v.is_finite();
                if ok {
                    format!("{v}")
                } else {
                    "nan".to_string()
                }
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn map_csv(map: &ParamMap) -> String {
    let header = [
        ("estimator", map.meta.estimator.clone()),
        ("window", map.meta.window.clone()),
        ("width", map.width().to_string()),
        ("height", map.height().to_string()),
    ];
    grid_csv(map.width(), map.values(), Some(map.valid()), &header)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_8_and_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage {
            width: 3,
            height: 2,
            levels: vec![0.0, 0.5, 1.0, 0.25, 0.75, 1.0],
        };
        for sixteen in [false, true] {
            let p = dir.path().join(format!("g{sixteen}.pgm"));
            write_pgm(&p, &img, sixteen).unwrap();
            let back = read_pgm(&p).unwrap();
            assert_eq!((back.width, back.height), (3, 2));
            let tol = if sixteen { 1.0 / 65535.0 } else { 1.0 / 255.0 };
            for (a, b) in back.levels.iter().zip(&img.levels) {
                assert!((a - b).abs() <= tol);
            }
        }
        assert_eq!(list_pgm(dir.path()).unwrap().len(), 2);
    }

    #[test]
    fn pgm_header_with_comment() {
        let bytes = b"P5\n# made by hand\n2 1\n# depth\n255\n\x00\xff";
        let g = parse_pgm(bytes, Path::new("x.pgm")).unwrap();
        assert_eq!(g.levels, vec![0.0, 1.0]);
        assert!(parse_pgm(b"P2\n2 1\n255\n0 255", Path::new("x")).is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n\x00", Path::new("x")).is_err());
    }

    #[test]
    fn pfm_layout_is_bottom_up_little_endian() {
        let meta = FileMeta::new(RasterKind::Score);
        let bytes = encode_pfm(2, 2, &[1.0, 2.0, 3.0, 4.0], &meta).unwrap();
        let header = b"Pf\n2 2\n-1.0\n";
        assert_eq!(&bytes[..header.len()], header);
        // bottom row (3, 4) comes first
        assert_eq!(&bytes[header.len()..header.len() + 4], &3f32.to_le_bytes());
        let r = decode_pfm(&bytes, Path::new("x")).unwrap();
        assert_eq!(r.values, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(r.meta, Some(meta));
    }

    #[test]
    fn big_endian_and_bare_pfm_are_read() {
        let mut bytes = b"Pf\n1 2\n1.0\n".to_vec();
        bytes.extend_from_slice(&5f32.to_be_bytes());
        bytes.extend_from_slice(&6f32.to_be_bytes());
        let r = decode_pfm(&bytes, Path::new("x")).unwrap();
        assert_eq!(r.values, vec![6.0, 5.0]);
        assert_eq!(r.meta, None);
        bytes.push(b'?');
        assert!(decode_pfm(&bytes, Path::new("x")).is_err());
        assert!(decode_pfm(&bytes[..14], Path::new("x")).is_err());
    }

    #[test]
    fn map_round_trip_keeps_mask_and_meta() {
        let dir = tempfile::tempdir().unwrap();
        let meta = MapMeta {
            estimator: "moment".into(),
            window: "9".into(),
            ..MapMeta::default()
        };
        let map = ParamMap::new(2, 2, vec![0.5, f64::NAN, 1.25, 2.0], vec![true, false, true, true], meta).unwrap();
        let p = dir.path().join("m.pfm");
        let mut fm = FileMeta::new(RasterKind::ParamMap);
        fm.config_hash = Some("abc".into());
        write_map(&p, &map, &fm).unwrap();
        let back = read_map(&p).unwrap();
        assert_eq!(back.valid(), map.valid());
        assert_eq!(back.meta, map.meta);
        assert_eq!(back.values()[2], 1.25);
        let raw = read_pfm(&p).unwrap();
        assert_eq!(raw.meta.unwrap().config_hash.as_deref(), Some("abc"));
    }

    #[test]
    fn csv_export() {
        let map = ParamMap::new(2, 2, vec![0.5, f64::NAN, 1.25, 2.0], vec![true, false, true, true], MapMeta::default()).unwrap();
        let csv = map_csv(&map);
        assert!(csv.starts_with("# estimator=\n# window=\n# width=2\n# height=2\n"));
        assert!(csv.ends_with("0.5,nan\n1.25,2\n"));
    }
}
