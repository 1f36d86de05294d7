//! File formats: float image tensors, PGM/PPM, models, masks.
//!
//! Training data is always held as 64-bit floats. PGM/PPM files are read as
//! a convenience and quantized once at import; the MPRB tensor format keeps
//! values bit-exact.
//!
//! MPRB layout (little-endian): `"MPRB"`, version `u16`, height `u16`,
//! width `u16`, channels `u16`, count `u32`, then `count·h·w·c` `f64`
//! values, image by image, each HWC-interleaved.
//!
//! Model layout (little-endian): `"MPAE"`, version `u16`, tied flag `u8`,
//! reserved `u8`, layer count `u32`; per layer a 20-byte descriptor
//! (inputs `u32`, outputs `u32`, activation code `u8` with 0 for linear,
//! bias flag `u8`, two reserved bytes, activation parameter `f64`); then per
//! layer the weight matrix row-major (`outputs × inputs`) followed by the
//! bias if present. A tied model stores its single encoder matrix.
//!
//! Mask files hold keep flags (`1` = observed): either plain PBM (`P1`,
//! one flag per pixel) or a length line followed by one flag per line.

use std::fs;
use std::path::{Path, PathBuf};

use crate::autoencoder::{Activation, AutoencoderModel, DenseLayer, Model, TiedAutoencoder};
use crate::degradation::ErasureMask;
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::numerics::{Matrix, Rng, Vector};

pub const TENSOR_MAGIC: &[u8; 4] = b"MPRB";
pub const TENSOR_VERSION: u16 = 1;
pub const MODEL_MAGIC: &[u8; 4] = b"MPAE";
pub const MODEL_VERSION: u16 = 1;
const TENSOR_HEADER: usize = 16;
const MODEL_HEADER: usize = 12;
const LAYER_DESCRIPTOR: usize = 20;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `contents`, creating parent directories as needed.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Little-endian cursor that reports failures with byte offsets.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    source: String,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], source: &str) -> Self {
        Reader {
            bytes,
            pos: 0,
            source: source.to_string(),
        }
    }

    fn error(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            source_name: self.source.clone(),
            offset,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error(
                self.pos,
                format!(
                    "truncated {what}: need {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n * 8, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.error(self.pos, "trailing bytes"));
        }
        Ok(())
    }
}

fn dim_u16(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} exceeds 65535")))
}

fn dim_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} exceeds u32")))
}

pub fn encode_tensor(geometry: Geometry, images: &[Vector]) -> Result<Vec<u8>> {
    let d = geometry.len();
    let mut out = Vec::with_capacity(TENSOR_HEADER + images.len() * d * 8);
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&dim_u16(geometry.height, "height")?.to_le_bytes());
    out.extend_from_slice(&dim_u16(geometry.width, "width")?.to_le_bytes());
    out.extend_from_slice(&dim_u16(geometry.channels, "channels")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(images.len(), "image count")?.to_le_bytes());
    for img in images {
        if img.len() != d {
            return Err(Error::dims("tensor image", d, img.len()));
        }
        img.iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8], source: &str) -> Result<(Geometry, Vec<Vector>)> {
    let mut r = Reader::new(bytes, source);
    if r.take(4, "magic")? != TENSOR_MAGIC {
        return Err(r.error(0, "bad magic, expected MPRB"));
    }
    let version = r.u16("version")?;
    if version != TENSOR_VERSION {
        return Err(Error::Version {
            found: version,
            expected: TENSOR_VERSION,
        });
    }
    let h = r.u16("height")? as usize;
    let w = r.u16("width")? as usize;
    let c = r.u16("channels")? as usize;
    let geometry =
        Geometry::new(h, w, c).map_err(|_| r.error(6, format!("zero dimension in {h}x{w}x{c}")))?;
    let count = r.u32("count")? as usize;
    let d = geometry.len();
    let mut images = Vec::with_capacity(count);
    for _ in 0..count {
        images.push(Vector::from(r.f64s(d, "pixel data")?));
    }
    r.finish()?;
    Ok((geometry, images))
}

pub fn write_tensor(path: &Path, geometry: Geometry, images: &[Vector]) -> Result<()> {
    write_file(path, encode_tensor(geometry, images)?)
}

pub fn read_tensor(path: &Path) -> Result<(Geometry, Vec<Vector>)> {
    decode_tensor(&read_file(path)?, &path.display().to_string())
}

/// Parses binary PGM (`P5`) or PPM (`P6`) data, scaling samples by
/// `1/maxval`. 16-bit samples are big-endian.
pub fn decode_pnm(bytes: &[u8], source: &str) -> Result<(Geometry, Vector)> {
    let err = |offset: usize, message: String| Error::Parse {
        source_name: source.to_string(),
        offset,
        message,
    };
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(err(0, "expected P5 or P6 magic".into())),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (k, field) in fields.iter_mut().enumerate() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(err(pos, format!("expected header field {}", k + 1)));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| err(start, "header number out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(err(pos, "expected whitespace after maxval".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(err(pos - 1, format!("maxval {maxval} outside 1..=65535")));
    }
    let geometry = Geometry::new(height, width, channels)
        .map_err(|_| err(2, format!("zero image size {width}x{height}")))?;
    let wide = maxval > 255;
    let sample_bytes = if wide { 2 } else { 1 };
    let need = geometry.len() * sample_bytes;
    let data = bytes.get(pos..pos + need).ok_or_else(|| {
        err(
            bytes.len(),
            format!("truncated pixel data: need {need} bytes"),
        )
    })?;
    let scale = maxval as f64;
    let values: Vector = if wide {
        data.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    } else {
        data.iter().map(|&b| b as f64 / scale).collect()
    };
    if let Some(i) = values.iter().position(|&v| v > 1.0) {
        return Err(err(
            pos + i * sample_bytes,
            format!("sample exceeds maxval {maxval}"),
        ));
    }
    Ok((geometry, values))
}

pub fn read_pnm(path: &Path) -> Result<(Geometry, Vector)> {
    decode_pnm(&read_file(path)?, &path.display().to_string())
}

/// 8-bit PGM/PPM; values are clipped to `[0, 1]` and rounded.
pub fn encode_pnm(geometry: Geometry, data: &[f64]) -> Result<Vec<u8>> {
    if data.len() != geometry.len() {
        return Err(Error::dims("image export", geometry.len(), data.len()));
    }
    let magic = match geometry.channels {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(Error::InvalidArgument(format!(
                "PGM/PPM export needs 1 or 3 channels, got {c}"
            )))
        }
    };
    let mut out = format!("{magic}\n{} {}\n255\n", geometry.width, geometry.height).into_bytes();
    out.extend(
        data.iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

pub fn write_pnm(path: &Path, geometry: Geometry, data: &[f64]) -> Result<()> {
    write_file(path, encode_pnm(geometry, data)?)
}

/// One ingested image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub sample_id: String,
    pub data: Vector,
    pub geometry: Geometry,
}

/// Maps values into `[0, 1]`: data already inside is untouched, data inside
/// `[0, 255]` is divided by 255, anything else is min-max rescaled.
pub fn normalize_unit(data: &mut [f64]) {
    if data.iter().all(|v| (0.0..=1.0).contains(v)) {
        return;
    }
    if data.iter().all(|v| (0.0..=255.0).contains(v)) {
        data.iter_mut().for_each(|v| *v /= 255.0);
        return;
    }
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    data.iter_mut()
        .for_each(|v| *v = if span > 0.0 { (*v - lo) / span } else { 0.0 });
}

fn is_image_file(p: &Path) -> bool {
    matches!(
        p.extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref(),
        Some("pgm" | "ppm" | "mprb")
    )
}

fn records_from_file(path: &Path) -> Result<Vec<ImageRecord>> {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let is_tensor = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("mprb"));
    if is_tensor {
        let (geometry, images) = read_tensor(path)?;
        Ok(images
            .into_iter()
            .enumerate()
            .map(|(i, data)| ImageRecord {
                sample_id: format!("{stem}#{i}"),
                data,
                geometry,
            })
            .collect())
    } else {
        let (geometry, data) = read_pnm(path)?;
        Ok(vec![ImageRecord {
            sample_id: stem,
            data,
            geometry,
        }])
    }
}

/// Loads every `.pgm`, `.ppm` and `.mprb` image under `path` (a directory,
/// read in file-name order, or a single file).
///
/// When `limit` is below the number of images, a subset of that size is
/// picked with `seed` and returned in the original order. Images whose
/// shape differs from `geometry` are rejected.
pub fn load_dataset(
    path: &Path,
    geometry: Option<Geometry>,
    limit: Option<usize>,
    seed: u64,
) -> Result<Vec<ImageRecord>> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image_file(p))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut records = Vec::new();
    for f in &files {
        records.extend(records_from_file(f)?);
    }
    if records.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if let Some(g) = geometry {
        if let Some(bad) = records.iter().find(|r| r.geometry != g) {
            return Err(Error::InvalidArgument(format!(
                "image {} has shape {}, expected {g}",
                bad.sample_id, bad.geometry
            )));
        }
    }
    for r in &mut records {
        normalize_unit(&mut r.data);
    }
    match limit {
        Some(n) if n < records.len() => {
            let mut idx: Vec<usize> = (0..records.len()).collect();
            Rng::new(seed).shuffle(&mut idx);
            let mut keep = idx[..n].to_vec();
            keep.sort_unstable();
            Ok(keep.into_iter().map(|i| records[i].clone()).collect())
        }
        _ => Ok(records),
    }
}

struct LayerHeader {
    inputs: usize,
    outputs: usize,
    activation: Option<Activation>,
    bias: bool,
}

pub fn encode_model(model: &Model) -> Result<Vec<u8>> {
    let (tied, headers, blocks): (bool, Vec<LayerHeader>, Vec<Vec<f64>>) = match model {
        Model::Tied(t) => (
            true,
            vec![LayerHeader {
                inputs: t.weight().cols(),
                outputs: t.weight().rows(),
                activation: Some(t.activation()),
                bias: false,
            }],
            vec![t.weight().as_slice().to_vec()],
        ),
        Model::Deep(m) => (
            false,
            m.layers()
                .iter()
                .map(|l| LayerHeader {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    activation: l.activation,
                    bias: l.bias.is_some(),
                })
                .collect(),
            m.layers()
                .iter()
                .map(|l| {
                    let mut v = l.weight.as_slice().to_vec();
                    if let Some(b) = &l.bias {
                        v.extend_from_slice(b);
                    }
                    v
                })
                .collect(),
        ),
    };
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.push(tied as u8);
    out.push(0);
    out.extend_from_slice(&dim_u32(headers.len(), "layer count")?.to_le_bytes());
    for h in &headers {
        out.extend_from_slice(&dim_u32(h.inputs, "layer inputs")?.to_le_bytes());
        out.extend_from_slice(&dim_u32(h.outputs, "layer outputs")?.to_le_bytes());
        out.push(h.activation.map_or(0, |a| a.kind_code()));
        out.push(h.bias as u8);
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&h.activation.map_or(0.0, |a| a.parameter()).to_le_bytes());
    }
    for block in &blocks {
        block
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8], source: &str) -> Result<Model> {
    let mut r = Reader::new(bytes, source);
    if r.take(4, "magic")? != MODEL_MAGIC {
        return Err(r.error(0, "bad magic, expected MPAE"));
    }
    let version = r.u16("version")?;
    if version != MODEL_VERSION {
        return Err(Error::Version {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let tied = match r.u8("tied flag")? {
        0 => false,
        1 => true,
        v => return Err(r.error(6, format!("bad tied flag {v}"))),
    };
    r.u8("reserved")?;
    let count = r.u32("layer count")? as usize;
    if count == 0 || (tied && count != 1) {
        return Err(r.error(8, format!("bad layer count {count}")));
    }
    let mut headers = Vec::with_capacity(count);
    for i in 0..count {
        let offset = MODEL_HEADER + i * LAYER_DESCRIPTOR;
        let inputs = r.u32("layer inputs")? as usize;
        let outputs = r.u32("layer outputs")? as usize;
        let code = r.u8("activation code")?;
        let bias = r.u8("bias flag")? == 1;
        r.take(2, "reserved")?;
        let param = r.f64s(1, "activation parameter")?[0];
        let activation = match code {
            0 => None,
            c => Some(
                Activation::from_code(c, param)
                    .ok_or_else(|| r.error(offset + 8, format!("unknown activation code {c}")))?,
            ),
        };
        if inputs == 0 || outputs == 0 {
            return Err(r.error(offset, "zero layer width"));
        }
        headers.push(LayerHeader {
            inputs,
            outputs,
            activation,
            bias,
        });
    }
    let model = if tied {
        let h = &headers[0];
        let w = Matrix::from_vec(
            h.outputs,
            h.inputs,
            r.f64s(h.inputs * h.outputs, "weights")?,
        )?;
        let act = h
            .activation
            .ok_or_else(|| r.error(MODEL_HEADER + 8, "tied model needs an activation"))?;
        Model::Tied(TiedAutoencoder::new(w, act)?)
    } else {
        let mut layers = Vec::with_capacity(count);
        for h in &headers {
            let weight = Matrix::from_vec(
                h.outputs,
                h.inputs,
                r.f64s(h.inputs * h.outputs, "weights")?,
            )?;
            let bias = if h.bias {
                Some(Vector::from(r.f64s(h.outputs, "bias")?))
            } else {
                None
            };
            layers.push(DenseLayer {
                weight,
                bias,
                activation: h.activation,
            });
        }
        Model::Deep(AutoencoderModel::from_layers(layers)?)
    };
    r.finish()?;
    Ok(model)
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    write_file(path, encode_model(model)?)
}

pub fn load_model(path: &Path) -> Result<Model> {
    decode_model(&read_file(path)?, &path.display().to_string())
}

/// Length line, then one keep flag per line.
pub fn encode_mask(mask: &ErasureMask) -> String {
    let mut s = format!("{}\n", mask.len());
    for &k in mask.as_slice() {
        s.push(if k { '1' } else { '0' });
        s.push('\n');
    }
    s
}

/// Plain PBM with one keep flag per pixel; `mask` must have one entry per
/// pixel of `geometry`.
pub fn encode_mask_pbm(mask: &ErasureMask, geometry: Geometry) -> Result<String> {
    if mask.len() != geometry.pixels() {
        return Err(Error::dims("pbm mask", geometry.pixels(), mask.len()));
    }
    let mut s = format!("P1\n{} {}\n", geometry.width, geometry.height);
    for row in mask.as_slice().chunks(geometry.width) {
        let line: Vec<&str> = row.iter().map(|&k| if k { "1" } else { "0" }).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    Ok(s)
}

pub fn decode_mask(text: &str, source: &str) -> Result<ErasureMask> {
    let err = |offset: usize, message: String| Error::Parse {
        source_name: source.to_string(),
        offset,
        message,
    };
    // Tokens with byte offsets, comments stripped.
    let mut tokens: Vec<(usize, &str)> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let content = line.split('#').next().unwrap_or("");
        let mut col = 0;
        for tok in content.split_whitespace() {
            let at = content[col..].find(tok).unwrap() + col;
            tokens.push((offset + at, tok));
            col = at + tok.len();
        }
        offset += line.len();
    }
    let (start, expected) = match tokens.first() {
        None => return Err(err(0, "empty mask file".into())),
        Some((_, "P1")) => {
            let num = |i: usize| -> Result<usize> {
                let (o, t) = tokens
                    .get(i)
                    .ok_or_else(|| err(text.len(), "truncated PBM header".into()))?;
                t.parse()
                    .map_err(|_| err(*o, format!("bad PBM size '{t}'")))
            };
            (3, num(1)? * num(2)?)
        }
        Some((o, t)) => (
            1,
            t.parse()
                .map_err(|_| err(*o, format!("bad mask length '{t}'")))?,
        ),
    };
    // PBM allows flags without separators.
    let mut keep = Vec::with_capacity(expected);
    for &(o, t) in &tokens[start.min(tokens.len())..] {
        for (i, ch) in t.char_indices() {
            match ch {
                '0' => keep.push(false),
                '1' => keep.push(true),
                _ => return Err(err(o + i, format!("bad mask flag '{ch}'"))),
            }
        }
    }
    if keep.len() != expected {
        return Err(err(
            text.len(),
            format!("mask has {} flags, header says {expected}", keep.len()),
        ));
    }
    if keep.is_empty() {
        return Err(err(0, "mask has no entries".into()));
    }
    Ok(ErasureMask::new(keep))
}

pub fn read_mask(path: &Path) -> Result<ErasureMask> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_mask(&text, &path.display().to_string())
}

pub fn write_mask(path: &Path, mask: &ErasureMask) -> Result<()> {
    write_file(path, encode_mask(mask))
}

/// Shortest round-trip decimal form; infinities as `inf`/`-inf`.
pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::FcArchitecture;
    use crate::Autoencoder;

    #[test]
    fn tensor_round_trip_is_bit_exact() {
        let g = Geometry::new(2, 3, 1).unwrap();
        let imgs = vec![
            Vector::from(vec![0.1, 0.2, 1.0 / 3.0, 0.0, 1.0, f64::MIN_POSITIVE]),
            Vector::from(vec![0.5; 6]),
        ];
        let bytes = encode_tensor(g, &imgs).unwrap();
        assert_eq!(bytes.len(), 16 + 2 * 6 * 8);
        let (g2, back) = decode_tensor(&bytes, "mem").unwrap();
        assert_eq!(g2, g);
        for (a, b) in imgs.iter().zip(&back) {
            assert!(a
                .iter()
                .zip(b.iter())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn tensor_bad_magic_names_offset() {
        let g = Geometry::new(1, 1, 1).unwrap();
        let mut bytes = encode_tensor(g, &[Vector::from(vec![0.5])]).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            decode_tensor(&bytes, "m"),
            Err(Error::Parse { offset: 0, .. })
        ));
        let good = encode_tensor(g, &[Vector::from(vec![0.5])]).unwrap();
        let err = decode_tensor(&good[..20], "m").unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 16, .. }));
    }

    #[test]
    fn pgm_sample_scaling() {
        let mut bytes = b"P5\n# comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[128, 255]);
        let (g, v) = decode_pnm(&bytes, "x").unwrap();
        assert_eq!(g, Geometry::new(1, 2, 1).unwrap());
        assert_eq!(v[0], 128.0 / 255.0);
        assert_eq!(v[1], 1.0);
    }

    #[test]
    fn sixteen_bit_ppm_is_big_endian() {
        let mut bytes = b"P6 1 1 65535 ".to_vec();
        bytes.extend_from_slice(&[0x80, 0x00, 0xff, 0xff, 0x00, 0x00]);
        let (g, v) = decode_pnm(&bytes, "x").unwrap();
        assert_eq!(g.channels, 3);
        assert_eq!(v.as_slice(), &[32768.0 / 65535.0, 1.0, 0.0]);
    }

    #[test]
    fn pnm_truncated_is_an_error() {
        assert!(decode_pnm(b"P5 2 2 255\n\x01", "x").is_err());
        assert!(decode_pnm(b"P3 1 1 255\n", "x").is_err());
    }

    #[test]
    fn pnm_export_round_trip_of_quantized_values() {
        let g = Geometry::new(2, 2, 1).unwrap();
        let data = [0.0, 1.0, 128.0 / 255.0, 2.0];
        let (g2, back) = decode_pnm(&encode_pnm(g, &data).unwrap(), "x").unwrap();
        assert_eq!(g2, g);
        assert_eq!(back.as_slice(), &[0.0, 1.0, 128.0 / 255.0, 1.0]);
    }

    #[test]
    fn normalization_rules() {
        let mut a = vec![0.0, 0.5, 1.0];
        normalize_unit(&mut a);
        assert_eq!(a, vec![0.0, 0.5, 1.0]);
        let mut b = vec![0.0, 51.0, 255.0];
        normalize_unit(&mut b);
        assert_eq!(b, vec![0.0, 0.2, 1.0]);
        let mut c = vec![-1.0, 0.0, 1.0];
        normalize_unit(&mut c);
        assert_eq!(c, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn deep_model_round_trip() {
        let arch = FcArchitecture::mirrored(12, 4, 4, Activation::Prelu { slope: 0.25 }).unwrap();
        let m = Model::Deep(AutoencoderModel::new_fc(&arch, &mut Rng::new(3)).unwrap());
        let back = decode_model(&encode_model(&m).unwrap(), "m").unwrap();
        assert_eq!(back, m);
        let x = Vector::from_fn(12, |i| i as f64 / 12.0);
        assert_eq!(m.forward(&x).unwrap(), back.forward(&x).unwrap());
    }

    #[test]
    fn tied_model_round_trip_and_version_check() {
        let t = TiedAutoencoder::random(5, 3, Activation::Softplus { beta: 2.0 }, &mut Rng::new(1))
            .unwrap();
        let m = Model::Tied(t);
        let mut bytes = encode_model(&m).unwrap();
        assert_eq!(decode_model(&bytes, "m").unwrap(), m);
        assert!(decode_model(&bytes[..bytes.len() - 1], "m").is_err());
        bytes[4] = 9;
        assert!(matches!(
            decode_model(&bytes, "m"),
            Err(Error::Version { found: 9, .. })
        ));
    }

    #[test]
    fn mask_formats_round_trip() {
        let mask = ErasureMask::from_bits(&[1, 0, 0, 1, 1, 0]).unwrap();
        assert_eq!(decode_mask(&encode_mask(&mask), "m").unwrap(), mask);
        let g = Geometry::new(2, 3, 1).unwrap();
        let pbm = encode_mask_pbm(&mask, g).unwrap();
        assert!(pbm.starts_with("P1\n3 2\n"));
        assert_eq!(decode_mask(&pbm, "m").unwrap(), mask);
        assert_eq!(
            decode_mask("P1 3 2\n100\n110\n", "m").unwrap().bits(),
            vec![1, 0, 0, 1, 1, 0]
        );
    }

    #[test]
    fn mask_length_mismatch_is_an_error() {
        assert!(decode_mask("3\n1\n0\n", "m").is_err());
        assert!(decode_mask("2\n1\n2\n", "m").is_err());
        assert!(decode_mask("", "m").is_err());
    }

    #[test]
    fn float_formatting() {
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1e-9), "1e-9");
        assert_eq!(fmt_f64(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
    }
}
