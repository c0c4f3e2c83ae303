//! Readers and writers for every on-disk artifact.
//!
//! * Binary netpbm: `P5` (gray) and `P6` (RGB) with maxval 255, plus 16-bit `P5`
//!   label maps (maxval 65535, big-endian samples as netpbm prescribes).
//! * Middlebury `.flo` optical flow: `"PIEH"`, width `i32`, height `i32`, then
//!   interleaved `(u, v)` `f32` pairs, all little-endian.
//! * `TNSR` tensors: `"TNSR"`, ndims `u32`, dims `u32` each, then row-major `f32`
//!   data, all little-endian.
//!
//! Writers always emit the canonical form, so `encode(decode(bytes)) == bytes` for
//! any file a writer produced. Decoders validate the declared size against the
//! buffer length before allocating anything.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// An 8-bit raster with 1 (gray) or 3 (RGB) interleaved channels, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "image data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled_rgb(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Image {
            width,
            height,
            channels: 3,
            data,
        }
    }

    /// Pixel color as RGB in `[0, 1]`. Gray images replicate their single channel.
    pub fn rgb_f64(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * self.channels;
        if self.channels == 1 {
            let g = self.data[i] as f64 / 255.0;
            [g, g, g]
        } else {
            [
                self.data[i] as f64 / 255.0,
                self.data[i + 1] as f64 / 255.0,
                self.data[i + 2] as f64 / 255.0,
            ]
        }
    }

    pub fn set_rgb(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * self.channels;
        if self.channels == 1 {
            self.data[i] = rgb[0];
        } else {
            self.data[i..i + 3].copy_from_slice(&rgb);
        }
    }
}

/// Binary per-pixel mask, 0 = background, 1 = foreground.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl SegmentationMask {
    pub fn zeros(width: usize, height: usize) -> Self {
        SegmentationMask {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }
}

/// Ground-truth pixel classes. Void pixels are excluded from evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GtLabel {
    Background,
    Foreground,
    Void,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruthMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<GtLabel>,
}

/// Row-major float tensor with one to four dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<u32>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(Error::invalid(format!(
                "tensor must have 1 to 4 dims, got {}",
                dims.len()
            )));
        }
        let n = dims_product(&dims)
            .ok_or_else(|| Error::invalid("tensor dims product overflows"))?;
        if n != data.len() {
            return Err(Error::invalid(format!(
                "tensor data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("tensor value {i} is not finite")));
        }
        Ok(Tensor { dims, data })
    }

    /// Element at a full multi-index, row-major.
    pub fn at(&self, index: &[usize]) -> f32 {
        assert_eq!(index.len(), self.dims.len(), "index rank mismatch");
        let mut flat = 0usize;
        for (&i, &d) in index.iter().zip(&self.dims) {
            assert!(i < d as usize, "index out of range");
            flat = flat * d as usize + i;
        }
        self.data[flat]
    }
}

fn dims_product(dims: &[u32]) -> Option<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
}

/// Dense optical flow: pixel `(x, y)` in frame `t` moves to `(x + u, y + v)` in frame `t + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }
}

// ---------------------------------------------------------------------------
// netpbm

struct HeaderCursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::format(start, format!("{what} out of range")))
    }
}

struct PnmHeader {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
    data_offset: usize,
}

fn parse_pnm_header(buf: &[u8]) -> Result<PnmHeader> {
    if buf.len() < 2 {
        return Err(Error::format(0, "missing netpbm magic"));
    }
    let magic = [buf[0], buf[1]];
    if &magic != b"P5" && &magic != b"P6" {
        return Err(Error::format(0, "expected magic P5 or P6"));
    }
    let mut cur = HeaderCursor { buf, pos: 2 };
    if cur.pos < buf.len() && !buf[cur.pos].is_ascii_whitespace() && buf[cur.pos] != b'#' {
        return Err(Error::format(2, "expected whitespace after magic"));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(2, "image dimensions must be nonzero"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(maxval_at, "maxval must be in 1..=65535"));
    }
    if cur.pos >= buf.len() || !buf[cur.pos].is_ascii_whitespace() {
        return Err(Error::format(cur.pos, "expected single whitespace before raster"));
    }
    Ok(PnmHeader {
        magic,
        width,
        height,
        maxval,
        data_offset: cur.pos + 1,
    })
}

fn pnm_payload<'a>(buf: &'a [u8], header: &PnmHeader, sample_bytes: usize) -> Result<&'a [u8]> {
    let channels = if &header.magic == b"P6" { 3 } else { 1 };
    let expected = header
        .width
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(channels * sample_bytes))
        .ok_or_else(|| Error::format(2, "image dimensions overflow"))?;
    let available = buf.len() - header.data_offset;
    if available < expected {
        return Err(Error::Truncated {
            expected,
            found: available,
        });
    }
    if available > expected {
        return Err(Error::format(
            header.data_offset + expected,
            "trailing bytes after raster",
        ));
    }
    Ok(&buf[header.data_offset..])
}

fn write_pnm_header(magic: &str, width: usize, height: usize, maxval: usize) -> Vec<u8> {
    format!("{magic}\n{width} {height}\n{maxval}\n").into_bytes()
}

/// Decode an 8-bit `P5` or `P6` image.
pub fn decode_pnm(buf: &[u8]) -> Result<Image> {
    let header = parse_pnm_header(buf)?;
    if header.maxval != 255 {
        return Err(Error::format(2, format!("maxval {} unsupported, expected 255", header.maxval)));
    }
    let payload = pnm_payload(buf, &header, 1)?;
    let channels = if &header.magic == b"P6" { 3 } else { 1 };
    Image::new(header.width, header.height, channels, payload.to_vec())
}

pub fn encode_pnm(image: &Image) -> Vec<u8> {
    let magic = if image.channels == 3 { "P6" } else { "P5" };
    let mut out = write_pnm_header(magic, image.width, image.height, 255);
    out.extend_from_slice(&image.data);
    out
}

/// Decode a binary mask stored as `P5` with values {0, 255}.
pub fn decode_mask(buf: &[u8]) -> Result<SegmentationMask> {
    let image = decode_pnm(buf)?;
    if image.channels != 1 {
        return Err(Error::format(0, "mask must be a P5 gray image"));
    }
    let offset = buf.len() - image.data.len();
    let data = image
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| match v {
            0 => Ok(0),
            255 => Ok(1),
            other => Err(Error::format(offset + i, format!("mask value {other} not in {{0,255}}"))),
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok(SegmentationMask {
        width: image.width,
        height: image.height,
        data,
    })
}

pub fn encode_mask(mask: &SegmentationMask) -> Vec<u8> {
    let mut out = write_pnm_header("P5", mask.width, mask.height, 255);
    out.extend(mask.data.iter().map(|&v| if v != 0 { 255 } else { 0 }));
    out
}

/// Decode a ground-truth mask: 0 = background, 255 = void, anything else = foreground.
pub fn decode_gt_mask(buf: &[u8]) -> Result<GroundTruthMask> {
    let image = decode_pnm(buf)?;
    if image.channels != 1 {
        return Err(Error::format(0, "ground truth must be a P5 gray image"));
    }
    let labels = image
        .data
        .iter()
        .map(|&v| match v {
            0 => GtLabel::Background,
            255 => GtLabel::Void,
            _ => GtLabel::Foreground,
        })
        .collect();
    Ok(GroundTruthMask {
        width: image.width,
        height: image.height,
        labels,
    })
}

pub fn encode_gt_mask(gt: &GroundTruthMask) -> Vec<u8> {
    let mut out = write_pnm_header("P5", gt.width, gt.height, 255);
    out.extend(gt.labels.iter().map(|l| match l {
        GtLabel::Background => 0u8,
        GtLabel::Foreground => 1,
        GtLabel::Void => 255,
    }));
    out
}

/// Encode a 16-bit label map as `P5` with maxval 65535.
pub fn encode_pgm16(width: usize, height: usize, values: &[u16]) -> Vec<u8> {
    let mut out = write_pnm_header("P5", width, height, 65535);
    for v in values {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn decode_pgm16(buf: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    let header = parse_pnm_header(buf)?;
    if &header.magic != b"P5" || header.maxval != 65535 {
        return Err(Error::format(0, "expected P5 with maxval 65535"));
    }
    let payload = pnm_payload(buf, &header, 2)?;
    let values = payload
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok((header.width, header.height, values))
}

// ---------------------------------------------------------------------------
// .flo

const FLO_MAGIC: &[u8; 4] = b"PIEH";

pub fn decode_flo(buf: &[u8]) -> Result<FlowField> {
    if buf.len() < 12 {
        return Err(Error::Truncated {
            expected: 12,
            found: buf.len(),
        });
    }
    if &buf[0..4] != FLO_MAGIC {
        return Err(Error::format(0, "bad .flo magic, expected PIEH"));
    }
    let width = i32::from_le_bytes(buf[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(buf[8..12].try_into().unwrap());
    if width <= 0 {
        return Err(Error::format(4, format!("flow width {width} must be positive")));
    }
    if height <= 0 {
        return Err(Error::format(8, format!("flow height {height} must be positive")));
    }
    let (width, height) = (width as usize, height as usize);
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::format(4, "flow dimensions overflow"))?;
    let payload = &buf[12..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::format(12 + expected, "trailing bytes after flow data"));
    }
    let n = width * height;
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for (i, pair) in payload.chunks_exact(8).enumerate() {
        let du = f32::from_le_bytes(pair[0..4].try_into().unwrap());
        let dv = f32::from_le_bytes(pair[4..8].try_into().unwrap());
        if !du.is_finite() || !dv.is_finite() {
            return Err(Error::format(12 + 8 * i, "non-finite flow value"));
        }
        u.push(du);
        v.push(dv);
    }
    Ok(FlowField { width, height, u, v })
}

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * flow.u.len());
    out.extend_from_slice(FLO_MAGIC);
    out.extend_from_slice(&(flow.width as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height as i32).to_le_bytes());
    for (du, dv) in flow.u.iter().zip(&flow.v) {
        out.extend_from_slice(&du.to_le_bytes());
        out.extend_from_slice(&dv.to_le_bytes());
    }
    out
}

// ---------------------------------------------------------------------------
// TNSR

const TENSOR_MAGIC: &[u8; 4] = b"TNSR";

pub fn decode_tensor(buf: &[u8]) -> Result<Tensor> {
    if buf.len() < 8 {
        return Err(Error::Truncated {
            expected: 8,
            found: buf.len(),
        });
    }
    if &buf[0..4] != TENSOR_MAGIC {
        return Err(Error::format(0, "bad tensor magic, expected TNSR"));
    }
    let ndims = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    if !(1..=4).contains(&ndims) {
        return Err(Error::format(4, format!("ndims {ndims} not in 1..=4")));
    }
    let header_len = 8 + 4 * ndims;
    if buf.len() < header_len {
        return Err(Error::Truncated {
            expected: header_len,
            found: buf.len(),
        });
    }
    let dims: Vec<u32> = buf[8..header_len]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let expected = dims_product(&dims)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(8, "tensor dims product overflows"))?;
    let payload = &buf[header_len..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::format(header_len + expected, "payload longer than dims declare"));
    }
    let mut data = Vec::with_capacity(expected / 4);
    for (i, c) in payload.chunks_exact(4).enumerate() {
        let x = f32::from_le_bytes(c.try_into().unwrap());
        if !x.is_finite() {
            return Err(Error::format(header_len + 4 * i, "non-finite tensor value"));
        }
        data.push(x);
    }
    Ok(Tensor { dims, data })
}

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.dims.len() + 4 * t.data.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
    for d in &t.dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for x in &t.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

// ---------------------------------------------------------------------------
// path helpers

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_with<T>(path: &Path, decode: impl FnOnce(&[u8]) -> Result<T>) -> Result<T> {
    let bytes = read_bytes(path)?;
    decode(&bytes).map_err(|e| e.in_file(path))
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    read_with(path.as_ref(), decode_pnm)
}

pub fn write_image(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pnm(image))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<SegmentationMask> {
    read_with(path.as_ref(), decode_mask)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &SegmentationMask) -> Result<()> {
    write_bytes(path.as_ref(), &encode_mask(mask))
}

pub fn read_gt_mask(path: impl AsRef<Path>) -> Result<GroundTruthMask> {
    read_with(path.as_ref(), decode_gt_mask)
}

pub fn write_gt_mask(path: impl AsRef<Path>, gt: &GroundTruthMask) -> Result<()> {
    write_bytes(path.as_ref(), &encode_gt_mask(gt))
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    read_with(path.as_ref(), decode_flo)
}

pub fn write_flo(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    write_bytes(path.as_ref(), &encode_flo(flow))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    read_with(path.as_ref(), decode_tensor)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    write_bytes(path.as_ref(), &encode_tensor(t))
}
