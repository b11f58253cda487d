//! Core 2-D grid types and image file I/O.
//!
//! Pixel convention: (row, col), origin at the top-left, row-major storage.
//! Grayscale intensities are canonically in [0, 1] after loading.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// 2-D grid of real intensities: images, labels, network responses.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage<S> {
    width: usize,
    height: usize,
    data: Vec<S>,
}

impl<S: Scalar> GrayImage<S> {
    pub fn zeros(width: usize, height: usize) -> Self {
        GrayImage {
            width,
            height,
            data: vec![S::zero(); width * height],
        }
    }

    /// Builds an image from row-major data, validating the length and
    /// finiteness invariants.
    pub fn from_vec(width: usize, height: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(format!(
                "data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(GrayImage {
            width,
            height,
            data,
        })
    }

    pub(crate) fn from_vec_unchecked(width: usize, height: usize, data: Vec<S>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        GrayImage {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> S {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: S) {
        self.data[row * self.width + col] = v;
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn row(&self, row: usize) -> &[S] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn max_value(&self) -> S {
        self.data.iter().fold(S::zero(), |a, &v| a.max(v))
    }

    pub fn min_value(&self) -> S {
        self.data
            .iter()
            .fold(S::infinity(), |a, &v| a.min(v))
            .min(S::infinity())
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> GrayImage<T> {
        GrayImage::from_vec_unchecked(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Converts to another scalar type (f32 <-> f64).
    pub fn cast<T: Scalar>(&self) -> GrayImage<T> {
        self.map(|v| T::from_f64c(v.to_f64c()))
    }
}

/// 2-D grid of booleans: binarized skeletons, masks, thinned predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        BinaryImage {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(format!(
                "data length {} != {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(BinaryImage {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    /// Out-of-bounds coordinates read as false.
    #[inline]
    pub fn get_checked(&self, row: isize, col: isize) -> bool {
        if row < 0 || col < 0 || row as usize >= self.height || col as usize >= self.width {
            false
        } else {
            self.data[row as usize * self.width + col as usize]
        }
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.data[row * self.width + col] = v;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn iter_true(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / w, i % w))
    }

    /// 0/1 real view of the mask.
    pub fn to_gray<S: Scalar>(&self) -> GrayImage<S> {
        GrayImage::from_vec_unchecked(
            self.width,
            self.height,
            self.data
                .iter()
                .map(|&b| if b { S::one() } else { S::zero() })
                .collect(),
        )
    }
}

/// Divides by the maximum when it is positive; an all-zero image passes
/// through unchanged. Errors on negative input.
pub fn normalize<S: Scalar>(img: &GrayImage<S>) -> Result<GrayImage<S>> {
    if let Some(index) = img.data.iter().position(|v| *v < S::zero()) {
        return Err(Error::NegativeInput {
            index,
            value: img.data[index].to_f64c(),
        });
    }
    let max = img.max_value();
    if max <= S::zero() {
        return Ok(img.clone());
    }
    Ok(GrayImage::from_vec_unchecked(
        img.width,
        img.height,
        img.data.iter().map(|&v| v / max).collect(),
    ))
}

// ---------------------------------------------------------------------------
// File I/O: PNG (8/16-bit gray or RGB) and PGM (P5) read; 8-bit gray PNG write.
// ---------------------------------------------------------------------------

/// Loads a PNG or PGM raster as a grayscale image scaled into [0, 1] by the
/// format's max code value. RGB inputs are converted by channel average.
pub fn load_gray<S: Scalar>(path: impl AsRef<Path>) -> Result<GrayImage<S>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut file = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 2];
    file.read_exact(&mut magic)?;
    let mut rest = Vec::new();
    file.read_to_end(&mut rest)?;
    let mut bytes = magic.to_vec();
    bytes.extend_from_slice(&rest);

    if magic == *b"P5" {
        decode_pgm(&bytes)
    } else if bytes.len() >= 8 && bytes[..8] == [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a] {
        decode_png(&bytes)
    } else {
        Err(Error::UnsupportedFormat(format!(
            "{}: not a PNG or P5 PGM file",
            path.display()
        )))
    }
}

fn decode_png<S: Scalar>(bytes: &[u8]) -> Result<GrayImage<S>> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::UnsupportedFormat(format!("png: {e}")))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::UnsupportedFormat(format!("png: {e}")))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];

    use png::{BitDepth, ColorType};
    let pixels: Vec<S> = match (info.color_type, info.bit_depth) {
        (ColorType::Grayscale, BitDepth::Eight) => data
            .iter()
            .map(|&v| S::from_f64c(v as f64 / 255.0))
            .collect(),
        (ColorType::Grayscale, BitDepth::Sixteen) => data
            .chunks_exact(2)
            .map(|c| S::from_f64c(u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0))
            .collect(),
        (ColorType::Rgb, BitDepth::Eight) => data
            .chunks_exact(3)
            .map(|c| {
                let mean = (c[0] as f64 + c[1] as f64 + c[2] as f64) / 3.0;
                S::from_f64c(mean / 255.0)
            })
            .collect(),
        (ColorType::Rgb, BitDepth::Sixteen) => data
            .chunks_exact(6)
            .map(|c| {
                let r = u16::from_be_bytes([c[0], c[1]]) as f64;
                let g = u16::from_be_bytes([c[2], c[3]]) as f64;
                let b = u16::from_be_bytes([c[4], c[5]]) as f64;
                S::from_f64c((r + g + b) / 3.0 / 65535.0)
            })
            .collect(),
        (ct, bd) => {
            return Err(Error::UnsupportedFormat(format!(
                "png color type {ct:?} / bit depth {bd:?}"
            )))
        }
    };
    GrayImage::from_vec(w, h, pixels)
}

fn decode_pgm<S: Scalar>(bytes: &[u8]) -> Result<GrayImage<S>> {
    let mut pos = 2usize; // past "P5"
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        *field = pgm_next_int(bytes, &mut pos)?;
    }
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::UnsupportedFormat(format!("pgm maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let need = w * h * bytes_per;
    if bytes.len() < pos + need {
        return Err(Error::UnsupportedFormat("pgm: truncated raster".into()));
    }
    let raster = &bytes[pos..pos + need];
    let pixels: Vec<S> = if bytes_per == 1 {
        raster
            .iter()
            .map(|&v| S::from_f64c(v as f64 / maxval as f64))
            .collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| S::from_f64c(u16::from_be_bytes([c[0], c[1]]) as f64 / maxval as f64))
            .collect()
    };
    GrayImage::from_vec(w, h, pixels)
}

fn pgm_next_int(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    // Skip whitespace and '#' comment lines.
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::UnsupportedFormat("pgm: malformed header".into()));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::UnsupportedFormat("pgm: malformed header".into()))
}

/// Writes an 8-bit grayscale PNG; codes are round(v * 255) with round-half-up.
/// Errors if any value falls outside [0, 1].
pub fn save_gray<S: Scalar>(img: &GrayImage<S>, path: impl AsRef<Path>) -> Result<()> {
    let mut codes = Vec::with_capacity(img.data.len());
    for (index, &v) in img.data.iter().enumerate() {
        let v = v.to_f64c();
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::OutOfRange { index, value: v });
        }
        codes.push((v * 255.0 + 0.5).floor() as u8);
    }
    write_png(path.as_ref(), img.width, img.height, &codes, png::ColorType::Grayscale)
}

/// Writes three channel planes as an 8-bit RGB PNG (used for heatmap export).
pub fn save_rgb<S: Scalar>(channels: &[GrayImage<S>; 3], path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = channels[0].dims();
    for c in channels.iter() {
        if c.dims() != (w, h) {
            return Err(Error::shape("rgb channel dims differ"));
        }
    }
    let mut codes = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        for c in channels.iter() {
            let v = c.as_slice()[i].to_f64c();
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange { index: i, value: v });
            }
            codes.push((v * 255.0 + 0.5).floor() as u8);
        }
    }
    write_png(path.as_ref(), w, h, &codes, png::ColorType::Rgb)
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    data: &[u8],
    color: png::ColorType,
) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let mut encoder = png::Encoder::new(&mut w, width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::UnsupportedFormat(format!("png encode: {e}")))?;
    writer
        .write_image_data(data)
        .map_err(|e| Error::UnsupportedFormat(format!("png encode: {e}")))?;
    writer
        .finish()
        .map_err(|e| Error::UnsupportedFormat(format!("png encode: {e}")))?;
    w.flush()?;
    Ok(())
}
