//! Integer rasters, PNG I/O and the float working domain.

use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use crate::error::{Error, Result, Shape};
use crate::scalar::Real;

/// Sample precision of an [`Image`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn bits(self) -> u8 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }

    /// Largest representable sample, `2^bits - 1`.
    pub fn peak(self) -> u16 {
        match self {
            BitDepth::Eight => u8::MAX as u16,
            BitDepth::Sixteen => u16::MAX,
        }
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(Error::InvalidImage(format!(
                "bit depth {other} (expected 8 or 16)"
            ))),
        }
    }
}

/// Row-major, channel-interleaved integer raster with 1 or 3 channels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    bit_depth: BitDepth,
    data: Vec<u16>,
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        bit_depth: BitDepth,
        data: Vec<u16>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "empty raster {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "{channels} channels (expected 1 or 3)"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "buffer holds {} samples, {width}x{height}x{channels} needs {}",
                data.len(),
                width * height * channels
            )));
        }
        let peak = bit_depth.peak();
        if let Some(bad) = data.iter().find(|&&s| s > peak) {
            return Err(Error::InvalidImage(format!(
                "sample {bad} exceeds {}-bit range",
                bit_depth.bits()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            bit_depth,
            data,
        })
    }

    /// Single-channel image filled with `value`.
    pub fn filled(width: usize, height: usize, bit_depth: BitDepth, value: u16) -> Result<Self> {
        Image::new(width, height, 1, bit_depth, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bit_depth(&self) -> BitDepth {
        self.bit_depth
    }

    pub fn samples(&self) -> &[u16] {
        &self.data
    }

    pub fn into_samples(self) -> Vec<u16> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u16 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn shape(&self) -> Shape {
        Shape {
            width: self.width,
            height: self.height,
            channels: self.channels,
            bit_depth: self.bit_depth.bits(),
        }
    }

    // Used by geometric ops that already guarantee the invariants.
    pub(crate) fn from_parts(
        width: usize,
        height: usize,
        channels: usize,
        bit_depth: BitDepth,
        data: Vec<u16>,
    ) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Image {
            width,
            height,
            channels,
            bit_depth,
            data,
        }
    }
}

/// Unclamped real-valued raster in the `[0, L]` domain of its source bit depth.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage<T> {
    width: usize,
    height: usize,
    channels: usize,
    bit_depth: BitDepth,
    data: Vec<T>,
}

impl<T: Real> FloatImage<T> {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        bit_depth: BitDepth,
        data: Vec<T>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "empty raster {width}x{height}"
            )));
        }
        if channels == 0 {
            return Err(Error::InvalidImage("zero channels".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "buffer holds {} samples, {width}x{height}x{channels} needs {}",
                data.len(),
                width * height * channels
            )));
        }
        Ok(FloatImage {
            width,
            height,
            channels,
            bit_depth,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bit_depth(&self) -> BitDepth {
        self.bit_depth
    }

    /// Peak value `L` of the value domain.
    pub fn peak(&self) -> T {
        T::from_u16(self.bit_depth.peak()).expect("u16 fits every Real")
    }

    pub fn samples(&self) -> &[T] {
        &self.data
    }

    pub fn into_samples(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn shape(&self) -> Shape {
        Shape {
            width: self.width,
            height: self.height,
            channels: self.channels,
            bit_depth: self.bit_depth.bits(),
        }
    }

    pub(crate) fn from_parts(
        width: usize,
        height: usize,
        channels: usize,
        bit_depth: BitDepth,
        data: Vec<T>,
    ) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        FloatImage {
            width,
            height,
            channels,
            bit_depth,
            data,
        }
    }
}

/// Round half up, then clamp into `[0, peak]`. NaN maps to 0.
pub fn quantize_sample<T: Real>(v: T, peak: u16) -> u16 {
    let r = (v + T::lit(0.5)).floor();
    if r.is_nan() || r <= T::zero() {
        0
    } else if r >= T::from_u16(peak).unwrap() {
        peak
    } else {
        r.to_u16().unwrap_or(0)
    }
}

/// Exact conversion into the float domain.
pub fn to_float<T: Real>(img: &Image) -> FloatImage<T> {
    let data = img.data.iter().map(|&s| T::from_u16(s).unwrap()).collect();
    FloatImage::from_parts(img.width, img.height, img.channels, img.bit_depth, data)
}

/// Round-half-up and clamp every sample back into an integer raster.
///
/// Fails only if the float image has a channel count other than 1 or 3.
pub fn quantize<T: Real>(f: &FloatImage<T>) -> Result<Image> {
    if f.channels != 1 && f.channels != 3 {
        return Err(Error::InvalidImage(format!(
            "{} channels (expected 1 or 3)",
            f.channels
        )));
    }
    let peak = f.bit_depth.peak();
    let data = f.data.iter().map(|&v| quantize_sample(v, peak)).collect();
    Ok(Image::from_parts(
        f.width,
        f.height,
        f.channels,
        f.bit_depth,
        data,
    ))
}

/// BT.601 luminance weights, in thousandths.
const LUMA_WEIGHTS: [u32; 3] = [299, 587, 114];

/// Integer luminance for export: `round(0.299R + 0.587G + 0.114B)` with
/// round-half-up. Single-channel images are returned unchanged.
pub fn to_luma(img: &Image) -> Image {
    if img.channels == 1 {
        return img.clone();
    }
    let peak = img.bit_depth.peak() as u32;
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| {
            let acc: u32 = px
                .iter()
                .zip(LUMA_WEIGHTS)
                .map(|(&s, w)| s as u32 * w)
                .sum();
            ((acc + 500) / 1000).min(peak) as u16
        })
        .collect();
    Image::from_parts(img.width, img.height, 1, img.bit_depth, data)
}

/// Unrounded luminance in the float domain; the input of every metric.
///
/// The weighted sum is formed on integers and divided once, so a pixel with
/// `R == G == B == v` maps to exactly `v`.
pub fn luma_float<T: Real>(img: &Image) -> FloatImage<T> {
    if img.channels == 1 {
        return to_float(img);
    }
    let thousand = T::lit(1000.0);
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| {
            let acc: u32 = px
                .iter()
                .zip(LUMA_WEIGHTS)
                .map(|(&s, w)| s as u32 * w)
                .sum();
            T::from_u32(acc).unwrap() / thousand
        })
        .collect();
    FloatImage::from_parts(img.width, img.height, 1, img.bit_depth, data)
}

/// Luminance of a float image, `0.299R + 0.587G + 0.114B`.
pub fn luma_of_float<T: Real>(img: &FloatImage<T>) -> FloatImage<T> {
    if img.channels == 1 {
        return img.clone();
    }
    let w: Vec<T> = LUMA_WEIGHTS.iter().map(|&w| T::lit(w as f64)).collect();
    let thousand = T::lit(1000.0);
    let data = img
        .data
        .chunks_exact(img.channels)
        .map(|px| (px[0] * w[0] + px[1] * w[1] + px[2] * w[2]) / thousand)
        .collect();
    FloatImage::from_parts(img.width, img.height, 1, img.bit_depth, data)
}

fn describe_layout(color: png::ColorType, depth: png::BitDepth) -> Option<String> {
    use png::ColorType::*;
    let bits = depth as u8;
    match (color, bits) {
        (Grayscale, 8) | (Grayscale, 16) | (Rgb, 8) | (Rgb, 16) => None,
        (Indexed, _) => Some("palette (indexed color)".into()),
        (GrayscaleAlpha, _) | (Rgba, _) => Some("alpha channel".into()),
        (Grayscale, b) => Some(format!("{b}-bit grayscale")),
        (Rgb, b) => Some(format!("{b}-bit RGB")),
    }
}

/// Decode a non-interlaced grayscale or RGB PNG with 8 or 16 bits per sample.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes).map_err(|e| match e {
        Error::Decode { message, .. } => Error::Decode {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Decode PNG bytes held in memory. Same rules as [`load_image`].
pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let decode_err = |e: png::DecodingError| Error::Decode {
        path: "<memory>".into(),
        message: e.to_string(),
    };
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(decode_err)?;
    let info = reader.info();
    if let Some(layout) = describe_layout(info.color_type, info.bit_depth) {
        return Err(Error::UnsupportedFormat(layout));
    }
    if info.trns.is_some() {
        return Err(Error::UnsupportedFormat(
            "alpha channel (tRNS transparency)".into(),
        ));
    }
    if info.interlaced {
        return Err(Error::UnsupportedFormat("interlaced (Adam7)".into()));
    }
    let channels = if info.color_type == png::ColorType::Rgb {
        3
    } else {
        1
    };
    let bit_depth = if info.bit_depth == png::BitDepth::Sixteen {
        BitDepth::Sixteen
    } else {
        BitDepth::Eight
    };
    let width = info.width as usize;
    let height = info.height as usize;
    let size = reader.output_buffer_size().ok_or_else(|| Error::Decode {
        path: "<memory>".into(),
        message: "image too large".into(),
    })?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(decode_err)?;
    let row_bytes = width * channels * (bit_depth.bits() as usize / 8);
    let mut data = Vec::with_capacity(width * height * channels);
    for row in buf.chunks(frame.line_size).take(height) {
        let row = &row[..row_bytes];
        match bit_depth {
            BitDepth::Eight => data.extend(row.iter().map(|&b| b as u16)),
            BitDepth::Sixteen => data.extend(
                row.chunks_exact(2)
                    .map(|p| u16::from_be_bytes([p[0], p[1]])),
            ),
        }
    }
    Image::new(width, height, channels, bit_depth, data)
}

/// Encode `img` as PNG bytes.
pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_png(img, &mut out).map_err(|e| Error::Encode {
        path: "<memory>".into(),
        message: e.to_string(),
    })?;
    Ok(out)
}

fn write_png<W: std::io::Write>(img: &Image, w: W) -> std::result::Result<(), png::EncodingError> {
    let mut encoder = png::Encoder::new(w, img.width as u32, img.height as u32);
    encoder.set_color(if img.channels == 3 {
        png::ColorType::Rgb
    } else {
        png::ColorType::Grayscale
    });
    let raw: Vec<u8> = match img.bit_depth {
        BitDepth::Eight => {
            encoder.set_depth(png::BitDepth::Eight);
            img.data.iter().map(|&s| s as u8).collect()
        }
        BitDepth::Sixteen => {
            encoder.set_depth(png::BitDepth::Sixteen);
            img.data.iter().flat_map(|s| s.to_be_bytes()).collect()
        }
    };
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&raw)?;
    writer.finish()
}

pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_png(img, BufWriter::new(file)).map_err(|e| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::Encode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}
