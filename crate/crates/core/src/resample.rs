//! Separable classical resampling, including the bicubic x4 degradation.
//!
//! Coordinates follow the half-pixel convention
//! `src = (dst + 0.5) * in / out - 0.5`, borders are clamped to the edge
//! sample, and per-pixel weights are renormalized to sum to one. Kernel
//! arguments are formed from an exact integer numerator so that mirrored
//! output pixels see exactly mirrored weights; with the pairwise tap
//! summation in [`crate::scalar`] this makes the output commute bit-exactly
//! with flips.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{FloatImage, Image};
use crate::scalar::Real;

/// Default Keys coefficient (Catmull-Rom).
pub const DEFAULT_BICUBIC_A: f64 = -0.5;

/// Degradation and baseline upscale factor of the challenge.
pub const SCALE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Filter {
    Nearest,
    Bilinear,
    /// Keys cubic convolution with coefficient `a < 0`.
    Bicubic {
        a: f64,
    },
    Lanczos3,
}

impl Default for Filter {
    fn default() -> Self {
        Filter::bicubic()
    }
}

impl Filter {
    pub fn bicubic() -> Self {
        Filter::Bicubic {
            a: DEFAULT_BICUBIC_A,
        }
    }

    pub fn bicubic_with(a: f64) -> Result<Self> {
        if a.is_finite() && a < 0.0 {
            Ok(Filter::Bicubic { a })
        } else {
            Err(Error::InvalidArgument(format!(
                "bicubic coefficient must be negative, got {a}"
            )))
        }
    }

    /// Kernel half-width in source samples at unit scale.
    pub fn support(&self) -> f64 {
        match self {
            Filter::Nearest => 0.5,
            Filter::Bilinear => 1.0,
            Filter::Bicubic { .. } => 2.0,
            Filter::Lanczos3 => 3.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Filter::Nearest => "nearest",
            Filter::Bilinear => "bilinear",
            Filter::Bicubic { .. } => "bicubic",
            Filter::Lanczos3 => "lanczos3",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "nearest" | "point" => Ok(Filter::Nearest),
            "bilinear" | "linear" | "triangle" => Ok(Filter::Bilinear),
            "bicubic" | "cubic" | "catmull-rom" => Ok(Filter::bicubic()),
            "lanczos3" | "lanczos" => Ok(Filter::Lanczos3),
            other => Err(Error::InvalidArgument(format!("unknown filter `{other}`"))),
        }
    }

    /// Kernel value at signed offset `x` (unit scale). Symmetric in `x`.
    pub fn weight<T: Real>(&self, x: T) -> T {
        let ax = x.abs();
        match *self {
            // Closed box: both neighbours at exactly half a sample get weight,
            // which keeps the kernel symmetric.
            Filter::Nearest => {
                if ax <= T::lit(0.5) {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Filter::Bilinear => (T::one() - ax).max(T::zero()),
            Filter::Bicubic { a } => bicubic_weight(ax, T::lit(a)),
            Filter::Lanczos3 => lanczos3(ax),
        }
    }
}

/// Keys cubic convolution kernel.
pub fn bicubic_weight<T: Real>(x: T, a: T) -> T {
    let ax = x.abs();
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    if ax <= T::one() {
        ((a + two) * ax - (a + three)) * ax * ax + T::one()
    } else if ax < two {
        ((a * ax - T::lit(5.0) * a) * ax + T::lit(8.0) * a) * ax - T::lit(4.0) * a
    } else {
        T::zero()
    }
}

fn lanczos3<T: Real>(ax: T) -> T {
    let three = T::lit(3.0);
    if ax.is_zero() {
        return T::one();
    }
    if ax >= three || ax.fract().is_zero() {
        return T::zero();
    }
    let pi = T::lit(std::f64::consts::PI);
    let px = pi * ax;
    three * px.sin() * (px / three).sin() / (px * px)
}

/// Normalized taps of one output sample along one axis.
#[derive(Debug, Clone)]
struct Taps<T> {
    index: Vec<usize>,
    weight: Vec<T>,
}

impl<T: Real> Taps<T> {
    /// Weighted sum, pairing taps from both ends inwards.
    #[inline]
    fn apply(&self, fetch: impl Fn(usize) -> T) -> T {
        let n = self.index.len();
        let mut acc = T::zero();
        for k in 0..n / 2 {
            let m = n - 1 - k;
            acc = acc
                + (self.weight[k] * fetch(self.index[k]) + self.weight[m] * fetch(self.index[m]));
        }
        if n % 2 == 1 {
            acc = acc + self.weight[n / 2] * fetch(self.index[n / 2]);
        }
        acc
    }
}

fn axis_taps<T: Real>(
    in_len: usize,
    out_len: usize,
    filter: Filter,
    antialias: bool,
) -> Vec<Taps<T>> {
    let shrink = antialias && out_len < in_len;
    let (n_in, n_out) = (in_len as i64, out_len as i64);
    // kernel argument = numerator / denom, exactly negated for mirrored pixels
    let denom = if shrink { 2 * n_in } else { 2 * n_out };
    let stretch = if shrink {
        in_len as f64 / out_len as f64
    } else {
        1.0
    };
    let radius = filter.support() * stretch;
    let denom_t = T::lit(denom as f64);

    (0..n_out)
        .map(|dst| {
            let src = ((2 * dst + 1) * n_in - n_out) as f64 / (2 * n_out) as f64;
            let lo = (src - radius).floor() as i64 - 1;
            let hi = (src + radius).ceil() as i64 + 1;
            let mut index = Vec::new();
            let mut weight = Vec::new();
            for i in lo..=hi {
                let num = 2 * i * n_out - (2 * dst + 1) * n_in + n_out;
                let w = filter.weight(T::lit(num as f64) / denom_t);
                if !w.is_zero() {
                    index.push(i.clamp(0, n_in - 1) as usize);
                    weight.push(w);
                }
            }
            let total = crate::scalar::mirror_sum(&weight);
            if total.is_zero() || weight.is_empty() {
                let nearest = src.round().clamp(0.0, (n_in - 1) as f64) as usize;
                return Taps {
                    index: vec![nearest],
                    weight: vec![T::one()],
                };
            }
            for w in &mut weight {
                *w = *w / total;
            }
            Taps { index, weight }
        })
        .collect()
}

/// Resample in the float domain without quantizing.
pub fn resize_float<T: Real>(
    img: &FloatImage<T>,
    out_w: usize,
    out_h: usize,
    filter: Filter,
    antialias: bool,
) -> Result<FloatImage<T>> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidArgument(format!(
            "output size {out_w}x{out_h} must be at least 1x1"
        )));
    }
    if let Filter::Bicubic { a } = filter {
        Filter::bicubic_with(a)?;
    }
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let src = img.samples();

    let htaps = axis_taps::<T>(w, out_w, filter, antialias);
    let mut mid = vec![T::zero(); out_w * h * c];
    mid.par_chunks_mut(out_w * c)
        .zip(src.par_chunks(w * c))
        .for_each(|(out_row, in_row)| {
            for (x, taps) in htaps.iter().enumerate() {
                for ch in 0..c {
                    out_row[x * c + ch] = taps.apply(|i| in_row[i * c + ch]);
                }
            }
        });

    let vtaps = axis_taps::<T>(h, out_h, filter, antialias);
    let row_len = out_w * c;
    let mut out = vec![T::zero(); out_w * out_h * c];
    out.par_chunks_mut(row_len)
        .zip(vtaps.par_iter())
        .for_each(|(out_row, taps)| {
            for (j, v) in out_row.iter_mut().enumerate() {
                *v = taps.apply(|y| mid[y * row_len + j]);
            }
        });

    Ok(FloatImage::from_parts(
        out_w,
        out_h,
        c,
        img.bit_depth(),
        out,
    ))
}

/// Fractional bits of the fixed-point weights used by [`resize`].
const WEIGHT_BITS: u32 = 30;

struct FixedTaps {
    index: Vec<usize>,
    weight: Vec<i64>,
    total: i64,
}

fn fixed_taps(in_len: usize, out_len: usize, filter: Filter, antialias: bool) -> Vec<FixedTaps> {
    let one = (1i64 << WEIGHT_BITS) as f64;
    axis_taps::<f64>(in_len, out_len, filter, antialias)
        .into_iter()
        .map(|t| {
            let weight: Vec<i64> = t.weight.iter().map(|w| (w * one).round() as i64).collect();
            FixedTaps {
                total: weight.iter().sum(),
                index: t.index,
                weight,
            }
        })
        .collect()
}

/// Separable resize of an integer image.
///
/// Weights are rounded to fixed point and both passes accumulate exactly in
/// integers; the result is divided by the product of the weight sums and
/// rounded half up once. Because no intermediate rounding depends on the
/// order of the passes, resizing commutes bit-exactly with flips and
/// quarter turns.
pub fn resize(
    img: &Image,
    out_w: usize,
    out_h: usize,
    filter: Filter,
    antialias: bool,
) -> Result<Image> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidArgument(format!(
            "output size {out_w}x{out_h} must be at least 1x1"
        )));
    }
    if let Filter::Bicubic { a } = filter {
        Filter::bicubic_with(a)?;
    }
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let src = img.samples();

    let htaps = fixed_taps(w, out_w, filter, antialias);
    let mut mid = vec![0i64; out_w * h * c];
    mid.par_chunks_mut(out_w * c)
        .zip(src.par_chunks(w * c))
        .for_each(|(out_row, in_row)| {
            for (x, taps) in htaps.iter().enumerate() {
                for ch in 0..c {
                    out_row[x * c + ch] = taps
                        .index
                        .iter()
                        .zip(&taps.weight)
                        .map(|(&i, &wt)| wt * in_row[i * c + ch] as i64)
                        .sum();
                }
            }
        });

    let vtaps = fixed_taps(h, out_h, filter, antialias);
    let row_len = out_w * c;
    let peak = img.bit_depth().peak() as i128;
    let mut out = vec![0u16; out_w * out_h * c];
    out.par_chunks_mut(row_len)
        .zip(vtaps.par_iter())
        .for_each(|(out_row, taps)| {
            for (j, v) in out_row.iter_mut().enumerate() {
                let acc: i128 = taps
                    .index
                    .iter()
                    .zip(&taps.weight)
                    .map(|(&y, &wt)| wt as i128 * mid[y * row_len + j] as i128)
                    .sum();
                let hsum = htaps[j / c].total as i128;
                let d = hsum * taps.total as i128;
                let rounded = (2 * acc + d).div_euclid(2 * d);
                *v = rounded.clamp(0, peak) as u16;
            }
        });

    Image::new(out_w, out_h, c, img.bit_depth(), out)
}

/// Bicubic (`a = -0.5`) antialiased x4 downscale used to build LR inputs.
pub fn degrade_x4(hr: &Image) -> Result<Image> {
    if !hr.width().is_multiple_of(SCALE) || !hr.height().is_multiple_of(SCALE) {
        return Err(Error::NotDivisible {
            width: hr.width(),
            height: hr.height(),
            factor: SCALE,
        });
    }
    resize(
        hr,
        hr.width() / SCALE,
        hr.height() / SCALE,
        Filter::bicubic(),
        true,
    )
}

/// Classical x4 upscale, no antialiasing.
pub fn upscale_x4(lr: &Image, filter: Filter) -> Result<Image> {
    resize(lr, lr.width() * SCALE, lr.height() * SCALE, filter, false)
}

/// Classical x4 upscale kept in the float domain.
pub fn upscale_x4_float<T: Real>(lr: &FloatImage<T>, filter: Filter) -> Result<FloatImage<T>> {
    resize_float(lr, lr.width() * SCALE, lr.height() * SCALE, filter, false)
}
