//! Single-channel PSNR, single-scale SSIM and the combined challenge score
//! `PSNR + 20 * SSIM`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{luma_float, quantize, FloatImage, Image};
use crate::scalar::Real;

/// PSNR reported for a zero-error pair.
pub const PSNR_CAP_DB: f64 = 100.0;
/// Weight of SSIM in the combined score.
pub const SSIM_WEIGHT: f64 = 20.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Border handling of the SSIM window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SsimPadding {
    /// Only windows fully inside the image; the map shrinks by 10 pixels.
    #[default]
    Valid,
    /// Mirror the border (edge sample repeated); the map keeps the image size.
    Symmetric,
}

impl SsimPadding {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(SsimPadding::Valid),
            "symmetric" => Ok(SsimPadding::Symmetric),
            other => Err(Error::InvalidArgument(format!(
                "unknown SSIM padding `{other}` (expected valid or symmetric)"
            ))),
        }
    }
}

/// Scoring conventions. The defaults score the full, unrounded luminance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub psnr_cap: f64,
    pub ssim_padding: SsimPadding,
    /// Pixels removed from every border before scoring.
    pub shave: usize,
    /// Round luminance to integers before scoring.
    pub round_luma: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            psnr_cap: PSNR_CAP_DB,
            ssim_padding: SsimPadding::Valid,
            shave: 0,
            round_luma: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub image_id: String,
    pub psnr: f64,
    pub ssim: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateScore {
    pub n_images: usize,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_score: f64,
}

impl AggregateScore {
    /// Arithmetic means in the given order.
    pub fn from_pairs(pairs: &[PairScore]) -> Self {
        let n = pairs.len();
        let mean = |f: fn(&PairScore) -> f64| {
            if n == 0 {
                0.0
            } else {
                pairs.iter().map(f).sum::<f64>() / n as f64
            }
        };
        AggregateScore {
            n_images: n,
            mean_psnr: mean(|p| p.psnr),
            mean_ssim: mean(|p| p.ssim),
            mean_score: mean(|p| p.score),
        }
    }
}

pub fn score(psnr: f64, ssim: f64) -> f64 {
    psnr + SSIM_WEIGHT * ssim
}

fn check_pair<T: Real>(a: &FloatImage<T>, b: &FloatImage<T>, what: &str) -> Result<()> {
    if a.channels() != 1 || b.channels() != 1 {
        return Err(Error::InvalidImage(format!(
            "{what} expects single-channel inputs, got {} and {} channels",
            a.channels(),
            b.channels()
        )));
    }
    if a.width() != b.width() || a.height() != b.height() || a.bit_depth() != b.bit_depth() {
        return Err(Error::ShapeMismatch {
            context: what.to_string(),
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// `10 log10(L^2 / MSE)` with the default 100 dB cap for identical inputs.
pub fn psnr<T: Real>(a: &FloatImage<T>, b: &FloatImage<T>) -> Result<f64> {
    psnr_capped(a, b, PSNR_CAP_DB)
}

pub fn psnr_capped<T: Real>(a: &FloatImage<T>, b: &FloatImage<T>, cap: f64) -> Result<f64> {
    check_pair(a, b, "psnr")?;
    let sse: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum();
    let mse = sse / a.samples().len() as f64;
    if mse == 0.0 {
        return Ok(cap);
    }
    let peak = a.bit_depth().peak() as f64;
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Normalized 1-D Gaussian; the 2-D window is its outer product.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= total);
    g
}

/// Mean SSIM with valid windowing.
pub fn ssim<T: Real>(a: &FloatImage<T>, b: &FloatImage<T>) -> Result<f64> {
    ssim_with(a, b, SsimPadding::Valid)
}

pub fn ssim_with<T: Real>(
    a: &FloatImage<T>,
    b: &FloatImage<T>,
    padding: SsimPadding,
) -> Result<f64> {
    let map = ssim_map(a, b, padding)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

/// Per-pixel SSIM map, row-major.
pub fn ssim_map<T: Real>(
    a: &FloatImage<T>,
    b: &FloatImage<T>,
    padding: SsimPadding,
) -> Result<Vec<f64>> {
    check_pair(a, b, "ssim")?;
    let (w, h) = (a.width(), a.height());
    let r = SSIM_WINDOW / 2;
    if padding == SsimPadding::Valid && (w < SSIM_WINDOW || h < SSIM_WINDOW) {
        return Err(Error::SmallerThanWindow {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let x: Vec<f64> = a.samples().iter().map(|v| v.to_f64_lossy()).collect();
    let y: Vec<f64> = b.samples().iter().map(|v| v.to_f64_lossy()).collect();
    let (x, y, pw, ph) = match padding {
        SsimPadding::Valid => (x, y, w, h),
        SsimPadding::Symmetric => (
            pad_symmetric(&x, w, h, r),
            pad_symmetric(&y, w, h, r),
            w + 2 * r,
            h + 2 * r,
        ),
    };
    let g = gaussian_window();
    let filt = |src: &[f64]| filter_valid(src, pw, ph, &g);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let (mu_x, mu_y) = (filt(&x), filt(&y));
    let (e_xx, e_yy, e_xy) = (filt(&xx), filt(&yy), filt(&xy));

    let peak = a.bit_depth().peak() as f64;
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    Ok((0..mu_x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = e_xx[i] - mx * mx;
            let var_y = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (var_x + var_y + c2))
        })
        .collect())
}

/// Separable valid-mode filtering: output is `(w - 10) x (h - 10)`.
fn filter_valid(src: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut mid = vec![0.0; ow * h];
    for yy in 0..h {
        let row = &src[yy * w..(yy + 1) * w];
        for xx in 0..ow {
            mid[yy * ow + xx] = g
                .iter()
                .zip(&row[xx..xx + SSIM_WINDOW])
                .map(|(k, v)| k * v)
                .sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for yy in 0..oh {
        for xx in 0..ow {
            out[yy * ow + xx] = g
                .iter()
                .enumerate()
                .map(|(k, gk)| gk * mid[(yy + k) * ow + xx])
                .sum();
        }
    }
    out
}

fn mirror_index(i: isize, n: usize) -> usize {
    // symmetric extension with period 2n: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

fn pad_symmetric(src: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    let mut out = Vec::with_capacity(pw * ph);
    for y in 0..ph {
        let sy = mirror_index(y as isize - r as isize, h);
        for x in 0..pw {
            out.push(src[sy * w + mirror_index(x as isize - r as isize, w)]);
        }
    }
    out
}

fn shave<T: Real>(img: &FloatImage<T>, border: usize) -> Result<FloatImage<T>> {
    if border == 0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    if 2 * border >= w || 2 * border >= h {
        return Err(Error::InvalidArgument(format!(
            "cannot shave {border} pixels from a {w}x{h} image"
        )));
    }
    let (ow, oh) = (w - 2 * border, h - 2 * border);
    let mut data = Vec::with_capacity(ow * oh);
    for y in border..h - border {
        data.extend_from_slice(&img.samples()[y * w + border..y * w + border + ow]);
    }
    FloatImage::new(ow, oh, 1, img.bit_depth(), data)
}

/// Score one SR/GT pair on luminance.
pub fn evaluate_pair(
    image_id: &str,
    sr: &Image,
    gt: &Image,
    cfg: &MetricConfig,
) -> Result<PairScore> {
    if sr.width() != gt.width() || sr.height() != gt.height() || sr.bit_depth() != gt.bit_depth() {
        return Err(Error::ShapeMismatch {
            context: format!("image `{image_id}` (sr vs gt)"),
            left: sr.shape(),
            right: gt.shape(),
        });
    }
    let luma = |img: &Image| -> Result<FloatImage<f64>> {
        let y = luma_float::<f64>(img);
        let y = if cfg.round_luma {
            crate::image::to_float(&quantize(&y)?)
        } else {
            y
        };
        shave(&y, cfg.shave)
    };
    let (a, b) = (luma(sr)?, luma(gt)?);
    let psnr = psnr_capped(&a, &b, cfg.psnr_cap)?;
    let ssim = ssim_with(&a, &b, cfg.ssim_padding)?;
    Ok(PairScore {
        image_id: image_id.to_string(),
        psnr,
        ssim,
        score: score(psnr, ssim),
    })
}
