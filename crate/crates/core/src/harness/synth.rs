use std::fmt;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::manifest::{build_manifest, Manifest, Phase};
use crate::error::{Error, Result};
use crate::image::{save_image, BitDepth, Image};
use crate::resample::{degrade_x4, SCALE};

/// Blur applied to white noise; attenuates content above the LR Nyquist rate.
const FIELD_SIGMA: f64 = 3.0;
/// Output range after contrast stretching, away from the clipping limits.
const STRETCH_LO: f64 = 16.0;
const STRETCH_HI: f64 = 239.0;

/// HR sizes and image counts of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolutionPlan(pub Vec<(usize, usize, usize)>);

impl ResolutionPlan {
    /// The five validation size classes at 10 images in total.
    pub fn default_plan() -> Self {
        ResolutionPlan(vec![
            (320, 256, 4),
            (120, 120, 2),
            (64, 64, 2),
            (256, 256, 1),
            (160, 128, 1),
        ])
    }

    /// `default` or a list like `320x256:3,64x64:2`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "default" {
            return Ok(Self::default_plan());
        }
        let bad =
            |item: &str| Error::InvalidArgument(format!("bad plan item `{item}` (expected WxH:N)"));
        let mut out = Vec::new();
        for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
            let (size, count) = item.split_once(':').ok_or_else(|| bad(item))?;
            let (w, h) = size.split_once(['x', 'X']).ok_or_else(|| bad(item))?;
            let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| bad(item));
            out.push((parse(w)?, parse(h)?, parse(count)?));
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("empty resolution plan".into()));
        }
        Ok(ResolutionPlan(out))
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&(_, _, n)| n).sum()
    }
}

impl fmt::Display for ResolutionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self
            .0
            .iter()
            .map(|(w, h, n)| format!("{w}x{h}:{n}"))
            .collect();
        f.write_str(&items.join(","))
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

fn blur(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut mid = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            mid[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * src[y * w + reflect(x as isize + k as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * mid[reflect(y as isize + k as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Band-limited noise field: blurred Gaussian noise stretched to a fixed range.
fn smooth_field(w: usize, h: usize, seed: u64, index: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let noise: Vec<f64> = (0..w * h)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let field = blur(&noise, w, h, &gaussian_kernel(FIELD_SIGMA));
    let lo = field.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let data = field
        .iter()
        .map(|v| {
            let s = STRETCH_LO + (v - lo) / span * (STRETCH_HI - STRETCH_LO);
            (s + 0.5).floor() as u16
        })
        .collect();
    Image::new(w, h, 1, BitDepth::Eight, data).expect("stretched field stays in 8-bit range")
}

/// Write seeded HR images to `out_dir/HR` and their x4 bicubic LR versions to
/// `out_dir/LR`, then return the validation manifest over them.
pub fn generate_synthetic_dataset(
    out_dir: impl AsRef<Path>,
    plan: &ResolutionPlan,
    seed: u64,
) -> Result<Manifest> {
    let out_dir = out_dir.as_ref();
    for &(w, h, _) in &plan.0 {
        if w == 0 || h == 0 || w % SCALE != 0 || h % SCALE != 0 {
            return Err(Error::NotDivisible {
                width: w,
                height: h,
                factor: SCALE,
            });
        }
    }
    if plan.total() == 0 {
        return Err(Error::InvalidArgument(
            "resolution plan contains no images".into(),
        ));
    }
    let hr_dir = out_dir.join("HR");
    let lr_dir = out_dir.join("LR");
    for d in [&hr_dir, &lr_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let jobs: Vec<(usize, usize, usize)> = plan
        .0
        .iter()
        .flat_map(|&(w, h, n)| std::iter::repeat_n((w, h), n))
        .enumerate()
        .map(|(i, (w, h))| (i, w, h))
        .collect();
    jobs.par_iter().try_for_each(|&(i, w, h)| -> Result<()> {
        let name = format!("syn_{i:04}_{w}x{h}.png");
        let hr = smooth_field(w, h, seed, i as u64);
        let lr = degrade_x4(&hr)?;
        save_image(&hr, hr_dir.join(&name))?;
        save_image(&lr, lr_dir.join(&name))
    })?;
    build_manifest(out_dir, Phase::Validation)
}
