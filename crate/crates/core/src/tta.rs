//! Dihedral-group test-time augmentation.

use std::fmt;

use rayon::prelude::*;

use crate::error::Result;
use crate::image::{to_float, FloatImage, Image};
use crate::runner::{infer_batch, ModelSpec};
use crate::scalar::Real;

/// One of the 8 symmetries of the square: an optional horizontal flip
/// followed by `rotation` quarter turns counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct D4Transform {
    rotation: u8,
    flip: bool,
}

impl D4Transform {
    pub const IDENTITY: D4Transform = D4Transform {
        rotation: 0,
        flip: false,
    };

    /// `rotation` is taken modulo 4.
    pub fn new(rotation: u8, flip: bool) -> Self {
        D4Transform {
            rotation: rotation % 4,
            flip,
        }
    }

    pub fn rotation(&self) -> u8 {
        self.rotation
    }

    pub fn flip(&self) -> bool {
        self.flip
    }

    /// All 8 elements, identity first.
    pub fn all() -> [D4Transform; 8] {
        let mut out = [D4Transform::IDENTITY; 8];
        for (k, t) in out.iter_mut().enumerate() {
            *t = D4Transform::new((k % 4) as u8, k >= 4);
        }
        out
    }

    /// Reflections are involutions; rotations invert to the opposite turn.
    pub fn inverse(&self) -> Self {
        if self.flip {
            *self
        } else {
            D4Transform::new((4 - self.rotation) % 4, false)
        }
    }

    /// The element equal to applying `self` first, then `then`.
    pub fn then(&self, then: D4Transform) -> Self {
        // R^b F^g R^a F^f = R^(b ± a) F^(g ^ f), since F R^a = R^-a F
        let a = self.rotation as i32;
        let b = then.rotation as i32;
        let rot = if then.flip { b - a } else { b + a };
        D4Transform::new(rot.rem_euclid(4) as u8, self.flip ^ then.flip)
    }

    pub fn apply(&self, img: &Image) -> Image {
        let (w, h, data) = self.apply_raw(img.width(), img.height(), img.channels(), img.samples());
        Image::from_parts(w, h, img.channels(), img.bit_depth(), data)
    }

    pub fn apply_float<T: Real>(&self, img: &FloatImage<T>) -> FloatImage<T> {
        let (w, h, data) = self.apply_raw(img.width(), img.height(), img.channels(), img.samples());
        FloatImage::from_parts(w, h, img.channels(), img.bit_depth(), data)
    }

    fn apply_raw<S: Copy>(
        &self,
        w: usize,
        h: usize,
        c: usize,
        src: &[S],
    ) -> (usize, usize, Vec<S>) {
        let (ow, oh) = if self.rotation % 2 == 1 {
            (h, w)
        } else {
            (w, h)
        };
        let mut out = Vec::with_capacity(src.len());
        for oy in 0..oh {
            for ox in 0..ow {
                // undo the rotation, then the flip, to find the source pixel
                let (mut x, y) = match self.rotation {
                    0 => (ox, oy),
                    1 => (w - 1 - oy, ox),
                    2 => (w - 1 - ox, h - 1 - oy),
                    _ => (oy, h - 1 - ox),
                };
                if self.flip {
                    x = w - 1 - x;
                }
                let base = (y * w + x) * c;
                out.extend_from_slice(&src[base..base + c]);
            }
        }
        (ow, oh, out)
    }
}

impl fmt::Display for D4Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rot{}{}",
            self.rotation * 90,
            if self.flip { "+flip" } else { "" }
        )
    }
}

/// Self-ensemble: super-resolve all 8 transformed copies, undo each
/// transform and average in float. The result is not quantized.
pub fn tta_infer<T: Real>(model: &ModelSpec, lr: &Image) -> Result<FloatImage<T>> {
    let group = D4Transform::all();
    let inputs: Vec<Image> = group.iter().map(|t| t.apply(lr)).collect();
    let outputs = infer_batch(model, &inputs)?;
    let restored: Vec<FloatImage<T>> = outputs
        .par_iter()
        .zip(group.par_iter())
        .map(|(sr, t)| to_float::<T>(&t.inverse().apply(sr)))
        .collect();
    Ok(average(&restored))
}

fn average<T: Real>(images: &[FloatImage<T>]) -> FloatImage<T> {
    let first = &images[0];
    let n = T::from_usize_exact(images.len());
    let data = (0..first.samples().len())
        .map(|i| {
            images
                .iter()
                .fold(T::zero(), |acc, im| acc + im.samples()[i])
                / n
        })
        .collect();
    FloatImage::from_parts(
        first.width(),
        first.height(),
        first.channels(),
        first.bit_depth(),
        data,
    )
}
