use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::manifest::{Manifest, Phase};
use crate::error::{Error, Result};
use crate::image::load_image;
use crate::metrics::{evaluate_pair, AggregateScore, MetricConfig, PairScore, SsimPadding};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMeta {
    pub phase: Phase,
    pub scale: usize,
    pub n_images: usize,
    pub psnr_cap: f64,
    pub ssim_padding: SsimPadding,
    pub shave: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportAggregate {
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_score: f64,
}

/// Per-image and mean scores of one submission, in manifest order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmissionReport {
    pub meta: ReportMeta,
    pub per_image: Vec<PairScore>,
    pub aggregate: ReportAggregate,
}

impl SubmissionReport {
    pub fn from_pairs(
        per_image: Vec<PairScore>,
        phase: Phase,
        scale: usize,
        cfg: &MetricConfig,
    ) -> Self {
        let agg = AggregateScore::from_pairs(&per_image);
        SubmissionReport {
            meta: ReportMeta {
                phase,
                scale,
                n_images: per_image.len(),
                psnr_cap: cfg.psnr_cap,
                ssim_padding: cfg.ssim_padding,
                shave: cfg.shave,
            },
            per_image,
            aggregate: ReportAggregate {
                mean_psnr: agg.mean_psnr,
                mean_ssim: agg.mean_ssim,
                mean_score: agg.mean_score,
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// `image_id,psnr,ssim,score` at full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id,psnr,ssim,score\n");
        for p in &self.per_image {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                csv_field(&p.image_id),
                p.psnr,
                p.ssim,
                p.score
            );
        }
        out
    }

    /// Aligned table rounded to 4 decimals, with a trailing mean row.
    pub fn to_text(&self) -> String {
        let width = self
            .per_image
            .iter()
            .map(|p| p.image_id.len())
            .max()
            .unwrap_or(0)
            .max(8);
        let mut out = format!(
            "{:<width$}  {:>9}  {:>7}  {:>9}\n",
            "image_id", "psnr", "ssim", "score"
        );
        for p in &self.per_image {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.4}  {:>7.4}  {:>9.4}",
                p.image_id, p.psnr, p.ssim, p.score
            );
        }
        let a = &self.aggregate;
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.4}  {:>7.4}  {:>9.4}",
            format!("mean ({})", self.meta.n_images),
            a.mean_psnr,
            a.mean_ssim,
            a.mean_score
        );
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn sr_path(sr_dir: &Path, image_id: &str) -> Option<PathBuf> {
    ["png", "PNG"]
        .iter()
        .map(|ext| sr_dir.join(format!("{image_id}.{ext}")))
        .find(|p| p.is_file())
}

/// Score `sr_dir/<image_id>.png` against each HR image of the manifest.
pub fn score_submission(
    sr_dir: impl AsRef<Path>,
    manifest: &Manifest,
    cfg: &MetricConfig,
) -> Result<SubmissionReport> {
    let sr_dir = sr_dir.as_ref();
    if !sr_dir.is_dir() {
        let err = std::io::Error::new(std::io::ErrorKind::NotFound, "SR directory not found");
        return Err(Error::io(sr_dir, err));
    }
    let mut jobs = Vec::with_capacity(manifest.len());
    let mut missing = Vec::new();
    for e in &manifest.entries {
        let hr = e.hr_path.clone().ok_or_else(|| {
            Error::Manifest(format!("`{}` has no HR image to score against", e.image_id))
        })?;
        match sr_path(sr_dir, &e.image_id) {
            Some(sr) => jobs.push((e.image_id.as_str(), sr, hr)),
            None => missing.push(e.image_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingSubmission(missing.join("`, `")));
    }
    let per_image = jobs
        .par_iter()
        .map(|(id, sr, hr)| {
            let sr = load_image(sr).map_err(|e| Error::for_image(*id, e))?;
            let gt = load_image(hr).map_err(|e| Error::for_image(*id, e))?;
            evaluate_pair(id, &sr, &gt, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubmissionReport::from_pairs(
        per_image,
        manifest.phase,
        manifest.scale,
        cfg,
    ))
}
