use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::manifest::Phase;
use super::report::SubmissionReport;
use crate::ensemble::{fuse, EnsembleWeights};
use crate::error::{Error, Result};
use crate::image::{load_image, save_image, to_float};
use crate::metrics::{evaluate_pair, MetricConfig};
use crate::resample::{degrade_x4, SCALE};
use crate::runner::{infer, list_pngs, ModelSpec};
use crate::tta::tta_infer;

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub models: Vec<ModelSpec>,
    pub tta: bool,
    /// Fusion weights; equal weights when absent.
    pub weights: Option<EnsembleWeights>,
    pub metrics: MetricConfig,
    /// Where to write the generated `LR/` and fused `SR/` images, if anywhere.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: SubmissionReport,
    pub weights: EnsembleWeights,
}

/// Degrade every HR image, super-resolve with each model (optionally with
/// x8 self-ensemble), fuse, and score against the HR image.
///
/// `hr_root` is either a dataset root containing `HR/` or a directory of
/// HR PNGs.
pub fn run_pipeline(hr_root: impl AsRef<Path>, opts: &PipelineOptions) -> Result<PipelineOutput> {
    let hr_root = hr_root.as_ref();
    if opts.models.is_empty() {
        return Err(Error::InvalidArgument(
            "run-pipeline needs at least one model".into(),
        ));
    }
    let weights = match &opts.weights {
        Some(w) if w.len() != opts.models.len() => {
            return Err(Error::InvalidWeights(format!(
                "{} weights for {} models",
                w.len(),
                opts.models.len()
            )))
        }
        Some(w) => w.clone(),
        None => EnsembleWeights::uniform(opts.models.len())?,
    };
    let hr_dir = if hr_root.join("HR").is_dir() {
        hr_root.join("HR")
    } else {
        hr_root.to_path_buf()
    };
    let files: Vec<(String, PathBuf)> = list_pngs(&hr_dir)?
        .into_iter()
        .map(|(name, path)| {
            let id = Path::new(&name)
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or(&name)
                .to_string();
            (id, path)
        })
        .collect();
    if files.is_empty() {
        return Err(Error::Manifest(format!(
            "no HR images in {}",
            hr_dir.display()
        )));
    }
    if let Some(out) = &opts.out_dir {
        for sub in ["LR", "SR"] {
            let d = out.join(sub);
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
    }

    let per_image = files
        .par_iter()
        .map(|(id, path)| {
            let wrap = |e| Error::for_image(id, e);
            let hr = load_image(path).map_err(wrap)?;
            let lr = degrade_x4(&hr).map_err(wrap)?;
            let outputs = opts
                .models
                .iter()
                .map(|m| {
                    if opts.tta {
                        tta_infer::<f64>(m, &lr)
                    } else {
                        infer(m, &lr).map(|sr| to_float::<f64>(&sr))
                    }
                })
                .collect::<Result<Vec<_>>>()
                .map_err(wrap)?;
            let sr = fuse(&outputs, &weights).map_err(wrap)?;
            if let Some(out) = &opts.out_dir {
                save_image(&lr, out.join("LR").join(format!("{id}.png")))?;
                save_image(&sr, out.join("SR").join(format!("{id}.png")))?;
            }
            evaluate_pair(id, &sr, &hr, &opts.metrics)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(PipelineOutput {
        report: SubmissionReport::from_pairs(per_image, Phase::Validation, SCALE, &opts.metrics),
        weights,
    })
}
