use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use irsr_core::ensemble::{
    alpha_grid, fuse, grid_search_alpha, grid_search_simplex, EnsembleWeights, Reference,
    WeightSearchResult,
};
use irsr_core::harness::{
    build_manifest, generate_synthetic_dataset, leaderboard_csv, load_manifest_file,
    parse_team_results, rank_leaderboard, run_pipeline, score_submission, Phase, PipelineOptions,
    ResolutionPlan, SubmissionReport,
};
use irsr_core::image::{quantize, to_float, FloatImage};
use irsr_core::metrics::{MetricConfig, SsimPadding};
use irsr_core::resample::{resize, Filter, SCALE};
use irsr_core::runner::DEFAULT_TIMEOUT;
use irsr_core::{
    infer_batch, list_pngs, load_image, save_image, tta_infer, Error, Image, ModelSpec, Result,
};

use crate::config::Config;
use crate::{
    Cmd, DegradeArgs, FuseArgs, InferArgs, MetricArgs, ModelArgs, PipelineArgs, ScoreArgs, TuneArgs,
};

pub fn run(cmd: Cmd, cfg: &Config) -> Result<()> {
    match cmd {
        Cmd::Degrade(a) => degrade(&a),
        Cmd::Infer(a) => infer_dir(&a, cfg, false),
        Cmd::TtaInfer(a) => infer_dir(&a, cfg, true),
        Cmd::Fuse(a) => fuse_dirs(&a),
        Cmd::TuneWeights(a) => tune(&a),
        Cmd::Score(a) => score(&a),
        Cmd::Rank(a) => {
            let text = fs::read_to_string(&a.results).map_err(|e| Error::io(&a.results, e))?;
            let ranked = rank_leaderboard(&parse_team_results(&text)?);
            emit(&leaderboard_csv(&ranked), a.out.as_deref())
        }
        Cmd::GenSynth(a) => {
            let plan = ResolutionPlan::parse(&a.plan)?;
            let manifest = generate_synthetic_dataset(&a.out, &plan, a.seed)?;
            println!(
                "wrote {} HR/LR pairs to {}",
                manifest.len(),
                a.out.display()
            );
            Ok(())
        }
        Cmd::RunPipeline(a) => pipeline(&a, cfg),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn metric_config(m: &MetricArgs) -> Result<MetricConfig> {
    if !(m.psnr_cap.is_finite() && m.psnr_cap > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "--psnr-cap must be positive, got {}",
            m.psnr_cap
        )));
    }
    Ok(MetricConfig {
        psnr_cap: m.psnr_cap,
        ssim_padding: SsimPadding::parse(&m.ssim_pad)?,
        shave: m.shave,
        round_luma: m.round,
    })
}

fn resolve_models(m: &ModelArgs, cfg: &Config) -> Result<Vec<ModelSpec>> {
    let mut out = Vec::new();
    for name in &m.models {
        match cfg.models.get(name) {
            Some(model) => out.push(model.clone()),
            None => out.push(ModelSpec::builtin(Filter::parse(name).map_err(|_| {
                Error::InvalidArgument(format!(
                    "unknown model `{name}` (builtin: nearest, bilinear, bicubic, lanczos3; or define [models.{name}] in --config)"
                ))
            })?)),
        }
    }
    if let Some(tmpl) = &m.model_cmd {
        let timeout = match m.timeout {
            None => DEFAULT_TIMEOUT,
            Some(s) if s > 0.0 && s.is_finite() => Duration::from_secs_f64(s),
            Some(s) => {
                return Err(Error::InvalidArgument(format!(
                    "--timeout must be positive, got {s}"
                )))
            }
        };
        out.push(ModelSpec::external("model-cmd", tmpl, m.window, timeout)?);
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(
            "no model given (use --model or --model-cmd)".into(),
        ));
    }
    Ok(out)
}

fn single_model(m: &ModelArgs, cfg: &Config) -> Result<ModelSpec> {
    let mut models = resolve_models(m, cfg)?;
    if models.len() != 1 {
        return Err(Error::InvalidArgument(format!(
            "expected exactly one model, got {}",
            models.len()
        )));
    }
    Ok(models.remove(0))
}

fn stem(name: &str) -> String {
    Path::new(name)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(name)
        .to_string()
}

fn dataset_hr_dir(root: &Path) -> PathBuf {
    if root.join("HR").is_dir() {
        root.join("HR")
    } else {
        root.to_path_buf()
    }
}

fn degrade(a: &DegradeArgs) -> Result<()> {
    let filter = match Filter::parse(&a.filter)? {
        Filter::Bicubic { .. } => Filter::bicubic_with(a.bicubic_a)?,
        f => f,
    };
    let one = |hr: &Image| -> Result<Image> {
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
            filter,
            !a.no_antialias,
        )
    };
    if a.hr.is_file() {
        if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
            make_dir(parent)?;
        }
        return save_image(&one(&load_image(&a.hr)?)?, &a.out);
    }
    make_dir(&a.out)?;
    let files = list_pngs(&a.hr)?;
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no PNG files in {}",
            a.hr.display()
        )));
    }
    for (name, path) in files {
        let lr = load_image(&path)
            .and_then(|hr| one(&hr))
            .map_err(|e| Error::for_image(stem(&name), e))?;
        save_image(&lr, a.out.join(&name))?;
    }
    Ok(())
}

fn infer_dir(a: &InferArgs, cfg: &Config, tta: bool) -> Result<()> {
    let model = single_model(&a.model, cfg)?;
    let files = list_pngs(&a.lr)?;
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no PNG files in {}",
            a.lr.display()
        )));
    }
    make_dir(&a.out)?;
    if tta {
        for (name, path) in &files {
            let lr = load_image(path).map_err(|e| Error::for_image(stem(name), e))?;
            let sr = tta_infer::<f64>(&model, &lr).and_then(|f| quantize(&f));
            save_image(
                &sr.map_err(|e| Error::for_image(stem(name), e))?,
                a.out.join(name),
            )?;
        }
        return Ok(());
    }
    let inputs = files
        .iter()
        .map(|(name, path)| load_image(path).map_err(|e| Error::for_image(stem(name), e)))
        .collect::<Result<Vec<_>>>()?;
    let outputs = infer_batch(&model, &inputs)?;
    for ((name, _), sr) in files.iter().zip(&outputs) {
        save_image(sr, a.out.join(name))?;
    }
    Ok(())
}

/// The files `names` from `dir`, all of which must exist.
fn load_matching(dir: &Path, names: &[String]) -> Result<Vec<Image>> {
    let available = list_pngs(dir)?;
    let missing: Vec<String> = names
        .iter()
        .filter(|n| !available.contains_key(*n))
        .map(|n| stem(n))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingSubmission(format!(
            "{}` in `{}",
            missing.join("`, `"),
            dir.display()
        )));
    }
    names
        .iter()
        .map(|n| load_image(&available[n]).map_err(|e| Error::for_image(stem(n), e)))
        .collect()
}

fn parse_weights(w: &[f64], n: usize) -> Result<EnsembleWeights> {
    if w.is_empty() {
        return EnsembleWeights::uniform(n);
    }
    if w.len() != n {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {n} inputs",
            w.len()
        )));
    }
    EnsembleWeights::new(w.to_vec())
}

fn fuse_dirs(a: &FuseArgs) -> Result<()> {
    let weights = parse_weights(&a.weights, a.inputs.len())?;
    let names: Vec<String> = list_pngs(&a.inputs[0])?.into_keys().collect();
    if names.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no PNG files in {}",
            a.inputs[0].display()
        )));
    }
    let per_dir = a
        .inputs
        .iter()
        .map(|d| load_matching(d, &names))
        .collect::<Result<Vec<_>>>()?;
    make_dir(&a.out)?;
    for (i, name) in names.iter().enumerate() {
        let outputs: Vec<FloatImage<f64>> = per_dir.iter().map(|imgs| to_float(&imgs[i])).collect();
        let fused = fuse(&outputs, &weights).map_err(|e| Error::for_image(stem(name), e))?;
        save_image(&fused, a.out.join(name))?;
    }
    Ok(())
}

fn fmt_weights(w: &[f64]) -> String {
    w.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn tune(a: &TuneArgs) -> Result<()> {
    let cfg = metric_config(&a.metrics)?;
    let gt_files = list_pngs(&dataset_hr_dir(&a.gt))?;
    if gt_files.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no ground-truth PNGs under {}",
            a.gt.display()
        )));
    }
    let names: Vec<String> = gt_files.keys().cloned().collect();
    let gt = gt_files
        .iter()
        .map(|(name, path)| {
            Ok(Reference {
                image_id: stem(name),
                image: load_image(path).map_err(|e| Error::for_image(stem(name), e))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let load = |dir: &Path| -> Result<Vec<FloatImage<f64>>> {
        Ok(load_matching(dir, &names)?.iter().map(to_float).collect())
    };

    let (result, two_model): (WeightSearchResult, bool) = match (&a.a, &a.b) {
        (Some(da), Some(db)) => {
            let alphas = if a.candidates.is_empty() {
                alpha_grid(
                    a.lo,
                    a.hi,
                    a.step.unwrap_or(irsr_core::ensemble::DEFAULT_ALPHA_STEP),
                )?
            } else {
                a.candidates.clone()
            };
            (
                grid_search_alpha(&load(da)?, &load(db)?, &gt, &alphas, &cfg)?,
                true,
            )
        }
        _ if a.inputs.len() >= 2 => {
            let outputs = a
                .inputs
                .iter()
                .map(|d| load(d))
                .collect::<Result<Vec<_>>>()?;
            (
                grid_search_simplex(&outputs, &gt, a.step.unwrap_or(0.1), a.cap, &cfg)?,
                false,
            )
        }
        _ => {
            return Err(Error::InvalidArgument(
                "give --a and --b, or at least two --inputs directories".into(),
            ))
        }
    };

    emit(&result.to_csv(), a.out.as_deref())?;
    let best = result.best();
    let chosen = if two_model {
        format!("alpha={}", best.weights[0])
    } else {
        format!("weights={}", fmt_weights(&best.weights))
    };
    let line = format!(
        "chosen {chosen} mean_psnr={:.4} mean_ssim={:.4} mean_score={:.4}",
        best.mean_psnr, best.mean_ssim, best.mean_score
    );
    if a.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    Ok(())
}

fn check_format(format: &str) -> Result<()> {
    match format {
        "csv" | "json" | "text" => Ok(()),
        other => Err(Error::InvalidArgument(format!(
            "unknown format `{other}` (expected csv, json or text)"
        ))),
    }
}

fn render(report: &SubmissionReport, format: &str) -> String {
    match format {
        "csv" => report.to_csv(),
        "json" => report.to_json(),
        _ => report.to_text(),
    }
}

fn score(a: &ScoreArgs) -> Result<()> {
    let cfg = metric_config(&a.metrics)?;
    let phase = Phase::parse(&a.phase)?;
    check_format(&a.format)?;
    let manifest = match (&a.manifest, &a.data) {
        (Some(m), _) => load_manifest_file(m, phase)?,
        (None, Some(d)) => build_manifest(d, phase)?,
        (None, None) => return Err(Error::InvalidArgument("give --data or --manifest".into())),
    };
    let report = score_submission(&a.sr, &manifest, &cfg)?;
    emit(&render(&report, &a.format), a.out.as_deref())
}

fn pipeline(a: &PipelineArgs, cfg: &Config) -> Result<()> {
    let metrics = metric_config(&a.metrics)?;
    check_format(&a.format)?;
    let models = resolve_models(&a.model, cfg)?;
    let weights = if a.weights.is_empty() {
        None
    } else {
        Some(parse_weights(&a.weights, models.len())?)
    };
    let opts = PipelineOptions {
        models,
        tta: a.tta,
        weights,
        metrics,
        out_dir: a.out.clone(),
    };
    let out = run_pipeline(&a.data, &opts)?;
    emit(&render(&out.report, &a.format), a.report.as_deref())
}
