//! Convex fusion of several SR outputs and exhaustive search of the fusion
//! weights against ground truth.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::{quantize, FloatImage, Image};
use crate::metrics::{evaluate_pair, AggregateScore, MetricConfig};
use crate::scalar::Real;

/// Tolerance on `sum(weights) == 1`.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Default number of simplex grid points evaluated before refusing.
pub const DEFAULT_GRID_CAP: usize = 200_000;

/// Default alpha search range and step.
pub const DEFAULT_ALPHA_LO: f64 = 0.30;
pub const DEFAULT_ALPHA_HI: f64 = 0.60;
pub const DEFAULT_ALPHA_STEP: f64 = 0.01;

/// Non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleWeights(Vec<f64>);

impl EnsembleWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("no weights".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidWeights(format!(
                "weight {w} is negative or not finite"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(EnsembleWeights(weights))
    }

    /// Two-model weights `(alpha, 1 - alpha)`.
    pub fn pair(alpha: f64) -> Result<Self> {
        EnsembleWeights::new(vec![alpha, 1.0 - alpha])
    }

    /// `n` equal weights.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidWeights("no weights".into()));
        }
        let w = 1.0 / n as f64;
        let mut v = vec![w; n];
        // push rounding residue into the last entry
        let rest: f64 = v[..n - 1].iter().sum();
        v[n - 1] = 1.0 - rest;
        EnsembleWeights::new(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-pixel convex combination, then round-half-up and clamp.
pub fn fuse<T: Real>(outputs: &[FloatImage<T>], weights: &EnsembleWeights) -> Result<Image> {
    quantize(&fuse_float(outputs, weights)?)
}

/// Convex combination without the final quantization.
pub fn fuse_float<T: Real>(
    outputs: &[FloatImage<T>],
    weights: &EnsembleWeights,
) -> Result<FloatImage<T>> {
    if outputs.len() != weights.len() {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {} outputs",
            weights.len(),
            outputs.len()
        )));
    }
    let first = &outputs[0];
    for other in &outputs[1..] {
        if other.shape() != first.shape() {
            return Err(Error::ShapeMismatch {
                context: "fuse".into(),
                left: first.shape(),
                right: other.shape(),
            });
        }
    }
    let w: Vec<T> = weights.as_slice().iter().map(|&v| T::lit(v)).collect();
    let data = (0..first.samples().len())
        .map(|i| {
            outputs
                .iter()
                .zip(&w)
                .fold(T::zero(), |acc, (img, &wk)| acc + wk * img.samples()[i])
        })
        .collect();
    FloatImage::new(
        first.width(),
        first.height(),
        first.channels(),
        first.bit_depth(),
        data,
    )
}

/// One evaluated candidate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchRow {
    pub weights: Vec<f64>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSearchResult {
    pub best_weights: EnsembleWeights,
    pub best_index: usize,
    /// Rows in ascending weight-vector order.
    pub table: Vec<SearchRow>,
}

impl WeightSearchResult {
    pub fn best(&self) -> &SearchRow {
        &self.table[self.best_index]
    }

    /// Build from already-scored rows.
    pub fn from_rows(mut table: Vec<SearchRow>) -> Result<Self> {
        table.sort_by(|a, b| lex_cmp(&a.weights, &b.weights));
        let best_index = select_best(&table)
            .ok_or_else(|| Error::InvalidArgument("no candidate weights to compare".into()))?;
        Ok(WeightSearchResult {
            best_weights: EnsembleWeights::new(table[best_index].weights.clone())?,
            best_index,
            table,
        })
    }

    /// CSV with one `w<k>` column per model followed by the mean metrics.
    pub fn to_csv(&self) -> String {
        let n = self.table.first().map_or(0, |r| r.weights.len());
        let mut out = String::new();
        for k in 1..=n {
            let _ = write!(out, "w{k},");
        }
        out.push_str("mean_psnr,mean_ssim,mean_score\n");
        for row in &self.table {
            for w in &row.weights {
                let _ = write!(out, "{w},");
            }
            let _ = writeln!(
                out,
                "{},{},{}",
                row.mean_psnr, row.mean_ssim, row.mean_score
            );
        }
        out
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// Index of the highest `mean_score`; ties go to the lexicographically
/// smallest weight vector. NaN scores never win.
pub fn select_best(rows: &[SearchRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        if row.mean_score.is_nan() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(j) => {
                let cur = &rows[j];
                let better = row.mean_score > cur.mean_score
                    || (row.mean_score == cur.mean_score
                        && lex_cmp(&row.weights, &cur.weights) == Ordering::Less);
                Some(if better { i } else { j })
            }
        };
    }
    best
}

fn round_grid(v: f64) -> f64 {
    (v * 1e10).round() / 1e10
}

/// `lo, lo + step, ...` up to and including `hi` (with a small tolerance).
pub fn alpha_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) {
        return Err(Error::InvalidArgument("grid bounds must be finite".into()));
    }
    if step <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {step}"
        )));
    }
    if lo > hi || lo < 0.0 || hi > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= lo <= hi <= 1, got lo={lo} hi={hi}"
        )));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| round_grid(lo + k as f64 * step)).collect())
}

/// Labeled ground truth for a search.
#[derive(Debug, Clone)]
pub struct Reference {
    pub image_id: String,
    pub image: Image,
}

fn score_candidate<T: Real>(
    outputs: &[&[FloatImage<T>]],
    gt: &[Reference],
    weights: &EnsembleWeights,
    cfg: &MetricConfig,
) -> Result<SearchRow> {
    let mut pairs = Vec::with_capacity(gt.len());
    for (i, reference) in gt.iter().enumerate() {
        let per_model: Vec<FloatImage<T>> = outputs.iter().map(|o| o[i].clone()).collect();
        let fused =
            fuse(&per_model, weights).map_err(|e| Error::for_image(&reference.image_id, e))?;
        pairs.push(evaluate_pair(
            &reference.image_id,
            &fused,
            &reference.image,
            cfg,
        )?);
    }
    let agg = AggregateScore::from_pairs(&pairs);
    Ok(SearchRow {
        weights: weights.as_slice().to_vec(),
        mean_psnr: agg.mean_psnr,
        mean_ssim: agg.mean_ssim,
        mean_score: agg.mean_score,
    })
}

fn search<T: Real>(
    outputs: &[&[FloatImage<T>]],
    gt: &[Reference],
    candidates: Vec<EnsembleWeights>,
    cfg: &MetricConfig,
) -> Result<WeightSearchResult> {
    if gt.is_empty() {
        return Err(Error::InvalidArgument("empty validation set".into()));
    }
    for o in outputs {
        if o.len() != gt.len() {
            return Err(Error::InvalidArgument(format!(
                "{} model outputs for {} reference images",
                o.len(),
                gt.len()
            )));
        }
    }
    let rows = candidates
        .par_iter()
        .map(|w| score_candidate(outputs, gt, w, cfg))
        .collect::<Result<Vec<_>>>()?;
    WeightSearchResult::from_rows(rows)
}

/// Two-model search over `(alpha, 1 - alpha)` for every alpha in `alphas`.
pub fn grid_search_alpha<T: Real>(
    outputs_a: &[FloatImage<T>],
    outputs_b: &[FloatImage<T>],
    gt: &[Reference],
    alphas: &[f64],
    cfg: &MetricConfig,
) -> Result<WeightSearchResult> {
    let candidates = alphas
        .iter()
        .map(|&a| EnsembleWeights::pair(a))
        .collect::<Result<Vec<_>>>()?;
    search(&[outputs_a, outputs_b], gt, candidates, cfg)
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Every weight vector with entries in `{0, 1/K, ..., 1}` summing to one,
/// in ascending lexicographic order.
pub fn simplex_grid(n_models: usize, step: f64, cap: usize) -> Result<Vec<EnsembleWeights>> {
    if n_models < 2 {
        return Err(Error::InvalidArgument(
            "simplex search needs at least 2 models".into(),
        ));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "step must be in (0, 1], got {step}"
        )));
    }
    let k = (1.0 / step).round() as usize;
    if (k as f64 * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "step {step} does not divide 1"
        )));
    }
    let points = binomial((k + n_models - 1) as u128, (n_models - 1) as u128);
    if points > cap as u128 {
        return Err(Error::GridTooLarge { points, cap });
    }
    let mut out = Vec::with_capacity(points as usize);
    let mut counts = vec![0usize; n_models];
    fill(&mut counts, 0, k, k, &mut out)?;
    Ok(out)
}

fn fill(
    counts: &mut [usize],
    pos: usize,
    left: usize,
    k: usize,
    out: &mut Vec<EnsembleWeights>,
) -> Result<()> {
    if pos == counts.len() - 1 {
        counts[pos] = left;
        // last weight takes the remainder, matching the (alpha, 1 - alpha) pairs
        let mut w: Vec<f64> = counts[..pos].iter().map(|&c| c as f64 / k as f64).collect();
        let rest: f64 = w.iter().sum();
        w.push(1.0 - rest);
        out.push(EnsembleWeights::new(w)?);
        return Ok(());
    }
    for c in 0..=left {
        counts[pos] = c;
        fill(counts, pos + 1, left - c, k, out)?;
    }
    Ok(())
}

/// N-model exhaustive search over the discretized probability simplex.
pub fn grid_search_simplex<T: Real>(
    outputs: &[Vec<FloatImage<T>>],
    gt: &[Reference],
    step: f64,
    cap: usize,
    cfg: &MetricConfig,
) -> Result<WeightSearchResult> {
    let candidates = simplex_grid(outputs.len(), step, cap)?;
    let views: Vec<&[FloatImage<T>]> = outputs.iter().map(|o| o.as_slice()).collect();
    search(&views, gt, candidates, cfg)
}

/// Re-score one weight vector, e.g. to cross-check a search result.
pub fn score_weights<T: Real>(
    outputs: &[Vec<FloatImage<T>>],
    gt: &[Reference],
    weights: &EnsembleWeights,
    cfg: &MetricConfig,
) -> Result<SearchRow> {
    let views: Vec<&[FloatImage<T>]> = outputs.iter().map(|o| o.as_slice()).collect();
    score_candidate(&views, gt, weights, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{to_float, BitDepth};
    use proptest::prelude::*;

    fn constant(v: f64) -> FloatImage<f64> {
        FloatImage::new(2, 2, 1, BitDepth::Eight, vec![v; 4]).unwrap()
    }

    fn row(w: &[f64], score: f64) -> SearchRow {
        SearchRow {
            weights: w.to_vec(),
            mean_psnr: 0.0,
            mean_ssim: 0.0,
            mean_score: score,
        }
    }

    #[test]
    fn weights_validation() {
        assert!(EnsembleWeights::new(vec![0.5, 0.5]).is_ok());
        assert!(EnsembleWeights::new(vec![0.6, 0.5]).is_err());
        assert!(EnsembleWeights::new(vec![1.2, -0.2]).is_err());
        assert!(EnsembleWeights::new(vec![]).is_err());
        assert!(EnsembleWeights::new(vec![f64::NAN, 1.0]).is_err());
        let u = EnsembleWeights::uniform(3).unwrap();
        assert_eq!(u.len(), 3);
        assert_eq!(EnsembleWeights::uniform(4).unwrap().as_slice(), &[0.25; 4]);
    }

    #[test]
    fn fuse_examples() {
        let w = EnsembleWeights::pair(0.45).unwrap();
        let out = fuse(&[constant(0.0), constant(255.0)], &w).unwrap();
        // 0.55 * 255 = 140.25
        assert_eq!(out.samples(), &[140; 4]);
        let same = fuse(&[constant(17.0), constant(17.0)], &w).unwrap();
        assert_eq!(same.samples(), &[17; 4]);
        let four: Vec<_> = [10.0, 20.0, 30.0, 41.0]
            .iter()
            .map(|&v| constant(v))
            .collect();
        let avg = fuse(&four, &EnsembleWeights::uniform(4).unwrap()).unwrap();
        assert_eq!(avg.samples(), &[25; 4]);
    }

    #[test]
    fn fuse_errors() {
        let w = EnsembleWeights::pair(0.5).unwrap();
        assert!(fuse(&[constant(0.0)], &w).is_err());
        let other = FloatImage::new(1, 4, 1, BitDepth::Eight, vec![0.0; 4]).unwrap();
        assert!(matches!(
            fuse(&[constant(0.0), other], &w),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn selection_prefers_score_then_smaller_weights() {
        let rows = vec![
            row(&[0.3, 0.7], 1.0),
            row(&[0.4, 0.6], 2.0),
            row(&[0.5, 0.5], 2.0),
        ];
        assert_eq!(select_best(&rows), Some(1));
        let rows = vec![row(&[0.5, 0.5], 2.0), row(&[0.4, 0.6], 2.0)];
        assert_eq!(select_best(&rows), Some(1));
        assert_eq!(select_best(&[]), None);
        assert_eq!(
            select_best(&[row(&[1.0], f64::NAN), row(&[1.0], -5.0)]),
            Some(1)
        );
    }

    #[test]
    fn alpha_grid_values() {
        let g = alpha_grid(0.30, 0.60, 0.01).unwrap();
        assert_eq!(g.len(), 31);
        assert_eq!(g[0], 0.30);
        assert_eq!(g[15], 0.45);
        assert_eq!(*g.last().unwrap(), 0.60);
        assert_eq!(alpha_grid(0.5, 0.5, 0.1).unwrap(), vec![0.5]);
        assert!(alpha_grid(0.6, 0.3, 0.01).is_err());
        assert!(alpha_grid(0.3, 0.6, 0.0).is_err());
    }

    #[test]
    fn simplex_grid_points() {
        let g = simplex_grid(4, 0.25, DEFAULT_GRID_CAP).unwrap();
        assert_eq!(g.len(), 35); // C(7, 3)
        assert!(g.iter().any(|w| w.as_slice() == [0.25; 4]));
        let two = simplex_grid(2, 0.1, DEFAULT_GRID_CAP).unwrap();
        let alphas = alpha_grid(0.0, 1.0, 0.1).unwrap();
        let firsts: Vec<f64> = two.iter().map(|w| w.as_slice()[0]).collect();
        assert_eq!(firsts, alphas);
        assert!(matches!(
            simplex_grid(6, 0.01, 1000),
            Err(Error::GridTooLarge { .. })
        ));
        assert!(simplex_grid(3, 0.3, 1000).is_err());
        assert!(simplex_grid(1, 0.5, 1000).is_err());
    }

    fn refs(images: &[Image]) -> Vec<Reference> {
        images
            .iter()
            .enumerate()
            .map(|(i, im)| Reference {
                image_id: format!("img{i}"),
                image: im.clone(),
            })
            .collect()
    }

    fn textured(seed: u16) -> Image {
        let data = (0..16 * 16)
            .map(|i: u16| 40 + (i * 7 + seed * 13) % 150)
            .collect();
        Image::new(16, 16, 1, BitDepth::Eight, data).unwrap()
    }

    #[test]
    fn identical_models_tie_to_lowest_alpha() {
        let gt = vec![textured(1), textured(2)];
        let out: Vec<FloatImage<f64>> = gt
            .iter()
            .map(|g| {
                let f = to_float::<f64>(g);
                let d = f.samples().iter().map(|v| v + 3.0).collect();
                FloatImage::new(16, 16, 1, BitDepth::Eight, d).unwrap()
            })
            .collect();
        let grid = alpha_grid(0.3, 0.6, 0.05).unwrap();
        let res =
            grid_search_alpha(&out, &out, &refs(&gt), &grid, &MetricConfig::default()).unwrap();
        assert_eq!(res.best_weights.as_slice()[0], 0.3);
        assert!(res
            .table
            .iter()
            .all(|r| r.mean_score == res.table[0].mean_score));
    }

    #[test]
    fn exact_model_dominates_simplex_search() {
        let gt = vec![textured(3), textured(4)];
        let exact: Vec<_> = gt.iter().map(to_float::<f64>).collect();
        let shifted = |d: f64| -> Vec<FloatImage<f64>> {
            exact
                .iter()
                .map(|f| {
                    let v = f.samples().iter().map(|s| s + d).collect();
                    FloatImage::new(16, 16, 1, BitDepth::Eight, v).unwrap()
                })
                .collect()
        };
        let outputs = vec![exact.clone(), shifted(9.0), shifted(20.0)];
        let res = grid_search_simplex(
            &outputs,
            &refs(&gt),
            0.1,
            DEFAULT_GRID_CAP,
            &MetricConfig::default(),
        )
        .unwrap();
        assert_eq!(res.best_weights.as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(res.best().mean_psnr, 100.0);
        let again = score_weights(
            &outputs,
            &refs(&gt),
            &res.best_weights,
            &MetricConfig::default(),
        )
        .unwrap();
        assert_eq!(&again, res.best());
    }

    #[test]
    fn two_model_simplex_equals_alpha_search() {
        let gt = vec![textured(5)];
        let a: Vec<_> = gt.iter().map(to_float::<f64>).collect();
        let b: Vec<FloatImage<f64>> = a
            .iter()
            .map(|f| {
                let v = f
                    .samples()
                    .iter()
                    .enumerate()
                    .map(|(i, s)| s + (i % 5) as f64 - 2.0)
                    .collect();
                FloatImage::new(16, 16, 1, BitDepth::Eight, v).unwrap()
            })
            .collect();
        let a_shift: Vec<FloatImage<f64>> = a
            .iter()
            .map(|f| {
                let v = f.samples().iter().map(|s| s + 4.0).collect();
                FloatImage::new(16, 16, 1, BitDepth::Eight, v).unwrap()
            })
            .collect();
        let cfg = MetricConfig::default();
        let simplex =
            grid_search_simplex(&[a_shift.clone(), b.clone()], &refs(&gt), 0.1, 100, &cfg).unwrap();
        let alpha = grid_search_alpha(
            &a_shift,
            &b,
            &refs(&gt),
            &alpha_grid(0.0, 1.0, 0.1).unwrap(),
            &cfg,
        )
        .unwrap();
        assert_eq!(simplex, alpha);
    }

    #[test]
    fn csv_layout() {
        let res = WeightSearchResult::from_rows(vec![row(&[0.5, 0.5], 1.5), row(&[0.4, 0.6], 1.0)])
            .unwrap();
        let csv = res.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "w1,w2,mean_psnr,mean_ssim,mean_score");
        assert_eq!(lines[1], "0.4,0.6,0,0,1");
        assert_eq!(res.best_weights.as_slice(), &[0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn fused_sample_is_within_rounding_of_inputs(
            a in 0.0f64..255.0, b in 0.0f64..255.0, c in 0.0f64..255.0,
            w1 in 0.0f64..1.0, w2 in 0.0f64..1.0,
        ) {
            let (w1, w2) = (w1 / 2.0, w2 / 2.0);
            let w = EnsembleWeights::new(vec![w1, w2, 1.0 - w1 - w2]).unwrap();
            let out = fuse(&[constant(a), constant(b), constant(c)], &w).unwrap();
            let v = out.samples()[0] as f64;
            prop_assert!(v >= a.min(b).min(c) - 0.5 && v <= a.max(b).max(c) + 0.5);
        }

        #[test]
        fn unit_weight_selects_first_output(a in -20.0f64..300.0, b in 0.0f64..255.0) {
            let out = fuse(&[constant(a), constant(b)], &EnsembleWeights::pair(1.0).unwrap()).unwrap();
            prop_assert_eq!(out, quantize(&constant(a)).unwrap());
        }
    }
}
