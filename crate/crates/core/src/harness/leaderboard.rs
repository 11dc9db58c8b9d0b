use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::score;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamResult {
    pub team: String,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaderboardEntry {
    pub team: String,
    pub rank: usize,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub total_score: f64,
}

/// Recompute totals, sort by descending total (ties by team name) and
/// assign 1-based positional ranks.
pub fn rank_leaderboard(entries: &[TeamResult]) -> Vec<LeaderboardEntry> {
    let mut rows: Vec<LeaderboardEntry> = entries
        .iter()
        .map(|t| LeaderboardEntry {
            team: t.team.clone(),
            rank: 0,
            mean_psnr: t.mean_psnr,
            mean_ssim: t.mean_ssim,
            total_score: score(t.mean_psnr, t.mean_ssim),
        })
        .collect();
    rows.sort_by(|a, b| {
        b.total_score
            .partial_cmp(&a.total_score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.team.cmp(&b.team))
    });
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }
    rows
}

/// Leaderboard as CSV, numbers at 4 decimals.
pub fn leaderboard_csv(rows: &[LeaderboardEntry]) -> String {
    let mut out = String::from("team,rank,test_psnr,test_ssim,total_score\n");
    for r in rows {
        let team = if r.team.contains([',', '"']) {
            format!("\"{}\"", r.team.replace('"', "\"\""))
        } else {
            r.team.clone()
        };
        let _ = writeln!(
            out,
            "{team},{},{:.4},{:.4},{:.4}",
            r.rank, r.mean_psnr, r.mean_ssim, r.total_score
        );
    }
    out
}

fn column(headers: &csv::StringRecord, names: &[&str]) -> Result<usize> {
    headers
        .iter()
        .position(|h| {
            let h = h.trim().to_ascii_lowercase().replace([' ', '-'], "_");
            names.contains(&h.as_str())
        })
        .ok_or_else(|| Error::InvalidArgument(format!("results CSV lacks a `{}` column", names[0])))
}

/// Parse a CSV with `team`, `psnr` and `ssim` columns (`test_`/`mean_`
/// prefixes accepted). Any total column is ignored.
pub fn parse_team_results(text: &str) -> Result<Vec<TeamResult>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::InvalidArgument(format!("results CSV: {e}")))?
        .clone();
    let team = column(&headers, &["team", "team_name", "name"])?;
    let psnr = column(&headers, &["psnr", "test_psnr", "mean_psnr"])?;
    let ssim = column(&headers, &["ssim", "test_ssim", "mean_ssim"])?;
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::InvalidArgument(format!("results CSV: {e}")))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("results CSV row {}: bad number", line + 2))
                })
        };
        out.push(TeamResult {
            team: rec.get(team).unwrap_or_default().to_string(),
            mean_psnr: num(psnr)?,
            mean_ssim: num(ssim)?,
        });
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("results CSV has no rows".into()));
    }
    Ok(out)
}
