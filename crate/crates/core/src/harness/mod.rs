//! Dataset handling, batch scoring, leaderboard ranking and the end-to-end
//! pipeline driven by the CLI.

mod leaderboard;
mod manifest;
mod pipeline;
mod report;
mod synth;

pub use leaderboard::{
    leaderboard_csv, parse_team_results, rank_leaderboard, LeaderboardEntry, TeamResult,
};
pub use manifest::{build_manifest, load_manifest_file, Manifest, ManifestEntry, Phase};
pub use pipeline::{run_pipeline, PipelineOptions, PipelineOutput};
pub use report::{score_submission, ReportMeta, SubmissionReport};
pub use synth::{generate_synthetic_dataset, ResolutionPlan};

/// Environment variable bounding the worker pool.
pub const WORKERS_ENV: &str = "HARNESS_WORKERS";

/// Worker count from `HARNESS_WORKERS`, defaulting to the available cores.
pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Run `f` on a dedicated pool of `workers` threads.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
