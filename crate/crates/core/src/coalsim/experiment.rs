use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::rng::{stream, stream_id};
use crate::umspace::UltrametricMatrixSpace;

use super::{caterpillar_r0, restrict_coalescent, simulate_kingman_with, tree_from_coalescent};

const EXPERIMENT_STREAM: u64 = 0x6578_7065;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub populations: Vec<usize>,
    /// Sampling time of the trees.
    pub t: f64,
    /// Depths at which family sizes are recorded.
    pub depths: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilyRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub rep: usize,
    pub h: f64,
    pub rank: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExperimentSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub h: f64,
    pub mean_families: f64,
    pub mean_largest: f64,
    /// Mean of `Σ f(h)²`, i.e. of `ν²[0, h]` for unit total mass.
    pub mean_sum_squares: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    /// Tidy family sizes, ordered by `(N, rep, h, rank)`.
    pub rows: Vec<FamilyRow>,
    pub summaries: Vec<ExperimentSummary>,
}

fn to_csv<T: Serialize>(items: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for item in items {
        w.serialize(item).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

impl ExperimentReport {
    pub fn rows_csv(&self) -> String {
        to_csv(&self.rows)
    }

    pub fn summary_csv(&self) -> String {
        to_csv(&self.summaries)
    }

    /// Largest family at depth `h` for population `n`, one value per rep.
    pub fn largest(&self, n: usize, h: f64) -> Vec<f64> {
        self.rows.iter().filter(|r| r.n == n && r.h == h && r.rank == 1).map(|r| r.mass).collect()
    }
}

/// Family sizes of coalescent trees for several population sizes. Each
/// replication draws one Kingman coalescent on the largest population and
/// restricts it to the smaller ones, so the populations are coupled.
pub fn convergence_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let Some(&n_max) = cfg.populations.iter().max() else {
        return invalid("no population sizes given");
    };
    if cfg.populations.contains(&0) {
        return invalid("population sizes must be positive");
    }
    if !(cfg.t.is_finite() && cfg.t >= 0.0) {
        return invalid(format!("sampling time {} must be finite and non-negative", cfg.t));
    }
    if cfg.depths.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return invalid("depths must be positive and finite");
    }
    if cfg.reps == 0 {
        return invalid("at least one replication is needed");
    }
    let mut populations = cfg.populations.clone();
    populations.sort_unstable();
    populations.dedup();
    let r0s: Vec<UltrametricMatrixSpace> = populations.iter().map(|&n| caterpillar_r0(n)).collect();

    let per_rep: Vec<Vec<FamilyRow>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<FamilyRow>> {
            let mut rng = stream(cfg.seed, stream_id(&[EXPERIMENT_STREAM, rep as u64]));
            let full = simulate_kingman_with(n_max, cfg.t, &mut rng)?;
            let mut rows = Vec::new();
            for (&n, r0) in populations.iter().zip(&r0s) {
                let tree = tree_from_coalescent(&restrict_coalescent(&full, n)?, cfg.t, r0)?;
                for &h in &cfg.depths {
                    let f = tree.family_sizes(h)?;
                    rows.extend(f.entries().iter().enumerate().map(|(k, &mass)| FamilyRow {
                        n,
                        rep,
                        h,
                        rank: k + 1,
                        mass,
                    }));
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<FamilyRow> = per_rep.into_iter().flatten().collect();
    rows.sort_by(|a, b| (a.n, a.rep).cmp(&(b.n, b.rep)));

    let mut summaries = Vec::new();
    for &n in &populations {
        for &h in &cfg.depths {
            let (mut families, mut largest, mut squares) = (0usize, 0.0, 0.0);
            for r in rows.iter().filter(|r| r.n == n && r.h == h) {
                families += 1;
                squares += r.mass * r.mass;
                if r.rank == 1 {
                    largest += r.mass;
                }
            }
            let reps = cfg.reps as f64;
            summaries.push(ExperimentSummary {
                n,
                h,
                mean_families: families as f64 / reps,
                mean_largest: largest / reps,
                mean_sum_squares: squares / reps,
            });
        }
    }
    Ok(ExperimentReport { rows, summaries })
}
