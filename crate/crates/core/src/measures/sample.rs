//! Distance-matrix distributions of order `k`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::rng::stream;
use crate::umspace::MergeTree;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleMode {
    /// Enumerate all `n^k` ordered tuples.
    Exact,
    /// Draw this many tuples.
    MonteCarlo { draws: usize },
    /// Exact when `n^k <= cap`, Monte-Carlo otherwise.
    Auto { draws: usize },
}

/// Weighted list of distance vectors. Each vector lists `r(x_i, x_j)` for
/// `i < j` in lexicographic order. Exact weights are products of masses
/// (total `(total mass)^k`); Monte-Carlo weights are `(total mass)^k /
/// draws`, so both are on the same scale.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSample {
    pub k: usize,
    pub entries: Vec<(Vec<f64>, f64)>,
    /// `Some(seed)` for Monte-Carlo samples.
    pub seed: Option<u64>,
}

impl DistanceSample {
    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Weighted mean of one coordinate, normalized by the total weight.
    pub fn mean(&self, coord: usize) -> f64 {
        self.entries.iter().map(|(d, w)| d[coord] * w).sum::<f64>() / self.total_weight()
    }
}

fn distances(d: &[Vec<f64>], tuple: &[usize]) -> Vec<f64> {
    let k = tuple.len();
    let mut out = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in a + 1..k {
            out.push(d[tuple[a]][tuple[b]]);
        }
    }
    out
}

/// Draw `j` uses the stream `(seed, j)`, so samples do not depend on how
/// the draws are split across threads.
pub fn nu_k(t: &MergeTree, k: usize, mode: SampleMode, cap: u64, seed: u64) -> Result<DistanceSample> {
    if k < 2 {
        return invalid(format!("order k = {k} must be at least 2"));
    }
    let n = t.len() as u64;
    let tuples = n.checked_pow(k as u32);
    let fits = tuples.is_some_and(|c| c <= cap);
    let draws = match mode {
        SampleMode::Exact if !fits => {
            return invalid(format!("{n}^{k} tuples exceed the exact cap {cap}"));
        }
        SampleMode::Exact => None,
        SampleMode::Auto { .. } if fits => None,
        SampleMode::MonteCarlo { draws } | SampleMode::Auto { draws } => Some(draws),
    };
    let d = t.distance_matrix();
    let masses = t.masses();
    match draws {
        None => {
            let total = tuples.expect("checked above") as usize;
            let entries = (0..total)
                .map(|mut code| {
                    let mut tuple = vec![0; k];
                    for slot in tuple.iter_mut().rev() {
                        *slot = code % n as usize;
                        code /= n as usize;
                    }
                    let w = tuple.iter().map(|&i| masses[i]).product();
                    (distances(&d, &tuple), w)
                })
                .collect();
            Ok(DistanceSample { k, entries, seed: None })
        }
        Some(draws) => {
            if draws == 0 {
                return invalid("Monte-Carlo sampling needs at least one draw");
            }
            let pick = WeightedIndex::new(&masses).map_err(|e| crate::error::Error::Invalid(e.to_string()))?;
            let w = t.total_mass().powi(k as i32) / draws as f64;
            let entries = (0..draws)
                .into_par_iter()
                .map(|j| {
                    let mut rng = stream(seed, j as u64);
                    let tuple: Vec<usize> = (0..k).map(|_| pick.sample(&mut rng)).collect();
                    (distances(&d, &tuple), w)
                })
                .collect();
            Ok(DistanceSample {
                k,
                entries,
                seed: Some(seed),
            })
        }
    }
}
