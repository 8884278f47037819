//! Random tree generators used by the CLI and the test suites.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{invalid, Result};
use crate::rng::{stream, StreamRng};
use crate::umspace::{Identifiability, IdentifiabilityConfig, MergeTree, Shape};

#[derive(Debug, Clone, Copy)]
pub struct TreeSpec {
    pub leaves: usize,
    /// Only pairwise merges, all at distinct heights.
    pub binary: bool,
    /// Probability that a merge takes three or four children (non-binary only).
    pub multi_prob: f64,
    /// Probability that a second, disjoint merge reuses the same height
    /// (non-binary only).
    pub tie_prob: f64,
    pub min_mass: f64,
    pub max_mass: f64,
}

impl TreeSpec {
    pub fn binary(leaves: usize) -> Self {
        TreeSpec {
            leaves,
            binary: true,
            multi_prob: 0.0,
            tie_prob: 0.0,
            min_mass: 0.05,
            max_mass: 1.0,
        }
    }

    pub fn multifurcating(leaves: usize) -> Self {
        TreeSpec {
            leaves,
            binary: false,
            multi_prob: 0.3,
            tie_prob: 0.2,
            min_mass: 0.05,
            max_mass: 1.0,
        }
    }
}

/// Masses are i.i.d. uniform on `[min_mass, max_mass)`; merge heights grow
/// by exponential increments.
pub fn random_tree(spec: &TreeSpec, seed: u64) -> MergeTree {
    let mut rng = stream(seed, 0x7472_6565);
    random_tree_with(spec, &mut rng)
}

pub fn random_tree_with(spec: &TreeSpec, rng: &mut StreamRng) -> MergeTree {
    assert!(spec.leaves >= 1, "a tree needs at least one leaf");
    let mut parts: Vec<Shape> = (0..spec.leaves)
        .map(|i| Shape::leaf(format!("p{i}"), rng.random_range(spec.min_mass..spec.max_mass)))
        .collect();
    let mut height = 0.0;
    while parts.len() > 1 {
        let step: f64 = Exp1.sample(rng);
        height += 0.05 + step;
        let mut fresh: Vec<Shape> = Vec::new();
        loop {
            let k = if !spec.binary && parts.len() >= 3 && rng.random_bool(spec.multi_prob) {
                rng.random_range(3..=parts.len().min(4))
            } else {
                2
            };
            let mut children = Vec::with_capacity(k);
            for _ in 0..k {
                let i = rng.random_range(0..parts.len());
                children.push(parts.swap_remove(i));
            }
            fresh.push(Shape::node(height, children));
            let again = !spec.binary && parts.len() >= 2 && rng.random_bool(spec.tie_prob);
            if !again {
                break;
            }
        }
        parts.extend(fresh);
    }
    MergeTree::from_shape(parts.pop().expect("one part left")).expect("generator produces valid trees")
}

/// Redraws until the exact subset-sum check passes (leaf counts up to the
/// configured cap). Continuous masses make a redraw extremely unlikely.
pub fn random_identifiable(spec: &TreeSpec, seed: u64, max_retries: usize) -> Result<MergeTree> {
    let cfg = IdentifiabilityConfig::default();
    let mut rng = stream(seed, 0x6964_656e);
    for _ in 0..=max_retries {
        let t = random_tree_with(spec, &mut rng);
        match t.is_identifiable(&cfg) {
            Identifiability::NotIdentifiable { .. } => continue,
            _ => return Ok(t),
        }
    }
    invalid(format!("no identifiable tree after {max_retries} retries"))
}

/// Three unit masses at mutual distance 1.
pub fn equilateral_triple() -> MergeTree {
    MergeTree::from_shape(Shape::node(
        1.0,
        vec![Shape::leaf("x1", 1.0), Shape::leaf("x2", 1.0), Shape::leaf("x3", 1.0)],
    ))
    .expect("valid fixture")
}

/// Three unit masses: `x1, x2` at distance 1, `x3` at `1 + 1/n` from both.
pub fn split_triple(n: f64) -> MergeTree {
    MergeTree::from_shape(Shape::node(
        1.0 + 1.0 / n,
        vec![
            Shape::node(1.0, vec![Shape::leaf("x1", 1.0), Shape::leaf("x2", 1.0)]),
            Shape::leaf("x3", 1.0),
        ],
    ))
    .expect("valid fixture")
}
