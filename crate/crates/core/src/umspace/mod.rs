//! Finite ultrametric measure spaces.
//!
//! A space is stored as a [`MergeTree`]: leaves carry the point masses and
//! every internal node records the height at which its children join. The
//! distance between two points is the height of their lowest common
//! ancestor. [`UltrametricMatrixSpace`] is the matrix view used for import
//! and export.

mod matrix;
mod ops;
mod tree;

pub use matrix::{UltrametricMatrixSpace, Violation};
pub use ops::{concat, identifiability, BallPartition, Identifiability, IdentifiabilityConfig};
pub use tree::{Leaf, Merge, MergeTree, NodeRef, Shape};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const SCHEMA: &str = "ultragen/1";

/// On-disk tree layout. Node references `0..n` are leaves and `n + k` is
/// the k-th merge; merges are listed children first, root last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFile {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub leaves: Vec<Leaf>,
    pub merges: Vec<MergeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub height: f64,
    pub children: Vec<usize>,
}

impl TreeFile {
    pub fn from_tree(tree: &MergeTree, seed: Option<u64>) -> Self {
        let n = tree.len();
        let merges = tree
            .merges()
            .iter()
            .map(|m| MergeRecord {
                height: m.height,
                children: m
                    .children
                    .iter()
                    .map(|c| match *c {
                        NodeRef::Leaf(i) => i,
                        NodeRef::Merge(k) => n + k,
                    })
                    .collect(),
            })
            .collect();
        TreeFile {
            schema: SCHEMA.to_string(),
            seed,
            leaves: tree.leaves().to_vec(),
            merges,
        }
    }

    pub fn to_tree(&self) -> Result<MergeTree> {
        if self.schema != SCHEMA {
            return invalid(format!("unsupported schema '{}', expected '{SCHEMA}'", self.schema));
        }
        MergeTree::from_parts(
            self.leaves.clone(),
            self.merges.iter().map(|m| (m.height, m.children.clone())).collect(),
        )
    }
}

impl MergeTree {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TreeFile::from_tree(self, None)).expect("tree serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<TreeFile>(s)?.to_tree()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use crate::gen::{random_tree, TreeSpec};

    #[test]
    fn json_is_deterministic_and_canonical() {
        let a = MergeTree::from_shape(Shape::node(
            2.0,
            vec![
                Shape::leaf("z", 1.0),
                Shape::node(1.0, vec![Shape::leaf("y", 0.5), Shape::leaf("x", 0.25)]),
            ],
        ))
        .unwrap();
        let b = MergeTree::from_shape(Shape::node(
            2.0,
            vec![
                Shape::node(1.0, vec![Shape::leaf("x", 0.25), Shape::leaf("y", 0.5)]),
                Shape::leaf("z", 1.0),
            ],
        ))
        .unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(MergeTree::from_json(&a.to_json()).unwrap(), a);
        assert!(a.to_json().contains("\"schema\": \"ultragen/1\""));
    }

    #[test]
    fn wrong_schema_rejected() {
        let mut f = TreeFile::from_tree(&MergeTree::single("a", 1.0).unwrap(), None);
        f.schema = "other/2".into();
        assert!(f.to_tree().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matrix_tree_round_trip(seed in any::<u64>(), n in 1usize..24) {
            let t = random_tree(&TreeSpec::multifurcating(n), seed);
            let m = t.to_matrix();
            prop_assert!(m.validate_ultrametric().is_empty());
            let back = m.to_merge_tree().unwrap();
            prop_assert!(back.isomorphic(&t, 0.0));
            let again = back.to_matrix();
            prop_assert_eq!(again.dist(), m.dist());
        }

        #[test]
        fn mass_conservation_and_refinement(seed in any::<u64>(), n in 1usize..32, a in 0.01f64..1.0, b in 0.01f64..1.0) {
            let t = random_tree(&TreeSpec::multifurcating(n), seed);
            let d = t.root_height().max(1.0);
            let (lo, hi) = if a <= b { (a * d, b * d) } else { (b * d, a * d) };
            let coarse = t.ball_partition(hi).unwrap();
            let fine = t.ball_partition(lo).unwrap();
            let total: f64 = coarse.block_masses.iter().sum();
            prop_assert!((total - t.total_mass()).abs() <= 1e-12 * t.total_mass());
            prop_assert!(coarse.len() <= fine.len());
            for block in &fine.blocks {
                let owner = coarse.blocks.iter().filter(|c| c.contains(&block[0])).count();
                prop_assert_eq!(owner, 1);
                let c = coarse.blocks.iter().find(|c| c.contains(&block[0])).unwrap();
                prop_assert!(block.iter().all(|i| c.contains(i)));
            }
            let fc = t.family_sizes(hi).unwrap();
            let ff = t.family_sizes(lo).unwrap();
            for m in 1..=16 {
                prop_assert!(fc.partial_sum(m) >= ff.partial_sum(m) - 1e-12);
            }
        }

        #[test]
        fn balls_separate_by_distance(seed in any::<u64>(), n in 2usize..20, a in 0.01f64..1.2) {
            let t = random_tree(&TreeSpec::multifurcating(n), seed);
            let h = a * t.root_height();
            let p = t.ball_partition(h).unwrap();
            let d = t.distance_matrix();
            let block_of = |i: usize| p.blocks.iter().position(|b| b.contains(&i)).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(block_of(i) == block_of(j), d[i][j] <= h);
                }
            }
        }

        #[test]
        fn cut_and_psi_share_leaf_masses(seed in any::<u64>(), n in 2usize..20, a in 0.05f64..0.95) {
            let t = random_tree(&TreeSpec::multifurcating(n), seed);
            let h = a * t.root_height();
            let c = t.cut(h).unwrap();
            let p = t.psi(h).unwrap();
            prop_assert_eq!(c.masses(), p.masses());
            prop_assert_eq!(c.len(), t.num_balls(h).unwrap());
            let dc = c.distance_matrix();
            let dp = p.distance_matrix();
            for i in 0..c.len() {
                for j in 0..c.len() {
                    if i != j {
                        prop_assert!((dp[i][j] - h - dc[i][j]).abs() <= 1e-12 * dp[i][j].max(1.0));
                    }
                }
            }
            // Inter-ball heights under psi are those of the original tree.
            let d = t.distance_matrix();
            let pos = |label: &str| t.leaves().iter().position(|l| l.label == label).unwrap();
            for i in 0..p.len() {
                for j in 0..p.len() {
                    prop_assert_eq!(dp[i][j], d[pos(&p.leaves()[i].label)][pos(&p.leaves()[j].label)]);
                }
            }
        }

        #[test]
        fn binary_iff_unit_ball_drops(seed in any::<u64>(), n in 1usize..20, binary in any::<bool>()) {
            let spec = if binary { TreeSpec::binary(n) } else { TreeSpec::multifurcating(n) };
            let t = random_tree(&spec, seed);
            let unit_drops = t.merge_heights().iter().all(|&h| {
                t.family_sizes_left_limit(h).unwrap().len() - t.num_balls(h).unwrap() == 1
            });
            prop_assert_eq!(t.is_binary(), unit_drops);
        }
    }
}
