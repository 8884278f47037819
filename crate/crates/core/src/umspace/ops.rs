use std::collections::HashSet;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::profiles::RankedProfile;

use super::tree::{MergeTree, NodeRef, Shape};

/// Closed (or, for left limits, open) balls of radius `depth`.
///
/// `blocks[i]` lists leaf indices of the tree the partition was taken from;
/// blocks are contiguous leaf ranges in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct BallPartition {
    pub depth: f64,
    pub blocks: Vec<Vec<usize>>,
    pub block_masses: Vec<f64>,
}

impl BallPartition {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Outcome of the subset-sum distinctness test.
#[derive(Debug, Clone, PartialEq)]
pub enum Identifiability {
    Identifiable,
    /// Two disjoint, non-empty leaf sets with equal total mass.
    NotIdentifiable { left: Vec<usize>, right: Vec<usize> },
    /// Too many leaves for the exact check and the random probe found no collision.
    Unknown { leaves: usize, probes: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct IdentifiabilityConfig {
    /// Largest leaf count checked exhaustively (2^exact_cap subset sums).
    pub exact_cap: usize,
    /// Two subset sums closer than `rel_tol * total_mass` count as equal.
    pub rel_tol: f64,
    pub probes: usize,
    pub seed: u64,
}

impl Default for IdentifiabilityConfig {
    fn default() -> Self {
        IdentifiabilityConfig {
            exact_cap: 20,
            rel_tol: 1e-12,
            probes: 200_000,
            seed: 0,
        }
    }
}

fn check_depth(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        invalid(format!("depth must be positive and finite, got {h}"))
    }
}

impl MergeTree {
    /// Maximal subtrees whose root lies at or below `h` (at or strictly below
    /// for `open`).
    fn ball_roots(&self, h: f64, open: bool) -> Vec<NodeRef> {
        let inside = |x: f64| if open { x < h } else { x <= h };
        let mut out = Vec::new();
        let mut stack = vec![self.root()];
        while let Some(node) = stack.pop() {
            if inside(self.height(node)) {
                out.push(node);
            } else if let NodeRef::Merge(k) = node {
                stack.extend(self.merges()[k].children.iter().rev());
            }
        }
        out
    }

    fn partition_from_roots(&self, h: f64, roots: &[NodeRef]) -> BallPartition {
        BallPartition {
            depth: h,
            blocks: roots.iter().map(|&r| self.leaf_range(r).collect()).collect(),
            block_masses: roots.iter().map(|&r| self.mass(r)).collect(),
        }
    }

    /// Partition into closed balls of radius `h`: leaves at distance exactly
    /// `h` share a block.
    pub fn ball_partition(&self, h: f64) -> Result<BallPartition> {
        check_depth(h)?;
        Ok(self.partition_from_roots(h, &self.ball_roots(h, false)))
    }

    /// Partition into open balls of radius `h` (the left limit at `h`).
    pub fn ball_partition_open(&self, h: f64) -> Result<BallPartition> {
        check_depth(h)?;
        Ok(self.partition_from_roots(h, &self.ball_roots(h, true)))
    }

    pub fn family_sizes(&self, h: f64) -> Result<RankedProfile> {
        Ok(RankedProfile::from_masses(self.ball_partition(h)?.block_masses))
    }

    pub fn family_sizes_left_limit(&self, h: f64) -> Result<RankedProfile> {
        Ok(RankedProfile::from_masses(self.ball_partition_open(h)?.block_masses))
    }

    /// Ranked atom masses, the value of the decomposition at depth 0.
    pub fn family_sizes_at_zero(&self) -> RankedProfile {
        RankedProfile::from_masses(self.masses())
    }

    pub fn num_balls(&self, h: f64) -> Result<usize> {
        check_depth(h)?;
        Ok(self.ball_roots(h, false).len())
    }

    fn quotient(&self, h: f64, shift: f64) -> Result<MergeTree> {
        check_depth(h)?;
        fn rec(t: &MergeTree, node: NodeRef, h: f64, shift: f64) -> Shape {
            let height = t.height(node);
            if height <= h {
                let first = t.leaf_range(node).start;
                return Shape::leaf(t.leaves()[first].label.clone(), t.mass(node));
            }
            match node {
                NodeRef::Merge(k) => Shape::node(
                    height - shift,
                    t.merges()[k]
                        .children
                        .iter()
                        .map(|&c| rec(t, c, h, shift))
                        .collect(),
                ),
                NodeRef::Leaf(_) => unreachable!("leaves have height 0"),
            }
        }
        MergeTree::from_shape(rec(self, self.root(), h, shift))
    }

    /// Collapses each closed `h`-ball to one leaf and lowers every remaining
    /// merge height by `h`.
    pub fn cut(&self, h: f64) -> Result<MergeTree> {
        self.quotient(h, h)
    }

    /// Collapses each closed `h`-ball to one leaf, keeping merge heights.
    pub fn psi(&self, h: f64) -> Result<MergeTree> {
        self.quotient(h, 0.0)
    }

    /// Truncates all distances at `h`; merges squeezed onto the same height
    /// are flattened into one.
    pub fn top(&self, h: f64) -> Result<MergeTree> {
        check_depth(h)?;
        fn rec(t: &MergeTree, node: NodeRef, h: f64) -> Shape {
            match node {
                NodeRef::Leaf(i) => Shape::Leaf(t.leaves()[i].clone()),
                NodeRef::Merge(k) => {
                    let height = t.merges()[k].height.min(h);
                    let mut children = Vec::new();
                    for &c in &t.merges()[k].children {
                        match rec(t, c, h) {
                            Shape::Node {
                                height: ch,
                                children: grand,
                            } if ch == height => children.extend(grand),
                            s => children.push(s),
                        }
                    }
                    Shape::node(height, children)
                }
            }
        }
        MergeTree::from_shape(rec(self, self.root(), h))
    }

    pub fn is_identifiable(&self, cfg: &IdentifiabilityConfig) -> Identifiability {
        identifiability(&self.masses(), cfg)
    }

    /// Every merge has two children and no two merges share a height.
    pub fn is_binary(&self) -> bool {
        let mut seen = HashSet::new();
        self.merges()
            .iter()
            .all(|m| m.children.len() == 2 && seen.insert(m.height.to_bits()))
    }

    /// Measure-preserving isometry up to `tol` on heights and masses.
    pub fn isomorphic(&self, other: &MergeTree, tol: f64) -> bool {
        self.len() == other.len()
            && self.merges().len() == other.merges().len()
            && iso(self, self.root(), other, other.root(), tol)
    }
}

fn iso(a: &MergeTree, x: NodeRef, b: &MergeTree, y: NodeRef, tol: f64) -> bool {
    if (a.mass(x) - b.mass(y)).abs() > tol || (a.height(x) - b.height(y)).abs() > tol {
        return false;
    }
    match (x, y) {
        (NodeRef::Leaf(_), NodeRef::Leaf(_)) => true,
        (NodeRef::Merge(i), NodeRef::Merge(j)) => {
            let ca = &a.merges()[i].children;
            let cb = &b.merges()[j].children;
            if ca.len() != cb.len() || a.leaf_range(x).len() != b.leaf_range(y).len() {
                return false;
            }
            let split = |t: &MergeTree, cs: &[NodeRef]| {
                let mut leaves: Vec<f64> = Vec::new();
                let mut merges: Vec<NodeRef> = Vec::new();
                for &c in cs {
                    match c {
                        NodeRef::Leaf(_) => leaves.push(t.mass(c)),
                        NodeRef::Merge(_) => merges.push(c),
                    }
                }
                leaves.sort_by(f64::total_cmp);
                (leaves, merges)
            };
            let (la, ma) = split(a, ca);
            let (lb, mb) = split(b, cb);
            if la.len() != lb.len() || la.iter().zip(&lb).any(|(p, q)| (p - q).abs() > tol) {
                return false;
            }
            let mut ha: Vec<f64> = ma.iter().map(|&c| a.height(c)).collect();
            let mut hb: Vec<f64> = mb.iter().map(|&c| b.height(c)).collect();
            ha.sort_by(f64::total_cmp);
            hb.sort_by(f64::total_cmp);
            if ha.iter().zip(&hb).any(|(p, q)| (p - q).abs() > tol) {
                return false;
            }
            let mut used = vec![false; mb.len()];
            match_children(a, &ma, b, &mb, 0, &mut used, tol)
        }
        _ => false,
    }
}

fn match_children(
    a: &MergeTree,
    ca: &[NodeRef],
    b: &MergeTree,
    cb: &[NodeRef],
    pos: usize,
    used: &mut [bool],
    tol: f64,
) -> bool {
    if pos == ca.len() {
        return true;
    }
    for k in 0..cb.len() {
        if !used[k] && iso(a, ca[pos], b, cb[k], tol) {
            used[k] = true;
            if match_children(a, ca, b, cb, pos + 1, used, tol) {
                return true;
            }
            used[k] = false;
        }
    }
    false
}

/// Joins `parts` under a new root at height `h`. Parts whose root sits
/// exactly at `h` are merged into the new root rather than nested.
pub fn concat(parts: &[MergeTree], h: f64) -> Result<MergeTree> {
    check_depth(h)?;
    if parts.is_empty() {
        return invalid("concatenation needs at least one part");
    }
    for (index, p) in parts.iter().enumerate() {
        if p.root_height() > h {
            return Err(Error::ConcatTooTall {
                index,
                diameter: p.root_height(),
                height: h,
            });
        }
    }
    if parts.len() == 1 {
        return Ok(parts[0].clone());
    }
    let mut children = Vec::new();
    for p in parts {
        match p.to_shape() {
            Shape::Node {
                height,
                children: grand,
            } if height == h => children.extend(grand),
            s => children.push(s),
        }
    }
    MergeTree::from_shape(Shape::node(h, children))
}

/// Subset-sum distinctness of a mass vector.
pub fn identifiability(masses: &[f64], cfg: &IdentifiabilityConfig) -> Identifiability {
    let n = masses.len();
    let total: f64 = masses.iter().sum();
    let tol = cfg.rel_tol * total;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| masses[a].total_cmp(&masses[b]));
    for w in order.windows(2) {
        if (masses[w[1]] - masses[w[0]]).abs() <= tol {
            return Identifiability::NotIdentifiable {
                left: vec![w[0]],
                right: vec![w[1]],
            };
        }
    }
    let witness = |a: u64, b: u64| {
        let common = a & b;
        let (a, b) = (a & !common, b & !common);
        let bits = |m: u64| (0..n).filter(|&i| m >> i & 1 == 1).collect::<Vec<_>>();
        Identifiability::NotIdentifiable {
            left: bits(a),
            right: bits(b),
        }
    };
    if n <= cfg.exact_cap.min(40) {
        let mut sums: Vec<(f64, u64)> = Vec::with_capacity(1 << n);
        sums.push((0.0, 0));
        for (i, &m) in masses.iter().enumerate() {
            let len = sums.len();
            for k in 0..len {
                let (s, mask) = sums[k];
                sums.push((s + m, mask | 1 << i));
            }
        }
        sums.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in sums.windows(2) {
            if w[1].0 - w[0].0 <= tol {
                return witness(w[0].1, w[1].1);
            }
        }
        return Identifiability::Identifiable;
    }
    // Randomized probe: any two distinct subsets with equal sums certify
    // non-identifiability after removing their common part.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = n.min(63);
    let mut sums: Vec<(f64, u64)> = Vec::with_capacity(cfg.probes);
    for _ in 0..cfg.probes {
        let size = 1 + (rand::Rng::random::<u32>(&mut rng) as usize) % k;
        let mut mask = 0u64;
        let mut s = 0.0;
        for i in sample(&mut rng, k, size) {
            mask |= 1 << i;
            s += masses[i];
        }
        sums.push((s, mask));
    }
    sums.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sums.windows(2) {
        if w[0].1 != w[1].1 && w[1].0 - w[0].0 <= tol {
            return witness(w[0].1, w[1].1);
        }
    }
    Identifiability::Unknown {
        leaves: n,
        probes: cfg.probes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::gen::{equilateral_triple as u, split_triple as u_n};

    /// Seven unit leaves arranged so that four closed balls remain at h = 1.
    fn figure_one() -> MergeTree {
        MergeTree::from_shape(Shape::node(
            3.0,
            vec![
                Shape::node(
                    2.0,
                    vec![
                        Shape::node(0.5, vec![Shape::leaf("a", 1.0), Shape::leaf("b", 1.0)]),
                        Shape::leaf("c", 1.0),
                    ],
                ),
                Shape::node(
                    1.5,
                    vec![
                        Shape::node(
                            0.8,
                            vec![Shape::leaf("d", 1.0), Shape::leaf("e", 1.0), Shape::leaf("f", 1.0)],
                        ),
                        Shape::leaf("g", 1.0),
                    ],
                ),
            ],
        ))
        .unwrap()
    }

    #[test]
    fn ball_partition_examples() {
        let p = u().ball_partition(1.0).unwrap();
        assert_eq!(p.block_masses, vec![3.0]);
        let p = u_n(10.0).ball_partition(1.0).unwrap();
        let mut m = p.block_masses.clone();
        m.sort_by(f64::total_cmp);
        assert_eq!(m, vec![1.0, 2.0]);
        assert_eq!(u_n(10.0).ball_partition(5.0).unwrap().block_masses, vec![3.0]);
        assert!(u().ball_partition(0.0).is_err());
        assert!(u().ball_partition(-1.0).is_err());
    }

    #[test]
    fn family_size_examples() {
        assert_eq!(u().family_sizes(1.0).unwrap().entries(), &[3.0]);
        assert_eq!(u().family_sizes(0.5).unwrap().entries(), &[1.0, 1.0, 1.0]);
        assert_eq!(u().family_sizes_left_limit(1.0).unwrap().entries(), &[1.0, 1.0, 1.0]);
        let single = MergeTree::single("p", 0.7).unwrap();
        assert_eq!(single.family_sizes(3.0).unwrap().entries(), &[0.7]);
        let t = MergeTree::from_shape(Shape::node(
            1.0,
            vec![Shape::leaf("a", 0.2), Shape::leaf("b", 0.5), Shape::leaf("c", 0.3)],
        ))
        .unwrap();
        assert_eq!(t.family_sizes_at_zero().entries(), &[0.5, 0.3, 0.2]);
        let t = u_n(4.0);
        assert_eq!(t.family_sizes_left_limit(1.1).unwrap(), t.family_sizes(1.1).unwrap());
    }

    #[test]
    fn ball_counts() {
        assert_eq!(u_n(10.0).num_balls(1.0).unwrap(), 2);
        assert_eq!(u_n(10.0).num_balls(1.1).unwrap(), 1);
        assert_eq!(figure_one().num_balls(1.0).unwrap(), 4);
    }

    #[test]
    fn cut_and_psi() {
        let n = 10.0;
        let c = u_n(n).cut(1.0).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.masses(), vec![1.0, 2.0]);
        assert!((c.root_height() - 1.0 / n).abs() < 1e-15);
        let p = u_n(n).psi(1.0).unwrap();
        assert_eq!(p.masses(), vec![1.0, 2.0]);
        assert_eq!(p.root_height(), 1.0 + 1.0 / n);
        assert_eq!(p.len(), u_n(n).num_balls(1.0).unwrap());
        let all = u_n(n).cut(2.0).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all.total_mass(), 3.0);
        assert_eq!(u_n(n).psi(2.0).unwrap().len(), 1);
    }

    #[test]
    fn cut_is_a_semigroup() {
        let t = figure_one();
        let lhs = t.cut(0.6).unwrap().cut(0.9).unwrap();
        let rhs = t.cut(1.5).unwrap();
        assert!(lhs.isomorphic(&rhs, 1e-12));
    }

    #[test]
    fn top_examples() {
        assert!(u_n(7.0).top(1.0).unwrap().isomorphic(&u(), 0.0));
        assert_eq!(u_n(7.0).top(5.0).unwrap(), u_n(7.0));
        let t = figure_one();
        let a = t.top(2.0).unwrap().top(1.2).unwrap();
        assert_eq!(a, t.top(1.2).unwrap());
    }

    #[test]
    fn concat_examples() {
        let a = MergeTree::single("a", 0.3).unwrap();
        let b = MergeTree::single("b", 0.7).unwrap();
        let t = concat(&[a.clone(), b.clone()], 2.0).unwrap();
        assert_eq!(t.root_height(), 2.0);
        assert_eq!(t.total_mass(), 1.0);
        let tall = u_n(2.0);
        assert!(matches!(
            concat(&[a.clone(), tall], 1.2),
            Err(Error::ConcatTooTall { index: 1, .. })
        ));
        // Reassembling the balls of a tree.
        let t = figure_one();
        let h = 1.0;
        let parts: Vec<MergeTree> = t
            .ball_partition(h)
            .unwrap()
            .blocks
            .iter()
            .map(|b| subtree(&t, b))
            .collect();
        let joined = concat(&parts, h).unwrap();
        // The parts are exactly the open h-balls of the joined tree.
        assert_eq!(joined.family_sizes_left_limit(h).unwrap().len(), parts.len());
        assert!(joined.isomorphic(&t.top(h).unwrap(), 0.0));
    }

    fn subtree(t: &MergeTree, block: &[usize]) -> MergeTree {
        let m = t.to_matrix();
        let idx: Vec<usize> = block.to_vec();
        let labels = idx.iter().map(|&i| m.labels()[i].clone()).collect();
        let dist = idx.iter().map(|&i| idx.iter().map(|&j| m.dist()[i][j]).collect()).collect();
        let mass = idx.iter().map(|&i| m.mass()[i]).collect();
        crate::umspace::UltrametricMatrixSpace::new(labels, dist, mass)
            .unwrap()
            .to_merge_tree()
            .unwrap()
    }

    #[test]
    fn identifiability_examples() {
        let cfg = IdentifiabilityConfig::default();
        assert_eq!(identifiability(&[1.0, 2.0, 4.0], &cfg), Identifiability::Identifiable);
        assert!(matches!(identifiability(&[1.0, 1.0], &cfg), Identifiability::NotIdentifiable { .. }));
        match identifiability(&[5.0, 3.0, 2.0], &cfg) {
            Identifiability::NotIdentifiable { left, right } => {
                let sum = |v: &[usize]| v.iter().map(|&i| [5.0, 3.0, 2.0][i]).sum::<f64>();
                assert_eq!(sum(&left), sum(&right));
                assert!(left.iter().all(|i| !right.contains(i)));
            }
            other => panic!("unexpected {other:?}"),
        }
        let big: Vec<f64> = (0..30).map(|i| 2f64.powi(i)).collect();
        let cfg_small = IdentifiabilityConfig { probes: 1000, ..cfg };
        assert!(matches!(identifiability(&big, &cfg_small), Identifiability::Unknown { .. }));
    }

    #[test]
    fn binary_examples() {
        assert!(!u().is_binary());
        assert!(u_n(3.0).is_binary());
        assert!(MergeTree::single("a", 1.0).unwrap().is_binary());
        let twin = MergeTree::from_shape(Shape::node(
            2.0,
            vec![
                Shape::node(1.0, vec![Shape::leaf("a", 1.0), Shape::leaf("b", 2.0)]),
                Shape::node(1.0, vec![Shape::leaf("c", 3.0), Shape::leaf("d", 4.0)]),
            ],
        ))
        .unwrap();
        assert!(!twin.is_binary());
    }

    #[test]
    fn isomorphism_examples() {
        let t = figure_one();
        assert!(t.isomorphic(&t, 0.0));
        let relabeled = MergeTree::from_shape(Shape::node(
            1.0,
            vec![Shape::leaf("q", 1.0), Shape::leaf("r", 1.0), Shape::leaf("s", 1.0)],
        ))
        .unwrap();
        assert!(relabeled.isomorphic(&u(), 0.0));
        for n in [1.0, 10.0, 1e6] {
            assert!(!u_n(n).isomorphic(&u(), 1e-9));
        }
        assert!(u_n(1e12).isomorphic(&u_n(1e12 + 1.0), 1e-9));
    }
}
