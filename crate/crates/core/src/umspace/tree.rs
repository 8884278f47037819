use std::cmp::Ordering;
use std::collections::HashSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A point of the space together with its (strictly positive) mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub label: String,
    pub mass: f64,
}

impl Leaf {
    pub fn new(label: impl Into<String>, mass: f64) -> Self {
        Leaf {
            label: label.into(),
            mass,
        }
    }
}

/// Reference to a node of a [`MergeTree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRef {
    Leaf(usize),
    Merge(usize),
}

/// An internal node: the children join at `height`.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub height: f64,
    pub children: Vec<NodeRef>,
    mass: f64,
    leaves: Range<usize>,
}

impl Merge {
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Leaves below this node; contiguous because leaves are stored in
    /// depth-first order of the canonical tree.
    pub fn leaf_range(&self) -> Range<usize> {
        self.leaves.clone()
    }
}

/// Nested, unvalidated description of a tree. Every constructor of
/// [`MergeTree`] goes through this form.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Leaf(Leaf),
    Node { height: f64, children: Vec<Shape> },
}

impl Shape {
    pub fn leaf(label: impl Into<String>, mass: f64) -> Self {
        Shape::Leaf(Leaf::new(label, mass))
    }

    pub fn node(height: f64, children: Vec<Shape>) -> Self {
        Shape::Node { height, children }
    }

    pub fn height(&self) -> f64 {
        match self {
            Shape::Leaf(_) => 0.0,
            Shape::Node { height, .. } => *height,
        }
    }

    pub fn mass(&self) -> f64 {
        match self {
            Shape::Leaf(l) => l.mass,
            Shape::Node { children, .. } => children.iter().map(Shape::mass).sum(),
        }
    }

    fn visit_leaves<'a>(&'a self, out: &mut Vec<&'a Leaf>) {
        match self {
            Shape::Leaf(l) => out.push(l),
            Shape::Node { children, .. } => children.iter().for_each(|c| c.visit_leaves(out)),
        }
    }
}

/// Canonical representation of a finite ultrametric measure space.
///
/// Leaves are kept in depth-first order of the canonically ordered tree, so
/// the leaf set of every subtree is a contiguous index range. Merges are in
/// post-order; the root is the last merge (or the single leaf).
#[derive(Debug, Clone, PartialEq)]
pub struct MergeTree {
    leaves: Vec<Leaf>,
    merges: Vec<Merge>,
}

struct Canon {
    code: String,
    height: f64,
    mass: f64,
    shape: Shape,
}

fn canon_order(a: &Canon, b: &Canon) -> Ordering {
    a.height
        .total_cmp(&b.height)
        .then(a.mass.total_cmp(&b.mass))
        .then_with(|| a.code.cmp(&b.code))
        .then_with(|| first_label(&a.shape).cmp(first_label(&b.shape)))
}

fn first_label(s: &Shape) -> &str {
    match s {
        Shape::Leaf(l) => &l.label,
        Shape::Node { children, .. } => first_label(&children[0]),
    }
}

fn canonicalize(shape: Shape) -> Result<Canon> {
    match shape {
        Shape::Leaf(leaf) => {
            if !(leaf.mass.is_finite() && leaf.mass > 0.0) {
                return invalid(format!(
                    "leaf '{}' has non-positive or non-finite mass {}",
                    leaf.label, leaf.mass
                ));
            }
            Ok(Canon {
                code: format!("L{:?}", leaf.mass),
                height: 0.0,
                mass: leaf.mass,
                shape: Shape::Leaf(leaf),
            })
        }
        Shape::Node { height, children } => {
            if !(height.is_finite() && height > 0.0) {
                return invalid(format!("merge height {height} must be positive and finite"));
            }
            if children.len() < 2 {
                return invalid(format!(
                    "merge at height {height} has {} child(ren); at least 2 required",
                    children.len()
                ));
            }
            let mut kids = children
                .into_iter()
                .map(canonicalize)
                .collect::<Result<Vec<_>>>()?;
            for k in &kids {
                if k.height >= height {
                    return invalid(format!(
                        "child height {} is not below its parent height {height}",
                        k.height
                    ));
                }
            }
            kids.sort_by(canon_order);
            let mass = kids.iter().map(|k| k.mass).sum();
            let mut code = format!("N{height:?}[");
            for (i, k) in kids.iter().enumerate() {
                if i > 0 {
                    code.push(',');
                }
                code.push_str(&k.code);
            }
            code.push(']');
            Ok(Canon {
                code,
                height,
                mass,
                shape: Shape::Node {
                    height,
                    children: kids.into_iter().map(|k| k.shape).collect(),
                },
            })
        }
    }
}

impl MergeTree {
    /// Validates and canonicalizes a nested tree description.
    pub fn from_shape(shape: Shape) -> Result<Self> {
        let canon = canonicalize(shape)?;
        let mut seen = HashSet::new();
        let mut all = Vec::new();
        canon.shape.visit_leaves(&mut all);
        for l in &all {
            if !seen.insert(l.label.as_str()) {
                return invalid(format!("duplicate leaf label '{}'", l.label));
            }
        }
        let mut tree = MergeTree {
            leaves: Vec::with_capacity(all.len()),
            merges: Vec::new(),
        };
        tree.emit(canon.shape);
        Ok(tree)
    }

    fn emit(&mut self, shape: Shape) -> NodeRef {
        match shape {
            Shape::Leaf(l) => {
                self.leaves.push(l);
                NodeRef::Leaf(self.leaves.len() - 1)
            }
            Shape::Node { height, children } => {
                let start = self.leaves.len();
                let refs: Vec<NodeRef> = children.into_iter().map(|c| self.emit(c)).collect();
                let end = self.leaves.len();
                let mass = self.leaves[start..end].iter().map(|l| l.mass).sum();
                self.merges.push(Merge {
                    height,
                    children: refs,
                    mass,
                    leaves: start..end,
                });
                NodeRef::Merge(self.merges.len() - 1)
            }
        }
    }

    pub fn single(label: impl Into<String>, mass: f64) -> Result<Self> {
        Self::from_shape(Shape::leaf(label, mass))
    }

    /// Builds a tree from leaves and merges given as flat index references:
    /// `0..n` are leaves, `n + k` is the k-th merge. Merges may appear in any
    /// order as long as the references form a single rooted tree.
    pub fn from_parts(leaves: Vec<Leaf>, merges: Vec<(f64, Vec<usize>)>) -> Result<Self> {
        let n = leaves.len();
        if n == 0 {
            return invalid("tree has no leaves");
        }
        let total = n + merges.len();
        let mut parent = vec![None; total];
        for (k, (_, children)) in merges.iter().enumerate() {
            for &c in children {
                if c >= total {
                    return invalid(format!("merge {k} references unknown node {c}"));
                }
                if c == n + k {
                    return invalid(format!("merge {k} references itself"));
                }
                if parent[c].replace(k).is_some() {
                    return invalid(format!("node {c} has more than one parent"));
                }
            }
        }
        let roots: Vec<usize> = (0..total).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            return invalid(format!("expected exactly one root, found {}", roots.len()));
        }
        let mut leaf_slots: Vec<Option<Leaf>> = leaves.into_iter().map(Some).collect();
        let mut merge_slots: Vec<Option<(f64, Vec<usize>)>> = merges.into_iter().map(Some).collect();
        fn build(
            id: usize,
            n: usize,
            leaves: &mut [Option<Leaf>],
            merges: &mut [Option<(f64, Vec<usize>)>],
            depth: usize,
        ) -> Result<Shape> {
            if depth > leaves.len() + merges.len() {
                return invalid("cycle in merge references");
            }
            if id < n {
                match leaves[id].take() {
                    Some(l) => Ok(Shape::Leaf(l)),
                    None => invalid(format!("leaf {id} used twice")),
                }
            } else {
                match merges[id - n].take() {
                    Some((height, children)) => {
                        let kids = children
                            .into_iter()
                            .map(|c| build(c, n, leaves, merges, depth + 1))
                            .collect::<Result<Vec<_>>>()?;
                        Ok(Shape::Node {
                            height,
                            children: kids,
                        })
                    }
                    None => invalid(format!("merge {} used twice", id - n)),
                }
            }
        }
        let shape = build(roots[0], n, &mut leaf_slots, &mut merge_slots, 0)?;
        if leaf_slots.iter().any(Option::is_some) || merge_slots.iter().any(Option::is_some) {
            return invalid("tree is disconnected");
        }
        Self::from_shape(shape)
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn root(&self) -> NodeRef {
        if self.merges.is_empty() {
            NodeRef::Leaf(0)
        } else {
            NodeRef::Merge(self.merges.len() - 1)
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self.root() {
            NodeRef::Leaf(i) => self.leaves[i].mass,
            NodeRef::Merge(k) => self.merges[k].mass,
        }
    }

    /// Height of the root, i.e. the diameter of the space.
    pub fn root_height(&self) -> f64 {
        self.height(self.root())
    }

    pub fn height(&self, node: NodeRef) -> f64 {
        match node {
            NodeRef::Leaf(_) => 0.0,
            NodeRef::Merge(k) => self.merges[k].height,
        }
    }

    pub fn mass(&self, node: NodeRef) -> f64 {
        match node {
            NodeRef::Leaf(i) => self.leaves[i].mass,
            NodeRef::Merge(k) => self.merges[k].mass,
        }
    }

    pub fn leaf_range(&self, node: NodeRef) -> Range<usize> {
        match node {
            NodeRef::Leaf(i) => i..i + 1,
            NodeRef::Merge(k) => self.merges[k].leaf_range(),
        }
    }

    pub fn masses(&self) -> Vec<f64> {
        self.leaves.iter().map(|l| l.mass).collect()
    }

    /// Distinct internal node heights in increasing order.
    pub fn merge_heights(&self) -> Vec<f64> {
        let mut hs: Vec<f64> = self.merges.iter().map(|m| m.height).collect();
        hs.sort_by(f64::total_cmp);
        hs.dedup();
        hs
    }

    pub fn to_shape(&self) -> Shape {
        self.shape_of(self.root())
    }

    pub fn shape_of(&self, node: NodeRef) -> Shape {
        match node {
            NodeRef::Leaf(i) => Shape::Leaf(self.leaves[i].clone()),
            NodeRef::Merge(k) => Shape::Node {
                height: self.merges[k].height,
                children: self.merges[k]
                    .children
                    .iter()
                    .map(|&c| self.shape_of(c))
                    .collect(),
            },
        }
    }

    /// Label-free canonical code; two trees have equal codes iff they are
    /// isomorphic with bit-identical heights and masses.
    pub fn canonical_code(&self) -> String {
        self.code_of(self.root())
    }

    fn code_of(&self, node: NodeRef) -> String {
        match node {
            NodeRef::Leaf(i) => format!("L{:?}", self.leaves[i].mass),
            NodeRef::Merge(k) => {
                let m = &self.merges[k];
                let kids: Vec<String> = m.children.iter().map(|&c| self.code_of(c)).collect();
                format!("N{:?}[{}]", m.height, kids.join(","))
            }
        }
    }

    /// Pairwise distances: the height of the lowest common ancestor.
    pub fn distance_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut d = vec![vec![0.0; n]; n];
        for m in &self.merges {
            let ranges: Vec<Range<usize>> = m.children.iter().map(|&c| self.leaf_range(c)).collect();
            for (a, ra) in ranges.iter().enumerate() {
                for rb in &ranges[a + 1..] {
                    for i in ra.clone() {
                        for j in rb.clone() {
                            d[i][j] = m.height;
                            d[j][i] = m.height;
                        }
                    }
                }
            }
        }
        d
    }
}
