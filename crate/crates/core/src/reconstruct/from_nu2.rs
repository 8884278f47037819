use crate::error::{Error, Result};
use crate::measures::{nu2, AtomicMeasure1D};
use crate::umspace::{Identifiability, IdentifiabilityConfig, MergeTree, Shape};

use super::{Certificate, ReconstructOptions, ReconstructionTrace, TraceStep};

#[derive(Clone, Copy)]
struct Ball {
    mass: f64,
    split: Option<(f64, usize, usize)>,
}

struct Search {
    /// `(height, x·y)` for every positive atom, highest first.
    splits: Vec<(f64, f64)>,
    /// `suffix_max[k]` = largest product among `splits[k..]`.
    suffix_max: Vec<f64>,
    balls: Vec<Ball>,
    open: Vec<usize>,
    steps: Vec<TraceStep>,
    slack: f64,
    same: f64,
    budget: usize,
    explored: usize,
    /// `(tree, steps, identifiable)` per distinct completion.
    found: Vec<(MergeTree, Vec<TraceStep>, bool)>,
    max_found: usize,
    max_identifiable: usize,
}

impl Search {
    fn done(&self) -> bool {
        self.found.len() >= self.max_found || self.found.iter().filter(|f| f.2).count() >= self.max_identifiable
    }

    fn shape(&self, b: usize, next_label: &mut usize) -> Shape {
        match self.balls[b].split {
            Some((h, l, r)) => Shape::node(h, vec![self.shape(l, next_label), self.shape(r, next_label)]),
            None => {
                *next_label += 1;
                Shape::leaf(format!("x{next_label}"), self.balls[b].mass)
            }
        }
    }

    fn dfs(&mut self, k: usize) -> Result<()> {
        self.explored += 1;
        if self.explored > self.budget {
            return Err(Error::BudgetExceeded(format!("ν² search exceeded {} nodes", self.budget)));
        }
        if k == self.splits.len() {
            let tree = MergeTree::from_shape(self.shape(0, &mut 0))?;
            if !self.found.iter().any(|(t, ..)| t.isomorphic(&tree, self.same)) {
                let ident = !matches!(
                    tree.is_identifiable(&IdentifiabilityConfig::default()),
                    Identifiability::NotIdentifiable { .. }
                );
                self.found.push((tree, self.steps.clone(), ident));
            }
            return Ok(());
        }
        // Every later split happens inside one of the open balls.
        let largest = self.open.iter().map(|&b| self.balls[b].mass).fold(0.0, f64::max);
        if largest * largest < 4.0 * self.suffix_max[k] - self.slack {
            return Ok(());
        }
        let (h, s) = self.splits[k];
        let mut tried: Vec<f64> = Vec::new();
        for pos in 0..self.open.len() {
            let b = self.open[pos];
            let a = self.balls[b].mass;
            let disc = a * a - 4.0 * s;
            if disc < -self.slack || tried.iter().any(|&m| (m - a).abs() <= self.same) {
                continue;
            }
            // Unsplit balls of equal mass are interchangeable.
            tried.push(a);
            // A discriminant at rounding level means equal halves; its square
            // root would otherwise blow the residue up to ~1e-8.
            let disc = if disc <= 16.0 * f64::EPSILON * a * a { 0.0 } else { disc };
            let x = 0.5 * (a + disc.sqrt());
            let y = s / x;
            let l = self.balls.len();
            self.balls.push(Ball { mass: x, split: None });
            self.balls.push(Ball { mass: y, split: None });
            self.balls[b].split = Some((h, l, l + 1));
            self.open.swap_remove(pos);
            self.open.extend([l, l + 1]);
            self.steps.push(TraceStep::Split {
                height: h,
                parent: a,
                children: (x, y),
            });

            self.dfs(k + 1)?;

            self.steps.pop();
            self.open.truncate(self.open.len() - 2);
            self.open.push(b);
            let last = self.open.len() - 1;
            self.open.swap(pos, last);
            self.balls[b].split = None;
            self.balls.truncate(l);
            if self.done() {
                break;
            }
        }
        Ok(())
    }
}

type Found = Vec<(MergeTree, Vec<TraceStep>, bool)>;

fn search(m: &AtomicMeasure1D, opts: &ReconstructOptions, max_found: usize, max_identifiable: usize) -> Result<(Found, usize)> {
    let atoms = m.atoms();
    let b0 = m.mass_at(0.0);
    if atoms.is_empty() || b0 <= 0.0 {
        return Err(Error::NoCompletion("ν² of a tree has an atom at 0".into()));
    }
    if atoms.iter().any(|&(h, _)| h < 0.0) {
        return Err(Error::NoCompletion("ν² lives on [0, ∞)".into()));
    }
    let total = m.total_mass();
    let root = total.sqrt();
    let splits: Vec<(f64, f64)> = atoms.iter().rev().filter(|a| a.0 > 0.0).map(|&(h, w)| (h, 0.5 * w)).collect();
    let mut suffix_max = vec![0.0f64; splits.len() + 1];
    for k in (0..splits.len()).rev() {
        suffix_max[k] = suffix_max[k + 1].max(splits[k].1);
    }
    let mut search = Search {
        splits,
        suffix_max,
        balls: vec![Ball { mass: root, split: None }],
        open: vec![0],
        steps: Vec::new(),
        slack: opts.tol * total.max(1.0),
        same: opts.tol * root.max(1.0),
        budget: opts.budget,
        explored: 0,
        found: Vec::new(),
        max_found,
        max_identifiable,
    };
    search.dfs(0)?;
    Ok((search.found, search.explored))
}

/// Binary trees (up to isomorphism, at most `cap`) whose `ν²` is `m`.
pub fn nu2_completions(m: &AtomicMeasure1D, opts: &ReconstructOptions, cap: usize) -> Result<Vec<MergeTree>> {
    Ok(search(m, opts, cap, usize::MAX)?.0.into_iter().map(|(t, ..)| t).collect())
}

/// Rebuilds a binary tree from its distance distribution `ν²` alone, top
/// down: the root has mass `√(ν² total)` and every positive atom `w` at `h`
/// splits one current ball `a` into `x + y = a` with `2xy = w`.
///
/// All binary completions are enumerated. A unique completion, or a unique
/// identifiable one among several, is returned; otherwise the input is
/// reported as [`Error::MultipleCompletions`]. Note that distinct binary
/// identifiable trees can share `ν²` (see the tests), so the second case
/// does occur for valid inputs.
pub fn tree_from_nu2(m: &AtomicMeasure1D, opts: &ReconstructOptions) -> Result<(MergeTree, ReconstructionTrace)> {
    let (found, explored) = search(m, opts, usize::MAX, 2)?;
    let atoms = m.atoms();
    let total = m.total_mass();
    let total_found = found.len();
    let mut candidates: Vec<(MergeTree, Vec<TraceStep>, bool)> =
        found.into_iter().filter(|f| total_found == 1 || f.2).collect();
    let (tree, steps) = match candidates.len() {
        0 if total_found == 0 => return Err(Error::NoCompletion("no binary tree has this ν²".into())),
        1 => {
            let (t, steps, _) = candidates.pop().expect("one candidate");
            (t, steps)
        }
        _ => {
            return Err(Error::MultipleCompletions(format!(
                "{} non-isomorphic binary trees share this ν² ({} identifiable)",
                total_found,
                candidates.len()
            )))
        }
    };

    // Certificate: ν² of the result, independent of the search.
    let back = nu2(&tree);
    if back.len() != m.len() || back.atoms().iter().zip(atoms).any(|(p, q)| p.0 != q.0) {
        return Err(Error::Certificate("atom locations of ν² differ".into()));
    }
    let max_deviation = back.atoms().iter().zip(atoms).fold(0.0f64, |d, (p, q)| d.max((p.1 - q.1).abs()));
    if max_deviation > opts.tol * total.max(1.0) {
        return Err(Error::Certificate(format!("ν² masses deviate by {max_deviation}")));
    }
    Ok((
        tree,
        ReconstructionTrace {
            steps,
            nodes_explored: explored,
            certificate: Certificate {
                verified: true,
                max_deviation,
            },
        },
    ))
}
