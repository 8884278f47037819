use crate::error::{Error, Result};
use crate::profiles::{ProfilePath, RankedProfile};
use crate::umspace::{identifiability, Identifiability, IdentifiabilityConfig, MergeTree, Shape};

use super::{Certificate, ReconstructOptions, ReconstructionTrace, TraceStep};

/// A subtree built so far, with a label-free code used to tell groupings
/// apart up to isomorphism.
#[derive(Clone)]
struct Component {
    mass: f64,
    shape: Shape,
    code: String,
}

impl Component {
    fn leaf(i: usize, mass: f64) -> Self {
        Component {
            mass,
            shape: Shape::leaf(format!("x{}", i + 1), mass),
            code: format!("{mass:?}"),
        }
    }

    fn merge(height: f64, parts: Vec<Component>) -> Self {
        let mass = parts.iter().map(|c| c.mass).sum();
        let mut codes: Vec<&str> = parts.iter().map(|c| c.code.as_str()).collect();
        codes.sort_unstable();
        let code = format!("({height:?}:{})", codes.join(","));
        Component {
            mass,
            shape: Shape::node(height, parts.into_iter().map(|c| c.shape).collect()),
            code,
        }
    }
}

struct Search<'a> {
    items: &'a [Component],
    /// Item indices sorted by decreasing mass, equal codes adjacent.
    order: Vec<usize>,
    entries: &'a [f64],
    tol: f64,
    budget: usize,
    explored: usize,
    used: Vec<bool>,
    groups: Vec<Vec<usize>>,
    found: Vec<(Vec<Vec<String>>, Vec<Vec<usize>>)>,
}

impl Search<'_> {
    fn tick(&mut self) -> Result<()> {
        self.explored += 1;
        if self.explored > self.budget {
            return Err(Error::BudgetExceeded(format!("path search exceeded {} nodes", self.budget)));
        }
        Ok(())
    }

    /// Groups entries `entry..` from the unused items.
    fn assign(&mut self, entry: usize) -> Result<()> {
        if self.found.len() >= 2 {
            return Ok(());
        }
        if entry == self.entries.len() {
            if self.used.iter().all(|&u| u) {
                let mut sig: Vec<Vec<String>> = self
                    .groups
                    .iter()
                    .map(|g| {
                        let mut c: Vec<String> = g.iter().map(|&i| self.items[i].code.clone()).collect();
                        c.sort_unstable();
                        c
                    })
                    .collect();
                sig.sort_unstable();
                if !self.found.iter().any(|(s, _)| *s == sig) {
                    self.found.push((sig, self.groups.clone()));
                }
            }
            return Ok(());
        }
        self.subset(entry, 0, 0.0)
    }

    fn subset(&mut self, entry: usize, start: usize, partial: f64) -> Result<()> {
        self.tick()?;
        let target = self.entries[entry];
        if !self.groups[entry].is_empty() && (partial - target).abs() <= self.tol {
            self.assign(entry + 1)?;
        }
        let free: f64 = self.order[start..]
            .iter()
            .filter(|&&i| !self.used[i])
            .map(|&i| self.items[i].mass)
            .sum();
        if partial + free < target - self.tol {
            return Ok(());
        }
        let items = self.items;
        let mut prev_code: Option<&str> = None;
        for k in start..self.order.len() {
            let i = self.order[k];
            if self.used[i] {
                continue;
            }
            // Taking the first of several interchangeable items is enough.
            let code = items[i].code.as_str();
            if prev_code == Some(code) {
                continue;
            }
            prev_code = Some(code);
            if partial + self.items[i].mass > target + self.tol {
                continue;
            }
            self.used[i] = true;
            self.groups[entry].push(i);
            self.subset(entry, k + 1, partial + self.items[i].mass)?;
            self.groups[entry].pop();
            self.used[i] = false;
            if self.found.len() >= 2 {
                break;
            }
        }
        Ok(())
    }
}

fn profiles_close(a: &RankedProfile, b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.entries().iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Rebuilds a tree from its family-size decomposition, merging at each jump
/// the unique grouping of the previous families that produces the new
/// profile.
pub fn tree_from_path(path: &ProfilePath, opts: &ReconstructOptions) -> Result<(MergeTree, ReconstructionTrace)> {
    let atoms = path
        .zero_value()
        .ok_or_else(|| Error::Invalid("path has no value at depth 0 (atomic profile)".into()))?;
    if atoms.is_empty() {
        return Err(Error::Invalid("atomic profile is empty".into()));
    }
    if opts.check_identifiable {
        if let Identifiability::NotIdentifiable { left, right } =
            identifiability(atoms.entries(), &IdentifiabilityConfig::default())
        {
            return Err(Error::NotIdentifiable(format!(
                "atoms {left:?} and {right:?} (ranked indices) have equal total mass"
            )));
        }
    }
    let mut forest: Vec<Component> = atoms.entries().iter().enumerate().map(|(i, &m)| Component::leaf(i, m)).collect();
    if !profiles_close(&path.values()[0], atoms.entries(), opts.tol) {
        return Err(Error::InconsistentPath("value just above depth 0 differs from the atoms".into()));
    }

    let mut steps = Vec::with_capacity(path.jumps().len());
    let mut explored = 0;
    for (k, &h) in path.jumps().iter().enumerate() {
        let entries = path.values()[k + 1].entries();
        let total: f64 = forest.iter().map(|c| c.mass).sum();
        if (total - entries.iter().sum::<f64>()).abs() > opts.tol * (1 + forest.len()) as f64 {
            return Err(Error::InconsistentPath(format!("total mass changes at jump {h}")));
        }
        let mut order: Vec<usize> = (0..forest.len()).collect();
        order.sort_by(|&a, &b| forest[b].mass.total_cmp(&forest[a].mass).then_with(|| forest[a].code.cmp(&forest[b].code)));
        let mut search = Search {
            items: &forest,
            order,
            entries,
            tol: opts.tol,
            budget: opts.budget.saturating_sub(explored),
            explored: 0,
            used: vec![false; forest.len()],
            groups: vec![Vec::new(); entries.len()],
            found: Vec::new(),
        };
        search.assign(0)?;
        explored += search.explored;
        let mut found = search.found;
        match found.len() {
            0 => return Err(Error::InconsistentPath(format!("no grouping of the families matches the profile at {h}"))),
            1 => {}
            _ => {
                return Err(Error::AmbiguousMatch(format!(
                    "at least two non-isomorphic groupings at {h}: {:?} and {:?}",
                    found[0].1, found[1].1
                )))
            }
        }
        let (_, mut groups) = found.pop().expect("one grouping");
        for g in &mut groups {
            g.sort_unstable();
        }
        forest = groups
            .iter()
            .map(|g| match g.as_slice() {
                [i] => forest[*i].clone(),
                _ => Component::merge(h, g.iter().map(|&i| forest[i].clone()).collect()),
            })
            .collect();
        steps.push(TraceStep::Merge { height: h, groups });
    }
    if forest.len() != 1 {
        return Err(Error::InconsistentPath(format!("path ends with {} families instead of one", forest.len())));
    }
    let tree = MergeTree::from_shape(forest.pop().expect("one component").shape)?;

    let back = tree.decomposition_path();
    if back.jumps() != path.jumps() {
        return Err(Error::Certificate("jump heights of the reconstruction differ".into()));
    }
    let mut max_deviation = 0.0f64;
    for (a, b) in back.values().iter().zip(path.values()) {
        if a.len() != b.len() {
            return Err(Error::Certificate("profile lengths of the reconstruction differ".into()));
        }
        max_deviation = a.entries().iter().zip(b.entries()).fold(max_deviation, |m, (x, y)| m.max((x - y).abs()));
    }
    if max_deviation > opts.tol {
        return Err(Error::Certificate(format!("profiles deviate by {max_deviation}")));
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
