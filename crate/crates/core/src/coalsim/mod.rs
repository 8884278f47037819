//! Moran model and Kingman coalescent simulators.
//!
//! Individuals are `0..n`. Time in a [`PartitionPath`] runs backwards from
//! the sampling time; block ids are the labels of the ancestors, so the
//! label that survives a merge is the parent of the resampling event.

mod experiment;
mod moran;

pub use experiment::{convergence_experiment, ExperimentConfig, ExperimentReport, ExperimentSummary, FamilyRow};
pub use moran::{moran_events, simulate_moran, AncestryGrid, AncestryResult, ArrowEvent};

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::profiles::RankedProfile;
use crate::rng::{stream, StreamRng};
use crate::umspace::{MergeTree, Shape, UltrametricMatrixSpace};

const KINGMAN_STREAM: u64 = 0x6b69_6e67;
const PAINTBOX_STREAM: u64 = 0x7061_696e;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoalEvent {
    /// Backward time of the merge.
    pub time: f64,
    pub survivor: usize,
    pub absorbed: usize,
}

/// A coalescent on `0..n` observed on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathRepr")]
pub struct PartitionPath {
    n: usize,
    horizon: f64,
    events: Vec<CoalEvent>,
}

#[derive(Deserialize)]
struct PathRepr {
    n: usize,
    horizon: f64,
    events: Vec<CoalEvent>,
}

impl TryFrom<PathRepr> for PartitionPath {
    type Error = Error;
    fn try_from(r: PathRepr) -> Result<Self> {
        PartitionPath::new(r.n, r.horizon, r.events)
    }
}

impl PartitionPath {
    pub fn new(n: usize, horizon: f64, events: Vec<CoalEvent>) -> Result<Self> {
        if n == 0 {
            return invalid("a coalescent needs at least one individual");
        }
        if horizon.is_nan() || horizon < 0.0 {
            return invalid(format!("horizon {horizon} must be non-negative"));
        }
        let mut alive = vec![true; n];
        let mut last = 0.0;
        for (k, e) in events.iter().enumerate() {
            if !(e.time > last && e.time <= horizon) {
                return invalid(format!("event {k} at {} is out of order or beyond the horizon", e.time));
            }
            if e.survivor >= n || e.absorbed >= n || e.survivor == e.absorbed {
                return invalid(format!("event {k} does not join two distinct labels of 0..{n}"));
            }
            if !alive[e.survivor] || !alive[e.absorbed] {
                return invalid(format!("event {k} refers to a label that has already merged"));
            }
            alive[e.absorbed] = false;
            last = e.time;
        }
        Ok(PartitionPath { n, horizon, events })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[CoalEvent] {
        &self.events
    }

    /// Label of the block of every individual after all merges at times `<= h`.
    pub fn labels_at(&self, h: f64) -> Vec<usize> {
        let mut label: Vec<usize> = (0..self.n).collect();
        for e in self.events.iter().take_while(|e| e.time <= h) {
            for l in label.iter_mut().filter(|l| **l == e.absorbed) {
                *l = e.survivor;
            }
        }
        label
    }

    /// Blocks at backward time `h`, each sorted, ordered by smallest member.
    pub fn blocks_at(&self, h: f64) -> Vec<Vec<usize>> {
        let label = self.labels_at(h);
        let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        for (i, &l) in label.iter().enumerate() {
            by_label[l].push(i);
        }
        let mut blocks: Vec<Vec<usize>> = by_label.into_iter().filter(|b| !b.is_empty()).collect();
        blocks.sort();
        blocks
    }

    /// Holding times between successive merges (the last one censored at the
    /// horizon is dropped), keyed by the number of blocks they start from.
    pub fn holding_times(&self) -> Vec<(usize, f64)> {
        let mut prev = 0.0;
        self.events
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let d = e.time - prev;
                prev = e.time;
                (self.n - k, d)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("path serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Kingman `n`-coalescent up to backward time `t` (may be infinite): with
/// `k` blocks, waits `Exp(k(k−1)/2)` and merges a uniform ordered pair.
pub fn simulate_kingman_with(n: usize, t: f64, rng: &mut StreamRng) -> Result<PartitionPath> {
    if n == 0 || t.is_nan() || t < 0.0 {
        return invalid(format!("need n >= 1 and t >= 0, got n = {n}, t = {t}"));
    }
    let mut alive: Vec<usize> = (0..n).collect();
    let mut time = 0.0;
    let mut events = Vec::with_capacity(n - 1);
    while alive.len() >= 2 {
        let k = alive.len() as f64;
        time += Exp::new(0.5 * k * (k - 1.0)).expect("positive rate").sample(rng);
        if time > t {
            break;
        }
        let i = rng.random_range(0..alive.len());
        let mut j = rng.random_range(0..alive.len() - 1);
        if j >= i {
            j += 1;
        }
        events.push(CoalEvent {
            time,
            survivor: alive[i],
            absorbed: alive[j],
        });
        alive.swap_remove(j);
    }
    Ok(PartitionPath { n, horizon: t, events })
}

pub fn simulate_kingman(n: usize, t: f64, seed: u64) -> Result<PartitionPath> {
    simulate_kingman_with(n, t, &mut stream(seed, KINGMAN_STREAM))
}

/// Restriction to the individuals `0..n`. A restricted block keeps the
/// label it had when it first became non-empty; events joining a block
/// without restricted members are dropped.
pub fn restrict_coalescent(p: &PartitionPath, n: usize) -> Result<PartitionPath> {
    if n == 0 || n > p.n {
        return invalid(format!("cannot restrict {} individuals to {n}", p.n));
    }
    let mut label: Vec<Option<usize>> = (0..p.n).map(|l| (l < n).then_some(l)).collect();
    let mut events = Vec::new();
    for e in &p.events {
        match (label[e.survivor], label[e.absorbed]) {
            (Some(x), Some(y)) => events.push(CoalEvent {
                time: e.time,
                survivor: x,
                absorbed: y,
            }),
            (None, y) => label[e.survivor] = y,
            (Some(_), None) => {}
        }
        label[e.absorbed] = None;
    }
    Ok(PartitionPath {
        n,
        horizon: p.horizon,
        events,
    })
}

fn leaf_label(i: usize) -> String {
    format!("i{i}")
}

fn check_r0(r0: &UltrametricMatrixSpace, n: usize) -> Result<()> {
    if r0.len() != n {
        return invalid(format!("r0 has {} points, the population {n}", r0.len()));
    }
    let v = r0.validate_ultrametric();
    if !v.is_empty() {
        return Err(Error::NotUltrametric {
            count: v.len(),
            worst_slack: v.iter().map(|v| v.slack).fold(0.0, f64::max),
        });
    }
    Ok(())
}

fn substitute(shape: Shape, blocks: &mut [Option<Shape>]) -> Shape {
    match shape {
        Shape::Leaf(l) => {
            let id: usize = l.label[1..].parse().expect("labels written by leaf_label");
            blocks[id].take().expect("each block appears once")
        }
        Shape::Node { height, children } => Shape::Node {
            height,
            children: children.into_iter().map(|c| substitute(c, blocks)).collect(),
        },
    }
}

/// The tree of a coalescent at sampling time `t`: individuals that merged
/// before `t` are at their merge time; otherwise at `t` plus the `r0`
/// distance of their time-0 ancestors (the block labels). Masses are `1/n`.
pub fn tree_from_coalescent(p: &PartitionPath, t: f64, r0: &UltrametricMatrixSpace) -> Result<MergeTree> {
    let n = p.n;
    check_r0(r0, n)?;
    if !(t >= 0.0 && t <= p.horizon) {
        return invalid(format!("sampling time {t} outside [0, {}]", p.horizon));
    }
    let w = 1.0 / n as f64;
    let labels: Vec<String> = (0..n).map(leaf_label).collect();
    if t == 0.0 {
        let space = UltrametricMatrixSpace::new(labels, r0.dist().to_vec(), vec![w; n])?;
        return space.quotient_zero_distance()?.to_merge_tree();
    }
    let mut blocks: Vec<Option<Shape>> = labels.iter().map(|l| Some(Shape::leaf(l.clone(), w))).collect();
    let mut size = vec![1usize; n];
    for e in p.events.iter().take_while(|e| e.time < t) {
        let a = blocks[e.survivor].take().expect("survivor alive");
        let b = blocks[e.absorbed].take().expect("absorbed alive");
        blocks[e.survivor] = Some(Shape::node(e.time, vec![a, b]));
        size[e.survivor] += size[e.absorbed];
    }
    let alive: Vec<usize> = (0..n).filter(|&i| blocks[i].is_some()).collect();
    if let [only] = alive[..] {
        return MergeTree::from_shape(blocks[only].take().expect("alive"));
    }
    let dist = alive
        .iter()
        .map(|&a| alive.iter().map(|&b| if a == b { 0.0 } else { t + r0.dist()[a][b] }).collect())
        .collect();
    let mass = alive.iter().map(|&a| size[a] as f64 * w).collect();
    let top = UltrametricMatrixSpace::new(alive.iter().map(|&a| leaf_label(a)).collect(), dist, mass)?.to_merge_tree()?;
    MergeTree::from_shape(substitute(top.to_shape(), &mut blocks))
}

/// `r0(i, j) = max(i, j) / n`: individual `k` joins `0..k` at height `k/n`.
pub fn caterpillar_r0(n: usize) -> UltrametricMatrixSpace {
    let d = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { i.max(j) as f64 / n as f64 }).collect())
        .collect();
    UltrametricMatrixSpace::new((0..n).map(leaf_label).collect(), d, vec![1.0 / n as f64; n]).expect("valid caterpillar")
}

/// All pairs at distance `c`.
pub fn star_r0(n: usize, c: f64) -> Result<UltrametricMatrixSpace> {
    let d = (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { c }).collect()).collect();
    UltrametricMatrixSpace::new((0..n).map(leaf_label).collect(), d, vec![1.0 / n as f64; n])
}

/// Ranked uniform point of the `k`-simplex (normalized i.i.d. `Exp(1)`).
pub fn ranked_block_frequencies_with(k: usize, rng: &mut StreamRng) -> Result<RankedProfile> {
    if k == 0 {
        return invalid("k must be at least 1");
    }
    let exp = Exp::new(1.0).expect("unit rate");
    let draws: Vec<f64> = (0..k).map(|_| exp.sample(rng)).collect();
    let s: f64 = draws.iter().sum();
    Ok(RankedProfile::from_masses(draws.into_iter().map(|x| x / s).collect()))
}

pub fn ranked_block_frequencies(k: usize, seed: u64) -> Result<RankedProfile> {
    ranked_block_frequencies_with(k, &mut stream(seed, PAINTBOX_STREAM))
}

/// Expected largest coordinate of a uniform point of the `k`-simplex:
/// `H_k / k`.
pub fn largest_block_mean(k: usize) -> f64 {
    (1..=k).map(|l| 1.0 / l as f64).sum::<f64>() / k as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kingman_structure() {
        for seed in 0..20 {
            let p = simulate_kingman(12, f64::INFINITY, seed).unwrap();
            assert_eq!(p.events().len(), 11);
            assert!(PartitionPath::new(p.n(), p.horizon(), p.events().to_vec()).is_ok());
            let blocks = p.blocks_at(f64::INFINITY);
            assert_eq!(blocks, vec![(0..12).collect::<Vec<_>>()]);
            for (k, e) in p.events().iter().enumerate() {
                assert_eq!(p.blocks_at(e.time).len(), 12 - k - 1);
            }
        }
        let cut = simulate_kingman(12, 0.05, 1).unwrap();
        assert!(cut.events().iter().all(|e| e.time <= 0.05));
        assert_eq!(simulate_kingman(1, 3.0, 0).unwrap().events().len(), 0);
    }

    #[test]
    fn path_validation() {
        let e = |time, survivor, absorbed| CoalEvent { time, survivor, absorbed };
        assert!(PartitionPath::new(3, 1.0, vec![e(0.2, 0, 1), e(0.5, 0, 2)]).is_ok());
        assert!(PartitionPath::new(3, 1.0, vec![e(0.2, 0, 1), e(0.5, 1, 2)]).is_err());
        assert!(PartitionPath::new(3, 1.0, vec![e(0.5, 0, 1), e(0.2, 0, 2)]).is_err());
        assert!(PartitionPath::new(3, 0.4, vec![e(0.5, 0, 1)]).is_err());
        assert!(PartitionPath::new(3, 1.0, vec![e(0.5, 0, 0)]).is_err());
        let p = PartitionPath::new(3, 1.0, vec![e(0.2, 2, 1)]).unwrap();
        assert_eq!(PartitionPath::from_json(&p.to_json()).unwrap(), p);
        assert!(PartitionPath::from_json(r#"{"n":2,"horizon":1.0,"events":[{"time":0.5,"survivor":0,"absorbed":5}]}"#).is_err());
    }

    #[test]
    fn restriction_rules() {
        let e = |time, survivor, absorbed| CoalEvent { time, survivor, absorbed };
        let p = PartitionPath::new(4, 9.0, vec![e(1.0, 3, 0), e(2.0, 2, 1), e(3.0, 3, 2)]).unwrap();
        assert_eq!(restrict_coalescent(&p, 4).unwrap(), p);
        // Block {0,3} keeps label 0 in 0..2; {1,2} keeps 1.
        let r = restrict_coalescent(&p, 2).unwrap();
        assert_eq!(r.events(), &[e(3.0, 0, 1)]);
        assert!(restrict_coalescent(&p, 1).unwrap().events().is_empty());
        assert!(restrict_coalescent(&p, 5).is_err());
        for seed in 0..30 {
            let full = simulate_kingman(15, f64::INFINITY, seed).unwrap();
            for m in 1..=15 {
                let pm = restrict_coalescent(&full, m).unwrap();
                assert!(PartitionPath::new(pm.n, pm.horizon, pm.events.clone()).is_ok());
                for n in 1..=m {
                    assert_eq!(restrict_coalescent(&pm, n).unwrap(), restrict_coalescent(&full, n).unwrap());
                }
                // Restricted blocks are the traces of the full blocks.
                let h = full.events()[seed as usize % 14].time;
                let mut traced: Vec<Vec<usize>> = full
                    .blocks_at(h)
                    .into_iter()
                    .map(|b| b.into_iter().filter(|&i| i < m).collect::<Vec<_>>())
                    .filter(|b| !b.is_empty())
                    .collect();
                traced.sort();
                assert_eq!(pm.blocks_at(h), traced);
            }
        }
    }

    #[test]
    fn coalescent_trees() {
        let e = |time, survivor, absorbed| CoalEvent { time, survivor, absorbed };
        let p = PartitionPath::new(3, 5.0, vec![e(1.0, 0, 1), e(2.0, 2, 0)]).unwrap();
        let r0 = caterpillar_r0(3);
        let t = tree_from_coalescent(&p, 5.0, &r0).unwrap();
        assert_eq!(t.merge_heights(), vec![1.0, 2.0]);
        assert_eq!(t.root_height(), 2.0);
        // Sampled at 1.5: {0,1} at 1, label 2 apart at 1.5 + r0(0, 2) = 1.5 + 2/3.
        let t = tree_from_coalescent(&p, 1.5, &r0).unwrap();
        let d = t.distance_matrix();
        assert!(t.is_binary());
        assert_eq!(t.merge_heights(), vec![1.0, 1.5 + 2.0 / 3.0]);
        assert_eq!(d.len(), 3);
        // No events: the r0 tree shifted by t.
        let none = PartitionPath::new(3, 5.0, vec![]).unwrap();
        let t = tree_from_coalescent(&none, 0.5, &r0).unwrap();
        assert_eq!(t.merge_heights(), vec![0.5 + 1.0 / 3.0, 0.5 + 2.0 / 3.0]);
        let zero = tree_from_coalescent(&none, 0.0, &star_r0(3, 0.0).unwrap()).unwrap();
        assert_eq!(zero.len(), 1);
        assert!((zero.total_mass() - 1.0).abs() < 1e-15);
        assert!(tree_from_coalescent(&none, 0.5, &caterpillar_r0(4)).is_err());
    }

    #[test]
    fn simulated_trees_are_binary() {
        for seed in 0..30 {
            let p = simulate_kingman(20, 2.0, seed).unwrap();
            let t = tree_from_coalescent(&p, 0.3 + seed as f64 * 0.05, &caterpillar_r0(20)).unwrap();
            assert!(t.is_binary());
            assert!(t.to_matrix().validate_ultrametric().is_empty());
            assert!((t.total_mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn paintbox() {
        assert_eq!(largest_block_mean(1), 1.0);
        assert_eq!(largest_block_mean(2), 0.75);
        assert!((largest_block_mean(3) - 11.0 / 18.0).abs() < 1e-15);
        let f = ranked_block_frequencies(5, 3).unwrap();
        assert_eq!(f.len(), 5);
        assert!((f.total() - 1.0).abs() < 1e-12);
        assert_eq!(ranked_block_frequencies(1, 0).unwrap().entries(), &[1.0]);
        assert!(ranked_block_frequencies(0, 0).is_err());
    }
}
