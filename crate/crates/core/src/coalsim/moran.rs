use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::rng::{stream, StreamRng};
use crate::umspace::{MergeTree, UltrametricMatrixSpace};

use super::{check_r0, leaf_label};

const MORAN_STREAM: u64 = 0x6d6f_7261;

/// A resampling event: `child` is replaced by an offspring of `parent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArrowEvent {
    pub time: f64,
    pub parent: usize,
    pub child: usize,
}

/// Forward times at which the ancestor map is recorded.
#[derive(Debug, Clone, PartialEq)]
pub enum AncestryGrid {
    /// Every event time plus `0` and `t`.
    Events,
    Endpoints,
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AncestryResult {
    /// Increasing forward times `h` in `[0, t]`.
    pub grid: Vec<f64>,
    /// `ancestors[g][i]` is the ancestor of `(i, t)` at time `grid[g]`.
    pub ancestors: Vec<Vec<usize>>,
    /// The pseudo-ultrametric `r_t` before quotienting.
    pub metric: Vec<Vec<f64>>,
    pub events: usize,
}

/// Resampling events on `[0, t]`: every unordered pair fires at rate one
/// and a fair coin picks the parent, i.e. a uniform ordered pair at total
/// rate `n(n−1)/2`.
pub fn moran_events(n: usize, t: f64, rng: &mut StreamRng) -> Vec<ArrowEvent> {
    let mut events = Vec::new();
    if n < 2 {
        return events;
    }
    let exp = Exp::new(0.5 * (n * (n - 1)) as f64).expect("positive rate");
    let mut time = 0.0;
    loop {
        time += exp.sample(rng);
        if time > t {
            return events;
        }
        let parent = rng.random_range(0..n);
        let mut child = rng.random_range(0..n - 1);
        if child >= parent {
            child += 1;
        }
        events.push(ArrowEvent { time, parent, child });
    }
}

/// Backward step through one event: the child's line jumps to the parent,
/// meeting every line currently sitting there.
fn replay(e: &ArrowEvent, t: f64, members: &mut [Vec<usize>], anc: &mut [usize], metric: &mut [Vec<f64>]) {
    let moved = std::mem::take(&mut members[e.child]);
    for &x in &members[e.parent] {
        for &y in &moved {
            metric[x][y] = t - e.time;
            metric[y][x] = t - e.time;
        }
    }
    for &y in &moved {
        anc[y] = e.parent;
    }
    members[e.parent].extend(moved);
}

/// Tree-valued Moran model of size `n` at time `t` started from `r0`.
///
/// Ancestral lines are traced by replaying the events backwards. Two
/// individuals whose lines meet at forward time `s` are at distance
/// `t − s`; otherwise at `t + r0` of their time-0 ancestors. Each
/// individual carries mass `1/n`; points at distance 0 are merged.
pub fn simulate_moran(
    n: usize,
    t: f64,
    r0: &UltrametricMatrixSpace,
    grid: &AncestryGrid,
    seed: u64,
) -> Result<(MergeTree, AncestryResult)> {
    if n == 0 || !(t.is_finite() && t >= 0.0) {
        return invalid(format!("need n >= 1 and finite t >= 0, got n = {n}, t = {t}"));
    }
    check_r0(r0, n)?;
    let events = moran_events(n, t, &mut stream(seed, MORAN_STREAM));

    let mut grid: Vec<f64> = match grid {
        AncestryGrid::Events => [0.0].into_iter().chain(events.iter().map(|e| e.time)).chain([t]).collect(),
        AncestryGrid::Endpoints => vec![0.0, t],
        AncestryGrid::Custom(g) => {
            if g.iter().any(|h| !(*h >= 0.0 && *h <= t)) {
                return invalid(format!("ancestry grid must lie in [0, {t}]"));
            }
            g.clone()
        }
    };
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut anc: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut metric = vec![vec![f64::NAN; n]; n];
    for (i, row) in metric.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    let mut snapshots: Vec<Vec<usize>> = vec![Vec::new(); grid.len()];
    let mut g = grid.len();
    let mut next = events.len();
    // Walk the grid from the top; an event at time h already counts for A_h.
    while g > 0 {
        let h = grid[g - 1];
        while next > 0 && events[next - 1].time >= h {
            next -= 1;
            replay(&events[next], t, &mut members, &mut anc, &mut metric);
        }
        g -= 1;
        snapshots[g] = anc.clone();
    }
    // Remaining events are at times below the smallest grid point.
    while next > 0 {
        next -= 1;
        replay(&events[next], t, &mut members, &mut anc, &mut metric);
    }
    for i in 0..n {
        for j in 0..n {
            if metric[i][j].is_nan() {
                metric[i][j] = t + r0.dist()[anc[i]][anc[j]];
            }
        }
    }
    let space = UltrametricMatrixSpace::new((0..n).map(leaf_label).collect(), metric.clone(), vec![1.0 / n as f64; n])?;
    let tree = space.quotient_zero_distance()?.to_merge_tree()?;
    Ok((
        tree,
        AncestryResult {
            grid,
            ancestors: snapshots,
            metric,
            events: events.len(),
        },
    ))
}
