//! Upper bounds on the Gromov-Prohorov distance, and the surrogate for the
//! Gromov-weak atomic distance built on top of it.
//!
//! Every bound is the Prohorov distance of the two mass measures inside an
//! explicit common metric space:
//!
//! * `embedding`: one label set contains the other and distances agree, so
//!   the smaller space sits isometrically inside the larger one;
//! * `shared-labels`: equal labels are related; with `dis` the largest
//!   distance distortion of that relation, the disjoint union with
//!   `d(x, y') = min_z r1(x, z) + r2(z, y') + dis/2` is a metric space
//!   containing both;
//! * `coarsening`: both trees are replaced by their `Ψ_h` quotients (each a
//!   Prohorov distance at most `h` from the original), and the small
//!   quotients are related by every injection of balls.

use itertools::Itertools;

use crate::error::Result;
use crate::profiles::{skorohod_distance, SkorohodOptions};
use crate::umspace::MergeTree;

use super::prohorov::prohorov_on_metric;
use super::{atomic_square, nu2};

const TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GpStrategy {
    /// Minimum over every applicable strategy.
    Auto,
    SharedLabels,
    /// Quotients at depth `h` (or at every small enough merge depth when
    /// `None`) matched over all injections when both have at most
    /// `perm_cap` balls.
    Coarsening { h: Option<f64>, perm_cap: usize },
}

pub const DEFAULT_PERM_CAP: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct GpBound {
    pub value: f64,
    /// `embedding`, `shared-labels`, `coarsening` or `none`.
    pub strategy: &'static str,
    /// Bisection bracket of the Prohorov distance that certifies the bound
    /// (for coarsening: of the matched quotients).
    pub bracket: (f64, f64),
    pub depth: Option<f64>,
}

impl GpBound {
    fn none(t1: &MergeTree, t2: &MergeTree) -> Self {
        // Two one-point spaces glued at a point: a trivial bound.
        let v = t1.total_mass().max(t2.total_mass());
        GpBound {
            value: v,
            strategy: "none",
            bracket: (0.0, v),
            depth: None,
        }
    }
}

fn labels(t: &MergeTree) -> Vec<&str> {
    t.leaves().iter().map(|l| l.label.as_str()).collect()
}

/// Disjoint union of two spaces related by `pairs` (index into t1, index
/// into t2); returns the distance matrix and both mass vectors on it.
fn glue(
    d1: &[Vec<f64>],
    d2: &[Vec<f64>],
    pairs: &[(usize, usize)],
    m1: &[f64],
    m2: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let (n1, n2) = (d1.len(), d2.len());
    let mut dis = 0.0f64;
    for &(a, b) in pairs {
        for &(c, e) in pairs {
            dis = dis.max((d1[a][c] - d2[b][e]).abs());
        }
    }
    let n = n1 + n2;
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n1 {
        for j in 0..n1 {
            d[i][j] = d1[i][j];
        }
    }
    for i in 0..n2 {
        for j in 0..n2 {
            d[n1 + i][n1 + j] = d2[i][j];
        }
    }
    for x in 0..n1 {
        for y in 0..n2 {
            let via = pairs
                .iter()
                .map(|&(a, b)| d1[x][a] + d2[b][y])
                .fold(f64::INFINITY, f64::min);
            d[x][n1 + y] = via + 0.5 * dis;
            d[n1 + y][x] = d[x][n1 + y];
        }
    }
    let mut w1 = m1.to_vec();
    w1.resize(n, 0.0);
    let mut w2 = vec![0.0; n1];
    w2.extend_from_slice(m2);
    (d, w1, w2)
}

fn embedding(big: &MergeTree, small: &MergeTree) -> Result<Option<GpBound>> {
    let lb = labels(big);
    let idx: Option<Vec<usize>> = labels(small).iter().map(|l| lb.iter().position(|x| x == l)).collect();
    let Some(idx) = idx else { return Ok(None) };
    let (db, ds) = (big.distance_matrix(), small.distance_matrix());
    for i in 0..idx.len() {
        for j in 0..idx.len() {
            if db[idx[i]][idx[j]] != ds[i][j] {
                return Ok(None);
            }
        }
    }
    let mut placed = vec![0.0; big.len()];
    for (i, &k) in idx.iter().enumerate() {
        placed[k] += small.leaves()[i].mass;
    }
    let bracket = prohorov_on_metric(&db, &big.masses(), &placed, TOL)?;
    Ok(Some(GpBound {
        value: bracket.1,
        strategy: "embedding",
        bracket,
        depth: None,
    }))
}

fn shared_labels(t1: &MergeTree, t2: &MergeTree) -> Result<Option<GpBound>> {
    if let Some(b) = embedding(t2, t1)? {
        return Ok(Some(b));
    }
    if let Some(b) = embedding(t1, t2)? {
        return Ok(Some(b));
    }
    let (l1, l2) = (labels(t1), labels(t2));
    let pairs: Vec<(usize, usize)> = l1
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l2.iter().position(|x| x == l).map(|j| (i, j)))
        .collect();
    if pairs.is_empty() {
        return Ok(None);
    }
    let (d, w1, w2) = glue(&t1.distance_matrix(), &t2.distance_matrix(), &pairs, &t1.masses(), &t2.masses());
    let bracket = prohorov_on_metric(&d, &w1, &w2, TOL)?;
    Ok(Some(GpBound {
        value: bracket.1,
        strategy: "shared-labels",
        bracket,
        depth: None,
    }))
}

/// Best relation between two small spaces over all injections of the
/// smaller one into the larger.
fn matched(t1: &MergeTree, t2: &MergeTree) -> Result<(f64, f64)> {
    let swap = t1.len() > t2.len();
    let (a, b) = if swap { (t2, t1) } else { (t1, t2) };
    let (da, db) = (a.distance_matrix(), b.distance_matrix());
    let (ma, mb) = (a.masses(), b.masses());
    let mut best = (f64::INFINITY, f64::INFINITY);
    for image in (0..b.len()).permutations(a.len()) {
        let pairs: Vec<(usize, usize)> = image.iter().enumerate().map(|(i, &j)| (i, j)).collect();
        let (d, w1, w2) = glue(&da, &db, &pairs, &ma, &mb);
        let br = prohorov_on_metric(&d, &w1, &w2, TOL)?;
        if br.1 < best.1 {
            best = br;
        }
    }
    Ok(best)
}

fn coarsening_at(t1: &MergeTree, t2: &MergeTree, h: f64, perm_cap: usize) -> Result<Option<GpBound>> {
    let (q1, q2) = if h > 0.0 {
        (t1.psi(h)?, t2.psi(h)?)
    } else {
        (t1.clone(), t2.clone())
    };
    if q1.len().max(q2.len()) > perm_cap {
        return Ok(None);
    }
    let to_quotient = |t: &MergeTree, q: &MergeTree| -> Result<f64> {
        if h > 0.0 {
            Ok(embedding(t, q)?.map_or(h, |b| b.value.min(h)))
        } else {
            Ok(0.0)
        }
    };
    let bracket = matched(&q1, &q2)?;
    let value = to_quotient(t1, &q1)? + bracket.1 + to_quotient(t2, &q2)?;
    Ok(Some(GpBound {
        value,
        strategy: "coarsening",
        bracket,
        depth: Some(h),
    }))
}

fn coarsening(t1: &MergeTree, t2: &MergeTree, h: Option<f64>, perm_cap: usize) -> Result<Option<GpBound>> {
    let depths: Vec<f64> = match h {
        Some(h) => vec![h],
        None => {
            let mut hs: Vec<f64> = t1.merge_heights();
            hs.extend(t2.merge_heights());
            hs.push(0.0);
            hs.sort_by(f64::total_cmp);
            hs.dedup();
            hs.into_iter()
                .filter(|&h| {
                    let count = |t: &MergeTree| if h > 0.0 { t.num_balls(h).unwrap_or(usize::MAX) } else { t.len() };
                    count(t1).max(count(t2)) <= perm_cap
                })
                .take(8)
                .collect()
        }
    };
    let mut best: Option<GpBound> = None;
    for h in depths {
        if let Some(b) = coarsening_at(t1, t2, h, perm_cap)? {
            if best.as_ref().is_none_or(|x| b.value < x.value) {
                best = Some(b);
            }
        }
    }
    Ok(best)
}

/// Certified upper bound on the Gromov-Prohorov distance.
pub fn gp_upper_bound(t1: &MergeTree, t2: &MergeTree, strategy: GpStrategy) -> Result<GpBound> {
    let found = match strategy {
        GpStrategy::SharedLabels => vec![shared_labels(t1, t2)?],
        GpStrategy::Coarsening { h, perm_cap } => vec![coarsening(t1, t2, h, perm_cap)?],
        GpStrategy::Auto => vec![shared_labels(t1, t2)?, coarsening(t1, t2, None, DEFAULT_PERM_CAP)?],
    };
    let mut best = GpBound::none(t1, t2);
    for b in found.into_iter().flatten() {
        if b.value < best.value || best.strategy == "none" && b.value <= best.value {
            best = b;
        }
    }
    Ok(best)
}

/// `gp + |ν²₁{0} - ν²₂{0}| + ρ`, where `ρ` adds the Skorohod distances
/// between the distribution functions of `ν²` and of `(ν²)*`.
#[derive(Debug, Clone, PartialEq)]
pub struct GwaSurrogate {
    pub value: f64,
    pub gp: GpBound,
    pub atom_gap: f64,
    pub cdf_term: f64,
    pub atomic_cdf_term: f64,
}

pub fn gwa_distance_surrogate(t1: &MergeTree, t2: &MergeTree) -> Result<GwaSurrogate> {
    let gp = gp_upper_bound(t1, t2, GpStrategy::Auto)?;
    let (n1, n2) = (nu2(t1), nu2(t2));
    let atom_gap = (n1.mass_at(0.0) - n2.mass_at(0.0)).abs();
    let opts = SkorohodOptions::default();
    let cdf_term = skorohod_distance(&n1.cdf(), &n2.cdf(), &opts)?.value;
    let atomic_cdf_term = skorohod_distance(&atomic_square(&n1).cdf(), &atomic_square(&n2).cdf(), &opts)?.value;
    Ok(GwaSurrogate {
        value: gp.value + atom_gap + cdf_term + atomic_cdf_term,
        gp,
        atom_gap,
        cdf_term,
        atomic_cdf_term,
    })
}
