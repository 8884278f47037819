//! Skorohod distance between profile paths.
//!
//! For a time change `λ` the distance charges
//! `γ(λ) ∨ ∫ exp(-u - 1/u) ρ₁(u) du` (ℓ¹ profile distance) plus
//! `γ(λ) ∨ ∫ exp(-u) ρ₂(u) du` (sup profile distance), where
//! `ρ(u) = sup_t d(f(t ∧ u), g(λ(t) ∧ u)) ∧ 1` and `γ(λ)` is the largest
//! absolute log-slope of `λ`. Each term is an infimum over `λ`; we search
//! piecewise-linear `λ` that pin pairs of jumps of the two paths onto each
//! other, found by a dynamic program over monotone jump matchings, and
//! evaluate the exact objective for every candidate. The result is therefore
//! an upper bound; the identity time change is always a candidate.

use crate::error::{invalid, Result};

use super::quadrature::WeightIntegrals;
use super::{l1_distance, sup_distance, ProfilePath, RankedProfile};

#[derive(Debug, Clone, Copy)]
pub struct SkorohodOptions {
    /// Tabulation nodes for the `exp(-u - 1/u)` weight.
    pub quad_points: usize,
    pub quad_tol: f64,
    /// Paths with more jumps than this are rejected.
    pub max_jumps: usize,
    /// Consecutive jumps of one path that may be left unmatched between two
    /// matched pairs.
    pub max_skip: usize,
    /// Number of slope thresholds tried by the matching search.
    pub thresholds: usize,
}

impl Default for SkorohodOptions {
    fn default() -> Self {
        SkorohodOptions {
            quad_points: 257,
            quad_tol: 1e-9,
            max_jumps: 512,
            max_skip: 4,
            thresholds: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkorohodEstimate {
    /// Best objective found: an upper bound on the distance.
    pub value: f64,
    /// Objective of the identity time change.
    pub identity_value: f64,
    pub seq_term: f64,
    pub max_term: f64,
    /// Anchor points `(t, λ(t))` of the time changes attaining each term,
    /// expressed as a time change from the first to the second path.
    pub seq_anchors: Vec<(f64, f64)>,
    pub max_anchors: Vec<(f64, f64)>,
}

impl SkorohodEstimate {
    pub fn gap(&self) -> f64 {
        self.identity_value - self.value
    }
}

/// Piecewise-linear time change through `anchors`, slope 1 after the last.
#[derive(Debug, Clone)]
struct TimeChange {
    anchors: Vec<(f64, f64)>,
}

impl TimeChange {
    fn identity() -> Self {
        TimeChange {
            anchors: vec![(0.0, 0.0)],
        }
    }

    fn forward(&self, t: f64) -> f64 {
        map_through(&self.anchors, t, |a| a.0, |a| a.1)
    }

    fn inverse(&self, s: f64) -> f64 {
        map_through(&self.anchors, s, |a| a.1, |a| a.0)
    }

    fn gamma(&self) -> f64 {
        self.anchors
            .windows(2)
            .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).ln().abs())
            .fold(0.0, f64::max)
    }

    fn inverted(&self) -> Self {
        TimeChange {
            anchors: self.anchors.iter().map(|&(x, y)| (y, x)).collect(),
        }
    }
}

fn map_through(
    anchors: &[(f64, f64)],
    t: f64,
    from: impl Fn(&(f64, f64)) -> f64,
    to: impl Fn(&(f64, f64)) -> f64,
) -> f64 {
    let k = anchors.partition_point(|a| from(a) <= t);
    let (x0, y0) = (from(&anchors[k - 1]), to(&anchors[k - 1]));
    if t == x0 {
        return y0;
    }
    match anchors.get(k) {
        Some(next) => {
            let (x1, y1) = (from(next), to(next));
            y0 + (t - x0) * (y1 - y0) / (x1 - x0)
        }
        None => y0 + (t - x0),
    }
}

/// Stand-in for "just after 0", where paths take `values[0]` rather than
/// the zero value.
const OFF_ZERO: f64 = 1e-300;

fn at(p: &ProfilePath, t: f64) -> &RankedProfile {
    p.evaluate(t)
}

struct Evaluator<'a> {
    f: &'a ProfilePath,
    g: &'a ProfilePath,
    weights: &'a WeightIntegrals,
}

impl Evaluator<'_> {
    /// `(ρ₁(u), ρ₂(u))` for the time change `lam`.
    fn rho(&self, lam: &TimeChange, u: f64) -> (f64, f64) {
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(2 * (self.f.jumps().len() + self.g.jumps().len()) + 4);
        pts.push((0.0, 0.0));
        pts.push((OFF_ZERO, lam.forward(OFF_ZERO).max(OFF_ZERO)));
        for &a in self.f.jumps() {
            pts.push((a, lam.forward(a)));
        }
        for &b in self.g.jumps() {
            pts.push((lam.inverse(b), b));
        }
        pts.push((u, lam.forward(u)));
        pts.push((lam.inverse(u), u));
        let mut r1: f64 = 0.0;
        let mut r2: f64 = 0.0;
        for (t, s) in pts {
            let x = at(self.f, t.min(u));
            let y = at(self.g, s.min(u));
            r1 = r1.max(l1_distance(x, y));
            r2 = r2.max(sup_distance(x, y));
        }
        (r1.min(1.0), r2.min(1.0))
    }

    /// `(∫ w₁ ρ₁, ∫ w₂ ρ₂)`; `ρ` is constant between consecutive jump
    /// heights of either path and their images under `λ` and `λ⁻¹`.
    fn integrals(&self, lam: &TimeChange) -> (f64, f64) {
        let mut cuts: Vec<f64> = Vec::new();
        for &a in self.f.jumps() {
            cuts.push(a);
            cuts.push(lam.forward(a));
        }
        for &b in self.g.jumps() {
            cuts.push(b);
            cuts.push(lam.inverse(b));
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut i1 = 0.0;
        let mut i2 = 0.0;
        let mut lo = 0.0;
        for &hi in cuts.iter().chain(std::iter::once(&f64::INFINITY)) {
            if hi <= lo {
                continue;
            }
            let mid = if hi.is_finite() { 0.5 * (lo + hi) } else { lo + 1.0 };
            let (r1, r2) = self.rho(lam, mid);
            if r1 > 0.0 {
                i1 += r1 * self.weights.w1(lo, hi);
            }
            if r2 > 0.0 {
                i2 += r2 * self.weights.w2(lo, hi);
            }
            lo = hi;
        }
        (i1, i2)
    }

    fn objective(&self, lam: &TimeChange) -> (f64, f64) {
        let g = lam.gamma();
        let (i1, i2) = self.integrals(lam);
        (g.max(i1), g.max(i2))
    }

    /// Worst `(ℓ¹, sup)` discrepancy for `t` in `[x0, x1)` under the linear
    /// piece `(x0, y0) -> (x1, y1)`; `x1 = inf` means slope 1 onwards.
    fn segment_cost(&self, (x0, y0): (f64, f64), (x1, y1): (f64, f64)) -> (f64, f64) {
        let slope = if x1.is_finite() { (y1 - y0) / (x1 - x0) } else { 1.0 };
        let mut pts: Vec<(f64, f64)> = vec![(x0, y0)];
        if x0 == 0.0 {
            pts.push((OFF_ZERO, OFF_ZERO * slope));
        }
        for &a in self.f.jumps() {
            if a > x0 && a < x1 {
                pts.push((a, y0 + (a - x0) * slope));
            }
        }
        for &b in self.g.jumps() {
            if b > y0 && b < y1 {
                pts.push((x0 + (b - y0) / slope, b));
            }
        }
        let mut c1: f64 = 0.0;
        let mut c2: f64 = 0.0;
        for (t, s) in pts {
            let (x, y) = (at(self.f, t), at(self.g, s));
            c1 = c1.max(l1_distance(x, y));
            c2 = c2.max(sup_distance(x, y));
        }
        (c1.min(1.0), c2.min(1.0))
    }
}

#[derive(Clone, Copy)]
enum Term {
    Seq,
    Max,
}

/// Candidate time changes from monotone jump matchings.
fn candidates(ev: &Evaluator, opts: &SkorohodOptions) -> Vec<TimeChange> {
    let a = ev.f.jumps();
    let b = ev.g.jumps();
    let mut out = vec![TimeChange::identity()];
    if a.is_empty() || b.is_empty() {
        return out;
    }
    let (p, q) = (a.len(), b.len());
    let reach = opts.max_skip + 1;
    // State 0 is the origin, state 1 + i*q + j pins a[i] to b[j].
    let point = |s: usize| if s == 0 { (0.0, 0.0) } else { (a[(s - 1) / q], b[(s - 1) % q]) };
    let succ = |s: usize| -> Vec<usize> {
        let (i0, j0) = if s == 0 { (0, 0) } else { ((s - 1) / q + 1, (s - 1) % q + 1) };
        let mut v = Vec::new();
        for i in i0..(i0 + reach).min(p) {
            for j in j0..(j0 + reach).min(q) {
                v.push(1 + i * q + j);
            }
        }
        v
    };
    let states = 1 + p * q;
    let mut edges: Vec<Vec<(usize, f64, (f64, f64))>> = vec![Vec::new(); states];
    let mut tails = vec![(0.0, 0.0); states];
    let mut slopes: Vec<f64> = Vec::new();
    for s in 0..states {
        let from = point(s);
        for t in succ(s) {
            let to = point(t);
            let ls = ((to.1 - from.1) / (to.0 - from.0)).ln().abs();
            if t == s + q + 1 || (s == 0 && t == 1) {
                slopes.push(ls);
            }
            edges[s].push((t, ls, ev.segment_cost(from, to)));
        }
        tails[s] = ev.segment_cost(from, (f64::INFINITY, f64::INFINITY));
    }
    slopes.sort_by(f64::total_cmp);
    slopes.dedup();
    let mut thresholds: Vec<f64> = if slopes.len() <= opts.thresholds {
        slopes
    } else {
        (0..opts.thresholds)
            .map(|k| slopes[k * (slopes.len() - 1) / (opts.thresholds - 1).max(1)])
            .collect()
    };
    thresholds.push(f64::INFINITY);

    for term in [Term::Seq, Term::Max] {
        let tail_weight = |x: f64| match term {
            Term::Seq => ev.weights.w1(x, f64::INFINITY),
            Term::Max => ev.weights.w2(x, f64::INFINITY),
        };
        let pick = |c: (f64, f64)| match term {
            Term::Seq => c.0,
            Term::Max => c.1,
        };
        for &limit in &thresholds {
            let mut best = vec![f64::INFINITY; states];
            let mut prev = vec![usize::MAX; states];
            best[0] = 0.0;
            // Successors always have larger indices, so index order is topological.
            for s in 0..states {
                if !best[s].is_finite() {
                    continue;
                }
                let w = tail_weight(point(s).0);
                for &(t, ls, cost) in &edges[s] {
                    if ls > limit {
                        continue;
                    }
                    let cand = best[s] + pick(cost) * w;
                    if cand < best[t] {
                        best[t] = cand;
                        prev[t] = s;
                    }
                }
            }
            let mut end = 0;
            let mut end_cost = f64::INFINITY;
            for s in 0..states {
                if best[s].is_finite() {
                    let c = best[s] + pick(tails[s]) * tail_weight(point(s).0);
                    if c < end_cost {
                        end_cost = c;
                        end = s;
                    }
                }
            }
            let mut anchors = Vec::new();
            let mut s = end;
            while s != 0 {
                anchors.push(point(s));
                s = prev[s];
            }
            anchors.push((0.0, 0.0));
            anchors.reverse();
            let lam = TimeChange { anchors };
            if !out.iter().any(|o| o.anchors == lam.anchors) {
                out.push(lam);
            }
        }
    }
    out
}

struct DirectionResult {
    seq: (f64, TimeChange),
    max: (f64, TimeChange),
    identity: f64,
}

fn one_direction(ev: &Evaluator, cands: &[TimeChange]) -> DirectionResult {
    let mut seq = (f64::INFINITY, TimeChange::identity());
    let mut max = (f64::INFINITY, TimeChange::identity());
    let mut identity = f64::INFINITY;
    for (k, lam) in cands.iter().enumerate() {
        let (s, m) = ev.objective(lam);
        if k == 0 {
            identity = s + m;
        }
        if s < seq.0 {
            seq = (s, lam.clone());
        }
        if m < max.0 {
            max = (m, lam.clone());
        }
    }
    DirectionResult { seq, max, identity }
}

/// Upper-bound estimate of the Skorohod distance between two step paths.
pub fn skorohod_distance(
    f: &ProfilePath,
    g: &ProfilePath,
    opts: &SkorohodOptions,
) -> Result<SkorohodEstimate> {
    for p in [f, g] {
        if p.jumps().len() > opts.max_jumps {
            return invalid(format!(
                "path has {} jumps; at most {} are supported",
                p.jumps().len(),
                opts.max_jumps
            ));
        }
    }
    let weights = WeightIntegrals::new(opts.quad_points, opts.quad_tol);
    let fwd = Evaluator { f, g, weights: &weights };
    let bwd = Evaluator { f: g, g: f, weights: &weights };
    let cands = candidates(&fwd, opts);
    let mut all = cands.clone();
    for lam in candidates(&bwd, opts) {
        let inv = lam.inverted();
        if !all.iter().any(|o| o.anchors == inv.anchors) {
            all.push(inv);
        }
    }
    let inverted: Vec<TimeChange> = all.iter().map(TimeChange::inverted).collect();
    let r_fwd = one_direction(&fwd, &all);
    let r_bwd = one_direction(&bwd, &inverted);
    let identity_value = r_fwd.identity.min(r_bwd.identity);
    let v_fwd = r_fwd.seq.0 + r_fwd.max.0;
    let v_bwd = r_bwd.seq.0 + r_bwd.max.0;
    let est = if v_fwd <= v_bwd {
        SkorohodEstimate {
            value: v_fwd,
            identity_value,
            seq_term: r_fwd.seq.0,
            max_term: r_fwd.max.0,
            seq_anchors: r_fwd.seq.1.anchors,
            max_anchors: r_fwd.max.1.anchors,
        }
    } else {
        SkorohodEstimate {
            value: v_bwd,
            identity_value,
            seq_term: r_bwd.seq.0,
            max_term: r_bwd.max.0,
            seq_anchors: r_bwd.seq.1.inverted().anchors,
            max_anchors: r_bwd.max.1.inverted().anchors,
        }
    };
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{u, u_n};
    use super::*;
    use crate::gen::{random_tree, TreeSpec};

    fn constant(a: f64) -> ProfilePath {
        ProfilePath::constant(RankedProfile::from_masses(vec![a]))
    }

    #[test]
    fn identical_paths_are_at_distance_zero() {
        let p = u_n(5.0).decomposition_path();
        let d = skorohod_distance(&p, &p, &SkorohodOptions::default()).unwrap();
        assert_eq!(d.value, 0.0);
        assert_eq!(d.identity_value, 0.0);
    }

    #[test]
    fn constant_paths_use_the_identity() {
        let w = WeightIntegrals::default();
        let i1 = w.total_w1();
        for (a, b) in [(1.0, 1.3), (0.2, 0.25), (0.0, 5.0)] {
            let f = if a == 0.0 {
                ProfilePath::constant(RankedProfile::default())
            } else {
                constant(a)
            };
            let d = skorohod_distance(&f, &constant(b), &SkorohodOptions::default()).unwrap();
            let r = f64::min((a - b).abs(), 1.0);
            assert!((d.value - r * (i1 + 1.0)).abs() < 1e-9, "{a} {b}: {}", d.value);
            assert_eq!(d.value, d.identity_value);
        }
    }

    #[test]
    fn time_change_mapping() {
        let lam = TimeChange {
            anchors: vec![(0.0, 0.0), (1.0, 2.0), (3.0, 3.0)],
        };
        assert_eq!(lam.forward(0.5), 1.0);
        assert_eq!(lam.forward(1.0), 2.0);
        assert_eq!(lam.forward(2.0), 2.5);
        assert_eq!(lam.forward(5.0), 5.0);
        assert_eq!(lam.inverse(2.5), 2.0);
        assert!((lam.gamma() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn plateau_obstruction_does_not_vanish() {
        let target = u().decomposition_path();
        let mut last = f64::INFINITY;
        for n in [10.0, 100.0, 1000.0, 1e5] {
            let d = skorohod_distance(&u_n(n).decomposition_path(), &target, &SkorohodOptions::default()).unwrap();
            assert!(d.value > 0.3, "n = {n}: {}", d.value);
            assert!(d.value <= d.identity_value);
            last = last.min(d.value);
        }
        assert!(last > 0.3);
    }

    #[test]
    fn nearby_jumps_are_aligned() {
        // Same topology, jump heights moved by a small relative amount.
        let t = random_tree(&TreeSpec::binary(6), 4);
        let scale = 1.0 + 1e-3;
        let stretched = crate::umspace::MergeTree::from_shape(stretch(&t.to_shape(), scale)).unwrap();
        let d = skorohod_distance(&t.decomposition_path(), &stretched.decomposition_path(), &SkorohodOptions::default())
            .unwrap();
        assert!(d.value <= 2.0 * scale.ln() + 1e-12, "{}", d.value);
        assert!(d.identity_value > d.value);
    }

    fn stretch(s: &crate::umspace::Shape, k: f64) -> crate::umspace::Shape {
        use crate::umspace::Shape;
        match s {
            Shape::Leaf(l) => Shape::Leaf(l.clone()),
            Shape::Node { height, children } => {
                Shape::node(height * k, children.iter().map(|c| stretch(c, k)).collect())
            }
        }
    }

    #[test]
    fn symmetric_nonnegative_and_bracketed() {
        let opts = SkorohodOptions::default();
        for seed in 0..12 {
            let f = random_tree(&TreeSpec::multifurcating(5), seed).decomposition_path();
            let g = random_tree(&TreeSpec::multifurcating(6), seed + 100).decomposition_path();
            let d1 = skorohod_distance(&f, &g, &opts).unwrap();
            let d2 = skorohod_distance(&g, &f, &opts).unwrap();
            assert!(d1.value > 0.0);
            assert!((d1.value - d2.value).abs() < 1e-12, "{} vs {}", d1.value, d2.value);
            assert!(d1.value <= d1.identity_value + 1e-15);
            assert!(d1.gap() >= -1e-15);
        }
    }

    #[test]
    fn too_many_jumps_rejected() {
        let p = random_tree(&TreeSpec::binary(10), 1).decomposition_path();
        let opts = SkorohodOptions {
            max_jumps: 3,
            ..Default::default()
        };
        assert!(skorohod_distance(&p, &p, &opts).is_err());
    }
}
