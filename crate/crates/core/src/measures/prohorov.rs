//! Prohorov distance between finite atomic measures.
//!
//! `ε` is feasible iff `m1(A) <= m2(A^ε) + ε` and `m2(A) <= m1(A^ε) + ε`
//! for every set `A`, with the open enlargement `A^ε = {x: r(x, A) < ε}`.
//! By max-flow/min-cut on the bipartite graph joining atoms closer than `ε`,
//! the largest violation `max_A m1(A) - m2(A^ε)` equals `m1(X) - flow`, and
//! the same flow serves the symmetric condition, so `ε` is feasible iff
//! `max(m1(X), m2(X)) - flow(ε) <= ε`.

use crate::error::{invalid, Result};

use super::flow::bipartite_max_flow;
use super::AtomicMeasure1D;

struct Instance<'a, D: Fn(usize, usize) -> f64> {
    m1: &'a [f64],
    m2: &'a [f64],
    dist: D,
}

impl<D: Fn(usize, usize) -> f64> Instance<'_, D> {
    fn deficiency(&self, allowed: impl Fn(f64) -> bool) -> f64 {
        let flow = bipartite_max_flow(self.m1, self.m2, |i, j| allowed((self.dist)(i, j)));
        let top = self.m1.iter().sum::<f64>().max(self.m2.iter().sum());
        (top - flow).max(0.0)
    }

    fn feasible(&self, eps: f64) -> bool {
        self.deficiency(|d| d < eps) <= eps
    }

    fn bracket(&self, tol: f64) -> (f64, f64) {
        let t1: f64 = self.m1.iter().sum();
        let t2: f64 = self.m2.iter().sum();
        let scale = t1.max(t2);
        if self.deficiency(|d| d <= 0.0) <= 1e-14 * scale {
            return (0.0, 0.0);
        }
        let mut lo = 0.0;
        let mut hi = scale;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if self.feasible(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // The deficiency is constant on (g, hi] for the largest pairwise gap
        // g below hi, so the feasible part of that plateau starts at
        // max(g, deficiency).
        let mut below = 0.0f64;
        for i in 0..self.m1.len() {
            for j in 0..self.m2.len() {
                let d = (self.dist)(i, j);
                if d < hi {
                    below = below.max(d);
                }
            }
        }
        let snapped = below.max(self.deficiency(|d| d < hi));
        (lo, hi.min(snapped))
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol.is_finite() && tol > 0.0) {
        return invalid(format!("tolerance {tol} must be positive"));
    }
    Ok(())
}

/// `(lower, upper)` bracket of the Prohorov distance on the line; the upper
/// end is feasible and within `tol` of the lower end or exact.
pub fn prohorov_bracket(a: &AtomicMeasure1D, b: &AtomicMeasure1D, tol: f64) -> Result<(f64, f64)> {
    check_tol(tol)?;
    let (xa, ma): (Vec<f64>, Vec<f64>) = a.atoms().iter().copied().unzip();
    let (xb, mb): (Vec<f64>, Vec<f64>) = b.atoms().iter().copied().unzip();
    let inst = Instance {
        m1: &ma,
        m2: &mb,
        dist: |i: usize, j: usize| (xa[i] - xb[j]).abs(),
    };
    Ok(inst.bracket(tol))
}

/// Prohorov distance on the line, accurate to `tol` (returns the feasible
/// end of the bisection bracket).
pub fn prohorov_distance(a: &AtomicMeasure1D, b: &AtomicMeasure1D, tol: f64) -> Result<f64> {
    Ok(prohorov_bracket(a, b, tol)?.1)
}

/// Prohorov bracket between two mass vectors on one finite metric space
/// given by its distance matrix; zero masses are allowed.
pub fn prohorov_on_metric(dist: &[Vec<f64>], m1: &[f64], m2: &[f64], tol: f64) -> Result<(f64, f64)> {
    check_tol(tol)?;
    let n = dist.len();
    if m1.len() != n || m2.len() != n || dist.iter().any(|r| r.len() != n) {
        return invalid("distance matrix and mass vectors disagree in size");
    }
    let s1: Vec<usize> = (0..n).filter(|&i| m1[i] > 0.0).collect();
    let s2: Vec<usize> = (0..n).filter(|&i| m2[i] > 0.0).collect();
    let w1: Vec<f64> = s1.iter().map(|&i| m1[i]).collect();
    let w2: Vec<f64> = s2.iter().map(|&i| m2[i]).collect();
    let inst = Instance {
        m1: &w1,
        m2: &w2,
        dist: |i: usize, j: usize| dist[s1[i]][s2[j]],
    };
    Ok(inst.bracket(tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn m(atoms: &[(f64, f64)]) -> AtomicMeasure1D {
        AtomicMeasure1D::new(atoms.to_vec()).unwrap()
    }

    /// Largest `m1(A) - m2(A^ε)` over all subsets `A` of the atoms of `m1`.
    fn violation(a: &AtomicMeasure1D, b: &AtomicMeasure1D, eps: f64) -> f64 {
        let n = a.len();
        (0u32..1 << n)
            .map(|mask| {
                let inside: Vec<f64> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| a.atoms()[i].0).collect();
                let ma: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| a.atoms()[i].1).sum();
                let mb: f64 = b
                    .atoms()
                    .iter()
                    .filter(|(y, _)| inside.iter().any(|x| (x - y).abs() < eps))
                    .map(|a| a.1)
                    .sum();
                ma - mb
            })
            .fold(0.0, f64::max)
    }

    /// Scans every plateau between consecutive pairwise gaps; on each the
    /// smallest feasible ε is max(gap, deficiency).
    fn oracle(a: &AtomicMeasure1D, b: &AtomicMeasure1D) -> f64 {
        let mut gaps = vec![0.0];
        for &(x, _) in a.atoms() {
            for &(y, _) in b.atoms() {
                gaps.push((x - y).abs());
            }
        }
        gaps.sort_by(f64::total_cmp);
        gaps.dedup();
        gaps.push(f64::INFINITY);
        let mut best = f64::INFINITY;
        for w in gaps.windows(2) {
            let probe = if w[1].is_finite() { 0.5 * (w[0] + w[1]) } else { w[0] + 1.0 };
            let d = violation(a, b, probe).max(violation(b, a, probe));
            let cand = w[0].max(d);
            if cand <= w[1] {
                best = best.min(cand);
            }
        }
        best
    }

    #[test]
    fn examples() {
        let a = m(&[(0.0, 0.4), (1.0, 0.6)]);
        assert_eq!(prohorov_distance(&a, &a, 1e-9).unwrap(), 0.0);
        for (mass, x) in [(0.3, 1.0), (1.0, 0.25), (2.0, 2.0)] {
            let d = prohorov_distance(&m(&[(0.0, mass)]), &m(&[(x, mass)]), 1e-9).unwrap();
            assert!((d - f64::min(mass, x)).abs() <= 1e-9, "{mass} {x}: {d}");
        }
        let d = prohorov_distance(&m(&[(0.0, 1.0)]), &m(&[(0.0, 1.25)]), 1e-9).unwrap();
        assert!((d - 0.25).abs() <= 1e-9);
        assert!(prohorov_distance(&a, &a, 0.0).is_err());
        let (lo, hi) = prohorov_bracket(&m(&[(0.0, 1.0)]), &m(&[(0.3, 1.0)]), 1e-6).unwrap();
        assert!(lo <= 0.3 && hi >= 0.3 && hi - lo <= 1e-6);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = stream(17, 1);
        let random = |rng: &mut crate::rng::StreamRng| {
            let k = rng.random_range(1..=6);
            let atoms = (0..k)
                .map(|_| ((rng.random_range(0..8) as f64) * 0.25, rng.random_range(0.05..1.0)))
                .collect();
            AtomicMeasure1D::from_unsorted(atoms).unwrap()
        };
        for _ in 0..150 {
            let a = random(&mut rng);
            let mut b = random(&mut rng);
            if rng.random_bool(0.5) {
                b = b.scaled(a.total_mass() / b.total_mass());
            }
            let fast = prohorov_distance(&a, &b, 1e-9).unwrap();
            let slow = oracle(&a, &b);
            assert!((fast - slow).abs() <= 1e-6, "{a:?} {b:?}: {fast} vs {slow}");
        }
    }

    #[test]
    fn metric_properties_on_equal_masses() {
        let mut rng = stream(5, 2);
        for _ in 0..40 {
            let draw = |rng: &mut crate::rng::StreamRng| {
                let atoms = (0..4).map(|_| (rng.random_range(0.0..3.0), rng.random_range(0.1..1.0))).collect();
                let m = AtomicMeasure1D::from_unsorted(atoms).unwrap();
                m.scaled(1.0 / m.total_mass())
            };
            let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let ab = prohorov_distance(&a, &b, 1e-10).unwrap();
            let ba = prohorov_distance(&b, &a, 1e-10).unwrap();
            let bc = prohorov_distance(&b, &c, 1e-10).unwrap();
            let ac = prohorov_distance(&a, &c, 1e-10).unwrap();
            assert!((ab - ba).abs() <= 1e-9);
            assert!(ac <= ab + bc + 1e-9);
        }
    }

    #[test]
    fn metric_matrix_version() {
        // Two points at distance 2: moving mass 0.5 costs min(0.5, 2).
        let d = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
        let (_, hi) = prohorov_on_metric(&d, &[1.0, 0.0], &[0.5, 0.5], 1e-9).unwrap();
        assert!((hi - 0.5).abs() <= 1e-9);
        assert_eq!(prohorov_on_metric(&d, &[1.0, 1.0], &[1.0, 1.0], 1e-9).unwrap(), (0.0, 0.0));
    }
}
