//! Sequential convergence diagnostics for profile paths.
//!
//! `f_n -> f` in the Skorohod sense iff for every `t_n -> t`:
//!
//! * (a) `f_n(t_n)` approaches `f(t)` or `f(t-)` (in ℓ¹; at `t = 0` in sup),
//! * (b) if it approaches `f(t)`, so does `f_n(s_n)` for all `s_n >= t_n`, `s_n -> t`,
//! * (c) if it approaches `f(t-)`, so does `f_n(s_n)` for all `s_n <= t_n`, `s_n -> t`.
//!
//! A finite sequence can only be probed, not decided: "→ 0" is read as
//! "the last `tail` terms are at most `tol`", and the `s_n` range over a
//! window around `t_n` that shrinks with `|t_n - t|` unless supplied.

use super::{l1_distance, sup_distance, ProfilePath, RankedProfile};

/// Evaluation points `t_n` (one per path) converging to `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSequence {
    pub t: f64,
    pub t_n: Vec<f64>,
    /// Half-widths of the `s_n` windows; defaults to `|t_n - t|`.
    pub windows: Option<Vec<f64>>,
}

impl EvalSequence {
    pub fn new(t: f64, t_n: Vec<f64>) -> Self {
        EvalSequence { t, t_n, windows: None }
    }

    pub fn constant(t: f64, len: usize) -> Self {
        EvalSequence::new(t, vec![t; len])
    }

    fn window(&self, k: usize) -> f64 {
        match &self.windows {
            Some(w) => w[k].max((self.t_n[k] - self.t).abs()),
            None => (self.t_n[k] - self.t).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceCriteria {
    pub tol: f64,
    pub tail: usize,
    pub sequences: Vec<EvalSequence>,
}

impl ConvergenceCriteria {
    /// Probing sequences built from the jumps of `target` and of each path:
    /// the jump itself, points approaching it from both sides, the nearest
    /// jump of each path and the midpoint towards it, plus plateau
    /// midpoints and `t = 0`.
    pub fn auto(paths: &[ProfilePath], target: &ProfilePath, tol: f64) -> Self {
        let len = paths.len();
        let jumps = target.jumps();
        let gap = jumps
            .windows(2)
            .map(|w| w[1] - w[0])
            .chain(jumps.first().copied())
            .fold(1.0, f64::min);
        let mut sequences = vec![EvalSequence::constant(0.0, len)];
        for (k, &t) in jumps.iter().enumerate() {
            sequences.push(EvalSequence::constant(t, len));
            let delta: Vec<f64> = (0..len).map(|n| 0.5 * gap / (n as f64 + 2.0)).collect();
            sequences.push(EvalSequence::new(t, delta.iter().map(|d| t + d).collect()));
            sequences.push(EvalSequence::new(t, delta.iter().map(|d| t - d).collect()));
            if paths.iter().all(|p| !p.jumps().is_empty()) {
                let nearest: Vec<f64> = paths.iter().map(|p| nearest_jump(p.jumps(), t)).collect();
                sequences.push(EvalSequence::new(t, nearest.iter().map(|&s| 0.5 * (s + t)).collect()));
                sequences.push(EvalSequence::new(t, nearest));
            }
            let next = jumps.get(k + 1).copied().unwrap_or(t + 1.0);
            sequences.push(EvalSequence::constant(0.5 * (t + next), len));
        }
        if let Some(&first) = jumps.first() {
            sequences.push(EvalSequence::constant(0.5 * first, len));
        } else {
            sequences.push(EvalSequence::constant(1.0, len));
        }
        ConvergenceCriteria {
            tol,
            tail: 1,
            sequences,
        }
    }
}

fn nearest_jump(jumps: &[f64], t: f64) -> f64 {
    jumps
        .iter()
        .copied()
        .min_by(|a, b| (a - t).abs().total_cmp(&(b - t).abs()))
        .unwrap_or(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionViolation {
    /// `'a'`, `'b'` or `'c'`.
    pub condition: char,
    pub t: f64,
    /// Index into the path sequence.
    pub index: usize,
    pub t_n: f64,
    /// Worst point `s_n` (equal to `t_n` for condition (a)).
    pub s_n: f64,
    pub value: RankedProfile,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub converges: bool,
    pub sequences_checked: usize,
    pub violations: Vec<ConditionViolation>,
}

impl ConvergenceReport {
    pub fn first_violation(&self) -> Option<&ConditionViolation> {
        self.violations.first()
    }
}

/// Largest ℓ¹ distance from `reference` over `path` on `[lo, hi]`, with
/// the point attaining it.
fn sup_on(path: &ProfilePath, lo: f64, hi: f64, reference: &RankedProfile) -> (f64, f64) {
    let mut best = (l1_distance(path.evaluate(lo), reference), lo);
    for &j in path.jumps() {
        if j > lo && j <= hi {
            let d = l1_distance(path.evaluate(j), reference);
            if d > best.0 {
                best = (d, j);
            }
        }
    }
    best
}

/// Probes the characterization of `paths -> target` along the criteria's
/// sequences, reporting every sequence whose tail violates a condition.
pub fn converges_to(
    paths: &[ProfilePath],
    target: &ProfilePath,
    criteria: &ConvergenceCriteria,
) -> ConvergenceReport {
    let mut violations = Vec::new();
    let len = paths.len();
    let tail_start = len.saturating_sub(criteria.tail.max(1));
    let small = |xs: &[f64]| xs[tail_start..].iter().all(|&x| x <= criteria.tol);
    let mut checked = 0;
    for seq in &criteria.sequences {
        if seq.t_n.len() != len {
            continue;
        }
        checked += 1;
        let t = seq.t;
        let (at_t, before_t) = if t > 0.0 {
            (target.evaluate(t), target.evaluate_left(t))
        } else {
            (target.evaluate(0.0), target.evaluate(0.0))
        };
        let vals: Vec<&RankedProfile> = paths.iter().zip(&seq.t_n).map(|(p, &s)| p.evaluate(s)).collect();
        let d_at: Vec<f64> = vals.iter().map(|v| l1_distance(v, at_t)).collect();
        let d_before: Vec<f64> = vals.iter().map(|v| l1_distance(v, before_t)).collect();
        let d_a: Vec<f64> = if t > 0.0 {
            d_at.iter().zip(&d_before).map(|(x, y)| x.min(*y)).collect()
        } else {
            vals.iter().map(|v| sup_distance(v, at_t)).collect()
        };
        if !small(&d_a) {
            let k = (tail_start..len).max_by(|&i, &j| d_a[i].total_cmp(&d_a[j])).unwrap();
            violations.push(ConditionViolation {
                condition: 'a',
                t,
                index: k,
                t_n: seq.t_n[k],
                s_n: seq.t_n[k],
                value: vals[k].clone(),
                distance: d_a[k],
            });
            continue;
        }
        if t <= 0.0 {
            continue;
        }
        for (cond, premise, reference) in [('b', &d_at, at_t), ('c', &d_before, before_t)] {
            if !small(premise) {
                continue;
            }
            for k in tail_start..len {
                let tn = seq.t_n[k];
                let w = seq.window(k);
                let (lo, hi) = if cond == 'b' {
                    (tn, tn.max(t) + w)
                } else {
                    ((tn.min(t) - w).max(0.0), tn)
                };
                let (d, s) = sup_on(&paths[k], lo, hi, reference);
                if d > criteria.tol {
                    violations.push(ConditionViolation {
                        condition: cond,
                        t,
                        index: k,
                        t_n: tn,
                        s_n: s,
                        value: paths[k].evaluate(s).clone(),
                        distance: d,
                    });
                    break;
                }
            }
        }
    }
    ConvergenceReport {
        converges: violations.is_empty(),
        sequences_checked: checked,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{u, u_n};
    use super::*;
    use crate::gen::{random_tree, TreeSpec};

    fn p(v: &[f64]) -> RankedProfile {
        RankedProfile::from_masses(v.to_vec())
    }

    #[test]
    fn constant_sequence_converges() {
        let target = random_tree(&TreeSpec::multifurcating(7), 3).decomposition_path();
        let seq = vec![target.clone(); 4];
        let r = converges_to(&seq, &target, &ConvergenceCriteria::auto(&seq, &target, 1e-9));
        assert!(r.converges, "{:?}", r.first_violation());
        assert!(r.sequences_checked > 3);
    }

    #[test]
    fn plateau_sequence_is_rejected() {
        let target = u().decomposition_path();
        let seq: Vec<ProfilePath> = [10.0, 100.0, 1000.0].iter().map(|&n| u_n(n).decomposition_path()).collect();
        let r = converges_to(&seq, &target, &ConvergenceCriteria::auto(&seq, &target, 1e-9));
        assert!(!r.converges);
        let v = r.first_violation().unwrap();
        assert_eq!(v.condition, 'a');
        assert_eq!(v.t, 1.0);
        assert_eq!(v.value, p(&[2.0, 1.0]));
        assert!(v.t_n >= 1.0 && v.t_n < 1.001);

        // The explicit sequence t_n = 1 + 1/n, looking just left of it.
        let left: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|n| 1.0 + 0.5 / n).collect();
        let crit = ConvergenceCriteria {
            tol: 1e-9,
            tail: 3,
            sequences: vec![EvalSequence::new(1.0, left)],
        };
        let r = converges_to(&seq, &target, &crit);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].distance, 2.0);
    }

    #[test]
    fn cuts_converge_to_the_original() {
        for seed in 0..8 {
            let t = random_tree(&TreeSpec::multifurcating(9), seed);
            let target = t.decomposition_path();
            let seq: Vec<ProfilePath> = [10.0, 100.0, 1e4, 1e7]
                .iter()
                .map(|&n| t.cut(1.0 / n).unwrap().decomposition_path())
                .collect();
            let r = converges_to(&seq, &target, &ConvergenceCriteria::auto(&seq, &target, 1e-6));
            assert!(r.converges, "seed {seed}: {:?}", r.first_violation());
        }
    }

    #[test]
    fn late_extra_jump_breaks_condition_b() {
        // f_n jumps to the final value at 1 but dips back after, inside the window.
        let target = ProfilePath::new(vec![1.0], vec![p(&[1.0, 1.0]), p(&[2.0])], None).unwrap();
        let bad = ProfilePath::new(
            vec![1.0, 1.01, 1.02],
            vec![p(&[1.0, 1.0]), p(&[2.0]), p(&[1.5, 0.5]), p(&[2.0])],
            None,
        )
        .unwrap();
        let crit = ConvergenceCriteria {
            tol: 1e-9,
            tail: 1,
            sequences: vec![EvalSequence {
                t: 1.0,
                t_n: vec![1.0],
                windows: Some(vec![0.05]),
            }],
        };
        let r = converges_to(&[bad], &target, &crit);
        assert_eq!(r.first_violation().unwrap().condition, 'b');
        assert_eq!(r.first_violation().unwrap().s_n, 1.01);
    }
}
