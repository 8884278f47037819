//! Ranked mass profiles and the family-size decomposition path.

mod convergence;
mod quadrature;
mod skorohod;

pub use convergence::{
    converges_to, ConditionViolation, ConvergenceCriteria, ConvergenceReport, EvalSequence,
};
pub use quadrature::WeightIntegrals;
pub use skorohod::{skorohod_distance, SkorohodEstimate, SkorohodOptions};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::umspace::{MergeTree, SCHEMA};

/// A non-increasing, finitely supported vector of non-negative masses.
/// Trailing zeros are never stored.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankedProfile(Vec<f64>);

impl RankedProfile {
    /// Sorts `masses` in decreasing order and drops zeros.
    pub fn from_masses(mut masses: Vec<f64>) -> Self {
        debug_assert!(masses.iter().all(|m| m.is_finite() && *m >= 0.0));
        masses.retain(|&m| m > 0.0);
        masses.sort_by(|a, b| b.total_cmp(a));
        RankedProfile(masses)
    }

    /// Accepts an already ranked vector, rejecting anything out of order.
    pub fn from_ranked(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return invalid("profile entries must be finite and non-negative");
        }
        if entries.windows(2).any(|w| w[0] < w[1]) {
            return invalid("profile entries must be non-increasing");
        }
        let mut entries = entries;
        while entries.last() == Some(&0.0) {
            entries.pop();
        }
        Ok(RankedProfile(entries))
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Entry `i` (0-based), zero beyond the support.
    pub fn get(&self, i: usize) -> f64 {
        self.0.get(i).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    /// Sum of the `m` largest entries.
    pub fn partial_sum(&self, m: usize) -> f64 {
        self.0.iter().take(m).sum()
    }

    pub fn l1_distance(&self, other: &RankedProfile) -> f64 {
        l1_distance(self, other)
    }

    pub fn sup_distance(&self, other: &RankedProfile) -> f64 {
        sup_distance(self, other)
    }
}

/// Sum of entrywise differences after zero padding.
pub fn l1_distance(p: &RankedProfile, q: &RankedProfile) -> f64 {
    (0..p.len().max(q.len())).map(|i| (p.get(i) - q.get(i)).abs()).sum()
}

/// Largest entrywise difference after zero padding.
pub fn sup_distance(p: &RankedProfile, q: &RankedProfile) -> f64 {
    (0..p.len().max(q.len()))
        .map(|i| (p.get(i) - q.get(i)).abs())
        .fold(0.0, f64::max)
}

/// Right-continuous step function `(0, inf) -> ranked profiles`.
///
/// `values[0]` holds on `(0, jumps[0])` and `values[k]` on
/// `[jumps[k-1], jumps[k])`. `zero_value` is the value at depth 0 when it is
/// known (for trees: the ranked atoms).
#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePath {
    jumps: Vec<f64>,
    values: Vec<RankedProfile>,
    zero_value: Option<RankedProfile>,
}

impl ProfilePath {
    pub fn new(
        jumps: Vec<f64>,
        values: Vec<RankedProfile>,
        zero_value: Option<RankedProfile>,
    ) -> Result<Self> {
        if values.len() != jumps.len() + 1 {
            return invalid(format!(
                "{} jumps need {} values, got {}",
                jumps.len(),
                jumps.len() + 1,
                values.len()
            ));
        }
        if jumps.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return invalid("jump heights must be positive and finite");
        }
        if jumps.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("jump heights must be strictly increasing");
        }
        if let Some(k) = values.windows(2).position(|w| w[0] == w[1]) {
            return invalid(format!("no change of value at jump {}", jumps[k]));
        }
        Ok(ProfilePath {
            jumps,
            values,
            zero_value,
        })
    }

    /// A path that never jumps.
    pub fn constant(value: RankedProfile) -> Self {
        ProfilePath {
            jumps: Vec::new(),
            values: vec![value],
            zero_value: None,
        }
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    pub fn values(&self) -> &[RankedProfile] {
        &self.values
    }

    pub fn zero_value(&self) -> Option<&RankedProfile> {
        self.zero_value.as_ref()
    }

    /// Value at `h`; at `h = 0` the recorded zero value, or the right limit.
    pub fn evaluate(&self, h: f64) -> &RankedProfile {
        if h <= 0.0 {
            return self.zero_value.as_ref().unwrap_or(&self.values[0]);
        }
        &self.values[self.jumps.partition_point(|&j| j <= h)]
    }

    /// Left limit at `h > 0`.
    pub fn evaluate_left(&self, h: f64) -> &RankedProfile {
        &self.values[self.jumps.partition_point(|&j| j < h)]
    }

    /// Heights shifted by `-delta`, keeping only the part at or after `delta`.
    pub fn shifted(&self, delta: f64) -> ProfilePath {
        let start = self.jumps.partition_point(|&j| j <= delta);
        ProfilePath {
            jumps: self.jumps[start..].iter().map(|j| j - delta).collect(),
            values: self.values[start..].to_vec(),
            zero_value: Some(self.values[start].clone()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PathFile::from_path(self)).expect("path serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str::<PathFile>(s)?.to_path()
    }

    /// One row per plateau: `h_start,h_end,families,profile` where the
    /// profile entries are joined by `;`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h_start,h_end,families,profile\n");
        for (k, v) in self.values.iter().enumerate() {
            let start = if k == 0 { 0.0 } else { self.jumps[k - 1] };
            let end = self
                .jumps
                .get(k)
                .map(|j| format!("{j:?}"))
                .unwrap_or_else(|| "inf".to_string());
            let entries: Vec<String> = v.entries().iter().map(|x| format!("{x:?}")).collect();
            out.push_str(&format!("{start:?},{end},{},{}\n", v.len(), entries.join(";")));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathFile {
    pub schema: String,
    pub jumps: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_value: Option<Vec<f64>>,
}

impl PathFile {
    pub fn from_path(p: &ProfilePath) -> Self {
        PathFile {
            schema: SCHEMA.to_string(),
            jumps: p.jumps.clone(),
            values: p.values.iter().map(|v| v.entries().to_vec()).collect(),
            zero_value: p.zero_value.as_ref().map(|v| v.entries().to_vec()),
        }
    }

    pub fn to_path(&self) -> Result<ProfilePath> {
        if self.schema != SCHEMA {
            return invalid(format!("unsupported schema '{}', expected '{SCHEMA}'", self.schema));
        }
        let values = self
            .values
            .iter()
            .map(|v| RankedProfile::from_ranked(v.clone()))
            .collect::<Result<Vec<_>>>()?;
        let zero = self
            .zero_value
            .as_ref()
            .map(|v| RankedProfile::from_ranked(v.clone()))
            .transpose()?;
        ProfilePath::new(self.jumps.clone(), values, zero)
    }
}

impl MergeTree {
    /// The family-size decomposition `h -> family_sizes(h)` as a step path.
    pub fn decomposition_path(&self) -> ProfilePath {
        let jumps = self.merge_heights();
        let atoms = self.family_sizes_at_zero();
        let mut values = Vec::with_capacity(jumps.len() + 1);
        values.push(atoms.clone());
        for &h in &jumps {
            values.push(self.family_sizes(h).expect("merge heights are positive"));
        }
        ProfilePath {
            jumps,
            values,
            zero_value: Some(atoms),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{equilateral_triple, random_tree, split_triple, TreeSpec};
    use proptest::prelude::*;

    fn p(v: &[f64]) -> RankedProfile {
        RankedProfile::from_masses(v.to_vec())
    }

    pub(crate) fn u() -> MergeTree {
        equilateral_triple()
    }

    pub(crate) fn u_n(n: f64) -> MergeTree {
        split_triple(n)
    }

    #[test]
    fn profile_distances() {
        assert_eq!(l1_distance(&p(&[3.0]), &p(&[1.0, 1.0, 1.0])), 4.0);
        assert_eq!(sup_distance(&p(&[3.0]), &p(&[1.0, 1.0, 1.0])), 2.0);
        assert_eq!(l1_distance(&p(&[2.0, 1.0]), &p(&[3.0])), 2.0);
        assert_eq!(sup_distance(&p(&[2.0, 1.0]), &p(&[3.0])), 1.0);
        let x = p(&[0.4, 0.1, 0.5]);
        assert_eq!(l1_distance(&x, &x), 0.0);
        assert_eq!(x.entries(), &[0.5, 0.4, 0.1]);
    }

    #[test]
    fn ranked_input_validation() {
        assert!(RankedProfile::from_ranked(vec![1.0, 2.0]).is_err());
        assert!(RankedProfile::from_ranked(vec![1.0, -0.5]).is_err());
        assert_eq!(RankedProfile::from_ranked(vec![2.0, 0.0, 0.0]).unwrap().entries(), &[2.0]);
    }

    #[test]
    fn decomposition_examples() {
        let n = 10.0;
        let path = u_n(n).decomposition_path();
        assert_eq!(path.jumps(), &[1.0, 1.0 + 1.0 / n]);
        assert_eq!(path.values(), &[p(&[1.0, 1.0, 1.0]), p(&[2.0, 1.0]), p(&[3.0])]);

        let path = u().decomposition_path();
        assert_eq!(path.jumps(), &[1.0]);
        assert_eq!(path.values(), &[p(&[1.0, 1.0, 1.0]), p(&[3.0])]);
        assert_eq!(path.evaluate(1.0), &p(&[3.0]));
        assert_eq!(path.evaluate_left(1.0), &p(&[1.0, 1.0, 1.0]));
        assert_eq!(path.evaluate(7.0), &p(&[3.0]));

        let single = MergeTree::single("a", 0.25).unwrap().decomposition_path();
        assert!(single.jumps().is_empty());
        assert_eq!(single.evaluate(0.0), &p(&[0.25]));
        assert_eq!(single.evaluate(4.0), &p(&[0.25]));
    }

    #[test]
    fn path_validation() {
        assert!(ProfilePath::new(vec![1.0], vec![p(&[1.0])], None).is_err());
        assert!(ProfilePath::new(vec![1.0, 1.0], vec![p(&[1.0, 1.0]), p(&[2.0]), p(&[2.0])], None).is_err());
        assert!(ProfilePath::new(vec![1.0], vec![p(&[2.0]), p(&[2.0])], None).is_err());
        assert!(ProfilePath::new(vec![0.0], vec![p(&[1.0, 1.0]), p(&[2.0])], None).is_err());
    }

    #[test]
    fn json_and_csv() {
        let path = u_n(4.0).decomposition_path();
        let back = ProfilePath::from_json(&path.to_json()).unwrap();
        assert_eq!(back, path);
        let csv = path.to_csv();
        assert_eq!(csv.lines().count(), 1 + path.jumps().len() + 1);
        assert!(csv.lines().nth(1).unwrap().starts_with("0.0,1.0,3,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn path_matches_family_sizes(seed in any::<u64>(), n in 1usize..30, a in 0.001f64..1.5) {
            let t = random_tree(&TreeSpec::multifurcating(n), seed);
            let path = t.decomposition_path();
            let h = a * t.root_height().max(1e-3);
            prop_assert_eq!(path.evaluate(h), &t.family_sizes(h).unwrap());
            prop_assert_eq!(path.evaluate_left(h), &t.family_sizes_left_limit(h).unwrap());
            prop_assert!((path.evaluate(h).total() - t.total_mass()).abs() <= 1e-12 * t.total_mass());
            for &j in path.jumps() {
                prop_assert_ne!(path.evaluate(j), path.evaluate_left(j));
                prop_assert_eq!(path.evaluate(j), &t.family_sizes(j).unwrap());
                prop_assert_eq!(path.evaluate_left(j), &t.family_sizes_left_limit(j).unwrap());
            }
            prop_assert_eq!(path.values().last().unwrap().len(), 1);
        }

        #[test]
        fn partial_sums_increase_along_path(seed in any::<u64>(), n in 1usize..30) {
            let path = random_tree(&TreeSpec::multifurcating(n), seed).decomposition_path();
            for w in path.values().windows(2) {
                for m in 1..=16 {
                    prop_assert!(w[1].partial_sum(m) >= w[0].partial_sum(m) - 1e-12);
                }
            }
        }

        #[test]
        fn cut_shifts_the_path(seed in any::<u64>(), n in 2usize..30, a in 0.01f64..0.99) {
            let t = random_tree(&TreeSpec::multifurcating(n), seed);
            let delta = a * t.root_height();
            let lhs = t.cut(delta).unwrap().decomposition_path();
            let rhs = t.decomposition_path().shifted(delta);
            // Ball masses are re-summed after the cut, so allow rounding.
            prop_assert_eq!(lhs.jumps().len(), rhs.jumps().len());
            for (x, y) in lhs.values().iter().zip(rhs.values()) {
                prop_assert_eq!(x.len(), y.len());
                prop_assert!(x.l1_distance(y) <= 1e-12 * t.total_mass());
            }
            for (x, y) in lhs.jumps().iter().zip(rhs.jumps()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
            }
        }
    }
}
