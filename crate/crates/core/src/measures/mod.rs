//! Distance-matrix distributions and distances between spaces.
//!
//! `ν²` is the law of the distance between two points sampled from the
//! (unnormalized) mass measure, so its total mass is the squared total
//! mass of the tree. Its atomic part `(ν²)*` squares every atom.

mod flow;
mod gp;
mod prohorov;
mod sample;
mod weak_atomic;

pub use gp::{gp_upper_bound, gwa_distance_surrogate, GpBound, GpStrategy, GwaSurrogate};
pub use prohorov::{prohorov_bracket, prohorov_distance, prohorov_on_metric};
pub use sample::{nu_k, DistanceSample, SampleMode};
pub use weak_atomic::{cdf_skorohod_converges, WeakAtomicClass, WeakAtomicDiagnostic, WeakAtomicOptions};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::profiles::{ProfilePath, RankedProfile};
use crate::umspace::MergeTree;

/// Finite purely atomic measure on `[0, inf)`; locations strictly increase.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "AtomsFile", into = "AtomsFile")]
pub struct AtomicMeasure1D {
    atoms: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct AtomsFile {
    atoms: Vec<(f64, f64)>,
}

impl TryFrom<AtomsFile> for AtomicMeasure1D {
    type Error = crate::error::Error;

    fn try_from(f: AtomsFile) -> Result<Self> {
        AtomicMeasure1D::new(f.atoms)
    }
}

impl From<AtomicMeasure1D> for AtomsFile {
    fn from(m: AtomicMeasure1D) -> Self {
        AtomsFile { atoms: m.atoms }
    }
}

impl AtomicMeasure1D {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        for &(x, m) in &atoms {
            if !(x.is_finite() && x >= 0.0) {
                return invalid(format!("atom location {x} must be finite and non-negative"));
            }
            if !(m.is_finite() && m > 0.0) {
                return invalid(format!("atom mass {m} must be finite and positive"));
            }
        }
        if atoms.windows(2).any(|w| w[0].0 >= w[1].0) {
            return invalid("atom locations must be strictly increasing");
        }
        Ok(AtomicMeasure1D { atoms })
    }

    /// Sorts the atoms and adds up masses at equal locations.
    pub fn from_unsorted(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, m) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += m,
                _ => merged.push((x, m)),
            }
        }
        Self::new(merged)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// Mass of the atom at exactly `x`.
    pub fn mass_at(&self, x: f64) -> f64 {
        self.atoms.iter().find(|a| a.0 == x).map_or(0.0, |a| a.1)
    }

    /// `m([0, x])`.
    pub fn mass_up_to(&self, x: f64) -> f64 {
        self.atoms.iter().take_while(|a| a.0 <= x).map(|a| a.1).sum()
    }

    /// `m((x, inf))`.
    pub fn mass_above(&self, x: f64) -> f64 {
        self.atoms.iter().filter(|a| a.0 > x).map(|a| a.1).sum()
    }

    pub fn scaled(&self, factor: f64) -> AtomicMeasure1D {
        AtomicMeasure1D {
            atoms: self.atoms.iter().map(|&(x, m)| (x, m * factor)).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("measure serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Right-continuous distribution function as a path of one-entry
    /// profiles; an atom at 0 becomes the value at 0.
    pub fn cdf(&self) -> ProfilePath {
        let at_zero = self.mass_at(0.0);
        let mut jumps = Vec::new();
        let mut values = vec![RankedProfile::from_masses(vec![at_zero])];
        let mut acc = at_zero;
        for &(x, m) in &self.atoms {
            if x > 0.0 {
                acc += m;
                jumps.push(x);
                values.push(RankedProfile::from_masses(vec![acc]));
            }
        }
        let zero = values[0].clone();
        ProfilePath::new(jumps, values, Some(zero)).expect("atoms give a valid step path")
    }
}

/// Each atom's mass squared, same locations.
pub fn atomic_square(m: &AtomicMeasure1D) -> AtomicMeasure1D {
    AtomicMeasure1D {
        atoms: m.atoms.iter().map(|&(x, w)| (x, w * w)).collect(),
    }
}

/// `ν²` of the tree: the diagonal at 0, and at every merge height the
/// ordered pairs of leaves first joined there.
pub fn nu2(t: &MergeTree) -> AtomicMeasure1D {
    let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(t.merges().len() + 1);
    atoms.push((0.0, t.leaves().iter().map(|l| l.mass * l.mass).sum()));
    let mut merges: Vec<(f64, f64)> = t
        .merges()
        .iter()
        .map(|m| {
            let within: f64 = m.children.iter().map(|&c| t.mass(c).powi(2)).sum();
            (m.height, m.mass() * m.mass() - within)
        })
        .collect();
    merges.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (h, w) in merges {
        match atoms.last_mut() {
            Some(last) if last.0 == h => last.1 += w,
            _ => atoms.push((h, w)),
        }
    }
    AtomicMeasure1D { atoms }
}

/// `ν²((h, inf))` read off the family sizes at `h`: `(Σ f)² - Σ f²`.
pub fn nu2_tail(t: &MergeTree, h: f64) -> Result<f64> {
    let f = t.family_sizes(h)?;
    let s = f.total();
    Ok((s * s - f.sum_of_squares()).max(0.0))
}

/// Modulus of mass distribution:
/// `inf { e > 0 : μ{x : μ(B(x, e)) <= δ} <= e }` with open balls.
///
/// The mass of points in light open `e`-balls is constant for `e` in
/// `(h_k, h_{k+1}]` between consecutive merge heights, where it equals the
/// light mass of the closed `h_k`-balls; the infimum on each such interval
/// is `max(h_k, light mass)` whenever that is at most `h_{k+1}`.
pub fn modulus_of_mass(t: &MergeTree, delta: f64) -> Result<f64> {
    if !(delta.is_finite() && delta >= 0.0) {
        return invalid(format!("δ = {delta} must be finite and non-negative"));
    }
    let light = |f: &RankedProfile| -> f64 { f.entries().iter().filter(|&&m| m <= delta).sum() };
    let heights = t.merge_heights();
    let mut lo = 0.0;
    let mut g = light(&t.family_sizes_at_zero());
    for hi in heights.iter().copied().chain(std::iter::once(f64::INFINITY)) {
        let cand = f64::max(lo, g);
        if cand <= hi {
            return Ok(cand);
        }
        if hi.is_finite() {
            lo = hi;
            g = light(&t.family_sizes(hi)?);
        }
    }
    unreachable!("the last interval is unbounded")
}
