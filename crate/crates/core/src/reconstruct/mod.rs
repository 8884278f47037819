//! Rebuilding a tree from its decomposition path or from `ν²` alone.
//!
//! Both searches enumerate every consistent candidate (stopping at the
//! second one) rather than committing to the first, so non-unique inputs
//! are reported instead of silently resolved. Every result is certified by
//! recomputing the input from the reconstructed tree.

mod from_nu2;
mod from_path;

pub use from_nu2::{nu2_completions, tree_from_nu2};
pub use from_path::tree_from_path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ReconstructOptions {
    /// Absolute tolerance for matching sums and products of masses.
    pub tol: f64,
    /// Refuse atoms that fail the subset-sum distinctness test up front.
    pub check_identifiable: bool,
    /// Maximum number of search nodes before giving up.
    pub budget: usize,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            tol: 1e-9,
            check_identifiable: true,
            budget: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TraceStep {
    /// Ascending step: `groups[j]` lists the indices of the previous
    /// profile that add up to entry `j` of the new one.
    Merge { height: f64, groups: Vec<Vec<usize>> },
    /// Descending step: a ball of mass `parent` splits into `children`.
    Split {
        height: f64,
        parent: f64,
        children: (f64, f64),
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    /// The input recomputed from the result matches within tolerance.
    pub verified: bool,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionTrace {
    pub steps: Vec<TraceStep>,
    pub nodes_explored: usize,
    pub certificate: Certificate,
}

/// Closed-form inverse for three points: from `b0 = ν²{0}`,
/// `b1 = ν²[0, t1]` and `b2 = ν²[0, t2]` (the total), recovers the masses
/// `x >= y` joined at `t1` and `z` joining them at `t2`. The formula
/// assumes `z <= x + y`; the triple `(x, y, z)` with `z > x + y` shares its
/// `b`-values with a triple where the roles of `z` and `x + y` swap.
pub fn three_point_inversion(b0: f64, b1: f64, b2: f64) -> Result<(f64, f64, f64)> {
    let slack = 1e-12 * b2.abs().max(1.0);
    let root = |name: &str, v: f64| -> Result<f64> {
        if v < -slack || v.is_nan() {
            Err(Error::Domain(format!("radicand {name} = {v} is negative")))
        } else {
            Ok(v.max(0.0).sqrt())
        }
    };
    let r2 = root("b2", b2)?;
    let r21 = root("2·b1 − b2", 2.0 * b1 - b2)?;
    if r2 < r21 {
        return Err(Error::Domain(format!("b2 = {b2} is smaller than 2·b1 − b2 = {}", 2.0 * b1 - b2)));
    }
    let cross = 2.0 * r2 * r21;
    let sum = root("2√b2·√(2b1−b2) + 2b1", cross + 2.0 * b1)?;
    let diff = root("2√b2·√(2b1−b2) + 8b0 − 6b1", cross + 8.0 * b0 - 6.0 * b1)?;
    Ok(((sum + diff) / 4.0, (sum - diff) / 4.0, (r2 - r21) / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs(x: f64, y: f64, z: f64) -> (f64, f64, f64) {
        (x * x + y * y + z * z, (x + y).powi(2) + z * z, (x + y + z).powi(2))
    }

    #[test]
    fn three_point_examples() {
        let (x, y, z) = three_point_inversion(0.38, 0.68, 1.0).unwrap();
        assert!((x - 0.5).abs() < 1e-12 && (y - 0.3).abs() < 1e-12 && (z - 0.2).abs() < 1e-12);
        let (b0, b1, b2) = bs(0.4, 0.4, 0.2);
        let (x, y, z) = three_point_inversion(b0, b1, b2).unwrap();
        assert!((x - 0.4).abs() < 1e-7 && (y - 0.4).abs() < 1e-7 && (z - 0.2).abs() < 1e-12);
        assert!(matches!(three_point_inversion(0.1, 0.2, 1.0), Err(Error::Domain(_))));
        assert!(matches!(three_point_inversion(0.3, 0.9, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn heavy_third_point_is_not_recovered() {
        // z = 7 > x + y = 3: the b-values coincide with x + y = 7, z = 3.
        let (b0, b1, b2) = bs(2.0, 1.0, 7.0);
        let (x, y, z) = three_point_inversion(b0, b1, b2).unwrap();
        assert!((x + y - 7.0).abs() < 1e-9 && (x * y - 2.0).abs() < 1e-9 && (z - 3.0).abs() < 1e-12);
    }

    #[test]
    fn three_point_round_trip() {
        for &(x, y, z) in &[(0.5, 0.3, 0.2), (2.0, 1.0, 2.5), (0.9, 0.05, 0.05), (3.0, 2.5, 0.1)] {
            let (b0, b1, b2) = bs(x, y, z);
            let (a, b, c) = three_point_inversion(b0, b1, b2).unwrap();
            assert!((a - x).abs() < 1e-9 * b2 && (b - y).abs() < 1e-9 * b2 && (c - z).abs() < 1e-12 * b2);
        }
    }
}
