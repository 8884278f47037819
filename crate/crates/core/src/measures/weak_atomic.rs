//! Weak versus weak-atomic convergence of measures on the half-line.
//!
//! Weak convergence is read off the Prohorov distance; weak-atomic
//! convergence off the Skorohod distance of the distribution functions,
//! which converge exactly when the measures converge weakly together with
//! their atoms. Masses are normalized by the target's total mass first so
//! that the `∧ 1` truncation inside the Skorohod distance is inactive.

use crate::error::Result;
use crate::profiles::{skorohod_distance, SkorohodOptions};

use super::prohorov::prohorov_distance;
use super::AtomicMeasure1D;

#[derive(Debug, Clone, Copy)]
pub struct WeakAtomicOptions {
    /// Threshold on the last term of each distance sequence.
    pub tol: f64,
    pub prohorov_tol: f64,
    pub skorohod: SkorohodOptions,
}

impl Default for WeakAtomicOptions {
    fn default() -> Self {
        WeakAtomicOptions {
            tol: 1e-2,
            prohorov_tol: 1e-9,
            skorohod: SkorohodOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeakAtomicClass {
    WeakAtomic,
    WeakOnly,
    NotConvergent,
}

impl WeakAtomicClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeakAtomicClass::WeakAtomic => "weak-atomic",
            WeakAtomicClass::WeakOnly => "weak-only",
            WeakAtomicClass::NotConvergent => "not-convergent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakAtomicDiagnostic {
    pub class: WeakAtomicClass,
    /// Normalized Prohorov distances to the target, one per term.
    pub prohorov: Vec<f64>,
    /// Normalized Skorohod distances between distribution functions.
    pub skorohod: Vec<f64>,
}

impl WeakAtomicDiagnostic {
    pub fn weak(&self) -> bool {
        self.class != WeakAtomicClass::NotConvergent
    }

    pub fn weak_atomic(&self) -> bool {
        self.class == WeakAtomicClass::WeakAtomic
    }
}

pub fn cdf_skorohod_converges(
    seq: &[AtomicMeasure1D],
    target: &AtomicMeasure1D,
    opts: &WeakAtomicOptions,
) -> Result<WeakAtomicDiagnostic> {
    let total = target.total_mass();
    let scale = if total > 0.0 { 1.0 / total } else { 1.0 };
    let target = target.scaled(scale);
    let target_cdf = target.cdf();
    let mut prohorov = Vec::with_capacity(seq.len());
    let mut skorohod = Vec::with_capacity(seq.len());
    for m in seq {
        let m = m.scaled(scale);
        prohorov.push(prohorov_distance(&m, &target, opts.prohorov_tol)?);
        skorohod.push(skorohod_distance(&m.cdf(), &target_cdf, &opts.skorohod)?.value);
    }
    let small = |v: &[f64]| v.last().is_none_or(|&x| x <= opts.tol);
    let class = match (small(&prohorov), small(&skorohod)) {
        (true, true) => WeakAtomicClass::WeakAtomic,
        (true, false) => WeakAtomicClass::WeakOnly,
        _ => WeakAtomicClass::NotConvergent,
    };
    Ok(WeakAtomicDiagnostic {
        class,
        prohorov,
        skorohod,
    })
}
