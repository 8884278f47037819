//! Kolmogorov–Smirnov tests used by the simulation checks.
//!
//! p-values use the asymptotic Kolmogorov distribution with Stephens'
//! small-sample correction `λ = (√n + 0.12 + 0.11/√n)·D`.

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    /// Effective sample size entering the correction.
    pub n_eff: f64,
    pub p_value: f64,
}

impl KsResult {
    pub fn rejected(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Theta-function form, fast for small λ.
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let s: f64 = (0..8).map(|k| y.powi((2 * k + 1) * (2 * k + 1))).sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=50)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

fn p_value(d: f64, n_eff: f64) -> f64 {
    let r = n_eff.sqrt();
    kolmogorov_sf((r + 0.12 + 0.11 / r) * d)
}

fn sorted(sample: &[f64]) -> Result<Vec<f64>> {
    if sample.is_empty() {
        return invalid("KS test needs a non-empty sample");
    }
    if sample.iter().any(|x| x.is_nan()) {
        return invalid("sample contains NaN");
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// One-sample test of `sample` against a continuous distribution function.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let v = sorted(sample)?;
    let n = v.len() as f64;
    let d = v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    });
    Ok(KsResult {
        statistic: d,
        n_eff: n,
        p_value: p_value(d, n),
    })
}

/// Largest gap between the empirical distribution functions.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let d = ks_statistic(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n_eff = na * nb / (na + nb);
    Ok(KsResult {
        statistic: d,
        n_eff,
        p_value: p_value(d, n_eff),
    })
}
