//! Truncation-parameter optimization and the Vamana construction cost model.
//!
//! A probe graph is built with `R = ⌈n^{2/3}⌉` under a test pruning parameter
//! α₁. Its mean out-degree R̄ fixes the constant of `R* = K′·ln n / α²`
//! through `K′ = α₁²·R̄ / ln n`, and R* is then evaluated at the target α₂.
//! Logarithms are natural throughout.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::VectorDataset;
use crate::error::{Error, Result};
use crate::graph::{build_vamana, build_vamana_batched, BuildParams, SngGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub alpha1: f64,
    pub alpha2: f64,
    pub r_probe: usize,
    pub r_bar: f64,
    pub k_prime: f64,
    pub r_star: usize,
}

impl TuneReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks `k_prime = α₁²·R̄/ln(probe_n)` and
    /// `r_star = marginal_optimal_r(n, α₂, k_prime)` to `rel_tol`.
    pub fn check_identities(&self, probe_n: usize, n: usize, rel_tol: f64) -> Result<()> {
        let want_k = self.alpha1 * self.alpha1 * self.r_bar / (probe_n as f64).ln();
        if (self.k_prime - want_k).abs() > rel_tol * want_k.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Invariant(format!(
                "k_prime {} differs from alpha1^2 * r_bar / ln n = {want_k}",
                self.k_prime
            )));
        }
        let want_r = marginal_optimal_r(n as f64, self.alpha2, self.k_prime);
        if self.r_star != want_r {
            return Err(Error::Invariant(format!(
                "r_star {} differs from marginal optimum {want_r}",
                self.r_star
            )));
        }
        Ok(())
    }
}

/// How the probe graph is built.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TuneOptions {
    /// Tune on a seeded subsample of this many points; K′ is then taken
    /// against ln(m) and R* evaluated at ln(n).
    pub probe_subsample: Option<usize>,
    /// Build the probe with the batched builder.
    pub batch: Option<usize>,
}

/// `⌈n^{2/3}⌉`.
pub fn probe_degree(n: usize) -> usize {
    let x = (n as f64).powf(2.0 / 3.0);
    (x - 1e-9).ceil().max(1.0) as usize
}

/// `round(k′·ln n / α²)` clamped to `[1, n − 1]`.
pub fn marginal_optimal_r(n: f64, alpha: f64, k_prime: f64) -> usize {
    let raw = k_prime * n.ln() / (alpha * alpha);
    let hi = (n - 1.0).max(1.0);
    let r = if raw.is_nan() { 1.0 } else { raw.round().clamp(1.0, hi) };
    r as usize
}

/// Probe report of an already-built probe graph.
pub fn report_from_probe(probe: &SngGraph, n: usize, alpha1: f64, alpha2: f64) -> TuneReport {
    let m = probe.n();
    let r_bar = probe.num_edges() as f64 / m as f64;
    let k_prime = alpha1 * alpha1 * r_bar / (m as f64).ln();
    TuneReport {
        alpha1,
        alpha2,
        r_probe: probe.r_cap().unwrap_or(0),
        r_bar,
        k_prime,
        r_star: marginal_optimal_r(n as f64, alpha2, k_prime),
    }
}

/// Truncation-parameter optimization from one probe build.
pub fn optimize_r(ds: &VectorDataset, alpha1: f64, alpha2: f64, seed: u64) -> Result<TuneReport> {
    optimize_r_with(ds, alpha1, alpha2, seed, TuneOptions::default())
}

pub fn optimize_r_with(
    ds: &VectorDataset,
    alpha1: f64,
    alpha2: f64,
    seed: u64,
    opts: TuneOptions,
) -> Result<TuneReport> {
    if !(alpha1 >= 1.0 && alpha2 >= 1.0) {
        return Err(Error::InvalidParam(format!(
            "alpha1 and alpha2 must be >= 1 (got {alpha1}, {alpha2})"
        )));
    }
    let n = ds.n();
    if n < 8 {
        return Err(Error::InvalidParam(format!("tuning needs n >= 8, got {n}")));
    }
    let sub;
    let probe_ds = match opts.probe_subsample {
        Some(m) if m < n => {
            if m < 8 {
                return Err(Error::InvalidParam(format!("probe subsample must be >= 8, got {m}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0070_726f_6265);
            let mut ids = rand::seq::index::sample(&mut rng, n, m).into_vec();
            ids.sort_unstable();
            sub = ds.subset(&ids, format!("{}[probe {m}]", ds.source()))?;
            &sub
        }
        _ => ds,
    };
    let params = BuildParams::new(alpha1 as f32, probe_degree(probe_ds.n()), seed);
    let probe = match opts.batch {
        Some(b) => build_vamana_batched(probe_ds, params, b)?,
        None => build_vamana(probe_ds, params)?,
    };
    Ok(report_from_probe(&probe, n, alpha1, alpha2))
}

/// Implementation-dependent constants of the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConstants {
    pub c1: f64,
    pub b1: f64,
    pub c2: f64,
    pub b2: f64,
    pub c3: f64,
    pub b3: f64,
}

impl Default for CostConstants {
    fn default() -> Self {
        Self {
            c1: 1.0,
            b1: 0.0,
            c2: 1.0,
            b2: 0.0,
            c3: 1.0,
            b3: 0.0,
        }
    }
}

impl CostConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [self.c1, self.b1, self.c2, self.b2, self.c3, self.b3];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParam(format!("cost constants must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            c1: self.c1 * lambda,
            b1: self.b1 * lambda,
            c2: self.c2 * lambda,
            b2: self.b2 * lambda,
            c3: self.c3 * lambda,
            b3: self.b3 * lambda,
        }
    }
}

/// `n·(C₁·R·ln n + b₁ + C₂·R²·ln n/α + b₂ + C₃·α·R³ + b₃)`: search, pruning
/// and reverse-edge repair terms of one Vamana build.
pub fn construction_cost(n: f64, r: f64, alpha: f64, k: &CostConstants) -> f64 {
    let ln_n = n.ln();
    n * (k.c1 * r * ln_n + k.b1 + k.c2 * (r * r * ln_n / alpha) + k.b2 + k.c3 * (alpha * r * r * r) + k.b3)
}

/// α minimizing [`construction_cost`] at fixed R: `α² = C₂·ln n / (C₃·R)`.
pub fn stationary_alpha(n: f64, r: f64, k: &CostConstants) -> f64 {
    (k.c2 * n.ln() / (k.c3 * r)).sqrt()
}
