//! Recall/latency sweeps and the search-guided reference tuner.
//!
//! Latencies are wall-clock microseconds on the machine running the sweep
//! and are not comparable across hardware. Distance evaluations per query
//! are reported next to them as a machine-independent cost.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{GroundTruth, VectorDataset};
use crate::error::{Error, Result};
use crate::graph::{build_vamana, build_vamana_batched, BuildParams, SngGraph, Searcher};
use crate::instrument::{percentile, recall_at_k};
use crate::tuner::{optimize_r_with, TuneOptions, TuneReport};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub l: usize,
    pub recall: f64,
    pub mean_latency_us: f64,
    pub p99_latency_us: f64,
    pub mean_dist_evals: f64,
    pub mean_hops: f64,
}

/// Runs every query from the medoid with list size `l` and scores the top `k`.
pub fn evaluate(
    g: &SngGraph,
    base: &VectorDataset,
    queries: &VectorDataset,
    gt: &GroundTruth,
    l: usize,
    k: usize,
) -> Result<SweepRow> {
    let l = l.max(k);
    let per_query = (0..queries.n())
        .into_par_iter()
        .map_init(
            || Searcher::new(g.n()),
            |s, q| {
                let t0 = Instant::now();
                let res = s.search(g, base, queries.row(q), g.medoid(), l, k)?;
                let us = t0.elapsed().as_secs_f64() * 1e6;
                Ok((res, us))
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let nq = per_query.len() as f64;
    let ids: Vec<Vec<u32>> = per_query
        .iter()
        .map(|(r, _)| r.topk.iter().map(|t| t.0).collect())
        .collect();
    let recall = recall_at_k(&ids, gt, k)?;
    // p99 on whole nanoseconds keeps the nearest-rank helper integral
    let ns: Vec<usize> = per_query.iter().map(|(_, us)| (us * 1e3) as usize).collect();
    Ok(SweepRow {
        l,
        recall,
        mean_latency_us: per_query.iter().map(|(_, us)| us).sum::<f64>() / nq,
        p99_latency_us: percentile(&ns, 99.0) as f64 / 1e3,
        mean_dist_evals: per_query.iter().map(|(r, _)| r.dist_evals as f64).sum::<f64>() / nq,
        mean_hops: per_query.iter().map(|(r, _)| r.hops as f64).sum::<f64>() / nq,
    })
}

pub fn sweep(
    g: &SngGraph,
    base: &VectorDataset,
    queries: &VectorDataset,
    gt: &GroundTruth,
    ls: &[usize],
    k: usize,
) -> Result<Vec<SweepRow>> {
    ls.iter().map(|&l| evaluate(g, base, queries, gt, l, k)).collect()
}

pub fn sweep_csv(rows: &[SweepRow], k: usize) -> String {
    let mut out = format!(
        "l,recall_at_{k},mean_latency_us,p99_latency_us,mean_dist_evals,mean_hops\n"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.6},{:.3},{:.3},{:.2},{:.3}",
            r.l, r.recall, r.mean_latency_us, r.p99_latency_us, r.mean_dist_evals, r.mean_hops
        );
    }
    out
}

/// Settings of the search-guided reference tuner.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceTunerConfig {
    pub alpha: f32,
    pub k: usize,
    /// Search cost budget in mean distance evaluations per query.
    pub budget_dist_evals: f64,
    /// List sizes tried at each R; the largest one within budget is scored.
    pub l_grid: Vec<usize>,
    pub r_lo: usize,
    pub r_hi: usize,
    /// Stop once the bracket is at most this wide.
    pub width_tol: usize,
    pub seed: u64,
    pub batch: Option<usize>,
}

impl ReferenceTunerConfig {
    pub fn new(alpha: f32, r_lo: usize, r_hi: usize, budget_dist_evals: f64, seed: u64) -> Self {
        Self {
            alpha,
            k: 10,
            budget_dist_evals,
            l_grid: vec![10, 15, 20, 30, 40, 50, 75, 100, 150, 200, 300],
            r_lo,
            r_hi,
            width_tol: 4,
            seed,
            batch: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceProbe {
    pub r: usize,
    /// Largest list size within budget, if any.
    pub l: Option<usize>,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceTuneReport {
    pub r_best: usize,
    pub recall_best: f64,
    pub probes: Vec<ReferenceProbe>,
    pub seconds: f64,
}

fn build_with(ds: &VectorDataset, params: BuildParams, batch: Option<usize>) -> Result<SngGraph> {
    match batch {
        Some(b) => build_vamana_batched(ds, params, b),
        None => build_vamana(ds, params),
    }
}

/// Recall@k achievable at R within the search budget.
fn score_r(
    cfg: &ReferenceTunerConfig,
    base: &VectorDataset,
    queries: &VectorDataset,
    gt: &GroundTruth,
    r: usize,
) -> Result<ReferenceProbe> {
    let g = build_with(base, BuildParams::new(cfg.alpha, r, cfg.seed), cfg.batch)?;
    let mut best = ReferenceProbe { r, l: None, recall: 0.0 };
    for &l in &cfg.l_grid {
        if l < cfg.k {
            continue;
        }
        let row = evaluate(&g, base, queries, gt, l, cfg.k)?;
        if row.mean_dist_evals > cfg.budget_dist_evals {
            break;
        }
        best = ReferenceProbe {
            r,
            l: Some(l),
            recall: row.recall,
        };
    }
    Ok(best)
}

/// Golden-section search over integer R maximizing recall@k at a fixed
/// search budget. Every R is built and evaluated at most once.
pub fn golden_section_tune(
    cfg: &ReferenceTunerConfig,
    base: &VectorDataset,
    queries: &VectorDataset,
    gt: &GroundTruth,
) -> Result<ReferenceTuneReport> {
    if cfg.r_lo == 0 || cfg.r_lo > cfg.r_hi || cfg.r_hi >= base.n() {
        return Err(Error::InvalidParam(format!(
            "need 1 <= r_lo <= r_hi < n (r_lo={}, r_hi={}, n={})",
            cfg.r_lo,
            cfg.r_hi,
            base.n()
        )));
    }
    let t0 = Instant::now();
    let mut cache: BTreeMap<usize, ReferenceProbe> = BTreeMap::new();
    let eval = |r: usize, cache: &mut BTreeMap<usize, ReferenceProbe>| -> Result<f64> {
        if let Some(p) = cache.get(&r) {
            return Ok(p.recall);
        }
        let p = score_r(cfg, base, queries, gt, r)?;
        let v = p.recall;
        cache.insert(r, p);
        Ok(v)
    };

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (cfg.r_lo, cfg.r_hi);
    while hi - lo > cfg.width_tol.max(2) {
        let span = (hi - lo) as f64;
        let mut a = hi - (inv_phi * span).round() as usize;
        let mut b = lo + (inv_phi * span).round() as usize;
        if a >= b {
            a = lo + (hi - lo) / 3;
            b = hi - (hi - lo) / 3;
        }
        let fa = eval(a, &mut cache)?;
        let fb = eval(b, &mut cache)?;
        // ties keep the lower half
        if fa >= fb {
            hi = b;
        } else {
            lo = a;
        }
    }
    for r in lo..=hi {
        eval(r, &mut cache)?;
    }
    let best = cache
        .values()
        .filter(|p| (lo..=hi).contains(&p.r))
        .fold(None::<&ReferenceProbe>, |acc, p| match acc {
            Some(b) if b.recall >= p.recall => Some(b),
            _ => Some(p),
        })
        .expect("bracket is non-empty");
    Ok(ReferenceTuneReport {
        r_best: best.r,
        recall_best: best.recall,
        seconds: t0.elapsed().as_secs_f64(),
        probes: cache.into_values().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TunerComparison {
    pub analytic: TuneReport,
    pub analytic_seconds: f64,
    pub analytic_recall: f64,
    pub reference: ReferenceTuneReport,
    pub reference_recall: f64,
    /// Reference tuning time over analytic tuning time.
    pub speedup: f64,
    pub l_eval: usize,
}

/// Times both tuners on the same data, then builds a graph at each chosen R
/// and reports recall@k at list size `l_eval`.
#[allow(clippy::too_many_arguments)]
pub fn compare_tuners(
    base: &VectorDataset,
    queries: &VectorDataset,
    gt: &GroundTruth,
    alpha1: f64,
    alpha2: f64,
    tune_opts: TuneOptions,
    reference: &ReferenceTunerConfig,
    l_eval: usize,
) -> Result<TunerComparison> {
    let t0 = Instant::now();
    let analytic = optimize_r_with(base, alpha1, alpha2, reference.seed, tune_opts)?;
    let analytic_seconds = t0.elapsed().as_secs_f64();
    let reference_report = golden_section_tune(reference, base, queries, gt)?;

    let recall_at = |r: usize| -> Result<f64> {
        let g = build_with(base, BuildParams::new(alpha2 as f32, r, reference.seed), reference.batch)?;
        Ok(evaluate(&g, base, queries, gt, l_eval, reference.k)?.recall)
    };
    let analytic_recall = recall_at(analytic.r_star)?;
    let reference_recall = recall_at(reference_report.r_best)?;
    Ok(TunerComparison {
        speedup: reference_report.seconds / analytic_seconds.max(1e-9),
        analytic,
        analytic_seconds,
        analytic_recall,
        reference: reference_report,
        reference_recall,
        l_eval,
    })
}
