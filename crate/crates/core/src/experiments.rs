//! Desk-scale experiments behind `sng verify` and the acceptance suite.
//!
//! Each experiment returns a serializable report carrying its measured
//! values and the threshold it is judged against. Uniform data means points
//! uniform in the unit ball; queries are an independent draw.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bench::{compare_tuners, evaluate, ReferenceTunerConfig, TunerComparison};
use crate::dataset::{brute_force_knn, gen_gmm, VectorDataset};
use crate::error::Result;
use crate::graph::{build_vamana, build_vamana_batched, sng_neighbors, BuildParams, SngGraph};
use crate::instrument::{
    degree_stats, linear_fit, mt_first_passage, path_length_stats, sublinear_progress_check, DegreeStats,
    PruningTrace, ProgressReport,
};
use crate::tuner::{optimize_r_with, TuneOptions, TuneReport};
use crate::vecmath::{monte_carlo_prune_fraction, pruning_probability, pruning_probability_floor, sample_uniform_ball, PruneGeometry};

/// Shared knobs: the master seed and whether builds use the batched builder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub seed: u64,
    pub batch: Option<usize>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { seed: 42, batch: None }
    }
}

/// Largest dataset tuned without subsampling; bigger ones probe on this many points.
pub const DEFAULT_PROBE_CAP: usize = 10_000;

fn tune_options(n: usize, settings: RunSettings) -> TuneOptions {
    TuneOptions {
        probe_subsample: (n > DEFAULT_PROBE_CAP).then_some(DEFAULT_PROBE_CAP),
        batch: settings.batch,
    }
}

fn build(ds: &VectorDataset, params: BuildParams, settings: RunSettings) -> Result<SngGraph> {
    match settings.batch {
        Some(b) => build_vamana_batched(ds, params, b),
        None => build_vamana(ds, params),
    }
}

/// Index of the point closest to the origin.
pub fn center_most(ds: &VectorDataset) -> usize {
    let norm = |i: usize| ds.row(i).iter().map(|&v| (v as f64).powi(2)).sum::<f64>();
    (0..ds.n())
        .min_by(|&a, &b| norm(a).total_cmp(&norm(b)).then(a.cmp(&b)))
        .expect("dataset is non-empty")
}

// ---------------------------------------------------------------------------
// pruning probability

#[derive(Debug, Clone, Serialize)]
pub struct FormulaCell {
    pub dim: usize,
    pub ratio: f64,
    pub analytic: f64,
    pub monte_carlo: f64,
    pub std_err: f64,
    pub z: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FormulaReport {
    pub samples: usize,
    pub max_sigma: f64,
    pub cells: Vec<FormulaCell>,
}

impl FormulaReport {
    pub fn passed(&self) -> bool {
        self.cells
            .iter()
            .all(|c| c.z.abs() <= self.max_sigma && c.floor < c.analytic && c.analytic < 0.5)
    }
}

pub fn pruning_formula(dims: &[usize], ratios: &[f64], samples: usize, seed: u64) -> Result<FormulaReport> {
    let mut cells = Vec::new();
    for (i, &dim) in dims.iter().enumerate() {
        for (j, &ratio) in ratios.iter().enumerate() {
            let g = PruneGeometry::new(ratio, dim)?;
            let analytic = pruning_probability(g);
            let est = monte_carlo_prune_fraction(g, samples, seed.wrapping_add((i * 97 + j) as u64));
            let std_err = (analytic * (1.0 - analytic) / samples as f64).sqrt();
            cells.push(FormulaCell {
                dim,
                ratio,
                analytic,
                monte_carlo: est.fraction,
                std_err,
                z: (est.fraction - analytic) / std_err,
                floor: pruning_probability_floor(dim),
            });
        }
    }
    Ok(FormulaReport {
        samples,
        max_sigma: 3.0,
        cells,
    })
}

// ---------------------------------------------------------------------------
// planar fast pruning

#[derive(Debug, Clone, Serialize)]
pub struct PlanarReport {
    pub n: usize,
    pub level: usize,
    pub max_t: usize,
    pub trials: usize,
    pub hits: usize,
    pub required: usize,
    pub passage_times: Vec<Option<usize>>,
}

impl PlanarReport {
    pub fn passed(&self) -> bool {
        self.hits >= self.required
    }
}

/// Center-most owner of a uniform disk, α = 1: how often the
/// `0.8(n−1)` level is reached within `max_t` iterations.
pub fn planar_fast_pruning(n: usize, trials: usize, max_t: usize, seed: u64) -> Result<PlanarReport> {
    let level = (0.8 * (n as f64 - 1.0)).ceil() as usize;
    let mut passage_times = Vec::with_capacity(trials);
    for trial in 0..trials {
        let ds = sample_uniform_ball(n, 2, 1.0, seed.wrapping_add(trial as u64))?;
        let owner = center_most(&ds);
        let mut trace = PruningTrace::default();
        sng_neighbors(&ds, owner, 1.0, None, Some(&mut trace));
        passage_times.push(mt_first_passage(&trace, level));
    }
    let hits = passage_times.iter().filter(|t| t.is_some_and(|t| t <= max_t)).count();
    Ok(PlanarReport {
        n,
        level,
        max_t,
        trials,
        hits,
        required: (0.95 * trials as f64).ceil() as usize,
        passage_times,
    })
}

// ---------------------------------------------------------------------------
// degree scaling

#[derive(Debug, Clone, Serialize)]
pub struct DegreePoint {
    pub n: usize,
    pub max_degree: usize,
    pub mean_degree: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DegreeScalingReport {
    pub alpha: f32,
    pub owners: usize,
    pub points: Vec<DegreePoint>,
    pub slope: f64,
    pub max_slope: f64,
}

impl DegreeScalingReport {
    pub fn passed(&self) -> bool {
        self.slope <= self.max_slope
    }
}

/// Max non-truncated SNG degree over a seeded owner sample at each n, and
/// the log-log slope of that maximum against n.
pub fn degree_scaling(ns: &[usize], dim: usize, alpha: f32, owners: usize, seed: u64) -> Result<DegreeScalingReport> {
    let mut points = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let ds = sample_uniform_ball(n, dim, 1.0, seed.wrapping_add(1000 + i as u64))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        let ids = rand::seq::index::sample(&mut rng, n, owners.min(n)).into_vec();
        let rows = crate::graph::full_sng_rows(&ds, alpha, &ids)?;
        let degrees: Vec<usize> = rows.iter().map(Vec::len).collect();
        points.push(DegreePoint {
            n,
            max_degree: degrees.iter().copied().max().unwrap_or(0),
            mean_degree: degrees.iter().sum::<usize>() as f64 / degrees.len() as f64,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| (p.max_degree as f64).ln()).collect();
    Ok(DegreeScalingReport {
        alpha,
        owners,
        slope: linear_fit(&xs, &ys)?.slope,
        points,
        max_slope: 0.8,
    })
}

// ---------------------------------------------------------------------------
// Gaussian mixture degree distribution

#[derive(Debug, Clone, Serialize)]
pub struct MixtureReport {
    pub n_base: usize,
    pub n_queries: usize,
    pub spread: f64,
    pub tune: TuneReport,
    pub degrees: DegreeStats,
    pub degree_limit: f64,
    pub band_90: (usize, usize),
    pub recall_at_10: f64,
    pub l_search: usize,
    pub mean_latency_us: f64,
    pub build_seconds: f64,
}

impl MixtureReport {
    pub fn passed(&self) -> bool {
        (self.degrees.max as f64) < self.degree_limit
    }
}

pub struct MixtureSetup {
    pub n: usize,
    pub dim: usize,
    pub clusters: usize,
    pub spread: f64,
    pub base_fraction: f64,
    pub alpha: f64,
    pub l_search: usize,
}

impl Default for MixtureSetup {
    fn default() -> Self {
        Self {
            n: 100_000,
            dim: 8,
            clusters: 10,
            spread: 0.05,
            base_fraction: 0.9,
            alpha: 1.2,
            l_search: 50,
        }
    }
}

/// Mixture data split into base and queries, Vamana at the tuned R, degree
/// distribution of the base graph and recall on the held-out queries.
pub fn mixture_degrees(setup: &MixtureSetup, settings: RunSettings) -> Result<(MixtureReport, SngGraph)> {
    let all = gen_gmm(setup.n, setup.dim, setup.clusters, setup.spread, settings.seed)?;
    let n_base = (setup.base_fraction * setup.n as f64).round() as usize;
    let (base, queries) = all.split(n_base, settings.seed)?;
    let tune = optimize_r_with(&base, setup.alpha, setup.alpha, settings.seed, tune_options(base.n(), settings))?;
    let t0 = Instant::now();
    let g = build(&base, BuildParams::new(setup.alpha as f32, tune.r_star, settings.seed), settings)?;
    let build_seconds = t0.elapsed().as_secs_f64();
    let degrees = degree_stats(&g);
    let gt = brute_force_knn(&base, &queries, 10)?;
    let row = evaluate(&g, &base, &queries, &gt, setup.l_search, 10)?;
    let report = MixtureReport {
        n_base: base.n(),
        n_queries: queries.n(),
        spread: setup.spread,
        tune,
        band_90: degrees.central_band(0.9),
        degree_limit: (base.n() as f64).powf(2.0 / 3.0),
        degrees,
        recall_at_10: row.recall,
        l_search: setup.l_search,
        mean_latency_us: row.mean_latency_us,
        build_seconds,
    };
    Ok((report, g))
}

// ---------------------------------------------------------------------------
// path length scaling

#[derive(Debug, Clone, Serialize)]
pub struct PathPoint {
    pub n: usize,
    pub r_star: usize,
    pub mean_hops: f64,
    pub p99_hops: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathScalingReport {
    pub l_search: usize,
    pub points: Vec<PathPoint>,
    pub intercept: f64,
    pub slope_per_ln_n: f64,
    pub r_squared: f64,
    /// Mean-hop increase per doubling of n.
    pub increments: Vec<f64>,
    pub min_r_squared: f64,
    pub increment_tolerance: f64,
}

impl PathScalingReport {
    /// Each increment positive and within the tolerance of the previous one.
    pub fn increments_consistent(&self) -> bool {
        self.increments.iter().all(|&d| d > 0.0)
            && self
                .increments
                .windows(2)
                .all(|w| (w[1] - w[0]).abs() <= self.increment_tolerance * w[0])
    }

    pub fn passed(&self) -> bool {
        self.r_squared >= self.min_r_squared && self.increments_consistent()
    }
}

/// Greedy hop counts from the medoid at each n (sizes should double).
pub fn path_scaling(
    ns: &[usize],
    dim: usize,
    alpha: f64,
    n_queries: usize,
    l_search: usize,
    settings: RunSettings,
) -> Result<PathScalingReport> {
    let queries = sample_uniform_ball(n_queries, dim, 1.0, settings.seed.wrapping_add(7))?;
    let mut points = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let base = sample_uniform_ball(n, dim, 1.0, settings.seed.wrapping_add(100 + i as u64))?;
        let tune = optimize_r_with(&base, alpha, alpha, settings.seed, tune_options(n, settings))?;
        let g = build(&base, BuildParams::new(alpha as f32, tune.r_star, settings.seed), settings)?;
        let stats = path_length_stats(&g, &base, &queries, l_search)?;
        points.push(PathPoint {
            n,
            r_star: tune.r_star,
            mean_hops: stats.mean_hops,
            p99_hops: stats.p99_hops,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_hops).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(PathScalingReport {
        l_search,
        increments: points.windows(2).map(|w| w[1].mean_hops - w[0].mean_hops).collect(),
        points,
        intercept: fit.intercept,
        slope_per_ln_n: fit.slope,
        r_squared: fit.r_squared,
        min_r_squared: 0.9,
        increment_tolerance: 0.5,
    })
}

// ---------------------------------------------------------------------------
// sublinear progress

/// Traces of the center-most owner (non-truncated, α = 1) at each n and the
/// fitted exponent of the `n − n^{1−ν}` first passage.
pub fn sublinear_progress(ns: &[usize], dim: usize, nu: f64, seed: u64) -> Result<ProgressReport> {
    let mut traces = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let ds = sample_uniform_ball(n, dim, 1.0, seed.wrapping_add(500 + i as u64))?;
        let owner = center_most(&ds);
        let mut trace = PruningTrace::default();
        sng_neighbors(&ds, owner, 1.0, None, Some(&mut trace));
        traces.push((n, trace));
    }
    sublinear_progress_check(&traces, nu)
}

// ---------------------------------------------------------------------------
// end-to-end quality

#[derive(Debug, Clone, Serialize)]
pub struct QualityReport {
    pub n: usize,
    pub n_queries: usize,
    pub tune: TuneReport,
    pub l_search: usize,
    pub recall_at_10: f64,
    pub min_recall: f64,
    pub mean_latency_us: f64,
    pub seconds: f64,
}

impl QualityReport {
    pub fn passed(&self) -> bool {
        self.recall_at_10 >= self.min_recall
    }
}

pub fn end_to_end_quality(
    n: usize,
    dim: usize,
    n_queries: usize,
    alpha: f64,
    l_search: usize,
    settings: RunSettings,
) -> Result<QualityReport> {
    let t0 = Instant::now();
    let base = sample_uniform_ball(n, dim, 1.0, settings.seed)?;
    let queries = sample_uniform_ball(n_queries, dim, 1.0, settings.seed.wrapping_add(1))?;
    let gt = brute_force_knn(&base, &queries, 10)?;
    let tune = optimize_r_with(&base, alpha, alpha, settings.seed, tune_options(n, settings))?;
    let g = build(&base, BuildParams::new(alpha as f32, tune.r_star, settings.seed), settings)?;
    let row = evaluate(&g, &base, &queries, &gt, l_search, 10)?;
    Ok(QualityReport {
        n,
        n_queries,
        tune,
        l_search,
        recall_at_10: row.recall,
        min_recall: 0.95,
        mean_latency_us: row.mean_latency_us,
        seconds: t0.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// tuner comparison

pub fn tuner_comparison(
    n: usize,
    dim: usize,
    n_queries: usize,
    alpha: f64,
    reference: &ReferenceTunerConfig,
    l_eval: usize,
    settings: RunSettings,
) -> Result<TunerComparison> {
    let base = sample_uniform_ball(n, dim, 1.0, settings.seed)?;
    let queries = sample_uniform_ball(n_queries, dim, 1.0, settings.seed.wrapping_add(1))?;
    let gt = brute_force_knn(&base, &queries, reference.k)?;
    compare_tuners(&base, &queries, &gt, alpha, alpha, tune_options(n, settings), reference, l_eval)
}
