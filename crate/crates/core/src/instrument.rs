//! Observability for the pruning process and for finished graphs.
//!
//! CSV layouts (header row first):
//!
//! | table            | columns                              |
//! |------------------|--------------------------------------|
//! | pruning trace    | `t,s_size,delta,processed,rho`       |
//! | degree histogram | `degree,count`                       |
//! | per-query hops   | `query,hops`                         |

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{GroundTruth, VectorDataset};
use crate::error::{Error, Result};
use crate::graph::{SngGraph, Searcher};

/// One iteration of a node's pruning loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    /// Iteration index, from 1.
    pub t: usize,
    /// Candidates left after the iteration.
    pub s_size: usize,
    /// Candidates pruned in the iteration (the selected neighbor excluded).
    pub delta: usize,
    /// Euclidean distance from the owner to the selected neighbor.
    pub rho: f64,
}

/// Record of the pruning process for one owner node.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PruningTrace {
    pub owner: u32,
    /// Size of the initial candidate set (n − 1 for a full build).
    pub initial: usize,
    pub rows: Vec<TraceRow>,
}

impl PruningTrace {
    pub fn new(owner: u32, initial: usize) -> Self {
        Self {
            owner,
            initial,
            rows: Vec::new(),
        }
    }

    /// Points selected or pruned in the first `t` iterations.
    pub fn processed(&self, t: usize) -> usize {
        self.rows[..t.min(self.rows.len())]
            .iter()
            .map(|r| r.delta + 1)
            .sum()
    }

    /// Row order, monotonicity and the processed-sum identity.
    pub fn validate(&self) -> Result<()> {
        let mut processed = 0;
        let mut prev: Option<&TraceRow> = None;
        for (i, row) in self.rows.iter().enumerate() {
            if row.t != i + 1 {
                return Err(Error::Invariant(format!("trace row {i} has t={}", row.t)));
            }
            processed += row.delta + 1;
            if processed + row.s_size != self.initial {
                return Err(Error::Invariant(format!(
                    "at t={}: processed {processed} + remaining {} != {}",
                    row.t, row.s_size, self.initial
                )));
            }
            if let Some(p) = prev {
                if row.s_size >= p.s_size {
                    return Err(Error::Invariant(format!("s_size not decreasing at t={}", row.t)));
                }
                if row.rho < p.rho {
                    return Err(Error::Invariant(format!("rho decreased at t={}", row.t)));
                }
            }
            prev = Some(row);
        }
        Ok(())
    }

    /// True when the loop ran until the candidate set was empty.
    pub fn is_complete(&self) -> bool {
        self.rows.last().is_some_and(|r| r.s_size == 0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,s_size,delta,processed,rho\n");
        let mut processed = 0;
        for r in &self.rows {
            processed += r.delta + 1;
            let _ = writeln!(out, "{},{},{},{},{}", r.t, r.s_size, r.delta, processed, r.rho);
        }
        out
    }
}

/// First iteration at which at least `m` points have been processed.
pub fn mt_first_passage(trace: &PruningTrace, m: usize) -> Option<usize> {
    if m == 0 {
        return Some(0);
    }
    let mut processed = 0;
    for r in &trace.rows {
        processed += r.delta + 1;
        if processed >= m {
            return Some(r.t);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeStats {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    /// `histogram[k]` = number of nodes with out-degree `k`.
    pub histogram: Vec<usize>,
}

impl DegreeStats {
    /// Degree with the most nodes (smallest on ties).
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (k, &c) in self.histogram.iter().enumerate() {
            if c > self.histogram[best] {
                best = k;
            }
        }
        best
    }

    /// Narrowest degree band `[lo, hi]` holding at least `mass` of the nodes.
    pub fn central_band(&self, mass: f64) -> (usize, usize) {
        let total: usize = self.histogram.iter().sum();
        let need = (mass * total as f64).ceil() as usize;
        let mut best = (0, self.histogram.len().saturating_sub(1));
        let mut lo = 0;
        let mut acc = 0;
        for hi in 0..self.histogram.len() {
            acc += self.histogram[hi];
            while acc - self.histogram[lo] >= need && lo < hi {
                acc -= self.histogram[lo];
                lo += 1;
            }
            if acc >= need && hi - lo < best.1 - best.0 {
                best = (lo, hi);
            }
        }
        best
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("degree,count\n");
        for (k, c) in self.histogram.iter().enumerate() {
            let _ = writeln!(out, "{k},{c}");
        }
        out
    }
}

pub fn degree_stats(g: &SngGraph) -> DegreeStats {
    let mut histogram = vec![0usize; g.degrees().max().unwrap_or(0) + 1];
    let mut total = 0usize;
    for d in g.degrees() {
        histogram[d] += 1;
        total += d;
    }
    DegreeStats {
        min: g.degrees().min().unwrap_or(0),
        max: g.degrees().max().unwrap_or(0),
        mean: total as f64 / g.n().max(1) as f64,
        histogram,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStats {
    pub mean_hops: f64,
    pub p99_hops: usize,
    pub per_query: Vec<usize>,
}

impl PathStats {
    pub fn per_query_csv(&self) -> String {
        let mut out = String::from("query,hops\n");
        for (q, h) in self.per_query.iter().enumerate() {
            let _ = writeln!(out, "{q},{h}");
        }
        out
    }
}

/// Nearest-rank percentile of a sample.
pub fn percentile(values: &[usize], pct: f64) -> usize {
    if values.is_empty() {
        return 0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Hop counts of beam searches from the medoid, one per query.
pub fn path_length_stats(
    g: &SngGraph,
    ds: &VectorDataset,
    queries: &VectorDataset,
    l: usize,
) -> Result<PathStats> {
    if queries.d() != ds.d() {
        return Err(Error::DimensionMismatch {
            expected: ds.d(),
            actual: queries.d(),
        });
    }
    let per_query = (0..queries.n())
        .into_par_iter()
        .map_init(
            || Searcher::new(g.n()),
            |s, q| s.search(g, ds, queries.row(q), g.medoid(), l, 1).map(|r| r.hops),
        )
        .collect::<Result<Vec<usize>>>()?;
    let mean_hops = per_query.iter().sum::<usize>() as f64 / per_query.len().max(1) as f64;
    Ok(PathStats {
        mean_hops,
        p99_hops: percentile(&per_query, 99.0),
        per_query,
    })
}

/// Mean over queries of |S ∩ T| / k, with T the first `k` ground-truth ids.
pub fn recall_at_k(results: &[Vec<u32>], gt: &GroundTruth, k: usize) -> Result<f64> {
    if results.len() != gt.ids.len() {
        return Err(Error::LengthMismatch(format!(
            "{} result rows vs {} ground-truth rows",
            results.len(),
            gt.ids.len()
        )));
    }
    if results.is_empty() || k == 0 {
        return Err(Error::LengthMismatch("recall needs k >= 1 and at least one query".into()));
    }
    let mut total = 0.0;
    for (q, (got, truth)) in results.iter().zip(&gt.ids).enumerate() {
        if got.len() != k || truth.len() < k {
            return Err(Error::LengthMismatch(format!(
                "query {q}: {} retrieved and {} true ids for k={k}",
                got.len(),
                truth.len()
            )));
        }
        let truth = &truth[..k];
        let hits = got.iter().filter(|id| truth.contains(id)).count();
        total += hits as f64 / k as f64;
    }
    Ok(total / results.len() as f64)
}

/// Ordinary least squares `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::LengthMismatch(format!(
            "fit needs >= 2 paired samples, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParam("fit needs at least two distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        intercept,
        slope,
        r_squared,
    })
}

/// Slack above ν tolerated for the fitted first-passage exponent.
pub const PROGRESS_SLOPE_SLACK: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProgressPoint {
    pub n: usize,
    pub level: usize,
    pub mean_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProgressReport {
    pub nu: f64,
    pub points: Vec<ProgressPoint>,
    /// Log-log slope of first-passage time against n.
    pub slope: f64,
    /// Set when the slope exceeds ν + [`PROGRESS_SLOPE_SLACK`].
    pub flagged: bool,
}

/// Level reached when at most `n^{1−ν}` of the `n − 1` candidates remain.
pub fn progress_level(n: usize, nu: f64) -> usize {
    let level = (n as f64 - 1.0) - (n as f64).powf(1.0 - nu);
    ((level - 1e-9).ceil().max(1.0)) as usize
}

/// First passage of the `n − n^{1−ν}` level (owner counted as processed)
/// for traces at several dataset sizes, and the fitted growth exponent.
/// Traces sharing an `n` are averaged.
pub fn sublinear_progress_check(traces: &[(usize, PruningTrace)], nu: f64) -> Result<ProgressReport> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::InvalidParam(format!("nu must lie in (0, 1), got {nu}")));
    }
    let mut sizes: Vec<usize> = traces.iter().map(|(n, _)| *n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::InvalidParam(format!(
            "need traces at >= 3 distinct n, got {}",
            sizes.len()
        )));
    }
    let mut points = Vec::with_capacity(sizes.len());
    for &n in &sizes {
        let level = progress_level(n, nu);
        let mut ts = Vec::new();
        for (_, tr) in traces.iter().filter(|(m, _)| *m == n) {
            let t = mt_first_passage(tr, level).ok_or_else(|| {
                Error::InvalidParam(format!(
                    "trace of owner {} at n={n} never reaches level {level}",
                    tr.owner
                ))
            })?;
            ts.push(t as f64);
        }
        points.push(ProgressPoint {
            n,
            level,
            mean_t: ts.iter().sum::<f64>() / ts.len() as f64,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_t.ln()).collect();
    let slope = linear_fit(&xs, &ys)?.slope;
    Ok(ProgressReport {
        nu,
        points,
        slope,
        flagged: slope > nu + PROGRESS_SLOPE_SLACK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_full_sng, sng_neighbors};
    use crate::vecmath::sample_uniform_ball;
    use proptest::prelude::*;

    fn trace_from_deltas(initial: usize, deltas: &[usize]) -> PruningTrace {
        let mut tr = PruningTrace::new(0, initial);
        let mut s = initial;
        for (i, &d) in deltas.iter().enumerate() {
            s -= d + 1;
            tr.rows.push(TraceRow {
                t: i + 1,
                s_size: s,
                delta: d,
                rho: i as f64,
            });
        }
        tr
    }

    #[test]
    fn first_passage_hand_cases() {
        let tr = trace_from_deltas(10, &[3, 0, 0]);
        assert_eq!(mt_first_passage(&tr, 1), Some(1));
        assert_eq!(mt_first_passage(&tr, 4), Some(1));
        assert_eq!(mt_first_passage(&tr, 5), Some(2));
        assert_eq!(mt_first_passage(&tr, 7), None);
        tr.validate().unwrap();
    }

    #[test]
    fn first_passage_monotone_in_level() {
        let ds = sample_uniform_ball(1500, 3, 1.0, 8).unwrap();
        let mut tr = PruningTrace::default();
        sng_neighbors(&ds, 11, 1.0, None, Some(&mut tr));
        let mut prev = 0;
        for m in 1..ds.n() {
            let t = mt_first_passage(&tr, m).unwrap();
            assert!(t >= prev);
            prev = t;
        }
    }

    #[test]
    fn trace_validation_catches_bad_rows() {
        let mut tr = trace_from_deltas(10, &[3, 2]);
        tr.rows[1].s_size = 5;
        assert!(tr.validate().is_err());
        let mut tr = trace_from_deltas(10, &[3, 2]);
        tr.rows[1].rho = -1.0;
        assert!(tr.validate().is_err());
        let csv = trace_from_deltas(10, &[3, 2]).to_csv();
        assert_eq!(csv, "t,s_size,delta,processed,rho\n1,6,3,4,0\n2,3,2,7,1\n");
    }

    #[test]
    fn degree_stats_cycle_and_partition() {
        let ds = sample_uniform_ball(3, 2, 1.0, 1).unwrap();
        let g = crate::graph::random_regular(&ds, 1, 0).unwrap();
        let s = degree_stats(&g);
        assert_eq!((s.min, s.max, s.mean), (1, 1, 1.0));

        let ds = sample_uniform_ball(500, 2, 1.0, 3).unwrap();
        let g = build_full_sng(&ds, 1.2).unwrap();
        let s = degree_stats(&g);
        assert_eq!(s.histogram.iter().sum::<usize>(), 500);
        assert!(s.min <= s.mode() && s.mode() <= s.max);
        let (lo, hi) = s.central_band(0.5);
        assert!(s.histogram[lo..=hi].iter().sum::<usize>() >= 250);
    }

    #[test]
    fn recall_formula() {
        let gt = GroundTruth {
            k: 10,
            ids: vec![(0..10).collect()],
            sq_dists: None,
        };
        assert_eq!(recall_at_k(&[(0..10).collect()], &gt, 10).unwrap(), 1.0);
        assert_eq!(recall_at_k(&[(10..20).collect()], &gt, 10).unwrap(), 0.0);
        assert_eq!(recall_at_k(&[(5..15).collect()], &gt, 10).unwrap(), 0.5);
        assert!(recall_at_k(&[(0..9).collect()], &gt, 10).is_err());
        assert!(recall_at_k(&[], &gt, 10).is_err());
    }

    proptest! {
        #[test]
        fn recall_permutation_invariant(perm_s in Just((0u32..10).collect::<Vec<_>>()).prop_shuffle(),
                                        perm_t in Just((5u32..15).collect::<Vec<_>>()).prop_shuffle()) {
            let gt = GroundTruth { k: 10, ids: vec![perm_t], sq_dists: None };
            prop_assert_eq!(recall_at_k(&[perm_s], &gt, 10).unwrap(), 0.5);
        }
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<usize> = (1..=100).collect();
        assert_eq!(percentile(&v, 99.0), 99);
        assert_eq!(percentile(&v, 100.0), 100);
        assert_eq!(percentile(&[7], 99.0), 7);
    }

    #[test]
    fn linear_fit_exact_line() {
        let f = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn progress_one_point_per_step() {
        let nu = 0.8;
        let mut traces = Vec::new();
        for n in [1024usize, 32, 243 * 4, 3125] {
            let deltas = vec![0; n - 1];
            traces.push((n, trace_from_deltas(n - 1, &deltas)));
        }
        let rep = sublinear_progress_check(&traces, nu).unwrap();
        for p in &rep.points {
            let want = (p.n as f64 - (p.n as f64).powf(1.0 - nu) - 1.0).ceil();
            assert_eq!(p.mean_t, want, "n={}", p.n);
        }
        // n = 1024 and 3125 have integral n^0.2
        assert_eq!(rep.points.iter().find(|p| p.n == 1024).unwrap().mean_t, 1019.0);
        assert_eq!(rep.points.iter().find(|p| p.n == 3125).unwrap().mean_t, 3119.0);
        assert!(rep.slope > 0.95);
        assert!(rep.flagged);
    }

    #[test]
    fn progress_geometric_decay_is_logarithmic() {
        let mut traces = Vec::new();
        for n in [1_000usize, 10_000, 100_000, 1_000_000] {
            let mut deltas = Vec::new();
            let mut s = n - 1;
            while s > 0 {
                let step = s.div_ceil(2);
                deltas.push(step - 1);
                s -= step;
            }
            traces.push((n, trace_from_deltas(n - 1, &deltas)));
        }
        let rep = sublinear_progress_check(&traces, 0.8).unwrap();
        assert!(rep.slope < 0.15, "slope {}", rep.slope);
        assert!(!rep.flagged);
        assert!(sublinear_progress_check(&traces[..2], 0.8).is_err());
    }
}
