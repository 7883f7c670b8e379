//! Sparse neighborhood graphs: α-pruned neighbor selection, RobustPrune,
//! Vamana construction, best-first beam search and the on-disk format.
//!
//! Every argmin breaks distance ties by the smaller id, and the prune rule
//! removes a candidate `p′` when `‖p − p′‖ ≥ α·‖p* − p′‖`, evaluated on
//! squared distances as `d(p,p′) ≥ α²·d(p*,p′)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::VectorDataset;
use crate::error::{Error, Result};
use crate::instrument::{PruningTrace, TraceRow};
use crate::vecmath::sq_dist;

/// Above this size the medoid is taken against a fixed-seed sample.
pub const MEDOID_EXACT_LIMIT: usize = 20_000;
pub const MEDOID_SAMPLE: usize = 10_000;
const MEDOID_SEED: u64 = 0x6d65_646f_6964;

const GRAPH_MAGIC: &[u8; 4] = b"SNG1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuildKind {
    FullSng,
    Vamana,
    RandomRegular,
}

impl BuildKind {
    fn code(self) -> u8 {
        match self {
            BuildKind::FullSng => 0,
            BuildKind::Vamana => 1,
            BuildKind::RandomRegular => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(BuildKind::FullSng),
            1 => Some(BuildKind::Vamana),
            2 => Some(BuildKind::RandomRegular),
            _ => None,
        }
    }
}

impl std::fmt::Display for BuildKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BuildKind::FullSng => "full-sng",
            BuildKind::Vamana => "vamana",
            BuildKind::RandomRegular => "random-regular",
        })
    }
}

/// Directed proximity graph over the rows of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SngGraph {
    dim: usize,
    adjacency: Vec<Vec<u32>>,
    alpha: f32,
    r_cap: Option<usize>,
    medoid: u32,
    build_kind: BuildKind,
    /// Length of the prefix of each list that came out of a prune step.
    /// Reverse edges appended later sit after it. Not persisted.
    pruned_len: Vec<u32>,
}

impl SngGraph {
    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f32 {
        self.alpha
    }

    pub fn r_cap(&self) -> Option<usize> {
        self.r_cap
    }

    pub fn medoid(&self) -> u32 {
        self.medoid
    }

    pub fn build_kind(&self) -> BuildKind {
        self.build_kind
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.adjacency[i]
    }

    pub fn adjacency(&self) -> &[Vec<u32>] {
        &self.adjacency
    }

    pub fn degrees(&self) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.iter().map(Vec::len)
    }

    pub fn num_edges(&self) -> usize {
        self.degrees().sum()
    }

    /// Prefix of node `i`'s list produced by pruning (the whole list for
    /// full-SNG graphs).
    pub fn pruned_prefix(&self, i: usize) -> &[u32] {
        &self.adjacency[i][..self.pruned_len[i] as usize]
    }

    /// Structural checks: ids in range, no self-loops, no duplicates,
    /// degree cap, medoid in range.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Invariant("graph has no nodes".into()));
        }
        if self.medoid as usize >= n {
            return Err(Error::Invariant(format!("medoid {} >= n {n}", self.medoid)));
        }
        let mut mark = vec![u32::MAX; n];
        for (p, list) in self.adjacency.iter().enumerate() {
            if let Some(cap) = self.r_cap {
                if list.len() > cap {
                    return Err(Error::Invariant(format!(
                        "node {p} has degree {} above cap {cap}",
                        list.len()
                    )));
                }
            }
            for &q in list {
                if q as usize >= n {
                    return Err(Error::Invariant(format!("node {p} links to {q} >= n {n}")));
                }
                if q as usize == p {
                    return Err(Error::Invariant(format!("self-loop at node {p}")));
                }
                if mark[q as usize] == p as u32 {
                    return Err(Error::Invariant(format!("duplicate neighbor {q} at node {p}")));
                }
                mark[q as usize] = p as u32;
            }
        }
        Ok(())
    }

    /// Checks the pruned prefix of every list: owner distances are
    /// nondecreasing and, for earlier `u` and later `v`,
    /// `‖p − v‖ < α·‖u − v‖`.
    pub fn check_pruning_invariant(&self, ds: &VectorDataset) -> Result<()> {
        if ds.n() != self.n() {
            return Err(Error::LengthMismatch(format!(
                "graph has {} nodes, dataset {} rows",
                self.n(),
                ds.n()
            )));
        }
        (0..self.n())
            .into_par_iter()
            .try_for_each(|p| check_prune_list(ds, p, self.pruned_prefix(p), self.alpha))
    }
}

/// Validates one prune output list against the α rule and distance order.
pub fn check_prune_list(ds: &VectorDataset, p: usize, list: &[u32], alpha: f32) -> Result<()> {
    let a2 = alpha_sq(alpha);
    let mut prev = f64::NEG_INFINITY;
    for (i, &v) in list.iter().enumerate() {
        let dv = ds.sq_dist_ids(p, v as usize);
        if dv < prev {
            return Err(Error::Invariant(format!(
                "node {p}: neighbor {v} closer than its predecessor"
            )));
        }
        prev = dv;
        for &u in &list[..i] {
            if dv >= a2 * ds.sq_dist_ids(u as usize, v as usize) {
                return Err(Error::Invariant(format!(
                    "node {p}: neighbor {v} should have been pruned by {u}"
                )));
            }
        }
    }
    Ok(())
}

#[inline]
fn alpha_sq(alpha: f32) -> f64 {
    let a = f64::from(alpha);
    a * a
}

/// Construction knobs for Vamana.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildParams {
    pub alpha: f32,
    pub r: usize,
    pub l_build: usize,
    pub seed: u64,
}

impl BuildParams {
    /// Parameters with the default search list size `max(2R, 50)`.
    pub fn new(alpha: f32, r: usize, seed: u64) -> Self {
        Self {
            alpha,
            r,
            l_build: Self::default_l_build(r),
            seed,
        }
    }

    pub fn default_l_build(r: usize) -> usize {
        (2 * r).max(50)
    }

    pub fn with_l_build(mut self, l_build: usize) -> Self {
        self.l_build = l_build;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParam(format!("alpha must be >= 1, got {}", self.alpha)));
        }
        if self.r == 0 {
            return Err(Error::InvalidParam("R must be >= 1".into()));
        }
        if self.l_build < self.r {
            return Err(Error::InvalidParam(format!(
                "l_build ({}) must be >= R ({})",
                self.l_build, self.r
            )));
        }
        Ok(())
    }
}

/// Dataset point minimizing the sum of Euclidean distances to all others;
/// above [`MEDOID_EXACT_LIMIT`] points the sum runs over a fixed-seed sample
/// of [`MEDOID_SAMPLE`] points.
pub fn medoid(ds: &VectorDataset) -> u32 {
    let n = ds.n();
    let sums: Vec<f64> = if n <= MEDOID_EXACT_LIMIT {
        let mut sums = vec![0.0f64; n];
        for i in 0..n {
            let row = ds.row(i);
            let mut acc = 0.0;
            for j in i + 1..n {
                let d = sq_dist(row, ds.row(j)).sqrt();
                acc += d;
                sums[j] += d;
            }
            sums[i] += acc;
        }
        sums
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(MEDOID_SEED);
        let sample = rand::seq::index::sample(&mut rng, n, MEDOID_SAMPLE).into_vec();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let row = ds.row(i);
                sample.iter().map(|&j| sq_dist(row, ds.row(j)).sqrt()).sum()
            })
            .collect()
    };
    let mut best = 0;
    for (i, &s) in sums.iter().enumerate() {
        if s < sums[best] {
            best = i;
        }
    }
    best as u32
}

/// Non-truncated (or `r_cap`-truncated) SNG neighbor selection for `p` over
/// the whole dataset. Candidates are sorted once; each round takes the
/// nearest survivor and filters the rest. Optionally records the pruning
/// process into `trace`.
pub fn sng_neighbors(
    ds: &VectorDataset,
    p: usize,
    alpha: f32,
    r_cap: Option<usize>,
    mut trace: Option<&mut PruningTrace>,
) -> Vec<u32> {
    let a2 = alpha_sq(alpha);
    let owner = ds.row(p);
    let mut alive: Vec<(f64, u32)> = (0..ds.n())
        .filter(|&j| j != p)
        .map(|j| (sq_dist(owner, ds.row(j)), j as u32))
        .collect();
    alive.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if let Some(tr) = trace.as_deref_mut() {
        *tr = PruningTrace::new(p as u32, alive.len());
    }

    let mut out = Vec::new();
    let mut t = 0;
    while let Some(&(d_star, star)) = alive.first() {
        out.push(star);
        t += 1;
        let remaining = alive.len() - 1;
        if r_cap.is_some_and(|cap| out.len() >= cap) {
            if let Some(tr) = trace.as_deref_mut() {
                tr.rows.push(TraceRow {
                    t,
                    s_size: remaining,
                    delta: 0,
                    rho: d_star.sqrt(),
                });
            }
            break;
        }
        let star_row = ds.row(star as usize);
        let mut kept = 0;
        for r in 1..alive.len() {
            let (d_owner, id) = alive[r];
            if d_owner < a2 * sq_dist(star_row, ds.row(id as usize)) {
                alive[kept] = alive[r];
                kept += 1;
            }
        }
        alive.truncate(kept);
        if let Some(tr) = trace.as_deref_mut() {
            tr.rows.push(TraceRow {
                t,
                s_size: kept,
                delta: remaining - kept,
                rho: d_star.sqrt(),
            });
        }
    }
    out
}

/// RobustPrune: choose `p`'s out-neighbors from `candidates`, at most `r`.
/// `p` itself and repeated ids are dropped from the candidate set.
pub fn robust_prune(ds: &VectorDataset, p: usize, candidates: &[u32], alpha: f32, r: usize) -> Vec<u32> {
    let owner = ds.row(p);
    let scored = candidates
        .iter()
        .map(|&c| (sq_dist(owner, ds.row(c as usize)), c))
        .collect();
    robust_prune_scored(ds, p, scored, alpha, r)
}

/// RobustPrune over candidates with precomputed squared distances to `p`.
pub(crate) fn robust_prune_scored(
    ds: &VectorDataset,
    p: usize,
    mut set: Vec<(f64, u32)>,
    alpha: f32,
    r: usize,
) -> Vec<u32> {
    let a2 = alpha_sq(alpha);
    set.retain(|&(_, c)| c as usize != p);
    set.sort_unstable_by_key(|&(_, c)| c);
    set.dedup_by_key(|&mut (_, c)| c);

    let mut out = Vec::with_capacity(r.min(set.len()));
    while !set.is_empty() {
        let mut best = 0;
        for (i, &(d, c)) in set.iter().enumerate().skip(1) {
            let (bd, bc) = set[best];
            if d < bd || (d == bd && c < bc) {
                best = i;
            }
        }
        let (_, star) = set.swap_remove(best);
        out.push(star);
        if out.len() == r {
            break;
        }
        let star_row = ds.row(star as usize);
        set.retain(|&(d_owner, c)| d_owner < a2 * sq_dist(star_row, ds.row(c as usize)));
    }
    out
}

/// Output of a beam search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// Best `k` ids with squared distances, ascending.
    pub topk: Vec<(u32, f64)>,
    /// Expanded nodes, in expansion order.
    pub visited: Vec<u32>,
    /// Number of moves of the closest-known candidate.
    pub hops: usize,
    /// Closest-known candidate after each move, starting with `start`.
    pub path: Vec<u32>,
    /// Distance evaluations spent on the query.
    pub dist_evals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    dist: f64,
    id: u32,
    expanded: bool,
}

impl Candidate {
    #[inline]
    fn before(&self, dist: f64, id: u32) -> bool {
        self.dist < dist || (self.dist == dist && self.id < id)
    }
}

struct RawSearch {
    list: Vec<Candidate>,
    visited: Vec<(u32, f64)>,
    hops: usize,
    path: Vec<u32>,
    dist_evals: usize,
}

/// Reusable scratch for repeated searches over one graph size.
pub struct Searcher {
    stamp: Vec<u32>,
    epoch: u32,
}

impl Searcher {
    pub fn new(n: usize) -> Self {
        Self {
            stamp: vec![0; n],
            epoch: 0,
        }
    }

    fn next_epoch(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }

    fn run(
        &mut self,
        adjacency: &[Vec<u32>],
        ds: &VectorDataset,
        query: &[f32],
        start: u32,
        l: usize,
    ) -> RawSearch {
        self.next_epoch();
        let epoch = self.epoch;
        let start_dist = sq_dist(query, ds.row(start as usize));
        self.stamp[start as usize] = epoch;
        let mut list = Vec::with_capacity(l + 1);
        list.push(Candidate {
            dist: start_dist,
            id: start,
            expanded: false,
        });
        let mut visited = Vec::new();
        let mut path = vec![start];
        let mut best_dist = start_dist;
        let mut hops = 0;
        let mut dist_evals = 1;
        let mut cursor = 0;

        while cursor < list.len() {
            let current = list[cursor];
            list[cursor].expanded = true;
            visited.push((current.id, current.dist));
            let mut lowest_insert = list.len();
            for &nb in &adjacency[current.id as usize] {
                if self.stamp[nb as usize] == epoch {
                    continue;
                }
                self.stamp[nb as usize] = epoch;
                let d = sq_dist(query, ds.row(nb as usize));
                dist_evals += 1;
                if list.len() == l && list[l - 1].before(d, nb) {
                    continue;
                }
                let pos = list.partition_point(|c| c.before(d, nb));
                list.insert(
                    pos,
                    Candidate {
                        dist: d,
                        id: nb,
                        expanded: false,
                    },
                );
                list.truncate(l);
                lowest_insert = lowest_insert.min(pos);
            }
            if list[0].dist < best_dist {
                best_dist = list[0].dist;
                hops += 1;
                path.push(list[0].id);
            }
            cursor = cursor.min(lowest_insert);
            while cursor < list.len() && list[cursor].expanded {
                cursor += 1;
            }
        }
        RawSearch {
            list,
            visited,
            hops,
            path,
            dist_evals,
        }
    }

    /// Beam search with list size `l`, returning the best `k`.
    pub fn search(
        &mut self,
        g: &SngGraph,
        ds: &VectorDataset,
        query: &[f32],
        start: u32,
        l: usize,
        k: usize,
    ) -> Result<SearchResult> {
        check_search_args(g, ds, query, start, l, k)?;
        if self.stamp.len() != g.n() {
            *self = Searcher::new(g.n());
        }
        let raw = self.run(&g.adjacency, ds, query, start, l);
        Ok(SearchResult {
            topk: raw.list.iter().take(k).map(|c| (c.id, c.dist)).collect(),
            visited: raw.visited.into_iter().map(|(id, _)| id).collect(),
            hops: raw.hops,
            path: raw.path,
            dist_evals: raw.dist_evals,
        })
    }
}

fn check_search_args(
    g: &SngGraph,
    ds: &VectorDataset,
    query: &[f32],
    start: u32,
    l: usize,
    k: usize,
) -> Result<()> {
    if start as usize >= g.n() {
        return Err(Error::InvalidParam(format!("start {start} >= n {}", g.n())));
    }
    if ds.n() != g.n() {
        return Err(Error::LengthMismatch(format!(
            "graph has {} nodes, dataset {} rows",
            g.n(),
            ds.n()
        )));
    }
    if query.len() != ds.d() {
        return Err(Error::DimensionMismatch {
            expected: ds.d(),
            actual: query.len(),
        });
    }
    if k == 0 || l < k {
        return Err(Error::InvalidParam(format!("need l >= k >= 1 (l={l}, k={k})")));
    }
    Ok(())
}

/// Best-first beam search from `start`: keeps the `l` closest discovered
/// nodes, expands the closest unexpanded one, and stops once all `l` are
/// expanded.
pub fn greedy_search(
    g: &SngGraph,
    ds: &VectorDataset,
    query: &[f32],
    start: u32,
    l: usize,
    k: usize,
) -> Result<SearchResult> {
    Searcher::new(g.n()).search(g, ds, query, start, l, k)
}

/// Each node draws `r` distinct out-neighbors uniformly among the others.
pub fn random_regular(ds: &VectorDataset, r: usize, seed: u64) -> Result<SngGraph> {
    let n = ds.n();
    if r == 0 || r >= n {
        return Err(Error::InvalidParam(format!("need 1 <= R < n (R={r}, n={n})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adjacency = random_lists(&mut rng, n, r);
    Ok(SngGraph {
        dim: ds.d(),
        pruned_len: vec![0; n],
        adjacency,
        alpha: 1.0,
        r_cap: Some(r),
        medoid: medoid(ds),
        build_kind: BuildKind::RandomRegular,
    })
}

fn random_lists(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Vec<Vec<u32>> {
    (0..n)
        .map(|p| {
            rand::seq::index::sample(rng, n - 1, r)
                .into_iter()
                .map(|j| if j >= p { j as u32 + 1 } else { j as u32 })
                .collect()
        })
        .collect()
}

struct VamanaState<'a> {
    ds: &'a VectorDataset,
    params: BuildParams,
    adjacency: Vec<Vec<u32>>,
    pruned_len: Vec<u32>,
}

impl VamanaState<'_> {
    fn candidates_for(&self, searcher: &mut Searcher, p: u32, start: u32) -> Vec<(f64, u32)> {
        let raw = searcher.run(
            &self.adjacency,
            self.ds,
            self.ds.row(p as usize),
            start,
            self.params.l_build,
        );
        raw.visited.into_iter().map(|(id, d)| (d, id)).collect()
    }

    fn set_out(&mut self, p: u32, list: Vec<u32>) {
        self.pruned_len[p as usize] = list.len() as u32;
        self.adjacency[p as usize] = list;
    }

    /// Reverse-edge insertion for every out-neighbor of `p`, re-pruning on
    /// overflow.
    fn add_reverse_edges(&mut self, p: u32) {
        let outs = self.adjacency[p as usize].clone();
        for j in outs {
            let list = &self.adjacency[j as usize];
            if list.contains(&p) {
                continue;
            }
            if list.len() + 1 > self.params.r {
                let mut cands = list.clone();
                cands.push(p);
                let pruned = robust_prune(self.ds, j as usize, &cands, self.params.alpha, self.params.r);
                self.set_out(j, pruned);
            } else {
                self.adjacency[j as usize].push(p);
            }
        }
    }

    fn finish(self, medoid: u32) -> SngGraph {
        SngGraph {
            dim: self.ds.d(),
            adjacency: self.adjacency,
            alpha: self.params.alpha,
            r_cap: Some(self.params.r),
            medoid,
            build_kind: BuildKind::Vamana,
            pruned_len: self.pruned_len,
        }
    }
}

fn vamana_setup(ds: &VectorDataset, params: BuildParams) -> Result<(VamanaState<'_>, u32, Vec<u32>)> {
    params.validate()?;
    let n = ds.n();
    if n <= params.r {
        return Err(Error::InvalidParam(format!(
            "Vamana needs n > R (n={n}, R={})",
            params.r
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let adjacency = random_lists(&mut rng, n, params.r);
    let start = medoid(ds);
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(&mut rng);
    let state = VamanaState {
        ds,
        params,
        adjacency,
        pruned_len: vec![0; n],
    };
    Ok((state, start, order))
}

/// Sequential Vamana build. Deterministic in `(ds, params)`.
pub fn build_vamana(ds: &VectorDataset, params: BuildParams) -> Result<SngGraph> {
    let (mut state, start, order) = vamana_setup(ds, params)?;
    let mut searcher = Searcher::new(ds.n());
    for p in order {
        let cands = state.candidates_for(&mut searcher, p, start);
        let out = robust_prune_scored(ds, p as usize, cands, params.alpha, params.r);
        state.set_out(p, out);
        state.add_reverse_edges(p);
    }
    Ok(state.finish(start))
}

/// Batched Vamana build: within each batch of the permutation, searches and
/// prunes run in parallel against the graph as it stood before the batch;
/// list replacement and reverse edges are then applied in permutation
/// order. The result depends on `batch` but not on the thread count.
pub fn build_vamana_batched(ds: &VectorDataset, params: BuildParams, batch: usize) -> Result<SngGraph> {
    if batch == 0 {
        return Err(Error::InvalidParam("batch size must be >= 1".into()));
    }
    let (mut state, start, order) = vamana_setup(ds, params)?;
    for chunk in order.chunks(batch) {
        let outs: Vec<Vec<u32>> = {
            let st = &state;
            chunk
                .par_iter()
                .map_init(
                    || Searcher::new(ds.n()),
                    |searcher, &p| {
                        let cands = st.candidates_for(searcher, p, start);
                        robust_prune_scored(ds, p as usize, cands, params.alpha, params.r)
                    },
                )
                .collect()
        };
        for (&p, out) in chunk.iter().zip(outs) {
            state.set_out(p, out);
        }
        for &p in chunk {
            state.add_reverse_edges(p);
        }
    }
    Ok(state.finish(start))
}

/// Neighbor lists of the non-truncated SNG for the listed owners only.
/// A node's list depends only on the node and the dataset.
pub fn full_sng_rows(ds: &VectorDataset, alpha: f32, owners: &[usize]) -> Result<Vec<Vec<u32>>> {
    if ds.n() < 2 {
        return Err(Error::InvalidParam("SNG needs at least two points".into()));
    }
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(Error::InvalidParam(format!("alpha must be >= 1, got {alpha}")));
    }
    if let Some(&bad) = owners.iter().find(|&&p| p >= ds.n()) {
        return Err(Error::InvalidParam(format!("owner {bad} >= n {}", ds.n())));
    }
    Ok(owners
        .par_iter()
        .map(|&p| sng_neighbors(ds, p, alpha, None, None))
        .collect())
}

/// Non-truncated SNG over all nodes.
pub fn build_full_sng(ds: &VectorDataset, alpha: f32) -> Result<SngGraph> {
    let owners: Vec<usize> = (0..ds.n()).collect();
    let adjacency = full_sng_rows(ds, alpha, &owners)?;
    Ok(SngGraph {
        dim: ds.d(),
        pruned_len: adjacency.iter().map(|l| l.len() as u32).collect(),
        adjacency,
        alpha,
        r_cap: None,
        medoid: medoid(ds),
        build_kind: BuildKind::FullSng,
    })
}

pub fn save_graph(g: &SngGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(21 + 4 * (g.n() + g.num_edges()));
    out.extend_from_slice(GRAPH_MAGIC);
    out.extend_from_slice(&(g.n() as u32).to_le_bytes());
    out.extend_from_slice(&(g.dim as u32).to_le_bytes());
    out.extend_from_slice(&(g.r_cap.unwrap_or(0) as u32).to_le_bytes());
    out.extend_from_slice(&g.alpha.to_le_bytes());
    out.extend_from_slice(&g.medoid.to_le_bytes());
    out.push(g.build_kind.code());
    for list in &g.adjacency {
        out.extend_from_slice(&(list.len() as u32).to_le_bytes());
        for &q in list {
            out.extend_from_slice(&q.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn take(&mut self, len: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(Error::Truncated {
                path: self.path.into(),
                detail: format!("ran out of bytes reading {what} at offset {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<SngGraph> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() >= 4 && &bytes[..4] != GRAPH_MAGIC {
        return Err(Error::MagicMismatch { path: path.into() });
    }
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        path,
    };
    cur.take(4, "magic")?;
    let n = cur.u32("n")? as usize;
    let dim = cur.u32("d")? as usize;
    let r_cap = match cur.u32("r_cap")? {
        0 => None,
        r => Some(r as usize),
    };
    let alpha = f32::from_le_bytes(cur.take(4, "alpha")?.try_into().unwrap());
    let medoid = cur.u32("medoid")?;
    let kind_code = cur.take(1, "build kind")?[0];
    let build_kind = BuildKind::from_code(kind_code)
        .ok_or_else(|| Error::Invariant(format!("unknown build kind {kind_code}")))?;
    let mut adjacency = Vec::with_capacity(n.min(bytes.len() / 4));
    for p in 0..n {
        let degree = cur.u32("degree")? as usize;
        let raw = cur.take(4 * degree, &format!("neighbors of node {p}"))?;
        adjacency.push(
            raw.chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
    }
    if cur.pos != bytes.len() {
        return Err(Error::Invariant(format!(
            "{} trailing bytes after the last node",
            bytes.len() - cur.pos
        )));
    }
    let pruned_len = match build_kind {
        BuildKind::FullSng => adjacency.iter().map(|l: &Vec<u32>| l.len() as u32).collect(),
        _ => vec![0; n],
    };
    let g = SngGraph {
        dim,
        adjacency,
        alpha,
        r_cap,
        medoid,
        build_kind,
        pruned_len,
    };
    g.validate()?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::brute_force_knn;
    use crate::vecmath::sample_uniform_ball;

    fn line(points: &[f32]) -> VectorDataset {
        VectorDataset::new(points.len(), 1, points.to_vec(), "line").unwrap()
    }

    fn complete_graph(ds: &VectorDataset) -> SngGraph {
        let n = ds.n();
        SngGraph {
            dim: ds.d(),
            adjacency: (0..n)
                .map(|p| (0..n as u32).filter(|&q| q as usize != p).collect())
                .collect(),
            alpha: 1.0,
            r_cap: None,
            medoid: 0,
            build_kind: BuildKind::RandomRegular,
            pruned_len: vec![0; n],
        }
    }

    #[test]
    fn medoid_small_cases() {
        assert_eq!(medoid(&line(&[0.0, 1.0, 10.0])), 1);
        assert_eq!(medoid(&line(&[4.0])), 0);
    }

    #[test]
    fn medoid_matches_exhaustive_scan() {
        let ds = sample_uniform_ball(500, 8, 1.0, 21).unwrap();
        let mut best = (f64::INFINITY, 0);
        for i in 0..ds.n() {
            let s: f64 = (0..ds.n())
                .map(|j| {
                    ds.row(i)
                        .iter()
                        .zip(ds.row(j))
                        .map(|(a, b)| ((a - b) as f64).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum();
            if s < best.0 {
                best = (s, i);
            }
        }
        assert_eq!(medoid(&ds) as usize, best.1);
    }

    #[test]
    fn collinear_hand_trace() {
        let ds = line(&[0.0, 1.0, 2.0, 3.0]);
        let mut trace = PruningTrace::default();
        assert_eq!(sng_neighbors(&ds, 0, 1.0, None, Some(&mut trace)), vec![1]);
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.rows[0].delta, 2);
        assert_eq!(trace.rows[0].s_size, 0);
        assert_eq!(trace.rows[0].rho, 1.0);

        let g = build_full_sng(&line(&[0.0, 1.0, 2.0]), 1.0).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0, 2]);
    }

    #[test]
    fn truncation_to_one_gives_nearest() {
        let ds = sample_uniform_ball(300, 3, 1.0, 4).unwrap();
        let gt = brute_force_knn(&ds, &ds.subset(&[7], "q").unwrap(), 2).unwrap();
        let got = sng_neighbors(&ds, 7, 1.2, Some(1), None);
        assert_eq!(got, vec![gt.ids[0][1]]);
    }

    #[test]
    fn every_dropped_point_is_covered() {
        let ds = sample_uniform_ball(200, 3, 1.0, 8).unwrap();
        let alpha = 1.2f32;
        let a2 = (alpha as f64).powi(2);
        for p in [0usize, 17, 199] {
            let list = sng_neighbors(&ds, p, alpha, None, None);
            for q in 0..ds.n() {
                if q == p || list.contains(&(q as u32)) {
                    continue;
                }
                let covered = list
                    .iter()
                    .any(|&u| ds.sq_dist_ids(p, q) >= a2 * ds.sq_dist_ids(u as usize, q));
                assert!(covered, "point {q} dropped without a covering neighbor of {p}");
            }
            check_prune_list(&ds, p, &list, alpha).unwrap();
        }
    }

    #[test]
    fn trace_rows_equal_degree() {
        let ds = sample_uniform_ball(400, 4, 1.0, 2).unwrap();
        let mut trace = PruningTrace::default();
        let list = sng_neighbors(&ds, 3, 1.0, None, Some(&mut trace));
        assert_eq!(trace.rows.len(), list.len());
        trace.validate().unwrap();
        assert_eq!(trace.processed(trace.rows.len()), ds.n() - 1);
    }

    #[test]
    fn robust_prune_single_and_cap() {
        let ds = sample_uniform_ball(60, 2, 1.0, 5).unwrap();
        assert_eq!(robust_prune(&ds, 0, &[9], 1.0, 4), vec![9]);
        assert_eq!(robust_prune(&ds, 0, &[0, 9, 9], 1.0, 4), vec![9]);
        let all: Vec<u32> = (0..60).collect();
        for r in 1..6 {
            assert!(robust_prune(&ds, 3, &all, 2.0, r).len() <= r);
        }
    }

    #[test]
    fn isolated_start() {
        let ds = line(&[0.0, 5.0]);
        let g = SngGraph {
            dim: 1,
            adjacency: vec![vec![], vec![0]],
            alpha: 1.0,
            r_cap: None,
            medoid: 0,
            build_kind: BuildKind::FullSng,
            pruned_len: vec![0, 1],
        };
        let res = greedy_search(&g, &ds, &[5.0], 0, 2, 1).unwrap();
        assert_eq!(res.topk, vec![(0, 25.0)]);
        assert_eq!(res.hops, 0);
        assert!(greedy_search(&g, &ds, &[5.0], 2, 2, 1).is_err());
        assert!(greedy_search(&g, &ds, &[5.0], 0, 1, 2).is_err());
    }

    #[test]
    fn complete_graph_search_is_exact() {
        let ds = sample_uniform_ball(6, 3, 1.0, 12).unwrap();
        let g = complete_graph(&ds);
        let queries = sample_uniform_ball(5, 3, 1.0, 13).unwrap();
        let gt = brute_force_knn(&ds, &queries, 6).unwrap();
        for q in 0..queries.n() {
            for start in 0..6 {
                let res = greedy_search(&g, &ds, queries.row(q), start, 6, 6).unwrap();
                let ids: Vec<u32> = res.topk.iter().map(|t| t.0).collect();
                assert_eq!(ids, gt.ids[q]);
            }
        }
    }

    #[test]
    fn short_list_keeps_the_best_candidates() {
        let ds = sample_uniform_ball(40, 3, 1.0, 14).unwrap();
        let g = complete_graph(&ds);
        let queries = sample_uniform_ball(10, 3, 1.0, 15).unwrap();
        let gt = brute_force_knn(&ds, &queries, 3).unwrap();
        for q in 0..queries.n() {
            for start in [0, 17, 39] {
                let res = greedy_search(&g, &ds, queries.row(q), start, 3, 3).unwrap();
                let ids: Vec<u32> = res.topk.iter().map(|t| t.0).collect();
                assert_eq!(ids, gt.ids[q]);
            }
        }
    }

    #[test]
    fn search_path_strictly_improves() {
        let ds = sample_uniform_ball(2000, 4, 1.0, 30).unwrap();
        let g = build_vamana(&ds, BuildParams::new(1.2, 16, 1)).unwrap();
        let queries = sample_uniform_ball(50, 4, 1.0, 31).unwrap();
        let mut searcher = Searcher::new(g.n());
        for q in 0..queries.n() {
            let res = searcher.search(&g, &ds, queries.row(q), g.medoid(), 20, 10).unwrap();
            assert_eq!(res.path.len(), res.hops + 1);
            assert!(res.hops <= res.visited.len());
            let dists: Vec<f64> = res.path.iter().map(|&v| sq_dist(queries.row(q), ds.row(v as usize))).collect();
            assert!(dists.windows(2).all(|w| w[0] > w[1]));
            for (id, _) in &res.topk {
                assert!(res.visited.contains(id));
            }
            assert!(res.topk.windows(2).all(|w| w[0].1 <= w[1].1));
        }
        // query at a base point's coordinates
        let res = searcher.search(&g, &ds, ds.row(g.medoid() as usize), g.medoid(), 10, 1).unwrap();
        assert_eq!(res.hops, 0);
        assert_eq!(res.topk[0], (g.medoid(), 0.0));
    }

    #[test]
    fn vamana_small_build_invariants_and_determinism() {
        let ds = sample_uniform_ball(2000, 8, 1.0, 6).unwrap();
        let params = BuildParams::new(1.2, 24, 9);
        let a = build_vamana(&ds, params).unwrap();
        a.validate().unwrap();
        a.check_pruning_invariant(&ds).unwrap();
        assert!(a.degrees().all(|d| d <= 24));
        let b = build_vamana(&ds, params).unwrap();
        assert_eq!(a.adjacency(), b.adjacency());

        let c = build_vamana_batched(&ds, params, 64).unwrap();
        c.validate().unwrap();
        c.check_pruning_invariant(&ds).unwrap();
    }

    #[test]
    fn vamana_rejects_bad_params() {
        let ds = sample_uniform_ball(20, 2, 1.0, 6).unwrap();
        assert!(build_vamana(&ds, BuildParams::new(1.2, 20, 1)).is_err());
        assert!(build_vamana(&ds, BuildParams::new(0.9, 4, 1)).is_err());
        assert!(build_vamana(&ds, BuildParams::new(1.2, 4, 1).with_l_build(3)).is_err());
        assert!(build_vamana_batched(&ds, BuildParams::new(1.2, 4, 1), 0).is_err());
    }

    #[test]
    fn sampled_rows_match_full_build() {
        let ds = sample_uniform_ball(300, 2, 1.0, 14).unwrap();
        let full = build_full_sng(&ds, 1.2).unwrap();
        full.validate().unwrap();
        full.check_pruning_invariant(&ds).unwrap();
        let rows = full_sng_rows(&ds, 1.2, &[42, 7]).unwrap();
        assert_eq!(rows[0], full.neighbors(42));
        assert_eq!(rows[1], full.neighbors(7));
    }

    #[test]
    fn graph_file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_uniform_ball(100, 3, 1.0, 15).unwrap();
        let g = build_vamana(&ds, BuildParams::new(1.2, 8, 3)).unwrap();
        let path = dir.path().join("g.sng");
        save_graph(&g, &path).unwrap();
        let back = load_graph(&path).unwrap();
        assert_eq!(back.adjacency(), g.adjacency());
        assert_eq!((back.alpha(), back.r_cap(), back.medoid(), back.build_kind(), back.dim()),
                   (g.alpha(), g.r_cap(), g.medoid(), g.build_kind(), g.dim()));
        let again = dir.path().join("g2.sng");
        save_graph(&back, &again).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());

        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&again, &bytes).unwrap();
        assert!(matches!(load_graph(&again), Err(Error::MagicMismatch { .. })));

        let bytes = fs::read(&path).unwrap();
        fs::write(&again, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(load_graph(&again), Err(Error::Truncated { .. })));

        // node 0 pointing at id n
        let mut bytes = fs::read(&path).unwrap();
        bytes[29..33].copy_from_slice(&100u32.to_le_bytes());
        fs::write(&again, &bytes).unwrap();
        assert!(matches!(load_graph(&again), Err(Error::Invariant(_))));
    }
}
