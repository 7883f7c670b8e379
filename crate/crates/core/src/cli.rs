//! The `sng` command line.
//!
//! Relative paths are resolved against `$SNG_DATA_DIR` when it is set.
//! `--threads 1` (the default) runs every build sequentially and is the
//! bit-for-bit reproducible reference; more threads switch Vamana to the
//! batched builder and parallelize query evaluation.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::bench::{compare_tuners, sweep, sweep_csv, ReferenceTunerConfig};
use crate::dataset::{
    brute_force_knn, gen_gmm, read_fvecs, read_ivecs, write_fvecs, write_ivecs, GroundTruth, VectorDataset,
};
use crate::error::{Error, Result};
use crate::experiments::{self, MixtureSetup, RunSettings};
use crate::graph::{build_full_sng, build_vamana, build_vamana_batched, load_graph, save_graph, sng_neighbors, BuildParams, SngGraph, Searcher};
use crate::instrument::{degree_stats, path_length_stats, recall_at_k, PruningTrace};
use crate::tuner::{optimize_r_with, TuneOptions};
use crate::vecmath::sample_uniform_ball;

pub const DATA_DIR_ENV: &str = "SNG_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "sng", version, about = "Sparse neighborhood graph indexing and verification")]
pub struct Cli {
    /// Worker threads; 1 is the deterministic reference.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Permutation batch size of the parallel Vamana builder (threads > 1).
    #[arg(long, global = true, default_value_t = 256)]
    batch: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Points uniform in a ball of radius --rho.
    GenUniform(GenUniformArgs),
    /// Isotropic Gaussian mixture, optionally split into base and queries.
    GenGmm(GenGmmArgs),
    /// Exact k-NN ground truth.
    Gt(GtArgs),
    /// Build a graph index.
    Build(BuildArgs),
    /// Optimize the truncation parameter R from a probe build.
    Tune(TuneArgs),
    /// Search an index and write result ids.
    Search(SearchArgs),
    /// Recall@k and latency sweep over the search list size.
    Bench(BenchArgs),
    /// Pruning traces for chosen owner nodes.
    Trace(TraceArgs),
    /// Out-degree statistics of a graph.
    Degrees(DegreesArgs),
    /// Greedy path lengths from the medoid.
    Paths(PathsArgs),
    /// Run the verification experiments.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct GenUniformArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenGmmArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long, default_value_t = 10)]
    clusters: usize,
    /// Common standard deviation of the components.
    #[arg(long, default_value_t = 0.05)]
    spread: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also split: the first fraction of a seeded shuffle goes to --out,
    /// the rest to --queries-out.
    #[arg(long, requires = "queries_out")]
    base_fraction: Option<f64>,
    #[arg(long)]
    queries_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GtArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Ids as ivecs.
    #[arg(long)]
    out: PathBuf,
    /// Squared distances as fvecs.
    #[arg(long)]
    dists_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Vamana,
    FullSng,
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = Kind::Vamana)]
    kind: Kind,
    #[arg(long, default_value_t = 1.2)]
    alpha: f32,
    /// Truncation parameter (Vamana only).
    #[arg(long)]
    r: Option<usize>,
    /// Search list size during construction; defaults to max(2R, 50).
    #[arg(long)]
    l_build: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1.2)]
    alpha1: f64,
    #[arg(long, default_value_t = 1.2)]
    alpha2: f64,
    /// Tune on a seeded subsample of this many points.
    #[arg(long)]
    probe_subsample: Option<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 50)]
    l: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Result ids as ivecs.
    #[arg(long)]
    out: PathBuf,
    /// Ground truth ivecs; prints recall@k when given.
    #[arg(long)]
    gt: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TunerMode {
    Analytic,
    BinarySearch,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Prebuilt graph; otherwise one is built at --r or at the tuned R.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Ground truth ivecs; computed by brute force when absent.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long, default_value_t = 1.2)]
    alpha: f64,
    #[arg(long, value_delimiter = ',', default_value = "10,20,50,100")]
    ls: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    probe_subsample: Option<usize>,
    /// `binary-search` also runs the search-guided reference tuner and
    /// compares it with the analytic one.
    #[arg(long, value_enum, default_value_t = TunerMode::Analytic)]
    tuner: TunerMode,
    /// Reference tuner budget, mean distance evaluations per query.
    #[arg(long, default_value_t = 2000.0)]
    budget: f64,
    #[arg(long, default_value_t = 8)]
    r_lo: usize,
    #[arg(long, default_value_t = 128)]
    r_hi: usize,
    #[arg(long)]
    csv_out: Option<PathBuf>,
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    owners: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f32,
    #[arg(long)]
    r_cap: Option<usize>,
    /// One `trace_<owner>.csv` per owner plus `traces.json`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct DegreesArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    csv_out: Option<PathBuf>,
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PathsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long, default_value_t = 1)]
    l: usize,
    #[arg(long)]
    csv_out: Option<PathBuf>,
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Criteria to run (1-10); all when omitted.
    #[arg(long, value_delimiter = ',')]
    only: Vec<usize>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Reports and CSV tables are written here.
    #[arg(long, default_value = "verify-out")]
    out_dir: PathBuf,
}

fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let path = resolve(path);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn load(path: &Path) -> Result<VectorDataset> {
    read_fvecs(resolve(path))
}

struct Ctx {
    threads: usize,
    batch: usize,
}

impl Ctx {
    fn batch(&self) -> Option<usize> {
        (self.threads > 1).then_some(self.batch)
    }

    fn build(&self, ds: &VectorDataset, params: BuildParams) -> Result<SngGraph> {
        match self.batch() {
            Some(b) => build_vamana_batched(ds, params, b),
            None => build_vamana(ds, params),
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to stderr.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    if cli.threads == 0 || cli.batch == 0 {
        return Err(Error::InvalidParam("--threads and --batch must be >= 1".into()));
    }
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    let ctx = Ctx {
        threads: cli.threads,
        batch: cli.batch,
    };
    match cli.command {
        Command::GenUniform(a) => gen_uniform(a),
        Command::GenGmm(a) => gen_gmm_cmd(a),
        Command::Gt(a) => gt(a),
        Command::Build(a) => build(&ctx, a),
        Command::Tune(a) => tune(&ctx, a),
        Command::Search(a) => search(a),
        Command::Bench(a) => bench(&ctx, a),
        Command::Trace(a) => trace(a),
        Command::Degrees(a) => degrees(a),
        Command::Paths(a) => paths(a),
        Command::Verify(a) => verify(&ctx, a),
    }
}

fn gen_uniform(a: GenUniformArgs) -> Result<i32> {
    let ds = sample_uniform_ball(a.n, a.d, a.rho, a.seed)?;
    write_fvecs(&ds, resolve(&a.out))?;
    println!("wrote {} x {} points to {}", ds.n(), ds.d(), a.out.display());
    Ok(0)
}

fn gen_gmm_cmd(a: GenGmmArgs) -> Result<i32> {
    let ds = gen_gmm(a.n, a.d, a.clusters, a.spread, a.seed)?;
    match (a.base_fraction, a.queries_out) {
        (Some(frac), Some(qpath)) => {
            if !(frac > 0.0 && frac < 1.0) {
                return Err(Error::InvalidParam(format!("--base-fraction must lie in (0, 1), got {frac}")));
            }
            let (base, queries) = ds.split((frac * a.n as f64).round() as usize, a.seed)?;
            write_fvecs(&base, resolve(&a.out))?;
            write_fvecs(&queries, resolve(&qpath))?;
            println!(
                "wrote {} base points to {} and {} queries to {}",
                base.n(),
                a.out.display(),
                queries.n(),
                qpath.display()
            );
        }
        _ => {
            write_fvecs(&ds, resolve(&a.out))?;
            println!("wrote {} x {} points to {}", ds.n(), ds.d(), a.out.display());
        }
    }
    Ok(0)
}

fn gt(a: GtArgs) -> Result<i32> {
    let base = load(&a.base)?;
    let queries = load(&a.queries)?;
    let truth = brute_force_knn(&base, &queries, a.k)?;
    write_ivecs(&truth.to_ivecs(), resolve(&a.out))?;
    if let (Some(path), Some(dists)) = (a.dists_out, truth.sq_dists.as_ref()) {
        let rows: Vec<Vec<f32>> = dists.iter().map(|r| r.iter().map(|&d| d as f32).collect()).collect();
        write_fvecs(&VectorDataset::from_rows(&rows, "gt distances")?, resolve(&path))?;
    }
    println!("wrote {}-NN of {} queries to {}", a.k, queries.n(), a.out.display());
    Ok(0)
}

fn build(ctx: &Ctx, a: BuildArgs) -> Result<i32> {
    let ds = load(&a.data)?;
    let t0 = Instant::now();
    let g = match a.kind {
        Kind::FullSng => build_full_sng(&ds, a.alpha)?,
        Kind::Vamana => {
            let r = a
                .r
                .ok_or_else(|| Error::InvalidParam("--r is required for a Vamana build".into()))?;
            let mut params = BuildParams::new(a.alpha, r, a.seed);
            if let Some(l) = a.l_build {
                params = params.with_l_build(l);
            }
            ctx.build(&ds, params)?
        }
    };
    let secs = t0.elapsed().as_secs_f64();
    g.validate()?;
    save_graph(&g, resolve(&a.out))?;
    let stats = degree_stats(&g);
    println!(
        "built {} graph: n={} edges={} max_degree={} mean_degree={:.3} medoid={} in {secs:.2}s -> {}",
        g.build_kind(),
        g.n(),
        g.num_edges(),
        stats.max,
        stats.mean,
        g.medoid(),
        a.out.display()
    );
    Ok(0)
}

fn tune(ctx: &Ctx, a: TuneArgs) -> Result<i32> {
    let ds = load(&a.data)?;
    let t0 = Instant::now();
    let opts = TuneOptions {
        probe_subsample: a.probe_subsample,
        batch: ctx.batch(),
    };
    let rep = optimize_r_with(&ds, a.alpha1, a.alpha2, a.seed, opts)?;
    let secs = t0.elapsed().as_secs_f64();
    println!("n = {}", ds.n());
    println!("r_probe = {}", rep.r_probe);
    println!("r_bar = {:.6}", rep.r_bar);
    println!("k_prime = {:.6}", rep.k_prime);
    println!("r_star = {}", rep.r_star);
    println!("tuning_seconds = {secs:.3} (wall clock, hardware-dependent)");
    if let Some(path) = a.json_out {
        write_text(&path, &rep.to_json()?)?;
    }
    Ok(0)
}

fn load_gt(path: &Path, k: usize) -> Result<GroundTruth> {
    GroundTruth::from_ivecs(read_ivecs(resolve(path))?, k)
}

fn search(a: SearchArgs) -> Result<i32> {
    let ds = load(&a.data)?;
    let g = load_graph(resolve(&a.graph))?;
    let queries = load(&a.queries)?;
    let mut searcher = Searcher::new(g.n());
    let mut ids = Vec::with_capacity(queries.n());
    for q in 0..queries.n() {
        let res = searcher.search(&g, &ds, queries.row(q), g.medoid(), a.l.max(a.k), a.k)?;
        ids.push(res.topk.iter().map(|t| t.0).collect::<Vec<u32>>());
    }
    if ids.iter().any(|r| r.len() != a.k) {
        return Err(Error::Invariant(format!("some queries reached fewer than {} nodes", a.k)));
    }
    let rows: Vec<Vec<i32>> = ids.iter().map(|r| r.iter().map(|&v| v as i32).collect()).collect();
    write_ivecs(&rows, resolve(&a.out))?;
    if let Some(gt_path) = a.gt {
        let gt = load_gt(&gt_path, a.k)?;
        println!("recall@{} = {:.6}", a.k, recall_at_k(&ids, &gt, a.k)?);
    }
    println!("wrote results of {} queries to {}", queries.n(), a.out.display());
    Ok(0)
}

fn bench(ctx: &Ctx, a: BenchArgs) -> Result<i32> {
    let base = load(&a.data)?;
    let queries = load(&a.queries)?;
    let gt = match &a.gt {
        Some(p) => load_gt(p, a.k)?,
        None => brute_force_knn(&base, &queries, a.k)?,
    };
    let tune_opts = TuneOptions {
        probe_subsample: a.probe_subsample,
        batch: ctx.batch(),
    };
    let mut summary = serde_json::Map::new();
    let (g, r_used) = match (&a.graph, a.r) {
        (Some(p), _) => {
            let g = load_graph(resolve(p))?;
            let r = g.r_cap();
            (g, r)
        }
        (None, Some(r)) => (ctx.build(&base, BuildParams::new(a.alpha as f32, r, a.seed))?, Some(r)),
        (None, None) => {
            let rep = optimize_r_with(&base, a.alpha, a.alpha, a.seed, tune_opts)?;
            println!("tuned R* = {} (mean probe degree {:.3})", rep.r_star, rep.r_bar);
            summary.insert("tune".into(), serde_json::to_value(rep)?);
            let g = ctx.build(&base, BuildParams::new(a.alpha as f32, rep.r_star, a.seed))?;
            (g, Some(rep.r_star))
        }
    };
    let rows = sweep(&g, &base, &queries, &gt, &a.ls, a.k)?;
    let csv = sweep_csv(&rows, a.k);
    println!("# latency is wall clock in microseconds and hardware-dependent");
    print!("{csv}");
    summary.insert("r".into(), json!(r_used));
    summary.insert("k".into(), json!(a.k));
    summary.insert("latency_unit".into(), json!("microseconds (hardware-dependent)"));
    summary.insert("sweep".into(), serde_json::to_value(&rows)?);

    if a.tuner == TunerMode::BinarySearch {
        let mut reference = ReferenceTunerConfig::new(a.alpha as f32, a.r_lo, a.r_hi, a.budget, a.seed);
        reference.k = a.k;
        reference.batch = ctx.batch();
        let cmp = compare_tuners(&base, &queries, &gt, a.alpha, a.alpha, tune_opts, &reference, 50)?;
        println!("# tuner comparison (times are wall clock, hardware-dependent)");
        println!("tuner,r,tuning_seconds,recall_at_{}_l{}", a.k, cmp.l_eval);
        println!("analytic,{},{:.3},{:.6}", cmp.analytic.r_star, cmp.analytic_seconds, cmp.analytic_recall);
        println!(
            "binary-search,{},{:.3},{:.6}",
            cmp.reference.r_best, cmp.reference.seconds, cmp.reference_recall
        );
        println!("speedup = {:.2}x", cmp.speedup);
        summary.insert("tuner_comparison".into(), serde_json::to_value(&cmp)?);
    }
    if let Some(p) = a.csv_out {
        write_text(&p, &csv)?;
    }
    if let Some(p) = a.json_out {
        write_text(&p, &serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(0)
}

fn trace(a: TraceArgs) -> Result<i32> {
    let ds = load(&a.data)?;
    if ds.n() < 2 {
        return Err(Error::InvalidParam("tracing needs at least two points".into()));
    }
    let mut summaries = Vec::new();
    for &owner in &a.owners {
        if owner >= ds.n() {
            return Err(Error::InvalidParam(format!("owner {owner} >= n {}", ds.n())));
        }
        let mut tr = PruningTrace::default();
        let list = sng_neighbors(&ds, owner, a.alpha, a.r_cap, Some(&mut tr));
        tr.validate()?;
        write_text(&a.out_dir.join(format!("trace_{owner}.csv")), &tr.to_csv())?;
        println!("owner {owner}: degree {} over {} iterations", list.len(), tr.rows.len());
        summaries.push(json!({
            "owner": owner,
            "degree": list.len(),
            "iterations": tr.rows.len(),
            "complete": tr.is_complete(),
            "candidates": tr.initial,
        }));
    }
    write_text(&a.out_dir.join("traces.json"), &serde_json::to_string_pretty(&summaries)?)?;
    Ok(0)
}

fn degrees(a: DegreesArgs) -> Result<i32> {
    let g = load_graph(resolve(&a.graph))?;
    let s = degree_stats(&g);
    println!(
        "n={} min={} max={} mean={:.3} mode={} band90={:?}",
        g.n(),
        s.min,
        s.max,
        s.mean,
        s.mode(),
        s.central_band(0.9)
    );
    if let Some(p) = a.csv_out {
        write_text(&p, &s.histogram_csv())?;
    }
    if let Some(p) = a.json_out {
        let v = json!({"n": g.n(), "min": s.min, "max": s.max, "mean": s.mean, "mode": s.mode()});
        write_text(&p, &serde_json::to_string_pretty(&v)?)?;
    }
    Ok(0)
}

fn paths(a: PathsArgs) -> Result<i32> {
    let ds = load(&a.data)?;
    let g = load_graph(resolve(&a.graph))?;
    let queries = load(&a.queries)?;
    let s = path_length_stats(&g, &ds, &queries, a.l)?;
    println!("queries={} mean_hops={:.4} p99_hops={}", queries.n(), s.mean_hops, s.p99_hops);
    if let Some(p) = a.csv_out {
        write_text(&p, &s.per_query_csv())?;
    }
    if let Some(p) = a.json_out {
        let v = json!({"queries": queries.n(), "l": a.l, "mean_hops": s.mean_hops, "p99_hops": s.p99_hops});
        write_text(&p, &serde_json::to_string_pretty(&v)?)?;
    }
    Ok(0)
}

fn line(id: usize, name: &str, passed: bool, detail: String) -> bool {
    println!("[{}] criterion {id:>2} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    passed
}

fn verify(ctx: &Ctx, a: VerifyArgs) -> Result<i32> {
    let want = |i: usize| a.only.is_empty() || a.only.contains(&i);
    let settings = RunSettings {
        seed: a.seed,
        batch: ctx.batch(),
    };
    let out = |name: &str| a.out_dir.join(name);
    let mut all = true;

    if want(1) {
        let r = experiments::pruning_formula(&[2, 4, 8, 16], &[0.2, 0.5, 0.8], 100_000, a.seed)?;
        let worst = r.cells.iter().map(|c| c.z.abs()).fold(0.0, f64::max);
        all &= line(1, "pruning probability vs Monte Carlo", r.passed(), format!("max |z| = {worst:.2} (limit 3)"));
        write_text(&out("pruning_formula.json"), &serde_json::to_string_pretty(&r)?)?;
    }
    if want(2) {
        let r = experiments::planar_fast_pruning(10_000, 100, 4, a.seed)?;
        all &= line(2, "planar 0.8(n-1) level within 4 iterations", r.passed(), format!("{}/{} runs (need {})", r.hits, r.trials, r.required));
        write_text(&out("planar_fast_pruning.json"), &serde_json::to_string_pretty(&r)?)?;
    }
    if want(3) {
        let r = experiments::degree_scaling(&[10_000, 20_000, 40_000, 80_000], 8, 1.2, 200, a.seed)?;
        all &= line(3, "max degree growth", r.passed(), format!("log-log slope {:.3} (limit {})", r.slope, r.max_slope));
        write_text(&out("degree_scaling.json"), &serde_json::to_string_pretty(&r)?)?;
    }
    if want(4) {
        let (r, _) = experiments::mixture_degrees(&MixtureSetup::default(), settings)?;
        all &= line(
            4,
            "mixture degree distribution",
            r.passed(),
            format!(
                "R*={} max={} (limit {:.0}) mode={} band90={:?} recall@10={:.4}",
                r.tune.r_star,
                r.degrees.max,
                r.degree_limit,
                r.degrees.mode(),
                r.band_90,
                r.recall_at_10
            ),
        );
        write_text(&out("mixture_degree_histogram.csv"), &r.degrees.histogram_csv())?;
        write_text(&out("mixture_degrees.json"), &serde_json::to_string_pretty(&r)?)?;
    }
    if want(5) {
        let r = experiments::path_scaling(&[5_000, 10_000, 20_000, 40_000], 8, 1.2, 1_000, 1, settings)?;
        all &= line(
            5,
            "logarithmic path length",
            r.passed(),
            format!("R^2={:.3} increments={:?}", r.r_squared, r.increments.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>()),
        );
        write_text(&out("path_scaling.json"), &serde_json::to_string_pretty(&r)?)?;
    }
    if want(6) {
        let ds = sample_uniform_ball(2_000, 8, 1.0, a.seed)?;
        let rep = optimize_r_with(&ds, 1.2, 1.2, a.seed, TuneOptions { probe_subsample: None, batch: settings.batch })?;
        let ok = rep.r_star == rep.r_bar.round() as usize && rep.check_identities(ds.n(), ds.n(), 1e-9).is_ok();
        all &= line(6, "tuning identities", ok, format!("r_bar={:.4} r_star={}", rep.r_bar, rep.r_star));
    }
    if want(7) || want(8) {
        println!("[INFO] criteria 7 and 8 are structural checks run by the test suite");
    }
    if want(9) {
        let r = experiments::end_to_end_quality(10_000, 8, 1_000, 1.2, 50, settings)?;
        all &= line(9, "recall@10 at L=50", r.passed(), format!("{:.4} with R*={} (limit {})", r.recall_at_10, r.tune.r_star, r.min_recall));
        write_text(&out("quality.json"), &serde_json::to_string_pretty(&r)?)?;
    }
    if want(10) {
        let mut reference = ReferenceTunerConfig::new(1.2, 8, 128, 2000.0, a.seed);
        reference.batch = settings.batch;
        let r = experiments::tuner_comparison(10_000, 8, 1_000, 1.2, &reference, 50, settings)?;
        all &= line(
            10,
            "tuner comparison",
            true,
            format!(
                "analytic R*={} in {:.2}s recall {:.4}; reference R={} in {:.2}s recall {:.4}; speedup {:.2}x (wall clock)",
                r.analytic.r_star, r.analytic_seconds, r.analytic_recall, r.reference.r_best, r.reference.seconds, r.reference_recall, r.speedup
            ),
        );
        write_text(&out("tuner_comparison.json"), &serde_json::to_string_pretty(&r)?)?;
    }
    Ok(if all { 0 } else { 1 })
}
