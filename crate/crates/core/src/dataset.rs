//! Point collections, benchmark file formats and exact ground truth.
//!
//! `fvecs` and `ivecs` files are sequences of records, each a little-endian
//! `i32` dimension followed by that many little-endian `f32` (resp. `i32`)
//! values. All records in one file share the dimension.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::vecmath::sq_dist;

/// Immutable row-major collection of `n` points in `d` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorDataset {
    n: usize,
    d: usize,
    data: Vec<f32>,
    source: String,
}

impl VectorDataset {
    pub fn new(n: usize, d: usize, data: Vec<f32>, source: impl Into<String>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidParam(format!(
                "dataset needs n >= 1 and d >= 1 (n={n}, d={d})"
            )));
        }
        if data.len() != n * d {
            return Err(Error::LengthMismatch(format!(
                "dataset of {n}x{d} needs {} values, got {}",
                n * d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "non-finite value in row {} column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self {
            n,
            d,
            data,
            source: source.into(),
        })
    }

    /// Builds a dataset from equal-length rows.
    pub fn from_rows(rows: &[Vec<f32>], source: impl Into<String>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.len(),
            });
        }
        Self::new(rows.len(), d, rows.concat(), source)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Squared distance between two stored points.
    #[inline]
    pub fn sq_dist_ids(&self, i: usize, j: usize) -> f64 {
        sq_dist(self.row(i), self.row(j))
    }

    /// New dataset made of the listed rows, in the given order.
    pub fn subset(&self, ids: &[usize], source: impl Into<String>) -> Result<Self> {
        let mut data = Vec::with_capacity(ids.len() * self.d);
        for &i in ids {
            if i >= self.n {
                return Err(Error::InvalidParam(format!("row {i} out of range (n={})", self.n)));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(ids.len(), self.d, data, source)
    }

    /// Deterministic seeded shuffle, then the first `n_base` rows become the
    /// base set and the rest the query set.
    pub fn split(&self, n_base: usize, seed: u64) -> Result<(Self, Self)> {
        if n_base == 0 || n_base >= self.n {
            return Err(Error::InvalidParam(format!(
                "split needs 0 < n_base < n (n_base={n_base}, n={})",
                self.n
            )));
        }
        let mut order: Vec<usize> = (0..self.n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let base = self.subset(&order[..n_base], format!("{}[base]", self.source))?;
        let queries = self.subset(&order[n_base..], format!("{}[queries]", self.source))?;
        Ok((base, queries))
    }
}

fn read_records(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() {
        return Err(Error::Truncated {
            path: path.into(),
            detail: "file holds no records".into(),
        });
    }
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path.into(),
            detail: format!("{} bytes is shorter than a header", bytes.len()),
        });
    }
    let dim = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if dim <= 0 {
        return Err(Error::MalformedHeader {
            path: path.into(),
            record: 0,
            dim,
        });
    }
    let d = dim as usize;
    let record_len = 4 + 4 * d;
    let mut offset = 0;
    let mut record = 0;
    let mut payload = Vec::with_capacity(bytes.len() / record_len * 4 * d);
    while offset < bytes.len() {
        if bytes.len() - offset < 4 {
            return Err(Error::Truncated {
                path: path.into(),
                detail: format!("partial header at record {record}"),
            });
        }
        let here = i32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
        if here <= 0 {
            return Err(Error::MalformedHeader {
                path: path.into(),
                record,
                dim: here,
            });
        }
        if here as usize != d {
            return Err(Error::InconsistentDimension {
                path: path.into(),
                record,
                expected: d,
                actual: here as usize,
            });
        }
        if bytes.len() - offset < record_len {
            return Err(Error::Truncated {
                path: path.into(),
                detail: format!(
                    "record {record} needs {} payload bytes, {} remain",
                    4 * d,
                    bytes.len() - offset - 4
                ),
            });
        }
        payload.extend_from_slice(&bytes[offset + 4..offset + record_len]);
        offset += record_len;
        record += 1;
    }
    Ok((record, d, payload))
}

fn write_records<'a>(
    path: &Path,
    d: usize,
    rows: impl Iterator<Item = &'a [[u8; 4]]>,
) -> Result<()> {
    let mut out = Vec::new();
    for row in rows {
        out.extend_from_slice(&(d as i32).to_le_bytes());
        for v in row {
            out.extend_from_slice(v);
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_fvecs(path: impl AsRef<Path>) -> Result<VectorDataset> {
    let path = path.as_ref();
    let (n, d, payload) = read_records(path)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    VectorDataset::new(n, d, data, path.display().to_string())
}

pub fn write_fvecs(ds: &VectorDataset, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<[u8; 4]> = ds.data.iter().map(|v| v.to_le_bytes()).collect();
    write_records(path.as_ref(), ds.d, bytes.chunks(ds.d))
}

pub fn read_ivecs(path: impl AsRef<Path>) -> Result<Vec<Vec<i32>>> {
    let (_, d, payload) = read_records(path.as_ref())?;
    Ok(payload
        .chunks_exact(4 * d)
        .map(|rec| {
            rec.chunks_exact(4)
                .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        })
        .collect())
}

pub fn write_ivecs(records: &[Vec<i32>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let d = records.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(Error::InvalidParam("ivecs needs at least one non-empty record".into()));
    }
    if let Some(bad) = records.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }
    let bytes: Vec<Vec<[u8; 4]>> = records
        .iter()
        .map(|r| r.iter().map(|v| v.to_le_bytes()).collect())
        .collect();
    write_records(path, d, bytes.iter().map(Vec::as_slice))
}

/// Generating parameters of a sampled Gaussian mixture.
#[derive(Debug, Clone)]
pub struct MixtureLayout {
    /// `clusters × d` component means, row-major.
    pub means: Vec<f64>,
    /// Component drawn for each point.
    pub labels: Vec<u32>,
    pub spread: f64,
}

/// Isotropic Gaussian mixture: means uniform in `[0, 1]^d`, shared standard
/// deviation `spread`, equal component weights.
pub fn gen_gmm(n: usize, d: usize, clusters: usize, spread: f64, seed: u64) -> Result<VectorDataset> {
    gen_gmm_with_layout(n, d, clusters, spread, seed).map(|(ds, _)| ds)
}

pub fn gen_gmm_with_layout(
    n: usize,
    d: usize,
    clusters: usize,
    spread: f64,
    seed: u64,
) -> Result<(VectorDataset, MixtureLayout)> {
    if clusters == 0 || clusters > n {
        return Err(Error::InvalidParam(format!(
            "need 1 <= clusters <= n (clusters={clusters}, n={n})"
        )));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidParam(format!("spread must be >= 0, got {spread}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<f64> = (0..clusters * d).map(|_| rng.random::<f64>()).collect();
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let c = rng.random_range(0..clusters);
        labels.push(c as u32);
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            data.push((means[c * d + j] + spread * z) as f32);
        }
    }
    let ds = VectorDataset::new(
        n,
        d,
        data,
        format!("gmm(n={n},d={d},clusters={clusters},spread={spread},seed={seed})"),
    )?;
    Ok((
        ds,
        MixtureLayout {
            means,
            labels,
            spread,
        },
    ))
}

/// Exact k nearest base ids per query, ascending by squared distance with
/// ties broken by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub k: usize,
    pub ids: Vec<Vec<u32>>,
    /// Squared distances matching `ids`; absent when loaded from `ivecs`.
    pub sq_dists: Option<Vec<Vec<f64>>>,
}

impl GroundTruth {
    /// Ground truth from published id lists, truncated to the first `k`.
    pub fn from_ivecs(records: Vec<Vec<i32>>, k: usize) -> Result<Self> {
        let mut ids = Vec::with_capacity(records.len());
        for (q, rec) in records.into_iter().enumerate() {
            if rec.len() < k {
                return Err(Error::LengthMismatch(format!(
                    "ground truth row {q} has {} ids, need {k}",
                    rec.len()
                )));
            }
            if let Some(bad) = rec.iter().find(|&&v| v < 0) {
                return Err(Error::InvalidParam(format!("negative id {bad} in ground truth row {q}")));
            }
            ids.push(rec[..k].iter().map(|&v| v as u32).collect());
        }
        Ok(Self {
            k,
            ids,
            sq_dists: None,
        })
    }

    pub fn to_ivecs(&self) -> Vec<Vec<i32>> {
        self.ids
            .iter()
            .map(|r| r.iter().map(|&v| v as i32).collect())
            .collect()
    }

    pub fn num_queries(&self) -> usize {
        self.ids.len()
    }
}

/// The `k` smallest `(sq_dist, id)` pairs of one query, ascending.
pub(crate) fn exact_top_k(base: &VectorDataset, query: &[f32], k: usize) -> Vec<(f64, u32)> {
    let mut all: Vec<(f64, u32)> = (0..base.n())
        .map(|i| (sq_dist(base.row(i), query), i as u32))
        .collect();
    let cmp = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < all.len() {
        all.select_nth_unstable_by(k, cmp);
        all.truncate(k);
        all.shrink_to_fit();
    }
    all.sort_unstable_by(cmp);
    all
}

/// Exhaustive k-NN of every query against `base`. Queries are processed in
/// parallel; the result is identical to a sequential scan.
pub fn brute_force_knn(base: &VectorDataset, queries: &VectorDataset, k: usize) -> Result<GroundTruth> {
    if base.d() != queries.d() {
        return Err(Error::DimensionMismatch {
            expected: base.d(),
            actual: queries.d(),
        });
    }
    if k == 0 || k > base.n() {
        return Err(Error::InvalidParam(format!(
            "k must lie in [1, n] (k={k}, n={})",
            base.n()
        )));
    }
    let rows: Vec<Vec<(f64, u32)>> = (0..queries.n())
        .into_par_iter()
        .map(|q| exact_top_k(base, queries.row(q), k))
        .collect();
    let (ids, dists) = rows
        .into_iter()
        .map(|r| r.into_iter().map(|(d, i)| (i, d)).unzip())
        .unzip();
    Ok(GroundTruth {
        k,
        ids,
        sq_dists: Some(dists),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(rows: &[&[f32]]) -> VectorDataset {
        VectorDataset::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), "test").unwrap()
    }

    #[test]
    fn construction_validates() {
        assert!(VectorDataset::new(0, 2, vec![], "x").is_err());
        assert!(VectorDataset::new(1, 2, vec![1.0], "x").is_err());
        assert!(VectorDataset::new(1, 2, vec![1.0, f32::NAN], "x").is_err());
        assert!(VectorDataset::from_rows(&[vec![1.0], vec![1.0, 2.0]], "x").is_err());
    }

    #[test]
    fn minimal_fvecs_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.fvecs");
        let mut bytes = Vec::new();
        for rec in [[1.0f32, 2.0], [3.0, 4.0]] {
            bytes.extend_from_slice(&2i32.to_le_bytes());
            for v in rec {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(&path, &bytes).unwrap();
        let got = read_fvecs(&path).unwrap();
        assert_eq!((got.n(), got.d()), (2, 2));
        assert_eq!(got.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn fvecs_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let data = crate::vecmath::sample_uniform_ball(100, 16, 3.0, 1).unwrap();
        let a = dir.path().join("a.fvecs");
        let b = dir.path().join("b.fvecs");
        write_fvecs(&data, &a).unwrap();
        let back = read_fvecs(&a).unwrap();
        assert_eq!(back.data(), data.data());
        write_fvecs(&back, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(fs::metadata(&a).unwrap().len(), 100 * (4 + 64));
    }

    #[test]
    fn fvecs_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.fvecs");

        fs::write(&p, (-3i32).to_le_bytes()).unwrap();
        assert!(matches!(read_fvecs(&p), Err(Error::MalformedHeader { .. })));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(&1i32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&2i32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 8]);
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_fvecs(&p), Err(Error::InconsistentDimension { record: 1, .. })));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(&2i32.to_le_bytes());
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_fvecs(&p), Err(Error::Truncated { .. })));

        assert!(matches!(read_fvecs(dir.path().join("missing")), Err(Error::Io { .. })));
    }

    #[test]
    fn ivecs_minimal_round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ivecs");
        write_ivecs(&[vec![5, 7]], &p).unwrap();
        let raw = fs::read(&p).unwrap();
        assert_eq!(raw.len(), 12);
        assert_eq!(read_ivecs(&p).unwrap(), vec![vec![5, 7]]);

        // length prefix claims three values, file carries two
        let mut bytes = 3i32.to_le_bytes().to_vec();
        bytes.extend_from_slice(&5i32.to_le_bytes());
        bytes.extend_from_slice(&7i32.to_le_bytes());
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_ivecs(&p), Err(Error::Truncated { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn ivecs_round_trip(records in (1usize..6).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(any::<i32>(), d), 1..20))) {
            let dir = tempfile::tempdir().unwrap();
            let a = dir.path().join("a.ivecs");
            let b = dir.path().join("b.ivecs");
            write_ivecs(&records, &a).unwrap();
            let back = read_ivecs(&a).unwrap();
            prop_assert_eq!(&back, &records);
            write_ivecs(&back, &b).unwrap();
            prop_assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        }
    }

    #[test]
    fn gmm_degenerate_and_deterministic() {
        let g = gen_gmm(200, 3, 1, 0.0, 4).unwrap();
        let first = g.row(0).to_vec();
        for i in 0..g.n() {
            assert_eq!(g.row(i), first.as_slice());
        }
        assert_eq!(gen_gmm(50, 4, 5, 0.1, 2).unwrap(), gen_gmm(50, 4, 5, 0.1, 2).unwrap());
        assert!(gen_gmm(3, 2, 4, 0.1, 1).is_err());
    }

    #[test]
    fn gmm_cluster_means_within_clt_band() {
        let (n, d, k, spread) = (20_000, 8, 10, 0.05);
        let (ds, layout) = gen_gmm_with_layout(n, d, k, spread, 42).unwrap();
        let mut sums = vec![0.0f64; k * d];
        let mut counts = vec![0usize; k];
        for (i, &c) in layout.labels.iter().enumerate() {
            counts[c as usize] += 1;
            for j in 0..d {
                sums[c as usize * d + j] += ds.row(i)[j] as f64;
            }
        }
        for c in 0..k {
            assert!(counts[c] > 0);
            let band = 5.0 * spread / (counts[c] as f64).sqrt();
            for j in 0..d {
                let mean = sums[c * d + j] / counts[c] as f64;
                assert!((mean - layout.means[c * d + j]).abs() < band);
            }
        }
    }

    #[test]
    fn split_partitions_rows() {
        let base = crate::vecmath::sample_uniform_ball(100, 2, 1.0, 3).unwrap();
        let (b, q) = base.split(90, 7).unwrap();
        assert_eq!((b.n(), q.n()), (90, 10));
        let mut all: Vec<Vec<u32>> = b
            .data()
            .chunks(2)
            .chain(q.data().chunks(2))
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect();
        let mut orig: Vec<Vec<u32>> = base.data().chunks(2).map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
        assert_eq!(base.split(90, 7).unwrap().0, b);
    }

    #[test]
    fn knn_hand_checked() {
        let base = ds(&[&[0.0], &[10.0], &[20.0]]);
        let q = ds(&[&[12.0], &[20.0]]);
        let gt = brute_force_knn(&base, &q, 2).unwrap();
        assert_eq!(gt.ids[0], vec![1, 2]);
        assert_eq!(gt.ids[1][0], 2);
        assert_eq!(gt.sq_dists.as_ref().unwrap()[1][0], 0.0);
        assert!(brute_force_knn(&base, &ds(&[&[1.0, 2.0]]), 1).is_err());
        assert!(brute_force_knn(&base, &q, 4).is_err());
    }

    #[test]
    fn knn_ties_by_id() {
        let base = ds(&[&[1.0], &[-1.0], &[1.0], &[0.0]]);
        let gt = brute_force_knn(&base, &ds(&[&[0.0]]), 4).unwrap();
        assert_eq!(gt.ids[0], vec![3, 0, 1, 2]);
    }

    #[test]
    fn knn_matches_second_implementation() {
        let base = crate::vecmath::sample_uniform_ball(50, 4, 1.0, 17).unwrap();
        let queries = crate::vecmath::sample_uniform_ball(20, 4, 1.0, 18).unwrap();
        let k = 7;
        let gt = brute_force_knn(&base, &queries, k).unwrap();
        for q in 0..queries.n() {
            // insertion into a sorted list, iterating base ids from the back
            let mut best: Vec<(f64, u32)> = Vec::new();
            for i in (0..base.n()).rev() {
                let mut s = 0.0f64;
                for j in (0..4).rev() {
                    let diff = queries.row(q)[j] as f64 - base.row(i)[j] as f64;
                    s += diff * diff;
                }
                let pos = best.partition_point(|&(d, id)| d < s || (d == s && id < i as u32));
                best.insert(pos, (s, i as u32));
            }
            let want: Vec<u32> = best[..k].iter().map(|p| p.1).collect();
            assert_eq!(gt.ids[q], want);
            for (slot, &id) in gt.ids[q].iter().enumerate() {
                let recomputed = sq_dist(queries.row(q), base.row(id as usize));
                assert!((gt.sq_dists.as_ref().unwrap()[q][slot] - recomputed).abs() < 1e-12);
            }
        }
    }
}
