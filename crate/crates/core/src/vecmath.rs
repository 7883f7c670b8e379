//! Distance kernels, random geometry and the pruning-probability formula.
//!
//! All graph algorithms compare squared Euclidean distances; the square root
//! is only taken where a true distance is reported (pruning traces).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::VectorDataset;
use crate::error::{Error, Result};

/// Squared Euclidean distance with a dimension check.
pub fn sq_euclidean(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(sq_dist(a, b))
}

/// Unchecked squared Euclidean distance, accumulated in double precision.
#[inline]
pub fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let diff = f64::from(*x) - f64::from(*y);
        acc += diff * diff;
    }
    acc
}

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the Gamma function for positive arguments (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Natural log of the complete Beta function B(a, b).
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

const CF_MAX_ITER: usize = 500;
const CF_EPS: f64 = 1e-15;
const CF_TINY: f64 = 1e-300;

/// Regularized incomplete Beta function I_x(a, b), the CDF of Beta(a, b).
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
        return Err(Error::Domain(format!(
            "incomplete beta requires a, b > 0 (a={a}, b={b})"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!(
            "incomplete beta requires x in [0, 1] (x={x})"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    let value = if x > (a + 1.0) / (a + b + 2.0) {
        1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a) / b
    } else {
        ln_front.exp() * beta_cf(x, a, b) / a
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Continued fraction for the incomplete Beta function, modified Lentz.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        // even step
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        // odd step
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Geometry of one pruning step around a center point `p` whose candidates
/// are uniform in a ball of radius ρ₀: `ratio` = ρ_t / ρ₀, the relative
/// distance of the current nearest neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneGeometry {
    ratio: f64,
    dim: usize,
}

impl PruneGeometry {
    pub fn new(ratio: f64, dim: usize) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Domain(format!("ratio must lie in (0, 1), got {ratio}")));
        }
        if dim < 2 {
            return Err(Error::Domain(format!("dimension must be >= 2, got {dim}")));
        }
        Ok(Self { ratio, dim })
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Which Beta argument the pruning-probability formula uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BetaArgument {
    /// `1 − (ratio/2)²`: the cap cut by the bisecting hyperplane at ρ_t/2.
    #[default]
    Bisector,
    /// `1 − ratio²`: the short form, kept for comparison only.
    ShortForm,
}

/// Probability that a candidate uniform in the shell ρ_t < ‖x‖ < ρ₀ is
/// pruned by the nearest neighbor at distance ρ_t (α = 1).
pub fn pruning_probability(g: PruneGeometry) -> f64 {
    pruning_probability_with(g, BetaArgument::Bisector)
}

pub fn pruning_probability_with(g: PruneGeometry, arg: BetaArgument) -> f64 {
    let a = (g.dim as f64 + 1.0) / 2.0;
    let x = match arg {
        BetaArgument::Bisector => 1.0 - (g.ratio / 2.0).powi(2),
        BetaArgument::ShortForm => 1.0 - g.ratio.powi(2),
    };
    // arguments are inside the domain by construction of PruneGeometry
    let outer = reg_inc_beta(x, a, 0.5).expect("beta argument in domain");
    let inner = reg_inc_beta(0.75, a, 0.5).expect("beta argument in domain");
    let rd = g.ratio.powi(g.dim as i32);
    (outer - rd * inner) / (2.0 * (1.0 - rd))
}

/// Lower bound `I_{3/4}((d+1)/2, 1/2) / 2` of the pruning probability.
pub fn pruning_probability_floor(dim: usize) -> f64 {
    reg_inc_beta(0.75, (dim as f64 + 1.0) / 2.0, 0.5).expect("beta argument in domain") / 2.0
}

fn fill_uniform_ball<R: Rng>(rng: &mut R, rho0: f64, out: &mut [f64]) {
    let d = out.len();
    loop {
        let mut norm2 = 0.0;
        for v in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *v = g;
            norm2 += g * g;
        }
        if norm2 > 0.0 {
            let u: f64 = rng.random();
            let radius = rho0 * u.powf(1.0 / d as f64);
            let scale = radius / norm2.sqrt();
            out.iter_mut().for_each(|v| *v *= scale);
            return;
        }
    }
}

/// `n` i.i.d. points uniform in the ball B(0, rho0) ⊂ ℝ^d.
pub fn sample_uniform_ball(n: usize, d: usize, rho0: f64, seed: u64) -> Result<VectorDataset> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParam("n and d must be >= 1".into()));
    }
    if !(rho0 > 0.0 && rho0.is_finite()) {
        return Err(Error::InvalidParam(format!("radius must be > 0, got {rho0}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(n * d);
    let mut buf = vec![0.0f64; d];
    for _ in 0..n {
        fill_uniform_ball(&mut rng, rho0, &mut buf);
        data.extend(buf.iter().map(|&v| v as f32));
    }
    VectorDataset::new(
        n,
        d,
        data,
        format!("uniform-ball(n={n},d={d},rho={rho0},seed={seed})"),
    )
}

/// Monte-Carlo estimate of the single-step prune fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneEstimate {
    pub fraction: f64,
    pub samples: usize,
    /// Binomial standard error √(π(1−π)/samples) at the estimate.
    pub std_err: f64,
}

/// Rejection-sampling estimate of the prune fraction: `p` at the origin,
/// `p*` at distance `ratio` on the last axis, candidates uniform in the unit
/// ball conditioned on ‖p′‖ > ratio, pruned when ‖p − p′‖ > ‖p* − p′‖.
pub fn monte_carlo_prune_fraction(g: PruneGeometry, samples: usize, seed: u64) -> PruneEstimate {
    let d = g.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nearest = vec![0.0f64; d];
    nearest[d - 1] = g.ratio;
    let mut x = vec![0.0f64; d];
    let mut accepted = 0usize;
    let mut pruned = 0usize;
    while accepted < samples {
        fill_uniform_ball(&mut rng, 1.0, &mut x);
        let to_center: f64 = x.iter().map(|v| v * v).sum();
        if to_center <= g.ratio * g.ratio {
            continue;
        }
        accepted += 1;
        let to_nearest: f64 = x.iter().zip(&nearest).map(|(a, b)| (a - b) * (a - b)).sum();
        if to_center > to_nearest {
            pruned += 1;
        }
    }
    let fraction = pruned as f64 / samples as f64;
    PruneEstimate {
        fraction,
        samples,
        std_err: (fraction * (1.0 - fraction) / samples as f64).sqrt(),
    }
}
