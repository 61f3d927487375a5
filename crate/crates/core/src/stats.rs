//! Numerical statistics shared by the recall, recognition and similarity
//! analyses.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::{abs, erfc, exp, floor, ln, ln_gamma, sqrt};

const SQRT_2: f64 = core::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("probability {0} outside (0, 1)")]
    Domain(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("zero variance")]
    ZeroVariance,
    #[error("empty sample")]
    Empty,
    #[error("no finite bootstrap replicate")]
    NoValidReplicates,
    #[error("invalid bin count {0}")]
    BadBins(usize),
    #[error("invalid argument: {0}")]
    Invalid(&'static str),
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation followed by one Halley step against
/// `erfc`. The upper half is computed by symmetry, so the function is exactly
/// odd about 0.5 and `probit(0.5) == 0.0`.
pub fn probit(p: f64) -> Result<f64, StatsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::Domain(p));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p > 0.5 {
        return Ok(-lower_probit(1.0 - p));
    }
    Ok(lower_probit(p))
}

// p in (0, 0.5)
fn lower_probit(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let mut x = if p < 0.02425 {
        let q = sqrt(-2.0 * ln(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..2 {
        let e = normal_cdf(x) - p;
        let u = e * SQRT_2PI * exp(x * x / 2.0);
        x -= u / (1.0 + x * u / 2.0);
    }
    x
}

/// Log-linear correction for an empirical rate out of `n` trials: the rate is
/// pulled into `[1/(2n), 1 - 1/(2n)]` so its probit stays finite.
pub fn clamp_rate(p: f64, n: usize) -> f64 {
    if n == 0 {
        return p;
    }
    let lo = 1.0 / (2.0 * n as f64);
    p.clamp(lo, 1.0 - lo)
}

/// `probit(clamp_rate(p, n))`.
pub fn probit_clamped(p: f64, n: usize) -> Result<f64, StatsError> {
    probit(clamp_rate(p, n))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator). NaN for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64)
}

fn check_pair(x: &[f64], y: &[f64], need: usize) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < need {
        return Err(StatsError::TooFew { need, got: x.len() });
    }
    Ok(())
}

/// Product-moment correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 3)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Two-sided p-value for a zero regression slope given correlation `r` over
/// `n` points: `t = r sqrt((n-2)/(1-r^2))` against Student-t with `n - 2`
/// degrees of freedom. `|r| = 1` gives 0.
pub fn wald_p(r: f64, n: usize) -> Result<f64, StatsError> {
    if n < 4 {
        return Err(StatsError::TooFew { need: 4, got: n });
    }
    if !(-1.0..=1.0).contains(&r) {
        return Err(StatsError::Invalid("correlation outside [-1, 1]"));
    }
    if abs(r) >= 1.0 {
        return Ok(0.0);
    }
    let df = (n - 2) as f64;
    let t = r * sqrt(df / (1.0 - r * r));
    Ok(student_t_two_sided_p(t, df))
}

/// `P(|T| >= |t|)` for Student-t with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    reg_inc_beta(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Upper tail `P(X >= x)` of the chi-square distribution with `k` degrees of
/// freedom.
pub fn chi_square_sf(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    reg_upper_gamma(k / 2.0, x / 2.0)
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * ln(x) + b * ln(1.0 - x);
    let front = exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if abs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if abs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if abs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if abs(del - 1.0) < EPS {
            break;
        }
    }
    h
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn reg_upper_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let ln_front = -x + a * ln(x) - ln_gamma(a);
    if x < a + 1.0 {
        // series for P(a, x)
        let mut ap = a;
        let mut sum = 1.0 / a;
        let mut del = sum;
        for _ in 0..10_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if abs(del) < abs(sum) * 1e-16 {
                break;
            }
        }
        (1.0 - sum * exp(ln_front)).clamp(0.0, 1.0)
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if abs(d) < TINY {
                d = TINY;
            }
            c = b + an / c;
            if abs(c) < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if abs(del - 1.0) < 1e-16 {
                break;
            }
        }
        (exp(ln_front) * h).clamp(0.0, 1.0)
    }
}

/// Correlation with its two-sided Wald p-value and a percentile bootstrap
/// interval over resampled pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

/// Pearson correlation of paired samples with Wald p-value and a pair
/// bootstrap CI. Resamples with zero variance are skipped.
pub fn correlate(
    x: &[f64],
    y: &[f64],
    n_resamples: usize,
    alpha: f64,
    seed: u64,
) -> Result<CorrelationResult, StatsError> {
    let r = pearson_r(x, y)?;
    let p_value = wald_p(r, x.len())?;
    let pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    let mut bx = Vec::with_capacity(pairs.len());
    let mut by = Vec::with_capacity(pairs.len());
    let ci = bootstrap_ci(
        &pairs,
        |s| {
            bx.clear();
            by.clear();
            for &(a, b) in s {
                bx.push(a);
                by.push(b);
            }
            pearson_r(&bx, &by).unwrap_or(f64::NAN)
        },
        n_resamples,
        alpha,
        seed,
    )?;
    Ok(CorrelationResult {
        r,
        p_value,
        ci_low: ci.low,
        ci_high: ci.high,
        n: x.len(),
    })
}

/// Percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub low: f64,
    pub high: f64,
    /// Standard deviation of the finite replicates.
    pub std_error: f64,
    /// Replicates whose statistic was finite.
    pub n_valid: usize,
    /// Replicates dropped because the statistic was NaN or infinite.
    pub n_dropped: usize,
}

impl BootstrapCi {
    pub fn dropped_fraction(&self) -> f64 {
        let total = self.n_valid + self.n_dropped;
        if total == 0 {
            0.0
        } else {
            self.n_dropped as f64 / total as f64
        }
    }
}

/// Statistic values over `n_resamples` resamples of `sample` drawn with
/// replacement. Resample `i` uses a ChaCha8 stream `i` under `seed`, so any
/// subset of resamples can be reproduced independently.
pub fn bootstrap_replicates<T: Clone, F>(
    sample: &[T],
    mut statistic: F,
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<f64>, StatsError>
where
    F: FnMut(&[T]) -> f64,
{
    if sample.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = sample.len();
    let mut buf: Vec<T> = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n_resamples);
    for i in 0..n_resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        buf.clear();
        for _ in 0..n {
            buf.push(sample[rng.random_range(0..n)].clone());
        }
        out.push(statistic(&buf));
    }
    Ok(out)
}

/// Percentile bootstrap interval at level `1 - alpha`.
pub fn bootstrap_ci<T: Clone, F>(
    sample: &[T],
    statistic: F,
    n_resamples: usize,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapCi, StatsError>
where
    F: FnMut(&[T]) -> f64,
{
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::Invalid("alpha outside (0, 1)"));
    }
    let reps = bootstrap_replicates(sample, statistic, n_resamples, seed)?;
    summarize_replicates(&reps, alpha)
}

/// Percentile interval and spread of precomputed replicates; non-finite
/// values are dropped and counted.
pub fn summarize_replicates(reps: &[f64], alpha: f64) -> Result<BootstrapCi, StatsError> {
    let mut finite: Vec<f64> = reps.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(StatsError::NoValidReplicates);
    }
    finite.sort_by(f64::total_cmp);
    Ok(BootstrapCi {
        low: quantile_sorted(&finite, alpha / 2.0),
        high: quantile_sorted(&finite, 1.0 - alpha / 2.0),
        std_error: if finite.len() > 1 {
            sample_sd(&finite)
        } else {
            0.0
        },
        n_valid: finite.len(),
        n_dropped: reps.len() - finite.len(),
    })
}

/// Quantile of sorted data with linear interpolation between order statistics.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = floor(h) as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinMode {
    /// Sort by x and split into near-equal groups.
    EqualCount,
    /// Split the observed x-range into equal intervals.
    EqualWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinSpec {
    pub n_bins: usize,
    pub mode: BinMode,
}

impl BinSpec {
    pub fn equal_count(n_bins: usize) -> Self {
        Self {
            n_bins,
            mode: BinMode::EqualCount,
        }
    }

    pub fn equal_width(n_bins: usize) -> Self {
        Self {
            n_bins,
            mode: BinMode::EqualWidth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub x_center: f64,
    pub y_mean: f64,
    /// Sample SD over sqrt(count); NaN for a single member.
    pub y_stderr: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binned {
    pub bins: Vec<Bin>,
    /// Set when equal-width binning met a zero x-range and fell back to one bin.
    pub degenerate: bool,
}

fn make_bin(x_center: f64, ys: &[f64]) -> Bin {
    Bin {
        x_center,
        y_mean: mean(ys),
        y_stderr: sample_sd(ys) / sqrt(ys.len() as f64),
        count: ys.len(),
    }
}

/// Mean and standard error of `y` within bins of `x`.
pub fn bin_means(x: &[f64], y: &[f64], spec: BinSpec) -> Result<Binned, StatsError> {
    check_pair(x, y, 1)?;
    if spec.n_bins == 0 || spec.n_bins > x.len() {
        return Err(StatsError::BadBins(spec.n_bins));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::Invalid("non-finite value"));
    }
    let n = x.len();
    match spec.mode {
        BinMode::EqualCount => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
            let k = spec.n_bins;
            let mut bins = Vec::with_capacity(k);
            for b in 0..k {
                let group = &idx[b * n / k..(b + 1) * n / k];
                let ys: Vec<f64> = group.iter().map(|&i| y[i]).collect();
                let x_lo = x[group[0]];
                let x_hi = x[group[group.len() - 1]];
                bins.push(make_bin((x_lo + x_hi) / 2.0, &ys));
            }
            Ok(Binned {
                bins,
                degenerate: false,
            })
        }
        BinMode::EqualWidth => {
            let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi <= lo {
                return Ok(Binned {
                    bins: alloc::vec![make_bin(lo, y)],
                    degenerate: true,
                });
            }
            let k = spec.n_bins;
            let width = (hi - lo) / k as f64;
            let mut members: Vec<Vec<f64>> = alloc::vec![Vec::new(); k];
            for (xi, yi) in x.iter().zip(y) {
                let b = (floor((xi - lo) / width) as usize).min(k - 1);
                members[b].push(*yi);
            }
            let bins = members
                .iter()
                .enumerate()
                .filter(|(_, ys)| !ys.is_empty())
                .map(|(b, ys)| make_bin(lo + (b as f64 + 0.5) * width, ys))
                .collect();
            Ok(Binned {
                bins,
                degenerate: false,
            })
        }
    }
}

/// Recall predicted for `m` retained clauses by the random-list law,
/// `sqrt(3 pi m / 2)`.
pub fn sqrt_law(m: f64) -> f64 {
    sqrt(1.5 * core::f64::consts::PI * m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// Ordinary least squares fit of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit, StatsError> {
    check_pair(x, y, 3)?;
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - (intercept + slope * a);
            e * e
        })
        .sum();
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr: sqrt(sse / (n - 2.0) / sxx),
    })
}

/// Standardize to mean 0 and sample SD 1.
pub fn zscores(values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFew {
            need: 2,
            got: values.len(),
        });
    }
    let m = mean(values);
    let sd = sample_sd(values);
    if sd.is_nan() || sd <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok(values.iter().map(|v| (v - m) / sd).collect())
}

/// Kendall's tau-b rank correlation (ties handled in both variables).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 2)?;
    let n = x.len();
    let (mut conc, mut disc, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                tx += 1;
            } else if dy == 0.0 {
                ty += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                conc += 1;
            } else {
                disc += 1;
            }
        }
    }
    let denom = sqrt(((conc + disc + tx) * (conc + disc + ty)) as f64);
    if denom == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((conc - disc) as f64 / denom)
}
