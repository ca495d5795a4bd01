//! From-scratch statistics used across the crate: two-sample and one-sample
//! Kolmogorov-Smirnov tests, Cohen's d, adjusted skewness, and ordinary least
//! squares on log-log data.
//!
//! The two-sample KS p-value is exact whenever the number of distinct label
//! assignments C(n+m, n) is at most [`EXACT_ENUMERATION_LIMIT`]; beyond that
//! it falls back to Kolmogorov's limiting distribution. Ties are handled by
//! evaluating ECDF differences only at distinct pooled values.

use crate::error::{Error, Result};

/// Largest number of two-sample label assignments the exact p-value will
/// count; larger problems use the asymptotic distribution.
pub const EXACT_ENUMERATION_LIMIT: u64 = 200_000;

/// How a Kolmogorov-Smirnov p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KsMethod {
    /// Exact tail over every way of assigning pooled values to the two
    /// samples; `permutations` is that total count C(n+m, n).
    ExactPermutation { permutations: u64 },
    /// Kolmogorov's limiting distribution of sqrt(nm/(n+m)) * D.
    Asymptotic,
}

/// Outcome of a Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy)]
pub struct KsResult {
    /// Supremum distance between the compared distribution functions.
    pub d: f64,
    /// Probability under the null of a distance at least this large.
    pub p_value: f64,
    /// Which tail computation produced `p_value`.
    pub method: KsMethod,
}

/// Two-sample Kolmogorov-Smirnov test.
///
/// Returns the supremum ECDF distance and a p-value that is exact (a counting
/// argument over all C(n+m, n) assignments of pooled values to samples) when
/// that count is at most [`EXACT_ENUMERATION_LIMIT`], asymptotic otherwise.
///
/// Errors when either sample is empty or contains non-finite values.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    validate_sample("a", a)?;
    validate_sample("b", b)?;
    let n = a.len();
    let m = b.len();
    let runs = tie_runs(a, b);
    let d_num = sup_distance_numerator(&runs, n, m);
    let d = d_num as f64 / (n as f64 * m as f64);
    match binomial_capped(n + m, n, EXACT_ENUMERATION_LIMIT) {
        Some(total) => {
            let below = assignments_below(&runs, n, m, d_num);
            let p = (total - below) as f64 / total as f64;
            Ok(KsResult {
                d,
                p_value: p,
                method: KsMethod::ExactPermutation { permutations: total },
            })
        }
        None => {
            let scale = ((n as f64 * m as f64) / (n + m) as f64).sqrt();
            Ok(KsResult {
                d,
                p_value: kolmogorov_tail(scale * d),
                method: KsMethod::Asymptotic,
            })
        }
    }
}

/// One-sample Kolmogorov-Smirnov test of `sample` against the reference CDF.
///
/// D is evaluated at each sorted sample point against both one-sided ECDF
/// steps. The p-value always uses the asymptotic distribution of sqrt(n) * D.
///
/// Errors when the sample is empty or non-finite, or when `cdf` is not
/// monotone (or leaves [0, 1]) on the sample points.
pub fn ks_one_sample<F>(sample: &[f64], cdf: F) -> Result<KsResult>
where
    F: Fn(f64) -> f64,
{
    validate_sample("sample", sample)?;
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    let mut prev = 0.0f64;
    for (idx, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        if !f.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(&f) {
            return Err(Error::validation(format!(
                "reference cdf returned {f} at {x}, outside [0, 1]"
            )));
        }
        if f < prev - 1e-12 {
            return Err(Error::validation(format!(
                "reference cdf is not monotone at {x}"
            )));
        }
        prev = prev.max(f);
        let upper = ((idx + 1) as f64 / n - f).abs();
        let lower = (idx as f64 / n - f).abs();
        d = d.max(upper.max(lower));
    }
    Ok(KsResult {
        d,
        p_value: kolmogorov_tail(n.sqrt() * d),
        method: KsMethod::Asymptotic,
    })
}

/// Cohen's d with the pooled (n-1 weighted) standard deviation.
///
/// Positive when `a` has the larger mean. Errors when either sample has fewer
/// than two observations or the pooled variance is zero.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    validate_sample("a", a)?;
    validate_sample("b", b)?;
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::validation(
            "cohens_d needs at least two observations per sample",
        ));
    }
    let (ma, va) = mean_and_sample_var(a);
    let (mb, vb) = mean_and_sample_var(b);
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let pooled = (((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0)).sqrt();
    if pooled == 0.0 {
        return Err(Error::validation(
            "zero pooled variance: effect size is undefined",
        ));
    }
    Ok((ma - mb) / pooled)
}

/// Adjusted Fisher-Pearson skewness sqrt(n(n-1))/(n-2) * m3 / m2^(3/2).
///
/// Errors on fewer than three observations or zero variance.
pub fn skewness(sample: &[f64]) -> Result<f64> {
    validate_sample("sample", sample)?;
    let n = sample.len();
    if n < 3 {
        return Err(Error::validation(
            "skewness needs at least three observations",
        ));
    }
    let nf = n as f64;
    let mean = mean(sample);
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    for &x in sample {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= nf;
    m3 /= nf;
    if m2 == 0.0 {
        return Err(Error::validation("zero variance: skewness is undefined"));
    }
    let g1 = m3 / m2.powf(1.5);
    Ok(g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0))
}

/// Least-squares fit of ln(y) against ln(x).
#[derive(Debug, Clone, Copy)]
pub struct OlsFit {
    /// Slope in log space (the power-law exponent).
    pub slope: f64,
    /// Intercept in log space (ln of the power-law prefactor).
    pub intercept: f64,
    /// Coefficient of determination in log space, clamped to [0, 1].
    /// Zero by convention when y is constant.
    pub r_squared: f64,
    /// Standard error of the slope.
    pub slope_se: f64,
    /// Number of points fitted.
    pub n: usize,
}

impl OlsFit {
    /// Confidence interval for the slope at the given two-sided t critical
    /// value (with n - 2 degrees of freedom).
    pub fn slope_interval(&self, t_critical: f64) -> (f64, f64) {
        let half = t_critical * self.slope_se;
        (self.slope - half, self.slope + half)
    }
}

/// Ordinary least squares on (ln x, ln y).
///
/// Errors when lengths differ, fewer than three points are given, any value
/// is non-positive or non-finite, or ln(x) has zero variance.
pub fn ols_loglog(x: &[f64], y: &[f64]) -> Result<OlsFit> {
    if x.len() != y.len() {
        return Err(Error::validation(format!(
            "x and y must have equal length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::validation(
            "log-log fit needs at least three points",
        ));
    }
    for &v in x.iter().chain(y.iter()) {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::validation(format!(
                "log-log fit requires strictly positive finite values, got {v}"
            )));
        }
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = mean(&lx);
    let my = mean(&ly);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in lx.iter().zip(&ly) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    // Identical x values leave only rounding residue in sxx; treat anything
    // at that scale as degenerate rather than dividing by it.
    let sxx_floor = lx.len() as f64 * (f64::EPSILON * (1.0 + mx.abs())).powi(2);
    if sxx <= sxx_floor {
        return Err(Error::validation(
            "zero variance in log x: slope is undefined",
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&a, &b) in lx.iter().zip(&ly) {
        let fit = intercept + slope * a;
        ss_res += (b - fit) * (b - fit);
        ss_tot += (b - my) * (b - my);
    }
    let ss_floor = ly.len() as f64 * (f64::EPSILON * (1.0 + my.abs())).powi(2);
    let r_squared = if ss_tot <= ss_floor {
        0.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    let slope_se = (ss_res / (x.len() - 2) as f64 / sxx).sqrt();
    Ok(OlsFit {
        slope,
        intercept,
        r_squared,
        slope_se,
        n: x.len(),
    })
}

/// CDF of the normal distribution with the given mean and standard deviation.
///
/// Uses a polynomial erf approximation with absolute error below 1.5e-7,
/// which is ample for the p-value comparisons made in this crate. Requires
/// `sd > 0`.
pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    debug_assert!(sd > 0.0, "normal_cdf requires sd > 0");
    let z = (x - mean) / (sd * std::f64::consts::SQRT_2);
    0.5 * (1.0 + erf(z))
}

fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

fn validate_sample(name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::validation(format!("sample `{name}` is empty")));
    }
    if let Some(bad) = xs.iter().find(|v| !v.is_finite()) {
        return Err(Error::validation(format!(
            "sample `{name}` contains non-finite value {bad}"
        )));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn mean_and_sample_var(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    (m, ss / (xs.len() as f64 - 1.0))
}

/// Sorted runs of tied pooled values as (count from a, count from b) pairs.
fn tie_runs(a: &[f64], b: &[f64]) -> Vec<(usize, usize)> {
    let mut sa = a.to_vec();
    sa.sort_by(f64::total_cmp);
    let mut sb = b.to_vec();
    sb.sort_by(f64::total_cmp);
    let mut runs = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    while i < sa.len() || j < sb.len() {
        let v = match (sa.get(i), sb.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        let mut ca = 0;
        while i < sa.len() && sa[i] == v {
            ca += 1;
            i += 1;
        }
        let mut cb = 0;
        while j < sb.len() && sb[j] == v {
            cb += 1;
            j += 1;
        }
        runs.push((ca, cb));
    }
    runs
}

/// Integer numerator of the ECDF supremum distance: max over run boundaries
/// of |i*m - j*n|, so that D = numerator / (n*m) exactly.
fn sup_distance_numerator(runs: &[(usize, usize)], n: usize, m: usize) -> u64 {
    let mut i = 0i64;
    let mut j = 0i64;
    let mut best = 0u64;
    for &(ca, cb) in runs {
        i += ca as i64;
        j += cb as i64;
        let diff = (i * m as i64 - j * n as i64).unsigned_abs();
        best = best.max(diff);
    }
    best
}

/// Number of assignments of the pooled values to samples of sizes n and m
/// whose distance numerator stays strictly below `d_num` at every run
/// boundary. Counting runs over the tie structure, so two assignments that
/// differ only inside a run of equal values are both counted, exactly as the
/// naive enumeration over all C(n+m, n) assignments would.
fn assignments_below(runs: &[(usize, usize)], n: usize, m: usize, d_num: u64) -> u64 {
    let mut counts = vec![0u64; n + 1];
    counts[0] = 1;
    let mut seen = 0usize;
    for &(ca, cb) in runs {
        let r = ca + cb;
        let mut next = vec![0u64; n + 1];
        for (i_before, &ways) in counts.iter().enumerate().take(seen.min(n) + 1) {
            if ways == 0 {
                continue;
            }
            let j_before = seen - i_before;
            for t in 0..=r.min(n - i_before) {
                if r - t > m - j_before {
                    continue;
                }
                let i_after = (i_before + t) as i64;
                let j_after = (j_before + r - t) as i64;
                let diff = (i_after * m as i64 - j_after * n as i64).unsigned_abs();
                if diff >= d_num {
                    continue;
                }
                next[i_before + t] += ways * choose_u64(r, t);
            }
        }
        counts = next;
        seen += r;
    }
    counts[n]
}

/// C(r, t) as u64, saturating instead of overflowing. Every contribution the
/// caller keeps is bounded by the total assignment count, so saturation never
/// fires on a path that matters.
fn choose_u64(r: usize, t: usize) -> u64 {
    let t = t.min(r - t);
    let mut acc: u128 = 1;
    for i in 0..t {
        acc = acc * (r - i) as u128 / (i as u128 + 1);
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// C(n, k) if it is at most `cap`, None otherwise.
fn binomial_capped(n: usize, k: usize, cap: u64) -> Option<u64> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i as u128 + 1);
        if acc > cap as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// Kolmogorov's limiting tail Q(lambda) = 2 * sum (-1)^(j-1) exp(-2 j^2 lambda^2).
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100u32 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
