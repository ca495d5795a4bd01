//! Majority-vote competence arithmetic: the probability that an odd panel of
//! independent voters with identical per-vote accuracy reaches the correct
//! majority decision, the smallest panel achieving a target reliability, and
//! a Monte-Carlo cross-check.
//!
//! The exact tail is computed in log space with a ln-factorial table and
//! compensated summation, which keeps it stable well past n = 10^4.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest panel size `min_jury_size` will search before giving up.
const MAX_SEARCH_N: u64 = (1 << 22) - 1;

/// Probability that a majority of `n` independent voters is correct when each
/// votes correctly with probability `p`.
///
/// `n` must be odd and positive; `p` must lie in [0, 1]. Exact binomial tail
/// sum_{k=(n+1)/2}^{n} C(n,k) p^k (1-p)^(n-k), evaluated in log space.
pub fn majority_prob(n: u64, p: f64) -> Result<f64> {
    if n == 0 || n.is_multiple_of(2) {
        return Err(Error::validation(format!(
            "panel size must be odd and positive, got {n}"
        )));
    }
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!(
            "competence must lie in [0, 1], got {p}"
        )));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let nn = n as usize;
    let mut ln_fact = vec![0.0f64; nn + 1];
    for i in 1..=nn {
        ln_fact[i] = ln_fact[i - 1] + (i as f64).ln();
    }
    let lp = p.ln();
    let lq = (1.0 - p).ln();
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for k in (n / 2 + 1)..=n {
        let ln_term =
            ln_fact[nn] - ln_fact[k as usize] - ln_fact[(n - k) as usize] + k as f64 * lp
                + (n - k) as f64 * lq;
        let term = ln_term.exp();
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    Ok(sum.clamp(0.0, 1.0))
}

/// Smallest odd panel size whose majority reliability reaches `target`.
///
/// Requires competence strictly between 0.5 and 1 and a target strictly
/// between 0 and 1. A target at or below the single-voter competence yields
/// a panel of one. Monotonicity of the majority probability in n (for
/// p > 0.5) justifies the exponential bracket plus binary search.
pub fn min_jury_size(p: f64, target: f64) -> Result<u64> {
    if !p.is_finite() || p <= 0.5 || p >= 1.0 {
        return Err(Error::validation(format!(
            "competence must lie strictly between 0.5 and 1, got {p}"
        )));
    }
    if !target.is_finite() || target <= 0.0 || target >= 1.0 {
        return Err(Error::validation(format!(
            "target reliability must lie strictly between 0 and 1, got {target}"
        )));
    }
    if target <= p {
        return Ok(1);
    }
    let mut lo = 1u64;
    let mut hi = 3u64;
    while majority_prob(hi, p)? < target {
        lo = hi;
        hi = hi * 2 + 1;
        if hi > MAX_SEARCH_N {
            return Err(Error::config(format!(
                "target {target} needs a panel larger than {MAX_SEARCH_N} at competence {p}"
            )));
        }
    }
    while hi - lo > 2 {
        let mut mid = (lo + hi) / 2;
        if mid.is_multiple_of(2) {
            mid += 1;
        }
        if majority_prob(mid, p)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Monte-Carlo estimate of the majority probability from `trials` seeded
/// panel draws. Same contract on `n` and `p` as [`majority_prob`].
pub fn simulate_jury(n: u64, p: f64, trials: u64, seed: u64) -> Result<f64> {
    if n == 0 || n.is_multiple_of(2) {
        return Err(Error::validation(format!(
            "panel size must be odd and positive, got {n}"
        )));
    }
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!(
            "competence must lie in [0, 1], got {p}"
        )));
    }
    if trials == 0 {
        return Err(Error::validation("trial count must be positive"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let need = n / 2 + 1;
    let mut wins = 0u64;
    for _ in 0..trials {
        let mut correct = 0u64;
        for voter in 0..n {
            if rng.gen::<f64>() < p {
                correct += 1;
                if correct >= need {
                    break;
                }
            } else if correct + (n - voter - 1) < need {
                break;
            }
        }
        if correct >= need {
            wins += 1;
        }
    }
    Ok(wins as f64 / trials as f64)
}

/// One cell of an exact-versus-simulated reliability grid.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct JuryGridRow {
    pub n: u64,
    pub p: f64,
    pub exact: f64,
    pub simulated: f64,
}

/// Cross-product grid of exact and simulated majority probabilities. Each
/// cell gets its own derived seed so rows are independent but reproducible.
pub fn jury_grid(ns: &[u64], ps: &[f64], trials: u64, seed: u64) -> Result<Vec<JuryGridRow>> {
    let mut rows = Vec::with_capacity(ns.len() * ps.len());
    let mut cell_seed = seed;
    for &n in ns {
        for &p in ps {
            let exact = majority_prob(n, p)?;
            let simulated = simulate_jury(n, p, trials, cell_seed)?;
            cell_seed = cell_seed.wrapping_add(1);
            rows.push(JuryGridRow {
                n,
                p,
                exact,
                simulated,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num::{BigInt, BigRational, One, ToPrimitive, Zero};
    use proptest::prelude::*;

    fn binomial_big(n: u64, k: u64) -> BigInt {
        let k = k.min(n - k);
        let mut acc = BigInt::one();
        for i in 0..k {
            acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
        }
        acc
    }

    fn rat_pow(base: &BigRational, k: u64) -> BigRational {
        let mut acc = BigRational::one();
        for _ in 0..k {
            acc *= base;
        }
        acc
    }

    /// Exact rational majority probability for p = num/den.
    fn majority_prob_rational(n: u64, num: i64, den: i64) -> f64 {
        let p = BigRational::new(BigInt::from(num), BigInt::from(den));
        let q = BigRational::one() - &p;
        let mut total = BigRational::zero();
        for k in (n / 2 + 1)..=n {
            total += BigRational::from(binomial_big(n, k)) * rat_pow(&p, k) * rat_pow(&q, n - k);
        }
        total.to_f64().unwrap()
    }

    /// Lanczos log-gamma, used only by the regularized incomplete beta oracle.
    fn gammln(x: f64) -> f64 {
        let cof = [
            76.18009172947146,
            -86.50532032941677,
            24.01409824083091,
            -1.231739572450155,
            0.1208650973866179e-2,
            -0.5395239384953e-5,
        ];
        let mut y = x;
        let tmp = x + 5.5 - (x + 0.5) * (x + 5.5).ln();
        let mut ser = 1.000000000190015;
        for c in cof {
            y += 1.0;
            ser += c / y;
        }
        -tmp + (2.5066282746310005 * ser / x).ln()
    }

    fn betacf(a: f64, b: f64, x: f64) -> f64 {
        const FPMIN: f64 = 1e-300;
        let qab = a + b;
        let qap = a + 1.0;
        let qam = a - 1.0;
        let mut c = 1.0;
        let mut d = 1.0 - qab * x / qap;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        d = 1.0 / d;
        let mut h = d;
        for m in 1..=300 {
            let mf = m as f64;
            let m2 = 2.0 * mf;
            let aa = mf * (b - mf) * x / ((qam + m2) * (a + m2));
            d = 1.0 + aa * d;
            if d.abs() < FPMIN {
                d = FPMIN;
            }
            c = 1.0 + aa / c;
            if c.abs() < FPMIN {
                c = FPMIN;
            }
            d = 1.0 / d;
            h *= d * c;
            let aa = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
            d = 1.0 + aa * d;
            if d.abs() < FPMIN {
                d = FPMIN;
            }
            c = 1.0 + aa / c;
            if c.abs() < FPMIN {
                c = FPMIN;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 3e-16 {
                break;
            }
        }
        h
    }

    /// Regularized incomplete beta I_x(a, b); the binomial tail
    /// P(X >= k) for X ~ Bin(n, p) equals I_p(k, n - k + 1).
    fn betai(a: f64, b: f64, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let bt = (gammln(a + b) - gammln(a) - gammln(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
        if x < (a + 1.0) / (a + b + 2.0) {
            bt * betacf(a, b, x) / a
        } else {
            1.0 - bt * betacf(b, a, 1.0 - x) / b
        }
    }

    fn binomial_tail_beta(n: u64, k: u64, p: f64) -> f64 {
        betai(k as f64, (n - k + 1) as f64, p)
    }

    #[test]
    fn single_voter_is_identity() {
        for p in [0.0, 0.1, 0.5, 0.6, 0.97, 1.0] {
            assert_abs_diff_eq!(majority_prob(1, p).unwrap(), p, epsilon = 1e-15);
        }
    }

    #[test]
    fn fair_coin_stays_at_half() {
        for n in (1..=99).step_by(2) {
            assert_abs_diff_eq!(majority_prob(n, 0.5).unwrap(), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn three_voter_worked_example() {
        let got = majority_prob(3, 0.6).unwrap();
        let closed_form = 0.6f64.powi(3) + 3.0 * 0.6f64.powi(2) * 0.4;
        assert_abs_diff_eq!(got, closed_form, epsilon = 1e-15);
        assert_abs_diff_eq!(got, 0.648, epsilon = 1e-12);
    }

    #[test]
    fn matches_exact_rational_oracle() {
        let cases = [
            (3u64, 2i64, 5i64),
            (5, 3, 5),
            (7, 1, 2),
            (21, 51, 100),
            (51, 2, 5),
            (51, 3, 5),
        ];
        for (n, num, den) in cases {
            let got = majority_prob(n, num as f64 / den as f64).unwrap();
            let want = majority_prob_rational(n, num, den);
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn matches_incomplete_beta_oracle_at_scale() {
        for n in [101u64, 1001, 10001] {
            for p in [0.52, 0.6, 0.75] {
                let got = majority_prob(n, p).unwrap();
                let want = binomial_tail_beta(n, n / 2 + 1, p);
                assert_abs_diff_eq!(got, want, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn competent_panels_grow_toward_certainty() {
        // Strictly increasing along odd n for p > 0.5, approaching 1.
        let mut prev = 0.0;
        for n in (1..=501).step_by(2) {
            let cur = majority_prob(n, 0.6).unwrap();
            assert!(cur > prev, "not increasing at n={n}: {cur} <= {prev}");
            prev = cur;
        }
        assert!(prev > 0.999);
        assert_abs_diff_eq!(
            majority_prob(251, 0.6).unwrap(),
            0.9993227802097192,
            epsilon = 1e-10
        );
    }

    #[test]
    fn incompetent_panels_decay_toward_zero() {
        let mut prev = 1.0;
        for n in (1..=501).step_by(2) {
            let cur = majority_prob(n, 0.4).unwrap();
            assert!(cur < prev, "not decreasing at n={n}: {cur} >= {prev}");
            prev = cur;
        }
        assert!(prev < 0.001);
        assert_abs_diff_eq!(
            majority_prob(251, 0.4).unwrap(),
            0.0006772197902808086,
            epsilon = 1e-12
        );
    }

    #[test]
    fn stable_at_very_large_panels() {
        let v = majority_prob(10001, 0.52).unwrap();
        assert!(v.is_finite() && v > 0.99 && v <= 1.0);
        assert_abs_diff_eq!(majority_prob(25001, 0.5).unwrap(), 0.5, epsilon = 1e-9);
        let w = majority_prob(10001, 0.48).unwrap();
        assert!(w.is_finite() && (0.0..0.01).contains(&w));
    }

    #[test]
    fn rejects_invalid_panels() {
        assert!(majority_prob(0, 0.6).is_err());
        assert!(majority_prob(4, 0.6).is_err());
        assert!(majority_prob(3, -0.1).is_err());
        assert!(majority_prob(3, 1.5).is_err());
        assert!(majority_prob(3, f64::NAN).is_err());
    }

    #[test]
    fn min_size_trivial_when_target_already_met() {
        assert_eq!(min_jury_size(0.6, 0.6).unwrap(), 1);
        assert_eq!(min_jury_size(0.9, 0.5).unwrap(), 1);
    }

    #[test]
    fn min_size_small_case_matches_linear_scan() {
        // First odd n with majority_prob(n, 0.9) >= 0.99: 0.9, 0.972, 0.99144.
        assert_eq!(min_jury_size(0.9, 0.99).unwrap(), 5);
        let mut scan = 1;
        while majority_prob(scan, 0.9).unwrap() < 0.99 {
            scan += 2;
        }
        assert_eq!(scan, 5);
    }

    #[test]
    fn min_size_slow_climb_case() {
        // Frozen against the incomplete-beta oracle: 23869 is the first odd
        // panel at competence 0.51 reaching 0.999.
        let n = min_jury_size(0.51, 0.999).unwrap();
        assert_eq!(n, 23869);
        assert!(majority_prob(n, 0.51).unwrap() >= 0.999);
        assert!(majority_prob(n - 2, 0.51).unwrap() < 0.999);
        assert_abs_diff_eq!(
            majority_prob(n, 0.51).unwrap(),
            binomial_tail_beta(n, n / 2 + 1, 0.51),
            epsilon = 1e-9
        );
    }

    #[test]
    fn min_size_rejects_unreachable_inputs() {
        assert!(min_jury_size(0.5, 0.9).is_err());
        assert!(min_jury_size(0.4, 0.9).is_err());
        assert!(min_jury_size(1.0, 0.9).is_err());
        assert!(min_jury_size(0.9, 1.0).is_err());
        assert!(min_jury_size(0.9, 0.0).is_err());
    }

    #[test]
    fn simulation_agrees_with_exact_three_voters() {
        let sim = simulate_jury(3, 0.6, 1_000_000, 11).unwrap();
        assert!((sim - 0.648).abs() <= 0.003, "sim {sim} too far from 0.648");
    }

    #[test]
    fn simulation_agrees_with_exact_incompetent_panel() {
        // Frozen against an independent exact enumeration of the tail.
        let exact = majority_prob(51, 0.4).unwrap();
        assert_abs_diff_eq!(exact, 0.07352920198661998, epsilon = 1e-12);
        let sim = simulate_jury(51, 0.4, 100_000, 7).unwrap();
        assert!(
            (sim - exact).abs() <= 0.0025,
            "sim {sim} too far from exact {exact}"
        );
    }

    #[test]
    fn grid_cells_match_exact_within_three_sigma() {
        let rows = jury_grid(&[1, 3, 11, 51], &[0.3, 0.5, 0.7, 0.9], 20_000, 5).unwrap();
        assert_eq!(rows.len(), 16);
        for row in rows {
            let sigma = (row.exact * (1.0 - row.exact) / 20_000.0).sqrt();
            assert!(
                (row.simulated - row.exact).abs() <= 3.0 * sigma + 1e-9,
                "n={} p={} exact={} sim={}",
                row.n,
                row.p,
                row.exact,
                row.simulated
            );
        }
    }

    #[test]
    fn simulation_rejects_invalid_inputs() {
        assert!(simulate_jury(2, 0.6, 100, 1).is_err());
        assert!(simulate_jury(3, 1.2, 100, 1).is_err());
        assert!(simulate_jury(3, 0.6, 0, 1).is_err());
    }

    proptest! {
        #[test]
        fn mirror_identity(n_half in 0u64..120, p in 0.0f64..=1.0) {
            let n = 2 * n_half + 1;
            let lhs = majority_prob(n, p).unwrap();
            let rhs = majority_prob(n, 1.0 - p).unwrap();
            prop_assert!((lhs + rhs - 1.0).abs() < 1e-10,
                "n={} p={} lhs={} rhs={}", n, p, lhs, rhs);
        }

        #[test]
        fn min_size_is_minimal_and_sufficient(
            p in 0.55f64..0.95,
            frac in 0.05f64..0.95,
        ) {
            // Target above p so the search is non-trivial, below 0.9999 so it
            // stays small.
            let target = p + (0.9999 - p) * frac;
            let n = min_jury_size(p, target).unwrap();
            prop_assert!(majority_prob(n, p).unwrap() >= target);
            if n > 1 {
                prop_assert!(majority_prob(n - 2, p).unwrap() < target);
            }
        }
    }
}
