//! Exact combinatorial and information-theoretic computations.
//!
//! Everything here is a pure function. Binomial tails for `n <= 200` use exact
//! big-integer coefficients; above that, terms are generated by the ratio
//! recurrence outward from the mode and normalised by their total, which keeps
//! relative error near machine precision without ever forming huge factorials.

use std::f64::consts::{E, PI};

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};

/// Row sizes up to this use big-integer binomial coefficients.
pub const BIG_INT_ROW_LIMIT: u64 = 200;

/// Terms smaller than this fraction of the modal term are dropped.
const MODE_RELATIVE_CUTOFF: f64 = 1e-300;

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn binomial_coefficient(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// Natural log of a big unsigned integer, exact to f64 precision at any size.
pub fn ln_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().map_or(f64::NEG_INFINITY, f64::ln);
    }
    let shift = bits - 64;
    let head = (x >> shift).to_f64().expect("64-bit head fits in f64");
    head.ln() + shift as f64 * std::f64::consts::LN_2
}

fn exact_row(n: u64) -> Vec<f64> {
    let mut row = Vec::with_capacity(n as usize + 1);
    let mut c = BigUint::one();
    row.push(1.0);
    for i in 0..n {
        c *= n - i;
        c /= i + 1;
        row.push(c.to_f64().expect("row <= 200 fits in f64"));
    }
    row
}

/// The full Binomial(n, p) probability mass function.
pub fn binomial_pmf(n: u64, p: f64) -> Vec<f64> {
    assert!((0.0..=1.0).contains(&p), "p must lie in [0, 1]");
    let len = n as usize + 1;
    if p == 0.0 || p == 1.0 {
        let mut pmf = vec![0.0; len];
        pmf[if p == 0.0 { 0 } else { n as usize }] = 1.0;
        return pmf;
    }
    if n <= BIG_INT_ROW_LIMIT {
        pmf_exact_coefficients(n, p)
    } else {
        pmf_from_mode(n, p)
    }
}

fn pmf_exact_coefficients(n: u64, p: f64) -> Vec<f64> {
    let q = 1.0 - p;
    exact_row(n)
        .into_iter()
        .enumerate()
        .map(|(i, c)| c * p.powi(i as i32) * q.powi((n as usize - i) as i32))
        .collect()
}

pub(crate) fn pmf_from_mode(n: u64, p: f64) -> Vec<f64> {
    let q = 1.0 - p;
    let len = n as usize + 1;
    let mode = (((n + 1) as f64) * p).floor().min(n as f64) as usize;
    let odds = p / q;
    let mut terms = vec![0.0; len];
    terms[mode] = 1.0;

    let mut t = 1.0;
    for i in mode..n as usize {
        t *= (n as usize - i) as f64 / (i + 1) as f64 * odds;
        if t < MODE_RELATIVE_CUTOFF {
            break;
        }
        terms[i + 1] = t;
    }
    t = 1.0;
    for i in (1..=mode).rev() {
        t *= i as f64 / (n as usize - i + 1) as f64 / odds;
        if t < MODE_RELATIVE_CUTOFF {
            break;
        }
        terms[i - 1] = t;
    }
    let total = compensated_sum(terms.iter().copied());
    terms.iter_mut().for_each(|x| *x /= total);
    terms
}

/// `P(X > j)` for `X ~ Binomial(n, p)`.
pub fn upper_tail(n: u64, j: u64, p: f64) -> f64 {
    if j >= n {
        return 0.0;
    }
    let pmf = binomial_pmf(n, p);
    let split = j as usize + 1;
    // Sum whichever side is the small tail; the other side is its complement.
    if split as f64 > n as f64 * p {
        compensated_sum(pmf[split..].iter().copied()).clamp(0.0, 1.0)
    } else {
        (1.0 - compensated_sum(pmf[..split].iter().copied())).clamp(0.0, 1.0)
    }
}

/// Probability that strictly more than half of `trials` independent
/// Bernoulli(`p`) draws succeed. `trials` must be odd.
pub fn majority_win_prob(trials: u64, p: f64) -> Result<f64> {
    if trials == 0 || trials.is_multiple_of(2) {
        return Err(Error::param(
            "trials",
            format!("must be odd and positive, got {trials} (use majority_win_prob_tiebreak)"),
        ));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param("p", format!("must lie in [0, 1], got {p}")));
    }
    Ok(upper_tail(trials, trials / 2, p))
}

/// Majority of `trials` draws with ties broken by a fair coin; any `trials >= 1`.
pub fn majority_win_prob_tiebreak(trials: u64, p: f64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::param("trials", "must be positive"));
    }
    if trials % 2 == 1 {
        return majority_win_prob(trials, p);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param("p", format!("must lie in [0, 1], got {p}")));
    }
    let pmf = binomial_pmf(trials, p);
    let half = (trials / 2) as usize;
    Ok(compensated_sum(pmf[half + 1..].iter().copied()) + 0.5 * pmf[half])
}

/// Both sides of the binomial/incomplete-beta identity
/// `sum_{j<i<=l} C(l,i) p^i (1-p)^(l-i) = C(l,j+1) (j+1) int_0^p z^j (1-z)^(l-j-1) dz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinomialBetaCheck {
    pub trials: u64,
    pub j: u64,
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// The left side is a floating-point binomial tail; the right side is computed
/// in exact rational arithmetic by expanding `z^j (1-z)^m` and integrating
/// term by term, with `p` taken as the exact rational value of the f64.
pub fn binomial_beta_check(trials: u64, j: u64, p: f64) -> Result<BinomialBetaCheck> {
    if trials == 0 || j >= trials {
        return Err(Error::param("j", format!("must satisfy 0 <= j < l = {trials}, got {j}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param("p", format!("must lie in (0, 1), got {p}")));
    }
    let lhs = upper_tail(trials, j, p);
    let rhs = beta_side_exact(trials, j, p)
        .to_f64()
        .expect("integral is a probability");
    Ok(BinomialBetaCheck {
        trials,
        j,
        p,
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

fn beta_side_exact(trials: u64, j: u64, p: f64) -> BigRational {
    // With p = a/d, every term shares the denominator L * d^(m+j+1), where L
    // is the lcm of the integration denominators j+1..=j+m+1. Summing
    // numerators over that denominator avoids a gcd per term.
    let p = BigRational::from_float(p).expect("finite p");
    let (a, d) = (p.numer().clone(), p.denom().clone());
    let m = trials - j - 1;
    let lcm = (j + 1..=j + m + 1).fold(BigInt::one(), |acc, x| acc.lcm(&BigInt::from(x)));
    let mut numerator = BigInt::zero();
    for i in 0..=m {
        let term = BigInt::from(binomial_coefficient(m, i))
            * num_traits::pow(a.clone(), (j + 1 + i) as usize)
            * num_traits::pow(d.clone(), (m - i) as usize)
            * (&lcm / BigInt::from(j + i + 1));
        if i % 2 == 0 {
            numerator += term;
        } else {
            numerator -= term;
        }
    }
    let front = BigInt::from(binomial_coefficient(trials, j + 1)) * BigInt::from(j + 1);
    let denominator = lcm * num_traits::pow(d, (m + j + 1) as usize);
    BigRational::new(numerator * front, denominator)
}

/// Worst case over a grid of the binomial/beta identity.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityGridReport {
    pub max_trials: u64,
    pub probabilities: Vec<f64>,
    pub cases: usize,
    pub max_gap: f64,
    pub worst: Option<BinomialBetaCheck>,
}

pub fn identity_grid(max_trials: u64, probabilities: &[f64]) -> Result<IdentityGridReport> {
    let mut worst: Option<BinomialBetaCheck> = None;
    let mut cases = 0;
    for trials in 1..=max_trials {
        for j in 0..trials {
            for &p in probabilities {
                let check = binomial_beta_check(trials, j, p)?;
                cases += 1;
                if worst.is_none_or(|w| check.gap > w.gap) {
                    worst = Some(check);
                }
            }
        }
    }
    Ok(IdentityGridReport {
        max_trials,
        probabilities: probabilities.to_vec(),
        cases,
        max_gap: worst.map_or(0.0, |w| w.gap),
        worst,
    })
}

/// `{0.05, 0.10, ..., 0.95}`.
pub fn twentieths_grid() -> Vec<f64> {
    (1..20).map(|i| i as f64 / 20.0).collect()
}

/// Smallest odd integer `>= x` (and at least 1).
pub fn next_odd_at_least(x: f64) -> u64 {
    let k = x.ceil().max(1.0) as u64;
    if k.is_multiple_of(2) {
        k + 1
    } else {
        k
    }
}

/// Sample constant `c = (e*pi/8)(1 + delta)^2` giving multiplicative bias
/// drift `1 + delta` for `k = c / eps^2`.
pub fn drift_constant(delta: f64) -> f64 {
    E * PI / 8.0 * (1.0 + delta).powi(2)
}

/// `P(node supports 0) - P(node supports 1)` after one k-majority update in a
/// configuration with bias `s` out of `n` nodes.
pub fn drift_gap(n: u64, s: u64, epsilon: f64, k: u64) -> Result<f64> {
    if n == 0 || s > n {
        return Err(Error::param("s", format!("must satisfy 0 <= s <= n = {n}, got {s}")));
    }
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::param("epsilon", format!("must lie in (0, 1/2], got {epsilon}")));
    }
    let shift = epsilon * s as f64 / n as f64;
    let toward_zero = majority_win_prob(k, 0.5 + shift)?;
    let toward_one = majority_win_prob(k, 0.5 - shift)?;
    Ok(toward_zero - toward_one)
}

/// Exhaustive check of `drift_gap(n, s, eps, k) >= (1 + delta) s / n` over
/// every integer `1 <= s <= n / (2 sqrt(c))`.
#[derive(Debug, Clone, Serialize)]
pub struct DriftReport {
    pub delta: f64,
    pub epsilon: f64,
    pub n: u64,
    pub c: f64,
    pub k: u64,
    pub s_max: u64,
    /// Minimum over `s` of `drift_gap / ((1 + delta) s / n)`.
    pub min_ratio: f64,
    pub worst_s: u64,
    pub holds: bool,
}

pub fn drift_check(delta: f64, epsilon: f64, n: u64) -> Result<DriftReport> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::param("delta", format!("must be positive, got {delta}")));
    }
    let c = drift_constant(delta);
    let k = next_odd_at_least(c / (epsilon * epsilon));
    let s_max = (n as f64 / (2.0 * c.sqrt())).floor() as u64;
    let mut min_ratio = f64::INFINITY;
    let mut worst_s = 0;
    for s in 1..=s_max {
        let gap = drift_gap(n, s, epsilon, k)?;
        let ratio = gap / ((1.0 + delta) * s as f64 / n as f64);
        if ratio < min_ratio {
            min_ratio = ratio;
            worst_s = s;
        }
    }
    Ok(DriftReport {
        delta,
        epsilon,
        n,
        c,
        k,
        s_max,
        min_ratio,
        worst_s,
        holds: s_max == 0 || min_ratio >= 1.0,
    })
}

/// `C(2r, r)` bracketed by `4^r / sqrt(pi r) * exp(-1/(8r))` and
/// `4^r / sqrt(pi r) * exp(-1/(9r))`.
#[derive(Debug, Clone, Serialize)]
pub struct CentralBinomial {
    pub r: u64,
    #[serde(serialize_with = "serialize_biguint")]
    pub exact: BigUint,
    pub lower: f64,
    pub upper: f64,
    pub ln_lower: f64,
    pub ln_exact: f64,
    pub ln_upper: f64,
}

fn serialize_biguint<S: serde::Serializer>(x: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

impl CentralBinomial {
    /// Compared in log space so the check survives `r` beyond f64 range.
    pub fn holds(&self) -> bool {
        self.ln_lower <= self.ln_exact && self.ln_exact <= self.ln_upper
    }
}

fn ln_central_scale(r: u64) -> f64 {
    let r = r as f64;
    r * 4f64.ln() - 0.5 * (PI * r).ln()
}

pub fn central_binomial_check(r: u64) -> Result<CentralBinomial> {
    if r == 0 {
        return Err(Error::param("r", "must be at least 1"));
    }
    let exact = binomial_coefficient(2 * r, r);
    let base = ln_central_scale(r);
    let ln_lower = base - 1.0 / (8.0 * r as f64);
    let ln_upper = base - 1.0 / (9.0 * r as f64);
    Ok(CentralBinomial {
        r,
        ln_exact: ln_biguint(&exact),
        exact,
        lower: ln_lower.exp(),
        upper: ln_upper.exp(),
        ln_lower,
        ln_upper,
    })
}

/// The bracket with positive exponents, `exp(1/(9r))` below and `exp(1/(8r))`
/// above. It is wrong already at `r = 1`; kept so the failure stays documented.
pub fn unsigned_exponent_bracket_holds(r: u64) -> bool {
    let exact = ln_biguint(&binomial_coefficient(2 * r, r));
    let base = ln_central_scale(r);
    let lower = base + 1.0 / (9.0 * r as f64);
    let upper = base + 1.0 / (8.0 * r as f64);
    lower <= exact && exact <= upper
}

/// Bernoulli KL divergence `D(p || q)` in nats.
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64> {
    for (name, v) in [("p", p), ("q", q)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::domain("kl_bernoulli", format!("{name} must lie in (0, 1), got {v}")));
        }
    }
    Ok(p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln())
}

/// Minimum rounds for the two-party noisy bit problem.
///
/// The output distributions of the listening party must be at KL distance at
/// least `D(p || q)` with `p = 1/4 - delta/4`, `q = 5 delta`, while each round
/// over the channel adds at most `D(1/2 + eps || 1/2 - eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoPartyBound {
    pub delta: f64,
    pub epsilon: f64,
    pub p: f64,
    pub q: f64,
    /// `D(p || q)`, the divergence the view must carry.
    pub divergence: f64,
    /// Per-round divergence cap `D(1/2 + eps || 1/2 - eps)`.
    pub per_round_cap: f64,
    /// Looser cap `2 ln((1 + 2 eps) / (1 - 2 eps))`, linear in `eps`.
    pub log_ratio_cap: f64,
    /// `divergence / per_round_cap` before rounding.
    pub rounds_bound: f64,
    pub t_min: u64,
}

pub fn two_party_min_rounds(delta: f64, epsilon: f64) -> Result<TwoPartyBound> {
    if !(delta > 0.0 && delta < 1.0 / 21.0) {
        return Err(Error::domain("two_party_min_rounds", format!("delta must lie in (0, 1/21), got {delta}")));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::domain("two_party_min_rounds", format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    let p = 0.25 - delta / 4.0;
    let q = 5.0 * delta;
    let divergence = kl_bernoulli(p, q)?;
    let per_round_cap = kl_bernoulli(0.5 + epsilon, 0.5 - epsilon)?;
    if !(per_round_cap > 0.0 && per_round_cap.is_finite()) {
        return Err(Error::domain("two_party_min_rounds", "epsilon too small for a finite bound"));
    }
    let rounds_bound = divergence / per_round_cap;
    Ok(TwoPartyBound {
        delta,
        epsilon,
        p,
        q,
        divergence,
        per_round_cap,
        log_ratio_cap: 2.0 * ((1.0 + 2.0 * epsilon) / (1.0 - 2.0 * epsilon)).ln(),
        rounds_bound,
        t_min: (rounds_bound.ceil() as u64).max(1),
    })
}
