//! The evidence engine: exact binomial tail tests, the supermartingale
//! concentration bound, sample-size planning, and empirical no-signaling
//! checks.
//!
//! The win count of any classical strategy — memory and between-round
//! communication included — is stochastically dominated by a
//! Binomial(N, 3/4) variable, because the conditional win probability of
//! every round given the entire past is at most 3/4. That domination is
//! what makes the exact binomial tail a valid p-value here, with no
//! independence assumption across rounds.
//!
//! P-values live in log space ([`PValue`]); the interesting regimes
//! underflow an `f64` long before they stop being interesting.

use std::fmt;
use std::sync::OnceLock;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::engine::ExperimentLog;
use crate::game::{Outcome, Party, Setting, SettingPair};

/// The classical ceiling, used as the default null rate everywhere.
pub const DEFAULT_NULL_RATE: f64 = 0.75;

/// Default upper limit of the exact sample-size search.
pub const DEFAULT_SEARCH_CAP: u64 = 1_000_000;

/// Pairs with fewer rounds than this make the marginal check unreliable.
pub const MIN_PAIR_COUNT: u64 = 30;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("experiment log has no rounds")]
    EmptyLog,
}

/// A probability carried in natural-log space, so that values far below
/// the `f64` underflow threshold stay meaningful.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PValue {
    ln: f64,
}

impl PValue {
    pub fn one() -> PValue {
        PValue { ln: 0.0 }
    }

    /// Builds from a natural log; tiny positive drift is clamped to 0.
    pub fn from_ln(ln: f64) -> PValue {
        debug_assert!(ln < 1e-9, "log-probability above 0: {ln}");
        PValue { ln: ln.min(0.0) }
    }

    /// The plain value; underflows to 0 below about 1e-308.
    pub fn value(self) -> f64 {
        self.ln.exp()
    }

    pub fn ln(self) -> f64 {
        self.ln
    }

    pub fn log10(self) -> f64 {
        self.ln / std::f64::consts::LN_10
    }

    /// Strict comparison against a significance level, done in log space.
    pub fn is_below(self, alpha: f64) -> bool {
        self.ln < alpha.ln()
    }
}

impl fmt::Display for PValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ln >= -690.0 {
            write!(f, "{:.6e}", self.value())
        } else {
            write!(f, "10^{:.2}", self.log10())
        }
    }
}

impl Serialize for PValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("PValue", 2)?;
        s.serialize_field("value", &self.value())?;
        s.serialize_field("log10", &self.log10())?;
        s.end()
    }
}

/// Compensated (Kahan) accumulation for the tail sums.
#[derive(Clone, Copy, Debug, Default)]
struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    fn add(&mut self, term: f64) {
        let y = term - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

const LN_FACT_TABLE_SIZE: usize = 257;

fn ln_factorial_table() -> &'static [f64; LN_FACT_TABLE_SIZE] {
    static TABLE: OnceLock<[f64; LN_FACT_TABLE_SIZE]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; LN_FACT_TABLE_SIZE];
        for n in 2..LN_FACT_TABLE_SIZE {
            t[n] = t[n - 1] + (n as f64).ln();
        }
        t
    })
}

/// ln(n!), exact accumulation for small n, Stirling series beyond; the
/// series truncation error is below 1e-19 across the switchover.
fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < LN_FACT_TABLE_SIZE {
        return ln_factorial_table()[n as usize];
    }
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    0.5 * (2.0 * std::f64::consts::PI * x).ln()
        + x * (x.ln() - 1.0)
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Exact upper-tail probability P(Bin(n, p0) >= wins).
///
/// Terms are accumulated in linear space relative to the largest one, so
/// the summation is compensated and the result is carried as a log-space
/// [`PValue`] that survives arbitrarily deep tails. Monotone nonincreasing
/// in `wins` at fixed `n`.
pub fn binomial_tail_pvalue(n: u64, wins: u64, p0: f64) -> Result<PValue, StatsError> {
    if wins > n {
        return Err(StatsError::Domain(format!(
            "wins {wins} exceeds rounds {n}"
        )));
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(StatsError::Domain(format!(
            "null rate must be inside (0, 1), got {p0}"
        )));
    }
    if wins == 0 {
        return Ok(PValue::one());
    }

    let q0 = 1.0 - p0;
    let ln_p = p0.ln();
    let ln_q = q0.ln();
    let ln_pmf = |k: u64| ln_choose(n, k) + k as f64 * ln_p + (n - k) as f64 * ln_q;

    // Anchor at the largest term in the tail: the distribution mode, or
    // `wins` itself when the whole tail is past the mode.
    let mode = (((n + 1) as f64) * p0).floor() as u64;
    let anchor_k = mode.clamp(wins, n);
    let anchor_ln = ln_pmf(anchor_k);

    let mut sum = KahanSum::default();
    sum.add(1.0);

    // Upward from the anchor; terms only decay there.
    let mut term = 1.0;
    let mut k = anchor_k;
    while k < n {
        term *= (n - k) as f64 / (k + 1) as f64 * (p0 / q0);
        k += 1;
        sum.add(term);
        if term < sum.value() * 1e-18 {
            break;
        }
    }

    // Downward from the anchor to `wins`; terms only decay there too.
    term = 1.0;
    k = anchor_k;
    while k > wins {
        term *= k as f64 * q0 / ((n - k + 1) as f64 * p0);
        k -= 1;
        sum.add(term);
        if term < sum.value() * 1e-18 {
            // The skipped remainder is geometrically dominated and below
            // the accumulation noise; the tail through `wins` then
            // includes effectively all the mass this side of the anchor.
            break;
        }
    }

    Ok(PValue::from_ln(anchor_ln + sum.value().ln()))
}

/// Supermartingale (Azuma-Hoeffding) bound on the same tail:
/// min(1, exp(-2 N (wins/N - p0)^2)).
///
/// Valid in exactly the situations the exact test is valid; looser, but
/// trivially computed in log space at any scale.
pub fn azuma_bound(n: u64, wins: u64, p0: f64) -> Result<PValue, StatsError> {
    if n == 0 {
        return Err(StatsError::Domain("need at least one round".to_string()));
    }
    if wins > n {
        return Err(StatsError::Domain(format!(
            "wins {wins} exceeds rounds {n}"
        )));
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(StatsError::Domain(format!(
            "null rate must be inside (0, 1), got {p0}"
        )));
    }
    let rate = wins as f64 / n as f64;
    if rate <= p0 {
        return Ok(PValue::one());
    }
    let excess = rate - p0;
    Ok(PValue::from_ln(-2.0 * n as f64 * excess * excess))
}

/// Standard normal quantile via the Acklam rational approximation
/// (absolute error below 1.2e-9, plenty for a planning formula).
fn normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Smallest win count that clears the rate target at `n` rounds:
/// ceil(rate * n), with float noise within 1e-9 of an integer snapped to
/// that integer.
fn required_wins(rate: f64, n: u64) -> u64 {
    let t = rate * n as f64;
    let nearest = t.round();
    if (t - nearest).abs() < 1e-9 {
        nearest as u64
    } else {
        t.ceil() as u64
    }
}

/// Sample-size answer for one assumed win rate and significance level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerReport {
    pub assumed_rate: f64,
    pub alpha: f64,
    pub null_rate: f64,
    pub search_cap: u64,
    /// Smallest N whose exact p-value at ceil(rate * N) wins beats alpha,
    /// or None when no N up to the cap works ("infeasible").
    pub required_n_exact: Option<u64>,
    /// The z-approximation (z * sqrt(p0 q0) / (rate - p0))^2, for the
    /// regimes the exact search cannot reach.
    pub required_n_normal_approx: f64,
}

/// [`required_rounds_with`] at the default null rate and search cap.
pub fn required_rounds(assumed_rate: f64, alpha: f64) -> Result<PowerReport, StatsError> {
    required_rounds_with(assumed_rate, alpha, DEFAULT_NULL_RATE, DEFAULT_SEARCH_CAP)
}

/// How many rounds are needed before a strategy winning at `assumed_rate`
/// rejects the classical bound at level `alpha`.
///
/// The exact search walks N upward evaluating the exact tail at
/// ceil(rate * N) wins; the p-value is sawtoothed in N, so the walk cannot
/// stop early. A normal-approximation requirement is reported alongside.
pub fn required_rounds_with(
    assumed_rate: f64,
    alpha: f64,
    null_rate: f64,
    search_cap: u64,
) -> Result<PowerReport, StatsError> {
    if !(null_rate > 0.0 && null_rate < 1.0) {
        return Err(StatsError::Domain(format!(
            "null rate must be inside (0, 1), got {null_rate}"
        )));
    }
    if !(assumed_rate > null_rate && assumed_rate < 1.0) {
        return Err(StatsError::Domain(format!(
            "assumed rate must be inside ({null_rate}, 1), got {assumed_rate}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::Domain(format!(
            "significance level must be inside (0, 1), got {alpha}"
        )));
    }

    let z = normal_quantile(1.0 - alpha);
    let sigma = (null_rate * (1.0 - null_rate)).sqrt();
    let required_n_normal_approx = (z * sigma / (assumed_rate - null_rate)).powi(2);

    let mut required_n_exact = None;
    for n in 1..=search_cap {
        let wins = required_wins(assumed_rate, n);
        if wins > n {
            continue;
        }
        let p = binomial_tail_pvalue(n, wins, null_rate)?;
        if p.is_below(alpha) {
            required_n_exact = Some(n);
            break;
        }
    }

    Ok(PowerReport {
        assumed_rate,
        alpha,
        null_rate,
        search_cap,
        required_n_exact,
        required_n_normal_approx,
    })
}

/// Both tests applied to one finished experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestReport {
    pub rounds: u64,
    pub wins: u64,
    pub rate: f64,
    pub p_value_exact: PValue,
    pub p_value_azuma: PValue,
    /// The supplied significance levels the exact test rejects at.
    pub reject_at: Vec<f64>,
}

/// Run the exact tail test and the Azuma bound on a log's win count
/// against the classical null rate.
pub fn analyze_log(log: &ExperimentLog, alphas: &[f64]) -> Result<TestReport, StatsError> {
    let rounds = log.records.len() as u64;
    if rounds == 0 {
        return Err(StatsError::EmptyLog);
    }
    let wins = log.summary.wins;
    let p_value_exact = binomial_tail_pvalue(rounds, wins, DEFAULT_NULL_RATE)?;
    let p_value_azuma = azuma_bound(rounds, wins, DEFAULT_NULL_RATE)?;
    let reject_at = alphas
        .iter()
        .copied()
        .filter(|alpha| *alpha > 0.0 && *alpha < 1.0 && p_value_exact.is_below(*alpha))
        .collect();
    Ok(TestReport {
        rounds,
        wins,
        rate: wins as f64 / rounds as f64,
        p_value_exact,
        p_value_azuma,
        reject_at,
    })
}

/// One marginal-invariance comparison: a party's empirical P(outcome = +1)
/// at a fixed own setting, split by the partner's setting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarginalCheck {
    pub party: Party,
    pub own_setting: Setting,
    pub p_plus_when_other_s1: f64,
    pub p_plus_when_other_s2: f64,
    pub rounds_other_s1: u64,
    pub rounds_other_s2: u64,
    pub discrepancy: f64,
    /// Two-proportion z statistic with pooled variance.
    pub z_score: f64,
}

/// Empirical no-signaling verdict over one log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoSignalingReport {
    /// False when some setting pair has fewer than [`MIN_PAIR_COUNT`]
    /// rounds; the checks are then omitted rather than over-read.
    pub sufficient_data: bool,
    pub min_pair_count: u64,
    pub checks: Vec<MarginalCheck>,
    pub max_discrepancy: f64,
    pub max_z_score: f64,
}

fn two_proportion_z(plus_1: u64, n_1: u64, plus_2: u64, n_2: u64) -> (f64, f64, f64, f64) {
    let p1 = plus_1 as f64 / n_1 as f64;
    let p2 = plus_2 as f64 / n_2 as f64;
    let discrepancy = (p1 - p2).abs();
    let pooled = (plus_1 + plus_2) as f64 / (n_1 + n_2) as f64;
    let variance = pooled * (1.0 - pooled) * (1.0 / n_1 as f64 + 1.0 / n_2 as f64);
    let z = if variance > 0.0 {
        discrepancy / variance.sqrt()
    } else if discrepancy == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    (p1, p2, discrepancy, z)
}

/// Estimate each party's outcome marginals conditioned on the partner's
/// setting and report the largest discrepancy. A no-signaling strategy
/// keeps every discrepancy at sampling-noise scale; the cheat fixture
/// does not.
pub fn no_signaling_check(log: &ExperimentLog) -> NoSignalingReport {
    // plus_counts[pair] and totals[pair] per party outcome, pair-indexed.
    let mut totals = [0u64; 4];
    let mut x_plus = [0u64; 4];
    let mut y_plus = [0u64; 4];
    for r in &log.records {
        let i = r.pair.index();
        totals[i] += 1;
        if r.x == Outcome::Plus {
            x_plus[i] += 1;
        }
        if r.y == Outcome::Plus {
            y_plus[i] += 1;
        }
    }
    let min_pair_count = *totals.iter().min().expect("four pairs");
    if min_pair_count < MIN_PAIR_COUNT {
        return NoSignalingReport {
            sufficient_data: false,
            min_pair_count,
            checks: Vec::new(),
            max_discrepancy: 0.0,
            max_z_score: 0.0,
        };
    }

    let pair_index = |a: Setting, b: Setting| -> usize { SettingPair::new(a, b).index() };
    let mut checks = Vec::with_capacity(4);
    for own in Setting::ALL {
        // Alice's marginal at own setting `own`, split by Bob's setting.
        let i1 = pair_index(own, Setting::S1);
        let i2 = pair_index(own, Setting::S2);
        let (p1, p2, discrepancy, z) =
            two_proportion_z(x_plus[i1], totals[i1], x_plus[i2], totals[i2]);
        checks.push(MarginalCheck {
            party: Party::Alice,
            own_setting: own,
            p_plus_when_other_s1: p1,
            p_plus_when_other_s2: p2,
            rounds_other_s1: totals[i1],
            rounds_other_s2: totals[i2],
            discrepancy,
            z_score: z,
        });
        // Bob's marginal at own setting `own`, split by Alice's setting.
        let i1 = pair_index(Setting::S1, own);
        let i2 = pair_index(Setting::S2, own);
        let (p1, p2, discrepancy, z) =
            two_proportion_z(y_plus[i1], totals[i1], y_plus[i2], totals[i2]);
        checks.push(MarginalCheck {
            party: Party::Bob,
            own_setting: own,
            p_plus_when_other_s1: p1,
            p_plus_when_other_s2: p2,
            rounds_other_s1: totals[i1],
            rounds_other_s2: totals[i2],
            discrepancy,
            z_score: z,
        });
    }

    let max_discrepancy = checks.iter().map(|c| c.discrepancy).fold(0.0, f64::max);
    let max_z_score = checks.iter().map(|c| c.z_score).fold(0.0, f64::max);
    NoSignalingReport {
        sufficient_data: true,
        min_pair_count,
        checks,
        max_discrepancy,
        max_z_score,
    }
}
