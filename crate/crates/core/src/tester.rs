//! Accept/reject identity tests built on the estimator, the Poissonization budget wrapper,
//! majority-vote amplification and a seeded parallel trial harness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collection::{average_state, multinomial_counts, poisson_draw, poissonized_counts, Collection};
use crate::densmat::rank_closeness;
use crate::divergences::{poisson_upper_tail, Distribution};
use crate::error::{Error, Result};
use crate::estimator::{conditional_mean_from, conditional_variance, EstimatorParams, OutcomeOracle, Overlaps};

/// Accept iff the estimate is below this fraction of `delta`.
pub const ACCEPT_FRACTION: f64 = 0.995;

/// `mu >= max(sqrt(b N) / theta, 16 / theta)`.
pub fn required_mu(theta: f64, n: usize, b_const: f64) -> f64 {
    ((b_const * n as f64).sqrt() / theta).max(16.0 / theta)
}

/// `delta` for the trace-distance test.
pub fn trace_delta(epsilon: f64, d: usize) -> f64 {
    8.0 * epsilon * epsilon / d as f64
}

/// `delta` for the rank-`k` test.
pub fn rank_delta(epsilon: f64, k: usize) -> f64 {
    let c = 2.0 - std::f64::consts::SQRT_2;
    16.0 * c * c * epsilon * epsilon / k as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestMode {
    Hs { delta: f64 },
    Trace { epsilon: f64, d: usize },
    RankK { epsilon: f64, k: usize },
}

impl TestMode {
    pub fn delta(&self) -> f64 {
        match *self {
            TestMode::Hs { delta } => delta,
            TestMode::Trace { epsilon, d } => trace_delta(epsilon, d),
            TestMode::RankK { epsilon, k } => rank_delta(epsilon, k),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            TestMode::Hs { delta } => delta > 0.0 && delta.is_finite(),
            TestMode::Trace { epsilon, d } => epsilon > 0.0 && epsilon < 1.0 && d >= 1,
            TestMode::RankK { epsilon, k } => epsilon > 0.0 && k >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::BadArguments(format!("invalid test mode {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub mode: TestMode,
    pub mu_override: Option<f64>,
    pub repetitions: usize,
    pub b_const: f64,
    /// Run each repetition through the `M < 2 mu` budget wrapper.
    pub wrap: bool,
}

impl TestConfig {
    pub fn new(mode: TestMode) -> Self {
        Self { mode, mu_override: None, repetitions: 1, b_const: 1.0, wrap: true }
    }

    pub fn validate(&self) -> Result<()> {
        self.mode.validate()?;
        if self.repetitions == 0 || self.repetitions % 2 == 0 {
            return Err(Error::BadArguments(format!("repetitions must be odd, got {}", self.repetitions)));
        }
        if !(self.b_const > 0.0) {
            return Err(Error::BadArguments(format!("b_const must be positive, got {}", self.b_const)));
        }
        Ok(())
    }

    pub fn mu(&self, n: usize) -> f64 {
        self.mu_override.unwrap_or_else(|| required_mu(self.mode.delta(), n, self.b_const).max(1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub decision: Decision,
    pub estimate: Option<f64>,
    pub m_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    /// Median over the repetitions that produced an estimate.
    pub estimate: Option<f64>,
    pub mu_used: f64,
    pub m_total: u64,
    pub repetitions_detail: Vec<Repetition>,
    /// `eta = min_{rank k} D_Tr(rho_bar, .)` for rank-`k` tests on a known collection.
    pub eta: Option<f64>,
}

/// Anything that can produce one measurement outcome for a count vector.
pub trait OutcomeSource: Sync {
    fn weights(&self) -> &Distribution;
    fn sample(&self, m: &[u64], mu: f64, rng: &mut ChaCha8Rng) -> Result<f64>;
    /// The underlying collection, when known.
    fn collection(&self) -> Option<&Collection> {
        None
    }
}

impl OutcomeSource for OutcomeOracle {
    fn weights(&self) -> &Distribution {
        OutcomeOracle::collection(self).weights()
    }

    fn sample(&self, m: &[u64], mu: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
        OutcomeOracle::sample(self, m, mu, rng)
    }

    fn collection(&self) -> Option<&Collection> {
        Some(OutcomeOracle::collection(self))
    }
}

/// `conditional_mean(m) + sqrt(Var_{rho^m}[D^m]) Z` with `Z` standard normal.
pub struct GaussianSurrogate {
    collection: Collection,
    overlaps: Overlaps,
}

impl GaussianSurrogate {
    pub fn new(collection: Collection) -> Self {
        let overlaps = Overlaps::new(&collection);
        Self { collection, overlaps }
    }
}

impl OutcomeSource for GaussianSurrogate {
    fn weights(&self) -> &Distribution {
        self.collection.weights()
    }

    fn sample(&self, m: &[u64], mu: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
        let params = EstimatorParams::new(mu, self.collection.weights().clone())?;
        let mean = conditional_mean_from(&self.overlaps, m, &params);
        let sd = conditional_variance(&self.overlaps, m, &params).max(0.0).sqrt();
        let z: f64 = StandardNormal.sample(rng);
        Ok(mean + sd * z)
    }

    fn collection(&self) -> Option<&Collection> {
        Some(&self.collection)
    }
}

fn decide(estimate: f64, delta: f64) -> Decision {
    if estimate < ACCEPT_FRACTION * delta {
        Decision::Accept
    } else {
        Decision::Reject
    }
}

/// One Poissonized repetition without a budget.
fn poissonized_once(src: &dyn OutcomeSource, mu: f64, delta: f64, rng: &mut ChaCha8Rng) -> Result<Repetition> {
    let m = poissonized_counts(src.weights().probs(), mu, rng);
    let est = src.sample(m.as_slice(), mu, rng)?;
    Ok(Repetition { decision: decide(est, delta), estimate: Some(est), m_total: m.total() })
}

/// Test on exactly `total` copies: multinomial labels, then one measurement.
pub fn fixed_copies_test(
    src: &dyn OutcomeSource,
    total: u64,
    mu: f64,
    delta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Repetition> {
    let m = multinomial_counts(src.weights().probs(), total, rng);
    let est = src.sample(m.as_slice(), mu, rng)?;
    Ok(Repetition { decision: decide(est, delta), estimate: Some(est), m_total: total })
}

/// Draw `M ~ Poi(mu)`; fail if `M >= 2 mu`, otherwise run `inner` on `M` copies.
pub fn poissonized_budget_wrapper<F>(mu: f64, rng: &mut ChaCha8Rng, inner: F) -> Result<Repetition>
where
    F: FnOnce(u64, &mut ChaCha8Rng) -> Result<Repetition>,
{
    if !(mu >= 1.0) {
        return Err(Error::MuTooSmall(mu));
    }
    let total = poisson_draw(mu, rng);
    if total as f64 >= 2.0 * mu {
        return Ok(Repetition { decision: Decision::Fail, estimate: None, m_total: total });
    }
    inner(total, rng)
}

/// `h(x) = (1 + x) ln(1 + x) - x`.
pub fn chernoff_h(x: f64) -> f64 {
    (1.0 + x) * (1.0 + x).ln() - x
}

/// The wrapper's stated failure bound `e^{-mu h(2)}`.
pub fn fail_probability_bound(mu: f64) -> f64 {
    (-mu * chernoff_h(2.0)).exp()
}

/// The Chernoff bound for the event actually tested, `P(M >= 2 mu) <= e^{-mu h(1)}`.
pub fn chernoff_fail_bound(mu: f64) -> f64 {
    (-mu * chernoff_h(1.0)).exp()
}

/// Exact `P(M >= 2 mu)` for `M ~ Poi(mu)`.
pub fn exact_fail_probability(mu: f64) -> f64 {
    poisson_upper_tail(mu, (2.0 * mu).ceil() as u64)
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

/// Majority vote; `Fail` only when more than half of the repetitions failed.
pub fn amplify(reps: &[Repetition]) -> Decision {
    let count = |d| reps.iter().filter(|r| r.decision == d).count();
    let (acc, rej, fail) = (count(Decision::Accept), count(Decision::Reject), count(Decision::Fail));
    if 2 * fail > reps.len() {
        Decision::Fail
    } else if acc > rej {
        Decision::Accept
    } else {
        Decision::Reject
    }
}

/// The generic threshold test of `M_HS^2` against `delta`.
pub fn identity_test_hs(src: &dyn OutcomeSource, delta: f64, cfg: &TestConfig, rng: &mut ChaCha8Rng) -> Result<Verdict> {
    cfg.validate()?;
    if !(delta > 0.0) {
        return Err(Error::BadArguments(format!("delta must be positive, got {delta}")));
    }
    // required_mu is a lower bound; the wrapper additionally needs mu >= 1
    let mu = cfg.mu_override.unwrap_or_else(|| required_mu(delta, src.weights().len(), cfg.b_const).max(1.0));
    let mut reps = Vec::with_capacity(cfg.repetitions);
    for _ in 0..cfg.repetitions {
        let rep = if cfg.wrap {
            poissonized_budget_wrapper(mu, rng, |total, r| fixed_copies_test(src, total, mu, delta, r))?
        } else {
            poissonized_once(src, mu, delta, rng)?
        };
        reps.push(rep);
    }
    let estimate = median(reps.iter().filter_map(|r| r.estimate).collect());
    Ok(Verdict {
        decision: amplify(&reps),
        estimate,
        mu_used: mu,
        m_total: reps.iter().map(|r| r.m_total).sum(),
        repetitions_detail: reps,
        eta: None,
    })
}

pub fn identity_test_trace(
    src: &dyn OutcomeSource,
    epsilon: f64,
    d: usize,
    cfg: &TestConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Verdict> {
    TestMode::Trace { epsilon, d }.validate()?;
    identity_test_hs(src, trace_delta(epsilon, d), cfg, rng)
}

pub fn identity_test_rank_k(
    src: &dyn OutcomeSource,
    epsilon: f64,
    k: usize,
    cfg: &TestConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Verdict> {
    TestMode::RankK { epsilon, k }.validate()?;
    if let Some(c) = src.collection() {
        if k > c.dim() {
            return Err(Error::BadRank { k, dim: c.dim() });
        }
    }
    let mut v = identity_test_hs(src, rank_delta(epsilon, k), cfg, rng)?;
    v.eta = src.collection().map(|c| rank_closeness(&average_state(c), k)).transpose()?;
    Ok(v)
}

/// Dispatches on `cfg.mode`.
pub fn run_test(src: &dyn OutcomeSource, cfg: &TestConfig, rng: &mut ChaCha8Rng) -> Result<Verdict> {
    match cfg.mode {
        TestMode::Hs { delta } => identity_test_hs(src, delta, cfg, rng),
        TestMode::Trace { epsilon, d } => identity_test_trace(src, epsilon, d, cfg, rng),
        TestMode::RankK { epsilon, k } => identity_test_rank_k(src, epsilon, k, cfg, rng),
    }
}

/// RNG for trial `index` under a master seed.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let ph = k as f64 / nf;
    let den = 1.0 + z * z / nf;
    let centre = (ph + z * z / (2.0 * nf)) / den;
    let half = z * (ph * (1.0 - ph) / nf + z * z / (4.0 * nf * nf)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    pub mu: f64,
    pub m_total: u64,
    pub estimate: Option<f64>,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trials: usize,
    pub accepts: usize,
    pub rejects: usize,
    pub fails: usize,
    pub accept_rate: f64,
    pub wilson: (f64, f64),
    pub records: Vec<TrialRecord>,
}

impl TrialSummary {
    /// One JSON object per trial.
    pub fn to_jsonl(&self) -> String {
        self.records.iter().map(|r| serde_json::to_string(r).expect("plain data") + "\n").collect()
    }
}

/// Runs `trials` independent tests in parallel; trial `t` uses [`trial_rng`]`(seed, t)`.
pub fn run_trials(src: &dyn OutcomeSource, cfg: &TestConfig, trials: usize, seed: u64) -> Result<TrialSummary> {
    let records = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let v = run_test(src, cfg, &mut rng)?;
            Ok(TrialRecord { trial: t, seed, mu: v.mu_used, m_total: v.m_total, estimate: v.estimate, decision: v.decision })
        })
        .collect::<Result<Vec<_>>>()?;
    let count = |d| records.iter().filter(|r| r.decision == d).count();
    let accepts = count(Decision::Accept);
    Ok(TrialSummary {
        trials,
        accepts,
        rejects: count(Decision::Reject),
        fails: count(Decision::Fail),
        accept_rate: accepts as f64 / trials.max(1) as f64,
        wilson: wilson_interval(accepts, trials),
        records,
    })
}

/// Empirical `P(M >= 2 mu)` from `draws` Poisson samples.
pub fn empirical_fail_rate(mu: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = trial_rng(seed, 0);
    let fails = (0..draws).filter(|_| poisson_draw(mu, &mut rng) as f64 >= 2.0 * mu).count();
    fails as f64 / draws as f64
}

/// Exact majority-vote success for `r` independent repetitions of success probability `q`.
pub fn majority_success(q: f64, r: usize) -> f64 {
    (r / 2 + 1..=r)
        .map(|k| {
            let lc = statrs::function::factorial::ln_binomial(r as u64, k as u64);
            (lc + k as f64 * q.ln() + (r - k) as f64 * (1.0 - q).ln()).exp()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collection::families;

    fn rep(d: Decision) -> Repetition {
        Repetition { decision: d, estimate: None, m_total: 0 }
    }

    #[test]
    fn required_mu_examples() {
        assert!((required_mu(0.1, 4, 1.0) - 160.0).abs() < 1e-9);
        assert!((required_mu(0.1, 10_000, 1.0) - 1000.0).abs() < 1e-9);
        for (n, th) in [(4, 0.1), (10_000, 0.1), (400, 0.05)] {
            let r = required_mu(th / 2.0, n, 1.0) / required_mu(th, n, 1.0);
            assert!((r - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_reductions() {
        assert!((trace_delta(0.25, 2) - 0.25).abs() < 1e-15);
        let c = 2.0 - std::f64::consts::SQRT_2;
        assert!((rank_delta(0.25, 1) - c * c).abs() < 1e-15);
        assert!((rank_delta(0.25, 1) - 0.343).abs() < 1e-3);
        assert!((rank_delta(0.3, 3) / trace_delta(0.3, 3) - 2.0 * c * c).abs() < 1e-12);
    }

    #[test]
    fn amplify_examples() {
        use Decision::*;
        assert_eq!(amplify(&[rep(Accept), rep(Accept), rep(Reject)]), Accept);
        assert_eq!(amplify(&vec![rep(Reject); 5]), Reject);
        assert_eq!(amplify(&[rep(Fail), rep(Fail), rep(Accept)]), Fail);
        assert!(majority_success(0.7, 11) >= 0.90);
        assert!((majority_success(0.7, 1) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn wrapper_bounds() {
        // h(2) = 3 ln 3 - 2, so the stated bound at mu = 1 is e^2 / 27
        assert!((fail_probability_bound(1.0) - (2.0f64).exp() / 27.0).abs() < 1e-15);
        let mut rng = trial_rng(0, 0);
        assert_eq!(
            poissonized_budget_wrapper(0.5, &mut rng, |_, _| Ok(rep(Decision::Accept))),
            Err(Error::MuTooSmall(0.5))
        );
        for mu in [1.0, 2.0, 10.0, 40.0] {
            assert!(exact_fail_probability(mu) <= chernoff_fail_bound(mu));
        }
    }

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson_interval(200, 200);
        assert!(hi == 1.0 && lo > 0.98);
        let (lo, hi) = wilson_interval(100, 200);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn huge_delta_accepts() {
        let src = GaussianSurrogate::new(families::basis_states(2, 2).unwrap());
        let cfg = TestConfig::new(TestMode::Hs { delta: 1e3 });
        let v = identity_test_hs(&src, 1e3, &cfg, &mut trial_rng(1, 0)).unwrap();
        assert_eq!(v.decision, Decision::Accept);
    }

    #[test]
    fn trials_are_reproducible() {
        let src = GaussianSurrogate::new(families::basis_states(2, 2).unwrap());
        let cfg = TestConfig::new(TestMode::Trace { epsilon: 0.25, d: 2 });
        let a = run_trials(&src, &cfg, 20, 42).unwrap();
        let b = run_trials(&src, &cfg, 20, 42).unwrap();
        assert_eq!(a, b);
    }
}
