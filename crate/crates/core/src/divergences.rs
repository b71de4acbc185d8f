//! Classical divergences and the Poisson / multinomial laws behind Poissonization.
//!
//! KL is available in both bases. The base-2 form is the textbook definition
//! used for the collection functionals; Pinsker and the chi-squared bound
//! only hold as written for the natural-log form, so every call site names
//! its base.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-12;

/// Probability vector with entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(probs, SUM_TOL)
    }

    /// Like [`Distribution::new`] with a caller-chosen tolerance on the total mass.
    pub fn with_tolerance(probs: Vec<f64>, tol: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::BadDistribution("empty".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::BadDistribution(format!("entry {p} is negative or not finite")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::BadDistribution(format!("total mass {total}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Self { probs: vec![1.0 / n as f64; n] }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Joint law of independent draws from `self` and `other` (row-major over `(i, j)`).
    pub fn product(&self, other: &Distribution) -> Distribution {
        let probs = self
            .probs
            .iter()
            .flat_map(|p| other.probs.iter().map(move |q| p * q))
            .collect();
        Distribution { probs }
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Distribution::new(v)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.probs
    }
}

impl AsRef<[f64]> for Distribution {
    fn as_ref(&self) -> &[f64] {
        &self.probs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogBase {
    Two,
    Natural,
}

fn check_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch(p.len(), q.len()));
    }
    Ok(())
}

/// `sum_i (p_i - q_i)^2 / p_i`. Terms with `p_i = q_i = 0` are skipped;
/// `p_i = 0 < q_i` gives `+inf`.
pub fn chi_squared(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len(p, q)?;
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            if qi != 0.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        acc += (pi - qi) * (pi - qi) / pi;
    }
    Ok(acc)
}

/// `sum_i p_i log(p_i / q_i)` in the requested base.
pub fn kl(p: &[f64], q: &[f64], base: LogBase) -> Result<f64> {
    check_len(p, q)?;
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::KlInfinite);
        }
        acc += pi * (pi / qi).ln();
    }
    Ok(match base {
        LogBase::Natural => acc,
        LogBase::Two => acc / std::f64::consts::LN_2,
    })
}

/// `(1/2) sum_i |p_i - q_i|`.
pub fn tv(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len(p, q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// `Poi_mu(m) = e^{-mu} mu^m / m!`.
pub fn poisson_pmf(mu: f64, m: u64) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::BadArguments(format!("Poisson mean must be positive, got {mu}")));
    }
    Ok(poisson_pmf_unchecked(mu, m))
}

pub(crate) fn poisson_pmf_unchecked(mu: f64, m: u64) -> f64 {
    if mu == 0.0 {
        return if m == 0 { 1.0 } else { 0.0 };
    }
    let mf = m as f64;
    (-mu + mf * mu.ln() - ln_gamma(mf + 1.0)).exp()
}

/// `M!/(m_1!...m_N!) prod p_i^{m_i}` for `sum m_i = M`.
pub fn multinomial_pmf(m: &[u64], p: &[f64], total: u64) -> Result<f64> {
    if m.len() != p.len() {
        return Err(Error::LengthMismatch(m.len(), p.len()));
    }
    if m.iter().sum::<u64>() != total {
        return Err(Error::BadArguments(format!(
            "counts sum to {} but total is {total}",
            m.iter().sum::<u64>()
        )));
    }
    let mut log = ln_gamma(total as f64 + 1.0);
    for (&mi, &pi) in m.iter().zip(p) {
        if mi == 0 {
            continue;
        }
        if pi <= 0.0 {
            return Ok(0.0);
        }
        log += mi as f64 * pi.ln() - ln_gamma(mi as f64 + 1.0);
    }
    Ok(log.exp())
}

/// Smallest `K` such that `P(M <= K) >= 1 - tail` for `M ~ Poi(mu)`.
pub fn poisson_cutoff(mu: f64, tail: f64) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    let mut k = 0u64;
    let mut cdf = 0.0;
    loop {
        cdf += poisson_pmf_unchecked(mu, k);
        if cdf >= 1.0 - tail || (k as f64 > mu && poisson_upper_tail(mu, k + 1) < tail) {
            return k;
        }
        k += 1;
    }
}

/// `P(M >= k)` for `M ~ Poi(mu)`, summed directly over the upper tail.
pub fn poisson_upper_tail(mu: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if (k as f64) <= mu {
        let lower: f64 = (0..k).map(|j| poisson_pmf_unchecked(mu, j)).sum();
        return (1.0 - lower).max(0.0);
    }
    let mut acc = 0.0;
    let mut j = k;
    loop {
        let t = poisson_pmf_unchecked(mu, j);
        acc += t;
        if t < acc * 1e-18 || t == 0.0 {
            return acc;
        }
        j += 1;
    }
}
