//! Minimal-`mu` scaling study in trace mode.
//!
//! Per cell `(N, d)`: case A is `N` copies of `I/d`, case B one hard collection at the
//! same `eps`, redrawn until `M_Tr > eps` (small `N` can land close to identical). Success at `mu` is `min(P_A[accept], P_B[reject])`, estimated on a fixed
//! set of trial seeds so the curve is monotone up to sampling noise; the minimal `mu`
//! reaching the target is found by doubling, then bisection in `log mu`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{derive_rng, derive_seed, domain, SweepBlock};
use crate::collection::{families, m_tr};
use crate::error::{Error, Result};
use crate::lowerbound::sample_hard_collection;
use crate::tester::{run_trials, GaussianSurrogate, OutcomeSource, TestConfig, TestMode};

const BISECTION_STEPS: usize = 24;
const REL_TOL: f64 = 0.005;
const MAX_REDRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub replicate: usize,
    pub n: usize,
    pub d: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub mu_min: f64,
    pub accept_a: f64,
    pub accept_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeSummary {
    pub axis: String,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub per_replicate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    pub slopes: Vec<SlopeSummary>,
    /// `mu_min(eps) / mu_min(2 eps)` per replicate, at the first grid cell.
    pub doubling_ratios: Vec<f64>,
}

struct Cell {
    a: GaussianSurrogate,
    b: GaussianSurrogate,
    mode: TestMode,
    seed: u64,
    trials: usize,
}

impl Cell {
    fn new(n: usize, d: usize, epsilon: f64, trials: usize, seed: u64) -> Result<Self> {
        let mut rng = derive_rng(seed, domain::SWEEP, 0);
        let far = (0..MAX_REDRAWS)
            .map(|_| sample_hard_collection(d, n, epsilon, &mut rng))
            .find(|h| h.as_ref().map_or(true, |h| m_tr(&h.collection) > epsilon))
            .ok_or_else(|| Error::BadArguments(format!("no case-B draw with M_Tr > {epsilon} at N={n}, d={d}")))??;
        Ok(Self {
            a: GaussianSurrogate::new(families::maximally_mixed(d, n)?),
            b: GaussianSurrogate::new(far.collection),
            mode: TestMode::Trace { epsilon, d },
            seed,
            trials,
        })
    }

    fn rates(&self, mu: f64) -> Result<(f64, f64)> {
        let mut cfg = TestConfig::new(self.mode);
        cfg.mu_override = Some(mu);
        let acc = |src: &dyn OutcomeSource, idx| -> Result<f64> {
            Ok(run_trials(src, &cfg, self.trials, derive_seed(self.seed, domain::SWEEP, idx))?.accept_rate)
        };
        Ok((acc(&self.a, 1)?, acc(&self.b, 2)?))
    }

    fn success(&self, mu: f64) -> Result<f64> {
        let (a, b) = self.rates(mu)?;
        Ok(a.min(1.0 - b))
    }
}

/// Smallest `mu >= 1` with success at least `target`, to relative precision `REL_TOL`.
pub fn minimal_mu(
    n: usize,
    d: usize,
    epsilon: f64,
    trials: usize,
    target: f64,
    budget: f64,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    let cell = Cell::new(n, d, epsilon, trials, seed)?;
    let mut lo = 1.0;
    if cell.success(lo)? >= target {
        let (a, b) = cell.rates(lo)?;
        return Ok((lo, a, b));
    }
    let mut hi = 2.0;
    while cell.success(hi)? < target {
        lo = hi;
        hi *= 2.0;
        if hi > budget {
            return Err(Error::BadArguments(format!("mu budget {budget} exceeded at N={n}, d={d}")));
        }
    }
    for _ in 0..BISECTION_STEPS {
        if hi / lo < 1.0 + REL_TOL {
            break;
        }
        let mid = (lo * hi).sqrt();
        if cell.success(mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (a, b) = cell.rates(hi)?;
    Ok((hi, a, b))
}

/// Least squares of `log mu` on `[1, log N, log d]`; the `d` column is dropped when only
/// one `d` is present. Returns `(slope_N, slope_d)`.
pub fn fit_slopes(cells: &[(usize, usize, f64)]) -> (f64, Option<f64>) {
    let with_d = cells.iter().any(|c| c.1 != cells[0].1);
    let k = if with_d { 3 } else { 2 };
    let x = DMatrix::from_fn(cells.len(), k, |r, c| match c {
        0 => 1.0,
        1 => (cells[r].0 as f64).ln(),
        _ => (cells[r].1 as f64).ln(),
    });
    let y = DVector::from_iterator(cells.len(), cells.iter().map(|c| c.2.ln()));
    let xt = x.transpose();
    let beta = (&xt * &x).lu().solve(&(&xt * y)).expect("grid has at least two distinct N");
    (beta[1], with_d.then(|| beta[2]))
}

/// Mean with a two-sided 95% Student-t interval.
pub fn t_interval(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN, f64::NAN);
    }
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 1.0).expect("dof >= 1").inverse_cdf(0.975);
    let half = t * sd / n.sqrt();
    (mean, mean - half, mean + half)
}

pub fn run_sweep(block: &SweepBlock, seed: u64) -> Result<SweepResult> {
    let mut cells = Vec::new();
    let mut slopes_n = Vec::new();
    let mut slopes_d = Vec::new();
    let mut doubling_ratios = Vec::new();
    let delta = |d: usize| TestMode::Trace { epsilon: block.epsilon, d }.delta();
    for r in 0..block.replicates {
        let mut fit_rows = Vec::new();
        for (ci, (&n, &d)) in block.ns.iter().flat_map(|n| block.ds.iter().map(move |d| (n, d))).enumerate() {
            let cell_seed = derive_seed(seed, domain::SWEEP, ((r as u64) << 16) | ci as u64);
            let (mu_min, accept_a, accept_b) =
                minimal_mu(n, d, block.epsilon, block.trials, block.target, block.mu_budget, cell_seed)?;
            fit_rows.push((n, d, mu_min));
            cells.push(SweepCell { replicate: r, n, d, epsilon: block.epsilon, delta: delta(d), mu_min, accept_a, accept_b });
        }
        let (sn, sd) = fit_slopes(&fit_rows);
        slopes_n.push(sn);
        if let Some(sd) = sd {
            slopes_d.push(sd);
        }
        if 16.0 * block.epsilon <= 1.0 {
            let (n, d) = (block.ns[0], block.ds[0]);
            let cell_seed = derive_seed(seed, domain::SWEEP, ((r as u64) << 16) | 0xffff);
            let mu1 = minimal_mu(n, d, block.epsilon, block.trials, block.target, block.mu_budget, cell_seed)?.0;
            let mu2 = minimal_mu(n, d, 2.0 * block.epsilon, block.trials, block.target, block.mu_budget, cell_seed)?.0;
            doubling_ratios.push(mu1 / mu2);
        }
    }
    let summary = |axis: &str, xs: Vec<f64>| {
        let (mean, ci_lo, ci_hi) = t_interval(&xs);
        SlopeSummary { axis: axis.into(), mean, ci_lo, ci_hi, per_replicate: xs }
    };
    let mut slopes = vec![summary("n", slopes_n)];
    if !slopes_d.is_empty() {
        slopes.push(summary("d", slopes_d));
    }
    Ok(SweepResult { cells, slopes, doubling_ratios })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_is_recovered() {
        let cells: Vec<_> = [2usize, 4, 8, 16]
            .iter()
            .flat_map(|&n| [2usize, 4].map(move |d| (n, d, 3.0 * (n as f64).sqrt() * d as f64)))
            .collect();
        let (sn, sd) = fit_slopes(&cells);
        assert!((sn - 0.5).abs() < 1e-12 && (sd.unwrap() - 1.0).abs() < 1e-12);
        let (sn, sd) = fit_slopes(&[(2, 2, 4.0), (8, 2, 16.0)]);
        assert!((sn - 1.0).abs() < 1e-12 && sd.is_none());
    }

    #[test]
    fn interval_contains_mean() {
        let (m, lo, hi) = t_interval(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        // t_{2, 0.975} = 4.3027
        assert!((hi - m - 4.302_652_7 / 3f64.sqrt()).abs() < 1e-6 && lo < m);
    }

    #[test]
    fn minimal_mu_is_deterministic_and_grows_with_n() {
        let a = minimal_mu(2, 2, 0.1, 200, 2.0 / 3.0, 1e6, 4).unwrap();
        let b = minimal_mu(2, 2, 0.1, 200, 2.0 / 3.0, 1e6, 4).unwrap();
        assert_eq!(a, b);
        let c = minimal_mu(16, 2, 0.1, 200, 2.0 / 3.0, 1e6, 4).unwrap();
        assert!(c.0 > a.0);
        assert!(a.1 >= 2.0 / 3.0 && a.2 <= 1.0 / 3.0);
    }
}
