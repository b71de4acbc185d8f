//! The hard instance family behind the `Omega(sqrt(N) d / eps^2)` lower bound and the
//! quantitative steps of its proof.
//!
//! Case A is the all-`I/d` collection; case B conjugates `rho_0`, with spectrum
//! `(1 +- 8 eps)/d`, by independent Haar unitaries. Here `M_Tr` means the trace-norm
//! average `(1/N) sum_i ||rho_i - rho_bar||_1`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::collection::{average_state, families, Collection};
use crate::densmat::{haar_unitary, random_density, trace_norm, CMatrix, DensityMatrix, Spectrum, C64};
use crate::divergences::{chi_squared, kl, tv, LogBase};
use crate::error::{Error, Result};
use crate::estimator::OutcomeOracle;
use crate::symmetry::{partitions, schur_weyl_table, SchurWeylMeasure};
use crate::tester::{fixed_copies_test, trial_rng, Decision};

/// Largest total copy number for the exact enumerations.
pub const MAX_ENUM_COPIES: usize = 8;

/// `rho_0 = diag((1 + (-1)^k 8 eps)/d)`, `k = 1..d`.
pub fn make_rho0(d: usize, epsilon: f64) -> Result<DensityMatrix> {
    if d == 0 || d % 2 == 1 {
        return Err(Error::OddDimension(d));
    }
    if !(epsilon >= 0.0 && 8.0 * epsilon <= 1.0) {
        return Err(Error::EpsilonTooLarge(epsilon));
    }
    let diag: Vec<f64> = (1..=d)
        .map(|k| (1.0 + if k % 2 == 0 { 8.0 } else { -8.0 } * epsilon) / d as f64)
        .collect();
    DensityMatrix::diagonal(&diag)
}

/// Spectrum of `rho_0`, sorted decreasingly.
pub fn rho0_spectrum(d: usize, epsilon: f64) -> Result<Spectrum> {
    Ok(make_rho0(d, epsilon)?.spectrum())
}

/// `Theta = sum_k (-1)^k |k><k|` in the eigenbasis of `rho_0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThetaOperator {
    pub d: usize,
}

impl ThetaOperator {
    pub fn sign(&self, k: usize) -> f64 {
        // k is 0-based here; the 1-based label is k + 1
        if (k + 1) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.d, self.d, |r, c| if r == c { C64::new(self.sign(r), 0.0) } else { C64::new(0.0, 0.0) })
    }

    /// `Tr[Theta X]`.
    pub fn expectation(&self, x: &CMatrix) -> f64 {
        (0..self.d).map(|k| self.sign(k) * x[(k, k)].re).sum()
    }
}

/// A sampled case-B collection together with the unitaries that produced it.
#[derive(Debug, Clone)]
pub struct HardInstance {
    pub d: usize,
    pub epsilon: f64,
    pub rho0: DensityMatrix,
    pub unitaries: Vec<CMatrix>,
    pub collection: Collection,
}

impl HardInstance {
    pub fn n(&self) -> usize {
        self.unitaries.len()
    }

    /// Re-checks that the collection is `{U_i rho_0 U_i^dagger}` with uniform weights.
    pub fn check(&self) -> Result<()> {
        let c = &self.collection;
        if c.n() != self.unitaries.len() || c.dim() != self.d {
            return Err(Error::WrongFamily);
        }
        let w = 1.0 / c.n() as f64;
        if c.weights().probs().iter().any(|p| (p - w).abs() > 1e-12) {
            return Err(Error::WrongFamily);
        }
        for (u, s) in self.unitaries.iter().zip(c.states()) {
            let expect = u * self.rho0.matrix() * u.adjoint();
            if (expect - s.matrix()).camax() > 1e-9 {
                return Err(Error::WrongFamily);
            }
        }
        Ok(())
    }
}

pub fn sample_hard_collection<R: Rng + ?Sized>(d: usize, n: usize, epsilon: f64, rng: &mut R) -> Result<HardInstance> {
    let rho0 = make_rho0(d, epsilon)?;
    let unitaries: Vec<CMatrix> = (0..n).map(|_| haar_unitary(d, rng)).collect();
    let states = unitaries.iter().map(|u| rho0.conjugate(u)).collect::<Result<Vec<_>>>()?;
    let collection = Collection::uniform(states)?;
    Ok(HardInstance { d, epsilon, rho0, unitaries, collection })
}

/// Case A: `N` copies of `I/d`.
pub fn case_a_collection(d: usize, n: usize) -> Result<Collection> {
    families::maximally_mixed(d, n)
}

/// `(1/N) sum_i ||rho_i - rho_bar||_1`.
pub fn m_tr_norm(c: &Collection) -> f64 {
    if c.all_identical() {
        return 0.0;
    }
    let avg = average_state(c);
    let n = c.n() as f64;
    c.states().iter().map(|s| trace_norm(&(s.matrix() - avg.matrix()))).sum::<f64>() / n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaReport {
    /// `8 eps - (1/N^2) sum_ij Tr[Theta U_i^dag U_j rho_0 U_j^dag U_i]`
    pub estimate: f64,
    pub m_tr: f64,
}

pub fn theta_lower_estimate(inst: &HardInstance) -> Result<ThetaReport> {
    inst.check()?;
    let theta = ThetaOperator { d: inst.d };
    let n = inst.n();
    let mut acc = 0.0;
    for ui in &inst.unitaries {
        for uj in &inst.unitaries {
            let v = ui.adjoint() * uj;
            acc += theta.expectation(&(&v * inst.rho0.matrix() * v.adjoint()));
        }
    }
    Ok(ThetaReport {
        estimate: 8.0 * inst.epsilon - acc / (n * n) as f64,
        m_tr: m_tr_norm(&inst.collection),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarReport {
    pub frequency: f64,
    pub trials: usize,
    /// The lemma is stated for `N >= 10`.
    pub below_regime: bool,
}

/// Frequency of `M_Tr > 4 eps` over `trials` sampled hard collections.
pub fn far_probability(d: usize, n: usize, epsilon: f64, trials: usize, seed: u64) -> Result<FarReport> {
    make_rho0(d, epsilon)?;
    let hits = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let inst = sample_hard_collection(d, n, epsilon, &mut trial_rng(seed, t))?;
            Ok(m_tr_norm(&inst.collection) > 4.0 * epsilon)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&b| b)
        .count();
    Ok(FarReport { frequency: hits as f64 / trials.max(1) as f64, trials, below_regime: n < 10 })
}

fn check_enum(total: usize) -> Result<()> {
    if total > MAX_ENUM_COPIES {
        return Err(Error::TooLarge { dim: total, limit: MAX_ENUM_COPIES });
    }
    Ok(())
}

/// Schur-Weyl tables for `I/d` and `rho_0` at `n` copies.
fn sw_pair(n: usize, d: usize, epsilon: f64) -> Result<(SchurWeylMeasure, SchurWeylMeasure)> {
    Ok((schur_weyl_table(n, &Spectrum::uniform(d))?, schur_weyl_table(n, &rho0_spectrum(d, epsilon)?)?))
}

/// Product law over the blocks with at least two copies (single copies carry no information).
fn product_law(tables: &[&SchurWeylMeasure]) -> Vec<f64> {
    tables.iter().fold(vec![1.0], |acc, t| {
        let probs = t.probabilities();
        acc.iter().flat_map(|a| probs.iter().map(move |p| a * p)).collect()
    })
}

/// `d_TV` between `prod_i SW^{m_i}_{I/d}` and `prod_i SW^{m_i}_{rho_0}`.
pub fn sw_product_tv(m: &[usize], d: usize, epsilon: f64) -> Result<f64> {
    check_enum(m.iter().sum())?;
    let mut cache: HashMap<usize, (SchurWeylMeasure, SchurWeylMeasure)> = HashMap::new();
    for &k in m.iter().filter(|&&k| k >= 2) {
        if let std::collections::hash_map::Entry::Vacant(e) = cache.entry(k) {
            e.insert(sw_pair(k, d, epsilon)?);
        }
    }
    let blocks: Vec<usize> = m.iter().copied().filter(|&k| k >= 2).collect();
    let a = product_law(&blocks.iter().map(|k| &cache[k].0).collect::<Vec<_>>());
    let b = product_law(&blocks.iter().map(|k| &cache[k].1).collect::<Vec<_>>());
    tv(&a, &b)
}

/// Partitions of `total` into at most `n` parts, each with its multinomial mass summed over
/// all arrangements of the parts among the `n` labels (uniform weights).
fn composition_classes(total: usize, n: usize) -> Vec<(Vec<usize>, f64)> {
    partitions(total, n)
        .into_iter()
        .map(|y| {
            let parts = y.rows().to_vec();
            let mut multiplicity: HashMap<usize, u64> = HashMap::new();
            for &p in &parts {
                *multiplicity.entry(p).or_default() += 1;
            }
            let zeros = (n - parts.len()) as u64;
            let ln_arrangements = ln_factorial(n as u64)
                - ln_factorial(zeros)
                - multiplicity.values().map(|&c| ln_factorial(c)).sum::<f64>();
            let ln_weight = ln_factorial(total as u64)
                - parts.iter().map(|&p| ln_factorial(p as u64)).sum::<f64>()
                - total as f64 * (n as f64).ln();
            (parts, (ln_arrangements + ln_weight).exp())
        })
        .collect()
}

/// `D_Tr(rho_A, rho_B) = E_m d_TV(D_0^m, D_eps^m)` by exact enumeration, `M <= 8`.
pub fn trace_distance_ab(d: usize, n: usize, epsilon: f64, total: usize) -> Result<f64> {
    check_enum(total)?;
    make_rho0(d, epsilon)?;
    let mut acc = 0.0;
    for (parts, w) in composition_classes(total, n) {
        acc += w * sw_product_tv(&parts, d, epsilon)?;
    }
    Ok(acc)
}

/// The lemma's bound `16 eps^2 M / (d sqrt(N))`.
pub fn trace_distance_ab_bound(d: usize, n: usize, epsilon: f64, total: usize) -> f64 {
    16.0 * epsilon * epsilon * total as f64 / (d as f64 * (n as f64).sqrt())
}

/// `(d_chi2(SW^n_{rho_0} || SW^n_{I/d}), exp(256 n^2 eps^4 / d^2) - 1)`.
pub fn chi2_sw_bound_check(n: usize, d: usize, epsilon: f64) -> Result<(f64, f64)> {
    check_enum(n)?;
    if d > 4 {
        return Err(Error::TooLarge { dim: d, limit: 4 });
    }
    let (unif, rho) = sw_pair(n, d, epsilon)?;
    let lhs = chi_squared(&rho.probabilities(), &unif.probabilities())?;
    let e4 = epsilon.powi(4);
    let rhs = (256.0 * (n * n) as f64 * e4 / (d * d) as f64).exp_m1();
    Ok((lhs, rhs))
}

/// The three links of the TV chain for one count vector:
/// `(tv, sqrt(KL/2), sqrt(1/2 sum_i 256 1[m_i>1] m_i^2 eps^4 / d^2))`.
pub fn kl_chain(m: &[usize], d: usize, epsilon: f64) -> Result<(f64, f64, f64)> {
    let t = sw_product_tv(m, d, epsilon)?;
    let mut kl_sum = 0.0;
    let mut bound_sum = 0.0;
    for &k in m.iter().filter(|&&k| k >= 2) {
        let (unif, rho) = sw_pair(k, d, epsilon)?;
        kl_sum += kl(&rho.probabilities(), &unif.probabilities(), LogBase::Natural)?;
        bound_sum += 256.0 * (k * k) as f64 * epsilon.powi(4) / (d * d) as f64;
    }
    Ok((t, (0.5 * kl_sum).sqrt(), (0.5 * bound_sum).sqrt()))
}

/// `M >= 4e-3 sqrt(N) d / eps^2`.
pub fn theorem2_bound(d: usize, n: usize, epsilon: f64) -> f64 {
    4e-3 * (n as f64).sqrt() * d as f64 / (epsilon * epsilon)
}

/// `M >= 0.15 d / eps^2` (single-state regime).
pub fn n2_bound(d: usize, epsilon: f64) -> f64 {
    0.15 * d as f64 / (epsilon * epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatomedioReport {
    pub hypothesis: bool,
    pub m_tr: f64,
    pub candidates: usize,
    /// Smallest `(1/N) sum_i ||rho_i - sigma||_1` over the candidates.
    pub min_distance: f64,
    pub violations: usize,
}

/// If `M_Tr > 4 eps`, every candidate `sigma` must have `(1/N) sum ||rho_i - sigma||_1 > eps`.
/// Candidates: `rho_bar`, each `rho_i`, and `sigma_samples` random full-rank states.
pub fn statomedio_check<R: Rng + ?Sized>(
    c: &Collection,
    epsilon: f64,
    sigma_samples: usize,
    rng: &mut R,
) -> Result<StatomedioReport> {
    let w = 1.0 / c.n() as f64;
    if c.weights().probs().iter().any(|p| (p - w).abs() > 1e-12) {
        return Err(Error::BadArguments("statomedio_check needs uniform weights".into()));
    }
    let m_tr = m_tr_norm(c);
    let hypothesis = m_tr > 4.0 * epsilon;
    let mut candidates = vec![average_state(c)];
    candidates.extend(c.states().iter().cloned());
    candidates.extend((0..sigma_samples).map(|_| random_density(c.dim(), c.dim(), rng)));
    let dists: Vec<f64> = candidates
        .iter()
        .map(|s| c.states().iter().map(|r| trace_norm(&(r.matrix() - s.matrix()))).sum::<f64>() * w)
        .collect();
    let violations = if hypothesis { dists.iter().filter(|&&x| x <= epsilon).count() } else { 0 };
    Ok(StatomedioReport {
        hypothesis,
        m_tr,
        candidates: candidates.len(),
        min_distance: dists.iter().copied().fold(f64::INFINITY, f64::min),
        violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationReport {
    pub success: f64,
    pub helstrom: f64,
}

/// Uses the identity tester on exactly `total` copies to tell case A from case B, with a
/// fresh hard collection per trial; compares the success rate with `(1 + D_Tr(rho_A, rho_B))/2`.
pub fn helstrom_discrimination(
    d: usize,
    n: usize,
    epsilon: f64,
    total: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<DiscriminationReport> {
    let helstrom = 0.5 * (1.0 + trace_distance_ab(d, n, epsilon, total)?);
    let mu = total.max(1) as f64;
    let case_a = OutcomeOracle::new(case_a_collection(d, n)?);
    let correct = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let is_b = t % 2 == 1;
            let rep = if is_b {
                let inst = sample_hard_collection(d, n, epsilon, &mut rng)?;
                fixed_copies_test(&OutcomeOracle::new(inst.collection), total as u64, mu, delta, &mut rng)?
            } else {
                fixed_copies_test(&case_a, total as u64, mu, delta, &mut rng)?
            };
            Ok((rep.decision == Decision::Reject) == is_b)
        })
        .collect::<Result<Vec<bool>>>()?
        .into_iter()
        .filter(|&ok| ok)
        .count();
    Ok(DiscriminationReport { success: correct as f64 / trials.max(1) as f64, helstrom })
}

/// One row of the lower-bound ledger CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub check: String,
    pub d: usize,
    pub n: usize,
    pub epsilon: f64,
    pub m: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

impl BoundRow {
    pub fn new(check: &str, d: usize, n: usize, epsilon: f64, m: usize, lhs: f64, rhs: f64) -> Self {
        Self { check: check.into(), d, n, epsilon, m, lhs, rhs, slack: rhs - lhs }
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// `trace_distance_AB` against its bound over a grid.
pub fn trace_distance_grid(d: usize, ns: &[usize], epsilons: &[f64], max_m: usize) -> Result<Vec<BoundRow>> {
    let mut rows = Vec::new();
    for &n in ns {
        for &eps in epsilons {
            for m in 1..=max_m {
                let lhs = trace_distance_ab(d, n, eps, m)?;
                rows.push(BoundRow::new("trace_distance_ab", d, n, eps, m, lhs, trace_distance_ab_bound(d, n, eps, m)));
            }
        }
    }
    Ok(rows)
}

/// Dense `Theta` sanity: `Theta^2 = I` and `Tr Theta = 0`.
pub fn theta_is_involution(d: usize) -> bool {
    let t = ThetaOperator { d }.matrix();
    let sq = &t * &t;
    (sq - DMatrix::<C64>::identity(d, d)).camax() < 1e-15 && t.trace().norm() < 1e-15
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rho0_examples() {
        let s = rho0_spectrum(2, 1.0 / 16.0).unwrap();
        assert!((s.values()[0] - 0.75).abs() < 1e-15 && (s.values()[1] - 0.25).abs() < 1e-15);
        let flat = make_rho0(4, 0.0).unwrap();
        assert!((flat.matrix() - DensityMatrix::maximally_mixed(4).matrix()).camax() < 1e-15);
        assert_eq!(make_rho0(3, 0.01).err(), Some(Error::OddDimension(3)));
        assert_eq!(make_rho0(2, 0.2).err(), Some(Error::EpsilonTooLarge(0.2)));
        let theta = ThetaOperator { d: 4 };
        assert!((theta.expectation(make_rho0(4, 0.1).unwrap().matrix()) - 0.8).abs() < 1e-12);
        assert!(theta_is_involution(4));
    }

    #[test]
    fn sampled_states_share_the_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = sample_hard_collection(4, 5, 0.05, &mut rng).unwrap();
        let want = inst.rho0.eigenvalues();
        for s in inst.collection.states() {
            let got = s.eigenvalues();
            assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-10));
        }
        inst.check().unwrap();
        let mut broken = inst.clone();
        broken.unitaries.swap(0, 1);
        assert_eq!(theta_lower_estimate(&broken).err(), Some(Error::WrongFamily));
    }

    #[test]
    fn theta_estimate_is_a_lower_bound() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inst = sample_hard_collection(2, 6, 0.05, &mut rng).unwrap();
            let r = theta_lower_estimate(&inst).unwrap();
            assert!(r.estimate <= r.m_tr + 1e-9);
        }
        let flat = sample_hard_collection(2, 4, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let r = theta_lower_estimate(&flat).unwrap();
        assert!(r.estimate <= 1e-12 && r.m_tr < 1e-12);
    }

    #[test]
    fn tv_examples() {
        assert_eq!(trace_distance_ab(2, 4, 0.1, 1).unwrap(), 0.0);
        assert!(trace_distance_ab(2, 4, 0.0, 5).unwrap().abs() < 1e-14);
        assert_eq!(sw_product_tv(&[1, 1, 0], 2, 0.1).unwrap(), 0.0);
        assert!(matches!(trace_distance_ab(2, 2, 0.1, 9), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn composition_weights_sum_to_one() {
        for (total, n) in [(4, 2), (6, 4), (5, 16)] {
            let s: f64 = composition_classes(total, n).iter().map(|(_, w)| w).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chi2_examples() {
        assert!(chi2_sw_bound_check(1, 2, 0.1).unwrap().0.abs() < 1e-15);
        assert!(chi2_sw_bound_check(4, 2, 0.0).unwrap().0.abs() < 1e-15);
        let (_, rhs) = chi2_sw_bound_check(3, 2, 0.1).unwrap();
        assert!((rhs - 0.0593).abs() < 1e-4);
    }

    #[test]
    fn pinsker_link_holds() {
        for m in [vec![2usize, 3], vec![4], vec![2, 2, 2]] {
            let (t, p, _) = kl_chain(&m, 2, 0.05).unwrap();
            assert!(t <= p + 1e-12);
        }
    }

    #[test]
    fn numeric_bounds() {
        assert!((theorem2_bound(2, 16, 0.1) - 3.2).abs() < 1e-12);
        assert!((n2_bound(2, 0.1) - 30.0).abs() < 1e-12);
        assert!((theorem2_bound(2, 32, 0.1) / theorem2_bound(2, 16, 0.1) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn statomedio_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let equal = families::maximally_mixed(2, 4).unwrap();
        let r = statomedio_check(&equal, 0.05, 10, &mut rng).unwrap();
        assert!(!r.hypothesis && r.violations == 0);
        let far = families::basis_states(2, 4).unwrap();
        let r = statomedio_check(&far, 0.05, 100, &mut rng).unwrap();
        assert!(r.hypothesis && r.violations == 0 && r.min_distance > 0.05);
    }
}
