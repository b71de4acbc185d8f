//! The Poissonized estimator `D` of the mean squared Hilbert-Schmidt distance.
//!
//! Given counts `m`, the observable is
//! `D^m = sum_i a_i O_ii + sum_{i<j} b_ij O_ij` with
//! `a_i = 2 m_i (m_i - 1)(1 - p_i) / (mu^2 p_i)` and `b_ij = -4 m_i m_j / mu^2`,
//! where `O_ii` averages the transpositions inside block `i` and `O_ij` averages the
//! transpositions between blocks `i` and `j`. Terms whose operator does not exist
//! (`m_i < 2`, or `m_i m_j = 0`) are zero.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collection::{m_hs_sq, Collection};
use crate::densmat::{CMatrix, C64};
use crate::divergences::{poisson_cutoff, poisson_pmf_unchecked, Distribution};
use crate::error::{Error, Result};
use crate::symmetry::DENSE_LIMIT;

/// Frozen constant in `Var[D] <= C N / mu^2 + 16 M_HS^2 / mu`.
pub const VARIANCE_CONSTANT: f64 = 8.0;

/// Loosest Poisson tail accepted by the truncated sums.
pub const MAX_TAIL: f64 = 1e-10;

/// Cap on the number of count vectors enumerated by a truncated sum.
pub const MAX_TERMS: usize = 20_000_000;

/// Eigenvalue clustering tolerance for measurement eigenspaces.
pub const CLUSTER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub mu: f64,
    pub weights: Distribution,
}

impl EstimatorParams {
    pub fn new(mu: f64, weights: Distribution) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::BadArguments(format!("mu must be positive, got {mu}")));
        }
        Ok(Self { mu, weights })
    }

    pub fn for_collection(c: &Collection, mu: f64) -> Result<Self> {
        Self::new(mu, c.weights().clone())
    }

    fn p(&self) -> &[f64] {
        self.weights.probs()
    }
}

/// Coefficient of `O_ii`.
pub fn diag_coefficient(m: u64, p: f64, mu: f64) -> f64 {
    let m = m as f64;
    2.0 * m * (m - 1.0) * (1.0 - p) / (mu * mu * p)
}

/// Coefficient of `O_ij`, `i < j`.
pub fn cross_coefficient(mi: u64, mj: u64, mu: f64) -> f64 {
    -4.0 * (mi * mj) as f64 / (mu * mu)
}

/// The trace functionals every moment formula is built from.
#[derive(Debug, Clone)]
pub struct Overlaps {
    n: usize,
    /// `Tr[rho_i^2]`
    pub purity: Vec<f64>,
    /// `Tr[rho_i^3]`
    pub cube: Vec<f64>,
    /// `Tr[rho_i rho_j]`
    pub pair: DMatrix<f64>,
    /// `Tr[rho_i^2 rho_j]`
    pub sq_pair: DMatrix<f64>,
    triple: Vec<f64>,
}

impl Overlaps {
    pub fn new(c: &Collection) -> Self {
        let n = c.n();
        let mats: Vec<&CMatrix> = c.states().iter().map(|s| s.matrix()).collect();
        let prods: Vec<CMatrix> = (0..n * n).map(|k| mats[k / n] * mats[k % n]).collect();
        // Tr[A B] without forming the product
        let tr2 = |a: &CMatrix, b: &CMatrix| -> C64 { a.iter().zip(b.transpose().iter()).map(|(x, y)| x * y).sum() };
        let mut triple = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    triple[(i * n + j) * n + k] = tr2(&prods[i * n + j], mats[k]).re;
                }
            }
        }
        let pair = DMatrix::from_fn(n, n, |i, j| tr2(mats[i], mats[j]).re);
        let sq_pair = DMatrix::from_fn(n, n, |i, j| triple[(i * n + i) * n + j]);
        Self {
            n,
            purity: (0..n).map(|i| pair[(i, i)]).collect(),
            cube: (0..n).map(|i| triple[(i * n + i) * n + i]).collect(),
            pair,
            sq_pair,
            triple,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `Re Tr[rho_i rho_j rho_k]`.
    pub fn triple(&self, i: usize, j: usize, k: usize) -> f64 {
        self.triple[(i * self.n + j) * self.n + k]
    }
}

fn check_counts(m: &[u64], n: usize) -> Result<()> {
    if m.len() != n {
        return Err(Error::LengthMismatch(m.len(), n));
    }
    Ok(())
}

fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// `Tr[D^m rho^m]` from overlaps alone.
pub fn conditional_mean(c: &Collection, m: &[u64], params: &EstimatorParams) -> Result<f64> {
    check_counts(m, c.n())?;
    Ok(conditional_mean_from(&Overlaps::new(c), m, params))
}

/// Summed in sorted order so that relabeling the blocks leaves the result bit-identical.
pub fn conditional_mean_from(ov: &Overlaps, m: &[u64], params: &EstimatorParams) -> f64 {
    let p = params.p();
    let mu = params.mu;
    let n = ov.n;
    let mut terms = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        if m[i] >= 2 {
            terms.push(diag_coefficient(m[i], p[i], mu) * ov.purity[i]);
        }
        for j in i + 1..n {
            if m[i] > 0 && m[j] > 0 {
                terms.push(cross_coefficient(m[i], m[j], mu) * ov.pair[(i, j)]);
            }
        }
    }
    sorted_sum(terms)
}

/// Which second moment of the block operators to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovKind {
    /// `Var[O_ii]`
    Diag { i: usize },
    /// `Var[O_ij]`
    Cross { i: usize, j: usize },
    /// `Cov[O_ii, O_ij]`
    DiagCross { i: usize, j: usize },
    /// `Cov[O_ij, O_ik]`, block `i` shared
    Shared { i: usize, j: usize, k: usize },
    /// `Cov[O_ij, O_kl]` with disjoint blocks
    Disjoint { i: usize, j: usize, k: usize, l: usize },
}

impl CovKind {
    fn indices(&self) -> Vec<usize> {
        match *self {
            CovKind::Diag { i } => vec![i],
            CovKind::Cross { i, j } | CovKind::DiagCross { i, j } => vec![i, j],
            CovKind::Shared { i, j, k } => vec![i, j, k],
            CovKind::Disjoint { i, j, k, l } => vec![i, j, k, l],
        }
    }

    /// The two block operators whose covariance this is, as `(i, j)` pairs.
    pub fn operators(&self) -> ((usize, usize), (usize, usize)) {
        match *self {
            CovKind::Diag { i } => ((i, i), (i, i)),
            CovKind::Cross { i, j } => ((i, j), (i, j)),
            CovKind::DiagCross { i, j } => ((i, i), (i, j)),
            CovKind::Shared { i, j, k } => ((i, j), (i, k)),
            CovKind::Disjoint { i, j, k, l } => ((i, j), (k, l)),
        }
    }
}

/// Closed-form covariance of two block operators under `rho^m`.
pub fn covariance_primitive(kind: CovKind, m: &[u64], ov: &Overlaps) -> Result<f64> {
    let idx = kind.indices();
    if idx.iter().any(|&x| x >= ov.n) {
        return Err(Error::BadKind(format!("{kind:?}: index out of range for N = {}", ov.n)));
    }
    for (a, &x) in idx.iter().enumerate() {
        if idx[..a].contains(&x) {
            return Err(Error::BadKind(format!("{kind:?}: indices must be distinct")));
        }
    }
    check_counts(m, ov.n)?;
    let ((a, b), (c, d)) = kind.operators();
    for (x, y) in [(a, b), (c, d)] {
        let ok = if x == y { m[x] >= 2 } else { m[x] >= 1 && m[y] >= 1 };
        if !ok {
            return Err(Error::TooFewCopies);
        }
    }
    let t = &ov.pair;
    Ok(match kind {
        CovKind::Diag { i } => var_diag(m[i], ov.purity[i], ov.cube[i]),
        CovKind::Cross { i, j } => var_cross(m[i], m[j], t[(i, j)], ov.sq_pair[(i, j)], ov.sq_pair[(j, i)]),
        CovKind::DiagCross { i, j } => 2.0 * (ov.sq_pair[(i, j)] - ov.purity[i] * t[(i, j)]) / m[i] as f64,
        CovKind::Shared { i, j, k } => (ov.triple(i, j, k) - t[(i, j)] * t[(i, k)]) / m[i] as f64,
        CovKind::Disjoint { .. } => 0.0,
    })
}

fn var_diag(m: u64, purity: f64, cube: f64) -> f64 {
    let m = m as f64;
    let pp = purity * purity;
    (2.0 * (1.0 - pp) + 4.0 * (m - 2.0) * (cube - pp)) / (m * (m - 1.0))
}

fn var_cross(mi: u64, mj: u64, t: f64, a_ij: f64, a_ji: f64) -> f64 {
    let (x, y) = (mi as f64, mj as f64);
    (1.0 + (1.0 - x - y) * t * t + (x - 1.0) * a_ij + (y - 1.0) * a_ji) / (x * y)
}

/// `Var_{rho^m}[D^m]` assembled from the covariance primitives.
pub fn conditional_variance(ov: &Overlaps, m: &[u64], params: &EstimatorParams) -> f64 {
    let p = params.p();
    let mu = params.mu;
    let n = ov.n;
    let t = &ov.pair;
    let a: Vec<f64> = (0..n).map(|i| diag_coefficient(m[i], p[i], mu)).collect();
    let b = |i: usize, j: usize| cross_coefficient(m[i], m[j], mu);
    let mut v = 0.0;
    for i in 0..n {
        if m[i] >= 2 {
            v += a[i] * a[i] * var_diag(m[i], ov.purity[i], ov.cube[i]);
        }
        if m[i] == 0 {
            continue;
        }
        let inv = 1.0 / m[i] as f64;
        for j in 0..n {
            if j == i || m[j] == 0 {
                continue;
            }
            if j > i {
                let bij = b(i, j);
                v += bij * bij * var_cross(m[i], m[j], t[(i, j)], ov.sq_pair[(i, j)], ov.sq_pair[(j, i)]);
            }
            if m[i] >= 2 {
                v += 2.0 * a[i] * b(i, j) * 2.0 * inv * (ov.sq_pair[(i, j)] - ov.purity[i] * t[(i, j)]);
            }
            for k in j + 1..n {
                if k == i || m[k] == 0 {
                    continue;
                }
                v += 2.0 * b(i, j) * b(i, k) * inv * (ov.triple(i, j, k) - t[(i, j)] * t[(i, k)]);
            }
        }
    }
    v
}

/// Per-coordinate cutoffs `m_i <= K_i` with total dropped mass below `tail`.
///
/// The second moment of `D` grows like `m^4`, so each cutoff is pushed out until the
/// `(k+1)^4`-weighted tail is below the same budget as the mass.
pub fn poisson_cutoffs(params: &EstimatorParams, tail: f64) -> Result<Vec<u64>> {
    if !(tail > 0.0 && tail <= MAX_TAIL) {
        return Err(Error::TruncationTooLoose(tail));
    }
    let budget = tail / params.p().len() as f64;
    Ok(params
        .p()
        .iter()
        .map(|&pi| {
            let lam = pi * params.mu;
            let mut k = poisson_cutoff(lam, budget);
            while weighted_tail(lam, k + 1) >= budget {
                k += 1;
            }
            k
        })
        .collect())
}

fn weighted_tail(lam: f64, from: u64) -> f64 {
    let mut acc = 0.0;
    let mut j = from;
    loop {
        let t = poisson_pmf_unchecked(lam, j) * ((j + 1) as f64).powi(4);
        acc += t;
        if (j as f64 > lam && t < acc * 1e-16) || t == 0.0 {
            return acc;
        }
        j += 1;
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    mass: f64,
    mean: f64,
    v1: f64,
    v2: f64,
}

impl std::ops::Add for Sums {
    type Output = Sums;
    fn add(self, o: Sums) -> Sums {
        Sums { mass: self.mass + o.mass, mean: self.mean + o.mean, v1: self.v1 + o.v1, v2: self.v2 + o.v2 }
    }
}

/// Truncated Poisson expectation over count vectors; the first coordinate is split across
/// threads and partial sums are combined in index order.
fn truncated_sums(ov: &Overlaps, params: &EstimatorParams, cut: &[u64], target: f64, want_var: bool) -> Result<Sums> {
    let terms = cut.iter().try_fold(1usize, |acc, &k| acc.checked_mul(k as usize + 1)).unwrap_or(usize::MAX);
    if terms > MAX_TERMS {
        return Err(Error::TooLarge { dim: terms, limit: MAX_TERMS });
    }
    let p = params.p();
    let pmfs: Vec<Vec<f64>> = cut
        .iter()
        .zip(p)
        .map(|(&k, &pi)| (0..=k).map(|j| poisson_pmf_unchecked(pi * params.mu, j)).collect())
        .collect();
    let n = cut.len();
    let parts: Vec<Sums> = (0..=cut[0])
        .into_par_iter()
        .map(|m0| {
            let mut acc = Sums::default();
            let mut m = vec![0u64; n];
            m[0] = m0;
            loop {
                let w: f64 = (0..n).map(|i| pmfs[i][m[i] as usize]).product();
                let cm = conditional_mean_from(ov, &m, params);
                acc.mass += w;
                acc.mean += w * cm;
                if want_var {
                    acc.v1 += w * conditional_variance(ov, &m, params);
                    acc.v2 += w * (cm - target) * (cm - target);
                }
                // odometer over coordinates 1..n
                let mut k = 1;
                while k < n {
                    if m[k] < cut[k] {
                        m[k] += 1;
                        break;
                    }
                    m[k] = 0;
                    k += 1;
                }
                if k == n {
                    return acc;
                }
            }
        })
        .collect();
    Ok(parts.into_iter().fold(Sums::default(), |a, b| a + b))
}

/// `E[D]` by truncated Poisson summation of the conditional means.
pub fn estimator_mean(c: &Collection, params: &EstimatorParams, tail: f64) -> Result<f64> {
    let cut = poisson_cutoffs(params, tail)?;
    Ok(truncated_sums(&Overlaps::new(c), params, &cut, 0.0, false)?.mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub mean: f64,
    pub variance: f64,
    pub v1: f64,
    pub v2: f64,
    pub truncation_mass: f64,
    pub mu: f64,
    pub tail: f64,
    pub cutoffs: Vec<u64>,
    pub instance_hash: String,
}

impl MomentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }
}

/// `V1 = E[Var(D^m)]` and `V2 = E[(Tr[D^m rho^m] - M_HS^2)^2]` by truncated Poisson sums.
pub fn variance_exact(c: &Collection, params: &EstimatorParams, tail: f64) -> Result<MomentReport> {
    let cut = poisson_cutoffs(params, tail)?;
    let target = m_hs_sq(c)?;
    let s = truncated_sums(&Overlaps::new(c), params, &cut, target, true)?;
    Ok(MomentReport {
        mean: s.mean,
        variance: s.v1 + s.v2,
        v1: s.v1,
        v2: s.v2,
        truncation_mass: s.mass,
        mu: params.mu,
        tail,
        cutoffs: cut,
        instance_hash: c.fingerprint(),
    })
}

/// Exact `(V1, V2)` from Poisson factorial moments, no truncation.
pub fn variance_closed_form(c: &Collection, params: &EstimatorParams) -> (f64, f64) {
    let ov = Overlaps::new(c);
    let (p, mu) = (params.p(), params.mu);
    let (pu, t, a) = (&ov.purity, &ov.pair, &ov.sq_pair);
    let n = ov.n;
    let (mut v1, mut v2) = (0.0, 0.0);
    let mu2 = mu * mu;
    for i in 0..n {
        let q = 1.0 - p[i];
        let pp = pu[i] * pu[i];
        v1 += 8.0 * q * q * (1.0 - pp) / mu2 + 16.0 * p[i] * q * q * (ov.cube[i] - pp) / mu;
        v2 += 8.0 * q * q * (1.0 + 2.0 * mu * p[i]) * pp / mu2;
        for j in 0..n {
            if j == i {
                continue;
            }
            let tij = t[(i, j)];
            let w = p[i] * p[j];
            if j > i {
                v1 += 16.0 * w * (1.0 - tij * tij) / mu2
                    + 16.0 * (p[i] * w * (a[(i, j)] - tij * tij) + p[j] * w * (a[(j, i)] - tij * tij)) / mu;
                v2 += 16.0 * (mu * w * (p[i] + p[j]) + w) * tij * tij / mu2;
            }
            v1 -= 32.0 * w * q * (a[(i, j)] - pu[i] * tij) / mu;
            v2 -= 32.0 * w * q * pu[i] * tij / mu;
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                let wk = w * p[k];
                v1 += 16.0 * wk * (ov.triple(i, j, k) - tij * t[(i, k)]) / mu;
                v2 += 16.0 * wk * tij * t[(i, k)] / mu;
            }
        }
    }
    (v1, v2)
}

/// `Var[D] = 8(N-1)/mu^2 + (16/mu) sum_i p_i Tr[rho_i (rho_i - rho_bar)^2]`.
pub fn variance_compact(c: &Collection, params: &EstimatorParams) -> f64 {
    let ov = Overlaps::new(c);
    let (p, mu, n) = (params.p(), params.mu, ov.n);
    let mut s = 0.0;
    for i in 0..n {
        let mut x = ov.cube[i];
        for j in 0..n {
            x -= 2.0 * p[j] * ov.sq_pair[(i, j)];
            for k in 0..n {
                x += p[j] * p[k] * ov.triple(i, j, k);
            }
        }
        s += p[i] * x;
    }
    8.0 * (n as f64 - 1.0) / (mu * mu) + 16.0 * s / mu
}

/// The `1/mu` parts of `(V1, V2)`; the remainder is exactly `8(N-1)/mu^2`.
pub fn variance_leading_order(c: &Collection, params: &EstimatorParams) -> (f64, f64) {
    let (v1, v2) = variance_closed_form(c, params);
    let mu2 = params.mu * params.mu;
    let ov = Overlaps::new(c);
    let p = params.p();
    let n = ov.n;
    let (mut r1, mut r2) = (0.0, 0.0);
    for i in 0..n {
        let q = 1.0 - p[i];
        let pp = ov.purity[i] * ov.purity[i];
        r1 += 8.0 * q * q * (1.0 - pp);
        r2 += 8.0 * q * q * pp;
        for j in i + 1..n {
            let w = p[i] * p[j];
            let tt = ov.pair[(i, j)] * ov.pair[(i, j)];
            r1 += 16.0 * w * (1.0 - tt);
            r2 += 16.0 * w * tt;
        }
    }
    (v1 - r1 / mu2, v2 - r2 / mu2)
}

/// The `1/mu` expressions with the coefficients and index ranges exactly as displayed
/// in the appendix of the source paper (kept for comparison; see `variance_leading_order`).
pub fn variance_leading_order_as_printed(c: &Collection, params: &EstimatorParams) -> (f64, f64) {
    let ov = Overlaps::new(c);
    let (p, mu, n) = (params.p(), params.mu, ov.n);
    let (pu, t, a) = (&ov.purity, &ov.pair, &ov.sq_pair);
    let (mut v1, mut v2) = (0.0, 0.0);
    for i in 0..n {
        let q = 1.0 - p[i];
        v1 += 16.0 * p[i] * q * q * (ov.cube[i] - pu[i] * pu[i]);
        v2 += 16.0 * q * q * p[i] * pu[i] * pu[i];
        for j in 0..n {
            if j == i {
                continue;
            }
            let (w, tij) = (p[i] * p[j], t[(i, j)]);
            v1 += 8.0 * (p[i] * p[j] * p[j] * a[(j, i)] + p[j] * p[i] * p[i] * a[(i, j)] - w * (p[i] + p[j]) * tij * tij);
            v1 -= 32.0 * q * w * (a[(i, j)] - pu[i] * tij);
            v2 += 8.0 * w * (p[i] + p[j]) * tij * tij;
            v2 -= 32.0 * w * q * tij * pu[i];
            for k in 0..n {
                if k != i && k != j {
                    v1 += 8.0 * w * p[k] * (ov.triple(i, j, k) - tij * t[(i, k)]);
                }
                if k != j {
                    v2 += 8.0 * w * p[k] * tij * t[(i, k)];
                }
            }
        }
    }
    (v1 / mu, v2 / mu)
}

/// `C N / mu^2 + 16 M_HS^2 / mu` with the frozen constant.
pub fn variance_bound(n: usize, mu: f64, m_hs_sq: f64) -> f64 {
    VARIANCE_CONSTANT * n as f64 / (mu * mu) + 16.0 * m_hs_sq / mu
}

pub mod dense {
    //! Brute-force operators on `⊗_i (C^d)^{⊗ m_i}` for cross-checking the closed forms.

    use super::*;

    fn layout(m: &[u64], d: usize) -> Result<(Vec<usize>, usize)> {
        let labels: Vec<usize> = m.iter().enumerate().flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize)).collect();
        let mut dim = 1usize;
        for _ in &labels {
            dim = dim.checked_mul(d).filter(|&x| x <= DENSE_LIMIT).ok_or(Error::TooLarge {
                dim: d.saturating_pow(labels.len() as u32),
                limit: DENSE_LIMIT,
            })?;
        }
        Ok((labels, dim))
    }

    /// `sum_{x<y} w(x, y) SWAP_xy` over register pairs.
    fn swap_sum(labels: &[usize], d: usize, dim: usize, w: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
        let l = labels.len();
        let pairs: Vec<(usize, usize, f64)> = (0..l)
            .flat_map(|x| (x + 1..l).map(move |y| (x, y)))
            .map(|(x, y)| (x, y, w(x, y)))
            .filter(|&(_, _, c)| c != 0.0)
            .collect();
        let strides: Vec<usize> = (0..l).map(|r| d.pow((l - 1 - r) as u32)).collect();
        let mut out = DMatrix::zeros(dim, dim);
        for idx in 0..dim {
            for &(x, y, c) in &pairs {
                let dx = idx / strides[x] % d;
                let dy = idx / strides[y] % d;
                let img = idx + dy * strides[x] + dx * strides[y] - dx * strides[x] - dy * strides[y];
                out[(img, idx)] += c;
            }
        }
        out
    }

    /// `O_ij` (or `O_ii`) acting on all registers.
    pub fn block_transposition_avg(i: usize, j: usize, m: &[u64], d: usize) -> Result<DMatrix<f64>> {
        if i >= m.len() || j >= m.len() {
            return Err(Error::BadArguments(format!("block index out of range for N = {}", m.len())));
        }
        let enough = if i == j { m[i] >= 2 } else { m[i] >= 1 && m[j] >= 1 };
        if !enough {
            return Err(Error::TooFewCopies);
        }
        let (labels, dim) = layout(m, d)?;
        let pairs = if i == j { (m[i] * (m[i] - 1) / 2) as f64 } else { (m[i] * m[j]) as f64 };
        Ok(swap_sum(&labels, d, dim, |x, y| {
            let (a, b) = (labels[x], labels[y]);
            if (a == i && b == j) || (a == j && b == i) {
                1.0 / pairs
            } else {
                0.0
            }
        }))
    }

    /// `D^{m,M}` as a dense real symmetric matrix.
    pub fn block_estimator(m: &[u64], params: &EstimatorParams, d: usize) -> Result<DMatrix<f64>> {
        check_counts(m, params.p().len())?;
        let (labels, dim) = layout(m, d)?;
        let p = params.p();
        let mu = params.mu;
        Ok(swap_sum(&labels, d, dim, |x, y| {
            let (a, b) = (labels[x], labels[y]);
            if a == b {
                let pairs = (m[a] * (m[a] - 1) / 2) as f64;
                diag_coefficient(m[a], p[a], mu) / pairs
            } else {
                cross_coefficient(m[a], m[b], mu) / (m[a] * m[b]) as f64
            }
        }))
    }

    /// `(⊗ rho_{label(r)}) X`, applying one register at a time.
    pub fn apply_product_state(c: &Collection, m: &[u64], x: &DMatrix<f64>) -> Result<CMatrix> {
        check_counts(m, c.n())?;
        let d = c.dim();
        let (labels, dim) = layout(m, d)?;
        if x.nrows() != dim {
            return Err(Error::DimensionMismatch(x.nrows(), dim));
        }
        let mut y: CMatrix = x.map(|v| C64::new(v, 0.0));
        let l = labels.len();
        let mut buf = vec![C64::new(0.0, 0.0); d];
        for (r, &lab) in labels.iter().enumerate() {
            let rho = c.states()[lab].matrix();
            let stride = d.pow((l - 1 - r) as u32);
            for col in 0..y.ncols() {
                let mut column = y.column_mut(col);
                for base in 0..dim {
                    if base / stride % d != 0 {
                        continue;
                    }
                    for (a, slot) in buf.iter_mut().enumerate() {
                        *slot = (0..d).map(|b| rho[(a, b)] * column[base + b * stride]).sum();
                    }
                    for (a, v) in buf.iter().enumerate() {
                        column[base + a * stride] = *v;
                    }
                }
            }
        }
        Ok(y)
    }

    /// `Tr[X rho^m]`.
    pub fn expectation(c: &Collection, m: &[u64], x: &DMatrix<f64>) -> Result<f64> {
        let y = apply_product_state(c, m, x)?;
        Ok((0..y.nrows()).map(|k| y[(k, k)].re).sum())
    }

    /// `Tr[X Y rho^m]` for real symmetric `X`, `Y`.
    pub fn joint_expectation(c: &Collection, m: &[u64], x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
        // Tr[rho X Y] = sum_ab (rho X)_ab Y_ba
        let rx = apply_product_state(c, m, x)?;
        Ok(rx.iter().zip(y.transpose().iter()).map(|(a, b)| a.re * b).sum())
    }

    /// Covariance of the two operators named by `kind`, from dense matrices.
    pub fn covariance(c: &Collection, m: &[u64], kind: CovKind) -> Result<f64> {
        let ((a, b), (e, f)) = kind.operators();
        let d = c.dim();
        let x = block_transposition_avg(a, b, m, d)?;
        let y = block_transposition_avg(e, f, m, d)?;
        let xy = joint_expectation(c, m, &x, &y)?;
        Ok(xy - expectation(c, m, &x)? * expectation(c, m, &y)?)
    }

    /// `(Tr[D rho^m], Tr[D^2 rho^m])`.
    pub fn conditional_moments(c: &Collection, m: &[u64], params: &EstimatorParams) -> Result<(f64, f64)> {
        let dm = block_estimator(m, params, c.dim())?;
        Ok((expectation(c, m, &dm)?, joint_expectation(c, m, &dm, &dm)?))
    }
}

/// Outcome law of the measurement for a fixed count vector: eigenvalues of `D^m` with the
/// weight of `rho^m` on each eigenspace.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeLaw {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl OutcomeLaw {
    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (v, p) in self.values.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return *v;
            }
        }
        *self.values.last().unwrap_or(&0.0)
    }
}

/// Eigendecomposes `D^m` and clusters its spectrum at [`CLUSTER_TOL`].
pub fn outcome_law(c: &Collection, m: &[u64], params: &EstimatorParams) -> Result<OutcomeLaw> {
    let dm = dense::block_estimator(m, params, c.dim())?;
    if dm.nrows() == 1 {
        return Ok(OutcomeLaw { values: vec![dm[(0, 0)]], probs: vec![1.0] });
    }
    let eig = SymmetricEigen::new(dm);
    let rv = dense::apply_product_state(c, m, &eig.eigenvectors)?;
    let weights: Vec<f64> = (0..rv.ncols())
        .map(|k| eig.eigenvectors.column(k).iter().zip(rv.column(k).iter()).map(|(a, b)| a * b.re).sum())
        .collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    let mut anchor = f64::NEG_INFINITY;
    for k in order {
        let lam = eig.eigenvalues[k];
        if lam - anchor > CLUSTER_TOL {
            anchor = lam;
            values.push(lam);
            probs.push(0.0);
        }
        *probs.last_mut().unwrap() += weights[k].max(0.0);
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(OutcomeLaw { values, probs })
}

/// Memoizes [`outcome_law`] per `(m, mu)`.
pub struct OutcomeOracle {
    collection: Collection,
    cache: Mutex<HashMap<(Vec<u64>, u64), Arc<OutcomeLaw>>>,
}

impl OutcomeOracle {
    pub fn new(collection: Collection) -> Self {
        Self { collection, cache: Mutex::new(HashMap::new()) }
    }

    pub fn collection(&self) -> &Collection {
        &self.collection
    }

    pub fn law(&self, m: &[u64], mu: f64) -> Result<Arc<OutcomeLaw>> {
        let key = (m.to_vec(), mu.to_bits());
        if let Some(l) = self.cache.lock().unwrap().get(&key) {
            return Ok(Arc::clone(l));
        }
        let params = EstimatorParams::for_collection(&self.collection, mu)?;
        let law = Arc::new(outcome_law(&self.collection, m, &params)?);
        self.cache.lock().unwrap().insert(key, Arc::clone(&law));
        Ok(law)
    }

    pub fn sample<R: Rng + ?Sized>(&self, m: &[u64], mu: f64, rng: &mut R) -> Result<f64> {
        check_counts(m, self.collection.n())?;
        if m.iter().all(|&k| k == 0) {
            return Ok(0.0);
        }
        Ok(self.law(m, mu)?.sample(rng))
    }
}

/// One draw of the measurement outcome on `rho^m`.
pub fn measure_outcome<R: Rng + ?Sized>(c: &Collection, m: &[u64], params: &EstimatorParams, rng: &mut R) -> Result<f64> {
    check_counts(m, c.n())?;
    if m.iter().all(|&k| k == 0) {
        return Ok(0.0);
    }
    Ok(outcome_law(c, m, params)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collection::families;
    use crate::densmat::DensityMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn orth() -> Collection {
        families::basis_states(2, 2).unwrap()
    }

    fn params(c: &Collection, mu: f64) -> EstimatorParams {
        EstimatorParams::for_collection(c, mu).unwrap()
    }

    fn random_instance(seed: u64, d: usize, n: usize) -> Collection {
        families::random(d, n, d, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn block_operator_examples() {
        let swap = crate::symmetry::permutation_operator(&[1, 0], 2).unwrap();
        assert_eq!(dense::block_transposition_avg(0, 0, &[2, 0], 2).unwrap(), swap);
        assert_eq!(dense::block_transposition_avg(0, 1, &[1, 1], 2).unwrap(), swap);
        assert_eq!(dense::block_transposition_avg(0, 0, &[1, 1], 2), Err(Error::TooFewCopies));
        let c = random_instance(3, 2, 3);
        let ov = Overlaps::new(&c);
        let m = [2, 1, 2];
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let o = dense::block_transposition_avg(i, j, &m, 2).unwrap();
            assert!((dense::expectation(&c, &m, &o).unwrap() - ov.pair[(i, j)]).abs() < 1e-12);
            assert!((&o - o.transpose()).amax() < 1e-15);
        }
    }

    #[test]
    fn conditional_mean_examples() {
        let c = orth();
        let p = params(&c, 2.0);
        assert!((conditional_mean(&c, &[2, 2], &p).unwrap() - 2.0).abs() < 1e-14);
        let (dm, _) = dense::conditional_moments(&c, &[2, 2], &p).unwrap();
        assert!((dm - 2.0).abs() < 1e-12);
        assert_eq!(conditional_mean(&c, &[1, 1], &params(&c, 1.0)).unwrap(), 0.0);
        assert_eq!(conditional_mean(&c, &[0, 0], &p).unwrap(), 0.0);
        assert_eq!(dense::block_estimator(&[0, 0], &p, 2).unwrap(), DMatrix::zeros(1, 1));
    }

    #[test]
    fn conditional_mean_for_equal_states_is_not_identically_zero() {
        // only its Poisson expectation vanishes
        let c = families::identical(DensityMatrix::basis(2, 0), 2).unwrap();
        let p = params(&c, 2.0);
        assert!((conditional_mean(&c, &[2, 0], &p).unwrap() - 1.0).abs() < 1e-14);
        assert!((conditional_mean(&c, &[2, 2], &p).unwrap() + 2.0).abs() < 1e-14);
        assert!(estimator_mean(&c, &p, 1e-12).unwrap().abs() < 1e-10);
    }

    #[test]
    fn relabeling_is_exact() {
        let c = random_instance(11, 3, 4);
        let perm = [2, 0, 3, 1];
        let cp = c.permuted(&perm).unwrap();
        let m = [3u64, 1, 4, 2];
        let mp: Vec<u64> = perm.iter().map(|&k| m[k]).collect();
        let a = conditional_mean(&c, &m, &params(&c, 2.5)).unwrap();
        let b = conditional_mean(&cp, &mp, &params(&cp, 2.5)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn covariance_examples() {
        let pure = families::basis_states(2, 2).unwrap();
        let mixed = families::maximally_mixed(2, 2).unwrap();
        let ovp = Overlaps::new(&pure);
        let ovm = Overlaps::new(&mixed);
        assert!(covariance_primitive(CovKind::Diag { i: 0 }, &[2, 0], &ovp).unwrap().abs() < 1e-15);
        assert!((covariance_primitive(CovKind::Diag { i: 0 }, &[2, 0], &ovm).unwrap() - 0.75).abs() < 1e-15);
        assert!((covariance_primitive(CovKind::Cross { i: 0, j: 1 }, &[1, 1], &ovm).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(covariance_primitive(CovKind::Cross { i: 0, j: 0 }, &[1, 1], &ovm), Err(Error::BadKind(_))));
        assert_eq!(covariance_primitive(CovKind::Diag { i: 0 }, &[1, 1], &ovm), Err(Error::TooFewCopies));
    }

    #[test]
    fn covariances_match_dense() {
        let c = random_instance(5, 2, 4);
        let ov = Overlaps::new(&c);
        let m = [3u64, 2, 2, 1];
        let kinds = [
            CovKind::Diag { i: 0 },
            CovKind::Cross { i: 0, j: 1 },
            CovKind::Cross { i: 3, j: 2 },
            CovKind::DiagCross { i: 1, j: 3 },
            CovKind::Shared { i: 2, j: 0, k: 3 },
            CovKind::Disjoint { i: 0, j: 1, k: 2, l: 3 },
        ];
        for kind in kinds {
            let closed = covariance_primitive(kind, &m, &ov).unwrap();
            let brute = dense::covariance(&c, &m, kind).unwrap();
            assert!((closed - brute).abs() < 1e-9, "{kind:?}: {closed} vs {brute}");
        }
    }

    #[test]
    fn conditional_variance_matches_dense() {
        let c = random_instance(9, 2, 3);
        let ov = Overlaps::new(&c);
        let p = params(&c, 1.7);
        for m in [[2u64, 2, 1], [3, 0, 2], [1, 1, 1], [4, 1, 0]] {
            let (e1, e2) = dense::conditional_moments(&c, &m, &p).unwrap();
            assert!((e1 - conditional_mean_from(&ov, &m, &p)).abs() < 1e-10);
            assert!((e2 - e1 * e1 - conditional_variance(&ov, &m, &p)).abs() < 1e-9);
        }
    }

    #[test]
    fn unbiased_on_examples() {
        let c = orth();
        for mu in [1.0, 2.0, 4.0] {
            assert!((estimator_mean(&c, &params(&c, mu), 1e-12).unwrap() - 1.0).abs() < 1e-9);
        }
        let three = Collection::uniform(vec![
            DensityMatrix::basis(2, 0),
            DensityMatrix::basis(2, 1),
            DensityMatrix::maximally_mixed(2),
        ])
        .unwrap();
        let target = m_hs_sq(&three).unwrap();
        assert!((estimator_mean(&three, &params(&three, 2.0), 1e-12).unwrap() - target).abs() < 1e-9);
        assert!(matches!(estimator_mean(&c, &params(&c, 1.0), 1e-6), Err(Error::TruncationTooLoose(_))));
    }

    #[test]
    fn frozen_variances() {
        // values from an independent transposition-pair oracle
        let equal = families::identical(
            DensityMatrix::mixture(&[0.75, 0.25], &[DensityMatrix::basis(2, 0), DensityMatrix::maximally_mixed(2)]).unwrap(),
            2,
        )
        .unwrap();
        let three = Collection::uniform(vec![
            DensityMatrix::basis(2, 0),
            DensityMatrix::basis(2, 1),
            DensityMatrix::maximally_mixed(2),
        ])
        .unwrap();
        let cases = [(equal, 1.5, 32.0 / 9.0), (orth(), 2.0, 4.0), (orth(), 1.0, 12.0), (three, 2.0, 16.0 / 3.0)];
        for (c, mu, want) in cases {
            let r = variance_exact(&c, &params(&c, mu), 1e-12).unwrap();
            assert!((r.variance - want).abs() < 1e-8, "mu={mu}: {} vs {want}", r.variance);
            assert!(r.truncation_mass >= 1.0 - 1e-10);
            let (v1, v2) = variance_closed_form(&c, &params(&c, mu));
            assert!((r.v1 - v1).abs() < 1e-8 && (r.v2 - v2).abs() < 1e-8);
            assert!((variance_compact(&c, &params(&c, mu)) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn leading_order_examples() {
        let c = orth();
        for mu in [8.0, 16.0] {
            let (l1, l2) = variance_leading_order(&c, &params(&c, mu));
            assert!(l1.abs() < 1e-14);
            assert!((l2 - 4.0 / mu).abs() < 1e-14);
            let (p1, p2) = variance_leading_order_as_printed(&c, &params(&c, mu));
            assert!(p1.abs() < 1e-14 && (p2 - 4.0 / mu).abs() < 1e-14);
        }
        let pure = families::identical(DensityMatrix::basis(3, 1), 3).unwrap();
        assert!(variance_leading_order(&pure, &params(&pure, 5.0)).0.abs() < 1e-14);
    }

    #[test]
    fn outcome_law_reproduces_moments() {
        let c = random_instance(2, 2, 2);
        let p = params(&c, 1.5);
        let ov = Overlaps::new(&c);
        for m in [[2u64, 3], [1, 1], [4, 2]] {
            let law = outcome_law(&c, &m, &p).unwrap();
            assert!((law.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((law.mean() - conditional_mean_from(&ov, &m, &p)).abs() < 1e-9);
            let second: f64 = law.values.iter().zip(&law.probs).map(|(v, q)| v * v * q).sum();
            let var = second - law.mean().powi(2);
            assert!((var - conditional_variance(&ov, &m, &p)).abs() < 1e-9);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(measure_outcome(&c, &[0, 0], &p, &mut rng).unwrap(), 0.0);
    }
}
