//! The weighted collection `{p_i, rho_i}` under test and its count samplers.

use std::path::Path;

use rand::Rng;
use rand_distr::{Binomial, Distribution as _, Poisson};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::densmat::{self, validate, CMatrix, DensityMatrix, C64};
use crate::divergences::Distribution;
use crate::error::{Error, Result};

/// Smallest admissible weight; the estimator carries `1/p_i` factors.
pub const MIN_WEIGHT: f64 = 1e-6;

/// Largest total dimension `N d` for the explicit classical-quantum state.
pub const CQ_DIM_LIMIT: usize = 64;

/// Weighted collection of `N >= 2` states of a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    weights: Distribution,
    states: Vec<DensityMatrix>,
}

/// Per-label sample counts `m_1, ..., m_N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountVector(pub Vec<u64>);

impl CountVector {
    pub fn zeros(n: usize) -> Self {
        CountVector(vec![0; n])
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }
}

impl From<Vec<u64>> for CountVector {
    fn from(v: Vec<u64>) -> Self {
        CountVector(v)
    }
}

impl Collection {
    pub fn new(weights: Distribution, states: Vec<DensityMatrix>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::InvalidCollection(format!("need N >= 2 states, got {}", states.len())));
        }
        if weights.len() != states.len() {
            return Err(Error::LengthMismatch(weights.len(), states.len()));
        }
        if let Some(p) = weights.probs().iter().find(|p| **p < MIN_WEIGHT || **p >= 1.0) {
            return Err(Error::InvalidCollection(format!(
                "weight {p} outside [{MIN_WEIGHT}, 1)"
            )));
        }
        let d = states[0].dim();
        if let Some(s) = states.iter().find(|s| s.dim() != d) {
            return Err(Error::DimensionMismatch(d, s.dim()));
        }
        Ok(Self { weights, states })
    }

    /// Uniform weights over the given states.
    pub fn uniform(states: Vec<DensityMatrix>) -> Result<Self> {
        let n = states.len();
        Self::new(Distribution::uniform(n.max(1)), states)
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn weights(&self) -> &Distribution {
        &self.weights
    }

    pub fn states(&self) -> &[DensityMatrix] {
        &self.states
    }

    /// Case A: every state identical entrywise.
    pub fn all_identical(&self) -> bool {
        self.states.iter().all(|s| s == &self.states[0])
    }

    /// Relabels the collection: entry `k` of the result is entry `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let w = perm.iter().map(|&k| self.weights.probs()[k]).collect();
        let s = perm.iter().map(|&k| self.states[k].clone()).collect();
        Collection::new(Distribution::new(w)?, s)
    }
}

/// `rho_bar = sum_i p_i rho_i`.
pub fn average_state(c: &Collection) -> DensityMatrix {
    DensityMatrix::mixture(c.weights.probs(), &c.states).expect("collection states are validated")
}

/// `M_Tr = sum_i p_i D_Tr(rho_i, rho_bar)`.
pub fn m_tr(c: &Collection) -> f64 {
    if c.all_identical() {
        return 0.0;
    }
    let avg = average_state(c);
    c.weights
        .probs()
        .iter()
        .zip(&c.states)
        .map(|(p, s)| p * densmat::trace_distance(s, &avg).expect("common dimension"))
        .sum()
}

/// Both evaluations of the mean squared HS distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsForms {
    /// `sum_ij p_i p_j D_HS^2(rho_i, rho_j)`
    pub pairwise: f64,
    /// `2 sum_i p_i D_HS^2(rho_i, rho_bar)`
    pub average: f64,
}

pub fn m_hs_sq_forms(c: &Collection) -> HsForms {
    if c.all_identical() {
        return HsForms { pairwise: 0.0, average: 0.0 };
    }
    let p = c.weights.probs();
    let mut pairwise = 0.0;
    for i in 0..c.n() {
        for j in 0..c.n() {
            if i != j {
                let d = densmat::hs_distance(&c.states[i], &c.states[j]).expect("common dimension");
                pairwise += p[i] * p[j] * d * d;
            }
        }
    }
    let avg = average_state(c);
    let average = 2.0
        * p.iter()
            .zip(&c.states)
            .map(|(pi, s)| {
                let d = densmat::hs_distance(s, &avg).expect("common dimension");
                pi * d * d
            })
            .sum::<f64>();
    HsForms { pairwise, average }
}

/// `M_HS^2`, cross-checked between the pairwise and average forms.
pub fn m_hs_sq(c: &Collection) -> Result<f64> {
    let f = m_hs_sq_forms(c);
    if (f.pairwise - f.average).abs() > 1e-8 {
        return Err(Error::FormMismatch { pairwise: f.pairwise, average: f.average });
    }
    Ok(f.pairwise)
}

/// Multinomial counts for a fixed total `M`.
pub fn draw_counts_multinomial<R: Rng + ?Sized>(c: &Collection, total: u64, rng: &mut R) -> CountVector {
    multinomial_counts(c.weights.probs(), total, rng)
}

/// Counts via sequential conditional binomials.
pub fn multinomial_counts<R: Rng + ?Sized>(p: &[f64], total: u64, rng: &mut R) -> CountVector {
    let mut out = vec![0u64; p.len()];
    let mut left = total;
    let mut mass = 1.0f64;
    for (k, &pk) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == p.len() {
            out[k] = left;
            break;
        }
        let q = (pk / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(left, q).expect("probability clamped").sample(rng);
        out[k] = draw;
        left -= draw;
        mass -= pk;
        if mass <= 0.0 {
            break;
        }
    }
    CountVector(out)
}

/// Independent `m_i ~ Poi(p_i mu)`.
pub fn draw_counts_poissonized<R: Rng + ?Sized>(c: &Collection, mu: f64, rng: &mut R) -> CountVector {
    poissonized_counts(c.weights.probs(), mu, rng)
}

pub fn poissonized_counts<R: Rng + ?Sized>(p: &[f64], mu: f64, rng: &mut R) -> CountVector {
    CountVector(p.iter().map(|pi| poisson_draw(pi * mu, rng)).collect())
}

pub(crate) fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let x: f64 = Poisson::new(mean).expect("positive mean").sample(rng);
    x as u64
}

/// Block-diagonal `sum_i p_i |i><i| ⊗ rho_i`.
pub fn cq_state(c: &Collection) -> Result<DensityMatrix> {
    let d = c.dim();
    let total = c.n() * d;
    if total > CQ_DIM_LIMIT {
        return Err(Error::TooLarge { dim: total, limit: CQ_DIM_LIMIT });
    }
    let mut m = CMatrix::zeros(total, total);
    for (i, (p, s)) in c.weights.probs().iter().zip(&c.states).enumerate() {
        let block = s.matrix() * C64::new(*p, 0.0);
        m.view_mut((i * d, i * d), (d, d)).copy_from(&block);
    }
    validate(m)
}

/// On-disk form: `{"weights": [...], "states": [[[re, im], ...], ...]}` with each
/// state flattened row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollectionDoc {
    pub weights: Vec<f64>,
    pub states: Vec<Vec<[f64; 2]>>,
}

impl From<&Collection> for CollectionDoc {
    fn from(c: &Collection) -> Self {
        let states = c
            .states
            .iter()
            .map(|s| {
                let m = s.matrix();
                let d = m.nrows();
                (0..d * d).map(|k| {
                    let z = m[(k / d, k % d)];
                    [z.re, z.im]
                })
                .collect()
            })
            .collect();
        CollectionDoc { weights: c.weights.probs().to_vec(), states }
    }
}

impl TryFrom<CollectionDoc> for Collection {
    type Error = Error;
    fn try_from(doc: CollectionDoc) -> Result<Self> {
        let mut states = Vec::with_capacity(doc.states.len());
        for flat in &doc.states {
            let d = (flat.len() as f64).sqrt().round() as usize;
            if d * d != flat.len() || d == 0 {
                return Err(Error::InvalidCollection(format!(
                    "state with {} entries is not a square matrix",
                    flat.len()
                )));
            }
            let m = CMatrix::from_fn(d, d, |r, c| {
                let [re, im] = flat[r * d + c];
                C64::new(re, im)
            });
            states.push(validate(m)?);
        }
        Collection::new(Distribution::new(doc.weights)?, states)
    }
}

impl Collection {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&CollectionDoc::from(self)).expect("plain data")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: CollectionDoc = serde_json::from_str(s)?;
        Collection::try_from(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// Standard instances used across tests, examples and the harness.
pub mod families {
    use super::*;
    use crate::densmat::random_density;

    /// `N` copies of the same state.
    pub fn identical(state: DensityMatrix, n: usize) -> Result<Collection> {
        Collection::uniform(vec![state; n])
    }

    /// `N` copies of `I/d`.
    pub fn maximally_mixed(d: usize, n: usize) -> Result<Collection> {
        identical(DensityMatrix::maximally_mixed(d), n)
    }

    /// Basis states `|i mod d><i mod d|`, uniform weights.
    pub fn basis_states(d: usize, n: usize) -> Result<Collection> {
        Collection::uniform((0..n).map(|i| DensityMatrix::basis(d, i % d)).collect())
    }

    /// Independent random states of the given rank with random weights.
    pub fn random<R: Rng + ?Sized>(d: usize, n: usize, rank: usize, rng: &mut R) -> Result<Collection> {
        let states = (0..n).map(|_| random_density(d, rank, rng)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let s: f64 = w.iter().sum();
        Collection::new(Distribution::with_tolerance(w.iter().map(|x| x / s).collect(), 1e-12)?, states)
    }

    /// Straight-line interpolation `rho_i(t) = (1 - t) rho_ref + t sigma_i`.
    pub fn interpolate(reference: &DensityMatrix, targets: &Collection, t: f64) -> Result<Collection> {
        let states = targets
            .states()
            .iter()
            .map(|s| DensityMatrix::mixture(&[1.0 - t, t], &[reference.clone(), s.clone()]))
            .collect::<Result<Vec<_>>>()?;
        Collection::new(targets.weights().clone(), states)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_one(p: [f64; 2]) -> Collection {
        Collection::new(
            Distribution::new(p.to_vec()).unwrap(),
            vec![DensityMatrix::basis(2, 0), DensityMatrix::basis(2, 1)],
        )
        .unwrap()
    }

    #[test]
    fn construction_rules() {
        let s = DensityMatrix::maximally_mixed(2);
        assert!(Collection::uniform(vec![s.clone()]).is_err());
        let w = Distribution::new(vec![1.0 - 1e-7, 1e-7]).unwrap();
        assert!(Collection::new(w, vec![s.clone(), s.clone()]).is_err());
        let w = Distribution::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            Collection::new(w, vec![s, DensityMatrix::maximally_mixed(3)]),
            Err(Error::DimensionMismatch(2, 3))
        ));
    }

    #[test]
    fn average_state_examples() {
        let rho = DensityMatrix::diagonal(&[0.2, 0.8]).unwrap();
        let c = families::identical(rho.clone(), 3).unwrap();
        assert!((average_state(&c).matrix() - rho.matrix()).norm() < 1e-14);

        let avg = average_state(&zero_one([0.5, 0.5]));
        assert!((avg.matrix() - DensityMatrix::maximally_mixed(2).matrix()).norm() < 1e-14);

        let c = Collection::new(
            Distribution::new(vec![0.25, 0.75]).unwrap(),
            vec![DensityMatrix::basis(2, 0), DensityMatrix::maximally_mixed(2)],
        )
        .unwrap();
        let expected = DensityMatrix::diagonal(&[0.625, 0.375]).unwrap();
        assert!((average_state(&c).matrix() - expected.matrix()).norm() < 1e-14);
    }

    #[test]
    fn functional_examples() {
        let c = zero_one([0.5, 0.5]);
        assert!((m_tr(&c) - 0.5).abs() < 1e-12);
        assert!((m_hs_sq(&c).unwrap() - 1.0).abs() < 1e-12);
        let f = m_hs_sq_forms(&c);
        assert!((f.pairwise - f.average).abs() < 1e-12);

        let same = families::maximally_mixed(2, 3).unwrap();
        assert_eq!(m_tr(&same), 0.0);
        assert_eq!(m_hs_sq(&same).unwrap(), 0.0);

        for t in [0.01, 0.3, 0.9] {
            let rho = DensityMatrix::diagonal(&[0.4, 0.6]).unwrap();
            let c = Collection::new(
                Distribution::new(vec![1.0 - t, t]).unwrap(),
                vec![rho.clone(), rho],
            )
            .unwrap();
            assert_eq!(m_tr(&c), 0.0);
        }
    }

    #[test]
    fn samplers_conserve_and_match_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = families::maximally_mixed(2, 2).unwrap();
        assert_eq!(draw_counts_multinomial(&c, 0, &mut rng), CountVector::zeros(2));
        let skew = Collection::new(
            Distribution::new(vec![0.999, 0.001]).unwrap(),
            vec![DensityMatrix::basis(2, 0), DensityMatrix::basis(2, 1)],
        )
        .unwrap();
        for _ in 0..1000 {
            assert_eq!(draw_counts_multinomial(&skew, 5, &mut rng).total(), 5);
        }
        let draws = 100_000;
        let mut sum = 0u64;
        for _ in 0..draws {
            sum += draw_counts_poissonized(&c, 4.0, &mut rng).0[0];
        }
        let mean = sum as f64 / draws as f64;
        assert!((mean - 2.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn cq_state_examples() {
        let c = families::maximally_mixed(2, 2).unwrap();
        let cq = cq_state(&c).unwrap();
        assert!((cq.matrix() - DensityMatrix::maximally_mixed(4).matrix()).norm() < 1e-14);
        assert!((cq.matrix().trace().re - 1.0).abs() < 1e-14);
        let cq = cq_state(&zero_one([0.25, 0.75])).unwrap();
        let expected = DensityMatrix::diagonal(&[0.25, 0.0, 0.0, 0.75]).unwrap();
        assert!((cq.matrix() - expected.matrix()).norm() < 1e-14);
        let big = families::maximally_mixed(8, 9).unwrap();
        assert!(matches!(cq_state(&big), Err(Error::TooLarge { dim: 72, limit: 64 })));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = families::random(3, 3, 2, &mut rng).unwrap();
        let back = Collection::from_json(&c.to_json()).unwrap();
        assert_eq!(back.n(), 3);
        for (a, b) in c.states().iter().zip(back.states()) {
            assert!((a.matrix() - b.matrix()).norm() < 1e-12);
        }
        let bad = r#"{"weights":[0.5,0.5],"states":[[[1,0],[0,0],[0,0],[1,0]],[[1,0],[0,0],[0,0],[0,0]]]}"#;
        assert!(matches!(Collection::from_json(bad), Err(Error::NotUnitTrace(_))));
        let ragged = r#"{"weights":[0.5,0.5],"states":[[[1,0],[0,0],[0,0]],[[1,0]]]}"#;
        assert!(matches!(Collection::from_json(ragged), Err(Error::InvalidCollection(_))));
    }
}
