//! Density matrices and the distances between them.
//!
//! Every spectral quantity (trace distance, Hilbert-Schmidt distance, rank
//! closeness) goes through one Hermitian eigendecomposition path so that
//! rounding behaves the same way for all of them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution as _, Exp1, StandardNormal};

pub use nalgebra::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Hermiticity, trace and positivity tolerance used on construction.
pub const STATE_TOL: f64 = 1e-10;

/// A validated `d x d` density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: CMatrix,
}

/// Descending, nonnegative eigenvalue vector summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::BadSpectrum("empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::BadSpectrum(format!("entry {v} is negative or not finite")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::BadSpectrum(format!("sums to {sum}")));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { values })
    }

    /// Uniform spectrum of the maximally mixed state.
    pub fn uniform(d: usize) -> Self {
        Self { values: vec![1.0 / d as f64; d] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Pads with zeros up to `d` entries.
    pub fn padded(&self, d: usize) -> Vec<f64> {
        let mut v = self.values.clone();
        v.resize(d.max(v.len()), 0.0);
        v
    }
}

/// Eigenvalues (ascending order not guaranteed) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

/// Eigenvalues of a Hermitian matrix in descending order.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut v: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn max_hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Validates a matrix as a density operator.
///
/// Eigenvalues in `[-1e-10, 0)` are clipped to zero and the result is
/// renormalized; anything more negative is rejected.
pub fn validate(matrix: CMatrix) -> Result<DensityMatrix> {
    let (r, c) = matrix.shape();
    if r != c {
        return Err(Error::NotSquare(r, c));
    }
    if r == 0 {
        return Err(Error::NotSquare(0, 0));
    }
    let dev = max_hermitian_deviation(&matrix);
    if dev > STATE_TOL {
        return Err(Error::NotHermitian(dev));
    }
    let tr = matrix.trace();
    if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
        return Err(Error::NotUnitTrace(tr.re));
    }
    let (vals, vecs) = hermitian_eigen(&matrix);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -STATE_TOL {
        return Err(Error::NotPositive(min));
    }
    let mut mat = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
    if min < 0.0 {
        let clipped: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        let diag = DMatrix::from_diagonal(&DVector::from_iterator(
            r,
            clipped.iter().map(|v| C64::new(v / total, 0.0)),
        ));
        mat = &vecs * diag * vecs.adjoint();
    }
    Ok(DensityMatrix { mat })
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn maximally_mixed(d: usize) -> Self {
        let mat = CMatrix::identity(d, d) * C64::new(1.0 / d as f64, 0.0);
        Self { mat }
    }

    /// Computational basis projector `|k><k|`.
    pub fn basis(d: usize, k: usize) -> Self {
        assert!(k < d, "basis index {k} out of range for dimension {d}");
        let mut mat = CMatrix::zeros(d, d);
        mat[(k, k)] = C64::new(1.0, 0.0);
        Self { mat }
    }

    /// `diag(probs)`; the probabilities must sum to one.
    pub fn diagonal(probs: &[f64]) -> Result<Self> {
        let d = probs.len();
        let mat = CMatrix::from_diagonal(&DVector::from_iterator(
            d,
            probs.iter().map(|p| C64::new(*p, 0.0)),
        ));
        validate(mat)
    }

    /// Projector onto a (not necessarily normalized) vector.
    pub fn from_pure(psi: &[C64]) -> Result<Self> {
        let v = DVector::from_column_slice(psi);
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::BadArguments("zero state vector".into()));
        }
        let v = v / C64::new(norm, 0.0);
        validate(&v * v.adjoint())
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.mat)
    }

    pub fn spectrum(&self) -> Spectrum {
        let mut vals: Vec<f64> = self.eigenvalues().into_iter().map(|v| v.max(0.0)).collect();
        let total: f64 = vals.iter().sum();
        vals.iter_mut().for_each(|v| *v /= total);
        Spectrum { values: vals }
    }

    pub fn purity(&self) -> f64 {
        overlap_unchecked(&self.mat, &self.mat)
    }

    /// `U rho U^dagger`.
    pub fn conjugate(&self, u: &CMatrix) -> Result<Self> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(self.dim(), u.nrows()));
        }
        validate(u * &self.mat * u.adjoint())
    }

    /// Tensor product `self ⊗ other`.
    pub fn kron(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix { mat: self.mat.kronecker(&other.mat) }
    }

    /// Convex combination `sum_i w_i rho_i`.
    pub fn mixture(weights: &[f64], states: &[DensityMatrix]) -> Result<Self> {
        if weights.len() != states.len() || states.is_empty() {
            return Err(Error::LengthMismatch(weights.len(), states.len()));
        }
        let d = states[0].dim();
        let mut acc = CMatrix::zeros(d, d);
        for (w, s) in weights.iter().zip(states) {
            if s.dim() != d {
                return Err(Error::DimensionMismatch(d, s.dim()));
            }
            acc += &s.mat * C64::new(*w, 0.0);
        }
        validate(acc)
    }
}

fn check_dims(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<()> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(rho.dim(), sigma.dim()));
    }
    Ok(())
}

/// `D_Tr = ||rho - sigma||_1 / 2`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_dims(rho, sigma)?;
    let diff = &rho.mat - &sigma.mat;
    Ok(0.5 * hermitian_eigenvalues(&diff).iter().map(|v| v.abs()).sum::<f64>())
}

/// `D_HS = ||rho - sigma||_2`.
pub fn hs_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_dims(rho, sigma)?;
    let diff = &rho.mat - &sigma.mat;
    Ok(hermitian_eigenvalues(&diff).iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// Trace norm of a Hermitian matrix.
pub fn trace_norm(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).iter().map(|v| v.abs()).sum()
}

fn overlap_unchecked(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

/// `Re Tr[rho sigma]`.
pub fn overlap(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_dims(rho, sigma)?;
    Ok(overlap_unchecked(&rho.mat, &sigma.mat))
}

/// `Tr[rho sigma tau]` as a complex number.
pub fn triple_overlap_complex(
    rho: &DensityMatrix,
    sigma: &DensityMatrix,
    tau: &DensityMatrix,
) -> Result<C64> {
    check_dims(rho, sigma)?;
    check_dims(rho, tau)?;
    Ok((&rho.mat * &sigma.mat * &tau.mat).trace())
}

/// `Re Tr[rho sigma tau]`.
pub fn triple_overlap(rho: &DensityMatrix, sigma: &DensityMatrix, tau: &DensityMatrix) -> Result<f64> {
    Ok(triple_overlap_complex(rho, sigma, tau)?.re)
}

/// Optimal success probability for discriminating two equiprobable states.
pub fn helstrom_success(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    Ok(0.5 * (1.0 + trace_distance(rho, sigma)?))
}

/// `eta = 1 - (sum of the k largest eigenvalues)`.
pub fn rank_closeness(rho: &DensityMatrix, k: usize) -> Result<f64> {
    if k == 0 || k > rho.dim() {
        return Err(Error::BadRank { k, dim: rho.dim() });
    }
    let top: f64 = rho.eigenvalues().iter().take(k).sum();
    Ok((1.0 - top).max(0.0))
}

/// Haar-distributed unitary from the QR decomposition of a complex Ginibre
/// matrix, with the phases of `diag(R)` moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let z = CMatrix::from_fn(d, d, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re * scale, im * scale)
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rjj = r[(j, j)];
        let n = rjj.norm();
        let phase = if n > 0.0 { rjj / C64::new(n, 0.0) } else { C64::new(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// `max |U^dagger U - I|`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let d = u.nrows();
    let g = u.adjoint() * u - CMatrix::identity(d, d);
    g.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `U diag(spectrum) U^dagger` with `U` Haar-random.
pub fn random_state<R: Rng + ?Sized>(d: usize, spectrum: &Spectrum, rng: &mut R) -> Result<DensityMatrix> {
    if spectrum.len() > d {
        return Err(Error::BadSpectrum(format!(
            "{} eigenvalues for dimension {d}",
            spectrum.len()
        )));
    }
    let u = haar_unitary(d, rng);
    let diag = DMatrix::from_diagonal(&DVector::from_iterator(
        d,
        spectrum.padded(d).into_iter().map(|v| C64::new(v, 0.0)),
    ));
    validate(&u * diag * u.adjoint())
}

/// Spectrum drawn uniformly from the probability simplex restricted to `rank` entries.
pub fn random_spectrum<R: Rng + ?Sized>(rank: usize, rng: &mut R) -> Spectrum {
    let raw: Vec<f64> = (0..rank).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    let mut values: Vec<f64> = raw.iter().map(|v| v / total).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    // renormalize once more so the sum is 1 to the last ulp
    let s: f64 = values.iter().sum();
    values.iter_mut().for_each(|v| *v /= s);
    Spectrum { values }
}

/// Random state of rank `rank` with a uniformly random spectrum and Haar eigenbasis.
pub fn random_density<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> DensityMatrix {
    let spec = random_spectrum(rank.clamp(1, d), rng);
    random_state(d, &spec, rng).expect("spectrum length checked")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&DVector::from_iterator(v.len(), v.iter().map(|x| C64::new(*x, 0.0))))
    }

    #[test]
    fn validate_examples() {
        assert!(validate(diag(&[0.5, 0.5])).is_ok());
        assert!(matches!(validate(diag(&[1.0, 1.0])), Err(Error::NotUnitTrace(_))));
        assert!(matches!(validate(diag(&[1.5, -0.5])), Err(Error::NotPositive(_))));
        let mut m = diag(&[0.5, 0.5]);
        m[(0, 1)] = C64::new(0.1, 0.0);
        assert!(matches!(validate(m), Err(Error::NotHermitian(_))));
        assert!(matches!(validate(CMatrix::zeros(2, 3)), Err(Error::NotSquare(2, 3))));
    }

    #[test]
    fn tiny_negative_eigenvalue_is_clipped() {
        let rho = validate(diag(&[1.0 + 5e-11, -5e-11])).unwrap();
        let ev = rho.eigenvalues();
        assert!(ev.iter().all(|v| *v >= 0.0));
        assert!((rho.matrix().trace().re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn distance_examples() {
        let zero = DensityMatrix::basis(2, 0);
        let one = DensityMatrix::basis(2, 1);
        let mixed = DensityMatrix::maximally_mixed(2);
        let skew = DensityMatrix::diagonal(&[0.75, 0.25]).unwrap();

        assert!((trace_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-12);
        assert!(trace_distance(&skew, &skew).unwrap().abs() < 1e-12);
        assert!((trace_distance(&skew, &mixed).unwrap() - 0.25).abs() < 1e-12);

        assert!((hs_distance(&zero, &one).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!(hs_distance(&skew, &skew).unwrap().abs() < 1e-12);
        assert!((hs_distance(&skew, &mixed).unwrap() - (0.125f64).sqrt()).abs() < 1e-12);

        assert!((helstrom_success(&zero, &one).unwrap() - 1.0).abs() < 1e-12);
        assert!((helstrom_success(&skew, &skew).unwrap() - 0.5).abs() < 1e-12);
        assert!((helstrom_success(&skew, &mixed).unwrap() - 0.625).abs() < 1e-12);

        let three = DensityMatrix::maximally_mixed(3);
        assert!(matches!(trace_distance(&zero, &three), Err(Error::DimensionMismatch(2, 3))));
    }

    #[test]
    fn overlap_examples() {
        let mixed = DensityMatrix::maximally_mixed(2);
        assert!((overlap(&mixed, &mixed).unwrap() - 0.5).abs() < 1e-15);
        let zero = DensityMatrix::basis(2, 0);
        let one = DensityMatrix::basis(2, 1);
        assert_eq!(overlap(&zero, &one).unwrap(), 0.0);
        assert!((triple_overlap(&mixed, &mixed, &mixed).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rank_closeness_examples() {
        assert!(rank_closeness(&DensityMatrix::basis(3, 1), 1).unwrap().abs() < 1e-12);
        assert!((rank_closeness(&DensityMatrix::maximally_mixed(2), 1).unwrap() - 0.5).abs() < 1e-12);
        let r = DensityMatrix::diagonal(&[0.6, 0.3, 0.1]).unwrap();
        assert!((rank_closeness(&r, 2).unwrap() - 0.1).abs() < 1e-12);
        assert!(matches!(rank_closeness(&r, 0), Err(Error::BadRank { .. })));
        assert!(matches!(rank_closeness(&r, 4), Err(Error::BadRank { .. })));
    }

    #[test]
    fn haar_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = haar_unitary(1, &mut rng);
        assert!((u[(0, 0)].norm() - 1.0).abs() < 1e-12);
        for d in [2, 3, 5, 8, 16] {
            assert!(unitarity_defect(&haar_unitary(d, &mut rng)) < 1e-10);
        }
        let pure = Spectrum::new(vec![1.0, 0.0, 0.0]).unwrap();
        let rho = random_state(3, &pure, &mut rng).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-10);
        assert!((rho.eigenvalues()[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn haar_states_average_to_maximally_mixed() {
        // Monte Carlo oracle: E[U diag(s) U^dagger] = I/d.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = 3;
        let spec = Spectrum::new(vec![0.7, 0.2, 0.1]).unwrap();
        let draws = 100_000;
        let mut acc = CMatrix::zeros(d, d);
        for _ in 0..draws {
            acc += random_state(d, &spec, &mut rng).unwrap().into_matrix();
        }
        acc /= C64::new(draws as f64, 0.0);
        let target = CMatrix::identity(d, d) * C64::new(1.0 / d as f64, 0.0);
        let err = (acc - target).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 5e-3, "max entry error {err}");
    }

    #[test]
    fn spectrum_validation() {
        assert!(Spectrum::new(vec![0.5, 0.6]).is_err());
        assert!(Spectrum::new(vec![-0.1, 1.1]).is_err());
        let s = Spectrum::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(s.values(), &[0.75, 0.25]);
    }
}
