//! Schur polynomials and the Schur-Weyl measure `SW^n_rho(lambda) = omega_lambda s_lambda(spec rho)`.

use nalgebra::DMatrix;

use super::young::{partitions, syt_count, YoungDiagram};
use crate::densmat::Spectrum;
use crate::error::{Error, Result};

/// Largest number of copies accepted by the table builders.
pub const MAX_COPIES: usize = 30;

/// Complete homogeneous symmetric polynomials `h_0, ..., h_kmax` at `x`.
pub fn complete_homogeneous(x: &[f64], kmax: usize) -> Vec<f64> {
    let mut h = vec![0.0; kmax + 1];
    h[0] = 1.0;
    for &xi in x {
        for k in 1..=kmax {
            h[k] += xi * h[k - 1];
        }
    }
    h
}

/// `s_lambda(x)` through the Jacobi-Trudi determinant `det[h_{lambda_i - i + j}]`.
pub fn schur_polynomial(lambda: &YoungDiagram, x: &[f64]) -> f64 {
    let r = lambda.depth();
    if r == 0 {
        return 1.0;
    }
    if r > x.len() {
        return 0.0;
    }
    let rows = lambda.rows();
    let kmax = rows[0] + r;
    let h = complete_homogeneous(x, kmax);
    let m = DMatrix::from_fn(r, r, |i, j| {
        let k = rows[i] as isize - i as isize + j as isize;
        if k < 0 {
            0.0
        } else {
            h[k as usize]
        }
    });
    m.determinant()
}

/// Probability of `lambda` under weak Schur sampling of `rho^{⊗n}`.
pub fn schur_weyl_pmf(n: usize, spectrum: &Spectrum, lambda: &YoungDiagram) -> Result<f64> {
    if n > MAX_COPIES {
        return Err(Error::Overflow(n));
    }
    if lambda.boxes() != n {
        return Err(Error::BadArguments(format!("{lambda} does not have {n} boxes")));
    }
    let s = schur_polynomial(lambda, spectrum.values());
    Ok((s * syt_count(lambda) as f64).max(0.0))
}

/// Full Schur-Weyl distribution over `Y_{n,d}` for a spectrum of length `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchurWeylMeasure {
    pub n: usize,
    pub spectrum: Spectrum,
    pub table: Vec<(YoungDiagram, f64)>,
}

impl SchurWeylMeasure {
    pub fn diagrams(&self) -> impl Iterator<Item = &YoungDiagram> {
        self.table.iter().map(|(y, _)| y)
    }

    /// Probabilities in the order of [`partitions`]`(n, d)`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.table.iter().map(|(_, p)| *p).collect()
    }

    pub fn get(&self, lambda: &YoungDiagram) -> f64 {
        self.table.iter().find(|(y, _)| y == lambda).map_or(0.0, |(_, p)| *p)
    }
}

pub fn schur_weyl_table(n: usize, spectrum: &Spectrum) -> Result<SchurWeylMeasure> {
    if n > MAX_COPIES {
        return Err(Error::Overflow(n));
    }
    let d = spectrum.len();
    let table = partitions(n, d)
        .into_iter()
        .map(|y| {
            let p = schur_weyl_pmf(n, spectrum, &y)?;
            Ok((y, p))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SchurWeylMeasure { n, spectrum: spectrum.clone(), table })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn yd(r: &[usize]) -> YoungDiagram {
        YoungDiagram::new(r.to_vec()).unwrap()
    }

    #[test]
    fn pure_state_is_fully_symmetric() {
        let spec = Spectrum::new(vec![1.0, 0.0]).unwrap();
        for n in 1..8 {
            let t = schur_weyl_table(n, &spec).unwrap();
            assert!((t.get(&yd(&[n])) - 1.0).abs() < 1e-14);
            assert!(t.table.iter().filter(|(y, _)| y.rows() != [n]).all(|(_, p)| p.abs() < 1e-14));
        }
    }

    #[test]
    fn small_tables() {
        let half = Spectrum::uniform(2);
        let t = schur_weyl_table(2, &half).unwrap();
        assert!((t.get(&yd(&[2])) - 0.75).abs() < 1e-14);
        assert!((t.get(&yd(&[1, 1])) - 0.25).abs() < 1e-14);
        let t = schur_weyl_table(3, &half).unwrap();
        assert!((t.get(&yd(&[3])) - 0.5).abs() < 1e-14);
        assert!((t.get(&yd(&[2, 1])) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn schur_polynomial_matches_tableau_sum() {
        // s_(2,1)(x, y, z) = sum over SSYT = x^2y + x^2z + xy^2 + y^2z + xz^2 + yz^2 + 2xyz
        let (x, y, z) = (0.5, 0.3, 0.2);
        let direct = x * x * y + x * x * z + x * y * y + y * y * z + x * z * z + y * z * z + 2.0 * x * y * z;
        assert!((schur_polynomial(&yd(&[2, 1]), &[x, y, z]) - direct).abs() < 1e-15);
        // repeated variables, where the bialternant formula is 0/0
        assert!((schur_polynomial(&yd(&[2, 1]), &[0.5, 0.5]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn tables_normalize() {
        let spec = Spectrum::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        for n in [1, 5, 12, 30] {
            let total: f64 = schur_weyl_table(n, &spec).unwrap().probabilities().iter().sum();
            assert!((total - 1.0).abs() < 1e-10, "n={n} total={total}");
        }
        assert_eq!(schur_weyl_table(31, &spec), Err(Error::Overflow(31)));
    }
}
