//! Dense permutation operators on `(C^d)^{⊗l}` and the isotypic projectors.
//!
//! Register 0 is the most significant digit of a basis index. `s(tau)` sends the
//! tensor factor at position `j` to position `tau[j]`.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;

use super::characters::{character, cycle_type, permutations};
use super::young::{syt_count, YoungDiagram};
use crate::error::{Error, Result};

/// Largest `d^l` handled by the dense operators.
pub const DENSE_LIMIT: usize = 1024;

fn checked_dim(d: usize, l: usize) -> Result<usize> {
    let mut dim = 1usize;
    for _ in 0..l {
        dim = dim.checked_mul(d).filter(|&x| x <= DENSE_LIMIT).ok_or(Error::TooLarge {
            dim: d.saturating_pow(l as u32),
            limit: DENSE_LIMIT,
        })?;
    }
    Ok(dim)
}

fn digits(mut idx: usize, d: usize, l: usize, out: &mut [usize]) {
    for j in (0..l).rev() {
        out[j] = idx % d;
        idx /= d;
    }
}

fn undigits(dig: &[usize], d: usize) -> usize {
    dig.iter().fold(0, |acc, &x| acc * d + x)
}

/// Image of every basis index under `s(tau)`.
pub fn permutation_action(tau: &[usize], d: usize) -> Result<Vec<usize>> {
    let l = tau.len();
    let dim = checked_dim(d, l)?;
    let mut src = vec![0; l];
    let mut dst = vec![0; l];
    Ok((0..dim)
        .map(|idx| {
            digits(idx, d, l, &mut src);
            for j in 0..l {
                dst[tau[j]] = src[j];
            }
            undigits(&dst, d)
        })
        .collect())
}

pub fn permutation_operator(tau: &[usize], d: usize) -> Result<DMatrix<f64>> {
    let image = permutation_action(tau, d)?;
    let n = image.len();
    let mut m = DMatrix::zeros(n, n);
    for (col, &row) in image.iter().enumerate() {
        m[(row, col)] = 1.0;
    }
    Ok(m)
}

/// `(1/C(l,2)) sum_{i<j} SWAP_ij`.
pub fn transposition_average(d: usize, l: usize) -> Result<DMatrix<f64>> {
    let dim = checked_dim(d, l)?;
    if l < 2 {
        return Err(Error::TooFewBoxes(l));
    }
    let pairs = (l * (l - 1) / 2) as f64;
    let mut m = DMatrix::zeros(dim, dim);
    let mut dig = vec![0; l];
    for idx in 0..dim {
        digits(idx, d, l, &mut dig);
        for i in 0..l {
            for j in i + 1..l {
                dig.swap(i, j);
                m[(undigits(&dig, d), idx)] += 1.0 / pairs;
                dig.swap(i, j);
            }
        }
    }
    Ok(m)
}

type ProjKey = (YoungDiagram, usize, usize);

fn projector_cache() -> &'static RwLock<HashMap<ProjKey, Arc<DMatrix<f64>>>> {
    static CACHE: OnceLock<RwLock<HashMap<ProjKey, Arc<DMatrix<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// `Pi_lambda = (omega_lambda / l!) sum_tau chi^lambda(tau) s(tau)`; zero when `lambda` has
/// more than `d` rows.
pub fn projector(lambda: &YoungDiagram, d: usize, l: usize) -> Result<Arc<DMatrix<f64>>> {
    if lambda.boxes() != l {
        return Err(Error::BadArguments(format!("{lambda} does not have {l} boxes")));
    }
    let dim = checked_dim(d, l)?;
    let key = (lambda.clone(), d, l);
    if let Some(p) = projector_cache().read().unwrap().get(&key) {
        return Ok(Arc::clone(p));
    }
    let mut m = DMatrix::zeros(dim, dim);
    if lambda.depth() <= d {
        let perms = permutations(l);
        let scale = syt_count(lambda) as f64 / perms.len() as f64;
        for tau in &perms {
            let chi = character(lambda, &cycle_type(tau));
            if chi == 0 {
                continue;
            }
            let w = scale * chi as f64;
            for (col, row) in permutation_action(tau, d)?.into_iter().enumerate() {
                m[(row, col)] += w;
            }
        }
    }
    let m = Arc::new(m);
    projector_cache().write().unwrap().insert(key, Arc::clone(&m));
    Ok(m)
}

/// `Pi^(1)_{lambda_1} ⊗ ... ⊗ Pi^(N)_{lambda_N}` on consecutive blocks of `|lambda_i|` registers.
pub fn local_projector(lambdas: &[YoungDiagram], d: usize) -> Result<DMatrix<f64>> {
    checked_dim(d, lambdas.iter().map(|y| y.boxes()).sum())?;
    let mut acc = DMatrix::from_element(1, 1, 1.0);
    for y in lambdas {
        acc = acc.kronecker(projector(y, d, y.boxes())?.as_ref());
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::super::young::{partitions, tn_statistic, weyl_dim};
    use super::*;

    fn yd(r: &[usize]) -> YoungDiagram {
        YoungDiagram::new(r.to_vec()).unwrap()
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0, |a, x| a.max(x.abs()))
    }

    #[test]
    fn two_copies() {
        let swap = permutation_operator(&[1, 0], 2).unwrap();
        assert_eq!(swap[(1, 2)], 1.0);
        assert_eq!(swap[(0, 0)], 1.0);
        assert_eq!(transposition_average(2, 2).unwrap(), swap);
        let sym = (DMatrix::identity(4, 4) + &swap) / 2.0;
        assert!(max_abs(&(projector(&yd(&[2]), 2, 2).unwrap().as_ref() - sym)) < 1e-14);
    }

    #[test]
    fn factor_moves_to_image_position() {
        // |0 1 2> with tau = (0->1, 1->2, 2->0) becomes |2 0 1>
        let tau = [1, 2, 0];
        let act = permutation_action(&tau, 3).unwrap();
        assert_eq!(act[undigits(&[0, 1, 2], 3)], undigits(&[2, 0, 1], 3));
    }

    #[test]
    fn completeness_and_orthogonality() {
        for (d, l) in [(2usize, 3usize), (3, 3), (2, 4), (2, 5)] {
            let dim = d.pow(l as u32);
            let ps: Vec<_> = partitions(l, d).iter().map(|y| projector(y, d, l).unwrap()).collect();
            let total = ps.iter().fold(DMatrix::zeros(dim, dim), |acc, p| acc + p.as_ref());
            assert!(max_abs(&(total - DMatrix::identity(dim, dim))) < 1e-9);
            for (a, pa) in ps.iter().enumerate() {
                for (b, pb) in ps.iter().enumerate() {
                    let prod = pa.as_ref() * pb.as_ref();
                    let want = if a == b { pa.as_ref().clone() } else { DMatrix::zeros(dim, dim) };
                    assert!(max_abs(&(prod - want)) < 1e-9);
                }
            }
        }
        let p = projector(&yd(&[2, 1]), 2, 3).unwrap();
        assert!((p.trace() - 4.0).abs() < 1e-12);
        assert_eq!(syt_count(&yd(&[2, 1])) * weyl_dim(&yd(&[2, 1]), 2), 4);
    }

    #[test]
    fn transposition_average_spectral_form() {
        for d in 1usize..=3 {
            for l in 2..=5 {
                if d.pow(l as u32) > 243 {
                    continue;
                }
                let t = transposition_average(d, l).unwrap();
                let dim = t.nrows();
                let rebuilt = partitions(l, d).iter().fold(DMatrix::zeros(dim, dim), |acc, y| {
                    acc + projector(y, d, l).unwrap().as_ref() * tn_statistic(y).unwrap()
                });
                assert!(max_abs(&(t - rebuilt)) < 1e-9, "d={d} l={l}");
            }
        }
    }

    #[test]
    fn local_and_global_projectors_commute() {
        for (d, blocks) in [(2usize, vec![2usize, 3]), (2, vec![2, 2]), (3, vec![2, 3]), (2, vec![1, 2, 2]), (3, vec![2, 2])] {
            let l: usize = blocks.iter().sum();
            let locals: Vec<Vec<YoungDiagram>> = blocks.iter().fold(vec![vec![]], |acc, &m| {
                acc.iter()
                    .flat_map(|pre| partitions(m, d).into_iter().map(move |y| [pre.clone(), vec![y]].concat()))
                    .collect()
            });
            for y in partitions(l, d) {
                let g = projector(&y, d, l).unwrap();
                for lam in &locals {
                    let loc = local_projector(lam, d).unwrap();
                    let comm = g.as_ref() * &loc - &loc * g.as_ref();
                    assert!(max_abs(&comm) < 1e-9, "d={d} {y} {lam:?}");
                }
            }
        }
    }

    #[test]
    fn too_large() {
        assert!(matches!(permutation_operator(&[0; 11], 2), Err(Error::TooLarge { .. })));
        assert!(matches!(projector(&yd(&[4, 3]), 3, 7), Err(Error::TooLarge { .. })));
    }
}
