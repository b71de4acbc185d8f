use std::fmt;

use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution as _};
use serde::{Deserialize, Serialize};

use crate::densmat::Spectrum;
use crate::error::{Error, Result};

/// Integer partition `lambda_1 >= lambda_2 >= ... > 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct YoungDiagram {
    rows: Vec<usize>,
}

impl YoungDiagram {
    /// Trailing zero rows are dropped; rows must be weakly decreasing.
    pub fn new(mut rows: Vec<usize>) -> Result<Self> {
        while rows.last() == Some(&0) {
            rows.pop();
        }
        if rows.windows(2).any(|w| w[0] < w[1]) || rows.contains(&0) {
            return Err(Error::BadArguments(format!("{rows:?} is not a partition")));
        }
        Ok(Self { rows })
    }

    pub(crate) fn from_rows_unchecked(rows: Vec<usize>) -> Self {
        Self { rows }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Number of nonzero rows.
    pub fn depth(&self) -> usize {
        self.rows.len()
    }

    pub fn boxes(&self) -> usize {
        self.rows.iter().sum()
    }

    /// Column lengths.
    pub fn conjugate(&self) -> Vec<usize> {
        let width = self.rows.first().copied().unwrap_or(0);
        (0..width).map(|j| self.rows.iter().filter(|&&r| r > j).count()).collect()
    }

    /// Sum of contents `j - i` over all boxes.
    pub fn content_sum(&self) -> i64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, &r)| (r * (r.saturating_sub(1)) / 2) as i64 - (i * r) as i64)
            .sum()
    }
}

impl fmt::Display for YoungDiagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, r) in self.rows.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{r}")?;
        }
        write!(f, ")")
    }
}

/// All partitions of `l` with at most `d` rows, in decreasing lexicographic order.
pub fn partitions(l: usize, d: usize) -> Vec<YoungDiagram> {
    fn rec(left: usize, max_part: usize, rows_left: usize, cur: &mut Vec<usize>, out: &mut Vec<YoungDiagram>) {
        if left == 0 {
            out.push(YoungDiagram::from_rows_unchecked(cur.clone()));
            return;
        }
        if rows_left == 0 {
            return;
        }
        for part in (1..=left.min(max_part)).rev() {
            cur.push(part);
            rec(left - part, part, rows_left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if d == 0 {
        if l == 0 {
            out.push(YoungDiagram::from_rows_unchecked(vec![]));
        }
        return out;
    }
    rec(l, l, d, &mut Vec::new(), &mut out);
    out
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Number of standard Young tableaux (dimension of the symmetric-group irrep), by hook lengths.
pub fn syt_count(lambda: &YoungDiagram) -> u64 {
    let conj = lambda.conjugate();
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    let mut k: u128 = 1;
    for (i, &r) in lambda.rows.iter().enumerate() {
        for j in 0..r {
            let hook = (r - j - 1) + (conj[j] - i - 1) + 1;
            num *= k;
            den *= hook as u128;
            k += 1;
            let g = gcd(num, den);
            num /= g;
            den /= g;
        }
    }
    debug_assert_eq!(den, 1);
    num as u64
}

/// Dimension of the `GL(d)` irrep labelled by `lambda` (hook-content formula); zero when
/// `lambda` has more than `d` rows.
pub fn weyl_dim(lambda: &YoungDiagram, d: usize) -> u64 {
    if lambda.depth() > d {
        return 0;
    }
    let conj = lambda.conjugate();
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for (i, &r) in lambda.rows.iter().enumerate() {
        for j in 0..r {
            let hook = (r - j - 1) + (conj[j] - i - 1) + 1;
            num *= (d + j - i) as u128;
            den *= hook as u128;
            let g = gcd(num, den);
            num /= g;
            den /= g;
        }
    }
    debug_assert_eq!(den, 1);
    num as u64
}

/// Eigenvalue of the average transposition on the isotypic block of `lambda`:
/// `(1/(n(n-1))) sum_i ((lambda_i - i + 1/2)^2 - (-i + 1/2)^2)`.
pub fn tn_statistic(lambda: &YoungDiagram) -> Result<f64> {
    let n = lambda.boxes();
    if n < 2 {
        return Err(Error::TooFewBoxes(n));
    }
    let s: f64 = lambda
        .rows
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let i = (k + 1) as f64;
            let a = r as f64 - i + 0.5;
            let b = -i + 0.5;
            a * a - b * b
        })
        .sum();
    Ok(s / (n * (n - 1)) as f64)
}

/// Shape of the RSK insertion tableau of `n` i.i.d. letters drawn from `spectrum`.
pub fn rsk_sample<R: Rng + ?Sized>(n: usize, spectrum: &Spectrum, rng: &mut R) -> YoungDiagram {
    let letters = WeightedIndex::new(spectrum.values()).expect("spectrum has positive mass");
    let mut rows: Vec<Vec<usize>> = Vec::new();
    for _ in 0..n {
        let mut x = letters.sample(rng);
        let mut placed = false;
        for row in rows.iter_mut() {
            // first entry strictly greater than x gets bumped
            let pos = row.partition_point(|&y| y <= x);
            if pos == row.len() {
                row.push(x);
                placed = true;
                break;
            }
            std::mem::swap(&mut row[pos], &mut x);
        }
        if !placed {
            rows.push(vec![x]);
        }
    }
    YoungDiagram::from_rows_unchecked(rows.iter().map(Vec::len).collect())
}
