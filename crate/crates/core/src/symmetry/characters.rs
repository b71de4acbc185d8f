//! Permutations in one-line notation and irreducible characters of `S_l`.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use super::young::YoungDiagram;

/// All permutations of `0..l` in lexicographic order.
pub fn permutations(l: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..l).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (1..l).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..l).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}

/// Cycle lengths sorted in decreasing order.
pub fn cycle_type(perm: &[usize]) -> Vec<usize> {
    let mut seen = vec![false; perm.len()];
    let mut lens = Vec::new();
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut k = start;
        while !seen[k] {
            seen[k] = true;
            k = perm[k];
            len += 1;
        }
        lens.push(len);
    }
    lens.sort_unstable_by(|a, b| b.cmp(a));
    lens
}

pub fn transposition(l: usize, i: usize, j: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..l).collect();
    p.swap(i, j);
    p
}

type CharKey = (Vec<usize>, Vec<usize>);

fn char_cache() -> &'static RwLock<HashMap<CharKey, i64>> {
    static CACHE: OnceLock<RwLock<HashMap<CharKey, i64>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// `chi^lambda` evaluated on the class with the given cycle type (Murnaghan-Nakayama).
pub fn character(lambda: &YoungDiagram, cycle_type: &[usize]) -> i64 {
    let mut mu = cycle_type.to_vec();
    mu.retain(|&c| c > 0);
    mu.sort_unstable_by(|a, b| b.cmp(a));
    mn(lambda.rows(), &mu)
}

fn mn(lambda: &[usize], mu: &[usize]) -> i64 {
    if mu.is_empty() {
        return if lambda.is_empty() { 1 } else { 0 };
    }
    let key = (lambda.to_vec(), mu.to_vec());
    if let Some(&v) = char_cache().read().unwrap().get(&key) {
        return v;
    }
    let k = mu[0];
    let rest = &mu[1..];
    // beta-set: beads at lambda_i + (r - 1 - i); removing a k-rim-hook slides a bead down by k
    let r = lambda.len();
    let beta: Vec<usize> = lambda.iter().enumerate().map(|(i, &x)| x + r - 1 - i).collect();
    let mut total = 0i64;
    for (idx, &b) in beta.iter().enumerate() {
        if b < k || beta.contains(&(b - k)) {
            continue;
        }
        let crossed = beta.iter().filter(|&&c| c > b - k && c < b).count();
        let mut nb = beta.clone();
        nb[idx] = b - k;
        nb.sort_unstable_by(|a, b| b.cmp(a));
        let mut shape: Vec<usize> = nb.iter().enumerate().map(|(i, &x)| x - (r - 1 - i)).collect();
        while shape.last() == Some(&0) {
            shape.pop();
        }
        let sign = if crossed % 2 == 0 { 1 } else { -1 };
        total += sign * mn(&shape, rest);
    }
    char_cache().write().unwrap().insert(key, total);
    total
}
