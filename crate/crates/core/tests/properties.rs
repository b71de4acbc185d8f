use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qcoll::collection::{families, m_hs_sq_forms, m_tr};
use qcoll::divergences::{multinomial_pmf, poisson_pmf, tv};
use qcoll::estimator::{conditional_mean, estimator_mean, EstimatorParams, MAX_TAIL};
use qcoll::symmetry::{partitions, schur_weyl_table, syt_count, tn_statistic, weyl_dim};
use qcoll::{Collection, Spectrum};

fn collection(seed: u64, d: usize, n: usize) -> Collection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    families::random(d, n, d, &mut rng).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hs_forms_agree(seed in any::<u64>(), d in 2usize..=4, n in 2usize..=5) {
        let f = m_hs_sq_forms(&collection(seed, d, n));
        prop_assert!((f.pairwise - f.average).abs() < 1e-10);
        prop_assert!(f.pairwise >= -1e-15);
    }

    #[test]
    fn conditional_mean_ignores_labels(seed in any::<u64>(), m in proptest::collection::vec(0u64..5, 3)) {
        let c = collection(seed, 2, 3);
        let perm = [1usize, 2, 0];
        let p = c.permuted(&perm).unwrap();
        let mp: Vec<u64> = (0..3).map(|k| m[perm[k]]).collect();
        let a = conditional_mean(&c, &m, &EstimatorParams::for_collection(&c, 2.0).unwrap()).unwrap();
        let b = conditional_mean(&p, &mp, &EstimatorParams::for_collection(&p, 2.0).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn poissonization_factorizes(mu in 0.1f64..20.0, m in proptest::collection::vec(0u64..8, 1..5)) {
        let n = m.len();
        let p = vec![1.0 / n as f64; n];
        let total: u64 = m.iter().sum();
        let lhs = poisson_pmf(mu, total).unwrap() * multinomial_pmf(&m, &p, total).unwrap();
        let rhs: f64 = m.iter().map(|&k| poisson_pmf(mu / n as f64, k).unwrap()).product();
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn tv_is_a_metric(a in proptest::collection::vec(0.01f64..1.0, 4), b in proptest::collection::vec(0.01f64..1.0, 4)) {
        let norm = |v: &[f64]| { let s: f64 = v.iter().sum(); v.iter().map(|x| x / s).collect::<Vec<_>>() };
        let (p, q) = (norm(&a), norm(&b));
        let t = tv(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&t));
        prop_assert_eq!(t, tv(&q, &p).unwrap());
    }

    #[test]
    fn schur_weyl_is_a_distribution(raw in proptest::collection::vec(0.01f64..1.0, 2..4), n in 1usize..9) {
        let sum: f64 = raw.iter().sum();
        let s = Spectrum::new(raw.iter().map(|x| x / sum).collect()).unwrap();
        let total: f64 = schur_weyl_table(n, &s).unwrap().probabilities().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }
}

#[test]
fn dimension_counts() {
    for l in 1..=7usize {
        for d in 1..=3usize {
            let ys = partitions(l, d);
            let total: u64 = ys.iter().map(|y| syt_count(y) * weyl_dim(y, d)).sum();
            assert_eq!(total, (d as u64).pow(l as u32));
        }
        let fact: u64 = (1..=l as u64).product();
        assert_eq!(partitions(l, l).iter().map(|y| syt_count(y).pow(2)).sum::<u64>(), fact);
    }
}

#[test]
fn tn_extremes() {
    for l in 2..=6usize {
        let ys = partitions(l, l);
        assert_relative_eq!(tn_statistic(ys.first().unwrap()).unwrap(), 1.0);
        assert_relative_eq!(tn_statistic(ys.last().unwrap()).unwrap(), -1.0);
    }
}

#[test]
fn identical_states_have_zero_mean_and_m_tr() {
    let c = families::maximally_mixed(3, 3).unwrap();
    assert_eq!(m_tr(&c), 0.0);
    let mean = estimator_mean(&c, &EstimatorParams::for_collection(&c, 3.0).unwrap(), MAX_TAIL).unwrap();
    assert!(mean.abs() < 1e-10);
}
