//! The `M < 2 mu` budget wrapper: empirical failure rate against the exact tail and
//! the two exponential bounds.

use qcoll::tester::{chernoff_fail_bound, empirical_fail_rate, exact_fail_probability, fail_probability_bound};

fn main() {
    println!("{:>5} {:>11} {:>11} {:>11} {:>11}", "mu", "empirical", "exact", "e^-mu h(1)", "e^-mu h(2)");
    for mu in [1.0, 2.0, 4.0, 8.0, 16.0] {
        println!(
            "{mu:>5} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e}",
            empirical_fail_rate(mu, 200_000, 1),
            exact_fail_probability(mu),
            chernoff_fail_bound(mu),
            fail_probability_bound(mu)
        );
    }
}
