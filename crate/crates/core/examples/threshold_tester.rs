//! Operating characteristics of the trace-mode tester: acceptance rate on identical
//! states vs. a far collection, as `mu` grows.

use qcoll::collection::families;
use qcoll::lowerbound::sample_hard_collection;
use qcoll::tester::{run_trials, trial_rng, GaussianSurrogate, TestConfig, TestMode};

fn main() -> qcoll::Result<()> {
    let (d, n, eps) = (2, 4, 0.05);
    let near = GaussianSurrogate::new(families::maximally_mixed(d, n)?);
    let far = GaussianSurrogate::new(sample_hard_collection(d, n, eps, &mut trial_rng(3, 0))?.collection);
    let mode = TestMode::Trace { epsilon: eps, d };
    println!("delta = {:.5}", mode.delta());
    for mu in [4.0, 16.0, 64.0, 256.0] {
        let mut cfg = TestConfig::new(mode);
        cfg.mu_override = Some(mu);
        let a = run_trials(&near, &cfg, 1000, 1)?;
        let b = run_trials(&far, &cfg, 1000, 2)?;
        println!("mu {mu:>5}: accept(identical) {:.3}  accept(far) {:.3}", a.accept_rate, b.accept_rate);
    }
    Ok(())
}
