//! Exact mean and variance of the Poissonized estimator for a random collection,
//! against the closed form and the variance bound.

use qcoll::collection::{families, m_hs_sq};
use qcoll::estimator::{variance_bound, variance_closed_form, variance_exact, EstimatorParams};
use qcoll::tester::trial_rng;

fn main() -> qcoll::Result<()> {
    let mut rng = trial_rng(7, 0);
    let c = families::random(2, 3, 2, &mut rng)?;
    let target = m_hs_sq(&c)?;
    println!("M_HS^2 = {target:.6}");
    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "mu", "mean", "var", "closed", "bound");
    for mu in [1.0, 2.0, 4.0, 8.0] {
        let params = EstimatorParams::for_collection(&c, mu)?;
        let r = variance_exact(&c, &params, 1e-12)?;
        let (v1, v2) = variance_closed_form(&c, &params);
        println!(
            "{mu:>6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            r.mean,
            r.variance,
            v1 + v2,
            variance_bound(c.n(), mu, target)
        );
    }
    Ok(())
}
