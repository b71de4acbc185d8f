//! TV, KL and chi-squared between classical distributions, and the state distances.

use qcoll::densmat::{hs_distance, trace_distance};
use qcoll::divergences::{chi_squared, kl, tv, LogBase};
use qcoll::DensityMatrix;

fn main() -> qcoll::Result<()> {
    let p = [0.5, 0.3, 0.2];
    let q = [0.4, 0.4, 0.2];
    let t = tv(&p, &q)?;
    let k = kl(&p, &q, LogBase::Natural)?;
    println!("tv {t:.5}  sqrt(kl/2) {:.5}", (k / 2.0).sqrt());
    println!("kl(p||q) {k:.5}  chi2(p||q) {:.5}  chi2(q||p) {:.5}", chi_squared(&p, &q)?, chi_squared(&q, &p)?);
    let rho = DensityMatrix::diagonal(&p)?;
    let sigma = DensityMatrix::diagonal(&q)?;
    println!("D_Tr {:.5}  D_HS {:.5}", trace_distance(&rho, &sigma)?, hs_distance(&rho, &sigma)?);
    Ok(())
}
