//! The hard instance family: far-ness of random draws, and how well `n` copies can
//! tell them apart from identical states.

use qcoll::lowerbound::{
    far_probability, sample_hard_collection, theorem2_bound, theta_lower_estimate, trace_distance_ab,
    trace_distance_ab_bound,
};
use qcoll::tester::trial_rng;

fn main() -> qcoll::Result<()> {
    let (d, eps) = (2, 0.05);
    let inst = sample_hard_collection(d, 12, eps, &mut trial_rng(9, 0))?;
    let t = theta_lower_estimate(&inst)?;
    println!("one draw, N=12: M_Tr = {:.4}, theta estimate = {:.4}", t.m_tr, t.estimate);
    let far = far_probability(d, 12, eps, 500, 9)?;
    println!("P[M_Tr > 4 eps] ~ {:.3} over {} draws", far.frequency, far.trials);
    println!("{:>3} {:>3} {:>10} {:>10}", "N", "m", "D_Tr(A,B)", "bound");
    for n in [2, 4, 16] {
        for m in [2, 4, 6] {
            println!(
                "{n:>3} {m:>3} {:>10.5} {:>10.5}",
                trace_distance_ab(d, n, eps, m)?,
                trace_distance_ab_bound(d, n, eps, m)
            );
        }
    }
    println!("sample lower bound at N=16: {:.1}", theorem2_bound(d, 16, eps));
    Ok(())
}
