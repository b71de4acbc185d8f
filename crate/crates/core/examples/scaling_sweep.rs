//! A small minimal-`mu` sweep over `N` with the fitted log-log slope.

use qcoll::harness::sweep::run_sweep;
use qcoll::harness::SweepBlock;

fn main() -> qcoll::Result<()> {
    let block = SweepBlock { ns: vec![2, 4, 8], ds: vec![2], trials: 400, replicates: 3, ..SweepBlock::default() };
    let r = run_sweep(&block, 1)?;
    for c in &r.cells {
        println!("rep {} N {:>2} d {}: mu_min {:>8.2}  A {:.3}  B {:.3}", c.replicate, c.n, c.d, c.mu_min, c.accept_a, c.accept_b);
    }
    for s in &r.slopes {
        println!("slope_{} = {:.3} [{:.3}, {:.3}]", s.axis, s.mean, s.ci_lo, s.ci_hi);
    }
    Ok(())
}
