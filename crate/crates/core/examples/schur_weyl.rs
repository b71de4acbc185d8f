//! Young diagrams, Schur-Weyl probabilities, RSK sampling and isotypic projectors.

use qcoll::symmetry::{partitions, projector, rsk_sample, schur_weyl_table, syt_count, weyl_dim};
use qcoll::tester::trial_rng;
use qcoll::Spectrum;

fn main() -> qcoll::Result<()> {
    let (n, d) = (4, 2);
    let spectrum = Spectrum::new(vec![0.7, 0.3])?;
    let table = schur_weyl_table(n, &spectrum)?;
    let mut rng = trial_rng(5, 0);
    let draws = 20_000;
    let samples: Vec<_> = (0..draws).map(|_| rsk_sample(n, &spectrum, &mut rng)).collect();
    println!("{:>10} {:>5} {:>5} {:>9} {:>9} {:>6}", "lambda", "f", "dim", "p", "rsk", "rank");
    for lambda in partitions(n, d) {
        let freq = samples.iter().filter(|s| **s == lambda).count() as f64 / draws as f64;
        let p = projector(&lambda, d, n)?;
        println!(
            "{:>10} {:>5} {:>5} {:>9.5} {:>9.5} {:>6.1}",
            format!("{:?}", lambda.rows()),
            syt_count(&lambda),
            weyl_dim(&lambda, d),
            table.get(&lambda),
            freq,
            p.trace()
        );
    }
    Ok(())
}
