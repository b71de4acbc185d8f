//! One driver per subcommand. Drivers return their files instead of writing them, so
//! determinism can be checked byte for byte.

use serde::Serialize;

use super::checks::{criteria, failures, run_checks, CheckOutcome, VerifyContext};
use super::sweep::run_sweep;
use super::{derive_seed, domain, fmt_f64, fmt_opt, ExperimentConfig, SourceKind, Table};
use crate::collection::m_hs_sq;
use crate::error::Result;
use crate::estimator::{variance_bound, variance_exact, EstimatorParams, OutcomeOracle, VARIANCE_CONSTANT};
use crate::lowerbound::{chi2_sw_bound_check, far_probability, trace_distance_grid, BoundRow};
use crate::tester::{run_trials, GaussianSurrogate, OutcomeSource, TestConfig, TrialRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub name: String,
    pub contents: String,
}

fn csv(name: &str, table: &Table, cfg: &ExperimentConfig) -> Output {
    Output { name: name.into(), contents: table.render(&cfg.hash()) }
}

pub fn cmd_estimate(cfg: &ExperimentConfig) -> Result<Vec<Output>> {
    let b = &cfg.estimate;
    let mut t = Table::new(
        "qcoll.estimate.v1",
        &["instance", "label", "fingerprint", "n", "d", "mu", "mean", "m_hs_sq", "variance", "v1", "v2", "bound_rhs", "truncation_mass"],
    );
    for (k, spec) in b.instances.iter().enumerate() {
        let c = spec.build(cfg.seed, k as u64)?;
        let target = m_hs_sq(&c)?;
        for &mu in &b.mus {
            let r = variance_exact(&c, &EstimatorParams::for_collection(&c, mu)?, b.tail)?;
            t.push(vec![
                k.to_string(),
                spec.label(),
                c.fingerprint()[..12].to_string(),
                c.n().to_string(),
                c.dim().to_string(),
                fmt_f64(mu),
                fmt_f64(r.mean),
                fmt_f64(target),
                fmt_f64(r.variance),
                fmt_f64(r.v1),
                fmt_f64(r.v2),
                fmt_f64(variance_bound(c.n(), mu, target)),
                fmt_f64(r.truncation_mass),
            ]);
        }
    }
    Ok(vec![csv("estimate.csv", &t, cfg)])
}

#[derive(Serialize)]
struct VerdictLine<'a> {
    instance: usize,
    label: &'a str,
    #[serde(flatten)]
    record: &'a TrialRecord,
}

pub fn cmd_test(cfg: &ExperimentConfig) -> Result<Vec<Output>> {
    let b = &cfg.test;
    let tc = TestConfig { mode: b.mode, mu_override: b.mu_override, repetitions: b.repetitions, b_const: b.b_const, wrap: b.wrap };
    tc.validate()?;
    let mut t = Table::new(
        "qcoll.test.v1",
        &["instance", "label", "n", "d", "mode", "delta", "mu", "trials", "accepts", "rejects", "fails", "accept_rate", "wilson_lo", "wilson_hi"],
    );
    let mut jsonl = String::new();
    for (k, spec) in b.instances.iter().enumerate() {
        let c = spec.build(cfg.seed, k as u64)?;
        let (n, d) = (c.n(), c.dim());
        let src: Box<dyn OutcomeSource> = match b.source {
            SourceKind::Surrogate => Box::new(GaussianSurrogate::new(c)),
            SourceKind::Oracle => Box::new(OutcomeOracle::new(c)),
        };
        let s = run_trials(src.as_ref(), &tc, b.trials, derive_seed(cfg.seed, domain::TEST, k as u64))?;
        let label = spec.label();
        for r in &s.records {
            jsonl.push_str(&serde_json::to_string(&VerdictLine { instance: k, label: &label, record: r })?);
            jsonl.push('\n');
        }
        let mode = serde_json::to_value(b.mode)?["kind"].as_str().unwrap_or_default().to_string();
        t.push(vec![
            k.to_string(),
            label,
            n.to_string(),
            d.to_string(),
            mode,
            fmt_f64(b.mode.delta()),
            fmt_f64(tc.mu(n)),
            s.trials.to_string(),
            s.accepts.to_string(),
            s.rejects.to_string(),
            s.fails.to_string(),
            fmt_f64(s.accept_rate),
            fmt_f64(s.wilson.0),
            fmt_f64(s.wilson.1),
        ]);
    }
    Ok(vec![Output { name: "test_verdicts.jsonl".into(), contents: jsonl }, csv("test_summary.csv", &t, cfg)])
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<Output>> {
    let r = run_sweep(&cfg.sweep, derive_seed(cfg.seed, domain::SWEEP, 0))?;
    let mut cells = Table::new("qcoll.sweep.v1", &["replicate", "n", "d", "epsilon", "delta", "mu_min", "accept_a", "accept_b"]);
    for c in &r.cells {
        cells.push(vec![
            c.replicate.to_string(),
            c.n.to_string(),
            c.d.to_string(),
            fmt_f64(c.epsilon),
            fmt_f64(c.delta),
            fmt_f64(c.mu_min),
            fmt_f64(c.accept_a),
            fmt_f64(c.accept_b),
        ]);
    }
    let mut slopes = Table::new("qcoll.sweep_slopes.v1", &["axis", "value", "ci_lo", "ci_hi", "replicates", "per_replicate"]);
    let joined = |xs: &[f64]| xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";");
    for s in &r.slopes {
        slopes.push(vec![
            s.axis.clone(),
            fmt_f64(s.mean),
            fmt_f64(s.ci_lo),
            fmt_f64(s.ci_hi),
            s.per_replicate.len().to_string(),
            joined(&s.per_replicate),
        ]);
    }
    if !r.doubling_ratios.is_empty() {
        let (mean, lo, hi) = super::sweep::t_interval(&r.doubling_ratios);
        slopes.push(vec![
            "eps_doubling_ratio".into(),
            fmt_f64(mean),
            fmt_f64(lo),
            fmt_f64(hi),
            r.doubling_ratios.len().to_string(),
            joined(&r.doubling_ratios),
        ]);
    }
    Ok(vec![csv("sweep_cells.csv", &cells, cfg), csv("sweep_slopes.csv", &slopes, cfg)])
}

pub fn lowerbound_rows(cfg: &ExperimentConfig) -> Result<Vec<BoundRow>> {
    let b = &cfg.lowerbound;
    let mut rows = trace_distance_grid(b.d, &b.ns, &b.epsilons, b.max_m)?;
    for &eps in &b.epsilons {
        for n in 1..=b.chi2_max_n {
            let (lhs, rhs) = chi2_sw_bound_check(n, b.d, eps)?;
            rows.push(BoundRow::new("chi2_sw", b.d, 1, eps, n, lhs, rhs));
        }
    }
    let far = far_probability(b.d, b.far_n, b.far_epsilon, b.far_trials, derive_seed(cfg.seed, domain::LOWERBOUND, 0))?;
    let p: f64 = 11.0 / 15.0;
    let floor = p - 3.0 * (p * (1.0 - p) / b.far_trials as f64).sqrt();
    // the claim is frequency >= floor, so the floor sits on the left
    rows.push(BoundRow::new("far_probability", b.d, b.far_n, b.far_epsilon, 0, floor, far.frequency));
    Ok(rows)
}

pub fn cmd_lowerbound(cfg: &ExperimentConfig) -> Result<Vec<Output>> {
    let mut t = Table::new("qcoll.lowerbound.v1", &["check", "d", "n", "epsilon", "m", "lhs", "rhs", "slack"]);
    for r in lowerbound_rows(cfg)? {
        t.push(vec![
            r.check.clone(),
            r.d.to_string(),
            r.n.to_string(),
            fmt_f64(r.epsilon),
            r.m.to_string(),
            fmt_f64(r.lhs),
            fmt_f64(r.rhs),
            fmt_f64(r.slack),
        ]);
    }
    Ok(vec![csv("lowerbound.csv", &t, cfg)])
}

/// Smallest `C` with `Var <= C N / mu^2 + 16 M^2 / mu` on every row, and the smallest
/// `b` with `sqrt(b N) / delta >= mu_min` on every sweep cell.
pub fn cmd_calibrate(cfg: &ExperimentConfig) -> Result<Vec<Output>> {
    let b = &cfg.calibrate;
    let mut rows = Table::new("qcoll.calibrate_variance.v1", &["instance", "label", "n", "mu", "variance", "m_hs_sq", "c_needed"]);
    let mut c_fit = f64::NEG_INFINITY;
    for (k, spec) in b.instances.iter().enumerate() {
        let c = spec.build(cfg.seed, k as u64)?;
        let target = m_hs_sq(&c)?;
        for &mu in &b.mus {
            let v = variance_exact(&c, &EstimatorParams::for_collection(&c, mu)?, b.tail)?.variance;
            let need = (v - 16.0 * target / mu) * mu * mu / c.n() as f64;
            c_fit = c_fit.max(need);
            rows.push(vec![
                k.to_string(),
                spec.label(),
                c.n().to_string(),
                fmt_f64(mu),
                fmt_f64(v),
                fmt_f64(target),
                fmt_f64(need),
            ]);
        }
    }
    let sweep = run_sweep(&cfg.sweep, derive_seed(cfg.seed, domain::CALIBRATE, 0))?;
    let b_fit = sweep.cells.iter().map(|c| (c.mu_min * c.delta).powi(2) / c.n as f64).fold(f64::NEG_INFINITY, f64::max);
    let mut fit = Table::new("qcoll.calibrate.v1", &["parameter", "fitted", "frozen"]);
    fit.push(vec!["variance_constant".into(), fmt_f64(c_fit), fmt_f64(VARIANCE_CONSTANT)]);
    fit.push(vec!["b_const".into(), fmt_f64(b_fit), fmt_opt(Some(cfg.test.b_const))]);
    Ok(vec![csv("calibrate.csv", &fit, cfg), csv("calibrate_variance.csv", &rows, cfg)])
}

pub struct VerifyReport {
    pub outcomes: Vec<CheckOutcome>,
    pub output: Output,
}

impl VerifyReport {
    pub fn exit_code(&self) -> i32 {
        i32::from(!failures(&self.outcomes).is_empty())
    }

    pub fn lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .outcomes
            .iter()
            .map(|o| {
                let tag = match (o.passed, o.soft) {
                    (true, _) => "ok",
                    (false, true) => "soft-fail",
                    (false, false) => "FAIL",
                };
                format!("{:<10} {:<12} {:<30} {:>7.2}s  {}", tag, o.group, o.name, o.seconds, o.detail)
            })
            .collect();
        for c in criteria(&self.outcomes) {
            out.push(format!("criterion {}: {}{}", c.criterion, if c.passed { "PASS" } else { "FAIL" }, if c.soft { " (soft)" } else { "" }));
        }
        out
    }
}

/// Runs the suite; `verify.jsonl` lists every outcome, failures first.
pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<VerifyReport> {
    let ctx = VerifyContext { seed: cfg.seed, mutate: cfg.verify.mutate };
    let outcomes = run_checks(&ctx, cfg.filter.as_deref());
    let mut sorted: Vec<&CheckOutcome> = outcomes.iter().collect();
    sorted.sort_by_key(|o| o.passed || o.soft);
    let mut jsonl = String::new();
    for o in sorted {
        jsonl.push_str(&serde_json::to_string(o)?);
        jsonl.push('\n');
    }
    Ok(VerifyReport { outcomes, output: Output { name: "verify.jsonl".into(), contents: jsonl } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::InstanceSpec;
    use crate::tester::TestMode;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.estimate.instances = vec![InstanceSpec::MaximallyMixed { d: 2, n: 2 }, InstanceSpec::BasisStates { d: 2, n: 2 }];
        cfg.estimate.mus = vec![2.0];
        cfg.test.trials = 50;
        cfg
    }

    fn column(out: &Output, name: &str) -> Vec<String> {
        let mut lines = out.contents.lines().skip(1);
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let k = header.iter().position(|h| *h == name).unwrap();
        lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
    }

    #[test]
    fn estimate_rows() {
        let out = cmd_estimate(&small()).unwrap();
        let mean: Vec<f64> = column(&out[0], "mean").iter().map(|x| x.parse().unwrap()).collect();
        assert!(mean[0].abs() < 1e-8);
        assert!((mean[1] - 1.0).abs() < 1e-8);
        let var: Vec<f64> = column(&out[0], "variance").iter().map(|x| x.parse().unwrap()).collect();
        let rhs: Vec<f64> = column(&out[0], "bound_rhs").iter().map(|x| x.parse().unwrap()).collect();
        assert!(var.iter().zip(&rhs).all(|(v, r)| v <= r));
        assert!(out[0].contents.starts_with("# schema=qcoll.estimate.v1 config="));
    }

    #[test]
    fn test_is_deterministic() {
        let cfg = small();
        let a = cmd_test(&cfg).unwrap();
        let b = cmd_test(&cfg).unwrap();
        assert_eq!(a, b);
        let rates: Vec<f64> = column(&a[1], "accept_rate").iter().map(|x| x.parse().unwrap()).collect();
        assert!(rates[0] >= 2.0 / 3.0 && rates[1] <= 1.0 / 3.0);
        assert_eq!(a[0].contents.lines().count(), 100);
    }

    #[test]
    fn hs_mode_summary_names_the_mode() {
        let mut cfg = small();
        cfg.test.mode = TestMode::Hs { delta: 0.5 };
        let out = cmd_test(&cfg).unwrap();
        assert_eq!(column(&out[1], "mode")[0], "hs");
    }

    #[test]
    fn lowerbound_single_copy_rows_are_zero() {
        let mut cfg = ExperimentConfig::default();
        cfg.lowerbound.ns = vec![2];
        cfg.lowerbound.epsilons = vec![0.1];
        cfg.lowerbound.max_m = 3;
        cfg.lowerbound.chi2_max_n = 2;
        cfg.lowerbound.far_trials = 50;
        let rows = lowerbound_rows(&cfg).unwrap();
        let m1 = rows.iter().find(|r| r.check == "trace_distance_ab" && r.m == 1).unwrap();
        assert_eq!(m1.lhs, 0.0);
        assert!(rows.iter().any(|r| r.check == "far_probability"));
    }
}
