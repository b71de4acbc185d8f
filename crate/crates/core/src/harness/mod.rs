//! Experiment plumbing behind the `qcoll` binary: configuration, seed derivation,
//! versioned CSV/JSONL output and the per-command drivers.

pub mod checks;
pub mod commands;
pub mod sweep;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::collection::{families, Collection};
use crate::error::{Error, Result};
use crate::lowerbound::sample_hard_collection;
use crate::tester::{trial_rng, TestMode};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Stream domains for [`derive_rng`]. Each command draws from its own domain so adding
/// trials to one never shifts another.
pub mod domain {
    pub const INSTANCE: u64 = 1;
    pub const TEST: u64 = 2;
    pub const SWEEP: u64 = 3;
    pub const LOWERBOUND: u64 = 4;
    pub const VERIFY: u64 = 5;
    pub const CALIBRATE: u64 = 6;
}

/// Child seed for `(domain, index)` under the master seed: ChaCha8 keyed by the master
/// seed, stream `domain << 32 | index`, first output word.
pub fn derive_seed(master: u64, domain: u64, index: u64) -> u64 {
    use rand::RngCore;
    derive_rng(master, domain, index).next_u64()
}

pub fn derive_rng(master: u64, domain: u64, index: u64) -> ChaCha8Rng {
    trial_rng(master, (domain << 32) | (index & 0xffff_ffff))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InstanceSpec {
    MaximallyMixed { d: usize, n: usize },
    BasisStates { d: usize, n: usize },
    Random { d: usize, n: usize, rank: usize },
    Hard { d: usize, n: usize, epsilon: f64 },
    File { path: PathBuf },
}

impl InstanceSpec {
    pub fn label(&self) -> String {
        match self {
            InstanceSpec::MaximallyMixed { d, n } => format!("maximally_mixed_d{d}_n{n}"),
            InstanceSpec::BasisStates { d, n } => format!("basis_states_d{d}_n{n}"),
            InstanceSpec::Random { d, n, rank } => format!("random_d{d}_n{n}_r{rank}"),
            InstanceSpec::Hard { d, n, epsilon } => format!("hard_d{d}_n{n}_e{epsilon}"),
            InstanceSpec::File { path } => path.display().to_string(),
        }
    }

    /// Random families draw from `(seed, INSTANCE, index)`.
    pub fn build(&self, seed: u64, index: u64) -> Result<Collection> {
        let mut rng = derive_rng(seed, domain::INSTANCE, index);
        match self {
            InstanceSpec::MaximallyMixed { d, n } => families::maximally_mixed(*d, *n),
            InstanceSpec::BasisStates { d, n } => families::basis_states(*d, *n),
            InstanceSpec::Random { d, n, rank } => families::random(*d, *n, *rank, &mut rng),
            InstanceSpec::Hard { d, n, epsilon } => Ok(sample_hard_collection(*d, *n, *epsilon, &mut rng)?.collection),
            InstanceSpec::File { path } => Collection::load(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateBlock {
    pub instances: Vec<InstanceSpec>,
    pub mus: Vec<f64>,
    pub tail: f64,
}

impl Default for EstimateBlock {
    fn default() -> Self {
        Self {
            instances: vec![
                InstanceSpec::MaximallyMixed { d: 2, n: 3 },
                InstanceSpec::BasisStates { d: 2, n: 2 },
                InstanceSpec::Random { d: 2, n: 3, rank: 2 },
                InstanceSpec::Random { d: 3, n: 2, rank: 3 },
            ],
            mus: vec![1.0, 2.0, 4.0, 16.0],
            tail: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Surrogate,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestBlock {
    pub instances: Vec<InstanceSpec>,
    pub mode: TestMode,
    pub mu_override: Option<f64>,
    pub repetitions: usize,
    pub b_const: f64,
    pub wrap: bool,
    pub trials: usize,
    pub source: SourceKind,
}

impl Default for TestBlock {
    fn default() -> Self {
        Self {
            instances: vec![InstanceSpec::MaximallyMixed { d: 2, n: 2 }, InstanceSpec::BasisStates { d: 2, n: 2 }],
            mode: TestMode::Trace { epsilon: 0.25, d: 2 },
            mu_override: None,
            repetitions: 1,
            b_const: 1.0,
            wrap: true,
            trials: 200,
            source: SourceKind::Surrogate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepBlock {
    pub ns: Vec<usize>,
    pub ds: Vec<usize>,
    pub epsilon: f64,
    pub trials: usize,
    pub target: f64,
    pub replicates: usize,
    pub mu_budget: f64,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            ns: vec![2, 4, 8, 16],
            ds: vec![2, 4],
            epsilon: 0.05,
            trials: 4000,
            target: 2.0 / 3.0,
            replicates: 10,
            mu_budget: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowerBoundBlock {
    pub d: usize,
    pub ns: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub max_m: usize,
    pub chi2_max_n: usize,
    pub far_n: usize,
    pub far_epsilon: f64,
    pub far_trials: usize,
}

impl Default for LowerBoundBlock {
    fn default() -> Self {
        Self {
            d: 2,
            ns: vec![2, 4, 16],
            epsilons: vec![0.05, 0.1],
            max_m: 6,
            chi2_max_n: 8,
            far_n: 10,
            far_epsilon: 0.05,
            far_trials: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateBlock {
    pub instances: Vec<InstanceSpec>,
    pub mus: Vec<f64>,
    pub tail: f64,
}

impl Default for CalibrateBlock {
    fn default() -> Self {
        Self {
            instances: vec![
                InstanceSpec::BasisStates { d: 2, n: 2 },
                InstanceSpec::BasisStates { d: 3, n: 3 },
                InstanceSpec::Random { d: 2, n: 3, rank: 1 },
                InstanceSpec::Random { d: 3, n: 3, rank: 2 },
                InstanceSpec::Hard { d: 2, n: 3, epsilon: 0.1 },
            ],
            mus: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            tail: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyBlock {
    /// Perturb one covariance coefficient; every check that uses it must then fail.
    pub mutate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub filter: Option<String>,
    pub estimate: EstimateBlock,
    pub test: TestBlock,
    pub sweep: SweepBlock,
    pub lowerbound: LowerBoundBlock,
    pub calibrate: CalibrateBlock,
    pub verify: VerifyBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: None,
            out: PathBuf::from("out"),
            filter: None,
            estimate: Default::default(),
            test: Default::default(),
            sweep: Default::default(),
            lowerbound: Default::default(),
            calibrate: Default::default(),
            verify: Default::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        let s = &self.sweep;
        if s.ns.is_empty() || s.ds.is_empty() || s.trials == 0 || s.replicates == 0 {
            return Err(Error::Config("sweep grid, trials and replicates must be non-empty".into()));
        }
        if !(s.target > 0.5 && s.target < 1.0) {
            return Err(Error::Config(format!("sweep target must be in (1/2, 1), got {}", s.target)));
        }
        if self.test.trials == 0 {
            return Err(Error::Config("test trials must be positive".into()));
        }
        if self.estimate.mus.iter().chain(&self.calibrate.mus).any(|&m| !(m > 0.0)) {
            return Err(Error::Config("every mu must be positive".into()));
        }
        Ok(())
    }

    /// Canonical JSON; the hash is over these bytes.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON, with `out` and
    /// `workers` cleared: neither changes any result.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.workers = None;
        hex::encode(&Sha256::digest(c.canonical_json().as_bytes())[..8])
    }
}

/// A CSV table with a fixed, versioned schema.
#[derive(Debug, Clone)]
pub struct Table {
    pub schema: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: &'static str, columns: &[&'static str]) -> Self {
        Self { schema, columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width for {}", self.schema);
        self.rows.push(row);
    }

    /// `# schema=<id> config=<hash> version=<v>`, the header row, then the data.
    pub fn render(&self, config_hash: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# schema={} config={} version={}", self.schema, config_hash, TOOL_VERSION);
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let k = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r[k].as_str()).collect())
    }
}

/// Shortest round-trip representation, so identical runs give identical bytes.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip_and_hash() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_json(&cfg.canonical_json()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
        let mut other = cfg.clone();
        other.seed = 2;
        assert_ne!(cfg.hash(), other.hash());
        assert_eq!(cfg.hash().len(), 16);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"seed": 7, "sweep": {"ns": [2, 4]}}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.sweep.ns, vec![2, 4]);
        assert_eq!(cfg.sweep.ds, vec![2, 4]);
        assert!(ExperimentConfig::from_json(r#"{"seeed": 7}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"sweep": {"target": 0.4}}"#).is_err());
    }

    #[test]
    fn seeds_are_split_by_domain() {
        assert_eq!(derive_seed(5, domain::TEST, 3), derive_seed(5, domain::TEST, 3));
        assert_ne!(derive_seed(5, domain::TEST, 3), derive_seed(5, domain::SWEEP, 3));
        assert_ne!(derive_seed(5, domain::TEST, 3), derive_seed(5, domain::TEST, 4));
    }

    #[test]
    fn table_render() {
        let mut t = Table::new("qcoll.demo.v1", &["a", "b"]);
        t.push(vec![fmt_f64(0.1), fmt_f64(2.0)]);
        let s = t.render("abcd");
        assert_eq!(s, "# schema=qcoll.demo.v1 config=abcd version=0.1.0\na,b\n0.1,2.0\n");
        assert_eq!(t.column("b").unwrap(), vec!["2.0"]);
    }

    #[test]
    fn instances_are_seeded() {
        let spec = InstanceSpec::Random { d: 2, n: 3, rank: 2 };
        let a = spec.build(9, 0).unwrap();
        let b = spec.build(9, 0).unwrap();
        let c = spec.build(9, 1).unwrap();
        assert_eq!(a.states()[0].matrix(), b.states()[0].matrix());
        assert_ne!(a.states()[0].matrix(), c.states()[0].matrix());
    }
}
