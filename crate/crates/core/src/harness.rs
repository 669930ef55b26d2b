//! Seeded experiment orchestration and artifact persistence.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::class::LocalityClass;
use crate::dual_search::{batch_trial, search_duals, Classification, SearchOptions, SearchReport, SearchSpace};
use crate::equivalence::{
    decide_equivalent, isospectral_inequivalence_probe, EquivalenceOptions, GroupKind, ProbeReport, VerdictKind,
    PROBE_STARTS,
};
use crate::error::{Error, Result};
use crate::io::{to_pretty, ClassRef};
use crate::json::{derive_seed, digest_complex};
use crate::kernel::{certify_finite_duals, verify_locality_lemma, CertificateReport, CertifyOptions, LemmaReport, Verdict};
use crate::models::{build_ising, build_ising_dual, sample_hamiltonian};
use crate::operator::OperatorExpr;

pub const EXPERIMENT_FORMAT: &str = "tps-spectra/experiment.v1";
pub const METADATA_FORMAT: &str = "tps-spectra/experiment-meta.v1";
pub const REPORT_FILE: &str = "report.json";
pub const METADATA_FILE: &str = "metadata.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Statement1,
    Statement2,
    Statement3,
    IsingDual,
    LemmaCheck,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CustomTask {
    Certify,
    Search,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_rank")]
    pub rank: f64,
    #[serde(default = "default_success")]
    pub success: f64,
    #[serde(default = "default_equiv")]
    pub equiv: f64,
}

fn default_rank() -> f64 {
    crate::kernel::DEFAULT_RANK_TOL
}

fn default_success() -> f64 {
    1e-8
}

fn default_equiv() -> f64 {
    crate::equivalence::DEFAULT_ACCEPT_TOL
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rank: default_rank(), success: default_success(), equiv: default_equiv() }
    }
}

/// Experiment description. Unset fields take per-experiment defaults; the
/// report stores the resolved form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Certification class (statements 1 and 2) or the class for `custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<ClassRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<CustomTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complexified: Option<bool>,
    /// Ising coupling and field for `ising_dual`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            n: None,
            class: None,
            task: None,
            trials: None,
            starts: None,
            complexified: None,
            j: None,
            h: None,
            seed: 0,
            tolerances: Tolerances::default(),
            out: None,
        }
    }

    /// Fills every unset field and checks the combination.
    pub fn resolved(&self) -> Result<Self> {
        use ExperimentKind::*;
        let mut c = self.clone();
        let k2 = || Some(ClassRef { name: "k_local".into(), k: Some(2) });
        match c.experiment {
            Statement1 | Statement2 => {
                c.n.get_or_insert(10);
                c.trials.get_or_insert(5);
                if c.class.is_none() {
                    c.class = k2();
                }
            }
            Statement3 => {
                c.n.get_or_insert(6);
                c.trials.get_or_insert(50);
                c.starts.get_or_insert(5);
                c.complexified.get_or_insert(true);
            }
            IsingDual => {
                c.n.get_or_insert(6);
                c.trials.get_or_insert(1);
                c.starts.get_or_insert(200);
                c.complexified.get_or_insert(false);
                c.j.get_or_insert(1.0);
                c.h.get_or_insert(0.7);
            }
            LemmaCheck => {
                c.n.get_or_insert(3);
            }
            Custom => {
                if c.class.is_none() || c.n.is_none() {
                    return Err(Error::Precondition("custom experiments need `class` and `n`".into()));
                }
                let task = *c.task.get_or_insert(CustomTask::Certify);
                c.trials.get_or_insert(1);
                if task == CustomTask::Search {
                    c.starts.get_or_insert(20);
                    c.complexified.get_or_insert(false);
                }
            }
        }
        if c.trials == Some(0) || c.starts == Some(0) {
            return Err(Error::Precondition("trials and starts must be positive".into()));
        }
        let t = c.tolerances;
        if [t.rank, t.success, t.equiv].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Precondition("tolerances must be positive and finite".into()));
        }
        Ok(c)
    }

    fn n(&self) -> usize {
        self.n.expect("resolved")
    }

    fn class(&self) -> Result<LocalityClass> {
        let r = self.class.as_ref().expect("resolved");
        LocalityClass::build(&r.name, self.n(), r.k)
    }

    fn search_options(&self) -> SearchOptions {
        SearchOptions {
            success_tol: self.tolerances.success,
            equivalence_tol: self.tolerances.equiv,
            ..Default::default()
        }
    }

    fn certify_options(&self) -> CertifyOptions {
        CertifyOptions { rank_tol: self.tolerances.rank, ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub start: usize,
    pub probe: ProbeReport,
    /// Residual of the equivalence search against the known dual realization.
    pub reference_dual_residual: f64,
    pub matches_reference_dual: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub j: f64,
    pub h: f64,
    pub search: SearchReport,
    /// Some converged minimum is trivially equivalent to the reference.
    pub recovered_reference: bool,
    pub probes: Vec<ProbeEntry>,
}

impl DualityReport {
    pub fn probable_duals(&self) -> usize {
        self.probes.iter().filter(|p| p.probe.probable_dual).count()
    }

    pub fn reference_dual_matches(&self) -> usize {
        self.probes.iter().filter(|p| p.matches_reference_dual).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModuleReport {
    Certificate { report: CertificateReport },
    Search { report: SearchReport },
    Duality { report: DualityReport },
    Lemma { report: LemmaReport },
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub input_digest: String,
    pub report: ModuleReport,
    /// Kept out of the report; see [`ExperimentMetadata`].
    #[serde(skip)]
    pub wall_ms: u64,
}

/// Columns of the flattened CSV export.
pub const CSV_COLUMNS: [&str; 17] = [
    "trial",
    "seed",
    "input_digest",
    "kind",
    "verdict",
    "dim_ker_M",
    "expected",
    "gap_ratio",
    "converged",
    "trivial_equivalent",
    "candidate_dual",
    "non_converged",
    "probable_dual",
    "reference_dual_matches",
    "dim_found",
    "dim_expected",
    "message",
];

impl TrialRecord {
    /// Scalar fields in [`CSV_COLUMNS`] order; blank where not applicable.
    pub fn csv_fields(&self) -> Vec<String> {
        let mut f: BTreeMap<&str, String> = BTreeMap::new();
        let search = |f: &mut BTreeMap<&str, String>, r: &SearchReport| {
            f.insert("converged", r.aggregate.converged.to_string());
            f.insert("trivial_equivalent", r.aggregate.trivial_equivalent.to_string());
            f.insert("candidate_dual", r.aggregate.candidate_dual.to_string());
            f.insert("non_converged", r.aggregate.non_converged.to_string());
        };
        let kind = match &self.report {
            ModuleReport::Certificate { report } => {
                f.insert("verdict", serde_json::to_value(report.verdict).unwrap().as_str().unwrap().to_string());
                f.insert("dim_ker_M", report.dim_ker_m.to_string());
                f.insert("expected", report.expected.to_string());
                f.insert("gap_ratio", report.gap_ratio.to_string());
                "certificate"
            }
            ModuleReport::Search { report } => {
                search(&mut f, report);
                "search"
            }
            ModuleReport::Duality { report } => {
                search(&mut f, &report.search);
                f.insert("probable_dual", report.probable_duals().to_string());
                f.insert("reference_dual_matches", report.reference_dual_matches().to_string());
                "duality"
            }
            ModuleReport::Lemma { report } => {
                f.insert("dim_found", report.dim_found.to_string());
                f.insert("dim_expected", report.dim_expected.to_string());
                f.insert("gap_ratio", report.gap_ratio.to_string());
                "lemma"
            }
            ModuleReport::Error { message } => {
                f.insert("message", message.clone());
                "error"
            }
        };
        f.insert("trial", self.trial.to_string());
        f.insert("seed", self.seed.to_string());
        f.insert("input_digest", self.input_digest.clone());
        f.insert("kind", kind.to_string());
        CSV_COLUMNS.iter().map(|c| f.remove(c).unwrap_or_default()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment: ExperimentKind,
    pub trials: usize,
    pub errors: usize,
    pub success: bool,
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub config: ExperimentConfig,
    pub summary: ExperimentSummary,
    pub trials: Vec<TrialRecord>,
}

/// Timing information, written apart from the deterministic report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMetadata {
    pub format: String,
    pub started_unix_ms: u64,
    pub total_ms: u64,
    pub threads: usize,
    pub trial_wall_ms: Vec<u64>,
}

struct Trial {
    seed: u64,
    digest: String,
    report: Result<ModuleReport>,
}

/// The generator behind every sampled instance.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sample(class: LocalityClass, seed: u64) -> OperatorExpr {
    sample_hamiltonian(Arc::new(class), &mut rng_from_seed(seed))
}

fn certificate_trial(cfg: &ExperimentConfig, t: usize, h0_class: Result<LocalityClass>) -> Trial {
    let seed = derive_seed(cfg.seed, &[t as u64]);
    let run = || -> Result<(String, ModuleReport)> {
        let h0 = sample(h0_class?, seed);
        let mut report = certify_finite_duals(&h0, &cfg.class()?, &cfg.certify_options())?;
        report.seed = Some(seed);
        Ok((digest_complex(h0.coeffs()), ModuleReport::Certificate { report }))
    };
    split(seed, run())
}

fn split(seed: u64, r: Result<(String, ModuleReport)>) -> Trial {
    match r {
        Ok((digest, report)) => Trial { seed, digest, report: Ok(report) },
        Err(e) => Trial { seed, digest: String::new(), report: Err(e) },
    }
}

fn search_trial(cfg: &ExperimentConfig, t: usize, space: &SearchSpace) -> Trial {
    match batch_trial(t, cfg.starts.expect("resolved"), space, cfg.seed, &cfg.search_options()) {
        Ok(b) => Trial { seed: b.seed, digest: digest_complex(&b.h0), report: Ok(ModuleReport::Search { report: b.report }) },
        Err(e) => Trial { seed: derive_seed(cfg.seed, &[t as u64]), digest: String::new(), report: Err(e) },
    }
}

/// Boundary-class search against the open Ising chain, followed by an
/// inequivalence probe of every candidate and a comparison with the known dual.
fn duality_trial(cfg: &ExperimentConfig, t: usize) -> Trial {
    let seed = derive_seed(cfg.seed, &[t as u64]);
    let (j, h) = (cfg.j.expect("resolved"), cfg.h.expect("resolved"));
    let run = || -> Result<(String, ModuleReport)> {
        let n = cfg.n();
        let class = Arc::new(LocalityClass::boundary(n)?);
        let lift = |e: OperatorExpr| OperatorExpr::from_pauli_sum(class.clone(), &e.pauli_sum(), 1e-12);
        let h0 = lift(build_ising(n, j, h, true)?)?;
        let dual = lift(build_ising_dual(n, j, h)?)?;
        let complexified = cfg.complexified.expect("resolved");
        let space = SearchSpace::new(class.clone(), complexified);
        let search = search_duals(&h0, &space, cfg.starts.expect("resolved"), derive_seed(seed, &[0]), &cfg.search_options())?;
        let group = if complexified { GroupKind::Complexified } else { GroupKind::Unitary };
        let probes = search
            .minima
            .par_iter()
            .filter(|m| m.classification == Classification::CandidateDual)
            .map(|m| {
                let found = space.expr(&m.params)?;
                let s = derive_seed(seed, &[1, m.start as u64]);
                let base = EquivalenceOptions { group, accept_tol: cfg.tolerances.equiv, seed: s, ..Default::default() };
                let probe = isospectral_inequivalence_probe(&h0, &found, &EquivalenceOptions { starts: PROBE_STARTS, ..base })?;
                let against_dual = decide_equivalent(&dual, &found, &base)?;
                Ok(ProbeEntry {
                    start: m.start,
                    probe,
                    reference_dual_residual: against_dual.residual,
                    matches_reference_dual: against_dual.verdict == VerdictKind::Equivalent,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let recovered_reference =
            search.minima.iter().any(|m| m.classification == Classification::TrivialEquivalent);
        let digest = digest_complex(h0.coeffs());
        Ok((digest, ModuleReport::Duality { report: DualityReport { j, h, search, recovered_reference, probes } }))
    };
    split(seed, run())
}

fn lemma_trial(cfg: &ExperimentConfig, n: usize, k: usize) -> Trial {
    let seed = derive_seed(cfg.seed, &[n as u64, k as u64]);
    let digest = digest_complex(&[Complex64::new(n as f64, k as f64)]);
    Trial { seed, digest, report: verify_locality_lemma(n, k).map(|report| ModuleReport::Lemma { report }) }
}

fn summarize(cfg: &ExperimentConfig, trials: &[TrialRecord]) -> ExperimentSummary {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut bump = |k: &str, v: usize| *counts.entry(k.to_string()).or_default() += v;
    let mut errors = 0;
    for t in trials {
        match &t.report {
            ModuleReport::Certificate { report } => match report.verdict {
                Verdict::Pass => bump("pass", 1),
                Verdict::Fail => bump("fail", 1),
                Verdict::Ambiguous => bump("ambiguous", 1),
            },
            ModuleReport::Search { report } => {
                bump("starts_total", report.starts);
                bump("starts_converged", report.aggregate.converged);
                bump("converged_trivial", report.aggregate.trivial_equivalent);
                bump("converged_candidate", report.aggregate.candidate_dual);
            }
            ModuleReport::Duality { report } => {
                bump("starts_total", report.search.starts);
                bump("starts_converged", report.search.aggregate.converged);
                bump("converged_trivial", report.search.aggregate.trivial_equivalent);
                bump("converged_candidate", report.search.aggregate.candidate_dual);
                bump("recovered_reference", report.recovered_reference as usize);
                bump("probable_dual", report.probable_duals());
                bump("reference_dual_matches", report.reference_dual_matches());
            }
            ModuleReport::Lemma { report } => {
                if report.full_space {
                    bump("full_space", 1);
                } else if report.dim_found == report.dim_expected {
                    bump("matches", 1);
                } else {
                    bump("mismatches", 1);
                }
            }
            ModuleReport::Error { .. } => errors += 1,
        }
    }
    let get = |k: &str| counts.get(k).copied().unwrap_or(0);
    let success = errors == 0
        && match cfg.experiment {
            ExperimentKind::Statement1 | ExperimentKind::Statement2 => get("pass") == trials.len(),
            ExperimentKind::Statement3 => get("converged_candidate") == 0,
            ExperimentKind::IsingDual => get("recovered_reference") == trials.len() && get("reference_dual_matches") > 0,
            ExperimentKind::LemmaCheck => get("mismatches") == 0,
            ExperimentKind::Custom => cfg.task != Some(CustomTask::Certify) || get("pass") == trials.len(),
        };
    ExperimentSummary { experiment: cfg.experiment, trials: trials.len(), errors, success, counts }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentReport, ExperimentMetadata)> {
    run_experiment_with(cfg, &|_| {})
}

/// Runs every trial, calling `on_record` as each finishes (in completion
/// order). Trial failures are recorded, not propagated; only an invalid
/// configuration is an error.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    on_record: &(dyn Fn(&TrialRecord) + Sync),
) -> Result<(ExperimentReport, ExperimentMetadata)> {
    let resolved = cfg.resolved()?;
    let cfg = &resolved;
    let started = Instant::now();
    let started_unix_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
    let n = cfg.n();
    let trials = cfg.trials.unwrap_or(0);
    let jobs: Vec<Box<dyn Fn() -> Trial + Send + Sync + '_>> = match cfg.experiment {
        ExperimentKind::Statement1 => {
            cfg.class()?;
            (0..trials)
                .map(|t| Box::new(move || certificate_trial(cfg, t, cfg.class())) as Box<dyn Fn() -> Trial + Send + Sync>)
                .collect()
        }
        ExperimentKind::Statement2 => {
            cfg.class()?;
            (0..trials)
                .map(|t| {
                    Box::new(move || certificate_trial(cfg, t, LocalityClass::nn_chain(n, false)))
                        as Box<dyn Fn() -> Trial + Send + Sync>
                })
                .collect()
        }
        ExperimentKind::Statement3 => {
            let space = Arc::new(SearchSpace::ti_gauge_fixed(n, cfg.complexified.expect("resolved"))?);
            (0..trials)
                .map(|t| {
                    let space = space.clone();
                    Box::new(move || search_trial(cfg, t, &space)) as Box<dyn Fn() -> Trial + Send + Sync>
                })
                .collect()
        }
        ExperimentKind::IsingDual => {
            LocalityClass::boundary(n)?;
            (0..trials).map(|t| Box::new(move || duality_trial(cfg, t)) as Box<dyn Fn() -> Trial + Send + Sync>).collect()
        }
        ExperimentKind::LemmaCheck => (2..=n)
            .flat_map(|m| (1..=m).map(move |k| (m, k)))
            .map(|(m, k)| Box::new(move || lemma_trial(cfg, m, k)) as Box<dyn Fn() -> Trial + Send + Sync>)
            .collect(),
        ExperimentKind::Custom => {
            let class = cfg.class()?;
            match cfg.task.expect("resolved") {
                CustomTask::Certify => (0..trials)
                    .map(|t| Box::new(move || certificate_trial(cfg, t, cfg.class())) as Box<dyn Fn() -> Trial + Send + Sync>)
                    .collect(),
                CustomTask::Search => {
                    let space = Arc::new(SearchSpace::new(Arc::new(class), cfg.complexified.expect("resolved")));
                    (0..trials)
                        .map(|t| {
                            let space = space.clone();
                            Box::new(move || search_trial(cfg, t, &space)) as Box<dyn Fn() -> Trial + Send + Sync>
                        })
                        .collect()
                }
            }
        }
    };
    let records: Vec<TrialRecord> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, job)| {
            let t0 = Instant::now();
            let trial = job();
            let report = trial.report.unwrap_or_else(|e| ModuleReport::Error { message: e.to_string() });
            let rec = TrialRecord {
                trial: i,
                seed: trial.seed,
                input_digest: trial.digest,
                report,
                wall_ms: t0.elapsed().as_millis() as u64,
            };
            on_record(&rec);
            rec
        })
        .collect();
    let summary = summarize(cfg, &records);
    let metadata = ExperimentMetadata {
        format: METADATA_FORMAT.into(),
        started_unix_ms,
        total_ms: started.elapsed().as_millis() as u64,
        threads: rayon::current_num_threads(),
        trial_wall_ms: records.iter().map(|r| r.wall_ms).collect(),
    };
    let report = ExperimentReport { format: EXPERIMENT_FORMAT.into(), config: cfg.clone(), summary, trials: records };
    Ok((report, metadata))
}

/// Writes `report.json` and `metadata.json` into `dir`.
pub fn persist(dir: &Path, report: &ExperimentReport, metadata: &ExperimentMetadata) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(REPORT_FILE), to_pretty(report))?;
    std::fs::write(dir.join(METADATA_FILE), to_pretty(metadata))?;
    Ok(())
}
