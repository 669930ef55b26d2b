use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, Mutex};

use clap::{Parser, Subcommand, ValueEnum};
use tps_spectra::dual_search::{search_duals, SearchOptions, SearchSpace};
use tps_spectra::equivalence::{decide_equivalent, spectrum_of, EquivalenceOptions, GroupKind, VerdictKind};
use tps_spectra::harness::{persist, run_experiment_with, ExperimentConfig, TrialRecord, CSV_COLUMNS};
use tps_spectra::io::{operator_to_json, parse_operator, to_pretty, SpectrumFile};
use tps_spectra::kernel::{certify_finite_duals, verify_locality_lemma, CertifyOptions, Verdict, DEFAULT_RANK_TOL};
use tps_spectra::models::{build_ising, build_ising_dual, sample_hamiltonian};
use tps_spectra::{Error, LocalityClass, OperatorExpr};

const EXIT_OK: u8 = 0;
const EXIT_FAIL: u8 = 1;
const EXIT_AMBIGUOUS: u8 = 2;
const EXIT_USAGE: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "tps-spectra", version, about = "Spectral uniqueness tools for local qubit Hamiltonians")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relative singular-value cut for numerical rank.
    #[arg(long, global = true)]
    tol_rank: Option<f64>,
    /// Relative spectral distance counted as a match.
    #[arg(long, global = true)]
    tol_success: Option<f64>,
    /// Output file (a directory for `experiment`). Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Model {
    Random,
    Ising,
    IsingDual,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an operator and write it as JSON.
    Gen {
        #[arg(long, default_value = "k-local")]
        class: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum, default_value_t = Model::Random)]
        model: Model,
        /// Coupling for the Ising models.
        #[arg(long, default_value_t = 1.0)]
        j: f64,
        /// Field for the Ising models.
        #[arg(long, default_value_t = 0.7)]
        h: f64,
    },
    /// Diagonalize an operator file.
    Spectrum { file: PathBuf },
    /// Kernel certificate for finitely many duals.
    Cert {
        file: PathBuf,
        /// Certify against this class instead of the operator's own.
        #[arg(long)]
        class: Option<String>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Multistart spectrum-matching search for duals.
    Search {
        file: PathBuf,
        /// Search this class instead of the operator's own.
        #[arg(long)]
        class: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 20)]
        starts: usize,
        #[arg(long)]
        complexified: bool,
    },
    /// Decide whether two operators are related by the trivial group.
    Equiv {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = tps_spectra::equivalence::DEFAULT_STARTS)]
        starts: usize,
        #[arg(long)]
        complexified: bool,
    },
    /// Run a named experiment from a JSON config file.
    Experiment { config: PathBuf },
    /// Verify the single-site lemma for k-local classes.
    Lemma {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NoConvergence
            | Error::DegenerateSpectrum(_)
            | Error::DefectivePoint { .. }
            | Error::NotHermitian(_) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

fn read_operator(path: &Path) -> Result<(OperatorExpr, Option<u64>), Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let (expr, file) = parse_operator(&text).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })?;
    Ok((expr, file.meta.seed))
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| usage(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn emit(cli: &Cli, text: &str) -> Result<(), Failure> {
    match &cli.out {
        Some(p) => fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn build_class(name: &str, n: usize, k: Option<usize>) -> Result<LocalityClass, Failure> {
    Ok(LocalityClass::build(name, n, k)?)
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Gen { class, n, k, model, j, h } => {
            let expr = match model {
                Model::Random => {
                    let class = Arc::new(build_class(class, *n, *k)?);
                    use tps_spectra::harness::rng_from_seed;
                    sample_hamiltonian(class, &mut rng_from_seed(seed))
                }
                Model::Ising => build_ising(*n, *j, *h, true)?,
                Model::IsingDual => build_ising_dual(*n, *j, *h)?,
            };
            let stored_seed = (*model == Model::Random).then_some(seed);
            emit(cli, &operator_to_json(&expr, stored_seed))?;
            Ok(EXIT_OK)
        }
        Command::Spectrum { file } => {
            let (expr, _) = read_operator(file)?;
            let spec = spectrum_of(&expr)?;
            let text = match cli.format {
                Format::Json => to_pretty(&SpectrumFile::from_spectrum(&spec)),
                Format::Csv => {
                    let rows: Vec<Vec<String>> = spec
                        .values()
                        .iter()
                        .enumerate()
                        .map(|(i, v)| vec![i.to_string(), v.re.to_string(), v.im.to_string()])
                        .collect();
                    csv_text(&["index", "re", "im"], &rows)?
                }
            };
            emit(cli, &text)?;
            Ok(EXIT_OK)
        }
        Command::Cert { file, class, k } => {
            let (expr, file_seed) = read_operator(file)?;
            let target = match class {
                Some(name) => build_class(name, expr.n(), *k)?,
                None => expr.class().clone(),
            };
            let opts = CertifyOptions { rank_tol: cli.tol_rank.unwrap_or(DEFAULT_RANK_TOL), ..Default::default() };
            let mut report = certify_finite_duals(&expr, &target, &opts)?;
            report.seed = file_seed;
            let text = match cli.format {
                Format::Json => to_pretty(&report),
                Format::Csv => csv_text(
                    &["class_name", "n", "s", "N", "dim_ker_M", "expected", "gap_ratio", "commutant_1local_dim", "verdict"],
                    &[vec![
                        report.class_name.clone(),
                        report.n.to_string(),
                        report.s.to_string(),
                        report.hilbert_dim.to_string(),
                        report.dim_ker_m.to_string(),
                        report.expected.to_string(),
                        report.gap_ratio.to_string(),
                        report.commutant_1local_dim.to_string(),
                        label(&report.verdict),
                    ]],
                )?,
            };
            emit(cli, &text)?;
            Ok(match report.verdict {
                Verdict::Pass => EXIT_OK,
                Verdict::Fail => EXIT_FAIL,
                Verdict::Ambiguous => EXIT_AMBIGUOUS,
            })
        }
        Command::Search { file, class, k, starts, complexified } => {
            let (expr, _) = read_operator(file)?;
            let class = match class {
                Some(name) => build_class(name, expr.n(), *k)?,
                None => expr.class().clone(),
            };
            let space = SearchSpace::new(Arc::new(class), *complexified);
            let mut opts = SearchOptions::default();
            if let Some(t) = cli.tol_success {
                opts.success_tol = t;
            }
            let report = search_duals(&expr, &space, *starts, seed, &opts)?;
            let text = match cli.format {
                Format::Json => to_pretty(&report),
                Format::Csv => {
                    let rows: Vec<Vec<String>> = report
                        .minima
                        .iter()
                        .map(|m| {
                            vec![
                                m.start.to_string(),
                                m.distance.to_string(),
                                label(&m.classification),
                                m.iters.to_string(),
                                label(&m.stop),
                            ]
                        })
                        .collect();
                    csv_text(&["start", "distance", "classification", "iters", "stop"], &rows)?
                }
            };
            emit(cli, &text)?;
            Ok(EXIT_OK)
        }
        Command::Equiv { a, b, starts, complexified } => {
            let (ea, _) = read_operator(a)?;
            let (eb, _) = read_operator(b)?;
            let eb = if eb.class() == ea.class() {
                eb
            } else {
                OperatorExpr::from_pauli_sum(ea.class_arc().clone(), &eb.pauli_sum(), 1e-10)
                    .map_err(|e| usage(format!("{}: {e}", b.display())))?
            };
            let opts = EquivalenceOptions {
                group: if *complexified { GroupKind::Complexified } else { GroupKind::Unitary },
                starts: *starts,
                seed,
                ..Default::default()
            };
            let verdict = decide_equivalent(&ea, &eb, &opts)?;
            let text = match cli.format {
                Format::Json => to_pretty(&verdict),
                Format::Csv => csv_text(
                    &["verdict", "residual", "conclusive", "element"],
                    &[vec![
                        label(&verdict.verdict),
                        verdict.residual.to_string(),
                        verdict.conclusive.to_string(),
                        verdict.witness.map(|w| w.element.label()).unwrap_or_default(),
                    ]],
                )?,
            };
            emit(cli, &text)?;
            Ok(if verdict.verdict == VerdictKind::Equivalent { EXIT_OK } else { EXIT_FAIL })
        }
        Command::Experiment { config } => {
            let text = fs::read_to_string(config).map_err(|e| usage(format!("{}: {e}", config.display())))?;
            let mut cfg: ExperimentConfig =
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", config.display())))?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(t) = cli.tol_rank {
                cfg.tolerances.rank = t;
            }
            if let Some(t) = cli.tol_success {
                cfg.tolerances.success = t;
            }
            let dir = cli
                .out
                .clone()
                .or_else(|| cfg.out.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("results"));
            fs::create_dir_all(&dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
            let partial = dir.join("trials.partial.jsonl");
            let sink = Mutex::new(fs::File::create(&partial).map_err(|e| usage(e.to_string()))?);
            let on_record = |r: &TrialRecord| {
                use std::io::Write;
                if let (Ok(mut f), Ok(line)) = (sink.lock(), serde_json::to_string(r)) {
                    let _ = writeln!(f, "{line}");
                }
            };
            let (report, metadata) = run_experiment_with(&cfg, &on_record)?;
            persist(&dir, &report, &metadata)?;
            let _ = fs::remove_file(&partial);
            if cli.format == Format::Csv {
                let rows: Vec<Vec<String>> = report.trials.iter().map(|t| t.csv_fields()).collect();
                fs::write(dir.join("trials.csv"), csv_text(&CSV_COLUMNS, &rows)?)
                    .map_err(|e| usage(e.to_string()))?;
            }
            println!("{}", serde_json::to_string(&report.summary).expect("summary serializes"));
            Ok(if report.summary.success { EXIT_OK } else { EXIT_FAIL })
        }
        Command::Lemma { n, k } => {
            let report = verify_locality_lemma(*n, *k)?;
            let text = match cli.format {
                Format::Json => to_pretty(&report),
                Format::Csv => csv_text(
                    &["n", "k", "dim_found", "dim_expected", "full_space", "gap_ratio"],
                    &[vec![
                        report.n.to_string(),
                        report.k.to_string(),
                        report.dim_found.to_string(),
                        report.dim_expected.to_string(),
                        report.full_space.to_string(),
                        report.gap_ratio.to_string(),
                    ]],
                )?,
            };
            emit(cli, &text)?;
            Ok(if report.full_space || report.dim_found == report.dim_expected { EXIT_OK } else { EXIT_FAIL })
        }
    }
}

/// The snake_case name serde gives a unit enum value.
fn label<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
