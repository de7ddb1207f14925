use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use pomdp_ope::constructions::{random_pomdp, theorem3_instance_with_cap, theorem6_instance_with_cap, RandomSpec};
use pomdp_ope::coverage::{coverage_report, Coefficient, ReportOptions, RevealMode};
use pomdp_ope::error::{Error, Result};
use pomdp_ope::estimators::{
    c_eff_multi, c_eff_single, eps_approx, importance_sampling_ope, mle_select, model_based_ope, ModelClass,
    OpeConfig,
};
use pomdp_ope::harness::{run_experiment, validate_files, ExperimentConfig, ExperimentKind};
use pomdp_ope::oom::{build_oom, oom_check_suite};
use pomdp_ope::pomdp::default_cap;
use pomdp_ope::{Dataset, Policy, TabularPomdp};

#[derive(Parser)]
#[command(name = "pomdp-ope", version, about = "Off-policy evaluation for tabular POMDPs")]
struct Cli {
    /// Random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Enumeration cap (defaults to $POMDP_OPE_CAP or 10^7).
    #[arg(long, global = true)]
    cap: Option<u64>,
    /// Output file or directory; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a hardness instance or a random model.
    Gen {
        #[command(subcommand)]
        what: GenKind,
    },
    /// Coverage and revealing coefficients of a model under a behavior policy.
    Coverage {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, value_enum, default_value_t = CoverageMode::All)]
        mode: CoverageMode,
        /// Estimate the history matrix by Monte Carlo with this many samples.
        #[arg(long)]
        mc_samples: Option<usize>,
    },
    /// Reconstruction, belief-relation and contraction checks of the operator model.
    OomCheck {
        #[arg(long)]
        model: PathBuf,
        /// Behavior policy (required in multi mode; uniform otherwise).
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value = "single")]
        mode: RevealMode,
        #[arg(long, default_value_t = 20)]
        vectors: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Sample a dataset.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        n: usize,
    },
    /// Estimate the value of a target policy from a dataset.
    Ope {
        #[arg(long, num_args = 1.., required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        policy_b: PathBuf,
        #[arg(long)]
        policy_e: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "single")]
        mode: RevealMode,
        /// Pre-filter threshold; `inf` disables pre-filtering.
        #[arg(long, default_value = "inf")]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = Method::Mle)]
        method: Method,
        /// Floor zero trajectory likelihoods instead of failing.
        #[arg(long)]
        floor: bool,
        /// Index of the true model among `--models`, to report the error.
        #[arg(long)]
        true_index: Option<usize>,
    },
    /// Effective coverage and approximation error of the selected model.
    Diagnose {
        #[arg(long)]
        true_model: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        policy_b: PathBuf,
        #[arg(long)]
        policy_e: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "single")]
        mode: RevealMode,
        #[arg(long)]
        floor: bool,
    },
    /// Run a seeded experiment sweep.
    Experiment {
        /// JSON configuration; the flags below are used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        name: Option<ExperimentKind>,
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        sample_sizes: Vec<usize>,
        /// Number of seeds, counted from `--seed`.
        #[arg(long, default_value_t = 10)]
        repetitions: u64,
        #[arg(long, default_value = "single")]
        mode: RevealMode,
        #[arg(long, default_value = "inf")]
        threshold: f64,
        /// Floor zero trajectory likelihoods instead of recording an error row.
        #[arg(long)]
        floor: bool,
    },
    /// Check model, policy, dataset and experiment files.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GenKind {
    /// Two-policy instance that model-free evaluation cannot separate.
    Theorem3 {
        #[arg(long)]
        horizon: usize,
    },
    /// History-recording class with a knife-edge value gap.
    Theorem6 {
        #[arg(long)]
        horizon: usize,
    },
    /// Random model from a JSON spec.
    Random {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CoverageMode {
    Single,
    Multi,
    Weighted,
    History,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Mle,
    Is,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<TabularPomdp> {
    TabularPomdp::from_json(&read(path)?)
}

fn load_policy(path: &Path) -> Result<Policy> {
    Policy::from_json(&read(path)?)
}

fn load_data(path: &Path) -> Result<Dataset> {
    Dataset::parse(&read(path)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(Error::from),
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn write_files(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, text) in files {
        std::fs::write(dir.join(name), text)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32> {
    let cap = cli.cap.unwrap_or_else(default_cap);
    let out = cli.out.as_deref();
    match cli.command {
        Command::Gen { what } => {
            let dir = out.unwrap_or(Path::new("."));
            match what {
                GenKind::Theorem3 { horizon } => {
                    let b = theorem3_instance_with_cap(horizon, cap)?;
                    let mut files = vec![
                        ("model.json", b.true_model.to_json()),
                        ("pi_b.json", b.behavior_policy.to_json()),
                        ("expected.json", b.expected_json()),
                    ];
                    for (name, p) in &b.target_policies {
                        files.push((if name == "pi_1" { "pi_1.json" } else { "pi_2.json" }, p.to_json()));
                    }
                    write_files(dir, &files)?;
                }
                GenKind::Theorem6 { horizon } => {
                    let b = theorem6_instance_with_cap(horizon, cap)?;
                    write_files(
                        dir,
                        &[
                            ("m_star.json", b.true_model.to_json()),
                            ("m1.json", b.model_class.models[0].to_json()),
                            ("m2.json", b.model_class.models[1].to_json()),
                            ("pi_b.json", b.behavior_policy.to_json()),
                            ("pi_e.json", b.target_policies[0].1.to_json()),
                            ("expected.json", b.expected_json()),
                        ],
                    )?;
                }
                GenKind::Random { spec } => {
                    let spec: RandomSpec = serde_json::from_str(&read(&spec)?)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
                    let model = random_pomdp(&spec, &mut rng)?;
                    write_files(dir, &[("model.json", model.to_json())])?;
                }
            }
            Ok(0)
        }
        Command::Coverage { model, policy, mode, mc_samples } => {
            let model = load_model(&model)?;
            let pi_b = load_policy(&policy)?;
            let mut opts = ReportOptions::all(cap);
            opts.seed = cli.seed;
            opts.mc_samples = mc_samples;
            if !matches!(mode, CoverageMode::All) {
                opts.single = matches!(mode, CoverageMode::Single);
                opts.multi = matches!(mode, CoverageMode::Multi);
                opts.weighted = matches!(mode, CoverageMode::Weighted);
                opts.history = matches!(mode, CoverageMode::History);
            }
            emit(out, &coverage_report(&model, &pi_b, &opts)?.to_json())?;
            Ok(0)
        }
        Command::OomCheck { model, policy, mode, vectors, tol } => {
            let model = load_model(&model)?;
            let pi = match policy {
                Some(p) => load_policy(&p)?,
                None if mode == RevealMode::Multi => {
                    return Err(Error::Parameter("multi mode needs --policy".into()));
                }
                None => Policy::uniform(&model),
            };
            let oom = build_oom(&model, mode, Some(&pi), cap)?;
            let report = oom_check_suite(&model, &oom, &pi, vectors, cli.seed, tol, cap)?;
            emit(out, &report.to_json())?;
            Ok(if report.passed { 0 } else { 1 })
        }
        Command::Sample { model, policy, n } => {
            let model = load_model(&model)?;
            let pi = load_policy(&policy)?;
            let id = policy.file_stem().map_or("policy".to_string(), |s| s.to_string_lossy().into_owned());
            let data = Dataset::sample(&model, &pi, n, cli.seed, id)?;
            emit(out, data.to_text().trim_end())?;
            Ok(0)
        }
        Command::Ope { models, policy_b, policy_e, data, mode, threshold, method, floor, true_index } => {
            let pi_b = load_policy(&policy_b)?;
            let pi_e = load_policy(&policy_e)?;
            let data = load_data(&data)?;
            let result = match method {
                Method::Is => importance_sampling_ope(&data, &pi_e, &pi_b)?,
                Method::Mle => {
                    let models = models.iter().map(|p| load_model(p)).collect::<Result<Vec<_>>>()?;
                    let class = ModelClass::new(models, true_index)?;
                    model_based_ope(&class, &pi_b, &pi_e, &data, &OpeConfig { mode, threshold, floor, cap })?
                }
            };
            emit(out, &result.to_json())?;
            Ok(0)
        }
        Command::Diagnose { true_model, models, policy_b, policy_e, data, mode, floor } => {
            let m_star = load_model(&true_model)?;
            let models = models.iter().map(|p| load_model(p)).collect::<Result<Vec<_>>>()?;
            let pi_b = load_policy(&policy_b)?;
            let pi_e = load_policy(&policy_e)?;
            let data = load_data(&data)?;
            let selection = mle_select(&models, &pi_b, &data, floor)?;
            let m_hat = &models[selection.index];
            let ceff = match mode {
                RevealMode::Single => c_eff_single(&m_star, m_hat, &pi_e, &pi_b, cap)?,
                RevealMode::Multi => c_eff_multi(&m_star, m_hat, &pi_e, &pi_b, cap)?,
            };
            #[derive(Serialize)]
            struct Diagnosis {
                selected_model_index: usize,
                c_eff: Coefficient,
                c_eff_tilde: Option<Coefficient>,
                per_step: Vec<Option<Coefficient>>,
                eps_approx: f64,
            }
            let d = Diagnosis {
                selected_model_index: selection.index,
                c_eff: Coefficient(ceff.value),
                c_eff_tilde: ceff.tilde.map(Coefficient),
                per_step: ceff.ratios.iter().map(|r| r.map(Coefficient)).collect(),
                eps_approx: eps_approx(&models, &m_star, &pi_b, &data, floor)?,
            };
            emit(out, &serde_json::to_string_pretty(&d)?)?;
            Ok(0)
        }
        Command::Experiment { config, name, horizons, sample_sizes, repetitions, mode, threshold, floor } => {
            let mut config = match config {
                Some(p) => ExperimentConfig::from_json(&read(&p)?)?,
                None => {
                    let name = name.ok_or_else(|| Error::Parameter("give --config or --name".into()))?;
                    let seeds = (cli.seed..cli.seed + repetitions).collect();
                    let mut c = ExperimentConfig::new(name, horizons, sample_sizes, seeds);
                    c.mode = mode;
                    c.threshold = Coefficient(threshold);
                    c.floor = floor;
                    c
                }
            };
            if let Some(c) = cli.cap {
                config.cap = c;
            }
            if out.is_some() {
                config.output = out.map(Path::to_path_buf);
            }
            let result = run_experiment(&config)?;
            if config.output.is_none() {
                emit(None, result.to_csv()?.trim_end())?;
            }
            eprintln!("{}", result.summary_json());
            Ok(0)
        }
        Command::Validate { files } => {
            let report = validate_files(&files);
            emit(out, &report.to_json())?;
            Ok(if report.all_valid() { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
