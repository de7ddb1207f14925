//! Seeded experiment runner and file validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constructions::{mle_rate_instance_with_horizon, theorem3_instance_with_cap, theorem6_instance_with_cap, HardnessBundle};
use crate::coverage::{Coefficient, RevealMode};
use crate::error::{Error, Result};
use crate::estimators::{
    importance_sampling_ope, model_based_ope, restricted_policy_oracle, ModelClass, OpeConfig,
};
use crate::pomdp::{default_cap, policy_value, Dataset, Policy, PomdpFile, TabularPomdp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Model-based evaluation against restricted-oracle transcripts on the
    /// two indistinguishable policies.
    Theorem3Separation,
    /// Error of the model-based estimator as the sample size grows.
    MleRate,
    /// Importance sampling against model-based evaluation of the always-`L` policy.
    IsContrast,
    /// Unfiltered maximum likelihood on the history-recording class.
    Theorem6KnifeEdge,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Theorem3Separation => "theorem3-separation",
            ExperimentKind::MleRate => "mle-rate",
            ExperimentKind::IsContrast => "is-contrast",
            ExperimentKind::Theorem6KnifeEdge => "theorem6-knife-edge",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem3-separation" => Ok(Self::Theorem3Separation),
            "mle-rate" => Ok(Self::MleRate),
            "is-contrast" => Ok(Self::IsContrast),
            "theorem6-knife-edge" => Ok(Self::Theorem6KnifeEdge),
            other => Err(Error::Parameter(format!("unknown experiment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: ExperimentKind,
    pub horizons: Vec<usize>,
    pub sample_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub mode: RevealMode,
    /// Pre-filter threshold; `"inf"` disables pre-filtering.
    pub threshold: Coefficient,
    /// Floor zero trajectory likelihoods during selection.
    #[serde(default)]
    pub floor: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default = "default_cap")]
    pub cap: u64,
}

impl ExperimentConfig {
    pub fn new(name: ExperimentKind, horizons: Vec<usize>, sample_sizes: Vec<usize>, seeds: Vec<u64>) -> Self {
        Self {
            name,
            horizons,
            sample_sizes,
            seeds,
            mode: RevealMode::Single,
            threshold: Coefficient(f64::INFINITY),
            floor: false,
            output: None,
            cap: default_cap(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.sample_sizes.is_empty() || self.seeds.is_empty() {
            return Err(Error::Parameter("horizon, sample-size and seed lists must be nonempty".into()));
        }
        if !(self.threshold.0 > 0.0) {
            return Err(Error::Parameter(format!("threshold must be positive, got {}", self.threshold.0)));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }
}

/// 64-bit finalizer from SplitMix64.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one row, a function of the experiment name, horizon, sample size
/// and seed only.
pub fn row_seed(experiment: &str, horizon: usize, n: usize, seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in experiment.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix(mix(mix(mix(h) ^ horizon as u64) ^ n as u64) ^ seed)
}

/// One line of the result table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub experiment: String,
    pub horizon: usize,
    pub n: usize,
    pub seed: u64,
    pub method: String,
    pub policy: String,
    pub estimate: Option<f64>,
    #[serde(rename = "trueValue")]
    pub true_value: Option<f64>,
    #[serde(rename = "absError")]
    pub abs_error: Option<f64>,
    #[serde(rename = "selectedModel")]
    pub selected_model: Option<usize>,
    pub coefficients: String,
    pub transcripts_equal: Option<bool>,
    pub error: String,
}

impl Row {
    fn blank(config: &ExperimentConfig, horizon: usize, n: usize, seed: u64, method: &str, policy: &str) -> Self {
        Self {
            experiment: config.name.as_str().to_string(),
            horizon,
            n,
            seed,
            method: method.to_string(),
            policy: policy.to_string(),
            estimate: None,
            true_value: None,
            abs_error: None,
            selected_model: None,
            coefficients: String::new(),
            transcripts_equal: None,
            error: String::new(),
        }
    }

    fn failed(mut self, e: &Error) -> Self {
        self.error = e.to_string();
        self
    }

    fn with_value(mut self, estimate: f64, truth: f64) -> Self {
        self.estimate = Some(estimate);
        self.true_value = Some(truth);
        self.abs_error = Some((estimate - truth).abs());
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub method: String,
    pub policy: String,
    pub horizon: usize,
    pub n: usize,
    pub rows: usize,
    pub errors: usize,
    pub mean_estimate: Option<f64>,
    pub std_estimate: Option<f64>,
    pub mean_abs_error: Option<f64>,
    pub median_abs_error: Option<f64>,
    pub q90_abs_error: Option<f64>,
    pub transcripts_equal_fraction: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub rows: Vec<Row>,
    pub summary: Vec<GroupSummary>,
    pub error_rows: usize,
}

impl ExperimentResult {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            experiment: &'a str,
            rows: usize,
            error_rows: usize,
            groups: &'a [GroupSummary],
        }
        serde_json::to_string_pretty(&Summary {
            experiment: &self.experiment,
            rows: self.rows.len(),
            error_rows: self.error_rows,
            groups: &self.summary,
        })
        .expect("summary serializes")
    }

    /// Writes `<stem>.csv` and `<stem>.summary.json`.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path.with_extension("csv"), self.to_csv()?)?;
        std::fs::write(path.with_extension("summary.json"), self.summary_json())?;
        Ok(())
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

fn summarize(rows: &[Row]) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<(String, String, usize, usize), Vec<&Row>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method.clone(), r.policy.clone(), r.horizon, r.n)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, policy, horizon, n), rs)| {
            let estimates: Vec<f64> = rs.iter().filter_map(|r| r.estimate).collect();
            let mut errors: Vec<f64> = rs.iter().filter_map(|r| r.abs_error).collect();
            errors.sort_by(f64::total_cmp);
            let flags: Vec<bool> = rs.iter().filter_map(|r| r.transcripts_equal).collect();
            let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            let std_estimate = mean(&estimates).filter(|_| estimates.len() > 1).map(|m| {
                (estimates.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (estimates.len() - 1) as f64).sqrt()
            });
            GroupSummary {
                method,
                policy,
                horizon,
                n,
                rows: rs.len(),
                errors: rs.iter().filter(|r| !r.error.is_empty()).count(),
                mean_estimate: mean(&estimates),
                std_estimate,
                mean_abs_error: mean(&errors),
                median_abs_error: quantile(&errors, 0.5),
                q90_abs_error: quantile(&errors, 0.9),
                transcripts_equal_fraction: (!flags.is_empty())
                    .then(|| flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64),
            }
        })
        .collect()
}

fn coefficient_string(bundle: &HardnessBundle) -> String {
    bundle
        .expected_coefficients
        .iter()
        .map(|(k, v)| format!("{k}={}", if v.0.is_infinite() { "inf".to_string() } else { v.0.to_string() }))
        .collect::<Vec<_>>()
        .join(";")
}

/// Instance shared by all rows of one horizon.
enum Fixture {
    Bundle(Box<HardnessBundle>),
    Rate { class: ModelClass, pi_b: Policy, pi_e: Policy, truth: f64 },
}

fn fixture(config: &ExperimentConfig, horizon: usize) -> Result<Fixture> {
    match config.name {
        ExperimentKind::Theorem3Separation | ExperimentKind::IsContrast => {
            Ok(Fixture::Bundle(Box::new(theorem3_instance_with_cap(horizon, config.cap)?)))
        }
        ExperimentKind::Theorem6KnifeEdge => Ok(Fixture::Bundle(Box::new(theorem6_instance_with_cap(horizon, config.cap)?))),
        ExperimentKind::MleRate => {
            let (class, pi_b, pi_e) = mle_rate_instance_with_horizon(horizon)?;
            let truth = policy_value(&class.models[0], &pi_e, config.cap)?;
            Ok(Fixture::Rate { class, pi_b, pi_e, truth })
        }
    }
}

/// Runs every `(horizon, n, seed)` cell. Cells run in parallel; the output
/// order and content depend only on the configuration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut cells = Vec::new();
    for &h in &config.horizons {
        for &n in &config.sample_sizes {
            for &s in &config.seeds {
                cells.push((h, n, s));
            }
        }
    }
    let fixtures: BTreeMap<usize, std::result::Result<Fixture, String>> = config
        .horizons
        .iter()
        .map(|&h| (h, fixture(config, h).map_err(|e| e.to_string())))
        .collect();

    let rows: Vec<Row> = cells
        .par_iter()
        .flat_map_iter(|&(h, n, s)| match &fixtures[&h] {
            Ok(f) => run_cell(config, f, h, n, s),
            Err(msg) => {
                let mut r = Row::blank(config, h, n, s, "setup", "");
                r.error = msg.clone();
                vec![r]
            }
        })
        .collect();
    let error_rows = rows.iter().filter(|r| !r.error.is_empty()).count();
    let summary = summarize(&rows);
    let result = ExperimentResult { experiment: config.name.as_str().to_string(), rows, summary, error_rows };
    if let Some(path) = &config.output {
        result.write(path)?;
    }
    Ok(result)
}

fn run_cell(config: &ExperimentConfig, fixture: &Fixture, h: usize, n: usize, seed: u64) -> Vec<Row> {
    let data_seed = row_seed(config.name.as_str(), h, n, seed);
    let ope_config = OpeConfig { mode: config.mode, threshold: config.threshold.0, floor: config.floor, cap: config.cap };
    let mut rows = Vec::new();

    match fixture {
        Fixture::Bundle(bundle) => {
            let pi_b = &bundle.behavior_policy;
            let data = match Dataset::sample(&bundle.true_model, pi_b, n, data_seed, "uniform") {
                Ok(d) => d,
                Err(e) => return vec![Row::blank(config, h, n, seed, "sample", "").failed(&e)],
            };
            let coefficients = coefficient_string(bundle);
            let truth_class = ModelClass::new(vec![bundle.true_model.clone()], Some(0)).expect("single model");
            let class = match config.name {
                ExperimentKind::Theorem6KnifeEdge => &bundle.model_class,
                _ => &truth_class,
            };
            for (name, pi_e) in &bundle.target_policies {
                let mut row = Row::blank(config, h, n, seed, "model-based-mle", name);
                row.coefficients = coefficients.clone();
                let truth = policy_value(&bundle.true_model, pi_e, config.cap);
                let out = truth.and_then(|t| model_based_ope(class, pi_b, pi_e, &data, &ope_config).map(|r| (t, r)));
                rows.push(match out {
                    Ok((t, r)) => {
                        let mut row = row.with_value(r.estimate, t);
                        row.selected_model = r.selected_model_index;
                        row
                    }
                    Err(e) => row.failed(&e),
                });
                if config.name == ExperimentKind::IsContrast {
                    let row = Row::blank(config, h, n, seed, "importance-sampling", name);
                    let out = policy_value(&bundle.true_model, pi_e, config.cap)
                        .and_then(|t| importance_sampling_ope(&data, pi_e, pi_b).map(|r| (t, r)));
                    rows.push(match out {
                        Ok((t, r)) => row.with_value(r.estimate, t),
                        Err(e) => row.failed(&e),
                    });
                }
            }
            if config.name == ExperimentKind::Theorem3Separation {
                if let [(a, pa), (b, pb), ..] = bundle.target_policies.as_slice() {
                    let mut row = Row::blank(config, h, n, seed, "restricted-oracle", &format!("{a}|{b}"));
                    let ta = restricted_policy_oracle(pa, &data);
                    let tb = restricted_policy_oracle(pb, &data);
                    row.transcripts_equal = Some(ta == tb);
                    rows.push(row);
                }
            }
        }
        Fixture::Rate { class, pi_b, pi_e, truth } => {
            let data = match Dataset::sample(&class.models[0], pi_b, n, data_seed, "uniform") {
                Ok(d) => d,
                Err(e) => return vec![Row::blank(config, h, n, seed, "sample", "").failed(&e)],
            };
            let row = Row::blank(config, h, n, seed, "model-based-mle", "pi_e");
            rows.push(match model_based_ope(class, pi_b, pi_e, &data, &ope_config) {
                Ok(r) => {
                    let mut row = row.with_value(r.estimate, *truth);
                    row.selected_model = r.selected_model_index;
                    row
                }
                Err(e) => row.failed(&e),
            });
        }
    }
    rows
}

/// What a file was recognized as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Pomdp,
    Policy,
    Dataset,
    ExperimentConfig,
    /// Golden-value sidecar written next to generated instances.
    Expected,
    Unknown,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileReport {
    pub path: PathBuf,
    pub kind: FileKind,
    pub valid: bool,
    pub problems: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub files: Vec<FileReport>,
}

impl ValidationReport {
    pub fn all_valid(&self) -> bool {
        self.files.iter().all(|f| f.valid)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn problems_of(e: Error) -> Vec<String> {
    match e {
        Error::Invalid(vs) => vs.iter().map(|v| v.to_string()).collect(),
        other => vec![other.to_string()],
    }
}

/// Structural validation of model, policy, dataset and experiment files.
/// Policies and datasets are also checked against the first valid model in
/// `paths`, if any.
pub fn validate_files<P: AsRef<Path>>(paths: &[P]) -> ValidationReport {
    enum Parsed {
        Model(TabularPomdp),
        Policy(Policy),
        Data(Dataset),
        Other,
    }
    let mut parsed = Vec::new();
    let mut reports = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let (kind, outcome) = match std::fs::read_to_string(path) {
            Err(e) => (FileKind::Unknown, Err(vec![e.to_string()])),
            Ok(text) => classify(&text),
        };
        let (valid, problems, item) = match outcome {
            Ok(item) => (true, Vec::new(), item),
            Err(p) => (false, p, Parsed::Other),
        };
        parsed.push(item);
        reports.push(FileReport { path: path.to_path_buf(), kind, valid, problems });
    }

    fn classify(text: &str) -> (FileKind, std::result::Result<Parsed, Vec<String>>) {
        let trimmed = text.trim_start();
        if !trimmed.starts_with('{') {
            return (FileKind::Dataset, Dataset::parse(text).map(Parsed::Data).map_err(problems_of));
        }
        let value: serde_json::Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => return (FileKind::Unknown, Err(vec![e.to_string()])),
        };
        if value.get("state_counts").is_some() {
            let model = serde_json::from_value::<PomdpFile>(value)
                .map_err(Error::from)
                .and_then(PomdpFile::into_model);
            (FileKind::Pomdp, model.map(Parsed::Model).map_err(problems_of))
        } else if value.get("kind").is_some() {
            (FileKind::Policy, Policy::from_json(text).map(Parsed::Policy).map_err(problems_of))
        } else if value.get("name").is_some() && value.get("seeds").is_some() {
            (FileKind::ExperimentConfig, ExperimentConfig::from_json(text).map(|_| Parsed::Other).map_err(problems_of))
        } else if value.get("expected_values").is_some() {
            (FileKind::Expected, Ok(Parsed::Other))
        } else {
            (FileKind::Unknown, Err(vec!["unrecognized JSON document".into()]))
        }
    }

    if let Some(model) = parsed.iter().find_map(|p| match p {
        Parsed::Model(m) => Some(m),
        _ => None,
    }) {
        for (item, report) in parsed.iter().zip(reports.iter_mut()) {
            let extra = match item {
                Parsed::Policy(p) => p.check_against(model).err().map(problems_of),
                Parsed::Data(d) => d.validate(model).err().map(problems_of),
                _ => None,
            };
            if let Some(p) = extra {
                report.valid = false;
                report.problems.extend(p);
            }
        }
    }
    ValidationReport { files: reports }
}
