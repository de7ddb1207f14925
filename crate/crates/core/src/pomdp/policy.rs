use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ObsAction, TabularPomdp, STOCHASTIC_TOL};
use crate::error::{Error, Result, Violation};

/// How a policy maps context to an action distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    /// `tables[h][o][a] = π_h(a | o)`.
    Memoryless { tables: Vec<Vec<Vec<f64>>> },
    /// A fixed action per step, independent of observations.
    OpenLoop { actions: Vec<usize> },
    /// Explicit per-(step, history, observation) distributions with a default
    /// for anything not listed.
    HistoryTable {
        horizon: usize,
        entries: Vec<HashMap<Vec<ObsAction>, HashMap<usize, Vec<f64>>>>,
        default: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    action_count: usize,
    kind: PolicyKind,
    // one-hot rows for open-loop actions, so every kind can hand out slices
    one_hot: Vec<Vec<f64>>,
}

impl Policy {
    fn build(action_count: usize, kind: PolicyKind) -> Result<Self> {
        if action_count == 0 {
            return Err(Error::Parameter("action_count must be positive".into()));
        }
        let one_hot = (0..action_count)
            .map(|a| {
                let mut v = vec![0.0; action_count];
                v[a] = 1.0;
                v
            })
            .collect();
        let policy = Self { action_count, kind, one_hot };
        let violations = policy.violations();
        if violations.is_empty() {
            Ok(policy)
        } else {
            Err(Error::Invalid(violations))
        }
    }

    pub fn memoryless(action_count: usize, tables: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        Self::build(action_count, PolicyKind::Memoryless { tables })
    }

    /// Uniform memoryless policy over `action_count` actions for the given model's
    /// observation spaces.
    pub fn uniform(model: &TabularPomdp) -> Self {
        let a = model.action_count();
        let tables = model
            .obs_counts()
            .iter()
            .map(|&o| vec![vec![1.0 / a as f64; a]; o])
            .collect();
        Self::memoryless(a, tables).expect("uniform tables are valid")
    }

    pub fn open_loop(action_count: usize, actions: Vec<usize>) -> Result<Self> {
        Self::build(action_count, PolicyKind::OpenLoop { actions })
    }

    /// History-table policy with no entries yet.
    pub fn history_table(action_count: usize, horizon: usize, default: Vec<f64>) -> Result<Self> {
        Self::build(
            action_count,
            PolicyKind::HistoryTable { horizon, entries: vec![HashMap::new(); horizon], default },
        )
    }

    /// Adds or replaces the distribution for `(step, history, obs)` on a
    /// history-table policy. `history` must have length `step`.
    pub fn set_entry(&mut self, history: &[ObsAction], obs: usize, probs: Vec<f64>) -> Result<()> {
        let a = self.action_count;
        let PolicyKind::HistoryTable { horizon, entries, .. } = &mut self.kind else {
            return Err(Error::UnsupportedPolicy("set_entry needs a history-table policy".into()));
        };
        let step = history.len();
        if step >= *horizon {
            return Err(Error::Structural(format!("history length {step} >= horizon {horizon}")));
        }
        if let Some(v) = distribution_violation(&probs, a, || format!("h={step}, o={obs}")) {
            return Err(Error::Invalid(vec![v]));
        }
        entries[step].entry(history.to_vec()).or_default().insert(obs, probs);
        Ok(())
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn is_memoryless(&self) -> bool {
        matches!(self.kind, PolicyKind::Memoryless { .. } | PolicyKind::OpenLoop { .. })
    }

    /// Number of steps the policy is defined for.
    pub fn horizon(&self) -> usize {
        match &self.kind {
            PolicyKind::Memoryless { tables } => tables.len(),
            PolicyKind::OpenLoop { actions } => actions.len(),
            PolicyKind::HistoryTable { horizon, .. } => *horizon,
        }
    }

    /// `π(· | τ_{h-1}, o_h)` where `h = history.len()`.
    pub fn action_probs(&self, history: &[ObsAction], obs: usize) -> &[f64] {
        let step = history.len();
        match &self.kind {
            PolicyKind::Memoryless { tables } => &tables[step][obs],
            PolicyKind::OpenLoop { actions } => &self.one_hot[actions[step]],
            PolicyKind::HistoryTable { entries, default, .. } => entries
                .get(step)
                .and_then(|m| m.get(history))
                .and_then(|m| m.get(&obs))
                .map_or(default.as_slice(), |v| v.as_slice()),
        }
    }

    /// Memoryless lookup by step; only meaningful when `is_memoryless()`.
    pub fn memoryless_probs(&self, step: usize, obs: usize) -> &[f64] {
        match &self.kind {
            PolicyKind::Memoryless { tables } => &tables[step][obs],
            PolicyKind::OpenLoop { actions } => &self.one_hot[actions[step]],
            PolicyKind::HistoryTable { .. } => panic!("memoryless_probs on a history-table policy"),
        }
    }

    pub fn require_memoryless(&self, what: &str) -> Result<()> {
        if self.is_memoryless() {
            Ok(())
        } else {
            Err(Error::UnsupportedPolicy(format!("{what} requires a memoryless policy")))
        }
    }

    /// Product of action probabilities over the first `steps` pairs.
    pub fn sequence_prob(&self, steps: &[ObsAction]) -> f64 {
        let mut p = 1.0;
        for k in 0..steps.len() {
            p *= self.action_probs(&steps[..k], steps[k].obs)[steps[k].action];
            if p == 0.0 {
                break;
            }
        }
        p
    }

    pub fn violations(&self) -> Vec<Violation> {
        let a = self.action_count;
        let mut out = Vec::new();
        match &self.kind {
            PolicyKind::Memoryless { tables } => {
                for (h, per_obs) in tables.iter().enumerate() {
                    for (o, dist) in per_obs.iter().enumerate() {
                        out.extend(distribution_violation(dist, a, || format!("h={h}, o={o}")));
                    }
                }
            }
            PolicyKind::OpenLoop { actions } => {
                for (h, &act) in actions.iter().enumerate() {
                    if act >= a {
                        out.push(Violation::Shape(format!("open-loop action {act} at h={h} >= {a}")));
                    }
                }
            }
            PolicyKind::HistoryTable { horizon, entries, default } => {
                out.extend(distribution_violation(default, a, || "default".to_string()));
                if entries.len() != *horizon {
                    out.push(Violation::Shape("history table step count != horizon".into()));
                }
                for (h, per_hist) in entries.iter().enumerate() {
                    for (hist, per_obs) in per_hist {
                        if hist.len() != h {
                            out.push(Violation::Shape(format!(
                                "history of length {} stored at step {h}",
                                hist.len()
                            )));
                        }
                        for (o, dist) in per_obs {
                            out.extend(distribution_violation(dist, a, || {
                                format!("h={h}, history={}, o={o}", encode_history(hist, a))
                            }));
                        }
                    }
                }
            }
        }
        out
    }

    /// Structural compatibility with a model's observation spaces.
    pub fn check_against(&self, model: &TabularPomdp) -> Result<()> {
        if self.action_count != model.action_count() {
            return Err(Error::Structural(format!(
                "policy has {} actions, model has {}",
                self.action_count,
                model.action_count()
            )));
        }
        if self.horizon() < model.horizon() {
            return Err(Error::Structural(format!(
                "policy covers {} steps, model horizon is {}",
                self.horizon(),
                model.horizon()
            )));
        }
        if let PolicyKind::Memoryless { tables } = &self.kind {
            for h in 0..model.horizon() {
                if tables[h].len() != model.obs_count(h) {
                    return Err(Error::Structural(format!(
                        "policy table at h={h} has {} observations, model has {}",
                        tables[h].len(),
                        model.obs_count(h)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> PolicyFile {
        match &self.kind {
            PolicyKind::Memoryless { tables } => {
                PolicyFile::Memoryless { action_count: self.action_count, tables: tables.clone() }
            }
            PolicyKind::OpenLoop { actions } => {
                PolicyFile::OpenLoop { action_count: self.action_count, actions: actions.clone() }
            }
            PolicyKind::HistoryTable { horizon, entries, default } => {
                let mut rows = Vec::new();
                for (step, per_hist) in entries.iter().enumerate() {
                    for (hist, per_obs) in per_hist {
                        for (&obs, probs) in per_obs {
                            rows.push(HistoryEntry {
                                step,
                                history: encode_history(hist, self.action_count),
                                obs,
                                probs: probs.clone(),
                            });
                        }
                    }
                }
                rows.sort_by(|x, y| (x.step, &x.history, x.obs).cmp(&(y.step, &y.history, y.obs)));
                PolicyFile::HistoryTable {
                    action_count: self.action_count,
                    horizon: *horizon,
                    default: default.clone(),
                    entries: rows,
                }
            }
        }
    }

    pub fn from_file(file: PolicyFile) -> Result<Self> {
        match file {
            PolicyFile::Memoryless { action_count, tables } => Self::memoryless(action_count, tables),
            PolicyFile::OpenLoop { action_count, actions } => Self::open_loop(action_count, actions),
            PolicyFile::HistoryTable { action_count, horizon, default, entries } => {
                let mut p = Self::history_table(action_count, horizon, default)?;
                for e in entries {
                    let hist = decode_history(&e.history, action_count)?;
                    if hist.len() != e.step {
                        return Err(Error::Parse(format!(
                            "entry history '{}' has length {}, step is {}",
                            e.history,
                            hist.len(),
                            e.step
                        )));
                    }
                    p.set_entry(&hist, e.obs, e.probs)?;
                }
                Ok(p)
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }
}

fn distribution_violation(
    dist: &[f64],
    action_count: usize,
    context: impl FnOnce() -> String,
) -> Option<Violation> {
    if dist.len() != action_count {
        return Some(Violation::Shape(format!(
            "distribution at {} has {} entries, expected {action_count}",
            context(),
            dist.len()
        )));
    }
    let sum: f64 = dist.iter().sum();
    if dist.iter().any(|&p| p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Some(Violation::PolicyDistribution { context: context(), sum });
    }
    None
}

/// Serialized policy. The `kind` tag selects the variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyFile {
    Memoryless { action_count: usize, tables: Vec<Vec<Vec<f64>>> },
    OpenLoop { action_count: usize, actions: Vec<usize> },
    HistoryTable { action_count: usize, horizon: usize, default: Vec<f64>, entries: Vec<HistoryEntry> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub history: String,
    pub obs: usize,
    pub probs: Vec<f64>,
}

/// Packs a history into a dotted string of per-step codes `o * A + a`.
/// The empty history encodes to `""`.
pub fn encode_history(history: &[ObsAction], action_count: usize) -> String {
    history
        .iter()
        .map(|x| (x.obs * action_count + x.action).to_string())
        .collect::<Vec<_>>()
        .join(".")
}

pub fn decode_history(text: &str, action_count: usize) -> Result<Vec<ObsAction>> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split('.')
        .map(|tok| {
            let code: usize =
                tok.parse().map_err(|_| Error::Parse(format!("bad history code '{tok}'")))?;
            Ok(ObsAction::new(code / action_count, code % action_count))
        })
        .collect()
}
