use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::TabularPomdp;
use crate::error::{Error, Result, Violation};

/// On-disk model layout: `transitions[h][a][s'][s]`, `emissions[h][o][s]`,
/// `rewards[h][o]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PomdpFile {
    pub horizon: usize,
    pub state_counts: Vec<usize>,
    pub action_count: usize,
    pub obs_counts: Vec<usize>,
    pub initial_dist: Vec<f64>,
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    pub emissions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<f64>>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> std::result::Result<DMatrix<f64>, Violation> {
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Violation::Shape(format!("{what} is ragged")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl PomdpFile {
    pub fn into_model(self) -> Result<TabularPomdp> {
        let mut shape = Vec::new();
        if self.state_counts.len() != self.horizon {
            shape.push(Violation::Shape(format!(
                "state_counts has {} entries, horizon is {}",
                self.state_counts.len(),
                self.horizon
            )));
        }
        let mut transitions = Vec::with_capacity(self.transitions.len());
        for (h, per_action) in self.transitions.iter().enumerate() {
            let mut row = Vec::new();
            for (a, m) in per_action.iter().enumerate() {
                match from_rows(m, &format!("transitions[{h}][{a}]")) {
                    Ok(m) => row.push(m),
                    Err(v) => shape.push(v),
                }
            }
            transitions.push(row);
        }
        let mut emissions = Vec::with_capacity(self.emissions.len());
        for (h, m) in self.emissions.iter().enumerate() {
            match from_rows(m, &format!("emissions[{h}]")) {
                Ok(m) => emissions.push(m),
                Err(v) => shape.push(v),
            }
        }
        if !shape.is_empty() {
            return Err(Error::Invalid(shape));
        }
        TabularPomdp::new(
            self.state_counts,
            self.action_count,
            self.obs_counts,
            self.initial_dist,
            transitions,
            emissions,
            self.rewards,
        )
    }
}

impl TabularPomdp {
    pub fn to_file(&self) -> PomdpFile {
        PomdpFile {
            horizon: self.horizon,
            state_counts: self.state_counts.clone(),
            action_count: self.action_count,
            obs_counts: self.obs_counts.clone(),
            initial_dist: self.initial_dist.iter().copied().collect(),
            transitions: self
                .transitions
                .iter()
                .map(|per_a| per_a.iter().map(to_rows).collect())
                .collect(),
            emissions: self.emissions.iter().map(to_rows).collect(),
            rewards: self.rewards.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<PomdpFile>(text)?.into_model()
    }
}
