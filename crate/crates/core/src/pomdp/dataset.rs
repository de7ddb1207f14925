use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{sample_trajectory, ObsAction, Policy, TabularPomdp};
use crate::error::{Error, Result, Violation};

/// A complete episode: one `(o, a)` pair and its reward per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<ObsAction>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    /// Trajectory whose rewards are read from the model's reward table.
    pub fn from_steps(model: &TabularPomdp, steps: Vec<ObsAction>) -> Result<Self> {
        model.check_history(&steps)?;
        let rewards = steps.iter().enumerate().map(|(h, x)| model.reward(h, x.obs)).collect();
        Ok(Self { steps, rewards })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Sum of rewards.
    pub fn ret(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn actions(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|x| x.action)
    }

    pub fn violations(&self, model: &TabularPomdp, index: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |detail: String| out.push(Violation::Trajectory { index, detail });
        if self.steps.len() != model.horizon() {
            bad(format!("length {} != horizon {}", self.steps.len(), model.horizon()));
            return out;
        }
        if self.rewards.len() != self.steps.len() {
            bad("reward count differs from step count".into());
            return out;
        }
        for (h, (x, &r)) in self.steps.iter().zip(&self.rewards).enumerate() {
            if x.obs >= model.obs_count(h) {
                bad(format!("h={h}: observation {} >= {}", x.obs, model.obs_count(h)));
            } else if (r - model.reward(h, x.obs)).abs() > 1e-12 {
                bad(format!("h={h}: reward {r} != R(h, o) = {}", model.reward(h, x.obs)));
            }
            if x.action >= model.action_count() {
                bad(format!("h={h}: action {} >= {}", x.action, model.action_count()));
            }
        }
        out
    }
}

/// Offline data: `n` trajectories plus the metadata that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub behavior_policy_id: String,
    pub seed: u64,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>, behavior_policy_id: impl Into<String>, seed: u64) -> Self {
        Self { trajectories, behavior_policy_id: behavior_policy_id.into(), seed }
    }

    /// `n` independent episodes under `policy`, reproducible from `seed`.
    pub fn sample(
        model: &TabularPomdp,
        policy: &Policy,
        n: usize,
        seed: u64,
        policy_id: impl Into<String>,
    ) -> Result<Self> {
        policy.check_against(model)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trajectories = (0..n).map(|_| sample_trajectory(model, policy, &mut rng)).collect();
        Ok(Self::new(trajectories, policy_id, seed))
    }

    pub fn n(&self) -> usize {
        self.trajectories.len()
    }

    pub fn violations(&self, model: &TabularPomdp) -> Vec<Violation> {
        self.trajectories
            .iter()
            .enumerate()
            .flat_map(|(i, t)| t.violations(model, i))
            .collect()
    }

    pub fn validate(&self, model: &TabularPomdp) -> Result<()> {
        let v = self.violations(model);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }

    /// Header line `n=<int> seed=<int> policy=<id>` followed by one line of
    /// `o a r` triples per trajectory.
    pub fn to_text(&self) -> String {
        let mut s = format!("n={} seed={} policy={}\n", self.n(), self.seed, self.behavior_policy_id);
        for t in &self.trajectories {
            let line: Vec<String> = t
                .steps
                .iter()
                .zip(&t.rewards)
                .map(|(x, r)| format!("{} {} {}", x.obs, x.action, r))
                .collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty dataset".into()))?;
        let (mut n, mut seed, mut id) = (None, None, None);
        for field in header.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header field '{field}'")))?;
            match k {
                "n" => n = Some(v.parse::<usize>().map_err(|e| Error::Parse(format!("n: {e}")))?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|e| Error::Parse(format!("seed: {e}")))?),
                "policy" => id = Some(v.to_string()),
                _ => return Err(Error::Parse(format!("unknown header field '{k}'"))),
            }
        }
        let (n, seed, id) = match (n, seed, id) {
            (Some(n), Some(s), Some(i)) => (n, s, i),
            _ => return Err(Error::Parse("header needs n=, seed= and policy=".into())),
        };
        let mut trajectories = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if !toks.len().is_multiple_of(3) {
                return Err(Error::Parse(format!("trajectory {i}: token count not a multiple of 3")));
            }
            let mut steps = Vec::with_capacity(toks.len() / 3);
            let mut rewards = Vec::with_capacity(toks.len() / 3);
            for c in toks.chunks(3) {
                let bad = |what: &str| Error::Parse(format!("trajectory {i}: bad {what}"));
                let o = c[0].parse().map_err(|_| bad("observation"))?;
                let a = c[1].parse().map_err(|_| bad("action"))?;
                let r = c[2].parse().map_err(|_| bad("reward"))?;
                steps.push(ObsAction::new(o, a));
                rewards.push(r);
            }
            trajectories.push(Trajectory { steps, rewards });
        }
        if trajectories.len() != n {
            return Err(Error::Parse(format!(
                "header says n={n}, found {} trajectories",
                trajectories.len()
            )));
        }
        Ok(Self::new(trajectories, id, seed))
    }
}
