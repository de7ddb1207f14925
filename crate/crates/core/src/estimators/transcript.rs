use crate::pomdp::{Dataset, Policy};

/// Everything a model-free method may learn about `π_e`: its action
/// distribution at every step of every logged trajectory, queried on the
/// logged history and current observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    /// `queries[i][h] = π_e(· | τ^{(i)}_{h-1}, o^{(i)}_h)`.
    pub queries: Vec<Vec<Vec<f64>>>,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// First `(trajectory, step)` where the two transcripts disagree.
    pub fn first_difference(&self, other: &Transcript) -> Option<(usize, usize)> {
        for (i, (a, b)) in self.queries.iter().zip(&other.queries).enumerate() {
            for (h, (x, y)) in a.iter().zip(b).enumerate() {
                if x != y {
                    return Some((i, h));
                }
            }
            if a.len() != b.len() {
                return Some((i, a.len().min(b.len())));
            }
        }
        (self.queries.len() != other.queries.len())
            .then(|| (self.queries.len().min(other.queries.len()), 0))
    }
}

pub fn restricted_policy_oracle(pi_e: &Policy, data: &Dataset) -> Transcript {
    let queries = data
        .trajectories
        .iter()
        .map(|t| {
            (0..t.steps.len())
                .map(|h| pi_e.action_probs(&t.steps[..h], t.steps[h].obs).to_vec())
                .collect()
        })
        .collect();
    Transcript { queries }
}
