//! Observable-operator form of a revealing model. Trajectory probabilities are
//! rebuilt from the operators alone and compared against the forward
//! recursion, in both the single-step and multi-step parameterizations.

use pomdp_ope::constructions::{random_pomdp, RandomSpec, RevealingRequirement};
use pomdp_ope::coverage::RevealMode;
use pomdp_ope::oom::{build_oom, oom_check_suite, oom_trajectory_prob};
use pomdp_ope::pomdp::{default_cap, sample_trajectory, trajectory_prob};
use pomdp_ope::Policy;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pomdp_ope::Result<()> {
    let cap = default_cap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = RandomSpec::uniform(4, 2, 2, 3).revealing(RevealingRequirement::Single, 0.1);
    let model = random_pomdp(&spec, &mut rng)?;
    let pi = Policy::uniform(&model);

    for mode in [RevealMode::Single, RevealMode::Multi] {
        let oom = build_oom(&model, mode, Some(&pi), cap)?;
        println!("{mode:?}: b0 has {} entries, c(0) = {:.3}", oom.b0().len(), oom.coefficient(0));
        let tau = sample_trajectory(&model, &pi, &mut rng);
        let exact = trajectory_prob(&model, &pi, &tau, tau.len())?.joint;
        println!("  P(tau) forward = {exact:.6e}, operators = {:.6e}", oom_trajectory_prob(&oom, &pi, &tau)?);
        let report = oom_check_suite(&model, &oom, &pi, 20, 1, 1e-8, cap)?;
        println!("  checks: {}", report.to_json());
    }
    Ok(())
}
