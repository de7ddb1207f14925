//! Belief tracking along a sampled trajectory, with the exact value of the
//! policy and a Monte Carlo check.

use pomdp_ope::constructions::{random_pomdp, RandomSpec};
use pomdp_ope::pomdp::{belief_state, default_cap, policy_value, policy_value_mc, sample_trajectory};
use pomdp_ope::Policy;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pomdp_ope::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = random_pomdp(&RandomSpec::uniform(5, 3, 2, 3), &mut rng)?;
    let pi = Policy::uniform(&model);

    let tau = sample_trajectory(&model, &pi, &mut rng);
    for k in 0..model.horizon() {
        let b = belief_state(&model, &tau.steps[..k])?;
        let o = tau.steps[k];
        println!("k={k} belief {:.3?} then o={} a={}", b.values.as_slice(), o.obs, o.action);
    }

    let exact = policy_value(&model, &pi, default_cap())?;
    let mc = policy_value_mc(&model, &pi, 20_000, &mut rng)?;
    println!("J = {exact:.5}, MC = {:.5} ± {:.5}", mc.mean, mc.std_err);
    Ok(())
}
