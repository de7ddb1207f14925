//! Future-dependent value functions: weights on observable futures whose
//! expectation under each latent state equals that state's value.

use pomdp_ope::constructions::{random_memoryless_policy, random_pomdp, RandomSpec, RevealingRequirement};
use pomdp_ope::estimators::fdvf_construct;
use pomdp_ope::pomdp::default_cap;
use pomdp_ope::Policy;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pomdp_ope::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spec = RandomSpec::uniform(3, 2, 2, 2).revealing(RevealingRequirement::Multi, 0.05);
    let model = random_pomdp(&spec, &mut rng)?;
    let pi_b = Policy::uniform(&model);
    let pi_e = random_memoryless_policy(&model, 0.05, &mut rng);

    for h in 0..model.horizon() {
        let f = fdvf_construct(&model, &pi_b, &pi_e, h, default_cap())?;
        println!(
            "step {h}: {} futures ({} dropped), V_S = {:.4?}, residual {:.1e}",
            f.values.len(),
            f.dropped_futures,
            f.latent_values.as_slice(),
            f.residual
        );
    }
    Ok(())
}
