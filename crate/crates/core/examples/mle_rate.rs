//! Error of model-based evaluation over a small perturbed model class as the
//! sample size grows.

use pomdp_ope::constructions::mle_rate_instance;
use pomdp_ope::coverage::RevealMode;
use pomdp_ope::estimators::{model_based_ope, OpeConfig};
use pomdp_ope::pomdp::{default_cap, policy_value};
use pomdp_ope::Dataset;

fn main() -> pomdp_ope::Result<()> {
    let (class, pi_b, pi_e) = mle_rate_instance()?;
    let truth = policy_value(&class.models[0], &pi_e, default_cap())?;
    let config = OpeConfig { mode: RevealMode::Single, threshold: f64::INFINITY, floor: false, cap: default_cap() };
    println!("|M| = {}, J(pi_e) = {truth:.5}", class.len());
    println!("{:>6} {:>12} {:>10}", "n", "median err", "hit rate");
    for n in [100, 1_000, 10_000] {
        let mut errors = Vec::new();
        let mut hits = 0;
        for seed in 0..20 {
            let data = Dataset::sample(&class.models[0], &pi_b, n, seed, "pi_b")?;
            let r = model_based_ope(&class, &pi_b, &pi_e, &data, &config)?;
            errors.push((r.estimate - truth).abs());
            hits += usize::from(r.selected_model_index == Some(0));
        }
        errors.sort_by(f64::total_cmp);
        println!("{n:>6} {:>12.2e} {:>10}", errors[errors.len() / 2], format!("{hits}/20"));
    }
    Ok(())
}
