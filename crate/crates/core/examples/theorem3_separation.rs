//! Two target policies that agree on almost every logged history but differ
//! in value by one. Model-based evaluation separates them; a model-free
//! estimator that only queries the target policy on logged histories usually
//! cannot.
//!
//! cargo run --release --example theorem3_separation -- 20 10000

use pomdp_ope::constructions::theorem3_instance;
use pomdp_ope::coverage::RevealMode;
use pomdp_ope::estimators::{model_based_ope, restricted_policy_oracle, ModelClass, OpeConfig};
use pomdp_ope::pomdp::default_cap;
use pomdp_ope::Dataset;

fn main() -> pomdp_ope::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().expect("integer argument"));
    let h = args.next().unwrap_or(12);
    let n = args.next().unwrap_or(2000);

    let bundle = theorem3_instance(h)?;
    println!("{} (H={h})", bundle.name);
    for (k, v) in &bundle.expected_values {
        println!("  {k:10} = {v}");
    }

    let data = Dataset::sample(&bundle.true_model, &bundle.behavior_policy, n, 1, "pi_b")?;
    let pi_1 = bundle.target("pi_1").unwrap();
    let pi_2 = bundle.target("pi_2").unwrap();

    let t1 = restricted_policy_oracle(pi_1, &data);
    let t2 = restricted_policy_oracle(pi_2, &data);
    match t1.first_difference(&t2) {
        None => println!("restricted oracle: transcripts identical over {n} trajectories"),
        Some((i, k)) => println!("restricted oracle: first difference at trajectory {i}, step {k}"),
    }

    let class = ModelClass::new(vec![bundle.true_model.clone()], Some(0))?;
    let config = OpeConfig { mode: RevealMode::Single, threshold: f64::INFINITY, floor: false, cap: default_cap() };
    for (name, pi) in [("pi_1", pi_1), ("pi_2", pi_2)] {
        let r = model_based_ope(&class, &bundle.behavior_policy, pi, &data, &config)?;
        println!("model-based J({name}) = {}", r.estimate);
    }
    Ok(())
}
