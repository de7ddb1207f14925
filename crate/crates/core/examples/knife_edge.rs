//! A two-model class where both candidates record the whole action history in
//! the latent state. Their emissions are uninformative, so every revealing
//! coefficient is infinite and a finite pre-filter rejects the whole class.
//! Unfiltered maximum likelihood still picks the model that matches the data.
//!
//! cargo run --example knife_edge -- 6

use pomdp_ope::constructions::theorem6_instance;
use pomdp_ope::coverage::{max_revealing_coefficient, RevealMode};
use pomdp_ope::estimators::{model_based_ope, OpeConfig};
use pomdp_ope::pomdp::{default_cap, trajectory_l1_distance};
use pomdp_ope::{Dataset, Error};

fn main() -> pomdp_ope::Result<()> {
    let h = std::env::args().nth(1).map_or(6, |s| s.parse().expect("horizon"));
    let cap = default_cap();
    let b = theorem6_instance(h)?;
    let pi_b = &b.behavior_policy;
    let pi_e = &b.target_policies[0].1;

    for (i, m) in b.model_class.models.iter().enumerate() {
        let c_o = max_revealing_coefficient(m, pi_b, RevealMode::Single, cap)?;
        let l1 = trajectory_l1_distance(m, &b.true_model, pi_b, cap)?;
        println!("M{}: max C_O = {c_o}, L1 to M* under pi_b = {l1:.3e}", i + 1);
    }
    let c_o = max_revealing_coefficient(&b.true_model, pi_b, RevealMode::Single, cap)?;
    println!("M*: max C_O = {c_o}");

    let data = Dataset::sample(&b.true_model, pi_b, 500, 7, "pi_b")?;
    let filtered = OpeConfig { mode: RevealMode::Single, threshold: 10.0, floor: true, cap };
    match model_based_ope(&b.model_class, pi_b, pi_e, &data, &filtered) {
        Err(e @ Error::EmptyClass) => println!("threshold 10: {e} (exit code {})", e.exit_code()),
        other => println!("threshold 10: unexpected {other:?}"),
    }

    // M2 gives zero likelihood to the all-R prefix, hence the floor
    let open = OpeConfig { threshold: f64::INFINITY, ..filtered };
    let r = model_based_ope(&b.model_class, pi_b, pi_e, &data, &open)?;
    println!(
        "unfiltered MLE picks M{} with J(pi_e) = {} (true {})",
        r.selected_model_index.unwrap() + 1,
        r.estimate,
        b.expected_values["J_Mstar(pi_e)"]
    );
    Ok(())
}
