//! Coverage and revealing coefficients of a random revealing model under the
//! uniform behavior policy, printed as JSON.
//!
//! cargo run --example coverage_report -- 42

use pomdp_ope::constructions::{random_pomdp, RandomSpec, RevealingRequirement};
use pomdp_ope::coverage::{coverage_report, ReportOptions};
use pomdp_ope::pomdp::default_cap;
use pomdp_ope::Policy;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pomdp_ope::Result<()> {
    let seed = std::env::args().nth(1).map_or(42, |s| s.parse().expect("seed"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = RandomSpec::uniform(4, 2, 2, 3).revealing(RevealingRequirement::Single, 0.1);
    let model = random_pomdp(&spec, &mut rng)?;
    let pi_b = Policy::uniform(&model);

    let report = coverage_report(&model, &pi_b, &ReportOptions::all(default_cap()))?;
    println!("{}", report.to_json());

    // Monte Carlo estimate of the history coefficient, for comparison
    let mut opts = ReportOptions::all(default_cap());
    opts.mc_samples = Some(20_000);
    opts.seed = seed;
    let mc = coverage_report(&model, &pi_b, &opts)?;
    println!("exact C_H max = {:?}, MC = {:?}", report.c_h_max.map(|c| c.0), mc.c_h_max.map(|c| c.0));
    Ok(())
}
