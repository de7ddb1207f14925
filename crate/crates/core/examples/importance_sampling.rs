//! Full-trajectory importance sampling against model-based evaluation of the
//! always-L policy. The importance weight is 2^H on the single matching action
//! sequence, so the estimator's spread grows exponentially with the horizon.

use pomdp_ope::constructions::theorem3_instance;
use pomdp_ope::coverage::RevealMode;
use pomdp_ope::estimators::{importance_sampling_ope, model_based_ope, ModelClass, OpeConfig};
use pomdp_ope::pomdp::default_cap;
use pomdp_ope::Dataset;

fn main() -> pomdp_ope::Result<()> {
    let n = 1000;
    println!("{:>3} {:>10} {:>10} {:>10}", "H", "IS mean", "IS std", "MB std");
    for h in [4, 6, 8, 10] {
        let b = theorem3_instance(h)?;
        let pi_e = b.target("pi_1").unwrap();
        let class = ModelClass::new(vec![b.true_model.clone()], Some(0))?;
        let config = OpeConfig { mode: RevealMode::Single, threshold: f64::INFINITY, floor: false, cap: default_cap() };
        let (mut is, mut mb) = (Vec::new(), Vec::new());
        for seed in 0..50 {
            let data = Dataset::sample(&b.true_model, &b.behavior_policy, n, seed, "pi_b")?;
            is.push(importance_sampling_ope(&data, pi_e, &b.behavior_policy)?.estimate);
            mb.push(model_based_ope(&class, &b.behavior_policy, pi_e, &data, &config)?.estimate);
        }
        let (m, s) = mean_std(&is);
        println!("{h:>3} {m:>10.4} {s:>10.4} {:>10.4}", mean_std(&mb).1);
    }
    Ok(())
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, var.sqrt())
}
