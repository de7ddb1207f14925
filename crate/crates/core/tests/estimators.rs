mod common;

use common::{path_weights, revealing_instance, rng};
use pomdp_ope::constructions::{
    max_c_h, mle_rate_instance, perturb_transition, random_mdp, random_memoryless_policy, random_pomdp, theorem3_instance,
    theorem6_instance, RandomSpec, RevealingRequirement, LEFT, RIGHT,
};
use pomdp_ope::coverage::{compute_c_a, RevealMode};
use pomdp_ope::estimators::{
    c_eff_multi, c_eff_single, eps_approx, fdvf_construct, importance_sampling_ope, log_likelihood, mle_select,
    model_based_ope, occupancy_ratio_bound, restricted_policy_oracle, ModelClass, OpeConfig,
};
use pomdp_ope::pomdp::{full_trajectory_probs, history_obs_probs, trajectory_l1_distance};
use pomdp_ope::{Dataset, Error, ObsAction, Policy, TabularPomdp, Trajectory};
use proptest::prelude::*;

const CAP: u64 = 1 << 22;

fn config(threshold: f64) -> OpeConfig {
    OpeConfig { mode: RevealMode::Single, threshold, floor: false, cap: CAP }
}

fn oracle_log_prob(model: &TabularPomdp, pi_b: &Policy, t: &Trajectory) -> f64 {
    let h = model.horizon();
    let env: f64 = path_weights(model, &t.steps[..h - 1], Some(t.steps[h - 1].obs)).iter().sum();
    (env * pi_b.sequence_prob(&t.steps)).ln()
}

#[test]
fn single_uniform_trajectory_log_likelihood() {
    let h = 7;
    let bundle = theorem3_instance(h).unwrap();
    let data = Dataset::sample(&bundle.true_model, &bundle.behavior_policy, 1, 0, "pi_b").unwrap();
    let ll = log_likelihood(&bundle.true_model, &bundle.behavior_policy, &data, false).unwrap();
    assert!((ll + h as f64 * std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn log_likelihood_matches_forward_oracle() {
    for seed in 0..5 {
        let model = revealing_instance(seed);
        let pi = random_memoryless_policy(&model, 0.1, &mut rng(seed));
        let data = Dataset::sample(&model, &pi, 200, seed, "pi").unwrap();
        let oracle: f64 = data.trajectories.iter().map(|t| oracle_log_prob(&model, &pi, t)).sum();
        let ll = log_likelihood(&model, &pi, &data, false).unwrap();
        assert!((ll - oracle).abs() < 1e-9);
    }
}

#[test]
fn knife_edge_models_tie_without_all_right() {
    let h = 6;
    let bundle = theorem6_instance(h).unwrap();
    let data = Dataset::sample(&bundle.true_model, &bundle.behavior_policy, 400, 1, "pi_b").unwrap();
    let kept: Vec<Trajectory> = data
        .trajectories
        .iter()
        .filter(|t| !t.steps[..h - 1].iter().all(|x| x.action == RIGHT))
        .cloned()
        .collect();
    assert!(kept.len() < data.n());
    let data = Dataset::new(kept, "pi_b", 1);
    let [m1, m2] = &bundle.model_class.models[..] else { panic!("two models") };
    let l1 = log_likelihood(m1, &bundle.behavior_policy, &data, false).unwrap();
    let l2 = log_likelihood(m2, &bundle.behavior_policy, &data, false).unwrap();
    assert_eq!(l1, l2);
    let sel = mle_select(&bundle.model_class.models, &bundle.behavior_policy, &data, false).unwrap();
    assert_eq!(sel.index, 0);
}

#[test]
fn zero_likelihood_needs_floor() {
    let h = 5;
    let bundle = theorem6_instance(h).unwrap();
    let mut steps = vec![ObsAction::new(0, RIGHT); h];
    steps[h - 1] = ObsAction::new(1, RIGHT);
    // all-R ending in bad is impossible under M2
    let data = Dataset::new(vec![Trajectory::from_steps(&bundle.true_model, steps).unwrap()], "pi_b", 0);
    let m2 = &bundle.model_class.models[1];
    let err = log_likelihood(m2, &bundle.behavior_policy, &data, false).unwrap_err();
    assert!(matches!(err, Error::ZeroLikelihood { index: 0 }));
    let floored = log_likelihood(m2, &bundle.behavior_policy, &data, true).unwrap();
    assert!(floored.is_finite() && floored < -600.0);
}

#[test]
fn mle_select_examples() {
    let bundle = theorem3_instance(4).unwrap();
    let data = Dataset::sample(&bundle.true_model, &bundle.behavior_policy, 10, 0, "pi_b").unwrap();
    let sel = mle_select(std::slice::from_ref(&bundle.true_model), &bundle.behavior_policy, &data, false).unwrap();
    assert_eq!(sel.index, 0);
    let err = mle_select(&[], &bundle.behavior_policy, &data, false).unwrap_err();
    assert!(matches!(err, Error::EmptyClass));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn mle_prefers_truth_over_corrupted_copy() {
    let spec = RandomSpec::uniform(4, 2, 2, 3).revealing(RevealingRequirement::Single, 0.2);
    let m_star = random_pomdp(&spec, &mut rng(31)).unwrap();
    let corrupted = perturb_transition(&m_star, 1, 0, 0, 0.2).unwrap();
    let col = |m: &TabularPomdp| m.transition(1, 0).column(0).into_owned();
    assert!((0.5 * (col(&m_star) - col(&corrupted)).abs().sum() - 0.2).abs() < 1e-12);
    let pi_b = Policy::uniform(&m_star);
    let class = vec![corrupted, m_star.clone()];
    let wins = (0..20)
        .filter(|&seed| {
            let data = Dataset::sample(&m_star, &pi_b, 10_000, seed, "pi_b").unwrap();
            mle_select(&class, &pi_b, &data, true).unwrap().index == 1
        })
        .count();
    assert!(wins >= 19, "{wins}/20");
}

#[test]
fn model_based_examples() {
    let bundle = theorem3_instance(8).unwrap();
    let class = ModelClass::new(vec![bundle.true_model.clone()], Some(0)).unwrap();
    let data = Dataset::sample(&bundle.true_model, &bundle.behavior_policy, 100, 2, "pi_b").unwrap();
    let r1 = model_based_ope(&class, &bundle.behavior_policy, bundle.target("pi_1").unwrap(), &data, &config(f64::INFINITY))
        .unwrap();
    assert_eq!(r1.estimate, 1.0);
    assert_eq!(r1.selected_model_index, Some(0));
    let r2 = model_based_ope(&class, &bundle.behavior_policy, bundle.target("pi_2").unwrap(), &data, &config(f64::INFINITY))
        .unwrap();
    assert_eq!(r2.estimate, 0.0);
    assert_eq!(r2.diagnostics["abs_error"].0, 0.0);

    let knife = theorem6_instance(5).unwrap();
    let data = Dataset::sample(&knife.true_model, &knife.behavior_policy, 50, 3, "pi_b").unwrap();
    let err = model_based_ope(&knife.model_class, &knife.behavior_policy, knife.target("pi_e").unwrap(), &data, &config(100.0))
        .unwrap_err();
    assert!(matches!(err, Error::EmptyClass));
}

#[test]
fn importance_sampling_on_policy_is_mean_return() {
    let model = revealing_instance(3);
    let pi = random_memoryless_policy(&model, 0.1, &mut rng(3));
    let data = Dataset::sample(&model, &pi, 300, 4, "pi").unwrap();
    let mean = data.trajectories.iter().map(|t| t.ret()).sum::<f64>() / 300.0;
    let r = importance_sampling_ope(&data, &pi, &pi).unwrap();
    assert!((r.estimate - mean).abs() < 1e-12);
}

#[test]
fn importance_sampling_zero_ratio_contributes_nothing() {
    let bundle = theorem3_instance(4).unwrap();
    let mut steps = vec![ObsAction::new(0, LEFT); 4];
    steps[1].action = RIGHT;
    steps[3] = ObsAction::new(1, LEFT);
    let t = Trajectory::from_steps(&bundle.true_model, steps).unwrap();
    let data = Dataset::new(vec![t], "pi_b", 0);
    let r = importance_sampling_ope(&data, bundle.target("pi_1").unwrap(), &bundle.behavior_policy).unwrap();
    assert_eq!(r.estimate, 0.0);
    let err = importance_sampling_ope(&data, &bundle.behavior_policy, bundle.target("pi_1").unwrap()).unwrap_err();
    assert!(matches!(err, Error::ZeroBehaviorProbability { trajectory: 0, step: 1, action: 1 }));
}

#[test]
fn importance_sampling_is_unbiased_with_exponential_variance() {
    let mut per_sample_var = Vec::new();
    for h in [6, 8] {
        let bundle = theorem3_instance(h).unwrap();
        let pi1 = bundle.target("pi_1").unwrap();
        let mut estimates = Vec::new();
        let mut variances = Vec::new();
        for seed in 0..50 {
            let data = Dataset::sample(&bundle.true_model, &bundle.behavior_policy, 10_000, seed, "pi_b").unwrap();
            let r = importance_sampling_ope(&data, pi1, &bundle.behavior_policy).unwrap();
            estimates.push(r.estimate);
            variances.push(r.diagnostics["std_err"].0.powi(2) * 10_000.0);
        }
        let mean = estimates.iter().sum::<f64>() / 50.0;
        let se = common::std_dev(&estimates) / 50f64.sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * se, "H={h}: {mean} ± {se}");
        per_sample_var.push(variances.iter().sum::<f64>() / 50.0);
    }
    // weight 2^H with probability 2^-H: variance 2^H - 1
    assert!((per_sample_var[0] / 63.0 - 1.0).abs() < 0.2, "{per_sample_var:?}");
    assert!((per_sample_var[1] / 255.0 - 1.0).abs() < 0.2, "{per_sample_var:?}");
}

#[test]
fn transcript_examples() {
    let bundle = theorem3_instance(5).unwrap();
    let empty = Dataset::new(Vec::new(), "pi_b", 0);
    assert!(restricted_policy_oracle(bundle.target("pi_1").unwrap(), &empty).is_empty());

    let model = revealing_instance(4);
    let pi = random_memoryless_policy(&model, 0.1, &mut rng(4));
    let data = Dataset::sample(&model, &Policy::uniform(&model), 30, 5, "u").unwrap();
    let flipped: Vec<Trajectory> = data
        .trajectories
        .iter()
        .map(|t| {
            let steps = t.steps.iter().map(|x| ObsAction::new(x.obs, 1 - x.action)).collect();
            Trajectory::from_steps(&model, steps).unwrap()
        })
        .collect();
    let other = Dataset::new(flipped, "u", 5);
    assert_eq!(restricted_policy_oracle(&pi, &data), restricted_policy_oracle(&pi, &other));
}

#[test]
fn transcripts_differ_exactly_on_all_left_prefixes() {
    // π_1 and π_2 are queried at step H-2 on the logged history, so only the
    // first H-2 actions decide whether the query reveals the difference
    let h = 6;
    let bundle = theorem3_instance(h).unwrap();
    let (pi1, pi2) = (bundle.target("pi_1").unwrap(), bundle.target("pi_2").unwrap());
    let mut differing = 0;
    for seed in 0..40 {
        let data = Dataset::sample(&bundle.true_model, &bundle.behavior_policy, 10, seed, "pi_b").unwrap();
        let hit = data.trajectories.iter().any(|t| t.steps[..h - 2].iter().all(|x| x.action == LEFT));
        let t1 = restricted_policy_oracle(pi1, &data);
        let t2 = restricted_policy_oracle(pi2, &data);
        assert_eq!(t1 != t2, hit, "seed {seed}");
        if let Some((_, step)) = t1.first_difference(&t2) {
            assert_eq!(step, h - 2);
            differing += 1;
        }
    }
    assert!(differing > 0 && differing < 40);
}

#[test]
fn effective_coefficient_is_one_in_trivial_cases() {
    let spec = RandomSpec::uniform(4, 2, 2, 3).revealing(RevealingRequirement::Single, 0.1);
    let model = random_pomdp(&spec, &mut rng(6)).unwrap();
    let pi_b = Policy::uniform(&model);
    let pi_e = random_memoryless_policy(&model, 0.1, &mut rng(6));
    let m_hat = perturb_transition(&model, 1, 0, 0, 0.1).unwrap();
    assert_eq!(c_eff_single(&model, &model, &pi_e, &pi_b, CAP).unwrap().value, 1.0);
    assert_eq!(c_eff_multi(&model, &model, &pi_e, &pi_b, CAP).unwrap().value, 1.0);
    let s = c_eff_single(&model, &m_hat, &pi_b, &pi_b, CAP).unwrap();
    assert!(s.ratios.iter().any(Option::is_some));
    assert!((s.value - 1.0).abs() < 1e-9, "{s:?}");
    let m = c_eff_multi(&model, &m_hat, &pi_b, &pi_b, CAP).unwrap();
    assert!((m.value - 1.0).abs() < 1e-9, "{m:?}");
}

#[test]
fn effective_coefficient_on_mdp_respects_occupancy_ratio() {
    for seed in 0..10 {
        let model = random_mdp(3, 3, 2, &mut rng(seed)).unwrap();
        let m_hat = perturb_transition(&model, seed as usize % 2, 1, 0, 0.15).unwrap();
        let pi_b = random_memoryless_policy(&model, 0.1, &mut rng(seed + 50));
        let pi_e = random_memoryless_policy(&model, 0.0, &mut rng(seed + 90));
        let c = c_eff_single(&model, &m_hat, &pi_e, &pi_b, CAP).unwrap().value;
        let bound = occupancy_ratio_bound(&model, &pi_e, &pi_b, CAP).unwrap();
        assert!(c <= bound + 1e-8, "seed {seed}: {c} > {bound}");
    }
}

#[test]
fn multi_step_effective_coefficient_is_bounded() {
    let mut checked = 0;
    for seed in 0..40 {
        let model = revealing_instance(seed + 200);
        if model.horizon() < 3 {
            continue;
        }
        let pi_b = random_memoryless_policy(&model, 0.2, &mut rng(seed));
        let c_h = max_c_h(&model, &pi_b, CAP).unwrap();
        if !c_h.is_finite() {
            continue;
        }
        let m_hat = perturb_transition(&model, 0, 0, 0, 0.1);
        let Ok(m_hat) = m_hat else { continue };
        let pi_e = random_memoryless_policy(&model, 0.0, &mut rng(seed + 1));
        let r = c_eff_multi(&model, &m_hat, &pi_e, &pi_b, CAP).unwrap();
        let c_a = compute_c_a(&model, &pi_b, CAP).unwrap();
        assert!(r.value <= c_a * c_h + 1e-6);
        assert!(r.tilde.unwrap() <= r.value + 1e-8);
        checked += 1;
    }
    assert!(checked >= 5);
}

#[test]
fn multi_step_effective_coefficient_rejects_history_behavior() {
    let bundle = theorem3_instance(4).unwrap();
    let pi1 = bundle.target("pi_1").unwrap();
    let err = c_eff_multi(&bundle.true_model, &bundle.true_model, pi1, pi1, CAP).unwrap_err();
    assert!(matches!(err, Error::UnsupportedPolicy(_)));
}

#[test]
fn approximation_error_examples() {
    let knife = theorem6_instance(5).unwrap();
    let data = Dataset::sample(&knife.true_model, &knife.behavior_policy, 300, 9, "pi_b").unwrap();
    let m_star = &knife.true_model;
    let pi_b = &knife.behavior_policy;
    assert_eq!(eps_approx(std::slice::from_ref(m_star), m_star, pi_b, &data, false).unwrap(), 0.0);

    let mut with_truth = knife.model_class.models.clone();
    with_truth.push(m_star.clone());
    assert!(eps_approx(&with_truth, m_star, pi_b, &data, true).unwrap() <= 1e-12);

    let got = eps_approx(&knife.model_class.models, m_star, pi_b, &data, true).unwrap();
    let oracle = knife
        .model_class
        .models
        .iter()
        .map(|m| {
            data.trajectories
                .iter()
                .map(|t| {
                    let lm = oracle_log_prob(m, pi_b, t);
                    oracle_log_prob(m_star, pi_b, t) - if lm.is_finite() { lm } else { 1e-300f64.ln() }
                })
                .sum::<f64>()
                / data.n() as f64
        })
        .fold(f64::INFINITY, f64::min);
    assert!((got - oracle).abs() < 1e-9);
}

#[test]
fn fdvf_single_state_closed_form() {
    let spec = RandomSpec { state_counts: vec![1, 2, 2], ..RandomSpec::uniform(3, 2, 2, 2) };
    let model = random_pomdp(&spec, &mut rng(40)).unwrap();
    let pi_b = Policy::uniform(&model);
    let pi_e = random_memoryless_policy(&model, 0.0, &mut rng(41));
    let f = fdvf_construct(&model, &pi_b, &pi_e, 0, CAP).unwrap();
    let u = common::outcome_oracle(&model, &pi_b, 0);
    let mean_return: f64 = (0..u.nrows()).map(|i| u[(i, 0)] * f.returns[i]).sum();
    let v_s = f.latent_values[0];
    for i in 0..u.nrows() {
        assert!((f.values[i] - f.returns[i] * v_s / mean_return).abs() < 1e-12);
    }
    assert!(f.residual <= 1e-8);
}

#[test]
fn fdvf_on_policy_recovers_returns() {
    for seed in 0..5 {
        let model = revealing_instance(seed + 300);
        let pi = random_memoryless_policy(&model, 0.1, &mut rng(seed));
        for h in 0..model.horizon() {
            let f = match fdvf_construct(&model, &pi, &pi, h, CAP) {
                Ok(f) => f,
                Err(Error::DegeneratePrior { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            assert!(f.residual <= 1e-8);
            let u = common::outcome_oracle(&model, &pi, h);
            for i in 0..u.nrows() {
                if u.row(i).sum() > 0.0 {
                    assert!((f.values[i] - f.returns[i]).abs() <= 1e-8);
                }
            }
        }
    }
}

#[test]
fn fdvf_rejects_zero_return_futures() {
    let bundle = theorem3_instance(4).unwrap();
    let err = fdvf_construct(&bundle.true_model, &bundle.behavior_policy, &bundle.behavior_policy, 0, CAP).unwrap_err();
    assert!(matches!(err, Error::DegenerateWeight { step: 0, .. }));
}

#[test]
fn mle_distance_shrinks_with_sample_size() {
    let (class, pi_b, _) = mle_rate_instance().unwrap();
    let m_star = &class.models[0];
    let tv: Vec<f64> = class
        .models
        .iter()
        .map(|m| 0.5 * trajectory_l1_distance(m, m_star, &pi_b, CAP).unwrap())
        .collect();
    let sizes = [100, 1_000, 10_000];
    let mut means = [0.0; 3];
    let mut within = 0;
    let bound = 5.0 * ((class.len() as f64).ln() / 10_000.0).sqrt();
    for seed in 0..20 {
        for (i, &n) in sizes.iter().enumerate() {
            let data = Dataset::sample(m_star, &pi_b, n, seed, "pi_b").unwrap();
            let sel = mle_select(&class.models, &pi_b, &data, true).unwrap();
            means[i] += tv[sel.index] / 20.0;
            if n == 10_000 && tv[sel.index] <= bound {
                within += 1;
            }
        }
    }
    assert!(means[0] >= means[1] && means[1] >= means[2] && means[0] > means[2], "{means:?}");
    assert!(within >= 18, "{within}/20");
}

#[test]
fn marginal_distance_never_exceeds_full_distance() {
    let (class, pi_b, _) = mle_rate_instance().unwrap();
    let m_star = &class.models[0];
    for m in &class.models[1..] {
        let full: f64 = full_trajectory_probs(m, &pi_b, CAP)
            .unwrap()
            .iter()
            .zip(full_trajectory_probs(m_star, &pi_b, CAP).unwrap())
            .map(|(a, b)| (a - b).abs())
            .sum();
        for len in 0..m.horizon() {
            let a = history_obs_probs(m, &pi_b, len, CAP).unwrap();
            let b = history_obs_probs(m_star, &pi_b, len, CAP).unwrap();
            let marginal: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
            assert!(marginal <= full + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn selection_ignores_behavior_factor(seed in 0u64..10_000) {
        // replacing π_b by another full-support policy shifts every model's
        // log-likelihood by the same amount
        let (class, pi_b, _) = mle_rate_instance().unwrap();
        let data = Dataset::sample(&class.models[0], &pi_b, 200, seed, "pi_b").unwrap();
        let other = random_memoryless_policy(&class.models[0], 0.05, &mut rng(seed));
        let a = mle_select(&class.models, &pi_b, &data, true).unwrap();
        let b = mle_select(&class.models, &other, &data, true).unwrap();
        prop_assert_eq!(a.index, b.index);
        let shift = a.log_likelihoods[0] - b.log_likelihoods[0];
        for (x, y) in a.log_likelihoods.iter().zip(&b.log_likelihoods) {
            prop_assert!((x - y - shift).abs() < 1e-6);
        }
    }

    #[test]
    fn model_based_estimates_are_bounded(seed in 0u64..10_000, n in 1usize..200) {
        let (class, pi_b, pi_e) = mle_rate_instance().unwrap();
        let data = Dataset::sample(&class.models[0], &pi_b, n, seed, "pi_b").unwrap();
        let cfg = OpeConfig { mode: RevealMode::Single, threshold: f64::INFINITY, floor: true, cap: CAP };
        let r = model_based_ope(&class, &pi_b, &pi_e, &data, &cfg).unwrap();
        prop_assert!(r.estimate >= 0.0 && r.estimate <= class.models[0].horizon() as f64);
    }
}
