//! Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::Rng;

use pomdp_ope::constructions::{
    max_c_h, mle_rate_instance, random_history_policy, random_mdp, random_memoryless_policy, random_pomdp,
    theorem3_instance, theorem6_instance, RandomSpec, RevealingRequirement,
};
use pomdp_ope::coverage::{
    compute_c_a, max_revealing_coefficient, outcome_matrix, prefilter, sigma_future, sigma_obs, RevealMode,
};
use pomdp_ope::error::Error;
use pomdp_ope::estimators::{
    c_eff_multi, c_eff_single, fdvf_construct, future_returns, log_likelihood, mle_select, model_based_ope,
    occupancy_ratio_bound, restricted_policy_oracle, OpeConfig,
};
use pomdp_ope::harness::{run_experiment, ExperimentConfig, ExperimentKind};
use pomdp_ope::linalg::inverse_l1;
use pomdp_ope::oom::{belief_relation_residual, build_oom, oom_trajectory_prob, operator_contraction_check};
use pomdp_ope::pomdp::{
    belief_state, default_cap, enumerate_trajectories, policy_value, sample_trajectory, trajectory_l1_distance,
    trajectory_prob,
};
use pomdp_ope::{Dataset, Policy, TabularPomdp};

use common::{all_histories, median, revealing_instance, rng, std_dev};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed <= limit, || format!("took {:.1} s, limit {} s", elapsed.as_secs_f64(), limit.as_secs()))
}

fn e(err: Error) -> String {
    err.to_string()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let cap = default_cap();
    for h in [3, 8, 20] {
        let b = theorem3_instance(h).map_err(e)?;
        let pi_1 = b.target("pi_1").unwrap();
        let pi_2 = b.target("pi_2").unwrap();
        let m = &b.true_model;
        let pi_b = &b.behavior_policy;
        let j1 = policy_value(m, pi_1, cap).map_err(e)?;
        let j2 = policy_value(m, pi_2, cap).map_err(e)?;
        ensure(j1 == 1.0 && j2 == 0.0, || format!("H={h}: J(pi_1)={j1}, J(pi_2)={j2}"))?;
        let c_a = compute_c_a(m, pi_b, cap).map_err(e)?;
        let c_h = max_c_h(m, pi_b, cap).map_err(e)?;
        let c_o = max_revealing_coefficient(m, pi_b, RevealMode::Single, cap).map_err(e)?;
        let c_f = max_revealing_coefficient(m, pi_b, RevealMode::Multi, cap).map_err(e)?;
        for (name, got, want) in [("C_A", c_a, 2.0), ("C_H", c_h, 1.0), ("C_O", c_o, 1.0), ("C_F", c_f, 1.0)] {
            ensure((got - want).abs() <= 1e-9, || format!("H={h}: {name}={got}, expected {want}"))?;
        }
    }
    let t = start.elapsed();
    within(t, Duration::from_secs(10))?;
    Ok(format!("H in {{3,8,20}} exact values, {:.1} s", t.as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let config = ExperimentConfig::new(ExperimentKind::Theorem3Separation, vec![20], vec![10_000], (0..100).collect());
    let result = run_experiment(&config).map_err(e)?;
    ensure(result.error_rows == 0, || format!("{} error rows", result.error_rows))?;
    let mut mb_rows = 0;
    for r in result.rows.iter().filter(|r| r.method == "model-based-mle") {
        mb_rows += 1;
        ensure(r.abs_error == Some(0.0), || format!("seed {} {}: absError {:?}", r.seed, r.policy, r.abs_error))?;
    }
    ensure(mb_rows == 200, || format!("{mb_rows} model-based rows, expected 200"))?;
    let flags: Vec<bool> = result.rows.iter().filter_map(|r| r.transcripts_equal).collect();
    ensure(flags.len() == 100, || format!("{} transcript rows", flags.len()))?;
    let equal = flags.iter().filter(|&&b| b).count();

    // Independent transcript check on one seed's data.
    let b = theorem3_instance(20).map_err(e)?;
    let data = Dataset::sample(&b.true_model, &b.behavior_policy, 10_000, 7, "uniform").map_err(e)?;
    let t1 = restricted_policy_oracle(b.target("pi_1").unwrap(), &data);
    let t2 = restricted_policy_oracle(b.target("pi_2").unwrap(), &data);
    let reached = data.trajectories.iter().any(|t| t.steps[..18].iter().all(|x| x.action == 0));
    ensure((t1 == t2) != reached, || "transcript equality disagrees with the all-L prefix count".into())?;

    let t = start.elapsed();
    // Each trajectory separates the policies iff its first H-2 actions are all L.
    let per_dataset = 1.0 - (1.0 - 0.5f64.powi(18)).powi(10_000);
    within(t, Duration::from_secs(120))?;
    ensure(equal >= 95, || {
        format!(
            "transcripts equal in {equal}/100 seeds, need >= 95; per-dataset separation probability {per_dataset:.4}; model-based absError 0 in all rows; {:.1} s",
            t.as_secs_f64()
        )
    })?;
    Ok(format!("transcripts equal in {equal}/100 seeds, absError 0 in all 200 model-based rows, {:.1} s", t.as_secs_f64()))
}

fn all_right(t: &pomdp_ope::Trajectory) -> bool {
    t.steps[..t.steps.len() - 1].iter().all(|x| x.action == 1)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let cap = default_cap();

    let b6 = theorem6_instance(6).map_err(e)?;
    let l1 = trajectory_l1_distance(&b6.model_class.models[0], &b6.true_model, &b6.behavior_policy, cap).map_err(e)?;
    ensure(l1 == 0.0, || format!("H=6 TV(M1, M*) = {}", l1 / 2.0))?;

    let b = theorem6_instance(12).map_err(e)?;
    let (m1, m2) = (&b.model_class.models[0], &b.model_class.models[1]);
    let pi_b = &b.behavior_policy;
    let pi_e = b.target("pi_e").unwrap();
    let mut lacking = 0;
    let mut witness = None;
    for seed in 0..50 {
        let data = Dataset::sample(&b.true_model, pi_b, 500, seed, "uniform").map_err(e)?;
        if data.trajectories.iter().any(all_right) {
            continue;
        }
        lacking += 1;
        let l1 = log_likelihood(m1, pi_b, &data, false).map_err(e)?;
        let l2 = log_likelihood(m2, pi_b, &data, false).map_err(e)?;
        ensure(l1 == l2, || format!("seed {seed}: log-likelihoods {l1} vs {l2}"))?;
        witness.get_or_insert(data);
    }
    ensure(lacking > 0, || "every dataset contains the all-R sequence".into())?;
    let data = witness.unwrap();

    for threshold in [1.0, 10.0, 1e6, 1e300] {
        let kept = prefilter(&b.model_class.models, pi_b, RevealMode::Single, threshold, cap).map_err(e)?;
        ensure(kept.is_empty(), || format!("threshold {threshold} keeps {kept:?}"))?;
        let config = OpeConfig { mode: RevealMode::Single, threshold, floor: false, cap };
        match model_based_ope(&b.model_class, pi_b, pi_e, &data, &config) {
            Err(err @ Error::EmptyClass) => ensure(err.exit_code() == 3, || "exit code".into())?,
            other => return Err(format!("threshold {threshold}: expected an empty class, got {other:?}")),
        }
    }
    let code = cli_exit_code(&b, &data)?;
    ensure(code == 3, || format!("CLI exit code {code}, expected 3"))?;

    let selection = mle_select(&b.model_class.models, pi_b, &data, false).map_err(e)?;
    ensure(selection.index == 0, || format!("MLE picked {}", selection.index))?;
    let j = policy_value(&b.true_model, pi_e, cap).map_err(e)?;
    let j2 = policy_value(m2, pi_e, cap).map_err(e)?;
    let j1 = policy_value(m1, pi_e, cap).map_err(e)?;
    ensure(j2 - j == 1.0 && j1 == j, || format!("J(pi_e)={j}, J_M1={j1}, J_M2={j2}"))?;

    let t = start.elapsed();
    within(t, Duration::from_secs(60))?;
    Ok(format!(
        "TV 0 at H=6, equal likelihoods on {lacking}/50 datasets without all-R, exit code 3, value gap 1, {:.1} s",
        t.as_secs_f64()
    ))
}

fn cli_exit_code(b: &pomdp_ope::constructions::HardnessBundle, data: &Dataset) -> Result<i32, String> {
    let dir = tempfile::tempdir().map_err(|x| x.to_string())?;
    let p = |name: &str| dir.path().join(name);
    let writes = [
        ("m1.json", b.model_class.models[0].to_json()),
        ("m2.json", b.model_class.models[1].to_json()),
        ("pi_b.json", b.behavior_policy.to_json()),
        ("pi_e.json", b.target_policies[0].1.to_json()),
        ("data.txt", data.to_text()),
    ];
    for (name, text) in writes {
        std::fs::write(p(name), text).map_err(|x| x.to_string())?;
    }
    let status = Command::new(env!("CARGO_BIN_EXE_pomdp-ope"))
        .arg("ope")
        .arg("--models")
        .arg(p("m1.json"))
        .arg(p("m2.json"))
        .arg("--policy-b")
        .arg(p("pi_b.json"))
        .arg("--policy-e")
        .arg(p("pi_e.json"))
        .arg("--data")
        .arg(p("data.txt"))
        .args(["--mode", "single", "--threshold", "1000"])
        .stderr(std::process::Stdio::null())
        .status()
        .map_err(|x| x.to_string())?;
    status.code().ok_or_else(|| "terminated by signal".into())
}

struct Fixture {
    model: TabularPomdp,
    pi_b: Policy,
    pi_e: Policy,
}

fn revealing_fixtures() -> Vec<Fixture> {
    (0..20)
        .map(|i| {
            let model = revealing_instance(1000 + i);
            let mut r = rng(5000 + i);
            let pi_b = random_memoryless_policy(&model, 0.05, &mut r);
            let pi_e = random_history_policy(&model, &mut r).unwrap();
            Fixture { model, pi_b, pi_e }
        })
        .collect()
}

fn criterion_4(fixtures: &[Fixture]) -> Outcome {
    let start = Instant::now();
    let cap = default_cap();
    let mut worst_prob: f64 = 0.0;
    let mut worst_belief: f64 = 0.0;
    let mut trajectories = 0;
    for (i, f) in fixtures.iter().enumerate() {
        let all = enumerate_trajectories(&f.model, cap).map_err(e)?;
        let histories = all_histories(&f.model);
        for mode in [RevealMode::Single, RevealMode::Multi] {
            let oom = build_oom(&f.model, mode, Some(&f.pi_b), cap).map_err(|x| format!("instance {i} {mode:?}: {x}"))?;
            for tau in &all {
                let exact = trajectory_prob(&f.model, &f.pi_e, tau, tau.len()).map_err(e)?.joint;
                let via_oom = oom_trajectory_prob(&oom, &f.pi_e, tau).map_err(e)?;
                worst_prob = worst_prob.max((exact - via_oom).abs());
            }
            for h in &histories {
                if belief_state(&f.model, h).is_err() {
                    continue;
                }
                worst_belief = worst_belief.max(belief_relation_residual(&f.model, &oom, h).map_err(e)?);
            }
            trajectories += all.len();
        }
    }
    ensure(worst_prob <= 1e-8, || format!("max trajectory error {worst_prob:.3e}"))?;
    ensure(worst_belief <= 1e-8, || format!("max belief residual {worst_belief:.3e}"))?;
    let t = start.elapsed();
    within(t, Duration::from_secs(60))?;
    Ok(format!(
        "{trajectories} trajectory checks, max error {worst_prob:.1e}, max belief residual {worst_belief:.1e}, {:.1} s",
        t.as_secs_f64()
    ))
}

fn criterion_5(fixtures: &[Fixture]) -> Outcome {
    let cap = default_cap();
    let mut checks = 0;
    let mut worst = f64::NEG_INFINITY;
    for (i, f) in fixtures.iter().enumerate() {
        let inner = f.model.horizon() - 1;
        if inner == 0 {
            continue;
        }
        let mut r = rng(9000 + i as u64);
        for mode in [RevealMode::Single, RevealMode::Multi] {
            let oom = build_oom(&f.model, mode, Some(&f.pi_b), cap).map_err(e)?;
            for _ in 0..20 {
                let j = r.random_range(0..inner);
                let h = r.random_range(j..inner);
                let c = match mode {
                    RevealMode::Single => sigma_obs(&f.model, j).coefficient,
                    RevealMode::Multi => sigma_future(&f.model, &f.pi_b, j, cap).map_err(e)?.coefficient,
                };
                let dim = oom.outcome(j).nrows();
                let x = DVector::from_iterator(dim, (0..dim).map(|_| r.random_range(-1.0..=1.0)));
                let prefix = sample_trajectory(&f.model, &f.pi_e, &mut r).steps[..j].to_vec();
                let lhs = operator_contraction_check(&oom, &x, j, h, &f.pi_e, &prefix, cap).map_err(e)?;
                let excess = lhs - c * x.abs().sum();
                worst = worst.max(excess);
                ensure(excess <= 1e-8, || format!("instance {i} {mode:?} j={j} h={h}: excess {excess:.3e}"))?;
                checks += 1;
            }
        }
    }
    Ok(format!("{checks} random vectors, max (lhs - c|x|) = {worst:.3e}"))
}

fn criterion_6() -> Outcome {
    let (class, _, _) = mle_rate_instance().map_err(e)?;
    let config = ExperimentConfig::new(ExperimentKind::MleRate, vec![5], vec![100, 1_000, 10_000], (0..20).collect());
    let result = run_experiment(&config).map_err(e)?;
    ensure(result.error_rows == 0, || format!("{} error rows", result.error_rows))?;
    let mut medians = Vec::new();
    for n in [100, 1_000, 10_000] {
        let mut errs: Vec<f64> =
            result.rows.iter().filter(|r| r.n == n).map(|r| r.abs_error.unwrap()).collect();
        ensure(errs.len() == 20, || format!("n={n}: {} rows", errs.len()))?;
        medians.push(median(&mut errs));
    }
    ensure(medians.windows(2).all(|w| w[1] <= w[0]), || format!("medians {medians:?} not non-increasing"))?;
    ensure(medians[2] <= 0.05, || format!("median at n=10^4 is {}", medians[2]))?;
    Ok(format!("{} candidate models, medians {:?} at n = 1e2, 1e3, 1e4", class.len(), medians))
}

fn criterion_7() -> Outcome {
    let cap = default_cap();
    let mut checked = 0;
    let mut skipped = 0;
    let mut worst_gap = f64::NEG_INFINITY;
    for i in 0..200u64 {
        if checked == 10 {
            break;
        }
        let mut r = rng(7000 + i);
        let m_star = revealing_instance(7100 + i);
        let h = m_star.horizon();
        let spec = RandomSpec {
            horizon: h,
            state_counts: (0..h).map(|_| r.random_range(1..=m_star.obs_count(0).min(3))).collect(),
            action_count: 2,
            obs_counts: m_star.obs_counts().to_vec(),
            revealing: RevealingRequirement::Single,
            min_singular: 0.05,
        };
        let m_hat = random_pomdp(&spec, &mut r).map_err(e)?;
        let pi_b = Policy::uniform(&m_star);
        let pi_e = random_history_policy(&m_star, &mut r).map_err(e)?;
        let c_a = compute_c_a(&m_star, &pi_b, cap).map_err(e)?;
        let c_h = max_c_h(&m_star, &pi_b, cap).map_err(e)?;
        if !c_h.is_finite() {
            skipped += 1;
            continue;
        }
        let bound = c_a * c_h + 1e-6;
        let single = c_eff_single(&m_star, &m_hat, &pi_e, &pi_b, cap).map_err(e)?.value;
        let multi = c_eff_multi(&m_star, &m_hat, &pi_e, &pi_b, cap).map_err(e)?.value;
        ensure(single <= bound, || format!("instance {i}: single {single} > {bound}"))?;
        ensure(multi <= bound, || format!("instance {i}: multi {multi} > {bound}"))?;
        worst_gap = worst_gap.max(single.max(multi) - (bound - 1e-6));
        checked += 1;
    }
    ensure(checked == 10, || format!("only {checked} instances with finite C_H"))?;

    let mut worst_mdp = f64::NEG_INFINITY;
    for i in 0..10u64 {
        let mut r = rng(7200 + i);
        let h = r.random_range(2..=4);
        let s = r.random_range(2..=3);
        let m_star = random_mdp(h, s, 2, &mut r).map_err(e)?;
        let m_hat = random_mdp(h, s, 2, &mut r).map_err(e)?;
        let pi_b = random_memoryless_policy(&m_star, 0.1, &mut r);
        let pi_e = random_history_policy(&m_star, &mut r).map_err(e)?;
        let value = c_eff_single(&m_star, &m_hat, &pi_e, &pi_b, cap).map_err(e)?.value;
        let bound = occupancy_ratio_bound(&m_star, &pi_e, &pi_b, cap).map_err(e)?;
        ensure(value <= bound + 1e-8, || format!("MDP {i}: {value} > occupancy bound {bound}"))?;
        worst_mdp = worst_mdp.max(value - bound);
    }

    let mut tilde_checked = 0;
    for i in 0..10u64 {
        let mut r = rng(7300 + i);
        let m_star = revealing_instance(7400 + i);
        let m_hat = revealing_like(&m_star, &mut r)?;
        let pi_b = random_memoryless_policy(&m_star, 0.05, &mut r);
        let pi_e = random_memoryless_policy(&m_star, 0.0, &mut r);
        let report = c_eff_multi(&m_star, &m_hat, &pi_e, &pi_b, cap).map_err(e)?;
        let tilde = report.tilde.ok_or("memoryless target without the tighter variant")?;
        ensure(tilde <= report.value + 1e-8, || format!("instance {i}: tilde {tilde} > {}", report.value))?;
        tilde_checked += 1;
    }
    Ok(format!(
        "{checked} instances within C_A*C_H (max excess {worst_gap:.2e}, {skipped} skipped for singular history matrices), 10 MDPs within occupancy bound (max excess {worst_mdp:.2e}), {tilde_checked} tighter-variant checks"
    ))
}

/// Random revealing model sharing `m`'s observables.
fn revealing_like(m: &TabularPomdp, r: &mut rand_chacha::ChaCha8Rng) -> Result<TabularPomdp, String> {
    let h = m.horizon();
    let spec = RandomSpec {
        horizon: h,
        state_counts: m.state_counts().to_vec(),
        action_count: m.action_count(),
        obs_counts: m.obs_counts().to_vec(),
        revealing: RevealingRequirement::Single,
        min_singular: 0.05,
    };
    random_pomdp(&spec, r).map_err(e)
}

fn criterion_8() -> Outcome {
    let cap = default_cap();
    let mut steps = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    let mut worst_on_policy: f64 = 0.0;
    for i in 0..10u64 {
        let mut r = rng(8000 + i);
        let m = revealing_instance(8100 + i);
        let pi_b = random_memoryless_policy(&m, 0.05, &mut r);
        let pi_e = random_memoryless_policy(&m, 0.0, &mut r);
        for h in 0..m.horizon() {
            let c_f = inverse_l1(&sigma_future(&m, &pi_b, h, cap).map_err(e)?.matrix);
            let c_o = inverse_l1(&sigma_obs(&m, h).matrix);
            ensure(c_f.is_finite() && c_o.is_finite(), || format!("instance {i} h={h}: infinite coefficient"))?;
            let rhs = m.state_count(h) as f64 * c_o;
            ensure(c_f <= rhs * (1.0 + 1e-12), || format!("instance {i} h={h}: {c_f} > |S| c_o = {rhs}"))?;
            worst_ratio = worst_ratio.max(c_f / rhs);

            let v = fdvf_construct(&m, &pi_b, &pi_e, h, cap).map_err(e)?;
            let u = outcome_matrix(&m, &pi_b, h, cap).map_err(e)?;
            let residual = (u.tr_mul(&v.values) - &v.latent_values).amax();
            ensure(residual <= 1e-8, || format!("instance {i} h={h}: residual {residual:.3e}"))?;
            worst_residual = worst_residual.max(residual);

            let on = fdvf_construct(&m, &pi_b, &pi_b, h, cap).map_err(e)?;
            let returns = future_returns(&m, h, u.nrows());
            let zp = &u * pomdp_ope::pomdp::state_marginal(&m, &pi_b, h, cap).map_err(e)?;
            for f in 0..u.nrows() {
                if zp[f] > 0.0 {
                    let d = (on.values[f] - returns[f]).abs();
                    worst_on_policy = worst_on_policy.max(d);
                    ensure(d <= 1e-8, || format!("instance {i} h={h} future {f}: off by {d:.3e}"))?;
                }
            }
            steps += 1;
        }
    }
    Ok(format!(
        "{steps} steps; max c_F/(|S| c_O) = {worst_ratio:.3}, max residual {worst_residual:.1e}, on-policy max deviation {worst_on_policy:.1e}"
    ))
}

fn criterion_9() -> Outcome {
    let config = ExperimentConfig::new(ExperimentKind::IsContrast, vec![8], vec![10_000], (0..50).collect());
    let result = run_experiment(&config).map_err(e)?;
    ensure(result.error_rows == 0, || format!("{} error rows", result.error_rows))?;
    let pick = |method: &str| -> Vec<f64> {
        result
            .rows
            .iter()
            .filter(|r| r.method == method && r.policy == "pi_1")
            .filter_map(|r| r.estimate)
            .collect()
    };
    let is = pick("importance-sampling");
    let mb = pick("model-based-mle");
    ensure(is.len() == 50 && mb.len() == 50, || "missing rows".into())?;
    let (sd_is, sd_mb) = (std_dev(&is), std_dev(&mb));
    ensure(mb.iter().all(|&x| x == 1.0), || "model-based estimate is not exact".into())?;
    ensure(sd_is >= 10.0 * sd_mb && sd_is > 0.0, || format!("IS sd {sd_is}, model-based sd {sd_mb}"))?;
    let mean = is.iter().sum::<f64>() / 50.0;
    Ok(format!("IS mean {mean:.4}, sd {sd_is:.4}; model-based sd {sd_mb}"))
}

fn main() {
    let fixtures = revealing_fixtures();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("hardness-instance golden values", Box::new(criterion_1)),
        ("model-free indistinguishability", Box::new(criterion_2)),
        ("history-recording knife edge", Box::new(criterion_3)),
        ("operator model exactness", Box::new(|| criterion_4(&fixtures))),
        ("operator contraction", Box::new(|| criterion_5(&fixtures))),
        ("maximum-likelihood rate", Box::new(criterion_6)),
        ("effective coverage bounds", Box::new(criterion_7)),
        ("future-dependent value functions", Box::new(criterion_8)),
        ("importance-sampling contrast", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
