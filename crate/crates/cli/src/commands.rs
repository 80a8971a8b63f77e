//! Command execution from a resolved [`RunConfig`].

use std::fs;
use std::path::Path;

use driftrobust::baseline::{learn_joint_dro, BaselineConfig};
use driftrobust::bench::{empirical_robust_value, kl_sphere_perturb, simulate, v_min_metric, RingsPolicy};
use driftrobust::dual::RadiusDelta;
use driftrobust::estimator::{estimate_frozen_grid, estimate_policy_value};
use driftrobust::learner::learn;
use driftrobust::nuisance::PropensityConfig;
use driftrobust::policy::ConstantPolicy;
use driftrobust::rng::{self, stream};
use driftrobust::{Dataset, EstimatorConfig, LearnerConfig, Policy, PolicyTree, PotentialOutcomeTable, Result};
use log::info;
use serde::Serialize;

use crate::config::{config_path_for, CommandConfig, EstimateConfig, EvaluateConfig, LearnConfig, RunConfig, SimulateConfig};

/// Run the command and write its outputs plus the config beside them.
pub fn execute(cfg: &RunConfig) -> Result<()> {
    match &cfg.command {
        CommandConfig::Simulate(c) => {
            simulate_cmd(c)?;
            write_json(&config_path_for(&c.out), cfg)
        }
        CommandConfig::Estimate(c) => {
            estimate_cmd(c)?;
            write_json(&config_path_for(&c.out), cfg)
        }
        CommandConfig::Learn(c) => {
            learn_cmd(c)?;
            write_json(&c.out_dir.join("run_config.json"), cfg)
        }
        CommandConfig::Evaluate(c) => {
            evaluate_cmd(c)?;
            write_json(&config_path_for(&c.out), cfg)
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// `rings`, `constant:<a>` (1-based), inline JSON, or a path to a tree JSON file.
pub fn load_policy(spec: &str) -> Result<Box<dyn Policy>> {
    if spec == "rings" {
        return Ok(Box::new(RingsPolicy));
    }
    if let Some(a) = spec.strip_prefix("constant:") {
        let a: usize = a
            .parse()
            .ok()
            .filter(|&a| a >= 1)
            .ok_or_else(|| driftrobust::Error::invalid(format!("constant policy needs a 1-based action, got {a:?}")))?;
        return Ok(Box::new(ConstantPolicy(a - 1)));
    }
    let text = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        fs::read_to_string(spec)?
    };
    Ok(Box::new(PolicyTree::from_json(&text)?))
}

fn check_tree(spec: &str, dim: usize, num_actions: usize) -> Result<()> {
    if spec == "rings" || spec.starts_with("constant:") {
        return Ok(());
    }
    let text = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        fs::read_to_string(spec)?
    };
    PolicyTree::from_json(&text)?.validate(dim, num_actions)
}

fn simulate_cmd(c: &SimulateConfig) -> Result<()> {
    let s = simulate(c.n, c.seed)?;
    if c.potential_outcomes {
        s.table.save(&c.out, c.metadata)?;
    } else {
        s.dataset().save(&c.out)?;
    }
    info!("wrote {} rows to {}", c.n, c.out.display());
    Ok(())
}

fn radius(d: f64) -> Result<RadiusDelta<f64>> {
    RadiusDelta::new(d)
}

fn estimate_cmd(c: &EstimateConfig) -> Result<()> {
    let data = Dataset::load(&c.data, c.num_actions)?;
    check_tree(&c.policy, data.dim(), data.num_actions())?;
    let policy = load_policy(&c.policy)?;
    let est = c.nuisance.estimator_config(data.num_actions());
    match c.delta.as_slice() {
        [] => Err(driftrobust::Error::invalid("at least one delta is required")),
        [d] => {
            let report = estimate_policy_value(&data, policy.as_ref(), radius(*d)?, &est)?;
            info!("estimate {:.6} (se {:.6})", report.estimate, report.std_error);
            write_json(&c.out, &report)
        }
        ds => {
            let grid = ds.iter().map(|&d| radius(d)).collect::<Result<Vec<_>>>()?;
            let reports = estimate_frozen_grid(&data, policy.as_ref(), grid[0], &grid, &est)?;
            write_json(&c.out, &reports)
        }
    }
}

#[derive(Serialize)]
struct ValueRow {
    estimate: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct Comparison {
    delta: f64,
    learner: ValueRow,
    baseline: ValueRow,
}

fn learn_cmd(c: &LearnConfig) -> Result<()> {
    let data = Dataset::load(&c.data, c.num_actions)?;
    let d = radius(c.delta)?;
    let est = c.nuisance.estimator_config(data.num_actions());
    let cfg = LearnerConfig {
        estimator: est.clone(),
        depth: c.depth,
        eval_fraction: c.eval_fraction,
    };
    let (tree, report) = learn(&data, d, &cfg)?;
    fs::create_dir_all(&c.out_dir)?;
    fs::write(c.out_dir.join("policy.json"), tree.to_json() + "\n")?;
    write_json(&c.out_dir.join("report.json"), &report)?;
    if c.baseline {
        let bcfg = BaselineConfig {
            propensity: PropensityConfig {
                clip_floor: c.nuisance.clip_floor,
                ..PropensityConfig::default()
            },
            seed: c.nuisance.seed,
            ..BaselineConfig::default()
        };
        let base = learn_joint_dro(&data, d, c.depth, &bcfg)?;
        fs::write(c.out_dir.join("baseline_policy.json"), base.to_json() + "\n")?;
        let value = |p: &PolicyTree, est: &EstimatorConfig| -> Result<ValueRow> {
            let r = estimate_policy_value(&data, p, d, est)?;
            Ok(ValueRow {
                estimate: r.estimate,
                std_error: r.std_error,
            })
        };
        let cmp = Comparison {
            delta: c.delta,
            learner: value(&tree, &est)?,
            baseline: value(&base, &est)?,
        };
        info!("learner {:.6} vs baseline {:.6}", cmp.learner.estimate, cmp.baseline.estimate);
        write_json(&c.out_dir.join("comparison.json"), &cmp)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvaluateReport {
    delta: f64,
    n: usize,
    mean_reward: f64,
    v_bar: f64,
    kl_sphere_sets: Option<usize>,
    v_min: Option<f64>,
}

fn evaluate_cmd(c: &EvaluateConfig) -> Result<()> {
    let test = PotentialOutcomeTable::load(&c.test)?;
    check_tree(&c.policy, test.dim, test.num_actions)?;
    let policy = load_policy(&c.policy)?;
    let d = radius(c.delta)?;
    let est = EstimatorConfig {
        basis: c.basis,
        ..EstimatorConfig::default()
    };
    let v_bar = empirical_robust_value(&test, policy.as_ref(), d, &est)?;
    let v_min = match c.kl_sphere {
        None => None,
        Some(j) => {
            let sets = (0..j)
                .map(|k| kl_sphere_perturb(&test, d, rng::derive(c.seed, &[stream::PERTURB, k as u64])))
                .collect::<Result<Vec<_>>>()?;
            Some(v_min_metric(policy.as_ref(), &sets)?)
        }
    };
    write_json(
        &c.out,
        &EvaluateReport {
            delta: c.delta,
            n: test.len(),
            mean_reward: test.mean_reward(policy.as_ref()),
            v_bar,
            kl_sphere_sets: c.kl_sphere,
            v_min,
        },
    )
}
