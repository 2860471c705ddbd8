//! Evaluates every (budget, h) pair of a sweep on a worker pool.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tempres_core::linalg;
use tempres_core::oracle;
use tempres_core::planner::{evaluate_point, Evaluator};
use tempres_core::sim::{empirical_mse, replicate_squared_error, Simulator};
use tempres_core::system::{build_plan, HorizonMode, System};

use crate::config::{EvaluatorName, SweepConfig};
use crate::error::{CliError, Result};

/// One output row. Absent values are `None` and render as empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct SweepRecord {
    pub mode: String,
    pub n: usize,
    pub a_or_eigs: String,
    pub sigma: f64,
    pub gamma: f64,
    pub T: f64,
    pub h: f64,
    pub N: Option<u64>,
    pub B: u64,
    pub M: Option<u64>,
    pub seed: u64,
    pub replicates: u64,
    pub V_target: Option<f64>,
    pub mse_closed: Option<f64>,
    pub mse_oracle: Option<f64>,
    pub mse_emp_mean: Option<f64>,
    pub mse_emp_se: Option<f64>,
    pub bias_sq: Option<f64>,
    pub variance_over_M: Option<f64>,
    pub truncation_sq: Option<f64>,
    pub cross_term: Option<f64>,
    pub error: Option<String>,
}

/// Scalar drift, or the eigenvalues of `A` sorted by real part and joined
/// with `;`.
pub fn describe_drift(sys: &System) -> String {
    match sys {
        System::Scalar(s) => format!("{:.16e}", s.a()),
        System::Vector(v) => {
            let mut eigs = linalg::eigenvalues(v.a());
            eigs.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
            let parts: Vec<String> = eigs
                .iter()
                .map(|z| {
                    if z.im.abs() <= 1e-12 * z.re.hypot(z.im).max(1.0) {
                        format!("{:.16e}", z.re)
                    } else {
                        format!("{:.16e}{:+.16e}i", z.re, z.im)
                    }
                })
                .collect();
            parts.join(";")
        }
    }
}

struct Task {
    budget: u64,
    horizon: f64,
    h: f64,
}

fn finite(x: f64, what: &str) -> std::result::Result<f64, String> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("non-finite {what}"))
    }
}

pub struct Sweep {
    config: SweepConfig,
    system: System,
    gamma: f64,
    mode: HorizonMode,
}

impl Sweep {
    pub fn new(config: SweepConfig) -> Result<Self> {
        config.validate()?;
        let mode = config.horizon_mode();
        let system = config.system.build(mode)?;
        let gamma = config.resolved_gamma()?;
        Ok(Self { config, system, gamma, mode })
    }

    pub fn config(&self) -> &SweepConfig {
        &self.config
    }

    pub fn system(&self) -> &System {
        &self.system
    }

    fn tasks(&self) -> Result<Vec<Task>> {
        let mut tasks = Vec::new();
        for &budget in &self.config.budgets {
            let horizon = self.config.horizon_for(budget)?;
            for h in self.config.steps_for(horizon) {
                tasks.push(Task { budget, horizon, h });
            }
        }
        Ok(tasks)
    }

    fn target(&self, horizon: f64) -> std::result::Result<f64, String> {
        let t = oracle::targets(&self.system, horizon, self.gamma, self.mode).map_err(|e| e.to_string())?;
        let v = match self.mode {
            HorizonMode::InfiniteDiscounted => t.finite + t.tail,
            _ => t.finite,
        };
        finite(v, "target value")
    }

    fn blank(&self, task: &Task) -> SweepRecord {
        SweepRecord {
            mode: self.mode.as_str().to_string(),
            n: self.system.dim(),
            a_or_eigs: describe_drift(&self.system),
            sigma: self.system.sigma(),
            gamma: self.gamma,
            T: task.horizon,
            h: task.h,
            N: None,
            B: task.budget,
            M: None,
            seed: self.config.seed,
            replicates: self.config.replicates,
            V_target: None,
            mse_closed: None,
            mse_oracle: None,
            mse_emp_mean: None,
            mse_emp_se: None,
            bias_sq: None,
            variance_over_M: None,
            truncation_sq: None,
            cross_term: None,
            error: None,
        }
    }

    fn fill(&self, task: &Task, target: &std::result::Result<f64, String>, rec: &mut SweepRecord) -> std::result::Result<(), String> {
        let plan = build_plan(task.h, task.budget, task.horizon, self.gamma, self.mode).map_err(|e| e.to_string())?;
        rec.N = Some(plan.samples());
        rec.M = Some(plan.episodes());
        let target = target.clone()?;
        rec.V_target = Some(target);
        let scalar = matches!(self.system, System::Scalar(_));
        if self.config.wants(EvaluatorName::Closed) && scalar {
            let v = evaluate_point(&self.system, &plan, Evaluator::ClosedForm).map_err(|e| e.to_string())?;
            rec.mse_closed = Some(finite(v, "closed-form MSE")?);
        }
        if self.config.wants(EvaluatorName::Oracle) {
            let b = oracle::mse_exact(&self.system, &plan).map_err(|e| e.to_string())?;
            rec.mse_oracle = Some(finite(b.total, "oracle MSE")?);
            rec.bias_sq = Some(b.bias_sq);
            rec.variance_over_M = Some(b.variance_over_m);
            rec.truncation_sq = Some(b.truncation_sq);
            rec.cross_term = Some(b.cross_term);
        }
        if self.config.wants(EvaluatorName::Empirical) {
            if self.config.replicates == 1 {
                let sim = Simulator::new(&self.system, &plan).map_err(|e| e.to_string())?;
                let v = replicate_squared_error(&sim, target, self.config.seed, 0);
                rec.mse_emp_mean = Some(finite(v, "empirical MSE")?);
            } else {
                let e = empirical_mse(&self.system, &plan, target, self.config.replicates, self.config.seed).map_err(|e| e.to_string())?;
                rec.mse_emp_mean = Some(finite(e.mean, "empirical MSE")?);
                rec.mse_emp_se = Some(finite(e.std_error, "empirical standard error")?);
            }
        }
        Ok(())
    }

    /// Records in budget-major, h-minor order; a failing record carries its
    /// message in `error` and the sweep continues.
    pub fn run(&self, workers: usize) -> Result<Vec<SweepRecord>> {
        let tasks = self.tasks()?;
        let mut targets: HashMap<u64, std::result::Result<f64, String>> = HashMap::new();
        for t in &tasks {
            targets.entry(t.horizon.to_bits()).or_insert_with(|| self.target(t.horizon));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| CliError::config(format!("cannot start worker pool: {e}")))?;
        let records = pool.install(|| {
            tasks
                .par_iter()
                .map(|task| {
                    let mut rec = self.blank(task);
                    if let Err(msg) = self.fill(task, &targets[&task.horizon.to_bits()], &mut rec) {
                        rec.error = Some(msg);
                    }
                    rec
                })
                .collect()
        });
        Ok(records)
    }
}

pub fn run_sweep(config: SweepConfig, workers: usize) -> Result<Vec<SweepRecord>> {
    Sweep::new(config)?.run(workers)
}

/// `TEMPRES_WORKERS` if set, otherwise the number of available cores.
pub fn default_workers() -> usize {
    std::env::var("TEMPRES_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> SweepConfig {
        SweepConfig::from_json(&format!(
            r#"{{"system": {{"scalar": {{"a": -1, "sigma": 1}}}}, "T": 8, "budgets": [1024, 4096],
                "h": {{"grid": {{"m": [4, 8, 16]}}}}{extra}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn closed_and_oracle_columns_agree() {
        let recs = run_sweep(config(""), 2).unwrap();
        assert_eq!(recs.len(), 6);
        assert_eq!(recs.iter().map(|r| r.B).collect::<Vec<_>>(), vec![1024, 1024, 1024, 4096, 4096, 4096]);
        for r in &recs {
            let (c, o) = (r.mse_closed.unwrap(), r.mse_oracle.unwrap());
            assert!((c - o).abs() <= 1e-9 * c.max(o));
            assert!(r.mse_emp_mean.is_none() && r.error.is_none());
        }
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let c = config(r#", "evaluators": ["oracle", "empirical"], "replicates": 4, "seed": 9"#);
        assert_eq!(run_sweep(c.clone(), 1).unwrap(), run_sweep(c, 4).unwrap());
    }

    #[test]
    fn failing_records_are_isolated() {
        let c = SweepConfig::from_json(
            r#"{"system": {"scalar": {"a": -1, "sigma": 1}}, "T": 1, "budgets": [16],
                "h": {"explicit": [0.5, 0.3, 0.25, 0.01]}}"#,
        )
        .unwrap();
        let recs = run_sweep(c, 2).unwrap();
        assert_eq!(recs.len(), 4);
        assert!(recs[0].error.is_none() && recs[2].error.is_none());
        assert!(recs[1].error.is_some() && recs[1].mse_oracle.is_none());
        assert!(recs[3].error.is_some());
    }

    #[test]
    fn fig1_sweep_is_u_shaped_per_budget() {
        let c = SweepConfig::from_json(
            r#"{"system": {"scalar": {"a": -1, "sigma": 1}}, "T": 8, "budgets": [4096, 8192, 16384, 32768, 65536],
                "h": {"grid": {"m": [4, 8, 16, 32, 64, 128]}}, "evaluators": ["oracle", "empirical"], "replicates": 50, "seed": 1}"#,
        )
        .unwrap();
        let recs = run_sweep(c, 4).unwrap();
        for chunk in recs.chunks(6) {
            let oracle: Vec<f64> = chunk.iter().map(|r| r.mse_oracle.unwrap()).collect();
            assert!(tempres_core::planner::is_unimodal(&oracle, 0.0));
            for r in chunk {
                let z = (r.mse_emp_mean.unwrap() - r.mse_oracle.unwrap()).abs() / r.mse_emp_se.unwrap();
                assert!(z <= 4.0, "B={} h={} z={z}", r.B, r.h);
            }
        }
    }

    #[test]
    fn vector_records_list_eigenvalues() {
        let c =
            SweepConfig::from_json(r#"{"system": {"random": {"n": 3, "seed": 1}}, "T": 2, "budgets": [256], "h": {"grid": {"m": [4]}}}"#)
                .unwrap();
        let recs = run_sweep(c, 1).unwrap();
        assert_eq!(recs[0].a_or_eigs.split(';').count(), 3);
        assert!(recs[0].mse_closed.is_none() && recs[0].mse_oracle.is_some());
    }
}
