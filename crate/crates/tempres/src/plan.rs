//! Side-by-side step-size recommendations for a scalar system.

use std::collections::BTreeMap;
use std::io::Read;

use tempres_core::planner::{
    extrapolate_budget, hstar_grid, hstar_infinite, hstar_leading, hstar_marginal, hstar_poly_root, hstar_refined, infinite_leading_step,
    Evaluator, StepSizeRecommendation,
};
use tempres_core::system::{validate_scalar, HorizonMode, System};

use crate::error::{CliError, Result};
use crate::output::{fmt_float, read_csv};

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub a: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub budget: u64,
    pub gamma: f64,
    pub mode: HorizonMode,
    /// Largest `m` in the grid search; chosen from the leading-order `h*` when absent.
    pub m_max: Option<u64>,
    pub pilot: Option<Vec<(u64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRow {
    pub rec: StepSizeRecommendation,
    pub note: String,
}

const GRID_CAP: u64 = 100_000;

fn auto_m_max(horizon: f64, reference: f64, budget: u64) -> u64 {
    let m = (4.0 * horizon / reference).ceil() as u64;
    m.clamp(16, GRID_CAP).min(budget)
}

pub fn plan_report(req: &PlanRequest) -> Result<Vec<PlanRow>> {
    let s = validate_scalar(req.a, req.sigma, 1.0, req.mode).map_err(|e| CliError::config(format!("invalid system: {e}")))?;
    if req.budget == 0 {
        return Err(CliError::config("B must be positive"));
    }
    let sys = System::from(s);
    let (t, b) = (req.horizon, req.budget as f64);
    let mut rows = Vec::new();
    let reference = match req.mode {
        HorizonMode::FiniteUndiscounted => {
            if req.a == 0.0 {
                rows.push(PlanRow { rec: hstar_marginal(req.sigma, t, b)?, note: String::new() });
            }
            let lead = hstar_leading(req.a, req.sigma, t, b)?;
            rows.push(PlanRow { rec: lead, note: String::new() });
            let refined = hstar_refined(req.a, req.sigma, t, b)?;
            let note = if refined.fallback { "negative discriminant, leading order used".to_string() } else { String::new() };
            rows.push(PlanRow { rec: refined, note });
            match hstar_poly_root(req.a, req.sigma, t, b) {
                Ok(r) => rows.push(PlanRow { rec: r, note: String::new() }),
                Err(tempres_core::Error::NoRootInInterval { .. }) => {}
                Err(e) => return Err(e.into()),
            }
            lead.h_star
        }
        HorizonMode::FiniteDiscounted => hstar_leading(req.a, req.sigma, t, b)?.h_star,
        HorizonMode::InfiniteDiscounted => {
            let r = hstar_infinite(req.a, req.sigma, req.gamma, t, b)?;
            let candidate = infinite_leading_step(req.a, req.gamma, t, b)?;
            let regime = if r.h_star == candidate { "tail-negligible" } else { "constant-tail" };
            let alt = r.alternative.map(fmt_float).unwrap_or_default();
            rows.push(PlanRow { rec: r, note: format!("regime={regime} alternative={alt}") });
            candidate
        }
    };
    let m_max = req.m_max.unwrap_or_else(|| auto_m_max(t, reference, req.budget));
    let grid = hstar_grid(&sys, t, req.budget, req.gamma, req.mode, Evaluator::ClosedForm, m_max)?;
    rows.push(PlanRow { rec: grid, note: format!("closed-form, m <= {m_max}") });
    if let Some(pilot) = &req.pilot {
        let fit = extrapolate_budget(pilot, req.mode)?;
        let budgets: Vec<String> = fit.pilot_budgets.iter().map(u64::to_string).collect();
        rows.push(PlanRow {
            rec: fit.recommend(t, b),
            note: format!("pilot B={} exponent={:.4} residual={:.3e}", budgets.join(";"), fit.exponent, fit.fit_residual),
        });
    }
    Ok(rows)
}

pub fn render_plan(rows: &[PlanRow]) -> String {
    let mut out = format!("{:<18} {:>24} {:>24} {:>10}  {}\n", "method", "h_star", "predicted_mse", "episodes", "note");
    for r in rows {
        let mse = r.rec.predicted_mse.map(fmt_float).unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<18} {:>24} {:>24} {:>10}  {}\n",
            r.rec.method.as_str(),
            fmt_float(r.rec.h_star),
            mse,
            r.rec.episodes,
            r.note
        ));
    }
    out
}

/// Pilot `(B, h*)` pairs, either from a two-column `B,h_star` CSV or from a
/// sweep CSV (argmin per budget of the oracle, closed-form or empirical MSE).
pub fn read_pilot<R: Read>(mut input: R) -> Result<Vec<(u64, f64)>> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let first = text.lines().next().unwrap_or_default();
    let cols: Vec<&str> = first.split(',').map(str::trim).collect();
    if cols == ["B", "h_star"] {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let mut out = Vec::new();
        for row in rd.records() {
            let row = row?;
            let b = row[0].trim().parse().map_err(|_| CliError::config("bad pilot budget"))?;
            let h = row[1].trim().parse().map_err(|_| CliError::config("bad pilot step size"))?;
            out.push((b, h));
        }
        return Ok(out);
    }
    let mut best: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for r in read_csv(text.as_bytes())? {
        let Some(v) = r.mse_oracle.or(r.mse_closed).or(r.mse_emp_mean) else { continue };
        match best.get(&r.B) {
            Some(&(bv, bh)) if v > bv || (v == bv && r.h <= bh) => {}
            _ => {
                best.insert(r.B, (v, r.h));
            }
        }
    }
    Ok(best.into_iter().map(|(b, (_, h))| (b, h)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempres_core::planner::StepMethod;

    fn request(a: f64, mode: HorizonMode, gamma: f64) -> PlanRequest {
        PlanRequest { a, sigma: 1.0, horizon: 8.0, budget: 1 << 14, gamma, mode, m_max: None, pilot: None }
    }

    fn methods(rows: &[PlanRow]) -> Vec<StepMethod> {
        rows.iter().map(|r| r.rec.method).collect()
    }

    #[test]
    fn finite_report_lists_all_methods() {
        use StepMethod::*;
        let rows = plan_report(&request(-1.0, HorizonMode::FiniteUndiscounted, 1.0)).unwrap();
        assert_eq!(methods(&rows), vec![LeadingOrder, CubicRefined, PolyRoot, GridArgmin]);
        let rows = plan_report(&request(0.0, HorizonMode::FiniteUndiscounted, 1.0)).unwrap();
        assert_eq!(methods(&rows)[0], MarginalClosed);
        assert!(render_plan(&rows).lines().count() == rows.len() + 1);
    }

    #[test]
    fn infinite_report_has_regime() {
        let rows = plan_report(&request(-1.0, HorizonMode::InfiniteDiscounted, (-1f64).exp())).unwrap();
        assert_eq!(methods(&rows), vec![StepMethod::InfiniteLeading, StepMethod::GridArgmin]);
        assert!(rows[0].note.starts_with("regime="));
    }

    #[test]
    fn pilot_rows_match_extrapolation() {
        let pilot = read_pilot("B,h_star\n4096,0.3\n8192,0.25\n".as_bytes()).unwrap();
        assert_eq!(pilot, vec![(4096, 0.3), (8192, 0.25)]);
        let mut req = request(-1.0, HorizonMode::FiniteUndiscounted, 1.0);
        req.pilot = Some(pilot.clone());
        let rows = plan_report(&req).unwrap();
        let last = rows.last().unwrap();
        assert_eq!(last.rec.method, StepMethod::Extrapolated);
        let expect = extrapolate_budget(&pilot, HorizonMode::FiniteUndiscounted).unwrap().predict(16384.0);
        assert_eq!(last.rec.h_star, expect);
    }
}
