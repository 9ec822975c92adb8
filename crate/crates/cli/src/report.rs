//! CSV tables from the counterfactual and fit artifacts.

use jobsignal_core::counterfactual::{CounterfactualResults, Equilibria, Matrix5, WelfareReport};
use jobsignal_core::demand::{wtp_per_sd, StructuralParams};
use jobsignal_core::records::ApplicationRecord;

use crate::artifacts::*;
use crate::PipelineError;

type Rows = Vec<Vec<String>>;

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn write_table(ws: &mut Workspace, name: &str, header: &[&str], rows: Rows) -> Result<(), PipelineError> {
    let name = format!("{REPORT_DIR}/{name}");
    let path = ws.path(&name);
    let mut w = ws.csv(&name)?;
    w.write_record(header).map_err(|e| PipelineError::at(&path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| PipelineError::at(&path, e))?;
    }
    w.flush().map_err(|e| PipelineError::io(&path, e))
}

/// Rows are ability quintiles, columns cost quintiles.
fn matrix_rows(m: &Matrix5) -> Rows {
    m.iter()
        .enumerate()
        .map(|(i, row)| std::iter::once(format!("{}", i + 1)).chain(row.iter().map(|&v| num(v))).collect())
        .collect()
}

const MATRIX_HEADER: [&str; 6] = ["ability_quintile", "cost_q1", "cost_q2", "cost_q3", "cost_q4", "cost_q5"];

fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn equilibrium_rows(label: &str, e: &Equilibria) -> Rows {
    e.solutions
        .iter()
        .map(|s| {
            vec![
                label.to_string(),
                num(s.report.start_markup),
                s.report.converged.to_string(),
                s.report.iterations.to_string(),
                num(s.report.residuals.last().copied().unwrap_or(f64::NAN)),
                num(e.start_gap),
            ]
        })
        .collect()
}

pub fn report(ws: &mut Workspace) -> Result<(), PipelineError> {
    let res: CounterfactualResults = ws.read_json(COUNTERFACTUAL, "counterfactual")?;
    let params = StructuralParams::try_from(&ws.read_params(STRUCTURAL)?)?;
    let recs: Vec<ApplicationRecord> = ws.read_records(TYPES)?;
    let scenarios: [(&str, &WelfareReport); 3] =
        [("SQ", &res.sq_report), ("NS", &res.ns_report), ("FI", &res.fi_report)];

    write_table(ws, "hiring_pct_change_ns.csv", &MATRIX_HEADER, matrix_rows(&res.ns_vs_sq))?;
    write_table(ws, "hiring_pct_change_fi.csv", &MATRIX_HEADER, matrix_rows(&res.fi_vs_sq))?;
    for (label, r) in scenarios {
        let l = label.to_lowercase();
        write_table(ws, &format!("hiring_rate_{l}.csv"), &MATRIX_HEADER, matrix_rows(&r.hire_rate_by_cell))?;
        write_table(ws, &format!("hired_share_{l}.csv"), &MATRIX_HEADER, matrix_rows(&r.hired_share_by_cell))?;
    }

    let rows = scenarios
        .iter()
        .map(|(l, r)| {
            vec![l.to_string(), num(r.worker_surplus), num(r.employer_surplus), num(r.total_surplus), num(r.writing_costs)]
        })
        .collect();
    write_table(ws, "surplus.csv", &["scenario", "worker_surplus", "employer_surplus", "total_surplus", "writing_costs"], rows)?;

    let rows = scenarios
        .iter()
        .map(|(l, r)| {
            vec![
                l.to_string(),
                r.n_jobs.to_string(),
                r.n_applicants.to_string(),
                num(r.hiring_rate),
                num(r.conditional_hiring_rate),
                num(r.mean_winning_bid),
            ]
        })
        .collect();
    write_table(
        ws,
        "summary.csv",
        &["scenario", "n_jobs", "n_applicants", "hiring_rate", "conditional_hiring_rate", "mean_winning_bid"],
        rows,
    )?;

    let mut rows = Vec::new();
    for (l, r) in scenarios {
        for q in 0..5 {
            rows.push(vec![l.to_string(), (q + 1).to_string(), num(r.hire_rate_by_ability[q]), num(r.hire_rate_by_cost[q])]);
        }
    }
    write_table(ws, "hiring_by_quintile.csv", &["scenario", "quintile", "by_ability", "by_cost"], rows)?;

    let d = &res.directionality;
    let rows = vec![
        vec!["top_ability_change_pct".into(), num(d.top_ability_change_pct)],
        vec!["bottom_ability_change_pct".into(), num(d.bottom_ability_change_pct)],
        vec!["winning_bid_change_pct".into(), num(d.winning_bid_change_pct)],
    ];
    write_table(ws, "directionality.csv", &["quantity", "value"], rows)?;

    let mut rows = equilibrium_rows("NS", &res.ns);
    rows.extend(equilibrium_rows("FI", &res.fi));
    write_table(ws, "equilibrium.csv", &["regime", "start_markup", "converged", "iterations", "residual", "start_gap"], rows)?;

    let a_hat: Vec<f64> = recs.iter().filter_map(|r| r.a_hat).collect();
    let mut rows = Vec::new();
    if a_hat.len() > 1 {
        let sd = sample_sd(&a_hat);
        rows.push(vec!["sd_ability".into(), num(sd)]);
        rows.push(vec!["ability_per_sd".into(), num(wtp_per_sd(params.beta, params.alpha_signed, sd)?)]);
    }
    for (g, &t) in &params.t_by_group {
        rows.push(vec![format!("t.{g}"), num(t / params.alpha_signed.abs())]);
    }
    write_table(ws, "wtp.csv", &["quantity", "dollars"], rows)?;

    if ws.path(TRUTH).is_file() {
        let truth = ws.read_params(TRUTH)?;
        let est = jobsignal_core::records::FlatParams::from(&params);
        let rows = est
            .0
            .iter()
            .filter_map(|(k, &e)| truth.0.get(k).map(|&t| vec![k.clone(), num(t), num(e), num(e - t)]))
            .collect();
        write_table(ws, "recovery.csv", &["parameter", "true", "estimate", "error"], rows)?;
    }
    Ok(())
}
