use orbit_core::open_access::AssumptionFlags;
use orbit_core::oracle::OracleReport;
use orbit_core::regulation::{national_welfare, regulatory_equilibrium};
use orbit_core::treaty::{coefficient_divergence, self_enforcing_check_at, CoefficientVariant};
use orbit_core::verification::{run_all, scenario_suite, BatchSizes};
use orbit_core::{
    check_assumptions, effective_prices, required_abatement, solve_equilibrium, AbatementMode,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, OutputFormat, RunConfig, SweepAxis};
use crate::error::{CliError, CliResult};
use crate::load::{load_scenario, with_override, Bundle};

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn assumption_gate(b: &Bundle, strict: bool) -> CliResult<AssumptionFlags> {
    let flags = check_assumptions(&b.scenario, &b.taxes)?;
    if strict && !flags.all_hold() {
        let mut broken = Vec::new();
        if !flags.assumption2 {
            broken.push(format!("kd = {} must be < 1/2", flags.kd));
        }
        for (i, ok) in flags.assumption1.iter().enumerate() {
            if !ok {
                broken.push(format!("sector {} has r = {} >= 1/(kd)", i + 1, flags.r[i]));
            }
        }
        return Err(CliError::Assumption(broken.join("; ")));
    }
    Ok(flags)
}

/// Runs one command and returns the report text.
pub fn execute(cfg: &RunConfig) -> CliResult<String> {
    let bundle = load_scenario(&cfg.scenario_path, &cfg.overrides)?;
    let flags = assumption_gate(&bundle, cfg.strict)?;
    match cfg.command {
        Command::Solve => solve(&bundle, flags, cfg.output_format),
        Command::Regulate => regulate(&bundle, flags),
        Command::Treaty => treaty(&bundle, flags),
        Command::Sweep => {
            let axis = cfg.sweep_axis.as_ref().expect("validated config has a sweep axis");
            sweep(&bundle, axis, cfg.output_format)
        }
        Command::Verify => verify(&bundle, cfg.seed.expect("validated config has a seed"), cfg.full),
    }
}

fn solve(b: &Bundle, flags: AssumptionFlags, format: OutputFormat) -> CliResult<String> {
    let (s, t, q) = (&b.scenario, &b.taxes, b.abatement);
    let eq = solve_equilibrium(s, t, q)?;
    let welfare = national_welfare(s, t, q)?;
    let prices = effective_prices(s, t)?;
    let survival = eq.debris.survival;
    let residuals: Vec<f64> = (0..s.n_sectors)
        .map(|i| survival * prices[i] - s.costs[i] * eq.fleets[i])
        .collect();
    if format == OutputFormat::Csv {
        let mut header = Vec::new();
        let mut row = Vec::new();
        for (name, vals) in [("S", &eq.fleets), ("sigma", &eq.sigma), ("r", &eq.r)] {
            for (i, v) in vals.iter().enumerate() {
                header.push(format!("{name}_{}", i + 1));
                row.push(num(*v));
            }
        }
        header.extend(["D".to_string(), "survival".to_string()]);
        row.extend([num(eq.debris.stock), num(survival)]);
        for (j, w) in welfare.welfare.iter().enumerate() {
            header.push(format!("W_{}", j + 1));
            row.push(num(*w));
        }
        header.push("assumptions".into());
        row.push(flags.all_hold().to_string());
        return write_csv(&header, &[row]);
    }
    Ok(to_json(&json!({
        "command": "solve",
        "scenario": s,
        "taxes": t,
        "Q": q,
        "fleets": eq.fleets,
        "sigma": eq.sigma,
        "r": eq.r,
        "effective_prices": eq.effective_prices,
        "debris": eq.debris,
        "welfare": welfare.welfare,
        "active": eq.active,
        "pinned": eq.pinned,
        "assumptions": flags,
        "profit_residuals": residuals,
        "diagnostics": eq.diagnostics,
    })))
}

fn regulate(b: &Bundle, flags: AssumptionFlags) -> CliResult<String> {
    let reg = regulatory_equilibrium(&b.scenario, b.abatement, &b.taxes)?;
    Ok(to_json(&json!({
        "command": "regulate",
        "scenario": b.scenario,
        "start": b.taxes,
        "Q": b.abatement,
        "assumptions": flags,
        "result": reg,
    })))
}

fn treaty(b: &Bundle, flags: AssumptionFlags) -> CliResult<String> {
    let (s, t) = (&b.scenario, &b.taxes);
    let qbar = required_abatement(s, t, AbatementMode::Responsive)?;
    let qbar_static = required_abatement(s, t, AbatementMode::Static)?;
    let analyses = CoefficientVariant::ALL
        .iter()
        .map(|&v| self_enforcing_check_at(s, t, v, qbar))
        .collect::<Result<Vec<_>, _>>()?;
    let divergence = coefficient_divergence(s, t)?;
    Ok(to_json(&json!({
        "command": "treaty",
        "scenario": s,
        "taxes": t,
        "assumptions": flags,
        "qbar": qbar,
        "qbar_static": qbar_static,
        "analyses": analyses,
        "divergence": divergence,
    })))
}

#[derive(Debug, Default, Serialize)]
struct SweepRow {
    param: f64,
    fleets: Option<Vec<f64>>,
    debris: Option<f64>,
    welfare: Option<Vec<f64>>,
    qbar: Option<f64>,
    alpha_model: Option<Vec<f64>>,
    beta_model: Option<Vec<f64>>,
    alpha_closed: Option<Vec<f64>>,
    beta_closed: Option<Vec<f64>>,
    averting_model: Option<bool>,
    averting_closed: Option<bool>,
    self_enforcing_model: Option<bool>,
    self_enforcing_closed: Option<bool>,
    assumptions: Option<bool>,
    status: String,
}

fn sweep_row(base: &Bundle, axis: &SweepAxis, value: f64) -> SweepRow {
    let mut row = SweepRow {
        param: value,
        ..SweepRow::default()
    };
    let fill = |row: &mut SweepRow| -> CliResult<()> {
        let b = with_override(base, &axis.key, &num(value))?;
        let (s, t, q) = (&b.scenario, &b.taxes, b.abatement);
        row.assumptions = Some(check_assumptions(s, t)?.all_hold());
        let eq = solve_equilibrium(s, t, q)?;
        row.fleets = Some(eq.fleets.clone());
        row.debris = Some(eq.debris.stock);
        row.welfare = Some(national_welfare(s, t, q)?.welfare);
        let qbar = required_abatement(s, t, AbatementMode::Responsive)?;
        row.qbar = Some(qbar);
        for variant in CoefficientVariant::ALL {
            let a = self_enforcing_check_at(s, t, variant, qbar)?;
            let alpha = a.nash.coefficients.iter().map(|c| c.alpha).collect();
            let beta = a.nash.coefficients.iter().map(|c| c.beta).collect();
            let (averting, enforcing) = (Some(a.nash.averting_sustainable), Some(a.self_enforcing));
            match variant {
                CoefficientVariant::ModelDerived => {
                    (row.alpha_model, row.beta_model) = (Some(alpha), Some(beta));
                    (row.averting_model, row.self_enforcing_model) = (averting, enforcing);
                }
                CoefficientVariant::ClosedForm => {
                    (row.alpha_closed, row.beta_closed) = (Some(alpha), Some(beta));
                    (row.averting_closed, row.self_enforcing_closed) = (averting, enforcing);
                }
            }
        }
        Ok(())
    };
    row.status = match fill(&mut row) {
        Ok(()) => "ok".into(),
        Err(e) => e.kind().into(),
    };
    row
}

fn sweep(base: &Bundle, axis: &SweepAxis, format: OutputFormat) -> CliResult<String> {
    // Surface a bad axis key before running the grid.
    with_override(base, &axis.key, &num(axis.from))?;
    let rows: Vec<SweepRow> = axis
        .points()
        .into_par_iter()
        .map(|v| sweep_row(base, axis, v))
        .collect();
    if format == OutputFormat::Json {
        return Ok(to_json(&json!({
            "command": "sweep",
            "axis": axis.key,
            "rows": rows,
        })));
    }
    let (ns, nm, np) = (
        base.scenario.n_sectors,
        base.scenario.n_markets,
        base.scenario.parties(),
    );
    let mut header = vec![axis.key.clone()];
    header.extend((1..=ns).map(|i| format!("S_{i}")));
    header.push("D".into());
    header.extend((1..=nm).map(|j| format!("W_{j}")));
    header.push("qbar".into());
    for name in ["alpha_model", "beta_model", "alpha_closed", "beta_closed"] {
        header.extend((1..=np).map(|k| format!("{name}_{k}")));
    }
    for name in ["averting_model", "averting_closed", "self_enforcing_model", "self_enforcing_closed", "assumptions", "status"] {
        header.push(name.into());
    }
    let cells = |v: &Option<Vec<f64>>, n: usize| -> Vec<String> {
        match v {
            Some(xs) => xs.iter().map(|x| num(*x)).collect(),
            None => vec![String::new(); n],
        }
    };
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let flag = |v: Option<bool>| v.map(|b| b.to_string()).unwrap_or_default();
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut rec = vec![num(r.param)];
            rec.extend(cells(&r.fleets, ns));
            rec.push(opt(r.debris));
            rec.extend(cells(&r.welfare, nm));
            rec.push(opt(r.qbar));
            for v in [&r.alpha_model, &r.beta_model, &r.alpha_closed, &r.beta_closed] {
                rec.extend(cells(v, np));
            }
            for b in [r.averting_model, r.averting_closed, r.self_enforcing_model, r.self_enforcing_closed, r.assumptions] {
                rec.push(flag(b));
            }
            rec.push(r.status.clone());
            rec
        })
        .collect();
    write_csv(&header, &records)
}

fn write_csv(header: &[String], rows: &[Vec<String>]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io {
        path: "<csv>".into(),
        message: e.to_string(),
    };
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io {
        path: "<csv>".into(),
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn summarize(r: &OracleReport) -> Value {
    json!({
        "target": r.target,
        "passed": r.passed,
        "max_residual": r.max_residual,
        "tolerance": r.tolerance,
        "counterexamples": r.counterexamples.len(),
        "examples": r.counterexamples.iter().take(3).collect::<Vec<_>>(),
        "note": r.note,
    })
}

fn verify(b: &Bundle, seed: u64, full: bool) -> CliResult<String> {
    let sizes = if full { BatchSizes::acceptance() } else { BatchSizes::quick() };
    let scenario: Vec<Value> = scenario_suite(&b.scenario, &b.taxes, b.abatement)
        .iter()
        .map(summarize)
        .collect();
    let suites = run_all(seed, &sizes);
    let batch: Vec<Value> = suites
        .iter()
        .map(|s| {
            json!({
                "suite": s.id,
                "title": s.title,
                "passed": s.passed(),
                "scenarios": s.scenarios,
                "parts": s.parts.iter().map(summarize).collect::<Vec<_>>(),
            })
        })
        .collect();
    let all_passed = scenario.iter().chain(&batch).all(|v| v["passed"] == json!(true));
    Ok(to_json(&json!({
        "command": "verify",
        "seed": seed,
        "batch_sizes": sizes,
        "scenario_suite": scenario,
        "batch_suites": batch,
        "all_passed": all_passed,
    })))
}
