//! Brute-force reference computations used to audit the solvers.
//!
//! Nothing here calls the dense solve, the local tax optimizer or the
//! analytic derivative code; each check re-derives what it needs from the
//! scenario parameters directly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scenario::{AbatementProfile, Scenario, TaxSchedule};
use crate::treaty::BenefitCoefficients;

pub const ITERATION_TOLERANCE: f64 = 1e-12;
pub const MAX_ITERATIONS: usize = 100_000;
pub const GRID_BUDGET: u128 = 100_000_000;
pub const DEVIATION_GAIN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub input: String,
    pub expected: f64,
    pub got: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub target: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub counterexamples: Vec<Counterexample>,
    pub passed: bool,
    pub note: String,
}

impl OracleReport {
    pub fn new(target: impl Into<String>, tolerance: f64) -> Self {
        OracleReport {
            target: target.into(),
            max_residual: 0.0,
            tolerance,
            counterexamples: Vec::new(),
            passed: true,
            note: String::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    /// Records a residual; values above tolerance become counterexamples.
    pub fn record(&mut self, input: impl Into<String>, expected: f64, got: f64) {
        let residual = (expected - got).abs();
        let residual = if residual.is_nan() { f64::INFINITY } else { residual };
        self.max_residual = self.max_residual.max(residual);
        if !(residual < self.tolerance) {
            self.counterexamples.push(Counterexample {
                input: input.into(),
                expected,
                got,
            });
        }
        self.refresh();
    }

    /// Records a boolean property; a failure becomes a counterexample with `expected = 1, got = 0`.
    pub fn check(&mut self, input: impl Into<String>, ok: bool) {
        if !ok {
            self.counterexamples.push(Counterexample {
                input: input.into(),
                expected: 1.0,
                got: 0.0,
            });
        }
        self.refresh();
    }

    pub fn merge(&mut self, other: OracleReport) {
        self.max_residual = self.max_residual.max(other.max_residual);
        self.counterexamples.extend(other.counterexamples);
        self.refresh();
    }

    fn refresh(&mut self) {
        self.passed = self.counterexamples.is_empty() && self.max_residual < self.tolerance
            || self.counterexamples.is_empty() && self.max_residual == 0.0;
    }
}

/// Damping for the synchronous iteration. The interaction matrix has real
/// eigenvalues in `[-(n-1) b, b]` with `b = max kd r_i`, and this choice
/// centres the damped spectrum on zero.
fn damping(n: usize, b_max: f64) -> f64 {
    2.0 / (2.0 - b_max + (n as f64 - 1.0) * b_max)
}

/// Fleets by damped best-response iteration from zero, clamping negative responses.
///
/// Stops once the update is below `1e-12` and the geometric tail bound
/// implied by the observed contraction is below that as well.
pub fn iterate_open_access(s: &Scenario, t: &TaxSchedule, abatement: f64) -> Result<Vec<f64>> {
    s.ensure_valid()?;
    t.check_dims(s)?;
    let n = s.n_sectors;
    let kd = s.collision_coeff * s.debris_per_sat;
    let mut intercept = vec![0.0; n];
    let mut slope = vec![0.0; n];
    for i in 0..n {
        let mut price = 0.0;
        for j in 0..s.n_markets {
            price += s.prices[j] * (1.0 - t.rate(i, j));
        }
        let ratio = price / (kd * price + s.costs[i]);
        intercept[i] = ratio * (1.0 + s.collision_coeff * (abatement - s.legacy_debris));
        slope[i] = -kd * ratio;
    }
    if let Some(i) = slope.iter().position(|b| !(*b > -1.0 && *b <= 0.0)) {
        return Err(CoreError::Domain(format!(
            "best-response slope B[{i}] = {} outside (-1, 0]",
            slope[i]
        )));
    }
    let b_max = slope.iter().map(|b| -b).fold(0.0, f64::max);
    let lambda = damping(n, b_max);

    let mut fleets = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut trace = Vec::new();
    let mut prev_change = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let total: f64 = fleets.iter().sum();
        let mut change: f64 = 0.0;
        for i in 0..n {
            let response = (intercept[i] + slope[i] * (total - fleets[i])).max(0.0);
            next[i] = (1.0 - lambda) * fleets[i] + lambda * response;
            change = change.max((next[i] - fleets[i]).abs());
        }
        std::mem::swap(&mut fleets, &mut next);
        if trace.len() < 64 {
            trace.push(change);
        }
        let ratio = if prev_change > 0.0 { change / prev_change } else { 0.0 };
        let tail = if ratio < 1.0 { change * ratio / (1.0 - ratio) } else { f64::INFINITY };
        if change == 0.0 || change < ITERATION_TOLERANCE && tail < ITERATION_TOLERANCE {
            return Ok(fleets);
        }
        prev_change = change;
    }
    let last_change = trace.last().copied().unwrap_or(f64::NAN);
    Err(CoreError::IterationDiverged {
        iterations: MAX_ITERATIONS,
        last_change,
        trace,
    })
}

fn axis(step: f64) -> Vec<f64> {
    let count = (1.0 / step + 1e-9).floor() as usize;
    let mut pts: Vec<f64> = (0..=count).map(|k| (k as f64 * step).min(1.0)).collect();
    if *pts.last().unwrap() < 1.0 {
        pts.push(1.0);
    }
    pts
}

/// Exhaustive maximization over the grid `{0, step, 2 step, ..., 1}^dims`
/// (the upper corner is always included). Ties resolve to the
/// lexicographically smallest point.
pub fn grid_maximize<F>(f: &F, dims: usize, step: f64) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if !(step > 0.0) {
        return Err(CoreError::Domain(format!("grid step must be > 0, got {step}")));
    }
    if dims == 0 || dims > 3 {
        return Err(CoreError::Domain(format!(
            "grid search supports 1 to 3 dimensions, got {dims}"
        )));
    }
    let ticks = axis(step);
    let points = (ticks.len() as u128).pow(dims as u32);
    if points > GRID_BUDGET {
        return Err(CoreError::BudgetExceeded { points });
    }
    let per_head = ticks.len().pow(dims as u32 - 1);
    let best = ticks
        .par_iter()
        .map(|&head| {
            let mut x = vec![head; dims];
            let mut best: Option<(Vec<f64>, f64)> = None;
            for flat in 0..per_head {
                let mut rem = flat;
                for slot in x[1..].iter_mut().rev() {
                    *slot = ticks[rem % ticks.len()];
                    rem /= ticks.len();
                }
                let v = f(&x);
                let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
                if best.as_ref().is_none_or(|b| v > b.1) {
                    best = Some((x.clone(), v));
                }
            }
            best.expect("non-empty grid")
        })
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|a, b| if b.1 > a.1 { b } else { a })
        .expect("non-empty grid");
    Ok(best)
}

/// Central difference `(f(x + h e_i) - f(x - h e_i)) / 2h` with `h = 1e-6 max(1, |x_i|)`.
pub fn finite_difference<F>(f: F, x: &[f64], index: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if index >= x.len() {
        return Err(CoreError::IndexOutOfRange {
            what: "coordinate",
            index,
            len: x.len(),
        });
    }
    let h = 1e-6 * x[index].abs().max(1.0);
    let mut y = x.to_vec();
    y[index] = x[index] + h;
    let up = f(&y)?;
    y[index] = x[index] - h;
    let down = f(&y)?;
    Ok((up - down) / (2.0 * h))
}

/// Fourth-order central difference with step `1e-3 * max(1, |x|)`.
///
/// Truncation error is `O(h^4)`, so the larger step keeps the roundoff floor
/// well below that of the two-point rule.
pub fn finite_difference_five_point<F>(f: F, x: &[f64], index: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if index >= x.len() {
        return Err(CoreError::IndexOutOfRange {
            what: "coordinate",
            index,
            len: x.len(),
        });
    }
    let h = 1e-3 * x[index].abs().max(1.0);
    let mut y = x.to_vec();
    let mut at = |offset: f64| {
        y[index] = x[index] + offset * h;
        f(&y)
    };
    let (m2, m1, p1, p2) = (at(-2.0)?, at(-1.0)?, at(1.0)?, at(2.0)?);
    Ok((m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h))
}

fn payoff(s: &Scenario, alpha: f64, beta: f64, own: f64, total: f64, qbar: f64) -> f64 {
    let benefit = |q: f64| alpha - beta * q;
    let cost = 0.5 * s.abatement_cost * own * own;
    if total >= qbar - 1e-12 * qbar.max(1.0) {
        benefit(qbar) - cost
    } else {
        benefit(total) - s.catastrophe_damages - cost
    }
}

/// Scans every party's unilateral deviations over `[0, qbar + 1]` at `step`
/// (plus the exact pivotal level) and reports any that gain more than `1e-9`.
/// A pass certifies the profile on this grid only.
pub fn deviation_search_abatement(
    s: &Scenario,
    coeffs: &[BenefitCoefficients],
    profile: &AbatementProfile,
    qbar: f64,
    step: f64,
) -> Result<OracleReport> {
    if !(step > 0.0) {
        return Err(CoreError::Domain(format!("grid step must be > 0, got {step}")));
    }
    if coeffs.len() != profile.contributions.len() {
        return Err(CoreError::DimensionMismatch {
            what: "benefit coefficients",
            expected: profile.contributions.len(),
            got: coeffs.len(),
        });
    }
    let upper = qbar + 1.0;
    let count = (upper / step).floor() as usize;
    let mut report = OracleReport::new("deviation_search_abatement", DEVIATION_GAIN_TOLERANCE)
        .with_note(format!("grid certification at step {step} on [0, {upper}]"));
    for (party, c) in coeffs.iter().enumerate() {
        let others = profile.others(party);
        let own = profile.contributions[party];
        let current = payoff(s, c.alpha, c.beta, own, others + own, qbar);
        let pivot = (qbar - others).max(0.0);
        let candidates = (0..=count)
            .map(|k| k as f64 * step)
            .chain([upper, pivot]);
        let (best_q, best) = candidates
            .map(|q| (q, payoff(s, c.alpha, c.beta, q, others + q, qbar)))
            .fold((own, current), |acc, cand| if cand.1 > acc.1 { cand } else { acc });
        let gain = (best - current).max(0.0);
        report.max_residual = report.max_residual.max(gain);
        if gain > DEVIATION_GAIN_TOLERANCE {
            report.counterexamples.push(Counterexample {
                input: format!("party {party}: {own} -> {best_q}"),
                expected: current,
                got: best,
            });
        }
    }
    report.passed = report.counterexamples.is_empty();
    Ok(report)
}
