//! National welfare, its three-channel tax decomposition, tax best responses
//! and the damped search for a global regulatory equilibrium.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::open_access::{fleet_tax_derivatives, solve_equilibrium, solve_raw, OpenAccessEquilibrium};
use crate::oracle::grid_maximize;
use crate::scenario::{Scenario, TaxSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub welfare: Vec<f64>,
    /// `V_j = p_j sum_i (1 - tau_ij) S_i`.
    pub gross_value: Vec<f64>,
    pub survival: f64,
}

fn welfare_from(s: &Scenario, t: &TaxSchedule, eq: &OpenAccessEquilibrium) -> WelfareReport {
    let survival = eq.debris.survival;
    let gross_value: Vec<f64> = (0..s.n_markets)
        .map(|j| {
            s.prices[j]
                * eq
                    .fleets
                    .iter()
                    .enumerate()
                    .map(|(i, si)| (1.0 - t.rate(i, j)) * si)
                    .sum::<f64>()
        })
        .collect();
    WelfareReport {
        welfare: gross_value.iter().map(|v| survival * v).collect(),
        gross_value,
        survival,
    }
}

/// `W_j = (1 - kD) V_j` at the open-access equilibrium. Catastrophe damages are not included.
pub fn national_welfare(s: &Scenario, t: &TaxSchedule, abatement: f64) -> Result<WelfareReport> {
    let eq = solve_equilibrium(s, t, abatement)?;
    Ok(welfare_from(s, t, &eq))
}

/// Welfare of one market, skipping input validation and the survival check.
pub(crate) fn market_welfare_raw(
    s: &Scenario,
    t: &TaxSchedule,
    abatement: f64,
    market: usize,
) -> Result<f64> {
    let eq = solve_raw(s, t, abatement)?;
    let v: f64 = eq
        .fleets
        .iter()
        .enumerate()
        .map(|(i, si)| (1.0 - t.rate(i, market)) * si)
        .sum();
    Ok(eq.debris.survival * s.prices[market] * v)
}

/// `dW_j / d tau_ij = cleanup + expansion - reduction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelDecomposition {
    /// `-k (dD / d tau_ij) V_j`.
    pub cleanup: f64,
    /// `(1 - kD) p_j sum_{l != i} (1 - tau_lj) dS_l / d tau_ij`.
    pub expansion: f64,
    /// `(1 - kD) p_j [S_i - (1 - tau_ij) dS_i / d tau_ij]`.
    pub reduction: f64,
    pub total: f64,
}

pub fn welfare_channels(
    s: &Scenario,
    t: &TaxSchedule,
    abatement: f64,
    sector: usize,
    market: usize,
) -> Result<ChannelDecomposition> {
    s.check_sector(sector)?;
    s.check_market(market)?;
    let eq = solve_equilibrium(s, t, abatement)?;
    if let Some(k) = eq.pinned.iter().position(|&p| p) {
        return Err(CoreError::ActiveSetChange {
            detail: format!("sector {k} is pinned at zero"),
        });
    }
    channels_at(s, t, abatement, &eq, sector, market)
}

fn channels_at(
    s: &Scenario,
    t: &TaxSchedule,
    abatement: f64,
    eq: &OpenAccessEquilibrium,
    sector: usize,
    market: usize,
) -> Result<ChannelDecomposition> {
    let ds = fleet_tax_derivatives(s, t, abatement, sector, market)?;
    let survival = eq.debris.survival;
    let pj = s.prices[market];
    let gross: f64 = eq
        .fleets
        .iter()
        .enumerate()
        .map(|(l, sl)| (1.0 - t.rate(l, market)) * sl)
        .sum::<f64>()
        * pj;
    let dd = s.debris_per_sat * ds.iter().sum::<f64>();
    let cleanup = -s.collision_coeff * dd * gross;
    let expansion = survival
        * pj
        * (0..s.n_sectors)
            .filter(|&l| l != sector)
            .map(|l| (1.0 - t.rate(l, market)) * ds[l])
            .sum::<f64>();
    let reduction =
        survival * pj * (eq.fleets[sector] - (1.0 - t.rate(sector, market)) * ds[sector]);
    Ok(ChannelDecomposition {
        cleanup,
        expansion,
        reduction,
        total: cleanup + expansion - reduction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponseOptions {
    /// Also scan a coarse grid and restart from its best point.
    pub grid_fallback: bool,
    pub max_newton_iterations: usize,
}

impl Default for BestResponseOptions {
    fn default() -> Self {
        BestResponseOptions {
            grid_fallback: true,
            max_newton_iterations: 200,
        }
    }
}

/// Points per coordinate of the fallback grid, by number of sectors.
fn coarse_grid_points(n: usize) -> usize {
    match n {
        1 => 101,
        2 => 21,
        3 => 11,
        4 => 6,
        5 => 5,
        _ => 4,
    }
}

struct ColumnObjective<'a> {
    s: &'a Scenario,
    t: &'a TaxSchedule,
    abatement: f64,
    market: usize,
}

impl ColumnObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let t = self.t.with_column_unchecked(self.market, x);
        market_welfare_raw(self.s, &t, self.abatement, self.market).unwrap_or(f64::NEG_INFINITY)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        (0..x.len())
            .map(|i| {
                let h = 1e-6 * x[i].abs().max(1.0);
                y[i] = x[i] + h;
                let up = self.value(&y);
                y[i] = x[i] - h;
                let down = self.value(&y);
                y[i] = x[i];
                (up - down) / (2.0 * h)
            })
            .collect()
    }
}

fn project(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

/// Projected Newton ascent on the box, with gradient steps when the reduced
/// Hessian is not negative definite.
fn local_ascent(obj: &ColumnObjective, start: &[f64], max_iter: usize) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut x = start.to_vec();
    project(&mut x);
    let mut fx = obj.value(&x);
    let mut grad_step = 1.0;
    for _ in 0..max_iter {
        let g = obj.gradient(&x);
        let free: Vec<usize> = (0..n)
            .filter(|&i| !((x[i] <= 0.0 && g[i] < 0.0) || (x[i] >= 1.0 && g[i] > 0.0)))
            .collect();

        let mut dir = g.clone();
        let mut newton = false;
        if !free.is_empty() {
            let hh = 1e-4;
            let m = free.len();
            let mut hess = DMatrix::zeros(m, m);
            for (col, &i) in free.iter().enumerate() {
                let mut up = x.clone();
                up[i] += hh;
                let mut down = x.clone();
                down[i] -= hh;
                let (gu, gd) = (obj.gradient(&up), obj.gradient(&down));
                for (row, &k) in free.iter().enumerate() {
                    hess[(row, col)] = (gu[k] - gd[k]) / (2.0 * hh);
                }
            }
            let hess = (&hess + hess.transpose()) * 0.5;
            if let Some(chol) = (-&hess).cholesky() {
                let gf = DVector::from_iterator(m, free.iter().map(|&i| g[i]));
                let step = chol.solve(&gf);
                dir = vec![0.0; n];
                for (pos, &i) in free.iter().enumerate() {
                    dir[i] = step[pos];
                }
                newton = true;
            }
        }

        let mut t = if newton { 1.0 } else { grad_step };
        let mut accepted = None;
        while t > 1e-14 {
            let mut y: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            project(&mut y);
            let fy = obj.value(&y);
            let gain: f64 = g.iter().zip(y.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            if fy >= fx + 1e-4 * gain && fy >= fx {
                accepted = Some((y, fy));
                break;
            }
            t *= 0.5;
        }
        let Some((y, fy)) = accepted else { break };
        let moved = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if !newton {
            grad_step = (2.0 * t).min(1e6);
        }
        let improvement = fy - fx;
        x = y;
        fx = fy;
        if moved < 1e-13 || improvement <= 1e-16 * fx.abs().max(1.0) && moved < 1e-10 {
            break;
        }
    }
    (x, fx)
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// Pick the best candidate; near-ties go to the lexicographically lowest column.
fn select_best(candidates: Vec<(Vec<f64>, f64)>) -> (Vec<f64>, f64) {
    let top = candidates
        .iter()
        .map(|c| c.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * top.abs().max(1.0);
    candidates
        .into_iter()
        .filter(|c| c.1 >= top - tol)
        .reduce(|a, b| if lex_less(&b.0, &a.0) { b } else { a })
        .expect("at least one candidate")
}

fn coarse_grid_best(obj: &ColumnObjective, n: usize) -> (Vec<f64>, f64) {
    let pts = coarse_grid_points(n);
    let total = pts.pow(n as u32);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut x = vec![0.0; n];
    for flat in 0..total {
        let mut rem = flat;
        for slot in x.iter_mut().rev() {
            *slot = (rem % pts) as f64 / (pts - 1) as f64;
            rem /= pts;
        }
        let v = obj.value(&x);
        if best.as_ref().is_none_or(|b| v > b.1) {
            best = Some((x.clone(), v));
        }
    }
    best.expect("non-empty grid")
}

/// Column `tau_{.j}` maximizing `W_j` with every other column held fixed.
pub fn best_response_taxes(
    s: &Scenario,
    t: &TaxSchedule,
    abatement: f64,
    market: usize,
) -> Result<Vec<f64>> {
    best_response_with(s, t, abatement, market, &BestResponseOptions::default())
}

pub fn best_response_with(
    s: &Scenario,
    t: &TaxSchedule,
    abatement: f64,
    market: usize,
    opts: &BestResponseOptions,
) -> Result<Vec<f64>> {
    s.ensure_valid()?;
    t.check_dims(s)?;
    s.check_market(market)?;
    let n = s.n_sectors;
    let obj = ColumnObjective {
        s,
        t,
        abatement,
        market,
    };
    let incoming = t.column(market);
    let incoming_value = obj.value(&incoming);

    let starts = [vec![0.0; n], vec![1.0; n], vec![0.5; n], incoming.clone()];
    let mut candidates: Vec<(Vec<f64>, f64)> = starts
        .iter()
        .map(|x0| local_ascent(&obj, x0, opts.max_newton_iterations))
        .collect();
    candidates.push((incoming.clone(), incoming_value));

    let grid = opts.grid_fallback.then(|| coarse_grid_best(&obj, n));
    if let Some((gx, gv)) = &grid {
        let local_best = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        if *gv > local_best {
            candidates.push(local_ascent(&obj, gx, opts.max_newton_iterations));
        }
    }
    let (x, v) = select_best(candidates);
    if !v.is_finite() {
        return Err(CoreError::SolverFailure {
            detail: format!("no finite welfare value found for market {market}"),
        });
    }
    if let Some((_, gv)) = grid {
        if v < gv - 1e-12 * gv.abs().max(1.0) {
            return Err(CoreError::SolverFailure {
                detail: format!("local search ({v}) is worse than the grid ({gv})"),
            });
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulationOptions {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub best_response: BestResponseOptions,
    /// Probe every market with a grid deviation scan after convergence (`n_sectors <= 3` only).
    pub deviation_probe: bool,
}

impl Default for RegulationOptions {
    fn default() -> Self {
        RegulationOptions {
            damping: 0.5,
            tolerance: 1e-8,
            max_iterations: 10_000,
            best_response: BestResponseOptions::default(),
            deviation_probe: true,
        }
    }
}

/// Result of scanning every market's unilateral column deviations on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationProbe {
    pub step: f64,
    /// `max_grid W_j - W_j(equilibrium)` per market.
    pub gains: Vec<f64>,
    pub max_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulatoryEquilibrium {
    pub taxes: TaxSchedule,
    pub equilibrium: OpenAccessEquilibrium,
    pub welfare: WelfareReport,
    pub iterations: usize,
    pub converged: bool,
    pub max_update: f64,
    /// Sup-norm update of every iteration.
    pub trace: Vec<f64>,
    pub probe: Option<DeviationProbe>,
}

/// Grid step of the deviation probe: about 10^4 points per market.
pub fn probe_step(n_sectors: usize) -> Option<f64> {
    match n_sectors {
        1 => Some(1e-3),
        2 => Some(1e-2),
        3 => Some(0.05),
        _ => None,
    }
}

pub fn deviation_probe(
    s: &Scenario,
    t: &TaxSchedule,
    abatement: f64,
    step: f64,
) -> Result<DeviationProbe> {
    let gains = (0..s.n_markets)
        .into_par_iter()
        .map(|j| {
            let here = market_welfare_raw(s, t, abatement, j)?;
            let f = |x: &[f64]| {
                market_welfare_raw(s, &t.with_column_unchecked(j, x), abatement, j)
                    .unwrap_or(f64::NEG_INFINITY)
            };
            let (_, best) = grid_maximize(&f, s.n_sectors, step)?;
            Ok(best - here)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_gain = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DeviationProbe {
        step,
        gains,
        max_gain,
    })
}

pub fn regulatory_equilibrium(
    s: &Scenario,
    abatement: f64,
    start: &TaxSchedule,
) -> Result<RegulatoryEquilibrium> {
    regulatory_equilibrium_with(s, abatement, start, &RegulationOptions::default())
}

pub fn regulatory_equilibrium_with(
    s: &Scenario,
    abatement: f64,
    start: &TaxSchedule,
    opts: &RegulationOptions,
) -> Result<RegulatoryEquilibrium> {
    s.ensure_valid()?;
    start.check_dims(s)?;
    let lambda = opts.damping;
    let mut taxes = start.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut max_update = f64::INFINITY;

    while trace.len() < opts.max_iterations {
        let columns = (0..s.n_markets)
            .into_par_iter()
            .map(|j| best_response_with(s, &taxes, abatement, j, &opts.best_response))
            .collect::<Result<Vec<_>>>()?;
        let mut rows = taxes.rows().to_vec();
        for (j, col) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                rows[i][j] = ((1.0 - lambda) * rows[i][j] + lambda * v).clamp(0.0, 1.0);
            }
        }
        let next = TaxSchedule::new(rows)?;
        max_update = next.max_abs_diff(&taxes);
        trace.push(max_update);
        taxes = next;
        if max_update < opts.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(CoreError::NoConvergence {
            iterations: trace.len(),
            update_norm: max_update,
            last: Box::new(taxes),
        });
    }

    let equilibrium = solve_equilibrium(s, &taxes, abatement)?;
    let welfare = welfare_from(s, &taxes, &equilibrium);
    let probe = match (opts.deviation_probe, probe_step(s.n_sectors)) {
        (true, Some(step)) => Some(deviation_probe(s, &taxes, abatement, step)?),
        _ => None,
    };
    Ok(RegulatoryEquilibrium {
        taxes,
        equilibrium,
        welfare,
        iterations: trace.len(),
        converged,
        max_update,
        trace,
        probe,
    })
}

/// Tax-incentive condition at zero taxes for the pair (sector `i`, market `j`).
///
/// `holds` is the two-sector condition
/// `-kd S'_ij > (1 - kD) S_i/(S_i + S_j) - (1 - kD) S'_ij` with
/// `S'_ij = (dS_i + dS_j)/(S_i + S_j)`. When `j` has no sector, or `i == j`,
/// the pair reduces to sector `i` alone.
///
/// `exact_holds` is the sign condition `-kd S' S_tot > (1 - kD)(S_i/S_tot - S')`
/// with the total-fleet semi-elasticity `S'`, which is equivalent to
/// `dW_j/d tau_ij > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionThree {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    pub semi_elasticity: f64,
    pub exact_holds: bool,
    pub exact_lhs: f64,
    pub exact_rhs: f64,
    pub total_semi_elasticity: f64,
}

pub fn check_assumption_three(
    s: &Scenario,
    abatement: f64,
    sector: usize,
    market: usize,
) -> Result<AssumptionThree> {
    s.ensure_valid()?;
    s.check_sector(sector)?;
    s.check_market(market)?;
    let t = TaxSchedule::zeros_for(s);
    let eq = solve_equilibrium(s, &t, abatement)?;
    if let Some(k) = eq.pinned.iter().position(|&p| p) {
        return Err(CoreError::ActiveSetChange {
            detail: format!("sector {k} is pinned at zero"),
        });
    }
    let ds = fleet_tax_derivatives(s, &t, abatement, sector, market)?;
    let kd = s.kd();
    let survival = eq.debris.survival;
    let total = eq.total_fleet();
    let si = eq.fleets[sector];

    let (pair_fleet, pair_slope) = if market != sector && market < s.n_sectors {
        (si + eq.fleets[market], ds[sector] + ds[market])
    } else {
        (si, ds[sector])
    };
    let semi = pair_slope / pair_fleet;
    let lhs = -kd * semi;
    let rhs = survival * si / pair_fleet - survival * semi;

    let total_semi = ds.iter().sum::<f64>() / total;
    let exact_lhs = -kd * total_semi * total;
    let exact_rhs = survival * (si / total - total_semi);

    Ok(AssumptionThree {
        holds: lhs > rhs,
        lhs,
        rhs,
        semi_elasticity: semi,
        exact_holds: exact_lhs > exact_rhs,
        exact_lhs,
        exact_rhs,
        total_semi_elasticity: total_semi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6 * x.abs().max(1.0);
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    /// Symmetric pair with strong collision risk and cheap satellites.
    fn congested() -> Scenario {
        Scenario {
            collision_coeff: 0.4,
            debris_per_sat: 1.0,
            costs: vec![0.1, 0.1],
            ..Scenario::sym2()
        }
    }

    #[test]
    fn welfare_examples() {
        let s = Scenario::sym2();
        let w = national_welfare(&s, &TaxSchedule::zeros_for(&s), 0.0).unwrap();
        for &x in &w.welfare {
            assert_abs_diff_eq!(x, 100.0 / 49.0, epsilon = 1e-13);
        }
        let solo = Scenario::solo();
        let w = national_welfare(&solo, &TaxSchedule::zeros_for(&solo), 0.0).unwrap();
        assert_eq!(w.welfare, vec![1.0]);

        let closed = TaxSchedule::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let w = national_welfare(&s, &closed, 0.0).unwrap();
        assert_eq!(w.welfare[1], 0.0);
        for j in 0..2 {
            assert_eq!(w.welfare[j], w.survival * w.gross_value[j]);
        }
    }

    #[test]
    fn sym2_channels_match_welfare_derivative() {
        let s = Scenario::sym2();
        let t = TaxSchedule::zeros_for(&s);
        let ch = welfare_channels(&s, &t, 0.0, 0, 1).unwrap();
        let fd = central(
            |x| market_welfare_raw(&s, &t.shifted(0, 1, x), 0.0, 1).unwrap(),
            0.0,
        );
        assert_abs_diff_eq!(ch.total, fd, epsilon = 1e-9);
        assert_abs_diff_eq!(ch.total, ch.cleanup + ch.expansion - ch.reduction, epsilon = 1e-15);
    }

    #[test]
    fn solo_has_no_cleanup_channel() {
        let s = Scenario::solo();
        let ch = welfare_channels(&s, &TaxSchedule::zeros_for(&s), 0.0, 0, 0).unwrap();
        assert_eq!(ch.cleanup, 0.0);
    }

    #[test]
    fn legacy_debris_raises_cross_tax_derivative() {
        let sym = Scenario::sym2();
        let hideb = Scenario::hideb();
        let t = TaxSchedule::zeros_for(&sym);
        let a = welfare_channels(&sym, &t, 0.0, 0, 1).unwrap().total;
        let b = welfare_channels(&hideb, &t, 0.0, 0, 1).unwrap().total;
        assert!(b > a, "{b} <= {a}");
    }

    #[test]
    fn solo_best_response_is_zero() {
        let s = Scenario::solo();
        let col = best_response_taxes(&s, &TaxSchedule::zeros_for(&s), 0.0, 0).unwrap();
        assert_eq!(col, vec![0.0]);
    }

    #[test]
    fn best_response_never_worse_than_incoming() {
        let s = Scenario::sym2();
        let t = TaxSchedule::zeros_for(&s);
        let col = best_response_taxes(&s, &t, 0.0, 0).unwrap();
        let before = market_welfare_raw(&s, &t, 0.0, 0).unwrap();
        let after = market_welfare_raw(&s, &t.with_column(0, &col).unwrap(), 0.0, 0).unwrap();
        assert!(after >= before);
    }

    #[test]
    fn hideb_best_response_matches_fine_grid() {
        let s = Scenario::hideb();
        let t = TaxSchedule::zeros_for(&s);
        let col = best_response_taxes(&s, &t, 0.0, 0).unwrap();
        let f = |x: &[f64]| {
            market_welfare_raw(&s, &t.with_column_unchecked(0, x), 0.0, 0).unwrap()
        };
        let (arg, best) = grid_maximize(&f, 2, 1e-3).unwrap();
        let achieved = f(&col);
        assert!(achieved >= best - 1e-8, "{achieved} vs grid {best}");
        for (a, b) in col.iter().zip(&arg) {
            assert!((a - b).abs() <= 1e-3, "{col:?} vs {arg:?}");
        }
    }

    #[test]
    fn solo_regulation_stays_at_zero() {
        let s = Scenario::solo();
        let reg = regulatory_equilibrium(&s, 0.0, &TaxSchedule::zeros_for(&s)).unwrap();
        assert_eq!(reg.taxes.rows(), &[vec![0.0]]);
        assert_eq!(reg.iterations, 1);
        assert!(reg.probe.unwrap().max_gain <= 1e-8);
    }

    #[test]
    fn congested_regulation_converges_and_survives_probe() {
        let s = congested();
        let reg = regulatory_equilibrium(&s, 0.0, &TaxSchedule::zeros_for(&s)).unwrap();
        assert!(reg.converged && reg.max_update < 1e-8);
        assert!(reg.probe.unwrap().max_gain <= 1e-8);
    }

    #[test]
    fn assumption_three_off_without_collisions() {
        let s = Scenario::solo();
        let a3 = check_assumption_three(&s, 0.0, 0, 0).unwrap();
        assert!(!a3.holds);
        assert_eq!(a3.lhs, 0.0);
        assert!(a3.rhs > 0.0);
    }

    #[test]
    fn assumption_three_agrees_with_welfare_slope() {
        for s in [Scenario::sym2(), Scenario::hideb(), congested()] {
            let t = TaxSchedule::zeros_for(&s);
            for (i, j) in [(0, 1), (1, 1), (0, 0)] {
                let a3 = check_assumption_three(&s, 0.0, i, j).unwrap();
                let fd = central(
                    |x| market_welfare_raw(&s, &t.shifted(i, j, x), 0.0, j).unwrap(),
                    0.0,
                );
                assert_eq!(a3.exact_holds, fd > 0.0, "({i},{j}) fd = {fd}");
            }
        }
    }

    #[test]
    fn assumption_three_flips_at_most_once_in_legacy_debris() {
        let checks: Vec<AssumptionThree> = (0..=8)
            .map(|d0| {
                let s = Scenario {
                    legacy_debris: d0 as f64,
                    ..Scenario::sym2()
                };
                check_assumption_three(&s, 0.0, 0, 1).unwrap()
            })
            .collect();
        let flips = checks.windows(2).filter(|w| w[0].holds != w[1].holds).count();
        assert!(flips <= 1);
        // The survival factor scales out of the exact condition.
        assert!(checks.iter().all(|c| c.exact_holds == checks[0].exact_holds));
    }

    #[test]
    fn heavy_legacy_debris_satisfies_condition_with_negative_slope() {
        let s = Scenario {
            collision_coeff: 0.3,
            debris_per_sat: 1.6,
            costs: vec![0.1, 0.1],
            legacy_debris: 3.2,
            ..Scenario::sym2()
        };
        let t = TaxSchedule::zeros_for(&s);
        for (i, j) in [(0, 1), (0, 0), (1, 0), (1, 1)] {
            let a3 = check_assumption_three(&s, 0.0, i, j).unwrap();
            let fd = central(|x| market_welfare_raw(&s, &t.shifted(i, j, x), 0.0, j).unwrap(), 0.0);
            assert!(a3.holds && !a3.exact_holds && fd < 0.0, "({i},{j}) fd = {fd}");
        }
    }
}
