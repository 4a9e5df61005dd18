//! Global open-access equilibrium: linear best-response system, two-player
//! reduction, `S = sigma ⊙ r` decomposition and comparative statics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::scenario::{debris_stock, effective_prices_raw, DebrisState, Scenario, TaxSchedule};

/// `|det(I - B)|` at or below this is treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;

/// Relative step of every central-difference stencil.
pub const FD_REL_STEP: f64 = 1e-6;

pub fn fd_step(x: f64) -> f64 {
    FD_REL_STEP * x.abs().max(1.0)
}

/// Best-response system `S = A + B S` in the form `S_i = A_i + B_i S_{-i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    pub intercepts: Vec<f64>,
    pub slopes: Vec<f64>,
    /// `det(I - B)` of the full system.
    pub determinant: f64,
}

/// Q-free benefit-cost ratio `r_i = P_i / (kd P_i + m_i)`.
pub(crate) fn benefit_cost_ratios(s: &Scenario, prices: &[f64]) -> Vec<f64> {
    let kd = s.kd();
    prices
        .iter()
        .zip(&s.costs)
        .map(|(&p, &m)| p / (kd * p + m))
        .collect()
}

fn interaction_matrix(slopes: &[f64], idx: &[usize]) -> DMatrix<f64> {
    let n = idx.len();
    DMatrix::from_fn(n, n, |row, col| {
        if row == col {
            1.0
        } else {
            -slopes[idx[row]]
        }
    })
}

pub fn assemble_system(s: &Scenario, t: &TaxSchedule, abatement: f64) -> Result<LinearSystem> {
    s.ensure_valid()?;
    t.check_dims(s)?;
    Ok(assemble_raw(s, t, abatement))
}

pub(crate) fn assemble_raw(s: &Scenario, t: &TaxSchedule, abatement: f64) -> LinearSystem {
    let prices = effective_prices_raw(s, t);
    let r = benefit_cost_ratios(s, &prices);
    let phi = s.abatement_factor(abatement);
    let kd = s.kd();
    let intercepts: Vec<f64> = r.iter().map(|ri| phi * ri).collect();
    let slopes: Vec<f64> = r.iter().map(|ri| -kd * ri).collect();
    let all: Vec<usize> = (0..slopes.len()).collect();
    let determinant = interaction_matrix(&slopes, &all).determinant();
    LinearSystem {
        intercepts,
        slopes,
        determinant,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumDiagnostics {
    pub determinant: f64,
    pub max_profit_residual: f64,
    /// Number of sectors pinned at zero by the complementarity loop.
    pub deactivation_rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenAccessEquilibrium {
    pub abatement: f64,
    pub fleets: Vec<f64>,
    pub sigma: Vec<f64>,
    pub r: Vec<f64>,
    pub effective_prices: Vec<f64>,
    pub debris: DebrisState,
    /// Sectors with strictly positive fleets.
    pub active: Vec<bool>,
    /// Sectors whose unconstrained solution went negative and were pinned at 0.
    pub pinned: Vec<bool>,
    pub diagnostics: EquilibriumDiagnostics,
}

impl OpenAccessEquilibrium {
    pub fn total_fleet(&self) -> f64 {
        self.fleets.iter().sum()
    }

    pub fn is_interior(&self) -> bool {
        self.active.iter().all(|&a| a)
    }
}

/// Solves `S = (I - B)^{-1} A`, pinning negative sectors at zero.
pub fn solve_equilibrium(
    s: &Scenario,
    t: &TaxSchedule,
    abatement: f64,
) -> Result<OpenAccessEquilibrium> {
    s.ensure_valid()?;
    t.check_dims(s)?;
    let eq = solve_raw(s, t, abatement)?;
    if !eq.debris.physically_valid {
        return Err(CoreError::PhysicallyInvalid {
            survival: eq.debris.survival,
        });
    }
    Ok(eq)
}

/// Equilibrium without input validation or the survival check.
pub(crate) fn solve_raw(
    s: &Scenario,
    t: &TaxSchedule,
    abatement: f64,
) -> Result<OpenAccessEquilibrium> {
    let n = s.n_sectors;
    let prices = effective_prices_raw(s, t);
    let r = benefit_cost_ratios(s, &prices);
    let phi = s.abatement_factor(abatement);
    let kd = s.kd();
    let intercepts: Vec<f64> = r.iter().map(|ri| phi * ri).collect();
    let slopes: Vec<f64> = r.iter().map(|ri| -kd * ri).collect();

    let mut pinned = vec![false; n];
    let mut fleets = vec![0.0; n];
    let mut rounds = 0;
    let mut full_det = None;
    loop {
        let idx: Vec<usize> = (0..n).filter(|&i| !pinned[i]).collect();
        if idx.is_empty() {
            fleets.iter_mut().for_each(|x| *x = 0.0);
            break;
        }
        let lu = interaction_matrix(&slopes, &idx).lu();
        let det = lu.determinant();
        full_det.get_or_insert(det);
        if !(det.abs() > SINGULAR_DET) {
            return Err(CoreError::SingularSystem { determinant: det });
        }
        let rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&i| intercepts[i]));
        let x = lu
            .solve(&rhs)
            .ok_or(CoreError::SingularSystem { determinant: det })?;

        let most_negative = x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v < 0.0)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(pos, _)| idx[pos]);
        match most_negative {
            Some(i) => {
                pinned[i] = true;
                rounds += 1;
            }
            None => {
                fleets.iter_mut().for_each(|x| *x = 0.0);
                for (pos, &i) in idx.iter().enumerate() {
                    fleets[i] = x[pos];
                }
                break;
            }
        }
    }

    let total: f64 = fleets.iter().sum();
    // A pinned sector must not want to re-enter at the final fleet.
    for i in (0..n).filter(|&i| pinned[i]) {
        let entry = intercepts[i] + slopes[i] * total;
        let scale = intercepts[i].abs().max(1.0);
        if entry > 1e-12 * scale {
            return Err(CoreError::NoValidEquilibrium {
                detail: format!(
                    "sector {i} was pinned at zero but its best response is {entry:e} > 0"
                ),
            });
        }
    }

    let debris = debris_stock(s, total, abatement);
    let max_profit_residual = fleets
        .iter()
        .enumerate()
        .map(|(i, &si)| (debris.survival * prices[i] * si - s.costs[i] * si * si).abs())
        .fold(0.0, f64::max);
    let sigma = closed_form_sigma(kd, phi, &r, &pinned)?;
    let active = fleets.iter().map(|&x| x > 0.0).collect();

    Ok(OpenAccessEquilibrium {
        abatement,
        fleets,
        sigma,
        r,
        effective_prices: prices,
        debris,
        active,
        pinned,
        diagnostics: EquilibriumDiagnostics {
            determinant: full_det.unwrap_or(1.0),
            max_profit_residual,
            deactivation_rounds: rounds,
        },
    })
}

/// `sigma_i = phi (1 - kd rho_i) / (1 - (kd)^2 r_i rho_i)` over the unpinned
/// sectors, with `rho_i` the aggregate ratio of the other unpinned sectors.
fn closed_form_sigma(kd: f64, phi: f64, r: &[f64], pinned: &[bool]) -> Result<Vec<f64>> {
    (0..r.len())
        .map(|i| {
            if pinned[i] {
                return Ok(0.0);
            }
            let others = (0..r.len()).filter(|&l| l != i && !pinned[l]).map(|l| r[l]);
            let rho = aggregate_ratio(kd, others)?;
            Ok(phi * (1.0 - kd * rho) / (1.0 - kd * kd * r[i] * rho))
        })
        .collect()
}

/// `(sigma, r)` with `S = sigma ⊙ r`; only `sigma` depends on abatement.
pub fn decompose(eq: &OpenAccessEquilibrium) -> (Vec<f64>, Vec<f64>) {
    (eq.sigma.clone(), eq.r.clone())
}

/// Effective benefit-cost ratio of a set of sectors acting as one player:
/// `rho = G / (1 + kd G)` with `G = sum_k r_k / (1 - kd r_k)`.
pub(crate) fn aggregate_ratio(kd: f64, ratios: impl IntoIterator<Item = f64>) -> Result<f64> {
    let mut g_sum = 0.0;
    for rk in ratios {
        let denom = 1.0 - kd * rk;
        if denom == 0.0 {
            return Err(CoreError::Domain(format!(
                "kd * r = 1 for a complement sector (r = {rk})"
            )));
        }
        g_sum += rk / denom;
    }
    let denom = 1.0 + kd * g_sum;
    if denom == 0.0 {
        return Err(CoreError::Domain("1 + kd G = 0 for the complement".into()));
    }
    Ok(g_sum / denom)
}

/// Residuals of the aggregate-matching conditions `sum A = sum A^2` and
/// `sum B = sum B^2` for a reduced game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateGap {
    pub intercept_sum: f64,
    pub slope_sum: f64,
}

/// Sector `i` against the rest of the world collapsed into a single player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPlayerReduction {
    pub sector: usize,
    /// `(A_i, A_c)`.
    pub intercepts: [f64; 2],
    /// `(B_i, B_c)`.
    pub slopes: [f64; 2],
    /// `(r_i, rho)`.
    pub r: [f64; 2],
    pub scenario: Scenario,
    pub taxes: TaxSchedule,
    pub equilibrium: OpenAccessEquilibrium,
    /// `(S_i, S_{-i})` from the full solve.
    pub full_fleets: [f64; 2],
    pub aggregate_gap: AggregateGap,
}

/// Builds the two-player game whose equilibrium reproduces `S_i` and `S_{-i}`.
///
/// The complement is replaced by one synthetic sector whose best response to
/// `S_i` is the exact aggregate best response of the other (unpinned) sectors.
/// Its ratio is `rho = G / (1 + kd G)`, so the synthetic player keeps the
/// `A = phi r`, `B = -kd r` shape of a real sector.
pub fn reduce_two_player(
    s: &Scenario,
    t: &TaxSchedule,
    abatement: f64,
    sector: usize,
) -> Result<TwoPlayerReduction> {
    s.ensure_valid()?;
    t.check_dims(s)?;
    s.check_sector(sector)?;
    if s.n_sectors < 2 {
        return Err(CoreError::Domain(
            "the two-player reduction needs at least two sectors".into(),
        ));
    }
    let full = solve_equilibrium(s, t, abatement)?;
    let kd = s.kd();
    let phi = s.abatement_factor(abatement);

    let others: Vec<usize> = (0..s.n_sectors)
        .filter(|&k| k != sector && !full.pinned[k])
        .collect();
    let rho = aggregate_ratio(kd, others.iter().map(|&k| full.r[k]))?;
    let p_own = full.effective_prices[sector];
    let p_rest: f64 = others.iter().map(|&k| full.effective_prices[k]).sum();

    let cost_rest = if p_rest > 0.0 && rho > 0.0 {
        p_rest * (1.0 / rho - kd)
    } else if p_rest > 0.0 {
        return Err(CoreError::NoValidEquilibrium {
            detail: format!("complement of sector {sector} has ratio {rho} <= 0"),
        });
    } else {
        1.0
    };

    let price_own = if p_own > 0.0 { p_own } else { 1.0 };
    let price_rest = if p_rest > 0.0 { p_rest } else { 1.0 };
    let synthetic = Scenario {
        n_markets: 2,
        n_sectors: 2,
        prices: vec![price_own, price_rest],
        costs: vec![s.costs[sector], cost_rest],
        treaty_parties: None,
        ..s.clone()
    };
    let taxes = TaxSchedule::new(vec![
        vec![1.0 - p_own / price_own, 1.0],
        vec![1.0, 1.0 - p_rest / price_rest],
    ])?;
    let equilibrium = solve_raw(&synthetic, &taxes, abatement)?;

    let full_sys = assemble_raw(s, t, abatement);
    let intercepts = [phi * full.r[sector], phi * rho];
    let slopes = [-kd * full.r[sector], -kd * rho];
    let aggregate_gap = AggregateGap {
        intercept_sum: intercepts.iter().sum::<f64>() - full_sys.intercepts.iter().sum::<f64>(),
        slope_sum: slopes.iter().sum::<f64>() - full_sys.slopes.iter().sum::<f64>(),
    };
    let s_rest = full.total_fleet() - full.fleets[sector];

    Ok(TwoPlayerReduction {
        sector,
        intercepts,
        slopes,
        r: [full.r[sector], rho],
        scenario: synthetic,
        taxes,
        equilibrium,
        full_fleets: [full.fleets[sector], s_rest],
        aggregate_gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionFlags {
    /// `r_i < 1/(kd)` per sector (no natural orbital seizure).
    pub assumption1: Vec<bool>,
    /// `kd < 1/2` (effective abatement bound).
    pub assumption2: bool,
    pub r: Vec<f64>,
    pub kd: f64,
}

impl AssumptionFlags {
    pub fn all_hold(&self) -> bool {
        self.assumption2 && self.assumption1.iter().all(|&a| a)
    }
}

pub fn check_assumptions(s: &Scenario, t: &TaxSchedule) -> Result<AssumptionFlags> {
    s.ensure_valid()?;
    t.check_dims(s)?;
    let kd = s.kd();
    let r = benefit_cost_ratios(s, &effective_prices_raw(s, t));
    let assumption1 = r
        .iter()
        .map(|&ri| kd == 0.0 || ri < 1.0 / kd)
        .collect();
    Ok(AssumptionFlags {
        assumption1,
        assumption2: kd < 0.5,
        r,
        kd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensitivityMethod {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub method: SensitivityMethod,
    /// `ds_dtau[k][i][j] = dS_k / d tau_ij`.
    pub ds_dtau: Vec<Vec<Vec<f64>>>,
    pub ds_dq: Vec<f64>,
    pub dd_dq: f64,
    /// `dqbar_dtau[i][j] = d * sum_k dS_k / d tau_ij`.
    pub dqbar_dtau: Vec<Vec<f64>>,
}

impl SensitivityReport {
    /// Largest entrywise relative gap `|a - b| / max(|a|, |b|, floor)`.
    pub fn max_relative_gap(&self, other: &SensitivityReport, floor: f64) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(floor);
        let mut worst = rel(self.dd_dq, other.dd_dq);
        for (a, b) in self.ds_dq.iter().zip(&other.ds_dq) {
            worst = worst.max(rel(*a, *b));
        }
        for (a, b) in self
            .ds_dtau
            .iter()
            .flatten()
            .flatten()
            .zip(other.ds_dtau.iter().flatten().flatten())
        {
            worst = worst.max(rel(*a, *b));
        }
        for (a, b) in self
            .dqbar_dtau
            .iter()
            .flatten()
            .zip(other.dqbar_dtau.iter().flatten())
        {
            worst = worst.max(rel(*a, *b));
        }
        worst
    }
}

pub fn sensitivities(
    s: &Scenario,
    t: &TaxSchedule,
    abatement: f64,
    method: SensitivityMethod,
) -> Result<SensitivityReport> {
    let center = solve_equilibrium(s, t, abatement)?;
    match method {
        SensitivityMethod::Analytic => analytic_sensitivities(s, abatement, &center),
        SensitivityMethod::FiniteDifference => fd_sensitivities(s, t, abatement, &center),
    }
}

fn require_unpinned(eq: &OpenAccessEquilibrium) -> Result<()> {
    if let Some(i) = eq.pinned.iter().position(|&p| p) {
        return Err(CoreError::ActiveSetChange {
            detail: format!("sector {i} is pinned at zero"),
        });
    }
    Ok(())
}

/// Per-sector pieces of the two-player closed form `S_i = phi r_i (1 - kd rho_i) / (1 - (kd)^2 r_i rho_i)`,
/// where `rho_i` is the aggregate ratio of all sectors but `i`.
struct ClosedForm {
    phi: f64,
    kd: f64,
    r: Vec<f64>,
    /// `rho_{-i}` per sector.
    rho: Vec<f64>,
    /// `G_{-i}` per sector, so that `rho_{-i} = G_{-i} / (1 + kd G_{-i})`.
    g_rest: Vec<f64>,
    dr_dprice: Vec<f64>,
}

impl ClosedForm {
    fn new(s: &Scenario, prices: &[f64], abatement: f64) -> Result<Self> {
        let kd = s.kd();
        let r = benefit_cost_ratios(s, prices);
        let g: Vec<f64> = r
            .iter()
            .map(|&ri| {
                let denom = 1.0 - kd * ri;
                if denom == 0.0 {
                    Err(CoreError::Domain(format!("kd * r = 1 (r = {ri})")))
                } else {
                    Ok(ri / denom)
                }
            })
            .collect::<Result<_>>()?;
        let g_total: f64 = g.iter().sum();
        let g_rest: Vec<f64> = g.iter().map(|gi| g_total - gi).collect();
        let rho = g_rest.iter().map(|gr| gr / (1.0 + kd * gr)).collect();
        let dr_dprice = prices
            .iter()
            .zip(&s.costs)
            .map(|(&p, &m)| m / (kd * p + m).powi(2))
            .collect();
        Ok(ClosedForm {
            phi: s.abatement_factor(abatement),
            kd,
            r,
            rho,
            g_rest,
            dr_dprice,
        })
    }

    fn denom(&self, i: usize) -> f64 {
        1.0 - self.kd * self.kd * self.r[i] * self.rho[i]
    }

    /// `dS_i / dr_i` holding the complement fixed.
    fn own_slope(&self, i: usize) -> f64 {
        self.phi * (1.0 - self.kd * self.rho[i]) / self.denom(i).powi(2)
    }

    /// `dS_k / d rho_{-k}`.
    fn complement_slope(&self, k: usize) -> f64 {
        -self.phi * self.r[k] * self.kd * (1.0 - self.kd * self.r[k]) / self.denom(k).powi(2)
    }

    /// `d rho_{-k} / d r_i` for `i != k`.
    fn rho_response(&self, k: usize, i: usize) -> f64 {
        let drho_dg = 1.0 / (1.0 + self.kd * self.g_rest[k]).powi(2);
        let dg_dr = 1.0 / (1.0 - self.kd * self.r[i]).powi(2);
        drho_dg * dg_dr
    }

    /// `dS_k / dr_i`.
    fn fleet_wrt_ratio(&self, k: usize, i: usize) -> f64 {
        if k == i {
            self.own_slope(i)
        } else {
            self.complement_slope(k) * self.rho_response(k, i)
        }
    }

    fn fleet_wrt_abatement(&self, k: usize, collision_coeff: f64) -> f64 {
        collision_coeff * self.r[k] * (1.0 - self.kd * self.rho[k]) / self.denom(k)
    }
}

/// `dS_k / d tau_ij` for every sector `k`, from the closed form.
pub(crate) fn fleet_tax_derivatives(
    s: &Scenario,
    t: &TaxSchedule,
    abatement: f64,
    sector: usize,
    market: usize,
) -> Result<Vec<f64>> {
    let prices = effective_prices_raw(s, t);
    let cf = ClosedForm::new(s, &prices, abatement)?;
    let dr = -s.prices[market] * cf.dr_dprice[sector];
    Ok((0..s.n_sectors)
        .map(|k| cf.fleet_wrt_ratio(k, sector) * dr)
        .collect())
}

fn analytic_sensitivities(
    s: &Scenario,
    abatement: f64,
    center: &OpenAccessEquilibrium,
) -> Result<SensitivityReport> {
    require_unpinned(center)?;
    let ns = s.n_sectors;
    let nm = s.n_markets;
    let cf = ClosedForm::new(s, &center.effective_prices, abatement)?;

    let mut ds_dtau = vec![vec![vec![0.0; nm]; ns]; ns];
    for i in 0..ns {
        for j in 0..nm {
            let dr = -s.prices[j] * cf.dr_dprice[i];
            for (k, block) in ds_dtau.iter_mut().enumerate() {
                block[i][j] = cf.fleet_wrt_ratio(k, i) * dr;
            }
        }
    }
    let ds_dq: Vec<f64> = (0..ns)
        .map(|k| cf.fleet_wrt_abatement(k, s.collision_coeff))
        .collect();
    Ok(assemble_report(
        s,
        SensitivityMethod::Analytic,
        ds_dtau,
        ds_dq,
    ))
}

fn assemble_report(
    s: &Scenario,
    method: SensitivityMethod,
    ds_dtau: Vec<Vec<Vec<f64>>>,
    ds_dq: Vec<f64>,
) -> SensitivityReport {
    let d = s.debris_per_sat;
    let dd_dq = d * ds_dq.iter().sum::<f64>() - 1.0;
    let dqbar_dtau = (0..s.n_sectors)
        .map(|i| {
            (0..s.n_markets)
                .map(|j| d * ds_dtau.iter().map(|block| block[i][j]).sum::<f64>())
                .collect()
        })
        .collect();
    SensitivityReport {
        method,
        ds_dtau,
        ds_dq,
        dd_dq,
        dqbar_dtau,
    }
}

fn stencil_solve(
    s: &Scenario,
    t: &TaxSchedule,
    abatement: f64,
    center: &OpenAccessEquilibrium,
    what: &str,
) -> Result<OpenAccessEquilibrium> {
    let eq = solve_raw(s, t, abatement)?;
    if eq.pinned != center.pinned {
        return Err(CoreError::ActiveSetChange {
            detail: format!("pinned set changes when perturbing {what}"),
        });
    }
    Ok(eq)
}

fn fd_sensitivities(
    s: &Scenario,
    t: &TaxSchedule,
    abatement: f64,
    center: &OpenAccessEquilibrium,
) -> Result<SensitivityReport> {
    let ns = s.n_sectors;
    let nm = s.n_markets;
    let mut ds_dtau = vec![vec![vec![0.0; nm]; ns]; ns];
    for i in 0..ns {
        for j in 0..nm {
            let h = fd_step(t.rate(i, j));
            let what = format!("tau[{i}][{j}]");
            let up = stencil_solve(s, &t.shifted(i, j, h), abatement, center, &what)?;
            let down = stencil_solve(s, &t.shifted(i, j, -h), abatement, center, &what)?;
            for (k, block) in ds_dtau.iter_mut().enumerate() {
                block[i][j] = (up.fleets[k] - down.fleets[k]) / (2.0 * h);
            }
        }
    }
    let h = fd_step(abatement);
    let up = stencil_solve(s, t, abatement + h, center, "Q")?;
    let down = stencil_solve(s, t, abatement - h, center, "Q")?;
    let ds_dq = (0..ns)
        .map(|k| (up.fleets[k] - down.fleets[k]) / (2.0 * h))
        .collect();
    Ok(assemble_report(
        s,
        SensitivityMethod::FiniteDifference,
        ds_dtau,
        ds_dq,
    ))
}

/// Mixed second difference `d^2 S_k / dQ d tau_ij` on the equilibrium solve.
///
/// Fleets are affine in `Q` on a fixed active set, so the `Q` step is taken as
/// large as the active set allows (1, 0.1, ... 1e-3 times `max(1, |Q|)`); the
/// tax step is `1e-4 * max(1, |tau|)`.
pub fn mixed_second_difference(
    s: &Scenario,
    t: &TaxSchedule,
    abatement: f64,
    fleet: usize,
    sector: usize,
    market: usize,
) -> Result<f64> {
    s.check_sector(fleet)?;
    s.check_sector(sector)?;
    s.check_market(market)?;
    let center = solve_equilibrium(s, t, abatement)?;
    let ht = 1e-4 * t.rate(sector, market).abs().max(1.0);
    let t_up = t.shifted(sector, market, ht);
    let t_down = t.shifted(sector, market, -ht);

    let mut last_err = None;
    for scale in [1.0, 1e-1, 1e-2, 1e-3] {
        let hq = scale * abatement.abs().max(1.0);
        let corners = [
            (&t_up, abatement + hq),
            (&t_down, abatement + hq),
            (&t_up, abatement - hq),
            (&t_down, abatement - hq),
        ];
        let mut vals = [0.0; 4];
        let mut ok = true;
        for (slot, (tt, q)) in vals.iter_mut().zip(corners) {
            match stencil_solve(s, tt, q, &center, "the (Q, tau) stencil") {
                Ok(eq) if eq.active == center.active => *slot = eq.fleets[fleet],
                Ok(_) => {
                    ok = false;
                    break;
                }
                Err(e) => {
                    last_err = Some(e);
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok((vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * hq * ht));
        }
    }
    Err(last_err.unwrap_or_else(|| CoreError::ActiveSetChange {
        detail: "active set changes for every Q step".into(),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbatementMode {
    /// Root of `D*(Q) = Dbar` with the fleet re-solved at each `Q`.
    Responsive,
    /// `d S*(0) + D0 - Dbar` with the fleet held at its `Q = 0` level.
    Static,
}

/// Catastrophe-averting abatement level, clamped at zero.
pub fn required_abatement(s: &Scenario, t: &TaxSchedule, mode: AbatementMode) -> Result<f64> {
    s.ensure_valid()?;
    t.check_dims(s)?;
    let dbar = s.catastrophe_threshold;
    let debris_at = |q: f64| solve_raw(s, t, q).map(|eq| eq.debris.stock);
    let d0 = debris_at(0.0)?;
    if mode == AbatementMode::Static {
        return Ok((d0 - dbar).max(0.0));
    }
    let slope = debris_at(1.0)? - d0;
    if !(slope < 0.0) {
        return Err(CoreError::NonDecreasingDebris { slope });
    }
    if d0 <= dbar {
        return Ok(0.0);
    }

    let tol = 1e-13 * dbar.max(1.0);
    // Exact on a fixed active set, since D*(Q) is affine there.
    let guess = (d0 - dbar) / -slope;
    let at_guess = debris_at(guess)?;
    if (at_guess - dbar).abs() <= tol {
        return Ok(guess);
    }

    let (mut lo, mut hi) = (0.0, guess.max(1.0));
    let mut d_hi = debris_at(hi)?;
    let mut expansions = 0;
    while d_hi > dbar {
        lo = hi;
        hi *= 2.0;
        d_hi = debris_at(hi)?;
        expansions += 1;
        if expansions > 200 {
            return Err(CoreError::NonDecreasingDebris { slope });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let dm = debris_at(mid)?;
        if (dm - dbar).abs() <= tol {
            return Ok(mid);
        }
        if dm > dbar {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn three_sector(costs: Vec<f64>) -> Scenario {
        Scenario {
            n_markets: 3,
            n_sectors: 3,
            prices: vec![1.0; 3],
            costs,
            ..Scenario::sym2()
        }
    }

    #[test]
    fn sym2_system() {
        let s = Scenario::sym2();
        let sys = assemble_system(&s, &TaxSchedule::zeros_for(&s), 0.0).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(sys.intercepts[i], 5.0 / 3.0, epsilon = 1e-15);
            assert_abs_diff_eq!(sys.slopes[i], -1.0 / 6.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(sys.determinant, 35.0 / 36.0, epsilon = 1e-15);
    }

    #[test]
    fn denied_sector_has_zero_row() {
        let s = Scenario::sym2();
        let t = TaxSchedule::zeros_for(&s).deny_sector(1);
        let sys = assemble_system(&s, &t, 0.0).unwrap();
        assert_eq!(sys.intercepts[1], 0.0);
        assert_eq!(sys.slopes[1], 0.0);
    }

    #[test]
    fn solo_system_is_trivial() {
        let s = Scenario::solo();
        let sys = assemble_system(&s, &TaxSchedule::zeros_for(&s), 0.0).unwrap();
        assert_eq!(sys.intercepts, vec![1.0]);
        assert_eq!(sys.slopes, vec![0.0]);
        assert_eq!(sys.determinant, 1.0);
    }

    #[test]
    fn sym2_equilibrium() {
        let s = Scenario::sym2();
        let eq = solve_equilibrium(&s, &TaxSchedule::zeros_for(&s), 0.0).unwrap();
        for &x in &eq.fleets {
            assert_abs_diff_eq!(x, 10.0 / 7.0, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(eq.debris.stock, 20.0 / 7.0, epsilon = 1e-14);
        assert!(eq.diagnostics.max_profit_residual < 1e-12);
        assert!(eq.is_interior());
    }

    #[test]
    fn solo_equilibrium() {
        let s = Scenario::solo();
        let eq = solve_equilibrium(&s, &TaxSchedule::zeros_for(&s), 0.0).unwrap();
        assert_eq!(eq.fleets, vec![1.0]);
        assert_eq!(eq.debris.stock, 1.0);
    }

    #[test]
    fn denial_leaves_single_sector_problem() {
        let s = Scenario::sym2();
        let t = TaxSchedule::zeros_for(&s).deny_sector(0);
        let eq = solve_equilibrium(&s, &t, 0.0).unwrap();
        assert_eq!(eq.fleets[0], 0.0);
        assert_abs_diff_eq!(eq.fleets[1], 5.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eq.debris.stock, 5.0 / 3.0, epsilon = 1e-14);
        assert!(!eq.active[0]);
        assert!(!eq.pinned[0]);
    }

    #[test]
    fn heavy_legacy_debris_pins_every_sector() {
        // phi = 1 - 0.1 * 12 < 0: no satellite is profitable.
        let s = Scenario {
            legacy_debris: 12.0,
            ..Scenario::sym2()
        };
        let t = TaxSchedule::zeros_for(&s);
        let eq = solve_raw(&s, &t, 0.0).unwrap();
        assert_eq!(eq.fleets, vec![0.0, 0.0]);
        assert!(eq.pinned.iter().all(|&p| p));
        assert!(matches!(
            solve_equilibrium(&s, &t, 0.0),
            Err(CoreError::PhysicallyInvalid { .. })
        ));
    }

    #[test]
    fn singular_system_detected() {
        // kd r_i = 1 for both sectors makes I - B singular.
        let s = Scenario {
            n_markets: 2,
            n_sectors: 2,
            prices: vec![0.5, 0.5],
            costs: vec![1e-300, 1e-300],
            collision_coeff: 1.0,
            debris_per_sat: 1.0,
            ..Scenario::sym2()
        };
        let err = solve_equilibrium(&s, &TaxSchedule::zeros_for(&s), 0.0).unwrap_err();
        assert!(matches!(err, CoreError::SingularSystem { .. }), "{err:?}");
    }

    #[test]
    fn reduction_of_two_players_is_identity() {
        let s = Scenario::sym2();
        let red = reduce_two_player(&s, &TaxSchedule::zeros_for(&s), 0.0, 0).unwrap();
        for &x in &red.equilibrium.fleets {
            assert_abs_diff_eq!(x, 10.0 / 7.0, epsilon = 1e-13);
        }
        assert_abs_diff_eq!(red.r[1], 5.0 / 3.0, epsilon = 1e-14);
        assert!(red.aggregate_gap.intercept_sum.abs() < 1e-14);
    }

    #[test]
    fn reduction_matches_full_three_sector_solve() {
        for costs in [vec![1.0, 1.0, 1.0], vec![1.0, 2.0, 4.0]] {
            let s = three_sector(costs);
            let t = TaxSchedule::zeros_for(&s);
            let full = solve_equilibrium(&s, &t, 0.0).unwrap();
            for i in 0..3 {
                let red = reduce_two_player(&s, &t, 0.0, i).unwrap();
                let rest = full.total_fleet() - full.fleets[i];
                assert_abs_diff_eq!(red.equilibrium.fleets[0], full.fleets[i], epsilon = 1e-12);
                assert_abs_diff_eq!(red.equilibrium.fleets[1], rest, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn summed_aggregates_do_not_reproduce_three_sector_equilibrium() {
        // The naive "sum the complement's A and B" construction misses S_i.
        let s = three_sector(vec![1.0; 3]);
        let t = TaxSchedule::zeros_for(&s);
        let sys = assemble_system(&s, &t, 0.0).unwrap();
        let (a, b) = (sys.intercepts[0], sys.slopes[0]);
        let (ac, bc) = (2.0 * a, 2.0 * b);
        let naive = (a + b * ac) / (1.0 - b * bc);
        let full = solve_equilibrium(&s, &t, 0.0).unwrap();
        assert!((naive - full.fleets[0]).abs() > 1e-3);
        let red = reduce_two_player(&s, &t, 0.0, 0).unwrap();
        assert!(red.aggregate_gap.intercept_sum.abs() > 1e-3);
    }

    #[test]
    fn decomposition_examples() {
        let s = Scenario::sym2();
        let t = TaxSchedule::zeros_for(&s);
        let eq0 = solve_equilibrium(&s, &t, 0.0).unwrap();
        let (sigma, r) = decompose(&eq0);
        for i in 0..2 {
            assert_abs_diff_eq!(r[i], 5.0 / 3.0, epsilon = 1e-15);
            assert_abs_diff_eq!(sigma[i], 6.0 / 7.0, epsilon = 1e-14);
        }
        let eq1 = solve_equilibrium(&s, &t, 1.0).unwrap();
        let (sigma1, r1) = decompose(&eq1);
        assert_eq!(r, r1);
        assert!(sigma1[0] > sigma[0]);

        let solo = Scenario::solo();
        let (sigma, r) = decompose(&solve_equilibrium(&solo, &TaxSchedule::zeros_for(&solo), 0.0).unwrap());
        assert_eq!((sigma, r), (vec![1.0], vec![1.0]));
    }

    #[test]
    fn assumption_examples() {
        let s = Scenario::sym2();
        let flags = check_assumptions(&s, &TaxSchedule::zeros_for(&s)).unwrap();
        assert!(flags.all_hold());

        let steep = Scenario {
            collision_coeff: 0.6,
            ..Scenario::sym2()
        };
        assert!(!check_assumptions(&steep, &TaxSchedule::zeros_for(&steep)).unwrap().assumption2);

        let boundary = Scenario {
            prices: vec![100.0],
            costs: vec![0.01],
            ..Scenario::solo()
        };
        let boundary = Scenario {
            collision_coeff: 0.1,
            ..boundary
        };
        let flags = check_assumptions(&boundary, &TaxSchedule::zeros_for(&boundary)).unwrap();
        assert_abs_diff_eq!(flags.r[0], 100.0 / 10.01, epsilon = 1e-12);
        assert!(flags.assumption1[0]);
    }

    #[test]
    fn sym2_sensitivities() {
        let s = Scenario::sym2();
        let t = TaxSchedule::zeros_for(&s);
        for method in [SensitivityMethod::Analytic, SensitivityMethod::FiniteDifference] {
            let rep = sensitivities(&s, &t, 0.0, method).unwrap();
            for k in 0..2 {
                assert_abs_diff_eq!(rep.ds_dq[k], 1.0 / 7.0, epsilon = 1e-8);
            }
            assert_abs_diff_eq!(rep.dd_dq, -5.0 / 7.0, epsilon = 1e-8);
            let own = rep.ds_dtau[0][0][1];
            let cross = rep.ds_dtau[1][0][1];
            assert!(own < 0.0 && cross > 0.0 && -own > cross, "{own} {cross}");
        }
        let a = sensitivities(&s, &t, 0.0, SensitivityMethod::Analytic).unwrap();
        let f = sensitivities(&s, &t, 0.0, SensitivityMethod::FiniteDifference).unwrap();
        assert!(a.max_relative_gap(&f, 1e-12) < 1e-5);
    }

    #[test]
    fn solo_sensitivities_decouple() {
        let s = Scenario::solo();
        let rep = sensitivities(&s, &TaxSchedule::zeros_for(&s), 0.0, SensitivityMethod::Analytic)
            .unwrap();
        assert_eq!(rep.ds_dq, vec![0.0]);
        assert_eq!(rep.dd_dq, -1.0);
    }

    #[test]
    fn fd_sensitivity_refuses_active_set_change() {
        let s = Scenario::sym2();
        let t = TaxSchedule::zeros_for(&s).deny_sector(0);
        let err = sensitivities(&s, &t, 0.0, SensitivityMethod::FiniteDifference).unwrap_err();
        assert!(matches!(err, CoreError::ActiveSetChange { .. }), "{err:?}");
    }

    #[test]
    fn required_abatement_examples() {
        let s = Scenario::sym2();
        let t = TaxSchedule::zeros_for(&s);
        let q = required_abatement(&s, &t, AbatementMode::Responsive).unwrap();
        assert_abs_diff_eq!(q, 1.2, epsilon = 1e-12);
        let q_static = required_abatement(&s, &t, AbatementMode::Static).unwrap();
        assert_abs_diff_eq!(q_static, 6.0 / 7.0, epsilon = 1e-14);

        let lenient = Scenario {
            catastrophe_threshold: 3.0,
            ..Scenario::sym2()
        };
        assert_eq!(
            required_abatement(&lenient, &t, AbatementMode::Responsive).unwrap(),
            0.0
        );
        let solo = Scenario::solo();
        assert_eq!(
            required_abatement(&solo, &TaxSchedule::zeros_for(&solo), AbatementMode::Responsive)
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn mixed_difference_sign_in_sym2() {
        let s = Scenario::sym2();
        let t = TaxSchedule::zeros_for(&s);
        let v = mixed_second_difference(&s, &t, 0.0, 0, 0, 1).unwrap();
        assert!(v < 0.0, "{v}");
    }
}
