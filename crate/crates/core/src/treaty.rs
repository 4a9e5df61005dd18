//! Debris-abatement game: benefit coefficients, payoffs, Nash abatement
//! profiles, the self-enforcing treaty response and its tax sensitivities.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::open_access::{aggregate_ratio, benefit_cost_ratios, required_abatement, AbatementMode};
use crate::regulation::market_welfare_raw;
use crate::scenario::{effective_prices_raw, AbatementProfile, Scenario, TaxSchedule};

/// Coefficients with `|model - closed form|` above this are reported as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientVariant {
    /// `b_i = dW_i/dQ` fitted from the open-access welfare itself.
    ModelDerived,
    /// Two-player closed form in `r_i` and the complement ratio.
    ClosedForm,
}

impl CoefficientVariant {
    pub const ALL: [CoefficientVariant; 2] =
        [CoefficientVariant::ModelDerived, CoefficientVariant::ClosedForm];

    pub fn label(self) -> &'static str {
        match self {
            CoefficientVariant::ModelDerived => "model-derived",
            CoefficientVariant::ClosedForm => "closed-form",
        }
    }
}

/// Marginal benefit of abatement `b_i(Q) = alpha - beta Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenefitCoefficients {
    pub party: usize,
    pub alpha: f64,
    pub beta: f64,
    pub variant: CoefficientVariant,
    /// Gap between the fitted quadratic and `W_i(3)`; model-derived only.
    pub fit_residual: Option<f64>,
}

impl BenefitCoefficients {
    pub fn marginal_benefit(&self, total: f64) -> f64 {
        self.alpha - self.beta * total
    }
}

fn check_party(s: &Scenario, party: usize) -> Result<()> {
    if party >= s.parties() {
        return Err(CoreError::IndexOutOfRange {
            what: "party",
            index: party,
            len: s.parties(),
        });
    }
    Ok(())
}

pub fn benefit_coefficients(
    s: &Scenario,
    t: &TaxSchedule,
    party: usize,
    variant: CoefficientVariant,
) -> Result<BenefitCoefficients> {
    s.ensure_valid()?;
    t.check_dims(s)?;
    check_party(s, party)?;
    match variant {
        CoefficientVariant::ModelDerived => model_derived(s, t, party),
        CoefficientVariant::ClosedForm => Ok(closed_form(s, t, party)?),
    }
}

/// `W_i` is quadratic in `Q` on a fixed active set, so three samples determine it.
fn model_derived(s: &Scenario, t: &TaxSchedule, party: usize) -> Result<BenefitCoefficients> {
    let (alpha, beta, fit_residual) = if party < s.n_markets {
        let w = [0.0, 1.0, 2.0, 3.0]
            .map(|q| market_welfare_raw(s, t, q, party))
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;
        let curvature = w[2] - 2.0 * w[1] + w[0];
        let alpha = (-3.0 * w[0] + 4.0 * w[1] - w[2]) / 2.0;
        let beta = -curvature;
        let predicted = w[0] + 3.0 * alpha - 4.5 * beta;
        (alpha, beta, (predicted - w[3]).abs())
    } else {
        (0.0, 0.0, 0.0)
    };
    Ok(BenefitCoefficients {
        party,
        alpha,
        beta,
        variant: CoefficientVariant::ModelDerived,
        fit_residual: Some(fit_residual),
    })
}

/// `alpha = k r_i^2 (1 - kd rho)^2 / (1 - (kd)^2 r_i rho)`, `beta = 2 k kd r_i alpha`,
/// where `rho` is the aggregate ratio of every sector other than `party`.
/// A party without a sector has `r_i = 0`.
pub(crate) fn closed_form(s: &Scenario, t: &TaxSchedule, party: usize) -> Result<BenefitCoefficients> {
    let prices = effective_prices_raw(s, t);
    let r = benefit_cost_ratios(s, &prices);
    let kd = s.kd();
    let k = s.collision_coeff;
    let ri = r.get(party).copied().unwrap_or(0.0);
    let rho = aggregate_ratio(
        kd,
        r.iter().enumerate().filter(|(l, _)| *l != party).map(|(_, v)| *v),
    )?;
    let alpha = ri * ri * k * (1.0 - kd * rho).powi(2) / (1.0 - kd * kd * ri * rho);
    let beta = 2.0 * k * alpha * kd * ri;
    Ok(BenefitCoefficients {
        party,
        alpha,
        beta,
        variant: CoefficientVariant::ClosedForm,
        fit_residual: None,
    })
}

pub fn all_coefficients(
    s: &Scenario,
    t: &TaxSchedule,
    variant: CoefficientVariant,
) -> Result<Vec<BenefitCoefficients>> {
    (0..s.parties())
        .map(|i| benefit_coefficients(s, t, i, variant))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDivergence {
    pub party: usize,
    pub model: BenefitCoefficients,
    pub closed: BenefitCoefficients,
    pub alpha_gap: f64,
    pub beta_gap: f64,
    pub diverges: bool,
}

pub fn coefficient_divergence(s: &Scenario, t: &TaxSchedule) -> Result<Vec<CoefficientDivergence>> {
    (0..s.parties())
        .map(|party| {
            let model = benefit_coefficients(s, t, party, CoefficientVariant::ModelDerived)?;
            let closed = benefit_coefficients(s, t, party, CoefficientVariant::ClosedForm)?;
            let alpha_gap = model.alpha - closed.alpha;
            let beta_gap = model.beta - closed.beta;
            Ok(CoefficientDivergence {
                party,
                model,
                closed,
                alpha_gap,
                beta_gap,
                diverges: alpha_gap.abs() > DIVERGENCE_THRESHOLD
                    || beta_gap.abs() > DIVERGENCE_THRESHOLD,
            })
        })
        .collect()
}

fn averted(total: f64, qbar: f64) -> bool {
    total >= qbar - 1e-12 * qbar.max(1.0)
}

/// `b(Qbar) - c q^2/2` when catastrophe is averted, else `b(Q) - X - c q^2/2`.
pub fn abatement_payoff(
    s: &Scenario,
    coeffs: &BenefitCoefficients,
    own: f64,
    total: f64,
    qbar: f64,
) -> f64 {
    let cost = 0.5 * s.abatement_cost * own * own;
    if averted(total, qbar) {
        coeffs.marginal_benefit(qbar) - cost
    } else {
        coeffs.marginal_benefit(total) - s.catastrophe_damages - cost
    }
}

/// Best payoff a party can reach against a fixed total from the others.
fn best_deviation(s: &Scenario, c: &BenefitCoefficients, others: f64, qbar: f64) -> (f64, f64) {
    let pivot = (qbar - others).max(0.0);
    let mut best = (pivot, abatement_payoff(s, c, pivot, others + pivot, qbar));
    let interior = (-c.beta / s.abatement_cost).max(0.0);
    if others + interior < qbar && !averted(others + interior, qbar) {
        let v = abatement_payoff(s, c, interior, others + interior, qbar);
        if v > best.1 {
            best = (interior, v);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashCandidate {
    pub label: String,
    pub profile: AbatementProfile,
    /// Largest payoff gain any party gets from its exact best deviation.
    pub worst_gain: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashAnalysis {
    pub variant: CoefficientVariant,
    pub qbar: f64,
    pub parties: usize,
    pub per_party_burden: f64,
    pub coefficients: Vec<BenefitCoefficients>,
    /// Candidates that survive every unilateral deviation.
    pub nash_equilibria: Vec<AbatementProfile>,
    pub candidates: Vec<NashCandidate>,
    /// `beta_i Qbar/N + c (Qbar/N)^2 / 2` per party.
    pub pivot_bounds: Vec<f64>,
    pub no_defection_bound: f64,
    pub averting_sustainable: bool,
}

fn certify(
    s: &Scenario,
    coeffs: &[BenefitCoefficients],
    label: &str,
    profile: AbatementProfile,
    qbar: f64,
) -> NashCandidate {
    let mut worst_gain: f64 = 0.0;
    for c in coeffs {
        let own = profile.contributions[c.party];
        let others = profile.others(c.party);
        let current = abatement_payoff(s, c, own, others + own, qbar);
        let (_, best) = best_deviation(s, c, others, qbar);
        worst_gain = worst_gain.max(best - current);
    }
    let scale = coeffs
        .iter()
        .map(|c| c.alpha.abs())
        .fold(s.catastrophe_damages, f64::max)
        .max(1.0);
    NashCandidate {
        label: label.to_string(),
        profile,
        worst_gain,
        certified: worst_gain <= 1e-12 * scale,
    }
}

pub fn nash_abatement(
    s: &Scenario,
    t: &TaxSchedule,
    variant: CoefficientVariant,
) -> Result<NashAnalysis> {
    let qbar = required_abatement(s, t, AbatementMode::Responsive)?;
    nash_abatement_at(s, t, variant, qbar)
}

/// Nash analysis against a given required abatement level.
///
/// Candidates are the all-zero profile, the non-averting profile where every
/// party abates `max(0, -beta_i/c)`, and the equal split `Qbar/N`. Each is
/// listed only if no party has a profitable unilateral deviation.
pub fn nash_abatement_at(
    s: &Scenario,
    t: &TaxSchedule,
    variant: CoefficientVariant,
    qbar: f64,
) -> Result<NashAnalysis> {
    let coefficients = all_coefficients(s, t, variant)?;
    let n = s.parties();
    let burden = qbar / n as f64;
    let c = s.abatement_cost;

    let mut profiles = vec![("all-zero", AbatementProfile::uniform(n, 0.0)?)];
    let free_ride: Vec<f64> = coefficients.iter().map(|k| (-k.beta / c).max(0.0)).collect();
    if free_ride.iter().any(|&q| q > 0.0) {
        profiles.push(("non-averting", AbatementProfile::new(free_ride)?));
    }
    if burden > 0.0 {
        profiles.push(("equal-split", AbatementProfile::uniform(n, burden)?));
    }
    let candidates: Vec<NashCandidate> = profiles
        .into_iter()
        .map(|(label, p)| certify(s, &coefficients, label, p, qbar))
        .collect();
    let nash_equilibria = candidates
        .iter()
        .filter(|c| c.certified)
        .map(|c| c.profile.clone())
        .collect();

    let pivot_bounds: Vec<f64> = coefficients
        .iter()
        .map(|k| k.beta * burden + 0.5 * c * burden * burden)
        .collect();
    let no_defection_bound = pivot_bounds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(NashAnalysis {
        variant,
        qbar,
        parties: n,
        per_party_burden: burden,
        coefficients,
        nash_equilibria,
        candidates,
        averting_sustainable: s.catastrophe_damages >= no_defection_bound,
        pivot_bounds,
        no_defection_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreatyResponse {
    pub party: usize,
    /// Clamped response `Q_{\i}` in `[0, Qbar]`.
    pub q_rest: f64,
    pub raw: f64,
    pub clamped: bool,
}

/// Smallest root of the defector's indifference condition, clamped to `[0, Qbar]`.
pub fn treaty_response(s: &Scenario, coeffs: &BenefitCoefficients, qbar: f64) -> TreatyResponse {
    let (c, x, b) = (s.abatement_cost, s.catastrophe_damages, coeffs.beta);
    let root = (b * b + 2.0 * c * x).sqrt();
    // b - root, rewritten to avoid cancellation when b > 0.
    let shortfall = if b > 0.0 { -2.0 * c * x / (b + root) } else { b - root };
    let raw = qbar + shortfall / c;
    TreatyResponse {
        party: coeffs.party,
        q_rest: raw.clamp(0.0, qbar.max(0.0)),
        raw,
        clamped: raw < 0.0,
    }
}

/// `b(Qbar) - (c/2)(Qbar - x)^2 - b(x) + X`; zero at an unclamped response.
pub fn indifference_residual(
    s: &Scenario,
    coeffs: &BenefitCoefficients,
    qbar: f64,
    q_rest: f64,
) -> f64 {
    coeffs.marginal_benefit(qbar) - 0.5 * s.abatement_cost * (qbar - q_rest).powi(2)
        - coeffs.marginal_benefit(q_rest)
        + s.catastrophe_damages
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyTreatyCheck {
    pub party: usize,
    pub response: TreatyResponse,
    /// `Qbar/N < -(beta - sqrt(beta^2 + 2cX))/c`.
    pub punishes_defection: bool,
    pub treaty_payoff: f64,
    /// Payoff from abating nothing while the others supply the treaty response.
    pub defection_payoff: f64,
    /// Payoff from the best abatement level against the treaty response.
    pub best_defection_payoff: f64,
    /// `punishes_defection` agrees with `treaty_payoff > defection_payoff`.
    pub payoff_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatyAnalysis {
    pub nash: NashAnalysis,
    pub responses: Vec<PartyTreatyCheck>,
    pub self_enforcing: bool,
    /// No party gains by defecting to any abatement level against the treaty response.
    pub defection_unprofitable: bool,
}

pub fn self_enforcing_check(
    s: &Scenario,
    t: &TaxSchedule,
    variant: CoefficientVariant,
) -> Result<TreatyAnalysis> {
    let qbar = required_abatement(s, t, AbatementMode::Responsive)?;
    self_enforcing_check_at(s, t, variant, qbar)
}

pub fn self_enforcing_check_at(
    s: &Scenario,
    t: &TaxSchedule,
    variant: CoefficientVariant,
    qbar: f64,
) -> Result<TreatyAnalysis> {
    let nash = nash_abatement_at(s, t, variant, qbar)?;
    let burden = nash.per_party_burden;
    let c = s.abatement_cost;
    let responses: Vec<PartyTreatyCheck> = nash
        .coefficients
        .iter()
        .map(|k| {
            let response = treaty_response(s, k, qbar);
            let root = (k.beta * k.beta + 2.0 * c * s.catastrophe_damages).sqrt();
            let punishes_defection = burden < -(k.beta - root) / c;
            let treaty_payoff = abatement_payoff(s, k, burden, qbar, qbar);
            let defection_payoff = abatement_payoff(s, k, 0.0, response.q_rest, qbar);
            let (_, best_defection_payoff) = best_deviation(s, k, response.q_rest, qbar);
            PartyTreatyCheck {
                party: k.party,
                response,
                punishes_defection,
                treaty_payoff,
                defection_payoff,
                best_defection_payoff,
                payoff_consistent: punishes_defection == (treaty_payoff > defection_payoff),
            }
        })
        .collect();
    let self_enforcing = responses.iter().all(|r| r.punishes_defection);
    let defection_unprofitable = responses
        .iter()
        .all(|r| r.treaty_payoff >= r.best_defection_payoff - 1e-12);
    Ok(TreatyAnalysis {
        nash,
        responses,
        self_enforcing,
        defection_unprofitable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaDerivative {
    /// One of `tau_ii`, `tau_ij`, `tau_ji`, `tau_jj`, `m_i`.
    pub wrt: String,
    pub finite_difference: f64,
    /// Closed-form derivative, available for two-sector scenarios.
    pub analytic: Option<f64>,
    /// Set when the closed form disagrees with the finite difference in sign or size.
    pub disagreement: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSensitivity {
    pub party: usize,
    pub partner: usize,
    pub beta: f64,
    pub derivatives: Vec<BetaDerivative>,
}

impl BetaSensitivity {
    pub fn all_negative(&self) -> bool {
        self.derivatives.iter().all(|d| d.finite_difference < 0.0)
    }
}

fn closed_form_beta(s: &Scenario, t: &TaxSchedule, party: usize) -> Result<f64> {
    Ok(closed_form(s, t, party)?.beta)
}

/// Derivatives of the closed-form `beta_i` with respect to `tau_ii`, `tau_ij`,
/// `tau_ji`, `tau_jj` and `m_i`, where `j` is the partner sector.
pub fn beta_sensitivity(
    s: &Scenario,
    t: &TaxSchedule,
    party: usize,
    partner: usize,
) -> Result<BetaSensitivity> {
    s.ensure_valid()?;
    t.check_dims(s)?;
    s.check_sector(party)?;
    s.check_sector(partner)?;
    if party == partner {
        return Err(CoreError::Domain("party and partner must differ".into()));
    }
    let (i, j) = (party, partner);
    let beta = closed_form_beta(s, t, i)?;

    let tax_fd = |sector: usize, market: usize| -> Result<f64> {
        let h = 1e-6 * t.rate(sector, market).abs().max(1.0);
        let up = closed_form_beta(s, &t.shifted(sector, market, h), i)?;
        let down = closed_form_beta(s, &t.shifted(sector, market, -h), i)?;
        Ok((up - down) / (2.0 * h))
    };
    let cost_fd = || -> Result<f64> {
        let h = 1e-6 * s.costs[i].abs().max(1.0);
        let mut up = s.clone();
        up.costs[i] += h;
        let mut down = s.clone();
        down.costs[i] -= h;
        Ok((closed_form_beta(&up, t, i)? - closed_form_beta(&down, t, i)?) / (2.0 * h))
    };
    let fd = [
        ("tau_ii", tax_fd(i, i)?),
        ("tau_ij", tax_fd(i, j)?),
        ("tau_ji", tax_fd(j, i)?),
        ("tau_jj", tax_fd(j, j)?),
        ("m_i", cost_fd()?),
    ];
    let analytic = (s.n_sectors == 2).then(|| closed_form_beta_slopes(s, t, i, j));

    let derivatives = fd
        .iter()
        .enumerate()
        .map(|(slot, (name, fd))| {
            let an = analytic.map(|a| a[slot]);
            let disagreement = an.and_then(|a| {
                let sign_flip = a.signum() != fd.signum();
                let gap = (a - fd).abs();
                (sign_flip || gap > 1e-6 * a.abs().max(fd.abs()) + 1e-12)
                    .then(|| format!("closed form {a:e} vs finite difference {fd:e}"))
            });
            BetaDerivative {
                wrt: name.to_string(),
                finite_difference: *fd,
                analytic: an,
                disagreement,
            }
        })
        .collect();
    Ok(BetaSensitivity {
        party,
        partner,
        beta,
        derivatives,
    })
}

/// Closed-form slopes `-p_i T^i`, `-p_j T^i`, `-p_i T^j`, `-p_j T^j` and the `m_i` slope.
fn closed_form_beta_slopes(s: &Scenario, t: &TaxSchedule, i: usize, j: usize) -> [f64; 5] {
    let prices = effective_prices_raw(s, t);
    let (k, d) = (s.collision_coeff, s.debris_per_sat);
    let kd = k * d;
    let (ai, aj) = (prices[i], prices[j]);
    let (mi, mj) = (s.costs[i], s.costs[j]);
    let (bi, bj) = (kd * ai + mi, kd * aj + mj);
    let mix = kd * mj * ai + mi * bj;
    let ti = 2.0 * k.powi(3) * d * mi * mj * mj * ai * ai * (3.0 * mi * aj + kd * ai * (3.0 * mj + kd * aj))
        / (bi.powi(3) * bj * mix * mix);
    let tj = 2.0 * k.powi(4) * d * d * mj * mj * ai.powi(3) * (kd * mj * ai + 2.0 * mi * bj)
        / (ai * aj * mix).powi(2);
    let dm = -2.0 * k.powi(3) * d * mj * mj * ai.powi(3) * (3.0 * mi * bj + kd * ai * (3.0 * mj + kd * aj))
        / (bi.powi(3) * bj * mix * mix);
    let (pi, pj) = (s.prices[i], s.prices[j]);
    [-pi * ti, -pj * ti, -pi * tj, -pj * tj, dm]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreatySupport {
    /// d/d tau_ij of `beta_i Qbar/N + c (Qbar/N)^2 / 2`.
    pub aversion_slope: f64,
    /// d/d tau_ij of `-Qbar/N - (beta_i - sqrt(beta_i^2 + 2cX))/c`.
    pub defection_slope: f64,
    /// `sqrt(beta_i^2 + 2cX) - c beta_i > 0`.
    pub side_condition: bool,
    pub beta: f64,
    pub qbar: f64,
}

/// Tax slopes of the two treaty margins using the closed-form `beta_i`.
pub fn treaty_support_check(
    s: &Scenario,
    t: &TaxSchedule,
    party: usize,
    market: usize,
) -> Result<TreatySupport> {
    s.ensure_valid()?;
    t.check_dims(s)?;
    s.check_sector(party)?;
    s.check_market(market)?;
    let n = s.parties() as f64;
    let (c, x) = (s.abatement_cost, s.catastrophe_damages);
    let margins = |tt: &TaxSchedule| -> Result<(f64, f64)> {
        let beta = closed_form_beta(s, tt, party)?;
        let qbar = required_abatement(s, tt, AbatementMode::Responsive)?;
        let burden = qbar / n;
        let aversion = beta * burden + 0.5 * c * burden * burden;
        let defection = -burden - (beta - (beta * beta + 2.0 * c * x).sqrt()) / c;
        Ok((aversion, defection))
    };
    let h = 1e-6 * t.rate(party, market).abs().max(1.0);
    let up = margins(&t.shifted(party, market, h))?;
    let down = margins(&t.shifted(party, market, -h))?;
    let beta = closed_form_beta(s, t, party)?;
    let qbar = required_abatement(s, t, AbatementMode::Responsive)?;
    Ok(TreatySupport {
        aversion_slope: (up.0 - down.0) / (2.0 * h),
        defection_slope: (up.1 - down.1) / (2.0 * h),
        side_condition: (beta * beta + 2.0 * c * x).sqrt() - c * beta > 0.0,
        beta,
        qbar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sym2_coeffs(variant: CoefficientVariant) -> BenefitCoefficients {
        let s = Scenario::sym2();
        benefit_coefficients(&s, &TaxSchedule::zeros_for(&s), 0, variant).unwrap()
    }

    #[test]
    fn sym2_coefficients() {
        let m = sym2_coeffs(CoefficientVariant::ModelDerived);
        assert_abs_diff_eq!(m.alpha, 20.0 / 49.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.beta, -2.0 / 49.0, epsilon = 1e-12);
        assert!(m.fit_residual.unwrap() < 1e-10);

        let p = sym2_coeffs(CoefficientVariant::ClosedForm);
        assert_abs_diff_eq!(p.alpha, 125.0 / 630.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.beta, 0.0066138, epsilon = 1e-7);
    }

    #[test]
    fn no_collisions_no_benefit() {
        let s = Scenario {
            collision_coeff: 0.0,
            ..Scenario::sym2()
        };
        let c = benefit_coefficients(&s, &TaxSchedule::zeros_for(&s), 1, CoefficientVariant::ModelDerived)
            .unwrap();
        assert_eq!((c.alpha, c.beta), (0.0, 0.0));
    }

    #[test]
    fn divergence_report_for_sym2() {
        let s = Scenario::sym2();
        let rep = coefficient_divergence(&s, &TaxSchedule::zeros_for(&s)).unwrap();
        assert_eq!(rep.len(), 2);
        assert!(rep.iter().all(|r| r.diverges));
    }

    #[test]
    fn payoff_examples() {
        let s = Scenario::sym2();
        let m = sym2_coeffs(CoefficientVariant::ModelDerived);
        assert_abs_diff_eq!(abatement_payoff(&s, &m, 0.6, 1.2, 1.2), 0.457142857 - 0.18, epsilon = 1e-8);
        assert_abs_diff_eq!(abatement_payoff(&s, &m, 0.0, 0.0, 1.2), 20.0 / 49.0 - 1.0, epsilon = 1e-12);
        assert_eq!(abatement_payoff(&s, &m, 0.0, 1.2, 1.2), m.marginal_benefit(1.2));
    }

    #[test]
    fn nash_with_model_coefficients() {
        let s = Scenario::sym2();
        let nash = nash_abatement(&s, &TaxSchedule::zeros_for(&s), CoefficientVariant::ModelDerived).unwrap();
        assert_abs_diff_eq!(nash.qbar, 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(nash.no_defection_bound, -2.0 / 49.0 * 0.6 + 0.18, epsilon = 1e-10);
        assert!(nash.averting_sustainable);
        let equal = AbatementProfile::uniform(2, 0.6).unwrap();
        assert!(nash.nash_equilibria.iter().any(|p| p.contributions.iter().all(|q| (q - 0.6).abs() < 1e-12)));
        // beta < 0: a lone party would rather abate than sit at zero.
        let zero = nash.candidates.iter().find(|c| c.label == "all-zero").unwrap();
        assert!(!zero.certified);
        let _ = equal;
    }

    #[test]
    fn nash_with_closed_form_coefficients() {
        let s = Scenario::sym2();
        let nash =
            nash_abatement(&s, &TaxSchedule::zeros_for(&s), CoefficientVariant::ClosedForm).unwrap();
        assert_abs_diff_eq!(nash.no_defection_bound, 0.0066138 * 0.6 + 0.18, epsilon = 1e-7);
        let labels: Vec<&str> = nash
            .candidates
            .iter()
            .filter(|c| c.certified)
            .map(|c| c.label.as_str())
            .collect();
        // X = 1 exceeds the cost of averting alone, so zero is not stable either.
        assert_eq!(labels, vec!["equal-split"]);
    }

    #[test]
    fn small_damages_leave_only_non_averting_profiles() {
        let s = Scenario {
            catastrophe_damages: 0.01,
            ..Scenario::sym2()
        };
        let t = TaxSchedule::zeros_for(&s);
        for variant in CoefficientVariant::ALL {
            let nash = nash_abatement(&s, &t, variant).unwrap();
            assert!(!nash.averting_sustainable);
            for p in &nash.nash_equilibria {
                assert!(p.total < nash.qbar);
            }
            assert_eq!(nash.nash_equilibria.len(), 1, "{variant:?}");
        }
    }

    #[test]
    fn treaty_response_examples() {
        let s = Scenario::sym2();
        let m = sym2_coeffs(CoefficientVariant::ModelDerived);
        let r = treaty_response(&s, &m, 1.2);
        assert_abs_diff_eq!(r.raw, 1.2 - 2.0 / 49.0 - (4.0 / 2401.0 + 2.0f64).sqrt(), epsilon = 1e-14);
        assert!(r.clamped);
        assert_eq!(r.q_rest, 0.0);

        let p = sym2_coeffs(CoefficientVariant::ClosedForm);
        let r = treaty_response(&s, &p, 1.2);
        let expected = 1.2 + p.beta - (p.beta * p.beta + 2.0).sqrt();
        assert_abs_diff_eq!(r.raw, expected, epsilon = 1e-14);
        assert_abs_diff_eq!(r.raw, -0.2076153, epsilon = 1e-7);

        let calm = Scenario {
            catastrophe_damages: 0.0,
            ..Scenario::sym2()
        };
        assert_eq!(treaty_response(&calm, &p, 1.2).q_rest, 1.2);
        let r = treaty_response(&calm, &m, 1.2);
        assert_abs_diff_eq!(r.raw, 1.2 - 4.0 / 49.0, epsilon = 1e-12);
    }

    #[test]
    fn unclamped_response_is_indifferent() {
        let s = Scenario {
            catastrophe_damages: 0.05,
            ..Scenario::sym2()
        };
        let m = sym2_coeffs(CoefficientVariant::ModelDerived);
        let r = treaty_response(&s, &m, 1.2);
        assert!(!r.clamped);
        assert!(indifference_residual(&s, &m, 1.2, r.q_rest).abs() < 1e-12);
    }

    #[test]
    fn self_enforcing_examples() {
        let s = Scenario::sym2();
        let t = TaxSchedule::zeros_for(&s);
        for variant in CoefficientVariant::ALL {
            let a = self_enforcing_check(&s, &t, variant).unwrap();
            assert!(a.self_enforcing);
            assert!(a.responses.iter().all(|r| r.payoff_consistent));
        }
        let costly = Scenario {
            abatement_cost: 100.0,
            ..Scenario::sym2()
        };
        let a = self_enforcing_check(&costly, &t, CoefficientVariant::ModelDerived).unwrap();
        assert!(!a.self_enforcing);
        assert!(a.responses.iter().all(|r| r.payoff_consistent));
    }

    #[test]
    fn beta_slopes_in_sym2() {
        let s = Scenario::sym2();
        let b = beta_sensitivity(&s, &TaxSchedule::zeros_for(&s), 0, 1).unwrap();
        let fd: Vec<f64> = b.derivatives.iter().map(|d| d.finite_difference).collect();
        // Own-side slopes fall; raising the partner's taxes raises beta_i.
        assert!(fd[0] < 0.0 && fd[1] < 0.0 && fd[4] < 0.0, "{fd:?}");
        assert!(fd[2] > 0.0 && fd[3] > 0.0, "{fd:?}");
        assert!(b.derivatives.iter().any(|d| d.disagreement.is_some()));
    }

    #[test]
    fn beta_slopes_vanish_without_collisions() {
        let s = Scenario {
            collision_coeff: 0.0,
            ..Scenario::sym2()
        };
        let b = beta_sensitivity(&s, &TaxSchedule::zeros_for(&s), 0, 1).unwrap();
        assert!(b.derivatives.iter().all(|d| d.finite_difference == 0.0));
    }

    #[test]
    fn treaty_support_in_sym2() {
        let s = Scenario::sym2();
        let sup = treaty_support_check(&s, &TaxSchedule::zeros_for(&s), 0, 1).unwrap();
        assert!(sup.side_condition);
        assert!(sup.aversion_slope < 0.0, "{sup:?}");
        assert!(sup.defection_slope > 0.0, "{sup:?}");
    }

    #[test]
    fn treaty_support_flat_when_nothing_to_avert() {
        let s = Scenario::solo();
        let sup = treaty_support_check(&s, &TaxSchedule::zeros_for(&s), 0, 0).unwrap();
        assert_eq!(sup.qbar, 0.0);
        assert_eq!((sup.aversion_slope, sup.defection_slope), (0.0, 0.0));
    }
}
