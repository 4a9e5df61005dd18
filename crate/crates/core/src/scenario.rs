//! Model parameters and the stateless physical/economic primitives.
//!
//! Indexing convention: sector `i` is operated from nation `i`, and nation `i`
//! is also market `i`. Markets `n_sectors..n_markets` are non-spacefaring.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Immutable parameter bundle for one orbit-use economy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n_markets: usize,
    pub n_sectors: usize,
    /// Price of a unit of satellite service in each market.
    #[serde(rename = "p")]
    pub prices: Vec<f64>,
    /// Cost-efficiency parameter of each sector (launch cost `m_i S_i^2`).
    #[serde(rename = "m")]
    pub costs: Vec<f64>,
    /// Collision probability per unit of debris.
    #[serde(rename = "k")]
    pub collision_coeff: f64,
    /// Debris units per satellite lifecycle.
    #[serde(rename = "d")]
    pub debris_per_sat: f64,
    #[serde(rename = "D0")]
    pub legacy_debris: f64,
    #[serde(rename = "Dbar")]
    pub catastrophe_threshold: f64,
    #[serde(rename = "X")]
    pub catastrophe_damages: f64,
    #[serde(rename = "c")]
    pub abatement_cost: f64,
    /// Number of treaty parties; defaults to `n_markets`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treaty_parties: Option<usize>,
}

impl Scenario {
    /// One sector, one market, no collision risk.
    pub fn solo() -> Self {
        Scenario {
            n_markets: 1,
            n_sectors: 1,
            prices: vec![1.0],
            costs: vec![1.0],
            collision_coeff: 0.0,
            debris_per_sat: 1.0,
            legacy_debris: 0.0,
            catastrophe_threshold: 2.0,
            catastrophe_damages: 1.0,
            abatement_cost: 1.0,
            treaty_parties: None,
        }
    }

    /// Two symmetric spacefaring nations with `k = 0.1`.
    pub fn sym2() -> Self {
        Scenario {
            n_markets: 2,
            n_sectors: 2,
            prices: vec![1.0, 1.0],
            costs: vec![1.0, 1.0],
            collision_coeff: 0.1,
            debris_per_sat: 1.0,
            legacy_debris: 0.0,
            catastrophe_threshold: 2.0,
            catastrophe_damages: 1.0,
            abatement_cost: 1.0,
            treaty_parties: None,
        }
    }

    /// `sym2` with a legacy debris stock of 5.
    pub fn hideb() -> Self {
        Scenario {
            legacy_debris: 5.0,
            ..Scenario::sym2()
        }
    }

    pub fn parties(&self) -> usize {
        self.treaty_parties.unwrap_or(self.n_markets)
    }

    pub fn kd(&self) -> f64 {
        self.collision_coeff * self.debris_per_sat
    }

    /// `1 + k(Q - D0)`, the abatement factor shared by every intercept.
    pub fn abatement_factor(&self, abatement: f64) -> f64 {
        1.0 + self.collision_coeff * (abatement - self.legacy_debris)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_scenario(self)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(CoreError::InvalidScenario(report))
        }
    }

    pub(crate) fn check_sector(&self, i: usize) -> Result<()> {
        if i < self.n_sectors {
            Ok(())
        } else {
            Err(CoreError::IndexOutOfRange {
                what: "sector",
                index: i,
                len: self.n_sectors,
            })
        }
    }

    pub(crate) fn check_market(&self, j: usize) -> Result<()> {
        if j < self.n_markets {
            Ok(())
        } else {
            Err(CoreError::IndexOutOfRange {
                what: "market",
                index: j,
                len: self.n_markets,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations
            .iter()
            .any(|v| v.message.contains(needle) || v.field == needle)
    }

    fn push(&mut self, field: &str, message: String) {
        self.violations.push(Violation {
            field: field.to_string(),
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<&str> = self.violations.iter().map(|v| v.message.as_str()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Lists every violated scenario constraint; empty iff the scenario is valid.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut report = ValidationReport::default();

    if s.n_markets == 0 {
        report.push("n_markets", "n_markets must be >= 1".into());
    }
    if s.n_sectors == 0 {
        report.push("n_sectors", "n_sectors must be >= 1".into());
    }
    if s.n_sectors > s.n_markets {
        report.push(
            "n_sectors",
            format!(
                "n_sectors ({}) must not exceed n_markets ({})",
                s.n_sectors, s.n_markets
            ),
        );
    }
    if s.prices.len() != s.n_markets {
        report.push(
            "p",
            format!(
                "prices (p) dimension mismatch: length {} but n_markets = {}",
                s.prices.len(),
                s.n_markets
            ),
        );
    }
    if s.costs.len() != s.n_sectors {
        report.push(
            "m",
            format!(
                "costs (m) dimension mismatch: length {} but n_sectors = {}",
                s.costs.len(),
                s.n_sectors
            ),
        );
    }
    for (j, &p) in s.prices.iter().enumerate() {
        if !(p.is_finite() && p > 0.0) {
            report.push("p", format!("prices must be > 0 (p[{j}] = {p})"));
        }
    }
    for (i, &m) in s.costs.iter().enumerate() {
        if !(m.is_finite() && m > 0.0) {
            report.push("m", format!("costs must be > 0 (m[{i}] = {m})"));
        }
    }

    let nonneg = [
        ("k", s.collision_coeff),
        ("d", s.debris_per_sat),
        ("D0", s.legacy_debris),
        ("X", s.catastrophe_damages),
    ];
    for (name, v) in nonneg {
        if !(v.is_finite() && v >= 0.0) {
            report.push(name, format!("{name} must be >= 0 (got {v})"));
        }
    }
    let positive = [("Dbar", s.catastrophe_threshold), ("c", s.abatement_cost)];
    for (name, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            report.push(name, format!("{name} must be > 0 (got {v})"));
        }
    }
    if s.treaty_parties == Some(0) {
        report.push("treaty_parties", "treaty_parties must be >= 1".into());
    }
    report
}

/// Sector-by-market matrix of tax rates `tau[i][j]` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TaxSchedule {
    rates: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for TaxSchedule {
    type Error = CoreError;

    fn try_from(rates: Vec<Vec<f64>>) -> Result<Self> {
        TaxSchedule::new(rates)
    }
}

impl From<TaxSchedule> for Vec<Vec<f64>> {
    fn from(t: TaxSchedule) -> Self {
        t.rates
    }
}

impl TaxSchedule {
    pub fn new(rates: Vec<Vec<f64>>) -> Result<Self> {
        let width = rates.first().map_or(0, Vec::len);
        for row in &rates {
            if row.len() != width {
                return Err(CoreError::DimensionMismatch {
                    what: "tax schedule row",
                    expected: width,
                    got: row.len(),
                });
            }
        }
        for (i, row) in rates.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(CoreError::InvalidTax {
                        sector: i,
                        market: j,
                        value: v,
                    });
                }
            }
        }
        Ok(TaxSchedule { rates })
    }

    pub fn zeros(n_sectors: usize, n_markets: usize) -> Self {
        TaxSchedule {
            rates: vec![vec![0.0; n_markets]; n_sectors],
        }
    }

    pub fn zeros_for(s: &Scenario) -> Self {
        Self::zeros(s.n_sectors, s.n_markets)
    }


    pub fn n_sectors(&self) -> usize {
        self.rates.len()
    }

    pub fn n_markets(&self) -> usize {
        self.rates.first().map_or(0, Vec::len)
    }

    pub fn rate(&self, sector: usize, market: usize) -> f64 {
        self.rates[sector][market]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rates
    }

    pub fn column(&self, market: usize) -> Vec<f64> {
        self.rates.iter().map(|row| row[market]).collect()
    }

    pub fn with_rate(&self, sector: usize, market: usize, value: f64) -> Result<Self> {
        let mut rates = self.rates.clone();
        rates[sector][market] = value;
        TaxSchedule::new(rates)
    }

    pub fn with_column(&self, market: usize, column: &[f64]) -> Result<Self> {
        if column.len() != self.n_sectors() {
            return Err(CoreError::DimensionMismatch {
                what: "tax column",
                expected: self.n_sectors(),
                got: column.len(),
            });
        }
        let mut rates = self.rates.clone();
        for (row, &v) in rates.iter_mut().zip(column) {
            row[market] = v;
        }
        TaxSchedule::new(rates)
    }

    /// Full market denial for sector `i`.
    pub fn deny_sector(&self, sector: usize) -> Self {
        let mut rates = self.rates.clone();
        rates[sector].iter_mut().for_each(|v| *v = 1.0);
        TaxSchedule { rates }
    }

    pub(crate) fn shifted(&self, sector: usize, market: usize, delta: f64) -> Self {
        let mut rates = self.rates.clone();
        rates[sector][market] += delta;
        TaxSchedule { rates }
    }

    pub(crate) fn with_column_unchecked(&self, market: usize, column: &[f64]) -> Self {
        let mut rates = self.rates.clone();
        for (row, &v) in rates.iter_mut().zip(column) {
            row[market] = v;
        }
        TaxSchedule { rates }
    }

    pub fn check_dims(&self, s: &Scenario) -> Result<()> {
        if self.n_sectors() != s.n_sectors {
            return Err(CoreError::DimensionMismatch {
                what: "tax schedule sectors",
                expected: s.n_sectors,
                got: self.n_sectors(),
            });
        }
        if self.n_markets() != s.n_markets {
            return Err(CoreError::DimensionMismatch {
                what: "tax schedule markets",
                expected: s.n_markets,
                got: self.n_markets(),
            });
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &TaxSchedule) -> f64 {
        self.rates
            .iter()
            .flatten()
            .zip(other.rates.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `P_i = sum_j p_j (1 - tau_ij)` for every sector.
pub fn effective_prices(s: &Scenario, t: &TaxSchedule) -> Result<Vec<f64>> {
    t.check_dims(s)?;
    if s.prices.len() != s.n_markets {
        return Err(CoreError::DimensionMismatch {
            what: "prices",
            expected: s.n_markets,
            got: s.prices.len(),
        });
    }
    Ok(effective_prices_raw(s, t))
}

pub(crate) fn effective_prices_raw(s: &Scenario, t: &TaxSchedule) -> Vec<f64> {
    t.rows()
        .iter()
        .map(|row| {
            row.iter()
                .zip(&s.prices)
                .map(|(tau, p)| p * (1.0 - tau))
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalProbability {
    pub value: f64,
    /// Whether the value lies in `[0, 1]`.
    pub valid: bool,
}

pub fn survival_probability(s: &Scenario, debris: f64) -> SurvivalProbability {
    let value = 1.0 - s.collision_coeff * debris;
    SurvivalProbability {
        value,
        valid: (0.0..=1.0).contains(&value),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DebrisState {
    pub stock: f64,
    pub survival: f64,
    pub catastrophe: bool,
    pub physically_valid: bool,
}

/// Long-run debris `D = d S + D0 - Q` and the derived survival state.
pub fn debris_stock(s: &Scenario, total_fleet: f64, abatement: f64) -> DebrisState {
    let stock = s.debris_per_sat * total_fleet + s.legacy_debris - abatement;
    let survival = survival_probability(s, stock);
    DebrisState {
        stock,
        survival: survival.value,
        catastrophe: stock > s.catastrophe_threshold,
        physically_valid: survival.valid,
    }
}

/// Net profit `Y_i = (1 - kD) P_i S_i - m_i S_i^2` with `D` from the full fleet.
pub fn sector_profit(
    s: &Scenario,
    t: &TaxSchedule,
    fleets: &[f64],
    abatement: f64,
    sector: usize,
) -> Result<f64> {
    s.check_sector(sector)?;
    if fleets.len() != s.n_sectors {
        return Err(CoreError::DimensionMismatch {
            what: "fleets",
            expected: s.n_sectors,
            got: fleets.len(),
        });
    }
    let prices = effective_prices(s, t)?;
    let total: f64 = fleets.iter().sum();
    let debris = debris_stock(s, total, abatement);
    let own = fleets[sector];
    Ok(debris.survival * prices[sector] * own - s.costs[sector] * own * own)
}

/// Individual abatement contributions and their total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbatementProfile {
    pub contributions: Vec<f64>,
    pub total: f64,
}

impl AbatementProfile {
    pub fn new(contributions: Vec<f64>) -> Result<Self> {
        if let Some((i, &q)) = contributions
            .iter()
            .enumerate()
            .find(|(_, q)| !(q.is_finite() && **q >= 0.0))
        {
            return Err(CoreError::Domain(format!(
                "abatement contribution q[{i}] = {q} must be >= 0"
            )));
        }
        let total = contributions.iter().sum();
        Ok(AbatementProfile {
            contributions,
            total,
        })
    }

    pub fn uniform(parties: usize, each: f64) -> Result<Self> {
        Self::new(vec![each; parties])
    }

    /// Total abatement supplied by everyone except `party`.
    pub fn others(&self, party: usize) -> f64 {
        self.contributions
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != party)
            .map(|(_, q)| q)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_scenarios_are_valid() {
        for s in [Scenario::solo(), Scenario::sym2(), Scenario::hideb()] {
            assert!(validate_scenario(&s).is_valid(), "{s:?}");
        }
    }

    #[test]
    fn zero_cost_is_reported() {
        let s = Scenario {
            costs: vec![0.0, 1.0],
            ..Scenario::sym2()
        };
        let report = validate_scenario(&s);
        assert!(report.mentions("costs must be > 0"), "{report}");
    }

    #[test]
    fn wrong_price_length_is_a_dimension_mismatch() {
        let s = Scenario {
            prices: vec![1.0],
            ..Scenario::sym2()
        };
        let report = validate_scenario(&s);
        assert!(report.mentions("dimension mismatch"), "{report}");
        assert!(report.mentions("p"));
    }

    #[test]
    fn more_sectors_than_markets_rejected() {
        let s = Scenario {
            n_sectors: 3,
            costs: vec![1.0; 3],
            ..Scenario::sym2()
        };
        assert!(validate_scenario(&s).mentions("must not exceed"));
    }

    #[test]
    fn effective_price_examples() {
        let s = Scenario::sym2();
        let zero = TaxSchedule::zeros_for(&s);
        assert_eq!(effective_prices(&s, &zero).unwrap(), vec![2.0, 2.0]);

        let denied = zero.deny_sector(0);
        assert_eq!(effective_prices(&s, &denied).unwrap()[0], 0.0);

        let partial = zero.with_rate(0, 1, 0.5).unwrap();
        assert_eq!(effective_prices(&s, &partial).unwrap(), vec![1.5, 2.0]);
    }

    #[test]
    fn tax_outside_unit_interval_rejected() {
        assert!(matches!(
            TaxSchedule::new(vec![vec![0.0, 1.5]]),
            Err(CoreError::InvalidTax { market: 1, .. })
        ));
        assert!(TaxSchedule::new(vec![vec![0.0, 0.2], vec![0.1]]).is_err());
    }

    #[test]
    fn debris_examples() {
        let solo = Scenario::solo();
        assert_eq!(debris_stock(&solo, 1.0, 0.0).stock, 1.0);

        let s = Scenario::sym2();
        let st = debris_stock(&s, 20.0 / 7.0, 0.0);
        assert_abs_diff_eq!(st.stock, 20.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(st.survival, 5.0 / 7.0, epsilon = 1e-15);
        assert!(st.catastrophe);

        let at_threshold = debris_stock(&s, 20.0 / 7.0 * 1.12, 1.2);
        assert_abs_diff_eq!(at_threshold.stock, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn survival_flags_condition_four() {
        let solo = Scenario::solo();
        assert_eq!(survival_probability(&solo, 123.0).value, 1.0);

        let s = Scenario::sym2();
        let bad = survival_probability(&s, 11.0);
        assert_abs_diff_eq!(bad.value, -0.1, epsilon = 1e-15);
        assert!(!bad.valid);
        assert!(!debris_stock(&s, 11.0, 0.0).physically_valid);
    }

    #[test]
    fn profit_examples() {
        let solo = Scenario::solo();
        let t = TaxSchedule::zeros_for(&solo);
        assert_eq!(sector_profit(&solo, &t, &[1.0], 0.0, 0).unwrap(), 0.0);

        let s = Scenario::sym2();
        let t = TaxSchedule::zeros_for(&s);
        let eq = [10.0 / 7.0, 10.0 / 7.0];
        assert!(sector_profit(&s, &t, &eq, 0.0, 0).unwrap().abs() < 1e-12);
        assert_abs_diff_eq!(
            sector_profit(&s, &t, &[1.0, 1.0], 0.0, 1).unwrap(),
            0.6,
            epsilon = 1e-14
        );
        assert!(matches!(
            sector_profit(&s, &t, &eq, 0.0, 2),
            Err(CoreError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn abatement_profile_total() {
        let p = AbatementProfile::new(vec![0.25, 0.5, 0.125]).unwrap();
        assert!((p.total - 0.875).abs() < 1e-12);
        assert_eq!(p.others(1), 0.375);
        assert!(AbatementProfile::new(vec![-0.1]).is_err());
    }
}
