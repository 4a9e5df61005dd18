//! Seeded random scenarios for property checks.
//!
//! Draw ranges: `p, m ∈ [0.1, 10]`, `k ∈ [0, 0.3]`, `d ∈ [0.5, 2]`,
//! `D0 ∈ [0, 8]`, `Dbar ∈ [0.5, 10]`, `X ∈ [0, 2]`, `c ∈ [0.1, 5]`, and
//! `n_markets ∈ [n_sectors, n_sectors + 2]`. Draws violating the no-seizure
//! or abatement-bound assumptions, or giving survival outside `[0, 1]`, are
//! rejected and redrawn.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::open_access::{check_assumptions, solve_equilibrium};
use crate::scenario::{Scenario, TaxSchedule};

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub sectors: RangeInclusive<usize>,
    /// Taxes are drawn uniformly from `[0, max_tax]`; zero gives the untaxed baseline.
    pub max_tax: f64,
    /// Require every sector to hold a positive fleet at `Q = 0`.
    pub interior: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            sectors: 1..=6,
            max_tax: 0.0,
            interior: false,
        }
    }
}

/// A draw together with the number of rejected attempts before it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub scenario: Scenario,
    pub taxes: TaxSchedule,
    pub rejected: usize,
}

pub struct ScenarioSampler {
    rng: ChaCha8Rng,
    cfg: SamplerConfig,
}

impl ScenarioSampler {
    pub fn new(seed: u64, cfg: SamplerConfig) -> Self {
        ScenarioSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
        }
    }

    fn propose(&mut self) -> (Scenario, TaxSchedule) {
        let rng = &mut self.rng;
        let ns = rng.gen_range(self.cfg.sectors.clone());
        let nm = ns + rng.gen_range(0..=2);
        let s = Scenario {
            n_markets: nm,
            n_sectors: ns,
            prices: (0..nm).map(|_| rng.gen_range(0.1..=10.0)).collect(),
            costs: (0..ns).map(|_| rng.gen_range(0.1..=10.0)).collect(),
            collision_coeff: rng.gen_range(0.0..=0.3),
            debris_per_sat: rng.gen_range(0.5..=2.0),
            legacy_debris: rng.gen_range(0.0..=8.0),
            catastrophe_threshold: rng.gen_range(0.5..=10.0),
            catastrophe_damages: rng.gen_range(0.0..=2.0),
            abatement_cost: rng.gen_range(0.1..=5.0),
            treaty_parties: None,
        };
        let max_tax = self.cfg.max_tax;
        let rates = (0..ns)
            .map(|_| {
                (0..nm)
                    .map(|_| if max_tax > 0.0 { rng.gen_range(0.0..=max_tax) } else { 0.0 })
                    .collect()
            })
            .collect();
        let t = TaxSchedule::new(rates).expect("taxes drawn inside [0, 1]");
        (s, t)
    }

    fn acceptable(&self, s: &Scenario, t: &TaxSchedule) -> bool {
        let Ok(flags) = check_assumptions(s, t) else {
            return false;
        };
        if !flags.all_hold() {
            return false;
        }
        match solve_equilibrium(s, t, 0.0) {
            Ok(eq) => !self.cfg.interior || eq.is_interior(),
            Err(_) => false,
        }
    }

    pub fn draw(&mut self) -> Sample {
        let mut rejected = 0;
        loop {
            let (scenario, taxes) = self.propose();
            if self.acceptable(&scenario, &taxes) {
                return Sample {
                    scenario,
                    taxes,
                    rejected,
                };
            }
            rejected += 1;
        }
    }

    pub fn batch(&mut self, count: usize) -> Vec<Sample> {
        (0..count).map(|_| self.draw()).collect()
    }
}

pub fn sample_batch(seed: u64, count: usize, cfg: SamplerConfig) -> Vec<Sample> {
    ScenarioSampler::new(seed, cfg).batch(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_batch() {
        let cfg = SamplerConfig {
            max_tax: 0.6,
            ..SamplerConfig::default()
        };
        assert_eq!(sample_batch(7, 20, cfg.clone()), sample_batch(7, 20, cfg));
    }

    #[test]
    fn draws_respect_filters() {
        let cfg = SamplerConfig {
            sectors: 3..=6,
            max_tax: 0.6,
            interior: true,
        };
        for sample in sample_batch(11, 50, cfg) {
            let s = &sample.scenario;
            assert!((3..=6).contains(&s.n_sectors));
            assert!(s.n_markets >= s.n_sectors && s.n_markets <= s.n_sectors + 2);
            assert!(check_assumptions(s, &sample.taxes).unwrap().all_hold());
            assert!(solve_equilibrium(s, &sample.taxes, 0.0).unwrap().is_interior());
        }
    }
}
