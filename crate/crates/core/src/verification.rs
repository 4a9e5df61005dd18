//! Property suites over seeded scenario batches, each checked against the
//! brute-force references in [`crate::oracle`]. Shared by the acceptance tests
//! and the `verify` command.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::open_access::{
    mixed_second_difference, reduce_two_player, required_abatement, sensitivities,
    solve_equilibrium, AbatementMode, SensitivityMethod,
};
use crate::oracle::{
    deviation_search_abatement, finite_difference_five_point, iterate_open_access, OracleReport,
};
use crate::regulation::{
    check_assumption_three, market_welfare_raw, national_welfare, regulatory_equilibrium,
    welfare_channels,
};
use crate::sampling::{sample_batch, Sample, SamplerConfig};
use crate::scenario::{debris_stock, effective_prices, Scenario, TaxSchedule};
use crate::treaty::{
    abatement_payoff, beta_sensitivity, coefficient_divergence, indifference_residual,
    self_enforcing_check_at, treaty_support_check, CoefficientVariant,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub id: u8,
    pub title: String,
    pub scenarios: usize,
    pub parts: Vec<OracleReport>,
    pub elapsed_secs: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.parts.iter().all(|p| p.passed)
    }

    pub fn part(&self, target: &str) -> Option<&OracleReport> {
        self.parts.iter().find(|p| p.target == target)
    }
}

/// Batch sizes for every suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSizes {
    pub equilibrium: usize,
    pub reduction: usize,
    pub signs: usize,
    pub channels: usize,
    /// Zero-tax draws scanned for scenarios satisfying the tax-incentive condition.
    pub assumption_three_draws: usize,
    pub regulation: usize,
    pub treaty: usize,
    pub beta: usize,
}

impl BatchSizes {
    pub fn acceptance() -> Self {
        BatchSizes {
            equilibrium: 1000,
            reduction: 500,
            signs: 1000,
            channels: 200,
            assumption_three_draws: 4000,
            regulation: 6,
            treaty: 200,
            beta: 500,
        }
    }

    pub fn quick() -> Self {
        BatchSizes {
            equilibrium: 100,
            reduction: 50,
            signs: 100,
            channels: 20,
            assumption_three_draws: 400,
            regulation: 2,
            treaty: 20,
            beta: 50,
        }
    }
}

fn timed<F>(id: u8, title: &str, f: F) -> SuiteReport
where
    F: FnOnce() -> (usize, Vec<OracleReport>),
{
    let start = Instant::now();
    let (scenarios, parts) = f();
    SuiteReport {
        id,
        title: title.to_string(),
        scenarios,
        parts,
        elapsed_secs: start.elapsed().as_secs_f64(),
    }
}

/// Runs `check` on every sample in parallel and merges the per-sample
/// reports in sample order.
fn run_batch<F>(samples: &[Sample], templates: &[OracleReport], check: F) -> Vec<OracleReport>
where
    F: Fn(usize, &Sample, &mut [OracleReport]) + Sync,
{
    let local: Vec<Vec<OracleReport>> = samples
        .par_iter()
        .enumerate()
        .map(|(idx, sample)| {
            let mut parts = templates.to_vec();
            check(idx, sample, &mut parts);
            parts
        })
        .collect();
    let mut merged = templates.to_vec();
    for parts in local {
        for (into, from) in merged.iter_mut().zip(parts) {
            into.merge(from);
        }
    }
    merged
}

fn fail(report: &mut OracleReport, input: String, err: impl std::fmt::Display) {
    report.check(format!("{input}: {err}"), false);
}

fn profit_residual(s: &Scenario, t: &TaxSchedule, fleets: &[f64], abatement: f64) -> Result<f64> {
    let prices = effective_prices(s, t)?;
    let total: f64 = fleets.iter().sum();
    let survival = debris_stock(s, total, abatement).survival;
    Ok((0..s.n_sectors)
        .map(|i| {
            let y = survival * prices[i] - s.costs[i] * fleets[i];
            if fleets[i] > 0.0 {
                y.abs()
            } else {
                y.max(0.0)
            }
        })
        .fold(0.0, f64::max))
}

fn check_equilibrium(
    s: &Scenario,
    t: &TaxSchedule,
    abatement: f64,
    tag: &str,
    parts: &mut [OracleReport],
) {
    let eq = match solve_equilibrium(s, t, abatement) {
        Ok(eq) => eq,
        Err(e) => return fail(&mut parts[0], tag.to_string(), e),
    };
    match profit_residual(s, t, &eq.fleets, abatement) {
        Ok(y) => parts[0].record(format!("{tag}: max |Y_i|"), 0.0, y),
        Err(e) => fail(&mut parts[0], tag.to_string(), e),
    }
    match iterate_open_access(s, t, abatement) {
        Ok(reference) => {
            for (i, (a, b)) in reference.iter().zip(&eq.fleets).enumerate() {
                parts[1].record(format!("{tag}: S_{i}"), *a, *b);
            }
        }
        Err(e) => fail(&mut parts[1], tag.to_string(), e),
    }
}

pub fn equilibrium_suite(seed: u64, count: usize) -> SuiteReport {
    timed(1, "open-access equilibrium vs best-response iteration", || {
        let cfg = SamplerConfig {
            sectors: 1..=6,
            max_tax: 0.6,
            interior: false,
        };
        let samples = sample_batch(seed, count, cfg);
        let templates = [
            OracleReport::new("profit residual", 1e-9),
            OracleReport::new("iteration agreement", 1e-9),
        ];
        let parts = run_batch(&samples, &templates, |idx, smp, parts| {
            check_equilibrium(&smp.scenario, &smp.taxes, 0.0, &format!("scenario {idx}"), parts)
        });
        (samples.len(), parts)
    })
}

fn reduction_batch(seed: u64, count: usize) -> Vec<Sample> {
    let cfg = SamplerConfig {
        sectors: 3..=6,
        max_tax: 0.6,
        interior: false,
    };
    sample_batch(seed, count, cfg)
}

pub fn reduction_suite(seed: u64, count: usize) -> SuiteReport {
    timed(2, "two-player reduction", || {
        let samples = reduction_batch(seed, count);
        let templates = [OracleReport::new("reduced fleets", 1e-9)];
        let parts = run_batch(&samples, &templates, |idx, smp, parts| {
            for i in 0..smp.scenario.n_sectors {
                let tag = format!("scenario {idx}, sector {i}");
                match reduce_two_player(&smp.scenario, &smp.taxes, 0.0, i) {
                    Ok(red) => {
                        parts[0].record(format!("{tag}: S_i"), red.full_fleets[0], red.equilibrium.fleets[0]);
                        parts[0].record(format!("{tag}: S_-i"), red.full_fleets[1], red.equilibrium.fleets[1]);
                    }
                    Err(e) => fail(&mut parts[0], tag, e),
                }
            }
        });
        (samples.len(), parts)
    })
}

/// Abatement levels where the survival factor stays inside `[0, 1]`.
fn invariance_levels(s: &Scenario) -> [f64; 3] {
    let d0 = s.legacy_debris;
    [0.0, 0.5 * d0, d0]
}

pub fn decomposition_suite(seed: u64, count: usize) -> SuiteReport {
    timed(3, "sigma-r decomposition", || {
        let samples = reduction_batch(seed, count);
        let templates = [
            OracleReport::new("r invariant in Q (bitwise)", f64::MIN_POSITIVE),
            OracleReport::new("S = sigma * r", 1e-12),
        ];
        let parts = run_batch(&samples, &templates, |idx, smp, parts| {
            let s = &smp.scenario;
            let mut base: Option<Vec<f64>> = None;
            for q in invariance_levels(s) {
                let tag = format!("scenario {idx}, Q = {q}");
                let eq = match solve_equilibrium(s, &smp.taxes, q) {
                    Ok(eq) => eq,
                    Err(e) => {
                        fail(&mut parts[1], tag, e);
                        continue;
                    }
                };
                for i in 0..s.n_sectors {
                    parts[1].record(format!("{tag}: S_{i}"), eq.fleets[i], eq.sigma[i] * eq.r[i]);
                }
                match &base {
                    None => base = Some(eq.r.clone()),
                    Some(r0) => {
                        let same = r0.iter().zip(&eq.r).all(|(a, b)| a.to_bits() == b.to_bits());
                        parts[0].check(tag, same);
                    }
                }
            }
        });
        (samples.len(), parts)
    })
}

pub fn sign_suite(seed: u64, count: usize) -> SuiteReport {
    timed(4, "comparative-statics signs", || {
        let cfg = SamplerConfig {
            sectors: 1..=6,
            max_tax: 0.6,
            interior: true,
        };
        let samples = sample_batch(seed, count, cfg);
        let templates = [
            OracleReport::new("dS_i/dtau_ij < 0", 0.0),
            OracleReport::new("dS_l/dtau_ij > 0", 0.0),
            OracleReport::new("-dS_i/dtau_ij exceeds cross effects", 0.0),
            OracleReport::new("dS_i/dQ > 0", 0.0),
            OracleReport::new("d2S_i/dQ dtau_ij < 0", 0.0),
            OracleReport::new("dD/dQ < 0", 0.0),
            OracleReport::new("dQbar/dtau_ij < 0", 0.0),
        ];
        let parts = run_batch(&samples, &templates, |idx, smp, parts| {
            let (s, t) = (&smp.scenario, &smp.taxes);
            let fd = match sensitivities(s, t, 0.0, SensitivityMethod::FiniteDifference) {
                Ok(fd) => fd,
                Err(e) => return fail(&mut parts[0], format!("scenario {idx}"), e),
            };
            for i in 0..s.n_sectors {
                parts[3].check(format!("scenario {idx}, S_{i}"), fd.ds_dq[i] > 0.0);
                for j in 0..s.n_markets {
                    let tag = format!("scenario {idx}, tau_{i}{j}");
                    let own = fd.ds_dtau[i][i][j];
                    parts[0].check(tag.clone(), own < 0.0);
                    let mut cross_total = 0.0;
                    for l in (0..s.n_sectors).filter(|&l| l != i) {
                        let cross = fd.ds_dtau[l][i][j];
                        cross_total += cross;
                        parts[1].check(format!("{tag}, S_{l}"), cross > 0.0);
                        parts[2].check(format!("{tag}, S_{l}"), -own > cross);
                    }
                    parts[2].check(format!("{tag}, total"), -own > cross_total);
                    match mixed_second_difference(s, t, 0.0, i, i, j) {
                        Ok(v) => parts[4].check(tag.clone(), v < 0.0),
                        Err(e) => fail(&mut parts[4], tag.clone(), e),
                    }
                    parts[6].check(tag, fd.dqbar_dtau[i][j] < 0.0);
                }
            }
            parts[5].check(format!("scenario {idx}"), fd.dd_dq < 0.0);
        });
        (samples.len(), parts)
    })
}

/// Equilibrium debris from the iteration oracle.
fn oracle_debris(s: &Scenario, t: &TaxSchedule, q: f64) -> Result<f64> {
    let fleets = iterate_open_access(s, t, q)?;
    Ok(s.debris_per_sat * fleets.iter().sum::<f64>() + s.legacy_debris - q)
}

fn oracle_welfare(s: &Scenario, t: &TaxSchedule, q: f64, market: usize) -> Result<f64> {
    let fleets = iterate_open_access(s, t, q)?;
    let total: f64 = fleets.iter().sum();
    let debris = s.debris_per_sat * total + s.legacy_debris - q;
    let value: f64 = fleets
        .iter()
        .enumerate()
        .map(|(i, si)| (1.0 - t.rate(i, market)) * si)
        .sum();
    Ok((1.0 - s.collision_coeff * debris) * s.prices[market] * value)
}

/// Root of `D(Q) = Dbar` by bisection on the iteration oracle.
fn oracle_qbar(s: &Scenario, t: &TaxSchedule) -> Result<f64> {
    let gap = |q: f64| oracle_debris(s, t, q).map(|d| d - s.catastrophe_threshold);
    if gap(0.0)? <= 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while gap(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn reference_suite() -> SuiteReport {
    timed(5, "two-nation reference values", || {
        let s = Scenario::sym2();
        let t = TaxSchedule::zeros_for(&s);
        let mut lib = OracleReport::new("solver vs exact", 1e-9);
        let mut ora = OracleReport::new("oracle vs exact", 1e-9);
        let exact_fleet = 10.0 / 7.0;
        let exact_welfare = 100.0 / 49.0;

        match solve_equilibrium(&s, &t, 0.0) {
            Ok(eq) => {
                for (i, v) in eq.fleets.iter().enumerate() {
                    lib.record(format!("S_{i}"), exact_fleet, *v);
                }
                lib.record("D", 20.0 / 7.0, eq.debris.stock);
            }
            Err(e) => fail(&mut lib, "equilibrium".into(), e),
        }
        match national_welfare(&s, &t, 0.0) {
            Ok(w) => {
                for (j, v) in w.welfare.iter().enumerate() {
                    lib.record(format!("W_{j}"), exact_welfare, *v);
                }
            }
            Err(e) => fail(&mut lib, "welfare".into(), e),
        }
        match required_abatement(&s, &t, AbatementMode::Responsive) {
            Ok(q) => lib.record("Qbar", 1.2, q),
            Err(e) => fail(&mut lib, "Qbar".into(), e),
        }
        match coefficient_divergence(&s, &t) {
            Ok(rows) => {
                for row in rows {
                    lib.record(format!("alpha_{}", row.party), 20.0 / 49.0, row.model.alpha);
                    lib.record(format!("beta_{}", row.party), -2.0 / 49.0, row.model.beta);
                }
            }
            Err(e) => fail(&mut lib, "coefficients".into(), e),
        }

        let mut oracle_checks = || -> Result<()> {
            let fleets = iterate_open_access(&s, &t, 0.0)?;
            for (i, v) in fleets.iter().enumerate() {
                ora.record(format!("S_{i}"), exact_fleet, *v);
            }
            ora.record("D", 20.0 / 7.0, oracle_debris(&s, &t, 0.0)?);
            for j in 0..s.n_markets {
                ora.record(format!("W_{j}"), exact_welfare, oracle_welfare(&s, &t, 0.0, j)?);
            }
            ora.record("Qbar", 1.2, oracle_qbar(&s, &t)?);
            for j in 0..s.n_markets {
                let w: Vec<f64> = [0.0, 1.0, 2.0]
                    .iter()
                    .map(|&q| oracle_welfare(&s, &t, q, j))
                    .collect::<Result<_>>()?;
                let alpha = (-3.0 * w[0] + 4.0 * w[1] - w[2]) / 2.0;
                let beta = -(w[2] - 2.0 * w[1] + w[0]);
                ora.record(format!("alpha_{j}"), 20.0 / 49.0, alpha);
                ora.record(format!("beta_{j}"), -2.0 / 49.0, beta);
            }
            Ok(())
        };
        if let Err(e) = oracle_checks() {
            fail(&mut ora, "oracle".into(), e);
        }
        (1, vec![lib, ora])
    })
}

fn welfare_slope(s: &Scenario, t: &TaxSchedule, sector: usize, market: usize) -> Result<f64> {
    let base = t.rate(sector, market);
    finite_difference_five_point(
        |x: &[f64]| {
            let tt = t.shifted(sector, market, x[0] - base);
            Ok(national_welfare(s, &tt, 0.0)?.welfare[market])
        },
        &[base],
        0,
    )
}

pub fn channel_suite(seed: u64, count: usize) -> SuiteReport {
    timed(6, "welfare channel identity", || {
        let cfg = SamplerConfig {
            sectors: 1..=6,
            max_tax: 0.6,
            interior: true,
        };
        let samples = sample_batch(seed, count, cfg);
        let templates = [OracleReport::new("cleanup + expansion - reduction vs FD", 1e-9)
            .with_note("fourth-order central difference, step 1e-3")];
        let parts = run_batch(&samples, &templates, |idx, smp, parts| {
            let (s, t) = (&smp.scenario, &smp.taxes);
            for i in 0..s.n_sectors {
                for j in 0..s.n_markets {
                    let tag = format!("scenario {idx}, tau_{i}{j}");
                    match (welfare_channels(s, t, 0.0, i, j), welfare_slope(s, t, i, j)) {
                        (Ok(ch), Ok(fd)) => parts[0].record(tag, fd, ch.total),
                        (Err(e), _) | (_, Err(e)) => fail(&mut parts[0], tag, e),
                    }
                }
            }
        });
        (samples.len(), parts)
    })
}

/// Draws zero-tax scenarios, keeps those where the tax-incentive condition holds for every
/// (sector, market) pair, and checks that each untaxed welfare slope is positive.
/// Then runs regulatory equilibria and probes them for unilateral deviations.
pub fn welfare_sign_suite(seed: u64, draws: usize, regulation: usize) -> SuiteReport {
    timed(7, "tax incentives at zero taxes", || {
        let cfg = SamplerConfig {
            sectors: 1..=3,
            max_tax: 0.0,
            interior: true,
        };
        let samples = sample_batch(seed, draws, cfg);
        let flags: Vec<Option<(bool, bool)>> = samples
            .par_iter()
            .map(|smp| {
                let s = &smp.scenario;
                let mut stated = true;
                let mut exact = true;
                for i in 0..s.n_sectors {
                    for j in 0..s.n_markets {
                        let a3 = check_assumption_three(s, 0.0, i, j).ok()?;
                        stated &= a3.holds;
                        exact &= a3.exact_holds;
                    }
                }
                Some((stated, exact))
            })
            .collect();
        let qualifying: Vec<usize> = (0..samples.len())
            .filter(|&k| matches!(flags[k], Some((true, _))))
            .collect();
        let exact_count = flags.iter().filter(|f| matches!(f, Some((_, true)))).count();

        let mut slopes = OracleReport::new("tax-incentive condition implies dW_j/dtau_ij > 0", 0.0)
            .with_note(format!(
                "{} of {} draws satisfy the tax-incentive condition for every pair; {} satisfy the exact sign condition",
                qualifying.len(),
                samples.len(),
                exact_count
            ));
        let local: Vec<OracleReport> = qualifying
            .par_iter()
            .map(|&idx| {
                let mut rep = OracleReport::new(slopes.target.clone(), 0.0);
                let s = &samples[idx].scenario;
                let t = TaxSchedule::zeros_for(s);
                for i in 0..s.n_sectors {
                    for j in 0..s.n_markets {
                        let tag = format!("draw {idx}, tau_{i}{j}");
                        match welfare_slope(s, &t, i, j) {
                            Ok(v) if v > 0.0 => rep.check(tag, true),
                            Ok(v) => rep.check(format!("{tag}: dW = {v:e}"), false),
                            Err(e) => fail(&mut rep, tag, e),
                        }
                    }
                }
                rep
            })
            .collect();
        for rep in local {
            slopes.merge(rep);
        }

        let mut cases = vec![
            ("solo".to_string(), Scenario::solo()),
            (
                "congested pair".to_string(),
                Scenario {
                    collision_coeff: 0.4,
                    costs: vec![0.1, 0.1],
                    ..Scenario::sym2()
                },
            ),
        ];
        let cfg = SamplerConfig {
            sectors: 1..=2,
            max_tax: 0.0,
            interior: true,
        };
        for (k, smp) in sample_batch(seed ^ 0x7e9, regulation, cfg).into_iter().enumerate() {
            cases.push((format!("random {k}"), smp.scenario));
        }
        let mut probes = OracleReport::new("regulatory equilibrium deviation gain", 1e-6);
        let results: Vec<(String, Result<(bool, f64)>)> = cases
            .par_iter()
            .map(|(name, s)| {
                let out = regulatory_equilibrium(s, 0.0, &TaxSchedule::zeros_for(s)).map(|eq| {
                    let gain = eq.probe.map(|p| p.max_gain).unwrap_or(f64::NAN);
                    (eq.converged, gain)
                });
                (name.clone(), out)
            })
            .collect();
        let mut unconverged = 0;
        for (name, out) in results {
            match out {
                Ok((true, gain)) => probes.record(name, 0.0, gain.max(0.0)),
                Ok((false, _)) => unconverged += 1,
                Err(e) => fail(&mut probes, name, e),
            }
        }
        probes = probes.with_note(format!(
            "{} regulatory runs, {unconverged} did not converge",
            cases.len()
        ));
        (samples.len(), vec![slopes, probes])
    })
}

fn treaty_batch(seed: u64, count: usize) -> Vec<(Sample, f64)> {
    let cfg = SamplerConfig {
        sectors: 1..=4,
        max_tax: 0.6,
        interior: true,
    };
    let mut sampler = crate::sampling::ScenarioSampler::new(seed, cfg);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let smp = sampler.draw();
        let s = &smp.scenario;
        if s.collision_coeff * s.catastrophe_threshold >= 1.0 {
            continue;
        }
        if let Ok(q) = required_abatement(s, &smp.taxes, AbatementMode::Responsive) {
            if q > 0.0 {
                out.push((smp, q));
            }
        }
    }
    out
}

pub fn treaty_suite(seed: u64, count: usize) -> SuiteReport {
    timed(8, "abatement treaty", || {
        let batch = treaty_batch(seed, count);
        let samples: Vec<Sample> = batch.iter().map(|(s, _)| s.clone()).collect();
        let templates = [
            OracleReport::new("welfare quadratic in Q", 1e-10),
            OracleReport::new("indifference residual", 1e-9),
            OracleReport::new("Nash profiles survive deviation search", 0.0),
            OracleReport::new("aversion condition vs payoffs", 0.0),
            OracleReport::new("defection condition vs payoffs", 0.0),
        ];
        let parts = run_batch(&samples, &templates, |idx, smp, parts| {
            let (s, t) = (&smp.scenario, &smp.taxes);
            let qbar = batch[idx].1;
            for j in 0..s.n_markets {
                let tag = format!("scenario {idx}, W_{j}");
                let w: Result<Vec<f64>> = (0..5)
                    .map(|q| market_welfare_raw(s, t, q as f64, j))
                    .collect();
                match w {
                    Ok(w) => {
                        let d0 = w[2] - 2.0 * w[1] + w[0];
                        for k in 1..3 {
                            let dk = w[k + 2] - 2.0 * w[k + 1] + w[k];
                            parts[0].record(format!("{tag}, second difference {k}"), d0, dk);
                        }
                    }
                    Err(e) => fail(&mut parts[0], tag, e),
                }
            }
            for variant in CoefficientVariant::ALL {
                let tag = format!("scenario {idx}, {}", variant.label());
                let analysis = match self_enforcing_check_at(s, t, variant, qbar) {
                    Ok(a) => a,
                    Err(e) => return fail(&mut parts[1], tag, e),
                };
                let nash = &analysis.nash;
                for (r, k) in analysis.responses.iter().zip(&nash.coefficients) {
                    if !r.response.clamped {
                        let res = indifference_residual(s, k, qbar, r.response.raw);
                        parts[1].record(format!("{tag}, party {}", r.party), 0.0, res);
                    }
                    parts[4].check(format!("{tag}, party {}", r.party), r.payoff_consistent);
                }
                for profile in &nash.nash_equilibria {
                    match deviation_search_abatement(s, &nash.coefficients, profile, qbar, 1e-3) {
                        Ok(rep) => parts[2].check(
                            format!("{tag}, profile {:?}", profile.contributions),
                            rep.passed,
                        ),
                        Err(e) => fail(&mut parts[2], tag.clone(), e),
                    }
                }
                let burden = nash.per_party_burden;
                let sym_beats_drop = nash.coefficients.iter().all(|k| {
                    abatement_payoff(s, k, burden, qbar, qbar)
                        >= abatement_payoff(s, k, 0.0, qbar - burden, qbar)
                });
                parts[3].check(tag, sym_beats_drop == nash.averting_sustainable);
            }
        });
        (samples.len(), parts)
    })
}

pub fn beta_suite(seed: u64, count: usize) -> SuiteReport {
    timed(9, "closed-form beta statics", || {
        let cfg = SamplerConfig {
            sectors: 2..=4,
            max_tax: 0.6,
            interior: true,
        };
        let samples = sample_batch(seed, count, cfg);
        let templates = [
            OracleReport::new("dbeta_i/d(tau_ii, tau_ij, m_i) < 0", 0.0),
            OracleReport::new("dbeta_i/d(tau_ji, tau_jj) < 0", 0.0),
            OracleReport::new("treaty margins improve with own taxes", 0.0),
            OracleReport::new("closed-form slopes vs FD (log only)", f64::INFINITY),
        ];
        let mut parts = run_batch(&samples, &templates, |idx, smp, parts| {
            let (s, t) = (&smp.scenario, &smp.taxes);
            let tag = format!("scenario {idx}");
            let sens = match beta_sensitivity(s, t, 0, 1) {
                Ok(sens) => sens,
                Err(e) => return fail(&mut parts[0], tag, e),
            };
            for d in &sens.derivatives {
                let slot = if d.wrt == "tau_ji" || d.wrt == "tau_jj" { 1 } else { 0 };
                parts[slot].check(
                    format!("{tag}, {} = {:e}", d.wrt, d.finite_difference),
                    d.finite_difference < 0.0,
                );
                if let Some(msg) = &d.disagreement {
                    parts[3].counterexamples.push(crate::oracle::Counterexample {
                        input: format!("{tag}, {}: {msg}", d.wrt),
                        expected: d.finite_difference,
                        got: d.analytic.unwrap_or(f64::NAN),
                    });
                }
            }
            if s.collision_coeff * s.catastrophe_threshold >= 1.0 {
                return;
            }
            for market in 0..2 {
                match treaty_support_check(s, t, 0, market) {
                    Ok(sup) if sup.side_condition && sup.qbar > 0.0 => parts[2].check(
                        format!("{tag}, tau_0{market}"),
                        sup.aversion_slope < 0.0 && sup.defection_slope > 0.0,
                    ),
                    Ok(_) => {}
                    Err(e) => fail(&mut parts[2], format!("{tag}, tau_0{market}"), e),
                }
            }
        });
        let logged = parts[3].counterexamples.len();
        parts[3].passed = true;
        parts[3].note = format!("{logged} closed-form/FD disagreements logged");
        (samples.len(), parts)
    })
}

pub fn divergence_suite(seed: u64, count: usize) -> SuiteReport {
    timed(10, "coefficient divergence report", || {
        let s = Scenario::sym2();
        let t = TaxSchedule::zeros_for(&s);
        let mut exact = OracleReport::new("two-nation divergence", 1e-12);
        match coefficient_divergence(&s, &t) {
            Ok(rows) => {
                for row in rows {
                    let p = row.party;
                    exact.record(format!("model alpha_{p}"), 20.0 / 49.0, row.model.alpha);
                    exact.record(format!("closed-form alpha_{p}"), 125.0 / 630.0, row.closed.alpha);
                    exact.record(format!("model beta_{p}"), -2.0 / 49.0, row.model.beta);
                    exact.record(format!("closed-form beta_{p}"), 5.0 / 756.0, row.closed.beta);
                    exact.check(format!("party {p} flagged divergent"), row.diverges);
                }
            }
            Err(e) => fail(&mut exact, "sym2".into(), e),
        }
        let batch = treaty_batch(seed, count);
        let samples: Vec<Sample> = batch.into_iter().map(|(s, _)| s).collect();
        let templates = [OracleReport::new("report covers every party", 0.0)];
        let mut parts = run_batch(&samples, &templates, |idx, smp, parts| {
            let s = &smp.scenario;
            match coefficient_divergence(s, &smp.taxes) {
                Ok(rows) => parts[0].check(
                    format!("scenario {idx}"),
                    rows.len() == s.parties() && rows.iter().enumerate().all(|(k, r)| r.party == k),
                ),
                Err(e) => fail(&mut parts[0], format!("scenario {idx}"), e),
            }
        });
        parts.insert(0, exact);
        (samples.len() + 1, parts)
    })
}

/// Every batch suite at the given sizes, in criterion order.
pub fn run_all(seed: u64, sizes: &BatchSizes) -> Vec<SuiteReport> {
    vec![
        equilibrium_suite(seed, sizes.equilibrium),
        reduction_suite(seed.wrapping_add(2), sizes.reduction),
        decomposition_suite(seed.wrapping_add(2), sizes.reduction),
        sign_suite(seed.wrapping_add(4), sizes.signs),
        reference_suite(),
        channel_suite(seed.wrapping_add(6), sizes.channels),
        welfare_sign_suite(seed.wrapping_add(7), sizes.assumption_three_draws, sizes.regulation),
        treaty_suite(seed.wrapping_add(8), sizes.treaty),
        beta_suite(seed.wrapping_add(9), sizes.beta),
        divergence_suite(seed.wrapping_add(8), sizes.treaty),
    ]
}

/// Oracle checks on one scenario at the given taxes and abatement.
pub fn scenario_suite(s: &Scenario, t: &TaxSchedule, abatement: f64) -> Vec<OracleReport> {
    let mut eq_parts = [
        OracleReport::new("profit residual", 1e-9),
        OracleReport::new("iteration agreement", 1e-9),
    ];
    check_equilibrium(s, t, abatement, "scenario", &mut eq_parts);
    let mut reports: Vec<OracleReport> = eq_parts.into();

    let mut decomposition = OracleReport::new("S = sigma * r", 1e-12);
    let mut channels = OracleReport::new("cleanup + expansion - reduction vs FD", 1e-9);
    match solve_equilibrium(s, t, abatement) {
        Ok(eq) => {
            for i in 0..s.n_sectors {
                decomposition.record(format!("S_{i}"), eq.fleets[i], eq.sigma[i] * eq.r[i]);
            }
            if eq.is_interior() && abatement == 0.0 {
                for i in 0..s.n_sectors {
                    for j in 0..s.n_markets {
                        let tag = format!("tau_{i}{j}");
                        match (welfare_channels(s, t, 0.0, i, j), welfare_slope(s, t, i, j)) {
                            (Ok(ch), Ok(fd)) => channels.record(tag, fd, ch.total),
                            (Err(e), _) | (_, Err(e)) => fail(&mut channels, tag, e),
                        }
                    }
                }
            } else {
                channels.note = "skipped: needs an interior equilibrium at Q = 0".into();
            }
        }
        Err(e) => fail(&mut decomposition, "equilibrium".into(), e),
    }
    reports.push(decomposition);
    reports.push(channels);

    let mut nash = OracleReport::new("Nash profiles survive deviation search", 0.0);
    let mut indifference = OracleReport::new("indifference residual", 1e-9);
    match required_abatement(s, t, AbatementMode::Responsive) {
        Ok(qbar) => {
            for variant in CoefficientVariant::ALL {
                match self_enforcing_check_at(s, t, variant, qbar) {
                    Ok(a) => {
                        for profile in &a.nash.nash_equilibria {
                            let ok = deviation_search_abatement(s, &a.nash.coefficients, profile, qbar, 1e-3)
                                .map(|r| r.passed)
                                .unwrap_or(false);
                            nash.check(format!("{}: {:?}", variant.label(), profile.contributions), ok);
                        }
                        for (r, k) in a.responses.iter().zip(&a.nash.coefficients) {
                            if !r.response.clamped {
                                let res = indifference_residual(s, k, qbar, r.response.raw);
                                indifference.record(format!("{}: party {}", variant.label(), r.party), 0.0, res);
                            }
                        }
                    }
                    Err(e) => fail(&mut nash, variant.label().into(), e),
                }
            }
        }
        Err(e) => fail(&mut nash, "Qbar".into(), e),
    }
    reports.push(nash);
    reports.push(indifference);
    reports
}
