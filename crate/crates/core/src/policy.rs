//! Bright-line inspection policies.
//!
//! Every entity is inspected once per `Y`-year block at a uniformly random
//! time, on top of a stream of ad-hoc inspections spread uniformly over
//! entities and time. Inspection outcomes feed the repair kernels, and the
//! simulated event counts drive the cost trade-off between inspecting often
//! and suffering events.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, RppError};
use crate::kernels::logistic_tail;
use crate::model::{EntityRecord, Inspection, InspectionEffect, InspectionOutcome, RepairKernelParams, RppParams};
use crate::rng::{stream, Key, StreamRng};
use crate::simulate::{simulate_entity, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Bright-line period in years.
    pub y: u32,
    pub horizon_years: u32,
    pub adhoc_per_day: f64,
    pub p_type_i: f64,
    pub p_type_ii_iv: f64,
    pub p_clean: f64,
    pub days_per_year: f64,
    pub seed: u64,
    /// When set, the intensity is sampled on this grid and checked against the
    /// vulnerability floor.
    pub trace_step: Option<f64>,
}

impl PolicyConfig {
    pub fn new(y: u32, seed: u64) -> Self {
        Self {
            y,
            horizon_years: 20,
            adhoc_per_day: 3.0,
            p_type_i: 0.25,
            p_type_ii_iv: 0.25,
            p_clean: 0.5,
            days_per_year: 365.0,
            seed,
            trace_step: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.y == 0 {
            return Err(invalid("Y", "must be >= 1"));
        }
        if self.horizon_years == 0 {
            return Err(invalid("horizon_years", "must be >= 1"));
        }
        if !(self.adhoc_per_day.is_finite() && self.adhoc_per_day >= 0.0) {
            return Err(invalid("adhoc_per_day", "must be finite and >= 0"));
        }
        if !(self.days_per_year.is_finite() && self.days_per_year > 0.0) {
            return Err(invalid("days_per_year", "must be finite and > 0"));
        }
        let ps = [self.p_type_i, self.p_type_ii_iv, self.p_clean];
        if ps.iter().any(|p| !(0.0..=1.0).contains(p)) || (ps.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid("outcome probabilities", "must lie in [0, 1] and sum to 1"));
        }
        if let Some(h) = self.trace_step {
            if !(h.is_finite() && h > 0.0) {
                return Err(invalid("trace_step", "must be finite and > 0"));
            }
        }
        Ok(())
    }

    fn horizon_days(&self) -> f64 {
        f64::from(self.horizon_years) * self.days_per_year
    }

    fn block_days(&self) -> f64 {
        f64::from(self.y) * self.days_per_year
    }

    fn adhoc_count(&self, days: f64) -> usize {
        (self.adhoc_per_day * days).round() as usize
    }
}

/// Inspection days per entity over `[t0, t1)`: one targeted inspection per
/// entity in each block of length `block` starting at `t0`, plus `n_adhoc`
/// inspections on uniformly random entities. A trailing partial block of
/// fraction `f` inspects a random subset of `round(f·P)` entities.
fn schedule_window(p: usize, block: f64, t0: f64, t1: f64, n_adhoc: usize, rng: &mut StreamRng) -> Vec<Vec<f64>> {
    let mut days = vec![Vec::new(); p];
    let mut start = t0;
    while start < t1 {
        let end = (start + block).min(t1);
        let frac = (end - start) / block;
        if frac >= 1.0 - 1e-12 {
            for d in days.iter_mut() {
                d.push(rng.random_range(start..end));
            }
        } else {
            let k = ((frac * p as f64).round() as usize).min(p);
            let mut chosen = sample_indices(rng, p, k).into_vec();
            chosen.sort_unstable();
            for i in chosen {
                days[i].push(rng.random_range(start..end));
            }
        }
        start += block;
    }
    for _ in 0..n_adhoc {
        let i = rng.random_range(0..p);
        days[i].push(rng.random_range(t0..t1));
    }
    for d in days.iter_mut() {
        d.sort_by(f64::total_cmp);
    }
    days
}

/// Inspection days per entity over the horizon `[0, horizon_years·days_per_year)`.
pub fn schedule_brightline(p: usize, config: &PolicyConfig, seed: u64) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let mut rng = stream(seed, &[Key::Tag("schedule"), Key::Index(u64::from(config.y))]);
    let horizon = config.horizon_days();
    Ok(schedule_window(p, config.block_days(), 0.0, horizon, config.adhoc_count(horizon), &mut rng))
}

/// Draws an inspection outcome with a fresh `r ~ N(0, 1)` for repairs.
pub fn sample_outcome<R: Rng + ?Sized>(config: &PolicyConfig, rng: &mut R) -> InspectionOutcome {
    let u: f64 = rng.random();
    let r: f64 = rng.sample(StandardNormal);
    if u < config.p_type_i {
        InspectionOutcome::TypeI { r }
    } else if u < config.p_type_i + config.p_type_ii_iv {
        InspectionOutcome::TypeIIToIV { r }
    } else {
        InspectionOutcome::Clean
    }
}

/// The repair kernel `t` days after an inspection with this outcome.
pub fn repair_g4(repair: &RepairKernelParams, outcome: &InspectionOutcome, t: f64) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid("t", "must be finite and >= 0"));
    }
    Ok(match repair.regulator(outcome) {
        None => 0.0,
        Some((amplitude, decay)) => -amplitude * logistic_tail(decay * t),
    })
}

/// The fitted excitation side combined with the repair kernels and their
/// regulation saturation.
pub fn policy_params(fitted: &RppParams, repair: &RepairKernelParams) -> RppParams {
    RppParams {
        a3: repair.a3,
        b3: repair.b3,
        inspection_effect: InspectionEffect::Repair(*repair),
        ..*fitted
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearRow {
    pub year: u32,
    pub events_mean: f64,
    pub events_std: f64,
    pub inspections_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub y: u32,
    pub horizon_years: u32,
    pub n_entities: usize,
    pub replicates: usize,
    pub years: Vec<YearRow>,
    /// `N_E(Y, T)` for each replicate.
    pub total_events: Vec<u64>,
    pub events_mean: f64,
    pub events_std: f64,
    /// `N_I(Y, T)`, identical across replicates.
    pub total_inspections: u64,
    /// Smallest `λ(t) − λ0·(1 + C1·1[N_E≥1] − a3)` seen on the trace grid.
    pub min_floor_margin: Option<f64>,
}

struct EntityRun {
    events_per_year: Vec<u64>,
    inspections_per_year: Vec<u64>,
    min_margin: Option<f64>,
}

fn mean_std(xs: impl ExactSizeIterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.len() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_entity(
    entity: &EntityRecord,
    params: &RppParams,
    config: &PolicyConfig,
    days: &[f64],
    replicate: usize,
    sim_seed: u64,
) -> Result<EntityRun> {
    let horizon = config.horizon_days();
    let n_years = config.horizon_years as usize;
    let mut rng = stream(
        config.seed,
        &[Key::Tag("outcome"), Key::Index(replicate as u64), Key::Entity(&entity.id)],
    );
    let schedule: Vec<Inspection> = days
        .iter()
        .map(|&d| Inspection::new(d, sample_outcome(config, &mut rng)))
        .collect();
    let start = -config.block_days();
    let mut sim = SimConfig::new(start, horizon, sim_seed);
    sim.trace_step = config.trace_step;
    let blank = EntityRecord::new(entity.id.clone(), entity.covariates);
    let res = simulate_entity(&blank, params, &schedule, &sim)?;

    let year_of = |t: f64| ((t / config.days_per_year) as usize).min(n_years - 1);
    let mut events_per_year = vec![0u64; n_years];
    for &t in res.events.iter().filter(|&&t| t >= 0.0) {
        events_per_year[year_of(t)] += 1;
    }
    let mut inspections_per_year = vec![0u64; n_years];
    for &d in days.iter().filter(|&&d| d >= 0.0) {
        inspections_per_year[year_of(d)] += 1;
    }
    let min_margin = res.trace.as_ref().map(|trace| {
        trace
            .iter()
            .map(|&(t, v)| {
                let had = res.events.first().is_some_and(|&e| e < t);
                v - params.lambda0 * (1.0 + if had { params.c1 } else { 0.0 } - params.a3)
            })
            .fold(f64::INFINITY, f64::min)
    });
    Ok(EntityRun {
        events_per_year,
        inspections_per_year,
        min_margin,
    })
}

/// Simulates `n_replicates` runs of the bright-line policy `config.y`.
///
/// Each run starts one full `Y`-year cycle before day 0 so the horizon opens
/// with vulnerabilities shaped by a previous cycle; only events and
/// inspections in `[0, horizon)` are counted. The event streams of a
/// replicate are keyed by `(seed, replicate)` alone, so different `Y` values
/// share random numbers.
pub fn run_policy(
    entities: &[EntityRecord],
    fitted: &RppParams,
    config: &PolicyConfig,
    repair: &RepairKernelParams,
    n_replicates: usize,
) -> Result<PolicyReport> {
    config.validate()?;
    repair.validate()?;
    if entities.is_empty() {
        return Err(invalid("entities", "must be non-empty"));
    }
    if n_replicates == 0 {
        return Err(invalid("n_replicates", "must be >= 1"));
    }
    let params = policy_params(fitted, repair);
    params.validate()?;
    let p = entities.len();
    let n_years = config.horizon_years as usize;
    let horizon = config.horizon_days();
    let block = config.block_days();

    let mut totals = Vec::with_capacity(n_replicates);
    let mut year_events = vec![Vec::with_capacity(n_replicates); n_years];
    let mut year_inspections = vec![0u64; n_years];
    let mut total_inspections = None;
    let mut min_margin: Option<f64> = None;
    for rep in 0..n_replicates {
        let mut rng = stream(
            config.seed,
            &[Key::Tag("schedule"), Key::Index(u64::from(config.y)), Key::Index(rep as u64)],
        );
        let mut days = schedule_window(p, block, -block, 0.0, config.adhoc_count(block), &mut rng);
        let horizon_days = schedule_window(p, block, 0.0, horizon, config.adhoc_count(horizon), &mut rng);
        for (d, h) in days.iter_mut().zip(horizon_days) {
            d.extend(h);
        }
        let sim_seed = stream(config.seed, &[Key::Tag("policy-sim"), Key::Index(rep as u64)]).next_u64();
        let runs: Vec<EntityRun> = entities
            .par_iter()
            .zip(days.par_iter())
            .map(|(e, d)| run_entity(e, &params, config, d, rep, sim_seed))
            .collect::<Result<_>>()?;

        let mut events = vec![0u64; n_years];
        let mut inspections = vec![0u64; n_years];
        for r in &runs {
            for y in 0..n_years {
                events[y] += r.events_per_year[y];
                inspections[y] += r.inspections_per_year[y];
            }
            if let Some(m) = r.min_margin {
                min_margin = Some(min_margin.map_or(m, |x| x.min(m)));
            }
        }
        let n_i: u64 = inspections.iter().sum();
        match total_inspections {
            None => total_inspections = Some(n_i),
            Some(prev) if prev != n_i => {
                return Err(RppError::InvalidParameter {
                    name: "schedule",
                    reason: format!("inspection total changed between replicates ({prev} vs {n_i})"),
                })
            }
            _ => {}
        }
        for y in 0..n_years {
            year_events[y].push(events[y]);
            year_inspections[y] += inspections[y];
        }
        totals.push(events.iter().sum());
    }

    let years = (0..n_years)
        .map(|y| {
            let (events_mean, events_std) = mean_std(year_events[y].iter().map(|&c| c as f64));
            YearRow {
                year: y as u32,
                events_mean,
                events_std,
                inspections_mean: year_inspections[y] as f64 / n_replicates as f64,
            }
        })
        .collect();
    let (events_mean, events_std) = mean_std(totals.iter().map(|&c: &u64| c as f64));
    Ok(PolicyReport {
        y: config.y,
        horizon_years: config.horizon_years,
        n_entities: p,
        replicates: n_replicates,
        years,
        total_events: totals,
        events_mean,
        events_std,
        total_inspections: total_inspections.unwrap_or(0),
        min_floor_margin: min_margin,
    })
}

/// `C_E·N̄_E(Y, T) + C_I·P·T/Y`.
pub fn total_cost(report: &PolicyReport, cost_event: f64, cost_inspection: f64) -> f64 {
    let targeted = report.n_entities as f64 * f64::from(report.horizon_years) / f64::from(report.y);
    cost_event * report.events_mean + cost_inspection * targeted
}

/// `(Y, total cost)` for each report, in the order given.
pub fn cost_curve(reports: &[PolicyReport], cost_event: f64, cost_inspection: f64) -> Result<Vec<(u32, f64)>> {
    for (name, c) in [("cost_event", cost_event), ("cost_inspection", cost_inspection)] {
        if !(c.is_finite() && c >= 0.0) {
            return Err(invalid(name, "must be finite and >= 0"));
        }
    }
    Ok(reports
        .iter()
        .map(|r| (r.y, total_cost(r, cost_event, cost_inspection)))
        .collect())
}

/// The period with the lowest total cost; ties go to the smaller period.
pub fn optimal_y(reports: &[PolicyReport], cost_event: f64, cost_inspection: f64) -> Result<u32> {
    cost_curve(reports, cost_event, cost_inspection)?
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(y, _)| y)
        .ok_or(RppError::EmptyGrid)
}
