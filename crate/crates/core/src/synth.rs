//! Synthetic corpora with a known generating model.
//!
//! Covariates are skewed like a real cable inventory: most structures carry a
//! few cables with a long right tail, and the total number of cable sets grows
//! with the number of main cables. Events are simulated from a ground-truth
//! model whose excitation decay depends on the normalized covariates.

use std::collections::BTreeMap;
use std::path::Path;

use rand_distr::{Beta, Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::io::{
    normalize_covariates, write_corpus, write_text, CorpusFiles, FitMethod, ModelArtifact,
    NormalizationBounds, Provenance,
};
use crate::model::{EntityRecord, InspectionEffect, RateModel, RppParams};
use crate::rng::{stream, Key};
use crate::simulate::{corpus_simulate, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub lambda0: f64,
    pub c1: f64,
    pub a1: f64,
    pub b1: f64,
    /// True link coefficients for the excitation decay.
    pub upsilon: [f64; 3],
    pub horizon_days: f64,
    /// Main phase cables are `max(1, round(LogNormal(mu, sigma)))`.
    pub cables_mu: f64,
    pub cables_sigma: f64,
    /// Extra cable sets beyond the main cables, `round(LogNormal(mu, sigma))`.
    pub extra_sets_mu: f64,
    pub extra_sets_sigma: f64,
    /// Oldest cable age is `age_max · Beta(alpha, beta)` years.
    pub age_alpha: f64,
    pub age_beta: f64,
    pub age_max: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            lambda0: 2.4225e-4,
            c1: 0.0512,
            a1: 16.98,
            b1: 1.743,
            upsilon: [-4.6554, -0.5716, -4.8028],
            horizon_days: 20.0 * 365.0,
            cables_mu: 0.7,
            cables_sigma: 0.8,
            extra_sets_mu: 0.5,
            extra_sets_sigma: 0.9,
            age_alpha: 2.0,
            age_beta: 3.0,
            age_max: 130.0,
        }
    }
}

impl Calibration {
    pub fn truth(&self) -> RppParams {
        RppParams {
            lambda0: self.lambda0,
            c1: self.c1,
            a1: self.a1,
            b1: self.b1,
            a3: 0.0,
            b3: 1.0,
            beta: RateModel::Covariate(self.upsilon),
            gamma: RateModel::Fixed(1.0),
            inspection_effect: InspectionEffect::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    /// Normalized covariates, sorted by id.
    pub entities: Vec<EntityRecord>,
    /// The same entities with raw covariates.
    pub raw: Vec<EntityRecord>,
    pub bounds: NormalizationBounds,
    pub truth: RppParams,
    pub t_end: f64,
    pub seed: u64,
}

fn raw_covariates(cal: &Calibration, seed: u64, i: usize) -> Result<[f64; 3]> {
    let bad = |e: &dyn std::fmt::Display| invalid("calibration", e.to_string());
    let cables = LogNormal::new(cal.cables_mu, cal.cables_sigma).map_err(|e| bad(&e))?;
    let extra = LogNormal::new(cal.extra_sets_mu, cal.extra_sets_sigma).map_err(|e| bad(&e))?;
    let age = Beta::new(cal.age_alpha, cal.age_beta).map_err(|e| bad(&e))?;
    let mut rng = stream(seed, &[Key::Tag("synth-covariates"), Key::Index(i as u64)]);
    let main = cables.sample(&mut rng).round().max(1.0);
    let total = main + extra.sample(&mut rng).round();
    let oldest = (cal.age_max * age.sample(&mut rng) * 10.0).round() / 10.0;
    Ok([main, oldest, total])
}

/// Draws `n` entities and simulates their events over `[0, horizon_days)`.
pub fn generate_synthetic(n: usize, cal: &Calibration, seed: u64) -> Result<SyntheticCorpus> {
    if n == 0 {
        return Err(invalid("n_entities", "must be >= 1"));
    }
    let raw: Vec<EntityRecord> = (0..n)
        .map(|i| Ok(EntityRecord::new(format!("MH{i:06}"), raw_covariates(cal, seed, i)?)))
        .collect::<Result<_>>()?;
    let norm = normalize_covariates(&raw)?;
    let truth = cal.truth();
    truth.validate()?;
    let cfg = SimConfig::new(0.0, cal.horizon_days, seed);
    let schedules = vec![Vec::new(); n];
    let sims = corpus_simulate(&norm.entities, &truth, &schedules, &cfg)?;
    let entities: Vec<EntityRecord> = norm
        .entities
        .iter()
        .zip(&sims)
        .map(|(e, s)| s.to_record(e, &[]))
        .collect();
    let raw = raw
        .into_iter()
        .zip(&entities)
        .map(|(r, e)| EntityRecord {
            events: e.events.clone(),
            ..r
        })
        .collect();
    Ok(SyntheticCorpus {
        entities,
        raw,
        bounds: norm.bounds,
        truth,
        t_end: cal.horizon_days,
        seed,
    })
}

impl SyntheticCorpus {
    /// Writes the corpus tables (raw covariates), `truth.json` and `corpus.cfg`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_corpus(&CorpusFiles::in_dir(dir), &self.raw)?;
        let events: usize = self.entities.iter().map(|e| e.events.len()).sum();
        let mut statistics = BTreeMap::new();
        statistics.insert("entities".to_string(), self.entities.len() as f64);
        statistics.insert("events".to_string(), events as f64);
        ModelArtifact::new(
            self.truth,
            Some(self.bounds),
            Provenance {
                method: FitMethod::Synthetic,
                seed: Some(self.seed),
                statistics,
            },
        )
        .save(&dir.join("truth.json"))?;
        let mut cfg = BTreeMap::new();
        cfg.insert("t_start".to_string(), "0".to_string());
        cfg.insert("t_end".to_string(), self.t_end.to_string());
        cfg.insert("entities".to_string(), self.entities.len().to_string());
        cfg.insert("seed".to_string(), self.seed.to_string());
        write_text(&dir.join("corpus.cfg"), &crate::io::format_config(&cfg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{ingest, IngestOptions};

    #[test]
    fn single_entity_corpus() {
        let c = generate_synthetic(1, &Calibration::default(), 3).unwrap();
        assert_eq!(c.entities.len(), 1);
        assert_eq!(c.entities[0].covariates, [0.0; 3]);
        let d = tempfile::tempdir().unwrap();
        c.write(d.path()).unwrap();
        let back = ingest(&CorpusFiles::in_dir(d.path()), &IngestOptions::default()).unwrap();
        assert_eq!(back.entities, c.raw);
    }

    #[test]
    fn deterministic() {
        let cal = Calibration {
            horizon_days: 3650.0,
            ..Calibration::default()
        };
        assert_eq!(generate_synthetic(50, &cal, 9).unwrap(), generate_synthetic(50, &cal, 9).unwrap());
    }

    #[test]
    fn covariates_are_skewed_and_correlated() {
        let cal = Calibration {
            horizon_days: 1.0,
            ..Calibration::default()
        };
        let c = generate_synthetic(5000, &cal, 1).unwrap();
        let main: Vec<f64> = c.raw.iter().map(|e| e.covariates[0]).collect();
        let total: Vec<f64> = c.raw.iter().map(|e| e.covariates[2]).collect();
        let mut sorted = main.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let mean = main.iter().sum::<f64>() / main.len() as f64;
        assert!(mean > median, "right tail: mean {mean} median {median}");
        assert!(c.raw.iter().all(|e| e.covariates[2] >= e.covariates[0]));
        assert!(c.raw.iter().all(|e| (0.0..=130.0).contains(&e.covariates[1])));
        assert!(crate::abc::pearson(&main, &total).unwrap() > 0.3);
        assert!(c.entities.iter().all(|e| e.validate().is_ok()));
    }

    #[test]
    fn yearly_counts_are_of_baseline_order() {
        let cal = Calibration::default();
        let c = generate_synthetic(2000, &cal, 5).unwrap();
        let n: usize = c.entities.iter().map(|e| e.events.len()).sum();
        let base = cal.lambda0 * cal.horizon_days * 2000.0;
        // at least the baseline, and within the excitation cap
        assert!(n as f64 > base - 3.0 * base.sqrt());
        assert!((n as f64) < base * (1.0 + cal.a1 + cal.c1));
    }
}
