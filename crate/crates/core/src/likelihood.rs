//! Log-likelihood of observed event streams.
//!
//! ```text
//! log L = Σ_p [ Σ_e log λ_p(t_e) − ∫_0^T λ_p(u) du ]
//! ```
//!
//! The compensator is integrated with adaptive Simpson quadrature on each
//! interval between history points, where the intensity is smooth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, RppError};
use crate::intensity::{EntityModel, IntensityFn, Regulator, Response};
use crate::model::{EntityRecord, RppParams};

/// Default relative tolerance of [`integrate_intensity`].
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

const MAX_DEPTH: u32 = 48;
const MIN_DEPTH: u32 = 3;

/// Kahan–Babuška summation.
#[derive(Debug, Default, Clone, Copy)]
struct Accumulator {
    sum: f64,
    carry: f64,
}

impl Accumulator {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Intensity on one smooth piece, with the history fixed to items at or
/// before the piece's left end (the right limit at that end).
struct Piece<'a> {
    model: &'a EntityModel,
    events: &'a [f64],
    regulators: &'a [Regulator],
    response: Response,
}

impl Piece<'_> {
    #[inline]
    fn at(&self, t: f64) -> f64 {
        self.model.combine(
            self.model.excitation_sum(t, self.events),
            self.model.regulation_sum(t, self.regulators),
            !self.events.is_empty(),
            self.response,
        )
    }
}

struct Simpson<'a> {
    f: &'a Piece<'a>,
}

impl Simpson<'_> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(&self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> Option<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = self.f.at(lm);
        let frm = self.f.at(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth >= MIN_DEPTH && delta.abs() <= 15.0 * eps {
            return Some(left + right + delta / 15.0);
        }
        if depth >= MAX_DEPTH {
            return None;
        }
        let l = self.recurse(a, m, fa, flm, fm, left, 0.5 * eps, depth + 1)?;
        let r = self.recurse(m, b, fm, frm, fb, right, 0.5 * eps, depth + 1)?;
        Some(l + r)
    }

    fn integrate(&self, a: f64, b: f64, rel_tol: f64) -> Option<f64> {
        let fa = self.f.at(a);
        let fm = self.f.at(0.5 * (a + b));
        let fb = self.f.at(b);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        // scale from a coarse 5-point rule so a lucky 3-point estimate of 0
        // does not force the full depth
        let coarse = {
            let q1 = self.f.at(a + 0.25 * (b - a));
            let q3 = self.f.at(a + 0.75 * (b - a));
            (b - a) / 12.0 * (fa + 4.0 * q1 + 2.0 * fm + 4.0 * q3 + fb)
        };
        let eps = rel_tol * coarse.abs().max(whole.abs());
        self.recurse(a, b, fa, fm, fb, whole, eps, 0)
    }
}

fn integrate_fn(f: &IntensityFn<'_>, t0: f64, t1: f64, tol: f64) -> Result<f64> {
    if t1 == t0 {
        return Ok(0.0);
    }
    let mut cuts = vec![t0];
    cuts.extend(f.breakpoints().into_iter().filter(|&b| b > t0 && b < t1));
    cuts.push(t1);
    let mut acc = Accumulator::default();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let ne = f.events.partition_point(|&e| e <= a);
        let nr = f.regulators.partition_point(|r| r.day <= a);
        let piece = Piece {
            model: &f.model,
            events: &f.events[..ne],
            regulators: &f.regulators[..nr],
            response: f.response,
        };
        let v = Simpson { f: &piece }
            .integrate(a, b, tol)
            .ok_or(RppError::ToleranceNotReached { start: a, end: b })?;
        acc.add(v);
    }
    Ok(acc.value())
}

/// `∫_{t0}^{t1} λ(u) du` to relative tolerance `tol`.
pub fn integrate_intensity(entity: &EntityRecord, params: &RppParams, t0: f64, t1: f64, tol: f64) -> Result<f64> {
    if !(t0.is_finite() && t1.is_finite() && t0 <= t1) {
        return Err(RppError::InvalidHorizon { start: t0, end: t1 });
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(invalid("tol", format!("must be finite and > 0, got {tol}")));
    }
    integrate_fn(&IntensityFn::new(entity, params)?, t0, t1, tol)
}

/// Where a log-likelihood evaluation hit a zero intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroIntensity {
    pub entity_id: String,
    pub time: f64,
}

/// Value of the log-likelihood. `NegInfinity` is returned when some event
/// occurs where the intensity is exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LogLikelihood {
    Finite(f64),
    NegInfinity(ZeroIntensity),
}

impl LogLikelihood {
    pub fn value(&self) -> f64 {
        match self {
            LogLikelihood::Finite(v) => *v,
            LogLikelihood::NegInfinity(_) => f64::NEG_INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, LogLikelihood::Finite(_))
    }
}

/// One entity's contribution, `Σ_e log λ(t_e) − ∫_0^T λ`.
pub fn entity_log_likelihood(entity: &EntityRecord, params: &RppParams, t_max: f64) -> Result<LogLikelihood> {
    if !(t_max.is_finite() && t_max >= 0.0) {
        return Err(RppError::InvalidHorizon { start: 0.0, end: t_max });
    }
    if let Some(&t) = entity.events.iter().find(|&&t| !(0.0..=t_max).contains(&t)) {
        return Err(invalid(
            "events",
            format!("entity {}: event at {t} outside [0, {t_max}]", entity.id),
        ));
    }
    let f = IntensityFn::new(entity, params)?;
    let mut acc = Accumulator::default();
    for &t in &entity.events {
        let lam = f.at(t);
        if lam <= 0.0 {
            return Ok(LogLikelihood::NegInfinity(ZeroIntensity {
                entity_id: entity.id.clone(),
                time: t,
            }));
        }
        acc.add(lam.ln());
    }
    acc.add(-integrate_fn(&f, 0.0, t_max, DEFAULT_TOLERANCE)?);
    Ok(LogLikelihood::Finite(acc.value()))
}

/// Corpus log-likelihood over `[0, t_max]`. Per-entity terms are computed in
/// parallel and summed in entity-id order.
pub fn log_likelihood(corpus: &[EntityRecord], params: &RppParams, t_max: f64) -> Result<LogLikelihood> {
    params.validate()?;
    let mut terms = corpus
        .par_iter()
        .map(|e| entity_log_likelihood(e, params, t_max).map(|ll| (e.id.as_str(), ll)))
        .collect::<Result<Vec<_>>>()?;
    terms.sort_by(|a, b| a.0.cmp(b.0));
    let mut acc = Accumulator::default();
    for (_, ll) in terms {
        match ll {
            LogLikelihood::Finite(v) => acc.add(v),
            neg => return Ok(neg),
        }
    }
    Ok(LogLikelihood::Finite(acc.value()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Inspection, InspectionEffect, InspectionOutcome, RateModel};
    use crate::simulate::{simulate_entity, SimConfig};
    use proptest::prelude::*;

    fn saturated() -> RppParams {
        RppParams {
            lambda0: 0.01,
            c1: 0.1,
            a1: 1.0,
            b1: 1.0,
            a3: 0.3,
            b3: 2.0,
            beta: RateModel::Fixed(0.005),
            gamma: RateModel::Fixed(0.01),
            inspection_effect: InspectionEffect::default(),
        }
    }

    fn trapezoid(e: &EntityRecord, p: &RppParams, t0: f64, t1: f64, n: usize) -> f64 {
        let f = IntensityFn::new(e, p).unwrap();
        let h = (t1 - t0) / n as f64;
        let mut acc = Accumulator::default();
        acc.add(0.5 * (f.at(t0) + f.at(t1)));
        for k in 1..n {
            acc.add(f.at(t0 + k as f64 * h));
        }
        acc.value() * h
    }

    #[test]
    fn homogeneous_is_exact() {
        let p = RppParams::homogeneous(0.02);
        let e = EntityRecord::new("a", [0.0; 3]).with_events(vec![3.0, 8.0, 8.0, 40.0]);
        let v = integrate_intensity(&e, &p, 0.0, 100.0, 1e-8).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        assert_eq!(integrate_intensity(&e, &p, 5.0, 5.0, 1e-8).unwrap(), 0.0);
    }

    #[test]
    fn matches_trapezoid_single_event() {
        let p = saturated();
        let e = EntityRecord::new("a", [0.0; 3]).with_events(vec![250.0]);
        let v = integrate_intensity(&e, &p, 0.0, 2000.0, 1e-8).unwrap();
        let oracle = trapezoid(&e, &p, 0.0, 2000.0, 1_000_000);
        assert!(((v - oracle) / oracle).abs() < 1e-6, "{v} vs {oracle}");
    }

    #[test]
    fn inverted_interval_is_rejected() {
        let e = EntityRecord::new("a", [0.0; 3]);
        assert!(integrate_intensity(&e, &saturated(), 5.0, 1.0, 1e-8).is_err());
    }

    #[test]
    fn homogeneous_log_likelihood() {
        let p = RppParams::homogeneous(0.01);
        let e = EntityRecord::new("a", [0.0; 3]);
        assert_eq!(log_likelihood(std::slice::from_ref(&e), &p, 500.0).unwrap().value(), -5.0);
        let e = e.with_events(vec![10.0, 20.0, 30.0]);
        let ll = log_likelihood(&[e], &p, 500.0).unwrap().value();
        assert!((ll - (3.0 * 0.01f64.ln() - 5.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_intensity_is_flagged() {
        let mut p = saturated();
        p.lambda0 = 0.0;
        let e = EntityRecord::new("a", [0.0; 3]).with_events(vec![10.0]);
        let ll = log_likelihood(&[e], &p, 100.0).unwrap();
        assert!(matches!(ll, LogLikelihood::NegInfinity(ref z) if z.time == 10.0));
        assert_eq!(ll.value(), f64::NEG_INFINITY);
    }

    #[test]
    fn events_past_t_max_are_rejected() {
        let e = EntityRecord::new("a", [0.0; 3]).with_events(vec![10.0]);
        assert!(log_likelihood(&[e], &saturated(), 5.0).is_err());
    }

    #[test]
    fn ordering_invariance() {
        let p = saturated();
        let corpus: Vec<EntityRecord> = (0..6)
            .map(|i| {
                EntityRecord::new(format!("e{i}"), [0.0; 3])
                    .with_events(vec![i as f64 * 10.0 + 1.0, i as f64 * 10.0 + 30.0])
                    .with_inspections(vec![Inspection::new(15.0, InspectionOutcome::Clean)])
            })
            .collect();
        let a = log_likelihood(&corpus, &p, 1000.0).unwrap().value();
        let mut rev = corpus.clone();
        rev.reverse();
        assert_eq!(a, log_likelihood(&rev, &p, 1000.0).unwrap().value());
    }

    #[test]
    fn lambda0_derivative_matches_finite_difference() {
        let events: Vec<f64> = (0..40).map(|k| 7.0 + 23.0 * k as f64).collect();
        let e = EntityRecord::new("a", [0.0; 3]).with_events(events);
        let t = 1000.0;
        let l0 = 0.02;
        let ll = |l: f64| log_likelihood(std::slice::from_ref(&e), &RppParams::homogeneous(l), t).unwrap().value();
        let h = 1e-6 * l0;
        let fd = (ll(l0 + h) - ll(l0 - h)) / (2.0 * h);
        let exact = 40.0 / l0 - t;
        assert!(((fd - exact) / exact).abs() < 1e-6, "{fd} vs {exact}");
    }

    #[test]
    fn generating_beta_beats_doubled_beta() {
        let truth = saturated();
        let mut doubled = truth;
        doubled.beta = RateModel::Fixed(0.01);
        let t = 20_000.0;
        let mut diff = 0.0;
        for seed in 0..50 {
            let corpus: Vec<EntityRecord> = (0..5)
                .map(|i| {
                    let e = EntityRecord::new(format!("e{i}"), [0.0; 3]);
                    let r = simulate_entity(&e, &truth, &[], &SimConfig::new(0.0, t, seed)).unwrap();
                    r.to_record(&e, &[])
                })
                .collect();
            diff += log_likelihood(&corpus, &truth, t).unwrap().value()
                - log_likelihood(&corpus, &doubled, t).unwrap().value();
        }
        assert!(diff > 0.0, "mean difference {}", diff / 50.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn additivity(
            events in proptest::collection::vec(0.0f64..300.0, 0..12),
            insp in proptest::collection::vec(0.0f64..300.0, 0..5),
            t1 in 1.0f64..299.0,
        ) {
            let e = EntityRecord::new("a", [0.0; 3])
                .with_events(events)
                .with_inspections(insp.into_iter().map(|d| Inspection::new(d, InspectionOutcome::Clean)).collect());
            let p = saturated();
            let tol = 1e-8;
            let a = integrate_intensity(&e, &p, 0.0, t1, tol).unwrap();
            let b = integrate_intensity(&e, &p, t1, 300.0, tol).unwrap();
            let whole = integrate_intensity(&e, &p, 0.0, 300.0, tol).unwrap();
            prop_assert!((a + b - whole).abs() <= 2.0 * tol * whole);
        }
    }
}
