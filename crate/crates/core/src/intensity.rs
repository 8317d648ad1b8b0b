//! Pointwise evaluation of the reactive point process intensity
//!
//! ```text
//! λ(t) = λ0 · [1 + g1(Σ_{t_e<t} g2(t−t_e)) − g3(Σ_{t_i<t} g4(t−t_i)) + C1·1[N_E ≥ 1]]
//! ```
//!
//! Only history strictly before `t` contributes, and the result is clamped at 0.

use crate::error::Result;
use crate::kernels::{g1_unchecked, g2_unchecked, g3_unchecked, logistic_tail};
use crate::model::{EntityRecord, Inspection, InspectionEffect, KernelParams, RppParams};

/// How the accumulated excitation and regulation enter the rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Response {
    /// Through the saturation functions g1 and g3.
    #[default]
    Saturated,
    /// Added directly (the classical linear self-exciting form); no upper bound.
    Linear,
}

/// One inspection's contribution `−amplitude / (1 + e^{decay·(t − day)})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regulator {
    pub day: f64,
    pub amplitude: f64,
    pub decay: f64,
}

impl Regulator {
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        -self.amplitude * logistic_tail(self.decay * (t - self.day))
    }
}

/// The intensity law of a single entity with its per-entity rates resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntityModel {
    pub lambda0: f64,
    pub c1: f64,
    pub kernel: KernelParams,
    pub effect: InspectionEffect,
}

impl EntityModel {
    pub fn resolve(params: &RppParams, entity: &EntityRecord) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            lambda0: params.lambda0,
            c1: params.c1,
            kernel: params.kernel_for(&entity.covariates)?,
            effect: params.inspection_effect,
        })
    }

    pub fn regulator(&self, inspection: &Inspection) -> Option<Regulator> {
        let (amplitude, decay) = match &self.effect {
            InspectionEffect::Uniform { amplitude } => (*amplitude, self.kernel.gamma),
            InspectionEffect::Repair(k) => k.regulator(&inspection.outcome)?,
        };
        (amplitude > 0.0).then_some(Regulator {
            day: inspection.day,
            amplitude,
            decay,
        })
    }

    /// Regulators for an ordered inspection list; inspections with no effect are dropped.
    pub fn regulators(&self, inspections: &[Inspection]) -> Vec<Regulator> {
        inspections.iter().filter_map(|i| self.regulator(i)).collect()
    }

    /// `Σ g2(t − t_e)` over the given events, all assumed to precede `t`.
    #[inline]
    pub fn excitation_sum(&self, t: f64, events: &[f64]) -> f64 {
        let beta = self.kernel.beta;
        events.iter().map(|&e| g2_unchecked(t - e, beta)).sum()
    }

    /// `Σ g4(t − t_i)` over the given regulators, all assumed to precede `t`.
    #[inline]
    pub fn regulation_sum(&self, t: f64, regulators: &[Regulator]) -> f64 {
        regulators.iter().map(|r| r.value(t)).sum()
    }

    /// Combines the two sums into a rate.
    #[inline]
    pub fn combine(&self, excitation: f64, regulation: f64, had_event: bool, response: Response) -> f64 {
        let k = &self.kernel;
        let lift = if had_event { self.c1 } else { 0.0 };
        let inner = match response {
            Response::Saturated => {
                1.0 + g1_unchecked(excitation, k.a1, k.b1) - g3_unchecked(regulation, k.a3, k.b3) + lift
            }
            Response::Linear => 1.0 + excitation + regulation + lift,
        };
        (self.lambda0 * inner).max(0.0)
    }

    /// Rate at `t` from full (sorted) histories; only items strictly before `t` count.
    pub fn rate(&self, t: f64, events: &[f64], regulators: &[Regulator], response: Response) -> f64 {
        let ne = events.partition_point(|&e| e < t);
        let nr = regulators.partition_point(|r| r.day < t);
        self.combine(
            self.excitation_sum(t, &events[..ne]),
            self.regulation_sum(t, &regulators[..nr]),
            ne > 0,
            response,
        )
    }

    /// The level the rate decays back to, `λ0·(1 + C1·1[had event])`.
    pub fn baseline(&self, had_event: bool) -> f64 {
        self.lambda0 * (1.0 + if had_event { self.c1 } else { 0.0 })
    }
}

/// An entity's intensity as a function of time, with its history bound in.
#[derive(Debug, Clone)]
pub struct IntensityFn<'a> {
    pub model: EntityModel,
    pub events: &'a [f64],
    pub regulators: Vec<Regulator>,
    pub response: Response,
}

impl<'a> IntensityFn<'a> {
    pub fn new(entity: &'a EntityRecord, params: &RppParams) -> Result<Self> {
        let model = EntityModel::resolve(params, entity)?;
        let regulators = model.regulators(&entity.inspections);
        Ok(Self {
            model,
            events: &entity.events,
            regulators,
            response: Response::Saturated,
        })
    }

    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        self.model.rate(t, self.events, &self.regulators, self.response)
    }

    /// Sorted times at which the intensity jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .events
            .iter()
            .copied()
            .chain(self.regulators.iter().map(|r| r.day))
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Whether any event precedes `t`.
    pub fn had_event_before(&self, t: f64) -> bool {
        self.events.first().is_some_and(|&e| e < t)
    }
}

/// Intensity of `entity` at `t` under `params`.
pub fn intensity(t: f64, entity: &EntityRecord, params: &RppParams) -> Result<f64> {
    Ok(IntensityFn::new(entity, params)?.at(t))
}
