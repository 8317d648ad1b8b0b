//! Domain types: entities, inspections and model parameters.
//!
//! Time is measured in days since the corpus epoch (day 0).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::kernels::{link_beta, link_gamma, N_COVARIATES};

pub type Covariates = [f64; N_COVARIATES];

/// Result of an inspection. Repairs carry the standard-normal draw `r` that
/// scales their initial effect; observed inspections without one use `r = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InspectionOutcome {
    Clean,
    TypeI { r: f64 },
    TypeIIToIV { r: f64 },
}

impl InspectionOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            InspectionOutcome::Clean => "clean",
            InspectionOutcome::TypeI { .. } => "type1",
            InspectionOutcome::TypeIIToIV { .. } => "type2_4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Inspection {
    pub day: f64,
    pub outcome: InspectionOutcome,
}

impl Inspection {
    pub fn new(day: f64, outcome: InspectionOutcome) -> Self {
        Self { day, outcome }
    }
}

/// One entity's covariates and its event and inspection history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: String,
    /// Normalized covariates: main phase cables, oldest cable age, total cable sets.
    pub covariates: Covariates,
    /// Non-decreasing event days. Same-day duplicates are allowed.
    pub events: Vec<f64>,
    /// Inspections ordered by day.
    pub inspections: Vec<Inspection>,
}

impl EntityRecord {
    pub fn new(id: impl Into<String>, covariates: Covariates) -> Self {
        Self {
            id: id.into(),
            covariates,
            events: Vec::new(),
            inspections: Vec::new(),
        }
    }

    pub fn with_events(mut self, mut events: Vec<f64>) -> Self {
        events.sort_by(f64::total_cmp);
        self.events = events;
        self
    }

    pub fn with_inspections(mut self, mut inspections: Vec<Inspection>) -> Self {
        inspections.sort_by(|a, b| a.day.total_cmp(&b.day));
        self.inspections = inspections;
        self
    }

    /// Checks ordering, finiteness and the covariate range.
    pub fn validate(&self) -> Result<()> {
        self.validate_history()?;
        if self.covariates.iter().any(|m| !(-0.5..=0.5).contains(m)) {
            return Err(invalid(
                "covariates",
                format!("entity {}: covariates must lie in [-0.5, 0.5]", self.id),
            ));
        }
        Ok(())
    }

    /// Checks event and inspection histories only; covariates may be raw.
    pub fn validate_history(&self) -> Result<()> {
        if self.events.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(invalid("events", format!("entity {}: non-finite or negative day", self.id)));
        }
        if self.events.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("events", format!("entity {}: not sorted", self.id)));
        }
        if self.inspections.iter().any(|i| !i.day.is_finite() || i.day < 0.0) {
            return Err(invalid("inspections", format!("entity {}: non-finite or negative day", self.id)));
        }
        if self.inspections.windows(2).any(|w| w[1].day < w[0].day) {
            return Err(invalid("inspections", format!("entity {}: not sorted", self.id)));
        }
        for i in &self.inspections {
            if let InspectionOutcome::TypeI { r } | InspectionOutcome::TypeIIToIV { r } = i.outcome {
                if !r.is_finite() {
                    return Err(invalid("r", format!("entity {}: non-finite repair draw", self.id)));
                }
            }
        }
        Ok(())
    }
}

/// Fully resolved kernel parameters for one entity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub a1: f64,
    pub b1: f64,
    pub a3: f64,
    pub b3: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl KernelParams {
    pub fn new(a1: f64, b1: f64, a3: f64, b3: f64, beta: f64, gamma: f64) -> Result<Self> {
        let k = Self {
            a1,
            b1,
            a3,
            b3,
            beta,
            gamma,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("a1", self.a1)?;
        positive("b1", self.b1)?;
        non_negative("a3", self.a3)?;
        if self.a3 > 1.0 {
            return Err(invalid("a3", format!("must be <= 1 to keep intensity non-negative, got {}", self.a3)));
        }
        positive("b3", self.b3)?;
        positive("beta", self.beta)?;
        positive("gamma", self.gamma)
    }
}

/// A decay rate that is either shared by every entity or derived from covariates
/// through the softplus link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    Fixed(f64),
    Covariate(Covariates),
}

impl RateModel {
    fn validate(&self, name: &'static str) -> Result<()> {
        match self {
            RateModel::Fixed(v) => positive(name, *v),
            RateModel::Covariate(c) if c.iter().all(|x| x.is_finite()) => Ok(()),
            RateModel::Covariate(_) => Err(invalid(name, "regression coefficients must be finite")),
        }
    }
}

/// Sampled-amplitude repair kernel:
/// `g4(t) = −scale·(r·r_coeff + offset) / (1 + e^{decay·t})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepairKernel {
    pub scale: f64,
    pub r_coeff: f64,
    pub offset: f64,
    pub decay: f64,
}

impl RepairKernel {
    /// Initial drop magnitude for draw `r`. Negative amplitudes (r below about −7σ)
    /// are clamped to zero so a repair never raises vulnerability.
    pub fn amplitude(&self, r: f64) -> f64 {
        (self.scale * (r * self.r_coeff + self.offset)).max(0.0)
    }
}

/// Repair kernels and the regulation saturation used for policy simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepairKernelParams {
    pub type_i: RepairKernel,
    pub type_ii_iv: RepairKernel,
    pub a3: f64,
    pub b3: f64,
}

impl Default for RepairKernelParams {
    fn default() -> Self {
        Self {
            type_i: RepairKernel {
                scale: 83.7989,
                r_coeff: 5e-4,
                offset: 3.5e-3,
                decay: 0.0018,
            },
            type_ii_iv: RepairKernel {
                scale: 49.014,
                r_coeff: 5e-4,
                offset: 7e-3,
                decay: 0.00068,
            },
            a3: 0.4,
            b3: 3.75,
        }
    }
}

impl RepairKernelParams {
    pub fn validate(&self) -> Result<()> {
        for k in [&self.type_i, &self.type_ii_iv] {
            positive("repair decay", k.decay)?;
            if !(k.scale.is_finite() && k.r_coeff.is_finite() && k.offset.is_finite()) {
                return Err(invalid("repair kernel", "coefficients must be finite"));
            }
        }
        non_negative("a3", self.a3)?;
        positive("b3", self.b3)
    }

    /// `(amplitude, decay)` of the regulation this outcome induces, or `None`
    /// for a clean inspection.
    pub fn regulator(&self, outcome: &InspectionOutcome) -> Option<(f64, f64)> {
        match *outcome {
            InspectionOutcome::Clean => None,
            InspectionOutcome::TypeI { r } => Some((self.type_i.amplitude(r), self.type_i.decay)),
            InspectionOutcome::TypeIIToIV { r } => {
                Some((self.type_ii_iv.amplitude(r), self.type_ii_iv.decay))
            }
        }
    }
}

/// How inspections feed the regulation sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InspectionEffect {
    /// Every inspection contributes `amplitude · g4(t, γ)`.
    Uniform { amplitude: f64 },
    /// Outcome-dependent repair kernels; clean inspections have no effect.
    Repair(RepairKernelParams),
}

impl Default for InspectionEffect {
    fn default() -> Self {
        InspectionEffect::Uniform { amplitude: 1.0 }
    }
}

/// Parameters of the reactive point process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RppParams {
    /// Baseline rate, events per day.
    pub lambda0: f64,
    /// Permanent relative lift once an entity has had at least one event.
    pub c1: f64,
    pub a1: f64,
    pub b1: f64,
    pub a3: f64,
    pub b3: f64,
    pub beta: RateModel,
    pub gamma: RateModel,
    #[serde(default)]
    pub inspection_effect: InspectionEffect,
}

impl RppParams {
    /// Parameters with no saturation caps (`a1 = a3 = 0`), `C1 = 0` and unit
    /// decay rates: the homogeneous Poisson process with rate `lambda0`.
    pub fn homogeneous(lambda0: f64) -> Self {
        Self {
            lambda0,
            c1: 0.0,
            a1: 0.0,
            b1: 1.0,
            a3: 0.0,
            b3: 1.0,
            beta: RateModel::Fixed(1.0),
            gamma: RateModel::Fixed(1.0),
            inspection_effect: InspectionEffect::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        non_negative("lambda0", self.lambda0)?;
        non_negative("c1", self.c1)?;
        non_negative("a1", self.a1)?;
        positive("b1", self.b1)?;
        non_negative("a3", self.a3)?;
        if self.a3 > 1.0 {
            return Err(invalid("a3", format!("must be <= 1, got {}", self.a3)));
        }
        positive("b3", self.b3)?;
        self.beta.validate("beta")?;
        self.gamma.validate("gamma")?;
        match &self.inspection_effect {
            InspectionEffect::Uniform { amplitude } => non_negative("amplitude", *amplitude),
            InspectionEffect::Repair(k) => k.validate(),
        }
    }

    /// Resolves β and γ for an entity with the given covariates.
    pub fn kernel_for(&self, covariates: &Covariates) -> Result<KernelParams> {
        let resolve = |m: &RateModel, link: fn(&[f64], &[f64]) -> Result<f64>| match m {
            RateModel::Fixed(v) => Ok(*v),
            RateModel::Covariate(c) => link(covariates, c),
        };
        KernelParams::new(
            self.a1,
            self.b1,
            self.a3,
            self.b3,
            resolve(&self.beta, link_beta)?,
            resolve(&self.gamma, link_gamma)?,
        )
    }

    /// Upper bound on the intensity of the saturated model, `λ0·(1 + a1 + C1)`.
    pub fn intensity_ceiling(&self) -> f64 {
        self.lambda0 * (1.0 + self.a1 + self.c1)
    }

    /// Baseline level an entity returns to: `λ0·(1 + C1·1[had event])`.
    pub fn baseline(&self, had_event: bool) -> f64 {
        self.lambda0 * (1.0 + if had_event { self.c1 } else { 0.0 })
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

fn non_negative(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and >= 0, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a3_above_one_is_rejected() {
        assert!(KernelParams::new(1.0, 1.0, 1.2, 1.0, 0.1, 0.1).is_err());
        assert!(KernelParams::new(1.0, 1.0, 1.0, 1.0, 0.1, 0.1).is_ok());
        let mut p = RppParams::homogeneous(0.1);
        p.a3 = 1.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn kernel_resolution_uses_link() {
        let mut p = RppParams::homogeneous(0.1);
        p.beta = RateModel::Covariate([0.0; 3]);
        let k = p.kernel_for(&[0.3, -0.2, 0.1]).unwrap();
        assert!((k.beta - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(k.gamma, 1.0);
    }

    #[test]
    fn repair_amplitude_is_clamped() {
        let k = RepairKernelParams::default();
        assert!((k.type_i.amplitude(0.0) - 83.7989 * 3.5e-3).abs() < 1e-15);
        assert_eq!(k.type_i.amplitude(-50.0), 0.0);
        assert!(k.regulator(&InspectionOutcome::Clean).is_none());
    }

    #[test]
    fn entity_validation() {
        let e = EntityRecord::new("a", [0.0; 3]).with_events(vec![5.0, 1.0, 1.0]);
        assert_eq!(e.events, vec![1.0, 1.0, 5.0]);
        assert!(e.validate().is_ok());
        let bad = EntityRecord::new("b", [0.7, 0.0, 0.0]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn params_round_trip_json() {
        let mut p = RppParams::homogeneous(2.4225e-4);
        p.beta = RateModel::Covariate([-4.6554, -0.5716, -4.8028]);
        p.inspection_effect = InspectionEffect::Repair(RepairKernelParams::default());
        let s = serde_json::to_string(&p).unwrap();
        let back: RppParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
    }
}
