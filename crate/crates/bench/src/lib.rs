//! Fixtures shared by the benchmarks.

use rpp_core::{Calibration, EntityRecord, Inspection, InspectionOutcome, RateModel, RppParams, SyntheticCorpus};

pub fn saturated() -> RppParams {
    RppParams {
        lambda0: 0.01,
        c1: 0.1,
        a1: 1.0,
        b1: 1.0,
        a3: 0.3,
        b3: 2.0,
        beta: RateModel::Fixed(0.005),
        gamma: RateModel::Fixed(0.01),
        inspection_effect: Default::default(),
    }
}

/// One entity with `n` evenly spaced events and an inspection every 90 days.
pub fn busy_entity(n: usize, horizon: f64) -> EntityRecord {
    let events = (0..n).map(|k| horizon * (k as f64 + 0.5) / n as f64).collect();
    let inspections = (0..(horizon / 90.0) as usize)
        .map(|k| Inspection::new(90.0 * k as f64 + 45.0, InspectionOutcome::Clean))
        .collect();
    EntityRecord::new("bench", [0.2, 0.5, 0.3]).with_events(events).with_inspections(inspections)
}

pub fn corpus(n: usize) -> SyntheticCorpus {
    rpp_core::generate_synthetic(n, &Calibration::default(), 1).expect("calibration is valid")
}
