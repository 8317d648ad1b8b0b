//! Conditional-frequency estimation.
//!
//! Event streams are realigned at isolated events ("trails"), and the
//! probability of another event `d` days later is estimated by counting. Smooth
//! curves are then fitted to the estimates by weighted least squares.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, RppError};
use crate::kernels::{g2_unchecked, logistic_tail, softplus};
use crate::model::{EntityRecord, RppParams};

pub const DEFAULT_ISOLATION_GAP: f64 = 365.0;
pub const DEFAULT_WINDOW: u32 = 365;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrailConfig {
    /// Minimum distance to the previous event for an event to anchor a trail.
    pub isolation_gap: f64,
    /// Longest trail, in days.
    pub window: u32,
}

impl Default for TrailConfig {
    fn default() -> Self {
        Self {
            isolation_gap: DEFAULT_ISOLATION_GAP,
            window: DEFAULT_WINDOW,
        }
    }
}

/// The days following an isolated event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trail {
    pub entity_id: String,
    pub anchor: f64,
    /// Relative days `1..=observed` are fully inside the corpus.
    pub observed: u32,
    /// Relative days (ascending, distinct) on which at least one event occurred.
    pub event_days: Vec<u32>,
}

fn entity_trails(e: &EntityRecord, cfg: &TrailConfig, corpus_end: f64) -> Vec<Trail> {
    let mut out = Vec::new();
    for (i, &anchor) in e.events.iter().enumerate() {
        if i > 0 && anchor - e.events[i - 1] < cfg.isolation_gap {
            continue;
        }
        let room = (corpus_end - anchor).floor().max(0.0);
        let observed = (cfg.window as f64).min(room) as u32;
        let mut event_days: Vec<u32> = e.events[i + 1..]
            .iter()
            .map(|&t| t - anchor)
            .take_while(|&d| d <= observed as f64)
            .filter(|&d| d > 0.0)
            .map(|d| d.ceil() as u32)
            .collect();
        event_days.dedup();
        out.push(Trail {
            entity_id: e.id.clone(),
            anchor,
            observed,
            event_days,
        });
    }
    out
}

/// One trail per event whose previous event (if any) is at least
/// `isolation_gap` days earlier, truncated at `window` days or at `corpus_end`.
/// Trails are returned sorted by entity id and anchor.
pub fn build_trails(corpus: &[EntityRecord], cfg: &TrailConfig, corpus_end: f64) -> Result<Vec<Trail>> {
    if !(cfg.isolation_gap.is_finite() && cfg.isolation_gap > 0.0) {
        return Err(invalid("isolation_gap", "must be finite and > 0"));
    }
    if !corpus_end.is_finite() {
        return Err(invalid("corpus_end", "must be finite"));
    }
    let mut trails: Vec<Trail> = corpus
        .par_iter()
        .flat_map_iter(|e| entity_trails(e, cfg, corpus_end))
        .collect();
    trails.sort_by(|a, b| a.entity_id.cmp(&b.entity_id).then(a.anchor.total_cmp(&b.anchor)));
    Ok(trails)
}

/// Empirical conditional probability of an event on each relative day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfCurve {
    pub days: Vec<u32>,
    /// Trails with an event on the day.
    pub events: Vec<u64>,
    /// Trails still observed on the day.
    pub exposed: Vec<u64>,
    pub p_hat: Vec<f64>,
}

impl CfCurve {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }
}

/// `p̂(d) = #(trails with an event on day d) / #(trails observed on day d)`.
pub fn cf_curve(trails: &[Trail]) -> Result<CfCurve> {
    if trails.is_empty() {
        return Err(RppError::NoTrails);
    }
    let max_day = trails.iter().map(|t| t.observed).max().unwrap_or(0) as usize;
    let mut events = vec![0u64; max_day + 1];
    let mut ends = vec![0u64; max_day + 2];
    for t in trails {
        ends[t.observed as usize] += 1;
        for &d in &t.event_days {
            events[d as usize] += 1;
        }
    }
    // exposed(d) = #(observed >= d)
    let mut curve = CfCurve {
        days: Vec::with_capacity(max_day),
        events: Vec::with_capacity(max_day),
        exposed: Vec::with_capacity(max_day),
        p_hat: Vec::with_capacity(max_day),
    };
    let mut alive: u64 = trails.len() as u64 - ends[0];
    for d in 1..=max_day {
        if alive > 0 {
            curve.days.push(d as u32);
            curve.events.push(events[d]);
            curve.exposed.push(alive);
            curve.p_hat.push(events[d] as f64 / alive as f64);
        }
        alive -= ends[d];
    }
    Ok(curve)
}

/// A fitted two-parameter curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub amplitude: f64,
    pub decay: f64,
    /// `sqrt(Σ w·(y − f)²)`.
    pub residual: f64,
    /// The decay parameter is degenerate: collapsed toward 0 for the excitation
    /// curve, or too small to show curvature for the saturation curve.
    pub boundary: bool,
    pub iterations: usize,
}

#[derive(Clone, Copy)]
enum Shape {
    /// `A / (1 + e^{b x})`
    Excitation,
    /// `A · (1 − ln(1 + e^{−b x}) / ln 2)`
    Saturation,
}

impl Shape {
    #[inline]
    fn basis(self, x: f64, b: f64) -> (f64, f64) {
        // (value at A = 1, derivative in b at A = 1)
        match self {
            Shape::Excitation => {
                let s = logistic_tail(b * x);
                (s, -x * s * (1.0 - s))
            }
            Shape::Saturation => (1.0 - softplus(-b * x) / LN_2, x * logistic_tail(b * x) / LN_2),
        }
    }
}

const B_FLOOR: f64 = 1e-12;
const MAX_ITER: usize = 2000;

struct Problem<'a> {
    shape: Shape,
    x: &'a [f64],
    y: &'a [f64],
    w: &'a [f64],
}

impl Problem<'_> {
    fn cost(&self, a: f64, b: f64) -> f64 {
        self.x
            .iter()
            .zip(self.y)
            .zip(self.w)
            .map(|((&x, &y), &w)| {
                let r = y - a * self.shape.basis(x, b).0;
                w * r * r
            })
            .sum()
    }

    /// Best amplitude for a fixed decay.
    fn amplitude_for(&self, b: f64) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for ((&x, &y), &w) in self.x.iter().zip(self.y).zip(self.w) {
            let s = self.shape.basis(x, b).0;
            num += w * y * s;
            den += w * s * s;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// Gauss-Newton normal equations `(JᵀWJ, JᵀWr)` at `(a, b)`.
    fn normal(&self, a: f64, b: f64) -> ([[f64; 2]; 2], [f64; 2]) {
        let mut h = [[0.0; 2]; 2];
        let mut g = [0.0; 2];
        for ((&x, &y), &w) in self.x.iter().zip(self.y).zip(self.w) {
            let (s, ds) = self.shape.basis(x, b);
            let j = [s, a * ds];
            let r = y - a * s;
            for p in 0..2 {
                g[p] += w * j[p] * r;
                for q in 0..2 {
                    h[p][q] += w * j[p] * j[q];
                }
            }
        }
        (h, g)
    }

    /// Levenberg–Marquardt from `b0` with the amplitude started at its optimum.
    fn levenberg_marquardt(&self, b0: f64) -> (f64, f64, f64, usize, bool) {
        let mut b = b0;
        let mut a = self.amplitude_for(b);
        let mut cost = self.cost(a, b);
        let mut mu = 1e-3;
        for it in 0..MAX_ITER {
            let (h, g) = self.normal(a, b);
            let grad_norm = g[0].hypot(g[1]);
            if grad_norm <= 1e-15 * (1.0 + cost) {
                return (a, b, cost, it, true);
            }
            let mut improved = false;
            for _ in 0..40 {
                let m00 = h[0][0] * (1.0 + mu) + 1e-300;
                let m11 = h[1][1] * (1.0 + mu) + 1e-300;
                let m01 = h[0][1];
                let det = m00 * m11 - m01 * m01;
                if !(det.is_finite() && det > 0.0) {
                    mu *= 10.0;
                    continue;
                }
                let da = (m11 * g[0] - m01 * g[1]) / det;
                let db = (m00 * g[1] - m01 * g[0]) / det;
                let na = a + da;
                let nb = (b + db).max(B_FLOOR);
                let nc = self.cost(na, nb);
                if nc.is_finite() && nc <= cost {
                    let rel = (cost - nc) / cost.max(f64::MIN_POSITIVE);
                    let small_step = (na - a).abs() <= 1e-14 * a.abs().max(1e-300)
                        && (nb - b).abs() <= 1e-14 * b;
                    a = na;
                    b = nb;
                    cost = nc;
                    mu = (mu * 0.3).max(1e-12);
                    improved = true;
                    if rel < 1e-15 || small_step {
                        return (a, b, cost, it + 1, true);
                    }
                    break;
                }
                mu *= 10.0;
            }
            if !improved {
                // no descent possible at machine precision
                return (a, b, cost, it, true);
            }
        }
        (a, b, cost, MAX_ITER, false)
    }
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (l, h) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (l + (h - l) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn fit(shape: Shape, x: &[f64], y: &[f64], w: &[f64]) -> Result<CurveFit> {
    if x.len() != y.len() || x.len() != w.len() {
        return Err(RppError::DimensionMismatch {
            expected: x.len(),
            got: y.len().min(w.len()),
        });
    }
    let used = w.iter().filter(|&&v| v > 0.0).count();
    if used < 10 {
        return Err(RppError::InsufficientData(format!(
            "need at least 10 weighted points, got {used}"
        )));
    }
    if x.iter().chain(y).chain(w).any(|v| !v.is_finite()) || w.iter().any(|&v| v < 0.0) {
        return Err(invalid("data", "values must be finite and weights >= 0"));
    }
    let x_max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let x_min = x.iter().map(|v| v.abs()).filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    if !(x_max > 0.0) {
        return Err(invalid("x", "needs at least one nonzero abscissa"));
    }
    let prob = Problem { shape, x, y, w };
    let starts = log_spaced(1e-2 / x_max, 1e2 / x_min, 8);
    let fits: Vec<_> = starts.par_iter().map(|&b0| prob.levenberg_marquardt(b0)).collect();
    let best = fits
        .iter()
        .filter(|f| f.2.is_finite())
        .min_by(|p, q| p.2.total_cmp(&q.2))
        .copied()
        .ok_or_else(|| RppError::ConvergenceFailure("no start produced a finite residual".into()))?;
    let (a, b, cost, iterations, converged) = best;
    let boundary = match shape {
        Shape::Excitation => b * x_max < 1e-3,
        Shape::Saturation => b * x_max < 1e-2,
    };
    if !converged && !boundary {
        return Err(RppError::ConvergenceFailure(format!(
            "no start converged within {MAX_ITER} iterations"
        )));
    }
    Ok(CurveFit {
        amplitude: a,
        decay: b,
        residual: cost.sqrt(),
        boundary,
        iterations,
    })
}

/// Weighted residual of a curve at given parameters, as reported by the fits.
pub fn excitation_residual(curve: &CfCurve, amplitude: f64, decay: f64) -> f64 {
    let (x, y, w) = excitation_data(curve);
    Problem {
        shape: Shape::Excitation,
        x: &x,
        y: &y,
        w: &w,
    }
    .cost(amplitude, decay)
    .sqrt()
}

/// Weighted residual of the saturation form at given parameters.
pub fn saturation_residual(x: &[f64], y: &[f64], w: &[f64], amplitude: f64, decay: f64) -> f64 {
    Problem {
        shape: Shape::Saturation,
        x,
        y,
        w,
    }
    .cost(amplitude, decay)
    .sqrt()
}

fn excitation_data(curve: &CfCurve) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    (
        curve.days.iter().map(|&d| d as f64).collect(),
        curve.p_hat.clone(),
        curve.exposed.iter().map(|&n| n as f64).collect(),
    )
}

/// Fits `A / (1 + e^{b t})` to a CF curve, weighting each day by its trail count.
pub fn fit_excitation_curve(curve: &CfCurve) -> Result<CurveFit> {
    let (x, y, w) = excitation_data(curve);
    fit(Shape::Excitation, &x, &y, &w)
}

/// Fits `A · (1 − ln(1 + e^{−b x}) / ln 2)` to `(x, y)` with weights `w`.
pub fn fit_saturation_curve(x: &[f64], y: &[f64], w: &[f64]) -> Result<CurveFit> {
    fit(Shape::Saturation, x, y, w)
}

/// Binned (excitation sum, next-day event frequency) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationPoints {
    /// Mean excitation sum in each bin.
    pub x: Vec<f64>,
    /// Fraction of entity-days in the bin with an event.
    pub y: Vec<f64>,
    pub n: Vec<u64>,
}

/// For every entity-day after an entity's first event, the excitation sum
/// `Σ g2(d − t_e)` at the start of the day and whether an event followed
/// within the day; days are pooled into bins of width `bin_width` in the sum.
/// Days with a sum below `min_x` are skipped.
pub fn saturation_points(
    corpus: &[EntityRecord],
    params: &RppParams,
    corpus_end: f64,
    bin_width: f64,
    min_x: f64,
) -> Result<SaturationPoints> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(invalid("bin_width", "must be finite and > 0"));
    }
    let per_entity = corpus
        .par_iter()
        .map(|e| -> Result<Vec<(f64, u64, u64)>> {
            let beta = params.kernel_for(&e.covariates)?.beta;
            let mut bins: Vec<(f64, u64, u64)> = Vec::new();
            let Some(&first) = e.events.first() else {
                return Ok(bins);
            };
            let mut d = first.floor() + 1.0;
            let mut k = e.events.partition_point(|&t| t < d);
            while d + 1.0 <= corpus_end {
                while k < e.events.len() && e.events[k] < d {
                    k += 1;
                }
                let x: f64 = e.events[..k].iter().map(|&t| g2_unchecked(d - t, beta)).sum();
                if x >= min_x {
                    let hit = k < e.events.len() && e.events[k] < d + 1.0;
                    let bin = (x / bin_width) as usize;
                    if bins.len() <= bin {
                        bins.resize(bin + 1, (0.0, 0, 0));
                    }
                    bins[bin].0 += x;
                    bins[bin].1 += hit as u64;
                    bins[bin].2 += 1;
                }
                d += 1.0;
            }
            Ok(bins)
        })
        .collect::<Result<Vec<_>>>()?;
    let len = per_entity.iter().map(Vec::len).max().unwrap_or(0);
    let mut total = vec![(0.0, 0u64, 0u64); len];
    for bins in &per_entity {
        for (acc, b) in total.iter_mut().zip(bins) {
            acc.0 += b.0;
            acc.1 += b.1;
            acc.2 += b.2;
        }
    }
    let mut out = SaturationPoints {
        x: Vec::new(),
        y: Vec::new(),
        n: Vec::new(),
    };
    for (sx, hits, n) in total.into_iter().filter(|b| b.2 > 0) {
        out.x.push(sx / n as f64);
        out.y.push(hits as f64 / n as f64);
        out.n.push(n);
    }
    Ok(out)
}

/// Baseline rates estimated by exposure counting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEstimate {
    pub lambda0: f64,
    /// `None` when there is no exposure after a first event.
    pub c1: Option<f64>,
    /// Approximate standard error of `c1` (delta method on the two Poisson counts).
    pub c1_std_error: Option<f64>,
    pub pre_events: u64,
    pub pre_exposure: f64,
    pub post_events: u64,
    pub post_exposure: f64,
}

impl BaselineEstimate {
    pub fn c1(&self) -> Result<f64> {
        self.c1.ok_or_else(|| {
            RppError::InsufficientData("no exposure after a first event outside excitation windows".into())
        })
    }
}

/// `λ0` is the first-event rate over entity-days before each entity's first
/// event. `C1` compares the rate after the first event, excluding the
/// `excitation_window` days after every event, with `λ0`.
pub fn estimate_baseline(corpus: &[EntityRecord], corpus_end: f64, excitation_window: f64) -> Result<BaselineEstimate> {
    if corpus.is_empty() {
        return Err(RppError::InsufficientData("empty corpus".into()));
    }
    if !(corpus_end.is_finite() && corpus_end > 0.0) {
        return Err(RppError::InvalidHorizon {
            start: 0.0,
            end: corpus_end,
        });
    }
    if !(excitation_window.is_finite() && excitation_window >= 0.0) {
        return Err(invalid("excitation_window", "must be finite and >= 0"));
    }
    let mut pre_events = 0u64;
    let mut pre_exposure = 0.0;
    let mut post_events = 0u64;
    let mut post_exposure = 0.0;
    for e in corpus {
        let ev: Vec<f64> = e.events.iter().copied().filter(|&t| t < corpus_end).collect();
        let Some(&first) = ev.first() else {
            pre_exposure += corpus_end;
            continue;
        };
        pre_events += 1;
        pre_exposure += first;
        // covered = |∪ [t_i, t_i + W) ∩ [first, end)|
        let mut covered = 0.0;
        let mut reach = first;
        for (i, &t) in ev.iter().enumerate() {
            if i > 0 && t - ev[i - 1] >= excitation_window {
                post_events += 1;
            }
            let lo = t.max(reach);
            let hi = (t + excitation_window).min(corpus_end);
            if hi > lo {
                covered += hi - lo;
                reach = hi;
            }
        }
        post_exposure += (corpus_end - first) - covered;
    }
    let lambda0 = if pre_exposure > 0.0 {
        pre_events as f64 / pre_exposure
    } else {
        0.0
    };
    let (c1, c1_std_error) = if post_exposure > 0.0 && lambda0 > 0.0 {
        let ratio = (post_events as f64 / post_exposure) / lambda0;
        let se = (post_events > 0).then(|| ratio * (1.0 / post_events as f64 + 1.0 / pre_events as f64).sqrt());
        (Some(ratio - 1.0), se)
    } else {
        (None, None)
    };
    Ok(BaselineEstimate {
        lambda0,
        c1,
        c1_std_error,
        pre_events,
        pre_exposure,
        post_events,
        post_exposure,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfFitConfig {
    pub trails: TrailConfig,
    /// Days after each event excluded when estimating `C1`.
    pub excitation_window: f64,
    /// Bin width in the excitation sum for the saturation curve.
    pub saturation_bin: f64,
    /// Largest `a1` reported. When the saturation curve shows no curvature the
    /// data only pin down the initial slope `a1·b1`, which is kept.
    pub max_amplitude: f64,
}

impl Default for CfFitConfig {
    fn default() -> Self {
        Self {
            trails: TrailConfig::default(),
            excitation_window: 365.0,
            saturation_bin: 0.05,
            max_amplitude: 100.0,
        }
    }
}

/// Output of [`cf_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfFit {
    pub baseline: BaselineEstimate,
    pub curve: CfCurve,
    pub excitation: CurveFit,
    pub saturation: CurveFit,
    /// Constant-β model assembled from the three estimates.
    pub params: RppParams,
}

/// Baseline rates, the excitation decay (taken as a constant β) and the
/// saturation curve (scaled by `λ0` after removing the baseline) in one pass.
pub fn cf_fit(corpus: &[EntityRecord], corpus_end: f64, cfg: &CfFitConfig) -> Result<CfFit> {
    let baseline = estimate_baseline(corpus, corpus_end, cfg.excitation_window)?;
    if baseline.lambda0 <= 0.0 {
        return Err(RppError::InsufficientData("no first events to estimate the baseline".into()));
    }
    let c1 = baseline.c1.unwrap_or(0.0).max(0.0);
    let trails = build_trails(corpus, &cfg.trails, corpus_end)?;
    let curve = cf_curve(&trails)?;
    let excitation = fit_excitation_curve(&curve)?;
    let mut params = RppParams::homogeneous(baseline.lambda0);
    params.c1 = c1;
    params.beta = crate::model::RateModel::Fixed(excitation.decay);
    let pts = saturation_points(corpus, &params, corpus_end, cfg.saturation_bin, 0.0)?;
    let lift: Vec<f64> = pts.y.iter().map(|y| y / baseline.lambda0 - 1.0 - c1).collect();
    let w: Vec<f64> = pts.n.iter().map(|&n| n as f64).collect();
    let saturation = fit_saturation_curve(&pts.x, &lift, &w)?;
    if !(cfg.max_amplitude.is_finite() && cfg.max_amplitude > 0.0) {
        return Err(invalid("max_amplitude", "must be finite and > 0"));
    }
    params.a1 = saturation.amplitude.max(0.0);
    params.b1 = saturation.decay;
    if params.a1 > cfg.max_amplitude {
        params.b1 *= params.a1 / cfg.max_amplitude;
        params.a1 = cfg.max_amplitude;
    }
    params.validate()?;
    Ok(CfFit {
        baseline,
        curve,
        excitation,
        saturation,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RateModel;
    use crate::simulate::{corpus_simulate, SimConfig};
    use proptest::prelude::*;

    fn ent(id: &str, events: Vec<f64>) -> EntityRecord {
        EntityRecord::new(id, [0.0; 3]).with_events(events)
    }

    #[test]
    fn single_event_trail() {
        let cfg = TrailConfig::default();
        let t = build_trails(&[ent("a", vec![100.0])], &cfg, 1000.0).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].observed, 365);
        let t = build_trails(&[ent("a", vec![100.0])], &cfg, 300.0).unwrap();
        assert_eq!(t[0].observed, 200);
    }

    #[test]
    fn isolation_rule() {
        let cfg = TrailConfig {
            isolation_gap: 180.0,
            window: 365,
        };
        let t = build_trails(&[ent("a", vec![100.0, 110.0])], &cfg, 2000.0).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].anchor, 100.0);
        assert_eq!(t[0].event_days, vec![10]);
        assert!(build_trails(&[], &TrailConfig { isolation_gap: 0.0, window: 3 }, 1.0).is_err());
    }

    #[test]
    fn curve_counts() {
        assert!(matches!(cf_curve(&[]), Err(RppError::NoTrails)));
        let t = build_trails(&[ent("a", vec![0.0, 4.2]), ent("b", vec![0.0])], &TrailConfig::default(), 10.0).unwrap();
        let c = cf_curve(&t).unwrap();
        assert_eq!(c.days, (1..=10).collect::<Vec<_>>());
        assert!(c.exposed.iter().all(|&n| n == 2));
        assert_eq!(c.p_hat[4], 0.5);
        assert_eq!(c.p_hat.iter().filter(|&&p| p > 0.0).count(), 1);

        let t = build_trails(&[ent("a", vec![0.0, 4.5])], &TrailConfig::default(), 100.0).unwrap();
        let c = cf_curve(&t).unwrap();
        assert_eq!(c.p_hat[4], 1.0);
        assert_eq!(c.p_hat.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn event_free_trails_give_zero_curve() {
        let t = build_trails(&[ent("a", vec![0.0]), ent("b", vec![3.0])], &TrailConfig::default(), 900.0).unwrap();
        assert!(cf_curve(&t).unwrap().p_hat.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn trail_count_matches_brute_force() {
        let corpus: Vec<EntityRecord> = (0..50)
            .map(|i| {
                let ev: Vec<f64> = (0..(i % 7)).map(|k| ((i * 37 + k * 113) % 900) as f64 + 0.5).collect();
                ent(&format!("e{i:02}"), ev)
            })
            .collect();
        let cfg = TrailConfig {
            isolation_gap: 120.0,
            window: 200,
        };
        let mut brute = 0;
        for e in &corpus {
            for &t in &e.events {
                let prev = e.events.iter().copied().filter(|&s| s < t).fold(f64::NEG_INFINITY, f64::max);
                if t - prev >= 120.0 {
                    brute += 1;
                }
            }
        }
        // duplicate days never occur in this corpus, so the scan above is exact
        let trails = build_trails(&corpus, &cfg, 1000.0).unwrap();
        assert_eq!(trails.len(), brute);
        let mut rev = corpus.clone();
        rev.reverse();
        assert_eq!(build_trails(&rev, &cfg, 1000.0).unwrap(), trails);
    }

    fn noiseless_excitation(a: f64, b: f64) -> CfCurve {
        let days: Vec<u32> = (1..=365).collect();
        let p_hat = days.iter().map(|&d| a / (1.0 + (b * d as f64).exp())).collect();
        CfCurve {
            exposed: days.iter().map(|&d| 1000 - d as u64).collect(),
            events: vec![0; days.len()],
            days,
            p_hat,
        }
    }

    #[test]
    fn recovers_excitation_curve() {
        let f = fit_excitation_curve(&noiseless_excitation(11.62, 0.039)).unwrap();
        assert!(((f.amplitude - 11.62) / 11.62).abs() < 1e-4, "{f:?}");
        assert!(((f.decay - 0.039) / 0.039).abs() < 1e-4, "{f:?}");
        assert!(!f.boundary);
        assert!(f.residual <= excitation_residual(&noiseless_excitation(11.62, 0.039), 11.62, 0.039) + 1e-12);
    }

    #[test]
    fn excitation_fit_is_grid_optimal() {
        // noisy curve so the optimum has a nonzero residual
        let mut c = noiseless_excitation(0.02, 0.03);
        for (i, p) in c.p_hat.iter_mut().enumerate() {
            *p += 1e-4 * ((i * 7919 % 13) as f64 - 6.0) / 6.0;
        }
        let f = fit_excitation_curve(&c).unwrap();
        for i in 0..50 {
            for j in 0..50 {
                let a = f.amplitude * (0.9 + 0.2 * i as f64 / 49.0);
                let b = f.decay * (0.9 + 0.2 * j as f64 / 49.0);
                assert!(f.residual <= excitation_residual(&c, a, b) + 1e-15);
            }
        }
    }

    #[test]
    fn constant_curve_flags_boundary() {
        let mut c = noiseless_excitation(1.0, 0.1);
        c.p_hat.iter_mut().for_each(|p| *p = 0.003);
        let f = fit_excitation_curve(&c).unwrap();
        assert!(f.boundary, "{f:?}");
    }

    #[test]
    fn too_few_points() {
        let mut c = noiseless_excitation(1.0, 0.1);
        c.days.truncate(5);
        c.p_hat.truncate(5);
        c.exposed.truncate(5);
        c.events.truncate(5);
        assert!(fit_excitation_curve(&c).is_err());
    }

    fn saturation_data(a: f64, b: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let x: Vec<f64> = (1..=60).map(|i| i as f64 * 0.5).collect();
        let y = x.iter().map(|&v| a * (1.0 - softplus(-b * v) / LN_2)).collect();
        let w = vec![1.0; x.len()];
        (x, y, w)
    }

    #[test]
    fn recovers_saturation_curve() {
        let (x, y, w) = saturation_data(16.98, 0.15);
        let f = fit_saturation_curve(&x, &y, &w).unwrap();
        assert!(((f.amplitude - 16.98) / 16.98).abs() < 1e-4, "{f:?}");
        assert!(((f.decay - 0.15) / 0.15).abs() < 1e-4, "{f:?}");
        assert!(!f.boundary);
        assert!(f.residual <= saturation_residual(&x, &y, &w, 16.98, 0.15) + 1e-12);
    }

    #[test]
    fn saturation_fit_is_grid_optimal() {
        let (x, mut y, w) = saturation_data(3.0, 0.4);
        for (i, v) in y.iter_mut().enumerate() {
            *v += 0.01 * ((i * 31 % 7) as f64 - 3.0) / 3.0;
        }
        let f = fit_saturation_curve(&x, &y, &w).unwrap();
        for i in 0..50 {
            for j in 0..50 {
                let a = f.amplitude * (0.9 + 0.2 * i as f64 / 49.0);
                let b = f.decay * (0.9 + 0.2 * j as f64 / 49.0);
                assert!(f.residual <= saturation_residual(&x, &y, &w, a, b) + 1e-15);
            }
        }
    }

    #[test]
    fn linear_data_has_no_saturation_evidence() {
        let x: Vec<f64> = (1..=40).map(|i| i as f64 * 0.25).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.002 * v).collect();
        let f = fit_saturation_curve(&x, &y, &vec![1.0; x.len()]).unwrap();
        assert!(f.boundary, "{f:?}");
    }

    #[test]
    fn zero_event_corpus_baseline() {
        let corpus = vec![ent("a", vec![]), ent("b", vec![])];
        let b = estimate_baseline(&corpus, 100.0, 365.0).unwrap();
        assert_eq!(b.lambda0, 0.0);
        assert!(b.c1.is_none());
        assert!(matches!(b.c1(), Err(RppError::InsufficientData(_))));
        assert!(estimate_baseline(&[], 100.0, 365.0).is_err());
    }

    #[test]
    fn baseline_exposure_arithmetic() {
        // first event at 100; windows cover [100,150) and [300,370)
        let corpus = vec![ent("a", vec![100.0, 300.0, 320.0]), ent("b", vec![])];
        let b = estimate_baseline(&corpus, 1000.0, 50.0).unwrap();
        assert_eq!(b.pre_events, 1);
        assert_eq!(b.pre_exposure, 1100.0);
        assert_eq!(b.post_events, 1);
        assert_eq!(b.post_exposure, 900.0 - 120.0);
    }

    fn homogeneous_corpus(n: usize, lambda0: f64, t: f64, seed: u64) -> Vec<EntityRecord> {
        let ents: Vec<EntityRecord> = (0..n).map(|i| EntityRecord::new(format!("h{i}"), [0.0; 3])).collect();
        let sched = vec![Vec::new(); n];
        let res = corpus_simulate(&ents, &RppParams::homogeneous(lambda0), &sched, &SimConfig::new(0.0, t, seed)).unwrap();
        res.iter().zip(&ents).map(|(r, e)| r.to_record(e, &[])).collect()
    }

    #[test]
    fn homogeneous_c1_is_null() {
        let corpus = homogeneous_corpus(4000, 1e-3, 5000.0, 11);
        let b = estimate_baseline(&corpus, 5000.0, 100.0).unwrap();
        let c1 = b.c1().unwrap();
        let se = b.c1_std_error.unwrap();
        assert!(c1.abs() < 3.0 * se, "c1 {c1} se {se}");
        assert!((b.lambda0 - 1e-3).abs() < 3.0 * 1e-3 / (b.pre_events as f64).sqrt());
    }

    #[test]
    fn homogeneous_curve_is_flat() {
        let lambda0 = 2e-3;
        let corpus = homogeneous_corpus(3000, lambda0, 4000.0, 5);
        let trails = build_trails(&corpus, &TrailConfig::default(), 4000.0).unwrap();
        let c = cf_curve(&trails).unwrap();
        let hits: u64 = c.events.iter().sum();
        let exposed: u64 = c.exposed.iter().sum();
        let p = 1.0 - (-lambda0).exp();
        let mean = hits as f64 / exposed as f64;
        let sigma = (p * (1.0 - p) / exposed as f64).sqrt();
        assert!((mean - p).abs() < 3.0 * sigma, "mean {mean} expected {p}");
    }

    #[test]
    fn full_fit_on_synthetic_corpus() {
        let cal = crate::synth::Calibration::default();
        let c = crate::synth::generate_synthetic(3000, &cal, 2).unwrap();
        let f = cf_fit(&c.entities, c.t_end, &CfFitConfig::default()).unwrap();
        let rel = f.params.lambda0 / cal.lambda0 - 1.0;
        assert!(rel.abs() < 4.0 / (f.baseline.pre_events as f64).sqrt(), "{rel}");
        assert!(f.params.a1 > 0.0 && f.params.a1 <= 100.0 && f.params.b1 > 0.0);
        assert!(matches!(f.params.beta, RateModel::Fixed(b) if b > 0.0));
    }

    #[test]
    fn saturation_points_are_binned() {
        let mut p = RppParams::homogeneous(0.01);
        p.beta = RateModel::Fixed(0.1);
        let corpus = vec![ent("a", vec![10.0, 12.0, 30.0])];
        let s = saturation_points(&corpus, &p, 100.0, 0.05, 1e-3).unwrap();
        // days 11..=99 after the first event, all with a positive sum
        assert_eq!(s.n.iter().sum::<u64>(), 89);
        assert_eq!(s.y.iter().zip(&s.n).map(|(y, n)| (y * *n as f64).round() as u64).sum::<u64>(), 2);
        assert!(s.x.windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn p_hat_is_a_ratio_of_counts(
            evs in proptest::collection::vec(proptest::collection::vec(0.0f64..2000.0, 0..6), 1..20),
        ) {
            let corpus: Vec<EntityRecord> = evs.into_iter().enumerate().map(|(i, v)| ent(&format!("e{i}"), v)).collect();
            let trails = build_trails(&corpus, &TrailConfig { isolation_gap: 50.0, window: 120 }, 2100.0).unwrap();
            if let Ok(c) = cf_curve(&trails) {
                for i in 0..c.len() {
                    prop_assert!(c.events[i] <= c.exposed[i]);
                    prop_assert_eq!(c.p_hat[i], c.events[i] as f64 / c.exposed[i] as f64);
                    prop_assert!((0.0..=1.0).contains(&c.p_hat[i]));
                }
            }
        }
    }
}
