//! Approximate Bayesian computation for the covariate link coefficients.
//!
//! Proposals `υ` are drawn from the prior, a corpus is simulated for each, and
//! each simulation is compared with the observed corpus by two statistics:
//! the absolute difference in event counts (DNE) and the KL divergence between
//! inter-event gap histograms. Proposals that score low on both trace out a
//! surface in coefficient space; a quadratic is fitted to it and the point on
//! it closest to the origin is taken as the estimate.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, RppError};
use crate::kernels::{link_beta, N_COVARIATES};
use crate::model::{EntityRecord, RateModel, RppParams};
use crate::rng::{stream, Key};
use crate::simulate::{simulate_entity, SimConfig};

pub type Coefficients = [f64; N_COVARIATES];

/// Standard deviation of `log|ν|` when `N(0, 5)` is read as variance 5.
pub const SIGMA_VARIANCE_5: f64 = 2.236_067_977_499_79;
/// Standard deviation of `log|ν|` when `N(0, 5)` is read as standard deviation 5.
pub const SIGMA_SD_5: f64 = 5.0;

/// Each coefficient is `±exp(z)` with `z ~ N(0, σ)` and a fair random sign.
/// Draw `i` depends only on `(seed, i)`.
pub fn sample_prior(n: usize, seed: u64, sigma: f64) -> Result<Vec<Coefficients>> {
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid("sigma", "must be finite and > 0"));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| invalid("sigma", e.to_string()))?;
    Ok((0..n)
        .map(|i| {
            let mut rng = stream(seed, &[Key::Tag("prior"), Key::Index(i as u64)]);
            let mut v = [0.0; N_COVARIATES];
            for c in &mut v {
                let mag = normal.sample(&mut rng).exp();
                *c = if rng.random::<bool>() { mag } else { -mag };
            }
            v
        })
        .collect())
}

fn sorted_ids(corpus: &[EntityRecord]) -> Vec<&str> {
    let mut ids: Vec<&str> = corpus.iter().map(|e| e.id.as_str()).collect();
    ids.sort_unstable();
    ids
}

/// `|N_observed − N_simulated|` over corpora with the same entities.
pub fn dne(observed: &[EntityRecord], simulated: &[EntityRecord]) -> Result<u64> {
    if sorted_ids(observed) != sorted_ids(simulated) {
        return Err(RppError::MismatchedCorpora("entity sets differ".into()));
    }
    let count = |c: &[EntityRecord]| c.iter().map(|e| e.events.len() as u64).sum::<u64>();
    Ok(count(observed).abs_diff(count(simulated)))
}

/// Normalized histogram on `[0, max_gap)` in bins of `bin_width`, plus one
/// overflow bin for gaps `>= max_gap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapHistogram {
    pub bin_width: f64,
    pub max_gap: f64,
    pub masses: Vec<f64>,
}

pub const DEFAULT_BIN_WIDTH: f64 = 30.0;
pub const DEFAULT_MAX_GAP: f64 = 1800.0;
/// Floor added to empty bins of the second histogram before taking the KL divergence.
pub const KL_EPSILON: f64 = 1e-9;

impl GapHistogram {
    fn regular_bins(bin_width: f64, max_gap: f64) -> usize {
        (max_gap / bin_width).ceil() as usize
    }

    /// Builds a histogram from explicit masses (including the overflow bin).
    pub fn from_masses(bin_width: f64, max_gap: f64, masses: Vec<f64>) -> Result<Self> {
        check_binning(bin_width, max_gap)?;
        let n = Self::regular_bins(bin_width, max_gap) + 1;
        if masses.len() != n {
            return Err(RppError::DimensionMismatch {
                expected: n,
                got: masses.len(),
            });
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(invalid("masses", "must be finite and >= 0"));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid("masses", format!("must sum to 1, got {total}")));
        }
        Ok(Self {
            bin_width,
            max_gap,
            masses,
        })
    }

    /// Lower bin edges; the last bin is open-ended.
    pub fn edges(&self) -> Vec<f64> {
        (0..self.masses.len()).map(|k| k as f64 * self.bin_width).collect()
    }

    fn same_binning(&self, other: &Self) -> bool {
        self.bin_width == other.bin_width && self.max_gap == other.max_gap && self.masses.len() == other.masses.len()
    }
}

fn check_binning(bin_width: f64, max_gap: f64) -> Result<()> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(invalid("bin_width", "must be finite and > 0"));
    }
    if !(max_gap.is_finite() && max_gap > 0.0) {
        return Err(invalid("max_gap", "must be finite and > 0"));
    }
    Ok(())
}

/// Pools consecutive within-entity gaps across the corpus.
pub fn gap_histogram(corpus: &[EntityRecord], bin_width: f64, max_gap: f64) -> Result<GapHistogram> {
    check_binning(bin_width, max_gap)?;
    let regular = GapHistogram::regular_bins(bin_width, max_gap);
    let mut counts = vec![0u64; regular + 1];
    for e in corpus {
        for w in e.events.windows(2) {
            let gap = w[1] - w[0];
            let k = if gap >= max_gap {
                regular
            } else {
                ((gap / bin_width) as usize).min(regular - 1)
            };
            counts[k] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(RppError::NoGaps);
    }
    Ok(GapHistogram {
        bin_width,
        max_gap,
        masses: counts.iter().map(|&c| c as f64 / total as f64).collect(),
    })
}

/// `KL(P‖Q) = Σ P·ln(P/Q)`. Bins with `P = 0` contribute nothing. If some bin
/// has `P > 0` but `Q = 0`, every bin of `Q` is raised by [`KL_EPSILON`] and
/// renormalized first.
pub fn kl(p: &GapHistogram, q: &GapHistogram) -> Result<f64> {
    if !p.same_binning(q) {
        return Err(RppError::BinningMismatch);
    }
    let needs_floor = p.masses.iter().zip(&q.masses).any(|(&a, &b)| a > 0.0 && b <= 0.0);
    let norm = if needs_floor {
        1.0 + KL_EPSILON * q.masses.len() as f64
    } else {
        1.0
    };
    let eps = if needs_floor { KL_EPSILON } else { 0.0 };
    let d: f64 = p
        .masses
        .iter()
        .zip(&q.masses)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / ((b + eps) / norm)).ln())
        .sum();
    Ok(d.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub dne: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub index: usize,
    pub upsilon: Coefficients,
    pub stats: Option<SummaryStats>,
    /// Why the simulation for this proposal failed, if it did.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcConfig {
    pub seed: u64,
    pub t_start: f64,
    pub t_end: f64,
    /// Everything except β, which each proposal replaces by its own link.
    pub base: RppParams,
    pub prior_sigma: f64,
    pub bin_width: f64,
    pub max_gap: f64,
    /// Use one simulation stream per entity shared by every proposal instead of
    /// an independent stream per proposal.
    pub common_random_numbers: bool,
}

impl AbcConfig {
    pub fn new(base: RppParams, t_start: f64, t_end: f64, seed: u64) -> Self {
        Self {
            seed,
            t_start,
            t_end,
            base,
            prior_sigma: SIGMA_VARIANCE_5,
            bin_width: DEFAULT_BIN_WIDTH,
            max_gap: DEFAULT_MAX_GAP,
            common_random_numbers: false,
        }
    }

    fn params_for(&self, upsilon: &Coefficients) -> RppParams {
        RppParams {
            beta: RateModel::Covariate(*upsilon),
            ..self.base
        }
    }

    fn sim_seed(&self, index: usize) -> u64 {
        if self.common_random_numbers {
            self.seed
        } else {
            stream(self.seed, &[Key::Tag("abc"), Key::Index(index as u64)]).next_u64()
        }
    }
}

/// Simulates the observed entities over the configured horizon under `params`,
/// keeping each entity's observed inspections.
pub fn simulate_like(observed: &[EntityRecord], params: &RppParams, t_start: f64, t_end: f64, seed: u64) -> Result<Vec<EntityRecord>> {
    let cfg = SimConfig::new(t_start, t_end, seed);
    observed
        .par_iter()
        .map(|e| {
            let schedule: Vec<_> = e.inspections.iter().copied().filter(|i| i.day >= t_start).collect();
            let r = simulate_entity(e, params, &schedule, &cfg)?;
            let mut events: Vec<f64> = e.events.iter().copied().filter(|&t| t < t_start).collect();
            events.extend(&r.events);
            Ok(EntityRecord {
                id: e.id.clone(),
                covariates: e.covariates,
                events,
                inspections: e.inspections.clone(),
            })
        })
        .collect()
}

fn observed_window(observed: &[EntityRecord], cfg: &AbcConfig) -> Vec<EntityRecord> {
    observed
        .iter()
        .map(|e| EntityRecord {
            events: e.events.iter().copied().filter(|&t| t >= cfg.t_start && t < cfg.t_end).collect(),
            ..e.clone()
        })
        .collect()
}

fn stats_for(
    observed: &[EntityRecord],
    obs_hist: &GapHistogram,
    upsilon: &Coefficients,
    index: usize,
    cfg: &AbcConfig,
) -> Result<SummaryStats> {
    let params = cfg.params_for(upsilon);
    let sim = simulate_like(observed, &params, cfg.t_start, cfg.t_end, cfg.sim_seed(index))?;
    let sim: Vec<EntityRecord> = observed_window(&sim, cfg);
    let d = dne(observed, &sim)?;
    let k = match gap_histogram(&sim, cfg.bin_width, cfg.max_gap) {
        Ok(h) => kl(obs_hist, &h)?,
        // no simulated gaps at all: every bin of Q is empty
        Err(RppError::NoGaps) => {
            let empty = GapHistogram {
                masses: vec![0.0; obs_hist.masses.len()],
                ..obs_hist.clone()
            };
            kl(obs_hist, &empty)?
        }
        Err(e) => return Err(e),
    };
    Ok(SummaryStats { dne: d as f64, kl: k })
}

/// Evaluates the given coefficient vectors against the observed corpus.
/// Simulation failures are recorded on the proposal and do not stop the sweep.
pub fn evaluate_proposals(observed: &[EntityRecord], upsilons: &[Coefficients], cfg: &AbcConfig) -> Result<Vec<Proposal>> {
    cfg.base.validate()?;
    if !(cfg.t_start.is_finite() && cfg.t_end.is_finite() && cfg.t_start < cfg.t_end) {
        return Err(RppError::InvalidHorizon {
            start: cfg.t_start,
            end: cfg.t_end,
        });
    }
    let observed = observed_window(observed, cfg);
    let obs_hist = gap_histogram(&observed, cfg.bin_width, cfg.max_gap)?;
    Ok(upsilons
        .par_iter()
        .enumerate()
        .map(|(index, u)| match stats_for(&observed, &obs_hist, u, index, cfg) {
            Ok(s) => Proposal {
                index,
                upsilon: *u,
                stats: Some(s),
                error: None,
            },
            Err(e) => Proposal {
                index,
                upsilon: *u,
                stats: None,
                error: Some(e.to_string()),
            },
        })
        .collect())
}

/// Draws `n_proposals` coefficient vectors from the prior and evaluates each.
pub fn abc_sweep(observed: &[EntityRecord], n_proposals: usize, cfg: &AbcConfig) -> Result<Vec<Proposal>> {
    let draws = sample_prior(n_proposals, cfg.seed, cfg.prior_sigma)?;
    evaluate_proposals(observed, &draws, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRegion {
    /// Indices into the proposal slice, ascending.
    pub members: Vec<usize>,
    pub quantile: f64,
    /// The requested quantile was widened to find enough members.
    pub escalated: bool,
}

/// Indices of the `ceil(q·n)` smallest values, plus any ties with the largest of them.
fn bottom_set(values: &[(usize, f64)], q: f64) -> Vec<usize> {
    let k = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    let mut sorted: Vec<f64> = values.iter().map(|v| v.1).collect();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted[k - 1];
    values.iter().filter(|v| v.1 <= cut).map(|v| v.0).collect()
}

/// Proposals in both the bottom-`q` set by KL and the bottom-`q` set by DNE.
/// An empty intersection doubles `q` (up to 0.5) until one is found.
pub fn low_region(proposals: &[Proposal], q: f64) -> Result<LowRegion> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid("quantile", format!("must be in (0, 1), got {q}")));
    }
    let scored: Vec<(usize, SummaryStats)> = proposals
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.stats.filter(|s| s.dne.is_finite() && s.kl.is_finite()).map(|s| (i, s)))
        .collect();
    if scored.is_empty() {
        return Err(RppError::EmptyLowRegion { quantile: q });
    }
    let by_kl: Vec<(usize, f64)> = scored.iter().map(|(i, s)| (*i, s.kl)).collect();
    let by_dne: Vec<(usize, f64)> = scored.iter().map(|(i, s)| (*i, s.dne)).collect();
    let mut quantile = q;
    loop {
        let a = bottom_set(&by_kl, quantile);
        let b = bottom_set(&by_dne, quantile);
        let mut members: Vec<usize> = a.into_iter().filter(|i| b.contains(i)).collect();
        members.sort_unstable();
        if !members.is_empty() {
            return Ok(LowRegion {
                members,
                quantile,
                escalated: quantile != q,
            });
        }
        if quantile >= 0.5 {
            return Err(RppError::EmptyLowRegion { quantile });
        }
        quantile = (quantile * 2.0).min(0.5);
    }
}

/// `υ3 = c0 + c1·υ1 + c2·υ2 + c11·υ1² + c12·υ1·υ2 + c22·υ2²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Manifold {
    pub coefficients: [f64; 6],
}

impl Manifold {
    pub fn new(coefficients: [f64; 6]) -> Self {
        Self { coefficients }
    }

    pub fn basis(u1: f64, u2: f64) -> [f64; 6] {
        [1.0, u1, u2, u1 * u1, u1 * u2, u2 * u2]
    }

    pub fn eval(&self, u1: f64, u2: f64) -> f64 {
        Self::basis(u1, u2).iter().zip(&self.coefficients).map(|(b, c)| b * c).sum()
    }

    fn gradient(&self, u1: f64, u2: f64) -> [f64; 2] {
        let c = &self.coefficients;
        [c[1] + 2.0 * c[3] * u1 + c[4] * u2, c[2] + c[4] * u1 + 2.0 * c[5] * u2]
    }

    /// `F(υ1, υ2) = υ1² + υ2² + f(υ1, υ2)²`, the squared distance to the origin.
    pub fn objective(&self, u1: f64, u2: f64) -> f64 {
        let f = self.eval(u1, u2);
        u1 * u1 + u2 * u2 + f * f
    }

    pub fn objective_gradient(&self, u1: f64, u2: f64) -> [f64; 2] {
        let f = self.eval(u1, u2);
        let g = self.gradient(u1, u2);
        [2.0 * (u1 + f * g[0]), 2.0 * (u2 + f * g[1])]
    }

    fn objective_hessian(&self, u1: f64, u2: f64) -> [[f64; 2]; 2] {
        let c = &self.coefficients;
        let f = self.eval(u1, u2);
        let g = self.gradient(u1, u2);
        let h = [[2.0 * c[3], c[4]], [c[4], 2.0 * c[5]]];
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = 2.0 * (g[i] * g[j] + f * h[i][j]) + if i == j { 2.0 } else { 0.0 };
            }
        }
        out
    }

    /// Half-width of a square around the origin that contains every minimizer
    /// of the objective: `F(υ) >= |υ|²` and `F(0) = c0²`.
    pub fn bounding_box(&self) -> f64 {
        self.coefficients[0].abs().max(1e-12)
    }
}

/// Least-squares fit of `υ3` on `{1, υ1, υ2, υ1², υ1υ2, υ2²}` by QR.
pub fn fit_manifold(points: &[Coefficients]) -> Result<Manifold> {
    if points.len() < 6 {
        return Err(RppError::InsufficientData(format!(
            "need at least 6 points, got {}",
            points.len()
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid("points", "must be finite"));
    }
    let x = DMatrix::from_fn(points.len(), 6, |r, c| Manifold::basis(points[r][0], points[r][1])[c]);
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p[2]));
    // scale columns so the rank test is not fooled by units
    let scale: Vec<f64> = (0..6).map(|c| x.column(c).norm().max(f64::MIN_POSITIVE)).collect();
    let xs = DMatrix::from_fn(x.nrows(), 6, |r, c| x[(r, c)] / scale[c]);
    let qr = xs.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..6).map(|i| r[(i, i)].abs()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if dmin > 0.0 { dmax / dmin } else { f64::INFINITY };
    if !(condition < 1e10) {
        return Err(RppError::RankDeficient { condition });
    }
    let qty = qr.q().transpose() * y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(RppError::RankDeficient { condition })?;
    let mut coefficients = [0.0; 6];
    for c in 0..6 {
        coefficients[c] = beta[c] / scale[c];
    }
    Ok(Manifold { coefficients })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosestPoint {
    pub point: Coefficients,
    pub objective: f64,
    pub gradient_norm: f64,
}

const SCAN: usize = 64;
const NEWTON_ITER: usize = 200;
const STATIONARY: f64 = 1e-6;

fn newton(m: &Manifold, mut u: [f64; 2]) -> Option<([f64; 2], f64, f64)> {
    let mut fval = m.objective(u[0], u[1]);
    for _ in 0..NEWTON_ITER {
        let g = m.objective_gradient(u[0], u[1]);
        let gn = g[0].hypot(g[1]);
        if gn < 1e-12 * (1.0 + fval) {
            break;
        }
        let h = m.objective_hessian(u[0], u[1]);
        // shift the Hessian until it is positive definite
        let mut tau = 0.0;
        let dir = loop {
            let a = h[0][0] + tau;
            let d = h[1][1] + tau;
            let det = a * d - h[0][1] * h[1][0];
            if a > 0.0 && det > 0.0 {
                break [-(d * g[0] - h[0][1] * g[1]) / det, -(a * g[1] - h[1][0] * g[0]) / det];
            }
            tau = if tau == 0.0 { 1e-8 * (1.0 + h[0][0].abs() + h[1][1].abs()) } else { tau * 10.0 };
        };
        let slope = g[0] * dir[0] + g[1] * dir[1];
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = [u[0] + step * dir[0], u[1] + step * dir[1]];
            let fc = m.objective(cand[0], cand[1]);
            if fc <= fval + 1e-4 * step * slope {
                u = cand;
                fval = fc;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let g = m.objective_gradient(u[0], u[1]);
    let gn = g[0].hypot(g[1]);
    (fval.is_finite() && gn.is_finite()).then_some((u, fval, gn))
}

/// Point on the manifold closest to the origin. Starts are the local minima of a
/// coarse scan of the bounding box, each refined by damped Newton iteration.
pub fn closest_point(manifold: &Manifold) -> Result<ClosestPoint> {
    if manifold.coefficients.iter().any(|c| !c.is_finite()) {
        return Err(invalid("manifold", "coefficients must be finite"));
    }
    let r = manifold.bounding_box();
    let at = |i: usize| -r + 2.0 * r * i as f64 / (SCAN - 1) as f64;
    let grid: Vec<Vec<f64>> = (0..SCAN)
        .map(|i| (0..SCAN).map(|j| manifold.objective(at(i), at(j))).collect())
        .collect();
    let mut starts = vec![[0.0, 0.0]];
    for i in 0..SCAN {
        for j in 0..SCAN {
            let v = grid[i][j];
            let mut is_min = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) != (0, 0) && a >= 0 && b >= 0 && (a as usize) < SCAN && (b as usize) < SCAN && grid[a as usize][b as usize] < v {
                        is_min = false;
                    }
                }
            }
            if is_min {
                starts.push([at(i), at(j)]);
            }
        }
    }
    let best = starts
        .iter()
        .filter_map(|&s| newton(manifold, s))
        .filter(|&(_, _, gn)| gn < STATIONARY)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| RppError::OptimizerFailure("no start reached a stationary point".into()))?;
    let (u, objective, gradient_norm) = best;
    Ok(ClosestPoint {
        point: [u[0], u[1], manifold.eval(u[0], u[1])],
        objective,
        gradient_norm,
    })
}

/// Per-entity `β` induced by a coefficient vector.
pub fn induced_betas(corpus: &[EntityRecord], upsilon: &Coefficients) -> Result<Vec<f64>> {
    corpus.iter().map(|e| link_beta(&e.covariates, upsilon)).collect()
}

/// Sample Pearson correlation; `None` when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Output of [`abc_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbcFit {
    pub proposals: Vec<Proposal>,
    pub region: LowRegion,
    pub manifold: Manifold,
    pub mode: ClosestPoint,
}

/// Points needed to fit the six-coefficient manifold.
pub const MIN_MANIFOLD_POINTS: usize = 6;

/// Low region, manifold fit and closest point for an evaluated sweep. The
/// quantile is doubled (up to 0.5) while the region has fewer points than
/// the manifold needs.
pub fn fit_proposals(proposals: Vec<Proposal>, quantile: f64) -> Result<AbcFit> {
    let mut region = low_region(&proposals, quantile)?;
    while region.members.len() < MIN_MANIFOLD_POINTS && region.quantile < 0.5 {
        let wider = low_region(&proposals, (region.quantile * 2.0).min(0.5))?;
        region = LowRegion {
            escalated: true,
            ..wider
        };
    }
    let points: Vec<Coefficients> = region.members.iter().map(|&i| proposals[i].upsilon).collect();
    let manifold = fit_manifold(&points)?;
    let mode = closest_point(&manifold)?;
    Ok(AbcFit {
        proposals,
        region,
        manifold,
        mode,
    })
}

/// Sweep, low-statistic region, manifold fit and closest point in one call.
pub fn abc_fit(observed: &[EntityRecord], n_proposals: usize, quantile: f64, cfg: &AbcConfig) -> Result<AbcFit> {
    fit_proposals(abc_sweep(observed, n_proposals, cfg)?, quantile)
}
