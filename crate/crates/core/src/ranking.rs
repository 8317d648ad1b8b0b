//! Ranking evaluation of competing models.
//!
//! On the day of each event, every entity's vulnerability is computed under
//! two models. A model's rank for the event is the number of entities it
//! scored strictly above the entity that failed, so lower is better. The two
//! models are compared event by event with an exact sign test.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, RppError};
use crate::intensity::{EntityModel, Response};
use crate::likelihood::log_likelihood;
use crate::model::{EntityRecord, RateModel, RppParams};

/// Vulnerability of each entity at `day`, from history strictly before it.
pub fn vulnerability_snapshot(corpus: &[EntityRecord], params: &RppParams, day: f64) -> Result<Vec<f64>> {
    if !day.is_finite() {
        return Err(invalid("day", "must be finite"));
    }
    let models: Vec<EntityModel> = corpus
        .iter()
        .map(|e| EntityModel::resolve(params, e))
        .collect::<Result<_>>()?;
    Ok(snapshot_with(corpus, &models, day).into_iter().map(|(v, _)| v).collect())
}

/// `(λ(day), baseline(day))` per entity.
fn snapshot_with(corpus: &[EntityRecord], models: &[EntityModel], day: f64) -> Vec<(f64, f64)> {
    corpus
        .par_iter()
        .zip(models.par_iter())
        .map(|(e, m)| {
            let regs = m.regulators(&e.inspections);
            let had = e.events.first().is_some_and(|&t| t < day);
            (m.rate(day, &e.events, &regs, Response::Saturated), m.baseline(had))
        })
        .collect()
}

/// Number of entities with strictly greater vulnerability than `entity`.
pub fn rank_at_event(snapshot: &[f64], entity: usize) -> Result<usize> {
    let v = *snapshot.get(entity).ok_or_else(|| RppError::UnknownEntity(entity.to_string()))?;
    Ok(snapshot.iter().filter(|&&x| x > v).count())
}

/// `P(X ≥ k)` for `X ~ Binomial(n, 1/2)`.
pub fn binomial_upper_tail(n: u64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    // pmf(n) = 2^-n, then pmf(j-1) = pmf(j)·j/(n-j+1), summed from the far tail inward
    if n > 1000 {
        return log_upper_tail(n, k);
    }
    let mut pmf = 0.5f64.powi(n as i32);
    let mut s = 0.0;
    let mut j = n;
    loop {
        s += pmf;
        if j == k {
            break;
        }
        pmf *= j as f64 / (n - j + 1) as f64;
        j -= 1;
    }
    s.min(1.0)
}

fn log_upper_tail(n: u64, k: u64) -> f64 {
    let ln2 = std::f64::consts::LN_2;
    let mut ln_c = 0.0;
    let mut terms = Vec::with_capacity((n + 1) as usize);
    for j in 0..=n {
        if j > 0 {
            ln_c += ((n - j + 1) as f64).ln() - (j as f64).ln();
        }
        terms.push(ln_c - n as f64 * ln2);
    }
    terms[k as usize..].iter().rev().map(|x| x.exp()).sum::<f64>().min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Favored {
    A,
    B,
    Neither,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
    pub favored: Favored,
    /// One-sided exact p-value toward the model with more wins; `None` when
    /// every comparison tied.
    pub p_value: Option<f64>,
    pub p_value_two_sided: Option<f64>,
}

/// Sign test where a win means model A ranked the failing entity strictly better.
pub fn sign_test(wins: u64, losses: u64, ties: u64) -> SignTest {
    let n = wins + losses;
    let (favored, p) = if n == 0 {
        (Favored::Neither, None)
    } else {
        let f = match wins.cmp(&losses) {
            std::cmp::Ordering::Greater => Favored::A,
            std::cmp::Ordering::Less => Favored::B,
            std::cmp::Ordering::Equal => Favored::Neither,
        };
        (f, Some(binomial_upper_tail(n, wins.max(losses))))
    };
    SignTest {
        wins,
        losses,
        ties,
        favored,
        p_value: p,
        p_value_two_sided: p.map(|p| (2.0 * p).min(1.0)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub event_time: f64,
    pub entity: String,
    pub rank_a: usize,
    pub rank_b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rows: Vec<RankRow>,
    /// Events in the window dropped by the baseline filter.
    pub filtered: usize,
    pub test: SignTest,
}

/// Ranks every event in `[window.0, window.1)` under models `a` and `b`.
///
/// Snapshots are taken at the start of the event's day. With `baseline_filter`
/// set, events where either model leaves the failing entity within `1e-12`
/// relative of its own baseline `λ0·(1 + C1·1[N_E≥1])` are dropped.
pub fn compare_models(
    corpus: &[EntityRecord],
    a: &RppParams,
    b: &RppParams,
    window: (f64, f64),
    baseline_filter: bool,
) -> Result<RankReport> {
    if !(window.0.is_finite() && window.1.is_finite() && window.0 < window.1) {
        return Err(RppError::InvalidHorizon {
            start: window.0,
            end: window.1,
        });
    }
    for e in corpus {
        e.validate_history()?;
    }
    let resolve = |p: &RppParams| -> Result<Vec<EntityModel>> {
        corpus.iter().map(|e| EntityModel::resolve(p, e)).collect()
    };
    let (ma, mb) = (resolve(a)?, resolve(b)?);

    let mut by_day: BTreeMap<i64, Vec<(f64, usize)>> = BTreeMap::new();
    for (i, e) in corpus.iter().enumerate() {
        for &t in e.events.iter().filter(|&&t| t >= window.0 && t < window.1) {
            by_day.entry(t.floor() as i64).or_default().push((t, i));
        }
    }
    let days: Vec<(i64, Vec<(f64, usize)>)> = by_day.into_iter().collect();
    let per_day: Vec<(Vec<RankRow>, usize)> = days
        .par_iter()
        .map(|(day, events)| {
            let d = *day as f64;
            let sa = snapshot_with(corpus, &ma, d);
            let sb = snapshot_with(corpus, &mb, d);
            let va: Vec<f64> = sa.iter().map(|x| x.0).collect();
            let vb: Vec<f64> = sb.iter().map(|x| x.0).collect();
            let off_baseline = |(v, base): (f64, f64)| (v - base).abs() > 1e-12 * base.abs().max(f64::MIN_POSITIVE);
            let mut rows = Vec::new();
            let mut dropped = 0;
            for &(t, i) in events {
                if baseline_filter && !(off_baseline(sa[i]) && off_baseline(sb[i])) {
                    dropped += 1;
                    continue;
                }
                rows.push(RankRow {
                    event_time: t,
                    entity: corpus[i].id.clone(),
                    rank_a: va.iter().filter(|&&x| x > va[i]).count(),
                    rank_b: vb.iter().filter(|&&x| x > vb[i]).count(),
                });
            }
            (rows, dropped)
        })
        .collect();

    let mut rows = Vec::new();
    let mut filtered = 0;
    for (r, d) in per_day {
        rows.extend(r);
        filtered += d;
    }
    rows.sort_by(|x, y| x.event_time.total_cmp(&y.event_time).then_with(|| x.entity.cmp(&y.entity)));
    if rows.is_empty() {
        return Err(RppError::NoQualifyingEvents);
    }
    let (mut w, mut l, mut t) = (0, 0, 0);
    for r in &rows {
        match r.rank_a.cmp(&r.rank_b) {
            std::cmp::Ordering::Less => w += 1,
            std::cmp::Ordering::Greater => l += 1,
            std::cmp::Ordering::Equal => t += 1,
        }
    }
    Ok(RankReport {
        rows,
        filtered,
        test: sign_test(w, l, t),
    })
}

/// Search range for [`fit_constant_beta`].
pub const CONSTANT_BETA_RANGE: (f64, f64) = (1e-5, 10.0);

/// `params` with β replaced by the single value maximizing the log-likelihood
/// of `corpus` on `[0, t_max]`. Golden-section search over `ln β`.
pub fn fit_constant_beta(corpus: &[EntityRecord], params: &RppParams, t_max: f64) -> Result<RppParams> {
    let with = |b: f64| RppParams {
        beta: RateModel::Fixed(b),
        ..*params
    };
    let ll = |lb: f64| -> Result<f64> { Ok(log_likelihood(corpus, &with(lb.exp()), t_max)?.value()) };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (CONSTANT_BETA_RANGE.0.ln(), CONSTANT_BETA_RANGE.1.ln());
    let mut m1 = hi - g * (hi - lo);
    let mut m2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (ll(m1)?, ll(m2)?);
    while hi - lo > 1e-6 {
        if f1 > f2 {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - g * (hi - lo);
            f1 = ll(m1)?;
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + g * (hi - lo);
            f2 = ll(m2)?;
        }
    }
    Ok(with((0.5 * (lo + hi)).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Inspection, InspectionEffect, InspectionOutcome, RateModel};
    use proptest::prelude::*;

    fn params(beta: RateModel) -> RppParams {
        RppParams {
            lambda0: 0.01,
            c1: 0.1,
            a1: 2.0,
            b1: 1.0,
            a3: 0.5,
            b3: 1.0,
            beta,
            gamma: RateModel::Fixed(0.01),
            inspection_effect: InspectionEffect::default(),
        }
    }

    #[test]
    fn quiet_corpus_is_flat() {
        let corpus: Vec<_> = (0..5).map(|i| EntityRecord::new(format!("e{i}"), [0.0; 3])).collect();
        let p = params(RateModel::Fixed(0.1));
        let s = vulnerability_snapshot(&corpus, &p, 100.0).unwrap();
        assert!(s.iter().all(|&v| v == 0.01));
        for i in 0..5 {
            assert_eq!(rank_at_event(&s, i).unwrap(), 0);
        }
    }

    #[test]
    fn recent_event_outranks() {
        let quiet = EntityRecord::new("q", [0.0; 3]);
        let busy = EntityRecord::new("b", [0.0; 3]).with_events(vec![90.0]);
        let p = params(RateModel::Fixed(0.1));
        let s = vulnerability_snapshot(&[quiet, busy], &p, 100.0).unwrap();
        assert!(s[1] > s[0]);
        assert_eq!(rank_at_event(&s, 1).unwrap(), 0);
        assert_eq!(rank_at_event(&s, 0).unwrap(), 1);
    }

    #[test]
    fn snapshot_matches_pointwise() {
        let e = EntityRecord::new("x", [0.2, -0.1, 0.3])
            .with_events(vec![5.0, 40.0, 100.0])
            .with_inspections(vec![Inspection::new(50.0, InspectionOutcome::Clean)]);
        let p = params(RateModel::Covariate([1.0, -2.0, 0.5]));
        for d in [0.0, 5.0, 60.0, 100.0, 150.0] {
            let s = vulnerability_snapshot(std::slice::from_ref(&e), &p, d).unwrap();
            assert_eq!(s[0], crate::intensity::intensity(d, &e, &p).unwrap());
        }
    }

    #[test]
    fn identical_models_tie() {
        let corpus = vec![
            EntityRecord::new("a", [0.0; 3]).with_events(vec![10.0, 50.0]),
            EntityRecord::new("b", [0.0; 3]).with_events(vec![30.0, 60.5]),
        ];
        let p = params(RateModel::Fixed(0.05));
        let r = compare_models(&corpus, &p, &p, (40.0, 100.0), true).unwrap();
        assert_eq!(r.test.ties as usize, r.rows.len());
        assert_eq!(r.test.p_value, None);
        assert_eq!(r.test.favored, Favored::Neither);
    }

    #[test]
    fn ten_straight_wins() {
        let t = sign_test(10, 0, 3);
        assert_eq!(t.p_value, Some(2f64.powi(-10)));
        assert_eq!(t.favored, Favored::A);
    }

    #[test]
    fn no_events_in_window() {
        let corpus = vec![EntityRecord::new("a", [0.0; 3]).with_events(vec![1.0])];
        let p = params(RateModel::Fixed(0.05));
        assert!(matches!(
            compare_models(&corpus, &p, &p, (10.0, 20.0), false),
            Err(RppError::NoQualifyingEvents)
        ));
    }

    #[test]
    fn baseline_filter_drops_first_events() {
        let corpus = vec![
            EntityRecord::new("a", [0.0; 3]).with_events(vec![15.0]),
            EntityRecord::new("b", [0.0; 3]).with_events(vec![5.0, 18.0]),
        ];
        let p = params(RateModel::Fixed(0.05));
        let r = compare_models(&corpus, &p, &p, (10.0, 20.0), true).unwrap();
        assert_eq!(r.filtered, 1);
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].entity, "b");
    }

    #[test]
    fn constant_beta_recovery() {
        let truth = params(RateModel::Fixed(0.05));
        let corpus: Vec<_> = (0..400).map(|i| EntityRecord::new(format!("e{i:03}"), [0.0; 3])).collect();
        let cfg = crate::simulate::SimConfig::new(0.0, 2000.0, 4);
        let sims = crate::simulate::corpus_simulate(&corpus, &truth, &vec![Vec::new(); 400], &cfg).unwrap();
        let corpus: Vec<_> = corpus.iter().zip(&sims).map(|(e, s)| s.to_record(e, &[])).collect();
        let fit = fit_constant_beta(&corpus, &truth, 2000.0).unwrap();
        let RateModel::Fixed(b) = fit.beta else { panic!() };
        assert!((b / 0.05 - 1.0).abs() < 0.3, "{b}");
    }

    fn enumerate_tail(n: u32, k: u32) -> f64 {
        let hits = (0u32..1 << n).filter(|m| m.count_ones() >= k).count();
        hits as f64 / f64::from(1u32 << n)
    }

    #[test]
    fn binomial_tail_matches_enumeration() {
        for n in 1..=16 {
            for k in 0..=n + 1 {
                let exact = enumerate_tail(n, k);
                let got = binomial_upper_tail(u64::from(n), u64::from(k));
                assert!((got - exact).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }

    proptest! {
        #[test]
        fn ranks_invariant_under_monotone_map(
            xs in proptest::collection::vec(-5.0f64..5.0, 1..40),
            pick in any::<proptest::sample::Index>(),
        ) {
            let i = pick.index(xs.len());
            let mapped: Vec<f64> = xs.iter().map(|x| x.exp() * 3.0 + 1.0).collect();
            let brute = xs.iter().filter(|&&x| x > xs[i]).count();
            prop_assert_eq!(rank_at_event(&xs, i).unwrap(), brute);
            prop_assert_eq!(rank_at_event(&mapped, i).unwrap(), brute);
        }

        #[test]
        fn sign_test_depends_on_counts_only(w in 0u64..60, l in 0u64..60, t in 0u64..20) {
            let a = sign_test(w, l, t);
            let b = sign_test(w, l, 0);
            prop_assert_eq!(a.p_value, b.p_value);
            let swapped = sign_test(l, w, t);
            prop_assert_eq!(a.p_value, swapped.p_value);
        }
    }
}
