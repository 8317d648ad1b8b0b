use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rpp_core::abc::{abc_sweep, fit_proposals, AbcConfig, SIGMA_VARIANCE_5};
use rpp_core::cf::{cf_fit as run_cf, CfFitConfig};
use rpp_core::io::{
    apply_normalization, ingest, normalize_covariates, read_config, write_corpus, write_csv, write_json,
    CorpusFiles, FitMethod, IngestOptions, ModelArtifact, Provenance,
};
use rpp_core::policy::{cost_curve, optimal_y, run_policy, PolicyConfig, PolicyReport};
use rpp_core::ranking::{compare_models, fit_constant_beta};
use rpp_core::simulate::{corpus_simulate, SimConfig};
use rpp_core::synth::{generate_synthetic, Calibration};
use rpp_core::{EntityRecord, RateModel, RepairKernelParams, RppParams};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::settings::Settings;

fn out_dir(s: &mut Settings, default: &str) -> CliResult<PathBuf> {
    let out = PathBuf::from(s.get::<String>("out", default.to_string())?);
    std::fs::create_dir_all(&out).map_err(|e| CliError::Usage(format!("{}: {e}", out.display())))?;
    Ok(out)
}

fn epoch(s: &mut Settings) -> CliResult<IngestOptions> {
    let epoch = s
        .optional::<String>("epoch")?
        .map(|d| NaiveDate::parse_from_str(&d, "%Y-%m-%d"))
        .transpose()
        .map_err(|e| CliError::Usage(format!("epoch: {e}")))?;
    Ok(IngestOptions { epoch })
}

/// Raw-covariate entities of the corpus in `data`.
fn load_raw(s: &mut Settings, data: &Path) -> CliResult<Vec<EntityRecord>> {
    let opts = epoch(s)?;
    let ing = ingest(&CorpusFiles::in_dir(data), &opts)?;
    if !ing.rejected.is_empty() {
        eprintln!("warning: {} rejected rows (see ingest-check)", ing.rejected.len());
    }
    Ok(ing.entities)
}

/// `t_end` from the settings, falling back to the corpus's own `corpus.cfg`.
fn corpus_end(s: &mut Settings, data: &Path) -> CliResult<f64> {
    if let Some(t) = s.optional::<f64>("t_end")? {
        return Ok(t);
    }
    let cfg = data.join("corpus.cfg");
    let t = read_config(&cfg)
        .ok()
        .and_then(|m| m.get("t_end").and_then(|v| v.parse::<f64>().ok()))
        .ok_or_else(|| CliError::Usage("t_end not given and not found in corpus.cfg".into()))?;
    s.set("t_end", Some(t));
    s.get("t_end", t)
}

fn load_model(s: &mut Settings, key: &str) -> CliResult<ModelArtifact> {
    let p = s.path(key)?;
    Ok(ModelArtifact::load(&p)?)
}

/// Normalizes with the model's stored bounds when it has them.
fn normalized(raw: &[EntityRecord], model: Option<&ModelArtifact>) -> CliResult<Vec<EntityRecord>> {
    match model.and_then(|m| m.normalization.as_ref()) {
        Some(b) => Ok(apply_normalization(raw, b)),
        None => Ok(normalize_covariates(raw)?.entities),
    }
}

fn stats(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

pub fn synth(s: &mut Settings) -> CliResult<()> {
    let seed = s.get("seed", 0u64)?;
    let n = s.get("entities", 2000usize)?;
    let years = s.get("years", 20.0f64)?;
    let out = out_dir(s, "synth")?;
    s.echo("synth", &out)?;
    let cal = Calibration {
        horizon_days: years * 365.0,
        ..Calibration::default()
    };
    let corpus = generate_synthetic(n, &cal, seed)?;
    corpus.write(&out)?;
    let events: usize = corpus.entities.iter().map(|e| e.events.len()).sum();
    println!("wrote {n} entities, {events} events to {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct IngestSummary {
    entities: usize,
    event_rows: u64,
    inspection_rows: u64,
    events: usize,
    inspections: usize,
    rejected: usize,
    constant_columns: Vec<usize>,
}

pub fn ingest_check(s: &mut Settings) -> CliResult<()> {
    s.get("seed", 0u64)?;
    let data = s.path("data")?;
    let opts = epoch(s)?;
    let default_out = data.display().to_string();
    let out = out_dir(s, &default_out)?;
    s.echo("ingest-check", &out)?;
    let ing = ingest(&CorpusFiles::in_dir(&data), &opts)?;
    let norm = normalize_covariates(&ing.entities)?;
    write_csv(
        &out.join("rejected.csv"),
        &["file", "line", "reason"],
        ing.rejected.iter().map(|r| vec![r.file.clone(), r.line.to_string(), r.reason.clone()]),
    )?;
    let summary = IngestSummary {
        entities: ing.entities.len(),
        event_rows: ing.event_rows,
        inspection_rows: ing.inspection_rows,
        events: ing.entities.iter().map(|e| e.events.len()).sum(),
        inspections: ing.entities.iter().map(|e| e.inspections.len()).sum(),
        rejected: ing.rejected.len(),
        constant_columns: norm.constant_columns,
    };
    write_json(&out.join("ingest_summary.json"), &summary)?;
    println!(
        "{} entities, {} events, {} inspections, {} rejected rows",
        summary.entities, summary.events, summary.inspections, summary.rejected
    );
    Ok(())
}

pub fn cf_fit(s: &mut Settings) -> CliResult<()> {
    s.get("seed", 0u64)?;
    let data = s.path("data")?;
    let t_end = corpus_end(s, &data)?;
    let mut cfg = CfFitConfig::default();
    cfg.trails.window = s.get("window", cfg.trails.window)?;
    cfg.trails.isolation_gap = s.get("isolation_gap", cfg.trails.isolation_gap)?;
    cfg.excitation_window = s.get("excitation_window", cfg.excitation_window)?;
    cfg.saturation_bin = s.get("saturation_bin", cfg.saturation_bin)?;
    cfg.max_amplitude = s.get("max_amplitude", cfg.max_amplitude)?;
    let out = out_dir(s, "cf-fit")?;
    s.echo("cf-fit", &out)?;
    let raw = load_raw(s, &data)?;
    let norm = normalize_covariates(&raw)?;
    let fit = run_cf(&norm.entities, t_end, &cfg)?;
    let c = &fit.curve;
    write_csv(
        &out.join("cf_curve.csv"),
        &["day", "events", "exposed", "p_hat"],
        (0..c.len()).map(|i| {
            vec![c.days[i].to_string(), c.events[i].to_string(), c.exposed[i].to_string(), c.p_hat[i].to_string()]
        }),
    )?;
    write_json(&out.join("cf_fit.json"), &fit)?;
    let p = &fit.params;
    ModelArtifact::new(
        fit.params,
        Some(norm.bounds),
        Provenance {
            method: FitMethod::Cf,
            seed: None,
            statistics: stats(&[
                ("excitation_amplitude", fit.excitation.amplitude),
                ("excitation_residual", fit.excitation.residual),
                ("saturation_residual", fit.saturation.residual),
                ("pre_events", fit.baseline.pre_events as f64),
                ("post_events", fit.baseline.post_events as f64),
            ]),
        },
    )
    .save(&out.join("model.json"))?;
    let beta = match p.beta {
        RateModel::Fixed(b) => b,
        RateModel::Covariate(_) => f64::NAN,
    };
    println!(
        "lambda0 = {}, c1 = {}, a1 = {}, b1 = {}, beta = {beta}",
        p.lambda0, p.c1, p.a1, p.b1
    );
    Ok(())
}

#[derive(Serialize)]
struct AbcSummary<'a> {
    base: &'a RppParams,
    region: &'a rpp_core::LowRegion,
    manifold: &'a rpp_core::Manifold,
    mode: &'a rpp_core::ClosestPoint,
    failed_proposals: usize,
}

pub fn abc_fit(s: &mut Settings) -> CliResult<()> {
    let seed = s.get("seed", 0u64)?;
    let data = s.path("data")?;
    let t_end = corpus_end(s, &data)?;
    let n = s.get("proposals", 500usize)?;
    let q = s.get("quantile", 0.1f64)?;
    let sigma = s.get("prior_sigma", SIGMA_VARIANCE_5)?;
    let model = match s.optional::<String>("model")? {
        Some(_) => Some(load_model(s, "model")?),
        None => None,
    };
    let out = out_dir(s, "abc-fit")?;
    s.echo("abc-fit", &out)?;
    let raw = load_raw(s, &data)?;
    let (entities, bounds) = match model.as_ref().and_then(|m| m.normalization) {
        Some(b) => (apply_normalization(&raw, &b), b),
        None => {
            let n = normalize_covariates(&raw)?;
            (n.entities, n.bounds)
        }
    };
    let base = match &model {
        Some(m) => m.params,
        None => run_cf(&entities, t_end, &CfFitConfig::default())?.params,
    };
    let mut cfg = AbcConfig::new(base, 0.0, t_end, seed);
    cfg.prior_sigma = sigma;
    let proposals = abc_sweep(&entities, n, &cfg)?;
    write_csv(
        &out.join("proposals.csv"),
        &["upsilon1", "upsilon2", "upsilon3", "dne", "kl"],
        proposals.iter().map(|p| {
            let (d, k) = p
                .stats
                .map_or((String::new(), String::new()), |st| (st.dne.to_string(), st.kl.to_string()));
            vec![p.upsilon[0].to_string(), p.upsilon[1].to_string(), p.upsilon[2].to_string(), d, k]
        }),
    )?;
    let failed = proposals.iter().filter(|p| p.stats.is_none()).count();
    let fit = fit_proposals(proposals, q)?;
    write_json(
        &out.join("abc_fit.json"),
        &AbcSummary {
            base: &base,
            region: &fit.region,
            manifold: &fit.manifold,
            mode: &fit.mode,
            failed_proposals: failed,
        },
    )?;
    let params = RppParams {
        beta: RateModel::Covariate(fit.mode.point),
        ..base
    };
    ModelArtifact::new(
        params,
        Some(bounds),
        Provenance {
            method: FitMethod::Abc,
            seed: Some(seed),
            statistics: stats(&[
                ("proposals", n as f64),
                ("region_size", fit.region.members.len() as f64),
                ("quantile", fit.region.quantile),
                ("mode_norm_sq", fit.mode.objective),
                ("mode_gradient_norm", fit.mode.gradient_norm),
            ]),
        },
    )
    .save(&out.join("model.json"))?;
    let u = fit.mode.point;
    println!(
        "{} proposals ({failed} failed), region {} at q = {}, mode ({}, {}, {})",
        n,
        fit.region.members.len(),
        fit.region.quantile,
        u[0],
        u[1],
        u[2]
    );
    Ok(())
}

pub fn simulate(s: &mut Settings) -> CliResult<()> {
    let seed = s.get("seed", 0u64)?;
    let data = s.path("data")?;
    let model = load_model(s, "model")?;
    let t_start = s.get("t_start", 0.0f64)?;
    let t_end = corpus_end(s, &data)?;
    let trace = s.optional::<f64>("trace_step")?;
    let out = out_dir(s, "simulate")?;
    s.echo("simulate", &out)?;
    let raw = load_raw(s, &data)?;
    let entities = normalized(&raw, Some(&model))?;
    let mut cfg = SimConfig::new(t_start, t_end, seed);
    cfg.trace_step = trace;
    let schedules: Vec<_> = entities
        .iter()
        .map(|e| e.inspections.iter().copied().filter(|i| i.day >= t_start).collect::<Vec<_>>())
        .collect();
    let sims = corpus_simulate(&entities, &model.params, &schedules, &cfg)?;
    let records: Vec<EntityRecord> = raw
        .iter()
        .zip(&sims)
        .map(|(r, sim)| {
            let mut events: Vec<f64> = r.events.iter().copied().filter(|&t| t < t_start).collect();
            events.extend(&sim.events);
            EntityRecord { events, ..r.clone() }
        })
        .collect();
    write_corpus(&CorpusFiles::in_dir(&out), &records)?;
    if trace.is_some() {
        write_csv(
            &out.join("trace.csv"),
            &["entity_id", "t", "lambda"],
            sims.iter().flat_map(|sim| {
                sim.trace
                    .iter()
                    .flatten()
                    .map(move |(t, v)| vec![sim.entity_id.clone(), t.to_string(), v.to_string()])
            }),
        )?;
    }
    let n: usize = sims.iter().map(|r| r.events.len()).sum();
    println!("simulated {n} events for {} entities", records.len());
    Ok(())
}

pub fn policy(s: &mut Settings) -> CliResult<()> {
    let seed = s.get("seed", 0u64)?;
    let data = s.path("data")?;
    let model = load_model(s, "model")?;
    let periods: Vec<u32> = s.list("Y", "1,2,4,8")?;
    let replicates = s.get("replicates", 50usize)?;
    let mut base = PolicyConfig::new(1, seed);
    base.horizon_years = s.get("horizon_years", base.horizon_years)?;
    base.adhoc_per_day = s.get("adhoc_per_day", base.adhoc_per_day)?;
    base.p_type_i = s.get("p_type_i", base.p_type_i)?;
    base.p_type_ii_iv = s.get("p_type_ii_iv", base.p_type_ii_iv)?;
    base.p_clean = s.get("p_clean", base.p_clean)?;
    let cost_event = s.optional::<f64>("cost_event")?;
    let cost_inspection = s.optional::<f64>("cost_inspection")?;
    let out = out_dir(s, "policy")?;
    s.echo("policy", &out)?;
    let raw = load_raw(s, &data)?;
    let entities = normalized(&raw, Some(&model))?;
    let repair = RepairKernelParams::default();
    let reports = periods
        .iter()
        .map(|&y| run_policy(&entities, &model.params, &PolicyConfig { y, ..base }, &repair, replicates))
        .collect::<Result<Vec<_>, _>>()?;
    write_csv(
        &out.join("policy_report.csv"),
        &["Y", "year", "events_mean", "events_std", "inspections", "replicates"],
        reports.iter().flat_map(|r| {
            r.years.iter().map(move |row| {
                vec![
                    r.y.to_string(),
                    row.year.to_string(),
                    row.events_mean.to_string(),
                    row.events_std.to_string(),
                    row.inspections_mean.to_string(),
                    r.replicates.to_string(),
                ]
            })
        }),
    )?;
    write_json(&out.join("policy_summary.json"), &reports)?;
    for r in &reports {
        println!("Y = {}: N_E = {} (sd {}), N_I = {}", r.y, r.events_mean, r.events_std, r.total_inspections);
    }
    if let (Some(ce), Some(ci)) = (cost_event, cost_inspection) {
        write_costs(&out, &reports, ce, ci)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CostSummary {
    cost_event: f64,
    cost_inspection: f64,
    optimal_y: u32,
}

fn write_costs(out: &Path, reports: &[PolicyReport], ce: f64, ci: f64) -> CliResult<()> {
    let curve = cost_curve(reports, ce, ci)?;
    let best = optimal_y(reports, ce, ci)?;
    write_csv(
        &out.join("cost.csv"),
        &["Y", "total_cost"],
        curve.iter().map(|(y, c)| vec![y.to_string(), c.to_string()]),
    )?;
    write_json(
        &out.join("cost_summary.json"),
        &CostSummary {
            cost_event: ce,
            cost_inspection: ci,
            optimal_y: best,
        },
    )?;
    println!("optimal Y = {best}");
    Ok(())
}

pub fn cost(s: &mut Settings) -> CliResult<()> {
    s.get("seed", 0u64)?;
    let report = s.path("report")?;
    let ce = s.required::<f64>("cost_event")?;
    let ci = s.required::<f64>("cost_inspection")?;
    let out = out_dir(s, "cost")?;
    s.echo("cost", &out)?;
    let text = std::fs::read_to_string(&report).map_err(|e| CliError::Usage(format!("{}: {e}", report.display())))?;
    let reports: Vec<PolicyReport> =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", report.display())))?;
    write_costs(&out, &reports, ce, ci)
}

#[derive(Serialize)]
struct RankSummary {
    events: usize,
    filtered: usize,
    wins: u64,
    losses: u64,
    ties: u64,
    favored: rpp_core::ranking::Favored,
    p_value: Option<f64>,
    p_value_two_sided: Option<f64>,
}

pub fn rank(s: &mut Settings) -> CliResult<()> {
    s.get("seed", 0u64)?;
    let data = s.path("data")?;
    let t_end = corpus_end(s, &data)?;
    let a = load_model(s, "model_a")?;
    let b = match s.optional::<String>("model_b")? {
        Some(_) => Some(load_model(s, "model_b")?),
        None => None,
    };
    let w1 = s.get("window_end", t_end)?;
    let w0 = s.get("window_start", (w1 - 365.0).max(0.0))?;
    let filter = s.get("baseline_filter", true)?;
    let out = out_dir(s, "rank")?;
    s.echo("rank", &out)?;
    let raw = load_raw(s, &data)?;
    let entities = normalized(&raw, Some(&a))?;
    let b_params = match &b {
        Some(m) => m.params,
        None => {
            let train: Vec<EntityRecord> = entities
                .iter()
                .map(|e| EntityRecord {
                    events: e.events.iter().copied().filter(|&t| t < w0).collect(),
                    ..e.clone()
                })
                .collect();
            let fitted = fit_constant_beta(&train, &a.params, w0)?;
            ModelArtifact::new(
                fitted,
                a.normalization,
                Provenance {
                    method: a.provenance.method,
                    seed: a.provenance.seed,
                    statistics: BTreeMap::new(),
                },
            )
            .save(&out.join("model_b.json"))?;
            fitted
        }
    };
    let r = compare_models(&entities, &a.params, &b_params, (w0, w1), filter)?;
    write_csv(
        &out.join("ranks.csv"),
        &["event_time", "entity", "rank_a", "rank_b"],
        r.rows.iter().map(|row| {
            vec![row.event_time.to_string(), row.entity.clone(), row.rank_a.to_string(), row.rank_b.to_string()]
        }),
    )?;
    let t = r.test;
    write_json(
        &out.join("rank_summary.json"),
        &RankSummary {
            events: r.rows.len(),
            filtered: r.filtered,
            wins: t.wins,
            losses: t.losses,
            ties: t.ties,
            favored: t.favored,
            p_value: t.p_value,
            p_value_two_sided: t.p_value_two_sided,
        },
    )?;
    println!(
        "{} events ({} filtered): {} wins, {} losses, {} ties, p = {}",
        r.rows.len(),
        r.filtered,
        t.wins,
        t.losses,
        t.ties,
        t.p_value.map_or("n/a".to_string(), |p| p.to_string())
    );
    Ok(())
}
