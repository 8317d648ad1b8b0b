//! Corpus files, covariate normalization, model artifacts and report tables.
//!
//! Tabular data is CSV with a header row. Days are fractional days since the
//! corpus epoch; ISO dates (`YYYY-MM-DD`) are accepted when an epoch is given.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, RppError};
use crate::kernels::N_COVARIATES;
use crate::model::{Covariates, EntityRecord, Inspection, InspectionOutcome, RppParams};

pub const EVENTS_HEADER: [&str; 2] = ["entity_id", "day"];
pub const INSPECTIONS_HEADER: [&str; 3] = ["entity_id", "day", "outcome"];
pub const COVARIATES_HEADER: [&str; 4] = [
    "entity_id",
    "main_phase_cables",
    "oldest_cable_age_years",
    "total_cable_sets",
];

/// Paths of the three corpus tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusFiles {
    pub events: PathBuf,
    pub inspections: PathBuf,
    pub covariates: PathBuf,
}

impl CorpusFiles {
    /// The standard file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        Self {
            events: d.join("events.csv"),
            inspections: d.join("inspections.csv"),
            covariates: d.join("covariates.csv"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub file: String,
    /// 1-based line number, counting the header.
    pub line: u64,
    pub reason: String,
}

/// Parsed corpus. Covariates are raw until passed through [`normalize_covariates`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ingested {
    /// Sorted by id.
    pub entities: Vec<EntityRecord>,
    pub rejected: Vec<RejectedRow>,
    pub event_rows: u64,
    pub inspection_rows: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Day 0; enables ISO dates in the day columns.
    pub epoch: Option<NaiveDate>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RppError {
    RppError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let found = rdr.headers().map_err(|e| io_err(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(RppError::HeaderMismatch {
            file: path.display().to_string(),
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(rdr)
}

fn parse_day(s: &str, epoch: Option<NaiveDate>) -> std::result::Result<f64, String> {
    if let Ok(v) = s.parse::<f64>() {
        return if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(format!("day must be finite and >= 0, got `{s}`"))
        };
    }
    match (epoch, NaiveDate::parse_from_str(s, "%Y-%m-%d")) {
        (Some(e), Ok(d)) => {
            let days = (d - e).num_days();
            if days < 0 {
                Err(format!("date {s} precedes the epoch {e}"))
            } else {
                Ok(days as f64)
            }
        }
        (None, Ok(_)) => Err(format!("date `{s}` given but no epoch is configured")),
        _ => Err(format!("unparseable day `{s}`")),
    }
}

fn parse_outcome(s: &str) -> std::result::Result<InspectionOutcome, String> {
    match s {
        "" | "clean" => Ok(InspectionOutcome::Clean),
        "type1" => Ok(InspectionOutcome::TypeI { r: 0.0 }),
        "type2_4" => Ok(InspectionOutcome::TypeIIToIV { r: 0.0 }),
        other => Err(format!("unknown outcome `{other}`")),
    }
}

fn rows<'a>(
    rdr: &'a mut csv::Reader<File>,
    path: &'a Path,
    width: usize,
    rejected: &'a mut Vec<RejectedRow>,
) -> impl Iterator<Item = (u64, csv::StringRecord)> + 'a {
    let file = path.display().to_string();
    rdr.records().enumerate().filter_map(move |(i, rec)| {
        let line = i as u64 + 2;
        let reject = |reason: String| RejectedRow {
            file: file.clone(),
            line,
            reason,
        };
        match rec {
            Ok(r) if r.len() == width => Some((line, r)),
            Ok(r) => {
                rejected.push(reject(format!("expected {width} fields, found {}", r.len())));
                None
            }
            Err(e) => {
                rejected.push(reject(e.to_string()));
                None
            }
        }
    })
}

/// Reads and validates the three corpus tables. Malformed rows are reported
/// in [`Ingested::rejected`]; rows naming an entity absent from the covariates
/// table are an error.
pub fn ingest(files: &CorpusFiles, opts: &IngestOptions) -> Result<Ingested> {
    let mut rejected = Vec::new();
    let mut by_id: BTreeMap<String, EntityRecord> = BTreeMap::new();

    let mut rdr = open_csv(&files.covariates, &COVARIATES_HEADER)?;
    for (line, r) in rows(&mut rdr, &files.covariates, 4, &mut rejected).collect::<Vec<_>>() {
        let id = r[0].to_string();
        let mut cov = [0.0; N_COVARIATES];
        let mut bad = None;
        for (k, c) in cov.iter_mut().enumerate() {
            match r[k + 1].parse::<f64>() {
                Ok(v) if v.is_finite() => *c = v,
                _ => bad = Some(format!("covariate `{}` is not a finite number", &r[k + 1])),
            }
        }
        if id.is_empty() {
            bad = Some("empty entity id".into());
        }
        if let Some(reason) = bad {
            rejected.push(RejectedRow {
                file: files.covariates.display().to_string(),
                line,
                reason,
            });
            continue;
        }
        if by_id.insert(id.clone(), EntityRecord::new(id.clone(), cov)).is_some() {
            return Err(RppError::ReferentialIntegrity(format!("duplicate entity id `{id}` in covariates")));
        }
    }

    let mut rdr = open_csv(&files.events, &EVENTS_HEADER)?;
    let before = rejected.len();
    let evs: Vec<(u64, csv::StringRecord)> = rows(&mut rdr, &files.events, 2, &mut rejected).collect();
    let event_rows = evs.len() as u64 + (rejected.len() - before) as u64;
    for (line, r) in evs {
        match parse_day(&r[1], opts.epoch) {
            Ok(day) => {
                let e = by_id.get_mut(&r[0]).ok_or_else(|| {
                    RppError::ReferentialIntegrity(format!(
                        "{} line {line}: entity `{}` has no covariates",
                        files.events.display(),
                        &r[0]
                    ))
                })?;
                e.events.push(day);
            }
            Err(reason) => rejected.push(RejectedRow {
                file: files.events.display().to_string(),
                line,
                reason,
            }),
        }
    }

    let mut rdr = open_csv(&files.inspections, &INSPECTIONS_HEADER)?;
    let before = rejected.len();
    let ins: Vec<(u64, csv::StringRecord)> = rows(&mut rdr, &files.inspections, 3, &mut rejected).collect();
    let inspection_rows = ins.len() as u64 + (rejected.len() - before) as u64;
    for (line, r) in ins {
        let parsed = parse_day(&r[1], opts.epoch).and_then(|d| parse_outcome(&r[2]).map(|o| (d, o)));
        match parsed {
            Ok((day, outcome)) => {
                let e = by_id.get_mut(&r[0]).ok_or_else(|| {
                    RppError::ReferentialIntegrity(format!(
                        "{} line {line}: entity `{}` has no covariates",
                        files.inspections.display(),
                        &r[0]
                    ))
                })?;
                e.inspections.push(Inspection::new(day, outcome));
            }
            Err(reason) => rejected.push(RejectedRow {
                file: files.inspections.display().to_string(),
                line,
                reason,
            }),
        }
    }

    let entities: Vec<EntityRecord> = by_id
        .into_values()
        .map(|e| {
            let EntityRecord {
                id,
                covariates,
                events,
                inspections,
            } = e;
            EntityRecord::new(id, covariates).with_events(events).with_inspections(inspections)
        })
        .collect();
    for e in &entities {
        e.validate_history()?;
    }
    Ok(Ingested {
        entities,
        rejected,
        event_rows,
        inspection_rows,
    })
}

/// Per-covariate training range used for min-max scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBounds {
    pub min: Covariates,
    pub max: Covariates,
}

impl NormalizationBounds {
    /// Maps `[min, max]` onto `[-0.5, 0.5]`; constant columns map to 0 and
    /// values outside the training range are clamped.
    pub fn apply(&self, raw: &Covariates) -> Covariates {
        let mut out = [0.0; N_COVARIATES];
        for k in 0..N_COVARIATES {
            let span = self.max[k] - self.min[k];
            out[k] = if span > 0.0 {
                ((raw[k] - self.min[k]) / span - 0.5).clamp(-0.5, 0.5)
            } else {
                0.0
            };
        }
        out
    }

    /// Indices of columns with no spread.
    pub fn constant_columns(&self) -> Vec<usize> {
        (0..N_COVARIATES).filter(|&k| self.max[k] <= self.min[k]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalized {
    pub entities: Vec<EntityRecord>,
    pub bounds: NormalizationBounds,
    /// Columns that were constant and mapped to 0.
    pub constant_columns: Vec<usize>,
}

/// Min-max scaling of each covariate to `[-0.5, 0.5]` over the given population.
pub fn normalize_covariates(records: &[EntityRecord]) -> Result<Normalized> {
    if records.is_empty() {
        return Err(RppError::InsufficientData("no records to normalize".into()));
    }
    let mut min = [f64::INFINITY; N_COVARIATES];
    let mut max = [f64::NEG_INFINITY; N_COVARIATES];
    for r in records {
        for k in 0..N_COVARIATES {
            if !r.covariates[k].is_finite() {
                return Err(invalid("covariates", format!("entity {}: non-finite value", r.id)));
            }
            min[k] = min[k].min(r.covariates[k]);
            max[k] = max[k].max(r.covariates[k]);
        }
    }
    let bounds = NormalizationBounds { min, max };
    Ok(Normalized {
        entities: apply_normalization(records, &bounds),
        constant_columns: bounds.constant_columns(),
        bounds,
    })
}

pub fn apply_normalization(records: &[EntityRecord], bounds: &NormalizationBounds) -> Vec<EntityRecord> {
    records
        .iter()
        .map(|r| EntityRecord {
            covariates: bounds.apply(&r.covariates),
            ..r.clone()
        })
        .collect()
}

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Cf,
    Abc,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: FitMethod,
    pub seed: Option<u64>,
    pub statistics: BTreeMap<String, f64>,
}

/// A fitted (or ground-truth) model with everything needed to reuse it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub params: RppParams,
    pub normalization: Option<NormalizationBounds>,
    pub provenance: Provenance,
}

impl ModelArtifact {
    pub fn new(params: RppParams, normalization: Option<NormalizationBounds>, provenance: Provenance) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            params,
            normalization,
            provenance,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| invalid("artifact", e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let a: Self = serde_json::from_str(s).map_err(|e| invalid("artifact", e.to_string()))?;
        if a.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", a.schema_version),
            ));
        }
        a.params.validate()?;
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &(self.to_json()? + "\n"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_json(&s)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    write_text(path, &(s + "\n"))
}

/// Writes a CSV table. Floats use the shortest representation that parses
/// back to the same value.
pub fn write_csv<R, I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    R: IntoIterator,
    R::Item: ToString,
    I: IntoIterator<Item = R>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        let fields: Vec<String> = row.into_iter().map(|f| f.to_string()).collect();
        w.write_record(&fields).map_err(|e| io_err(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| io_err(path, e))?;
    let mut f = {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        File::create(path).map_err(|e| io_err(path, e))?
    };
    f.write_all(&bytes).map_err(|e| io_err(path, e))
}

/// Writes a corpus as the three standard tables, entities in id order.
/// Covariates are written as given (raw or normalized).
pub fn write_corpus(files: &CorpusFiles, entities: &[EntityRecord]) -> Result<()> {
    let mut sorted: Vec<&EntityRecord> = entities.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    write_csv(
        &files.covariates,
        &COVARIATES_HEADER,
        sorted.iter().map(|e| {
            let c = e.covariates;
            vec![e.id.clone(), c[0].to_string(), c[1].to_string(), c[2].to_string()]
        }),
    )?;
    write_csv(
        &files.events,
        &EVENTS_HEADER,
        sorted
            .iter()
            .flat_map(|e| e.events.iter().map(move |t| vec![e.id.clone(), t.to_string()])),
    )?;
    write_csv(
        &files.inspections,
        &INSPECTIONS_HEADER,
        sorted.iter().flat_map(|e| {
            e.inspections
                .iter()
                .map(move |i| vec![e.id.clone(), i.day.to_string(), i.outcome.label().to_string()])
        }),
    )
}

/// Parses `key = value` lines; `#` starts a comment. Later keys override earlier ones.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| RppError::Config {
            line: i + 1,
            reason: format!("expected key=value, found `{line}`"),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(RppError::Config {
                line: i + 1,
                reason: "empty key".into(),
            });
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(f).lines() {
        text.push_str(&line.map_err(|e| io_err(path, e))?);
        text.push('\n');
    }
    parse_config(&text)
}

pub fn format_config(map: &BTreeMap<String, String>) -> String {
    map.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Looks up entities by id.
pub fn index_by_id(entities: &[EntityRecord]) -> HashMap<&str, usize> {
    entities.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InspectionEffect, RateModel, RepairKernelParams};

    fn write(dir: &Path, name: &str, body: &str) {
        std::fs::write(dir.join(name), body).unwrap();
    }

    fn files(dir: &Path, events: &str, inspections: &str, covariates: &str) -> CorpusFiles {
        write(dir, "events.csv", events);
        write(dir, "inspections.csv", inspections);
        write(dir, "covariates.csv", covariates);
        CorpusFiles::in_dir(dir)
    }

    const COV: &str = "entity_id,main_phase_cables,oldest_cable_age_years,total_cable_sets\nb,1,10,2\na,3,40,5\nc,2,90,2\n";

    #[test]
    fn empty_events_three_entities() {
        let d = tempfile::tempdir().unwrap();
        let f = files(d.path(), "entity_id,day\n", "entity_id,day,outcome\n", COV);
        let got = ingest(&f, &IngestOptions::default()).unwrap();
        assert_eq!(got.entities.len(), 3);
        assert_eq!(got.entities[0].id, "a");
        assert!(got.entities.iter().all(|e| e.events.is_empty()));
        assert!(got.rejected.is_empty());
    }

    #[test]
    fn events_are_sorted_and_bad_rows_reported() {
        let d = tempfile::tempdir().unwrap();
        let f = files(
            d.path(),
            "entity_id,day\na,50\na,10\na,10\nb,x\nc,-1\nc\n",
            "entity_id,day,outcome\na,5,\nb,7,type1\nc,8,bogus\n",
            COV,
        );
        let got = ingest(&f, &IngestOptions::default()).unwrap();
        assert_eq!(got.entities[0].events, vec![10.0, 10.0, 50.0]);
        let kept: u64 = got.entities.iter().map(|e| e.events.len() as u64).sum();
        let rej = got.rejected.iter().filter(|r| r.file.ends_with("events.csv")).count() as u64;
        assert_eq!(got.event_rows, 6);
        assert_eq!(kept + rej, got.event_rows);
        assert_eq!(got.entities[0].inspections[0].outcome, InspectionOutcome::Clean);
        assert!(matches!(got.entities[1].inspections[0].outcome, InspectionOutcome::TypeI { .. }));
        assert_eq!(got.rejected.len(), 4);
        assert_eq!(got.inspection_rows, 3);
    }

    #[test]
    fn iso_dates_need_an_epoch() {
        let d = tempfile::tempdir().unwrap();
        let f = files(d.path(), "entity_id,day\na,2010-01-11\n", "entity_id,day,outcome\n", COV);
        let got = ingest(&f, &IngestOptions::default()).unwrap();
        assert_eq!(got.rejected.len(), 1);
        let opts = IngestOptions {
            epoch: NaiveDate::from_ymd_opt(2010, 1, 1),
        };
        let got = ingest(&f, &opts).unwrap();
        assert_eq!(got.entities[0].events, vec![10.0]);
    }

    #[test]
    fn structural_errors() {
        let d = tempfile::tempdir().unwrap();
        let f = files(d.path(), "id,day\n", "entity_id,day,outcome\n", COV);
        assert!(matches!(ingest(&f, &IngestOptions::default()), Err(RppError::HeaderMismatch { .. })));
        let f = files(d.path(), "entity_id,day\nzz,1\n", "entity_id,day,outcome\n", COV);
        assert!(matches!(ingest(&f, &IngestOptions::default()), Err(RppError::ReferentialIntegrity(_))));
        let f = files(d.path(), "entity_id,day\na,1\n", "entity_id,day,outcome\n", COV);
        std::fs::remove_file(d.path().join("inspections.csv")).unwrap();
        assert!(matches!(ingest(&f, &IngestOptions::default()), Err(RppError::Io { .. })));
    }

    #[test]
    fn normalization_endpoints_and_constant_columns() {
        let recs = vec![
            EntityRecord::new("a", [0.0, 5.0, 1.0]),
            EntityRecord::new("b", [10.0, 5.0, 3.0]),
        ];
        let n = normalize_covariates(&recs).unwrap();
        assert_eq!(n.entities[0].covariates, [-0.5, 0.0, -0.5]);
        assert_eq!(n.entities[1].covariates, [0.5, 0.0, 0.5]);
        assert_eq!(n.constant_columns, vec![1]);
        assert_eq!(apply_normalization(&recs, &n.bounds), n.entities);
        assert!(n.entities.iter().all(|e| e.validate().is_ok()));
    }

    #[test]
    fn artifact_round_trip() {
        let mut params = RppParams::homogeneous(2.4225e-4);
        params.c1 = 0.0512;
        params.beta = RateModel::Covariate([-4.6554, -0.5716, -4.8028]);
        params.inspection_effect = InspectionEffect::Repair(RepairKernelParams::default());
        let mut statistics = BTreeMap::new();
        statistics.insert("kl".to_string(), 0.1 + 0.2);
        let a = ModelArtifact::new(
            params,
            Some(NormalizationBounds {
                min: [1.0, 0.3, 1.0],
                max: [17.0, 129.9, 1.0 / 3.0],
            }),
            Provenance {
                method: FitMethod::Abc,
                seed: Some(u64::MAX),
                statistics,
            },
        );
        assert_eq!(ModelArtifact::from_json(&a.to_json().unwrap()).unwrap(), a);
        let mut bad = a.clone();
        bad.schema_version = 99;
        assert!(ModelArtifact::from_json(&bad.to_json().unwrap()).is_err());
    }

    #[test]
    fn corpus_round_trip() {
        let d = tempfile::tempdir().unwrap();
        let ents = vec![
            EntityRecord::new("x", [1.0, 2.5, 3.0]).with_events(vec![0.1 + 0.2, 7.0]),
            EntityRecord::new("w", [4.0, 5.0, 6.0])
                .with_inspections(vec![Inspection::new(3.25, InspectionOutcome::TypeIIToIV { r: 0.0 })]),
        ];
        let f = CorpusFiles::in_dir(d.path());
        write_corpus(&f, &ents).unwrap();
        let back = ingest(&f, &IngestOptions::default()).unwrap();
        assert_eq!(back.entities[1], ents[0]);
        assert_eq!(back.entities[0], ents[1]);
    }

    #[test]
    fn config_parsing() {
        let c = parse_config("# run\nseed = 7\nentities=100 # inline\n\nseed=8\n").unwrap();
        assert_eq!(c["seed"], "8");
        assert_eq!(c["entities"], "100");
        assert!(matches!(parse_config("oops"), Err(RppError::Config { line: 1, .. })));
        assert_eq!(parse_config(&format_config(&c)).unwrap(), c);
    }
}
