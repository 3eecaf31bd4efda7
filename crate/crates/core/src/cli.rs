//! Operator surface: run configuration, the artifact directory written by
//! `run`, and the `forecast`, `diagnose`, `evaluate` and `synth` commands.
//!
//! # Config grammar
//!
//! One `key = value` pair per line. Blank lines and lines starting with `#`
//! are ignored; keys are unique. List values (`alphas`, `missing_sentinels`)
//! are comma separated. Relative paths are resolved against the directory of
//! the config file. `RunConfig::to_text` writes every key in a fixed order,
//! so the text stored in a run manifest re-creates the run exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate};
use log::{info, warn};
use serde::Serialize;

use crate::boosting::BoostedEnsemble;
use crate::conformal::{
    bonferroni_adjust, write_intervals_csv, AmChannel, AmForecaster, Channel, ChannelCalibration, ForecastInterval,
    PmChannel, PmForecaster, ScorePredictor,
};
use crate::error::{check_fraction, Error, Result};
use crate::evaluate::{
    coverage_audit, fit_series_export, summarize_intervals, write_fit_scatter, write_fit_series, write_summary_table,
    CoverageReport, IntervalSummary, Subset,
};
use crate::ingest::{
    build_frame, empirical_quantile, fmt_opt, parse_station_csv, write_station_csv, ColumnMap, SupervisedFrame,
    WeatherRecord, N_PREDICTORS,
};
use crate::pipeline::{fit_pipeline, forecast_am_frame, forecast_pm_frame, streams, FittedPipeline, PipelineSettings};
use crate::synth::{synth_generate, ScenarioSpec};
use crate::tsdiag::{Ar1Model, WhitenessReport};
use crate::derive_seed;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "MANIFEST.json";
pub const DEFAULT_ALPHAS: [f64; 2] = [0.10, 0.30];
pub const DEFAULT_FIGURE_SPAN: f64 = 0.3;

pub const PM_MODEL_FILE: &str = "pm_channel.json";
pub const AM_MODEL_FILE: &str = "am_channel.json";
pub const SUMMARY_FILE: &str = "run_summary.json";

/// Pipeline stage an error came from; decides the exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Ingest,
    Train,
    Forecast,
    Evaluate,
    Output,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Train => "train",
            Stage::Forecast => "forecast",
            Stage::Evaluate => "evaluate",
            Stage::Output => "output",
        }
    }

    /// 2 for configuration, 3 for input data, 4 for everything model-side.
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Ingest => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage={stage}: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        self.stage.exit_code()
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T, E: Into<Error>> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|e| StageError { stage, source: e.into() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train_csv: PathBuf,
    pub test_csv: PathBuf,
    pub out_dir: PathBuf,
    pub columns: ColumnMap,
    pub lag_days: u32,
    /// Analysis windows; `None` means April 1 to September 30 of the last record's year.
    pub train_start: Option<NaiveDate>,
    pub train_end: Option<NaiveDate>,
    pub test_start: Option<NaiveDate>,
    pub test_end: Option<NaiveDate>,
    pub settings: PipelineSettings,
    pub alphas: Vec<f64>,
    /// Divide each alpha by the number of alphas.
    pub simultaneous: bool,
    /// Loess span of the over-time smooths in the fit-series figure data.
    pub figure_span: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train_csv: PathBuf::new(),
            test_csv: PathBuf::new(),
            out_dir: PathBuf::new(),
            columns: ColumnMap::default(),
            lag_days: 14,
            train_start: None,
            train_end: None,
            test_start: None,
            test_end: None,
            settings: PipelineSettings::default(),
            alphas: DEFAULT_ALPHAS.to_vec(),
            simultaneous: false,
            figure_span: DEFAULT_FIGURE_SPAN,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_err(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn parse_opt_date(key: &str, value: &str) -> Result<Option<NaiveDate>> {
    if value.is_empty() || value == "auto" {
        return Ok(None);
    }
    NaiveDate::parse_from_str(value, "%Y-%m-%d")
        .map(Some)
        .map_err(|_| config_err(format!("{key}: expected YYYY-MM-DD, got {value:?}")))
}

fn parse_opt_usize(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "auto" || value == "none" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn show_opt<T: fmt::Display>(v: Option<T>, none: &str) -> String {
    v.map_or_else(|| none.to_string(), |v| v.to_string())
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::path::absolute(dir)?;
        Self::parse(&text, &base)
    }

    /// Parses config text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(config_err(format!("line {}: duplicate key {key}", n + 1)));
            }
            cfg.set(key, value, base).map_err(|e| {
                let msg = match e {
                    Error::Config(m) => m,
                    other => other.to_string(),
                };
                config_err(format!("line {}: {msg}", n + 1))
            })?;
        }
        for key in ["train_csv", "test_csv", "out_dir"] {
            if !seen.contains(key) {
                return Err(config_err(format!("missing required key {key}")));
            }
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let s = &mut self.settings;
        let c = &mut self.columns;
        match key {
            "train_csv" => self.train_csv = resolve(base, value),
            "test_csv" => self.test_csv = resolve(base, value),
            "out_dir" => self.out_dir = resolve(base, value),
            "timestamp_format" => c.timestamp_format = value.to_string(),
            "delimiter" => {
                c.delimiter = match value {
                    "tab" | "\\t" => b'\t',
                    v if v.len() == 1 => v.as_bytes()[0],
                    _ => return Err(config_err(format!("delimiter must be one byte or 'tab', got {value:?}"))),
                }
            }
            "missing_sentinels" => c.missing_sentinels = value.split(',').map(|v| v.trim().to_string()).collect(),
            "column.timestamp" => c.timestamp = value.to_string(),
            "column.wind_dir" => c.wind_dir = value.to_string(),
            "column.wind_speed" => c.wind_speed = value.to_string(),
            "column.air_temp" => c.air_temp = value.to_string(),
            "column.pressure" => c.pressure = value.to_string(),
            "column.visibility" => c.visibility = value.to_string(),
            "column.dew_point" => c.dew_point = value.to_string(),
            "column.rel_humidity" => c.rel_humidity = value.to_string(),
            "lag_days" => self.lag_days = parse_num(key, value)?,
            "train_start" => self.train_start = parse_opt_date(key, value)?,
            "train_end" => self.train_end = parse_opt_date(key, value)?,
            "test_start" => self.test_start = parse_opt_date(key, value)?,
            "test_end" => self.test_end = parse_opt_date(key, value)?,
            "tau" => s.boost.tau = parse_num(key, value)?,
            "shrinkage" => s.boost.shrinkage = parse_num(key, value)?,
            "depth" => s.boost.max_depth = parse_num(key, value)?,
            "min_node" => s.boost.min_node = parse_num(key, value)?,
            "max_trees" => s.boost.max_trees = parse_num(key, value)?,
            "subsample" => s.boost.subsample = parse_num(key, value)?,
            "loess_span" => s.loess_span = parse_num(key, value)?,
            "loess_degree" => s.loess_degree = parse_num(key, value)?,
            "qrf_trees" => s.qrf.n_trees = parse_num(key, value)?,
            "qrf_min_node" => s.qrf.min_node = parse_num(key, value)?,
            "qrf_features" => s.qrf.features_per_split = parse_opt_usize(key, value)?,
            "qrf_max_depth" => s.qrf.max_depth = parse_opt_usize(key, value)?,
            "qrf_bootstrap" => s.qrf.bootstrap = parse_bool(key, value)?,
            "score_predictor" => s.predictor = value.parse()?,
            "calibrated_conformal" => s.calibrated = parse_bool(key, value)?,
            "holdout_block" => s.holdout_block = parse_num(key, value)?,
            "holdout_every" => s.holdout_every = parse_num(key, value)?,
            "seed" => s.seed = parse_num(key, value)?,
            "alphas" => {
                self.alphas = value
                    .split(',')
                    .map(|a| parse_num::<f64>(key, a.trim()))
                    .collect::<Result<_>>()?
            }
            "simultaneous" => self.simultaneous = parse_bool(key, value)?,
            "figure_span" => self.figure_span = parse_num(key, value)?,
            _ => return Err(config_err(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Canonical text with every key.
    pub fn to_text(&self) -> String {
        let mut out = format!("out_dir = {}\n", self.out_dir.display());
        out.push_str(&self.replay_text());
        out
    }

    /// Canonical text without `out_dir`: everything that determines the
    /// artifacts, so runs written to different directories compare equal.
    pub fn replay_text(&self) -> String {
        let s = &self.settings;
        let c = &self.columns;
        let delimiter = if c.delimiter == b'\t' { "tab".to_string() } else { (c.delimiter as char).to_string() };
        let alphas: Vec<String> = self.alphas.iter().map(f64::to_string).collect();
        let lines: Vec<(&str, String)> = vec![
            ("train_csv", self.train_csv.display().to_string()),
            ("test_csv", self.test_csv.display().to_string()),
            ("timestamp_format", c.timestamp_format.clone()),
            ("delimiter", delimiter),
            ("missing_sentinels", c.missing_sentinels.join(",")),
            ("column.timestamp", c.timestamp.clone()),
            ("column.wind_dir", c.wind_dir.clone()),
            ("column.wind_speed", c.wind_speed.clone()),
            ("column.air_temp", c.air_temp.clone()),
            ("column.pressure", c.pressure.clone()),
            ("column.visibility", c.visibility.clone()),
            ("column.dew_point", c.dew_point.clone()),
            ("column.rel_humidity", c.rel_humidity.clone()),
            ("lag_days", self.lag_days.to_string()),
            ("train_start", show_opt(self.train_start, "auto")),
            ("train_end", show_opt(self.train_end, "auto")),
            ("test_start", show_opt(self.test_start, "auto")),
            ("test_end", show_opt(self.test_end, "auto")),
            ("tau", s.boost.tau.to_string()),
            ("shrinkage", s.boost.shrinkage.to_string()),
            ("depth", s.boost.max_depth.to_string()),
            ("min_node", s.boost.min_node.to_string()),
            ("max_trees", s.boost.max_trees.to_string()),
            ("subsample", s.boost.subsample.to_string()),
            ("loess_span", s.loess_span.to_string()),
            ("loess_degree", s.loess_degree.to_string()),
            ("qrf_trees", s.qrf.n_trees.to_string()),
            ("qrf_min_node", s.qrf.min_node.to_string()),
            ("qrf_features", show_opt(s.qrf.features_per_split, "auto")),
            ("qrf_max_depth", show_opt(s.qrf.max_depth, "none")),
            ("qrf_bootstrap", s.qrf.bootstrap.to_string()),
            ("score_predictor", s.predictor.to_string()),
            ("calibrated_conformal", s.calibrated.to_string()),
            ("holdout_block", s.holdout_block.to_string()),
            ("holdout_every", s.holdout_every.to_string()),
            ("seed", s.seed.to_string()),
            ("alphas", alphas.join(",")),
            ("simultaneous", self.simultaneous.to_string()),
            ("figure_span", self.figure_span.to_string()),
        ];
        lines.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Checks ranges and paths, sorts and de-duplicates alphas. Returns warnings.
    pub fn validate(&mut self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        let s = &self.settings;
        check_fraction("tau", s.boost.tau)?;
        s.boost.validate()?;
        if s.boost.max_depth < 1 {
            return Err(config_err("depth must be >= 1"));
        }
        if !(s.loess_span > 0.0 && s.loess_span <= 1.0) {
            return Err(config_err(format!("loess_span {} outside (0, 1]", s.loess_span)));
        }
        if !(self.figure_span > 0.0 && self.figure_span <= 1.0) {
            return Err(config_err(format!("figure_span {} outside (0, 1]", self.figure_span)));
        }
        if !(1..=2).contains(&s.loess_degree) {
            return Err(config_err("loess_degree must be 1 or 2"));
        }
        if s.qrf.n_trees < 1 || s.qrf.min_node < 1 || s.qrf.features_per_split == Some(0) {
            return Err(config_err("qrf_trees, qrf_min_node and qrf_features must be >= 1"));
        }
        if s.calibrated && (s.holdout_block < 1 || s.holdout_every < 2) {
            return Err(config_err("calibrated mode needs holdout_block >= 1 and holdout_every >= 2"));
        }
        if self.alphas.is_empty() {
            return Err(config_err("alphas is empty"));
        }
        for &a in &self.alphas {
            check_fraction("alpha", a)?;
        }
        let mut unique: Vec<f64> = Vec::new();
        for &a in &self.alphas {
            if unique.contains(&a) {
                warnings.push(format!("alpha {a} listed more than once; duplicate dropped"));
            } else {
                unique.push(a);
            }
        }
        unique.sort_by(f64::total_cmp);
        self.alphas = unique;
        if self.train_csv == self.test_csv {
            return Err(config_err("train_csv and test_csv must differ"));
        }
        if self.out_dir == self.train_csv || self.out_dir == self.test_csv {
            return Err(config_err("out_dir must differ from the input files"));
        }
        for (a, b) in [(self.train_start, self.train_end), (self.test_start, self.test_end)] {
            if let (Some(a), Some(b)) = (a, b) {
                if b < a {
                    return Err(config_err(format!("analysis window ends ({b}) before it starts ({a})")));
                }
            }
        }
        for w in &warnings {
            warn!("{w}");
        }
        Ok(warnings)
    }

    /// Per-query alpha levels: divided by their count in simultaneous mode.
    pub fn effective_alphas(&self) -> Vec<f64> {
        effective_alphas(&self.alphas, self.simultaneous)
    }
}

pub fn effective_alphas(alphas: &[f64], simultaneous: bool) -> Vec<f64> {
    if simultaneous && alphas.len() > 1 {
        alphas
            .iter()
            .zip(bonferroni_adjust(alphas, 1.0))
            .map(|(a, share)| a * share)
            .collect()
    } else {
        alphas.to_vec()
    }
}

/// Command-line values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub alphas: Vec<f64>,
    pub simultaneous: bool,
    pub score_predictor: Option<ScorePredictor>,
    pub calibrated: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(out) = &self.out_dir {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.settings.seed = seed;
        }
        if !self.alphas.is_empty() {
            cfg.alphas = self.alphas.clone();
        }
        cfg.simultaneous |= self.simultaneous;
        if let Some(p) = self.score_predictor {
            cfg.settings.predictor = p;
        }
        cfg.settings.calibrated |= self.calibrated;
    }
}

/// Default analysis window: April 1 to September 30 of the last record's year.
fn season_window(records: &[WeatherRecord]) -> Result<(NaiveDate, NaiveDate)> {
    let last = records
        .iter()
        .map(|r| r.date)
        .max()
        .ok_or_else(|| Error::Data("input holds no 02:00 or 14:00 records".into()))?;
    let y = last.year();
    let d = |m, day| NaiveDate::from_ymd_opt(y, m, day).expect("valid date");
    Ok((d(4, 1), d(9, 30)))
}

/// Tracks written files so the manifest can list them.
struct ArtifactDir {
    root: PathBuf,
    files: BTreeSet<String>,
}

impl ArtifactDir {
    fn create(&mut self, rel: &str) -> Result<BufWriter<File>> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.insert(rel.to_string());
        Ok(BufWriter::new(File::create(path)?))
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut w = self.create(rel)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// `complete` or `incomplete`.
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    /// Canonical config text without `out_dir`; re-parse with `RunConfig::parse`.
    pub config: String,
    pub seed: u64,
    pub derived_seeds: BTreeMap<String, u64>,
    pub alphas: Vec<f64>,
    pub effective_alphas: Vec<f64>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn read(run_dir: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(run_dir.join(MANIFEST_FILE))?)?)
    }

    /// The run's config, with `out_dir` set to `out_dir`.
    pub fn config(&self, out_dir: &Path) -> Result<RunConfig> {
        let text = format!("out_dir = {}\n{}", out_dir.display(), self.config);
        RunConfig::parse(&text, Path::new("."))
    }
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct RunSummary {
    pub notes: Vec<String>,
    pub holdout_rows: usize,
    pub test_rows: usize,
    /// Test-year forecasts whose nocturnal input lay outside the loess training range.
    pub am_extrapolated: usize,
    pub am_forecasts: usize,
}

#[derive(Serialize)]
struct Ar1Summary {
    phi: f64,
    intercept: f64,
    n_used: usize,
}

#[derive(Serialize)]
struct WhitenessEntry<'a> {
    raw: &'a WhitenessReport,
    scores: &'a WhitenessReport,
    ar1: Option<Ar1Summary>,
}

fn whiteness_entry(cal: &ChannelCalibration) -> WhitenessEntry<'_> {
    WhitenessEntry {
        raw: &cal.raw_whiteness,
        scores: &cal.whiteness,
        ar1: cal.ar1.as_ref().map(|m: &Ar1Model| Ar1Summary { phi: m.phi, intercept: m.intercept, n_used: m.n_used }),
    }
}

/// File-name form of an alpha level, e.g. `0.1` -> `a0.1`.
pub fn alpha_tag(alpha: f64) -> String {
    format!("a{alpha}")
}

pub struct RunOutcome {
    pub manifest: Manifest,
    pub model: FittedPipeline,
}

struct RunState {
    dir: Option<ArtifactDir>,
    manifest: Manifest,
}

impl RunState {
    fn finish(&mut self, failure: Option<&StageError>) -> Result<()> {
        let Some(dir) = &mut self.dir else { return Ok(()) };
        match failure {
            None => self.manifest.status = "complete".into(),
            Some(e) => {
                self.manifest.status = "incomplete".into();
                self.manifest.failed_stage = Some(e.stage.name().into());
                self.manifest.error = Some(e.source.to_string());
            }
        }
        self.manifest.artifacts = dir.files.iter().cloned().collect();
        let body = serde_json::to_string_pretty(&self.manifest)? + "\n";
        fs::write(dir.root.join(MANIFEST_FILE), body)?;
        Ok(())
    }
}

/// Runs ingest, training, calibration, test-year forecasting and evaluation,
/// writing every artifact under `cfg.out_dir`. On failure after the output
/// directory exists, the manifest is still written and marked incomplete.
pub fn cmd_run(cfg: &RunConfig) -> StageResult<RunOutcome> {
    let mut cfg = cfg.clone();
    let warnings = cfg.validate().at(Stage::Config)?;
    let seed = cfg.settings.seed;
    let derived_seeds = [
        ("boosting", streams::BOOSTING),
        ("pm_scores", streams::PM_SCORES),
        ("am_scores", streams::AM_SCORES),
    ]
    .into_iter()
    .map(|(k, s)| (k.to_string(), derive_seed(seed, s)))
    .collect();
    let mut state = RunState {
        dir: None,
        manifest: Manifest {
            tool: "heatcast".into(),
            version: VERSION.into(),
            status: "incomplete".into(),
            failed_stage: None,
            error: None,
            config: cfg.replay_text(),
            seed,
            derived_seeds,
            alphas: cfg.alphas.clone(),
            effective_alphas: cfg.effective_alphas(),
            warnings,
            notes: Vec::new(),
            artifacts: Vec::new(),
        },
    };
    fs::create_dir_all(&cfg.out_dir).at(Stage::Output)?;
    state.dir = Some(ArtifactDir { root: cfg.out_dir.clone(), files: BTreeSet::new() });
    let result = run_stages(&mut cfg, &mut state);
    let finish = state.finish(result.as_ref().err());
    let model = result?;
    finish.at(Stage::Output)?;
    Ok(RunOutcome { manifest: state.manifest, model })
}

fn load_records(path: &Path, columns: &ColumnMap) -> Result<Vec<WeatherRecord>> {
    let file = File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let parsed = parse_station_csv(file, columns)?;
    for d in parsed.row_errors.iter().chain(&parsed.rejected) {
        warn!("{}: row {}: {}", path.display(), d.row, d.message);
    }
    Ok(parsed.records)
}

fn run_stages(cfg: &mut RunConfig, state: &mut RunState) -> StageResult<FittedPipeline> {
    // Inputs are read before any artifact is written; a bad input leaves only the manifest.
    let train_records = load_records(&cfg.train_csv, &cfg.columns).at(Stage::Ingest)?;
    let test_records = load_records(&cfg.test_csv, &cfg.columns).at(Stage::Ingest)?;
    let (ts, te) = season_window(&train_records).at(Stage::Ingest)?;
    let (vs, ve) = season_window(&test_records).at(Stage::Ingest)?;
    let train_window = (cfg.train_start.unwrap_or(ts), cfg.train_end.unwrap_or(te));
    let test_window = (cfg.test_start.unwrap_or(vs), cfg.test_end.unwrap_or(ve));
    let train = build_frame(&train_records, cfg.lag_days, train_window.0, train_window.1).at(Stage::Ingest)?;
    let test = build_frame(&test_records, cfg.lag_days, test_window.0, test_window.1).at(Stage::Ingest)?;
    info!("frames: {} training days, {} test days", train.len(), test.len());

    let dir = state.dir.as_mut().expect("output directory created");
    let mut w = dir.create("frames/train_frame.csv").at(Stage::Output)?;
    train.write_csv(&mut w).and_then(|_| Ok(w.flush()?)).at(Stage::Output)?;
    let mut w = dir.create("frames/test_frame.csv").at(Stage::Output)?;
    test.write_csv(&mut w).and_then(|_| Ok(w.flush()?)).at(Stage::Output)?;

    let model = fit_pipeline(&train, &test, &cfg.settings).at(Stage::Train)?;
    state.manifest.notes = model.notes.clone();
    let dir = state.dir.as_mut().expect("output directory created");
    write_model(dir, &model).at(Stage::Output)?;
    write_fitted(dir, &train, &model).at(Stage::Output)?;

    let alphas = cfg.effective_alphas();
    let mut pm_sets = Vec::new();
    let mut am_sets = Vec::new();
    for &a in &alphas {
        pm_sets.push(forecast_pm_frame(&model, &test, a).at(Stage::Forecast)?);
        am_sets.push(forecast_am_frame(&model, &test, a).at(Stage::Forecast)?);
    }
    let mut coverage: BTreeMap<String, CoverageReport> = BTreeMap::new();
    for (channel, sets) in [(Channel::Pm, &pm_sets), (Channel::Am, &am_sets)] {
        let mut all_iv = Vec::new();
        let mut all_y = Vec::new();
        for (a, set) in alphas.iter().zip(sets.iter()) {
            if set.intervals.is_empty() {
                continue;
            }
            let name = format!("intervals/{}_{}.csv", channel.label().to_lowercase(), alpha_tag(*a));
            let mut w = dir.create(&name).at(Stage::Output)?;
            write_intervals_csv(&set.intervals, &mut w).and_then(|_| Ok(w.flush()?)).at(Stage::Output)?;
            let (iv, y) = set.observed();
            all_iv.extend(iv);
            all_y.extend(y);
        }
        if !all_iv.is_empty() {
            coverage.insert(channel.label().into(), coverage_audit(&all_iv, &all_y).at(Stage::Evaluate)?);
        }
    }
    dir.json("evaluation/coverage.json", &coverage).at(Stage::Output)?;

    let mut table_rows: Vec<(Channel, Vec<IntervalSummary>)> = Vec::new();
    for (channel, sets) in [(Channel::Pm, &pm_sets), (Channel::Am, &am_sets)] {
        if sets.iter().any(|s| s.intervals.is_empty()) {
            continue;
        }
        let sums = sets
            .iter()
            .map(|s| summarize_intervals(&s.intervals, Subset::TopDecileByForecast))
            .collect::<Result<Vec<_>>>()
            .at(Stage::Evaluate)?;
        table_rows.push((channel, sums));
    }
    let mut w = dir.create("evaluation/table1.csv").at(Stage::Output)?;
    write_summary_table(&alphas, &table_rows, &mut w).and_then(|_| Ok(w.flush()?)).at(Stage::Output)?;
    let all_summaries: Vec<&IntervalSummary> = table_rows.iter().flat_map(|(_, s)| s).collect();
    dir.json("evaluation/interval_summaries.json", &all_summaries).at(Stage::Output)?;

    write_figures(dir, &train, &model, cfg).at(Stage::Evaluate)?;

    let am_extrapolated = am_sets.first().map_or(0, |s| s.intervals.iter().filter(|iv| iv.extrapolated).count());
    let summary = RunSummary {
        notes: model.notes.clone(),
        holdout_rows: model.holdout_rows.len(),
        test_rows: test.len(),
        am_extrapolated,
        am_forecasts: am_sets.first().map_or(0, |s| s.intervals.len()),
    };
    dir.json(&format!("models/{SUMMARY_FILE}"), &summary).at(Stage::Output)?;
    Ok(model)
}

fn write_model(dir: &mut ArtifactDir, model: &FittedPipeline) -> Result<()> {
    let ens = &model.pm.ensemble;
    BoostedEnsemble::write_loss_curve(&ens.train_loss_curve, dir.create("curves/pm_train_loss.csv")?)?;
    BoostedEnsemble::write_loss_curve(&ens.test_loss_curve, dir.create("curves/pm_test_loss.csv")?)?;
    let mut pm = model.pm.clone();
    pm.ensemble.train_loss_curve.clear();
    pm.ensemble.test_loss_curve.clear();
    dir.json(&format!("models/{PM_MODEL_FILE}"), &pm)?;
    let mut whiteness = BTreeMap::new();
    whiteness.insert("PM", whiteness_entry(&model.pm.calibration));
    if let Some(am) = &model.am {
        dir.json(&format!("models/{AM_MODEL_FILE}"), am)?;
        whiteness.insert("AM", whiteness_entry(&am.calibration));
    }
    dir.json("diagnostics/whiteness.json", &whiteness)
}

fn write_fitted(dir: &mut ArtifactDir, train: &SupervisedFrame, model: &FittedPipeline) -> Result<()> {
    let mut w = dir.create("fitted_train.csv")?;
    writeln!(w, "t,date,y_pm,pm_fitted,y_am,am_fitted")?;
    for (i, r) in train.rows.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.t,
            r.date,
            fmt_opt(r.y_pm),
            fmt_opt(model.pm_fitted[i]),
            fmt_opt(r.y_am),
            fmt_opt(model.am_fitted[i])
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Plot data: observed distributions, observed-versus-fitted scatters with a
/// smooth, and over-time series from June on.
fn write_figures(dir: &mut ArtifactDir, train: &SupervisedFrame, model: &FittedPipeline, cfg: &RunConfig) -> Result<()> {
    let mut w = dir.create("figures/fig1_observed.csv")?;
    writeln!(w, "date,y_pm,y_am")?;
    for r in &train.rows {
        writeln!(w, "{},{},{}", r.date, fmt_opt(r.y_pm), fmt_opt(r.y_am))?;
    }
    w.flush()?;

    let dates: Vec<NaiveDate> = train.rows.iter().map(|r| r.date).collect();
    let span = cfg.settings.loess_span;
    let degree = cfg.settings.loess_degree;
    let channels: [(&str, Vec<Option<f64>>, &Vec<Option<f64>>); 2] = [
        ("pm", train.rows.iter().map(|r| r.y_pm).collect(), &model.pm_fitted),
        ("am", train.rows.iter().map(|r| r.y_am).collect(), &model.am_fitted),
    ];
    for (label, observed, fitted) in channels {
        let (o, f): (Vec<f64>, Vec<f64>) = observed
            .iter()
            .zip(fitted.iter())
            .filter_map(|(o, f)| Some(((*o)?, (*f)?)))
            .unzip();
        if o.len() < 3 {
            continue;
        }
        let mut w = dir.create(&format!("figures/fig2_{label}_scatter.csv"))?;
        write_fit_scatter(&o, &f, span, degree, &mut w)?;
        w.flush()?;
        let rows = fit_series_export(&dates, &observed, fitted, cfg.figure_span, degree, Some(6))?;
        let mut w = dir.create(&format!("figures/fig3_{label}_series.csv"))?;
        write_fit_series(&rows, &mut w)?;
        w.flush()?;
    }
    if let Some(am) = &model.am {
        let (lo, hi) = am.loess.x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let grid: Vec<f64> = (0..=100).map(|k| lo + (hi - lo) * f64::from(k) / 100.0).collect();
        let mut w = dir.create("figures/am_loess_curve.csv")?;
        am.loess.write_curve(&grid, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Calibrated channels loaded from a `models` directory.
pub struct LoadedModel {
    pub pm: PmChannel,
    pub am: Option<AmChannel>,
    pub summary: Option<RunSummary>,
}

pub fn load_model(model_dir: &Path) -> Result<LoadedModel> {
    let open = |name: &str| -> Result<File> {
        File::open(model_dir.join(name))
            .map_err(|e| Error::Model(format!("cannot open {}: {e}", model_dir.join(name).display())))
    };
    let mut pm: PmChannel = serde_json::from_reader(std::io::BufReader::new(open(PM_MODEL_FILE)?))?;
    pm.calibration = pm.calibration.restore();
    let am = if model_dir.join(AM_MODEL_FILE).exists() {
        let mut am: AmChannel = serde_json::from_reader(std::io::BufReader::new(open(AM_MODEL_FILE)?))?;
        am.calibration = am.calibration.restore();
        Some(am)
    } else {
        None
    };
    let summary = match File::open(model_dir.join(SUMMARY_FILE)) {
        Ok(f) => Some(serde_json::from_reader(f)?),
        Err(_) => None,
    };
    Ok(LoadedModel { pm, am, summary })
}

/// Predictor rows read by `forecast`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorRow {
    /// 1-based data row number in the input file.
    pub row: usize,
    pub date: Option<NaiveDate>,
    pub x: [f64; N_PREDICTORS],
}

/// Reads columns `x1..x8` (and `date` when present) by header name. Rows
/// with an empty predictor field are skipped and counted.
pub fn read_predictors<R: Read>(source: R) -> Result<(Vec<PredictorRow>, usize)> {
    let mut reader = csv::ReaderBuilder::new().from_reader(source);
    let headers = reader.headers()?.clone();
    let mut idx = [0usize; N_PREDICTORS];
    for (j, slot) in idx.iter_mut().enumerate() {
        let name = format!("x{}", j + 1);
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("predictor column {name} is missing")))?;
    }
    let date_col = headers.iter().position(|h| h.trim() == "date");
    let mut rows = Vec::new();
    let mut skipped = 0;
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = k + 1;
        let mut x = [0.0; N_PREDICTORS];
        let mut empty = false;
        for j in 0..N_PREDICTORS {
            let field = rec
                .get(idx[j])
                .ok_or_else(|| Error::Schema(format!("row {row}: predictor column x{} is missing", j + 1)))?
                .trim();
            if field.is_empty() {
                empty = true;
                break;
            }
            x[j] = field
                .parse()
                .map_err(|_| Error::Data(format!("row {row}: column x{}: cannot parse {field:?}", j + 1)))?;
        }
        if empty {
            skipped += 1;
            continue;
        }
        let date = match date_col.and_then(|c| rec.get(c)).map(str::trim) {
            Some(d) if !d.is_empty() => Some(
                NaiveDate::parse_from_str(d, "%Y-%m-%d")
                    .map_err(|_| Error::Data(format!("row {row}: column date: cannot parse {d:?}")))?,
            ),
            _ => None,
        };
        rows.push(PredictorRow { row, date, x });
    }
    Ok((rows, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ForecastMetadata {
    pub model_dir: String,
    pub predictors: String,
    pub requested_alphas: Vec<f64>,
    pub simultaneous: bool,
    /// Levels actually used per query.
    pub effective_alphas: Vec<f64>,
    pub rows_forecast: usize,
    pub rows_skipped: usize,
    pub channels: Vec<Channel>,
}

/// PM and (when calibrated) AM intervals for every predictor row and alpha.
/// The AM interval from a row is for the following night.
pub fn cmd_forecast(
    model_dir: &Path,
    predictors: &Path,
    alphas: &[f64],
    simultaneous: bool,
) -> StageResult<(Vec<ForecastInterval>, ForecastMetadata)> {
    let alphas = if alphas.is_empty() { DEFAULT_ALPHAS.to_vec() } else { alphas.to_vec() };
    for &a in &alphas {
        check_fraction("alpha", a).at(Stage::Config)?;
    }
    let effective = effective_alphas(&alphas, simultaneous);
    let model = load_model(model_dir).at(Stage::Forecast)?;
    let file = File::open(predictors)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", predictors.display())))
        .at(Stage::Ingest)?;
    let (rows, skipped) = read_predictors(file).at(Stage::Ingest)?;
    let mut out = Vec::new();
    for &a in &effective {
        let pm = PmForecaster::new(&model.pm, a).at(Stage::Forecast)?;
        let am = model.am.as_ref().map(|am| AmForecaster::new(&model.pm, am, a)).transpose().at(Stage::Forecast)?;
        for r in &rows {
            out.push(pm.forecast(&r.x, r.row, r.date).at(Stage::Forecast)?);
            if let Some(am) = &am {
                out.push(am.forecast(&r.x, r.row, r.date.map(|d| d + Duration::days(1))).at(Stage::Forecast)?);
            }
        }
    }
    let mut channels = vec![Channel::Pm];
    if model.am.is_some() {
        channels.push(Channel::Am);
    }
    let meta = ForecastMetadata {
        model_dir: model_dir.display().to_string(),
        predictors: predictors.display().to_string(),
        requested_alphas: alphas,
        simultaneous,
        effective_alphas: effective,
        rows_forecast: rows.len(),
        rows_skipped: skipped,
        channels,
    };
    Ok((out, meta))
}

/// Writes forecast intervals to `out` and the metadata to `<out>.meta.json`.
pub fn write_forecast(out: &Path, intervals: &[ForecastInterval], meta: &ForecastMetadata) -> Result<()> {
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(File::create(out)?);
    write_intervals_csv(intervals, &mut w)?;
    w.flush()?;
    let mut meta_path = out.as_os_str().to_owned();
    meta_path.push(".meta.json");
    fs::write(meta_path, serde_json::to_string_pretty(meta)? + "\n")?;
    Ok(())
}

fn describe_whiteness(r: &WhitenessReport) -> String {
    format!(
        "Ljung-Box Q = {:.4}, lags = {}, df = {}, p = {:.4}, lag-1 autocorrelation = {:.4}",
        r.ljung_box_stat, r.lags_tested, r.degrees_of_freedom, r.p_value, r.lag1_autocorr
    )
}

fn describe_channel(out: &mut String, cal: &ChannelCalibration) {
    use std::fmt::Write as _;
    let label = cal.channel.label();
    let _ = writeln!(out, "[{label}]");
    let _ = writeln!(out, "  score predictor: {}", cal.predictor);
    let _ = writeln!(out, "  raw residuals: {}", describe_whiteness(&cal.raw_whiteness));
    match &cal.ar1 {
        Some(m) => {
            let _ = writeln!(out, "  AR(1): phi = {:.4}, intercept = {:.4}, n = {}", m.phi, m.intercept, m.n_used);
        }
        None => {
            let _ = writeln!(out, "  AR(1): not applied (raw residuals passed)");
        }
    }
    let _ = writeln!(out, "  scores: {}", describe_whiteness(&cal.whiteness));
    let verdict = if cal.whiteness.passed { "PASS" } else { "FAIL" };
    let _ = writeln!(out, "{label} scores exchangeable: {verdict} (Ljung-Box p = {:.4})", cal.whiteness.p_value);
    let q = |p: f64| match p {
        0.0 => cal.scores.iter().copied().fold(f64::INFINITY, f64::min),
        1.0 => cal.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        _ => empirical_quantile(&cal.scores, p).unwrap_or(f64::NAN),
    };
    let _ = writeln!(
        out,
        "  score summary: n = {}, min = {:.3}, q05 = {:.3}, median = {:.3}, q95 = {:.3}, max = {:.3}",
        cal.scores.len(),
        q(0.0),
        q(0.05),
        q(0.5),
        q(0.95),
        q(1.0)
    );
    let _ = writeln!(out, "  fitted range: [{:.3}, {:.3}]", cal.fitted_range.0, cal.fitted_range.1);
    match &cal.holdout {
        Some(h) => {
            let _ = writeln!(out, "  calibration holdout: {} rows", h.residuals.len());
        }
        None => {
            let _ = writeln!(out, "  calibration holdout: none");
        }
    }
}

/// Human-readable diagnostics for a `models` directory. Pure read.
pub fn cmd_diagnose(model_dir: &Path) -> StageResult<String> {
    use std::fmt::Write as _;
    let model = load_model(model_dir).at(Stage::Forecast)?;
    let mut out = format!("model directory: {}\n", model_dir.display());
    describe_channel(&mut out, &model.pm.calibration);
    match &model.am {
        Some(am) => describe_channel(&mut out, &am.calibration),
        None => out.push_str("[AM]\n  not calibrated\n"),
    }
    let mut warnings: Vec<String> = Vec::new();
    for cal in std::iter::once(&model.pm.calibration).chain(model.am.as_ref().map(|a| &a.calibration)) {
        for w in cal.validity_warnings() {
            warnings.push(format!("{}: {w}", cal.channel.label()));
        }
    }
    if let Some(s) = &model.summary {
        let _ = writeln!(out, "extrapolation: {} of {} test-year AM forecasts outside the loess training range", s.am_extrapolated, s.am_forecasts);
        warnings.extend(s.notes.iter().cloned());
    }
    if warnings.is_empty() {
        out.push_str("warnings: none\n");
    } else {
        out.push_str("warnings:\n");
        for w in &warnings {
            let _ = writeln!(out, "  - {w}");
        }
    }
    out.push_str(
        "note: the exchangeability check tests second-order whiteness (autocorrelation) only; higher-order dependence is not tested\n",
    );
    Ok(out)
}

/// Recomputes coverage and the interval-length table from a run directory's
/// interval files and test frame.
pub fn cmd_evaluate(run_dir: &Path) -> StageResult<String> {
    use std::fmt::Write as _;
    let manifest = Manifest::read(run_dir).at(Stage::Evaluate)?;
    let cfg = manifest.config(run_dir).at(Stage::Config)?;
    let file = File::open(run_dir.join("frames/test_frame.csv")).at(Stage::Ingest)?;
    let test = SupervisedFrame::read_csv(file, cfg.lag_days).at(Stage::Ingest)?;
    let by_date: BTreeMap<NaiveDate, (Option<f64>, Option<f64>)> =
        test.rows.iter().map(|r| (r.date, (r.y_pm, r.y_am))).collect();
    let mut out = String::new();
    let mut table_rows = Vec::new();
    for channel in [Channel::Pm, Channel::Am] {
        let mut sums = Vec::new();
        for &a in &manifest.effective_alphas {
            let name = format!("intervals/{}_{}.csv", channel.label().to_lowercase(), alpha_tag(a));
            let Ok(f) = File::open(run_dir.join(&name)) else { continue };
            let intervals = crate::conformal::read_intervals_csv(f).at(Stage::Evaluate)?;
            let (iv, y): (Vec<ForecastInterval>, Vec<f64>) = intervals
                .iter()
                .filter_map(|iv| {
                    let (pm, am) = by_date.get(&iv.date?)?;
                    let y = if channel == Channel::Pm { *pm } else { *am };
                    Some((iv.clone(), y?))
                })
                .unzip();
            let cov = coverage_audit(&iv, &y).at(Stage::Evaluate)?;
            let _ = writeln!(
                out,
                "{} alpha = {a}: coverage {:.4} ({} of {})",
                channel.label(),
                cov.coverage,
                cov.covered,
                cov.n
            );
            sums.push(summarize_intervals(&intervals, Subset::TopDecileByForecast).at(Stage::Evaluate)?);
        }
        if sums.len() == manifest.effective_alphas.len() {
            table_rows.push((channel, sums));
        }
    }
    let mut table = Vec::new();
    write_summary_table(&manifest.effective_alphas, &table_rows, &mut table).at(Stage::Evaluate)?;
    out.push_str("top-decile interval lengths:\n");
    out.push_str(&String::from_utf8_lossy(&table));
    Ok(out)
}

/// Applies `key = value` scenario overrides onto the default scenario.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec> {
    let mut value = serde_json::to_value(ScenarioSpec::default())?;
    let map = value.as_object_mut().expect("scenario serializes to an object");
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected key = value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        let slot = map
            .get_mut(k)
            .ok_or_else(|| config_err(format!("line {}: unknown scenario key {k:?}", n + 1)))?;
        *slot = if slot.is_string() {
            serde_json::Value::String(v.to_string())
        } else {
            serde_json::from_str(v).map_err(|_| config_err(format!("line {}: {k}: cannot parse {v:?}", n + 1)))?
        };
    }
    let spec: ScenarioSpec =
        serde_json::from_value(value).map_err(|e| config_err(format!("invalid scenario: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

/// Settings for synthetic benchmarks: a coarser learning rate than the
/// library default so a run takes seconds, and held-out calibration.
pub fn benchmark_settings(seed: u64) -> PipelineSettings {
    let mut s = PipelineSettings { seed, calibrated: true, ..PipelineSettings::default() };
    s.boost.shrinkage = 0.01;
    s.boost.max_trees = 1500;
    s.boost.max_depth = 4;
    s
}

/// Writes a synthetic two-season station dataset, its scenario, and a run
/// config pointing at it.
pub fn cmd_synth(out_dir: &Path, spec: &ScenarioSpec, seed: u64) -> StageResult<PathBuf> {
    let data = synth_generate(spec, seed).at(Stage::Config)?;
    fs::create_dir_all(out_dir).at(Stage::Output)?;
    let write = |name: &str, records: &[WeatherRecord]| -> Result<()> {
        let mut w = BufWriter::new(File::create(out_dir.join(name))?);
        write_station_csv(records, &mut w)?;
        w.flush()?;
        Ok(())
    };
    write("train.csv", &data.train_records).at(Stage::Output)?;
    write("test.csv", &data.test_records).at(Stage::Output)?;
    fs::write(out_dir.join("scenario.json"), serde_json::to_string_pretty(spec).at(Stage::Output)? + "\n")
        .at(Stage::Output)?;
    let last = |start: NaiveDate| start + Duration::days(spec.n_days as i64 - 1);
    let cfg = RunConfig {
        train_csv: PathBuf::from("train.csv"),
        test_csv: PathBuf::from("test.csv"),
        out_dir: PathBuf::from("run"),
        lag_days: spec.lag_days,
        train_start: Some(spec.train_start),
        train_end: Some(last(spec.train_start)),
        test_start: Some(spec.test_start),
        test_end: Some(last(spec.test_start)),
        settings: benchmark_settings(seed),
        ..RunConfig::default()
    };
    let path = out_dir.join("run.conf");
    fs::write(&path, cfg.to_text()).at(Stage::Output)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "train_csv = a.csv\ntest_csv = b.csv\nout_dir = out\n";

    #[test]
    fn parse_defaults_and_resolution() {
        let cfg = RunConfig::parse(MINIMAL, Path::new("/data")).unwrap();
        assert_eq!(cfg.train_csv, PathBuf::from("/data/a.csv"));
        assert_eq!(cfg.lag_days, 14);
        assert_eq!(cfg.settings.boost.shrinkage, 1e-4);
        assert_eq!(cfg.settings.boost.max_depth, 6);
        assert_eq!(cfg.settings.boost.max_trees, 100_000);
        assert_eq!(cfg.settings.loess_span, 0.75);
        assert_eq!(cfg.alphas, vec![0.10, 0.30]);
    }

    #[test]
    fn text_round_trip() {
        let text = format!("{MINIMAL}# note\nalphas = 0.3, 0.1\ndelimiter = tab\nqrf_features = 2\nmissing_sentinels = ,NA\n");
        let cfg = RunConfig::parse(&text, Path::new("/d")).unwrap();
        assert_eq!(cfg.columns.missing_sentinels, vec!["".to_string(), "NA".to_string()]);
        let again = RunConfig::parse(&cfg.to_text(), Path::new("/elsewhere")).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn bad_lines() {
        for extra in ["bogus = 1\n", "tau\n", "tau = x\n", "train_csv = c.csv\n"] {
            let err = RunConfig::parse(&format!("{MINIMAL}{extra}"), Path::new(".")).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{extra}");
        }
        assert!(RunConfig::parse("train_csv = a\n", Path::new(".")).is_err());
    }

    #[test]
    fn duplicate_alpha_warns() {
        let mut cfg = RunConfig::parse(&format!("{MINIMAL}alphas = 0.3,0.1,0.3\n"), Path::new(".")).unwrap();
        let warnings = cfg.validate().unwrap();
        assert_eq!(cfg.alphas, vec![0.1, 0.3]);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn validation_rejects_out_of_range() {
        for extra in ["tau = 1\n", "alphas = 0\n", "loess_span = 1.5\n", "subsample = 0\n"] {
            let mut cfg = RunConfig::parse(&format!("{MINIMAL}{extra}"), Path::new(".")).unwrap();
            assert!(cfg.validate().is_err(), "{extra}");
        }
        let mut cfg = RunConfig::parse("train_csv = a\ntest_csv = a\nout_dir = o\n", Path::new(".")).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn simultaneous_levels() {
        assert_eq!(effective_alphas(&[0.10, 0.30], true), vec![0.05, 0.15]);
        assert_eq!(effective_alphas(&[0.10, 0.30], false), vec![0.10, 0.30]);
        assert_eq!(effective_alphas(&[0.10], true), vec![0.10]);
    }

    #[test]
    fn predictor_columns_by_name() {
        let csv = "date,x1,x2,x3,x4,x5,x6,x7,x8\n2021-04-01,1,2,3,4,5,6,7,8\n2021-04-02,,2,3,4,5,6,7,8\n";
        let (rows, skipped) = read_predictors(csv.as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(skipped, 1);
        assert_eq!(rows[0].x[7], 8.0);
        let err = read_predictors("x1,x2,x3,x4,x6,x7,x8\n1,2,3,4,6,7,8\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("x5"));
    }

    #[test]
    fn scenario_overrides() {
        let s = parse_scenario("noise_phi = 0\nn_days = 100\ntest_start = 2022-04-01\n").unwrap();
        assert_eq!(s.noise_phi, 0.0);
        assert_eq!(s.n_days, 100);
        assert_eq!(s.test_start, NaiveDate::from_ymd_opt(2022, 4, 1).unwrap());
        assert!(parse_scenario("nope = 1\n").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Stage::Config.exit_code(), 2);
        assert_eq!(Stage::Ingest.exit_code(), 3);
        assert_eq!(Stage::Train.exit_code(), 4);
    }
}
