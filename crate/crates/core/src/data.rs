//! Domain types shared by every stage: the visit schedule, subject records, CSV ingestion and the
//! run configuration file.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DataError, Result};
use crate::estimate::{BasisSpec, EstimationConfig, EstimatorKind, Interactions};
use crate::exec::ExecMode;
use crate::nuisance::{FeatureMap, LearnerSpec};

/// Visit times `t_1 < ... < t_K`, the anchor visit at which the covariates of interest are
/// measured, and the grid of evaluation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitSchedule {
    visit_times: Vec<f64>,
    /// Zero-based index of the anchor visit.
    anchor: usize,
    tau_grid: Vec<f64>,
}

impl VisitSchedule {
    /// `anchor` is one-based, as in the configuration file.
    pub fn new(visit_times: Vec<f64>, anchor: usize, tau_grid: Vec<f64>) -> Result<Self> {
        if visit_times.is_empty()
            || visit_times.iter().any(|t| !t.is_finite())
            || visit_times.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(ConfigError::VisitTimesNotIncreasing.into());
        }
        let k = visit_times.len();
        if anchor == 0 || anchor > k {
            return Err(ConfigError::AnchorOutOfRange { anchor, k }.into());
        }
        if tau_grid.is_empty()
            || tau_grid.iter().any(|t| !t.is_finite())
            || tau_grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(ConfigError::TauGridNotIncreasing.into());
        }
        let anchor_time = visit_times[anchor - 1];
        if let Some(&tau) = tau_grid.iter().find(|&&tau| tau <= anchor_time) {
            return Err(ConfigError::TauNotAfterAnchor { tau, anchor_time }.into());
        }
        Ok(Self {
            visit_times,
            anchor: anchor - 1,
            tau_grid,
        })
    }

    pub fn visit_times(&self) -> &[f64] {
        &self.visit_times
    }

    pub fn num_visits(&self) -> usize {
        self.visit_times.len()
    }

    /// Zero-based anchor index.
    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn tau_grid(&self) -> &[f64] {
        &self.tau_grid
    }

    /// End of the analysis: the largest evaluation time.
    pub fn horizon(&self) -> f64 {
        *self.tau_grid.last().expect("tau grid is non-empty")
    }

    pub fn window_start(&self, k: usize) -> f64 {
        self.visit_times[k]
    }

    /// `t_{k+1}` for inner windows; the horizon for the last one.
    pub fn window_end(&self, k: usize) -> f64 {
        self.visit_times
            .get(k + 1)
            .copied()
            .unwrap_or_else(|| self.horizon())
    }

    /// `t_{k+1} ∧ tau`.
    pub fn t_bar(&self, k: usize, tau: f64) -> f64 {
        self.window_end(k).min(tau)
    }

    /// Windows `k >= anchor` that start before `tau`. Windows starting at or after `tau`
    /// contribute a factor of one to the product and are skipped.
    pub fn active_windows(&self, tau: f64) -> impl Iterator<Item = usize> + '_ {
        (self.anchor..self.num_visits()).filter(move |&k| self.visit_times[k] < tau)
    }

    /// Windows that are active for at least one tau in the grid.
    pub fn estimation_windows(&self) -> impl Iterator<Item = usize> + '_ {
        self.active_windows(self.horizon())
    }
}

/// One subject: covariate history (visit `k` present iff `X > t_k`), follow-up, event flag and a
/// sampling weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub covariates: Vec<Option<Vec<f64>>>,
    pub followup: f64,
    pub event: bool,
    pub weight: f64,
}

impl SubjectRecord {
    pub fn is_at_risk(&self, t: f64) -> bool {
        self.followup > t
    }

    /// Checks the presence pattern, positivity of follow-up and weight, and covariate arity.
    /// `row` is only used in error messages.
    pub fn validate(
        &self,
        schedule: &VisitSchedule,
        arity: &[usize],
        row: usize,
    ) -> Result<(), DataError> {
        if !(self.followup.is_finite() && self.followup > 0.0) {
            return Err(DataError::NonPositiveFollowup {
                row,
                id: self.id.clone(),
                followup: self.followup,
            });
        }
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(DataError::NonPositiveWeight {
                row,
                id: self.id.clone(),
                weight: self.weight,
            });
        }
        if self.covariates.len() != schedule.num_visits() {
            return Err(DataError::Parse {
                row,
                message: format!(
                    "record has {} visits, schedule has {}",
                    self.covariates.len(),
                    schedule.num_visits()
                ),
            });
        }
        for (k, (cov, &t_k)) in self
            .covariates
            .iter()
            .zip(schedule.visit_times())
            .enumerate()
        {
            match (cov, self.followup > t_k) {
                (Some(_), false) => {
                    return Err(DataError::CovariatePresentAfterExit {
                        row,
                        id: self.id.clone(),
                        visit: k + 1,
                        followup: self.followup,
                        visit_time: t_k,
                    })
                }
                (None, true) => {
                    return Err(DataError::CovariateMissingWhileAtRisk {
                        row,
                        id: self.id.clone(),
                        visit: k + 1,
                        followup: self.followup,
                        visit_time: t_k,
                    })
                }
                (Some(v), true) => {
                    if let Some(&expected) = arity.get(k) {
                        if v.len() != expected {
                            return Err(DataError::CovariateArity {
                                row,
                                id: self.id.clone(),
                                visit: k + 1,
                                got: v.len(),
                                expected,
                            });
                        }
                    }
                }
                (None, false) => {}
            }
        }
        Ok(())
    }

    /// Concatenated covariates `L_1, ..., L_{k}` for zero-based visit `k`. `None` when the
    /// subject is not at risk at `t_k`.
    pub fn history(&self, k: usize) -> Option<Vec<f64>> {
        let mut out = Vec::new();
        for cov in &self.covariates[..=k] {
            out.extend_from_slice(cov.as_ref()?);
        }
        Some(out)
    }
}

/// Column layout of the wide CSV format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSchema {
    #[serde(default = "default_id")]
    pub id: String,
    #[serde(default = "default_time")]
    pub time: String,
    #[serde(default = "default_event")]
    pub event: String,
    #[serde(default)]
    pub weight: Option<String>,
    /// Covariate column names for each visit, in visit order.
    pub visits: Vec<Vec<String>>,
}

fn default_id() -> String {
    "id".into()
}
fn default_time() -> String {
    "X".into()
}
fn default_event() -> String {
    "Delta".into()
}

impl DataSchema {
    pub fn arity(&self) -> Vec<usize> {
        self.visits.iter().map(Vec::len).collect()
    }

    /// Position of a named covariate in the flattened history `(L_1, ..., L_K)`, together with
    /// its zero-based visit.
    pub fn locate(&self, name: &str) -> Option<(usize, usize)> {
        let mut offset = 0;
        for (k, cols) in self.visits.iter().enumerate() {
            if let Some(j) = cols.iter().position(|c| c == name) {
                return Some((offset + j, k));
            }
            offset += cols.len();
        }
        None
    }

    /// Number of flattened history columns through zero-based visit `k`.
    pub fn history_width(&self, k: usize) -> usize {
        self.visits[..=k].iter().map(Vec::len).sum()
    }
}

/// Validated subject records plus the schema they were read with.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: DataSchema,
    pub schedule: VisitSchedule,
    pub records: Vec<SubjectRecord>,
}

impl Dataset {
    pub fn new(
        schema: DataSchema,
        schedule: VisitSchedule,
        records: Vec<SubjectRecord>,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(DataError::Empty.into());
        }
        if schema.visits.len() != schedule.num_visits() {
            return Err(ConfigError::Invalid(format!(
                "schema lists {} visits but the schedule has {}",
                schema.visits.len(),
                schedule.num_visits()
            ))
            .into());
        }
        let arity = schema.arity();
        for (row, r) in records.iter().enumerate() {
            r.validate(&schedule, &arity, row + 1)?;
        }
        Ok(Self {
            schema,
            schedule,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn with_schedule(&self, schedule: VisitSchedule) -> Result<Self> {
        Dataset::new(self.schema.clone(), schedule, self.records.clone())
    }
}

fn parse_event(s: &str) -> Option<bool> {
    match s.trim() {
        "1" | "true" | "TRUE" | "True" => Some(true),
        "0" | "false" | "FALSE" | "False" => Some(false),
        _ => None,
    }
}

/// Reads a wide CSV (one row per subject) and validates every record against the schedule.
/// Rows are numbered from 1, excluding the header.
pub fn load_dataset(
    path: impl AsRef<Path>,
    schema: &DataSchema,
    schedule: &VisitSchedule,
) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(file, schema, schedule)
}

pub fn read_dataset<R: std::io::Read>(
    reader: R,
    schema: &DataSchema,
    schedule: &VisitSchedule,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(DataError::from)?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let col = |name: &str| -> Result<usize, DataError> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let id_col = col(&schema.id)?;
    let time_col = col(&schema.time)?;
    let event_col = col(&schema.event)?;
    let weight_col = schema.weight.as_deref().map(col).transpose()?;
    let visit_cols = schema
        .visits
        .iter()
        .map(|names| names.iter().map(|n| col(n)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;

    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(DataError::from)?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let num = |c: usize, what: &str| -> Result<f64, DataError> {
            field(c).parse::<f64>().map_err(|_| DataError::Parse {
                row,
                message: format!("cannot parse {what} `{}` as a number", field(c)),
            })
        };
        let followup = num(time_col, &schema.time)?;
        let event = parse_event(field(event_col)).ok_or_else(|| DataError::Parse {
            row,
            message: format!("event flag `{}` is not 0/1", field(event_col)),
        })?;
        let weight = match weight_col {
            Some(c) => num(c, "weight")?,
            None => 1.0,
        };
        let mut covariates = Vec::with_capacity(visit_cols.len());
        for (k, cols) in visit_cols.iter().enumerate() {
            let empty = cols.iter().filter(|&&c| field(c).is_empty()).count();
            if empty == cols.len() && !cols.is_empty() {
                covariates.push(None);
            } else if empty > 0 {
                return Err(DataError::Parse {
                    row,
                    message: format!("visit {} is partially observed", k + 1),
                }
                .into());
            } else {
                let v = cols
                    .iter()
                    .map(|&c| num(c, &headers[c]))
                    .collect::<Result<Vec<_>, _>>()?;
                // A visit with no covariate columns is present exactly when the subject is at risk.
                if cols.is_empty() && followup <= schedule.visit_times()[k] {
                    covariates.push(None);
                } else {
                    covariates.push(Some(v));
                }
            }
        }
        let record = SubjectRecord {
            id: field(id_col).to_string(),
            covariates,
            followup,
            event,
            weight,
        };
        record.validate(schedule, &schema.arity(), row)?;
        records.push(record);
    }
    Dataset::new(schema.clone(), schedule.clone(), records)
}

/// Writes the dataset in the wide layout read by [`load_dataset`]. Floats use the shortest
/// representation that round-trips exactly.
pub fn write_dataset<W: std::io::Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let schema = &dataset.schema;
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![schema.id.clone(), schema.time.clone(), schema.event.clone()];
    if let Some(w) = &schema.weight {
        header.push(w.clone());
    }
    header.extend(schema.visits.iter().flatten().cloned());
    wtr.write_record(&header).map_err(DataError::from)?;
    for r in &dataset.records {
        let mut row = vec![
            r.id.clone(),
            format!("{}", r.followup),
            if r.event { "1" } else { "0" }.to_string(),
        ];
        if schema.weight.is_some() {
            row.push(format!("{}", r.weight));
        }
        for (k, cols) in schema.visits.iter().enumerate() {
            match &r.covariates[k] {
                Some(v) => row.extend(v.iter().map(|x| format!("{x}"))),
                None => row.extend(std::iter::repeat_n(String::new(), cols.len())),
            }
        }
        wtr.write_record(&row).map_err(DataError::from)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(dataset, std::io::BufWriter::new(file))
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Every key accepted in the TOML run configuration, with a one-line description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("seed", "RNG seed for fold assignment (default 1)"),
    ("folds", "number of cross-fitting folds, 1 disables cross-fitting (default 10)"),
    ("trim", "floor applied to censoring survival before division, in (0, 0.5) (default 0.05)"),
    ("isotonic", "clamp to [0,1] and project conditional estimates to be nonincreasing in tau (default true)"),
    ("estimators", "list of estimators to run: mr, g, ipcw (default [\"mr\"])"),
    ("marginal", "estimate the marginal survival probability instead of a conditional curve (default false)"),
    ("parallel", "use the rayon pool when available (default true)"),
    ("schedule.visit_times", "strictly increasing visit times t_1 < ... < t_K"),
    ("schedule.anchor", "one-based index of the visit at which W is measured"),
    ("schedule.tau", "evaluation times, each greater than the anchor visit time"),
    ("data.id / data.time / data.event", "CSV column names (defaults id, X, Delta)"),
    ("data.weight", "optional CSV column holding positive sampling weights"),
    ("data.visits", "covariate column names per visit, e.g. [[\"L11\",\"L12\"],[\"L21\"]]"),
    ("nuisance.event", "event-time model: km | cox | oracle:<dgp>, or one entry per visit"),
    ("nuisance.censor", "censoring model, same choices as nuisance.event"),
    ("nuisance.cox_features", "optional Cox feature terms per visit: name, abs(name), sq(name), a*b"),
    ("regression.columns", "covariates forming W; must be measured at or before the anchor visit"),
    ("regression.binary", "columns in W that are 0/1 and never raised to powers"),
    ("regression.degree", "polynomial degree of the basis, 1 to 3 (default 1)"),
    ("regression.interactions", "none | pairwise | full (default none)"),
    ("output.w_points", "optional explicit list of W values to report; default is every distinct observed W"),
];

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub visit_times: Vec<f64>,
    #[serde(default = "one")]
    pub anchor: usize,
    pub tau: Vec<f64>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum ModelChoice {
    Single(String),
    PerVisit(Vec<String>),
}

impl ModelChoice {
    fn for_visit(&self, k: usize) -> Option<&str> {
        match self {
            ModelChoice::Single(s) => Some(s),
            ModelChoice::PerVisit(v) => v.get(k).map(String::as_str),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NuisanceConfig {
    #[serde(default = "default_model")]
    pub event: ModelChoice,
    #[serde(default = "default_model")]
    pub censor: ModelChoice,
    #[serde(default)]
    pub cox_features: Option<Vec<Vec<String>>>,
}

fn default_model() -> ModelChoice {
    ModelChoice::Single("km".into())
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            event: default_model(),
            censor: default_model(),
            cox_features: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct RegressionConfig {
    #[serde(default)]
    pub columns: Vec<String>,
    #[serde(default)]
    pub binary: Vec<String>,
    #[serde(default = "one")]
    pub degree: usize,
    #[serde(default)]
    pub interactions: Interactions,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub w_points: Option<Vec<Vec<f64>>>,
}

/// The single structured configuration file consumed by the CLI.
#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_trim")]
    pub trim: f64,
    #[serde(default = "default_true")]
    pub isotonic: bool,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub marginal: bool,
    #[serde(default = "default_true")]
    pub parallel: bool,
    pub schedule: ScheduleConfig,
    pub data: DataSchema,
    #[serde(default)]
    pub nuisance: NuisanceConfig,
    #[serde(default)]
    pub regression: RegressionConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    1
}
fn default_folds() -> usize {
    10
}
fn default_trim() -> f64 {
    0.05
}
fn default_true() -> bool {
    true
}
fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Mr]
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(ConfigError::from)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("cannot read config: {e}")))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn schedule(&self) -> Result<VisitSchedule> {
        VisitSchedule::new(
            self.schedule.visit_times.clone(),
            self.schedule.anchor,
            self.schedule.tau.clone(),
        )
    }

    /// Checks every invariant that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let schedule = self.schedule()?;
        if !(self.trim > 0.0 && self.trim < 0.5) {
            return Err(ConfigError::TrimOutOfRange(self.trim).into());
        }
        if self.folds == 0 {
            return Err(ConfigError::ZeroFolds.into());
        }
        if self.data.visits.len() != schedule.num_visits() {
            return Err(ConfigError::Invalid(format!(
                "data.visits lists {} visits but schedule.visit_times has {}",
                self.data.visits.len(),
                schedule.num_visits()
            ))
            .into());
        }
        if self.estimators.is_empty() {
            return Err(ConfigError::Invalid("estimators must not be empty".into()).into());
        }
        self.estimation_config(EstimatorKind::Mr)?;
        Ok(())
    }

    fn learners(&self, choice: &ModelChoice, schedule: &VisitSchedule) -> Result<Vec<LearnerSpec>> {
        (0..schedule.num_visits())
            .map(|k| {
                let name = choice.for_visit(k).ok_or_else(|| {
                    ConfigError::Invalid(format!("no nuisance model given for visit {}", k + 1))
                })?;
                let features = self.cox_feature_map(k)?;
                LearnerSpec::parse(name, features)
            })
            .collect()
    }

    fn cox_feature_map(&self, k: usize) -> Result<FeatureMap> {
        let width = self.data.history_width(k);
        match self.nuisance.cox_features.as_ref().and_then(|f| f.get(k)) {
            None => Ok(FeatureMap::all(width)),
            Some(terms) => FeatureMap::parse(terms, &self.data, k),
        }
    }

    /// Resolves the regression basis over W against the data schema.
    pub fn basis(&self, schedule: &VisitSchedule) -> Result<BasisSpec> {
        if self.marginal {
            return Ok(BasisSpec::intercept_only());
        }
        let mut columns = Vec::new();
        let mut binary = Vec::new();
        for name in &self.regression.columns {
            let (idx, visit) = self
                .data
                .locate(name)
                .ok_or_else(|| ConfigError::UnknownColumn(name.clone()))?;
            if visit > schedule.anchor() {
                return Err(ConfigError::Invalid(format!(
                    "regression column `{name}` is measured at visit {} after the anchor visit {}",
                    visit + 1,
                    schedule.anchor() + 1
                ))
                .into());
            }
            columns.push(idx);
            binary.push(self.regression.binary.contains(name));
        }
        if let Some(b) = self
            .regression
            .binary
            .iter()
            .find(|b| !self.regression.columns.contains(b))
        {
            return Err(ConfigError::UnknownColumn(b.clone()).into());
        }
        BasisSpec::new(
            columns,
            binary,
            self.regression.degree,
            self.regression.interactions,
        )
    }

    /// Settings consumed by the estimators for one estimator kind.
    pub fn estimation_config(&self, kind: EstimatorKind) -> Result<EstimationConfig> {
        let schedule = self.schedule()?;
        Ok(EstimationConfig {
            kind,
            event_learners: self.learners(&self.nuisance.event, &schedule)?,
            censor_learners: self.learners(&self.nuisance.censor, &schedule)?,
            basis: self.basis(&schedule)?,
            folds: self.folds,
            trim: self.trim,
            seed: self.seed,
            isotonic: self.isotonic,
            exec: if self.parallel {
                ExecMode::Parallel
            } else {
                ExecMode::Sequential
            },
        })
    }
}
