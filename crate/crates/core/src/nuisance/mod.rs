//! Conditional survival learners for the event time (`S_k`) and the censoring time (`G_k`)
//! inside one window, behind a single interface.
//!
//! Event models are fitted with the in-window event flag `δ_k`; censoring models with the flipped
//! flag `(1 - Δ) · 1(X <= t_{k+1})`. Both use the window-`k` risk set `{X > t_k}` only.

mod cox;
mod km;
mod oracle;

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

pub use cox::{CoxFit, CoxModel, CoxOptions};
pub use km::{kaplan_meier, KaplanMeier};
pub use oracle::OracleModel;

use crate::data::{DataSchema, Dataset};
use crate::error::{ConfigError, FitError, Result};
use crate::exec::ExecMode;
use crate::stepfn::StepSurvival;
use crate::windows::decompose;

/// Which survival function a model targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Event,
    Censor,
}

/// One at-risk subject inside a window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    /// Index of the subject in the dataset.
    pub subject: usize,
    /// Flattened covariate history `(L_1, ..., L_k)`.
    pub history: Vec<f64>,
    /// Absolute follow-up clipped to the window end, `X ∧ t_{k+1}`.
    pub x: f64,
    pub event: bool,
    pub censored: bool,
    pub weight: f64,
}

impl WindowRow {
    pub fn flag(&self, role: Role) -> bool {
        match role {
            Role::Event => self.event,
            Role::Censor => self.censored,
        }
    }
}

/// The risk set of window `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowData {
    pub k: usize,
    pub start: f64,
    pub end: f64,
    pub rows: Vec<WindowRow>,
}

impl WindowData {
    pub fn from_dataset(data: &Dataset, k: usize) -> Self {
        let schedule = &data.schedule;
        let horizon = schedule.horizon();
        let rows = data
            .records
            .iter()
            .enumerate()
            .filter_map(|(i, r)| {
                let view = &decompose(r, schedule, horizon)[k];
                view.at_risk.then(|| WindowRow {
                    subject: i,
                    history: r.history(k).expect("at-risk subjects have a full history"),
                    x: view.x_abs(schedule),
                    event: view.delta,
                    censored: view.censored,
                    weight: r.weight,
                })
            })
            .collect();
        Self {
            k,
            start: schedule.window_start(k),
            end: schedule.window_end(k),
            rows,
        }
    }

    pub fn from_rows(k: usize, start: f64, end: f64, rows: Vec<WindowRow>) -> Self {
        Self {
            k,
            start,
            end,
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn filter(&self, keep: impl Fn(&WindowRow) -> bool) -> Self {
        Self {
            k: self.k,
            start: self.start,
            end: self.end,
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }
}

/// A fitted conditional survival curve `t ↦ S(t | h)` on one window.
pub trait ConditionalSurvivalModel: Send + Sync {
    /// The curve for history `history`, valid at least up to `horizon`. Value 1 at the window
    /// start, nonincreasing and right-continuous.
    fn predict(&self, history: &[f64], horizon: f64) -> Result<Cow<'_, StepSurvival>>;
}

// ---------------------------------------------------------------------------
// Feature maps for regression-type learners
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Col(usize),
    Abs(usize),
    Sq(usize),
    Prod(usize, usize),
}

impl Term {
    fn apply(&self, h: &[f64]) -> f64 {
        match *self {
            Term::Col(i) => h[i],
            Term::Abs(i) => h[i].abs(),
            Term::Sq(i) => h[i] * h[i],
            Term::Prod(i, j) => h[i] * h[j],
        }
    }

    fn max_index(&self) -> usize {
        match *self {
            Term::Col(i) | Term::Abs(i) | Term::Sq(i) => i,
            Term::Prod(i, j) => i.max(j),
        }
    }
}

/// Maps a flattened history to model features.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureMap {
    terms: Vec<Term>,
}

impl FeatureMap {
    /// The raw history columns `0..width`.
    pub fn all(width: usize) -> Self {
        Self {
            terms: (0..width).map(Term::Col).collect(),
        }
    }

    pub fn new(terms: Vec<Term>) -> Self {
        Self { terms }
    }

    /// Parses terms of the form `name`, `abs(name)`, `sq(name)` and `a*b`; every name must be
    /// measured at or before zero-based visit `k`.
    pub fn parse(terms: &[String], schema: &DataSchema, k: usize) -> Result<Self> {
        let lookup = |name: &str| -> Result<usize> {
            match schema.locate(name.trim()) {
                Some((idx, visit)) if visit <= k => Ok(idx),
                Some(_) => Err(ConfigError::Invalid(format!(
                    "feature `{name}` is not yet measured at visit {}",
                    k + 1
                ))
                .into()),
                None => Err(ConfigError::UnknownColumn(name.to_string()).into()),
            }
        };
        let unwrap_call = |s: &str, f: &str| -> Option<String> {
            s.strip_prefix(f)?
                .strip_prefix('(')?
                .strip_suffix(')')
                .map(str::to_string)
        };
        let parsed = terms
            .iter()
            .map(|raw| {
                let t = raw.trim();
                if let Some(inner) = unwrap_call(t, "abs") {
                    Ok(Term::Abs(lookup(&inner)?))
                } else if let Some(inner) = unwrap_call(t, "sq") {
                    Ok(Term::Sq(lookup(&inner)?))
                } else if let Some((a, b)) = t.split_once('*') {
                    Ok(Term::Prod(lookup(a)?, lookup(b)?))
                } else if t.is_empty() || t.contains(['(', ')']) {
                    Err(ConfigError::BadTerm(raw.clone()).into())
                } else {
                    Ok(Term::Col(lookup(t)?))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { terms: parsed })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn apply(&self, history: &[f64]) -> Vec<f64> {
        self.terms.iter().map(|t| t.apply(history)).collect()
    }

    pub fn min_history_width(&self) -> usize {
        self.terms
            .iter()
            .map(|t| t.max_index() + 1)
            .max()
            .unwrap_or(0)
    }
}

// ---------------------------------------------------------------------------
// Learner selection
// ---------------------------------------------------------------------------

/// A nuisance learner named in the configuration: `km`, `cox`, or `oracle:<dgp>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LearnerSpec {
    /// Covariate-ignoring product-limit curve.
    Km,
    /// Cox proportional hazards with a Breslow baseline.
    Cox(FeatureMap),
    /// The true conditional law of a named simulation design.
    Oracle(String),
    /// The curve identically equal to one.
    Unit,
}

impl LearnerSpec {
    pub fn parse(name: &str, cox_features: FeatureMap) -> Result<Self> {
        let name = name.trim();
        match name {
            "km" => Ok(LearnerSpec::Km),
            "cox" => Ok(LearnerSpec::Cox(cox_features)),
            "unit" => Ok(LearnerSpec::Unit),
            _ => match name.strip_prefix("oracle:") {
                Some(dgp) => {
                    if crate::simulate::dgp_by_name(dgp).is_none() {
                        return Err(ConfigError::UnknownDgp(dgp.to_string()).into());
                    }
                    Ok(LearnerSpec::Oracle(dgp.to_string()))
                }
                None => Err(ConfigError::UnknownNuisance(name.to_string()).into()),
            },
        }
    }

    /// Whether fitting depends on the training rows. Data-independent learners are fitted once on
    /// the whole risk set rather than per cross-fitting fold.
    pub fn learns_from_data(&self) -> bool {
        matches!(self, LearnerSpec::Km | LearnerSpec::Cox(_))
    }

    pub fn label(&self) -> String {
        match self {
            LearnerSpec::Km => "km".into(),
            LearnerSpec::Cox(_) => "cox".into(),
            LearnerSpec::Oracle(n) => format!("oracle:{n}"),
            LearnerSpec::Unit => "unit".into(),
        }
    }

    pub fn fit(&self, data: &WindowData, role: Role) -> Result<Box<dyn ConditionalSurvivalModel>> {
        match self {
            LearnerSpec::Km => Ok(Box::new(fit_km(data, role)?)),
            LearnerSpec::Cox(features) => Ok(Box::new(fit_cox_breslow(
                data,
                role,
                features.clone(),
                &CoxOptions::default(),
            )?)),
            LearnerSpec::Oracle(name) => Ok(Box::new(fit_oracle(name, data, role)?)),
            LearnerSpec::Unit => Ok(Box::new(UnitModel(StepSurvival::unit(data.start)))),
        }
    }
}

/// Product-limit curve ignoring covariates.
pub fn fit_km(data: &WindowData, role: Role) -> Result<KaplanMeier> {
    if data.is_empty() {
        return Err(FitError::EmptyRiskSet { window: data.k }.into());
    }
    KaplanMeier::fit(data, role)
}

/// Cox partial-likelihood fit (Newton–Raphson, Breslow ties) with a Breslow baseline.
pub fn fit_cox_breslow(
    data: &WindowData,
    role: Role,
    features: FeatureMap,
    options: &CoxOptions,
) -> Result<CoxModel> {
    if data.is_empty() {
        return Err(FitError::EmptyRiskSet { window: data.k }.into());
    }
    let needed = features.min_history_width();
    if let Some(r) = data.rows.iter().find(|r| r.history.len() < needed) {
        return Err(ConfigError::Invalid(format!(
            "window {}: cox features need {needed} history values, got {}",
            data.k + 1,
            r.history.len()
        ))
        .into());
    }
    CoxModel::fit(data, role, features, options)
}

/// The true conditional curve of a named design, discretized on the window's observed times.
pub fn fit_oracle(dgp: &str, data: &WindowData, role: Role) -> Result<OracleModel> {
    let design = crate::simulate::dgp_by_name(dgp)
        .ok_or_else(|| ConfigError::UnknownDgp(dgp.to_string()))?;
    Ok(OracleModel::new(design, data, role))
}

/// One fitted model per cross-fitting fold, or a single shared model.
pub struct FoldModels {
    models: Vec<Box<dyn ConditionalSurvivalModel>>,
}

impl FoldModels {
    /// Fits `learner` once per fold on the rows outside that fold. `folds[i]` is the fold of
    /// dataset subject `i`. A single fold, or a learner that ignores its training rows, yields
    /// one model fitted on the whole risk set.
    pub fn fit(
        learner: &LearnerSpec,
        data: &WindowData,
        role: Role,
        folds: &[usize],
        n_folds: usize,
        exec: ExecMode,
    ) -> Result<Self> {
        if n_folds <= 1 || !learner.learns_from_data() {
            return Ok(Self {
                models: vec![learner.fit(data, role)?],
            });
        }
        let models = exec
            .map_range(n_folds, |f| {
                learner.fit(&data.filter(|r| folds[r.subject] != f), role)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { models })
    }

    pub fn single(model: Box<dyn ConditionalSurvivalModel>) -> Self {
        Self {
            models: vec![model],
        }
    }

    /// The model to use for subjects in fold `fold`.
    pub fn for_fold(&self, fold: usize) -> &dyn ConditionalSurvivalModel {
        if self.models.len() == 1 {
            self.models[0].as_ref()
        } else {
            self.models[fold].as_ref()
        }
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Always predicts `S ≡ 1`.
#[derive(Debug, Clone)]
pub struct UnitModel(StepSurvival);

impl ConditionalSurvivalModel for UnitModel {
    fn predict(&self, _history: &[f64], _horizon: f64) -> Result<Cow<'_, StepSurvival>> {
        Ok(Cow::Borrowed(&self.0))
    }
}
