//! Conditional and marginal survival estimators built from per-window pseudo-outcomes.
//!
//! For each `τ` and each window `k >= ς` active at `τ` (`t_k < τ`), pseudo-outcomes are computed
//! with fold-held-out nuisance curves, regressed on a basis of `W` over the window risk set, and
//! the window regressions are multiplied: `Q̂_τ(w) = Π_k Q̂_{k,τ}(w)`.
//!
//! Several estimator arms can share one pass over the data; each distinct learner is fitted once
//! per window and each subject's curves are predicted once.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{ConfigError, DataError, FitError, RegressionError, Result};
use crate::exec::ExecMode;
use crate::nuisance::{FoldModels, LearnerSpec, Role, WindowData};
use crate::pseudo::{pseudo_outcomes, Transformed};
use crate::stepfn::StepSurvival;

/// The three per-window pseudo-outcome constructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// Multiply robust: `Ŝ(t̄) + 𝒯(Ŝ, Ĝ)`.
    Mr,
    /// G-computation: `Ŝ(t̄)`.
    G,
    /// Inverse probability of censoring weighting: `1 - 1(X <= t̄)Δ / Ĝ(X-)`.
    Ipcw,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Mr => "MR",
            EstimatorKind::G => "Gcomp",
            EstimatorKind::Ipcw => "IPCW",
        }
    }

    fn needs(self, role: Role) -> bool {
        !matches!(
            (self, role),
            (EstimatorKind::G, Role::Censor) | (EstimatorKind::Ipcw, Role::Event)
        )
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = ConfigError;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mr" => Ok(EstimatorKind::Mr),
            "g" | "gcomp" => Ok(EstimatorKind::G),
            "ipcw" => Ok(EstimatorKind::Ipcw),
            other => Err(ConfigError::Invalid(format!(
                "unknown estimator `{other}` (expected mr, g or ipcw)"
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// Regression basis
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interactions {
    #[default]
    None,
    /// Products of every pair of columns.
    Pairwise,
    /// Every monomial of total degree at most `degree`.
    Full,
}

/// Polynomial basis over the columns of `W`, always with an intercept. Binary columns are never
/// raised to a power above one.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    columns: Vec<usize>,
    binary: Vec<bool>,
    degree: usize,
    interactions: Interactions,
    /// Monomials as exponents per `W` coordinate; the first is the intercept.
    terms: Vec<Vec<u32>>,
}

impl BasisSpec {
    /// `columns` index the flattened covariate history at the anchor visit.
    pub fn new(
        columns: Vec<usize>,
        binary: Vec<bool>,
        degree: usize,
        interactions: Interactions,
    ) -> Result<Self> {
        if !(1..=3).contains(&degree) {
            return Err(ConfigError::BadDegree(degree).into());
        }
        assert_eq!(columns.len(), binary.len(), "one binary flag per column");
        let d = columns.len();
        let cap = |j: usize| if binary[j] { 1 } else { degree as u32 };
        let mut terms: Vec<Vec<u32>> = vec![vec![0; d]];
        match interactions {
            Interactions::Full => {
                // Enumerate exponent vectors in graded order.
                let mut all = vec![vec![0u32; d]];
                for _ in 0..degree {
                    let mut next = Vec::new();
                    for e in &all {
                        for j in 0..d {
                            let mut f = e.clone();
                            f[j] += 1;
                            if f[j] <= cap(j)
                                && f.iter().sum::<u32>() as usize <= degree
                                && !next.contains(&f)
                                && !all.contains(&f)
                            {
                                next.push(f);
                            }
                        }
                    }
                    all.extend(next);
                }
                terms = all;
            }
            Interactions::None | Interactions::Pairwise => {
                for j in 0..d {
                    for p in 1..=cap(j) {
                        let mut e = vec![0; d];
                        e[j] = p;
                        terms.push(e);
                    }
                }
                if interactions == Interactions::Pairwise {
                    for i in 0..d {
                        for j in i + 1..d {
                            let mut e = vec![0; d];
                            e[i] = 1;
                            e[j] = 1;
                            terms.push(e);
                        }
                    }
                }
            }
        }
        Ok(Self {
            columns,
            binary,
            degree,
            interactions,
            terms,
        })
    }

    pub fn intercept_only() -> Self {
        Self {
            columns: vec![],
            binary: vec![],
            degree: 1,
            interactions: Interactions::None,
            terms: vec![vec![]],
        }
    }

    pub fn is_intercept_only(&self) -> bool {
        self.terms.len() == 1
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Number of coordinates of `W`.
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// Picks `W` out of a flattened history.
    pub fn extract(&self, history: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|&c| history[c]).collect()
    }

    /// Basis row for `W = w`.
    pub fn expand(&self, w: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|e| e.iter().zip(w).map(|(&p, &x)| x.powi(p as i32)).product())
            .collect()
    }
}

/// `Σ w y / Σ w`.
pub fn weighted_mean(ys: &[f64], ws: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (y, w) in ys.iter().zip(ws) {
        num += w * y;
        den += w;
    }
    num / den
}

/// Weighted least squares of `ys` on `basis(ws)`. The intercept-only case is the weighted mean.
pub fn weighted_least_squares(
    basis: &BasisSpec,
    w_rows: &[Vec<f64>],
    ys: &[f64],
    weights: &[f64],
) -> Result<Vec<f64>> {
    if ys.is_empty() {
        return Err(RegressionError::NoRows.into());
    }
    if basis.is_intercept_only() {
        return Ok(vec![weighted_mean(ys, weights)]);
    }
    let p = basis.num_terms();
    let n = ys.len();
    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut y = DVector::<f64>::zeros(n);
    for i in 0..n {
        let sw = weights[i].sqrt();
        for (j, v) in basis.expand(&w_rows[i]).into_iter().enumerate() {
            x[(i, j)] = sw * v;
        }
        y[i] = sw * ys[i];
    }
    let svd = x.svd(true, true);
    let max = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * max)
        .count();
    if rank < p {
        return Err(RegressionError::RankDeficient { rank, columns: p }.into());
    }
    let beta = svd
        .solve(&y, 1e-10 * max)
        .map_err(|_| RegressionError::RankDeficient { rank, columns: p })?;
    Ok(beta.iter().copied().collect())
}

/// Assigns each of `n` subjects to one of `folds` folds by a seeded permutation; fold sizes differ
/// by at most one.
pub fn assign_folds(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = pos % folds.max(1);
    }
    out
}

/// L2 projection onto nonincreasing sequences (pool adjacent violators), then clamped to `[0, 1]`.
pub fn isotonic_project(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 >= s1 / c1 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s0 + s1, c0 + c1);
        }
    }
    blocks
        .iter()
        .flat_map(|&(s, c)| std::iter::repeat_n((s / c as f64).clamp(0.0, 1.0), c))
        .collect()
}

/// Difference in cumulative incidence `{1 - Q(w_treated)} - {1 - Q(w_control)}`.
pub fn cde_from_survival(q_treated: f64, q_control: f64) -> f64 {
    (1.0 - q_treated) - (1.0 - q_control)
}

/// Log ratio of cumulative incidences `log{(1 - Q(w_treated)) / (1 - Q(w_control))}`.
pub fn log_cde_from_survival(q_treated: f64, q_control: f64) -> f64 {
    ((1.0 - q_treated) / (1.0 - q_control)).ln()
}

/// Controlled direct effect at the `tau_index`-th `τ` from post-processed predictions.
pub fn contrast_cde(
    fit: &ConditionalFit,
    w_treated: &[f64],
    w_control: &[f64],
    tau_index: usize,
) -> f64 {
    cde_from_survival(
        fit.predict(w_treated)[tau_index],
        fit.predict(w_control)[tau_index],
    )
}

/// Log-multiplicative controlled direct effect.
pub fn contrast_log_cde(
    fit: &ConditionalFit,
    w_treated: &[f64],
    w_control: &[f64],
    tau_index: usize,
) -> f64 {
    log_cde_from_survival(
        fit.predict(w_treated)[tau_index],
        fit.predict(w_control)[tau_index],
    )
}

// ---------------------------------------------------------------------------
// Configuration and arms
// ---------------------------------------------------------------------------

/// Everything the estimators need besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    pub kind: EstimatorKind,
    /// One learner per visit; entries before the anchor are unused.
    pub event_learners: Vec<LearnerSpec>,
    pub censor_learners: Vec<LearnerSpec>,
    pub basis: BasisSpec,
    pub folds: usize,
    pub trim: f64,
    pub seed: u64,
    pub isotonic: bool,
    pub exec: ExecMode,
}

/// One estimator: a pseudo-outcome kind with its per-window nuisance learners.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub label: String,
    pub kind: EstimatorKind,
    pub event: Vec<LearnerSpec>,
    pub censor: Vec<LearnerSpec>,
}

impl Arm {
    pub fn from_config(config: &EstimationConfig) -> Self {
        Self {
            label: config.kind.label().to_string(),
            kind: config.kind,
            event: config.event_learners.clone(),
            censor: config.censor_learners.clone(),
        }
    }
}

/// Pseudo-outcomes of one arm in one window.
#[derive(Debug, Clone)]
struct ArmWindow {
    k: usize,
    /// `τ` indices at which the window is active.
    tau_idx: Vec<usize>,
    /// `y[j][r]`: row `r` at the `j`-th active `τ`.
    y: Vec<Vec<f64>>,
    trims: Vec<usize>,
}

/// The risk set of one window, shared by every arm.
#[derive(Debug, Clone)]
struct WindowRows {
    subjects: Vec<usize>,
    weights: Vec<f64>,
    w: Vec<Vec<f64>>,
}

struct Panels {
    windows: Vec<WindowRows>,
    arms: Vec<Vec<ArmWindow>>,
}

fn compute_panels(
    data: &Dataset,
    arms: &[Arm],
    basis: &BasisSpec,
    config: &EstimationConfig,
) -> Result<Panels> {
    let schedule = &data.schedule;
    let taus = schedule.tau_grid();
    let anchor = schedule.anchor();
    let folds = assign_folds(data.len(), config.folds, config.seed);
    let n_folds = config.folds.min(data.len()).max(1);
    let anchor_w: Vec<Option<Vec<f64>>> = data
        .records
        .iter()
        .map(|r| r.history(anchor).map(|h| basis.extract(&h)))
        .collect();
    let mut windows = Vec::new();
    let mut per_arm: Vec<Vec<ArmWindow>> = vec![Vec::new(); arms.len()];
    for k in schedule.estimation_windows() {
        let tau_idx: Vec<usize> = (0..taus.len())
            .filter(|&j| schedule.window_start(k) < taus[j])
            .collect();
        if tau_idx.is_empty() {
            continue;
        }
        let t_bars: Vec<f64> = tau_idx
            .iter()
            .map(|&j| schedule.t_bar(k, taus[j]))
            .collect();
        let wd = WindowData::from_dataset(data, k);
        if wd.is_empty() {
            return Err(FitError::EmptyRiskSet { window: k }.into());
        }
        // Distinct (learner, role) pairs across arms, fitted once each.
        let mut keys: Vec<(LearnerSpec, Role)> = Vec::new();
        let mut slots: Vec<[Option<usize>; 2]> = Vec::with_capacity(arms.len());
        for arm in arms {
            let mut slot = [None, None];
            for (r, role) in [Role::Event, Role::Censor].into_iter().enumerate() {
                if !arm.kind.needs(role) {
                    continue;
                }
                let learner = match role {
                    Role::Event => &arm.event[k],
                    Role::Censor => &arm.censor[k],
                };
                let key = (learner.clone(), role);
                let pos = keys.iter().position(|x| *x == key).unwrap_or_else(|| {
                    keys.push(key);
                    keys.len() - 1
                });
                slot[r] = Some(pos);
            }
            slots.push(slot);
        }
        let models: Vec<FoldModels> = keys
            .iter()
            .map(|(l, role)| FoldModels::fit(l, &wd, *role, &folds, n_folds, config.exec))
            .collect::<Result<_>>()?;
        let horizon = *t_bars.last().expect("nonempty");
        let unit = StepSurvival::unit(wd.start);
        let rows: Vec<Result<Vec<Vec<Transformed>>>> = config.exec.map(&wd.rows, |row| {
            let fold = folds[row.subject];
            let curves = models
                .iter()
                .map(|m| m.for_fold(fold).predict(&row.history, horizon))
                .collect::<Result<Vec<_>>>()?;
            arms.iter()
                .zip(&slots)
                .map(|(arm, slot)| {
                    let s = slot[0].map_or(&unit, |i| curves[i].as_ref());
                    let g = slot[1].map_or(&unit, |i| curves[i].as_ref());
                    pseudo_outcomes(arm.kind, s, g, row.x, row.event, &t_bars, config.trim)
                })
                .collect()
        });
        let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
        for (a, out) in per_arm.iter_mut().enumerate() {
            let mut y = vec![Vec::with_capacity(rows.len()); tau_idx.len()];
            let mut trims = vec![0; tau_idx.len()];
            for r in &rows {
                for (j, t) in r[a].iter().enumerate() {
                    y[j].push(t.value);
                    trims[j] += usize::from(t.trimmed);
                }
            }
            out.push(ArmWindow {
                k,
                tau_idx: tau_idx.clone(),
                y,
                trims,
            });
        }
        windows.push(WindowRows {
            subjects: wd.rows.iter().map(|r| r.subject).collect(),
            weights: wd.rows.iter().map(|r| r.weight).collect(),
            w: wd
                .rows
                .iter()
                .map(|r| {
                    anchor_w[r.subject]
                        .clone()
                        .expect("window risk sets lie inside the anchor risk set")
                })
                .collect(),
        });
    }
    if windows.is_empty() {
        return Err(FitError::EmptyRiskSet { window: anchor }.into());
    }
    Ok(Panels {
        windows,
        arms: per_arm,
    })
}

fn n_at_risk(data: &Dataset) -> usize {
    let t = data.schedule.window_start(data.schedule.anchor());
    data.records.iter().filter(|r| r.is_at_risk(t)).count()
}

// ---------------------------------------------------------------------------
// Conditional fits
// ---------------------------------------------------------------------------

/// Fitted `w ↦ Q̂_τ(w)` for every `τ` of the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalFit {
    pub label: String,
    pub kind: EstimatorKind,
    pub taus: Vec<f64>,
    pub basis: BasisSpec,
    /// Per `τ`: `(k, coefficients)` for every window active at `τ`.
    pub coefficients: Vec<Vec<(usize, Vec<f64>)>>,
    pub isotonic: bool,
    pub trim_counts: Vec<usize>,
    pub n_at_risk: usize,
}

impl ConditionalFit {
    /// `Q̂_{k,τ}(w)` for the `tau_index`-th `τ`; 1 when window `k` is inactive.
    pub fn window_prediction(&self, tau_index: usize, k: usize, w: &[f64]) -> f64 {
        let x = self.basis.expand(w);
        self.coefficients[tau_index]
            .iter()
            .find(|(kk, _)| *kk == k)
            .map_or(1.0, |(_, b)| b.iter().zip(&x).map(|(b, x)| b * x).sum())
    }

    /// Products of window regressions before clamping and isotonic projection.
    pub fn predict_raw(&self, w: &[f64]) -> Vec<f64> {
        let x = self.basis.expand(w);
        self.coefficients
            .iter()
            .map(|per_k| {
                per_k
                    .iter()
                    .map(|(_, b)| b.iter().zip(&x).map(|(b, x)| b * x).sum::<f64>())
                    .product()
            })
            .collect()
    }

    /// Post-processed predictions: clamped to `[0, 1]` and, if enabled, nonincreasing in `τ`.
    pub fn predict(&self, w: &[f64]) -> Vec<f64> {
        let raw: Vec<f64> = self
            .predict_raw(w)
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        if self.isotonic {
            isotonic_project(&raw)
        } else {
            raw
        }
    }
}

fn conditional_from_panels(
    panels: &Panels,
    arm_index: usize,
    arm: &Arm,
    data: &Dataset,
    config: &EstimationConfig,
) -> Result<ConditionalFit> {
    let taus = data.schedule.tau_grid().to_vec();
    let mut coefficients = vec![Vec::new(); taus.len()];
    let mut trim_counts = vec![0; taus.len()];
    for (rows, aw) in panels.windows.iter().zip(&panels.arms[arm_index]) {
        let fits: Vec<Result<Vec<f64>>> = config.exec.map(&aw.y, |y| {
            weighted_least_squares(&config.basis, &rows.w, y, &rows.weights)
        });
        for ((&j, fit), &trims) in aw.tau_idx.iter().zip(fits).zip(&aw.trims) {
            coefficients[j].push((aw.k, fit?));
            trim_counts[j] += trims;
        }
    }
    Ok(ConditionalFit {
        label: arm.label.clone(),
        kind: arm.kind,
        taus,
        basis: config.basis.clone(),
        coefficients,
        isotonic: config.isotonic,
        trim_counts,
        n_at_risk: n_at_risk(data),
    })
}

/// Conditional fits for several arms sharing nuisance fits and one pass over the data.
pub fn fit_arms_conditional(
    data: &Dataset,
    arms: &[Arm],
    config: &EstimationConfig,
) -> Result<Vec<ConditionalFit>> {
    let panels = compute_panels(data, arms, &config.basis, config)?;
    arms.iter()
        .enumerate()
        .map(|(a, arm)| conditional_from_panels(&panels, a, arm, data, config))
        .collect()
}

/// `Q̂_τ(w)` for the estimator and learners named in `config`.
pub fn fit_conditional(data: &Dataset, config: &EstimationConfig) -> Result<ConditionalFit> {
    Ok(fit_arms_conditional(data, &[Arm::from_config(config)], config)?.remove(0))
}

// ---------------------------------------------------------------------------
// Marginal fits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowComponent {
    pub k: usize,
    /// `Q̂_{k,τ}`, the risk-set weighted mean of the pseudo-outcomes.
    pub q: f64,
    /// `π̂_k`, the weighted fraction of subjects with `X > t_k`.
    pub pi: f64,
}

/// Marginal survival estimates with plug-in influence values.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalFit {
    pub label: String,
    pub kind: EstimatorKind,
    pub taus: Vec<f64>,
    pub estimates: Vec<f64>,
    pub components: Vec<Vec<WindowComponent>>,
    /// Per `τ`, one influence value per subject of the dataset.
    pub influence: Vec<Vec<f64>>,
    /// Standard errors and 95% Wald intervals, reported for the multiply robust estimator only.
    pub se: Vec<Option<f64>>,
    pub ci: Vec<Option<(f64, f64)>>,
    pub trim_counts: Vec<usize>,
    pub n_at_risk: usize,
}

const Z_975: f64 = 1.959963984540054;

fn marginal_from_panels(
    panels: &Panels,
    arm_index: usize,
    arm: &Arm,
    data: &Dataset,
) -> MarginalFit {
    let taus = data.schedule.tau_grid().to_vec();
    let n = data.len();
    let all_weights: Vec<f64> = data.records.iter().map(|r| r.weight).collect();
    let total_weight: f64 = all_weights.iter().sum();
    let mut components = vec![Vec::new(); taus.len()];
    let mut trim_counts = vec![0; taus.len()];
    // Per τ, per component: centered residuals `(subject, Y - Q̂_k) / π̂_k`.
    let mut residuals: Vec<Vec<Vec<(usize, f64)>>> = vec![Vec::new(); taus.len()];
    for (rows, aw) in panels.windows.iter().zip(&panels.arms[arm_index]) {
        let pi = rows.weights.iter().sum::<f64>() / total_weight;
        for ((&j, y), &trims) in aw.tau_idx.iter().zip(&aw.y).zip(&aw.trims) {
            let q = weighted_mean(y, &rows.weights);
            components[j].push(WindowComponent { k: aw.k, q, pi });
            trim_counts[j] += trims;
            residuals[j].push(
                rows.subjects
                    .iter()
                    .zip(y)
                    .map(|(&s, &yi)| (s, (yi - q) / pi))
                    .collect(),
            );
        }
    }
    let mut estimates = Vec::with_capacity(taus.len());
    let mut influence = Vec::with_capacity(taus.len());
    let mut se = Vec::with_capacity(taus.len());
    let mut ci = Vec::with_capacity(taus.len());
    for j in 0..taus.len() {
        let comps = &components[j];
        let est: f64 = comps.iter().map(|c| c.q).product();
        let mut d = vec![0.0; n];
        for (c, res) in residuals[j].iter().enumerate() {
            let others: f64 = comps
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != c)
                .map(|(_, x)| x.q)
                .product();
            for &(s, r) in res {
                d[s] += r * others;
            }
        }
        estimates.push(est);
        if arm.kind == EstimatorKind::Mr {
            let var: f64 = d
                .iter()
                .zip(&all_weights)
                .map(|(x, w)| w * x * x)
                .sum::<f64>()
                / (total_weight * total_weight);
            let s = var.sqrt();
            se.push(Some(s));
            ci.push(Some((est - Z_975 * s, est + Z_975 * s)));
        } else {
            se.push(None);
            ci.push(None);
        }
        influence.push(d);
    }
    MarginalFit {
        label: arm.label.clone(),
        kind: arm.kind,
        taus,
        estimates,
        components,
        influence,
        se,
        ci,
        trim_counts,
        n_at_risk: n_at_risk(data),
    }
}

/// Marginal fits for several arms sharing nuisance fits and one pass over the data.
pub fn fit_arms_marginal(
    data: &Dataset,
    arms: &[Arm],
    config: &EstimationConfig,
) -> Result<Vec<MarginalFit>> {
    let panels = compute_panels(data, arms, &BasisSpec::intercept_only(), config)?;
    Ok(arms
        .iter()
        .enumerate()
        .map(|(a, arm)| marginal_from_panels(&panels, a, arm, data))
        .collect())
}

/// Marginal survival `P(T > τ | X > t_ς)` for the estimator and learners named in `config`.
pub fn fit_marginal(data: &Dataset, config: &EstimationConfig) -> Result<MarginalFit> {
    Ok(fit_arms_marginal(data, &[Arm::from_config(config)], config)?.remove(0))
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

/// The distinct observed values of `W` among subjects at risk at the anchor visit, sorted.
pub fn observed_w_points(data: &Dataset, basis: &BasisSpec) -> Vec<Vec<f64>> {
    let anchor = data.schedule.anchor();
    let mut seen: HashMap<Vec<u64>, Vec<f64>> = HashMap::new();
    for r in &data.records {
        if let Some(h) = r.history(anchor) {
            let w = basis.extract(&h);
            seen.entry(w.iter().map(|x| x.to_bits()).collect())
                .or_insert(w);
        }
    }
    let mut points: Vec<Vec<f64>> = seen.into_values().collect();
    points.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    points
}

fn csv_err(e: csv::Error) -> crate::Error {
    DataError::from(e).into()
}

/// Writes `estimator,tau,<w columns>,estimate,se,ci_lo,ci_hi,n_at_risk,trim_count` rows, one per
/// fit, `τ` and `w` point. Standard errors are blank for conditional fits.
pub fn write_conditional_csv<W: Write>(
    fits: &[ConditionalFit],
    w_names: &[String],
    w_points: &[Vec<f64>],
    out: W,
) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    let mut header = vec!["estimator".to_string(), "tau".into()];
    header.extend(w_names.iter().cloned());
    header.extend(
        [
            "estimate",
            "se",
            "ci_lo",
            "ci_hi",
            "n_at_risk",
            "trim_count",
        ]
        .map(String::from),
    );
    wr.write_record(&header).map_err(csv_err)?;
    for fit in fits {
        for w in w_points {
            let q = fit.predict(w);
            for (j, tau) in fit.taus.iter().enumerate() {
                let mut rec = vec![fit.label.clone(), tau.to_string()];
                rec.extend(w.iter().map(f64::to_string));
                rec.extend([
                    q[j].to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]);
                rec.extend([fit.n_at_risk.to_string(), fit.trim_counts[j].to_string()]);
                wr.write_record(&rec).map_err(csv_err)?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

/// Writes `estimator,tau,w,estimate,se,ci_lo,ci_hi,n_at_risk,trim_count` rows with `w = marginal`.
pub fn write_marginal_csv<W: Write>(fits: &[MarginalFit], out: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(out);
    wr.write_record([
        "estimator",
        "tau",
        "w",
        "estimate",
        "se",
        "ci_lo",
        "ci_hi",
        "n_at_risk",
        "trim_count",
    ])
    .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for fit in fits {
        for (j, tau) in fit.taus.iter().enumerate() {
            wr.write_record([
                fit.label.clone(),
                tau.to_string(),
                "marginal".into(),
                fit.estimates[j].to_string(),
                opt(fit.se[j]),
                opt(fit.ci[j].map(|c| c.0)),
                opt(fit.ci[j].map(|c| c.1)),
                fit.n_at_risk.to_string(),
                fit.trim_counts[j].to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    wr.flush()?;
    Ok(())
}
