use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use super::{ConditionalSurvivalModel, FeatureMap, Role, WindowData};
use crate::error::{ConfigError, FitError, Result};
use crate::stepfn::StepSurvival;

#[derive(Debug, Clone, PartialEq)]
pub struct CoxOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the score norm divided by the total event weight.
    pub tolerance: f64,
    /// A fit with `max_j |β_j| · sd_j` above this is treated as a monotone likelihood.
    pub divergence: f64,
    /// A converged fit whose standardized standard error `sd_j / sqrt(I_jj)` exceeds this sits on a
    /// flat ridge of a monotone likelihood.
    pub max_standard_error: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-9,
            divergence: 30.0,
            max_standard_error: 1e3,
        }
    }
}

/// Coefficients and diagnostics of a converged fit, on the scale of the raw features.
#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub beta: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Rows sorted by decreasing time with centered, non-constant features.
struct Problem {
    times: Vec<f64>,
    flags: Vec<bool>,
    weights: Vec<f64>,
    z: Vec<Vec<f64>>,
    p: usize,
}

struct Derivatives {
    log_likelihood: f64,
    score: DVector<f64>,
    information: DMatrix<f64>,
}

impl Problem {
    fn new(rows: Vec<(f64, bool, f64, Vec<f64>)>, p: usize) -> Self {
        let mut rows = rows;
        rows.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut out = Problem {
            times: vec![],
            flags: vec![],
            weights: vec![],
            z: vec![],
            p,
        };
        for (t, f, w, z) in rows {
            out.times.push(t);
            out.flags.push(f);
            out.weights.push(w);
            out.z.push(z);
        }
        out
    }

    fn eta(&self, beta: &[f64]) -> Vec<f64> {
        self.z
            .iter()
            .map(|z| z.iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Breslow log partial likelihood with its score and observed information.
    fn derivatives(&self, beta: &[f64], want_information: bool) -> Derivatives {
        let p = self.p;
        let eta = self.eta(beta);
        let shift = eta
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0);
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = DMatrix::<f64>::zeros(p, p);
        let mut ll = 0.0;
        let mut score = DVector::<f64>::zeros(p);
        let mut info = DMatrix::<f64>::zeros(p, p);
        let n = self.times.len();
        let mut i = 0;
        while i < n {
            let t = self.times[i];
            let mut d = 0.0;
            let mut event_z = vec![0.0; p];
            let mut event_eta = 0.0;
            while i < n && self.times[i] == t {
                let w = self.weights[i];
                let r = w * (eta[i] - shift).exp();
                s0 += r;
                for a in 0..p {
                    s1[a] += r * self.z[i][a];
                    if want_information {
                        for b in 0..=a {
                            s2[(a, b)] += r * self.z[i][a] * self.z[i][b];
                        }
                    }
                }
                if self.flags[i] {
                    d += w;
                    event_eta += w * eta[i];
                    for (ez, z) in event_z.iter_mut().zip(&self.z[i]) {
                        *ez += w * z;
                    }
                }
                i += 1;
            }
            if d > 0.0 {
                ll += event_eta - d * (s0.ln() + shift);
                for a in 0..p {
                    let mean_a = s1[a] / s0;
                    score[a] += event_z[a] - d * mean_a;
                    if want_information {
                        for b in 0..=a {
                            let v = d * (s2[(a, b)] / s0 - mean_a * s1[b] / s0);
                            info[(a, b)] += v;
                        }
                    }
                }
            }
        }
        if want_information {
            for a in 0..p {
                for b in 0..a {
                    info[(b, a)] = info[(a, b)];
                }
            }
        }
        Derivatives {
            log_likelihood: ll,
            score,
            information: info,
        }
    }

    /// Breslow cumulative-hazard jumps `(t, d(t) / Σ_{X >= t} w e^{η})` in increasing time.
    fn breslow(&self, beta: &[f64]) -> Vec<(f64, f64)> {
        let eta = self.eta(beta);
        let mut s0 = 0.0;
        let mut jumps = Vec::new();
        let n = self.times.len();
        let mut i = 0;
        while i < n {
            let t = self.times[i];
            let mut d = 0.0;
            while i < n && self.times[i] == t {
                s0 += self.weights[i] * eta[i].exp();
                if self.flags[i] {
                    d += self.weights[i];
                }
                i += 1;
            }
            if d > 0.0 {
                jumps.push((t, d / s0));
            }
        }
        jumps.reverse();
        jumps
    }
}

/// Cox proportional hazards model with a Breslow baseline, fitted on one window.
#[derive(Debug, Clone)]
pub struct CoxModel {
    features: FeatureMap,
    means: Vec<f64>,
    beta: Vec<f64>,
    start: f64,
    hazard_times: Vec<f64>,
    cumulative_hazard: Vec<f64>,
    fit: CoxFit,
}

struct Prepared {
    problem: Problem,
    /// Indices of non-constant features.
    active: Vec<usize>,
    means: Vec<f64>,
    sds: Vec<f64>,
    event_weight: f64,
}

fn prepare(data: &WindowData, role: Role, features: &FeatureMap) -> Prepared {
    let raw: Vec<Vec<f64>> = data
        .rows
        .iter()
        .map(|r| features.apply(&r.history))
        .collect();
    let total: f64 = data.rows.iter().map(|r| r.weight).sum();
    let p_all = features.len();
    let mut means = vec![0.0; p_all];
    for (z, r) in raw.iter().zip(&data.rows) {
        for a in 0..p_all {
            means[a] += r.weight * z[a] / total;
        }
    }
    let mut sds = vec![0.0; p_all];
    for (z, r) in raw.iter().zip(&data.rows) {
        for a in 0..p_all {
            sds[a] += r.weight * (z[a] - means[a]).powi(2) / total;
        }
    }
    sds.iter_mut().for_each(|v| *v = v.sqrt());
    let active: Vec<usize> = (0..p_all)
        .filter(|&a| sds[a] > 1e-12 * means[a].abs().max(1.0))
        .collect();
    let rows = raw
        .iter()
        .zip(&data.rows)
        .map(|(z, r)| {
            (
                r.x,
                r.flag(role),
                r.weight,
                active.iter().map(|&a| z[a] - means[a]).collect(),
            )
        })
        .collect();
    let event_weight = data
        .rows
        .iter()
        .filter(|r| r.flag(role))
        .map(|r| r.weight)
        .sum();
    Prepared {
        problem: Problem::new(rows, active.len()),
        active,
        means,
        sds,
        event_weight,
    }
}

fn full_rank(problem: &Problem, weights: &[f64]) -> bool {
    let p = problem.p;
    if p == 0 {
        return true;
    }
    let mut m = DMatrix::<f64>::zeros(p, p);
    for (z, &w) in problem.z.iter().zip(weights) {
        for a in 0..p {
            for b in 0..p {
                m[(a, b)] += w * z[a] * z[b];
            }
        }
    }
    let eig = m.symmetric_eigenvalues();
    let max = eig.iter().copied().fold(0.0, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    min > 1e-10 * max
}

impl CoxModel {
    pub fn fit(
        data: &WindowData,
        role: Role,
        features: FeatureMap,
        options: &CoxOptions,
    ) -> Result<Self> {
        let prep = prepare(data, role, &features);
        let problem = &prep.problem;
        let p = problem.p;
        if !full_rank(problem, &problem.weights) {
            return Err(FitError::RankDeficient.into());
        }
        let scale = prep.event_weight.max(1.0);
        let mut beta = vec![0.0; p];
        let mut iterations = 0;
        let mut current = problem.derivatives(&beta, true);
        if prep.event_weight > 0.0 && p > 0 {
            loop {
                let norm = current.score.norm();
                if norm <= options.tolerance * scale {
                    break;
                }
                if iterations >= options.max_iterations {
                    return Err(FitError::NoConvergence {
                        iterations,
                        gradient_norm: norm,
                    }
                    .into());
                }
                iterations += 1;
                let step = match current.information.clone().cholesky() {
                    Some(ch) => ch.solve(&current.score),
                    None => {
                        return Err(FitError::NoConvergence {
                            iterations,
                            gradient_norm: norm,
                        }
                        .into())
                    }
                };
                let mut factor = 1.0;
                let mut accepted = None;
                for _ in 0..40 {
                    let trial: Vec<f64> = beta
                        .iter()
                        .zip(step.iter())
                        .map(|(b, s)| b + factor * s)
                        .collect();
                    let next = problem.derivatives(&trial, true);
                    if next.log_likelihood.is_finite()
                        && next.log_likelihood
                            >= current.log_likelihood
                                - 1e-12 * current.log_likelihood.abs().max(1.0)
                    {
                        accepted = Some((trial, next));
                        break;
                    }
                    factor *= 0.5;
                }
                let Some((trial, next)) = accepted else {
                    return Err(FitError::NoConvergence {
                        iterations,
                        gradient_norm: norm,
                    }
                    .into());
                };
                beta = trial;
                current = next;
                let spread = beta
                    .iter()
                    .zip(&prep.active)
                    .map(|(b, &a)| (b * prep.sds[a]).abs())
                    .fold(0.0, f64::max);
                if spread > options.divergence {
                    let max_abs_beta = beta.iter().map(|b| b.abs()).fold(0.0, f64::max);
                    return Err(FitError::MonotoneLikelihood { max_abs_beta }.into());
                }
            }
            let flat = current.information.clone().try_inverse().is_none_or(|inv| {
                prep.active.iter().enumerate().any(|(j, &a)| {
                    let se = inv[(j, j)].max(0.0).sqrt() * prep.sds[a];
                    se.is_nan() || se > options.max_standard_error
                })
            });
            if flat {
                let max_abs_beta = beta.iter().map(|b| b.abs()).fold(0.0, f64::max);
                return Err(FitError::MonotoneLikelihood { max_abs_beta }.into());
            }
        }
        let gradient_norm = current.score.norm();
        let mut full_beta = vec![0.0; features.len()];
        for (b, &a) in beta.iter().zip(&prep.active) {
            full_beta[a] = *b;
        }
        let fit = CoxFit {
            beta: full_beta.clone(),
            log_likelihood: current.log_likelihood,
            iterations,
            gradient_norm,
        };
        Ok(Self::assemble(
            data.start,
            features,
            prep.means,
            full_beta,
            problem.breslow(&beta),
            fit,
        ))
    }

    /// The model at fixed coefficients `beta` (raw feature scale), with the Breslow baseline
    /// computed at those coefficients.
    pub fn with_coefficients(
        data: &WindowData,
        role: Role,
        features: FeatureMap,
        beta: &[f64],
    ) -> Self {
        assert_eq!(beta.len(), features.len(), "one coefficient per feature");
        let prep = prepare(data, role, &features);
        let active_beta: Vec<f64> = prep.active.iter().map(|&a| beta[a]).collect();
        let d = prep.problem.derivatives(&active_beta, false);
        let fit = CoxFit {
            beta: beta.to_vec(),
            log_likelihood: d.log_likelihood,
            iterations: 0,
            gradient_norm: d.score.norm(),
        };
        let jumps = prep.problem.breslow(&active_beta);
        Self::assemble(data.start, features, prep.means, beta.to_vec(), jumps, fit)
    }

    fn assemble(
        start: f64,
        features: FeatureMap,
        means: Vec<f64>,
        beta: Vec<f64>,
        jumps: Vec<(f64, f64)>,
        fit: CoxFit,
    ) -> Self {
        let mut acc = 0.0;
        let mut hazard_times = Vec::with_capacity(jumps.len());
        let mut cumulative_hazard = Vec::with_capacity(jumps.len());
        for (t, h) in jumps {
            acc += h;
            hazard_times.push(t);
            cumulative_hazard.push(acc);
        }
        Self {
            features,
            means,
            beta,
            start,
            hazard_times,
            cumulative_hazard,
            fit,
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.beta
    }

    pub fn diagnostics(&self) -> &CoxFit {
        &self.fit
    }

    /// Baseline survival `exp(-H_0)` at the feature means.
    pub fn baseline(&self) -> StepSurvival {
        let values = self.cumulative_hazard.iter().map(|h| (-h).exp()).collect();
        StepSurvival::from_sorted_unchecked(self.start, self.hazard_times.clone(), values)
    }

    /// Breslow log partial likelihood and its score at `beta` (raw feature scale). Constant
    /// features contribute a zero score.
    pub fn partial_likelihood(
        data: &WindowData,
        role: Role,
        features: &FeatureMap,
        beta: &[f64],
    ) -> (f64, Vec<f64>) {
        let prep = prepare(data, role, features);
        let active_beta: Vec<f64> = prep.active.iter().map(|&a| beta[a]).collect();
        let d = prep.problem.derivatives(&active_beta, false);
        let mut score = vec![0.0; features.len()];
        for (s, &a) in d.score.iter().zip(&prep.active) {
            score[a] = *s;
        }
        // Centering shifts every linear predictor by a constant, which the partial likelihood
        // ignores; constant features likewise shift all of them equally.
        (d.log_likelihood, score)
    }
}

impl ConditionalSurvivalModel for CoxModel {
    fn predict(&self, history: &[f64], horizon: f64) -> Result<Cow<'_, StepSurvival>> {
        let needed = self.features.min_history_width();
        if history.len() < needed {
            return Err(ConfigError::Invalid(format!(
                "cox features need {needed} history values, got {}",
                history.len()
            ))
            .into());
        }
        let z = self.features.apply(history);
        let eta: f64 = z
            .iter()
            .zip(&self.means)
            .zip(&self.beta)
            .map(|((z, m), b)| (z - m) * b)
            .sum();
        let risk = eta.exp();
        let cut = self.hazard_times.partition_point(|&t| t <= horizon);
        let mut times = Vec::with_capacity(cut);
        let mut values = Vec::with_capacity(cut);
        let mut prev = 1.0;
        for i in 0..cut {
            let v = (-self.cumulative_hazard[i] * risk).exp().min(prev);
            if v < prev {
                times.push(self.hazard_times[i]);
                values.push(v);
                prev = v;
            }
        }
        Ok(Cow::Owned(StepSurvival::from_sorted_unchecked(
            self.start, times, values,
        )))
    }
}
