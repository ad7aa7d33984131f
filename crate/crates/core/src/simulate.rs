//! Simulation designs, Monte Carlo truths and the replication benchmark.
//!
//! A design draws covariates visit by visit and, inside each window, an event time and a
//! censoring time from a conditional [`WindowLaw`]. A draw that lands beyond the window end means
//! "still running at the next visit"; the clock then continues in the next window.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{DataSchema, Dataset, SubjectRecord, VisitSchedule};
use crate::error::Result;
use crate::estimate::{
    fit_arms_conditional, fit_arms_marginal, Arm, BasisSpec, EstimationConfig, EstimatorKind,
    Interactions,
};
use crate::exec::ExecMode;
use crate::nuisance::{LearnerSpec, Role};

/// Conditional law of a time inside one window, measured from the window start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindowLaw {
    /// The time never occurs.
    Never,
    /// `P(T > t) = exp(-((t - t_k) / scale)^shape)`, with all mass at or beyond `truncation`
    /// placed exactly at `truncation`.
    Weibull {
        shape: f64,
        scale: f64,
        truncation: Option<f64>,
    },
}

impl WindowLaw {
    /// `P(T > t)` for a window starting at `origin`.
    pub fn survival(&self, origin: f64, t: f64) -> f64 {
        match *self {
            WindowLaw::Never => 1.0,
            WindowLaw::Weibull {
                shape,
                scale,
                truncation,
            } => {
                if truncation.is_some_and(|c| t >= c) {
                    0.0
                } else if t <= origin {
                    1.0
                } else {
                    (-((t - origin) / scale).powf(shape)).exp()
                }
            }
        }
    }

    /// Inverse-transform draw `origin + scale (-ln U)^{1/shape}`, capped at the truncation point.
    pub fn sample(&self, origin: f64, rng: &mut dyn RngCore) -> f64 {
        match *self {
            WindowLaw::Never => f64::INFINITY,
            WindowLaw::Weibull {
                shape,
                scale,
                truncation,
            } => {
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let t = origin + scale * (-u.ln()).powf(1.0 / shape);
                truncation.map_or(t, |c| t.min(c))
            }
        }
    }
}

/// A data-generating design with known conditional laws.
pub trait Dgp: Send + Sync {
    fn name(&self) -> &str;
    /// Visit times, anchor and default evaluation times.
    fn schedule(&self) -> VisitSchedule;
    fn schema(&self) -> DataSchema;
    /// Length of the flattened history `(L_1, ..., L_{k+1})` at zero-based visit `k`.
    fn history_width(&self, k: usize) -> usize;
    /// Draws the covariates of zero-based visit `k` given the earlier history.
    fn sample_covariates(&self, k: usize, history: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;
    /// The law of the event or censoring time in window `k` given the history through visit `k`.
    fn window_law(&self, k: usize, role: Role, history: &[f64]) -> WindowLaw;
}

/// A simulated subject before censoring is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSubject {
    /// Covariates of every visit that was reached by the event or the censoring clock.
    pub covariates: Vec<Vec<f64>>,
    pub t: f64,
    pub c: f64,
}

impl LatentSubject {
    /// The observed record: `X = T ∧ C`, `Δ = 1(T <= C)`, visit `k` kept iff `X > t_k`.
    pub fn observe(&self, id: String, schedule: &VisitSchedule) -> SubjectRecord {
        let x = self.t.min(self.c);
        let covariates = schedule
            .visit_times()
            .iter()
            .enumerate()
            .map(|(k, &tk)| {
                if x > tk {
                    self.covariates.get(k).cloned()
                } else {
                    None
                }
            })
            .collect();
        SubjectRecord {
            id,
            covariates,
            followup: x,
            event: self.t <= self.c,
            weight: 1.0,
        }
    }
}

/// Draws one subject window by window.
pub fn sample_subject(dgp: &dyn Dgp, rng: &mut dyn RngCore) -> LatentSubject {
    let schedule = dgp.schedule();
    let times = schedule.visit_times();
    let mut history = Vec::new();
    let mut covariates = Vec::new();
    let (mut t, mut c) = (None, None);
    for (k, &start) in times.iter().enumerate() {
        let l = dgp.sample_covariates(k, &history, rng);
        history.extend_from_slice(&l);
        covariates.push(l);
        let end = times.get(k + 1).copied().unwrap_or(f64::INFINITY);
        if t.is_none() {
            let d = dgp.window_law(k, Role::Event, &history).sample(start, rng);
            if d < end {
                t = Some(d);
            }
        }
        if c.is_none() {
            let d = dgp.window_law(k, Role::Censor, &history).sample(start, rng);
            if d < end {
                c = Some(d);
            }
        }
        if t.is_some() && c.is_some() {
            break;
        }
    }
    LatentSubject {
        covariates,
        t: t.unwrap_or(f64::INFINITY),
        c: c.unwrap_or(f64::INFINITY),
    }
}

/// The clinical-trial design with two visits at 0 and 30 and horizon 60.
///
/// Visit 1: `L11 ~ N(0,1)`, `L12 ~ Bernoulli(1/2)`, `L13 ~ N(0,1)`. Visit 2: `L21 ~ N(0,1)`,
/// `L22 ~ Bernoulli(1/2)`. Weibull(shape, scale) laws:
///
/// * `T_1 ~ W(5, 30 + 20 L12 + 2|L11| + L13²) ∧ 30`, `C_1 ~ W(4, 35 + 15 L12 + 0.5|L11| L12) ∧ 30`
/// * `T_2 ~ W(3, 30 + 20 L22 + 2|L21| + L13²)`, `C_2 ~ W(4, 35 + 15 L22 + 0.5|L21| L22) ∧ 30`
///
/// so that `C = C_1 + C_2 <= 60` and every observed follow-up is at most 60.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialDgp {
    pub censoring: bool,
}

pub const TRIAL_VISITS: [f64; 2] = [0.0, 30.0];
pub const TRIAL_TAU: f64 = 60.0;

impl Dgp for TrialDgp {
    fn name(&self) -> &str {
        if self.censoring {
            "trial"
        } else {
            "trial-nocens"
        }
    }

    fn schedule(&self) -> VisitSchedule {
        VisitSchedule::new(TRIAL_VISITS.to_vec(), 1, vec![TRIAL_TAU])
            .expect("fixed schedule is valid")
    }

    fn schema(&self) -> DataSchema {
        DataSchema {
            id: "id".into(),
            time: "X".into(),
            event: "Delta".into(),
            weight: None,
            visits: vec![
                vec!["L11".into(), "L12".into(), "L13".into()],
                vec!["L21".into(), "L22".into()],
            ],
        }
    }

    fn history_width(&self, k: usize) -> usize {
        [3, 5][k]
    }

    fn sample_covariates(&self, k: usize, _history: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        match k {
            0 => {
                let l11 = rng.sample(StandardNormal);
                let l12 = f64::from(u8::from(rng.gen_bool(0.5)));
                let l13 = rng.sample(StandardNormal);
                vec![l11, l12, l13]
            }
            _ => {
                let l21 = rng.sample(StandardNormal);
                let l22 = f64::from(u8::from(rng.gen_bool(0.5)));
                vec![l21, l22]
            }
        }
    }

    fn window_law(&self, k: usize, role: Role, h: &[f64]) -> WindowLaw {
        let weibull = |shape, scale, truncation| WindowLaw::Weibull {
            shape,
            scale,
            truncation,
        };
        match (k, role) {
            (0, Role::Event) => weibull(
                5.0,
                30.0 + 20.0 * h[1] + 2.0 * h[0].abs() + h[2] * h[2],
                None,
            ),
            (_, Role::Event) => weibull(
                3.0,
                30.0 + 20.0 * h[4] + 2.0 * h[3].abs() + h[2] * h[2],
                None,
            ),
            (_, Role::Censor) if !self.censoring => WindowLaw::Never,
            (0, Role::Censor) => weibull(4.0, 35.0 + 15.0 * h[1] + 0.5 * h[0].abs() * h[1], None),
            (_, Role::Censor) => weibull(
                4.0,
                35.0 + 15.0 * h[4] + 0.5 * h[3].abs() * h[4],
                Some(TRIAL_TAU),
            ),
        }
    }
}

/// Looks up a built-in design by name: `trial` or `trial-nocens`.
pub fn dgp_by_name(name: &str) -> Option<Arc<dyn Dgp>> {
    match name {
        "trial" => Some(Arc::new(TrialDgp { censoring: true })),
        "trial-nocens" => Some(Arc::new(TrialDgp { censoring: false })),
        _ => None,
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` observed subjects drawn from stream `stream` of `seed`.
pub fn generate_stream(dgp: &dyn Dgp, n: usize, seed: u64, stream: u64) -> Dataset {
    let schedule = dgp.schedule();
    let mut rng = stream_rng(seed, stream);
    let records = (0..n)
        .map(|i| sample_subject(dgp, &mut rng).observe((i + 1).to_string(), &schedule))
        .collect();
    Dataset::new(dgp.schema(), schedule, records)
        .expect("simulated records satisfy the presence invariant")
}

/// `n` observed subjects, deterministic given `seed`.
pub fn generate(dgp: &dyn Dgp, n: usize, seed: u64) -> Dataset {
    generate_stream(dgp, n, seed, 0)
}

/// A Monte Carlo probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub se: f64,
    pub draws: usize,
}

const CHUNK: usize = 1 << 16;

/// `P(T > τ)` from `m` uncensored latent draws.
pub fn truth_marginal(dgp: &dyn Dgp, tau: f64, m: usize, seed: u64, exec: ExecMode) -> McEstimate {
    let chunks = m.div_ceil(CHUNK);
    let hits: usize = exec
        .map_range(chunks, |c| {
            let mut rng = stream_rng(seed, c as u64);
            let len = CHUNK.min(m - c * CHUNK);
            (0..len)
                .filter(|_| sample_subject(dgp, &mut rng).t > tau)
                .count()
        })
        .into_iter()
        .sum();
    let p = hits as f64 / m as f64;
    McEstimate {
        value: p,
        se: (p * (1.0 - p) / m as f64).sqrt(),
        draws: m,
    }
}

/// Fraction of `m` latent draws with the given property, in parallel chunks.
pub fn latent_fraction(
    dgp: &dyn Dgp,
    m: usize,
    seed: u64,
    exec: ExecMode,
    f: impl Fn(&LatentSubject) -> bool + Sync + Send,
) -> f64 {
    let chunks = m.div_ceil(CHUNK);
    let hits: usize = exec
        .map_range(chunks, |c| {
            let mut rng = stream_rng(seed, c as u64);
            let len = CHUNK.min(m - c * CHUNK);
            (0..len)
                .filter(|_| f(&sample_subject(dgp, &mut rng)))
                .count()
        })
        .into_iter()
        .sum();
    hits as f64 / m as f64
}

/// `Q*(w) = P(T > τ | W = w)` where `w` is the full anchor-visit history.
///
/// Window factors `S_k(t̄_k | H_k)` are exact; later-visit covariates are integrated by `m` draws
/// that are shared across every `w` (common random numbers).
pub fn truth_conditional(
    dgp: &dyn Dgp,
    w_points: &[Vec<f64>],
    tau: f64,
    m: usize,
    seed: u64,
    exec: ExecMode,
) -> Vec<f64> {
    let schedule = dgp.schedule();
    let anchor = schedule.anchor();
    let times = schedule.visit_times().to_vec();
    let factor = |k: usize, h: &[f64]| -> f64 {
        let end = times.get(k + 1).copied().unwrap_or(f64::INFINITY);
        dgp.window_law(k, Role::Event, h)
            .survival(times[k], end.min(tau))
    };
    exec.map(w_points, |w| {
        let base = factor(anchor, w);
        if anchor + 1 >= times.len() || times[anchor + 1] >= tau || base == 0.0 {
            return base;
        }
        let mut rng = stream_rng(seed, 0);
        let mut acc = 0.0;
        for _ in 0..m {
            let mut h = w.clone();
            let mut p = 1.0;
            for (k, &t_k) in times.iter().enumerate().skip(anchor + 1) {
                if t_k >= tau {
                    break;
                }
                let l = dgp.sample_covariates(k, &h, &mut rng);
                h.extend_from_slice(&l);
                p *= factor(k, &h);
            }
            acc += p;
        }
        base * acc / m as f64
    })
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

/// The seven comparison arms: consistent nuisances are the design's true laws, misspecified ones
/// are covariate-free Kaplan–Meier curves.
pub fn standard_arms(dgp: &str, visits: usize) -> Vec<Arm> {
    let oracle = LearnerSpec::Oracle(dgp.to_string());
    let km = LearnerSpec::Km;
    let unit = LearnerSpec::Unit;
    let arm = |label: &str, kind, s: &LearnerSpec, g: &LearnerSpec| Arm {
        label: label.to_string(),
        kind,
        event: vec![s.clone(); visits],
        censor: vec![g.clone(); visits],
    };
    vec![
        arm("MR", EstimatorKind::Mr, &oracle, &oracle),
        arm("MR.Smis", EstimatorKind::Mr, &km, &oracle),
        arm("MR.Gmis", EstimatorKind::Mr, &oracle, &km),
        arm("Gcomp", EstimatorKind::G, &oracle, &unit),
        arm("Gcomp.Smis", EstimatorKind::G, &km, &unit),
        arm("IPCW", EstimatorKind::Ipcw, &unit, &oracle),
        arm("IPCW.Gmis", EstimatorKind::Ipcw, &unit, &km),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkMode {
    /// Marginal survival at `τ`: bias, spread and Wald coverage.
    Marginal,
    /// Conditional curve `Q̂_τ(w)` with `W` the first-visit covariates: mean L2 distance.
    Conditional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub dgp: String,
    pub mode: BenchmarkMode,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    /// Target time for bias, coverage and L2 distance.
    pub tau: f64,
    /// Additional evaluation times; predictions over the union are isotonically projected.
    pub extra_taus: Vec<f64>,
    /// Arm labels to run; empty runs every standard arm.
    pub arms: Vec<String>,
    pub folds: usize,
    pub trim: f64,
    /// Latent draws for the marginal truth.
    pub truth_draws: usize,
    /// Size of the independent `W` sample over which L2 distances are averaged.
    pub l2_points: usize,
    /// Later-visit draws per `w` when integrating the conditional truth.
    pub l2_draws: usize,
    /// Regression basis over `W` in conditional mode.
    pub basis: BasisSpec,
    pub exec: ExecMode,
}

impl BenchmarkConfig {
    pub fn new(dgp: &str, mode: BenchmarkMode, ns: Vec<usize>, reps: usize, seed: u64) -> Self {
        Self {
            dgp: dgp.to_string(),
            mode,
            ns,
            reps,
            seed,
            tau: TRIAL_TAU,
            extra_taus: Vec::new(),
            arms: Vec::new(),
            folds: 10,
            trim: 0.05,
            truth_draws: 1_000_000,
            l2_points: 2000,
            l2_draws: 100_000,
            basis: default_conditional_basis(),
            exec: ExecMode::Parallel,
        }
    }
}

/// Quadratic basis in `(L11, L12, L13)` without interactions, `L12` binary: six terms.
pub fn default_conditional_basis() -> BasisSpec {
    BasisSpec::new(
        vec![0, 1, 2],
        vec![false, true, false],
        2,
        Interactions::None,
    )
    .expect("static basis is valid")
}

/// One arm in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub arm: String,
    pub n: usize,
    pub rep: usize,
    /// Marginal estimate, or the mean of `Q̂_τ(w)` over the L2 evaluation sample.
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub covered: Option<bool>,
    pub l2: Option<f64>,
    /// Whether the post-processed conditional predictions were nonincreasing in `τ` and in `[0, 1]`.
    pub projection_ok: Option<bool>,
    pub error: Option<String>,
}

/// Sampling summary of one arm at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub n: usize,
    pub reps_ok: usize,
    pub failures: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    pub sd: f64,
    /// Monte Carlo standard error of `bias`.
    pub bias_mcse: f64,
    pub coverage: Option<f64>,
    pub mean_se: Option<f64>,
    pub mean_l2: Option<f64>,
    pub sd_l2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub dgp: String,
    pub mode: BenchmarkMode,
    pub seed: u64,
    pub reps: usize,
    pub ns: Vec<usize>,
    pub tau: f64,
    /// Marginal truth, or the mean conditional truth over the L2 sample.
    pub truth: f64,
    pub truth_se: Option<f64>,
    pub summaries: Vec<ArmSummary>,
    pub replications: Vec<ReplicationRecord>,
    /// Wall-clock seconds; kept out of serialized output so reports are reproducible byte for byte.
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl BenchmarkReport {
    pub fn summary(&self, arm: &str, n: usize) -> Option<&ArmSummary> {
        self.summaries.iter().find(|s| s.arm == arm && s.n == n)
    }
}

fn summarize(arm: &str, n: usize, records: &[&ReplicationRecord], truth: f64) -> ArmSummary {
    let ok: Vec<&&ReplicationRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let k = ok.len() as f64;
    let est: Vec<f64> = ok.iter().filter_map(|r| r.estimate).collect();
    let mean = est.iter().sum::<f64>() / k;
    let sd = (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0)).sqrt();
    let opt_mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let covered: Vec<f64> = ok
        .iter()
        .filter_map(|r| r.covered.map(|c| f64::from(u8::from(c))))
        .collect();
    let l2: Vec<f64> = ok.iter().filter_map(|r| r.l2).collect();
    let mean_l2 = opt_mean(l2.clone());
    let sd_l2 = mean_l2.map(|m| {
        (l2.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (l2.len() as f64 - 1.0).max(1.0)).sqrt()
    });
    ArmSummary {
        arm: arm.to_string(),
        n,
        reps_ok: ok.len(),
        failures: records.len() - ok.len(),
        mean_estimate: mean,
        bias: mean - truth,
        sd,
        bias_mcse: sd / k.sqrt(),
        coverage: opt_mean(covered),
        mean_se: opt_mean(ok.iter().filter_map(|r| r.se).collect()),
        mean_l2,
        sd_l2,
    }
}

/// Runs every (sample size, replication) pair in parallel with its own RNG stream; a failed
/// replication is recorded with its error and excluded from the summaries.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    let started = std::time::Instant::now();
    let dgp = dgp_by_name(&config.dgp)
        .ok_or_else(|| crate::error::ConfigError::UnknownDgp(config.dgp.clone()))?;
    let base = dgp.schedule();
    let mut taus = config.extra_taus.clone();
    taus.push(config.tau);
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let target = taus
        .iter()
        .position(|&t| t == config.tau)
        .expect("target is in the grid");
    let schedule = VisitSchedule::new(base.visit_times().to_vec(), base.anchor() + 1, taus)?;
    let mut arms = standard_arms(&config.dgp, schedule.num_visits());
    if !config.arms.is_empty() {
        for a in &config.arms {
            if !arms.iter().any(|x| &x.label == a) {
                return Err(crate::error::ConfigError::Invalid(format!(
                    "unknown benchmark arm `{a}`"
                ))
                .into());
            }
        }
        arms.retain(|a| config.arms.contains(&a.label));
    }

    let (truth, truth_se, eval) = match config.mode {
        BenchmarkMode::Marginal => {
            let t = truth_marginal(
                dgp.as_ref(),
                config.tau,
                config.truth_draws,
                config.seed ^ 0x7275_7468,
                config.exec,
            );
            (t.value, Some(t.se), None)
        }
        BenchmarkMode::Conditional => {
            // Independent evaluation sample of W among subjects at risk at the anchor visit.
            let mut rng = stream_rng(config.seed ^ 0x6576_616c, 0);
            let anchor_time = schedule.window_start(schedule.anchor());
            let mut points = Vec::with_capacity(config.l2_points);
            while points.len() < config.l2_points {
                let s = sample_subject(dgp.as_ref(), &mut rng);
                if s.t.min(s.c) > anchor_time {
                    points.push(s.covariates[..=schedule.anchor()].concat());
                }
            }
            let q = truth_conditional(
                dgp.as_ref(),
                &points,
                config.tau,
                config.l2_draws,
                config.seed ^ 0x6c32,
                config.exec,
            );
            let mean = q.iter().sum::<f64>() / q.len() as f64;
            let w: Vec<Vec<f64>> = points.iter().map(|h| config.basis.extract(h)).collect();
            (mean, None, Some((w, q)))
        }
    };

    let estimation = EstimationConfig {
        kind: EstimatorKind::Mr,
        event_learners: Vec::new(),
        censor_learners: Vec::new(),
        basis: match config.mode {
            BenchmarkMode::Marginal => BasisSpec::intercept_only(),
            BenchmarkMode::Conditional => config.basis.clone(),
        },
        folds: config.folds,
        trim: config.trim,
        seed: config.seed,
        isotonic: true,
        exec: ExecMode::Sequential,
    };
    let jobs: Vec<(usize, usize)> = config
        .ns
        .iter()
        .flat_map(|&n| (0..config.reps).map(move |r| (n, r)))
        .collect();
    let per_job = config.exec.map(&jobs, |&(n, rep)| {
        let stream = ((n as u64) << 32) | rep as u64;
        let data =
            generate_stream(dgp.as_ref(), n, config.seed, stream).with_schedule(schedule.clone());
        let fail = |e: String| -> Vec<ReplicationRecord> {
            arms.iter()
                .map(|a| ReplicationRecord {
                    arm: a.label.clone(),
                    n,
                    rep,
                    estimate: None,
                    se: None,
                    covered: None,
                    l2: None,
                    projection_ok: None,
                    error: Some(e.clone()),
                })
                .collect()
        };
        let data = match data {
            Ok(d) => d,
            Err(e) => return fail(e.to_string()),
        };
        let mut cfg = estimation.clone();
        cfg.seed = config.seed.wrapping_add(stream);
        match config.mode {
            BenchmarkMode::Marginal => match fit_arms_marginal(&data, &arms, &cfg) {
                Ok(fits) => fits
                    .into_iter()
                    .map(|f| ReplicationRecord {
                        arm: f.label.clone(),
                        n,
                        rep,
                        estimate: Some(f.estimates[target]),
                        se: f.se[target],
                        covered: f.ci[target].map(|(lo, hi)| lo <= truth && truth <= hi),
                        l2: None,
                        projection_ok: None,
                        error: None,
                    })
                    .collect(),
                Err(e) => fail(e.to_string()),
            },
            BenchmarkMode::Conditional => match fit_arms_conditional(&data, &arms, &cfg) {
                Ok(fits) => {
                    let (w, q) = eval
                        .as_ref()
                        .expect("conditional mode has an evaluation sample");
                    fits.into_iter()
                        .map(|f| {
                            let mut sq = 0.0;
                            let mut sum = 0.0;
                            let mut projection_ok = true;
                            for (wi, qi) in w.iter().zip(q) {
                                let p = f.predict(wi);
                                projection_ok &= p.iter().all(|v| (0.0..=1.0).contains(v))
                                    && p.windows(2).all(|x| x[1] <= x[0]);
                                sq += (p[target] - qi).powi(2);
                                sum += p[target];
                            }
                            ReplicationRecord {
                                arm: f.label.clone(),
                                n,
                                rep,
                                estimate: Some(sum / w.len() as f64),
                                se: None,
                                covered: None,
                                l2: Some((sq / w.len() as f64).sqrt()),
                                projection_ok: Some(projection_ok),
                                error: None,
                            }
                        })
                        .collect()
                }
                Err(e) => fail(e.to_string()),
            },
        }
    });
    let replications: Vec<ReplicationRecord> = per_job.into_iter().flatten().collect();
    let mut summaries = Vec::new();
    for &n in &config.ns {
        for a in &arms {
            let recs: Vec<&ReplicationRecord> = replications
                .iter()
                .filter(|r| r.n == n && r.arm == a.label)
                .collect();
            summaries.push(summarize(&a.label, n, &recs, truth));
        }
    }
    Ok(BenchmarkReport {
        dgp: config.dgp.clone(),
        mode: config.mode,
        seed: config.seed,
        reps: config.reps,
        ns: config.ns.clone(),
        tau: config.tau,
        truth,
        truth_se,
        summaries,
        replications,
        runtime_secs: started.elapsed().as_secs_f64(),
    })
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

/// Writes `replications.csv`, `summary.csv` and `summary.json` into `dir`.
pub fn write_report(report: &BenchmarkReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let csv_err = |e: csv::Error| crate::Error::from(crate::error::DataError::from(e));
    let mut reps = csv::Writer::from_path(dir.join("replications.csv")).map_err(csv_err)?;
    reps.write_record([
        "arm",
        "n",
        "rep",
        "estimate",
        "se",
        "covered",
        "l2",
        "projection_ok",
        "error",
    ])
    .map_err(csv_err)?;
    for r in &report.replications {
        reps.write_record([
            r.arm.clone(),
            r.n.to_string(),
            r.rep.to_string(),
            opt(&r.estimate),
            opt(&r.se),
            opt(&r.covered),
            opt(&r.l2),
            opt(&r.projection_ok),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    reps.flush()?;
    let mut sum = csv::Writer::from_path(dir.join("summary.csv")).map_err(csv_err)?;
    sum.write_record([
        "arm",
        "n",
        "reps_ok",
        "failures",
        "truth",
        "mean_estimate",
        "bias",
        "sd",
        "bias_mcse",
        "coverage",
        "mean_se",
        "mean_l2",
        "sd_l2",
    ])
    .map_err(csv_err)?;
    for s in &report.summaries {
        sum.write_record([
            s.arm.clone(),
            s.n.to_string(),
            s.reps_ok.to_string(),
            s.failures.to_string(),
            report.truth.to_string(),
            s.mean_estimate.to_string(),
            s.bias.to_string(),
            s.sd.to_string(),
            s.bias_mcse.to_string(),
            opt(&s.coverage),
            opt(&s.mean_se),
            opt(&s.mean_l2),
            opt(&s.sd_l2),
        ])
        .map_err(csv_err)?;
    }
    sum.flush()?;
    let mut json = std::fs::File::create(dir.join("summary.json"))?;
    let summary = serde_json::json!({
        "dgp": report.dgp,
        "mode": report.mode,
        "seed": report.seed,
        "reps": report.reps,
        "ns": report.ns,
        "tau": report.tau,
        "truth": report.truth,
        "truth_se": report.truth_se,
        "summaries": report.summaries,
    });
    serde_json::to_writer_pretty(&mut json, &summary)?;
    writeln!(json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weibull_law_survival_and_truncation() {
        let law = WindowLaw::Weibull {
            shape: 5.0,
            scale: 30.0,
            truncation: None,
        };
        assert_eq!(law.survival(0.0, 0.0), 1.0);
        assert!((law.survival(0.0, 30.0) - (-1.0f64).exp()).abs() < 1e-15);
        let cut = WindowLaw::Weibull {
            shape: 4.0,
            scale: 35.0,
            truncation: Some(60.0),
        };
        assert!(cut.survival(30.0, 59.9) > 0.0);
        assert_eq!(cut.survival(30.0, 60.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!(cut.sample(30.0, &mut rng) <= 60.0);
        }
    }

    #[test]
    fn first_window_law_matches_the_design() {
        let d = TrialDgp { censoring: true };
        let h = [-1.5, 0.0, 2.0];
        assert_eq!(
            d.window_law(0, Role::Event, &h),
            WindowLaw::Weibull {
                shape: 5.0,
                scale: 30.0 + 3.0 + 4.0,
                truncation: None
            }
        );
        assert_eq!(
            TrialDgp { censoring: false }.window_law(1, Role::Censor, &[0.0; 5]),
            WindowLaw::Never
        );
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let d = TrialDgp { censoring: true };
        let a = generate(&d, 500, 9);
        let b = generate(&d, 500, 9);
        assert_eq!(a.records, b.records);
        assert!(a.records.iter().all(|r| r.followup <= 60.0));
        assert_ne!(
            generate_stream(&d, 50, 9, 1).records,
            generate_stream(&d, 50, 9, 2).records
        );
    }

    #[test]
    fn truth_is_monotone_in_tau() {
        let d = TrialDgp { censoring: true };
        assert_eq!(
            truth_marginal(&d, 0.0, 1000, 1, ExecMode::Sequential).value,
            1.0
        );
        let grid = [10.0, 30.0, 45.0, 60.0, 90.0];
        let v: Vec<f64> = grid
            .iter()
            .map(|&t| truth_marginal(&d, t, 20_000, 1, ExecMode::Sequential).value)
            .collect();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
    }
}
