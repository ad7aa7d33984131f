//! Brute-force checks of the estimating identities on finite discrete laws.
//!
//! A [`DiscreteLaw`] places the event and censoring times of one window on a grid
//! `t^1 < ... < t^J` through discrete hazards. Every `(x, δ)` outcome is enumerated with its exact
//! probability, so expectations of pseudo-outcomes are finite sums. Ties count as events.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pseudo::{dr_transform, pseudo_mr};
use crate::stepfn::StepSurvival;

/// Hazard range used for random perturbations.
pub const HAZARD_RANGE: (f64, f64) = (0.05, 0.95);

/// Event and censoring hazards on a finite grid inside the window `(start, end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw {
    pub start: f64,
    pub end: f64,
    pub times: Vec<f64>,
    pub event_hazards: Vec<f64>,
    pub censor_hazards: Vec<f64>,
}

/// One observable outcome and its probability. `x > end` marks follow-up beyond the window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub x: f64,
    pub delta: bool,
    pub prob: f64,
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        c += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + c
}

/// The step curve `Π_{t^i <= t} (1 - h_i)`.
pub fn survival_from_hazards(start: f64, times: &[f64], hazards: &[f64]) -> StepSurvival {
    let mut v = 1.0;
    let values: Vec<f64> = hazards
        .iter()
        .map(|h| {
            v *= 1.0 - h;
            v
        })
        .collect();
    StepSurvival::new(start, times.to_vec(), values).expect("hazards in [0, 1] give a valid curve")
}

fn random_hazards(rng: &mut (impl Rng + ?Sized), n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.gen_range(HAZARD_RANGE.0..=HAZARD_RANGE.1))
        .collect()
}

impl DiscreteLaw {
    pub fn new(
        start: f64,
        end: f64,
        times: Vec<f64>,
        event_hazards: Vec<f64>,
        censor_hazards: Vec<f64>,
    ) -> Result<Self> {
        let ok_times = times.windows(2).all(|w| w[0] < w[1])
            && times.first().is_some_and(|&t| t > start)
            && times.last().is_some_and(|&t| t <= end);
        let ok_h = |h: &[f64]| h.len() == times.len() && h.iter().all(|x| (0.0..=1.0).contains(x));
        if !ok_times || !ok_h(&event_hazards) || !ok_h(&censor_hazards) {
            return Err(Error::Step(
                "discrete law needs increasing times in (start, end] and hazards in [0, 1]".into(),
            ));
        }
        Ok(Self {
            start,
            end,
            times,
            event_hazards,
            censor_hazards,
        })
    }

    /// A law on `1..=max_points` integer-spaced support points with hazards in [`HAZARD_RANGE`].
    pub fn random(rng: &mut (impl Rng + ?Sized), max_points: usize) -> Self {
        let j = rng.gen_range(1..=max_points);
        let times: Vec<f64> = (1..=j).map(|i| i as f64).collect();
        let end = j as f64 + if rng.gen_bool(0.5) { 0.0 } else { 0.5 };
        Self {
            start: 0.0,
            end,
            times,
            event_hazards: random_hazards(rng, j),
            censor_hazards: random_hazards(rng, j),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn event_survival(&self) -> StepSurvival {
        survival_from_hazards(self.start, &self.times, &self.event_hazards)
    }

    pub fn censor_survival(&self) -> StepSurvival {
        survival_from_hazards(self.start, &self.times, &self.censor_hazards)
    }

    /// Hazards in [`HAZARD_RANGE`] unrelated to the law's own.
    pub fn random_hazards(&self, rng: &mut (impl Rng + ?Sized)) -> Vec<f64> {
        random_hazards(rng, self.len())
    }

    /// Every outcome with positive-or-zero probability; probabilities sum to one.
    pub fn outcomes(&self) -> Vec<Outcome> {
        let mut out = Vec::with_capacity(2 * self.len() + 1);
        let (mut s, mut g) = (1.0, 1.0);
        for j in 0..self.len() {
            let (l, m) = (self.event_hazards[j], self.censor_hazards[j]);
            out.push(Outcome {
                x: self.times[j],
                delta: true,
                prob: s * l * g,
            });
            out.push(Outcome {
                x: self.times[j],
                delta: false,
                prob: g * m * s * (1.0 - l),
            });
            s *= 1.0 - l;
            g *= 1.0 - m;
        }
        out.push(Outcome {
            x: self.end + 1.0,
            delta: false,
            prob: s * g,
        });
        out
    }
}

/// `E f(X, Δ)` by exact enumeration.
pub fn enumerate_expectation(law: &DiscreteLaw, mut f: impl FnMut(f64, bool) -> f64) -> f64 {
    compensated_sum(law.outcomes().into_iter().map(|o| {
        if o.prob == 0.0 {
            0.0
        } else {
            o.prob * f(o.x, o.delta)
        }
    }))
}

/// `E[Y^MR(Ŝ, Ĝ)] - S*(t̄)` in closed form:
/// `Ŝ(t̄) Σ_{t^j <= t̄} [(G*(t^{j-1}) - Ĝ(t^{j-1})) / Ĝ(t^{j-1})] · [S*(t^{j-1}) (λ̂_j - λ*_j) / Ŝ(t^j)]`.
pub fn remainder_closed_form(
    law: &DiscreteLaw,
    s_hat: &[f64],
    g_hat: &[f64],
    t_bar: f64,
) -> Result<f64> {
    let (mut ss, mut sh, mut gs, mut gh) = (1.0, 1.0, 1.0, 1.0);
    let mut terms = Vec::new();
    for j in 0..law.len() {
        if law.times[j] > t_bar {
            break;
        }
        let sh_next = sh * (1.0 - s_hat[j]);
        if gh == 0.0 || sh_next == 0.0 {
            return Err(Error::Positivity { time: law.times[j] });
        }
        terms.push((gs - gh) / gh * ss * (s_hat[j] - law.event_hazards[j]) / sh_next);
        ss *= 1.0 - law.event_hazards[j];
        sh = sh_next;
        gs *= 1.0 - law.censor_hazards[j];
        gh *= 1.0 - g_hat[j];
    }
    let s_hat_tbar = survival_from_hazards(law.start, &law.times, s_hat).at(t_bar);
    Ok(s_hat_tbar * compensated_sum(terms))
}

/// Sup-distances between two hazard sequences and their survival curves up to `t̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceReport {
    pub sup_survival: f64,
    pub sup_hazard: f64,
    /// `J · sup|λ̂ - λ*|`, an upper bound for `sup_survival`.
    pub survival_bound: f64,
    /// `(2 / S*(t̄)) · sup|Ŝ - S*|`, an upper bound for `sup_hazard`.
    pub hazard_bound: f64,
}

impl EquivalenceReport {
    pub fn holds(&self) -> bool {
        let slack = 1e-12;
        self.sup_survival <= self.survival_bound + slack
            && self.sup_hazard <= self.hazard_bound + slack
    }

    /// `sup_survival / sup_hazard`, or 1 when both vanish.
    pub fn ratio(&self) -> f64 {
        if self.sup_hazard == 0.0 {
            1.0
        } else {
            self.sup_survival / self.sup_hazard
        }
    }
}

/// Compares hazards and survival curves on the first `j` grid points.
pub fn hazard_survival_equivalence(hat: &[f64], truth: &[f64]) -> EquivalenceReport {
    let j = hat.len().min(truth.len());
    let (mut sh, mut ss) = (1.0f64, 1.0f64);
    let (mut sup_s, mut sup_h) = (0.0f64, 0.0f64);
    for i in 0..j {
        sh *= 1.0 - hat[i];
        ss *= 1.0 - truth[i];
        sup_s = sup_s.max((sh - ss).abs());
        sup_h = sup_h.max((hat[i] - truth[i]).abs());
    }
    EquivalenceReport {
        sup_survival: sup_s,
        sup_hazard: sup_h,
        survival_bound: j as f64 * sup_h,
        hazard_bound: if ss > 0.0 {
            2.0 / ss * sup_s
        } else {
            f64::INFINITY
        },
    }
}

// ---------------------------------------------------------------------------
// Two-window law
// ---------------------------------------------------------------------------

/// Two consecutive windows with a binary baseline covariate `W` (the whole first-visit history)
/// and a binary second-visit covariate `L`. Window-1 laws depend on `W`, window-2 laws on `(W, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoWindowLaw {
    /// `first[w]`: window `(0, t_2]`.
    pub first: [DiscreteLaw; 2],
    /// `P(L = 1 | W = w)`.
    pub l_prob: [f64; 2],
    /// `second[w][l]`: window `(t_2, t_3]`.
    pub second: [[DiscreteLaw; 2]; 2],
}

/// Which nuisance curve is the truth in one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    BothTrue,
    EventTrue,
    CensorTrue,
}

impl TwoWindowLaw {
    pub fn random(rng: &mut impl Rng, max_points: usize) -> Self {
        let j1 = rng.gen_range(1..=max_points);
        let j2 = rng.gen_range(1..=max_points);
        let t2 = j1 as f64;
        let mk1 = |rng: &mut dyn rand::RngCore| DiscreteLaw {
            start: 0.0,
            end: t2,
            times: (1..=j1).map(|i| i as f64).collect(),
            event_hazards: random_hazards(rng, j1),
            censor_hazards: random_hazards(rng, j1),
        };
        let mk2 = |rng: &mut dyn rand::RngCore| DiscreteLaw {
            start: t2,
            end: t2 + j2 as f64,
            times: (1..=j2).map(|i| t2 + i as f64).collect(),
            event_hazards: random_hazards(rng, j2),
            censor_hazards: random_hazards(rng, j2),
        };
        Self {
            first: [mk1(rng), mk1(rng)],
            l_prob: [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)],
            second: [[mk2(rng), mk2(rng)], [mk2(rng), mk2(rng)]],
        }
    }

    /// `P(T > τ | W = w)` with `τ` inside the second window.
    pub fn truth(&self, w: usize, tau: f64) -> f64 {
        let s1 = self.first[w].event_survival().at(self.first[w].end);
        let p = self.l_prob[w];
        s1 * ((1.0 - p) * self.second[w][0].event_survival().at(tau)
            + p * self.second[w][1].event_survival().at(tau))
    }

    /// `Π_k E[Y^MR_k | W = w, X > t_k]` computed by enumerating every joint path, with the
    /// nuisance curves chosen by `patterns` and the non-true ones taken from `perturbed`.
    pub fn product(
        &self,
        w: usize,
        tau: f64,
        patterns: [Pattern; 2],
        perturbed: &Perturbation,
    ) -> Result<f64> {
        let l1 = &self.first[w];
        let pick = |pattern: Pattern,
                    law: &DiscreteLaw,
                    s: &[f64],
                    g: &[f64]|
         -> (StepSurvival, StepSurvival) {
            let s_curve = match pattern {
                Pattern::CensorTrue => survival_from_hazards(law.start, &law.times, s),
                _ => law.event_survival(),
            };
            let g_curve = match pattern {
                Pattern::EventTrue => survival_from_hazards(law.start, &law.times, g),
                _ => law.censor_survival(),
            };
            (s_curve, g_curve)
        };
        let (s1, g1) = pick(
            patterns[0],
            l1,
            &perturbed.first[w].0,
            &perturbed.first[w].1,
        );
        let t2 = l1.end;
        let mut num1 = Vec::new();
        let mut den1 = Vec::new();
        let mut num2 = Vec::new();
        let mut den2 = Vec::new();
        for o1 in l1.outcomes() {
            if o1.x <= t2 {
                let y1 = pseudo_mr(&s1, &g1, o1.x, o1.delta, t2, 0.0)?;
                num1.push(o1.prob * y1);
                den1.push(o1.prob);
                continue;
            }
            // Survived window 1 uncensored: draw L, then enumerate window 2.
            for l in 0..2 {
                let pl = if l == 1 {
                    self.l_prob[w]
                } else {
                    1.0 - self.l_prob[w]
                };
                let law2 = &self.second[w][l];
                let (s2, g2) = pick(
                    patterns[1],
                    law2,
                    &perturbed.second[w][l].0,
                    &perturbed.second[w][l].1,
                );
                for o2 in law2.outcomes() {
                    let p = o1.prob * pl * o2.prob;
                    let y1 = pseudo_mr(&s1, &g1, o2.x, o2.delta, t2, 0.0)?;
                    let y2 = pseudo_mr(&s2, &g2, o2.x, o2.delta, tau, 0.0)?;
                    num1.push(p * y1);
                    den1.push(p);
                    num2.push(p * y2);
                    den2.push(p);
                }
            }
        }
        let q1 = compensated_sum(num1) / compensated_sum(den1);
        let q2 = compensated_sum(num2) / compensated_sum(den2);
        Ok(q1 * q2)
    }
}

/// Perturbed `(event, censor)` hazards for every history of a [`TwoWindowLaw`].
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub first: [(Vec<f64>, Vec<f64>); 2],
    pub second: [[(Vec<f64>, Vec<f64>); 2]; 2],
}

impl Perturbation {
    pub fn random(law: &TwoWindowLaw, rng: &mut (impl Rng + ?Sized)) -> Self {
        let mut pair = |l: &DiscreteLaw| (l.random_hazards(rng), l.random_hazards(rng));
        let first = [pair(&law.first[0]), pair(&law.first[1])];
        let second = [
            [pair(&law.second[0][0]), pair(&law.second[0][1])],
            [pair(&law.second[1][0]), pair(&law.second[1][1])],
        ];
        Self { first, second }
    }
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

/// Worst absolute error of one identity over a batch of random laws.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl IdentityCheck {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

fn random_t_bar(rng: &mut (impl Rng + ?Sized), law: &DiscreteLaw) -> f64 {
    // A support point, a point between support points, or the window end.
    match rng.gen_range(0..3) {
        0 => law.times[rng.gen_range(0..law.len())],
        1 => law.times[rng.gen_range(0..law.len())] - 0.5,
        _ => law.end,
    }
}

/// Single-window identities over `laws` random laws with at most `max_points` support points.
pub fn single_window_suite(
    laws: usize,
    max_points: usize,
    seed: u64,
) -> Result<Vec<IdentityCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = IdentityCheck {
        name: "probabilities sum to one",
        cases: 0,
        max_error: 0.0,
        tolerance: 1e-12,
    };
    let mut ipcw = IdentityCheck {
        name: "IPCW representation",
        cases: 0,
        max_error: 0.0,
        tolerance: 1e-12,
    };
    let mut dr_s = IdentityCheck {
        name: "DR transform mean zero at true S",
        cases: 0,
        max_error: 0.0,
        tolerance: 1e-12,
    };
    let mut dr_g = IdentityCheck {
        name: "DR transform bias correction at true G",
        cases: 0,
        max_error: 0.0,
        tolerance: 1e-12,
    };
    let mut rem = IdentityCheck {
        name: "closed-form mixed-bias remainder",
        cases: 0,
        max_error: 0.0,
        tolerance: 1e-12,
    };
    let mut eqv = IdentityCheck {
        name: "hazard/survival sup-norm equivalence",
        cases: 0,
        max_error: 0.0,
        tolerance: 0.0,
    };
    for _ in 0..laws {
        let law = DiscreteLaw::random(&mut rng, max_points);
        let t_bar = random_t_bar(&mut rng, &law);
        let s_true = law.event_survival();
        let g_true = law.censor_survival();
        let s_hat_h = law.random_hazards(&mut rng);
        let g_hat_h = law.random_hazards(&mut rng);
        let s_hat = survival_from_hazards(law.start, &law.times, &s_hat_h);
        let g_hat = survival_from_hazards(law.start, &law.times, &g_hat_h);
        let s_star = s_true.at(t_bar);

        let bump = |c: &mut IdentityCheck, err: f64| {
            c.cases += 1;
            c.max_error = c.max_error.max(err.abs());
        };
        bump(&mut total, enumerate_expectation(&law, |_, _| 1.0) - 1.0);
        let e = enumerate_expectation(&law, |x, d| {
            if d && x <= t_bar {
                1.0 / g_true.before(x)
            } else {
                0.0
            }
        });
        bump(&mut ipcw, (1.0 - e) - s_star);

        let mut first_err = None;
        let mut capture = |r: Result<f64>| -> f64 {
            r.unwrap_or_else(|e| {
                first_err.get_or_insert(e);
                f64::NAN
            })
        };
        let e_s = enumerate_expectation(&law, |x, d| {
            capture(dr_transform(&s_true, &g_hat, x, d, t_bar))
        });
        bump(&mut dr_s, e_s);
        let e_g = enumerate_expectation(&law, |x, d| {
            capture(dr_transform(&s_hat, &g_true, x, d, t_bar))
        });
        bump(&mut dr_g, e_g - (s_star - s_hat.at(t_bar)));
        let e_y = enumerate_expectation(&law, |x, d| {
            capture(pseudo_mr(&s_hat, &g_hat, x, d, t_bar, 0.0))
        });
        if let Some(e) = first_err {
            return Err(e);
        }
        let closed = remainder_closed_form(&law, &s_hat_h, &g_hat_h, t_bar)?;
        bump(&mut rem, (e_y - s_star) - closed);

        let upto = law.times.partition_point(|&t| t <= t_bar).max(1);
        let report = hazard_survival_equivalence(&s_hat_h[..upto], &law.event_hazards[..upto]);
        eqv.cases += 1;
        if !report.holds() {
            eqv.max_error = f64::INFINITY;
        }
    }
    for c in [&mut total, &mut ipcw, &mut dr_s, &mut dr_g, &mut rem] {
        if c.max_error.is_nan() {
            c.max_error = f64::INFINITY;
        }
    }
    Ok(vec![total, ipcw, dr_s, dr_g, rem, eqv])
}

/// The product of window-wise MR means equals `Q*(w)` whenever each window has a true nuisance.
pub fn two_window_suite(laws: usize, max_points: usize, seed: u64) -> Result<IdentityCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = IdentityCheck {
        name: "two-window multiple robustness",
        cases: 0,
        max_error: 0.0,
        tolerance: 1e-12,
    };
    let patterns = [Pattern::BothTrue, Pattern::EventTrue, Pattern::CensorTrue];
    for _ in 0..laws {
        let law = TwoWindowLaw::random(&mut rng, max_points);
        let pert = Perturbation::random(&law, &mut rng);
        let l2 = &law.second[0][0];
        let tau = l2.times[rng.gen_range(0..l2.len())];
        for w in 0..2 {
            let truth = law.truth(w, tau);
            for &p1 in &patterns {
                for &p2 in &patterns {
                    let q = law.product(w, tau, [p1, p2], &pert)?;
                    check.cases += 1;
                    let err = (q - truth).abs();
                    check.max_error =
                        check
                            .max_error
                            .max(if err.is_nan() { f64::INFINITY } else { err });
                }
            }
        }
    }
    Ok(check)
}

/// Every identity check at the default sizes.
pub fn run_all(seed: u64) -> Result<Vec<IdentityCheck>> {
    let mut checks = single_window_suite(1000, 6, seed)?;
    checks.push(two_window_suite(200, 4, seed.wrapping_add(1))?);
    Ok(checks)
}

/// A fixed-width pass/fail table.
pub fn format_table(checks: &[IdentityCheck]) -> String {
    let mut s = format!(
        "{:<42} {:>7} {:>12} {:>10}  result\n",
        "identity", "cases", "max error", "tolerance"
    );
    for c in checks {
        s.push_str(&format!(
            "{:<42} {:>7} {:>12.3e} {:>10.0e}  {}\n",
            c.name,
            c.cases,
            c.max_error,
            c.tolerance,
            if c.passed() { "PASS" } else { "FAIL" }
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_point() -> DiscreteLaw {
        DiscreteLaw::new(
            0.0,
            3.0,
            vec![1.0, 2.0, 3.0],
            vec![0.2, 0.5, 0.3],
            vec![0.1, 0.4, 0.6],
        )
        .unwrap()
    }

    #[test]
    fn probabilities_sum_to_one() {
        assert!((enumerate_expectation(&three_point(), |_, _| 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ipcw_functional_gives_incidence() {
        let law = three_point();
        let g = law.censor_survival();
        let e = enumerate_expectation(&law, |x, d| {
            if d && x <= 2.0 {
                1.0 / g.before(x)
            } else {
                0.0
            }
        });
        assert!((e - (1.0 - law.event_survival().at(2.0))).abs() < 1e-15);
    }

    #[test]
    fn transform_at_true_event_curve_has_mean_zero() {
        let law = three_point();
        let s = law.event_survival();
        let g = survival_from_hazards(0.0, &law.times, &[0.7, 0.2, 0.3]);
        let e = enumerate_expectation(&law, |x, d| dr_transform(&s, &g, x, d, 3.0).unwrap());
        assert!(e.abs() < 1e-14);
    }

    #[test]
    fn remainder_vanishes_with_one_true_nuisance() {
        let law = three_point();
        let other = [0.6, 0.1, 0.9];
        assert_eq!(
            remainder_closed_form(&law, &other, &law.censor_hazards, 3.0).unwrap(),
            0.0
        );
        assert_eq!(
            remainder_closed_form(&law, &law.event_hazards, &other, 3.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn remainder_matches_enumeration_on_a_fixed_law() {
        let law = three_point();
        let sh = [0.3, 0.35, 0.1];
        let gh = [0.25, 0.15, 0.5];
        let s = survival_from_hazards(0.0, &law.times, &sh);
        let g = survival_from_hazards(0.0, &law.times, &gh);
        let e = enumerate_expectation(&law, |x, d| pseudo_mr(&s, &g, x, d, 2.0, 0.0).unwrap());
        let closed = remainder_closed_form(&law, &sh, &gh, 2.0).unwrap();
        assert!((e - law.event_survival().at(2.0) - closed).abs() < 1e-14);
        assert!(closed.abs() > 1e-4);
    }

    #[test]
    fn hazard_survival_examples() {
        let r = hazard_survival_equivalence(&[0.2, 0.3], &[0.2, 0.3]);
        assert_eq!((r.sup_survival, r.sup_hazard), (0.0, 0.0));
        let r = hazard_survival_equivalence(&[0.4], &[0.3]);
        assert!((r.sup_survival - 0.1).abs() < 1e-15 && (r.sup_hazard - 0.1).abs() < 1e-15);
        assert!(r.holds());
    }

    #[test]
    fn equivalence_ratio_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a = random_hazards(&mut rng, 4);
            let b = random_hazards(&mut rng, 4);
            let r = hazard_survival_equivalence(&a, &b);
            assert!(r.holds());
            assert!(r.ratio().is_finite() && r.ratio() <= 4.0);
        }
    }

    #[test]
    fn small_suites_pass() {
        for c in single_window_suite(100, 4, 11).unwrap() {
            assert!(c.passed(), "{c:?}");
        }
        assert!(two_window_suite(20, 3, 12).unwrap().passed());
    }

    #[test]
    fn table_lists_every_check() {
        let checks = run_all(5).unwrap();
        let table = format_table(&checks);
        assert_eq!(table.lines().count(), checks.len() + 1);
    }
}
