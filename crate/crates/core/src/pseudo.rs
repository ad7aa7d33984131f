//! The doubly robust transform `𝒯` and the per-window pseudo-outcomes.
//!
//! For a window starting at `t_k` and a truncation point `t̄`,
//!
//! ```text
//! 𝒯(S, G)(x, δ) = -S(t̄) · { 1(x <= t̄) δ / (S(x) G(x-)) + Σ_{t_k < s <= x ∧ t̄} ΔS(s) / (S(s) S(s-) G(s-)) }
//! ```
//!
//! and the pseudo-outcomes are `Y^MR = S(t̄) + 𝒯`, `Y^G = S(t̄)` and
//! `Y^IPCW = 1 - 1(x <= t̄) δ / G(x-)`. Every `G` evaluation is floored at the trimming level.
//! When `S(t̄) = 0` the transform is zero.

use std::io::Write;

use crate::error::{Error, Result};
use crate::estimate::EstimatorKind;
use crate::exec::ExecMode;
use crate::nuisance::{FoldModels, WindowData};
use crate::stepfn::StepSurvival;

/// One transform value and whether any censoring-curve evaluation was floored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transformed {
    pub value: f64,
    pub trimmed: bool,
}

struct Floor {
    epsilon: f64,
    trimmed: bool,
}

impl Floor {
    #[inline]
    fn apply(&mut self, g: f64, at: f64) -> Result<f64> {
        let floored = if g < self.epsilon {
            self.trimmed = true;
            self.epsilon
        } else {
            g
        };
        if floored > 0.0 {
            Ok(floored)
        } else {
            Err(Error::Positivity { time: at })
        }
    }
}

/// `𝒯` without trimming; a zero censoring survival is a positivity error.
pub fn dr_transform(
    s: &StepSurvival,
    g: &StepSurvival,
    x: f64,
    delta: bool,
    t_bar: f64,
) -> Result<f64> {
    Ok(dr_transform_grid(s, g, x, delta, &[t_bar], 0.0)?[0].value)
}

/// `𝒯` at each truncation point of the nondecreasing slice `t_bars` in one pass over the jumps.
pub fn dr_transform_grid(
    s: &StepSurvival,
    g: &StepSurvival,
    x: f64,
    delta: bool,
    t_bars: &[f64],
    epsilon: f64,
) -> Result<Vec<Transformed>> {
    let start = s.start();
    debug_assert_eq!(start, g.start());
    if x <= start {
        return Ok(vec![
            Transformed {
                value: 0.0,
                trimmed: false
            };
            t_bars.len()
        ]);
    }
    let (sj, sv) = (s.jump_times(), s.values());
    let (gj, gv) = (g.jump_times(), g.values());
    let mut floor = Floor {
        epsilon,
        trimmed: false,
    };
    let mut out = Vec::with_capacity(t_bars.len());
    let mut integral = 0.0;
    let mut i = 0;
    let mut gi = 0;
    let mut exhausted = false;
    for &t_bar in t_bars {
        if t_bar <= start {
            return Err(Error::Domain { t: t_bar, start });
        }
        let s_tbar = s.at(t_bar);
        if s_tbar == 0.0 || exhausted {
            out.push(Transformed {
                value: 0.0,
                trimmed: floor.trimmed,
            });
            continue;
        }
        let limit = x.min(t_bar);
        while i < sj.len() && sj[i] <= limit {
            let post = sv[i];
            let pre = if i == 0 { 1.0 } else { sv[i - 1] };
            if post == 0.0 {
                exhausted = true;
                break;
            }
            while gi < gj.len() && gj[gi] < sj[i] {
                gi += 1;
            }
            let g_pre = floor.apply(if gi == 0 { 1.0 } else { gv[gi - 1] }, sj[i])?;
            integral += (post - pre) / (post * pre * g_pre);
            i += 1;
        }
        let mut brace = integral;
        if delta && x <= t_bar {
            let g_x = floor.apply(g.before(x), x)?;
            brace += 1.0 / (s.at(x) * g_x);
        }
        out.push(Transformed {
            value: -s_tbar * brace,
            trimmed: floor.trimmed,
        });
    }
    Ok(out)
}

/// Pseudo-outcomes of one at-risk subject at each truncation point.
///
/// `s` is ignored for IPCW and `g` for G-computation.
pub fn pseudo_outcomes(
    kind: EstimatorKind,
    s: &StepSurvival,
    g: &StepSurvival,
    x: f64,
    delta: bool,
    t_bars: &[f64],
    epsilon: f64,
) -> Result<Vec<Transformed>> {
    match kind {
        EstimatorKind::G => Ok(t_bars
            .iter()
            .map(|&t| Transformed {
                value: s.at(t),
                trimmed: false,
            })
            .collect()),
        EstimatorKind::Mr => {
            let mut t = dr_transform_grid(s, g, x, delta, t_bars, epsilon)?;
            for (tr, &tb) in t.iter_mut().zip(t_bars) {
                tr.value += s.at(tb);
            }
            Ok(t)
        }
        EstimatorKind::Ipcw => {
            let unit = StepSurvival::unit(s.start());
            pseudo_outcomes(EstimatorKind::Mr, &unit, g, x, delta, t_bars, epsilon)
        }
    }
}

/// `Y^MR` at a single truncation point.
pub fn pseudo_mr(
    s: &StepSurvival,
    g: &StepSurvival,
    x: f64,
    delta: bool,
    t_bar: f64,
    epsilon: f64,
) -> Result<f64> {
    Ok(pseudo_outcomes(EstimatorKind::Mr, s, g, x, delta, &[t_bar], epsilon)?[0].value)
}

/// `Y^G` at a single truncation point.
pub fn pseudo_g(s: &StepSurvival, t_bar: f64) -> f64 {
    s.at(t_bar)
}

/// `Y^IPCW` at a single truncation point.
pub fn pseudo_ipcw(g: &StepSurvival, x: f64, delta: bool, t_bar: f64, epsilon: f64) -> Result<f64> {
    let unit = StepSurvival::unit(g.start());
    pseudo_mr(&unit, g, x, delta, t_bar, epsilon)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoRow {
    /// Index of the subject in the dataset.
    pub subject: usize,
    pub y: f64,
    pub weight: f64,
    pub fold: usize,
    pub trimmed: bool,
}

/// Pseudo-outcomes of the window-`k` risk set at one `τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoPanel {
    pub k: usize,
    pub tau: f64,
    pub rows: Vec<PseudoRow>,
}

impl PseudoPanel {
    pub fn trim_count(&self) -> usize {
        self.rows.iter().filter(|r| r.trimmed).count()
    }
}

/// Builds one panel per `τ` in `taus` for window `data.k`, each subject using the nuisance models
/// of its own fold. `t_bars[j]` is `t_{k+1} ∧ taus[j]` and must be nondecreasing.
#[allow(clippy::too_many_arguments)]
pub fn build_panels(
    kind: EstimatorKind,
    data: &WindowData,
    event: &FoldModels,
    censor: &FoldModels,
    folds: &[usize],
    taus: &[f64],
    t_bars: &[f64],
    epsilon: f64,
    exec: ExecMode,
) -> Result<Vec<PseudoPanel>> {
    let horizon = t_bars.last().copied().unwrap_or(data.end);
    let per_row = exec.map(&data.rows, |r| -> Result<Vec<Transformed>> {
        let fold = folds[r.subject];
        let s = match kind {
            EstimatorKind::Ipcw => std::borrow::Cow::Owned(StepSurvival::unit(data.start)),
            _ => event.for_fold(fold).predict(&r.history, horizon)?,
        };
        let g = match kind {
            EstimatorKind::G => std::borrow::Cow::Owned(StepSurvival::unit(data.start)),
            _ => censor.for_fold(fold).predict(&r.history, horizon)?,
        };
        pseudo_outcomes(kind, &s, &g, r.x, r.event, t_bars, epsilon)
    });
    let per_row = per_row.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(taus
        .iter()
        .enumerate()
        .map(|(j, &tau)| PseudoPanel {
            k: data.k,
            tau,
            rows: data
                .rows
                .iter()
                .zip(&per_row)
                .map(|(r, ys)| PseudoRow {
                    subject: r.subject,
                    y: ys[j].value,
                    weight: r.weight,
                    fold: folds[r.subject],
                    trimmed: ys[j].trimmed,
                })
                .collect(),
        })
        .collect())
}

/// Writes panels as `id,k,tau,y,fold` rows; `k` is one-based.
pub fn write_panels_csv<W: Write>(panels: &[PseudoPanel], ids: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "k", "tau", "y", "fold"])
        .map_err(crate::error::DataError::from)?;
    for p in panels {
        for r in &p.rows {
            w.write_record([
                ids[r.subject].clone(),
                (p.k + 1).to_string(),
                p.tau.to_string(),
                r.y.to_string(),
                r.fold.to_string(),
            ])
            .map_err(crate::error::DataError::from)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s_example() -> StepSurvival {
        StepSurvival::new(0.0, vec![1.0, 2.0], vec![0.5, 0.25]).unwrap()
    }

    fn g_example() -> StepSurvival {
        StepSurvival::new(0.0, vec![1.0], vec![0.8]).unwrap()
    }

    #[test]
    fn unit_event_curve_without_event_is_zero() {
        let unit = StepSurvival::unit(0.0);
        for x in [0.3, 1.0, 2.5] {
            assert_eq!(
                dr_transform(&unit, &g_example(), x, false, 2.0).unwrap(),
                0.0
            );
        }
    }

    #[test]
    fn unit_event_curve_with_event_gives_ipcw() {
        let unit = StepSurvival::unit(0.0);
        let t = dr_transform(&unit, &g_example(), 1.5, true, 2.0).unwrap();
        assert_eq!(t, -1.25);
        assert_eq!(
            1.0 + t,
            pseudo_ipcw(&g_example(), 1.5, true, 2.0, 0.0).unwrap()
        );
    }

    #[test]
    fn two_jump_hand_computation() {
        let t = dr_transform(&s_example(), &g_example(), 2.0, true, 2.0).unwrap();
        assert!((t + 0.375).abs() < 1e-15);
        let y = pseudo_mr(&s_example(), &g_example(), 2.0, true, 2.0, 0.05).unwrap();
        assert!((y + 0.125).abs() < 1e-15);
        assert_eq!(pseudo_g(&s_example(), 2.0), 0.25);
    }

    #[test]
    fn early_censoring_with_flat_curve() {
        let s = StepSurvival::new(0.0, vec![3.0], vec![0.6]).unwrap();
        let y = pseudo_mr(&s, &g_example(), 0.1, false, 2.0, 0.05).unwrap();
        assert_eq!(y, s.at(2.0));
    }

    #[test]
    fn ipcw_examples() {
        assert!((pseudo_ipcw(&g_example(), 1.5, true, 2.0, 0.05).unwrap() + 0.25).abs() < 1e-15);
        assert_eq!(
            pseudo_ipcw(&g_example(), 1.5, false, 2.0, 0.05).unwrap(),
            1.0
        );
    }

    #[test]
    fn zero_censoring_survival_is_a_positivity_error() {
        let g = StepSurvival::new(0.0, vec![1.0], vec![0.0]).unwrap();
        let err = dr_transform(&s_example(), &g, 2.0, true, 2.0).unwrap_err();
        assert!(matches!(err, Error::Positivity { .. }));
        let trimmed = dr_transform_grid(&s_example(), &g, 2.0, true, &[2.0], 0.05).unwrap();
        assert!(trimmed[0].trimmed && trimmed[0].value.is_finite());
    }

    #[test]
    fn exhausted_event_curve_gives_zero() {
        let s = StepSurvival::new(0.0, vec![1.0], vec![0.0]).unwrap();
        assert_eq!(dr_transform(&s, &g_example(), 1.5, true, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn not_at_risk_is_zero() {
        let s = StepSurvival::new(5.0, vec![6.0], vec![0.5]).unwrap();
        let g = StepSurvival::unit(5.0);
        assert_eq!(dr_transform(&s, &g, 5.0, true, 7.0).unwrap(), 0.0);
    }

    prop_compose! {
        fn curve()(steps in proptest::collection::vec((0.05f64..1.0, 0.3f64..1.0), 0..8)) -> StepSurvival {
            let mut t = 0.0;
            let mut v = 1.0;
            let (mut ts, mut vs) = (vec![], vec![]);
            for (dt, f) in steps { t += dt; v *= f; ts.push(t); vs.push(v); }
            StepSurvival::new(0.0, ts, vs).unwrap()
        }
    }

    proptest! {
        #[test]
        fn ipcw_is_mr_with_unit_event_curve(g in curve(), x in 0.01f64..6.0, d: bool, tb in 0.5f64..6.0, eps in 0.0f64..0.3) {
            let unit = StepSurvival::unit(0.0);
            let a = pseudo_ipcw(&g, x, d, tb, eps.max(1e-9)).unwrap();
            let b = pseudo_mr(&unit, &g, x, d, tb, eps.max(1e-9)).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }

        #[test]
        fn raising_the_floor_never_inflates_ipcw(g in curve(), x in 0.01f64..6.0, d: bool, tb in 0.5f64..6.0, e1 in 0.001f64..0.5, e2 in 0.001f64..0.5) {
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let a = pseudo_ipcw(&g, x, d, tb, lo).unwrap().abs();
            let b = pseudo_ipcw(&g, x, d, tb, hi).unwrap().abs();
            prop_assert!(b <= a + 1e-12);
        }

        #[test]
        fn grid_matches_pointwise(s in curve(), g in curve(), x in 0.01f64..6.0, d: bool, mut tbs in proptest::collection::vec(0.1f64..6.0, 1..5)) {
            tbs.sort_by(f64::total_cmp);
            let grid = dr_transform_grid(&s, &g, x, d, &tbs, 0.05).unwrap();
            for (tr, &tb) in grid.iter().zip(&tbs) {
                let single = dr_transform_grid(&s, &g, x, d, &[tb], 0.05).unwrap()[0].value;
                prop_assert!((tr.value - single).abs() < 1e-12 * (1.0 + single.abs()));
            }
        }

        #[test]
        fn no_censoring_and_unit_g_telescopes_to_indicator(s in curve(), x in 0.01f64..6.0, tb in 0.1f64..6.0) {
            // With every subject observed to fail, Y^MR = 1(x > t̄) for any event curve with S(t̄) > 0.
            let unit = StepSurvival::unit(0.0);
            prop_assume!(s.at(tb) > 0.0);
            let y = pseudo_mr(&s, &unit, x, true, tb, 0.0).unwrap();
            let expect = if x > tb { 1.0 } else { 0.0 };
            prop_assert!((y - expect).abs() < 1e-9);
        }
    }
}
