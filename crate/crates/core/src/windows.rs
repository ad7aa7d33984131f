//! Per-window decomposition of a subject's follow-up.
//!
//! Window `k` is the interval `(t_k, t_{k+1}]`; the last window ends at the analysis horizon.
//! An event exactly at `t_{k+1}` belongs to window `k`.

use crate::data::{SubjectRecord, VisitSchedule};

#[derive(Debug, Clone, PartialEq)]
pub struct WindowView {
    pub k: usize,
    /// `X > t_k`.
    pub at_risk: bool,
    /// Window-local follow-up `(X ∧ t_{k+1} - t_k) · 1(X > t_k)`.
    pub x_local: f64,
    /// Event observed inside the window.
    pub delta: bool,
    /// Censoring observed inside the window: `(1 - Δ) · 1(t_k < X <= t_{k+1})`.
    pub censored: bool,
}

impl WindowView {
    /// Absolute follow-up time clipped to the window, `t_k + x_local`.
    pub fn x_abs(&self, schedule: &VisitSchedule) -> f64 {
        schedule.window_start(self.k) + self.x_local
    }
}

/// Splits one record into its `K` window views. `horizon` closes the last window and must not
/// precede the last visit time.
pub fn decompose(
    record: &SubjectRecord,
    schedule: &VisitSchedule,
    horizon: f64,
) -> Vec<WindowView> {
    let times = schedule.visit_times();
    let big_k = times.len();
    debug_assert!(horizon >= times[big_k - 1]);
    (0..big_k)
        .map(|k| {
            let start = times[k];
            let end = if k + 1 < big_k { times[k + 1] } else { horizon };
            let at_risk = record.followup > start;
            if !at_risk {
                return WindowView {
                    k,
                    at_risk,
                    x_local: 0.0,
                    delta: false,
                    censored: false,
                };
            }
            let inside = record.followup <= end;
            WindowView {
                k,
                at_risk,
                x_local: record.followup.min(end) - start,
                delta: inside && record.event,
                censored: inside && !record.event,
            }
        })
        .collect()
}

/// Recovers `(X ∧ horizon, Δ · 1(X <= horizon))` from a decomposition.
pub fn reconstruct(views: &[WindowView]) -> (f64, bool) {
    let x = views.iter().map(|v| v.x_local).sum();
    let delta = views.iter().any(|v| v.delta);
    (x, delta)
}
