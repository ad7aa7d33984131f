use std::borrow::Cow;
use std::sync::{Arc, OnceLock};

use super::{ConditionalSurvivalModel, Role, WindowData};
use crate::error::{FitError, Result};
use crate::simulate::{Dgp, WindowLaw};
use crate::stepfn::StepSurvival;

/// The true conditional law of a simulation design, discretized on a fixed grid.
///
/// The grid is every observed clipped follow-up time in the window plus the window end. Predicted
/// curves jump only at grid points (and at the requested horizon), and the value at each point is
/// the exact continuous survival there.
pub struct OracleModel {
    dgp: Arc<dyn Dgp>,
    k: usize,
    role: Role,
    start: f64,
    grid: Vec<f64>,
    /// `(shape, (g - start)^shape)` for the first shape requested.
    powers: OnceLock<(f64, Vec<f64>)>,
}

impl std::fmt::Debug for OracleModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleModel")
            .field("dgp", &self.dgp.name())
            .field("k", &self.k)
            .field("role", &self.role)
            .field("grid_len", &self.grid.len())
            .finish()
    }
}

impl OracleModel {
    pub fn new(dgp: Arc<dyn Dgp>, data: &WindowData, role: Role) -> Self {
        let mut grid: Vec<f64> = data
            .rows
            .iter()
            .map(|r| r.x)
            .filter(|&x| x > data.start && x <= data.end)
            .collect();
        grid.push(data.end);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        Self {
            dgp,
            k: data.k,
            role,
            start: data.start,
            grid,
            powers: OnceLock::new(),
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn powers(&self, shape: f64) -> Option<&[f64]> {
        let (s, p) = self.powers.get_or_init(|| {
            (
                shape,
                self.grid
                    .iter()
                    .map(|&g| (g - self.start).powf(shape))
                    .collect(),
            )
        });
        (*s == shape).then_some(p.as_slice())
    }
}

impl ConditionalSurvivalModel for OracleModel {
    fn predict(&self, history: &[f64], horizon: f64) -> Result<Cow<'_, StepSurvival>> {
        let expected = self.dgp.history_width(self.k);
        if history.len() != expected {
            return Err(FitError::OracleHistory {
                got: history.len(),
                expected,
            }
            .into());
        }
        let law = self.dgp.window_law(self.k, self.role, history);
        let cut = self.grid.partition_point(|&g| g <= horizon);
        let mut times = Vec::with_capacity(cut + 1);
        let mut values = Vec::with_capacity(cut + 1);
        let mut prev = 1.0;
        let mut push = |t: f64, v: f64| {
            let v = v.min(prev);
            if v < prev {
                times.push(t);
                values.push(v);
                prev = v;
            }
        };
        match law {
            WindowLaw::Never => {}
            WindowLaw::Weibull {
                shape,
                scale,
                truncation,
            } => {
                let rate = scale.powf(-shape);
                let surv = |t: f64, pow: f64| {
                    if truncation.is_some_and(|c| t >= c) {
                        0.0
                    } else {
                        (-pow * rate).exp()
                    }
                };
                match self.powers(shape) {
                    Some(p) => {
                        for (&g, &pw) in self.grid[..cut].iter().zip(p) {
                            push(g, surv(g, pw));
                        }
                    }
                    None => {
                        for &g in &self.grid[..cut] {
                            push(g, surv(g, (g - self.start).powf(shape)));
                        }
                    }
                }
                if horizon > self.start
                    && cut < self.grid.len()
                    && (cut == 0 || self.grid[cut - 1] < horizon)
                {
                    push(horizon, surv(horizon, (horizon - self.start).powf(shape)));
                }
            }
        }
        Ok(Cow::Owned(StepSurvival::from_sorted_unchecked(
            self.start, times, values,
        )))
    }
}
