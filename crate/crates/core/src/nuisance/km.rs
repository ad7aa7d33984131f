use std::borrow::Cow;

use super::{ConditionalSurvivalModel, Role, WindowData};
use crate::error::Result;
use crate::stepfn::StepSurvival;

/// Weighted product-limit estimate from `(time, flag, weight)` triples, starting at `start`.
///
/// At each distinct flagged time `s` the curve is multiplied by `1 - d(s) / r(s)` where `d` is the
/// flagged weight at `s` and `r` the weight with time `>= s`. Between unflagged exits the product
/// telescopes, so it is evaluated as `S(c) · r(s+) / r(c+)` from the last unflagged exit `c`; without
/// unflagged exits the curve is exactly the surviving fraction.
pub fn kaplan_meier(start: f64, obs: &[(f64, bool, f64)]) -> StepSurvival {
    let mut sorted: Vec<(f64, bool, f64)> = obs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut at_risk: f64 = sorted.iter().map(|o| o.2).sum();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let (mut base_surv, mut base_risk) = (1.0, at_risk);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let mut d = 0.0;
        let mut leaving = 0.0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                d += sorted[i].2;
            }
            leaving += sorted[i].2;
            i += 1;
        }
        let mut surv = base_surv * (at_risk / base_risk);
        if d > 0.0 && at_risk > 0.0 {
            surv = (base_surv * ((at_risk - d) / base_risk)).max(0.0);
            times.push(t);
            values.push(surv);
        }
        at_risk -= leaving;
        if leaving > d && at_risk > 0.0 {
            base_surv = surv;
            base_risk = at_risk;
        }
    }
    StepSurvival::from_sorted_unchecked(start, times, values)
}

/// Covariate-free curve for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct KaplanMeier {
    curve: StepSurvival,
}

impl KaplanMeier {
    pub fn fit(data: &WindowData, role: Role) -> Result<Self> {
        let obs: Vec<_> = data
            .rows
            .iter()
            .map(|r| (r.x, r.flag(role), r.weight))
            .collect();
        Ok(Self {
            curve: kaplan_meier(data.start, &obs),
        })
    }

    pub fn curve(&self) -> &StepSurvival {
        &self.curve
    }
}

impl ConditionalSurvivalModel for KaplanMeier {
    fn predict(&self, _history: &[f64], _horizon: f64) -> Result<Cow<'_, StepSurvival>> {
        Ok(Cow::Borrowed(&self.curve))
    }
}
