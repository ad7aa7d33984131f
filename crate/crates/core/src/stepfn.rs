//! Right-continuous, nonincreasing step survival curves on a window `[t_k, ...)`.
//!
//! A curve is stored as its jump list. Every integral against a curve is therefore a finite sum
//! over jumps and is computed exactly.

use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StepSurvival {
    start: f64,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepSurvival {
    /// Builds a curve equal to 1 on `[start, times[0])` and to `values[i]` on
    /// `[times[i], times[i+1])`.
    pub fn new(start: f64, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if !start.is_finite() {
            return Err(Error::Step(format!("window start {start} is not finite")));
        }
        if times.len() != values.len() {
            return Err(Error::Step(format!(
                "{} jump times but {} values",
                times.len(),
                values.len()
            )));
        }
        let mut prev_t = start;
        let mut prev_v = 1.0;
        for (&t, &v) in times.iter().zip(&values) {
            if !t.is_finite() || t <= prev_t {
                return Err(Error::Step(format!(
                    "jump time {t} does not exceed {prev_t}"
                )));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Step(format!("value {v} at t={t} outside [0, 1]")));
            }
            if v > prev_v {
                return Err(Error::Step(format!(
                    "value increases from {prev_v} to {v} at t={t}"
                )));
            }
            prev_t = t;
            prev_v = v;
        }
        Ok(Self {
            start,
            times,
            values,
        })
    }

    /// Like [`StepSurvival::new`] but accepts unsorted points and merges points sharing an
    /// identical time, keeping the smallest value.
    pub fn from_points(start: f64, mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut times: Vec<f64> = Vec::with_capacity(points.len());
        let mut values: Vec<f64> = Vec::with_capacity(points.len());
        for (t, v) in points {
            if times.last() == Some(&t) {
                let last = values.last_mut().expect("parallel vectors");
                *last = last.min(v);
            } else {
                times.push(t);
                values.push(v);
            }
        }
        Self::new(start, times, values)
    }

    /// The curve identically equal to one.
    pub fn unit(start: f64) -> Self {
        Self {
            start,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Trusted constructor for hot paths whose inputs are nonincreasing by construction.
    pub(crate) fn from_sorted_unchecked(start: f64, times: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert!(Self::new(start, times.clone(), values.clone()).is_ok());
        Self {
            start,
            times,
            values,
        }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_unit(&self) -> bool {
        self.values.iter().all(|&v| v == 1.0)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < self.start {
            return Err(Error::Domain {
                t,
                start: self.start,
            });
        }
        Ok(self.at(t))
    }

    pub fn left_limit(&self, t: f64) -> Result<f64> {
        if t <= self.start {
            return Err(Error::Domain {
                t,
                start: self.start,
            });
        }
        Ok(self.before(t))
    }

    /// `eval` without the domain check; times before the window start read as 1.
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            1.0
        } else {
            self.values[idx - 1]
        }
    }

    /// `left_limit` without the domain check.
    #[inline]
    pub fn before(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&s| s < t);
        if idx == 0 {
            1.0
        } else {
            self.values[idx - 1]
        }
    }

    /// Jumps `(s, S(s-), S(s))` with `a < s <= b`, in increasing time.
    pub fn jumps_in(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let lo = self.times.partition_point(|&s| s <= a);
        let hi = self.times.partition_point(|&s| s <= b);
        (lo..hi).map(move |i| {
            let pre = if i == 0 { 1.0 } else { self.values[i - 1] };
            (self.times[i], pre, self.values[i])
        })
    }

    /// `Σ_{a < s <= b} f(s, S(s-), S(s)) · (S(s) - S(s-))`, the Riemann–Stieltjes integral of
    /// `f` against the curve over `(a, b]`.
    pub fn stieltjes_sum<F>(&self, a: f64, b: f64, mut f: F) -> Result<f64>
    where
        F: FnMut(f64, f64, f64) -> f64,
    {
        if a < self.start {
            return Err(Error::Domain {
                t: a,
                start: self.start,
            });
        }
        if b < a {
            return Err(Error::Domain { t: b, start: a });
        }
        Ok(self
            .jumps_in(a, b)
            .map(|(s, pre, post)| f(s, pre, post) * (post - pre))
            .sum())
    }

    /// Writes `(time, value)` pairs, starting with `(start, 1)`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "time,value")?;
        writeln!(out, "{},1", self.start)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(out, "{t},{v}")?;
        }
        Ok(())
    }
}
