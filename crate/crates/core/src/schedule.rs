//! Step-size rules `α_t`, indexed from `t = 1`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleKind {
    Fixed { alpha: f64 },
    /// `α_t = c / t`.
    Diminishing { c: f64 },
    /// Linear warm-up `0 → peak` on `[0, t_peak]`, then linear decay to 0 at `horizon`.
    Cyclic { peak: f64, t_peak: u64, horizon: u64 },
    /// `α_t` is the rate of the last break point `t_break ≤ t`.
    Piecewise { breaks: Vec<(u64, f64)> },
}

/// Serialized flat: `{"kind": "fixed", "alpha": 0.01, "cap": 1.0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    #[serde(flatten)]
    pub kind: ScheduleKind,
    /// Upper cap applied after the rule (e.g. `1/β`).
    #[serde(default)]
    pub cap: Option<f64>,
}

impl ScheduleSpec {
    pub fn fixed(alpha: f64) -> Self {
        ScheduleSpec { kind: ScheduleKind::Fixed { alpha }, cap: None }
    }

    pub fn diminishing(c: f64) -> Self {
        ScheduleSpec { kind: ScheduleKind::Diminishing { c }, cap: None }
    }

    /// `α_t = 1/(βt)`, the largest rate the non-convex stability bound allows.
    pub fn diminishing_for_beta(beta: f64) -> Self {
        Self::diminishing(1.0 / beta)
    }

    pub fn cyclic(peak: f64, t_peak: u64, horizon: u64) -> Self {
        ScheduleSpec { kind: ScheduleKind::Cyclic { peak, t_peak, horizon }, cap: None }
    }

    pub fn piecewise(breaks: Vec<(u64, f64)>) -> Self {
        ScheduleSpec { kind: ScheduleKind::Piecewise { breaks }, cap: None }
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = Some(cap);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ScheduleKind::Fixed { alpha } => ensure!(*alpha >= 0.0, "step size must be >= 0"),
            ScheduleKind::Diminishing { c } => ensure!(*c >= 0.0, "c must be >= 0"),
            ScheduleKind::Cyclic { peak, t_peak, horizon } => {
                ensure!(*peak >= 0.0, "peak must be >= 0");
                ensure!(*t_peak >= 1 && t_peak < horizon, "cyclic needs 1 <= t_peak < horizon");
            }
            ScheduleKind::Piecewise { breaks } => {
                ensure!(!breaks.is_empty() && breaks[0].0 == 1, "piecewise schedule must start at t = 1");
                ensure!(breaks.windows(2).all(|w| w[0].0 < w[1].0), "break points must increase");
                ensure!(breaks.iter().all(|b| b.1 >= 0.0), "step sizes must be >= 0");
            }
        }
        if let Some(c) = self.cap {
            ensure!(c >= 0.0, "cap must be >= 0");
        }
        Ok(())
    }

    /// `α_t` for `t ≥ 1`.
    pub fn alpha(&self, t: u64) -> Result<f64> {
        ensure!(t >= 1, "step index starts at 1");
        let a = match &self.kind {
            ScheduleKind::Fixed { alpha } => *alpha,
            ScheduleKind::Diminishing { c } => c / t as f64,
            ScheduleKind::Cyclic { peak, t_peak, horizon } => {
                ensure!(t <= *horizon, "t = {t} is past the cyclic horizon {horizon}");
                if t <= *t_peak {
                    peak * t as f64 / *t_peak as f64
                } else {
                    peak * (horizon - t) as f64 / (horizon - t_peak) as f64
                }
            }
            ScheduleKind::Piecewise { breaks } => {
                let k = breaks.partition_point(|b| b.0 <= t);
                breaks[k.max(1) - 1].1
            }
        };
        Ok(match self.cap {
            Some(c) => a.min(c),
            None => a,
        })
    }

    /// `[α_1, …, α_T]`.
    pub fn alphas(&self, steps: u64) -> Result<Vec<f64>> {
        self.validate()?;
        (1..=steps).map(|t| self.alpha(t)).collect()
    }
}
