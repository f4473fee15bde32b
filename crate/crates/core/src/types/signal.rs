use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::norm;

type Eval = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// Number of grid points used to verify the declared bound at construction.
pub const BOUND_CHECK_POINTS: usize = 1024;

/// Time signal `t -> R^k` with a declared sup-norm bound `N`.
///
/// Used both for actuator disturbances (`k = m`) and observation errors
/// (`k = n`). The bound is verified on a uniform grid over `[0, horizon]`.
#[derive(Clone)]
pub struct Signal {
    dim: usize,
    bound: f64,
    eval: Eval,
    label: String,
}

impl fmt::Debug for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Signal")
            .field("dim", &self.dim)
            .field("bound", &self.bound)
            .field("label", &self.label)
            .finish()
    }
}

impl Signal {
    pub fn new<F>(dim: usize, bound: f64, horizon: f64, label: impl Into<String>, eval: F) -> Result<Self>
    where
        F: Fn(f64, &mut [f64]) + Send + Sync + 'static,
    {
        Self::with_grid(dim, bound, horizon, BOUND_CHECK_POINTS, label, eval)
    }

    pub fn with_grid<F>(
        dim: usize,
        bound: f64,
        horizon: f64,
        grid_points: usize,
        label: impl Into<String>,
        eval: F,
    ) -> Result<Self>
    where
        F: Fn(f64, &mut [f64]) + Send + Sync + 'static,
    {
        if !(bound >= 0.0) {
            return Err(Error::param("bound", "must be nonnegative"));
        }
        if grid_points < 2 {
            return Err(Error::param("grid_points", "need at least two"));
        }
        let s = Self {
            dim,
            bound,
            eval: Arc::new(eval),
            label: label.into(),
        };
        let mut buf = vec![0.0; dim];
        let slack = bound * 1e-12;
        for k in 0..grid_points {
            let t = horizon * k as f64 / (grid_points - 1) as f64;
            s.eval_into(t, &mut buf);
            let nv = norm(&buf);
            if !(nv <= bound + slack) {
                return Err(Error::SignalBound { t, norm: nv, bound });
            }
        }
        Ok(s)
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            bound: 0.0,
            eval: Arc::new(|_, out: &mut [f64]| out.fill(0.0)),
            label: "zero".into(),
        }
    }

    pub fn constant(value: Vec<f64>) -> Self {
        let bound = norm(&value);
        let dim = value.len();
        Self {
            dim,
            bound,
            eval: Arc::new(move |_, out: &mut [f64]| out.copy_from_slice(&value)),
            label: "constant".into(),
        }
    }

    /// Right-continuous step signal: `values[k]` on `[breaks[k], breaks[k+1])`,
    /// and the last value from the last break onwards.
    pub fn piecewise_constant(breaks: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if breaks.is_empty() || breaks.len() != values.len() {
            return Err(Error::param("values", "need one value per break"));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::param("values", "inconsistent dimensions"));
        }
        let bound = values.iter().map(|v| norm(v)).fold(0.0, f64::max);
        let values = Arc::new(values);
        let breaks = Arc::new(breaks);
        Ok(Self {
            dim,
            bound,
            eval: Arc::new(move |t, out: &mut [f64]| {
                let k = match breaks.binary_search_by(|b| b.total_cmp(&t)) {
                    Ok(i) => i,
                    Err(i) => i.saturating_sub(1),
                };
                out.copy_from_slice(&values[k]);
            }),
            label: "piecewise-constant".into(),
        })
    }

    /// `amplitude * sin(omega t + phase)` componentwise with a common phase.
    pub fn sinusoid(amplitude: Vec<f64>, omega: f64, phase: f64) -> Self {
        let bound = norm(&amplitude);
        let dim = amplitude.len();
        Self {
            dim,
            bound,
            eval: Arc::new(move |t, out: &mut [f64]| {
                let s = (omega * t + phase).sin();
                for (o, a) in out.iter_mut().zip(&amplitude) {
                    *o = a * s;
                }
            }),
            label: "sinusoid".into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Declared sup-norm bound (the `N` of `M^k_N`, or `sup(e)` for noise).
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.eval)(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        (self.eval)(t, out);
    }

    /// Grid supremum of `|eval(t)|` over `[0, horizon]`.
    pub fn grid_sup(&self, horizon: f64, points: usize) -> f64 {
        let mut buf = vec![0.0; self.dim];
        (0..points.max(2))
            .map(|k| {
                self.eval_into(horizon * k as f64 / (points.max(2) - 1) as f64, &mut buf);
                norm(&buf)
            })
            .fold(0.0, f64::max)
    }
}
