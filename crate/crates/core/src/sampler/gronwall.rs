use serde::{Deserialize, Serialize};

use super::{ClosedLoop, IntervalIntegrator, Step};
use crate::error::{Error, Result};
use crate::linalg::{distance, norm};
use crate::types::{Partition, Signal};

/// Lipschitz constant `L` of `F` in `x` and the step bound `delta` entering
/// `|e(t_i)| exp(L delta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapBound {
    pub lipschitz: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub interval: usize,
    pub e_norm: f64,
    /// Largest `|x(t) - x~(t)|` over the substep points of the interval.
    pub gap: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    pub intervals: Vec<GapRecord>,
    /// Largest `gap / bound` over intervals with a nonzero bound.
    pub max_ratio: f64,
    pub blow_up: bool,
}

/// On every interval, integrates both `x` from `x_i` and `x~` from
/// `x_i + e(t_i)` under the same held control `K(x_i + e(t_i))` and compares
/// their separation with `|e(t_i)| exp(L delta)`. The run continues along `x`.
pub fn gronwall_gap(
    lp: &ClosedLoop,
    p: &Partition,
    x0: &[f64],
    u: &Signal,
    e: &Signal,
    bound: GapBound,
) -> Result<GronwallReport> {
    lp.check_dims(x0, u, e)?;
    let n = lp.state_dim();
    let mut a = IntervalIntegrator::new(lp);
    let mut b = IntervalIntegrator::new(lp);
    let mut x = x0.to_vec();
    let mut e_t = vec![0.0; n];
    let mut records = Vec::with_capacity(p.intervals());
    let mut max_ratio = 0.0f64;
    let times = p.times();
    let k = lp.config().substeps;
    for i in 0..p.intervals() {
        let (t0, t1) = (times[i], times[i + 1]);
        e.eval_into(t0, &mut e_t);
        let mut xt: Vec<f64> = x.iter().zip(&e_t).map(|(a, b)| a + b).collect();
        let held = lp.feedback().eval(&xt)?;
        let h = (t1 - t0) / k as f64;
        let e_norm = norm(&e_t);
        let mut gap = e_norm;
        for s in 0..k {
            let t = t0 + s as f64 * h;
            let sa = a.step(t, h, t0, t1, &mut x, &held, u);
            let sb = b.step(t, h, t0, t1, &mut xt, &held, u);
            match (sa, sb) {
                (Step::Ok, Step::Ok) => gap = gap.max(distance(&x, &xt)),
                (Step::NonFinite, _) | (_, Step::NonFinite) => return Err(Error::NumericalFailure { t: t + h }),
                _ => {
                    return Ok(GronwallReport {
                        intervals: records,
                        max_ratio,
                        blow_up: true,
                    })
                }
            }
        }
        let bnd = e_norm * (bound.lipschitz * bound.delta).exp();
        if bnd > 0.0 {
            max_ratio = max_ratio.max(gap / bnd);
        }
        records.push(GapRecord {
            interval: i,
            e_norm,
            gap,
            bound: bnd,
        });
    }
    Ok(GronwallReport {
        intervals: records,
        max_ratio,
        blow_up: false,
    })
}
