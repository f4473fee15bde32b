//! Euler solutions as limits of sampling solutions under refinement.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clf::IssEnvelope;
use crate::error::{Error, Result};
use crate::linalg::{distance, norm};
use crate::sampler::{sample_solve, ClosedLoop};
use crate::types::{make_partition, Partition, PartitionKind, Signal, Status, Trajectory};

/// Inputs of a refinement schedule.
#[derive(Clone, Debug)]
pub enum ScheduleInputs {
    /// The same `u` at every level.
    Single(Signal),
    /// Generalized Euler solutions: `u_r` per level with `|u_r| <= bound`.
    Generalized { bound: f64, sequence: Vec<Signal> },
}

#[derive(Clone, Debug)]
pub struct RefinementSchedule {
    partitions: Vec<Partition>,
    errors: Vec<Signal>,
    inputs: ScheduleInputs,
}

impl RefinementSchedule {
    /// Checks that upper diameters strictly decrease, that the noise ratios
    /// `sup(e_r) / lower_diameter(pi_r)` do not increase and end below where
    /// they start (or vanish), and that generalized inputs respect their bound.
    pub fn new(partitions: Vec<Partition>, errors: Vec<Signal>, inputs: ScheduleInputs) -> Result<Self> {
        if partitions.len() < 2 {
            return Err(Error::param("partitions", "need at least two refinement levels"));
        }
        if errors.len() != partitions.len() {
            return Err(Error::param("errors", "one observation error per level"));
        }
        if partitions.windows(2).any(|w| !(w[1].upper_diameter() < w[0].upper_diameter())) {
            return Err(Error::param("partitions", "upper diameters must strictly decrease"));
        }
        let ratios: Vec<f64> = partitions
            .iter()
            .zip(&errors)
            .map(|(p, e)| e.bound() / p.lower_diameter())
            .collect();
        let nonincreasing = ratios.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        let shrinking = ratios.iter().all(|r| *r == 0.0) || ratios.last() < ratios.first();
        if !nonincreasing || !shrinking {
            return Err(Error::param("errors", "sup(e_r) / lower_diameter must decrease to 0"));
        }
        if let ScheduleInputs::Generalized { bound, sequence } = &inputs {
            if sequence.len() != partitions.len() {
                return Err(Error::param("inputs", "one input per level"));
            }
            if sequence.iter().any(|u| u.bound() > *bound) {
                return Err(Error::param("inputs", "generalized inputs must satisfy |u_r| <= |u|"));
            }
        }
        Ok(Self {
            partitions,
            errors,
            inputs,
        })
    }

    /// Uniform partitions with steps `step0 * 2^-r`, `r = 0..levels`, and the
    /// observation error `noise(delta_r)` at level `r`.
    pub fn dyadic(
        step0: f64,
        levels: usize,
        horizon: f64,
        noise: impl Fn(f64) -> Signal,
        inputs: ScheduleInputs,
    ) -> Result<Self> {
        let steps: Vec<f64> = (0..levels).map(|r| step0 / 2f64.powi(r as i32)).collect();
        let partitions = steps
            .iter()
            .map(|s| make_partition(PartitionKind::Uniform { step: *s }, horizon))
            .collect::<Result<Vec<_>>>()?;
        let errors = steps.iter().map(|s| noise(*s)).collect();
        Self::new(partitions, errors, inputs)
    }

    pub fn levels(&self) -> usize {
        self.partitions.len()
    }

    pub fn partition(&self, r: usize) -> &Partition {
        &self.partitions[r]
    }

    pub fn error(&self, r: usize) -> &Signal {
        &self.errors[r]
    }

    pub fn input(&self, r: usize) -> &Signal {
        match &self.inputs {
            ScheduleInputs::Single(u) => u,
            ScheduleInputs::Generalized { sequence, .. } => &sequence[r],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EulerOptions {
    pub grid_points: usize,
    pub cauchy_ratio: f64,
    /// Number of trailing consecutive ratios that must stay below `cauchy_ratio`.
    pub sustained: usize,
}

impl Default for EulerOptions {
    fn default() -> Self {
        Self {
            grid_points: 4096,
            cauchy_ratio: 0.8,
            sustained: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub delta_bar: f64,
    pub delta_lower: f64,
    pub sup_e: f64,
    /// Sup-norm distance to the previous level on the shared grid.
    pub distance_to_prev: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerReport {
    pub levels: Vec<LevelReport>,
    /// The distance sequence is Cauchy by the configured ratio test.
    pub verdict: bool,
    pub worst_env_margin: Option<f64>,
}

impl EulerReport {
    pub fn distances(&self) -> Vec<f64> {
        self.levels.iter().filter_map(|l| l.distance_to_prev).collect()
    }

    /// `d_{r+1} / d_r` for consecutive distances.
    pub fn ratios(&self) -> Vec<f64> {
        self.distances().windows(2).map(|w| w[1] / w[0]).collect()
    }
}

#[derive(Clone, Debug)]
pub struct EulerStudy {
    pub report: EulerReport,
    pub trajectories: Vec<Trajectory>,
    pub horizon: f64,
}

impl EulerStudy {
    /// The finest sampling solution.
    pub fn limit(&self) -> &Trajectory {
        self.trajectories.last().unwrap()
    }

    /// Runs [`check_iss_euler`] on the limit candidate and stores its worst margin.
    pub fn check_envelope(&mut self, env: &IssEnvelope, x0: &[f64], n: f64) -> IssCheck {
        let check = check_iss_euler(self.limit(), env, x0, n);
        self.report.worst_env_margin = Some(check.worst_margin);
        check
    }
}

/// Runs every level (in parallel), then compares consecutive levels on
/// `grid_points` uniform times over `[0, horizon]`.
pub fn euler_study(
    lp: &ClosedLoop,
    schedule: &RefinementSchedule,
    x0: &[f64],
    horizon: f64,
    opts: &EulerOptions,
) -> Result<EulerStudy> {
    if (0..schedule.levels()).any(|r| schedule.partition(r).horizon() < horizon * (1.0 - 1e-12)) {
        return Err(Error::param("horizon", "every partition must cover the horizon"));
    }
    let runs: Vec<Result<Trajectory>> = (0..schedule.levels())
        .into_par_iter()
        .map(|r| sample_solve(lp, schedule.partition(r), x0, schedule.input(r), schedule.error(r)))
        .collect();
    let mut trajectories = Vec::with_capacity(runs.len());
    for (level, run) in runs.into_iter().enumerate() {
        let tr = run?;
        if let Status::BlowUp { t_bar } = tr.status() {
            return Err(Error::DivergentLevel { level, t_bar: *t_bar });
        }
        trajectories.push(tr);
    }
    let grids: Vec<Vec<Vec<f64>>> = trajectories
        .iter()
        .map(|t| t.resample(horizon, opts.grid_points))
        .collect();
    let levels: Vec<LevelReport> = (0..schedule.levels())
        .map(|r| {
            let p = schedule.partition(r);
            LevelReport {
                delta_bar: p.upper_diameter(),
                delta_lower: p.lower_diameter(),
                sup_e: schedule.error(r).bound(),
                distance_to_prev: (r > 0).then(|| sup_distance(&grids[r - 1], &grids[r])),
            }
        })
        .collect();
    let mut report = EulerReport {
        levels,
        verdict: false,
        worst_env_margin: None,
    };
    report.verdict = cauchy_verdict(&report.distances(), opts);
    Ok(EulerStudy {
        report,
        trajectories,
        horizon,
    })
}

fn sup_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| distance(x, y)).fold(0.0, f64::max)
}

fn cauchy_verdict(d: &[f64], opts: &EulerOptions) -> bool {
    if d.iter().all(|v| *v == 0.0) {
        return true;
    }
    if d.len() < opts.sustained + 1 {
        return false;
    }
    let tail = &d[d.len() - opts.sustained - 1..];
    tail.windows(2).all(|w| w[1] <= opts.cauchy_ratio * w[0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IssCheck {
    pub holds: bool,
    /// Smallest `beta(|x0|, t) + gamma(N) + eps - |x(t)|` over the dense record.
    pub worst_margin: f64,
    pub first_violation_t: Option<f64>,
}

/// Checks `|x(t)| <= beta(|x0|, t) + gamma(N) + eps` at every dense point.
pub fn check_iss_euler(limit: &Trajectory, env: &IssEnvelope, x0: &[f64], n: f64) -> IssCheck {
    let r0 = norm(x0);
    let mut worst = f64::INFINITY;
    let mut first = None;
    for k in 0..limit.dense_len() {
        let t = limit.dense_time(k);
        let margin = env.additive_bound(r0, n, t) - norm(limit.dense_state(k));
        if margin < 0.0 && first.is_none() {
            first = Some(t);
        }
        worst = worst.min(margin);
    }
    IssCheck {
        holds: first.is_none(),
        worst_margin: worst,
        first_violation_t: first,
    }
}
