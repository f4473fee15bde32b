//! Verification campaigns: many admissible `(x0, u, e, partition)` cases run
//! against the ISS envelope.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clf::{Clf, IssEnvelope};
use crate::error::{Error, Result};
use crate::linalg::{norm, random_direction, random_in_ball, scale};
use crate::sampler::{
    admissible, decrease_check, sample_solve, ClosedLoop, DecreaseTolerance, RateGuard,
};
use crate::types::{make_partition, Partition, PartitionKind, Signal, Status, Trajectory};

#[derive(Clone, Debug)]
pub struct Case {
    pub id: usize,
    pub x0: Vec<f64>,
    pub u: Signal,
    pub e: Signal,
    pub partition: Partition,
    /// Deliberately violates the guard; simulated but not asserted.
    pub inadmissible_by_design: bool,
}

/// Optional per-step decrease assertions attached to a campaign.
#[derive(Clone, Debug)]
pub struct DecreaseSpec {
    pub clf: Clf,
    pub s_level: f64,
    pub tol: DecreaseTolerance,
}

#[derive(Clone, Debug)]
pub struct Campaign {
    pub lp: ClosedLoop,
    pub envelope: IssEnvelope,
    pub guard: RateGuard,
    pub m: f64,
    pub n: f64,
    pub cases: Vec<Case>,
    pub decrease: Option<DecreaseSpec>,
}

impl Campaign {
    /// Checks `|x0| <= M`, `sup|u| <= N`, and admissibility of every case not
    /// tagged as inadmissible by design.
    pub fn new(lp: ClosedLoop, envelope: IssEnvelope, guard: RateGuard, m: f64, n: f64, cases: Vec<Case>) -> Result<Self> {
        for c in &cases {
            if norm(&c.x0) > m * (1.0 + 1e-12) {
                return Err(Error::param("cases", format!("case {}: |x0| exceeds M", c.id)));
            }
            if c.u.bound() > n * (1.0 + 1e-12) {
                return Err(Error::param("cases", format!("case {}: sup|u| exceeds N", c.id)));
            }
            if !c.inadmissible_by_design && !admissible(&guard, &c.partition, &c.e) {
                return Err(Error::param("cases", format!("case {} is not admissible", c.id)));
            }
        }
        Ok(Self {
            lp,
            envelope,
            guard,
            m,
            n,
            cases,
            decrease: None,
        })
    }

    pub fn with_decrease(mut self, spec: DecreaseSpec) -> Self {
        self.decrease = Some(spec);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub id: usize,
    /// `None` for cases that are inadmissible by design.
    pub pass: Option<bool>,
    /// Smallest `beta(|x0|, t) + gamma(N) + eps - |x(t)|`; `None` if the
    /// simulation failed.
    pub worst_margin: Option<f64>,
    /// Smallest `max(beta(M, t) + gamma(N), eps) - |x(t)|`.
    pub worst_max_margin: Option<f64>,
    pub first_violation_t: Option<f64>,
    pub status: String,
    pub tag: Option<String>,
    pub decrease_violations: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub total: usize,
    pub asserted: usize,
    pub passed: usize,
    pub failed: usize,
    pub inadmissible: usize,
    /// Over asserted cases that produced a trajectory.
    pub worst_margin: Option<f64>,
    pub worst_max_margin: Option<f64>,
    pub all_pass: bool,
    pub delta: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub cases: Vec<CaseReport>,
    pub summary: CampaignSummary,
}

fn status_label(s: &Status) -> String {
    match s {
        Status::Completed => "completed".into(),
        Status::BlowUp { t_bar } => format!("blow_up(t_bar={t_bar})"),
        Status::LeftDomain { t, region } => format!("left_domain({region}, t={t})"),
    }
}

/// Pointwise margins of a trajectory against both forms of the bound.
fn margins(env: &IssEnvelope, m: f64, n: f64, x0: &[f64], tr: &Trajectory) -> (f64, f64, Option<f64>) {
    let r0 = norm(x0);
    let (mut add, mut max) = (f64::INFINITY, f64::INFINITY);
    let mut first = None;
    for k in 0..tr.dense_len() {
        let t = tr.dense_time(k);
        let x = norm(tr.dense_state(k));
        let a = env.additive_bound(r0, n, t) - x;
        let b = env.bound(m, n, t) - x;
        if (a < 0.0 || b < 0.0) && first.is_none() {
            first = Some(t);
        }
        add = add.min(a);
        max = max.min(b);
    }
    (add, max, first)
}

fn run_case(c: &Campaign, case: &Case) -> CaseReport {
    let tag = case.inadmissible_by_design.then(|| "inadmissible-by-design".to_string());
    match sample_solve(&c.lp, &case.partition, &case.x0, &case.u, &case.e) {
        Ok(tr) => {
            let (add, max, first) = margins(&c.envelope, c.m, c.n, &case.x0, &tr);
            let decrease = c.decrease.as_ref().map(|d| {
                decrease_check(&tr, &d.clf, Some(&c.guard), d.s_level, d.tol)
                    .violations
                    .len()
            });
            let blew_up = tr.status().is_blow_up();
            let pass = (!case.inadmissible_by_design)
                .then(|| first.is_none() && !blew_up && decrease.unwrap_or(0) == 0);
            CaseReport {
                id: case.id,
                pass,
                worst_margin: Some(add),
                worst_max_margin: Some(max),
                first_violation_t: first,
                status: status_label(tr.status()),
                tag,
                decrease_violations: decrease,
            }
        }
        Err(e) => CaseReport {
            id: case.id,
            pass: (!case.inadmissible_by_design).then_some(false),
            worst_margin: None,
            worst_max_margin: None,
            first_violation_t: Some(0.0),
            status: format!("error: {e}"),
            tag,
            decrease_violations: None,
        },
    }
}

/// Runs all cases in parallel; the report lists them in case order.
pub fn run_campaign(c: &Campaign) -> CampaignReport {
    let cases: Vec<CaseReport> = c.cases.par_iter().map(|case| run_case(c, case)).collect();
    let asserted: Vec<&CaseReport> = cases.iter().filter(|r| r.pass.is_some()).collect();
    let passed = asserted.iter().filter(|r| r.pass == Some(true)).count();
    let fold = |f: fn(&CaseReport) -> Option<f64>| asserted.iter().filter_map(|r| f(r)).reduce(f64::min);
    let summary = CampaignSummary {
        total: cases.len(),
        asserted: asserted.len(),
        passed,
        failed: asserted.len() - passed,
        inadmissible: cases.len() - asserted.len(),
        worst_margin: fold(|r| r.worst_margin),
        worst_max_margin: fold(|r| r.worst_max_margin),
        all_pass: passed == asserted.len(),
        delta: c.guard.delta,
        kappa: c.guard.kappa,
    };
    CampaignReport { cases, summary }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceFamily {
    /// Constant on each partition interval, values on the `N`-sphere.
    PiecewiseSphere,
    /// A single constant of norm `N`.
    Constant,
    /// `N sin(omega t_i + phase) d` held on each interval.
    SampledSinusoid,
}

/// Random admissible cases for a guard.
#[derive(Clone, Debug)]
pub struct CaseGenerator {
    pub state_dim: usize,
    pub input_dim: usize,
    pub m: f64,
    pub n: f64,
    pub horizon: f64,
    /// Fraction of `delta` used as the largest partition gap.
    pub step_fraction: f64,
    pub jitter_fraction: f64,
    pub families: Vec<DisturbanceFamily>,
    /// Fraction of the admissible noise level `kappa * lower_diameter` used.
    pub noise_fraction: f64,
    /// Use this partition for every case instead of drawing one below `delta`.
    pub partition: Option<PartitionKind>,
}

impl CaseGenerator {
    pub fn new(state_dim: usize, input_dim: usize, m: f64, n: f64, horizon: f64) -> Self {
        Self {
            state_dim,
            input_dim,
            m,
            n,
            horizon,
            step_fraction: 0.9,
            jitter_fraction: 0.2,
            families: vec![
                DisturbanceFamily::PiecewiseSphere,
                DisturbanceFamily::Constant,
                DisturbanceFamily::SampledSinusoid,
            ],
            noise_fraction: 0.99,
            partition: None,
        }
    }

    fn partition(&self, guard: &RateGuard, rng: &mut ChaCha8Rng) -> Result<Partition> {
        if let Some(kind) = self.partition {
            return make_partition(kind, self.horizon);
        }
        let top = self.step_fraction * guard.delta;
        if rng.random_bool(0.5) {
            let step = top * rng.random_range(0.5..=1.0);
            make_partition(PartitionKind::Uniform { step }, self.horizon)
        } else {
            let jf = self.jitter_fraction;
            let step = top / (1.0 + jf);
            make_partition(
                PartitionKind::RandomizedJitter {
                    step,
                    jitter_fraction: jf,
                    seed: rng.random(),
                },
                self.horizon,
            )
        }
    }

    fn disturbance(&self, family: DisturbanceFamily, p: &Partition, rng: &mut ChaCha8Rng) -> Result<Signal> {
        let m = self.input_dim;
        if self.n == 0.0 {
            return Ok(Signal::zero(m));
        }
        let breaks = p.times().to_vec();
        match family {
            DisturbanceFamily::Constant => Ok(Signal::constant(scale(&random_direction(rng, m), self.n))),
            DisturbanceFamily::PiecewiseSphere => {
                let values = breaks.iter().map(|_| scale(&random_direction(rng, m), self.n)).collect();
                Signal::piecewise_constant(breaks, values)
            }
            DisturbanceFamily::SampledSinusoid => {
                let d = scale(&random_direction(rng, m), self.n);
                let omega = rng.random_range(0.5..10.0);
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                let values = breaks.iter().map(|t| scale(&d, (omega * t + phase).sin())).collect();
                Signal::piecewise_constant(breaks, values)
            }
        }
    }

    fn noise(&self, guard: &RateGuard, p: &Partition, rng: &mut ChaCha8Rng) -> Result<Signal> {
        let level = self.noise_fraction * guard.kappa * p.lower_diameter();
        if level == 0.0 {
            return Ok(Signal::zero(self.state_dim));
        }
        let breaks = p.times().to_vec();
        let values = breaks
            .iter()
            .map(|_| random_in_ball(rng, self.state_dim, level))
            .collect();
        let mut e = Signal::piecewise_constant(breaks, values)?;
        // the declared bound is the admissible level, not the realized maximum
        if e.bound() > level {
            return Err(Error::param("noise", "generated noise exceeds its level"));
        }
        e = Signal::new(self.state_dim, level, self.horizon, "observation noise", {
            let e = e.clone();
            move |t, out| e.eval_into(t, out)
        })?;
        Ok(e)
    }

    /// One case; `x0` is on the sphere `|x0| = M` with probability 1/2 and
    /// uniform in the ball otherwise.
    pub fn case(&self, id: usize, guard: &RateGuard, rng: &mut ChaCha8Rng) -> Result<Case> {
        let partition = self.partition(guard, rng)?;
        let x0 = if rng.random_bool(0.5) {
            scale(&random_direction(rng, self.state_dim), self.m)
        } else {
            random_in_ball(rng, self.state_dim, self.m)
        };
        let family = self.families[id % self.families.len()];
        let u = self.disturbance(family, &partition, rng)?;
        let e = self.noise(guard, &partition, rng)?;
        Ok(Case {
            id,
            x0,
            u,
            e,
            partition,
            inadmissible_by_design: false,
        })
    }

    pub fn generate(&self, count: usize, guard: &RateGuard, seed: u64) -> Result<Vec<Case>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|id| self.case(id, guard, &mut rng)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdversarialResult {
    /// Largest `|x(t)| - max(beta(M, t) + gamma(N), eps)` found; a blow-up
    /// counts as `escape_radius - bound`. Negative means no violation.
    pub margin: f64,
    pub worst_x0: Vec<f64>,
    pub worst_family: DisturbanceFamily,
    pub worst_t: f64,
    pub worst_status: String,
    pub evaluations: usize,
}

/// Random search over admissible cases from `generator` for the largest
/// envelope violation.
pub fn adversarial_search(c: &Campaign, generator: &CaseGenerator, budget: usize, seed: u64) -> Result<AdversarialResult> {
    if budget == 0 {
        return Err(Error::param("budget", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cases = (0..budget)
        .map(|id| generator.case(id, &c.guard, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let results: Vec<(f64, f64, String)> = cases
        .par_iter()
        .map(|case| match sample_solve(&c.lp, &case.partition, &case.x0, &case.u, &case.e) {
            Ok(tr) => {
                let mut worst = (f64::NEG_INFINITY, 0.0);
                for k in 0..tr.dense_len() {
                    let t = tr.dense_time(k);
                    let v = norm(tr.dense_state(k)) - c.envelope.bound(c.m, c.n, t);
                    if v > worst.0 {
                        worst = (v, t);
                    }
                }
                if let Status::BlowUp { t_bar } = tr.status() {
                    let v = c.lp.escape_radius() - c.envelope.bound(c.m, c.n, *t_bar);
                    if v > worst.0 {
                        worst = (v, *t_bar);
                    }
                }
                (worst.0, worst.1, status_label(tr.status()))
            }
            Err(e) => (f64::INFINITY, 0.0, format!("error: {e}")),
        })
        .collect();
    let (best, _) = results
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, r)| if r.0 > acc.1 { (i, r.0) } else { acc });
    let case = &cases[best];
    Ok(AdversarialResult {
        margin: results[best].0,
        worst_x0: case.x0.clone(),
        worst_family: generator.families[case.id % generator.families.len()],
        worst_t: results[best].1,
        worst_status: results[best].2.clone(),
        evaluations: budget,
    })
}
