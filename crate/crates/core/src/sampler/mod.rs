//! Sampling solutions: the feedback is evaluated at the noisy sample
//! `x_i + e(t_i)` and held on `[t_i, t_{i+1})` while the plant is integrated
//! with fixed-step RK4.

mod batch;
mod decrease;
mod gronwall;
mod guard;

use std::fmt;
use std::sync::Arc;

pub use batch::{run_batch, SimCase};
pub use decrease::{decrease_check, DecreaseReport, DecreaseTolerance, Violation};
pub use gronwall::{gronwall_gap, GapBound, GapRecord, GronwallReport};
pub use guard::{admissible, estimate_rate_guard, ProbeConfig, RateGuard, RawConstants};

use crate::error::{Error, Result};
use crate::feedback::Feedback;
use crate::linalg::norm;
use crate::types::{
    ControlAffineSystem, DomainExit, FullyNonlinearSystem, InputMatrix, Partition, Signal, Status, Trajectory,
    DEFAULT_ESCAPE_RADIUS,
};

type ScalarGain = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The right-hand side `F(x, p, u)` of a closed loop, where `p` is the held
/// feedback value and `u` the actuator disturbance.
#[derive(Clone)]
pub enum Plant {
    /// `F = f(x) + G(x)(p + u)`.
    Affine(ControlAffineSystem),
    /// `F = f(x, p + g(x) u)`; without a gain, `g = 1`.
    Nonlinear {
        sys: FullyNonlinearSystem,
        gain: Option<ScalarGain>,
    },
}

impl Plant {
    pub fn nonlinear(sys: FullyNonlinearSystem) -> Self {
        Plant::Nonlinear { sys, gain: None }
    }

    /// `F = f(x, p + g(x) u)` with the scalar matrix gain `g(x) I`.
    pub fn nonlinear_with_gain<G>(sys: FullyNonlinearSystem, gain: G) -> Self
    where
        G: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Plant::Nonlinear {
            sys,
            gain: Some(Arc::new(gain)),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Plant::Affine(s) => s.state_dim(),
            Plant::Nonlinear { sys, .. } => sys.state_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Plant::Affine(s) => s.input_dim(),
            Plant::Nonlinear { sys, .. } => sys.input_dim(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Plant::Affine(s) => s.name(),
            Plant::Nonlinear { sys, .. } => sys.name(),
        }
    }
}

impl fmt::Debug for Plant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Plant::Affine(s) => write!(f, "Affine({})", s.name()),
            Plant::Nonlinear { sys, gain } => {
                write!(f, "Nonlinear({}, gain: {})", sys.name(), gain.is_some())
            }
        }
    }
}

/// Scratch buffers for evaluating `F`.
struct Workspace {
    g: InputMatrix,
    v: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, m: usize) -> Self {
        Self {
            g: InputMatrix::zeros(n, m),
            v: vec![0.0; m],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainPolicy {
    /// Record the first exit, mark the run `LeftDomain`, keep integrating.
    Flag,
    /// Stop at the first exit.
    Stop,
}

/// Watches a boundary `{phi = 0}`: a sign change of `phi` between recorded
/// points or `|phi| < tol` counts as leaving the domain.
#[derive(Clone)]
pub struct DomainMonitor {
    indicator: ScalarGain,
    tol: f64,
    label: String,
    policy: DomainPolicy,
}

impl fmt::Debug for DomainMonitor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DomainMonitor")
            .field("label", &self.label)
            .field("tol", &self.tol)
            .field("policy", &self.policy)
            .finish()
    }
}

impl DomainMonitor {
    pub fn new<P>(label: impl Into<String>, tol: f64, policy: DomainPolicy, indicator: P) -> Self
    where
        P: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            indicator: Arc::new(indicator),
            tol,
            label: label.into(),
            policy,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn policy(&self) -> DomainPolicy {
        self.policy
    }

    fn crossed(&self, prev: f64, x: &[f64]) -> (bool, f64) {
        let phi = (self.indicator)(x);
        let sign_change = (prev > 0.0 && phi < 0.0) || (prev < 0.0 && phi > 0.0);
        (sign_change || phi.abs() < self.tol, phi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IntegratorConfig {
    pub substeps: usize,
    /// Keep every `record_every`-th substep in the dense record; sample
    /// points are always kept.
    pub record_every: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            substeps: 16,
            record_every: 1,
        }
    }
}

/// A plant closed with a feedback under sample-and-hold.
#[derive(Clone, Debug)]
pub struct ClosedLoop {
    plant: Plant,
    feedback: Feedback,
    config: IntegratorConfig,
    escape_radius: f64,
    monitor: Option<DomainMonitor>,
}

impl ClosedLoop {
    pub fn new(plant: Plant, feedback: Feedback) -> Result<Self> {
        if feedback.state_dim() != plant.state_dim() {
            return Err(Error::Dimension {
                what: "feedback state",
                expected: plant.state_dim(),
                got: feedback.state_dim(),
            });
        }
        if feedback.input_dim() != plant.input_dim() {
            return Err(Error::Dimension {
                what: "feedback value",
                expected: plant.input_dim(),
                got: feedback.input_dim(),
            });
        }
        Ok(Self {
            plant,
            feedback,
            config: IntegratorConfig::default(),
            escape_radius: DEFAULT_ESCAPE_RADIUS,
            monitor: None,
        })
    }

    pub fn with_substeps(mut self, substeps: usize) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::param("substeps", "must be at least 1"));
        }
        self.config.substeps = substeps;
        Ok(self)
    }

    pub fn with_record_every(mut self, every: usize) -> Result<Self> {
        if every == 0 {
            return Err(Error::param("record_every", "must be at least 1"));
        }
        self.config.record_every = every;
        Ok(self)
    }

    pub fn with_escape_radius(mut self, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::param("escape_radius", "must be positive"));
        }
        self.escape_radius = radius;
        Ok(self)
    }

    pub fn with_monitor(mut self, monitor: DomainMonitor) -> Self {
        self.monitor = Some(monitor);
        self
    }

    pub fn with_feedback(&self, feedback: Feedback) -> Result<Self> {
        let mut out = Self::new(self.plant.clone(), feedback)?;
        out.config = self.config;
        out.escape_radius = self.escape_radius;
        out.monitor = self.monitor.clone();
        Ok(out)
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    pub fn feedback(&self) -> &Feedback {
        &self.feedback
    }

    pub fn config(&self) -> IntegratorConfig {
        self.config
    }

    pub fn escape_radius(&self) -> f64 {
        self.escape_radius
    }

    pub fn monitor(&self) -> Option<&DomainMonitor> {
        self.monitor.as_ref()
    }

    pub fn state_dim(&self) -> usize {
        self.plant.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.plant.input_dim()
    }

    /// `F(x, p, u)`.
    pub fn rhs(&self, x: &[f64], p: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.state_dim()];
        let mut ws = Workspace::new(self.state_dim(), self.input_dim());
        self.rhs_into(x, p, u, &mut ws, &mut out);
        out
    }

    fn rhs_into(&self, x: &[f64], p: &[f64], u: &[f64], ws: &mut Workspace, out: &mut [f64]) {
        match &self.plant {
            Plant::Affine(sys) => {
                sys.drift_into(x, out);
                sys.input_matrix_into(x, &mut ws.g);
                for (v, (pj, uj)) in ws.v.iter_mut().zip(p.iter().zip(u)) {
                    *v = pj + uj;
                }
                ws.g.apply_add(&ws.v, out);
            }
            Plant::Nonlinear { sys, gain } => {
                let g = gain.as_ref().map_or(1.0, |g| g(x));
                for (v, (pj, uj)) in ws.v.iter_mut().zip(p.iter().zip(u)) {
                    *v = pj + g * uj;
                }
                sys.eval_into(x, &ws.v, out);
            }
        }
    }

    fn check_dims(&self, x0: &[f64], u: &Signal, e: &Signal) -> Result<()> {
        let (n, m) = (self.state_dim(), self.input_dim());
        if x0.len() != n {
            return Err(Error::Dimension {
                what: "initial state",
                expected: n,
                got: x0.len(),
            });
        }
        if u.dim() != m {
            return Err(Error::Dimension {
                what: "disturbance u",
                expected: m,
                got: u.dim(),
            });
        }
        if e.dim() != n {
            return Err(Error::Dimension {
                what: "observation error e",
                expected: n,
                got: e.dim(),
            });
        }
        Ok(())
    }
}

/// Outcome of one RK4 substep.
enum Step {
    Ok,
    Escaped,
    NonFinite,
}

/// Integrates `x' = F(x, p, u(t))` on `[t0, t1]` with held `p`, calling
/// `visit(t, x, substep)` after each substep.
struct IntervalIntegrator<'a> {
    lp: &'a ClosedLoop,
    ws: Workspace,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    ut: Vec<f64>,
}

impl<'a> IntervalIntegrator<'a> {
    fn new(lp: &'a ClosedLoop) -> Self {
        let (n, m) = (lp.state_dim(), lp.input_dim());
        Self {
            lp,
            ws: Workspace::new(n, m),
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
            ut: vec![0.0; m],
        }
    }

    /// The disturbance is read at times clamped into `[t0, t1)` so that a
    /// signal that is piecewise constant on the partition keeps its interval
    /// value at the right endpoint.
    fn f(&mut self, t: f64, t0: f64, t1: f64, x: &[f64], p: &[f64], u: &Signal, which: usize) {
        let tc = t.min(t1.next_down()).max(t0);
        u.eval_into(tc, &mut self.ut);
        let mut out = std::mem::take(&mut self.k[which]);
        self.lp.rhs_into(x, p, &self.ut, &mut self.ws, &mut out);
        self.k[which] = out;
    }

    fn step(&mut self, t: f64, h: f64, t0: f64, t1: f64, x: &mut [f64], p: &[f64], u: &Signal) -> Step {
        let r = self.lp.escape_radius;
        let mut escaped = false;
        self.f(t, t0, t1, x, p, u, 0);
        for (stage, (c, which)) in [(0.5, 1), (0.5, 2), (1.0, 3)].into_iter().enumerate() {
            for i in 0..x.len() {
                self.tmp[i] = x[i] + c * h * self.k[stage][i];
            }
            escaped |= !(norm(&self.tmp) <= r);
            let tmp = std::mem::take(&mut self.tmp);
            self.f(t + c * h, t0, t1, &tmp, p, u, which);
            self.tmp = tmp;
        }
        for i in 0..x.len() {
            x[i] += h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        let nx = norm(x);
        if !nx.is_finite() {
            if escaped {
                Step::Escaped
            } else {
                Step::NonFinite
            }
        } else if nx > r {
            Step::Escaped
        } else {
            Step::Ok
        }
    }
}

/// Runs `loop` from `x0` on partition `p` with actuator disturbance `u` and
/// observation error `e`.
///
/// Passing the escape radius ends the run with status `BlowUp { t_bar }`,
/// where `t_bar` is the end of the substep on which it happened. A
/// non-finite state without prior escape is a `NumericalFailure` error.
pub fn sample_solve(lp: &ClosedLoop, p: &Partition, x0: &[f64], u: &Signal, e: &Signal) -> Result<Trajectory> {
    lp.check_dims(x0, u, e)?;
    let n = lp.state_dim();
    let mut traj = Trajectory::start(p.clone(), x0, lp.input_dim());
    let mut integ = IntervalIntegrator::new(lp);
    let mut x = x0.to_vec();
    let mut noisy = vec![0.0; n];
    let mut e_t = vec![0.0; n];
    let mut phi = lp.monitor.as_ref().map(|m| (m.indicator)(x0));
    if let (Some(m), Some(ph)) = (&lp.monitor, phi) {
        if ph.abs() < m.tol {
            record_exit(&mut traj, m, 0.0, 0);
            if m.policy == DomainPolicy::Stop {
                return Ok(traj);
            }
        }
    }
    let times = p.times();
    let substeps = lp.config.substeps;
    let every = lp.config.record_every;
    for i in 0..p.intervals() {
        let (t0, t1) = (times[i], times[i + 1]);
        e.eval_into(t0, &mut e_t);
        for k in 0..n {
            noisy[k] = x[k] + e_t[k];
        }
        let held = lp.feedback.eval(&noisy)?;
        traj.held.extend_from_slice(&held);
        let h = (t1 - t0) / substeps as f64;
        for s in 0..substeps {
            let t = t0 + s as f64 * h;
            let t_end = if s + 1 == substeps { t1 } else { t + h };
            match integ.step(t, h, t0, t1, &mut x, &held, u) {
                Step::Ok => {}
                Step::Escaped => {
                    if x.iter().all(|c| c.is_finite()) {
                        traj.push_dense(t_end, &x, i);
                    }
                    traj.status = Status::BlowUp { t_bar: t_end };
                    return Ok(traj);
                }
                Step::NonFinite => return Err(Error::NumericalFailure { t: t_end }),
            }
            let last = s + 1 == substeps;
            if last {
                traj.push_dense(t1, &x, i + 1);
                traj.sample_states.extend_from_slice(&x);
            } else if (s + 1) % every == 0 {
                traj.push_dense(t_end, &x, i);
            }
            if let (Some(m), Some(prev)) = (&lp.monitor, phi) {
                let (hit, now) = m.crossed(prev, &x);
                phi = Some(now);
                if hit && traj.domain_exit.is_none() {
                    record_exit(&mut traj, m, t_end, i);
                    if m.policy == DomainPolicy::Stop {
                        if !last && (s + 1) % every != 0 {
                            traj.push_dense(t_end, &x, i);
                        }
                        return Ok(traj);
                    }
                }
            }
        }
    }
    Ok(traj)
}

fn record_exit(traj: &mut Trajectory, m: &DomainMonitor, t: f64, interval: usize) {
    traj.domain_exit = Some(DomainExit {
        t,
        interval,
        region: m.label.clone(),
    });
    traj.status = Status::LeftDomain {
        t,
        region: m.label.clone(),
    };
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::FeedbackKind;
    use crate::types::{make_partition, PartitionKind};

    fn hold_loop() -> ClosedLoop {
        let sys = ControlAffineSystem::new("x' = p", 1, 1, |_, f| f[0] = 0.0, |_, g| g[0] = 1.0).unwrap();
        let fb = Feedback::new(1, 1, FeedbackKind::Custom, "-x", |x| Ok(vec![-x[0]]));
        ClosedLoop::new(Plant::Affine(sys), fb).unwrap()
    }

    fn uniform(step: f64, horizon: f64) -> Partition {
        make_partition(PartitionKind::Uniform { step }, horizon).unwrap()
    }

    #[test]
    fn held_recursion_is_exact() {
        let lp = hold_loop();
        let tr = sample_solve(&lp, &uniform(0.5, 1.0), &[1.0], &Signal::zero(1), &Signal::zero(1)).unwrap();
        assert!((tr.sample_state(1)[0] - 0.5).abs() < 1e-14);
        assert!((tr.sample_state(2)[0] - 0.25).abs() < 1e-14);
        assert_eq!(tr.held_control(1), &[-0.5]);
        assert_eq!(tr.status(), &Status::Completed);
    }

    #[test]
    fn equilibrium_stays_put() {
        let lp = hold_loop();
        let tr = sample_solve(&lp, &uniform(0.1, 2.0), &[0.0], &Signal::zero(1), &Signal::zero(1)).unwrap();
        assert_eq!(tr.max_norm(), 0.0);
    }

    #[test]
    fn counterexample_blows_up() {
        let sys = FullyNonlinearSystem::new("blow", 1, 1, |x, u, f| f[0] = -x[0] + u[0] * u[0] * x[0] * x[0]).unwrap();
        let lp = ClosedLoop::new(Plant::nonlinear(sys), Feedback::zero(1, 1)).unwrap();
        let tr = sample_solve(&lp, &uniform(0.01, 1.0), &[4.0], &Signal::constant(vec![1.0]), &Signal::zero(1)).unwrap();
        match tr.status() {
            Status::BlowUp { t_bar } => assert!((t_bar - (4.0f64 / 3.0).ln()).abs() < 0.01, "{t_bar}"),
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let sys = ControlAffineSystem::new("x' = -x", 1, 1, |x, f| f[0] = -x[0], |_, g| g[0] = 0.0).unwrap();
        let lp = ClosedLoop::new(Plant::Affine(sys), Feedback::zero(1, 1)).unwrap();
        let err = |k: usize| {
            let l = lp.clone().with_substeps(k).unwrap();
            let tr = sample_solve(&l, &uniform(0.5, 0.5), &[1.0], &Signal::zero(1), &Signal::zero(1)).unwrap();
            (tr.final_state()[0] - (-0.5f64).exp()).abs()
        };
        let ratio = err(4) / err(8);
        assert!(ratio > 14.0 && ratio < 18.0, "{ratio}");
    }

    #[test]
    fn observation_error_enters_sample() {
        let lp = hold_loop();
        let e = Signal::constant(vec![0.1]);
        let tr = sample_solve(&lp, &uniform(0.5, 0.5), &[1.0], &Signal::zero(1), &e).unwrap();
        assert_eq!(tr.held_control(0), &[-1.1]);
    }

    #[test]
    fn monitor_flags_and_stops() {
        let lp = hold_loop();
        // phi = x - 0.5 changes sign once x drops below 0.5
        let flag = lp.clone().with_monitor(DomainMonitor::new("x=0.5", 1e-12, DomainPolicy::Flag, |x| x[0] - 0.5));
        let tr = sample_solve(&flag, &uniform(0.25, 2.0), &[1.0], &Signal::zero(1), &Signal::zero(1)).unwrap();
        assert!(matches!(tr.status(), Status::LeftDomain { .. }));
        assert!((tr.final_time() - 2.0).abs() < 1e-12);
        let stop = lp.with_monitor(DomainMonitor::new("x=0.5", 1e-12, DomainPolicy::Stop, |x| x[0] - 0.5));
        let tr = sample_solve(&stop, &uniform(0.25, 2.0), &[1.0], &Signal::zero(1), &Signal::zero(1)).unwrap();
        assert!(tr.final_time() < 2.0);
        let exit = tr.domain_exit().unwrap();
        assert!(exit.t <= 0.75 + 1e-12 && exit.t > 0.25);
    }

    #[test]
    fn dimension_mismatch() {
        let lp = hold_loop();
        assert!(sample_solve(&lp, &uniform(0.5, 1.0), &[1.0, 2.0], &Signal::zero(1), &Signal::zero(1)).is_err());
        assert!(sample_solve(&lp, &uniform(0.5, 1.0), &[1.0], &Signal::zero(2), &Signal::zero(1)).is_err());
    }
}
