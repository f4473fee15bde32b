use serde::{Deserialize, Serialize};

use super::RateGuard;
use crate::clf::Clf;
use crate::types::{Status, Trajectory};

/// `check_tol = absolute + relative * V(x_i)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecreaseTolerance {
    pub absolute: f64,
    pub relative: f64,
}

impl DecreaseTolerance {
    pub fn absolute(tol: f64) -> Self {
        Self {
            absolute: tol,
            relative: 0.0,
        }
    }

    pub fn relative(tol: f64) -> Self {
        Self {
            absolute: 0.0,
            relative: tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub interval: usize,
    /// `V(x_{i+1}) - V(x_i)`.
    pub lhs: f64,
    /// `-(t_{i+1} - t_i) V(x_i) / 16 + check_tol`.
    pub rhs: f64,
    /// `rhs - lhs`; negative.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecreaseReport {
    /// The partition is not below the guard's `delta`; nothing was asserted.
    pub inadmissible: bool,
    pub checked: usize,
    /// Pairs starting inside `{V <= s_level}`.
    pub inside_level: usize,
    /// Pairs at or after the first domain exit.
    pub outside_domain: usize,
    pub worst_margin: f64,
    pub violations: Vec<Violation>,
}

/// Checks `V(x_{i+1}) - V(x_i) <= -(t_{i+1} - t_i) V(x_i) / 16 + check_tol`
/// for every sample pair with `V(x_i) > s_level`.
///
/// With a guard whose `delta` the partition does not respect, the report is
/// tagged inadmissible and no pair is checked. Samples from the first domain
/// exit on are excluded.
pub fn decrease_check(
    traj: &Trajectory,
    clf: &Clf,
    guard: Option<&RateGuard>,
    s_level: f64,
    tol: DecreaseTolerance,
) -> DecreaseReport {
    let mut rep = DecreaseReport {
        inadmissible: false,
        checked: 0,
        inside_level: 0,
        outside_domain: 0,
        worst_margin: f64::INFINITY,
        violations: Vec::new(),
    };
    if let Some(g) = guard {
        if !(traj.partition().upper_diameter() < g.delta) {
            rep.inadmissible = true;
            return rep;
        }
    }
    let exit = match traj.status() {
        Status::LeftDomain { .. } => traj.domain_exit().map(|d| d.interval),
        _ => traj.domain_exit().map(|d| d.interval),
    };
    let pairs = traj.sample_count().saturating_sub(1);
    for i in 0..pairs {
        if exit.is_some_and(|k| i >= k) {
            rep.outside_domain += 1;
            continue;
        }
        let vi = clf.value(traj.sample_state(i));
        if vi <= s_level {
            rep.inside_level += 1;
            continue;
        }
        let vn = clf.value(traj.sample_state(i + 1));
        let dt = traj.sample_time(i + 1) - traj.sample_time(i);
        let lhs = vn - vi;
        let rhs = -dt * vi / 16.0 + tol.absolute + tol.relative * vi;
        let margin = rhs - lhs;
        rep.checked += 1;
        rep.worst_margin = rep.worst_margin.min(margin);
        if margin < 0.0 {
            rep.violations.push(Violation {
                interval: i,
                lhs,
                rhs,
                margin,
            });
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::combined_feedback;
    use crate::linalg::sgn;
    use crate::sampler::{sample_solve, ClosedLoop, Plant};
    use crate::types::{make_partition, ControlAffineSystem, PartitionKind, Signal};

    fn setup() -> (ClosedLoop, Clf) {
        let sys = ControlAffineSystem::new("x' = u", 1, 1, |_, f| f[0] = 0.0, |_, g| g[0] = 1.0).unwrap();
        let clf = Clf::builder("|x|", 1, |x: &[f64]| x[0].abs())
            .zeta("sgn", |x| vec![sgn(x[0])])
            .alpha(|s| s)
            .build()
            .unwrap();
        let fb = combined_feedback(&sys, &clf);
        (ClosedLoop::new(Plant::Affine(sys), fb).unwrap(), clf)
    }

    #[test]
    fn scalar_loop_decreases() {
        let (lp, clf) = setup();
        let p = make_partition(PartitionKind::Uniform { step: 0.01 }, 3.0).unwrap();
        let tr = sample_solve(&lp, &p, &[1.5], &Signal::zero(1), &Signal::zero(1)).unwrap();
        let r = decrease_check(&tr, &clf, None, 1e-6, DecreaseTolerance::absolute(1e-6));
        assert!(r.violations.is_empty());
        assert!(r.checked > 100);
    }

    #[test]
    fn equilibrium_is_vacuous() {
        let (lp, clf) = setup();
        let p = make_partition(PartitionKind::Uniform { step: 0.1 }, 1.0).unwrap();
        let tr = sample_solve(&lp, &p, &[0.0], &Signal::zero(1), &Signal::zero(1)).unwrap();
        let r = decrease_check(&tr, &clf, None, 0.0, DecreaseTolerance::absolute(1e-6));
        assert_eq!(r.checked, 0);
        assert_eq!(r.inside_level, 10);
    }

    #[test]
    fn coarse_partition_is_flagged() {
        let (lp, clf) = setup();
        let p = make_partition(PartitionKind::Uniform { step: 0.5 }, 1.0).unwrap();
        let tr = sample_solve(&lp, &p, &[1.0], &Signal::zero(1), &Signal::zero(1)).unwrap();
        let g = RateGuard::manual(0.1, 1.0);
        let r = decrease_check(&tr, &clf, Some(&g), 0.0, DecreaseTolerance::absolute(1e-6));
        assert!(r.inadmissible);
        assert_eq!(r.checked, 0);
    }

    #[test]
    fn violation_json_shape() {
        let v = Violation {
            interval: 3,
            lhs: 0.1,
            rhs: 0.0,
            margin: -0.1,
        };
        let j = serde_json::to_string(&vec![v]).unwrap();
        assert_eq!(j, r#"[{"interval":3,"lhs":0.1,"rhs":0.0,"margin":-0.1}]"#);
    }
}
