use serde::{Deserialize, Serialize};

use crate::clf::{Clf, Domain};
use crate::feedback::{Feedback, FeedbackKind};
use crate::linalg::sgn;
use crate::sampler::{DomainMonitor, DomainPolicy};
use crate::types::ControlAffineSystem;

/// `x1' = u1, x2' = u2, x3' = x1 u2 - x2 u1`.
pub fn integrator_system() -> ControlAffineSystem {
    ControlAffineSystem::new(
        "nonholonomic integrator",
        3,
        2,
        |_, f| f.fill(0.0),
        |x, g| {
            g.copy_from_slice(&[1.0, 0.0, -x[1], 0.0, 1.0, x[0]]);
        },
    )
    .expect("integrator is well formed")
}

/// `r(x) = sqrt(x1^2 + x2^2)`.
pub fn region_radius(x: &[f64]) -> f64 {
    x[0].hypot(x[1])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntegratorRegion {
    Origin,
    /// `r = 0`, `x3 != 0`.
    SO,
    /// `x3^2 >= 4 r^2 > 0`.
    SPlus,
    /// `x3^2 < 4 r^2`.
    SMinus,
}

pub fn classify_region(x: &[f64]) -> IntegratorRegion {
    let r = region_radius(x);
    let r2 = 4.0 * (x[0] * x[0] + x[1] * x[1]);
    let x3s = x[2] * x[2];
    if r == 0.0 {
        if x[2] == 0.0 {
            IntegratorRegion::Origin
        } else {
            IntegratorRegion::SO
        }
    } else if x3s >= r2 {
        IntegratorRegion::SPlus
    } else {
        IntegratorRegion::SMinus
    }
}

/// Cart pose `(x1, x2, theta)` with drive and steering commands `(v1, v2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartState {
    pub x1: f64,
    pub x2: f64,
    pub theta: f64,
}

/// Coordinate change from the cart to the integrator: returns `(z, u)` with
/// `z = (theta, x1 cos + x2 sin, x1 sin - x2 cos)`, `u = (v2, v1 - v2 z3)`.
pub fn cart_to_integrator(state: CartState, v: [f64; 2]) -> ([f64; 3], [f64; 2]) {
    let (s, c) = state.theta.sin_cos();
    let z3 = state.x1 * s - state.x2 * c;
    let z = [state.theta, state.x1 * c + state.x2 * s, z3];
    (z, [v[1], v[0] - v[1] * z3])
}

/// `V(x) = max(r, |x3| - r)`, semiconcave off the cone `x3^2 = 4 r^2`.
fn newclf_value(x: &[f64]) -> f64 {
    let r = region_radius(x);
    r.max(x[2].abs() - r)
}

fn newclf_zeta(x: &[f64]) -> Vec<f64> {
    let r = region_radius(x);
    match classify_region(x) {
        IntegratorRegion::Origin => vec![0.0; 3],
        IntegratorRegion::SO => vec![0.0, -1.0, sgn(x[2])],
        IntegratorRegion::SPlus => vec![-x[0] / r, -x[1] / r, sgn(x[2])],
        IntegratorRegion::SMinus => vec![x[0] / r, x[1] / r, 0.0],
    }
}

/// `b(x) = G(x)^T zeta(x)` for the selection of [`clf_newclf`], written out casewise.
pub fn integrator_b(x: &[f64]) -> [f64; 2] {
    let r = region_radius(x);
    let s = sgn(x[2]);
    match classify_region(x) {
        IntegratorRegion::Origin => [0.0, 0.0],
        IntegratorRegion::SO => [0.0, -1.0],
        IntegratorRegion::SPlus => [-x[1] * s - x[0] / r, x[0] * s - x[1] / r],
        IntegratorRegion::SMinus => [x[0] / r, x[1] / r],
    }
}

/// The max-type CLF with `alpha(s) = s` and the boundary of `S-` as the edge
/// of its semiconcavity domain.
pub fn clf_newclf() -> Clf {
    Clf::builder("max(r, |x3| - r)", 3, newclf_value)
        .zeta("casewise gradient; (0, -1, sgn x3) on S_o", newclf_zeta)
        .alpha(|s| s)
        .domain(Domain::Boundary {
            indicator: std::sync::Arc::new(cone_indicator),
            label: "bd(S-)".into(),
        })
        .build()
        .expect("newclf is well formed")
}

fn cone_indicator(x: &[f64]) -> f64 {
    x[2] * x[2] - 4.0 * (x[0] * x[0] + x[1] * x[1])
}

/// Flags runs that touch the cone `x3^2 = 4 r^2` (within `1e-9` or by a sign change).
pub fn newclf_monitor() -> DomainMonitor {
    DomainMonitor::new("bd(S-)", 1e-9, DomainPolicy::Flag, cone_indicator)
}

/// Closed-form `K1` for the max-type CLF.
pub fn integrator_explicit_k1(x: &[f64]) -> [f64; 2] {
    let r = region_radius(x);
    match classify_region(x) {
        IntegratorRegion::Origin => [0.0, 0.0],
        IntegratorRegion::SO => [0.0, x[2].abs()],
        IntegratorRegion::SPlus => {
            let mu1 = (r - x[2].abs()) / (r * r + 1.0);
            let s = sgn(x[2]);
            [mu1 * (-x[1] * s - x[0] / r), mu1 * (x[0] * s - x[1] / r)]
        }
        IntegratorRegion::SMinus => [-x[0], -x[1]],
    }
}

fn mu2(a: f64, b: f64, x: &[f64]) -> f64 {
    let r = region_radius(x);
    (x[2].abs() - r) * sgn(b * r * sgn(x[2]) - a)
}

/// Closed-form `K2` for the max-type CLF.
pub fn integrator_explicit_k2(x: &[f64]) -> [f64; 2] {
    let r = region_radius(x);
    match classify_region(x) {
        IntegratorRegion::Origin => [0.0, 0.0],
        IntegratorRegion::SO => [0.0, x[2].abs()],
        IntegratorRegion::SPlus => [-mu2(x[0], -x[1], x), -mu2(x[1], x[0], x)],
        IntegratorRegion::SMinus => [-r * sgn(x[0]), -r * sgn(x[1])],
    }
}

pub fn integrator_k1_k2(x: &[f64]) -> ([f64; 2], [f64; 2]) {
    (integrator_explicit_k1(x), integrator_explicit_k2(x))
}

/// The closed-form `K1 + K2` as an explicit feedback.
pub fn integrator_explicit_feedback() -> Feedback {
    Feedback::new(3, 2, FeedbackKind::ExplicitClosedForm, "closed-form K1 + K2 (max-type CLF)", |x| {
        Ok(integrator_k1_k2_sum(x).to_vec())
    })
}

fn integrator_k1_k2_sum(x: &[f64]) -> [f64; 2] {
    let (a, b) = integrator_k1_k2(x);
    [a[0] + b[0], a[1] + b[1]]
}

pub fn integrator_explicit_k1_feedback() -> Feedback {
    Feedback::new(3, 2, FeedbackKind::ExplicitClosedForm, "closed-form K1 (max-type CLF)", |x| {
        Ok(integrator_explicit_k1(x).to_vec())
    })
}

/// `V~(x) = (r - |x3|)^2 + x3^2`, semiconcave on `R^3 \ {0}`, with
/// `alpha(s) = max(s, 1/2)`.
///
/// On `{x3 = 0, r > 0}` the gradient is the limit from `x3 > 0`; on the
/// `x3` axis it is the limit along `(x1, x2) = t (1, 0)`, `t -> 0+`.
pub fn clf_tilde() -> Clf {
    Clf::builder("(r - |x3|)^2 + x3^2", 3, |x: &[f64]| {
        let r = region_radius(x);
        (r - x[2].abs()).powi(2) + x[2] * x[2]
    })
    .zeta("gradient; one-sided limits from x3 > 0 and along (1, 0) at r = 0", |x| {
        let r = region_radius(x);
        let a = x[2].abs();
        if r == 0.0 {
            // (x1, x2)/r -> (1, 0)
            return vec![-2.0 * a, 0.0, 4.0 * x[2]];
        }
        let c = 1.0 - a / r;
        let s = if x[2] == 0.0 { 1.0 } else { sgn(x[2]) };
        vec![2.0 * x[0] * c, 2.0 * x[1] * c, -2.0 * r * s + 4.0 * x[2]]
    })
    .alpha(|s| s.max(0.5))
    .build()
    .expect("tilde CLF is well formed")
}
