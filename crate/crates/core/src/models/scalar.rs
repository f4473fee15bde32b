use crate::clf::Clf;
use crate::feedback::{Feedback, FeedbackKind};
use crate::linalg::sgn;
use crate::sampler::{ClosedLoop, Plant};
use crate::types::ControlAffineSystem;

/// `x' = u` on `R`.
pub fn scalar_integrator() -> ControlAffineSystem {
    ControlAffineSystem::new("x' = u", 1, 1, |_, f| f[0] = 0.0, |_, g| g[0] = 1.0).expect("valid plant")
}

/// `x' = -x + u` on `R`.
pub fn linear_system() -> ControlAffineSystem {
    ControlAffineSystem::new("x' = -x + u", 1, 1, |x, f| f[0] = -x[0], |_, g| g[0] = 1.0).expect("valid plant")
}

/// `V = |x|`, `zeta = sgn`, `alpha(s) = s`.
pub fn scalar_abs_clf() -> Clf {
    Clf::builder("|x|", 1, |x: &[f64]| x[0].abs())
        .zeta("sgn", |x| vec![sgn(x[0])])
        .alpha(|s| s)
        .build()
        .expect("valid clf")
}

/// `V = x^2`, `zeta = 2x`, `alpha(s) = s / 2`.
pub fn scalar_square_clf() -> Clf {
    Clf::builder("x^2", 1, |x: &[f64]| x[0] * x[0])
        .zeta("gradient", |x| vec![2.0 * x[0]])
        .alpha(|s| 0.5 * s)
        .build()
        .expect("valid clf")
}

/// `x' = p` under the feedback `K(x) = -x`; the sampled recursion is
/// `x_{i+1} = (1 - (t_{i+1} - t_i)) x_i`.
pub fn hold_loop() -> ClosedLoop {
    let fb = Feedback::new(1, 1, FeedbackKind::Custom, "K(x) = -x", |x| Ok(vec![-x[0]]));
    ClosedLoop::new(Plant::Affine(scalar_integrator()), fb).expect("dimensions agree")
}

/// `x' = -x + p + u` under the zero feedback: `x(t) = exp(-t) x0` when `u = 0`.
pub fn contraction_loop() -> ClosedLoop {
    ClosedLoop::new(Plant::Affine(linear_system()), Feedback::zero(1, 1)).expect("dimensions agree")
}
