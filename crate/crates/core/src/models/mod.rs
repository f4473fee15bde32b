//! Concrete systems: scalar test plants, the nonholonomic integrator and the
//! fully nonlinear counterexample with its weak-ISS certificate.

mod counterexample;
mod integrator;
mod scalar;

pub use counterexample::{
    build_weak_iss_certificate, counterexample_clf, counterexample_system, estimate_d, raw_counterexample_loop,
    weak_iss_loop, Band, BandKind, CertificateOptions, WeakIssCertificate,
};
pub use integrator::{
    cart_to_integrator, classify_region, clf_newclf, clf_tilde, integrator_b, integrator_explicit_feedback,
    integrator_explicit_k1, integrator_explicit_k1_feedback, integrator_explicit_k2, integrator_k1_k2, integrator_system, newclf_monitor, region_radius, CartState,
    IntegratorRegion,
};
pub use scalar::{contraction_loop, hold_loop, linear_system, scalar_abs_clf, scalar_integrator, scalar_square_clf};
