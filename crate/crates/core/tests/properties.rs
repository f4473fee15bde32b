//! Property tests for the types, comparison functions, feedbacks and models.

use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sampled_iss::clf::{build_envelope, estimate_alpha_tables, j_factor, AlphaTables, Clf, TableOptions};
use sampled_iss::feedback::{combined_feedback, k2, synthesize_k1, decay_tol};
use sampled_iss::linalg::{dot, norm, random_in_ball, sgn};
use sampled_iss::models::*;
use sampled_iss::types::{make_partition, PartitionKind, Signal};

fn vec3(r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, 3)
}

fn tables_for(clf: &Clf) -> AlphaTables {
    estimate_alpha_tables(
        clf,
        &TableOptions {
            radius_max: 4.0,
            ..TableOptions::default()
        },
    )
    .unwrap()
}

fn newclf_tables() -> &'static AlphaTables {
    static T: OnceLock<AlphaTables> = OnceLock::new();
    T.get_or_init(|| tables_for(&clf_newclf()))
}

fn tilde_tables() -> &'static AlphaTables {
    static T: OnceLock<AlphaTables> = OnceLock::new();
    T.get_or_init(|| tables_for(&clf_tilde()))
}

fn certificate() -> &'static WeakIssCertificate {
    static C: OnceLock<WeakIssCertificate> = OnceLock::new();
    C.get_or_init(|| {
        build_weak_iss_certificate(
            &counterexample_system(),
            &counterexample_clf(),
            &sampled_iss::feedback::Feedback::zero(1, 1),
            6,
            &CertificateOptions::default(),
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partitions_are_valid(step in 1e-3..0.5f64, jf in 0.0..0.9f64, seed in any::<u64>(), horizon in 0.5..5.0f64) {
        for kind in [
            PartitionKind::Uniform { step },
            PartitionKind::RandomizedJitter { step, jitter_fraction: jf, seed },
        ] {
            let p = make_partition(kind, horizon).unwrap();
            let t = p.times();
            prop_assert_eq!(t[0], 0.0);
            prop_assert!(t.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(p.lower_diameter() > 0.0);
            prop_assert!(p.lower_diameter() <= p.upper_diameter());
            // the last point covers the horizon and overshoots by less than a step
            prop_assert!(p.horizon() >= horizon * (1.0 - 1e-12));
            prop_assert!(p.horizon() < horizon + p.upper_diameter());
        }
    }

    #[test]
    fn signal_rejects_understated_bound(a in 0.1..10.0f64, omega in 0.5..20.0f64, slack in 0.05..0.5f64) {
        // the 1024-point grid over [0, 10] gets within 0.2 rad of a peak
        let s = Signal::new(1, a * (1.0 - slack), 10.0, "sin", move |t, out| out[0] = a * (omega * t).sin());
        prop_assert!(s.is_err());
        let s = Signal::sinusoid(vec![a], omega, 0.0);
        prop_assert!(s.grid_sup(10.0, 1000) <= s.bound() * (1.0 + 1e-15));
    }

    #[test]
    fn sgn_identity(s in -1e6..1e6f64) {
        prop_assert_eq!(sgn(s) * s, s.abs());
        prop_assert_eq!(sgn(0.0), 0.0);
    }

    #[test]
    fn j_factor_strictly_decreasing(t in 0.0..1e4f64, dt in 1e-3..10.0f64) {
        prop_assert_eq!(j_factor(0.0), 1.0);
        prop_assert!(j_factor(t + dt) < j_factor(t));
    }

    #[test]
    fn tables_monotone_and_normalized(which in 0..2usize) {
        let t = if which == 0 { newclf_tables() } else { tilde_tables() };
        let (g, u, o) = (t.grid(), t.underline_values(), t.overline_values());
        prop_assert_eq!(g[0], 0.0);
        prop_assert_eq!(u[0], 0.0);
        prop_assert_eq!(o[0], 0.0);
        prop_assert!(u.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(o.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(g.iter().zip(u).all(|(s, a)| *a <= *s));
    }

    #[test]
    fn table_round_trip(frac in 0.0..1.0f64, which in 0..2usize) {
        let t = if which == 0 { newclf_tables() } else { tilde_tables() };
        let top = t.underline(t.s_max());
        let y = frac * top;
        let (s, saturated) = t.underline_inv(y);
        prop_assert!(!saturated);
        prop_assert!((t.underline(s) - y).abs() <= 2.0 * t.grid_tol() + 1e-12);
    }

    #[test]
    fn sampled_level_bounds(x in vec3(2.0), which in 0..2usize) {
        let (t, clf) = if which == 0 { (newclf_tables(), clf_newclf()) } else { (tilde_tables(), clf_tilde()) };
        let v = clf.value(&x);
        let r = norm(&x);
        prop_assume!(t.in_range(v));
        prop_assert!(t.underline(v) <= r + t.grid_tol());
        prop_assert!(t.overline(v) >= r - t.grid_tol());
    }

    #[test]
    fn envelope_monotone(m in 0.0..3.0f64, n in 0.0..1.0f64, t in 0.0..50.0f64, dm in 0.0..1.0f64, dn in 0.0..0.5f64, dt in 0.0..10.0f64) {
        let env = build_envelope(newclf_tables().clone(), 0.1, None).unwrap();
        let b = env.bound(m, n, t);
        prop_assert!(env.bound(m, n, t + dt) <= b);
        prop_assert!(env.bound(m + dm, n, t) >= b);
        prop_assert!(env.bound(m, n + dn, t) >= b);
        prop_assert!(env.beta(m + dm, t) >= env.beta(m, t));
        prop_assert!(env.beta(m, t + dt) <= env.beta(m, t));
        prop_assert!(env.gamma(n + dn) >= env.gamma(n));
        prop_assert_eq!(env.gamma(0.0), 0.0);
    }

    #[test]
    fn k2_bounded_by_sqrt_m_v(x in vec3(5.0), which in 0..2usize) {
        let sys = integrator_system();
        let clf = if which == 0 { clf_newclf() } else { clf_tilde() };
        let k = k2(&sys, &clf, &x);
        prop_assert!(norm(&k) <= 2f64.sqrt() * clf.value(&x) * (1.0 + 1e-15));
    }

    #[test]
    fn combined_is_k1_plus_k2(x in vec3(5.0), which in 0..2usize) {
        let sys = integrator_system();
        let clf = if which == 0 { clf_newclf() } else { clf_tilde() };
        let a = synthesize_k1(&sys, &clf, &x).unwrap();
        let b = k2(&sys, &clf, &x);
        let c = combined_feedback(&sys, &clf).eval(&x).unwrap();
        prop_assert_eq!(c, vec![a[0] + b[0], a[1] + b[1]]);
    }

    #[test]
    fn b_norm_bounds(x in vec3(10.0)) {
        prop_assume!(norm(&x) > 0.0);
        let b = integrator_b(&x);
        let bb = b[0] * b[0] + b[1] * b[1];
        let r = region_radius(&x);
        prop_assert!(bb >= 1.0 - 1e-12 && bb <= r * r + 1.0 + 1e-12);
    }

    #[test]
    fn tilde_decomposition(x in vec3(10.0)) {
        let r = region_radius(&x);
        let smooth = x[0] * x[0] + x[1] * x[1] + 2.0 * x[2] * x[2];
        let concave = -2.0 * r * x[2].abs();
        let v = clf_tilde().value(&x);
        prop_assert!((v - (smooth + concave)).abs() <= 1e-12 * smooth.max(1.0));
    }

    #[test]
    fn weak_iss_decay_beyond_alpha4(s in 0.0..1.0f64, xf in 0.0..1.0f64, uf in -1.0..1.0f64, sign in prop::bool::ANY) {
        let cert = certificate();
        let lo = cert.alpha4(s);
        prop_assume!(lo < cert.valid_radius() - 1e-9);
        let r = lo + xf * (cert.valid_radius() - lo);
        prop_assume!(r > lo);
        let x = [if sign { r } else { -r }];
        let u = uf * s;
        let sys = counterexample_system();
        let clf = counterexample_clf();
        let v = clf.value(&x);
        let lhs = dot(&clf.zeta(&x), &sys.eval(&x, &[cert.g_matrix(&x) * u]));
        prop_assert!(lhs <= -v / 2.0 + decay_tol(v), "x {r}, u {u}, lhs {lhs}");
    }
}

#[test]
fn decay_on_annulus() {
    let sys = integrator_system();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for clf in [clf_newclf(), clf_tilde()] {
        for _ in 0..1000 {
            let x = sampled_iss::linalg::random_in_shell(&mut rng, 3, 0.1, 10.0);
            let u = synthesize_k1(&sys, &clf, &x).unwrap();
            let v = clf.value(&x);
            assert!(dot(&clf.zeta(&x), &sys.eval(&x, &u)) <= -v + decay_tol(v), "{x:?}");
        }
    }
}

#[test]
fn regions_partition_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut counts = [0usize; 3];
    for _ in 0..100_000 {
        let x = random_in_ball(&mut rng, 3, 10.0);
        let r = region_radius(&x);
        let a = x[2].abs();
        let so = r == 0.0 && a > 0.0;
        let plus = r > 0.0 && a >= 2.0 * r;
        let minus = r > 0.0 && a < 2.0 * r;
        assert_eq!([so, plus, minus].iter().filter(|b| **b).count(), 1, "{x:?}");
        let tag = classify_region(&x);
        let expect = if so {
            IntegratorRegion::SO
        } else if plus {
            IntegratorRegion::SPlus
        } else {
            IntegratorRegion::SMinus
        };
        assert_eq!(tag, expect, "{x:?}");
        counts[[so, plus, minus].iter().position(|b| *b).unwrap()] += 1;
    }
    assert!(counts[1] > 0 && counts[2] > 0);
    assert_eq!(classify_region(&[0.0, 0.0, 0.0]), IntegratorRegion::Origin);
}

#[test]
fn feedbacks_and_gradients_vanish_at_origin() {
    let sys = integrator_system();
    for clf in [clf_newclf(), clf_tilde()] {
        assert_eq!(clf.zeta(&[0.0; 3]), vec![0.0; 3]);
        assert_eq!(combined_feedback(&sys, &clf).eval(&[0.0; 3]).unwrap(), vec![0.0; 2]);
    }
    assert_eq!(integrator_explicit_feedback().eval(&[0.0; 3]).unwrap(), vec![0.0; 2]);
}

#[test]
fn certificate_interleaves() {
    let c = certificate();
    for i in 0..c.i_max {
        assert!(0.0 < c.r_prime_seq[i] && c.r_prime_seq[i] < c.r_seq[i]);
        if i + 1 < c.i_max {
            assert!(c.r_seq[i + 1] < c.r_prime_seq[i]);
        }
    }
}
