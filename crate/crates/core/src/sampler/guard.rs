use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClosedLoop, Plant};
use crate::clf::{check_semiconcavity, AlphaTables, Clf, SemiconcavityVerdict};
use crate::error::{Error, Result};
use crate::linalg::{distance, norm, random_direction, random_in_shell};
use crate::types::{Partition, Signal};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Difference-quotient pairs per Lipschitz estimate.
    pub pairs: usize,
    /// Inflation applied to the sampled estimates (Lipschitz constants and
    /// suprema up, minima down).
    pub safety: f64,
    pub seed: u64,
    /// Largest separation of a difference-quotient pair, relative to the
    /// outer radius of the probe region.
    pub pair_scale: f64,
    /// Margin below the bound in the search for `eps_tilde`.
    pub delta_factor: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            pairs: 10_000,
            safety: 1.25,
            seed: 0,
            pair_scale: 1e-2,
            delta_factor: 0.99,
        }
    }
}

/// The sampled constants before inflation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawConstants {
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub l_eps: f64,
    pub l_f: f64,
    pub l_g: f64,
    pub sup_k: f64,
}

/// Sampling-rate guard: partitions with upper diameter below `delta` and
/// observation errors with `sup(e) <= kappa * lower_diameter` are admissible
/// for the estimate with parameters `(epsilon, M, N)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateGuard {
    pub delta: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub m: f64,
    pub n: f64,
    /// Outer radius of the probe region `Q`.
    pub region_radius: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub l_eps: f64,
    pub l_f: f64,
    pub l_g: f64,
    /// `L = L_f + R L_G`.
    pub l: f64,
    /// `R = N + sup |K|`.
    pub r: f64,
    pub eps_tilde: f64,
    pub raw: RawConstants,
    /// Largest midpoint ratio of `V` seen on the probe region; diagnostic only.
    pub semiconcavity_estimate: Option<f64>,
}

/// Estimates the guard constants by sampling.
///
/// The probe region is `Q^eta = {eta <= |x| <= overline(underline_inv(N + M)) + 1}`.
/// `lambda_minus` is the minimum of `V` on `Q^{eps/2}`, `lambda_plus` the
/// maximum on `Q^eps`; the Lipschitz constants of `V`, `f` and `G` come from
/// difference quotients of close pairs in `Q^eps`, and `sup |K|` is sampled on
/// `Q^{eps/2}`. Then
///
/// - `eps_tilde` is the largest value in `(0, eps]` with
///   `overline(p + L_eps eps_tilde / 4) <= overline(p) + eps / 8` at every
///   tabulated level `p <= lambda_plus`;
/// - `delta = delta_factor * eps_tilde / (16 + 17 lambda_plus)`;
/// - `kappa = min(lambda_minus, eps) / (16 L_eps (exp(L delta) + 1))`.
///
/// For a nonlinear plant `F = f(x, p + g u)` the constant `L_f` is the
/// Lipschitz constant of `x -> f(x, p)` sampled over `|p| <= R` and `L_G = 0`.
pub fn estimate_rate_guard(
    lp: &ClosedLoop,
    clf: &Clf,
    tables: &AlphaTables,
    epsilon: f64,
    m: f64,
    n: f64,
    cfg: &ProbeConfig,
) -> Result<RateGuard> {
    if !(epsilon > 0.0) || m < 0.0 || n < 0.0 {
        return Err(Error::param("epsilon, M, N", "need eps > 0 and M, N >= 0"));
    }
    if cfg.pairs == 0 || !(cfg.safety >= 1.0) {
        return Err(Error::param("probe", "need pairs >= 1 and safety >= 1"));
    }
    let dim = lp.state_dim();
    let (inv, _) = tables.underline_inv(n + m);
    let outer = tables.overline(inv) + 1.0;
    if epsilon >= outer {
        return Err(Error::EmptyProbeRegion(format!(
            "epsilon {epsilon} is not below the region radius {outer}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples = cfg.pairs;
    let in_half = |rng: &mut ChaCha8Rng| random_in_shell(rng, dim, 0.5 * epsilon, outer);
    let in_full = |rng: &mut ChaCha8Rng| random_in_shell(rng, dim, epsilon, outer);

    let mut lambda_minus = f64::INFINITY;
    let mut sup_k = 0.0f64;
    for _ in 0..samples {
        let x = in_half(&mut rng);
        lambda_minus = lambda_minus.min(clf.value(&x));
        sup_k = sup_k.max(norm(&lp.feedback().eval(&x)?));
    }
    // The minimum of V on Q^{eps/2} sits on its inner sphere for a proper V.
    for _ in 0..samples {
        let d = random_direction(&mut rng, dim);
        let x: Vec<f64> = d.iter().map(|c| c * 0.5 * epsilon).collect();
        lambda_minus = lambda_minus.min(clf.value(&x));
    }
    let mut lambda_plus = 0.0f64;
    for _ in 0..samples {
        let d = random_direction(&mut rng, dim);
        let x: Vec<f64> = d.iter().map(|c| c * outer).collect();
        lambda_plus = lambda_plus.max(clf.value(&x));
        lambda_plus = lambda_plus.max(clf.value(&in_full(&mut rng)));
    }

    let r_raw = n + sup_k;
    let reach = cfg.pair_scale * outer;
    let pair = |rng: &mut ChaCha8Rng| -> (Vec<f64>, Vec<f64>) {
        loop {
            let x = in_full(rng);
            let h = reach * rng.random::<f64>();
            let d = random_direction(rng, dim);
            let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + h * b).collect();
            let ny = norm(&y);
            if h > 0.0 && ny >= epsilon && ny <= outer {
                return (x, y);
            }
        }
    };
    let (mut l_eps, mut l_f, mut l_g) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        let (x, y) = pair(&mut rng);
        let dxy = distance(&x, &y);
        l_eps = l_eps.max((clf.value(&x) - clf.value(&y)).abs() / dxy);
        match lp.plant() {
            Plant::Affine(sys) => {
                l_f = l_f.max(distance(&sys.drift(&x), &sys.drift(&y)) / dxy);
                l_g = l_g.max(sys.input_matrix(&x).frobenius_distance(&sys.input_matrix(&y)) / dxy);
            }
            Plant::Nonlinear { sys, .. } => {
                let p: Vec<f64> = random_direction(&mut rng, sys.input_dim())
                    .into_iter()
                    .map(|c| c * r_raw * rng.random::<f64>())
                    .collect();
                l_f = l_f.max(distance(&sys.eval(&x, &p), &sys.eval(&y, &p)) / dxy);
            }
        }
    }

    let raw = RawConstants {
        lambda_minus,
        lambda_plus,
        l_eps,
        l_f,
        l_g,
        sup_k,
    };
    let s = cfg.safety;
    let lambda_minus = lambda_minus / s;
    let lambda_plus = lambda_plus * s;
    let (l_eps, l_f, l_g) = (l_eps * s, l_f * s, l_g * s);
    let r = n + sup_k * s;
    let l = l_f + r * l_g;
    if !(l_eps > 0.0) || !(lambda_minus > 0.0) {
        return Err(Error::EmptyProbeRegion("V is flat on the probe region".into()));
    }

    let eps_tilde = eps_tilde(tables, l_eps, epsilon, lambda_plus);
    let delta = cfg.delta_factor * eps_tilde / (16.0 + 17.0 * lambda_plus);
    let kappa = lambda_minus.min(epsilon) / (16.0 * l_eps * ((l * delta).exp() + 1.0));

    let probes: Vec<Vec<f64>> = (0..16).map(|_| in_full(&mut rng)).collect();
    let semi = check_semiconcavity(clf, &probes, 0.25 * epsilon, 16, cfg.seed);
    let semiconcavity_estimate = match semi.verdict {
        SemiconcavityVerdict::Bounded { constant } => Some(constant),
        SemiconcavityVerdict::Divergent { .. } => None,
    };

    Ok(RateGuard {
        delta,
        kappa,
        epsilon,
        m,
        n,
        region_radius: outer,
        lambda_minus,
        lambda_plus,
        l_eps,
        l_f,
        l_g,
        l,
        r,
        eps_tilde,
        raw,
        semiconcavity_estimate,
    })
}

fn eps_tilde(tables: &AlphaTables, l_eps: f64, epsilon: f64, p_max: f64) -> f64 {
    let levels: Vec<f64> = tables
        .grid()
        .iter()
        .cloned()
        .filter(|p| *p <= p_max)
        .collect();
    let ok = |et: f64| {
        levels
            .iter()
            .all(|&p| tables.overline(p + l_eps * et / 4.0) <= tables.overline(p) + epsilon / 8.0)
    };
    if ok(epsilon) {
        return epsilon;
    }
    let (mut lo, mut hi) = (0.0, epsilon);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `upper_diameter(p) < delta` and `sup(e) <= kappa * lower_diameter(p)`.
pub fn admissible(guard: &RateGuard, p: &Partition, e: &Signal) -> bool {
    p.upper_diameter() < guard.delta && e.bound() <= guard.kappa * p.lower_diameter()
}

impl RateGuard {
    /// A guard with given `delta` and `kappa`; the other fields are zero.
    pub fn manual(delta: f64, kappa: f64) -> Self {
        let raw = RawConstants {
            lambda_minus: 0.0,
            lambda_plus: 0.0,
            l_eps: 0.0,
            l_f: 0.0,
            l_g: 0.0,
            sup_k: 0.0,
        };
        Self {
            delta,
            kappa,
            epsilon: 0.0,
            m: 0.0,
            n: 0.0,
            region_radius: 0.0,
            lambda_minus: 0.0,
            lambda_plus: 0.0,
            l_eps: 0.0,
            l_f: 0.0,
            l_g: 0.0,
            l: 0.0,
            r: 0.0,
            eps_tilde: 0.0,
            raw,
            semiconcavity_estimate: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::{Feedback, FeedbackKind};
    use crate::linalg::sgn;
    use crate::types::{make_partition, ControlAffineSystem, PartitionKind};

    fn scalar_loop() -> (ClosedLoop, Clf) {
        let sys = ControlAffineSystem::new("x' = u", 1, 1, |_, f| f[0] = 0.0, |_, g| g[0] = 1.0).unwrap();
        let fb = Feedback::new(1, 1, FeedbackKind::Custom, "-sat", |x| Ok(vec![-x[0].clamp(-1.0, 1.0)]));
        let clf = Clf::builder("|x|", 1, |x: &[f64]| x[0].abs())
            .zeta("sgn", |x| vec![sgn(x[0])])
            .alpha(|s| s)
            .build()
            .unwrap();
        (ClosedLoop::new(Plant::Affine(sys), fb).unwrap(), clf)
    }

    #[test]
    fn abs_is_one_lipschitz() {
        let (lp, clf) = scalar_loop();
        let t = AlphaTables::identity(100.0);
        let g = estimate_rate_guard(&lp, &clf, &t, 0.1, 1.0, 1.0, &ProbeConfig::default()).unwrap();
        assert!((g.raw.l_eps - 1.0).abs() < 0.05);
        assert_eq!(g.raw.l_f, 0.0);
        assert_eq!(g.raw.l_g, 0.0);
        assert!(g.raw.sup_k <= 1.0);
        assert!(g.delta > 0.0 && g.kappa > 0.0);
        assert!(g.delta < g.eps_tilde);
    }

    #[test]
    fn kappa_grows_with_eps() {
        let (lp, clf) = scalar_loop();
        let t = AlphaTables::identity(100.0);
        let cfg = ProbeConfig {
            pairs: 2000,
            ..ProbeConfig::default()
        };
        let k: Vec<f64> = [0.05, 0.1, 0.2]
            .iter()
            .map(|e| estimate_rate_guard(&lp, &clf, &t, *e, 1.0, 1.0, &cfg).unwrap().kappa)
            .collect();
        assert!(k[0] < k[1] && k[1] < k[2], "{k:?}");
    }

    #[test]
    fn empty_region() {
        let (lp, clf) = scalar_loop();
        let t = AlphaTables::identity(100.0);
        let r = estimate_rate_guard(&lp, &clf, &t, 5.0, 1.0, 1.0, &ProbeConfig::default());
        assert!(matches!(r, Err(Error::EmptyProbeRegion(_))));
    }

    #[test]
    fn admissibility() {
        let g = RateGuard::manual(0.1, 0.5);
        let fine = make_partition(PartitionKind::Uniform { step: 0.05 }, 1.0).unwrap();
        let edge = make_partition(PartitionKind::Uniform { step: 0.1 }, 1.0).unwrap();
        assert!(admissible(&g, &fine, &Signal::zero(1)));
        assert!(!admissible(&g, &edge, &Signal::zero(1)));
        let loud = Signal::constant(vec![2.0 * 0.5 * 0.05]);
        assert!(!admissible(&g, &fine, &loud));
        let quiet = Signal::constant(vec![0.4 * 0.05]);
        assert!(admissible(&g, &fine, &quiet));
    }
}
