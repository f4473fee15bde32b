//! The discontinuous feedback `K = K1 + K2` built from a CLF, and the damping
//! feedback `-G(x)^T zeta(x)` used for comparison.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clf::Clf;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, random_direction, scale, sgn};
use crate::types::{fmt17, ControlAffineSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeedbackKind {
    /// `K1 + K2` synthesized from a CLF.
    Synthesized,
    ExplicitClosedForm,
    Damping,
    /// Any other user-supplied map (for instance the zero feedback).
    Custom,
}

type FeedbackFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

/// A locally bounded map `K: R^n -> R^m` with `K(0) = 0`.
///
/// Evaluation is fallible so that synthesized feedbacks can surface a failed
/// decay check at the state where it happens.
#[derive(Clone)]
pub struct Feedback {
    n: usize,
    m: usize,
    kind: FeedbackKind,
    description: String,
    eval: FeedbackFn,
}

impl fmt::Debug for Feedback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Feedback")
            .field("kind", &self.kind)
            .field("description", &self.description)
            .finish()
    }
}

impl Feedback {
    /// Wraps `eval`; the origin is mapped to `0` regardless of what `eval` returns.
    pub fn new<F>(n: usize, m: usize, kind: FeedbackKind, description: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        Self {
            n,
            m,
            kind,
            description: description.into(),
            eval: Arc::new(eval),
        }
    }

    pub fn zero(n: usize, m: usize) -> Self {
        Self::new(n, m, FeedbackKind::Custom, "zero feedback", move |_| Ok(vec![0.0; m]))
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> FeedbackKind {
        self.kind
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                what: "feedback state",
                expected: self.n,
                got: x.len(),
            });
        }
        if x.iter().all(|c| *c == 0.0) {
            return Ok(vec![0.0; self.m]);
        }
        let u = (self.eval)(x)?;
        if u.len() != self.m {
            return Err(Error::Dimension {
                what: "feedback value",
                expected: self.m,
                got: u.len(),
            });
        }
        Ok(u)
    }

    /// Exports `x1..xn,k1..km` rows at the given states.
    pub fn write_grid_csv<W: Write>(&self, points: &[Vec<f64>], w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.n).map(|i| format!("x{i}")).collect();
        header.extend((1..=self.m).map(|j| format!("k{j}")));
        wtr.write_record(&header)?;
        for x in points {
            let u = self.eval(x)?;
            wtr.write_record(x.iter().chain(&u).map(|v| fmt17(*v)))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Default decay tolerance `1e-9 * max(1, V(x))`.
pub fn decay_tol(v: f64) -> f64 {
    1e-9 * v.max(1.0)
}

/// `w = G(x)^T zeta(x)`, i.e. `b_j(x) = <zeta(x), g_j(x)>`.
pub fn lie_derivatives(sys: &ControlAffineSystem, clf: &Clf, x: &[f64]) -> Vec<f64> {
    sys.input_matrix(x).transpose_apply(&clf.zeta(x))
}

/// The minimizer of `<zeta(x), f(x) + G(x)u>` over `|u| <= alpha(|x|)`, i.e.
/// `-alpha(|x|) w / |w|` with `w = G(x)^T zeta(x)` (and `0` when `w = 0`),
/// after checking `<zeta, f + G u> <= -V(x) + decay_tol`.
pub fn synthesize_k1(sys: &ControlAffineSystem, clf: &Clf, x: &[f64]) -> Result<Vec<f64>> {
    let m = sys.input_dim();
    if x.iter().all(|c| *c == 0.0) {
        return Ok(vec![0.0; m]);
    }
    let z = clf.zeta(x);
    let g = sys.input_matrix(x);
    let w = g.transpose_apply(&z);
    let wn = norm(&w);
    let u = if wn > 0.0 {
        scale(&w, -clf.alpha(norm(x)) / wn)
    } else {
        vec![0.0; m]
    };
    let lhs = dot(&z, &sys.eval(x, &u));
    let v = clf.value(x);
    let margin = lhs + v;
    if margin > decay_tol(v) {
        return Err(Error::DecayViolation {
            x: x.to_vec(),
            margin,
        });
    }
    Ok(u)
}

/// `K2(x) = -W(x) (sgn b_1(x), ..., sgn b_m(x))`, with `W = V` unless the CLF
/// carries a weight.
pub fn k2(sys: &ControlAffineSystem, clf: &Clf, x: &[f64]) -> Vec<f64> {
    if x.iter().all(|c| *c == 0.0) {
        return vec![0.0; sys.input_dim()];
    }
    let w = clf.k2_weight(x);
    lie_derivatives(sys, clf, x).into_iter().map(|b| -w * sgn(b)).collect()
}

pub fn k1_feedback(sys: &ControlAffineSystem, clf: &Clf) -> Feedback {
    let (s, c) = (sys.clone(), clf.clone());
    Feedback::new(
        sys.state_dim(),
        sys.input_dim(),
        FeedbackKind::Synthesized,
        format!("K1 ball minimizer for {} / {}", sys.name(), clf.name()),
        move |x| synthesize_k1(&s, &c, x),
    )
}

pub fn k2_feedback(sys: &ControlAffineSystem, clf: &Clf) -> Feedback {
    let (s, c) = (sys.clone(), clf.clone());
    Feedback::new(
        sys.state_dim(),
        sys.input_dim(),
        FeedbackKind::Synthesized,
        format!("K2 sign feedback for {} / {}", sys.name(), clf.name()),
        move |x| Ok(k2(&s, &c, x)),
    )
}

/// `K = K1 + K2`; a failed decay check surfaces at the first state where it occurs.
pub fn combined_feedback(sys: &ControlAffineSystem, clf: &Clf) -> Feedback {
    let (s, c) = (sys.clone(), clf.clone());
    Feedback::new(
        sys.state_dim(),
        sys.input_dim(),
        FeedbackKind::Synthesized,
        format!("K1 + K2 for {} / {}", sys.name(), clf.name()),
        move |x| {
            let mut u = synthesize_k1(&s, &c, x)?;
            for (ui, vi) in u.iter_mut().zip(k2(&s, &c, x)) {
                *ui += vi;
            }
            Ok(u)
        },
    )
}

/// `-G(x)^T zeta(x)`.
pub fn damping_feedback(sys: &ControlAffineSystem, clf: &Clf) -> Feedback {
    let (s, c) = (sys.clone(), clf.clone());
    Feedback::new(
        sys.state_dim(),
        sys.input_dim(),
        FeedbackKind::Damping,
        format!("damping -G^T zeta for {} / {}", sys.name(), clf.name()),
        move |x| Ok(lie_derivatives(&s, &c, x).into_iter().map(|b| -b).collect()),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellSup {
    pub radius: f64,
    pub sup: f64,
    pub inf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Continuity {
    Continuous,
    Discontinuous { floor: f64 },
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub shells: Vec<ShellSup>,
    pub failed_evaluations: usize,
    pub verdict: Continuity,
}

/// Sup and inf of `|K(x)|` over sampled directions on each shell `|x| = r`.
///
/// The verdict is `Continuous` when the innermost sup is at most ten times
/// its radius, `Discontinuous` when every shell sup stays above half the
/// outermost one.
pub fn continuity_probe(fb: &Feedback, radii: &[f64], directions: usize, seed: u64) -> ContinuityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs: Vec<Vec<f64>> = (0..directions).map(|_| random_direction(&mut rng, fb.n)).collect();
    let mut failed = 0;
    let shells: Vec<ShellSup> = radii
        .iter()
        .map(|&r| {
            let (mut sup, mut inf) = (0.0f64, f64::INFINITY);
            for d in &dirs {
                match fb.eval(&scale(d, r)) {
                    Ok(u) => {
                        let k = norm(&u);
                        sup = sup.max(k);
                        inf = inf.min(k);
                    }
                    Err(_) => failed += 1,
                }
            }
            ShellSup { radius: r, sup, inf }
        })
        .collect();
    let verdict = match (shells.first(), shells.last()) {
        (Some(_), Some(last)) if last.sup <= 10.0 * last.radius => Continuity::Continuous,
        (Some(first), Some(_)) if first.sup > 0.0 && shells.iter().all(|s| s.sup >= 0.5 * first.sup) => {
            Continuity::Discontinuous {
                floor: shells.iter().map(|s| s.sup).fold(f64::INFINITY, f64::min),
            }
        }
        _ => Continuity::Inconclusive,
    };
    ContinuityReport {
        shells,
        failed_evaluations: failed,
        verdict,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub compared: usize,
    /// Points where either feedback failed to evaluate.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst_point: Option<Vec<f64>>,
}

/// Largest `|a(x) - b(x)| / max(|a(x)|, tiny)` over the points where both evaluate.
pub fn cross_check(a: &Feedback, b: &Feedback, points: &[Vec<f64>]) -> CrossCheck {
    let mut out = CrossCheck {
        compared: 0,
        skipped: 0,
        max_rel_error: 0.0,
        worst_point: None,
    };
    for x in points {
        match (a.eval(x), b.eval(x)) {
            (Ok(ua), Ok(ub)) => {
                out.compared += 1;
                let diff: Vec<f64> = ua.iter().zip(&ub).map(|(p, q)| p - q).collect();
                let rel = norm(&diff) / norm(&ua).max(f64::MIN_POSITIVE);
                if rel > out.max_rel_error {
                    out.max_rel_error = rel;
                    out.worst_point = Some(x.clone());
                }
            }
            _ => out.skipped += 1,
        }
    }
    out
}
