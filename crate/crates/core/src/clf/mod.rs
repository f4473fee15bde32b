//! Control-Lyapunov functions and the comparison functions built from them.

mod envelope;
mod semiconcavity;
mod tables;

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use envelope::{build_envelope, envelope_bound, j_factor, EnvelopeReport, IssEnvelope};
pub use semiconcavity::{check_semiconcavity, ScaleEstimate, SemiconcavityReport, SemiconcavityVerdict};
pub use tables::{estimate_alpha_tables, AlphaTables, TableOptions, TableReport};

use crate::error::{Error, Result};
use crate::linalg::{norm, random_in_shell};

type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type Gain = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Region `Omega` on which the semiconcavity estimates of a CLF hold.
#[derive(Clone)]
pub enum Domain {
    Everywhere,
    /// `R^n \ {0}`.
    ExcludeOrigin,
    /// `{x : phi(x) != 0}`; crossings of `phi = 0` leave the domain.
    Boundary { indicator: ScalarField, label: String },
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Everywhere => write!(f, "Everywhere"),
            Domain::ExcludeOrigin => write!(f, "ExcludeOrigin"),
            Domain::Boundary { label, .. } => write!(f, "Boundary({label})"),
        }
    }
}

impl Domain {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Everywhere => true,
            Domain::ExcludeOrigin => x.iter().any(|v| *v != 0.0),
            Domain::Boundary { indicator, .. } => indicator(x) != 0.0,
        }
    }
}

/// How `zeta` was obtained.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Selection {
    /// User-supplied selection of the limiting subdifferential.
    Supplied(String),
    /// Central finite differences; only meaningful where `V` is smooth.
    FiniteDifference,
}

/// A CLF `V` with a subgradient selection `zeta`, the control bound `alpha`
/// of the decay condition, and an optional weight `W` replacing `V` in `K2`.
#[derive(Clone)]
pub struct Clf {
    name: String,
    dim: usize,
    value: ScalarField,
    zeta: VectorField,
    alpha: Gain,
    weight: Option<ScalarField>,
    domain: Domain,
    selection: Selection,
}

impl fmt::Debug for Clf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Clf")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("selection", &self.selection)
            .finish()
    }
}

pub struct ClfBuilder {
    name: String,
    dim: usize,
    value: ScalarField,
    zeta: Option<(VectorField, String)>,
    alpha: Option<Gain>,
    weight: Option<ScalarField>,
    domain: Domain,
}

impl ClfBuilder {
    pub fn zeta<Z>(mut self, note: impl Into<String>, zeta: Z) -> Self
    where
        Z: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.zeta = Some((Arc::new(zeta), note.into()));
        self
    }

    pub fn alpha<A>(mut self, alpha: A) -> Self
    where
        A: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.alpha = Some(Arc::new(alpha));
        self
    }

    pub fn weight<W>(mut self, weight: W) -> Self
    where
        W: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.weight = Some(Arc::new(weight));
        self
    }

    pub fn domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    /// Checks `V(0) = 0` and `zeta(0) = 0` exactly.
    pub fn build(self) -> Result<Clf> {
        let (zeta, selection) = match self.zeta {
            Some((z, note)) => (z, Selection::Supplied(note)),
            None => {
                let v = self.value.clone();
                let z: VectorField = Arc::new(move |x: &[f64]| {
                    if x.iter().all(|c| *c == 0.0) {
                        vec![0.0; x.len()]
                    } else {
                        finite_difference_gradient(&*v, x)
                    }
                });
                (z, Selection::FiniteDifference)
            }
        };
        let clf = Clf {
            name: self.name,
            dim: self.dim,
            value: self.value,
            zeta,
            alpha: self.alpha.unwrap_or_else(|| Arc::new(|_| 0.0)),
            weight: self.weight,
            domain: self.domain,
            selection,
        };
        let origin = vec![0.0; clf.dim];
        if clf.value(&origin) != 0.0 {
            return Err(Error::param("V", "V(0) must be 0"));
        }
        let z0 = clf.zeta(&origin);
        if z0.len() != clf.dim || z0.iter().any(|c| *c != 0.0) {
            return Err(Error::param("zeta", "zeta(0) must be 0"));
        }
        Ok(clf)
    }
}

impl Clf {
    pub fn builder<V>(name: impl Into<String>, dim: usize, value: V) -> ClfBuilder
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        ClfBuilder {
            name: name.into(),
            dim,
            value: Arc::new(value),
            zeta: None,
            alpha: None,
            weight: None,
            domain: Domain::ExcludeOrigin,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn zeta(&self, x: &[f64]) -> Vec<f64> {
        (self.zeta)(x)
    }

    /// Control-magnitude bound `alpha(|x|)` of the decay condition.
    pub fn alpha(&self, s: f64) -> f64 {
        (self.alpha)(s)
    }

    /// The factor used in `K2`: `W(x)` when configured, `V(x)` otherwise.
    pub fn k2_weight(&self, x: &[f64]) -> f64 {
        match &self.weight {
            Some(w) => w(x),
            None => self.value(x),
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn semiconcave_domain(&self, x: &[f64]) -> bool {
        self.domain.contains(x)
    }

    pub fn selection(&self) -> &Selection {
        &self.selection
    }

    /// Sampled positive definiteness: `V(x) > 0` at `samples` random `x != 0`
    /// with `lo <= |x| <= hi`. Returns the first offending point.
    pub fn check_positive_definite(&self, samples: usize, lo: f64, hi: f64, seed: u64) -> Option<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..samples)
            .map(|_| random_in_shell(&mut rng, self.dim, lo, hi))
            .find(|x| !(self.value(x) > 0.0))
    }

    /// Sampled properness: the minimum of `V` on spheres of radius `10^k`,
    /// `k = 0..decades`, must increase with `k`.
    pub fn check_proper(&self, decades: u32, directions: usize) -> bool {
        let dirs = crate::linalg::sphere_directions(self.dim, directions, 0);
        let mins: Vec<f64> = (0..=decades)
            .map(|k| {
                let r = 10f64.powi(k as i32);
                dirs.iter()
                    .map(|d| self.value(&crate::linalg::scale(d, r)))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        mins.windows(2).all(|w| w[1] > w[0])
    }
}

/// Central-difference gradient with step `1e-6 * max(1, |x|)`. Approximate;
/// only valid where `v` is differentiable.
pub fn finite_difference_gradient(v: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = 1e-6 * norm(x).max(1.0);
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = v(&probe);
            probe[i] = x[i] - h;
            let down = v(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_difference_fallback() {
        let clf = Clf::builder("quad", 2, |x: &[f64]| x[0] * x[0] + 3.0 * x[1] * x[1])
            .build()
            .unwrap();
        assert_eq!(clf.selection(), &Selection::FiniteDifference);
        let z = clf.zeta(&[1.0, -1.0]);
        assert!((z[0] - 2.0).abs() < 1e-6 && (z[1] + 6.0).abs() < 1e-6);
        assert_eq!(clf.zeta(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_nonzero_at_origin() {
        assert!(Clf::builder("shifted", 1, |x: &[f64]| x[0].abs() + 1.0).build().is_err());
        assert!(Clf::builder("bad-zeta", 1, |x: &[f64]| x[0].abs())
            .zeta("const", |_| vec![1.0])
            .build()
            .is_err());
    }

    #[test]
    fn definiteness_and_properness() {
        let clf = Clf::builder("norm", 3, norm).zeta("unit", |x| {
            let r = norm(x);
            if r == 0.0 { vec![0.0; 3] } else { x.iter().map(|c| c / r).collect() }
        });
        let clf = clf.build().unwrap();
        assert!(clf.check_positive_definite(500, 1e-6, 1e3, 3).is_none());
        assert!(clf.check_proper(6, 64));
        let flat = Clf::builder("flat", 1, |x: &[f64]| x[0].abs().min(1.0)).build().unwrap();
        assert!(!flat.check_proper(4, 2));
    }
}
