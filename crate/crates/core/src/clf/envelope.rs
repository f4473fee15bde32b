use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::tables::{AlphaTables, TableReport};
use crate::error::{Error, Result};

/// `J(t) = 16 / (16 + t)`.
pub fn j_factor(t: f64) -> f64 {
    16.0 / (16.0 + t)
}

type Gain = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The class-KL/K-infinity pair `(beta, gamma)` and the overflow `eps` of the
/// sampled ISS estimate.
#[derive(Clone)]
pub struct IssEnvelope {
    tables: AlphaTables,
    overflow: f64,
    alpha4: Option<Gain>,
}

impl fmt::Debug for IssEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IssEnvelope")
            .field("overflow", &self.overflow)
            .field("alpha4", &self.alpha4.is_some())
            .field("s_max", &self.tables.s_max())
            .finish()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    #[serde(flatten)]
    pub tables: TableReport,
    pub overflow: f64,
    pub s_max: f64,
    pub weak_iss: bool,
    /// Set when `beta(M, 0)` or `gamma(N)` needed a table inverse past its range.
    pub saturated: bool,
    pub beta_m0: f64,
    pub gamma_n: f64,
}

pub fn build_envelope(
    tables: AlphaTables,
    overflow: f64,
    alpha4: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
) -> Result<IssEnvelope> {
    if !(overflow > 0.0) {
        return Err(Error::param("overflow", "must be positive"));
    }
    Ok(IssEnvelope {
        tables,
        overflow,
        alpha4,
    })
}

/// `max(beta(M, t) + gamma(N), eps)`.
pub fn envelope_bound(env: &IssEnvelope, m: f64, n: f64, t: f64) -> f64 {
    env.bound(m, n, t)
}

impl IssEnvelope {
    pub fn tables(&self) -> &AlphaTables {
        &self.tables
    }

    pub fn overflow(&self) -> f64 {
        self.overflow
    }

    pub fn has_alpha4(&self) -> bool {
        self.alpha4.is_some()
    }

    pub fn with_overflow(&self, overflow: f64) -> Result<Self> {
        build_envelope(self.tables.clone(), overflow, self.alpha4.clone())
    }

    /// `beta(s, t)` together with the saturation flag of the inverse.
    pub fn beta_checked(&self, s: f64, t: f64) -> (f64, bool) {
        let (inv, sat) = self.tables.underline_inv(s);
        let arg = inv * j_factor(t);
        (self.tables.overline(arg), sat || !self.tables.in_range(arg))
    }

    pub fn beta(&self, s: f64, t: f64) -> f64 {
        self.beta_checked(s, t).0
    }

    pub fn gamma_checked(&self, s: f64) -> (f64, bool) {
        let s = match &self.alpha4 {
            Some(a) => a(s),
            None => s,
        };
        let (inv, sat) = self.tables.underline_inv(s);
        (self.tables.overline(inv), sat || !self.tables.in_range(inv))
    }

    pub fn gamma(&self, s: f64) -> f64 {
        self.gamma_checked(s).0
    }

    /// Max-form bound `max(beta(M, t) + gamma(N), eps)`.
    pub fn bound(&self, m: f64, n: f64, t: f64) -> f64 {
        (self.beta(m, t) + self.gamma(n)).max(self.overflow)
    }

    /// Additive bound `beta(|x0|, t) + gamma(N) + eps`.
    pub fn additive_bound(&self, x0_norm: f64, n: f64, t: f64) -> f64 {
        self.beta(x0_norm, t) + self.gamma(n) + self.overflow
    }

    pub fn report(&self, m: f64, n: f64) -> EnvelopeReport {
        let (beta_m0, sb) = self.beta_checked(m, 0.0);
        let (gamma_n, sg) = self.gamma_checked(n);
        EnvelopeReport {
            tables: self.tables.report(),
            overflow: self.overflow,
            s_max: self.tables.s_max(),
            weak_iss: self.alpha4.is_some(),
            saturated: sb || sg,
            beta_m0,
            gamma_n,
        }
    }
}
