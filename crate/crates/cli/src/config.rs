use serde::{Deserialize, Serialize};

use sampled_iss::clf::{Clf, TableOptions};
use sampled_iss::feedback::{combined_feedback, damping_feedback, k1_feedback, Feedback, FeedbackKind};
use sampled_iss::models::*;
use sampled_iss::sampler::{ClosedLoop, Plant, ProbeConfig};
use sampled_iss::types::{make_partition, Partition, PartitionKind, Signal};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemId {
    /// `x' = (u1, u2, x1 u2 - x2 u1)`.
    Integrator,
    /// `x' = u` on `R`.
    ScalarIntegrator,
    /// `x' = -x + u` on `R`.
    Linear,
    /// `x' = -x + u^2 x^2` on `R`.
    Counterexample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClfId {
    Newclf,
    Tilde,
    Abs,
    Square,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// `K1 + K2` synthesized from the CLF.
    Synthesized,
    K1,
    /// Closed-form `K1 + K2` for the integrator.
    Explicit,
    Damping,
    Zero,
    /// `K(x) = -x`.
    NegativeState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Zero,
    Constant { value: Vec<f64> },
    Sinusoid { amplitude: Vec<f64>, omega: f64, phase: f64 },
}

impl SignalSpec {
    pub fn build(&self, dim: usize) -> Result<Signal, String> {
        let s = match self {
            SignalSpec::Zero => Signal::zero(dim),
            SignalSpec::Constant { value } => Signal::constant(value.clone()),
            SignalSpec::Sinusoid { amplitude, omega, phase } => Signal::sinusoid(amplitude.clone(), *omega, *phase),
        };
        if s.dim() != dim {
            return Err(format!("signal has dimension {}, expected {dim}", s.dim()));
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeParams {
    pub m: f64,
    pub n: f64,
    pub epsilon: f64,
}

impl Default for EnvelopeParams {
    fn default() -> Self {
        Self {
            m: 2.0,
            n: 0.1,
            epsilon: 0.1,
        }
    }
}

/// A fixed `(delta, kappa)` in place of the sampled rate guard.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualGuard {
    pub delta: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignParams {
    pub cases: usize,
    pub include_zero_case: bool,
    /// Extra cases with noise above the guard, tagged and not asserted.
    pub inadmissible_cases: usize,
    pub adversarial_budget: usize,
    pub guard: Option<ManualGuard>,
    pub probe: ProbeParams,
    /// Identity comparison tables up to this level instead of estimated ones.
    pub identity_tables: Option<f64>,
}

impl Default for CampaignParams {
    fn default() -> Self {
        Self {
            cases: 20,
            include_zero_case: false,
            inadmissible_cases: 0,
            adversarial_budget: 0,
            guard: None,
            probe: ProbeParams::default(),
            identity_tables: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeParams {
    pub pairs: usize,
    pub safety: f64,
}

impl Default for ProbeParams {
    fn default() -> Self {
        let d = ProbeConfig::default();
        Self {
            pairs: d.pairs,
            safety: d.safety,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EulerParams {
    pub step0: f64,
    pub levels: usize,
    /// `sup(e_r) = noise_scale * delta_r^noise_power`.
    pub noise_scale: f64,
    pub noise_power: f64,
    pub cauchy_ratio: f64,
    pub sustained: usize,
    pub grid_points: usize,
}

impl Default for EulerParams {
    fn default() -> Self {
        Self {
            step0: 0.2,
            levels: 7,
            noise_scale: 1.0,
            noise_power: 2.0,
            cauchy_ratio: 0.8,
            sustained: 3,
            grid_points: 4096,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeakIssParams {
    pub i_max: usize,
    pub cases: usize,
    pub input_bound: f64,
    pub x0_max: f64,
    pub epsilon: f64,
}

impl Default for WeakIssParams {
    fn default() -> Self {
        Self {
            i_max: 6,
            cases: 20,
            input_bound: 1.0,
            x0_max: 4.0,
            epsilon: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub system: SystemId,
    #[serde(default)]
    pub clf: Option<ClfId>,
    #[serde(default)]
    pub feedback: Option<FeedbackMode>,
    #[serde(default)]
    pub partition: Option<PartitionKind>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub input: Option<SignalSpec>,
    #[serde(default)]
    pub noise: Option<SignalSpec>,
    #[serde(default)]
    pub substeps: Option<usize>,
    #[serde(default)]
    pub escape_radius: Option<f64>,
    /// Flag crossings of the CLF's domain boundary (defaults to on for `newclf`).
    #[serde(default)]
    pub monitor: Option<bool>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub envelope: EnvelopeParams,
    #[serde(default)]
    pub tables: TableOptions,
    /// Levels at which table lookups are reported.
    #[serde(default)]
    pub queries: Vec<f64>,
    #[serde(default)]
    pub campaign: CampaignParams,
    #[serde(default)]
    pub euler: EulerParams,
    #[serde(default)]
    pub weakiss: WeakIssParams,
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub partition: Option<PartitionKind>,
    pub horizon: Option<f64>,
    pub substeps: Option<usize>,
    pub escape_radius: Option<f64>,
}

/// `uniform:STEP` or `jitter:STEP:FRACTION:SEED`.
pub fn parse_partition(s: &str) -> Result<PartitionKind, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| p.parse::<f64>().map_err(|e| format!("bad number `{p}`: {e}"));
    match parts.as_slice() {
        ["uniform", step] => Ok(PartitionKind::Uniform { step: num(step)? }),
        ["jitter", step, frac, seed] => Ok(PartitionKind::RandomizedJitter {
            step: num(step)?,
            jitter_fraction: num(frac)?,
            seed: seed.parse().map_err(|e| format!("bad seed `{seed}`: {e}"))?,
        }),
        _ => Err(format!("expected uniform:STEP or jitter:STEP:FRACTION:SEED, got `{s}`")),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| format!("line {}, column {}: {e}", e.line(), e.column()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(format!("unsupported config version {} (expected {CONFIG_VERSION})", cfg.version));
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = o.partition {
            self.partition = Some(p);
        }
        if let Some(h) = o.horizon {
            self.horizon = Some(h);
        }
        if let Some(k) = o.substeps {
            self.substeps = Some(k);
        }
        if let Some(r) = o.escape_radius {
            self.escape_radius = Some(r);
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(5.0)
    }

    pub fn dims(&self) -> (usize, usize) {
        match self.system {
            SystemId::Integrator => (3, 2),
            _ => (1, 1),
        }
    }

    pub fn clf_id(&self) -> ClfId {
        self.clf.unwrap_or(match self.system {
            SystemId::Integrator => ClfId::Newclf,
            _ => ClfId::Abs,
        })
    }

    pub fn clf(&self) -> Result<Clf, String> {
        let id = self.clf_id();
        let ok = match id {
            ClfId::Newclf | ClfId::Tilde => self.system == SystemId::Integrator,
            ClfId::Abs | ClfId::Square => self.system != SystemId::Integrator,
        };
        if !ok {
            return Err(format!("clf {id:?} does not fit system {:?}", self.system));
        }
        Ok(match (self.system, id) {
            (_, ClfId::Newclf) => clf_newclf(),
            (_, ClfId::Tilde) => clf_tilde(),
            (SystemId::Counterexample, ClfId::Abs) => counterexample_clf(),
            (_, ClfId::Abs) => scalar_abs_clf(),
            (_, ClfId::Square) => scalar_square_clf(),
        })
    }

    pub fn feedback_mode(&self) -> FeedbackMode {
        self.feedback.unwrap_or(match self.system {
            SystemId::Integrator => FeedbackMode::Explicit,
            SystemId::Counterexample | SystemId::Linear => FeedbackMode::Zero,
            SystemId::ScalarIntegrator => FeedbackMode::Synthesized,
        })
    }

    pub fn partition(&self) -> Result<Partition, String> {
        let kind = self.partition.unwrap_or(PartitionKind::Uniform { step: 0.01 });
        make_partition(kind, self.horizon()).map_err(|e| e.to_string())
    }

    pub fn x0(&self) -> Result<Vec<f64>, String> {
        let n = self.dims().0;
        let x0 = self.x0.clone().unwrap_or_else(|| vec![0.0; n]);
        if x0.len() != n {
            return Err(format!("x0 has {} entries, expected {n}", x0.len()));
        }
        Ok(x0)
    }

    pub fn input(&self) -> Result<Signal, String> {
        self.input.clone().unwrap_or(SignalSpec::Zero).build(self.dims().1)
    }

    pub fn noise(&self) -> Result<Signal, String> {
        self.noise.clone().unwrap_or(SignalSpec::Zero).build(self.dims().0)
    }

    fn feedback(&self) -> Result<Feedback, String> {
        let (n, m) = self.dims();
        let mode = self.feedback_mode();
        let affine = |s: sampled_iss::types::ControlAffineSystem| -> Result<Feedback, String> {
            let clf = self.clf()?;
            Ok(match mode {
                FeedbackMode::Synthesized => combined_feedback(&s, &clf),
                FeedbackMode::K1 => k1_feedback(&s, &clf),
                FeedbackMode::Damping => damping_feedback(&s, &clf),
                _ => unreachable!(),
            })
        };
        match (mode, self.system) {
            (FeedbackMode::Zero, _) => Ok(Feedback::zero(n, m)),
            (FeedbackMode::NegativeState, _) if n == m => Ok(Feedback::new(n, m, FeedbackKind::Custom, "K(x) = -x", |x| {
                Ok(x.iter().map(|v| -v).collect())
            })),
            (FeedbackMode::Explicit, SystemId::Integrator) => Ok(integrator_explicit_feedback()),
            (FeedbackMode::Synthesized | FeedbackMode::K1 | FeedbackMode::Damping, SystemId::Integrator) => {
                affine(integrator_system())
            }
            (FeedbackMode::Synthesized | FeedbackMode::K1 | FeedbackMode::Damping, SystemId::ScalarIntegrator) => {
                affine(scalar_integrator())
            }
            (FeedbackMode::Synthesized | FeedbackMode::K1 | FeedbackMode::Damping, SystemId::Linear) => {
                affine(linear_system())
            }
            (mode, sys) => Err(format!("feedback {mode:?} is not available for system {sys:?}")),
        }
    }

    pub fn plant(&self) -> Plant {
        match self.system {
            SystemId::Integrator => Plant::Affine(integrator_system()),
            SystemId::ScalarIntegrator => Plant::Affine(scalar_integrator()),
            SystemId::Linear => Plant::Affine(linear_system()),
            SystemId::Counterexample => Plant::nonlinear(counterexample_system()),
        }
    }

    /// The closed loop with substeps, escape radius and domain monitor applied.
    pub fn closed_loop(&self) -> Result<ClosedLoop, String> {
        self.configure(ClosedLoop::new(self.plant(), self.feedback()?).map_err(|e| e.to_string())?)
    }

    pub fn configure(&self, mut lp: ClosedLoop) -> Result<ClosedLoop, String> {
        if let Some(k) = self.substeps {
            lp = lp.with_substeps(k).map_err(|e| e.to_string())?;
        }
        if let Some(r) = self.escape_radius {
            lp = lp.with_escape_radius(r).map_err(|e| e.to_string())?;
        }
        let monitor = self.monitor.unwrap_or(self.system == SystemId::Integrator && self.clf_id() == ClfId::Newclf);
        if monitor {
            if self.clf_id() != ClfId::Newclf {
                return Err("the domain monitor is only defined for newclf".into());
            }
            lp = lp.with_monitor(newclf_monitor());
        }
        Ok(lp)
    }

    pub fn probe(&self) -> ProbeConfig {
        ProbeConfig {
            pairs: self.campaign.probe.pairs,
            safety: self.campaign.probe.safety,
            seed: self.seed,
            ..ProbeConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_flags() {
        assert_eq!(parse_partition("uniform:0.1"), Ok(PartitionKind::Uniform { step: 0.1 }));
        assert_eq!(
            parse_partition("jitter:0.1:0.2:7"),
            Ok(PartitionKind::RandomizedJitter {
                step: 0.1,
                jitter_fraction: 0.2,
                seed: 7
            })
        );
        assert!(parse_partition("uniform").is_err());
        assert!(parse_partition("jitter:0.1:x:7").is_err());
    }

    #[test]
    fn rejects_unknown_fields_and_versions() {
        let e = ExperimentConfig::parse(r#"{"version": 1, "system": "linear", "colour": 3}"#).unwrap_err();
        assert!(e.contains("colour") && e.contains("line 1"), "{e}");
        assert!(ExperimentConfig::parse(r#"{"version": 2, "system": "linear"}"#).is_err());
        let e = ExperimentConfig::parse("{\"version\": 1,\n \"system\": \"linear\",\n \"euler\": {\"steps\": 1}}").unwrap_err();
        assert!(e.contains("line 3"), "{e}");
    }

    #[test]
    fn defaults_resolve() {
        let c = ExperimentConfig::parse(r#"{"version": 1, "system": "integrator"}"#).unwrap();
        assert_eq!(c.clf_id(), ClfId::Newclf);
        assert_eq!(c.feedback_mode(), FeedbackMode::Explicit);
        assert!(c.closed_loop().unwrap().monitor().is_some());
        let bad = ExperimentConfig::parse(r#"{"version": 1, "system": "linear", "clf": "tilde"}"#).unwrap();
        assert!(bad.clf().is_err());
    }
}
