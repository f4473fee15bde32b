use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use sampled_iss::campaign::{adversarial_search, run_campaign, Campaign, Case, CaseGenerator};
use sampled_iss::clf::{build_envelope, estimate_alpha_tables, AlphaTables, IssEnvelope};
use sampled_iss::euler::{euler_study, EulerOptions, RefinementSchedule, ScheduleInputs};
use sampled_iss::feedback::Feedback;
use sampled_iss::models::{
    build_weak_iss_certificate, counterexample_clf, counterexample_system, weak_iss_loop, CertificateOptions,
};
use sampled_iss::sampler::{estimate_rate_guard, sample_solve, RateGuard};
use sampled_iss::types::{make_partition, PartitionKind, Signal, Status};
use sampled_iss::Error;

use crate::config::{ExperimentConfig, SystemId};

/// Why a command did not succeed; each maps to one exit code.
#[derive(Debug)]
pub enum Failure {
    Assertion(String),
    Config(String),
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Assertion(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Assertion(m) | Failure::Config(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericalFailure { .. }
            | Error::DivergentLevel { .. }
            | Error::DecayViolation { .. }
            | Error::BandInfeasible { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

pub type Outcome = Result<Value, Failure>;

fn config_err(e: String) -> Failure {
    Failure::Config(e)
}

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        let path = self.dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        serde_json::to_writer_pretty(self.create(name)?, value)
            .map_err(|e| Failure::Config(format!("cannot write {name}: {e}")))
    }
}

pub fn simulate(cfg: &ExperimentConfig, out: &Output) -> Outcome {
    let lp = cfg.closed_loop().map_err(config_err)?;
    let p = cfg.partition().map_err(config_err)?;
    let (x0, u, e) = (cfg.x0().map_err(config_err)?, cfg.input().map_err(config_err)?, cfg.noise().map_err(config_err)?);
    let tr = sample_solve(&lp, &p, &x0, &u, &e)?;
    tr.write_csv(out.create("trajectory.csv")?)?;
    let t_bar = match tr.status() {
        Status::BlowUp { t_bar } => Some(*t_bar),
        _ => None,
    };
    let run = json!({
        "system": cfg.system,
        "feedback": lp.feedback().description(),
        "x0": x0,
        "intervals": p.intervals(),
        "upper_diameter": p.upper_diameter(),
        "lower_diameter": p.lower_diameter(),
        "substeps": lp.config().substeps,
        "escape_radius": lp.escape_radius(),
        "status": tr.status(),
        "t_bar": t_bar,
        "domain_exit": tr.domain_exit(),
        "final_time": tr.final_time(),
        "final_state": tr.final_state(),
        "max_norm": tr.max_norm(),
    });
    out.json("run.json", &run)?;
    if let Some(t) = t_bar {
        return Err(Failure::Numerical(format!("blow-up at t = {t}")));
    }
    Ok(run)
}

fn tables(cfg: &ExperimentConfig) -> Result<AlphaTables, Failure> {
    if let Some(s_max) = cfg.campaign.identity_tables {
        return Ok(AlphaTables::identity(s_max));
    }
    Ok(estimate_alpha_tables(&cfg.clf().map_err(config_err)?, &cfg.tables)?)
}

pub fn envelope(cfg: &ExperimentConfig, out: &Output) -> Outcome {
    let t = tables(cfg)?;
    t.write_csv(out.create("tables.csv")?)?;
    let p = &cfg.envelope;
    let env = build_envelope(t.clone(), p.epsilon, None)?;
    let queries: Vec<Value> = cfg
        .queries
        .iter()
        .map(|s| {
            let (ui, us) = t.underline_inv(*s);
            let (oi, os) = t.overline_inv(*s);
            json!({
                "s": s,
                "in_range": t.in_range(*s),
                "underline": t.underline(*s),
                "overline": t.overline(*s),
                "underline_inv": ui,
                "overline_inv": oi,
                "saturated": us || os || !t.in_range(*s),
            })
        })
        .collect();
    let report = json!({ "envelope": env.report(p.m, p.n), "queries": queries });
    out.json("envelope.json", &report)?;
    Ok(report)
}

fn inadmissible_case(id: usize, gen: &CaseGenerator, guard: &RateGuard) -> Result<Case, Failure> {
    let p = make_partition(
        PartitionKind::Uniform {
            step: 0.9 * guard.delta,
        },
        gen.horizon,
    )?;
    let level = 2.0 * guard.kappa * p.lower_diameter() + 1e-12;
    let mut e = vec![0.0; gen.state_dim];
    e[0] = level;
    Ok(Case {
        id,
        x0: vec![0.0; gen.state_dim],
        u: Signal::zero(gen.input_dim),
        e: Signal::constant(e),
        partition: p,
        inadmissible_by_design: true,
    })
}

fn finish_campaign(c: &Campaign, gen: &CaseGenerator, budget: usize, seed: u64, out: &Output, name: &str) -> Outcome {
    let report = run_campaign(c);
    let adversarial = if budget > 0 {
        let a = adversarial_search(c, gen, budget, seed ^ 0x5eed)?;
        out.json("adversarial.json", &a)?;
        Some(a)
    } else {
        None
    };
    let full = json!({
        "guard": c.guard,
        "envelope": c.envelope.report(c.m, c.n),
        "campaign": report,
    });
    out.json(name, &full)?;
    let s = &report.summary;
    let summary = json!({ "summary": s, "adversarial_margin": adversarial.as_ref().map(|a| a.margin) });
    if !s.all_pass {
        return Err(Failure::Assertion(format!("{} of {} asserted cases failed", s.failed, s.asserted)));
    }
    Ok(summary)
}

fn guarded_envelope(cfg: &ExperimentConfig, lp: &sampled_iss::sampler::ClosedLoop) -> Result<(RateGuard, IssEnvelope), Failure> {
    let p = &cfg.envelope;
    let t = tables(cfg)?;
    let guard = match cfg.campaign.guard {
        Some(g) => RateGuard::manual(g.delta, g.kappa),
        None => estimate_rate_guard(lp, &cfg.clf().map_err(config_err)?, &t, p.epsilon, p.m, p.n, &cfg.probe())?,
    };
    Ok((guard, build_envelope(t, p.epsilon, None)?))
}

pub fn campaign(cfg: &ExperimentConfig, out: &Output) -> Outcome {
    let lp = cfg.closed_loop().map_err(config_err)?;
    let (guard, env) = guarded_envelope(cfg, &lp)?;
    let (n, m) = cfg.dims();
    let p = &cfg.envelope;
    let mut gen = CaseGenerator::new(n, m, p.m, p.n, cfg.horizon());
    gen.partition = cfg.partition;
    let mut cases = gen.generate(cfg.campaign.cases, &guard, cfg.seed)?;
    if cfg.campaign.include_zero_case {
        let partition = cases
            .first()
            .map(|c| c.partition.clone())
            .map_or_else(|| make_partition(PartitionKind::Uniform { step: 0.9 * guard.delta }, gen.horizon), Ok)?;
        cases.push(Case {
            id: cases.len(),
            x0: vec![0.0; n],
            u: Signal::zero(m),
            e: Signal::zero(n),
            partition,
            inadmissible_by_design: false,
        });
    }
    for _ in 0..cfg.campaign.inadmissible_cases {
        let id = cases.len();
        cases.push(inadmissible_case(id, &gen, &guard)?);
    }
    let c = Campaign::new(lp, env, guard, p.m, p.n, cases)?;
    finish_campaign(&c, &gen, cfg.campaign.adversarial_budget, cfg.seed, out, "report.json")
}

pub fn euler(cfg: &ExperimentConfig, out: &Output) -> Outcome {
    let lp = cfg.closed_loop().map_err(config_err)?;
    let e = &cfg.euler;
    let n = cfg.dims().0;
    let dir = 1.0 / (n as f64).sqrt();
    let (scale, power) = (e.noise_scale, e.noise_power);
    let schedule = RefinementSchedule::dyadic(
        e.step0,
        e.levels,
        cfg.horizon(),
        |d| Signal::constant(vec![scale * d.powf(power) * dir; n]),
        ScheduleInputs::Single(cfg.input().map_err(config_err)?),
    )?;
    let opts = EulerOptions {
        grid_points: e.grid_points,
        cauchy_ratio: e.cauchy_ratio,
        sustained: e.sustained,
    };
    let x0 = cfg.x0().map_err(config_err)?;
    match euler_study(&lp, &schedule, &x0, cfg.horizon(), &opts) {
        Ok(study) => {
            let report = json!({
                "report": study.report,
                "distances": study.report.distances(),
                "ratios": study.report.ratios(),
                "limit_final_state": study.limit().final_state(),
            });
            out.json("euler.json", &report)?;
            study.limit().write_csv(out.create("limit.csv")?)?;
            if !study.report.verdict {
                return Err(Failure::Assertion("refinement sequence is not Cauchy by the ratio test".into()));
            }
            Ok(report)
        }
        Err(err @ Error::DivergentLevel { level, t_bar }) => {
            out.json("euler.json", &json!({ "divergent_level": { "level": level, "t_bar": t_bar } }))?;
            Err(err.into())
        }
        Err(err) => Err(err.into()),
    }
}

pub fn weakiss(cfg: &ExperimentConfig, out: &Output) -> Outcome {
    if cfg.system != SystemId::Counterexample {
        return Err(Failure::Config("weakiss needs \"system\": \"counterexample\"".into()));
    }
    let w = &cfg.weakiss;
    let (sys, clf, k1) = (counterexample_system(), counterexample_clf(), Feedback::zero(1, 1));
    let cert = build_weak_iss_certificate(&sys, &clf, &k1, w.i_max, &CertificateOptions::default())?;
    out.json("certificate.json", &cert.to_json())?;
    if w.x0_max >= cert.valid_radius() {
        return Err(Failure::Config(format!(
            "x0_max {} is outside the certified radius {}",
            w.x0_max,
            cert.valid_radius()
        )));
    }
    let lp = cfg.configure(weak_iss_loop(&sys, &k1, &cert)?).map_err(config_err)?;
    let env = build_envelope(AlphaTables::identity(cert.valid_radius()), w.epsilon, Some(cert.alpha4_fn()))?;
    let horizon = cfg.horizon.unwrap_or(20.0);
    let kind = cfg.partition.unwrap_or(PartitionKind::Uniform { step: 0.01 });
    let p = make_partition(kind, horizon)?;
    // no observation error: the guard only has to admit the partition
    let guard = RateGuard::manual(p.upper_diameter() * (1.0 + 1e-9), 1.0);
    let mut gen = CaseGenerator::new(1, 1, w.x0_max, w.input_bound, horizon);
    gen.partition = Some(kind);
    gen.noise_fraction = 0.0;
    let cases = gen.generate(w.cases, &guard, cfg.seed)?;
    let c = Campaign::new(lp, env, guard, w.x0_max, w.input_bound, cases)?;
    finish_campaign(&c, &gen, cfg.campaign.adversarial_budget, cfg.seed, out, "report.json")
}
