use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite partition `0 = t_0 < t_1 < ... < t_K` of `[0, T]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Partition {
    times: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Partition {
    type Error = Error;

    fn try_from(times: Vec<f64>) -> Result<Self> {
        Partition::new(times)
    }
}

impl From<Partition> for Vec<f64> {
    fn from(p: Partition) -> Self {
        p.times
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionKind {
    Uniform {
        step: f64,
    },
    /// Gaps drawn uniformly from `[step (1 - jitter), step (1 + jitter)]`.
    RandomizedJitter {
        step: f64,
        jitter_fraction: f64,
        seed: u64,
    },
}

impl PartitionKind {
    /// Largest gap this kind can produce.
    pub fn max_gap(&self) -> f64 {
        match *self {
            PartitionKind::Uniform { step } => step,
            PartitionKind::RandomizedJitter {
                step,
                jitter_fraction,
                ..
            } => step * (1.0 + jitter_fraction),
        }
    }

    /// Smallest gap this kind can produce.
    pub fn min_gap(&self) -> f64 {
        match *self {
            PartitionKind::Uniform { step } => step,
            PartitionKind::RandomizedJitter {
                step,
                jitter_fraction,
                ..
            } => step * (1.0 - jitter_fraction),
        }
    }
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Partition("need at least two times".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::Partition(format!("t_0 must be 0, got {}", times[0])));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::Partition(format!(
                    "times must be strictly increasing and finite ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of intervals `[t_i, t_{i+1})`.
    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn interval(&self, i: usize) -> (f64, f64) {
        (self.times[i], self.times[i + 1])
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn upper_diameter(&self) -> f64 {
        self.gaps().fold(0.0, f64::max)
    }

    pub fn lower_diameter(&self) -> f64 {
        self.gaps().fold(f64::INFINITY, f64::min)
    }

    fn gaps(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.windows(2).map(|w| w[1] - w[0])
    }

    /// Index of the interval containing `t` (clamped to the last one).
    pub fn locate(&self, t: f64) -> usize {
        match self.times.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(i) => i.min(self.intervals() - 1),
            Err(i) => i.saturating_sub(1).min(self.intervals() - 1),
        }
    }
}

pub fn upper_diameter(p: &Partition) -> f64 {
    p.upper_diameter()
}

pub fn lower_diameter(p: &Partition) -> f64 {
    p.lower_diameter()
}

/// Builds a partition whose last time is the first grid point at or past `horizon`.
pub fn make_partition(kind: PartitionKind, horizon: f64) -> Result<Partition> {
    match kind {
        PartitionKind::Uniform { step } => {
            check_step(step, horizon)?;
            // t_k = k * step avoids accumulated rounding.
            let k = (horizon / step - 1e-9).ceil().max(1.0) as usize;
            Partition::new((0..=k).map(|i| i as f64 * step).collect())
        }
        PartitionKind::RandomizedJitter {
            step,
            jitter_fraction,
            seed,
        } => {
            check_step(step, horizon)?;
            if !(0.0..1.0).contains(&jitter_fraction) {
                return Err(Error::param("jitter_fraction", "must lie in [0, 1)"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (lo, hi) = (step * (1.0 - jitter_fraction), step * (1.0 + jitter_fraction));
            let mut times = vec![0.0];
            let mut t = 0.0;
            while t < horizon - 1e-12 * horizon {
                let gap = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                t += gap;
                times.push(t);
            }
            Partition::new(times)
        }
    }
}

fn check_step(step: f64, horizon: f64) -> Result<()> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::param("step", format!("must be positive, got {step}")));
    }
    if !(horizon >= step) {
        return Err(Error::param(
            "horizon",
            format!("must be at least the step ({horizon} < {step})"),
        ));
    }
    Ok(())
}
