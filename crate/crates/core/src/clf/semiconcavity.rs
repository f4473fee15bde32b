use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Clf;
use crate::linalg::{distance, random_in_ball};

/// Largest midpoint ratio `(V(x) + V(y) - 2V((x+y)/2)) / |x-y|^2` observed at one
/// refinement scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    pub scale: f64,
    pub max_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SemiconcavityVerdict {
    /// Ratios stay bounded; `constant` is the largest nonnegative ratio seen.
    Bounded { constant: f64 },
    /// Ratios keep growing as pairs shrink; `growth` is the log-log slope.
    Divergent { growth: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiconcavityReport {
    pub scales: Vec<ScaleEstimate>,
    pub verdict: SemiconcavityVerdict,
    pub probes_outside_domain: usize,
}

const LEVELS: usize = 10;

/// Refinement sweep of the semiconcavity midpoint inequality.
///
/// At scales `rho, rho/2, ..., rho/2^9`, draws `trials` symmetric pairs
/// `c ± a` around each probe (`|a|` up to the scale, `|c|` up to a quarter of
/// it) and records the largest midpoint ratio. A least-squares slope of
/// `log(ratio)` against `log(1/scale)` above 1/2 is reported as divergent;
/// a kink of a convex piece gives slope 1, a semiconcave function slope 0.
pub fn check_semiconcavity(
    clf: &Clf,
    probes: &[Vec<f64>],
    rho: f64,
    trials: usize,
    seed: u64,
) -> SemiconcavityReport {
    let n = clf.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outside = probes.iter().filter(|p| !clf.semiconcave_domain(p)).count();
    let scales: Vec<ScaleEstimate> = (0..LEVELS)
        .map(|k| {
            let h = rho / 2f64.powi(k as i32);
            let mut worst = f64::NEG_INFINITY;
            for p in probes {
                for _ in 0..trials {
                    let c = random_in_ball(&mut rng, n, 0.25 * h);
                    let a = random_in_ball(&mut rng, n, h);
                    let mid: Vec<f64> = p.iter().zip(&c).map(|(p, c)| p + c).collect();
                    let x: Vec<f64> = mid.iter().zip(&a).map(|(m, a)| m + a).collect();
                    let y: Vec<f64> = mid.iter().zip(&a).map(|(m, a)| m - a).collect();
                    let d2 = distance(&x, &y).powi(2);
                    if d2 == 0.0 {
                        continue;
                    }
                    let r = (clf.value(&x) + clf.value(&y) - 2.0 * clf.value(&mid)) / d2;
                    worst = worst.max(r);
                }
            }
            ScaleEstimate {
                scale: h,
                max_ratio: worst,
            }
        })
        .collect();

    let finest = scales[LEVELS - 1].max_ratio;
    let slope = log_slope(&scales);
    let verdict = if finest > 1e-6 && slope > 0.5 {
        SemiconcavityVerdict::Divergent { growth: slope }
    } else {
        SemiconcavityVerdict::Bounded {
            constant: scales.iter().map(|s| s.max_ratio).fold(0.0, f64::max),
        }
    };
    SemiconcavityReport {
        scales,
        verdict,
        probes_outside_domain: outside,
    }
}

fn log_slope(scales: &[ScaleEstimate]) -> f64 {
    let pts: Vec<(f64, f64)> = scales
        .iter()
        .filter(|s| s.max_ratio > 0.0)
        .map(|s| ((1.0 / s.scale).ln(), s.max_ratio.ln()))
        .collect();
    if pts.len() < 3 {
        return 0.0;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
