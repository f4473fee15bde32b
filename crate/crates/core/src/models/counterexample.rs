use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clf::Clf;
use crate::error::{Error, Result};
use crate::feedback::Feedback;
use crate::linalg::{dot, norm, scale, sgn, sphere_directions};
use crate::sampler::{ClosedLoop, Plant};
use crate::types::FullyNonlinearSystem;

/// `x' = -x + u^2 x^2`: asymptotically controllable, but not ISS under any
/// continuous feedback.
pub fn counterexample_system() -> FullyNonlinearSystem {
    FullyNonlinearSystem::new("x' = -x + u^2 x^2", 1, 1, |x, u, f| {
        f[0] = -x[0] + u[0] * u[0] * x[0] * x[0];
    })
    .expect("valid system")
}

/// `V = |x|`, `zeta = sgn`, and `alpha = 0` (the zero control already gives decay).
pub fn counterexample_clf() -> Clf {
    Clf::builder("|x|", 1, |x: &[f64]| x[0].abs())
        .zeta("sgn", |x| vec![sgn(x[0])])
        .build()
        .expect("valid clf")
}

/// `x' = -x + (0 + u)^2 x^2`: the zero feedback with the disturbance entering raw.
pub fn raw_counterexample_loop() -> ClosedLoop {
    ClosedLoop::new(Plant::nonlinear(counterexample_system()), Feedback::zero(1, 1)).expect("dimensions agree")
}

fn decay_rate(sys: &FullyNonlinearSystem, clf: &Clf, k1: &Feedback, x: &[f64], p: &[f64]) -> Result<f64> {
    let mut v = k1.eval(x)?;
    for (vi, pi) in v.iter_mut().zip(p) {
        *vi += pi;
    }
    Ok(dot(&clf.zeta(x), &sys.eval(x, &v)) + clf.value(x) / 2.0)
}

/// Probe set on a sphere of radius `r` in `R^k`: deterministic directions
/// (exact `±e` in one dimension) plus the coordinate axes.
fn sphere_probe(k: usize, r: f64, count: usize) -> Vec<Vec<f64>> {
    if k == 1 {
        return if r == 0.0 { vec![vec![0.0]] } else { vec![vec![-r], vec![r]] };
    }
    let mut out: Vec<Vec<f64>> = sphere_directions(k, count, 17).into_iter().map(|d| scale(&d, r)).collect();
    for i in 0..k {
        for s in [-1.0, 1.0] {
            let mut e = vec![0.0; k];
            e[i] = s * r;
            out.push(e);
        }
    }
    out
}

/// `D(s, r) = sup { <zeta(x), f(x, K1(x) + p)> + V(x)/2 : |x| = s, |p| = r }`,
/// estimated as a maximum over `probes` directions on each sphere.
pub fn estimate_d(
    sys: &FullyNonlinearSystem,
    clf: &Clf,
    k1: &Feedback,
    s: f64,
    r: f64,
    probes: usize,
) -> Result<f64> {
    let xs = sphere_probe(sys.state_dim(), s, probes);
    let ps = sphere_probe(sys.input_dim(), r, probes);
    let mut best = f64::NEG_INFINITY;
    for x in &xs {
        for p in &ps {
            best = best.max(decay_rate(sys, clf, k1, x, p)?);
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandKind {
    /// `[i, i+1]`.
    Upper,
    /// `[1/(i+1), 1/i]`.
    Lower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub radius: f64,
    pub kind: BandKind,
    pub index: usize,
    /// Largest admissible radius found by bisection, before deflation and interleaving.
    pub raw_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertificateOptions {
    /// Points per band at which `D` is evaluated.
    pub band_points: usize,
    /// Points in `[0, b]` at which `D(s, .)` is evaluated.
    pub radius_points: usize,
    pub probes: usize,
    pub deflation: f64,
    /// Interleaving factor: `r'_i <= theta r_i`, `r_{i+1} <= theta r'_i`.
    pub theta: f64,
    /// Largest input bound tabulated for `alpha4`.
    pub alpha4_max: f64,
    pub alpha4_levels: usize,
    /// Radii scanned for `alpha4`.
    pub alpha4_radii: usize,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            band_points: 64,
            radius_points: 16,
            probes: 16,
            deflation: 0.9,
            theta: 0.99,
            alpha4_max: 2.0,
            alpha4_levels: 41,
            alpha4_radii: 4000,
        }
    }
}

/// Bands, the staircase `rho`, the gain `g` and `alpha4` for the weak-ISS
/// construction `F(x, p, u) = f(x, p + g(|x|) u)`.
///
/// The certificate is built for `|x| < i_max + 1`; beyond that `g` is held at
/// its last knot value and the band conditions are not checked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakIssCertificate {
    pub bands: Vec<Band>,
    /// `(s, g(s))` at `s = 0, 1, 2, ..., i_max`.
    pub g_knots: Vec<(f64, f64)>,
    /// `(s, alpha4(s))`.
    pub alpha4_table: Vec<(f64, f64)>,
    pub r_seq: Vec<f64>,
    pub r_prime_seq: Vec<f64>,
    pub i_max: usize,
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

impl WeakIssCertificate {
    /// Radius below which the construction is certified.
    pub fn valid_radius(&self) -> f64 {
        (self.i_max + 1) as f64
    }

    /// `rho(s) = r_k` on `[k, k+1)`, `r'_k` on `[1/(k+1), 1/k)`, `rho(0) = 0`;
    /// past the generated bands the last value is kept.
    pub fn rho(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s >= 1.0 {
            let k = (s.floor() as usize).clamp(1, self.i_max);
            return self.r_seq[k - 1];
        }
        let k = ((1.0 / s).floor() as usize).clamp(1, self.i_max);
        self.r_prime_seq[k - 1]
    }

    /// Clamped-smoothstep (C^1) interpolation of the knots.
    pub fn g(&self, s: f64) -> f64 {
        let knots = &self.g_knots;
        if s <= 1.0 {
            return 1.0;
        }
        let last = knots.len() - 1;
        if s >= knots[last].0 {
            return knots[last].1;
        }
        let k = s.floor() as usize;
        let (a, b) = (knots[k], knots[k + 1]);
        a.1 + (b.1 - a.1) * smoothstep(s - a.0)
    }

    /// `G(x) = g(|x|) I`, returned as the scalar factor.
    pub fn g_matrix(&self, x: &[f64]) -> f64 {
        self.g(norm(x))
    }

    /// Piecewise-linear `alpha4`, extrapolated with slope 1 past the table.
    pub fn alpha4(&self, s: f64) -> f64 {
        let t = &self.alpha4_table;
        let last = t.len() - 1;
        if s >= t[last].0 {
            return t[last].1 + (s - t[last].0);
        }
        let j = t.partition_point(|p| p.0 <= s).max(1);
        let (a, b) = (t[j - 1], t[j]);
        a.1 + (b.1 - a.1) * (s - a.0) / (b.0 - a.0)
    }

    pub fn alpha4_fn(&self) -> Arc<dyn Fn(f64) -> f64 + Send + Sync> {
        let c = self.clone();
        Arc::new(move |s| c.alpha4(s))
    }

    /// JSON with `bands`, `g_knots` and `alpha4_table`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "bands": self.bands.iter().map(|b| serde_json::json!({"lo": b.lo, "hi": b.hi, "radius": b.radius})).collect::<Vec<_>>(),
            "g_knots": self.g_knots,
            "alpha4_table": self.alpha4_table,
            "r_seq": self.r_seq,
            "r_prime_seq": self.r_prime_seq,
            "i_max": self.i_max,
        })
    }
}

/// Largest `b` (approximately, by bisection) with `D(s, c) < 0` for all sampled
/// `s` in `[lo, hi]` and `c` in `[0, b]`.
#[allow(clippy::too_many_arguments)]
fn band_radius(
    sys: &FullyNonlinearSystem,
    clf: &Clf,
    k1: &Feedback,
    lo: f64,
    hi: f64,
    opts: &CertificateOptions,
) -> Result<f64> {
    let ss: Vec<f64> = (0..opts.band_points)
        .map(|k| lo + (hi - lo) * k as f64 / (opts.band_points - 1) as f64)
        .collect();
    let negative = |b: f64| -> Result<bool> {
        for &s in &ss {
            for j in 0..=opts.radius_points {
                let c = b * j as f64 / opts.radius_points as f64;
                if estimate_d(sys, clf, k1, s, c, opts.probes)? >= 0.0 {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    };
    if !negative(0.0)? {
        return Ok(0.0);
    }
    let mut hi_b = 1.0;
    while negative(hi_b)? {
        hi_b *= 2.0;
        if hi_b > 1e6 {
            return Ok(hi_b);
        }
    }
    let mut lo_b = 0.0;
    for _ in 0..50 {
        let mid = 0.5 * (lo_b + hi_b);
        if negative(mid)? {
            lo_b = mid;
        } else {
            hi_b = mid;
        }
    }
    Ok(lo_b)
}

/// Builds the certificate for bands `[i, i+1]` and `[1/(i+1), 1/i]`,
/// `i = 1..=i_max`.
///
/// Band radii are deflated by `opts.deflation` and then interleaved so that
/// `0 < r_{i+1} < r'_i < r_i`. The gain knots are `g(1) = 1` and
/// `g(k) = r_k / (k + 1)` for `k >= 2`, which gives `g(s) <= rho(s)/s` on
/// `[2, i_max + 1)` because `g` is nonincreasing. `alpha4(s)` is the largest
/// scanned radius at which the decay `<zeta, f(x, K1 + g u)> + V/2 < 0` fails
/// for some probed `|u| <= s`, made monotone and maxed with `s`.
pub fn build_weak_iss_certificate(
    sys: &FullyNonlinearSystem,
    clf: &Clf,
    k1: &Feedback,
    i_max: usize,
    opts: &CertificateOptions,
) -> Result<WeakIssCertificate> {
    if i_max < 2 {
        return Err(Error::param("i_max", "need at least two bands"));
    }
    let raw: Vec<(f64, f64)> = (1..=i_max)
        .into_par_iter()
        .map(|i| {
            let fi = i as f64;
            let upper = band_radius(sys, clf, k1, fi, fi + 1.0, opts)?;
            let lower = band_radius(sys, clf, k1, 1.0 / (fi + 1.0), 1.0 / fi, opts)?;
            Ok((upper, lower))
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, (u, l)) in raw.iter().enumerate() {
        let i = i + 1;
        if !(*u > 0.0) {
            return Err(Error::BandInfeasible {
                band: format!("[{i}, {}]", i + 1),
            });
        }
        if !(*l > 0.0) {
            return Err(Error::BandInfeasible {
                band: format!("[1/{}, 1/{i}]", i + 1),
            });
        }
    }
    let mut r_seq = Vec::with_capacity(i_max);
    let mut r_prime_seq = Vec::with_capacity(i_max);
    let mut bands = Vec::with_capacity(2 * i_max);
    for (k, (u, l)) in raw.iter().enumerate() {
        let i = (k + 1) as f64;
        let mut r = opts.deflation * u;
        if let Some(prev) = r_prime_seq.last() {
            r = r.min(opts.theta * prev);
        }
        let rp = (opts.deflation * l).min(opts.theta * r);
        r_seq.push(r);
        r_prime_seq.push(rp);
        bands.push(Band {
            lo: i,
            hi: i + 1.0,
            radius: r,
            kind: BandKind::Upper,
            index: k + 1,
            raw_radius: *u,
        });
        bands.push(Band {
            lo: 1.0 / (i + 1.0),
            hi: 1.0 / i,
            radius: rp,
            kind: BandKind::Lower,
            index: k + 1,
            raw_radius: *l,
        });
    }
    let mut g_knots = vec![(0.0, 1.0), (1.0, 1.0)];
    for k in 2..=i_max {
        let h = r_seq[k - 1] / (k as f64 + 1.0);
        let prev = g_knots.last().unwrap().1;
        g_knots.push((k as f64, h.min(prev)));
    }
    let mut cert = WeakIssCertificate {
        bands,
        g_knots,
        alpha4_table: vec![(0.0, 0.0), (1.0, 1.0)],
        r_seq,
        r_prime_seq,
        i_max,
    };
    cert.alpha4_table = tabulate_alpha4(sys, clf, k1, &cert, opts)?;
    Ok(cert)
}

fn tabulate_alpha4(
    sys: &FullyNonlinearSystem,
    clf: &Clf,
    k1: &Feedback,
    cert: &WeakIssCertificate,
    opts: &CertificateOptions,
) -> Result<Vec<(f64, f64)>> {
    let top = cert.valid_radius();
    let radii: Vec<f64> = (1..=opts.alpha4_radii)
        .map(|k| top * k as f64 / opts.alpha4_radii as f64)
        .collect();
    let levels: Vec<f64> = (0..opts.alpha4_levels)
        .map(|j| opts.alpha4_max * j as f64 / (opts.alpha4_levels - 1) as f64)
        .collect();
    let fractions = [0.0, 0.25, 0.5, 0.75, 1.0];
    let failing: Vec<f64> = levels
        .par_iter()
        .map(|&s| {
            let mut worst = 0.0f64;
            for (k, &rad) in radii.iter().enumerate() {
                let xs = sphere_probe(sys.state_dim(), rad, opts.probes);
                'probe: for x in &xs {
                    let g = cert.g_matrix(x);
                    for frac in fractions {
                        for u in sphere_probe(sys.input_dim(), frac * s, opts.probes) {
                            let p: Vec<f64> = u.iter().map(|c| g * c).collect();
                            if decay_rate(sys, clf, k1, x, &p)? >= 0.0 {
                                // the next scanned radius is the first that may pass
                                worst = worst.max(radii.get(k + 1).copied().unwrap_or(top));
                                break 'probe;
                            }
                        }
                    }
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Vec::with_capacity(levels.len());
    let mut run = 0.0f64;
    for (s, f) in levels.iter().zip(failing) {
        run = run.max(f).max(*s);
        table.push((*s, run));
    }
    Ok(table)
}

/// `F(x, p, u) = f(x, p + g(|x|) u)` under the feedback `k1`.
pub fn weak_iss_loop(sys: &FullyNonlinearSystem, k1: &Feedback, cert: &WeakIssCertificate) -> Result<ClosedLoop> {
    let c = cert.clone();
    ClosedLoop::new(Plant::nonlinear_with_gain(sys.clone(), move |x| c.g_matrix(x)), k1.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parts() -> (FullyNonlinearSystem, Clf, Feedback) {
        (counterexample_system(), counterexample_clf(), Feedback::zero(1, 1))
    }

    #[test]
    fn system_examples() {
        let f = counterexample_system();
        assert_eq!(f.eval(&[0.0], &[0.0]), vec![0.0]);
        assert_eq!(f.eval(&[4.0], &[1.0]), vec![12.0]);
        assert_eq!(f.eval(&[2.5], &[0.0]), vec![-2.5]);
    }

    #[test]
    fn d_closed_form() {
        let (sys, clf, k1) = parts();
        let d = |s, r| estimate_d(&sys, &clf, &k1, s, r, 8).unwrap();
        assert!((d(1.0, 0.5) + 0.25).abs() < 1e-15);
        assert!((d(2.0, 1.0) - 3.0).abs() < 1e-15);
        assert!((d(3.0, 0.0) + 1.5).abs() < 1e-15);
        for (s, r) in [(0.3, 0.7), (1.7, 0.2), (5.0, 0.05)] {
            assert!((d(s, r) - (r * r * s * s - s / 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn certificate_invariants() {
        let (sys, clf, k1) = parts();
        let cert = build_weak_iss_certificate(&sys, &clf, &k1, 6, &CertificateOptions::default()).unwrap();
        let r1 = cert.r_seq[0];
        assert!((0.40..0.50).contains(&r1), "{r1}");
        for i in 0..cert.i_max {
            assert!(cert.r_prime_seq[i] < cert.r_seq[i]);
            if i + 1 < cert.i_max {
                assert!(cert.r_seq[i + 1] < cert.r_prime_seq[i]);
            }
        }
        assert_eq!(cert.g(0.5), 1.0);
        for k in 0..=2000 {
            let s = k as f64 * cert.valid_radius() / 2000.0;
            assert!(cert.g(s) <= 1.0);
            if (2.0..cert.valid_radius()).contains(&s) {
                assert!(cert.g(s) * s <= cert.rho(s) + 1e-15, "{s}");
            }
        }
        for (s, a) in &cert.alpha4_table {
            assert!(a >= s);
        }
        let a1 = cert.alpha4(1.0);
        assert!(a1 > 1.0 && a1 < 2.0, "{a1}");
    }
}
