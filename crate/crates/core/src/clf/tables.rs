use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Clf;
use crate::error::{Error, Result};
use crate::linalg::{norm, random_in_ball, scale, sphere_directions};
use crate::types::fmt17;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableOptions {
    pub radius_max: f64,
    pub grid_size: usize,
    pub directions: usize,
    pub radii: usize,
    pub validation_points: usize,
    pub seed: u64,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            radius_max: 10.0,
            grid_size: 256,
            directions: 64,
            radii: 512,
            validation_points: 1000,
            seed: 0,
        }
    }
}

/// Tabulated lower/upper comparison functions of a CLF.
///
/// `underline(s)` approximates `min{|x| : V(x) >= s}` clipped to `<= s`, and
/// `overline(s)` approximates `max{|x| : V(x) <= s}`. Both are nondecreasing,
/// piecewise linear between grid levels, and saturate past the last level.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaTables {
    grid: Vec<f64>,
    level_min: Vec<f64>,
    underline: Vec<f64>,
    overline: Vec<f64>,
    grid_tol: f64,
    radius_max: f64,
    truncated_levels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub grid_tol: f64,
    pub radius_max: f64,
    pub truncated_levels: usize,
}

impl AlphaTables {
    /// Tables from closed-form comparison functions on `points` levels in `[0, s_max]`.
    pub fn from_functions(
        s_max: f64,
        points: usize,
        underline: impl Fn(f64) -> f64,
        overline: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        if !(s_max > 0.0) || points < 2 {
            return Err(Error::param("s_max", "need s_max > 0 and two levels"));
        }
        let grid: Vec<f64> = (0..points)
            .map(|k| s_max * k as f64 / (points - 1) as f64)
            .collect();
        let level_min: Vec<f64> = grid.iter().map(|s| underline(*s)).collect();
        let under = grid.iter().zip(&level_min).map(|(s, u)| u.min(*s)).collect();
        let over = grid.iter().map(|s| overline(*s)).collect();
        Self::from_parts(grid, level_min, under, over, 0.0, f64::NAN, 0)
    }

    /// `underline = overline = identity` on `[0, s_max]`.
    pub fn identity(s_max: f64) -> Self {
        Self::from_functions(s_max, 2, |s| s, |s| s).expect("valid identity tables")
    }

    fn from_parts(
        grid: Vec<f64>,
        level_min: Vec<f64>,
        underline: Vec<f64>,
        overline: Vec<f64>,
        grid_tol: f64,
        radius_max: f64,
        truncated_levels: usize,
    ) -> Result<Self> {
        let nondecreasing = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]);
        if !nondecreasing(&grid) || !nondecreasing(&underline) || !nondecreasing(&overline) {
            return Err(Error::param("tables", "levels and values must be nondecreasing"));
        }
        if grid[0] != 0.0 || underline[0] != 0.0 || overline[0] != 0.0 {
            return Err(Error::param("tables", "tables must vanish at zero"));
        }
        Ok(Self {
            grid,
            level_min,
            underline,
            overline,
            grid_tol,
            radius_max,
            truncated_levels,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn underline_values(&self) -> &[f64] {
        &self.underline
    }

    pub fn overline_values(&self) -> &[f64] {
        &self.overline
    }

    /// Unclipped level-set minimum `min{|x| : V(x) >= s}` on the grid.
    pub fn level_min_values(&self) -> &[f64] {
        &self.level_min
    }

    pub fn s_max(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn grid_tol(&self) -> f64 {
        self.grid_tol
    }

    pub fn radius_max(&self) -> f64 {
        self.radius_max
    }

    pub fn truncated_levels(&self) -> usize {
        self.truncated_levels
    }

    pub fn report(&self) -> TableReport {
        TableReport {
            grid_tol: self.grid_tol,
            radius_max: self.radius_max,
            truncated_levels: self.truncated_levels,
        }
    }

    pub fn underline(&self, s: f64) -> f64 {
        interp(&self.grid, &self.underline, s)
    }

    pub fn overline(&self, s: f64) -> f64 {
        interp(&self.grid, &self.overline, s)
    }

    pub fn level_min(&self, s: f64) -> f64 {
        interp(&self.grid, &self.level_min, s)
    }

    /// `true` when `s` lies inside the tabulated level range.
    pub fn in_range(&self, s: f64) -> bool {
        s <= self.s_max()
    }

    /// Largest `s` with `underline(s) <= y`; the flag is set when `y` is past
    /// the table and the value saturated.
    pub fn underline_inv(&self, y: f64) -> (f64, bool) {
        inverse(&self.grid, &self.underline, y)
    }

    /// Largest `s` with `overline(s) <= y`, saturating like [`Self::underline_inv`].
    pub fn overline_inv(&self, y: f64) -> (f64, bool) {
        inverse(&self.grid, &self.overline, y)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["s", "underline", "overline"])?;
        for k in 0..self.grid.len() {
            wtr.write_record([
                fmt17(self.grid[k]),
                fmt17(self.underline[k]),
                fmt17(self.overline[k]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads back `(s, underline, overline)` rows.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<(f64, f64, f64)>> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let f = |i: usize| {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::param("csv", e.to_string()))
            };
            rows.push((f(0)?, f(1)?, f(2)?));
        }
        Ok(rows)
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let j = xs.partition_point(|v| *v <= x);
    let (a, b) = (j - 1, j);
    let w = (x - xs[a]) / (xs[b] - xs[a]);
    ys[a] + w * (ys[b] - ys[a])
}

fn inverse(xs: &[f64], ys: &[f64], y: f64) -> (f64, bool) {
    if y < ys[0] {
        return (xs[0], false);
    }
    let last = xs.len() - 1;
    let j = ys.partition_point(|v| *v <= y) - 1;
    if j >= last {
        return (xs[last], y > ys[last]);
    }
    let w = (y - ys[j]) / (ys[j + 1] - ys[j]);
    (xs[j] + w * (xs[j + 1] - xs[j]), false)
}

const BISECTION_STEPS: usize = 44;

/// Estimates the comparison functions by sampling `V` along rays.
///
/// Along each of `directions` rays, `V` is sampled at `radii` equally spaced
/// radii up to `radius_max`; level crossings are refined by bisection between
/// bracketing samples. Levels that some ray never reaches are dropped and
/// counted in `truncated_levels`.
pub fn estimate_alpha_tables(clf: &Clf, opts: &TableOptions) -> Result<AlphaTables> {
    if !(opts.radius_max > 0.0) {
        return Err(Error::param("radius_max", "must be positive"));
    }
    if opts.grid_size < 16 {
        return Err(Error::param("grid_size", "must be at least 16"));
    }
    if opts.radii < 2 {
        return Err(Error::param("radii", "need at least two radii"));
    }
    let n = clf.dim();
    let dirs = sphere_directions(n, opts.directions, opts.seed);
    let radii: Vec<f64> = (0..opts.radii)
        .map(|k| opts.radius_max * k as f64 / (opts.radii - 1) as f64)
        .collect();
    let profiles: Vec<Vec<f64>> = dirs
        .iter()
        .map(|d| radii.iter().map(|r| clf.value(&scale(d, *r))).collect())
        .collect();

    let s_full = profiles
        .iter()
        .map(|p| p.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min);
    let s_global = profiles
        .iter()
        .flat_map(|p| p.iter().cloned())
        .fold(f64::NEG_INFINITY, f64::max);
    if !(s_full > 0.0) {
        return Err(Error::param("radius_max", "V never becomes positive along some ray"));
    }

    let g = opts.grid_size;
    let frac = |j: usize| (j as f64 / (g - 1) as f64).powi(2);
    let grid: Vec<f64> = (0..g).map(|j| s_full * frac(j)).collect();
    let truncated_levels = (0..g).filter(|j| s_global * frac(*j) > s_full).count();

    let mut level_min = vec![f64::INFINITY; g];
    let mut level_max = vec![0.0f64; g];
    for (d, prof) in dirs.iter().zip(&profiles) {
        let ray = |r: f64| clf.value(&scale(d, r));
        let mut first = 0usize;
        let mut last = 0usize;
        for (j, &s) in grid.iter().enumerate() {
            while first < prof.len() && prof[first] < s {
                first += 1;
            }
            let rho_first = if first == 0 {
                0.0
            } else if first == prof.len() {
                opts.radius_max
            } else {
                // V < s at lo, V >= s at hi
                let (mut lo, mut hi) = (radii[first - 1], radii[first]);
                for _ in 0..BISECTION_STEPS {
                    let mid = 0.5 * (lo + hi);
                    if ray(mid) >= s {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            };
            while last + 1 < prof.len() && prof[last + 1] <= s {
                last += 1;
            }
            let rho_last = if last + 1 == prof.len() {
                radii[last]
            } else if prof[last] > s {
                0.0
            } else {
                // V <= s at lo, V > s at hi
                let (mut lo, mut hi) = (radii[last], radii[last + 1]);
                for _ in 0..BISECTION_STEPS {
                    let mid = 0.5 * (lo + hi);
                    if ray(mid) <= s {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            };
            level_min[j] = level_min[j].min(rho_first);
            level_max[j] = level_max[j].max(rho_last);
        }
    }

    // Monotone envelopes: reverse cumulative min below, cumulative max above.
    for j in (0..g - 1).rev() {
        level_min[j] = level_min[j].min(level_min[j + 1]);
    }
    for j in 1..g {
        level_max[j] = level_max[j].max(level_max[j - 1]);
    }
    level_min[0] = 0.0;
    level_max[0] = 0.0;
    let underline: Vec<f64> = grid.iter().zip(&level_min).map(|(s, u)| u.min(*s)).collect();

    let mut tables = AlphaTables::from_parts(
        grid,
        level_min,
        underline,
        level_max,
        0.0,
        opts.radius_max,
        truncated_levels,
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed_7ab1e5);
    let mut worst = 0.0f64;
    for _ in 0..opts.validation_points {
        let x = random_in_ball(&mut rng, n, 0.5 * opts.radius_max);
        let v = clf.value(&x);
        if !tables.in_range(v) {
            continue;
        }
        let r = norm(&x);
        worst = worst
            .max(tables.underline(v) - r)
            .max(r - tables.overline(v));
    }
    tables.grid_tol = worst + 1e-12 * opts.radius_max;
    Ok(tables)
}
