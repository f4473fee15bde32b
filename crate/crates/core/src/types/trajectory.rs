use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::Partition;
use crate::error::{Error, Result};
use crate::linalg::norm;

/// How a sampling solution ended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Status {
    Completed,
    /// `|x|` passed the escape radius at `t_bar`.
    BlowUp { t_bar: f64 },
    /// The state crossed the boundary of the region where the CLF's
    /// semiconcavity estimates hold.
    LeftDomain { t: f64, region: String },
}

impl Status {
    pub fn is_blow_up(&self) -> bool {
        matches!(self, Status::BlowUp { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainExit {
    pub t: f64,
    pub interval: usize,
    pub region: String,
}

/// Sampling solution on a finite partition.
///
/// Dense states are stored flat (`n` values per point). The state at each
/// sample time `t_i` is recorded once, as the first dense point of interval
/// `i`; the final state is tagged with interval index `K` (one past the last
/// interval).
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub(crate) partition: Partition,
    pub(crate) n: usize,
    pub(crate) m: usize,
    pub(crate) sample_states: Vec<f64>,
    pub(crate) dense_t: Vec<f64>,
    pub(crate) dense_x: Vec<f64>,
    pub(crate) dense_interval: Vec<usize>,
    pub(crate) held: Vec<f64>,
    pub(crate) status: Status,
    pub(crate) domain_exit: Option<DomainExit>,
}

/// One row of the trajectory CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub k: Vec<f64>,
    pub interval: usize,
}

impl Trajectory {
    pub(crate) fn start(partition: Partition, x0: &[f64], m: usize) -> Self {
        let n = x0.len();
        Self {
            partition,
            n,
            m,
            sample_states: x0.to_vec(),
            dense_t: vec![0.0],
            dense_x: x0.to_vec(),
            dense_interval: vec![0],
            held: Vec::new(),
            status: Status::Completed,
            domain_exit: None,
        }
    }

    pub(crate) fn push_dense(&mut self, t: f64, x: &[f64], interval: usize) {
        self.dense_t.push(t);
        self.dense_x.extend_from_slice(x);
        self.dense_interval.push(interval);
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn status(&self) -> &Status {
        &self.status
    }

    pub fn domain_exit(&self) -> Option<&DomainExit> {
        self.domain_exit.as_ref()
    }

    /// Number of sample states `x_0, ..., x_k` reached.
    pub fn sample_count(&self) -> usize {
        self.sample_states.len() / self.n
    }

    pub fn sample_state(&self, i: usize) -> &[f64] {
        &self.sample_states[i * self.n..(i + 1) * self.n]
    }

    pub fn sample_time(&self, i: usize) -> f64 {
        self.partition.times()[i]
    }

    /// Number of intervals on which a control was held.
    pub fn held_count(&self) -> usize {
        if self.m == 0 {
            0
        } else {
            self.held.len() / self.m
        }
    }

    pub fn held_control(&self, i: usize) -> &[f64] {
        &self.held[i * self.m..(i + 1) * self.m]
    }

    pub fn dense_len(&self) -> usize {
        self.dense_t.len()
    }

    pub fn dense_time(&self, k: usize) -> f64 {
        self.dense_t[k]
    }

    pub fn dense_times(&self) -> &[f64] {
        &self.dense_t
    }

    pub fn dense_state(&self, k: usize) -> &[f64] {
        &self.dense_x[k * self.n..(k + 1) * self.n]
    }

    pub fn dense_interval(&self, k: usize) -> usize {
        self.dense_interval[k]
    }

    pub fn final_time(&self) -> f64 {
        *self.dense_t.last().unwrap()
    }

    pub fn final_state(&self) -> &[f64] {
        self.dense_state(self.dense_len() - 1)
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.dense_len())
            .map(|k| norm(self.dense_state(k)))
            .fold(0.0, f64::max)
    }

    /// Linear interpolation of the dense record at `t` (clamped to its range).
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let ts = &self.dense_t;
        if t <= ts[0] {
            return self.dense_state(0).to_vec();
        }
        let last = ts.len() - 1;
        if t >= ts[last] {
            return self.dense_state(last).to_vec();
        }
        let j = ts.partition_point(|s| *s <= t);
        let (a, b) = (j - 1, j);
        let (ta, tb) = (ts[a], ts[b]);
        if tb <= ta {
            return self.dense_state(b).to_vec();
        }
        let w = (t - ta) / (tb - ta);
        self.dense_state(a)
            .iter()
            .zip(self.dense_state(b))
            .map(|(xa, xb)| xa + w * (xb - xa))
            .collect()
    }

    /// Interpolated states on `points` uniformly spaced times over `[0, horizon]`.
    pub fn resample(&self, horizon: f64, points: usize) -> Vec<Vec<f64>> {
        let points = points.max(2);
        (0..points)
            .map(|k| self.state_at(horizon * k as f64 / (points - 1) as f64))
            .collect()
    }

    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let last_held = self.held_count().saturating_sub(1);
        (0..self.dense_len())
            .map(|k| {
                let interval = self.dense_interval[k];
                let held = if self.held_count() == 0 {
                    vec![0.0; self.m]
                } else {
                    self.held_control(interval.min(last_held)).to_vec()
                };
                CsvRow {
                    t: self.dense_t[k],
                    x: self.dense_state(k).to_vec(),
                    k: held,
                    interval,
                }
            })
            .collect()
    }

    /// Writes `t,x1..xn,k1..km,interval_index`, one row per dense point, floats
    /// with 17 significant digits. The row that opens each interval is the
    /// sample row `x_i`; the final row repeats the last held control.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(csv_header(self.n, self.m))?;
        for row in self.csv_rows() {
            let mut rec = Vec::with_capacity(2 + self.n + self.m);
            rec.push(fmt17(row.t));
            rec.extend(row.x.iter().map(|v| fmt17(*v)));
            rec.extend(row.k.iter().map(|v| fmt17(*v)));
            rec.push(row.interval.to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn csv_header(n: usize, m: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.extend((1..=m).map(|j| format!("k{j}")));
    h.push("interval_index".into());
    h
}

/// Float with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses a trajectory CSV back into rows, inferring `n` and `m` from the header.
pub fn read_csv<R: Read>(r: R) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let n = headers.iter().filter(|h| h.starts_with('x')).count();
    let m = headers.iter().filter(|h| h.starts_with('k')).count();
    if headers.len() != n + m + 2 {
        return Err(Error::param("csv", "unexpected header"));
    }
    let bad = |e: std::num::ParseFloatError| Error::param("csv", e.to_string());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| rec[i].parse::<f64>().map_err(bad);
        rows.push(CsvRow {
            t: f(0)?,
            x: (1..=n).map(f).collect::<Result<_>>()?,
            k: (n + 1..=n + m).map(f).collect::<Result<_>>()?,
            interval: rec[n + m + 1]
                .parse()
                .map_err(|e: std::num::ParseIntError| Error::param("csv", e.to_string()))?,
        });
    }
    Ok(rows)
}
