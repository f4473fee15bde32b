use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type Field = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type NonlinearField = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Input matrix `G(x)` of shape `n x m`, stored column-major so that column
/// `j` is the input vector field `g_j(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InputMatrix {
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl InputMatrix {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            data: vec![0.0; n * m],
        }
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.m
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `G u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_add(u, &mut out);
        out
    }

    /// `out += G u`.
    pub fn apply_add(&self, u: &[f64], out: &mut [f64]) {
        for (j, uj) in u.iter().enumerate() {
            if *uj == 0.0 {
                continue;
            }
            for (o, g) in out.iter_mut().zip(self.column(j)) {
                *o += g * uj;
            }
        }
    }

    /// `G^T z`, i.e. the vector of inner products `<z, g_j>`.
    pub fn transpose_apply(&self, z: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|j| crate::linalg::dot(z, self.column(j)))
            .collect()
    }

    pub fn frobenius_distance(&self, other: &InputMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }
}

/// `x' = f(x) + G(x) u` with `f(0) = 0`.
#[derive(Clone)]
pub struct ControlAffineSystem {
    name: String,
    n: usize,
    m: usize,
    drift: Field,
    input: Field,
}

impl fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .finish()
    }
}

impl ControlAffineSystem {
    /// `drift` writes `f(x)` into an `n`-vector; `input` writes `G(x)`
    /// column-major into an `n * m` buffer.
    pub fn new<F, G>(name: impl Into<String>, n: usize, m: usize, drift: F, input: G) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        G: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if n == 0 || m == 0 {
            return Err(Error::param("n, m", "dimensions must be positive"));
        }
        let sys = Self {
            name: name.into(),
            n,
            m,
            drift: Arc::new(drift),
            input: Arc::new(input),
        };
        let f0 = sys.drift(&vec![0.0; n]);
        if f0.iter().any(|v| *v != 0.0) {
            return Err(Error::param("drift", format!("f(0) must vanish, got {f0:?}")));
        }
        Ok(sys)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        (self.drift)(x, &mut out);
        out
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out);
    }

    pub fn input_matrix(&self, x: &[f64]) -> InputMatrix {
        let mut g = InputMatrix::zeros(self.n, self.m);
        (self.input)(x, &mut g.data);
        g
    }

    pub fn input_matrix_into(&self, x: &[f64], g: &mut InputMatrix) {
        (self.input)(x, &mut g.data);
    }

    /// `f(x) + G(x) u`.
    pub fn eval(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = self.drift(x);
        self.input_matrix(x).apply_add(u, &mut out);
        out
    }
}

/// `x' = f(x, u)` with `f(0, 0) = 0`.
#[derive(Clone)]
pub struct FullyNonlinearSystem {
    name: String,
    n: usize,
    m: usize,
    f: NonlinearField,
}

impl fmt::Debug for FullyNonlinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FullyNonlinearSystem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .finish()
    }
}

impl FullyNonlinearSystem {
    pub fn new<F>(name: impl Into<String>, n: usize, m: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        if n == 0 || m == 0 {
            return Err(Error::param("n, m", "dimensions must be positive"));
        }
        let sys = Self {
            name: name.into(),
            n,
            m,
            f: Arc::new(f),
        };
        let f00 = sys.eval(&vec![0.0; n], &vec![0.0; m]);
        if f00.iter().any(|v| *v != 0.0) {
            return Err(Error::param("f", format!("f(0, 0) must vanish, got {f00:?}")));
        }
        Ok(sys)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        (self.f)(x, u, &mut out);
        out
    }

    pub fn eval_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.f)(x, u, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonzero_drift_at_origin() {
        let r = ControlAffineSystem::new("bad", 1, 1, |_x, o| o[0] = 1.0, |_x, g| g[0] = 1.0);
        assert!(matches!(r, Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn input_matrix_columns() {
        let sys = ControlAffineSystem::new(
            "two-input",
            3,
            2,
            |_x, o| o.fill(0.0),
            |x, g| {
                g.copy_from_slice(&[1.0, 0.0, -x[1], 0.0, 1.0, x[0]]);
            },
        )
        .unwrap();
        let g = sys.input_matrix(&[1.0, 2.0, 0.0]);
        assert_eq!(g.cols(), 2);
        assert_eq!(g.column(0), &[1.0, 0.0, -2.0]);
        assert_eq!(g.column(1), &[0.0, 1.0, 1.0]);
        assert_eq!(g.transpose_apply(&[0.0, 0.0, 1.0]), vec![-2.0, 1.0]);
        assert_eq!(sys.eval(&[1.0, 2.0, 0.0], &[1.0, 1.0]), vec![1.0, 1.0, -1.0]);
    }
}
