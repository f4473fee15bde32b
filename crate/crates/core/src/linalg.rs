//! Small dense-vector helpers. States are plain `f64` slices.

use rand::Rng;

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// Sign with `sgn(0) = 0`.
pub fn sgn(s: f64) -> f64 {
    if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Uniform direction on the unit sphere of `R^n` (normalised Gaussian).
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
        let r = norm(&v);
        if r > 1e-12 {
            return v.into_iter().map(|c| c / r).collect();
        }
    }
}

/// Uniform point in the closed ball of radius `radius`.
pub fn random_in_ball<R: Rng + ?Sized>(rng: &mut R, n: usize, radius: f64) -> Vec<f64> {
    let d = random_direction(rng, n);
    let u: f64 = rng.random::<f64>();
    let r = radius * u.powf(1.0 / n as f64);
    scale(&d, r)
}

/// Point with uniform direction and radius drawn uniformly from `[lo, hi]`.
pub fn random_in_shell<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let d = random_direction(rng, n);
    let r = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    scale(&d, r)
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Quasi-uniform directions: exact for `n <= 2`, a Fibonacci lattice for
/// `n == 3`, seeded Gaussian samples above.
pub fn sphere_directions(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    match n {
        0 => vec![],
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count.max(4))
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / count.max(4) as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let count = count.max(8);
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * k as f64;
                    vec![rho * phi.cos(), rho * phi.sin(), z]
                })
                .collect()
        }
        _ => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..count).map(|_| random_direction(&mut rng, n)).collect()
        }
    }
}
