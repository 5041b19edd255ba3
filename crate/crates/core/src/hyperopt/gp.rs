//! Zero-mean Gaussian-process regression with a Matérn 5/2 kernel.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

pub const BASE_JITTER: f64 = 1e-8;
/// Candidate length scales: 16 values log-spaced over [0.05, 1].
pub const LENGTH_GRID: (f64, f64, usize) = (0.05, 1.0, 16);

pub fn matern52(r: f64, length: f64, signal_var: f64) -> Result<f64> {
    if !(length > 0.0) {
        return Err(Error::InvalidParameter(format!("length scale {length}")));
    }
    if !(r >= 0.0) {
        return Err(Error::Domain {
            func: "matern52",
            value: r,
        });
    }
    let s = 5f64.sqrt() * r / length;
    Ok(signal_var * (1.0 + s + s * s / 3.0) * (-s).exp())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// In-place lower Cholesky factor of a dense symmetric matrix.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for i in 0..j {
            a[i * n + j] = 0.0;
        }
    }
    true
}

fn forward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= l[i * n + k] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    x
}

fn backward_sub_t(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= l[k * n + i] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    x
}

#[derive(Debug, Clone)]
pub struct GpState {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
    pub length: f64,
    pub signal_var: f64,
    /// Diagonal jitter actually used, relative to the signal variance.
    pub jitter: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
}

impl GpState {
    /// Conditions on the observations with fixed kernel hyperparameters.
    pub fn with_hyperparameters(inputs: Vec<Vec<f64>>, outputs: Vec<f64>, length: f64, signal_var: f64) -> Result<Self> {
        let n = inputs.len();
        if n == 0 || outputs.len() != n {
            return Err(Error::Shape(format!("{} inputs, {} outputs", n, outputs.len())));
        }
        if !(signal_var > 0.0) {
            return Err(Error::InvalidParameter(format!("signal variance {signal_var}")));
        }
        let mut base = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let k = matern52(dist(&inputs[i], &inputs[j]), length, signal_var)?;
                base[i * n + j] = k;
                base[j * n + i] = k;
            }
        }
        let mut jitter = BASE_JITTER;
        loop {
            let mut a = base.clone();
            for i in 0..n {
                a[i * n + i] += jitter * signal_var;
            }
            if cholesky(&mut a, n) {
                let alpha = backward_sub_t(&a, n, &forward_sub(&a, n, &outputs));
                return Ok(Self {
                    inputs,
                    outputs,
                    length,
                    signal_var,
                    jitter,
                    chol: a,
                    alpha,
                });
            }
            jitter *= 10.0;
            if jitter > 1e-2 {
                return Err(Error::Cholesky);
            }
        }
    }

    /// Fits the length scale over [`LENGTH_GRID`] by log marginal
    /// likelihood; the signal variance is the observed variance about the
    /// zero prior mean, or 1 for a single zero observation.
    pub fn fit(inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self> {
        let n = outputs.len().max(1) as f64;
        let mut signal_var = outputs.iter().map(|y| y * y).sum::<f64>() / n;
        if !(signal_var > 1e-300) {
            signal_var = 1.0;
        }
        let (lo, hi, count) = LENGTH_GRID;
        let mut best: Option<(f64, GpState)> = None;
        for i in 0..count {
            let length = lo * (hi / lo).powf(i as f64 / (count - 1) as f64);
            let Ok(gp) = Self::with_hyperparameters(inputs.clone(), outputs.clone(), length, signal_var) else {
                continue;
            };
            let lml = gp.log_marginal_likelihood();
            if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                best = Some((lml, gp));
            }
        }
        best.map(|(_, gp)| gp).ok_or(Error::Cholesky)
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len();
        let fit: f64 = self.outputs.iter().zip(&self.alpha).map(|(y, a)| y * a).sum();
        let logdet: f64 = (0..n).map(|i| self.chol[i * n + i].ln()).sum();
        -0.5 * fit - logdet - 0.5 * n as f64 * std::f64::consts::TAU.ln()
    }

    /// Posterior mean and variance at `x`.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let n = self.len();
        let kx: Vec<f64> = self
            .inputs
            .iter()
            .map(|xi| matern52(dist(xi, x), self.length, self.signal_var).expect("validated length"))
            .collect();
        let mean = kx.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        let v = forward_sub(&self.chol, n, &kx);
        let var = self.signal_var - v.iter().map(|t| t * t).sum::<f64>();
        (mean, var.max(0.0))
    }
}

/// Expected improvement below `best` for a Gaussian with the given mean and
/// variance.
pub fn expected_improvement(mean: f64, variance: f64, best: f64) -> f64 {
    let sd = variance.max(0.0).sqrt();
    let gain = best - mean;
    if sd < 1e-300 {
        return gain.max(0.0);
    }
    let u = gain / sd;
    let n = Normal::standard();
    (gain * n.cdf(u) + sd * n.pdf(u)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn matern_values() {
        assert_eq!(matern52(0.0, 0.3, 2.0).unwrap(), 2.0);
        let s5 = 5f64.sqrt();
        let expect = 1.5 * (1.0 + s5 + 5.0 / 3.0) * (-s5).exp();
        assert!((matern52(0.7, 0.7, 1.5).unwrap() - expect).abs() < 1e-15);
        assert!(matern52(1.0, 0.0, 1.0).is_err());
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let v = matern52(i as f64 * 0.05, 0.4, 1.0).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn interpolates_and_reverts_to_prior() {
        let xs = vec![vec![0.1, 0.2], vec![0.8, 0.5], vec![0.4, 0.9], vec![0.5, 0.5]];
        let ys = vec![1.0, -0.5, 0.25, 2.0];
        let gp = GpState::fit(xs.clone(), ys.clone()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let (m, v) = gp.posterior(x);
            assert!((m - y).abs() < 1e-6 && v < 1e-6, "{m} {v}");
        }
        let (m, v) = gp.posterior(&[40.0, -30.0]);
        assert!(m.abs() < 1e-12);
        assert!((v - gp.signal_var).abs() < 1e-12);
    }

    #[test]
    fn three_point_posterior_against_hand_algebra() {
        let (l, s2) = (0.3, 1.7);
        let xs = [0.0, 0.25, 0.6];
        let ys = [0.4, -1.0, 0.9];
        let gp = GpState::with_hyperparameters(xs.iter().map(|x| vec![*x]).collect(), ys.to_vec(), l, s2).unwrap();
        let k = |a: f64, b: f64| matern52((a - b).abs(), l, s2).unwrap();
        // explicit 3x3 inverse by cofactors
        let j = BASE_JITTER * s2;
        let m: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|c| k(xs[i], xs[c]) + if i == c { j } else { 0.0 }).collect())
            .collect();
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let cof = |r: usize, c: usize| {
            let rows: Vec<usize> = (0..3).filter(|&i| i != r).collect();
            let cols: Vec<usize> = (0..3).filter(|&i| i != c).collect();
            let minor = m[rows[0]][cols[0]] * m[rows[1]][cols[1]] - m[rows[0]][cols[1]] * m[rows[1]][cols[0]];
            if (r + c).is_multiple_of(2) {
                minor
            } else {
                -minor
            }
        };
        let inv: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|c| cof(c, i) / det).collect()).collect();
        let q = 0.4;
        let kq: Vec<f64> = xs.iter().map(|x| k(*x, q)).collect();
        let mut mean = 0.0;
        let mut quad = 0.0;
        for i in 0..3 {
            for c in 0..3 {
                mean += kq[i] * inv[i][c] * ys[c];
                quad += kq[i] * inv[i][c] * kq[c];
            }
        }
        let (pm, pv) = gp.posterior(&[q]);
        assert!((pm - mean).abs() < 1e-10);
        assert!((pv - (s2 - quad)).abs() < 1e-10);
    }

    #[test]
    fn ei_limits_and_monte_carlo() {
        assert!((expected_improvement(0.3, 0.0, 1.0) - 0.7).abs() < 1e-15);
        assert_eq!(expected_improvement(1.3, 0.0, 1.0), 0.0);
        let (mu, var, best): (f64, f64, f64) = (0.2, 0.49, 0.5);
        let mut rng = stream_rng(99, 0);
        let normal = Normal::standard();
        let draws = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            let z = normal.inverse_cdf(u);
            acc += (best - (mu + var.sqrt() * z)).max(0.0);
        }
        let mc = acc / draws as f64;
        assert!((mc - expected_improvement(mu, var, best)).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn ei_is_nonnegative(mu in -10.0..10.0f64, var in 0.0..5.0f64, best in -10.0..10.0f64) {
            prop_assert!(expected_improvement(mu, var, best) >= 0.0);
        }
    }
}
