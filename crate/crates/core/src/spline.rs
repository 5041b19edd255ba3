//! Natural cubic interpolating splines on strictly increasing knots.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots.
    curvature: Vec<f64>,
}

impl CubicSpline {
    /// Fits the natural spline through `(knots[i], values[i])`.
    pub fn natural(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = knots.len();
        if n < 2 || values.len() != n {
            return Err(Error::Shape(format!(
                "spline needs at least two knots and one value per knot (got {n} knots, {} values)",
                values.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "spline knots must be strictly increasing".into(),
            ));
        }
        let mut curvature = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations
            // h_{i-1} M_{i-1} + 2(h_{i-1}+h_i) M_i + h_i M_{i+1} = 6 (s_i - s_{i-1})
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for j in 0..m {
                let i = j + 1;
                let h0 = knots[i] - knots[i - 1];
                let h1 = knots[i + 1] - knots[i];
                let s0 = (values[i] - values[i - 1]) / h0;
                let s1 = (values[i + 1] - values[i]) / h1;
                diag[j] = 2.0 * (h0 + h1);
                upper[j] = h1;
                rhs[j] = 6.0 * (s1 - s0);
            }
            for j in 1..m {
                let lower = knots[j + 1] - knots[j];
                let w = lower / diag[j - 1];
                diag[j] -= w * upper[j - 1];
                rhs[j] -= w * rhs[j - 1];
            }
            curvature[m] = rhs[m - 1] / diag[m - 1];
            for j in (0..m - 1).rev() {
                curvature[j + 1] = (rhs[j] - upper[j] * curvature[j + 2]) / diag[j];
            }
        }
        Ok(Self {
            knots,
            values,
            curvature,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn n_knots(&self) -> usize {
        self.knots.len()
    }

    fn interval(&self, x: f64) -> usize {
        let idx = self.knots.partition_point(|&k| k <= x);
        idx.clamp(1, self.knots.len() - 1) - 1
    }

    /// Evaluates the spline. Arguments outside the knot range extrapolate
    /// the end cubic; callers are expected to enforce the domain.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.interval(x);
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        let (m0, m1) = (self.curvature[i], self.curvature[i + 1]);
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * (h * h) / 6.0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let i = self.interval(x);
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        let (m0, m1) = (self.curvature[i], self.curvature[i + 1]);
        (self.values[i + 1] - self.values[i]) / h
            + ((1.0 - 3.0 * a * a) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0
    }
}
