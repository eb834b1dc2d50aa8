//! Monotone (shape-preserving) cubic Hermite interpolation on a 1-d grid,
//! with a safeguarded Newton inverse for strictly increasing curves.

use crate::error::{Error, Result};

/// Piecewise cubic Hermite interpolant with Fritsch-Carlson derivatives.
///
/// If the data are monotone, the interpolant is monotone on every segment.
#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(Error::EmptyInput("interpolation grid"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "interpolation grid must be strictly increasing".into(),
            ));
        }
        let d = pchip_derivatives(&x, &y);
        Ok(MonotoneCubic { x, y, d })
    }



    fn segment(&self, t: f64) -> usize {
        // index i with x[i] <= t <= x[i+1], clamped to valid segments
        match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(self.x.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.x.len() - 2),
        }
    }

    /// Interpolated value at `t`; `t` must lie within the grid.
    pub fn value(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }

    /// Derivative of the interpolant at `t`.
    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let dh00 = (6.0 * s2 - 6.0 * s) / h;
        let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
        let dh01 = (-6.0 * s2 + 6.0 * s) / h;
        let dh11 = 3.0 * s2 - 2.0 * s;
        dh00 * self.y[i] + dh10 * self.d[i] + dh01 * self.y[i + 1] + dh11 * self.d[i + 1]
    }

    /// Knot abscissae, values and derivatives of the interpolant.
    pub(crate) fn knots(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.x, &self.y, &self.d)
    }

    /// Solves `value(t) = c` for a strictly increasing interpolant.
    ///
    /// Brackets on the knot values, then runs Newton safeguarded by bisection
    /// until `|value(t) - c| <= rel_tol * |c|`.
    pub fn invert_increasing(&self, c: f64, rel_tol: f64) -> Result<f64> {
        let (y_min, y_max) = (self.y[0], *self.y.last().unwrap());
        if !(c >= y_min && c <= y_max) {
            return Err(Error::OutOfTableRange {
                value: c,
                min: y_min,
                max: y_max,
            });
        }
        // knot-level bracket
        let k = match self
            .y
            .binary_search_by(|v| v.partial_cmp(&c).unwrap())
        {
            Ok(i) => return Ok(self.x[i]),
            Err(i) => i.saturating_sub(1).min(self.x.len() - 2),
        };
        let (mut lo, mut hi) = (self.x[k], self.x[k + 1]);
        let mut t = 0.5 * (lo + hi);
        let tol = rel_tol * c.abs().max(f64::MIN_POSITIVE);
        for _ in 0..100 {
            let f = self.value(t) - c;
            if f.abs() <= tol {
                return Ok(t);
            }
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let df = self.derivative(t);
            let newton = t - f / df;
            t = if df > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Ok(t)
    }
}

fn pchip_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 2 {
        let slope = (y[1] - y[0]) / (x[1] - x[0]);
        return vec![slope, slope];
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = y
        .windows(2)
        .zip(&h)
        .map(|(w, h)| (w[1] - w[0]) / h)
        .collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    d[0] = edge_derivative(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = edge_derivative(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn edge_derivative(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    // non-centred three-point estimate, limited to preserve shape
    let mut d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        d = 0.0;
    } else if d0 * d1 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        d = 3.0 * d0;
    }
    d
}
