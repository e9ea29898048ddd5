//! Monotone cubic Hermite interpolation (Fritsch-Carlson slopes).
//!
//! Shared by tabulated constitutive functions: the interpolant never
//! overshoots monotone data, which is what makes tabulated sigma and
//! entropy models safe to invert.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Node derivatives after Fritsch-Carlson limiting.
    ms: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Invalid(format!(
                "interpolation table length mismatch: {} abscissae, {} ordinates",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::Invalid(
                "interpolation table needs at least two knots".into(),
            ));
        }
        for v in xs.iter().chain(ys.iter()) {
            if !v.is_finite() {
                return Err(Error::Invalid("non-finite interpolation knot".into()));
            }
        }
        for k in 1..xs.len() {
            if xs[k] <= xs[k - 1] {
                return Err(Error::Invalid(format!(
                    "interpolation abscissae not strictly increasing at knot {k}"
                )));
            }
        }

        let n = xs.len();
        let h: Vec<f64> = (0..n - 1).map(|k| xs[k + 1] - xs[k]).collect();
        let d: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();

        // Shape-preserving three-point rule at the ends; a plain secant
        // would force the interior derivative above it on curved data.
        let endpoint = |h0: f64, h1: f64, d0: f64, d1: f64| -> f64 {
            let mut m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
            if m * d0 <= 0.0 {
                m = 0.0;
            } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
                m = 3.0 * d0;
            }
            m
        };
        let mut ms = vec![0.0; n];
        if n == 2 {
            ms[0] = d[0];
            ms[1] = d[0];
        } else {
            ms[0] = endpoint(h[0], h[1], d[0], d[1]);
            ms[n - 1] = endpoint(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
        }
        for k in 1..n - 1 {
            if d[k - 1] * d[k] <= 0.0 {
                ms[k] = 0.0;
            } else {
                // Weighted harmonic mean of the neighbouring secants.
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                ms[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
            }
        }

        Ok(Self { xs, ys, ms })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    fn segment(&self, x: f64) -> Result<usize> {
        let (lo, hi) = self.domain();
        if !(x >= lo && x <= hi) {
            return Err(Error::OutOfRange {
                quantity: "interpolation argument",
                value: x,
                lo,
                hi,
            });
        }
        // partition_point returns the first knot strictly above x.
        let k = self.xs.partition_point(|&v| v <= x);
        Ok(k.clamp(1, self.xs.len() - 1) - 1)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let k = self.segment(x)?;
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Ok(h00 * self.ys[k] + h10 * h * self.ms[k] + h01 * self.ys[k + 1] + h11 * h * self.ms[k + 1])
    }

    pub fn deriv(&self, x: f64) -> Result<f64> {
        let k = self.segment(x)?;
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let t2 = t * t;
        let dh00 = 6.0 * t2 - 6.0 * t;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = -6.0 * t2 + 6.0 * t;
        let dh11 = 3.0 * t2 - 2.0 * t;
        Ok((dh00 * self.ys[k] + dh01 * self.ys[k + 1]) / h + dh10 * self.ms[k] + dh11 * self.ms[k + 1])
    }

    /// Solve `eval(x) = y` for increasing data by bracketed Newton iteration.
    pub fn invert_increasing(&self, y: f64) -> Result<f64> {
        let (x_lo, x_hi) = self.domain();
        let (y_lo, y_hi) = (self.ys[0], *self.ys.last().unwrap());
        if !(y >= y_lo && y <= y_hi) {
            return Err(Error::OutOfRange {
                quantity: "inverse interpolation argument",
                value: y,
                lo: y_lo,
                hi: y_hi,
            });
        }
        let (mut lo, mut hi) = (x_lo, x_hi);
        let mut x = lo + (hi - lo) * ((y - y_lo) / (y_hi - y_lo)).clamp(0.0, 1.0);
        for _ in 0..100 {
            let f = self.eval(x)? - y;
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let df = self.deriv(x)?;
            let mut next = if df > 0.0 { x - f / df } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }
}
