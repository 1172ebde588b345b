//! Closed-form math of the preference curve.
//!
//! The curve `g(x) = (σ(c·x + b) + a) / (1 + a)` replaces the logistic sigmoid as
//! the pairwise preference probability. With `(a, b, c) = (0, 0, 1)` it is exactly
//! the sigmoid and the loss reduces to plain BPR. For `a > 0` the gradient
//! magnitude `Δ_g` becomes bell-shaped, symmetric around `x_max`.
//!
//! Everything here is pure `f64` math with no state.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("invalid curve coefficients (a={a}, b={b}, c={c}): require finite a >= 0, finite b, finite c > 0")]
    InvalidCoefficients { a: f64, b: f64, c: f64 },
    #[error("curve with a = 0 has a monotone gradient magnitude and no interior maximum")]
    DegenerateCurve,
}

/// Logistic sigmoid, branching on sign so `exp` never overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `1 - σ(x)`, the BPR gradient magnitude. Computed as `σ(-x)` to keep precision
/// for large positive `x`.
#[inline]
pub fn delta_sigma(x: f64) -> f64 {
    sigmoid(-x)
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// The `(a, b, c)` parameterization of the preference curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceCurve {
    a: f64,
    b: f64,
    c: f64,
}

/// Location and height of the peak of `Δ_g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveExtremum {
    pub x_max: f64,
    pub delta_max: f64,
}

impl PreferenceCurve {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, CurveError> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) || a < 0.0 || c <= 0.0 {
            return Err(CurveError::InvalidCoefficients { a, b, c });
        }
        Ok(Self { a, b, c })
    }

    /// `(0, 0, 1)`: the plain sigmoid, i.e. the BPR loss.
    pub const fn sigmoid() -> Self {
        Self { a: 0.0, b: 0.0, c: 1.0 }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    #[inline]
    fn z(&self, x: f64) -> f64 {
        self.c * x + self.b
    }

    /// Preference probability `g(x)`, in `(a/(1+a), 1)`.
    pub fn g(&self, x: f64) -> f64 {
        (sigmoid(self.z(x)) + self.a) / (1.0 + self.a)
    }

    /// Gradient magnitude `Δ_g(x) = c·σ(z)(1 − σ(z)) / (σ(z) + a)` with `z = c·x + b`.
    ///
    /// Equals `-d/dx ln g(x)`.
    pub fn delta_g(&self, x: f64) -> f64 {
        let z = self.z(x);
        if self.a == 0.0 {
            // σ(1-σ)/σ, without the 0/0 once σ(z) underflows
            return self.c * sigmoid(-z);
        }
        let s = sigmoid(z);
        self.c * s * sigmoid(-z) / (s + self.a)
    }

    /// `-ln g(x)`, the per-triple Hard-BPR loss.
    ///
    /// For `z >= 0`: `-ln g = ln(1 + e^{-z}) - ln(1 + a·e^{-z}/(1+a))`.
    /// For `z < 0`:  `-ln g = ln((1+a)/a) - ln(1 + σ(z)/a)`, or `softplus(-z)` when `a = 0`.
    pub fn neg_log_g(&self, x: f64) -> f64 {
        let z = self.z(x);
        let a = self.a;
        if z >= 0.0 {
            let e = (-z).exp();
            e.ln_1p() - (a * e / (1.0 + a)).ln_1p()
        } else if a == 0.0 {
            softplus(-z)
        } else {
            let s = sigmoid(z);
            (a.ln_1p() - a.ln()) - (s / a).ln_1p()
        }
    }

    /// Peak of `Δ_g`. Undefined for `a = 0`, where `Δ_g` is monotone decreasing.
    pub fn extremum(&self) -> Result<CurveExtremum, CurveError> {
        let (a, b, c) = (self.a, self.b, self.c);
        if a == 0.0 {
            return Err(CurveError::DegenerateCurve);
        }
        let sqrt_a = a.sqrt();
        let sqrt_1pa = (1.0 + a).sqrt();
        let x_max = (-b + (sqrt_a / sqrt_1pa).ln()) / c;
        let delta_max = sqrt_1pa * c
            / (2.0 * sqrt_a + 2.0 * a * sqrt_a + sqrt_1pa + 2.0 * a * sqrt_1pa);
        Ok(CurveExtremum { x_max, delta_max })
    }

    /// Lower asymptote `a / (1 + a)` of `g`.
    pub fn lower_asymptote(&self) -> f64 {
        self.a / (1.0 + self.a)
    }
}

impl Default for PreferenceCurve {
    fn default() -> Self {
        Self::sigmoid()
    }
}

/// One row of a curve sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub delta_g: f64,
    pub delta_g_over_c: f64,
    pub g: f64,
    pub neg_log_g: f64,
}

/// Evaluates the curve on `steps` evenly spaced points over `[lo, hi]`.
pub fn curve_sweep(curve: &PreferenceCurve, lo: f64, hi: f64, steps: usize) -> Vec<CurvePoint> {
    assert!(steps >= 2, "a sweep needs at least two points");
    let step = (hi - lo) / (steps - 1) as f64;
    (0..steps)
        .map(|k| {
            let x = if k == steps - 1 { hi } else { lo + step * k as f64 };
            let delta_g = curve.delta_g(x);
            CurvePoint {
                x,
                delta_g,
                delta_g_over_c: delta_g / curve.c(),
                g: curve.g(x),
                neg_log_g: curve.neg_log_g(x),
            }
        })
        .collect()
}
