//! Gaussian thermal bath.
//!
//! Spectral density `S(w) = N exp(-(w t_b)^2 - beta w / 2)`, its correlation
//! function `C(t) = int S(w) e^{iwt} dw` and the principal-value transform
//! `D(E) = p.v. int S(w) / (w - E) dw`:
//!
//! ```text
//! C(t) = N sqrt(pi) / t_b * exp[(beta^2/4 - t^2 - i beta t) / (4 t_b^2)]
//! D(E) = -2 sqrt(pi) N exp[(beta / 4t_b)^2] F(E t_b + beta / (4 t_b))
//! ```
//!
//! with `F` Dawson's integral. `S` obeys `S(w) = e^{-beta w} S(-w)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{dawson, dawson_prime, Composite};

/// Scale applied to the unit normalization `1/(2 pi)` to obtain the default
/// `N`. Fixed once so that the full-line filtered operator of the reference
/// qubit (`H = 0.5 sz + sx`, `A = 0.5 sz`, `beta = 1`) has Frobenius norm 0.69.
pub const FILTER_CALIBRATION: f64 = 0.654;

/// Relative size of `|C|` at which correlation integrals are truncated.
pub const CUTOFF_RELATIVE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub beta: f64,
    pub t_b: f64,
    pub norm: f64,
}

impl BathSpec {
    pub fn new(beta: f64, t_b: f64, norm: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be finite and >= 0, got {beta}")));
        }
        if !(t_b.is_finite() && t_b > 0.0) {
            return Err(Error::InvalidParameter(format!("t_b must be finite and > 0, got {t_b}")));
        }
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidParameter(format!("norm must be finite and > 0, got {norm}")));
        }
        Ok(Self { beta, t_b, norm })
    }

    /// `t_b = beta / 4`, or 0.25 at infinite temperature.
    pub fn default_width(beta: f64) -> f64 {
        if beta > 0.0 {
            beta / 4.0
        } else {
            0.25
        }
    }

    /// Default normalization `N = FILTER_CALIBRATION / (2 pi)`.
    pub fn calibrated(beta: f64, t_b: f64) -> Result<Self> {
        Self::new(beta, t_b, FILTER_CALIBRATION / (2.0 * PI))
    }

    /// `N = 1 / (2 pi S_0(0))`, which makes the full-line filter of `A` at
    /// `H = 0`, `beta = 0` equal to `A`.
    pub fn unit(beta: f64, t_b: f64) -> Result<Self> {
        Self::new(beta, t_b, 1.0 / (2.0 * PI))
    }

    pub fn with_defaults(beta: f64) -> Result<Self> {
        Self::calibrated(beta, Self::default_width(beta))
    }

    pub fn with_norm(self, norm: f64) -> Result<Self> {
        Self::new(self.beta, self.t_b, norm)
    }

    pub fn spectral_density(&self, w: f64) -> f64 {
        self.norm * (-(w * self.t_b).powi(2) - 0.5 * self.beta * w).exp()
    }

    pub fn correlation(&self, t: f64) -> Complex64 {
        let s = 4.0 * self.t_b * self.t_b;
        let pre = self.norm * PI.sqrt() / self.t_b;
        let re = (0.25 * self.beta * self.beta - t * t) / s;
        pre * Complex64::new(re, -self.beta * t / s).exp()
    }

    /// `|C(0)|`.
    pub fn correlation_peak(&self) -> f64 {
        self.correlation(0.0).norm()
    }

    /// Log of the prefactor `exp[(beta / 4 t_b)^2]` shared by `D` and `C(0)`.
    fn shift(&self) -> f64 {
        self.beta / (4.0 * self.t_b)
    }

    /// Principal-value transform `D(E)`; infinite when the prefactor overflows.
    pub fn pv(&self, e: f64) -> f64 {
        let a = self.shift();
        let f = dawson(e * self.t_b + a);
        if f == 0.0 {
            return 0.0;
        }
        -2.0 * PI.sqrt() * self.norm * f.signum() * (a * a + f.abs().ln()).exp()
    }

    /// `dD/dE`.
    pub fn pv_prime(&self, e: f64) -> f64 {
        let a = self.shift();
        -2.0 * PI.sqrt() * self.norm * (a * a).exp() * self.t_b * dawson_prime(e * self.t_b + a)
    }

    /// Time after which `|C(t)| < rel |C(0)|`.
    pub fn cutoff_time(&self, rel: f64) -> f64 {
        2.0 * self.t_b * (-rel.ln()).max(0.0).sqrt()
    }

    /// `D(0) = -(i/2) int sgn(t) C(t) dt = int_0^inf Im C(t) dt`, by quadrature.
    pub fn d_zero(&self) -> Result<f64> {
        let peak = self.correlation_peak();
        if !peak.is_finite() {
            return Err(Error::Quadrature(format!("correlation prefactor overflows for beta={}, t_b={}", self.beta, self.t_b)));
        }
        let t_cut = self.cutoff_time(1e-16);
        let tail = self.correlation(t_cut).norm() * self.t_b;
        if tail > 1e-10 {
            return Err(Error::Quadrature(format!("tail {tail:.3e} at t_cut = {t_cut:.4}")));
        }
        let omega = self.beta / (4.0 * self.t_b * self.t_b);
        let panels = (t_cut * omega / PI * 4.0).ceil().max(40.0) as usize;
        let q = Composite::new(0.0, t_cut, panels);
        Ok(q.integrate(|t| self.correlation(t).im))
    }

    /// `int_a^b |C(t)| dt`.
    pub fn correlation_l1(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let t_cut = self.cutoff_time(1e-18);
        let hi = b.min(t_cut.max(a));
        if hi <= a {
            return 0.0;
        }
        let panels = ((hi - a) / self.t_b * 4.0).ceil().max(8.0) as usize;
        Composite::new(a, hi, panels).integrate(|t| self.correlation(t).norm())
    }

    /// `sqrt(max(0, 2 ln(pi sigma) / sigma) + beta^2)` with `sigma = 1 / t_b^2`.
    pub fn decay_time(&self) -> f64 {
        let sigma = 1.0 / (self.t_b * self.t_b);
        let log_term = (2.0 * (PI * sigma).ln() / sigma).max(0.0);
        (log_term + self.beta * self.beta).sqrt()
    }
}
