//! Scaled complex numbers for spectral data that grows like `exp(|Re mu| A)`.
//!
//! A value is stored as `m * exp(s)` with a complex mantissa kept near unit
//! magnitude and a real log-scale `s`. Characteristic functions at large real
//! spectral parameters overflow f64 around `|Re mu| A > 700`; every endpoint
//! quantity in the radial module is carried in this form and collapsed to a
//! plain `Complex64` only when it fits.

use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogComplex {
    pub mantissa: Complex64,
    pub log_scale: f64,
}

impl LogComplex {
    pub const ZERO: LogComplex = LogComplex { mantissa: Complex64::new(0.0, 0.0), log_scale: 0.0 };

    pub fn new(value: Complex64) -> Self {
        LogComplex { mantissa: value, log_scale: 0.0 }.normalized()
    }

    pub fn from_scaled(mantissa: Complex64, log_scale: f64) -> Self {
        LogComplex { mantissa, log_scale }.normalized()
    }

    pub fn from_real(v: f64) -> Self {
        Self::new(Complex64::new(v, 0.0))
    }

    fn normalized(self) -> Self {
        let m = self.mantissa.norm();
        if m == 0.0 || !m.is_finite() {
            return LogComplex { mantissa: self.mantissa, log_scale: 0.0 };
        }
        let shift = m.ln();
        if shift.abs() < 1.0 {
            return self;
        }
        LogComplex {
            mantissa: self.mantissa / m,
            log_scale: self.log_scale + shift,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.norm() == 0.0
    }

    /// log of the magnitude; -inf for zero.
    pub fn log_abs(&self) -> f64 {
        if self.is_zero() {
            f64::NEG_INFINITY
        } else {
            self.mantissa.norm().ln() + self.log_scale
        }
    }

    pub fn to_complex(&self) -> Complex64 {
        self.mantissa * self.log_scale.exp()
    }

    pub fn abs(&self) -> f64 {
        self.log_abs().exp()
    }

    pub fn mul(&self, other: &LogComplex) -> LogComplex {
        LogComplex {
            mantissa: self.mantissa * other.mantissa,
            log_scale: self.log_scale + other.log_scale,
        }
        .normalized()
    }

    pub fn div(&self, other: &LogComplex) -> LogComplex {
        LogComplex {
            mantissa: self.mantissa / other.mantissa,
            log_scale: self.log_scale - other.log_scale,
        }
        .normalized()
    }

    pub fn neg(&self) -> LogComplex {
        LogComplex { mantissa: -self.mantissa, log_scale: self.log_scale }
    }

    pub fn add(&self, other: &LogComplex) -> LogComplex {
        if self.is_zero() {
            return *other;
        }
        if other.is_zero() {
            return *self;
        }
        // Align on the larger scale.
        let (big, small) = if self.log_scale >= other.log_scale {
            (self, other)
        } else {
            (other, self)
        };
        let shift = (small.log_scale - big.log_scale).exp();
        LogComplex {
            mantissa: big.mantissa + small.mantissa * shift,
            log_scale: big.log_scale,
        }
        .normalized()
    }

    pub fn sub(&self, other: &LogComplex) -> LogComplex {
        self.add(&other.neg())
    }

    pub fn scale(&self, factor: f64) -> LogComplex {
        LogComplex { mantissa: self.mantissa * factor, log_scale: self.log_scale }.normalized()
    }

    /// Multiply by exp(t) without forming exp(t).
    pub fn mul_exp(&self, t: f64) -> LogComplex {
        LogComplex { mantissa: self.mantissa, log_scale: self.log_scale + t }
    }
}

/// sinh(z)/z in scaled form, stable for small and huge |Re z|.
pub fn sinh_over(z: Complex64) -> LogComplex {
    if z.norm() < 1e-6 {
        // sinh(z)/z = 1 + z^2/6 + ...
        return LogComplex::new(Complex64::new(1.0, 0.0) + z * z / 6.0);
    }
    let a = z.re.abs();
    // sinh(z) = (exp(z) - exp(-z))/2 = exp(a) * (exp(z - a) - exp(-z - a))/2
    let m = ((z - a).exp() - (-z - a).exp()) * 0.5;
    LogComplex::from_scaled(m / z, a)
}

/// cosh(z) in scaled form.
pub fn cosh_scaled(z: Complex64) -> LogComplex {
    let a = z.re.abs();
    let m = ((z - a).exp() + (-z - a).exp()) * 0.5;
    LogComplex::from_scaled(m, a)
}
