//! Small special-function helpers on top of `libm`.

use std::f64::consts::PI;

/// `sin(pi * x)` with exact zeros at the integers.
pub fn sin_pi(x: f64) -> f64 {
    if x.fract() == 0.0 {
        return 0.0;
    }
    // reduce to [-1, 1)
    let r = x - 2.0 * (x / 2.0).floor();
    let r = if r >= 1.0 { r - 2.0 } else { r };
    if r == 0.5 {
        1.0
    } else if r == -0.5 {
        -1.0
    } else {
        (PI * r).sin()
    }
}

/// `cos(pi * x)` with exact zeros at the half-integers.
pub fn cos_pi(x: f64) -> f64 {
    sin_pi(x + 0.5)
}

pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Reciprocal gamma function, entire; exactly zero at the non-positive integers.
pub fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x.fract() == 0.0 {
        return 0.0;
    }
    if x > 171.0 {
        return (-ln_gamma(x)).exp();
    }
    if x < -170.0 {
        // reflection: 1/Gamma(x) = sin(pi x) Gamma(1 - x) / pi
        let lg = ln_gamma(1.0 - x);
        return sin_pi(x) * lg.exp() / PI;
    }
    1.0 / gamma(x)
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}
