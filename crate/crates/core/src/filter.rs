//! Second-order Butterworth low-pass filter, discretized by the bilinear
//! transform with frequency prewarping.

use core::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::math::tan;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Coeffs {
    b: [f64; 3],
    a: [f64; 2],
}

impl Coeffs {
    fn new(natural_freq: f64, dt: f64) -> Result<Self> {
        if !(natural_freq > 0.0 && dt > 0.0) || natural_freq * dt >= core::f64::consts::PI {
            return Err(Error::InvalidParameter {
                name: "filter",
                reason: alloc::format!(
                    "need 0 < w_n < pi/dt, got w_n = {natural_freq}, dt = {dt}"
                ),
            });
        }
        let w = natural_freq;
        let k = w / tan(0.5 * w * dt);
        let a0 = k * k + SQRT_2 * w * k + w * w;
        let b0 = w * w / a0;
        Ok(Self {
            b: [b0, 2.0 * b0, b0],
            a: [
                2.0 * (w * w - k * k) / a0,
                (k * k - SQRT_2 * w * k + w * w) / a0,
            ],
        })
    }
}

/// Butterworth filter over `N` channels sharing one set of coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth2Array<const N: usize> {
    natural_freq: f64,
    c: Coeffs,
    s1: [f64; N],
    s2: [f64; N],
}

impl<const N: usize> Butterworth2Array<N> {
    pub fn new(natural_freq: f64, dt: f64) -> Result<Self> {
        Ok(Self {
            natural_freq,
            c: Coeffs::new(natural_freq, dt)?,
            s1: [0.0; N],
            s2: [0.0; N],
        })
    }

    pub fn natural_freq(&self) -> f64 {
        self.natural_freq
    }

    /// Puts every channel in steady state at `value`.
    pub fn reset(&mut self, value: &[f64; N]) {
        let Coeffs { b, a } = self.c;
        for i in 0..N {
            self.s2[i] = (b[2] - a[1]) * value[i];
            self.s1[i] = (b[1] - a[0]) * value[i] + self.s2[i];
        }
    }

    pub fn step(&mut self, x: &[f64; N]) -> [f64; N] {
        let Coeffs { b, a } = self.c;
        core::array::from_fn(|i| {
            let y = b[0] * x[i] + self.s1[i];
            self.s1[i] = b[1] * x[i] - a[0] * y + self.s2[i];
            self.s2[i] = b[2] * x[i] - a[1] * y;
            y
        })
    }
}

/// Single-channel Butterworth filter.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth2(Butterworth2Array<1>);

impl Butterworth2 {
    pub fn new(natural_freq: f64, dt: f64) -> Result<Self> {
        Butterworth2Array::new(natural_freq, dt).map(Self)
    }

    pub fn reset(&mut self, value: f64) {
        self.0.reset(&[value]);
    }

    pub fn step(&mut self, x: f64) -> f64 {
        self.0.step(&[x])[0]
    }

    /// Discrete numerator and denominator `(b, [1, a1, a2])`.
    pub fn coefficients(&self) -> ([f64; 3], [f64; 3]) {
        let c = self.0.c;
        (c.b, [1.0, c.a[0], c.a[1]])
    }
}
