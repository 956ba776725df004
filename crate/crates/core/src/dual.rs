//! Forward-mode dual numbers carrying a gradient with respect to two
//! variables. Used to differentiate the closed-form loop field in (ρ, z).

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dual2 {
    pub v: f64,
    pub d: [f64; 2],
}

impl Dual2 {
    pub const fn constant(v: f64) -> Self {
        Self { v, d: [0.0, 0.0] }
    }

    pub const fn var(v: f64, index: usize) -> Self {
        let mut d = [0.0, 0.0];
        d[index] = 1.0;
        Self { v, d }
    }

    /// Applies a scalar function given its value and derivative at `self.v`.
    pub fn chain(self, value: f64, derivative: f64) -> Self {
        Self { v: value, d: [derivative * self.d[0], derivative * self.d[1]] }
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }

    pub fn powf(self, p: f64) -> Self {
        let value = self.v.powf(p);
        self.chain(value, p * self.v.powf(p - 1.0))
    }

    pub fn recip(self) -> Self {
        self.chain(1.0 / self.v, -1.0 / (self.v * self.v))
    }
}

impl Add for Dual2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { v: self.v + o.v, d: [self.d[0] + o.d[0], self.d[1] + o.d[1]] }
    }
}

impl Sub for Dual2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { v: self.v - o.v, d: [self.d[0] - o.d[0], self.d[1] - o.d[1]] }
    }
}

impl Mul for Dual2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self {
            v: self.v * o.v,
            d: [self.d[0] * o.v + self.v * o.d[0], self.d[1] * o.v + self.v * o.d[1]],
        }
    }
}

impl Div for Dual2 {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        Self { v: q, d: [(self.d[0] - q * o.d[0]) * inv, (self.d[1] - q * o.d[1]) * inv] }
    }
}

impl Neg for Dual2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self { v: -self.v, d: [-self.d[0], -self.d[1]] }
    }
}

impl Add<f64> for Dual2 {
    type Output = Self;
    fn add(self, o: f64) -> Self {
        Self { v: self.v + o, d: self.d }
    }
}

impl Sub<f64> for Dual2 {
    type Output = Self;
    fn sub(self, o: f64) -> Self {
        Self { v: self.v - o, d: self.d }
    }
}

impl Mul<f64> for Dual2 {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        Self { v: self.v * o, d: [self.d[0] * o, self.d[1] * o] }
    }
}

impl Mul<Dual2> for f64 {
    type Output = Dual2;
    fn mul(self, o: Dual2) -> Dual2 {
        o * self
    }
}
