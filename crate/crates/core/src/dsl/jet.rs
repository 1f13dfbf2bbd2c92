//! Second-order forward-mode jets over `n` variables.
//!
//! The Hessian is stored as the packed upper triangle (row-major, `i <= j`),
//! so it is symmetric by construction.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Packed upper triangle, length `n(n+1)/2`.
    pub hess: Vec<f64>,
}

#[inline]
pub fn packed_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

impl Jet2 {
    pub fn constant(n: usize, value: f64) -> Jet2 {
        Jet2 { value, grad: vec![0.0; n], hess: vec![0.0; n * (n + 1) / 2] }
    }

    pub fn variable(n: usize, index: usize, value: f64) -> Jet2 {
        let mut j = Jet2::constant(n, value);
        j.grad[index] = 1.0;
        j
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn h(&self, i: usize, j: usize) -> f64 {
        self.hess[packed_index(self.dim(), i, j)]
    }

    pub fn is_constant(&self) -> bool {
        self.grad.iter().all(|g| *g == 0.0) && self.hess.iter().all(|h| *h == 0.0)
    }

    /// Chain rule for a scalar function with derivatives `d1 = f'(a)`, `d2 = f''(a)`.
    pub fn chain(&self, value: f64, d1: f64, d2: f64) -> Jet2 {
        let n = self.dim();
        let grad = self.grad.iter().map(|g| d1 * g).collect();
        let mut hess = Vec::with_capacity(self.hess.len());
        for i in 0..n {
            for j in i..n {
                hess.push(d1 * self.hess[packed_index(n, i, j)] + d2 * self.grad[i] * self.grad[j]);
            }
        }
        Jet2 { value, grad, hess }
    }

    pub fn scale(&self, s: f64) -> Jet2 {
        Jet2 {
            value: self.value * s,
            grad: self.grad.iter().map(|g| g * s).collect(),
            hess: self.hess.iter().map(|h| h * s).collect(),
        }
    }

    /// Full symmetric Hessian as a row-major `n*n` vector.
    pub fn hessian_full(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = self.h(i, j);
            }
        }
        out
    }

    /// Reciprocal; caller guarantees `value != 0`.
    pub fn recip(&self) -> Jet2 {
        let v = self.value;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }
}

impl Add for &Jet2 {
    type Output = Jet2;
    fn add(self, o: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value + o.value,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a + b).collect(),
            hess: self.hess.iter().zip(&o.hess).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Jet2 {
    type Output = Jet2;
    fn sub(self, o: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value - o.value,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a - b).collect(),
            hess: self.hess.iter().zip(&o.hess).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &Jet2 {
    type Output = Jet2;
    fn mul(self, o: &Jet2) -> Jet2 {
        let n = self.dim();
        let (a, b) = (self.value, o.value);
        let grad = self.grad.iter().zip(&o.grad).map(|(ga, gb)| a * gb + b * ga).collect();
        let mut hess = Vec::with_capacity(self.hess.len());
        for i in 0..n {
            for j in i..n {
                let k = packed_index(n, i, j);
                hess.push(
                    a * o.hess[k]
                        + b * self.hess[k]
                        + self.grad[i] * o.grad[j]
                        + self.grad[j] * o.grad[i],
                );
            }
        }
        Jet2 { value: a * b, grad, hess }
    }
}

impl Neg for &Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_layout() {
        let n = 3;
        let idx: Vec<usize> = (0..n).flat_map(|i| (i..n).map(move |j| packed_index(n, i, j))).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(packed_index(n, 2, 0), packed_index(n, 0, 2));
    }

    #[test]
    fn product_rule() {
        let x = Jet2::variable(2, 0, 3.0);
        let y = Jet2::variable(2, 1, 2.0);
        let p = &(&x * &x) * &y; // x^2 y
        assert_eq!(p.value, 18.0);
        assert_eq!(p.grad, vec![12.0, 9.0]);
        assert_eq!(p.h(0, 0), 4.0);
        assert_eq!(p.h(0, 1), 6.0);
        assert_eq!(p.h(1, 1), 0.0);
    }

    #[test]
    fn reciprocal() {
        let x = Jet2::variable(1, 0, 2.0);
        let r = x.recip();
        assert_eq!(r.value, 0.5);
        assert_eq!(r.grad[0], -0.25);
        assert_eq!(r.h(0, 0), 0.25);
    }
}
