//! Real-coefficient polynomials in dense form, highest degree first.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::Serialize;

/// A real polynomial `c[0] s^n + c[1] s^(n-1) + ... + c[n]`.
///
/// The zero polynomial is stored as `[0.0]`; otherwise the leading
/// coefficient is nonzero.
#[derive(Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut p = Poly { coeffs };
        p.trim();
        p
    }

    pub fn zero() -> Self {
        Poly { coeffs: vec![0.0] }
    }

    pub fn one() -> Self {
        Poly::constant(1.0)
    }

    pub fn constant(c: f64) -> Self {
        Poly { coeffs: vec![c] }
    }

    /// `s - root` for a real root.
    pub fn linear(root: f64) -> Self {
        Poly::new(vec![1.0, -root])
    }

    /// Monic real polynomial with the given roots; complex roots must come
    /// with their conjugates, imaginary residue is dropped.
    pub fn from_roots(roots: &[Complex64]) -> Self {
        let c = cpoly_from_roots(roots);
        Poly::new(c.iter().map(|z| z.re).collect())
    }

    fn trim(&mut self) {
        let first = self.coeffs.iter().position(|&c| c != 0.0);
        match first {
            Some(0) => {}
            Some(i) => {
                self.coeffs.drain(..i);
            }
            None => self.coeffs = vec![0.0],
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    /// Degree, with the zero polynomial reported as degree 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        self.coeffs[0]
    }

    /// Coefficient of `s^k`.
    pub fn coeff(&self, k: usize) -> f64 {
        let n = self.degree();
        if k > n {
            0.0
        } else {
            self.coeffs[n - k]
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, s: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    /// Value and first derivative by a single Horner pass.
    pub fn eval_with_derivative(&self, s: Complex64) -> (Complex64, Complex64) {
        let mut p = Complex64::new(0.0, 0.0);
        let mut dp = Complex64::new(0.0, 0.0);
        for &c in &self.coeffs {
            dp = dp * s + p;
            p = p * s + c;
        }
        (p, dp)
    }

    /// `sum |c_k| |s|^k`, the natural magnitude scale for rounding error at `s`.
    pub fn abs_scale(&self, s: Complex64) -> f64 {
        let r = s.norm();
        self.coeffs.iter().fold(0.0, |acc, &c| acc * r + c.abs())
    }

    pub fn derivative(&self) -> Poly {
        let n = self.degree();
        if n == 0 {
            return Poly::zero();
        }
        Poly::new(
            self.coeffs[..n]
                .iter()
                .enumerate()
                .map(|(i, &c)| c * (n - i) as f64)
                .collect(),
        )
    }

    pub fn scale(&self, k: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    /// `p(-s)`.
    pub fn reflect(&self) -> Poly {
        let n = self.degree();
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .map(|(i, &c)| if (n - i) % 2 == 1 { -c } else { c })
                .collect(),
        )
    }

    pub fn monic(&self) -> Poly {
        if self.is_zero() {
            return self.clone();
        }
        self.scale(1.0 / self.leading())
    }

    /// Euclidean division; returns `(quotient, remainder)`.
    pub fn div_rem(&self, divisor: &Poly) -> (Poly, Poly) {
        assert!(!divisor.is_zero(), "division by zero polynomial");
        let n = self.degree();
        let m = divisor.degree();
        if self.is_zero() || n < m {
            return (Poly::zero(), self.clone());
        }
        let mut rem = self.coeffs.clone();
        let mut quot = vec![0.0; n - m + 1];
        let lead = divisor.leading();
        for i in 0..=n - m {
            let q = rem[i] / lead;
            quot[i] = q;
            for (j, &d) in divisor.coeffs.iter().enumerate() {
                rem[i + j] -= q * d;
            }
        }
        let r = if m == 0 {
            Poly::zero()
        } else {
            Poly::new(rem[n - m + 1..].to_vec())
        };
        (Poly::new(quot), r)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn pow(&self, k: u32) -> Poly {
        (0..k).fold(Poly::one(), |acc, _| &acc * self)
    }
}

impl Default for Poly {
    fn default() -> Self {
        Poly::zero()
    }
}

impl From<Vec<f64>> for Poly {
    fn from(v: Vec<f64>) -> Self {
        Poly::new(v)
    }
}

impl From<&[f64]> for Poly {
    fn from(v: &[f64]) -> Self {
        Poly::new(v.to_vec())
    }
}

fn add_aligned(a: &[f64], b: &[f64], sign: f64) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (i, &c) in a.iter().enumerate() {
        out[n - a.len() + i] += c;
    }
    for (i, &c) in b.iter().enumerate() {
        out[n - b.len() + i] += sign * c;
    }
    out
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        Poly::new(add_aligned(&self.coeffs, &rhs.coeffs, 1.0))
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        Poly::new(add_aligned(&self.coeffs, &rhs.coeffs, -1.0))
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(-1.0)
    }
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly{:?}", self.coeffs)
    }
}

impl fmt::Display for Poly {
    /// Human-readable form, e.g. `s^2 - 1.247 s + 1.1137`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let n = self.degree();
        let mut first = true;
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let k = n - i;
            let mag = c.abs();
            if first {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if c < 0.0 { '-' } else { '+' })?;
            }
            first = false;
            let show_mag = k == 0 || mag != 1.0;
            if show_mag {
                write!(f, "{}", crate::report::sig(mag, 6))?;
            }
            match k {
                0 => {}
                1 => write!(f, "{}s", if show_mag { " " } else { "" })?,
                _ => write!(f, "{}s^{}", if show_mag { " " } else { "" }, k)?,
            }
        }
        Ok(())
    }
}

// ---- complex coefficient helpers (highest degree first) ----

pub(crate) fn cpoly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (i, &a) in c.iter().enumerate() {
            next[i] += a;
            next[i + 1] -= a * r;
        }
        c = next;
    }
    c
}

pub(crate) fn cpoly_eval(c: &[Complex64], s: Complex64) -> Complex64 {
    c.iter().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * s + a)
}

pub(crate) fn cpoly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Taylor coefficients of `p` about `z`, lowest order first:
/// `p(z + u) = sum_k t_k u^k`. Computed by repeated synthetic division.
pub(crate) fn taylor_at(coeffs: &[f64], z: Complex64, count: usize) -> Vec<Complex64> {
    let mut work: Vec<Complex64> = coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        if work.is_empty() {
            out.push(Complex64::new(0.0, 0.0));
            continue;
        }
        // Synthetic division by (s - z): quotient in work[..len-1], remainder last.
        for i in 1..work.len() {
            let prev = work[i - 1];
            work[i] += prev * z;
        }
        out.push(work.pop().unwrap());
    }
    out
}
