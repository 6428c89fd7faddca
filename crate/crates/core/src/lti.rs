//! Transfer-function algebra: rational functions, sums of delayed rational
//! functions, and products of rational / quasi-polynomial / delay factors.
//!
//! Arithmetic never cancels common factors implicitly; call
//! [`RationalFunction::reduced`] when a normal form is needed.

use std::fmt;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::delay::{DelayError, RationalDelay};
use crate::poly::{cpoly_from_roots, cpoly_mul, taylor_at, Poly};
use crate::qpoly::{QpolyError, QuasiPolynomial};
use crate::report::csv_table;
use crate::rootfinder::{polynomial_roots, RootError, RootSet};

/// Largest polynomial degree accepted in a rational function.
pub const DEGREE_CAP: usize = 64;

/// Evaluation closer than this to a pole is refused.
pub const POLE_GUARD: f64 = 1e-8;

/// Relative size below which a numerator Taylor coefficient at a pole is
/// treated as an exact zero (rounding noise of an exact cancellation).
pub const REMOVABLE_TOLERANCE: f64 = 1e-11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("denominator is identically zero")]
    ZeroDenominator,
    #[error("division by an identically zero function")]
    DivisionByZero,
    #[error("degree {degree} exceeds the cap of {DEGREE_CAP}")]
    DegreeCap { degree: usize },
    #[error("evaluation at {s} is within {distance:e} of the pole {pole}")]
    NearPole {
        s: Complex64,
        pole: Complex64,
        distance: f64,
    },
    #[error("{z} is not a pole of order {order} of the function")]
    NotAPole { z: Complex64, order: usize },
    #[error("pole set is not closed under conjugation (missing partner of {z})")]
    AsymmetricPoles { z: Complex64 },
    #[error("term at delay {delay} is not strictly proper")]
    NotStrictlyProper { delay: RationalDelay },
    #[error("a ratio factor has an identically zero numerator")]
    ZeroFactor,
    #[error("pure delay factors cannot be inverted")]
    DelayInverse,
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Qpoly(#[from] QpolyError),
}

fn close(a: Complex64, b: Complex64, rel: f64) -> bool {
    (a - b).norm() <= rel * (1.0 + a.norm().max(b.norm()))
}

// ---------------------------------------------------------------------------
// RationalFunction

/// `num(s) / den(s)` with a monic denominator.
#[derive(Clone, PartialEq, Serialize)]
pub struct RationalFunction {
    numerator: Poly,
    denominator: Poly,
    #[serde(skip)]
    poles: RootSet,
}

impl RationalFunction {
    pub fn new(numerator: Poly, denominator: Poly) -> Result<Self, LtiError> {
        if denominator.is_zero() {
            return Err(LtiError::ZeroDenominator);
        }
        let degree = numerator.degree().max(denominator.degree());
        if degree > DEGREE_CAP {
            return Err(LtiError::DegreeCap { degree });
        }
        let lead = denominator.leading();
        let numerator = numerator.scale(1.0 / lead);
        let denominator = denominator.monic();
        let poles = if denominator.degree() == 0 {
            RootSet::empty()
        } else {
            polynomial_roots(denominator.coeffs())?
        };
        Ok(RationalFunction {
            numerator,
            denominator,
            poles,
        })
    }

    /// From coefficient lists, highest degree first.
    pub fn from_coeffs(num: &[f64], den: &[f64]) -> Result<Self, LtiError> {
        RationalFunction::new(Poly::new(num.to_vec()), Poly::new(den.to_vec()))
    }

    pub fn polynomial(p: Poly) -> Result<Self, LtiError> {
        RationalFunction::new(p, Poly::one())
    }

    pub fn constant(c: f64) -> Self {
        RationalFunction::new(Poly::constant(c), Poly::one()).expect("constant is valid")
    }

    pub fn one() -> Self {
        RationalFunction::constant(1.0)
    }

    pub fn zero() -> Self {
        RationalFunction::constant(0.0)
    }

    pub fn numerator(&self) -> &Poly {
        &self.numerator
    }

    pub fn denominator(&self) -> &Poly {
        &self.denominator
    }

    pub fn poles(&self) -> &RootSet {
        &self.poles
    }

    pub fn zeros(&self) -> Result<RootSet, LtiError> {
        if self.numerator.is_zero() || self.numerator.degree() == 0 {
            return Ok(RootSet::empty());
        }
        Ok(polynomial_roots(self.numerator.coeffs())?)
    }

    pub fn is_zero(&self) -> bool {
        self.numerator.is_zero()
    }

    /// `deg den - deg num`; `None` for the zero function.
    pub fn relative_degree(&self) -> Option<i64> {
        if self.is_zero() {
            None
        } else {
            Some(self.denominator.degree() as i64 - self.numerator.degree() as i64)
        }
    }

    pub fn is_proper(&self) -> bool {
        self.relative_degree().is_none_or(|d| d >= 0)
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.relative_degree().is_none_or(|d| d >= 1)
    }

    pub fn is_biproper(&self) -> bool {
        self.relative_degree() == Some(0)
    }

    /// Value at `s`, refusing points within [`POLE_GUARD`] of a pole.
    pub fn eval(&self, s: Complex64) -> Result<Complex64, LtiError> {
        for &p in &self.poles.roots {
            let distance = (s - p).norm();
            if distance <= POLE_GUARD * (1.0 + p.norm()) {
                return Err(LtiError::NearPole { s, pole: p, distance });
            }
        }
        Ok(self.eval_unchecked(s))
    }

    pub fn eval_unchecked(&self, s: Complex64) -> Complex64 {
        self.numerator.eval_complex(s) / self.denominator.eval_complex(s)
    }

    pub fn scale(&self, k: f64) -> RationalFunction {
        RationalFunction {
            numerator: self.numerator.scale(k),
            denominator: self.denominator.clone(),
            poles: self.poles.clone(),
        }
    }

    pub fn mul(&self, other: &RationalFunction) -> Result<RationalFunction, LtiError> {
        RationalFunction::new(
            &self.numerator * &other.numerator,
            &self.denominator * &other.denominator,
        )
    }

    pub fn mul_poly(&self, p: &Poly) -> Result<RationalFunction, LtiError> {
        if p.degree() + self.numerator.degree() > DEGREE_CAP {
            return Err(LtiError::DegreeCap {
                degree: p.degree() + self.numerator.degree(),
            });
        }
        Ok(RationalFunction {
            numerator: &self.numerator * p,
            denominator: self.denominator.clone(),
            poles: self.poles.clone(),
        })
    }

    pub fn div(&self, other: &RationalFunction) -> Result<RationalFunction, LtiError> {
        if other.is_zero() {
            return Err(LtiError::DivisionByZero);
        }
        RationalFunction::new(
            &self.numerator * &other.denominator,
            &self.denominator * &other.numerator,
        )
    }

    pub fn recip(&self) -> Result<RationalFunction, LtiError> {
        RationalFunction::one().div(self)
    }

    /// Sum; denominators that agree exactly are shared rather than multiplied.
    pub fn add(&self, other: &RationalFunction) -> Result<RationalFunction, LtiError> {
        if self.denominator == other.denominator {
            return Ok(RationalFunction {
                numerator: &self.numerator + &other.numerator,
                denominator: self.denominator.clone(),
                poles: self.poles.clone(),
            });
        }
        RationalFunction::new(
            &(&self.numerator * &other.denominator) + &(&other.numerator * &self.denominator),
            &self.denominator * &other.denominator,
        )
    }

    pub fn sub(&self, other: &RationalFunction) -> Result<RationalFunction, LtiError> {
        self.add(&other.scale(-1.0))
    }

    /// Cancel numerator/denominator roots that agree to `1e-8` relative.
    pub fn reduced(&self) -> Result<RationalFunction, LtiError> {
        if self.is_zero() {
            return Ok(RationalFunction::zero());
        }
        let zeros = self.zeros()?.expanded();
        let mut poles = self.poles.expanded();
        let mut common = Vec::new();
        for z in zeros {
            if let Some(i) = poles.iter().position(|&p| close(p, z, 1e-8)) {
                common.push(poles.remove(i));
            }
        }
        if common.is_empty() {
            return Ok(self.clone());
        }
        // Keep the common set conjugate-closed so the divisor is real.
        let divisor = Poly::from_roots(&common);
        let (num, _) = self.numerator.div_rem(&divisor);
        let (den, _) = self.denominator.div_rem(&divisor);
        RationalFunction::new(num, den)
    }
}

impl fmt::Debug for RationalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?}) / ({:?})", self.numerator, self.denominator)
    }
}

impl fmt::Display for RationalFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denominator.degree() == 0 {
            write!(f, "{}", self.numerator)
        } else {
            write!(f, "({}) / ({})", self.numerator, self.denominator)
        }
    }
}

// ---------------------------------------------------------------------------
// Residues and partial fractions

/// Laurent principal parts: `residues[i][k-1]` is the coefficient of
/// `1/(s - poles[i])^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct ResidueTable {
    pub poles: Vec<Complex64>,
    pub residues: Vec<Vec<Complex64>>,
}

impl ResidueTable {
    /// Simple residue (coefficient of `1/(s - z)`) at the `i`-th pole.
    pub fn residue(&self, i: usize) -> Complex64 {
        self.residues[i][0]
    }

    pub fn order(&self, i: usize) -> usize {
        self.residues[i].len()
    }

    /// Principal-part sum at `s`.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        for (z, cs) in self.poles.iter().zip(&self.residues) {
            let u = s - z;
            let mut upow = u;
            for c in cs {
                total += c / upow;
                upow *= u;
            }
        }
        total
    }
}

/// Principal part of `num/den` at `z`, where `z` is a root of `den` of
/// multiplicity at least `order`. Taylor shifts by synthetic division plus
/// power-series division; no numerical differentiation.
fn principal_part(num: &Poly, den: &Poly, z: Complex64, order: usize) -> Vec<Complex64> {
    let m = order;
    let mut n_t = taylor_at(num.coeffs(), z, m);
    // A numerator coefficient at rounding level means num vanishes at z to
    // that order: the singularity is (partly) removable, not a tiny residue.
    let abs: Vec<f64> = num.coeffs().iter().map(|c| c.abs()).collect();
    let scales = taylor_at(&abs, Complex64::new(z.norm(), 0.0), m);
    for (t, sc) in n_t.iter_mut().zip(&scales) {
        if t.norm() <= REMOVABLE_TOLERANCE * sc.re {
            *t = Complex64::new(0.0, 0.0);
        } else {
            break;
        }
    }
    let d_t = taylor_at(den.coeffs(), z, 2 * m);
    // den(s) = (s-z)^m q(s) with q's Taylor coefficients d_t[m..].
    let q = &d_t[m..];
    let mut a = vec![Complex64::new(0.0, 0.0); m];
    for j in 0..m {
        let mut acc = n_t[j];
        for i in 1..=j {
            acc -= q[i] * a[j - i];
        }
        a[j] = acc / q[0];
    }
    // c_k for k = m..1 is a[m-k].
    (1..=m).map(|k| a[m - k]).collect()
}

/// Locate `z` among the poles of `r`, returning the polished pole.
fn match_pole(r: &RationalFunction, z: Complex64, order: usize) -> Result<Complex64, LtiError> {
    r.poles
        .iter()
        .filter(|&(p, mult)| mult >= order && close(p, z, 1e-6))
        .min_by(|a, b| (a.0 - z).norm().partial_cmp(&(b.0 - z).norm()).unwrap())
        .map(|(p, _)| p)
        .ok_or(LtiError::NotAPole { z, order })
}

/// Principal parts of `r` at every pole of its denominator.
pub fn residue_table(r: &RationalFunction) -> ResidueTable {
    let mut table = ResidueTable::default();
    for (p, m) in r.poles.iter() {
        table.poles.push(p);
        table
            .residues
            .push(principal_part(&r.numerator, &r.denominator, p, m));
    }
    table
}

/// Result of splitting `R = H + F` at a pole set.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialFractionSplit {
    /// Part without poles in the set.
    pub h: RationalFunction,
    /// Strictly proper part with poles exactly in the set.
    pub f: RationalFunction,
    pub residues: ResidueTable,
    /// Largest coefficient of the dropped division remainders, relative to
    /// the dividend scale.
    pub division_residual: f64,
}

/// Split `r = H + F`, with `F` collecting the principal parts at `set`.
pub fn partial_fraction_split(
    r: &RationalFunction,
    set: &[(Complex64, usize)],
) -> Result<PartialFractionSplit, LtiError> {
    if set.is_empty() {
        return Ok(PartialFractionSplit {
            h: r.clone(),
            f: RationalFunction::zero(),
            residues: ResidueTable::default(),
            division_residual: 0.0,
        });
    }
    for &(z, m) in set {
        if z.im != 0.0
            && !set
                .iter()
                .any(|&(w, k)| k == m && close(w, z.conj(), 1e-6))
        {
            return Err(LtiError::AsymmetricPoles { z });
        }
    }
    let mut poles: Vec<(Complex64, usize)> = Vec::new();
    for &(z, m) in set {
        let p = match_pole(r, z, m)?;
        if poles.iter().any(|&(q, _)| q == p) {
            return Err(LtiError::NotAPole { z, order: m });
        }
        poles.push((p, m));
    }
    // Use exact conjugates so recombination is real.
    for i in 0..poles.len() {
        let (p, m) = poles[i];
        if p.im < 0.0 {
            if let Some(j) = poles.iter().position(|&(q, k)| k == m && close(q, p.conj(), 1e-6) && q.im > 0.0) {
                poles[i] = (poles[j].0.conj(), m);
            }
        }
    }

    let mut table = ResidueTable::default();
    for &(p, m) in &poles {
        table.poles.push(p);
        table
            .residues
            .push(principal_part(&r.numerator, &r.denominator, p, m));
    }

    let expanded: Vec<Complex64> = poles
        .iter()
        .flat_map(|&(p, m)| std::iter::repeat(p).take(m))
        .collect();
    let d_s = Poly::new(cpoly_from_roots(&expanded).iter().map(|c| c.re).collect());

    // F numerator: sum_z sum_k c_{z,k} (s-z)^{m_z-k} prod_{w != z} (s-w)^{m_w}.
    let mut f_num = vec![Complex64::new(0.0, 0.0); expanded.len()];
    for (i, &(p, m)) in poles.iter().enumerate() {
        let others: Vec<Complex64> = poles
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, &(q, k))| std::iter::repeat(q).take(k))
            .collect();
        let base = cpoly_from_roots(&others);
        for (k, &c) in table.residues[i].iter().enumerate() {
            let k = k + 1;
            let factor = cpoly_from_roots(&vec![p; m - k]);
            let term = cpoly_mul(&base, &factor);
            let off = f_num.len() - term.len();
            for (idx, &t) in term.iter().enumerate() {
                f_num[off + idx] += c * t;
            }
        }
    }
    let f_num = Poly::new(f_num.iter().map(|c| c.re).collect());
    let f = RationalFunction::new(f_num.clone(), d_s.clone())?;

    let (d_rest, rem_d) = r.denominator.div_rem(&d_s);
    let dividend = &r.numerator - &(&f_num * &d_rest);
    let (h_num, rem_h) = dividend.div_rem(&d_s);
    let rel = |rem: &Poly, of: &Poly| rem.max_abs_coeff() / of.max_abs_coeff().max(f64::MIN_POSITIVE);
    let division_residual = rel(&rem_d, &r.denominator).max(rel(&rem_h, &dividend));
    let h = RationalFunction::new(h_num, d_rest)?;
    Ok(PartialFractionSplit {
        h,
        f,
        residues: table,
        division_residual,
    })
}

// ---------------------------------------------------------------------------
// DelaySum

/// One `G_k(s) e^{-h_k s}` term.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayTerm {
    pub rational: RationalFunction,
    pub delay: RationalDelay,
}

/// `sum_k G_k(s) e^{-h_k s}` with distinct ascending delays.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct DelaySum {
    terms: Vec<DelayTerm>,
}

impl DelaySum {
    /// Sorts by delay, merges equal delays, drops zero terms.
    pub fn new<I>(terms: I) -> Result<Self, LtiError>
    where
        I: IntoIterator<Item = (RationalFunction, RationalDelay)>,
    {
        let mut raw: Vec<(RationalFunction, RationalDelay)> = terms.into_iter().collect();
        raw.sort_by(|a, b| a.1.cmp(&b.1));
        let mut out: Vec<DelayTerm> = Vec::new();
        for (r, h) in raw {
            match out.last_mut() {
                Some(last) if last.delay == h => last.rational = last.rational.add(&r)?,
                _ => out.push(DelayTerm { rational: r, delay: h }),
            }
        }
        out.retain(|t| !t.rational.is_zero());
        Ok(DelaySum { terms: out })
    }

    pub fn zero() -> Self {
        DelaySum::default()
    }

    pub fn rational(r: RationalFunction) -> Self {
        DelaySum::new([(r, RationalDelay::ZERO)]).expect("single term")
    }

    pub fn from_qpoly(q: &QuasiPolynomial) -> Result<Self, LtiError> {
        DelaySum::new(
            q.terms()
                .iter()
                .map(|t| Ok((RationalFunction::polynomial(t.poly.clone())?, t.delay)))
                .collect::<Result<Vec<_>, LtiError>>()?,
        )
    }

    pub fn terms(&self) -> &[DelayTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_delay(&self) -> RationalDelay {
        self.terms.last().map(|t| t.delay).unwrap_or(RationalDelay::ZERO)
    }

    pub fn eval(&self, s: Complex64) -> Result<Complex64, LtiError> {
        let mut total = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            total += t.rational.eval(s)? * (-s * t.delay.value()).exp();
        }
        Ok(total)
    }

    /// `sum_k |num_k|(|s|) / |den_k(s)| |e^{-h_k s}|`, the magnitude scale of a
    /// cancellation test; unlike `|G_k(s)|` it does not vanish at shared zeros.
    pub fn abs_scale(&self, s: Complex64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.rational.numerator().abs_scale(s) / t.rational.denominator().eval_complex(s).norm()
                    * (-s.re * t.delay.value()).exp()
            })
            .sum()
    }

    pub fn add(&self, other: &DelaySum) -> Result<DelaySum, LtiError> {
        DelaySum::new(
            self.terms
                .iter()
                .chain(&other.terms)
                .map(|t| (t.rational.clone(), t.delay)),
        )
    }

    pub fn scale(&self, k: f64) -> DelaySum {
        DelaySum {
            terms: self
                .terms
                .iter()
                .map(|t| DelayTerm {
                    rational: t.rational.scale(k),
                    delay: t.delay,
                })
                .filter(|t| !t.rational.is_zero())
                .collect(),
        }
    }

    pub fn mul_rational(&self, r: &RationalFunction) -> Result<DelaySum, LtiError> {
        DelaySum::new(
            self.terms
                .iter()
                .map(|t| Ok((t.rational.mul(r)?, t.delay)))
                .collect::<Result<Vec<_>, LtiError>>()?,
        )
    }

    pub fn div_rational(&self, r: &RationalFunction) -> Result<DelaySum, LtiError> {
        self.mul_rational(&r.recip()?)
    }

    pub fn delayed(&self, h: RationalDelay) -> Result<DelaySum, LtiError> {
        DelaySum::new(
            self.terms
                .iter()
                .map(|t| Ok((t.rational.clone(), t.delay.checked_add(&h)?)))
                .collect::<Result<Vec<_>, LtiError>>()?,
        )
    }

    pub fn mul_qpoly(&self, q: &QuasiPolynomial) -> Result<DelaySum, LtiError> {
        let mut out = Vec::new();
        for t in &self.terms {
            for qt in q.terms() {
                out.push((t.rational.mul_poly(&qt.poly)?, t.delay.checked_add(&qt.delay)?));
            }
        }
        DelaySum::new(out)
    }

    pub fn mul(&self, other: &DelaySum) -> Result<DelaySum, LtiError> {
        let mut out = Vec::new();
        for a in &self.terms {
            for b in &other.terms {
                out.push((a.rational.mul(&b.rational)?, a.delay.checked_add(&b.delay)?));
            }
        }
        DelaySum::new(out)
    }
}

impl fmt::Display for DelaySum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            if t.delay.is_zero() {
                write!(f, "[{}]", t.rational)?;
            } else {
                write!(f, "[{}] e^(-{} s)", t.rational, t.delay)?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Impulse response

/// Sampled impulse response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpulseResponse {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Largest imaginary part discarded when taking real values.
    pub max_imaginary: f64,
    /// Sum of the magnitudes of the individual exponential terms at each
    /// sample, each weighted by its sensitivity `1 + |z| tau` to a relative
    /// pole error; `f64::EPSILON` times this bounds the rounding error.
    pub term_magnitudes: Vec<f64>,
}

impl ImpulseResponse {
    /// CSV with header `t,f`.
    pub fn to_csv(&self) -> String {
        csv_table(
            "t,f",
            self.times
                .iter()
                .zip(&self.values)
                .map(|(&t, &f)| vec![t, f]),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Impulse response of a sum of strictly proper delayed rational terms,
/// `f(t) = sum_k u(t-h_k) sum_z sum_j c_{z,j} (t-h_k)^{j-1}/(j-1)! e^{z(t-h_k)}`.
pub fn impulse_response(g: &DelaySum, grid: &[f64]) -> Result<ImpulseResponse, LtiError> {
    let tables = g
        .terms
        .iter()
        .map(|t| {
            if !t.rational.is_strictly_proper() {
                return Err(LtiError::NotStrictlyProper { delay: t.delay });
            }
            Ok((residue_table(&t.rational), t.delay.value()))
        })
        .collect::<Result<Vec<_>, LtiError>>()?;
    Ok(impulse_from_tables(&tables, grid))
}

/// Impulse response from precomputed principal parts, one table per delay.
pub fn impulse_from_tables(tables: &[(ResidueTable, f64)], grid: &[f64]) -> ImpulseResponse {
    let mut values = Vec::with_capacity(grid.len());
    let mut term_magnitudes = Vec::with_capacity(grid.len());
    let mut max_imaginary: f64 = 0.0;
    for &t in grid {
        let mut total = Complex64::new(0.0, 0.0);
        let mut magnitude = 0.0;
        for (table, h) in tables {
            let tau = t - h;
            if tau < 0.0 {
                continue;
            }
            for (z, cs) in table.poles.iter().zip(&table.residues) {
                let e = (z * tau).exp();
                // a relative pole error eps perturbs e^{z tau} by eps |z| tau
                let cond = 1.0 + z.norm() * tau;
                let mut pow = 1.0;
                for (j, c) in cs.iter().enumerate() {
                    if j > 0 {
                        pow *= tau / j as f64;
                    }
                    let term = c * e * pow;
                    total += term;
                    magnitude += term.norm() * cond;
                }
            }
        }
        max_imaginary = max_imaginary.max(total.im.abs());
        values.push(total.re);
        term_magnitudes.push(magnitude);
    }
    ImpulseResponse {
        times: grid.to_vec(),
        values,
        max_imaginary,
        term_magnitudes,
    }
}

/// `n` evenly spaced points on `[a, b]`.
pub fn linear_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![a];
    }
    (0..n)
        .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
        .collect()
}

// ---------------------------------------------------------------------------
// RatioExpression

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RatioFactor {
    Rational(RationalFunction),
    QpRatio {
        numerator: QuasiPolynomial,
        denominator: QuasiPolynomial,
    },
    Delay(RationalDelay),
}

impl RatioFactor {
    pub fn eval(&self, s: Complex64) -> Result<Complex64, LtiError> {
        match self {
            RatioFactor::Rational(r) => r.eval(s),
            RatioFactor::QpRatio {
                numerator,
                denominator,
            } => {
                let d = denominator.evaluate(s);
                if d.norm() <= 1e-13 * denominator.abs_scale(s) {
                    return Err(LtiError::NearPole {
                        s,
                        pole: s,
                        distance: 0.0,
                    });
                }
                Ok(numerator.evaluate(s) / d)
            }
            RatioFactor::Delay(h) => Ok((-s * h.value()).exp()),
        }
    }
}

/// Ordered product of factors, kept unexpanded.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct RatioExpression {
    pub factors: Vec<RatioFactor>,
}

impl RatioExpression {
    pub fn new(factors: Vec<RatioFactor>) -> Result<Self, LtiError> {
        for f in &factors {
            let zero = match f {
                RatioFactor::Rational(r) => r.is_zero(),
                RatioFactor::QpRatio { .. } | RatioFactor::Delay(_) => false,
            };
            if zero {
                return Err(LtiError::ZeroFactor);
            }
        }
        Ok(RatioExpression { factors })
    }

    pub fn one() -> Self {
        RatioExpression::default()
    }

    pub fn eval(&self, s: Complex64) -> Result<Complex64, LtiError> {
        self.factors
            .iter()
            .try_fold(Complex64::new(1.0, 0.0), |acc, f| Ok(acc * f.eval(s)?))
    }

    pub fn mul(&self, other: &RatioExpression) -> RatioExpression {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        RatioExpression { factors }
    }

    pub fn inverse(&self) -> Result<RatioExpression, LtiError> {
        let factors = self
            .factors
            .iter()
            .rev()
            .map(|f| match f {
                RatioFactor::Rational(r) => Ok(RatioFactor::Rational(r.recip()?)),
                RatioFactor::QpRatio {
                    numerator,
                    denominator,
                } => Ok(RatioFactor::QpRatio {
                    numerator: denominator.clone(),
                    denominator: numerator.clone(),
                }),
                RatioFactor::Delay(_) => Err(LtiError::DelayInverse),
            })
            .collect::<Result<Vec<_>, LtiError>>()?;
        Ok(RatioExpression { factors })
    }

    /// Rational factors only (delay and quasi-polynomial factors dropped).
    pub fn rational_part(&self) -> Result<RationalFunction, LtiError> {
        self.factors.iter().try_fold(RationalFunction::one(), |acc, f| match f {
            RatioFactor::Rational(r) => acc.mul(r),
            _ => Ok(acc),
        })
    }

    /// Total pure delay.
    pub fn delay(&self) -> Result<RationalDelay, LtiError> {
        self.factors.iter().try_fold(RationalDelay::ZERO, |acc, f| match f {
            RatioFactor::Delay(h) => Ok(acc.checked_add(h)?),
            _ => Ok(acc),
        })
    }
}

impl fmt::Display for RatioExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        for (i, fac) in self.factors.iter().enumerate() {
            if i > 0 {
                write!(f, " · ")?;
            }
            match fac {
                RatioFactor::Rational(r) => write!(f, "[{r}]")?,
                RatioFactor::QpRatio {
                    numerator,
                    denominator,
                } => write!(f, "[({}) / ({})]", numerator.pretty(), denominator.pretty())?,
                RatioFactor::Delay(h) => write!(f, "e^(-{h} s)")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn normal_form_and_eval() {
        let g0 = RationalFunction::from_coeffs(&[1.0, -1.2470, 1.1137], &[1.0, 1.2470, 1.1137]).unwrap();
        assert!((g0.eval(c(0.0, 0.0)).unwrap() - 1.0).norm() < 1e-15);
        assert!((g0.eval(c(0.0, 1.0)).unwrap().norm() - 1.0).abs() < 1e-14);
        let r = RationalFunction::from_coeffs(&[2.0], &[2.0, 4.0]).unwrap();
        assert_eq!(r.denominator().coeffs(), &[1.0, 2.0]);
        assert_eq!(r.numerator().coeffs(), &[1.0]);
    }

    #[test]
    fn pole_guard() {
        let r = RationalFunction::from_coeffs(&[1.0], &[1.0, -1.0]).unwrap();
        assert!(matches!(r.eval(c(1.0 + 1e-10, 0.0)), Err(LtiError::NearPole { .. })));
        assert!(r.eval(c(1.0 + 1e-6, 0.0)).is_ok());
    }

    #[test]
    fn cancellation_is_explicit() {
        let a = RationalFunction::polynomial(Poly::new(vec![1.0, 1.0])).unwrap();
        let b = RationalFunction::from_coeffs(&[1.0], &[1.0, 1.0]).unwrap();
        let p = a.mul(&b).unwrap();
        assert_eq!(p.denominator().degree(), 1);
        let r = p.reduced().unwrap();
        assert_eq!(r.numerator().coeffs(), &[1.0]);
        assert_eq!(r.denominator().coeffs(), &[1.0]);
    }

    #[test]
    fn errors() {
        assert_eq!(
            RationalFunction::from_coeffs(&[1.0], &[0.0]).unwrap_err(),
            LtiError::ZeroDenominator
        );
        let big = vec![1.0; 66];
        assert!(matches!(
            RationalFunction::from_coeffs(&big, &[1.0]),
            Err(LtiError::DegreeCap { .. })
        ));
        assert_eq!(
            RationalFunction::one().div(&RationalFunction::zero()).unwrap_err(),
            LtiError::DivisionByZero
        );
    }

    #[test]
    fn split_textbook_case() {
        let r = RationalFunction::from_coeffs(&[1.0], &[1.0, 0.0, -1.0]).unwrap();
        let sp = partial_fraction_split(&r, &[(c(1.0, 0.0), 1)]).unwrap();
        assert!((sp.residues.residue(0) - 0.5).norm() < 1e-15);
        assert_eq!(sp.f.denominator().coeffs(), &[1.0, -1.0]);
        assert!((sp.f.numerator().coeffs()[0] - 0.5).abs() < 1e-15);
        assert_eq!(sp.h.denominator().coeffs(), &[1.0, 1.0]);
        assert!((sp.h.numerator().coeffs()[0] + 0.5).abs() < 1e-15);

        let sp = partial_fraction_split(&r, &[]).unwrap();
        assert_eq!(sp.h, r);
        assert!(sp.f.is_zero());
    }

    #[test]
    fn split_rejects_non_poles_and_asymmetric_sets() {
        let r = RationalFunction::from_coeffs(&[1.0], &[1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            partial_fraction_split(&r, &[(c(2.0, 0.0), 1)]),
            Err(LtiError::NotAPole { .. })
        ));
        assert!(matches!(
            partial_fraction_split(&r, &[(c(0.0, 1.0), 1)]),
            Err(LtiError::AsymmetricPoles { .. })
        ));
        assert!(matches!(
            partial_fraction_split(&r, &[(c(0.0, 1.0), 2), (c(0.0, -1.0), 2)]),
            Err(LtiError::NotAPole { .. })
        ));
    }

    #[test]
    fn split_double_pole() {
        // 1 / ((s-1)^2 (s+2)) = -1/9/(s-1) + 1/3/(s-1)^2 + 1/9/(s+2)
        let den = &Poly::linear(1.0).pow(2) * &Poly::linear(-2.0);
        let r = RationalFunction::new(Poly::one(), den).unwrap();
        let sp = partial_fraction_split(&r, &[(c(1.0, 0.0), 2)]).unwrap();
        assert!((sp.residues.residues[0][0] + 1.0 / 9.0).norm() < 1e-12);
        assert!((sp.residues.residues[0][1] - 1.0 / 3.0).norm() < 1e-12);
        assert!((sp.h.eval(c(0.0, 0.0)).unwrap() - 1.0 / 18.0).norm() < 1e-12);
        for s in [c(0.3, 0.7), c(-1.0, 2.0), c(4.0, -1.0)] {
            let lhs = sp.h.eval(s).unwrap() + sp.f.eval(s).unwrap();
            assert!((lhs - r.eval(s).unwrap()).norm() <= 1e-12 * lhs.norm());
        }
    }

    #[test]
    fn delay_sum_merges_delays() {
        let one = RationalFunction::one();
        let g = DelaySum::new([(one.clone(), RationalDelay::ZERO), (one.clone(), RationalDelay::integer(1))]).unwrap();
        let h = g.delayed("0.5".parse().unwrap()).unwrap();
        let ds: Vec<String> = h.terms().iter().map(|t| t.delay.to_string()).collect();
        assert_eq!(ds, vec!["1/2", "3/2"]);
        let g2 = g.add(&g).unwrap();
        assert_eq!(g2.terms().len(), 2);
        assert_eq!(g2.terms()[0].rational.numerator().coeffs(), &[2.0]);
        assert!(g.add(&g.scale(-1.0)).unwrap().is_zero());
    }

    #[test]
    fn impulse_of_first_order_lag() {
        let r = RationalFunction::from_coeffs(&[1.0], &[1.0, 1.0]).unwrap();
        let g = DelaySum::rational(r);
        let grid = linear_grid(0.0, 5.0, 11);
        let f = impulse_response(&g, &grid).unwrap();
        for (t, v) in grid.iter().zip(&f.values) {
            assert!((v - (-t).exp()).abs() < 1e-14);
        }
        let csv = f.to_csv();
        assert!(csv.starts_with("t,f\n"));
        assert_eq!(csv.lines().count(), 12);
    }

    #[test]
    fn impulse_rejects_biproper_terms() {
        let r = RationalFunction::from_coeffs(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(matches!(
            impulse_response(&DelaySum::rational(r), &[0.0]),
            Err(LtiError::NotStrictlyProper { .. })
        ));
    }

    #[test]
    fn impulse_with_delay_and_double_pole() {
        // e^{-s} / (s+1)^2 -> (t-1) e^{-(t-1)} u(t-1)
        let r = RationalFunction::new(Poly::one(), Poly::linear(-1.0).pow(2)).unwrap();
        let g = DelaySum::new([(r, RationalDelay::integer(1))]).unwrap();
        let grid = [0.5, 1.0, 2.0, 3.5];
        let f = impulse_response(&g, &grid).unwrap();
        for (t, v) in grid.iter().zip(&f.values) {
            let want = if *t < 1.0 { 0.0 } else { (t - 1.0) * (-(t - 1.0)).exp() };
            assert!((v - want).abs() < 1e-12, "{t}: {v} vs {want}");
        }
    }

    #[test]
    fn ratio_expression_eval_and_inverse() {
        let qd: QuasiPolynomial = "1 0 0 1 @ 0 ; 1 @ 1.5".parse().unwrap();
        let m = RationalFunction::from_coeffs(&[1.0, -1.2470, 1.1137], &[1.0, 1.2470, 1.1137]).unwrap();
        let x = RatioExpression::new(vec![
            RatioFactor::QpRatio {
                numerator: qd.clone(),
                denominator: QuasiPolynomial::polynomial(Poly::one()).unwrap(),
            },
            RatioFactor::Rational(m.recip().unwrap()),
        ])
        .unwrap();
        for s in [c(0.5, 0.2), c(-0.3, 2.0), c(2.0, -1.0), c(0.0, 3.0), c(1.0, 1.0)] {
            let want = qd.evaluate(s) / m.eval(s).unwrap();
            assert!((x.eval(s).unwrap() - want).norm() <= 1e-14 * want.norm());
            let inv = x.inverse().unwrap().eval(s).unwrap();
            assert!((inv * want - 1.0).norm() < 1e-13);
        }
        assert!(RatioExpression::new(vec![RatioFactor::Rational(RationalFunction::zero())]).is_err());
        assert!(RatioExpression::new(vec![RatioFactor::Delay(RationalDelay::integer(1))])
            .unwrap()
            .inverse()
            .is_err());
    }
}
