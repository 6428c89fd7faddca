//! The Φ decomposition: `G / G0 = H + F` where `F` collects the principal
//! parts at the right half-plane zeros shared by `G` and `G0`.
//!
//! Because `G` vanishes at those points, the exponentials in the impulse
//! response of `F` cancel once every delayed term has switched on, so `F` is
//! a finite-impulse-response block supported on `[0, h_v]`. Certification
//! checks this both by sampling the impulse response past `h_v` and through
//! the tail coefficients `sum_i c_i e^{-z h_i}` of each pole.

use std::fmt::Write;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::delay::RationalDelay;
use crate::lti::{
    impulse_from_tables, linear_grid, partial_fraction_split, residue_table, DelaySum, LtiError,
    RationalFunction, ResidueTable,
};
use crate::report::sig;
use crate::rootfinder::AXIS_TOLERANCE;

/// Relative threshold for `|G(z)|` to count `z` as a shared zero.
pub const DETECTION_TOLERANCE: f64 = 1e-6;

/// FIR tolerance for machine-precision pipelines.
pub const FIR_TOLERANCE: f64 = 1e-8;

/// FIR tolerance for coefficients rounded to four digits.
pub const ROUNDED_FIR_TOLERANCE: f64 = 1e-2;

const SUPPORT_SAMPLES: usize = 400;
const TAIL_SAMPLES: usize = 400;
const ROUNDING_FACTOR: f64 = 16.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhiError {
    #[error("G0 must be biproper (relative degree {0:?})")]
    NotBiproper(Option<i64>),
    #[error("partial-fraction split of the term at delay {delay} failed: {source}")]
    Split { delay: RationalDelay, source: LtiError },
    #[error("F is not FIR: tail {max_tail:e} against peak {peak:e} (tolerance {tolerance:e}), tail coefficient {algebraic_tail:e}")]
    NotFir {
        max_tail: f64,
        peak: f64,
        tolerance: f64,
        algebraic_tail: f64,
    },
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Right half-plane zeros shared by `G` and `G0`, with orders.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct CancellationSet {
    pub zeros: Vec<(Complex64, usize)>,
    /// `|G(z)| / scale(G, z)` for each entry.
    pub residuals: Vec<f64>,
    /// Right half-plane zeros of `G0` where `G` does not vanish; these stay
    /// as unstable poles of `H`.
    pub unmatched: Vec<Complex64>,
}

impl CancellationSet {
    pub fn is_empty(&self) -> bool {
        self.zeros.is_empty()
    }

    pub fn points(&self) -> Vec<Complex64> {
        self.zeros.iter().map(|z| z.0).collect()
    }
}

fn require_biproper(g0: &RationalFunction) -> Result<(), PhiError> {
    if g0.is_biproper() {
        Ok(())
    } else {
        Err(PhiError::NotBiproper(g0.relative_degree()))
    }
}

/// Zeros `z` of `G0` with `Re z > 0` and `|G(z)| <= tol · scale(G, z)`.
pub fn common_rhp_zeros(g: &DelaySum, g0: &RationalFunction, tol: f64) -> Result<CancellationSet, PhiError> {
    require_biproper(g0)?;
    let mut set = CancellationSet::default();
    for (z, m) in g0.zeros()?.iter() {
        if z.re <= AXIS_TOLERANCE {
            continue;
        }
        let scale = g.abs_scale(z);
        let value = g.eval(z).map(|v| v.norm()).unwrap_or(f64::INFINITY);
        let residual = if scale > 0.0 { value / scale } else { 0.0 };
        if residual <= tol {
            set.zeros.push((z, m));
            set.residuals.push(residual);
        } else {
            set.unmatched.push(z);
        }
    }
    Ok(set)
}

/// Outcome of sampling and tail-coefficient checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirCertification {
    pub support: f64,
    pub horizon: f64,
    pub tolerance: f64,
    /// `max |f|` on `[0, support]`.
    pub peak: f64,
    /// `max |f|` on `(support, support + horizon]`.
    pub max_tail: f64,
    /// Largest floating-point rounding bound among the tail samples; tail
    /// values below their own bound carry no information.
    pub rounding_floor: f64,
    /// Estimated exponential growth rate of the tail (per unit time).
    pub tail_growth: f64,
    /// Largest tail coefficient relative to its magnitude scale.
    pub algebraic_tail: f64,
    pub behavioral_pass: bool,
    pub algebraic_pass: bool,
    pub pass: bool,
}

impl FirCertification {
    pub fn text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "support: [0, {}]", sig(self.support, 6));
        let _ = writeln!(out, "horizon: {}", sig(self.horizon, 6));
        let _ = writeln!(out, "tolerance: {}", sig(self.tolerance, 6));
        let _ = writeln!(out, "peak on support: {}", sig(self.peak, 6));
        let _ = writeln!(out, "max tail residual: {}", sig(self.max_tail, 6));
        let ratio = if self.peak > 0.0 { self.max_tail / self.peak } else { self.max_tail };
        let _ = writeln!(out, "tail/peak: {}", sig(ratio, 6));
        let _ = writeln!(out, "rounding floor: {}", sig(self.rounding_floor, 6));
        let _ = writeln!(out, "tail growth rate: {}", sig(self.tail_growth, 6));
        let _ = writeln!(out, "tail coefficient: {}", sig(self.algebraic_tail, 6));
        let _ = writeln!(out, "result: {}", if self.pass { "PASS" } else { "FAIL" });
        out
    }

    fn to_error(&self) -> PhiError {
        PhiError::NotFir {
            max_tail: self.max_tail,
            peak: self.peak,
            tolerance: self.tolerance,
            algebraic_tail: self.algebraic_tail,
        }
    }
}

/// `F` with its support and certification.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirBlock {
    pub f: DelaySum,
    pub support_end: RationalDelay,
    pub certification: FirCertification,
}

impl FirBlock {
    pub fn zero() -> Self {
        FirBlock {
            f: DelaySum::zero(),
            support_end: RationalDelay::ZERO,
            certification: FirCertification {
                support: 0.0,
                horizon: 0.0,
                tolerance: 0.0,
                peak: 0.0,
                max_tail: 0.0,
                rounding_floor: 0.0,
                tail_growth: 0.0,
                algebraic_tail: 0.0,
                behavioral_pass: true,
                algebraic_pass: true,
                pass: true,
            },
        }
    }

    pub fn is_zero(&self) -> bool {
        self.f.is_zero()
    }
}

/// Residue tables of each term of `f`, with the term delays.
fn tables(f: &DelaySum) -> Result<Vec<(ResidueTable, f64)>, LtiError> {
    f.terms()
        .iter()
        .map(|t| {
            if !t.rational.is_strictly_proper() {
                return Err(LtiError::NotStrictlyProper { delay: t.delay });
            }
            Ok((residue_table(&t.rational), t.delay.value()))
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// For `t` past every delay, `f(t) = sum_z sum_j a_{z,j} t^j e^{z t}`; the
/// largest `|a_{z,j}|` relative to the sum of magnitudes it is built from.
fn algebraic_tail(tables: &[(ResidueTable, f64)]) -> f64 {
    // Group poles across terms.
    let mut groups: Vec<(Complex64, Vec<(usize, usize)>)> = Vec::new();
    for (ti, (table, _)) in tables.iter().enumerate() {
        for (pi, &z) in table.poles.iter().enumerate() {
            match groups
                .iter_mut()
                .find(|(w, _)| (w - z).norm() <= 1e-6 * (1.0 + z.norm()))
            {
                Some((_, members)) => members.push((ti, pi)),
                None => groups.push((z, vec![(ti, pi)])),
            }
        }
    }
    let mut worst: f64 = 0.0;
    for (_, members) in &groups {
        let order = members
            .iter()
            .map(|&(ti, pi)| tables[ti].0.residues[pi].len())
            .max()
            .unwrap_or(0);
        for j in 0..order {
            let mut sum = Complex64::new(0.0, 0.0);
            let mut scale = 0.0;
            for &(ti, pi) in members {
                let (table, h) = &tables[ti];
                let z = table.poles[pi];
                let e = (-z * *h).exp();
                let mut fact = 1.0;
                for (k, c) in table.residues[pi].iter().enumerate() {
                    // k is the power of (t - h) in c (t-h)^k / k!.
                    if k > 0 {
                        fact *= k as f64;
                    }
                    if k < j {
                        continue;
                    }
                    let coeff = binomial(k, j) * (-*h).powi((k - j) as i32) / fact;
                    let term = c * e * coeff;
                    sum += term;
                    scale += term.norm();
                }
            }
            if scale > 0.0 {
                worst = worst.max(sum.norm() / scale);
            }
        }
    }
    worst
}

/// Default horizon `max(3 h_v, 5 / min Re z)` over right half-plane poles.
pub fn default_horizon(f: &DelaySum, support: f64) -> f64 {
    let min_re = f
        .terms()
        .iter()
        .flat_map(|t| t.rational.poles().roots.clone())
        .filter(|z| z.re > AXIS_TOLERANCE)
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min);
    let by_growth = if min_re.is_finite() { 5.0 / min_re } else { 0.0 };
    let h = (3.0 * support).max(by_growth);
    if h > 0.0 {
        h
    } else {
        1.0
    }
}

/// Certify that the impulse response of `f` vanishes on `(h_v, h_v + horizon]`.
///
/// Passes iff the sampled tail stays below `tol` times the peak on
/// `[0, h_v]` and every tail coefficient is below `tol` relative to its scale.
pub fn certify_fir(f: &DelaySum, h_v: f64, tol: f64, horizon: Option<f64>) -> Result<FirCertification, LtiError> {
    let horizon = horizon.unwrap_or_else(|| default_horizon(f, h_v));
    let tables = tables(f)?;
    let head = impulse_from_tables(&tables, &linear_grid(0.0, h_v, SUPPORT_SAMPLES));
    let tail_grid: Vec<f64> = (1..=TAIL_SAMPLES)
        .map(|k| h_v + horizon * k as f64 / TAIL_SAMPLES as f64)
        .collect();
    let tail = impulse_from_tables(&tables, &tail_grid);
    let peak = head.max_abs();
    let max_tail = tail.max_abs();

    let chunk = TAIL_SAMPLES / 10;
    let first = tail.values[..chunk].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let last = tail.values[TAIL_SAMPLES - chunk..]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let tail_growth = if first > 0.0 && last > 0.0 {
        (last / first).ln() / (0.9 * horizon)
    } else {
        0.0
    };

    let algebraic = algebraic_tail(&tables);
    // Tail sum of terms that grow like e^{Re z t}: the computed value cannot
    // be trusted below ROUNDING_FACTOR * eps * sum |terms|.
    let floors: Vec<f64> = tail
        .term_magnitudes
        .iter()
        .map(|m| ROUNDING_FACTOR * f64::EPSILON * m)
        .collect();
    let rounding_floor = floors.iter().fold(0.0f64, |a, &b| a.max(b));
    let behavioral_pass = tail
        .values
        .iter()
        .zip(&floors)
        .all(|(v, fl)| (v.abs() - fl).max(0.0) <= tol * peak);
    let algebraic_pass = algebraic <= tol;
    Ok(FirCertification {
        support: h_v,
        horizon,
        tolerance: tol,
        peak,
        max_tail,
        rounding_floor,
        tail_growth,
        algebraic_tail: algebraic,
        behavioral_pass,
        algebraic_pass,
        pass: behavioral_pass && algebraic_pass,
    })
}

/// Options for [`phi_decompose`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiOptions {
    pub detection_tolerance: f64,
    pub fir_tolerance: f64,
    pub horizon: Option<f64>,
}

impl Default for PhiOptions {
    fn default() -> Self {
        PhiOptions {
            detection_tolerance: DETECTION_TOLERANCE,
            fir_tolerance: FIR_TOLERANCE,
            horizon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiDecomposition {
    pub h: DelaySum,
    pub fir: FirBlock,
    pub cancellation: CancellationSet,
    /// Largest relative division remainder dropped while splitting.
    pub division_residual: f64,
}

impl PhiDecomposition {
    /// `H(s) + F(s)`.
    pub fn eval(&self, s: Complex64) -> Result<Complex64, LtiError> {
        Ok(self.h.eval(s)? + self.fir.f.eval(s)?)
    }
}

/// `Φ(G, G0)`, failing when the resulting `F` does not certify as FIR.
pub fn phi_decompose(g: &DelaySum, g0: &RationalFunction, options: &PhiOptions) -> Result<PhiDecomposition, PhiError> {
    let d = phi_decompose_unchecked(g, g0, options)?;
    if !d.fir.certification.pass {
        return Err(d.fir.certification.to_error());
    }
    Ok(d)
}

/// `Φ(G, G0)` with the certification only recorded.
pub fn phi_decompose_unchecked(
    g: &DelaySum,
    g0: &RationalFunction,
    options: &PhiOptions,
) -> Result<PhiDecomposition, PhiError> {
    let cancellation = common_rhp_zeros(g, g0, options.detection_tolerance)?;
    if cancellation.is_empty() {
        return Ok(PhiDecomposition {
            h: g.div_rational(g0)?,
            fir: FirBlock::zero(),
            cancellation,
            division_residual: 0.0,
        });
    }
    let mut h_terms = Vec::new();
    let mut f_terms = Vec::new();
    let mut division_residual: f64 = 0.0;
    for t in g.terms() {
        let ratio = RationalFunction::new(
            t.rational.numerator() * g0.denominator(),
            t.rational.denominator() * g0.numerator(),
        )?;
        let split = partial_fraction_split(&ratio, &cancellation.zeros).map_err(|source| PhiError::Split {
            delay: t.delay,
            source,
        })?;
        division_residual = division_residual.max(split.division_residual);
        h_terms.push((split.h, t.delay));
        f_terms.push((split.f, t.delay));
    }
    let h = DelaySum::new(h_terms)?;
    let f = DelaySum::new(f_terms)?;
    let support_end = g.max_delay();
    let certification = certify_fir(&f, support_end.value(), options.fir_tolerance, options.horizon)?;
    Ok(PhiDecomposition {
        h,
        fir: FirBlock {
            f,
            support_end,
            certification,
        },
        cancellation,
        division_residual,
    })
}
