//! Optimal H∞ controllers in cancellation-free form
//! `C = (H_n + F_n) / (H_d + F_d)`.
//!
//! The synthesis data `E`, `F`, `L` and `γ_opt` are inputs. The controller
//! `m_d E F L / (N_o (1 + m_n F L))` has unstable pole-zero cancellations at
//! the right half-plane zeros of `E`, `m_{q_d}` and of the numerator inner
//! factor; Φ turns each of them into an FIR block.

use std::fmt::Write;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::delay::RationalDelay;
use crate::factorization::{FactoredPlant, PlantCase};
use crate::lti::{DelaySum, LtiError, RationalFunction};
use crate::phi::{
    certify_fir, phi_decompose_unchecked, FirBlock, FirCertification, PhiDecomposition, PhiError,
    PhiOptions,
};
use crate::poly::{cpoly_eval, Poly};
use crate::report::{csv_table, sig};
use crate::rootfinder::{RootSet, AXIS_TOLERANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("γ_opt must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("γ_opt computation is not supported; supply it with the synthesis data")]
    GammaComputationUnsupported,
    #[error("zero {zero} lies on the imaginary axis")]
    AxisZero { zero: Complex64 },
    #[error("{block} is not FIR (synthesis data violate the interpolation conditions?)\n{}", certification.text())]
    NotFir {
        block: &'static str,
        certification: Box<FirCertification>,
    },
    #[error("controller assembly needs case {expected}, plant is {found}")]
    WrongCase { expected: PlantCase, found: PlantCase },
    #[error("interpolation node {node} is degenerate")]
    DegenerateNode { node: Complex64 },
    #[error(transparent)]
    Phi(#[from] PhiError),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Mixed-sensitivity weights; carried for reporting only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightPair {
    pub w1: RationalFunction,
    pub w2: Option<RationalFunction>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisData {
    pub gamma_opt: f64,
    pub e: RationalFunction,
    pub f: RationalFunction,
    pub l: RationalFunction,
}

impl SynthesisData {
    pub fn new(gamma_opt: f64, e: RationalFunction, f: RationalFunction, l: RationalFunction) -> Result<Self, ControllerError> {
        if !(gamma_opt > 0.0) {
            return Err(ControllerError::NonPositiveGamma(gamma_opt));
        }
        Ok(SynthesisData { gamma_opt, e, f, l })
    }
}

/// `γ_opt` is the largest root of a determinant condition that needs
/// machinery not provided here; this always refuses.
pub fn compute_gamma_opt(_plant: &FactoredPlant, _weights: &WeightPair) -> Result<f64, ControllerError> {
    Err(ControllerError::GammaComputationUnsupported)
}

// ---------------------------------------------------------------------------
// θ split

/// `product = θ_n θ_d` with `θ_n = prod (s - z) / prod (s + conj z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaSplit {
    pub theta_n: RationalFunction,
    pub theta_d: RationalFunction,
    pub zeros: RootSet,
}

/// Split at every right half-plane zero of the numerator of `product`.
pub fn split_theta(product: &RationalFunction) -> Result<ThetaSplit, ControllerError> {
    let mut entries = Vec::new();
    for (z, m) in product.zeros()?.iter() {
        if z.re.abs() <= AXIS_TOLERANCE {
            return Err(ControllerError::AxisZero { zero: z });
        }
        if z.re > 0.0 {
            entries.push((z, m));
        }
    }
    split_theta_at(product, &RootSet::new(entries))
}

/// Split at a given conjugate-closed set of right half-plane zeros of `product`.
pub fn split_theta_at(product: &RationalFunction, zeros: &RootSet) -> Result<ThetaSplit, ControllerError> {
    for z in &zeros.roots {
        if z.re.abs() <= AXIS_TOLERANCE {
            return Err(ControllerError::AxisZero { zero: *z });
        }
    }
    if zeros.is_empty() {
        return Ok(ThetaSplit {
            theta_n: RationalFunction::one(),
            theta_d: product.clone(),
            zeros: RootSet::empty(),
        });
    }
    let zs = zeros.expanded();
    let mirrored: Vec<Complex64> = zs.iter().map(|z| -z.conj()).collect();
    let carrier = Poly::from_roots(&zs);
    let mirror = Poly::from_roots(&mirrored);
    let theta_n = RationalFunction::new(carrier.clone(), mirror.clone())?;
    let (rest, _) = product.numerator().div_rem(&carrier);
    let theta_d = RationalFunction::new(&rest * &mirror, product.denominator().clone())?;
    Ok(ThetaSplit {
        theta_n,
        theta_d,
        zeros: zeros.clone(),
    })
}

fn rhp_zeros(r: &RationalFunction) -> Result<Vec<(Complex64, usize)>, ControllerError> {
    let mut out = Vec::new();
    for (z, m) in r.zeros()?.iter() {
        if z.re.abs() <= AXIS_TOLERANCE {
            return Err(ControllerError::AxisZero { zero: z });
        }
        if z.re > 0.0 {
            out.push((z, m));
        }
    }
    Ok(out)
}

/// θ split of `E F m_{q_d} L` at the right half-plane zeros of `E` and `m_{q_d}`.
pub fn theta_for(fp: &FactoredPlant, sd: &SynthesisData) -> Result<ThetaSplit, ControllerError> {
    let product = sd.e.mul(&sd.f)?.mul(&fp.m_d.rational)?.mul(&sd.l)?;
    let mut zeros = rhp_zeros(&sd.e)?;
    for (z, m) in fp.m_d.zeros.iter() {
        match zeros
            .iter_mut()
            .find(|(w, _)| (*w - z).norm() <= 1e-9 * (1.0 + z.norm()))
        {
            Some(entry) => entry.1 += m,
            None => zeros.push((z, m)),
        }
    }
    split_theta_at(&product, &RootSet::new(zeros))
}

// ---------------------------------------------------------------------------
// Assembly

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerForm {
    pub case: PlantCase,
    pub gamma_opt: f64,
    pub h_n: DelaySum,
    pub f_n: FirBlock,
    pub h_d: DelaySum,
    pub f_d: FirBlock,
    pub theta: ThetaSplit,
    /// Right half-plane points cancelled in the numerator and denominator blocks.
    pub numerator_cancellations: Vec<Complex64>,
    pub denominator_cancellations: Vec<Complex64>,
    /// Right half-plane zeros of the Φ divisors that `G` did not share.
    pub unmatched: Vec<Complex64>,
}

impl ControllerForm {
    pub fn numerator(&self, s: Complex64) -> Result<Complex64, LtiError> {
        Ok(self.h_n.eval(s)? + self.f_n.f.eval(s)?)
    }

    pub fn denominator(&self, s: Complex64) -> Result<Complex64, LtiError> {
        Ok(self.h_d.eval(s)? + self.f_d.f.eval(s)?)
    }

    pub fn eval(&self, s: Complex64) -> Result<Complex64, LtiError> {
        Ok(self.numerator(s)? / self.denominator(s)?)
    }

    /// Largest relative mismatch against the unsplit controller formula.
    pub fn equivalence_residual(&self, fp: &FactoredPlant, sd: &SynthesisData, points: &[Complex64]) -> Result<f64, LtiError> {
        points.iter().try_fold(0.0f64, |acc, &s| {
            let want = unsplit_controller(fp, sd, s)?;
            let got = self.eval(s)?;
            Ok(acc.max((got - want).norm() / want.norm().max(f64::MIN_POSITIVE)))
        })
    }

    /// Frequency response CSV with header `omega,re,im`.
    pub fn frequency_csv(&self, omegas: &[f64]) -> Result<String, LtiError> {
        let rows = omegas
            .iter()
            .map(|&w| {
                let v = self.eval(Complex64::new(0.0, w))?;
                Ok(vec![w, v.re, v.im])
            })
            .collect::<Result<Vec<_>, LtiError>>()?;
        Ok(csv_table("omega,re,im", rows))
    }

    pub fn export(&self) -> ControllerExport {
        ControllerExport {
            case: self.case,
            gamma_opt: self.gamma_opt,
            h_n: terms_export(&self.h_n),
            h_d: terms_export(&self.h_d),
            f_n: FirExport::from(&self.f_n),
            f_d: FirExport::from(&self.f_d),
            theta_n: (
                self.theta.theta_n.numerator().coeffs().to_vec(),
                self.theta.theta_n.denominator().coeffs().to_vec(),
            ),
        }
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "case: {}", self.case);
        let _ = writeln!(out, "gamma_opt: {} (supplied, not computed)", sig(self.gamma_opt, 6));
        let _ = writeln!(out, "theta_n: {}", self.theta.theta_n);
        let _ = writeln!(out, "H_n = {}", self.h_n);
        let _ = writeln!(out, "F_n = {}", self.f_n.f);
        let _ = writeln!(out, "H_d = {}", self.h_d);
        let _ = writeln!(out, "F_d = {}", self.f_d.f);
        let _ = writeln!(out, "-- F_n certification");
        out.push_str(&self.f_n.certification.text());
        let _ = writeln!(out, "-- F_d certification");
        out.push_str(&self.f_d.certification.text());
        if !self.unmatched.is_empty() {
            let _ = writeln!(out, "warning: {} unstable divisor zero(s) not shared", self.unmatched.len());
        }
        out
    }
}

/// `m_d E F L / (N_o (1 + m_n F L))` evaluated pointwise.
pub fn unsplit_controller(fp: &FactoredPlant, sd: &SynthesisData, s: Complex64) -> Result<Complex64, LtiError> {
    let fl = sd.f.eval(s)? * sd.l.eval(s)?;
    let num = fp.m_d.eval(s)? * sd.e.eval(s)? * fl;
    let den = fp.n_o.eval(s)? * (1.0 + fp.m_n.eval(s)? * fl);
    Ok(num / den)
}

fn certified(d: &PhiDecomposition, block: &'static str) -> Result<(), ControllerError> {
    if d.fir.certification.pass {
        Ok(())
    } else {
        Err(ControllerError::NotFir {
            block,
            certification: Box::new(d.fir.certification.clone()),
        })
    }
}

fn delayed_rational(r: RationalFunction, h: RationalDelay) -> Result<DelaySum, LtiError> {
    DelaySum::new([(r, h)])
}

/// Numerator block `Φ(θ_d q_d, m_{q_d})`.
pub fn numerator_block(fp: &FactoredPlant, theta: &ThetaSplit, options: &PhiOptions) -> Result<PhiDecomposition, ControllerError> {
    let g = DelaySum::from_qpoly(&fp.q_d)?.mul_rational(&theta.theta_d)?;
    Ok(phi_decompose_unchecked(&g, &fp.m_d.rational, options)?)
}

/// Denominator block before Φ, with its divisor.
fn denominator_input(fp: &FactoredPlant, sd: &SynthesisData, theta: &ThetaSplit) -> Result<(DelaySum, RationalFunction), ControllerError> {
    let q_n = DelaySum::from_qpoly(&fp.q_n)?;
    let mfl = fp.m_q.rational.mul(&sd.f)?.mul(&sd.l)?;
    let coupling = q_n.mul(&delayed_rational(mfl, fp.delay)?)?;
    let g = match &fp.q_n_conjugate {
        None => q_n.add(&coupling)?,
        Some(qbar) => DelaySum::from_qpoly(qbar)?.add(&coupling)?,
    };
    let g0 = theta.theta_n.mul(&fp.m_q.rational)?;
    Ok((g, g0))
}

fn assemble(fp: &FactoredPlant, sd: &SynthesisData, options: &PhiOptions) -> Result<ControllerForm, ControllerError> {
    let theta = theta_for(fp, sd)?;
    let num = numerator_block(fp, &theta, options)?;
    let (g, g0) = denominator_input(fp, sd, &theta)?;
    let den = phi_decompose_unchecked(&g, &g0, options)?;
    certified(&num, "F_n")?;
    certified(&den, "F_d")?;
    let mut unmatched = num.cancellation.unmatched.clone();
    unmatched.extend(den.cancellation.unmatched.iter().copied());
    Ok(ControllerForm {
        case: fp.case,
        gamma_opt: sd.gamma_opt,
        h_n: num.h,
        f_n: num.fir,
        h_d: den.h,
        f_d: den.fir,
        theta,
        numerator_cancellations: num.cancellation.points(),
        denominator_cancellations: den.cancellation.points(),
        unmatched,
    })
}

/// Case C1: `H_d + F_d = Φ(q_n (1 + m_n F L), θ_n m_{q_n})`.
pub fn assemble_c1(fp: &FactoredPlant, sd: &SynthesisData, options: &PhiOptions) -> Result<ControllerForm, ControllerError> {
    if fp.case != PlantCase::C1 {
        return Err(ControllerError::WrongCase {
            expected: PlantCase::C1,
            found: fp.case,
        });
    }
    assemble(fp, sd, options)
}

/// Case C2: `H_d + F_d = Φ(q̄_n + m_{q̄_n} q_n F L, θ_n m_{q̄_n})`.
pub fn assemble_c2(fp: &FactoredPlant, sd: &SynthesisData, options: &PhiOptions) -> Result<ControllerForm, ControllerError> {
    if fp.case != PlantCase::C2 {
        return Err(ControllerError::WrongCase {
            expected: PlantCase::C2,
            found: fp.case,
        });
    }
    assemble(fp, sd, options)
}

pub fn assemble_controller(fp: &FactoredPlant, sd: &SynthesisData, options: &PhiOptions) -> Result<ControllerForm, ControllerError> {
    assemble(fp, sd, options)
}

// ---------------------------------------------------------------------------
// Synthetic synthesis data

/// Points where `1 + m_n F L` must vanish: right half-plane zeros of `E`
/// and of `m_{q_d}`.
pub fn interpolation_nodes(fp: &FactoredPlant, e: &RationalFunction) -> Result<Vec<Complex64>, ControllerError> {
    let mut nodes: Vec<Complex64> = rhp_zeros(e)?.iter().flat_map(|&(z, m)| std::iter::repeat(z).take(m)).collect();
    nodes.extend(fp.m_d.zeros.expanded());
    Ok(nodes)
}

/// `F = P / Q` with `Q` given and `P` the real interpolant of
/// `P(z) = -Q(z) / (m_n(z) L(z))` at the interpolation nodes, so that the
/// resulting controller has only removable right half-plane cancellations.
/// Nodes must be distinct.
pub fn interpolating_f(fp: &FactoredPlant, e: &RationalFunction, l: &RationalFunction, q: &Poly) -> Result<RationalFunction, ControllerError> {
    let nodes = interpolation_nodes(fp, e)?;
    let mut values = Vec::with_capacity(nodes.len());
    for &z in &nodes {
        let d = fp.m_n.eval(z)? * l.eval(z)?;
        if d.norm() == 0.0 || !d.re.is_finite() {
            return Err(ControllerError::DegenerateNode { node: z });
        }
        values.push(-q.eval_complex(z) / d);
    }
    let p = newton_interpolant(&nodes, &values)?;
    Ok(RationalFunction::new(p, q.clone())?)
}

/// Real polynomial through conjugate-symmetric data (Newton divided differences).
fn newton_interpolant(nodes: &[Complex64], values: &[Complex64]) -> Result<Poly, ControllerError> {
    let n = nodes.len();
    if n == 0 {
        return Ok(Poly::zero());
    }
    let mut coef = values.to_vec();
    for j in 1..n {
        for i in (j..n).rev() {
            let dz = nodes[i] - nodes[i - j];
            if dz.norm() == 0.0 {
                return Err(ControllerError::DegenerateNode { node: nodes[i] });
            }
            coef[i] = (coef[i] - coef[i - 1]) / dz;
        }
    }
    // Expand sum_j coef_j prod_{i<j} (s - z_i), highest degree first.
    let mut acc = vec![coef[n - 1]];
    for j in (0..n - 1).rev() {
        let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
        for (k, &a) in acc.iter().enumerate() {
            next[k] += a;
            next[k + 1] -= a * nodes[j];
        }
        let last = next.len() - 1;
        next[last] += coef[j];
        acc = next;
    }
    debug_assert!(nodes
        .iter()
        .zip(values)
        .all(|(&z, &v)| (cpoly_eval(&acc, z) - v).norm() <= 1e-6 * (1.0 + v.norm())));
    Ok(Poly::new(acc.iter().map(|c| c.re).collect()))
}

// ---------------------------------------------------------------------------
// Reference fixtures

/// A printed FIR block with its expected support.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirFixture {
    pub name: String,
    pub f: DelaySum,
    pub support: RationalDelay,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureReport {
    pub name: String,
    pub expected_support: RationalDelay,
    pub observed_support: RationalDelay,
    pub certification: FirCertification,
    pub pass: bool,
}

impl FixtureReport {
    pub fn line(&self) -> String {
        let ratio = self.certification.max_tail / self.certification.peak.max(f64::MIN_POSITIVE);
        format!(
            "{}: support {} (expected {}), tail/peak {}, tail coefficient {}, {}",
            self.name,
            self.observed_support,
            self.expected_support,
            sig(ratio, 3),
            sig(self.certification.algebraic_tail, 3),
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Certify a printed FIR block over `(support, support + horizon]`.
pub fn verify_fixture(fixture: &FirFixture, tol: f64, horizon: f64) -> Result<FixtureReport, LtiError> {
    let observed_support = fixture.f.max_delay();
    let certification = certify_fir(&fixture.f, fixture.support.value(), tol, Some(horizon))?;
    let pass = certification.pass && observed_support == fixture.support;
    Ok(FixtureReport {
        name: fixture.name.clone(),
        expected_support: fixture.support,
        observed_support,
        certification,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Export

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TermExport {
    pub delay: String,
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

fn terms_export(g: &DelaySum) -> Vec<TermExport> {
    g.terms()
        .iter()
        .map(|t| TermExport {
            delay: t.delay.to_string(),
            numerator: t.rational.numerator().coeffs().to_vec(),
            denominator: t.rational.denominator().coeffs().to_vec(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirExport {
    pub terms: Vec<TermExport>,
    pub support: String,
    pub certification: FirCertification,
}

impl From<&FirBlock> for FirExport {
    fn from(b: &FirBlock) -> Self {
        FirExport {
            terms: terms_export(&b.f),
            support: b.support_end.to_string(),
            certification: b.certification.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerExport {
    pub case: PlantCase,
    pub gamma_opt: f64,
    pub h_n: Vec<TermExport>,
    pub h_d: Vec<TermExport>,
    pub f_n: FirExport,
    pub f_d: FirExport,
    pub theta_n: (Vec<f64>, Vec<f64>),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::{factor_plant, PlantDescription};
    use crate::phi::FIR_TOLERANCE;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rf(num: &[f64], den: &[f64]) -> RationalFunction {
        RationalFunction::from_coeffs(num, den).unwrap()
    }

    #[test]
    fn theta_split_examples() {
        let p = rf(&[1.0, -1.0], &[1.0, 2.0]);
        let t = split_theta(&p).unwrap();
        assert_eq!(t.theta_n.numerator().coeffs(), &[1.0, -1.0]);
        assert_eq!(t.theta_n.denominator().coeffs(), &[1.0, 1.0]);
        assert_eq!(t.theta_d.numerator().coeffs(), &[1.0, 1.0]);
        assert_eq!(t.theta_d.denominator().coeffs(), &[1.0, 2.0]);

        let stable = rf(&[1.0, 3.0], &[1.0, 2.0]);
        let t = split_theta(&stable).unwrap();
        assert_eq!(t.theta_n, RationalFunction::one());
        assert_eq!(t.theta_d, stable);

        assert!(matches!(
            split_theta(&rf(&[1.0, 0.0, 1.0], &[1.0, 2.0, 1.0])),
            Err(ControllerError::AxisZero { .. })
        ));
    }

    #[test]
    fn gamma_is_never_computed() {
        let p = PlantDescription::new("1 -1 @ 1".parse().unwrap(), "1 -2 @ 0".parse().unwrap()).unwrap();
        let fp = factor_plant(&p).unwrap();
        let w = WeightPair {
            w1: rf(&[1.0], &[1.0, 1.0]),
            w2: None,
        };
        assert_eq!(compute_gamma_opt(&fp, &w), Err(ControllerError::GammaComputationUnsupported));
        assert!(matches!(
            SynthesisData::new(0.0, RationalFunction::one(), RationalFunction::one(), RationalFunction::one()),
            Err(ControllerError::NonPositiveGamma(_))
        ));
    }

    #[test]
    fn synthetic_c1_controller_is_cancellation_free() {
        // ((s - 1) / (s - 2)) e^{-s}
        let p = PlantDescription::new("1 -1 @ 1".parse().unwrap(), "1 -2 @ 0".parse().unwrap()).unwrap();
        let fp = factor_plant(&p).unwrap();
        let e = rf(&[1.0, -0.5], &[1.0, 3.0]);
        let l = rf(&[2.0], &[1.0, 4.0]);
        let f = interpolating_f(&fp, &e, &l, &Poly::linear(-1.0).pow(2)).unwrap();
        let sd = SynthesisData::new(1.5, e, f, l).unwrap();
        let cf = assemble_c1(&fp, &sd, &PhiOptions::default()).unwrap();
        assert!(cf.f_n.certification.pass && cf.f_d.certification.pass);
        assert_eq!(cf.denominator_cancellations.len(), 3);
        let pts = [c(-0.7, 0.4), c(-2.0, -1.0), c(0.0, 0.5), c(0.0, 3.0), c(-0.1, 7.0)];
        assert!(cf.equivalence_residual(&fp, &sd, &pts).unwrap() < 1e-9);
        let cert = &cf.f_d.certification;
        assert!(cert.max_tail <= FIR_TOLERANCE * cert.peak + cert.rounding_floor);
        assert!(cert.algebraic_tail < 1e-12);
        let csv = cf.frequency_csv(&[0.1, 1.0]).unwrap();
        assert!(csv.starts_with("omega,re,im\n"));
        assert!(matches!(
            assemble_c2(&fp, &sd, &PhiOptions::default()),
            Err(ControllerError::WrongCase { .. })
        ));
    }

    #[test]
    fn wrong_interpolation_is_reported() {
        let p = PlantDescription::new("1 -1 @ 1".parse().unwrap(), "1 -2 @ 0".parse().unwrap()).unwrap();
        let fp = factor_plant(&p).unwrap();
        let e = rf(&[1.0, -0.5], &[1.0, 3.0]);
        let l = rf(&[2.0], &[1.0, 4.0]);
        let f = interpolating_f(&fp, &e, &l, &Poly::linear(-1.0).pow(2)).unwrap();
        let bad_f = RationalFunction::new(f.numerator().scale(1.001), f.denominator().clone()).unwrap();
        let sd = SynthesisData::new(1.5, e, bad_f, l).unwrap();
        // Shared zeros are no longer detected, so Φ leaves unstable poles in H
        // and nothing is certified as FIR; the divisor zeros are reported.
        let opts = PhiOptions {
            detection_tolerance: 1e-2,
            ..PhiOptions::default()
        };
        match assemble_c1(&fp, &sd, &opts) {
            Err(ControllerError::NotFir { block, certification }) => {
                assert_eq!(block, "F_d");
                assert!(certification.tail_growth > 0.0);
            }
            other => panic!("expected NotFir, got {other:?}"),
        }
    }
}
