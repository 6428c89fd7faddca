//! Inner/outer factorization of quasi-polynomials and of plants
//! `P = q_n / q_d`.
//!
//! A plant is factored as `P = m_n N_o / m_d` with `m_n` inner, `m_d` a
//! rational inner function and `N_o` outer. Two routes exist: when both
//! `q_n` and `q_d` have finitely many right-half-plane roots (case C1), the
//! unstable zeros of `q_n` go into a Blaschke product; when only the conjugate
//! `q̄_n` has finitely many (case C2), the all-pass ratio `q_n / q̄_n` carries
//! the infinitely many unstable zeros.

use std::fmt::{self, Write};

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::delay::{DelayError, RationalDelay};
use crate::lti::{LtiError, RatioExpression, RatioFactor, RationalFunction};
use crate::poly::Poly;
use crate::qpoly::{QpolyError, QuasiPolynomial};
use crate::report::sig;
use crate::rootfinder::{
    finiteness_rhp, finiteness_rhp_conjugate, rhp_roots, winding_number, FinitenessVerdict,
    Rectangle, RhpRoots, RootError, RootSet, Verdict, AXIS_TOLERANCE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("root {root} lies on the imaginary axis")]
    AxisRoot { root: Complex64 },
    #[error("root set is not closed under conjugation (missing partner of {root})")]
    AsymmetricRoots { root: Complex64 },
    #[error("root {root} is not in the open right half-plane")]
    LeftHalfPlaneRoot { root: Complex64 },
    #[error("{what}: right half-plane root set is {verdict}")]
    NotFinite { what: &'static str, verdict: Verdict },
    #[error("plant is not realizable: {0}")]
    Realizability(String),
    #[error("plant is not admissible: {0}")]
    NotAdmissible(String),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    Qpoly(#[from] QpolyError),
    #[error(transparent)]
    Delay(#[from] DelayError),
}

/// `n` logarithmically spaced points on `[a, b]`, `a, b > 0`.
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|k| (la + (lb - la) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Largest `||f(jω)| - 1|` over the grid.
pub fn inner_deviation<F>(f: F, omegas: &[f64]) -> Result<f64, LtiError>
where
    F: Fn(Complex64) -> Result<Complex64, LtiError>,
{
    omegas.iter().try_fold(0.0f64, |acc, &w| {
        Ok(acc.max((f(Complex64::new(0.0, w))?.norm() - 1.0).abs()))
    })
}

// ---------------------------------------------------------------------------
// Blaschke products

/// `prod (s - z_i) / prod (s + conj z_i)` over zeros in the open right half-plane.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerRational {
    pub rational: RationalFunction,
    pub zeros: RootSet,
}

impl InnerRational {
    pub fn one() -> Self {
        InnerRational {
            rational: RationalFunction::one(),
            zeros: RootSet::empty(),
        }
    }

    pub fn is_one(&self) -> bool {
        self.zeros.is_empty()
    }

    pub fn eval(&self, s: Complex64) -> Result<Complex64, LtiError> {
        self.rational.eval(s)
    }

    pub fn numerator(&self) -> &Poly {
        self.rational.numerator()
    }

    pub fn denominator(&self) -> &Poly {
        self.rational.denominator()
    }
}

impl fmt::Display for InnerRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.rational)
    }
}

pub fn blaschke(roots: &RootSet) -> Result<InnerRational, FactorError> {
    for (z, m) in roots.iter() {
        if z.re.abs() <= AXIS_TOLERANCE {
            return Err(FactorError::AxisRoot { root: z });
        }
        if z.re < 0.0 {
            return Err(FactorError::LeftHalfPlaneRoot { root: z });
        }
        let tol = 1e-9 * (1.0 + z.norm());
        if !roots
            .iter()
            .any(|(w, k)| k == m && (w - z.conj()).norm() <= tol)
        {
            return Err(FactorError::AsymmetricRoots { root: z });
        }
    }
    if roots.is_empty() {
        return Ok(InnerRational::one());
    }
    let zs = roots.expanded();
    let mirrored: Vec<Complex64> = zs.iter().map(|z| -z.conj()).collect();
    let rational = RationalFunction::new(Poly::from_roots(&zs), Poly::from_roots(&mirrored))?;
    Ok(InnerRational {
        rational,
        zeros: roots.clone(),
    })
}

// ---------------------------------------------------------------------------
// Quasi-polynomial factorizations

/// `q = inner · outer` with the data used to build it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpFactorization {
    pub inner: RatioExpression,
    pub outer: RatioExpression,
    /// Blaschke factor built from the right half-plane roots found.
    pub blaschke: InnerRational,
    /// Roots and search box of the quasi-polynomial that was searched
    /// (`q` itself, or `q̄` for the conjugate route).
    pub roots: RhpRoots,
}

fn unit_qpoly() -> QuasiPolynomial {
    QuasiPolynomial::polynomial(Poly::one()).expect("1 is nonzero")
}

fn qp_ratio(numerator: &QuasiPolynomial, denominator: &QuasiPolynomial) -> RatioFactor {
    RatioFactor::QpRatio {
        numerator: numerator.clone(),
        denominator: denominator.clone(),
    }
}

fn require_finite(what: &'static str, fv: &FinitenessVerdict) -> Result<(), FactorError> {
    if fv.verdict == Verdict::Finite {
        Ok(())
    } else {
        Err(FactorError::NotFinite {
            what,
            verdict: fv.verdict,
        })
    }
}

fn searched_roots(q: &QuasiPolynomial) -> Result<RhpRoots, FactorError> {
    match rhp_roots(q) {
        Ok(r) => Ok(r),
        Err(RootError::ImaginaryAxisRoot { root }) => Err(FactorError::AxisRoot { root }),
        Err(e) => Err(e.into()),
    }
}

/// `q = (m_q e^{-h_1 s}) · (q e^{h_1 s} / m_q)` with `m_q` the Blaschke
/// product of the right half-plane roots of `q`.
pub fn factor_qpoly_direct(q: &QuasiPolynomial) -> Result<QpFactorization, FactorError> {
    require_finite("q", &finiteness_rhp(q)?)?;
    let (h1, shifted) = q.extract_common_delay();
    let roots = searched_roots(&shifted)?;
    let b = blaschke(&roots.roots)?;
    let mut inner = Vec::new();
    if !b.is_one() {
        inner.push(RatioFactor::Rational(b.rational.clone()));
    }
    if !h1.is_zero() {
        inner.push(RatioFactor::Delay(h1));
    }
    let mut outer = vec![qp_ratio(&shifted, &unit_qpoly())];
    if !b.is_one() {
        outer.push(RatioFactor::Rational(b.rational.recip()?));
    }
    Ok(QpFactorization {
        inner: RatioExpression::new(inner)?,
        outer: RatioExpression::new(outer)?,
        blaschke: b,
        roots,
    })
}

/// `q = ((q / q̄) m_{q̄}) · (q̄ / m_{q̄})`; `q / q̄` is all-pass and absorbs
/// the right half-plane roots of `q`.
pub fn factor_qpoly_conjugate(q: &QuasiPolynomial) -> Result<QpFactorization, FactorError> {
    require_finite("conjugate of q", &finiteness_rhp_conjugate(q)?)?;
    let qbar = q.conjugate();
    let roots = searched_roots(&qbar)?;
    let b = blaschke(&roots.roots)?;
    let mut inner = Vec::new();
    if !b.is_one() {
        inner.push(RatioFactor::Rational(b.rational.clone()));
    }
    if q != &qbar {
        inner.push(qp_ratio(q, &qbar));
    }
    let mut outer = vec![qp_ratio(&qbar, &unit_qpoly())];
    if !b.is_one() {
        outer.push(RatioFactor::Rational(b.rational.recip()?));
    }
    Ok(QpFactorization {
        inner: RatioExpression::new(inner)?,
        outer: RatioExpression::new(outer)?,
        blaschke: b,
        roots,
    })
}

// ---------------------------------------------------------------------------
// Plants

/// `P(s) = q_n(s) / q_d(s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantDescription {
    pub numerator: QuasiPolynomial,
    pub denominator: QuasiPolynomial,
}

impl PlantDescription {
    /// Requires `deg q_{n,1} <= deg q_{d,1}` and `h_{n,1} >= h_{d,1}`.
    pub fn new(numerator: QuasiPolynomial, denominator: QuasiPolynomial) -> Result<Self, FactorError> {
        let dn = numerator.principal().poly.degree();
        let dd = denominator.principal().poly.degree();
        if dn > dd {
            return Err(FactorError::Realizability(format!(
                "principal numerator degree {dn} exceeds principal denominator degree {dd}"
            )));
        }
        if numerator.min_delay() < denominator.min_delay() {
            return Err(FactorError::Realizability(format!(
                "numerator delay {} is smaller than denominator delay {}",
                numerator.min_delay(),
                denominator.min_delay()
            )));
        }
        Ok(PlantDescription {
            numerator,
            denominator,
        })
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.numerator.evaluate(s) / self.denominator.evaluate(s)
    }

    /// `h_{n,1} - h_{d,1}`, the input-output delay.
    pub fn io_delay(&self) -> RationalDelay {
        self.numerator
            .min_delay()
            .checked_sub(&self.denominator.min_delay())
            .expect("checked at construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PlantCase {
    C1,
    C2,
}

impl fmt::Display for PlantCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Admissibility {
    Case(PlantCase),
    NotAdmissible { reason: String, indeterminate: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantClassification {
    pub admissibility: Admissibility,
    pub numerator: FinitenessVerdict,
    pub numerator_conjugate: FinitenessVerdict,
    pub denominator: FinitenessVerdict,
}

/// C1 when `q_n` and `q_d` both have finitely many right half-plane roots,
/// otherwise C2 when `q̄_n` and `q_d` do; C1 is preferred.
pub fn classify_plant(p: &PlantDescription) -> Result<PlantClassification, FactorError> {
    let numerator = finiteness_rhp(&p.numerator)?;
    let numerator_conjugate = finiteness_rhp_conjugate(&p.numerator)?;
    let denominator = finiteness_rhp(&p.denominator)?;
    let not = |reason: String, verdict: Verdict| Admissibility::NotAdmissible {
        reason,
        indeterminate: verdict == Verdict::Indeterminate,
    };
    let admissibility = if denominator.verdict != Verdict::Finite {
        not(
            format!("denominator right half-plane roots: {}", denominator.verdict),
            denominator.verdict,
        )
    } else if numerator.verdict == Verdict::Finite {
        Admissibility::Case(PlantCase::C1)
    } else if numerator_conjugate.verdict == Verdict::Finite {
        Admissibility::Case(PlantCase::C2)
    } else {
        let v = if numerator.verdict == Verdict::Indeterminate
            || numerator_conjugate.verdict == Verdict::Indeterminate
        {
            Verdict::Indeterminate
        } else {
            Verdict::Infinite
        };
        not(
            format!(
                "numerator right half-plane roots: {}; conjugate numerator: {}",
                numerator.verdict, numerator_conjugate.verdict
            ),
            v,
        )
    };
    Ok(PlantClassification {
        admissibility,
        numerator,
        numerator_conjugate,
        denominator,
    })
}

/// `P = m_n N_o / m_d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactoredPlant {
    pub case: PlantCase,
    pub m_n: RatioExpression,
    pub m_d: InnerRational,
    pub n_o: RatioExpression,
    /// Blaschke factor of the numerator side: `m_{q_n}` (C1) or `m_{q̄_n}` (C2).
    pub m_q: InnerRational,
    /// `q_n e^{h_{n,1} s}`.
    pub q_n: QuasiPolynomial,
    /// `q_d e^{h_{d,1} s}`.
    pub q_d: QuasiPolynomial,
    /// `q̄_n` built from the shifted numerator (C2 only).
    pub q_n_conjugate: Option<QuasiPolynomial>,
    /// Input-output delay `h_{n,1} - h_{d,1}`, carried by `m_n`.
    pub delay: RationalDelay,
    pub numerator_roots: RhpRoots,
    pub denominator_roots: RhpRoots,
}

pub fn factor_plant(p: &PlantDescription) -> Result<FactoredPlant, FactorError> {
    let class = classify_plant(p)?;
    let case = match class.admissibility {
        Admissibility::Case(c) => c,
        Admissibility::NotAdmissible { reason, .. } => return Err(FactorError::NotAdmissible(reason)),
    };
    let delay = p.io_delay();
    let (_, q_n) = p.numerator.extract_common_delay();
    let (_, q_d) = p.denominator.extract_common_delay();

    let den = factor_qpoly_direct(&q_d)?;
    let m_d = den.blaschke.clone();

    let (num, q_n_conjugate) = match case {
        PlantCase::C1 => (factor_qpoly_direct(&q_n)?, None),
        PlantCase::C2 => (factor_qpoly_conjugate(&q_n)?, Some(q_n.conjugate())),
    };
    let m_q = num.blaschke.clone();

    let mut m_n = num.inner.factors.clone();
    if !delay.is_zero() {
        m_n.push(RatioFactor::Delay(delay));
    }
    let num_side = q_n_conjugate.as_ref().unwrap_or(&q_n);
    let mut n_o = vec![qp_ratio(num_side, &q_d)];
    if !m_q.is_one() {
        n_o.push(RatioFactor::Rational(m_q.rational.recip()?));
    }
    if !m_d.is_one() {
        n_o.push(RatioFactor::Rational(m_d.rational.clone()));
    }
    Ok(FactoredPlant {
        case,
        m_n: RatioExpression::new(m_n)?,
        m_d,
        n_o: RatioExpression::new(n_o)?,
        m_q,
        q_n,
        q_d,
        q_n_conjugate,
        delay,
        numerator_roots: num.roots,
        denominator_roots: den.roots,
    })
}

impl FactoredPlant {
    /// `m_n(s) N_o(s) / m_d(s)`.
    pub fn eval(&self, s: Complex64) -> Result<Complex64, LtiError> {
        Ok(self.m_n.eval(s)? * self.n_o.eval(s)? / self.m_d.eval(s)?)
    }

    /// Largest relative mismatch between the factored form and `P` at the points.
    pub fn reconstruction_residual(&self, plant: &PlantDescription, points: &[Complex64]) -> Result<f64, LtiError> {
        points.iter().try_fold(0.0f64, |acc, &s| {
            let want = plant.eval(s);
            let got = self.eval(s)?;
            Ok(acc.max((got - want).norm() / want.norm().max(f64::MIN_POSITIVE)))
        })
    }

    /// `(max ||m_n(jω)|-1|, max ||m_d(jω)|-1|)` over the grid.
    pub fn inner_deviation(&self, omegas: &[f64]) -> Result<(f64, f64), LtiError> {
        Ok((
            inner_deviation(|s| self.m_n.eval(s), omegas)?,
            inner_deviation(|s| self.m_d.eval(s), omegas)?,
        ))
    }

    /// Winding numbers of the zero-carrying parts of `N_o` around the
    /// certified search rectangles: the searched numerator quasi-polynomial
    /// divided by its Blaschke numerator, and `q_d` divided by the numerator
    /// of `m_d`. Both are zero for an outer `N_o`.
    pub fn outer_winding(&self) -> Result<(i64, i64), RootError> {
        let num_q = self.q_n_conjugate.as_ref().unwrap_or(&self.q_n);
        let a = carrier_winding(num_q, &self.m_q, &self.numerator_roots.search_box)?;
        let b = carrier_winding(&self.q_d, &self.m_d, &self.denominator_roots.search_box)?;
        Ok((a, b))
    }

    pub fn report(&self) -> FactorizationReport {
        FactorizationReport::new(self)
    }
}

fn carrier_winding(q: &QuasiPolynomial, m: &InnerRational, rect: &Rectangle) -> Result<i64, RootError> {
    let num = m.numerator().clone();
    let f = move |s: Complex64| {
        let d = num.eval_complex(s);
        (q.evaluate(s) / d, q.abs_scale(s) / d.norm())
    };
    let size = rect.width().max(rect.height());
    winding_number(&f, rect, (size / 64.0).min(0.05))
}

// ---------------------------------------------------------------------------
// Reports

fn round6(x: f64) -> f64 {
    sig(x, 6).parse().unwrap_or(x)
}

fn rounded(p: &Poly) -> Vec<f64> {
    p.coeffs().iter().map(|&c| round6(c)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RationalReport {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
}

impl From<&RationalFunction> for RationalReport {
    fn from(r: &RationalFunction) -> Self {
        RationalReport {
            numerator: rounded(r.numerator()),
            denominator: rounded(r.denominator()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootReport {
    pub re: f64,
    pub im: f64,
    pub multiplicity: usize,
}

fn root_report(r: &RootSet) -> Vec<RootReport> {
    r.iter()
        .map(|(z, m)| RootReport {
            re: round6(z.re),
            im: round6(z.im),
            multiplicity: m,
        })
        .collect()
}

/// Machine-readable factorization summary; coefficients at 6 significant digits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationReport {
    pub case: PlantCase,
    pub numerator_roots: Vec<RootReport>,
    pub denominator_roots: Vec<RootReport>,
    pub m_q: RationalReport,
    pub m_d: RationalReport,
    /// `q_n / q̄_n` as serialized quasi-polynomials (C2 only).
    pub allpass: Option<(String, String)>,
    pub delay: String,
    pub n_o: String,
    pub m_n: String,
}

impl FactorizationReport {
    fn new(fp: &FactoredPlant) -> Self {
        FactorizationReport {
            case: fp.case,
            numerator_roots: root_report(&fp.numerator_roots.roots),
            denominator_roots: root_report(&fp.denominator_roots.roots),
            m_q: (&fp.m_q.rational).into(),
            m_d: (&fp.m_d.rational).into(),
            allpass: fp
                .q_n_conjugate
                .as_ref()
                .map(|c| (fp.q_n.serialize(), c.serialize())),
            delay: fp.delay.to_string(),
            n_o: fp.n_o.to_string(),
            m_n: fp.m_n.to_string(),
        }
    }

    /// Human-readable text.
    pub fn text(&self) -> String {
        let mut out = String::new();
        let roots = |rs: &[RootReport]| {
            if rs.is_empty() {
                return "none".to_string();
            }
            rs.iter()
                .map(|r| {
                    let base = if r.im == 0.0 {
                        sig(r.re, 6)
                    } else if r.im > 0.0 {
                        format!("{}+{}j", sig(r.re, 6), sig(r.im, 6))
                    } else {
                        format!("{}-{}j", sig(r.re, 6), sig(-r.im, 6))
                    };
                    if r.multiplicity > 1 {
                        format!("{base} (x{})", r.multiplicity)
                    } else {
                        base
                    }
                })
                .collect::<Vec<_>>()
                .join(", ")
        };
        let rat = |r: &RationalReport| {
            let n = Poly::new(r.numerator.clone());
            let d = Poly::new(r.denominator.clone());
            format!("({n}) / ({d})")
        };
        let _ = writeln!(out, "case: {}", self.case);
        let _ = writeln!(out, "numerator-side C+ roots: {}", roots(&self.numerator_roots));
        let _ = writeln!(out, "denominator C+ roots: {}", roots(&self.denominator_roots));
        let _ = writeln!(out, "m_q: {}", rat(&self.m_q));
        let _ = writeln!(out, "m_d: {}", rat(&self.m_d));
        if let Some((a, b)) = &self.allpass {
            let _ = writeln!(out, "all-pass: ({a}) / ({b})");
        }
        let _ = writeln!(out, "delay: {}", self.delay);
        let _ = writeln!(out, "m_n = {}", self.m_n);
        let _ = writeln!(out, "N_o = {}", self.n_o);
        out
    }
}
