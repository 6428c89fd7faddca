//! Root location and counting for polynomials and quasi-polynomials.
//!
//! Counting uses the argument principle with adaptive phase tracking along
//! rectangle edges. Isolation subdivides a search box until each cell holds
//! at most one root, then refines by Newton's method. The right-half-plane
//! search box comes from explicit dominance bounds: beyond `Re s = R` the
//! principal term outweighs the rest, and beyond `|Im s| = M` in the strip
//! `0 <= Re s <= R` either the principal term (retarded case) or the
//! asymptotic polynomial (neutral case) dominates.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::poly::{taylor_at, Poly};
use crate::qpoly::{KindTag, QuasiPolynomial};

/// Half-width of the band around the unit circle in which no finiteness
/// decision is made.
pub const UNIT_CIRCLE_BAND: f64 = 1e-6;

/// Roots whose real part is within this distance of zero are treated as
/// lying on the imaginary axis.
pub const AXIS_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("zero polynomial has no isolated roots")]
    ZeroPolynomial,
    #[error("constant polynomial has no roots")]
    DegreeZero,
    #[error("eigenvalue iteration failed to converge")]
    EigenFailure,
    #[error("a root lies on the boundary of the region near {near}")]
    BoundaryRoot { near: Complex64 },
    #[error("winding number {value} is not close to an integer")]
    NonIntegerWinding { value: f64 },
    #[error("evaluation budget exhausted while tracking the phase")]
    EvaluationBudget,
    #[error("right half-plane root set is not finite (verdict {0:?})")]
    NotFinite(Verdict),
    #[error("Newton refinement did not converge near {near} (residual {residual:e})")]
    NonConvergent { near: Complex64, residual: f64 },
    #[error("root {root} lies on the imaginary axis")]
    ImaginaryAxisRoot { root: Complex64 },
    #[error("no finite search bound found")]
    NoBound,
    #[error("{0}")]
    Qpoly(#[from] crate::qpoly::QpolyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rectangle {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rectangle {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Self {
        assert!(re_min <= re_max && im_min <= im_max, "degenerate rectangle");
        Rectangle {
            re_min,
            re_max,
            im_min,
            im_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.re_max - self.re_min
    }

    pub fn height(&self) -> f64 {
        self.im_max - self.im_min
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(
            0.5 * (self.re_min + self.re_max),
            0.5 * (self.im_min + self.im_max),
        )
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im >= self.im_min && z.im <= self.im_max
    }

    pub fn expanded(&self, by: f64) -> Rectangle {
        Rectangle::new(
            self.re_min - by,
            self.re_max + by,
            self.im_min - by,
            self.im_max + by,
        )
    }

    fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.re_min, self.im_min),
            Complex64::new(self.re_max, self.im_min),
            Complex64::new(self.re_max, self.im_max),
            Complex64::new(self.re_min, self.im_max),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Finite,
    Infinite,
    Indeterminate,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

/// Finiteness decision with the asymptotic-polynomial root magnitudes it was
/// based on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinitenessVerdict {
    pub verdict: Verdict,
    pub kind: KindTag,
    /// Root magnitudes of the asymptotic polynomial of the input, sorted descending.
    pub witness: Vec<f64>,
}

/// Distinct roots with multiplicities, sorted by real part descending then
/// imaginary part ascending.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RootSet {
    pub roots: Vec<Complex64>,
    pub multiplicities: Vec<usize>,
}

impl RootSet {
    pub fn new(mut entries: Vec<(Complex64, usize)>) -> Self {
        entries.sort_by(|a, b| {
            b.0.re
                .partial_cmp(&a.0.re)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.im.partial_cmp(&b.0.im).unwrap_or(std::cmp::Ordering::Equal))
        });
        let (roots, multiplicities) = entries.into_iter().unzip();
        RootSet {
            roots,
            multiplicities,
        }
    }

    pub fn empty() -> Self {
        RootSet::default()
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Total count with multiplicity.
    pub fn total_multiplicity(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Complex64, usize)> + '_ {
        self.roots.iter().copied().zip(self.multiplicities.iter().copied())
    }

    /// Roots repeated according to multiplicity.
    pub fn expanded(&self) -> Vec<Complex64> {
        self.iter()
            .flat_map(|(r, m)| std::iter::repeat(r).take(m))
            .collect()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.expanded().iter().map(|r| r.norm()).collect()
    }

    /// Largest distance between a root and the nearest conjugate of another
    /// root of equal multiplicity.
    pub fn conjugate_asymmetry(&self) -> f64 {
        self.iter()
            .map(|(r, m)| {
                self.iter()
                    .filter(|&(_, k)| k == m)
                    .map(|(o, _)| (o - r.conj()).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Polynomial roots

fn balance(m: &mut DMatrix<f64>) {
    // Parlett-Reinsch balancing with powers of two.
    let n = m.nrows();
    let radix = 2.0f64;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            let g = r / radix;
            while cc < g {
                f *= radix;
                cc *= radix * radix;
            }
            let g = r * radix;
            while cc > g {
                f /= radix;
                cc /= radix * radix;
            }
            if (cc + r / f) / f < 0.95 * s {
                done = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

fn companion_eigenvalues(monic: &[f64]) -> Result<Vec<Complex64>, RootError> {
    let n = monic.len() - 1;
    if n == 1 {
        return Ok(vec![Complex64::new(-monic[1], 0.0)]);
    }
    if let Some(eig) = schur_eigenvalues(monic) {
        return Ok(eig);
    }
    // Root sets symmetric about the origin (e.g. s^4 + a s^2 + b) can stall
    // the shifted QR iteration; move the origin and try again.
    let radius = 1.0 + monic[1..].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    for shift in [0.137_035_999, -0.271_828_183, 0.414_213_562] {
        let sigma = shift * radius.min(10.0);
        if let Some(eig) = schur_eigenvalues(&taylor_shift(monic, sigma)) {
            return Ok(eig.into_iter().map(|z| z + sigma).collect());
        }
    }
    Err(RootError::EigenFailure)
}

fn schur_eigenvalues(monic: &[f64]) -> Option<Vec<Complex64>> {
    let n = monic.len() - 1;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = -monic[j + 1];
    }
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    balance(&mut m);
    let schur = Schur::try_new(m, f64::EPSILON, 100 * n + 100)?;
    Some(schur.complex_eigenvalues().iter().copied().collect())
}

/// Coefficients of `p(s + sigma)`, highest degree first.
fn taylor_shift(c: &[f64], sigma: f64) -> Vec<f64> {
    let mut a = c.to_vec();
    let n = a.len();
    for k in 0..n {
        for j in 1..n - k {
            a[j] += sigma * a[j - 1];
        }
    }
    a
}

fn newton_polish(p: &Poly, mut z: Complex64, steps: usize) -> Complex64 {
    let mut best = p.eval_complex(z).norm();
    for _ in 0..steps {
        let (v, dv) = p.eval_with_derivative(z);
        if dv.norm() == 0.0 || v.norm() == 0.0 {
            break;
        }
        let cand = z - v / dv;
        let r = p.eval_complex(cand).norm();
        if r < best {
            best = r;
            z = cand;
        } else {
            break;
        }
    }
    z
}

/// Group numerically coincident roots into multiple roots.
fn cluster(p: &Poly, roots: Vec<Complex64>) -> Vec<(Complex64, usize)> {
    let mut out: Vec<(Complex64, usize)> = Vec::new();
    let mut used = vec![false; roots.len()];
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let base = roots[i];
        let radius = 1e-3 * base.norm().max(1.0);
        let mut members = vec![base];
        let mut idx = vec![];
        for (j, &r) in roots.iter().enumerate().skip(i + 1) {
            if !used[j] && (r - base).norm() <= radius {
                members.push(r);
                idx.push(j);
            }
        }
        if members.len() == 1 {
            out.push((base, 1));
            continue;
        }
        // Accept the cluster only if the Taylor expansion at its centroid
        // really starts at order m.
        let m = members.len();
        let c: Complex64 = members.iter().sum::<Complex64>() / m as f64;
        let t = taylor_at(p.coeffs(), c, m + 1);
        let lead = t[m].norm();
        let tau = 1e-6 * c.norm().max(1.0);
        let ok = lead > 0.0
            && (0..m).all(|k| t[k].norm() <= tau.powi((m - k) as i32) * lead * 10.0);
        if ok {
            for j in idx {
                used[j] = true;
            }
            // A root of multiplicity m is a simple root of the (m-1)-th derivative.
            let mut d = p.clone();
            for _ in 1..m {
                d = d.derivative();
            }
            let c = newton_polish(&d, c, 8);
            let c = if c.im.abs() <= 1e-14 * c.norm() { Complex64::new(c.re, 0.0) } else { c };
            out.push((c, m));
        } else {
            out.push((base, 1));
        }
    }
    out
}

/// All complex roots of a real polynomial, highest-degree coefficient first.
///
/// Companion-matrix eigenvalues (balanced) with Newton polish; complex roots
/// come in exact conjugate pairs.
pub fn polynomial_roots(coefficients: &[f64]) -> Result<RootSet, RootError> {
    let p = Poly::new(coefficients.to_vec());
    if p.is_zero() {
        return Err(RootError::ZeroPolynomial);
    }
    if p.degree() == 0 {
        return Err(RootError::DegreeZero);
    }
    let c = p.coeffs();
    let zero_mult = c.iter().rev().take_while(|&&x| x == 0.0).count();
    let reduced = Poly::new(c[..c.len() - zero_mult].to_vec());
    let mut entries: Vec<(Complex64, usize)> = Vec::new();
    if zero_mult > 0 {
        entries.push((Complex64::new(0.0, 0.0), zero_mult));
    }
    if reduced.degree() > 0 {
        let monic: Vec<f64> = reduced.coeffs().iter().map(|x| x / reduced.leading()).collect();
        let eig = companion_eigenvalues(&monic)?;
        let mut upper = Vec::new();
        let mut real = Vec::new();
        for z in eig {
            if z.im > 0.0 {
                upper.push(z);
            } else if z.im == 0.0 {
                real.push(z);
            }
        }
        let mut all = Vec::new();
        for z in real {
            let r = newton_polish(&reduced, z, 3);
            all.push(Complex64::new(r.re, 0.0));
        }
        for z in upper {
            let r = newton_polish(&reduced, z, 3);
            let r = if r.im.abs() <= 1e-14 * r.norm() {
                Complex64::new(r.re, 0.0)
            } else {
                r
            };
            all.push(r);
            all.push(r.conj());
        }
        entries.extend(cluster(&reduced, all));
    }
    Ok(RootSet::new(entries))
}

// ---------------------------------------------------------------------------
// Finiteness

fn asymptotic_magnitudes(q: &QuasiPolynomial) -> Result<Vec<f64>, RootError> {
    let p = q.asymptotic_polynomial()?.to_poly();
    if p.degree() == 0 {
        return Ok(Vec::new());
    }
    let mut m = polynomial_roots(p.coeffs())?.magnitudes();
    m.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(m)
}

/// Whether `q` has finitely many roots in the closed right half-plane.
///
/// Retarded: always finite. Neutral: finite iff every root of the asymptotic
/// polynomial has magnitude above `1 + UNIT_CIRCLE_BAND`.
pub fn finiteness_rhp(q: &QuasiPolynomial) -> Result<FinitenessVerdict, RootError> {
    let kind = q.classify();
    let (verdict, witness) = match kind {
        KindTag::Retarded => (Verdict::Finite, asymptotic_magnitudes(q)?),
        KindTag::Advanced => (Verdict::Infinite, Vec::new()),
        KindTag::Neutral => {
            let w = asymptotic_magnitudes(q)?;
            let v = if w.iter().any(|&m| m < 1.0 - UNIT_CIRCLE_BAND) {
                Verdict::Infinite
            } else if w.iter().all(|&m| m > 1.0 + UNIT_CIRCLE_BAND) {
                Verdict::Finite
            } else {
                Verdict::Indeterminate
            };
            (v, w)
        }
    };
    Ok(FinitenessVerdict {
        verdict,
        kind,
        witness,
    })
}

/// Whether the conjugate `q̄` has finitely many roots in the closed right
/// half-plane, decided from the asymptotic polynomial of `q`.
///
/// The reciprocal criterion (all magnitudes below `1 - UNIT_CIRCLE_BAND`)
/// only applies when the most-delayed term of `q` has full degree; otherwise
/// `q̄` has a retarded-type chain mirrored into the right half-plane.
pub fn finiteness_rhp_conjugate(q: &QuasiPolynomial) -> Result<FinitenessVerdict, RootError> {
    let kind = q.classify();
    if q.terms().len() == 1 {
        return Ok(FinitenessVerdict {
            verdict: Verdict::Finite,
            kind,
            witness: Vec::new(),
        });
    }
    if kind == KindTag::Advanced {
        // q̄ is an ordinary quasi-polynomial only if its own principal term dominates.
        let fv = finiteness_rhp(&q.conjugate())?;
        return Ok(FinitenessVerdict {
            verdict: fv.verdict,
            kind,
            witness: Vec::new(),
        });
    }
    let d1 = q.principal().poly.degree();
    let dv = q.terms().last().unwrap().poly.degree();
    let witness = asymptotic_magnitudes(q)?;
    let verdict = if dv < d1 {
        Verdict::Infinite
    } else if witness.iter().any(|&m| m > 1.0 + UNIT_CIRCLE_BAND) {
        Verdict::Infinite
    } else if witness.iter().all(|&m| m < 1.0 - UNIT_CIRCLE_BAND) {
        Verdict::Finite
    } else {
        Verdict::Indeterminate
    };
    Ok(FinitenessVerdict {
        verdict,
        kind,
        witness,
    })
}

// ---------------------------------------------------------------------------
// Argument principle

const MAX_EVALUATIONS: usize = 20_000_000;

struct PhaseTracker<'a, F: Fn(Complex64) -> (Complex64, f64)> {
    f: &'a F,
    evaluations: usize,
}

impl<F: Fn(Complex64) -> (Complex64, f64)> PhaseTracker<'_, F> {
    fn sample(&mut self, s: Complex64) -> Result<Complex64, RootError> {
        self.evaluations += 1;
        if self.evaluations > MAX_EVALUATIONS {
            return Err(RootError::EvaluationBudget);
        }
        let (v, scale) = (self.f)(s);
        if !v.re.is_finite() || !v.im.is_finite() || v.norm() <= 1e-13 * scale {
            return Err(RootError::BoundaryRoot { near: s });
        }
        Ok(v)
    }

    /// Accumulated phase change along the segment `a -> b`.
    fn edge(&mut self, a: Complex64, b: Complex64, step: f64) -> Result<f64, RootError> {
        let len = (b - a).norm();
        let n = ((len / step).ceil() as usize).max(8);
        let mut total = 0.0;
        let mut s0 = a;
        let mut v0 = self.sample(a)?;
        for k in 1..=n {
            let s1 = a + (b - a) * (k as f64 / n as f64);
            let v1 = self.sample(s1)?;
            total += self.segment(s0, v0, s1, v1, 0)?;
            s0 = s1;
            v0 = v1;
        }
        Ok(total)
    }

    fn segment(
        &mut self,
        s0: Complex64,
        v0: Complex64,
        s1: Complex64,
        v1: Complex64,
        depth: usize,
    ) -> Result<f64, RootError> {
        let d = (v1 / v0).arg();
        if d.abs() < PI / 2.0 {
            return Ok(d);
        }
        let len = (s1 - s0).norm();
        if depth > 60 || len <= 1e-13 * (1.0 + s0.norm()) {
            return Err(RootError::BoundaryRoot { near: s0 });
        }
        let mid = (s0 + s1) * 0.5;
        let vm = self.sample(mid)?;
        Ok(self.segment(s0, v0, mid, vm, depth + 1)? + self.segment(mid, vm, s1, v1, depth + 1)?)
    }
}

/// Winding number of `f` around the boundary of `rect` (counter-clockwise).
///
/// `f` returns the value and a magnitude scale; a value below `1e-13` times
/// the scale is treated as a zero on the boundary. `step` is the initial
/// sampling step before adaptive bisection.
pub fn winding_number<F>(f: &F, rect: &Rectangle, step: f64) -> Result<i64, RootError>
where
    F: Fn(Complex64) -> (Complex64, f64),
{
    let mut tracker = PhaseTracker { f, evaluations: 0 };
    let c = rect.corners();
    let mut total = 0.0;
    for i in 0..4 {
        total += tracker.edge(c[i], c[(i + 1) % 4], step)?;
    }
    let w = total / (2.0 * PI);
    let r = w.round();
    if (w - r).abs() > 0.05 {
        return Err(RootError::NonIntegerWinding { value: w });
    }
    Ok(r as i64)
}

fn sampling_step(q: &QuasiPolynomial, rect: &Rectangle) -> f64 {
    let h = q.max_delay().value() - q.min_delay().value();
    let by_size = rect.width().max(rect.height()) / 16.0;
    by_size.min(0.5 / (1.0 + h)).max(1e-9)
}

fn qp_sample(q: &QuasiPolynomial) -> impl Fn(Complex64) -> (Complex64, f64) + '_ {
    move |s| (q.evaluate(s), q.abs_scale(s))
}

fn count_exact(q: &QuasiPolynomial, rect: &Rectangle) -> Result<usize, RootError> {
    let w = winding_number(&qp_sample(q), rect, sampling_step(q, rect))?;
    if w < 0 {
        return Err(RootError::NonIntegerWinding { value: w as f64 });
    }
    Ok(w as usize)
}

/// Number of roots of `q` inside `rect`, counted with multiplicity.
///
/// When a root sits on the boundary the region is enlarged slightly and the
/// count retried, up to four times.
pub fn count_roots(q: &QuasiPolynomial, region: &Rectangle) -> Result<usize, RootError> {
    count_roots_perturbed(q, region).map(|(n, _)| n)
}

/// Like [`count_roots`], also returning the rectangle actually used.
pub fn count_roots_perturbed(
    q: &QuasiPolynomial,
    region: &Rectangle,
) -> Result<(usize, Rectangle), RootError> {
    let size = region.width().max(region.height()).max(1e-6);
    let mut last = None;
    for k in 0..5 {
        let rect = if k == 0 {
            *region
        } else {
            region.expanded(size * 1e-7 * 10f64.powi(k as i32) * (1.0 + 0.37 * k as f64))
        };
        match count_exact(q, &rect) {
            Ok(n) => return Ok((n, rect)),
            Err(e @ RootError::BoundaryRoot { .. }) | Err(e @ RootError::NonIntegerWinding { .. }) => {
                last = Some(e)
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap())
}

// ---------------------------------------------------------------------------
// Right half-plane root isolation

/// Dense coefficient magnitudes of `p` scaled by `r^{k-n}`, summed over `k <= upto`.
fn scaled_abs_sum(p: &Poly, n: usize, r: f64, upto: usize) -> f64 {
    (0..=upto.min(p.degree()))
        .map(|k| p.coeff(k).abs() * r.powi(k as i32 - n as i32))
        .sum()
}

/// Lower bound on `|q_1(s)| / |s|^n` for `|s| >= r >= 1`.
fn principal_lower(p: &Poly, r: f64) -> f64 {
    let n = p.degree();
    if n == 0 {
        return p.leading().abs();
    }
    p.leading().abs() - scaled_abs_sum(p, n, r, n - 1)
}

fn find_bound(mut holds: impl FnMut(f64) -> bool) -> Option<f64> {
    let mut r = 1.0;
    for _ in 0..60 {
        if holds(r) {
            // Tighten between r/2 and r.
            let (mut lo, mut hi) = (r / 2.0, r);
            if r == 1.0 {
                return Some(1.0);
            }
            for _ in 0..30 {
                let mid = 0.5 * (lo + hi);
                if holds(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        r *= 2.0;
    }
    None
}

/// `R` such that `q` has no roots with `Re s >= R`.
pub fn right_extent(q: &QuasiPolynomial) -> Option<f64> {
    let (_, q) = q.extract_common_delay();
    let p1 = &q.principal().poly;
    let n = p1.degree();
    let rest: Vec<(&Poly, f64)> = q.terms()[1..]
        .iter()
        .map(|t| (&t.poly, t.delay.value()))
        .collect();
    find_bound(|r| {
        let lhs = principal_lower(p1, r);
        let rhs: f64 = rest
            .iter()
            .map(|(p, h)| scaled_abs_sum(p, n, r, n) * (-h * r).exp())
            .sum();
        lhs > 0.0 && lhs > rhs
    })
}

/// `M` such that `q` has no roots with `0 <= Re s <= r_max`, `|Im s| >= M`.
/// Requires `q` retarded, or neutral with a finite verdict.
pub fn imag_extent(q: &QuasiPolynomial) -> Option<f64> {
    let (_, q) = q.extract_common_delay();
    let p1 = &q.principal().poly;
    let n = p1.degree();
    match q.classify() {
        KindTag::Retarded => {
            let rest: Vec<&Poly> = q.terms()[1..].iter().map(|t| &t.poly).collect();
            find_bound(|r| {
                let lhs = principal_lower(p1, r);
                let rhs: f64 = rest.iter().map(|p| scaled_abs_sum(p, n, r, n)).sum();
                lhs > 0.0 && lhs > rhs
            })
        }
        KindTag::Neutral => {
            let asym = q.asymptotic_polynomial().ok()?;
            let p = asym.to_poly();
            let delta = min_modulus_on_unit_circle(&p);
            if delta <= 0.0 {
                return None;
            }
            // Residuals c_i = q_i - p_i q_1 have degree < n.
            let lead = p1.leading();
            let residuals: Vec<Poly> = q.terms()[1..]
                .iter()
                .map(|t| {
                    if t.poly.degree() == n {
                        &t.poly - &p1.scale(t.poly.leading() / lead)
                    } else {
                        t.poly.clone()
                    }
                })
                .collect();
            find_bound(|r| {
                let lower = principal_lower(p1, r);
                if lower <= 0.0 {
                    return false;
                }
                let err: f64 = residuals
                    .iter()
                    .map(|c| scaled_abs_sum(c, n, r, n) / lower)
                    .sum();
                err < delta
            })
        }
        KindTag::Advanced => None,
    }
}

/// Certified lower bound on `min_{|w|=1} |p(w)|` (0 if none can be certified).
fn min_modulus_on_unit_circle(p: &Poly) -> f64 {
    let deg = p.degree();
    let samples = 4096 + 256 * deg;
    let lip: f64 = (1..=deg).map(|k| k as f64 * p.coeff(k).abs()).sum();
    let mut min = f64::INFINITY;
    for k in 0..samples {
        let th = 2.0 * PI * k as f64 / samples as f64;
        let w = Complex64::from_polar(1.0, th);
        min = min.min(p.eval_complex(w).norm());
    }
    (min - lip * PI / samples as f64).max(0.0)
}

/// Roots of `q` in the closed right half-plane together with the search box
/// that certifies completeness.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhpRoots {
    pub roots: RootSet,
    pub search_box: Rectangle,
    /// Number of box doublings that confirmed the count was stable.
    pub growth_checks: usize,
}

fn newton(
    q: &QuasiPolynomial,
    start: Complex64,
    multiplicity: usize,
) -> Option<Complex64> {
    let mut z = start;
    for _ in 0..100 {
        let (v, dv) = q.evaluate_with_derivative(z);
        if v.norm() == 0.0 {
            return Some(z);
        }
        if dv.norm() == 0.0 || !dv.re.is_finite() {
            return None;
        }
        let step = v / dv * multiplicity as f64;
        z -= step;
        if !z.re.is_finite() {
            return None;
        }
        if step.norm() <= 1e-15 * (1.0 + z.norm()) {
            break;
        }
    }
    Some(z)
}

fn residual_ok(q: &QuasiPolynomial, z: Complex64, tol: f64) -> bool {
    q.evaluate(z).norm() <= tol * q.abs_scale(z).max(q.max_term_magnitude(z))
}

const SPLIT_FRACTIONS: [f64; 4] = [0.5137, 0.4721, 0.5523, 0.4391];

fn split(rect: &Rectangle, frac: f64) -> (Rectangle, Rectangle) {
    if rect.width() >= rect.height() {
        let x = rect.re_min + frac * rect.width();
        (
            Rectangle::new(rect.re_min, x, rect.im_min, rect.im_max),
            Rectangle::new(x, rect.re_max, rect.im_min, rect.im_max),
        )
    } else {
        let y = rect.im_min + frac * rect.height();
        (
            Rectangle::new(rect.re_min, rect.re_max, rect.im_min, y),
            Rectangle::new(rect.re_min, rect.re_max, y, rect.im_max),
        )
    }
}

fn isolate(
    q: &QuasiPolynomial,
    rect: Rectangle,
    count: usize,
    depth: usize,
    out: &mut Vec<(Complex64, usize)>,
) -> Result<(), RootError> {
    if count == 0 {
        return Ok(());
    }
    let diameter = rect.width().hypot(rect.height());
    let c = rect.center();
    if count == 1 || diameter <= 1e-7 * (1.0 + c.norm()) {
        let m = count;
        // Try Newton from the center; accept if it lands inside the cell.
        if let Some(z) = newton(q, c, m) {
            let margin = 1e-9 * (1.0 + z.norm());
            if rect.expanded(margin).contains(z) && residual_ok(q, z, 1e-10) {
                out.push((z, m));
                return Ok(());
            }
        }
        if diameter <= 1e-7 * (1.0 + c.norm()) {
            let residual = q.evaluate(c).norm() / q.abs_scale(c);
            return Err(RootError::NonConvergent { near: c, residual });
        }
    }
    if depth > 200 {
        return Err(RootError::NonConvergent {
            near: c,
            residual: q.evaluate(c).norm() / q.abs_scale(c),
        });
    }
    let mut last_err = None;
    for &frac in &SPLIT_FRACTIONS {
        let (a, b) = split(&rect, frac);
        let na = match count_exact(q, &a) {
            Ok(n) => n,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let nb = match count_exact(q, &b) {
            Ok(n) => n,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        if na + nb != count {
            last_err = Some(RootError::NonIntegerWinding {
                value: (na + nb) as f64,
            });
            continue;
        }
        isolate(q, a, na, depth + 1, out)?;
        isolate(q, b, nb, depth + 1, out)?;
        return Ok(());
    }
    Err(last_err.unwrap_or(RootError::NonConvergent {
        near: c,
        residual: f64::NAN,
    }))
}

/// Symmetrize a root list of a real function about the real axis.
fn conjugate_close(entries: Vec<(Complex64, usize)>) -> Vec<(Complex64, usize)> {
    let mut out = Vec::new();
    let mut lower: Vec<(Complex64, usize)> = Vec::new();
    for (z, m) in entries {
        let tol = 1e-9 * (1.0 + z.norm());
        if z.im.abs() <= tol {
            out.push((Complex64::new(z.re, 0.0), m));
        } else if z.im > 0.0 {
            out.push((z, m));
        } else {
            lower.push((z, m));
        }
    }
    let uppers: Vec<(Complex64, usize)> = out.iter().filter(|(z, _)| z.im > 0.0).cloned().collect();
    for (z, m) in uppers {
        // Average with the computed partner when present.
        if let Some(pos) = lower
            .iter()
            .position(|(w, k)| *k == m && (w.conj() - z).norm() <= 1e-6 * (1.0 + z.norm()))
        {
            let (w, _) = lower.remove(pos);
            let avg = (z + w.conj()) * 0.5;
            if let Some(e) = out.iter_mut().find(|(x, _)| *x == z) {
                e.0 = avg;
            }
            out.push((avg.conj(), m));
        } else {
            out.push((z.conj(), m));
        }
    }
    out
}

/// All roots of `q` with `Re s >= 0`.
///
/// Requires a finite verdict. Roots on (or within `AXIS_TOLERANCE` of) the
/// imaginary axis are reported as an error.
pub fn rhp_roots(q: &QuasiPolynomial) -> Result<RhpRoots, RootError> {
    let fv = finiteness_rhp(q)?;
    if fv.verdict != Verdict::Finite {
        return Err(RootError::NotFinite(fv.verdict));
    }
    let (_, shifted) = q.extract_common_delay();
    let q = &shifted;
    let r0 = right_extent(q).ok_or(RootError::NoBound)?.max(1.0) * 1.05;
    let m0 = imag_extent(q).ok_or(RootError::NoBound)?.max(1.0) * 1.05;

    let make_box = |k: i32| {
        let g = 2f64.powi(k);
        Rectangle::new(0.0, r0 * g, -m0 * g, m0 * g)
    };
    let count_box = |rect: &Rectangle| -> Result<usize, RootError> {
        match count_exact(q, rect) {
            Err(RootError::BoundaryRoot { near }) if near.re.abs() <= AXIS_TOLERANCE => {
                Err(RootError::ImaginaryAxisRoot { root: near })
            }
            Err(RootError::BoundaryRoot { near }) => {
                // A boundary hit away from the axis: perturb the outer edges.
                let grown = Rectangle::new(0.0, rect.re_max * 1.013, rect.im_min * 1.013, rect.im_max * 1.013);
                count_exact(q, &grown).map_err(|_| RootError::BoundaryRoot { near })
            }
            other => other,
        }
    };

    let base = make_box(0);
    let count = count_box(&base)?;
    let mut growth_checks = 0;
    for k in 1..=2 {
        let n = count_box(&make_box(k))?;
        if n != count {
            return Err(RootError::NonConvergent {
                near: Complex64::new(r0, m0),
                residual: (n as f64) - (count as f64),
            });
        }
        growth_checks += 1;
    }

    let mut found = Vec::new();
    isolate(q, base, count, 0, &mut found)?;
    for (z, _) in &found {
        if z.re.abs() <= AXIS_TOLERANCE {
            return Err(RootError::ImaginaryAxisRoot { root: *z });
        }
    }
    let roots = RootSet::new(conjugate_close(found));
    Ok(RhpRoots {
        roots,
        search_box: base,
        growth_checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(text: &str) -> QuasiPolynomial {
        text.parse().unwrap()
    }

    const Q1: &str = "3 0.5 @ 0 ; 2 7 @ 3/2 ; 1 -1 @ 2";
    const Q2: &str = "1 3 @ 0 ; 2 -2 @ 0.4";

    #[test]
    fn polynomial_roots_examples() {
        let r = polynomial_roots(&[1.0 / 3.0, 2.0 / 3.0, 0.0, 0.0, 1.0]).unwrap();
        let mut mags = r.magnitudes();
        mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_eq!(mags.len(), 4);
        assert!((mags[0] - 1.6796).abs() < 1e-4 && (mags[1] - 1.6796).abs() < 1e-4);
        assert!((mags[2] - 1.0312).abs() < 1e-4 && (mags[3] - 1.0312).abs() < 1e-4);

        let r = polynomial_roots(&[2.0, 1.0]).unwrap();
        assert_eq!(r.roots, vec![Complex64::new(-0.5, 0.0)]);

        let r = polynomial_roots(&[1.0, 0.0, -1.0]).unwrap();
        assert_eq!(r.roots.len(), 2);
        assert!((r.roots[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((r.roots[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn polynomial_roots_origin_symmetric() {
        // (s^2 - 0.6s + 0.13)(s^2 + 0.6s + 0.13): four roots of equal modulus
        let r = polynomial_roots(&[1.0, 0.0, -0.1, 0.0, 0.0169]).unwrap();
        assert_eq!(r.len(), 4);
        for z in [Complex64::new(0.3, 0.2), Complex64::new(-0.3, 0.2)] {
            assert!(r.roots.iter().any(|w| (w - z).norm() < 1e-12), "{:?}", r.roots);
        }
        assert_eq!(taylor_shift(&[1.0, 0.0, 0.0], 1.0), vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn polynomial_roots_errors() {
        assert_eq!(polynomial_roots(&[0.0, 0.0]), Err(RootError::ZeroPolynomial));
        assert_eq!(polynomial_roots(&[3.0]), Err(RootError::DegreeZero));
    }

    #[test]
    fn polynomial_roots_multiplicity_and_zero() {
        // (s - 1)^2 (s + 2) s^2
        let p = &(&Poly::linear(1.0).pow(2) * &Poly::linear(-2.0)) * &Poly::new(vec![1.0, 0.0, 0.0]);
        let r = polynomial_roots(p.coeffs()).unwrap();
        assert_eq!(r.total_multiplicity(), 5);
        let one = r.iter().find(|(z, _)| (z - 1.0).norm() < 1e-6).unwrap();
        assert_eq!(one.1, 2);
        let zero = r.iter().find(|(z, _)| z.norm() == 0.0).unwrap();
        assert_eq!(zero.1, 2);
    }

    #[test]
    fn polynomial_roots_residuals_and_symmetry() {
        let p = Poly::new(vec![1.0, -1.9602, 0.7387, 2.6692, -10.8299, 9.1153]);
        let r = polynomial_roots(p.coeffs()).unwrap();
        assert_eq!(r.total_multiplicity(), 5);
        for z in r.expanded() {
            assert!(p.eval_complex(z).norm() <= 1e-9 * p.abs_scale(z));
        }
        assert!(r.conjugate_asymmetry() < 1e-12);
    }

    #[test]
    fn finiteness_examples() {
        assert_eq!(finiteness_rhp(&q(Q1)).unwrap().verdict, Verdict::Finite);
        assert_eq!(finiteness_rhp(&q(Q2)).unwrap().verdict, Verdict::Infinite);
        assert_eq!(
            finiteness_rhp(&q("1 0 0 1 @ 0 ; 1 @ 1.5")).unwrap().verdict,
            Verdict::Finite
        );
        assert_eq!(finiteness_rhp_conjugate(&q(Q2)).unwrap().verdict, Verdict::Finite);
        assert_eq!(finiteness_rhp_conjugate(&q(Q1)).unwrap().verdict, Verdict::Infinite);
        assert_eq!(
            finiteness_rhp_conjugate(&q("1 0 0 1 @ 0 ; 1 @ 1.5")).unwrap().verdict,
            Verdict::Infinite
        );
        assert_eq!(finiteness_rhp_conjugate(&q("1 2 @ 0")).unwrap().verdict, Verdict::Finite);
    }

    #[test]
    fn finiteness_band_is_indeterminate() {
        // p(w) = 1 + w: root on the unit circle.
        let fv = finiteness_rhp(&q("1 0 @ 0 ; 1 1 @ 1")).unwrap();
        assert_eq!(fv.verdict, Verdict::Indeterminate);
        let fv = finiteness_rhp_conjugate(&q("1 0 @ 0 ; 1 1 @ 1")).unwrap();
        assert_eq!(fv.verdict, Verdict::Indeterminate);
    }

    #[test]
    fn count_simple_cases() {
        let r = Rectangle::new(-2.0, 2.0, -2.0, 2.0);
        assert_eq!(count_roots(&q("1 0 1 @ 0"), &r).unwrap(), 2);
        let r = Rectangle::new(0.0, 5.0, -20.0, 20.0);
        assert_eq!(count_roots(&q(Q2).conjugate(), &r).unwrap(), 1);
    }

    #[test]
    fn count_q1_right_half_plane() {
        // Only 0.4153 ± 1.6032j lie in Re s >= 0; the next pair is at
        // -0.0120 ± 14.3799j (mpmath findroot).
        let r = Rectangle::new(0.0, 10.0, -30.0, 30.0);
        assert_eq!(count_roots(&q(Q1), &r).unwrap(), 2);
        let r = Rectangle::new(-0.02, 10.0, -30.0, 30.0);
        assert_eq!(count_roots(&q(Q1), &r).unwrap(), 4);
    }

    #[test]
    fn boundary_root_is_perturbed() {
        // Root at s = 1 sits on the right edge.
        let (n, used) = count_roots_perturbed(&q("1 -1 @ 0"), &Rectangle::new(0.0, 1.0, -1.0, 1.0)).unwrap();
        assert_eq!(n, 1);
        assert!(used.re_max > 1.0);
    }

    #[test]
    fn rhp_roots_examples() {
        let qn1 = q("1 -2 3 @ 0 ; 0.2 0 @ 1");
        let r = rhp_roots(&qn1).unwrap().roots;
        assert_eq!(r.len(), 2);
        assert!((r.roots[0] - Complex64::new(1.0209, -1.4536)).norm() < 1e-4);
        assert!((r.roots[1] - Complex64::new(1.0209, 1.4536)).norm() < 1e-4);

        let r = rhp_roots(&q("1 3 @ 0 ; 2 -2 @ 0.4").conjugate()).unwrap().roots;
        assert_eq!(r.len(), 1);
        assert!((r.roots[0] - Complex64::new(0.2470, 0.0)).norm() < 1e-4);

        let r = rhp_roots(&q(Q1)).unwrap().roots;
        assert_eq!(r.len(), 2);
        assert!((r.roots[1] - Complex64::new(0.4153, 1.6032)).norm() < 1e-4);
    }

    #[test]
    fn rhp_roots_rejects_infinite_and_axis_roots() {
        assert_eq!(
            rhp_roots(&q(Q2)).unwrap_err(),
            RootError::NotFinite(Verdict::Infinite)
        );
        // s^2 + 1 has roots on the axis.
        assert!(matches!(
            rhp_roots(&q("1 0 1 @ 0")),
            Err(RootError::ImaginaryAxisRoot { .. })
        ));
    }

    #[test]
    fn rhp_roots_consistent_with_counts() {
        let qd3 = q("1 0 0 @ 0 ; 1 0 @ 0.2 ; 5 @ 0.5");
        let found = rhp_roots(&qd3).unwrap();
        assert_eq!(found.roots.total_multiplicity(), count_roots(&qd3, &found.search_box).unwrap());
        for z in found.roots.expanded() {
            assert!(qd3.evaluate(z).norm() <= 1e-8 * qd3.max_term_magnitude(z));
        }
        assert!(found.roots.conjugate_asymmetry() < 1e-9);
    }

    #[test]
    fn dominance_bounds_are_finite() {
        assert!(right_extent(&q(Q1)).unwrap() >= 1.0);
        assert!(imag_extent(&q(Q1)).is_some());
        assert!(imag_extent(&q("1 0 0 1 @ 0 ; 1 @ 1.5")).is_some());
    }
}
