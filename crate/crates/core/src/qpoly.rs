//! Quasi-polynomials `q(s) = sum_i q_i(s) e^{-h_i s}` with commensurate
//! rational delays.
//!
//! Values are canonical: delays strictly ascending, terms with equal delays
//! merged, and zero polynomials dropped. Coefficients are `f64`; delays are
//! exact fractions so that asymptotic polynomials and delay shifts are exact.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::delay::{common_denominator, DelayError, RationalDelay};
use crate::poly::Poly;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpolyError {
    #[error("syntax error in term {term}: {message}")]
    Syntax { term: usize, message: String },
    #[error("quasi-polynomial is identically zero")]
    AllZero,
    #[error("negative delay in term {term}: {literal}")]
    NegativeDelay { term: usize, literal: String },
    #[error("delay error: {0}")]
    Delay(#[from] DelayError),
    #[error("term {term} has degree {degree} above the principal term degree {principal}; no asymptotic polynomial exists")]
    AdvancedForm {
        term: usize,
        degree: usize,
        principal: usize,
    },
}

/// One `q_i(s) e^{-h_i s}` term.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpTerm {
    pub poly: Poly,
    pub delay: RationalDelay,
}

#[derive(Clone, PartialEq, Serialize)]
pub struct QuasiPolynomial {
    terms: Vec<QpTerm>,
}

/// Neutral iff a delayed term matches the principal degree.
///
/// `Advanced` covers exponential polynomials whose principal (least-delay)
/// term is outranked in degree by a delayed term. These arise as conjugates
/// of retarded quasi-polynomials and have infinitely many roots in the
/// right half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KindTag {
    Retarded,
    Neutral,
    Advanced,
}

impl fmt::Display for KindTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KindTag::Retarded => "Retarded",
            KindTag::Neutral => "Neutral",
            KindTag::Advanced => "Advanced",
        };
        f.write_str(s)
    }
}

/// `p(w) = sum_i p_i w^{n_i - n_1}` with `h_i = n_i / N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticPolynomial {
    /// Least common denominator `N` of the delays.
    pub base: u64,
    /// `(exponent, coefficient)` pairs, ascending exponent, zero coefficients dropped.
    /// The first entry is always `(0, 1.0)`.
    pub terms: Vec<(u64, f64)>,
}

impl AsymptoticPolynomial {
    pub fn degree(&self) -> u64 {
        self.terms.last().map(|t| t.0).unwrap_or(0)
    }

    /// Dense coefficients in `w`, highest degree first.
    pub fn to_poly(&self) -> Poly {
        let n = self.degree() as usize;
        let mut c = vec![0.0; n + 1];
        for &(e, p) in &self.terms {
            c[n - e as usize] += p;
        }
        Poly::new(c)
    }
}

impl QuasiPolynomial {
    /// Build from raw terms, normalizing to canonical form.
    pub fn from_terms<I>(terms: I) -> Result<Self, QpolyError>
    where
        I: IntoIterator<Item = (Poly, RationalDelay)>,
    {
        let mut raw: Vec<QpTerm> = terms
            .into_iter()
            .map(|(poly, delay)| QpTerm { poly, delay })
            .collect();
        raw.sort_by(|a, b| a.delay.cmp(&b.delay));
        let mut merged: Vec<QpTerm> = Vec::with_capacity(raw.len());
        for t in raw {
            match merged.last_mut() {
                Some(last) if last.delay == t.delay => last.poly = &last.poly + &t.poly,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| !t.poly.is_zero());
        if merged.is_empty() {
            return Err(QpolyError::AllZero);
        }
        Ok(QuasiPolynomial { terms: merged })
    }

    /// Delay-free polynomial.
    pub fn polynomial(poly: Poly) -> Result<Self, QpolyError> {
        Self::from_terms([(poly, RationalDelay::ZERO)])
    }

    pub fn terms(&self) -> &[QpTerm] {
        &self.terms
    }

    pub fn principal(&self) -> &QpTerm {
        &self.terms[0]
    }

    /// `h_1`, the smallest delay.
    pub fn min_delay(&self) -> RationalDelay {
        self.terms[0].delay
    }

    /// `h_v`, the largest delay.
    pub fn max_delay(&self) -> RationalDelay {
        self.terms[self.terms.len() - 1].delay
    }

    pub fn is_polynomial(&self) -> bool {
        self.terms.len() == 1 && self.terms[0].delay.is_zero()
    }

    pub fn delays(&self) -> impl Iterator<Item = RationalDelay> + '_ {
        self.terms.iter().map(|t| t.delay)
    }

    pub fn evaluate(&self, s: Complex64) -> Complex64 {
        self.terms
            .iter()
            .map(|t| t.poly.eval_complex(s) * (-s * t.delay.value()).exp())
            .sum()
    }

    /// `(q(s), q'(s))`, with `d/ds [q_i e^{-hs}] = (q_i' - h q_i) e^{-hs}`.
    pub fn evaluate_with_derivative(&self, s: Complex64) -> (Complex64, Complex64) {
        let mut v = Complex64::new(0.0, 0.0);
        let mut dv = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            let h = t.delay.value();
            let e = (-s * h).exp();
            let (p, dp) = t.poly.eval_with_derivative(s);
            v += p * e;
            dv += (dp - p * h) * e;
        }
        (v, dv)
    }

    /// `sum_i |q_i|(|s|) |e^{-h_i s}|`, the rounding-error scale at `s`.
    pub fn abs_scale(&self, s: Complex64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.poly.abs_scale(s) * (-s.re * t.delay.value()).exp())
            .sum()
    }

    /// Largest single term magnitude at `s`.
    pub fn max_term_magnitude(&self, s: Complex64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.poly.eval_complex(s).norm() * (-s.re * t.delay.value()).exp())
            .fold(0.0, f64::max)
    }

    pub fn classify(&self) -> KindTag {
        let d1 = self.terms[0].poly.degree();
        let mut kind = KindTag::Retarded;
        for t in &self.terms[1..] {
            let d = t.poly.degree();
            if d > d1 {
                return KindTag::Advanced;
            }
            if d == d1 {
                kind = KindTag::Neutral;
            }
        }
        kind
    }

    /// `q̄(s) = -q(-s) e^{-h_v s}`.
    pub fn conjugate(&self) -> QuasiPolynomial {
        let hv = self.max_delay();
        let terms = self.terms.iter().map(|t| {
            let delay = hv
                .checked_sub(&t.delay)
                .expect("delays are bounded by the largest delay");
            (-&t.poly.reflect(), delay)
        });
        QuasiPolynomial::from_terms(terms).expect("conjugate of a nonzero quasi-polynomial is nonzero")
    }

    pub fn asymptotic_polynomial(&self) -> Result<AsymptoticPolynomial, QpolyError> {
        let base = common_denominator(self.terms.iter().map(|t| &t.delay))
            .ok_or(QpolyError::Delay(DelayError::Overflow))?;
        let principal = &self.terms[0];
        let d1 = principal.poly.degree();
        let lead = principal.poly.leading();
        let n1 = principal
            .delay
            .scaled_to(base)
            .ok_or(QpolyError::Delay(DelayError::Overflow))?;
        let mut terms = vec![(0u64, 1.0)];
        for (i, t) in self.terms.iter().enumerate().skip(1) {
            let d = t.poly.degree();
            if d > d1 {
                return Err(QpolyError::AdvancedForm {
                    term: i + 1,
                    degree: d,
                    principal: d1,
                });
            }
            if d == d1 {
                let ni = t
                    .delay
                    .scaled_to(base)
                    .ok_or(QpolyError::Delay(DelayError::Overflow))?;
                terms.push((ni - n1, t.poly.leading() / lead));
            }
        }
        Ok(AsymptoticPolynomial { base, terms })
    }

    /// `(h_1, q e^{h_1 s})`: factor out the smallest delay.
    pub fn extract_common_delay(&self) -> (RationalDelay, QuasiPolynomial) {
        let h1 = self.min_delay();
        let terms = self.terms.iter().map(|t| {
            (
                t.poly.clone(),
                t.delay.checked_sub(&h1).expect("h_1 is the minimum delay"),
            )
        });
        (
            h1,
            QuasiPolynomial::from_terms(terms).expect("shift preserves nonzero terms"),
        )
    }

    /// `q(s) e^{-h s}`.
    pub fn delayed(&self, h: RationalDelay) -> Result<QuasiPolynomial, QpolyError> {
        let terms = self
            .terms
            .iter()
            .map(|t| Ok((t.poly.clone(), t.delay.checked_add(&h)?)))
            .collect::<Result<Vec<_>, DelayError>>()?;
        QuasiPolynomial::from_terms(terms)
    }

    pub fn mul_poly(&self, p: &Poly) -> Result<QuasiPolynomial, QpolyError> {
        QuasiPolynomial::from_terms(self.terms.iter().map(|t| (&t.poly * p, t.delay)))
    }

    pub fn add(&self, other: &QuasiPolynomial) -> Result<QuasiPolynomial, QpolyError> {
        QuasiPolynomial::from_terms(
            self.terms
                .iter()
                .chain(other.terms.iter())
                .map(|t| (t.poly.clone(), t.delay)),
        )
    }

    pub fn mul(&self, other: &QuasiPolynomial) -> Result<QuasiPolynomial, QpolyError> {
        let mut out = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                out.push((&a.poly * &b.poly, a.delay.checked_add(&b.delay)?));
            }
        }
        QuasiPolynomial::from_terms(out)
    }

    /// Text form in the term grammar; `parse(serialize(q)) == q` exactly.
    pub fn serialize(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<QuasiPolynomial, QpolyError> {
        text.parse()
    }

    /// Readable math form such as `3 s + 0.5 + (2 s + 7) e^{-3/2 s}`.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                out.push_str(" + ");
            }
            if t.delay.is_zero() {
                out.push_str(&t.poly.to_string());
            } else {
                out.push_str(&format!("({}) e^(-{} s)", t.poly, t.delay));
            }
        }
        out
    }
}

impl fmt::Display for QuasiPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" ; ")?;
            }
            for c in t.poly.coeffs() {
                write!(f, "{c} ")?;
            }
            write!(f, "@ {}", t.delay)?;
        }
        Ok(())
    }
}

impl fmt::Debug for QuasiPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QuasiPolynomial({self})")
    }
}

impl FromStr for QuasiPolynomial {
    type Err = QpolyError;

    /// Grammar: terms separated by `;`, each `c_n ... c_0 @ h`. A term without
    /// `@` has delay 0.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut terms = Vec::new();
        for (idx, raw) in text.split(';').enumerate() {
            let term = idx + 1;
            let raw = raw.trim();
            if raw.is_empty() {
                return Err(QpolyError::Syntax {
                    term,
                    message: "empty term".into(),
                });
            }
            let (coef_text, delay_text) = match raw.split_once('@') {
                Some((c, d)) => (c, d.trim()),
                None => (raw, "0"),
            };
            let coeffs = coef_text
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| QpolyError::Syntax {
                            term,
                            message: format!("bad coefficient `{tok}`"),
                        })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            if coeffs.is_empty() {
                return Err(QpolyError::Syntax {
                    term,
                    message: "no coefficients".into(),
                });
            }
            let delay = delay_text.parse::<RationalDelay>().map_err(|e| match e {
                DelayError::Negative(lit) => QpolyError::NegativeDelay { term, literal: lit },
                other => QpolyError::Syntax {
                    term,
                    message: other.to_string(),
                },
            })?;
            terms.push((Poly::new(coeffs), delay));
        }
        QuasiPolynomial::from_terms(terms)
    }
}
