#![allow(dead_code)]

//! Forward constructions shared by the integration tests.

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use qpfact::lti::{DelaySum, RationalFunction};
use qpfact::{Poly, QuasiPolynomial, RationalDelay};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

/// Seeded sample points in `[-3, 3] x [-5, 5]`, away from the given poles.
pub fn sample_points(seed: u64, n: usize, avoid: &[Complex64]) -> Vec<Complex64> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let s = c(rng.gen_range(-3.0..3.0), rng.gen_range(-5.0..5.0));
        if avoid.iter().all(|z| (s - z).norm() > 0.05) {
            out.push(s);
        }
    }
    out
}

/// A right half-plane cancellation set: one real point or a conjugate pair.
#[derive(Debug, Clone)]
pub struct Cancel {
    pub re: f64,
    pub im: f64,
}

impl Cancel {
    pub fn points(&self) -> Vec<Complex64> {
        if self.im == 0.0 {
            vec![c(self.re, 0.0)]
        } else {
            vec![c(self.re, self.im), c(self.re, -self.im)]
        }
    }

    /// `prod (s - z)`.
    pub fn carrier(&self) -> Poly {
        if self.im == 0.0 {
            Poly::new(vec![1.0, -self.re])
        } else {
            Poly::new(vec![1.0, -2.0 * self.re, self.re * self.re + self.im * self.im])
        }
    }

    /// `prod (s + conj z)`.
    pub fn mirror(&self) -> Poly {
        if self.im == 0.0 {
            Poly::new(vec![1.0, self.re])
        } else {
            Poly::new(vec![1.0, 2.0 * self.re, self.re * self.re + self.im * self.im])
        }
    }

    pub fn blaschke(&self) -> RationalFunction {
        RationalFunction::new(self.carrier(), self.mirror()).unwrap()
    }
}

pub fn cancel_strategy() -> impl Strategy<Value = Cancel> {
    prop_oneof![
        (0.2f64..2.0).prop_map(|re| Cancel { re, im: 0.0 }),
        (0.2f64..2.0, 0.3f64..2.0).prop_map(|(re, im)| Cancel { re, im }),
    ]
}

/// An FIR block `(A(s) - B(s) e^{-h s}) / prod(s - z)` with `A` chosen so
/// that the numerator vanishes at every `z`.
#[derive(Debug, Clone)]
pub struct FirCase {
    pub cancel: Cancel,
    pub a: Poly,
    pub b: Poly,
    pub h: RationalDelay,
}

impl FirCase {
    pub fn new(cancel: Cancel, b: Poly, h: RationalDelay) -> FirCase {
        let hv = h.value();
        let a = if cancel.im == 0.0 {
            let z = cancel.re;
            Poly::constant(b.eval(z) * (-hv * z).exp())
        } else {
            let z = c(cancel.re, cancel.im);
            let w = b.eval_complex(z) * (-hv * z).exp();
            let a1 = w.im / z.im;
            Poly::new(vec![a1, w.re - a1 * z.re])
        };
        FirCase { cancel, a, b, h }
    }

    pub fn with_b(&self, b: Poly) -> DelaySum {
        let d = self.cancel.carrier();
        DelaySum::new([
            (RationalFunction::new(self.a.clone(), d.clone()).unwrap(), RationalDelay::ZERO),
            (RationalFunction::new(b.scale(-1.0), d).unwrap(), self.h),
        ])
        .unwrap()
    }

    pub fn f(&self) -> DelaySum {
        self.with_b(self.b.clone())
    }
}

pub fn fir_strategy() -> impl Strategy<Value = FirCase> {
    (
        cancel_strategy(),
        prop::collection::vec(-3.0f64..3.0, 2),
        1u64..5,
    )
        .prop_filter_map("degenerate B", |(cancel, b, h)| {
            let b = if cancel.im == 0.0 {
                Poly::constant(b[1])
            } else {
                Poly::new(b)
            };
            if b.max_abs_coeff() < 0.1 {
                return None;
            }
            Some(FirCase::new(cancel, b, RationalDelay::new(h, 2).unwrap()))
        })
}

/// `G = G0 (X + F)` written without any internal cancellation, with `X` a
/// stable strictly proper rational part.
#[derive(Debug, Clone)]
pub struct PhiCase {
    pub fir: FirCase,
    pub x: RationalFunction,
    pub g: DelaySum,
    pub g0: RationalFunction,
}

pub fn phi_strategy() -> impl Strategy<Value = PhiCase> {
    (
        fir_strategy(),
        prop::collection::vec(-2.0f64..2.0, 2),
        0.3f64..3.0,
        0.3f64..3.0,
    )
        .prop_map(|(fir, xn, p1, p2)| {
            let x_num = Poly::new(xn);
            let x_den = &Poly::new(vec![1.0, p1]) * &Poly::new(vec![1.0, p2]);
            let x = RationalFunction::new(x_num.clone(), x_den.clone()).unwrap();
            let carrier = fir.cancel.carrier();
            let mirror = fir.cancel.mirror();
            // X G0 + A / mirror over the common denominator X_den * mirror.
            let head_num = &(&x_num * &carrier) + &(&fir.a * &x_den);
            let head = RationalFunction::new(head_num, &x_den * &mirror).unwrap();
            let tail = RationalFunction::new(fir.b.scale(-1.0), mirror).unwrap();
            let g = DelaySum::new([(head, RationalDelay::ZERO), (tail, fir.h)]).unwrap();
            let g0 = fir.cancel.blaschke();
            PhiCase { fir, x, g, g0 }
        })
}

/// A rational function with poles at the cancellation set (order `m`) and
/// at stable points.
#[derive(Debug, Clone)]
pub struct SplitCase {
    pub cancel: Cancel,
    pub order: usize,
    pub r: RationalFunction,
}

pub fn split_strategy() -> impl Strategy<Value = SplitCase> {
    (
        cancel_strategy(),
        1usize..3,
        prop::collection::vec(0.2f64..4.0, 1..3),
        prop::collection::vec(-3.0f64..3.0, 1..6),
    )
        .prop_map(|(cancel, order, stable, num)| {
            let mut den = cancel.carrier().pow(order as u32);
            for p in stable {
                den = &den * &Poly::new(vec![1.0, p]);
            }
            let keep = num.len().min(den.degree() + 1);
            let num = Poly::new(num[num.len() - keep..].to_vec());
            SplitCase {
                cancel,
                order,
                r: RationalFunction::new(num, den).unwrap(),
            }
        })
}

/// Quasi-polynomial with small integer coefficients, principal delay zero.
pub fn qpoly_strategy() -> impl Strategy<Value = QuasiPolynomial> {
    let term = (prop::collection::vec(-5i32..=5, 1..4), 1u64..9, 1u64..5);
    (prop::collection::vec(-5i32..=5, 1..4), prop::collection::vec(term, 0..3)).prop_filter_map(
        "zero principal term",
        |(p, rest)| {
            let mut terms = vec![(Poly::new(p.iter().map(|&x| x as f64).collect()), RationalDelay::ZERO)];
            for (coeffs, n, d) in rest {
                terms.push((
                    Poly::new(coeffs.iter().map(|&x| x as f64).collect()),
                    RationalDelay::new(n, d).unwrap(),
                ));
            }
            let q = QuasiPolynomial::from_terms(terms).ok()?;
            q.min_delay().is_zero().then_some(q)
        },
    )
}

/// Sum of term magnitudes of `g` at `s`, for relative comparisons.
pub fn magnitude(g: &DelaySum, s: Complex64) -> f64 {
    g.terms()
        .iter()
        .map(|t| t.rational.eval_unchecked(s).norm() * (-s.re * t.delay.value()).exp())
        .sum()
}
