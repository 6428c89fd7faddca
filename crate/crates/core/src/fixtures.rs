//! Reference plants, printed controller blocks and tabulated γ values used by
//! the tests and the command-line tool.

use crate::controller::{FirFixture, WeightPair};
use crate::delay::RationalDelay;
use crate::factorization::{blaschke, FactorError, PlantDescription};
use crate::lti::{DelaySum, LtiError, RationalFunction};
use crate::poly::Poly;
use crate::qpoly::QuasiPolynomial;
use crate::rootfinder::rhp_roots;

fn qp(s: &str) -> QuasiPolynomial {
    s.parse().expect("fixture quasi-polynomial")
}

/// `3s + 0.5 + (2s + 7)e^{-1.5s} + (s - 1)e^{-2s}` (neutral).
pub fn q1() -> QuasiPolynomial {
    qp("3 0.5 @ 0 ; 2 7 @ 3/2 ; 1 -1 @ 2")
}

/// `s + 3 + (2s - 2)e^{-0.4s}` (neutral, infinitely many right half-plane roots).
pub fn q2() -> QuasiPolynomial {
    qp("1 3 @ 0 ; 2 -2 @ 2/5")
}

fn plant(num: &str, den: &str) -> PlantDescription {
    PlantDescription::new(qp(num), qp(den)).expect("fixture plant is realizable")
}

/// `(s² - 2s + 3 + 0.2s e^{-s}) / (s³ + 1 + e^{-1.5s})`
pub fn plant_p1() -> PlantDescription {
    plant("1 -2 3 @ 0 ; 0.2 0 @ 1", "1 0 0 1 @ 0 ; 1 @ 3/2")
}

/// `((s-1)e^{-0.2s} + (0.1s+1)e^{-0.3s} + (0.2s-3)e^{-s}) / q1`
pub fn plant_p2() -> PlantDescription {
    plant("1 -1 @ 1/5 ; 0.1 1 @ 3/10 ; 0.2 -3 @ 1", "3 0.5 @ 0 ; 2 7 @ 3/2 ; 1 -1 @ 2")
}

/// `q2 / (s² + s e^{-0.2s} + 5e^{-0.5s})`
pub fn plant_p3() -> PlantDescription {
    plant("1 3 @ 0 ; 2 -2 @ 2/5", "1 0 0 @ 0 ; 1 0 @ 1/5 ; 5 @ 1/2")
}

/// `((s - 1) / (s - 2)) e^{-s}`
pub fn plant_intro() -> PlantDescription {
    plant("1 -1 @ 1", "1 -2 @ 0")
}

/// Mixed-sensitivity weights and the tabulated optimal performance.
#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub name: &'static str,
    pub weights: WeightPair,
    pub gamma_opt: f64,
}

fn rf(num: &[f64], den: &[f64]) -> RationalFunction {
    RationalFunction::from_coeffs(num, den).expect("fixture rational function")
}

/// Weights and γ_opt for P1, P2, P3 (carried, never recomputed).
pub fn gamma_table() -> Vec<TableEntry> {
    vec![
        TableEntry {
            name: "P1",
            weights: WeightPair {
                w1: rf(&[0.1, 1.0], &[1.0, 2.0]),
                w2: None,
            },
            gamma_opt: 1.8595,
        },
        TableEntry {
            name: "P2",
            weights: WeightPair {
                w1: rf(&[0.1, 1.0], &[1.0, 2.0]),
                w2: Some(rf(&[0.2, 0.22], &[1.0])),
            },
            gamma_opt: 0.9579,
        },
        TableEntry {
            name: "P3",
            weights: WeightPair {
                w1: rf(&[1.0, 1.0], &[10.0, 1.0]),
                w2: Some(RationalFunction::constant(0.5)),
            },
            gamma_opt: 0.5534,
        },
    ]
}

/// Printed coefficients `(a1, a0, b1, b0)` of
/// `F = ((a1 s + a0) + (b1 s + b0)e^{-1.5s}) / (s² - 1.2470s + 1.1137)`.
pub const EXAMPLE_FIR_F: [f64; 4] = [-0.1260, 0.3061, -0.5588, -0.0810];

/// The four-digit `θ_d` of the worked Φ example.
pub fn example_fir_theta() -> RationalFunction {
    rf(
        &[-18.5952, -27.8651, 18.5796],
        &[1.0, 15.0, 59.0, 97.0, 72.0, 20.0],
    )
}

/// `(G, G0)` of the worked Φ example: `G = θ_d (s³ + 1 + e^{-1.5s})` and
/// `G0` the Blaschke factor of that quasi-polynomial, rebuilt from its
/// computed roots rather than from the rounded printed coefficients so
/// that the cancellation is exact.
pub fn example_fir() -> Result<(DelaySum, RationalFunction), FactorError> {
    let q = qp("1 0 0 1 @ 0 ; 1 @ 3/2");
    let g = DelaySum::rational(example_fir_theta()).mul_qpoly(&q)?;
    let roots = rhp_roots(&q)?;
    let g0 = blaschke(&roots.roots)?.rational;
    Ok((g, g0))
}

fn d(s: &str) -> RationalDelay {
    s.parse().expect("fixture delay")
}

fn fir(name: &str, den: &[f64], terms: &[(&[f64], &str)], support: &str) -> Result<FirFixture, LtiError> {
    let den = Poly::new(den.to_vec());
    let f = DelaySum::new(
        terms
            .iter()
            .map(|(num, h)| Ok((RationalFunction::new(Poly::new(num.to_vec()), den.clone())?, d(h))))
            .collect::<Result<Vec<_>, LtiError>>()?,
    )?;
    Ok(FirFixture {
        name: name.to_string(),
        f,
        support: d(support),
    })
}

/// The printed four-digit FIR blocks of the three optimal controllers.
pub fn printed_fir_blocks() -> Vec<FirFixture> {
    let p1 = [1.0, -1.2470, 1.1137];
    let p1_terms: &[(&[f64], &str)] = &[(&[-0.1260, 0.3061], "0"), (&[-0.5588, -0.0810], "3/2")];
    let blocks = [
        fir("P1 F_n", &p1, p1_terms, "3/2"),
        fir("P1 F_d", &p1, p1_terms, "3/2"),
        fir(
            "P2 F_n",
            &[1.0, -0.8306, 2.7426],
            &[
                (&[2.2581, -2.8559], "0"),
                (&[3.9747, 0.6515], "3/2"),
                (&[0.3206, -1.3992], "2"),
            ],
            "2",
        ),
        fir(
            "P2 F_d",
            &[1.0, -1.9602, 0.7387, 2.6692, -10.8299, 9.1153],
            &[
                (&[-1.9920, -2.0032, -0.6709, -3.4737, 8.3747], "1/5"),
                (&[-0.5516, -2.0532, -4.3838, -6.3426, -5.1627], "3/10"),
                (&[4.0299, 1.1908, 0.1515, 8.6321, -18.2225], "2/5"),
                (&[6.7325, -1.5256, 4.3559, 22.2652, -39.4726], "1/2"),
                (&[0.4985, 4.3158, 10.8537, 14.5658, 16.9481], "1"),
                (&[-15.3054, 4.4247, -11.0188, -52.7515, 92.1927], "6/5"),
            ],
            "6/5",
        ),
        fir(
            "P3 F_n",
            &[1.0, -0.9343, 3.7868],
            &[
                (&[-0.009883, 0.02164], "0"),
                (&[-0.005714, -0.004544], "1/5"),
                (&[0.005999, -0.03418], "1/2"),
            ],
            "1/2",
        ),
        fir(
            "P3 F_d",
            &[100.0, -118.13, 404.10, -96.30, 9.41, -2.191],
            &[
                (&[-0.8777, 0.1428, -3.1172, -0.1909, -0.1546], "0"),
                (&[1.2623, -0.5283, 3.6099, 0.2144, 0.1640], "2/5"),
            ],
            "2/5",
        ),
    ];
    blocks
        .into_iter()
        .map(|b| b.expect("fixture block"))
        .collect()
}
