//! Acceptance criteria. Every check prints a PASS/FAIL line, followed by one
//! summary line per criterion; the process exits non-zero if any fails.

mod common;

use std::time::Instant;

use num_complex::Complex64;
use proptest::test_runner::TestCaseError;

use common::*;
use qpfact::controller::{compute_gamma_opt, verify_fixture, ControllerError};
use qpfact::factorization::{factor_plant, log_grid, FactoredPlant, PlantCase, PlantDescription};
use qpfact::fixtures::{self, EXAMPLE_FIR_F};
use qpfact::lti::{partial_fraction_split, RatioExpression, RatioFactor};
use qpfact::phi::{certify_fir, phi_decompose, PhiOptions};
use qpfact::poly::Poly;
use qpfact::rootfinder::{count_roots, polynomial_roots, rhp_roots, Rectangle};
use qpfact::QuasiPolynomial;

struct Checks {
    criterion: u32,
    failed: Vec<String>,
}

impl Checks {
    fn new(criterion: u32) -> Self {
        Checks {
            criterion,
            failed: Vec::new(),
        }
    }

    fn check(&mut self, name: &str, pass: bool, detail: impl AsRef<str>) {
        println!(
            "{} [{}] {}: {}",
            if pass { "PASS" } else { "FAIL" },
            self.criterion,
            name,
            detail.as_ref()
        );
        if !pass {
            self.failed.push(name.to_string());
        }
    }

    fn finish(self) {
        if !self.failed.is_empty() {
            panic!("criterion {} failed: {:?}", self.criterion, self.failed);
        }
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn coeffs_close(p: &Poly, want: &[f64], tol: f64) -> bool {
    p.coeffs().len() == want.len() && p.coeffs().iter().zip(want).all(|(a, b)| close(*a, *b, tol))
}

fn roots_close(got: &[Complex64], want: &[Complex64], tol: f64) -> bool {
    got.len() == want.len() && want.iter().all(|w| got.iter().any(|g| (g - w).norm() <= tol))
}

fn qp(s: &str) -> QuasiPolynomial {
    s.parse().unwrap()
}

fn factored(p: &PlantDescription) -> FactoredPlant {
    factor_plant(p).unwrap()
}

fn criterion_1_asymptotic_magnitudes() {
    let mut ck = Checks::new(1);
    let p = fixtures::q1().asymptotic_polynomial().unwrap();
    let mut mags = polynomial_roots(p.to_poly().coeffs()).unwrap().magnitudes();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    mags.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let want = [1.6796, 1.0312];
    ck.check(
        "q1 asymptotic root magnitudes",
        mags.len() == 2 && mags.iter().zip(want).all(|(a, b)| close(*a, b, 1e-3)),
        format!("{mags:.4?} vs {want:?}"),
    );
    ck.finish();
}

fn criterion_2_rectangle_counts() {
    let mut ck = Checks::new(2);
    let n = count_roots(&fixtures::q1(), &Rectangle::new(0.0, 10.0, -30.0, 30.0)).unwrap();
    ck.check("q1 roots in [0,10]x[-30,30]", n == 4, format!("counted {n}, expected 4"));

    let qbar = fixtures::q2().conjugate();
    let n = count_roots(&qbar, &Rectangle::new(0.0, 10.0, -30.0, 30.0)).unwrap();
    let roots = rhp_roots(&qbar).unwrap().roots;
    let located = roots.len() == 1 && (roots.roots[0] - c(0.2470, 0.0)).norm() <= 1e-3;
    ck.check(
        "conjugate of q2: one root at 0.2470",
        n == 1 && located,
        format!("counted {n}, roots {:?}", roots.roots),
    );
    ck.finish();
}

fn criterion_3_factorization_coefficients() {
    let mut ck = Checks::new(3);
    let tol = 1e-3;

    let p1 = fixtures::plant_p1();
    let f1 = factored(&p1);
    ck.check("P1 case", f1.case == PlantCase::C1, format!("{}", f1.case));
    ck.check(
        "P1 numerator roots 1.0209±1.4536j",
        roots_close(&f1.numerator_roots.roots.roots, &[c(1.0209, 1.4536), c(1.0209, -1.4536)], tol),
        format!("{:?}", f1.numerator_roots.roots.roots),
    );
    ck.check(
        "P1 denominator roots 0.6235±0.8514j",
        roots_close(&f1.denominator_roots.roots.roots, &[c(0.6235, 0.8514), c(0.6235, -0.8514)], tol),
        format!("{:?}", f1.denominator_roots.roots.roots),
    );
    ck.check(
        "P1 m_n = (s²-2.0418s+3.1553)/(s²+2.0418s+3.1553)",
        coeffs_close(f1.m_q.numerator(), &[1.0, -2.0418, 3.1553], tol)
            && coeffs_close(f1.m_q.denominator(), &[1.0, 2.0418, 3.1553], tol)
            && f1.delay.is_zero(),
        format!("{}", f1.m_q),
    );
    ck.check(
        "P1 m_d = (s²-1.2470s+1.1137)/(s²+1.2470s+1.1137)",
        coeffs_close(f1.m_d.numerator(), &[1.0, -1.2470, 1.1137], tol)
            && coeffs_close(f1.m_d.denominator(), &[1.0, 1.2470, 1.1137], tol),
        format!("{}", f1.m_d),
    );

    let p2 = fixtures::plant_p2();
    let f2 = factored(&p2);
    ck.check("P2 case", f2.case == PlantCase::C1, format!("{}", f2.case));
    ck.check(
        "P2 m_n = ((s-1.1296)/(s+1.1296)) e^{-0.2s}",
        coeffs_close(f2.m_q.numerator(), &[1.0, -1.1296], tol)
            && coeffs_close(f2.m_q.denominator(), &[1.0, 1.1296], tol)
            && f2.delay == "1/5".parse().unwrap(),
        format!("{} delay {}", f2.m_q, f2.delay),
    );
    ck.check(
        "P2 denominator roots 0.4153±1.6032j",
        roots_close(&f2.denominator_roots.roots.roots, &[c(0.4153, 1.6032), c(0.4153, -1.6032)], tol),
        format!("{:?}", f2.denominator_roots.roots.roots),
    );
    ck.check(
        "P2 m_d = (s²-0.8306s+2.7426)/(s²+0.8306s+2.7426)",
        coeffs_close(f2.m_d.numerator(), &[1.0, -0.8306, 2.7426], tol)
            && coeffs_close(f2.m_d.denominator(), &[1.0, 0.8306, 2.7426], tol),
        format!("{}", f2.m_d),
    );
    ck.check(
        "P2 shifted numerator (s-1)+(0.1s+1)e^{-0.1s}+(0.2s-3)e^{-0.8s}",
        f2.q_n == qp("1 -1 @ 0 ; 0.1 1 @ 1/10 ; 0.2 -3 @ 4/5"),
        f2.q_n.pretty(),
    );

    let p3 = fixtures::plant_p3();
    let f3 = factored(&p3);
    ck.check("P3 case", f3.case == PlantCase::C2, format!("{}", f3.case));
    ck.check(
        "P3 Blaschke part (s-0.2470)/(s+0.2470)",
        coeffs_close(f3.m_q.numerator(), &[1.0, -0.2470], tol)
            && coeffs_close(f3.m_q.denominator(), &[1.0, 0.2470], tol),
        format!("{}", f3.m_q),
    );
    ck.check(
        "P3 all-pass (s+3+(2s-2)e^{-0.4s})/(2s+2+(s-3)e^{-0.4s})",
        f3.q_n == qp("1 3 @ 0 ; 2 -2 @ 2/5")
            && f3.q_n_conjugate.as_ref() == Some(&qp("2 2 @ 0 ; 1 -3 @ 2/5")),
        format!("{:?}", f3.q_n_conjugate.as_ref().map(|q| q.pretty())),
    );
    ck.check(
        "P3 denominator roots 0.4672±1.8891j",
        roots_close(&f3.denominator_roots.roots.roots, &[c(0.4672, 1.8891), c(0.4672, -1.8891)], tol),
        format!("{:?}", f3.denominator_roots.roots.roots),
    );
    ck.check(
        "P3 m_d = (s²-0.9343s+3.7868)/(s²+0.9343s+3.7868)",
        coeffs_close(f3.m_d.numerator(), &[1.0, -0.9343, 3.7868], tol)
            && coeffs_close(f3.m_d.denominator(), &[1.0, 0.9343, 3.7868], tol),
        format!("{}", f3.m_d),
    );

    // The printed N_o with four-digit constants agrees with the computed one.
    let printed: [(&FactoredPlant, &str, &str, &[f64], &[f64]); 3] = [
        (&f1, "1 -2 3 @ 0 ; 0.2 0 @ 1", "1 0 0 1 @ 0 ; 1 @ 3/2", &[1.0, -2.0418, 3.1553], &[1.0, -1.2470, 1.1137]),
        (
            &f2,
            "1 -1 @ 0 ; 0.1 1 @ 1/10 ; 0.2 -3 @ 4/5",
            "3 0.5 @ 0 ; 2 7 @ 3/2 ; 1 -1 @ 2",
            &[1.0, -1.1296],
            &[1.0, -0.8306, 2.7426],
        ),
        (&f3, "2 2 @ 0 ; 1 -3 @ 2/5", "1 0 0 @ 0 ; 1 0 @ 1/5 ; 5 @ 1/2", &[1.0, -0.2470], &[1.0, -0.9343, 3.7868]),
    ];
    for (i, (fp, num, den, mq, md)) in printed.iter().enumerate() {
        // (-1)^n p(-s): flip every other coefficient counting from the leading one
        let mirror = |c: &[f64]| Poly::new(c.iter().enumerate().map(|(k, &x)| if k % 2 == 1 { -x } else { x }).collect());
        let (num, den) = (qp(num), qp(den));
        let (mq, md) = (Poly::new(mq.to_vec()), Poly::new(md.to_vec()));
        let (mq_bar, md_bar) = (mirror(mq.coeffs()), mirror(md.coeffs()));
        let worst = sample_points(30 + i as u64, 16, &[])
            .into_iter()
            .map(|s| {
                let want = num.evaluate(s) / mq.eval_complex(s) * md.eval_complex(s) / den.evaluate(s) * mq_bar.eval_complex(s)
                    / md_bar.eval_complex(s);
                (fp.n_o.eval(s).unwrap() - want).norm() / want.norm()
            })
            .fold(0.0f64, f64::max);
        ck.check(&format!("P{} printed N_o", i + 1), worst <= tol, format!("max relative deviation {worst:.2e}"));
    }
    ck.finish();
}

fn criterion_4_inner_property() {
    let mut ck = Checks::new(4);
    let omegas = log_grid(1e-2, 1e3, 200);
    for (name, p) in [("P1", fixtures::plant_p1()), ("P2", fixtures::plant_p2()), ("P3", fixtures::plant_p3())] {
        let fp = factored(&p);
        let (dn, dd) = fp.inner_deviation(&omegas).unwrap();
        ck.check(&format!("{name} m_n"), dn <= 1e-8, format!("max ||m_n(jω)|-1| = {dn:.2e}"));
        ck.check(&format!("{name} m_d"), dd <= 1e-8, format!("max ||m_d(jω)|-1| = {dd:.2e}"));
        if let Some(qbar) = &fp.q_n_conjugate {
            let allpass = RatioExpression::new(vec![RatioFactor::QpRatio {
                numerator: fp.q_n.clone(),
                denominator: qbar.clone(),
            }])
            .unwrap();
            let d = qpfact::factorization::inner_deviation(|s| allpass.eval(s), &omegas).unwrap();
            ck.check(&format!("{name} quasi-polynomial all-pass"), d <= 1e-8, format!("max deviation {d:.2e}"));
        }
    }
    ck.finish();
}

fn criterion_5_phi_golden() {
    let mut ck = Checks::new(5);
    let (g, g0) = fixtures::example_fir().unwrap();
    let d = phi_decompose(&g, &g0, &PhiOptions::default()).unwrap();
    let zeros = d.cancellation.points();
    ck.check(
        "common zeros 0.6235±0.8514j",
        roots_close(&zeros, &[c(0.6235, 0.8514), c(0.6235, -0.8514)], 1e-3),
        format!("{zeros:?}"),
    );
    let terms = d.fir.f.terms();
    let den = terms[0].rational.denominator();
    let got: Vec<f64> = terms
        .iter()
        .flat_map(|t| {
            let n = t.rational.numerator().coeffs();
            let pad = 2 - n.len();
            std::iter::repeat(0.0).take(pad).chain(n.iter().copied())
        })
        .collect();
    ck.check(
        "F coefficients (-0.1260, 0.3061, -0.5588, -0.0810)",
        terms.len() == 2
            && terms[1].delay == "3/2".parse().unwrap()
            && coeffs_close(den, &[1.0, -1.2470, 1.1137], 1e-3)
            && got.iter().zip(EXAMPLE_FIR_F).all(|(a, b)| close(*a, b, 1e-3)),
        format!("{got:.4?} over {den}"),
    );
    let mut avoid = zeros.clone();
    avoid.extend(g0.poles().roots.iter());
    avoid.extend(g.terms()[0].rational.poles().roots.iter());
    let worst = sample_points(5, 64, &avoid)
        .into_iter()
        .map(|s| {
            let want = g.eval(s).unwrap() / g0.eval(s).unwrap();
            (d.eval(s).unwrap() - want).norm() / want.norm()
        })
        .fold(0.0f64, f64::max);
    ck.check("reconstruction |H+F-G/G0|", worst <= 1e-9, format!("max relative {worst:.2e} at 64 points"));
    ck.finish();
}

fn criterion_6_fir_certification() {
    let mut ck = Checks::new(6);
    let (g, g0) = fixtures::example_fir().unwrap();
    let d = phi_decompose(&g, &g0, &PhiOptions::default()).unwrap();
    let hv = d.fir.support_end.value();
    let cert = certify_fir(&d.fir.f, hv, 1e-8, Some(3.0 * hv)).unwrap();
    ck.check(
        "recomputed example F at 1e-8 on (1.5, 6]",
        cert.pass,
        format!("tail/peak {:.2e}, tail coefficient {:.2e}", cert.max_tail / cert.peak, cert.algebraic_tail),
    );

    for fixture in fixtures::printed_fir_blocks() {
        if fixture.name == "P1 F_n" {
            continue;
        }
        let r = verify_fixture(&fixture, 1e-2, 3.0).unwrap();
        ck.check(&format!("printed {} at 1e-2, horizon 3", fixture.name), r.pass, r.line());
    }
    ck.finish();
}

fn criterion_7_property_suites() {
    let mut ck = Checks::new(7);
    let start = Instant::now();
    let cases = 250;
    let mut total = 0u32;

    let mut suite = |name: &str, result: Result<(), String>, ck: &mut Checks| {
        total += cases;
        ck.check(name, result.is_ok(), result.err().unwrap_or_else(|| format!("{cases} cases")));
    };

    let r = runner(cases).run(&qpoly_strategy(), |q| {
        let back = q.conjugate().conjugate();
        if back != q {
            return Err(TestCaseError::fail(format!("{} -> {}", q.pretty(), back.pretty())));
        }
        Ok(())
    });
    suite("conjugate involution exact", r.map_err(|e| e.to_string()), &mut ck);

    let r = runner(cases).run(&phi_strategy(), |case| {
        let d = phi_decompose(&case.g, &case.g0, &PhiOptions::default())
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let mut avoid = case.fir.cancel.points();
        avoid.extend(case.g0.poles().roots.iter());
        avoid.extend(case.x.poles().roots.iter());
        for s in sample_points(7, 16, &avoid) {
            let want = case.g.eval(s).unwrap() / case.g0.eval(s).unwrap();
            let err = (d.eval(s).unwrap() - want).norm();
            let scale = want.norm().max(magnitude(&d.h, s) + magnitude(&d.fir.f, s));
            if err > 1e-9 * scale {
                return Err(TestCaseError::fail(format!("relative {:.2e} at {s}", err / scale)));
            }
        }
        Ok(())
    });
    suite("Φ reconstruction <= 1e-9", r.map_err(|e| e.to_string()), &mut ck);

    let r = runner(cases).run(&split_strategy(), |case| {
        let set: Vec<(Complex64, usize)> = case.cancel.points().into_iter().map(|z| (z, case.order)).collect();
        let sp = partial_fraction_split(&case.r, &set).map_err(|e| TestCaseError::fail(e.to_string()))?;
        if sp.division_residual > 1e-9 {
            return Err(TestCaseError::fail(format!("division residual {:.2e}", sp.division_residual)));
        }
        let mut avoid = case.cancel.points();
        avoid.extend(case.r.poles().roots.iter());
        for s in sample_points(11, 16, &avoid) {
            let want = case.r.eval(s).unwrap();
            let (h, f) = (sp.h.eval(s).unwrap(), sp.f.eval(s).unwrap());
            let err = (h + f - want).norm();
            let scale = want.norm().max(h.norm() + f.norm());
            if err > 1e-9 * scale {
                return Err(TestCaseError::fail(format!("relative {:.2e} at {s}", err / scale)));
            }
        }
        Ok(())
    });
    suite("partial-fraction split exact <= 1e-9", r.map_err(|e| e.to_string()), &mut ck);

    let r = runner(cases).run(&phi_strategy(), |case| {
        let d = phi_decompose(&case.g, &case.g0, &PhiOptions::default())
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let want = case.fir.f();
        let mut avoid = case.fir.cancel.points();
        avoid.extend(case.g0.poles().roots.iter());
        for s in sample_points(13, 16, &avoid) {
            let err = (d.fir.f.eval(s).unwrap() - want.eval(s).unwrap()).norm();
            let scale = magnitude(&want, s);
            if err > 1e-8 * scale {
                return Err(TestCaseError::fail(format!("F relative {:.2e} at {s}", err / scale)));
            }
            let err = (d.h.eval(s).unwrap() - case.x.eval(s).unwrap()).norm();
            let scale = case.x.eval(s).unwrap().norm().max(scale);
            if err > 1e-8 * scale {
                return Err(TestCaseError::fail(format!("H relative {:.2e} at {s}", err / scale)));
            }
        }
        Ok(())
    });
    suite("forward cancellation recovery <= 1e-8", r.map_err(|e| e.to_string()), &mut ck);

    let r = runner(cases).run(&(fir_strategy(), 0.01f64..0.1, proptest::bool::ANY), |(case, eps, sign)| {
        let bump = if sign { 1.0 + eps } else { 1.0 - eps };
        let bad = case.with_b(case.b.scale(bump));
        let cert = certify_fir(&bad, case.h.value(), 1e-8, None).unwrap();
        if cert.pass || cert.algebraic_pass || cert.tail_growth <= 0.0 {
            return Err(TestCaseError::fail(format!("not detected: {}", cert.text())));
        }
        Ok(())
    });
    suite("broken cancellation detected with growing tail", r.map_err(|e| e.to_string()), &mut ck);

    let elapsed = start.elapsed().as_secs_f64();
    ck.check(
        "budget",
        total >= 1000 && elapsed <= 60.0,
        format!("{total} cases in {elapsed:.1} s"),
    );
    ck.finish();
}

fn criterion_8_gamma_is_not_computed() {
    let mut ck = Checks::new(8);
    for (entry, plant) in fixtures::gamma_table().iter().zip([
        fixtures::plant_p1(),
        fixtures::plant_p2(),
        fixtures::plant_p3(),
    ]) {
        let fp = factored(&plant);
        let refused = compute_gamma_opt(&fp, &entry.weights) == Err(ControllerError::GammaComputationUnsupported);
        ck.check(
            &format!("{} γ_opt refused, tabulated value {}", entry.name, entry.gamma_opt),
            refused,
            format!("γ_opt = {} (carried)", entry.gamma_opt),
        );
    }
    let values: Vec<f64> = fixtures::gamma_table().iter().map(|e| e.gamma_opt).collect();
    ck.check("tabulated values", values == [1.8595, 0.9579, 0.5534], format!("{values:?}"));
    ck.finish();
}

fn main() {
    let criteria: [(&str, fn()); 8] = [
        ("criterion_1_asymptotic_magnitudes", criterion_1_asymptotic_magnitudes),
        ("criterion_2_rectangle_counts", criterion_2_rectangle_counts),
        ("criterion_3_factorization_coefficients", criterion_3_factorization_coefficients),
        ("criterion_4_inner_property", criterion_4_inner_property),
        ("criterion_5_phi_golden", criterion_5_phi_golden),
        ("criterion_6_fir_certification", criterion_6_fir_certification),
        ("criterion_7_property_suites", criterion_7_property_suites),
        ("criterion_8_gamma_is_not_computed", criterion_8_gamma_is_not_computed),
    ];
    // the per-criterion panic message is redundant with the FAIL lines
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (name, run) in criteria {
        let ok = std::panic::catch_unwind(run).is_ok();
        println!("{} {name}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed.push(name);
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed.len(), criteria.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
