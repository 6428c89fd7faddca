use std::fmt::Write;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use qpfact::controller::{
    assemble_controller, interpolating_f, verify_fixture, ControllerError, FirFixture, FixtureReport, SynthesisData,
};
use qpfact::factorization::{
    blaschke, classify_plant, factor_plant, log_grid, Admissibility, FactorError, PlantDescription,
};
use qpfact::lti::{impulse_response, linear_grid, DelaySum, LtiError, RationalFunction};
use qpfact::phi::{phi_decompose_unchecked, FirBlock, PhiError, PhiOptions};
use qpfact::qpoly::QpolyError;
use qpfact::report::sig;
use qpfact::rootfinder::{
    count_roots, finiteness_rhp, finiteness_rhp_conjugate, rhp_roots, Rectangle, RootError,
    Verdict,
};
use qpfact::{Poly, QuasiPolynomial};

use crate::job::{JobError, JobFile, Section};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Job(#[from] JobError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    Qpoly(#[from] QpolyError),
    #[error(transparent)]
    Phi(#[from] PhiError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Exit code for inputs that are well-formed but not admissible or undecided.
pub const EXIT_NOT_ADMISSIBLE: i32 = 2;
pub const EXIT_FAILURE: i32 = 1;

/// What a command produced: report text, the same content as JSON, CSV
/// files keyed by file-name suffix, warnings for stderr and an exit code.
#[derive(Debug, Default)]
pub struct Outcome {
    pub text: String,
    pub json: Value,
    pub files: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub code: i32,
}

struct Options {
    phi: PhiOptions,
    samples: usize,
    rect: Option<Rectangle>,
    fixture_tolerance: f64,
    fixture_horizon: f64,
    omegas: Vec<f64>,
}

fn options(job: &JobFile) -> Result<Options, JobError> {
    let mut o = Options {
        phi: PhiOptions::default(),
        samples: 401,
        rect: None,
        fixture_tolerance: 1e-2,
        fixture_horizon: 3.0,
        omegas: log_grid(1e-2, 1e3, 200),
    };
    let Some(s) = job.section("options") else {
        return Ok(o);
    };
    if let Some(v) = s.parsed("detection_tolerance")? {
        o.phi.detection_tolerance = v;
    }
    if let Some(v) = s.parsed("fir_tolerance")? {
        o.phi.fir_tolerance = v;
    }
    o.phi.horizon = s.parsed("horizon")?;
    if let Some(v) = s.parsed::<usize>("samples")? {
        o.samples = v.max(2);
    }
    if let Some(v) = s.parsed("fixture_tolerance")? {
        o.fixture_tolerance = v;
    }
    if let Some(v) = s.parsed("fixture_horizon")? {
        o.fixture_horizon = v;
    }
    if let Some(r) = s.get("rect") {
        let v: Vec<f64> = r.split_whitespace().filter_map(|t| t.parse().ok()).collect();
        if v.len() != 4 || v[0] >= v[1] || v[2] >= v[3] {
            return Err(JobError::Value {
                section: "options".into(),
                key: "rect".into(),
                msg: "expected `re_min re_max im_min im_max`".into(),
            });
        }
        o.rect = Some(Rectangle::new(v[0], v[1], v[2], v[3]));
    }
    if let Some(n) = s.parsed::<usize>("omega_points")? {
        let lo = s.parsed("omega_min")?.unwrap_or(1e-2);
        let hi = s.parsed("omega_max")?.unwrap_or(1e3);
        o.omegas = log_grid(lo, hi, n.max(2));
    }
    Ok(o)
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| sig(*x, 5)).collect::<Vec<_>>().join(", ")
}

fn fmt_root(z: Complex64) -> String {
    if z.im == 0.0 {
        sig(z.re, 6)
    } else if z.im > 0.0 {
        format!("{}+{}j", sig(z.re, 6), sig(z.im, 6))
    } else {
        format!("{}-{}j", sig(z.re, 6), sig(-z.im, 6))
    }
}

fn root_pairs(roots: &[Complex64]) -> Vec<[f64; 2]> {
    roots.iter().map(|z| [z.re, z.im]).collect()
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Debug, Serialize)]
struct QpAnalysis {
    label: String,
    expression: String,
    kind: String,
    asymptotic_polynomial: Vec<f64>,
    magnitudes: Vec<f64>,
    verdict: Verdict,
    conjugate_verdict: Verdict,
    rhp_roots: Option<Vec<[f64; 2]>>,
    conjugate_rhp_roots: Option<Vec<[f64; 2]>>,
    rectangle: Option<Rectangle>,
    rectangle_count: Option<usize>,
    summary: String,
}

fn asymptotic_coeffs(q: &QuasiPolynomial) -> Result<Vec<f64>, CliError> {
    if q.is_polynomial() {
        return Ok(Vec::new());
    }
    Ok(q.asymptotic_polynomial()?.to_poly().coeffs().to_vec())
}

fn analyze_qpoly(label: &str, q: &QuasiPolynomial, rect: Option<Rectangle>) -> Result<QpAnalysis, CliError> {
    let kind = q.classify();
    let asymptotic = asymptotic_coeffs(q)?;
    let direct = finiteness_rhp(q)?;
    let mut magnitudes = if q.is_polynomial() { Vec::new() } else { direct.witness.clone() };
    magnitudes.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1.0));
    let conj = finiteness_rhp_conjugate(q)?;
    let mut summary = vec![kind.to_string()];
    if !magnitudes.is_empty() {
        summary.push(format!("magnitudes {}", fmt_list(&magnitudes)));
    }
    summary.push(direct.verdict.to_string());
    let mut roots = None;
    let mut conj_roots = None;
    if direct.verdict == Verdict::Finite {
        let r = rhp_roots(q)?.roots.expanded();
        if !q.is_polynomial() || !r.is_empty() {
            summary.push(format!("{} C+ root{}", r.len(), if r.len() == 1 { "" } else { "s" }));
        }
        roots = Some(r);
    } else if conj.verdict == Verdict::Finite {
        let r = rhp_roots(&q.conjugate())?.roots.expanded();
        summary.push(format!("conjugate {}", conj.verdict));
        summary.push(format!("{} C+ root{} of conjugate", r.len(), if r.len() == 1 { "" } else { "s" }));
        conj_roots = Some(r);
    } else {
        summary.push(format!("conjugate {}", conj.verdict));
    }
    let rectangle_count = rect.map(|r| count_roots(q, &r)).transpose()?;
    Ok(QpAnalysis {
        label: label.to_string(),
        expression: q.serialize(),
        kind: kind.to_string(),
        asymptotic_polynomial: asymptotic,
        magnitudes,
        verdict: direct.verdict,
        conjugate_verdict: conj.verdict,
        rhp_roots: roots.as_deref().map(root_pairs),
        conjugate_rhp_roots: conj_roots.as_deref().map(root_pairs),
        rectangle: rect,
        rectangle_count,
        summary: summary.join("; "),
    })
}

fn analysis_text(a: &QpAnalysis, out: &mut String) {
    let _ = writeln!(out, "[{}] {}", a.label, a.expression);
    let _ = writeln!(out, "  kind: {}", a.kind);
    if !a.asymptotic_polynomial.is_empty() {
        let _ = writeln!(out, "  asymptotic polynomial: {}", Poly::new(a.asymptotic_polynomial.clone()));
        let _ = writeln!(out, "  root magnitudes: {}", fmt_list(&a.magnitudes));
    }
    let _ = writeln!(out, "  finiteness: {}", a.verdict);
    let _ = writeln!(out, "  conjugate finiteness: {}", a.conjugate_verdict);
    let show = |name: &str, rs: &Option<Vec<[f64; 2]>>, out: &mut String| {
        if let Some(rs) = rs {
            let list: Vec<String> = rs.iter().map(|r| fmt_root(Complex64::new(r[0], r[1]))).collect();
            let _ = writeln!(
                out,
                "  {name} ({}): {}",
                rs.len(),
                if list.is_empty() { "none".to_string() } else { list.join(", ") }
            );
        }
    };
    show("C+ roots", &a.rhp_roots, out);
    show("C+ roots of conjugate", &a.conjugate_rhp_roots, out);
    if let (Some(r), Some(n)) = (a.rectangle, a.rectangle_count) {
        let _ = writeln!(
            out,
            "  roots in [{}, {}] x [{}, {}]: {n}",
            r.re_min, r.re_max, r.im_min, r.im_max
        );
    }
    let _ = writeln!(out, "  summary: {}", a.summary);
}

pub fn analyze(job: &JobFile) -> Result<Outcome, CliError> {
    let opts = options(job)?;
    let plant = job.require("plant")?;
    let mut out = Outcome::default();
    let mut analyses = Vec::new();
    let mut text = String::new();
    if plant.get("q").is_some() {
        analyses.push(analyze_qpoly("q", &plant.qpoly("q")?, opts.rect)?);
    } else {
        analyses.push(analyze_qpoly("numerator", &plant.qpoly("numerator")?, opts.rect)?);
        analyses.push(analyze_qpoly("denominator", &plant.qpoly("denominator")?, opts.rect)?);
    }
    for a in &analyses {
        analysis_text(a, &mut text);
        if a.verdict == Verdict::Indeterminate {
            out.warnings.push(format!("{}: finiteness verdict is indeterminate", a.label));
            out.code = EXIT_NOT_ADMISSIBLE;
        }
    }
    let mut admissibility = Value::Null;
    if analyses.len() == 2 {
        let p = plant_description(plant)?;
        let class = classify_plant(&p)?;
        match &class.admissibility {
            Admissibility::Case(c) => {
                let _ = writeln!(text, "admissible: case {c}");
            }
            Admissibility::NotAdmissible { reason, .. } => {
                let _ = writeln!(text, "not admissible: {reason}");
                out.code = EXIT_NOT_ADMISSIBLE;
            }
        }
        shared_root_warning(&analyses, &mut out.warnings);
        admissibility = serde_json::to_value(&class.admissibility).unwrap_or(Value::Null);
    }
    out.text = text;
    out.json = json!({ "analyses": analyses, "admissibility": admissibility });
    Ok(out)
}

fn shared_root_warning(analyses: &[QpAnalysis], warnings: &mut Vec<String>) {
    let (Some(a), Some(b)) = (&analyses[0].rhp_roots, &analyses[1].rhp_roots) else {
        return;
    };
    for x in a {
        let zx = Complex64::new(x[0], x[1]);
        if b.iter().any(|y| (Complex64::new(y[0], y[1]) - zx).norm() <= 1e-6 * (1.0 + zx.norm())) {
            warnings.push(format!("numerator and denominator share the C+ root {}", fmt_root(zx)));
        }
    }
}

// ---------------------------------------------------------------------------
// factor

fn plant_description(plant: &Section) -> Result<PlantDescription, CliError> {
    Ok(PlantDescription::new(plant.qpoly("numerator")?, plant.qpoly("denominator")?)?)
}

/// Deterministic low-discrepancy points in `[-2, 2] x [-6, 6]`.
fn probe_points(n: usize) -> Vec<Complex64> {
    let (a, b) = (0.618_033_988_749_894_9, 0.754_877_666_246_692_8);
    (1..=n)
        .map(|k| {
            let k = k as f64;
            Complex64::new(-2.0 + 4.0 * (k * a).fract(), -6.0 + 12.0 * (k * b).fract())
        })
        .collect()
}

fn not_admissible(e: &FactorError) -> bool {
    matches!(e, FactorError::NotAdmissible(_) | FactorError::NotFinite { .. })
}

pub fn factor(job: &JobFile) -> Result<Outcome, CliError> {
    let opts = options(job)?;
    let p = plant_description(job.require("plant")?)?;
    let fp = match factor_plant(&p) {
        Ok(fp) => fp,
        Err(e) if not_admissible(&e) => {
            return Ok(Outcome {
                text: format!("not admissible: {e}\n"),
                json: json!({ "admissible": false, "reason": e.to_string() }),
                code: EXIT_NOT_ADMISSIBLE,
                ..Outcome::default()
            })
        }
        Err(e) => return Err(e.into()),
    };
    let report = fp.report();
    let residual = probe_points(64)
        .into_iter()
        .filter_map(|s| fp.reconstruction_residual(&p, &[s]).ok())
        .fold(0.0f64, f64::max);
    let (dn, dd) = fp.inner_deviation(&opts.omegas)?;
    let winding = fp.outer_winding()?;
    let mut text = report.text();
    let _ = writeln!(text, "reconstruction residual: {}", sig(residual, 3));
    let _ = writeln!(text, "inner deviation: m_n {}, m_d {}", sig(dn, 3), sig(dd, 3));
    let _ = writeln!(text, "outer winding: {} {}", winding.0, winding.1);
    let mut out = Outcome {
        text,
        json: json!({
            "factorization": report,
            "reconstruction_residual": residual,
            "inner_deviation": [dn, dd],
            "outer_winding": [winding.0, winding.1],
        }),
        ..Outcome::default()
    };
    if winding != (0, 0) {
        out.warnings.push("outer factor winds around the search box".into());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// phi

#[derive(Debug, Serialize)]
struct TermJson {
    delay: String,
    numerator: Vec<f64>,
    denominator: Vec<f64>,
}

fn terms_json(g: &DelaySum) -> Vec<TermJson> {
    g.terms()
        .iter()
        .map(|t| TermJson {
            delay: t.delay.to_string(),
            numerator: t.rational.numerator().coeffs().to_vec(),
            denominator: t.rational.denominator().coeffs().to_vec(),
        })
        .collect()
}

fn impulse_csv(block: &FirBlock, samples: usize) -> Result<String, LtiError> {
    let end = block.certification.support + block.certification.horizon;
    let grid = linear_grid(0.0, if end > 0.0 { end } else { 1.0 }, samples);
    Ok(impulse_response(&block.f, &grid)?.to_csv())
}

fn phi_inputs(s: &Section) -> Result<(DelaySum, RationalFunction), CliError> {
    let g = if s.get("term").is_some() {
        s.delay_sum("term")?
    } else {
        DelaySum::rational(s.rational("theta")?).mul_qpoly(&s.qpoly("q")?)?
    };
    let g0 = if s.get("g0").is_some() {
        s.rational("g0")?
    } else {
        let q = s.qpoly("g0_blaschke")?;
        blaschke(&rhp_roots(&q)?.roots)?.rational
    };
    Ok((g, g0))
}

pub fn phi(job: &JobFile) -> Result<Outcome, CliError> {
    let opts = options(job)?;
    let (g, g0) = phi_inputs(job.require("phi")?)?;
    let d = phi_decompose_unchecked(&g, &g0, &opts.phi)?;
    let mut text = String::new();
    let _ = writeln!(text, "G = {g}");
    let _ = writeln!(text, "G0 = {g0}");
    let zeros: Vec<String> = d.cancellation.points().into_iter().map(fmt_root).collect();
    let _ = writeln!(
        text,
        "common C+ zeros: {}",
        if zeros.is_empty() { "none".to_string() } else { zeros.join(", ") }
    );
    let _ = writeln!(text, "H = {}", d.h);
    let _ = writeln!(text, "F = {}", d.fir.f);
    let _ = writeln!(text, "division residual: {}", sig(d.division_residual, 3));
    let _ = writeln!(text, "-- FIR certification");
    text.push_str(&d.fir.certification.text());
    let mut out = Outcome {
        json: json!({
            "cancellation": d.cancellation,
            "h": terms_json(&d.h),
            "f": terms_json(&d.fir.f),
            "support": d.fir.support_end.to_string(),
            "division_residual": d.division_residual,
            "certification": d.fir.certification,
        }),
        files: vec![("_impulse.csv".into(), impulse_csv(&d.fir, opts.samples)?)],
        ..Outcome::default()
    };
    for z in &d.cancellation.unmatched {
        out.warnings.push(format!("C+ zero {} of G0 is not shared by G; H keeps it as a pole", fmt_root(*z)));
    }
    if !d.fir.certification.pass {
        out.warnings.push("F is not certified FIR".into());
        out.code = EXIT_FAILURE;
    }
    out.text = text;
    Ok(out)
}

// ---------------------------------------------------------------------------
// controller

fn fixture(s: &Section) -> Result<FirFixture, CliError> {
    Ok(FirFixture {
        name: s.get("name").unwrap_or("fixture").to_string(),
        f: s.delay_sum("term")?,
        support: s.delay("support")?,
    })
}

fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    s.split('_').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("_")
}

fn synthesis(s: &Section, fp: &qpfact::factorization::FactoredPlant) -> Result<SynthesisData, CliError> {
    let gamma: f64 = s.parsed("gamma")?.ok_or_else(|| JobError::MissingKey {
        section: "synthesis".into(),
        key: "gamma".into(),
    })?;
    let e = s.rational("e")?;
    let l = s.rational("l")?;
    let f = match s.get("f_interpolate") {
        Some(q) => {
            let q: Vec<f64> = q.split_whitespace().filter_map(|t| t.parse().ok()).collect();
            interpolating_f(fp, &e, &l, &Poly::new(q))?
        }
        None => s.rational("f")?,
    };
    Ok(SynthesisData::new(gamma, e, f, l)?)
}

pub fn controller(job: &JobFile) -> Result<Outcome, CliError> {
    let opts = options(job)?;
    let fixtures: Vec<FirFixture> = job.all("fixture").map(fixture).collect::<Result<_, _>>()?;
    if job.section("synthesis").is_none() && fixtures.is_empty() {
        return Err(JobError::MissingSection("synthesis".into()).into());
    }
    let mut out = Outcome::default();
    let mut text = String::new();
    let mut json = serde_json::Map::new();

    if let Some(s) = job.section("synthesis") {
        let p = plant_description(job.require("plant")?)?;
        let fp = match factor_plant(&p) {
            Ok(fp) => fp,
            Err(e) if not_admissible(&e) => {
                return Ok(Outcome {
                    text: format!("not admissible: {e}\n"),
                    json: json!({ "admissible": false, "reason": e.to_string() }),
                    code: EXIT_NOT_ADMISSIBLE,
                    ..Outcome::default()
                })
            }
            Err(e) => return Err(e.into()),
        };
        let sd = synthesis(s, &fp)?;
        if let Some(w) = job.section("weights") {
            let _ = writeln!(text, "W1 = {}", w.rational("w1")?);
            if let Some(w2) = w.optional_rational("w2")? {
                let _ = writeln!(text, "W2 = {w2}");
            }
        }
        let cf = match assemble_controller(&fp, &sd, &opts.phi) {
            Ok(cf) => cf,
            Err(ControllerError::NotFir { block, certification }) => {
                let _ = writeln!(text, "{block} is not FIR");
                text.push_str(&certification.text());
                out.warnings
                    .push(format!("{block} failed FIR certification: synthesis data violate interpolation conditions?"));
                out.text = text;
                out.json = json!({ "not_fir": block, "certification": certification });
                out.code = EXIT_FAILURE;
                return Ok(out);
            }
            Err(e) => return Err(e.into()),
        };
        text.push_str(&cf.text());
        let residual = cf.equivalence_residual(&fp, &sd, &probe_points(64).into_iter().filter(|s| s.re < 0.0).collect::<Vec<_>>())?;
        let _ = writeln!(text, "equivalence residual: {}", sig(residual, 3));
        for z in &cf.unmatched {
            out.warnings.push(format!("unstable divisor zero {} not cancelled", fmt_root(*z)));
        }
        out.files.push(("_fn.csv".into(), impulse_csv(&cf.f_n, opts.samples)?));
        out.files.push(("_fd.csv".into(), impulse_csv(&cf.f_d, opts.samples)?));
        out.files.push(("_freq.csv".into(), cf.frequency_csv(&opts.omegas)?));
        json.insert("controller".into(), serde_json::to_value(cf.export()).unwrap_or(Value::Null));
        json.insert("equivalence_residual".into(), json!(residual));
    }

    if !fixtures.is_empty() {
        let _ = writeln!(
            text,
            "-- printed FIR blocks (tolerance {}, horizon {})",
            sig(opts.fixture_tolerance, 3),
            sig(opts.fixture_horizon, 3)
        );
        let mut reports: Vec<FixtureReport> = Vec::new();
        for f in &fixtures {
            let r = verify_fixture(f, opts.fixture_tolerance, opts.fixture_horizon)?;
            let _ = writeln!(text, "{}", r.line());
            let end = f.support.value() + opts.fixture_horizon;
            let grid = linear_grid(0.0, end, opts.samples);
            out.files
                .push((format!("_{}_impulse.csv", slug(&f.name)), impulse_response(&f.f, &grid)?.to_csv()));
            if !r.pass {
                out.code = EXIT_FAILURE;
            }
            reports.push(r);
        }
        json.insert("fixtures".into(), serde_json::to_value(&reports).unwrap_or(Value::Null));
    }
    out.text = text;
    out.json = Value::Object(json);
    Ok(out)
}
