//! Sectioned key/value job files.
//!
//! ```text
//! # comment
//! [plant]
//! numerator = 1 -2 3 @ 0 ; 0.2 0 @ 1
//! denominator = 1 0 0 1 @ 0 ; 1 @ 3/2
//!
//! [synthesis]
//! gamma = 1.5
//! E = num: 1 -0.5; den: 1 3
//! ```
//!
//! Keys are case-insensitive and may repeat (`term = ...` lines of a
//! delayed sum). Quasi-polynomials use the `coeffs @ delay ; ...` grammar;
//! rational functions are written `num: c...; den: c...`.

use std::str::FromStr;

use thiserror::Error;

use qpfact::lti::{DelaySum, LtiError, RationalFunction};
use qpfact::qpoly::QpolyError;
use qpfact::{Poly, QuasiPolynomial, RationalDelay};

#[derive(Debug, Error)]
pub enum JobError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("[{section}]: missing key `{key}`")]
    MissingKey { section: String, key: String },
    #[error("[{section}] {key}: {msg}")]
    Value { section: String, key: String, msg: String },
}

#[derive(Debug, Clone)]
pub struct Section {
    pub name: String,
    entries: Vec<(String, String)>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.entries.iter().filter(move |(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, JobError> {
        self.get(key).ok_or_else(|| JobError::MissingKey {
            section: self.name.clone(),
            key: key.to_string(),
        })
    }

    fn value_error(&self, key: &str, msg: impl ToString) -> JobError {
        JobError::Value {
            section: self.name.clone(),
            key: key.to_string(),
            msg: msg.to_string(),
        }
    }

    /// Parse an optional value with `FromStr`.
    pub fn parsed<T>(&self, key: &str) -> Result<Option<T>, JobError>
    where
        T: FromStr,
        T::Err: ToString,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| self.value_error(key, e)))
            .transpose()
    }

    pub fn qpoly(&self, key: &str) -> Result<QuasiPolynomial, JobError> {
        let v = self.require(key)?;
        v.parse().map_err(|e: QpolyError| self.value_error(key, e))
    }

    pub fn rational(&self, key: &str) -> Result<RationalFunction, JobError> {
        let v = self.require(key)?;
        parse_rational(v).map_err(|e| self.value_error(key, e))
    }

    pub fn optional_rational(&self, key: &str) -> Result<Option<RationalFunction>, JobError> {
        match self.get(key) {
            Some(_) => self.rational(key).map(Some),
            None => Ok(None),
        }
    }

    /// Every `term = num: ...; den: ... @ delay` line as one delayed sum.
    pub fn delay_sum(&self, key: &str) -> Result<DelaySum, JobError> {
        let mut terms = Vec::new();
        for v in self.all(key) {
            terms.push(parse_term(v).map_err(|e| self.value_error(key, e))?);
        }
        if terms.is_empty() {
            return Err(JobError::MissingKey {
                section: self.name.clone(),
                key: key.to_string(),
            });
        }
        DelaySum::new(terms).map_err(|e| self.value_error(key, e))
    }

    pub fn delay(&self, key: &str) -> Result<RationalDelay, JobError> {
        let v = self.require(key)?;
        v.parse().map_err(|e: qpfact::delay::DelayError| self.value_error(key, e))
    }
}

fn numbers(text: &str) -> Result<Vec<f64>, String> {
    text.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect()
}

/// `num: c...; den: c...` (highest degree first); `den` defaults to 1.
pub fn parse_rational(text: &str) -> Result<RationalFunction, String> {
    let mut num = None;
    let mut den = None;
    for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once(':')
            .ok_or_else(|| format!("expected `num:` or `den:` in `{part}`"))?;
        match k.trim().to_ascii_lowercase().as_str() {
            "num" => num = Some(numbers(v)?),
            "den" => den = Some(numbers(v)?),
            other => return Err(format!("unknown part `{other}`")),
        }
    }
    let num = num.ok_or("missing `num:`")?;
    let den = den.unwrap_or_else(|| vec![1.0]);
    RationalFunction::new(Poly::new(num), Poly::new(den)).map_err(|e: LtiError| e.to_string())
}

/// `num: ...; den: ... @ delay`.
pub fn parse_term(text: &str) -> Result<(RationalFunction, RationalDelay), String> {
    let (r, h) = match text.rsplit_once('@') {
        Some((r, h)) => (r, h.trim().parse().map_err(|e: qpfact::delay::DelayError| e.to_string())?),
        None => (text, RationalDelay::ZERO),
    };
    Ok((parse_rational(r)?, h))
}

#[derive(Debug, Clone)]
pub struct JobFile {
    pub sections: Vec<Section>,
}

impl JobFile {
    pub fn parse(text: &str) -> Result<JobFile, JobError> {
        let mut sections: Vec<Section> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.split('#').next().unwrap_or("").trim();
            if t.is_empty() {
                continue;
            }
            if let Some(rest) = t.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| JobError::Syntax {
                    line,
                    msg: format!("unterminated section header `{t}`"),
                })?;
                sections.push(Section {
                    name: name.trim().to_ascii_lowercase(),
                    entries: Vec::new(),
                });
                continue;
            }
            let (k, v) = t.split_once('=').ok_or_else(|| JobError::Syntax {
                line,
                msg: format!("expected `key = value`, got `{t}`"),
            })?;
            let section = sections.last_mut().ok_or_else(|| JobError::Syntax {
                line,
                msg: "key outside of any section".into(),
            })?;
            section.entries.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
        Ok(JobFile { sections })
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn all<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Section, JobError> {
        self.section(name).ok_or_else(|| JobError::MissingSection(name.to_string()))
    }
}
