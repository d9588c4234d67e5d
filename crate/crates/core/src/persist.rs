//! Model files.
//!
//! A model is stored as versioned line-oriented text:
//!
//! ```text
//! kfml-model 1
//! n 60
//! p 9
//! d 5
//! eps 1e-7
//! kernel single rbf 2.5
//! eigvals <p values>
//! coefficients
//! <n rows of p values>
//! features
//! <n rows of d values>
//! ```
//!
//! Reals use the shortest decimal form that parses back to the same `f64`,
//! so a save/load cycle is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::dataset::FeatureRows;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::kfda::{KernelConfig, KfdaModel};
use crate::mkl::{MklConfig, MklVariant};

const MAGIC: &str = "kfml-model";
const VERSION: u32 = 1;

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        let _ = write!(out, "{v:?}");
        first = false;
    }
    out.push('\n');
}

pub fn model_to_string(model: &KfdaModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "n {}", model.n());
    let _ = writeln!(out, "p {}", model.p());
    let _ = writeln!(out, "d {}", model.dim());
    let _ = writeln!(out, "eps {:?}", model.eps());
    let _ = writeln!(out, "kernel {}", model.kernel());
    out.push_str("eigvals ");
    push_row(&mut out, model.eigvals().iter().copied());
    out.push_str("coefficients\n");
    for row in model.coefficients().row_iter() {
        push_row(&mut out, row.iter().copied());
    }
    out.push_str("features\n");
    for row in model.train_features().rows() {
        push_row(&mut out, row.iter().copied());
    }
    out
}

pub fn save_model(model: &KfdaModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<KfdaModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    row: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, line)) => {
                self.row = i + 1;
                Ok(line)
            }
            None => Err(Error::Parse {
                row: self.row + 1,
                message: "unexpected end of model file".into(),
            }),
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            row: self.row,
            message: message.into(),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next()?;
        match line.strip_prefix(key).and_then(|r| r.strip_prefix(' ')) {
            Some(rest) => Ok(rest.trim()),
            None if line == key => Ok(""),
            None => Err(self.err(format!("expected `{key}`"))),
        }
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let v = self.keyed(key)?;
        v.parse().map_err(|_| self.err(format!("bad {key} `{v}`")))
    }

    fn reals(&self, text: &str, expected: usize) -> Result<Vec<f64>> {
        let vals = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(format!("bad number `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != expected {
            return Err(self.err(format!("expected {expected} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    fn block(&mut self, key: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
        if !self.keyed(key)?.is_empty() {
            return Err(self.err(format!("`{key}` takes no value")));
        }
        let mut out = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = self.next()?;
            out.extend(self.reals(line, cols)?);
        }
        Ok(out)
    }
}

pub fn parse_model(text: &str) -> Result<KfdaModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        row: 0,
    };
    let version = lines.keyed(MAGIC)?;
    if version != VERSION.to_string() {
        return Err(lines.err(format!("unsupported model version `{version}`")));
    }
    let n = lines.count("n")?;
    let p = lines.count("p")?;
    let d = lines.count("d")?;
    let eps_text = lines.keyed("eps")?;
    let eps: f64 = eps_text
        .parse()
        .map_err(|_| lines.err(format!("bad eps `{eps_text}`")))?;
    let kernel_text = lines.keyed("kernel")?;
    let kernel = parse_kernel_config(kernel_text).map_err(|e| lines.err(e.to_string()))?;
    let eig_text = lines.keyed("eigvals")?;
    let eigvals = lines.reals(eig_text, p)?;
    let coefficients = DMatrix::from_row_slice(n, p, &lines.block("coefficients", n, p)?);
    let features = FeatureRows::new(lines.block("features", n, d)?, d)?;
    if let Some((i, extra)) = lines.inner.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::Parse {
            row: i + 1,
            message: format!("trailing content `{extra}`"),
        });
    }
    KfdaModel::from_parts(coefficients, eigvals, features, kernel, eps)
}

/// Inverse of the `Display` form of [`KernelConfig`].
pub fn parse_kernel_config(s: &str) -> Result<KernelConfig> {
    if let Some(spec) = s.strip_prefix("single ") {
        return Ok(KernelConfig::Single(spec.parse()?));
    }
    let bad = || Error::invalid(format!("unrecognised kernel configuration `{s}`"));
    let (head, kernels) = s.split_once(" kernels=").ok_or_else(bad)?;
    let bank_specs = kernels
        .split(';')
        .map(str::parse::<KernelSpec>)
        .collect::<Result<Vec<_>>>()?;
    let fields: Vec<&str> = head.split_whitespace().collect();
    fn value<'a>(f: &'a str, key: &str) -> Option<&'a str> {
        f.strip_prefix(key)
    }
    let real = |t: &str| t.parse::<f64>().map_err(|_| bad());
    let variant = match fields.as_slice() {
        ["np", n, w] => MklVariant::Np {
            n: value(n, "n=").ok_or_else(bad)?.parse().map_err(|_| bad())?,
            weights: value(w, "weights=").ok_or_else(bad)?.split(',').map(real).collect::<Result<_>>()?,
        },
        ["sm", pair, tau] => {
            let (a, b) = value(pair, "pair=").ok_or_else(bad)?.split_once(',').ok_or_else(bad)?;
            MklVariant::Sm {
                pair: (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?),
                tau: real(value(tau, "tau=").ok_or_else(bad)?)?,
            }
        }
        _ => return Err(bad()),
    };
    let cfg = MklConfig { variant, bank_specs };
    cfg.validate()?;
    Ok(KernelConfig::Mkl(cfg))
}
