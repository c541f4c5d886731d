//! CSV and JSON renderings of the crate's results. Floats in CSV are written
//! with 17 significant digits; non-finite values are rejected everywhere.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

use crate::control::{Pulse, TransferReport};
use crate::error::{Error, Result};
use crate::fockmodel::{BasisIndex, LabeledOperator, ModelParams, BASIS_CONVENTION};
use crate::perturbation::PerturbationTable;
use crate::resonance::TransitionGraph;
use crate::spectral::{BranchFamily, Spectrum};

/// `x` in `{:.16e}` form, which round-trips every finite `f64`.
pub fn fmt_f64(x: f64) -> Result<String> {
    if x.is_finite() {
        Ok(format!("{x:.16e}"))
    } else {
        Err(Error::NonFinite(format!("{x}")))
    }
}

fn label_cells(label: Option<BasisIndex>) -> String {
    match label {
        Some(l) => format!("{},{}", l.n, l.s.sign() as i8),
        None => ",".to_string(),
    }
}

/// Serializes to pretty JSON, failing if any number is non-finite.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Serialize(e.to_string()))?;
    check_finite(&v, "$")?;
    serde_json::to_string_pretty(&v).map_err(|e| Error::Serialize(e.to_string()))
}

// serde_json maps NaN and infinities to null
fn check_finite(v: &Value, path: &str) -> Result<()> {
    match v {
        Value::Null => Err(Error::NonFinite(path.to_string())),
        Value::Array(a) => a
            .iter()
            .enumerate()
            .try_for_each(|(i, x)| check_finite(x, &format!("{path}[{i}]"))),
        Value::Object(m) => m.iter().try_for_each(|(k, x)| check_finite(x, &format!("{path}.{k}"))),
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct OperatorDoc<'a> {
    name: String,
    dim: usize,
    basis_convention: &'static str,
    params: &'a ModelParams,
    entries: Vec<f64>,
}

/// Header plus row-major entries.
pub fn operator_json(op: &LabeledOperator) -> Result<String> {
    let dim = op.dim();
    to_json(&OperatorDoc {
        name: serde_json::to_value(op.name)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        dim,
        basis_convention: BASIS_CONVENTION,
        params: &op.params,
        entries: (0..dim * dim).map(|t| op.entries[(t / dim, t % dim)]).collect(),
    })
}

/// `i,j,value` for every nonzero entry.
pub fn operator_csv(op: &LabeledOperator) -> Result<String> {
    let mut out = String::from("i,j,value\n");
    for i in 0..op.dim() {
        for j in 0..op.dim() {
            let x = op.entries[(i, j)];
            if x != 0.0 {
                writeln!(out, "{i},{j},{}", fmt_f64(x)?).unwrap();
            }
        }
    }
    Ok(out)
}

pub fn spectrum_csv(spectrum: &Spectrum) -> Result<String> {
    let mut out = String::from("index,label_n,label_s,eigenvalue\n");
    for (k, &e) in spectrum.eigenvalues.iter().enumerate() {
        writeln!(out, "{k},{},{}", label_cells(spectrum.label(k)), fmt_f64(e)?).unwrap();
    }
    Ok(out)
}

#[derive(Serialize)]
struct LevelRecord {
    index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<BasisIndex>,
    eigenvalue: f64,
    trusted: bool,
}

#[derive(Serialize)]
struct SpectrumDoc<'a> {
    params: &'a ModelParams,
    basis_convention: &'static str,
    trust_cutoff: usize,
    max_residual: f64,
    orthonormality_error: f64,
    levels: Vec<LevelRecord>,
}

pub fn spectrum_json(spectrum: &Spectrum, max_residual: f64) -> Result<String> {
    to_json(&SpectrumDoc {
        params: &spectrum.params,
        basis_convention: BASIS_CONVENTION,
        trust_cutoff: spectrum.trust_cutoff,
        max_residual,
        orthonormality_error: spectrum.orthonormality_error(),
        levels: spectrum
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(index, &eigenvalue)| LevelRecord {
                index,
                label: spectrum.label(index),
                eigenvalue,
                trusted: index < spectrum.trust_cutoff,
            })
            .collect(),
    })
}

/// Long format: one row per grid point and branch.
pub fn branches_csv(family: &BranchFamily) -> Result<String> {
    let mut out = String::from("g,label_n,label_s,eigenvalue\n");
    for (t, &g) in family.g_grid.iter().enumerate() {
        for b in &family.branches {
            writeln!(
                out,
                "{},{},{}",
                fmt_f64(g)?,
                label_cells(Some(b.label)),
                fmt_f64(b.eigenvalues[t])?
            )
            .unwrap();
        }
    }
    Ok(out)
}

pub fn perturbation_csv(rows: &[PerturbationTable]) -> Result<String> {
    let mut out = String::from("label_n,label_s");
    for k in 0..5 {
        write!(out, ",E{k}_closed").unwrap();
    }
    for k in 0..5 {
        write!(out, ",E{k}_fitted").unwrap();
    }
    out.push_str(",coupling_slope,coupling_slope_fd\n");
    for r in rows {
        out.push_str(&label_cells(Some(r.level)));
        for x in r.closed.iter().chain(r.fitted.iter()) {
            write!(out, ",{}", fmt_f64(*x)?).unwrap();
        }
        writeln!(out, ",{},{}", fmt_f64(r.coupling_slope)?, fmt_f64(r.coupling_slope_fd)?).unwrap();
    }
    Ok(out)
}

pub fn graph_edges_csv(graph: &TransitionGraph) -> Result<String> {
    let mut out = String::from("a_n,a_s,b_n,b_s,weight,non_resonant\n");
    for e in &graph.edges {
        writeln!(
            out,
            "{},{},{},{}",
            label_cells(Some(e.a)),
            label_cells(Some(e.b)),
            fmt_f64(e.weight)?,
            e.non_resonant
        )
        .unwrap();
    }
    Ok(out)
}

pub fn pulse_csv(pulse: &Pulse) -> Result<String> {
    let mut out = String::from("duration,amplitude\n");
    for s in pulse.segments() {
        writeln!(out, "{},{}", fmt_f64(s.duration)?, fmt_f64(s.amplitude)?).unwrap();
    }
    Ok(out)
}

/// `t` followed by one population column per tracked level.
pub fn populations_csv(report: &TransferReport) -> Result<String> {
    let mut out = String::from("t");
    for l in &report.tracked {
        write!(out, ",p_{}_{}", l.n, if l.s.sign() > 0.0 { "up" } else { "down" }).unwrap();
    }
    out.push('\n');
    for s in &report.populations {
        out.push_str(&fmt_f64(s.t)?);
        for p in &s.populations {
            write!(out, ",{}", fmt_f64(*p)?).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}
