//! File formats: channel model JSON, action-distribution JSON, window-table
//! and Pareto CSV, plus fixed-precision number formatting.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::channel::{ChannelModel, ModelError};
use crate::filter::{parse_window_key, window_index, WindowTable};
use crate::region::{ActionDistribution, ParetoPoint, RegionWitness};

/// Significant digits of every float written by this crate.
pub const SIG_DIGITS: usize = 12;
/// Row-sum tolerance when reading an action distribution.
pub const DIST_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{what} file not found: {path}")]
    NotFound { what: &'static str, path: String },
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{}{field}: {message}", line.map(|l| format!("line {l}, ")).unwrap_or_default())]
    Field {
        field: String,
        line: Option<usize>,
        message: String,
    },
}

impl IoError {
    /// Whether the input itself is malformed (as opposed to missing).
    pub fn is_format(&self) -> bool {
        matches!(self, IoError::Syntax { .. } | IoError::Field { .. })
    }
}

/// Rounds to [`SIG_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Shortest decimal text of `round_sig(x)`.
pub fn fmt_float(x: f64) -> String {
    let r = round_sig(x);
    if r == 0.0 {
        // also folds -0
        return "0".into();
    }
    format!("{r}")
}

/// Rounds every number in a JSON tree.
pub fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                if let Some(f) = n.as_f64() {
                    if let Some(r) = serde_json::Number::from_f64(round_sig(f)) {
                        *n = r;
                    }
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON with floats rounded to [`SIG_DIGITS`].
pub fn to_json_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_json(&mut v);
    serde_json::to_string_pretty(&v)
}

fn read_file(path: &Path, what: &'static str) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            IoError::NotFound {
                what,
                path: path.display().to_string(),
            }
        } else {
            IoError::Read {
                path: path.display().to_string(),
                source: e,
            }
        }
    })
}

fn syntax(e: serde_json::Error) -> IoError {
    IoError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Line of the first occurrence of `"key"` in `text`, 1-based.
fn key_line(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

/// Line holding row `row` of the matrix stored under `key`, assuming the
/// common one-row-per-line layout; falls back to the key line.
fn row_line(text: &str, key: &str, row: usize) -> Option<usize> {
    let start = key_line(text, key)?;
    let mut depth = 0i32;
    let mut seen = 0usize;
    for (i, line) in text.lines().enumerate().skip(start - 1) {
        let from = if i + 1 == start {
            line.find(&format!("\"{key}\"")).map_or(0, |p| p + key.len() + 2)
        } else {
            0
        };
        for c in line[from..].chars() {
            match c {
                '[' => {
                    depth += 1;
                    if depth == 2 {
                        if seen == row {
                            return Some(i + 1);
                        }
                        seen += 1;
                    }
                }
                ']' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(start);
                    }
                }
                _ => {}
            }
        }
    }
    Some(start)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    states: usize,
    transition: Vec<Vec<f64>>,
    emission: Vec<Vec<f64>>,
    #[serde(default)]
    labels: Option<Vec<String>>,
}

#[derive(Serialize)]
struct ModelFileOut<'a> {
    states: usize,
    transition: &'a [Vec<f64>],
    emission: &'a [[f64; 4]],
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<&'a [String]>,
}

fn field_error(text: &str, field: &str, message: String) -> IoError {
    // "transition[2]" -> key "transition", row 2
    let (key, row) = match field.split_once('[') {
        Some((k, rest)) => (k, rest.trim_end_matches(']').parse::<usize>().ok()),
        None => (field, None),
    };
    let line = match row {
        Some(r) => row_line(text, key, r),
        None => key_line(text, key),
    };
    IoError::Field {
        field: field.to_string(),
        line,
        message,
    }
}

/// Parses and validates a channel model from JSON text.
pub fn parse_model(text: &str) -> Result<ChannelModel, IoError> {
    let file: ModelFile = serde_json::from_str(text).map_err(syntax)?;
    let n = file.states;
    if n == 0 {
        return Err(field_error(text, "states", "must be at least 1".into()));
    }
    if file.transition.len() != n {
        return Err(field_error(
            text,
            "transition",
            format!("expected {n} rows, found {}", file.transition.len()),
        ));
    }
    if file.emission.len() != n {
        return Err(field_error(
            text,
            "emission",
            format!("expected {n} rows, found {}", file.emission.len()),
        ));
    }
    let mut emission = Vec::with_capacity(n);
    for (i, row) in file.emission.iter().enumerate() {
        let row: [f64; 4] = row.as_slice().try_into().map_err(|_| {
            field_error(
                text,
                &format!("emission[{i}]"),
                format!("expected 4 entries (patterns 00, 01, 10, 11), found {}", row.len()),
            )
        })?;
        emission.push(row);
    }
    let to_io = |e: ModelError| match e {
        ModelError::Dimension { field, expected, found } => {
            field_error(text, &field, format!("expected {expected} entries, found {found}"))
        }
        ModelError::Invalid { field, message } => field_error(text, &field, message),
        other => field_error(text, "transition", other.to_string()),
    };
    let mut model = ChannelModel::checked(file.transition, emission).map_err(to_io)?;
    if let Some(labels) = file.labels {
        model = model.with_labels(labels).map_err(to_io)?;
    }
    Ok(model)
}

pub fn load_model(path: &Path) -> Result<ChannelModel, IoError> {
    parse_model(&read_file(path, "model")?)
}

pub fn model_to_json(model: &ChannelModel) -> String {
    let out = ModelFileOut {
        states: model.num_states(),
        transition: model.transition(),
        emission: model.emission(),
        labels: model.labels(),
    };
    to_json_string(&out).expect("model serializes")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DistFile {
    #[serde(rename = "L")]
    len: usize,
    /// window key -> probabilities of actions 1..5
    windows: BTreeMap<String, Vec<f64>>,
}

/// Reads `{"L": 2, "windows": {"00.01": [p1, .., p5], ..}}`. Every window
/// must be present and every row must be a probability vector.
pub fn parse_distribution(text: &str) -> Result<ActionDistribution, IoError> {
    let file: DistFile = serde_json::from_str(text).map_err(syntax)?;
    let windows = 1usize << (2 * file.len);
    let mut rows = vec![None; windows];
    for (key, row) in &file.windows {
        let field = || format!("windows.{key}");
        let bad = |message: String| IoError::Field {
            field: field(),
            line: key_line(text, key),
            message,
        };
        let pats = parse_window_key(key).map_err(|e| bad(e.to_string()))?;
        if pats.len() != file.len {
            return Err(bad(format!("key has {} patterns, expected {}", pats.len(), file.len)));
        }
        let row: [f64; 5] = row
            .as_slice()
            .try_into()
            .map_err(|_| bad(format!("expected 5 action probabilities, found {}", row.len())))?;
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(bad("probabilities must be finite and nonnegative".into()));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > DIST_TOL {
            return Err(bad(format!("probabilities sum to {sum}")));
        }
        rows[window_index(&pats)] = Some(row);
    }
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.ok_or_else(|| IoError::Field {
                field: "windows".into(),
                line: key_line(text, "windows"),
                message: format!("missing window {}", crate::filter::window_key(i, file.len)),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ActionDistribution { len: file.len, rows })
}

pub fn load_distribution(path: &Path) -> Result<ActionDistribution, IoError> {
    parse_distribution(&read_file(path, "distribution")?)
}

pub fn distribution_to_json(dist: &ActionDistribution) -> String {
    let windows = dist
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (crate::filter::window_key(i, dist.len), r.to_vec()))
        .collect();
    to_json_string(&DistFile { len: dist.len, windows }).expect("distribution serializes")
}

/// Witness dump: rates and `x`, `y` per window key.
pub fn witness_to_json(w: &RegionWitness) -> String {
    let windows: BTreeMap<String, [f64; 2]> = (0..w.x.len())
        .map(|i| (crate::filter::window_key(i, w.len), [w.x[i], w.y[i]]))
        .collect();
    let v = serde_json::json!({
        "L": w.len,
        "R1": w.r1,
        "R2": w.r2,
        "windows": windows,
    });
    to_json_string(&v).expect("witness serializes")
}

/// CSV with columns window, prob, eps1, eps2, eps12, eps_n12, eps1_n2.
pub fn window_table_csv(table: &WindowTable) -> String {
    let mut out = String::from("window,prob,eps1,eps2,eps12,eps_n12,eps1_n2\n");
    for (i, row) in table.rows.iter().enumerate() {
        let s = &row.stats;
        let cells = [row.prob, s.eps1, s.eps2, s.eps12, s.eps_n12, s.eps1_n2].map(fmt_float);
        out.push_str(&table.key(i));
        for c in cells {
            out.push(',');
            out.push_str(&c);
        }
        out.push('\n');
    }
    out
}

/// CSV with columns lambda, R1, R2, status.
pub fn pareto_csv(points: &[ParetoPoint]) -> String {
    let mut out = String::from("lambda,R1,R2,status\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},optimal\n",
            fmt_float(p.lambda),
            fmt_float(p.r1),
            fmt_float(p.r2)
        ));
    }
    out
}
