//! Mesh files, trace CSV and event logs.
//!
//! Mesh JSON: `{"vertices": N, "faces": [[i,j,k], ...], "edge_lengths":
//! {"i-j": length, ...}}`. Without `edge_lengths` every edge has length 1;
//! when the key is present it must cover every edge. OFF input supplies the
//! faces only (vertex coordinates are skipped) and takes lengths from a
//! separate `i j length` file.
//!
//! Reals are written with 17 significant digits so that files round-trip
//! bit for bit.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::flow::{FlowEvent, TraceSample};
use crate::mesh::{MeshError, Triangulation};
use crate::metric::{MetricError, PLMetric};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {msg}")]
    Syntax { line: usize, column: usize, msg: String },
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("field `{field}`: {msg}")]
    Field { field: String, msg: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

fn field(field: impl Into<String>, msg: impl Into<String>) -> IoError {
    IoError::Field {
        field: field.into(),
        msg: msg.into(),
    }
}

fn line_err(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Line { line, msg: msg.into() }
}

/// Formats a real with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshData {
    pub triangulation: Triangulation,
    pub metric: PLMetric,
}

fn index(v: &Value, name: &str) -> Result<usize, IoError> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| field(name, format!("expected a non-negative integer, found {v}")))
}

pub fn parse_mesh_json(text: &str) -> Result<MeshData, IoError> {
    let root: Value = serde_json::from_str(text).map_err(|e| IoError::Syntax {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    let obj = root.as_object().ok_or_else(|| field("<root>", "expected an object"))?;
    let n = index(
        obj.get("vertices").ok_or_else(|| field("vertices", "missing"))?,
        "vertices",
    )?;
    let faces_v = obj
        .get("faces")
        .and_then(Value::as_array)
        .ok_or_else(|| field("faces", "missing or not an array"))?;
    let mut faces = Vec::with_capacity(faces_v.len());
    for (f, fv) in faces_v.iter().enumerate() {
        let name = format!("faces[{f}]");
        let arr = fv
            .as_array()
            .filter(|a| a.len() == 3)
            .ok_or_else(|| field(&name, "expected three vertex indices"))?;
        let mut face = [0; 3];
        for (r, x) in arr.iter().enumerate() {
            face[r] = index(x, &format!("{name}[{r}]"))?;
        }
        faces.push(face);
    }
    let tri = Triangulation::new(n, &faces)?;
    let lengths = match obj.get("edge_lengths") {
        None => vec![1.0; tri.n_edges()],
        Some(v) => {
            let map = v
                .as_object()
                .ok_or_else(|| field("edge_lengths", "expected an object"))?;
            let mut lengths = vec![f64::NAN; tri.n_edges()];
            for (key, val) in map {
                let name = format!("edge_lengths.{key}");
                let (a, b) = key
                    .split_once('-')
                    .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
                    .ok_or_else(|| field(&name, "key must look like \"i-j\""))?;
                let e = tri
                    .edge_id(a, b)
                    .ok_or_else(|| field(&name, format!("({a}, {b}) is not an edge")))?;
                let l = val.as_f64().ok_or_else(|| field(&name, "expected a number"))?;
                if !lengths[e].is_nan() {
                    return Err(field(&name, "edge given twice"));
                }
                lengths[e] = l;
            }
            if let Some(e) = lengths.iter().position(|l| l.is_nan()) {
                let [a, b] = tri.edges()[e];
                return Err(field("edge_lengths", format!("no length for edge {a}-{b}")));
            }
            lengths
        }
    };
    let metric = PLMetric::new(&tri, lengths)?;
    Ok(MeshData {
        triangulation: tri,
        metric,
    })
}

pub fn mesh_to_json(tri: &Triangulation, metric: &PLMetric) -> String {
    let mut s = format!("{{\n  \"vertices\": {},\n  \"faces\": [", tri.n_vertices());
    for (f, [a, b, c]) in tri.faces().iter().enumerate() {
        let sep = if f == 0 { "" } else { "," };
        write!(s, "{sep}\n    [{a}, {b}, {c}]").unwrap();
    }
    s.push_str("\n  ],\n  \"edge_lengths\": {");
    for (e, [a, b]) in tri.edges().iter().enumerate() {
        let sep = if e == 0 { "" } else { "," };
        write!(s, "{sep}\n    \"{a}-{b}\": {}", fmt_real(metric.length(e))).unwrap();
    }
    s.push_str("\n  }\n}\n");
    s
}

/// Lines with comments (`#`) stripped, numbered from 1, blanks skipped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Faces of an OFF file; vertex coordinates are read past and ignored.
pub fn parse_off(text: &str) -> Result<Triangulation, IoError> {
    let mut lines = content_lines(text);
    let (l0, head) = lines.next().ok_or_else(|| line_err(1, "empty file"))?;
    let mut counts_line = (l0, head);
    if let Some(rest) = head.strip_prefix("OFF") {
        let rest = rest.trim();
        counts_line = if rest.is_empty() {
            lines.next().ok_or_else(|| line_err(l0 + 1, "missing counts line"))?
        } else {
            (l0, rest)
        };
    }
    let (lc, counts) = counts_line;
    let nums: Vec<usize> = counts
        .split_whitespace()
        .map(|x| x.parse().map_err(|_| line_err(lc, format!("bad count `{x}`"))))
        .collect::<Result<_, _>>()?;
    if nums.len() < 2 {
        return Err(line_err(lc, "expected vertex and face counts"));
    }
    let (nv, nf) = (nums[0], nums[1]);
    for k in 0..nv {
        lines
            .next()
            .ok_or_else(|| line_err(lc + k + 1, format!("file ends after {k} of {nv} vertices")))?;
    }
    let mut faces = Vec::with_capacity(nf);
    for k in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| line_err(0, format!("file ends after {k} of {nf} faces")))?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| line_err(ln, format!("bad index `{x}`"))))
            .collect::<Result<_, _>>()?;
        if idx.len() < 4 || idx[0] != 3 {
            return Err(line_err(ln, "expected a triangle `3 i j k`"));
        }
        faces.push([idx[1], idx[2], idx[3]]);
    }
    Ok(Triangulation::new(nv, &faces)?)
}

/// Lengths file: one `i j length` line per edge.
pub fn parse_lengths(text: &str, tri: &Triangulation) -> Result<PLMetric, IoError> {
    let mut lengths = vec![f64::NAN; tri.n_edges()];
    let mut first_line: HashMap<usize, usize> = HashMap::new();
    for (ln, l) in content_lines(text) {
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(line_err(ln, "expected `i j length`"));
        }
        let a: usize = parts[0]
            .parse()
            .map_err(|_| line_err(ln, format!("bad vertex `{}`", parts[0])))?;
        let b: usize = parts[1]
            .parse()
            .map_err(|_| line_err(ln, format!("bad vertex `{}`", parts[1])))?;
        let x: f64 = parts[2]
            .parse()
            .map_err(|_| line_err(ln, format!("bad length `{}`", parts[2])))?;
        let e = tri
            .edge_id(a, b)
            .ok_or_else(|| line_err(ln, format!("({a}, {b}) is not an edge")))?;
        if let Some(prev) = first_line.insert(e, ln) {
            return Err(line_err(ln, format!("edge {a}-{b} already given on line {prev}")));
        }
        lengths[e] = x;
    }
    if let Some(e) = lengths.iter().position(|l| l.is_nan()) {
        let [a, b] = tri.edges()[e];
        return Err(line_err(0, format!("no length for edge {a}-{b}")));
    }
    Ok(PLMetric::new(tri, lengths)?)
}

pub fn lengths_to_text(tri: &Triangulation, metric: &PLMetric) -> String {
    let mut s = String::new();
    for (e, [a, b]) in tri.edges().iter().enumerate() {
        writeln!(s, "{a} {b} {}", fmt_real(metric.length(e))).unwrap();
    }
    s
}

pub fn off_to_text(tri: &Triangulation) -> String {
    let mut s = format!("OFF\n{} {} {}\n", tri.n_vertices(), tri.n_faces(), tri.n_edges());
    for _ in 0..tri.n_vertices() {
        s.push_str("0 0 0\n");
    }
    for [a, b, c] in tri.faces() {
        writeln!(s, "3 {a} {b} {c}").unwrap();
    }
    s
}

fn read(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a JSON mesh, or an OFF mesh (by extension) with a lengths file.
/// A lengths file given with a JSON mesh overrides its lengths.
pub fn read_mesh(path: &Path, lengths: Option<&Path>) -> Result<MeshData, IoError> {
    let text = read(path)?;
    let is_off = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("off"));
    let tri = if is_off {
        parse_off(&text)?
    } else {
        let m = parse_mesh_json(&text)?;
        if lengths.is_none() {
            return Ok(m);
        }
        m.triangulation
    };
    let metric = match lengths {
        Some(p) => parse_lengths(&read(p)?, &tri)?,
        None => PLMetric::uniform(&tri, 1.0),
    };
    Ok(MeshData {
        triangulation: tri,
        metric,
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    std::fs::write(path, contents).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// `t,w_0..w_{N-1},K_0..K_{N-1},G,F`.
pub fn trace_header(n: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((0..n).map(|i| format!("w_{i}")));
    cols.extend((0..n).map(|i| format!("K_{i}")));
    cols.push("G".into());
    cols.push("F".into());
    cols.join(",")
}

pub fn write_trace<W: Write>(out: &mut W, n: usize, samples: &[TraceSample]) -> std::io::Result<()> {
    writeln!(out, "{}", trace_header(n))?;
    for s in samples {
        let mut row = vec![fmt_real(s.t)];
        row.extend(s.w.iter().map(|&x| fmt_real(x)));
        row.extend(s.k.iter().map(|&x| fmt_real(x)));
        row.push(fmt_real(s.g));
        row.push(fmt_real(s.f));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// One JSON object per line.
pub fn write_events<W: Write>(out: &mut W, events: &[FlowEvent]) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut *out, e)?;
        writeln!(out)?;
    }
    Ok(())
}
