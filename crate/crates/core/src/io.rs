//! CSV and JSON files: prediction matrices, aggregated labels, second-order
//! matrices, experiment tables. Every writer replaces its target atomically.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::secondorder::{SecondOrderMatrix, Source};
use crate::simulate::{GapCurve, Table2};
use crate::types::{Label, LabelSpace, PredictionMatrix};

const AGENT_PREFIX: &str = "agent_";

/// Options for [`read_predictions`].
#[derive(Debug, Clone, Default)]
pub struct ReadOptions {
    /// Fixed label set, in canonical order. Otherwise the labels seen in the
    /// file are used, in natural order (`s2` before `s10`).
    pub labels: Option<Vec<String>>,
    /// Skip questions with an empty answer instead of failing.
    pub drop_incomplete: bool,
    /// Keep only these agents, in this order (names without the prefix).
    pub agents: Option<Vec<String>>,
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn csv_bytes(rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
        _ => Error::format(line, e.to_string()),
    }
}

/// Order strings with embedded integers numerically.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn chunks(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for i in 1..=bytes.len() {
            if i == bytes.len() || bytes[i].is_ascii_digit() != bytes[start].is_ascii_digit() {
                out.push((bytes[start].is_ascii_digit(), &s[start..i]));
                start = i;
            }
        }
        out
    }
    let (ca, cb) = (chunks(a), chunks(b));
    for ((da, sa), (db, sb)) in ca.iter().zip(&cb) {
        let ord = if *da && *db {
            let (ta, tb) = (sa.trim_start_matches('0'), sb.trim_start_matches('0'));
            ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb))
        } else {
            sa.cmp(sb)
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    ca.len().cmp(&cb.len()).then_with(|| a.cmp(b))
}

pub fn read_predictions(path: &Path, opts: &ReadOptions) -> Result<PredictionMatrix> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_predictions(file, opts)
}

pub fn parse_predictions<R: std::io::Read>(
    input: R,
    opts: &ReadOptions,
) -> Result<PredictionMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = reader.headers().map_err(csv_error)?.clone();
    if header.get(0).map(str::trim) != Some("question_id") {
        return Err(Error::format(1, "first column must be question_id"));
    }
    let mut agent_cols = Vec::new();
    let mut truth_col = None;
    for (c, name) in header.iter().enumerate().skip(1) {
        let name = name.trim();
        if let Some(agent) = name.strip_prefix(AGENT_PREFIX) {
            if agent.is_empty() {
                return Err(Error::format(
                    1,
                    format!("column {} has an empty agent name", c + 1),
                ));
            }
            if agent_cols.iter().any(|(_, a): &(usize, String)| a == agent) {
                return Err(Error::format(1, format!("duplicate agent {agent:?}")));
            }
            agent_cols.push((c, agent.to_string()));
        } else if name == "truth" && truth_col.is_none() {
            truth_col = Some(c);
        } else {
            return Err(Error::format(1, format!("unexpected column {name:?}")));
        }
    }
    if let Some(wanted) = &opts.agents {
        let mut picked = Vec::with_capacity(wanted.len());
        for w in wanted {
            match agent_cols.iter().find(|(_, a)| a == w) {
                Some(col) => picked.push(col.clone()),
                None => return Err(Error::Input(format!("agent {w:?} not in file"))),
            }
        }
        agent_cols = picked;
    }
    if agent_cols.is_empty() {
        return Err(Error::format(1, "no agent columns"));
    }

    let mut ids = Vec::new();
    let mut cells: Vec<String> = Vec::new();
    let mut truth_cells = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let answers: Vec<&str> = agent_cols
            .iter()
            .map(|(c, _)| record.get(*c).unwrap_or("").trim())
            .collect();
        let truth = truth_col.map(|c| record.get(c).unwrap_or("").trim());
        if answers.iter().any(|a| a.is_empty()) || truth == Some("") {
            if opts.drop_incomplete {
                continue;
            }
            return Err(Error::format(
                line,
                "missing answer (use drop-incomplete to skip such rows)",
            ));
        }
        ids.push(record.get(0).unwrap_or("").trim().to_string());
        cells.extend(answers.into_iter().map(String::from));
        if let Some(t) = truth {
            truth_cells.push((line, t.to_string()));
        }
    }

    let space = match &opts.labels {
        Some(labels) => LabelSpace::new(labels.iter().cloned())?,
        None => {
            let seen: BTreeSet<&str> = cells
                .iter()
                .map(String::as_str)
                .chain(truth_cells.iter().map(|t| t.1.as_str()))
                .collect();
            let mut labels: Vec<&str> = seen.into_iter().collect();
            labels.sort_by(|a, b| natural_cmp(a, b));
            if labels.len() < 2 {
                return Err(Error::Input(
                    "fewer than 2 distinct labels in the file; pass the label set explicitly"
                        .into(),
                ));
            }
            LabelSpace::new(labels)?
        }
    };
    let index: HashMap<&str, Label> = space
        .labels()
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let n = agent_cols.len();
    let mut answers = Vec::with_capacity(cells.len());
    for (pos, cell) in cells.iter().enumerate() {
        match index.get(cell.as_str()) {
            Some(&l) => answers.push(l),
            None => {
                return Err(Error::format(
                    pos / n + 2,
                    format!("label {cell:?} not in the label set"),
                ));
            }
        }
    }
    let truth = if truth_col.is_some() {
        let mut t = Vec::with_capacity(truth_cells.len());
        for (line, cell) in &truth_cells {
            t.push(*index.get(cell.as_str()).ok_or_else(|| {
                Error::format(*line, format!("truth {cell:?} not in the label set"))
            })?);
        }
        Some(t)
    } else {
        None
    };
    let agents = agent_cols.into_iter().map(|(_, a)| a).collect();
    PredictionMatrix::from_flat(space, agents, Some(ids), answers, truth)
}

pub fn predictions_to_csv(pm: &PredictionMatrix) -> Result<Vec<u8>> {
    let space = pm.space();
    let mut header = vec!["question_id".to_string()];
    header.extend(pm.agents().iter().map(|a| format!("{AGENT_PREFIX}{a}")));
    if pm.truth().is_some() {
        header.push("truth".into());
    }
    let rows = (0..pm.m()).map(|q| {
        let mut row = vec![pm.question_id(q)];
        row.extend(pm.row(q).iter().map(|&a| space.name(a).to_string()));
        if let Some(t) = pm.truth() {
            row.push(space.name(t[q]).to_string());
        }
        row
    });
    csv_bytes(std::iter::once(header).chain(rows))
}

pub fn write_predictions(path: &Path, pm: &PredictionMatrix) -> Result<()> {
    write_atomic(path, &predictions_to_csv(pm)?)
}

/// `question_id,label` with label names.
pub fn write_labels(path: &Path, pm: &PredictionMatrix, labels: &[Label]) -> Result<()> {
    if labels.len() != pm.m() {
        return Err(Error::dim(
            "label vector vs questions",
            pm.m(),
            labels.len(),
        ));
    }
    let header = vec!["question_id".to_string(), "label".to_string()];
    let rows = labels
        .iter()
        .enumerate()
        .map(|(q, &l)| vec![pm.question_id(q), pm.space().name(l).to_string()]);
    write_atomic(path, &csv_bytes(std::iter::once(header).chain(rows))?)
}

/// Read back `question_id,label` pairs.
pub fn read_labels(path: &Path) -> Result<Vec<(String, String)>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_error)?;
    reader
        .records()
        .map(|r| {
            let r = r.map_err(csv_error)?;
            Ok((
                r.get(0).unwrap_or("").to_string(),
                r.get(1).unwrap_or("").to_string(),
            ))
        })
        .collect()
}

/// `i,j,k,l,prob,imputed`, one row per cell; `prob` printed in shortest
/// round-trip form.
pub fn second_order_to_csv(so: &SecondOrderMatrix) -> Result<Vec<u8>> {
    let header = ["i", "j", "k", "l", "prob", "imputed"]
        .map(String::from)
        .to_vec();
    let rows = so.cells().map(|(i, j, s, t, p, imp)| {
        vec![
            i.to_string(),
            j.to_string(),
            s.to_string(),
            t.to_string(),
            p.to_string(),
            imp.to_string(),
        ]
    });
    csv_bytes(std::iter::once(header).chain(rows))
}

pub fn write_second_order(path: &Path, so: &SecondOrderMatrix) -> Result<()> {
    write_atomic(path, &second_order_to_csv(so)?)
}

pub fn parse_second_order<R: std::io::Read>(input: R) -> Result<SecondOrderMatrix> {
    let mut reader = csv::Reader::from_reader(input);
    let mut cells = Vec::new();
    for record in reader.records() {
        let r = record.map_err(csv_error)?;
        let line = r.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize| {
            r.get(c)
                .ok_or_else(|| Error::format(line, "too few columns"))
        };
        let idx = |c: usize| -> Result<usize> {
            field(c)?
                .trim()
                .parse()
                .map_err(|e| Error::format(line, format!("column {}: {e}", c + 1)))
        };
        let prob: f64 = field(4)?
            .trim()
            .parse()
            .map_err(|e| Error::format(line, format!("prob: {e}")))?;
        let imputed: bool = field(5)?
            .trim()
            .parse()
            .map_err(|e| Error::format(line, format!("imputed: {e}")))?;
        cells.push(([idx(0)?, idx(1)?, idx(2)?, idx(3)?], prob, imputed));
    }
    let n = cells
        .iter()
        .map(|c| c.0[0].max(c.0[1]) + 1)
        .max()
        .unwrap_or(0);
    let k = cells
        .iter()
        .map(|c| c.0[2].max(c.0[3]) + 1)
        .max()
        .unwrap_or(0);
    if cells.len() != n * n * k * k {
        return Err(Error::dim(
            "second-order cell count",
            n * n * k * k,
            cells.len(),
        ));
    }
    let mut probs = vec![f64::NAN; cells.len()];
    let mut imputed = vec![false; cells.len()];
    for ([i, j, s, t], p, imp) in cells {
        let at = ((i * n + j) * k + s) * k + t;
        if !probs[at].is_nan() {
            return Err(Error::Input(format!("duplicate cell ({i}, {j}, {s}, {t})")));
        }
        probs[at] = p;
        imputed[at] = imp;
    }
    SecondOrderMatrix::from_parts(n, k, probs, imputed, Source::Imported)
}

pub fn read_second_order(path: &Path) -> Result<SecondOrderMatrix> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_second_order(file)
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// Accuracy table as CSV, values in percent.
pub fn table2_to_csv(t: &Table2) -> Result<Vec<u8>> {
    let header = ["k", "mv", "sp", "single_best", "isp", "opt"]
        .map(String::from)
        .to_vec();
    let rows = t.rows.iter().map(|r| {
        vec![
            r.k.to_string(),
            pct(r.mv),
            pct(r.sp),
            pct(r.single_best),
            pct(r.isp),
            pct(r.opt),
        ]
    });
    csv_bytes(std::iter::once(header).chain(rows))
}

/// Accuracy table as aligned text, values in percent.
pub fn table2_to_text(t: &Table2) -> String {
    let mut out = format!(
        "{:>4} {:>8} {:>8} {:>12} {:>8} {:>8}\n",
        "K", "MV", "SP", "Single Best", "ISP", "OPT"
    );
    for r in &t.rows {
        out += &format!(
            "{:>4} {:>8} {:>8} {:>12} {:>8} {:>8}\n",
            r.k,
            pct(r.mv),
            pct(r.sp),
            pct(r.single_best),
            pct(r.isp),
            pct(r.opt)
        );
    }
    out
}

/// `k,gap_isp_mv,gap_mv_sp,stderr` in accuracy points; `stderr` is empty
/// for a single replication.
pub fn gap_curve_to_csv(g: &GapCurve) -> Result<Vec<u8>> {
    let header = ["k", "gap_isp_mv", "gap_mv_sp", "stderr"]
        .map(String::from)
        .to_vec();
    let rows = g.points.iter().map(|p| {
        let se = if p.stderr.is_nan() {
            String::new()
        } else {
            format!("{:.4}", 100.0 * p.stderr)
        };
        vec![
            p.k.to_string(),
            format!("{:.4}", 100.0 * p.gap_isp_mv),
            format!("{:.4}", 100.0 * p.gap_mv_sp),
            se,
        ]
    });
    csv_bytes(std::iter::once(header).chain(rows))
}
