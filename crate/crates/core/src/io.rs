//! Comma-separated ingestion and export.
//!
//! Static experimental files carry `s1,...,sd,a,r`, static historical files
//! `s1,...,sd,r`. Sequential files carry `episode,t,s1,...,sd,a,r` with one
//! trailing row per episode at `t = T+1` whose action and reward fields are
//! empty; that row holds the terminal state. Reals are written with the
//! shortest representation that parses back to the same bits.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};

use crate::data::{
    Arm, ContextVector, Episode, ExperimentalRecord, HistoricalRecord, SequentialDataset,
    StaticDataset, Step,
};
use crate::error::{Error, Result};

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Table {
    header: Vec<String>,
    rows: Vec<StringRecord>,
}

fn read_table(text: &str, which: &'static str, min_cols: usize) -> Result<Table> {
    let mut reader = ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Header {
            which,
            reason: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyDataset(which));
    }
    if header.len() < min_cols {
        return Err(Error::Header {
            which,
            reason: format!(
                "expected at least {min_cols} columns, found {}",
                header.len()
            ),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Header {
            which,
            reason: format!("row {}: {e}", i + 1),
        })?;
        rows.push(rec);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset(which));
    }
    Ok(Table { header, rows })
}

fn real(row: usize, column: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw.parse().map_err(|_| Error::NonNumeric {
        row,
        column: column.to_owned(),
        value: raw.to_owned(),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFinite {
            row,
            column: column.to_owned(),
        });
    }
    Ok(v)
}

fn action(row: usize, raw: &str) -> Result<Arm> {
    let v: f64 = raw.parse().map_err(|_| Error::NonBinaryAction {
        row,
        value: raw.to_owned(),
    })?;
    if v == 0.0 {
        Ok(Arm::Control)
    } else if v == 1.0 {
        Ok(Arm::Treatment)
    } else {
        Err(Error::NonBinaryAction {
            row,
            value: raw.to_owned(),
        })
    }
}

fn context(row: usize, header: &[String], fields: &[&str]) -> Result<ContextVector> {
    let values = fields
        .iter()
        .zip(header)
        .map(|(raw, col)| real(row, col, raw))
        .collect::<Result<Vec<_>>>()?;
    Ok(ContextVector::new(values).expect("validated finite, non-empty"))
}

fn check_width(row: usize, rec: &StringRecord, expected: usize) -> Result<()> {
    if rec.len() != expected {
        return Err(Error::InconsistentDimension {
            row,
            expected,
            found: rec.len(),
        });
    }
    Ok(())
}

/// Parse a static experimental table (`s1,...,sd,a,r`).
pub fn parse_static_experimental(text: &str) -> Result<Vec<ExperimentalRecord>> {
    let table = read_table(text, "experimental", 3)?;
    let width = table.header.len();
    let d = width - 2;
    let mut out = Vec::with_capacity(table.rows.len());
    for (i, rec) in table.rows.iter().enumerate() {
        let row = i + 1;
        check_width(row, rec, width)?;
        let fields: Vec<&str> = rec.iter().collect();
        let ctx = context(row, &table.header, &fields[..d])?;
        let a = action(row, fields[d])?;
        let r = real(row, &table.header[d + 1], fields[d + 1])?;
        out.push(ExperimentalRecord::new(ctx, a, r)?);
    }
    Ok(out)
}

/// Parse a static historical table (`s1,...,sd,r`).
pub fn parse_static_historical(text: &str) -> Result<Vec<HistoricalRecord>> {
    let table = read_table(text, "historical", 2)?;
    let width = table.header.len();
    let d = width - 1;
    let mut out = Vec::with_capacity(table.rows.len());
    for (i, rec) in table.rows.iter().enumerate() {
        let row = i + 1;
        check_width(row, rec, width)?;
        let fields: Vec<&str> = rec.iter().collect();
        let ctx = context(row, &table.header, &fields[..d])?;
        let r = real(row, &table.header[d], fields[d])?;
        out.push(HistoricalRecord::new(ctx, r)?);
    }
    Ok(out)
}

struct SeqRow {
    row: usize,
    t: usize,
    state: ContextVector,
    step: Option<(Arm, f64)>,
}

/// Parse a sequential table. With `control_only`, any action other than 0
/// is rejected.
pub fn parse_sequential(
    text: &str,
    which: &'static str,
    control_only: bool,
) -> Result<Vec<Episode>> {
    let table = read_table(text, which, 5)?;
    let width = table.header.len();
    let d = width - 4;
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<SeqRow>> = HashMap::new();

    for (i, rec) in table.rows.iter().enumerate() {
        let row = i + 1;
        check_width(row, rec, width)?;
        let fields: Vec<&str> = rec.iter().collect();
        let id = fields[0].to_owned();
        let t: usize = fields[1].parse().map_err(|_| Error::NonNumeric {
            row,
            column: table.header[1].clone(),
            value: fields[1].to_owned(),
        })?;
        let state = context(row, &table.header[2..], &fields[2..2 + d])?;
        let (a_raw, r_raw) = (fields[2 + d], fields[3 + d]);
        let step = match (a_raw.is_empty(), r_raw.is_empty()) {
            (true, true) => None,
            (false, false) => {
                let a = action(row, a_raw)?;
                if control_only && a != Arm::Control {
                    return Err(Error::HistoricalAction { row });
                }
                Some((a, real(row, &table.header[3 + d], r_raw)?))
            }
            _ => {
                return Err(Error::MalformedEpisode {
                    episode: id,
                    reason: format!("row {row} has only one of action/reward"),
                })
            }
        };
        if !groups.contains_key(&id) {
            order.push(id.clone());
        }
        groups.entry(id).or_default().push(SeqRow {
            row,
            t,
            state,
            step,
        });
    }

    let mut horizon: Option<usize> = None;
    let mut episodes = Vec::with_capacity(order.len());
    for id in order {
        let mut rows = groups.remove(&id).expect("grouped above");
        rows.sort_by_key(|r| (r.t, r.row));
        for (k, r) in rows.iter().enumerate() {
            if r.t != k + 1 {
                return Err(Error::MalformedEpisode {
                    episode: id,
                    reason: format!(
                        "time index {} at row {} breaks 1..=T+1 sequence",
                        r.t, r.row
                    ),
                });
            }
        }
        let last = rows.pop().expect("non-empty group");
        if last.step.is_some() {
            return Err(Error::MalformedEpisode {
                episode: id,
                reason: "missing terminal row with empty action and reward".into(),
            });
        }
        if rows.is_empty() {
            return Err(Error::MalformedEpisode {
                episode: id,
                reason: "no steps before the terminal row".into(),
            });
        }
        let t_len = rows.len();
        match horizon {
            None => horizon = Some(t_len),
            Some(h) if h != t_len => {
                return Err(Error::InconsistentHorizon {
                    episode: id,
                    expected: h,
                    found: t_len,
                })
            }
            _ => {}
        }
        let mut steps = Vec::with_capacity(t_len);
        for r in rows {
            let Some((action, reward)) = r.step else {
                return Err(Error::MalformedEpisode {
                    episode: id,
                    reason: format!(
                        "row {} has empty action/reward before the terminal row",
                        r.row
                    ),
                });
            };
            steps.push(Step {
                context: r.state,
                action,
                reward,
            });
        }
        episodes.push(Episode::new(steps, last.state)?);
    }
    Ok(episodes)
}

/// Load and validate a static dataset from two files.
pub fn load_static(
    exp_path: impl AsRef<Path>,
    hist_path: impl AsRef<Path>,
) -> Result<StaticDataset> {
    let exp = parse_static_experimental(&read_to_string(exp_path.as_ref())?)?;
    let hist = parse_static_historical(&read_to_string(hist_path.as_ref())?)?;
    if exp[0].context.dim() != hist[0].context.dim() {
        return Err(Error::InconsistentDimension {
            row: 1,
            expected: exp[0].context.dim() + 1,
            found: hist[0].context.dim() + 1,
        });
    }
    StaticDataset::new(exp, hist)
}

/// Load and validate a sequential dataset from two files.
pub fn load_sequential(
    exp_path: impl AsRef<Path>,
    hist_path: impl AsRef<Path>,
) -> Result<SequentialDataset> {
    let exp = parse_sequential(&read_to_string(exp_path.as_ref())?, "experimental", false)?;
    let hist = parse_sequential(&read_to_string(hist_path.as_ref())?, "historical", true)?;
    let (te, th) = (exp[0].horizon(), hist[0].horizon());
    if te != th {
        return Err(Error::InconsistentHorizon {
            episode: "historical file".into(),
            expected: te,
            found: th,
        });
    }
    SequentialDataset::new(exp, hist)
}

fn state_header(d: usize) -> String {
    (1..=d)
        .map(|j| format!("s{j}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn push_state(out: &mut String, s: &[f64]) {
    for v in s {
        write!(out, "{v:?},").expect("string write");
    }
}

pub fn static_experimental_to_string(records: &[ExperimentalRecord]) -> String {
    let d = records.first().map_or(1, |r| r.context.dim());
    let mut out = format!("{},a,r\n", state_header(d));
    for r in records {
        push_state(&mut out, r.context.as_slice());
        writeln!(out, "{},{:?}", r.action, r.reward).expect("string write");
    }
    out
}

pub fn static_historical_to_string(records: &[HistoricalRecord]) -> String {
    let d = records.first().map_or(1, |r| r.context.dim());
    let mut out = format!("{},r\n", state_header(d));
    for r in records {
        push_state(&mut out, r.context.as_slice());
        writeln!(out, "{:?}", r.reward).expect("string write");
    }
    out
}

pub fn sequential_to_string(episodes: &[Episode]) -> String {
    let d = episodes.first().map_or(1, Episode::state_dim);
    let mut out = format!("episode,t,{},a,r\n", state_header(d));
    for (i, ep) in episodes.iter().enumerate() {
        let id = i + 1;
        for (k, s) in ep.steps().iter().enumerate() {
            write!(out, "{id},{},", k + 1).expect("string write");
            push_state(&mut out, s.context.as_slice());
            writeln!(out, "{},{:?}", s.action, s.reward).expect("string write");
        }
        write!(out, "{id},{},", ep.horizon() + 1).expect("string write");
        push_state(&mut out, ep.terminal().as_slice());
        out.push_str(",\n");
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_static(
    ds: &StaticDataset,
    exp_path: impl AsRef<Path>,
    hist_path: impl AsRef<Path>,
) -> Result<()> {
    write_file(
        exp_path.as_ref(),
        &static_experimental_to_string(ds.experimental()),
    )?;
    write_file(
        hist_path.as_ref(),
        &static_historical_to_string(ds.historical()),
    )
}

pub fn write_sequential(
    ds: &SequentialDataset,
    exp_path: impl AsRef<Path>,
    hist_path: impl AsRef<Path>,
) -> Result<()> {
    write_file(exp_path.as_ref(), &sequential_to_string(ds.experimental()))?;
    write_file(hist_path.as_ref(), &sequential_to_string(ds.historical()))
}
