//! Long-format CSV ingestion and export.
//!
//! Exposures: `subject_id,t,exposure`, one row per subject and day.
//! Outcomes: `subject_id,time,event`, one row per subject. Numbers are
//! written with 17 significant digits so files round-trip exactly.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};

use lagsurv::{ContributionGrid, Error, ExposurePanel, SurvivalOutcome};
use log::warn;

type CoreResult<T> = lagsurv::Result<T>;

/// Largest subject-by-day panel accepted from files or configuration.
pub const MAX_CELLS: usize = 1 << 28;

#[derive(Debug, Clone, PartialEq)]
pub struct LongFormatRecord {
    pub subject_id: String,
    pub t: usize,
    pub exposure: f64,
    pub line: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRecord {
    pub subject_id: String,
    pub time: usize,
    pub event: bool,
    pub line: u64,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    /// Subject ids in panel row order (outcome file order).
    pub subjects: Vec<String>,
    pub panel: ExposurePanel,
    pub outcomes: Vec<SurvivalOutcome>,
    /// Divisor applied to every exposure; 1 without normalization.
    pub scale: f64,
    pub warnings: Vec<String>,
}

/// Exact decimal encoding used for every numeric output.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn reader<R: Read>(input: R, header: &[&str]) -> CoreResult<csv::Reader<R>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let found = rdr.headers().map_err(|e| csv_error(&e))?;
    let names: Vec<&str> = found.iter().collect();
    if names != header {
        return Err(Error::parse(
            1,
            format!("expected header {:?}, found {:?}", header.join(","), names.join(",")),
        ));
    }
    Ok(rdr)
}

fn csv_error(e: &csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::parse(line, e.to_string())
}

fn records<R: Read>(
    rdr: &mut csv::Reader<R>,
    mut each: impl FnMut(&csv::StringRecord, u64) -> CoreResult<()>,
) -> CoreResult<()> {
    let mut rec = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(true) => {
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                each(&rec, line)?;
            }
            Ok(false) => return Ok(()),
            Err(e) => return Err(csv_error(&e)),
        }
    }
}

fn field(rec: &csv::StringRecord, k: usize, line: u64) -> CoreResult<&str> {
    rec.get(k)
        .ok_or_else(|| Error::parse(line, format!("missing column {}", k + 1)))
}

fn positive(text: &str, what: &str, line: u64) -> CoreResult<usize> {
    match text.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(Error::parse(line, format!("{what} {text:?} is not a positive integer"))),
    }
}

fn subject(text: &str, line: u64) -> CoreResult<String> {
    if text.is_empty() {
        return Err(Error::parse(line, "empty subject_id"));
    }
    Ok(text.to_string())
}

pub fn parse_exposures<R: Read>(input: R) -> CoreResult<Vec<LongFormatRecord>> {
    let mut rdr = reader(input, &["subject_id", "t", "exposure"])?;
    let mut out = Vec::new();
    records(&mut rdr, |rec, line| {
        let text = field(rec, 2, line)?;
        let exposure: f64 = text
            .parse()
            .map_err(|_| Error::parse(line, format!("exposure {text:?} is not a number")))?;
        if !exposure.is_finite() {
            return Err(Error::parse(line, format!("exposure {text:?} is not finite")));
        }
        out.push(LongFormatRecord {
            subject_id: subject(field(rec, 0, line)?, line)?,
            t: positive(field(rec, 1, line)?, "t", line)?,
            exposure,
            line,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn parse_outcomes<R: Read>(input: R) -> CoreResult<Vec<OutcomeRecord>> {
    let mut rdr = reader(input, &["subject_id", "time", "event"])?;
    let mut out = Vec::new();
    records(&mut rdr, |rec, line| {
        let event = match field(rec, 2, line)? {
            "0" => false,
            "1" => true,
            other => return Err(Error::parse(line, format!("event {other:?} must be 0 or 1"))),
        };
        out.push(OutcomeRecord {
            subject_id: subject(field(rec, 0, line)?, line)?,
            time: positive(field(rec, 1, line)?, "time", line)?,
            event,
            line,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Builds the panel over `1..=T`, `T` being the largest day seen in either
/// file. Days missing before a subject's last record are zero-filled with
/// one warning per subject; days after it are zero-filled silently.
pub fn assemble(exposures: &[LongFormatRecord], outcomes: &[OutcomeRecord], normalize: bool) -> CoreResult<Ingested> {
    let mut index = HashMap::with_capacity(outcomes.len());
    for (k, o) in outcomes.iter().enumerate() {
        if index.insert(o.subject_id.as_str(), k).is_some() {
            return Err(Error::Data(format!(
                "line {}: subject {:?} has more than one outcome record",
                o.line, o.subject_id
            )));
        }
    }
    if outcomes.is_empty() {
        return Err(Error::Data("outcome file has no records".into()));
    }
    let horizon = exposures
        .iter()
        .map(|r| r.t)
        .chain(outcomes.iter().map(|o| o.time))
        .max()
        .unwrap_or(0);
    let n = outcomes.len();
    let cells = n.checked_mul(horizon).filter(|&c| c <= MAX_CELLS).ok_or_else(|| {
        Error::Data(format!("panel of {n} subjects by {horizon} days exceeds {MAX_CELLS} cells"))
    })?;
    let mut values = vec![0.0; cells];
    let mut seen_at: HashMap<(usize, usize), u64> = HashMap::with_capacity(exposures.len());
    let mut days: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for r in exposures {
        let Some(&i) = index.get(r.subject_id.as_str()) else {
            return Err(Error::Data(format!(
                "line {}: subject {:?} has exposures but no outcome record",
                r.line, r.subject_id
            )));
        };
        if let Some(first) = seen_at.insert((i, r.t), r.line) {
            return Err(Error::Data(format!(
                "duplicate record for subject {:?} at t = {} (lines {first} and {})",
                r.subject_id, r.t, r.line
            )));
        }
        values[i * horizon + r.t - 1] = r.exposure;
        days[i].insert(r.t);
    }
    let mut warnings = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        if days[i].is_empty() {
            return Err(Error::Data(format!(
                "subject {:?} has an outcome but no exposure records",
                o.subject_id
            )));
        }
        let last = *days[i].last().expect("nonempty");
        let missing = last - days[i].len();
        if missing > 0 {
            let msg = format!("subject {:?}: {missing} missing day(s) before t = {last} zero-filled", o.subject_id);
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    let mut scale = 1.0;
    if normalize {
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max <= 0.0 {
            return Err(Error::Data(format!("cannot normalize by a maximum exposure of {max}")));
        }
        scale = max;
        values.iter_mut().for_each(|v| *v /= max);
    }
    Ok(Ingested {
        subjects: outcomes.iter().map(|o| o.subject_id.clone()).collect(),
        panel: ExposurePanel::new(n, horizon, values)?,
        outcomes: outcomes
            .iter()
            .map(|o| SurvivalOutcome::new(o.time, o.event))
            .collect(),
        scale,
        warnings,
    })
}

pub fn ingest<E: Read, O: Read>(exposures: E, outcomes: O, normalize: bool) -> CoreResult<Ingested> {
    let e = parse_exposures(exposures)?;
    let o = parse_outcomes(outcomes)?;
    assemble(&e, &o, normalize)
}

pub fn write_exposures<W: Write>(out: W, subjects: &[String], panel: &ExposurePanel) -> CoreResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject_id", "t", "exposure"]).map_err(to_io)?;
    for (i, id) in subjects.iter().enumerate() {
        for (t, v) in panel.row(i).iter().enumerate() {
            w.write_record([id.as_str(), &(t + 1).to_string(), &fmt_num(*v)])
                .map_err(to_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_outcomes<W: Write>(out: W, subjects: &[String], outcomes: &[SurvivalOutcome]) -> CoreResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject_id", "time", "event"]).map_err(to_io)?;
    for (id, o) in subjects.iter().zip(outcomes) {
        w.write_record([id.as_str(), &o.time.to_string(), if o.event { "1" } else { "0" }])
            .map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_grid<W: Write>(out: W, grid: &ContributionGrid) -> CoreResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "l", "value"]).map_err(to_io)?;
    for (ix, x) in grid.x_grid.iter().enumerate() {
        for (il, l) in grid.l_grid.iter().enumerate() {
            w.write_record([fmt_num(*x), l.to_string(), fmt_num(grid.get(ix, il))])
                .map_err(to_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads an `x,l,value` grid written in x-major order.
pub fn parse_grid<R: Read>(input: R) -> CoreResult<ContributionGrid> {
    let mut rdr = reader(input, &["x", "l", "value"])?;
    let mut cells = Vec::new();
    records(&mut rdr, |rec, line| {
        let num = |k: usize| -> CoreResult<f64> {
            let text = field(rec, k, line)?;
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::parse(line, format!("{text:?} is not a finite number"))),
            }
        };
        let l = field(rec, 1, line)?;
        let l: usize = l
            .parse()
            .map_err(|_| Error::parse(line, format!("lag {l:?} is not a nonnegative integer")))?;
        cells.push((num(0)?, l, num(2)?, line));
        Ok(())
    })?;
    let Some(&(x0, _, _, _)) = cells.first() else {
        return Err(Error::Data("grid file has no cells".into()));
    };
    let l_grid: Vec<usize> = cells.iter().take_while(|c| c.0 == x0).map(|c| c.1).collect();
    let nl = l_grid.len();
    if cells.len() % nl != 0 {
        return Err(Error::Data(format!("{} grid cells do not form {nl}-lag rows", cells.len())));
    }
    let mut x_grid = Vec::with_capacity(cells.len() / nl);
    for (r, row) in cells.chunks(nl).enumerate() {
        let x = row[0].0;
        if r > 0 && x <= x_grid[r - 1] {
            return Err(Error::parse(row[0].3, "x values must increase between rows"));
        }
        for (c, l) in row.iter().zip(&l_grid) {
            if c.0 != x || c.1 != *l {
                return Err(Error::parse(c.3, "grid is not in x-major order with a shared lag list"));
            }
        }
        x_grid.push(x);
    }
    Ok(ContributionGrid {
        x_grid,
        l_grid,
        values: cells.iter().map(|c| c.2).collect(),
    })
}

fn to_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("{other:?}")),
    }
}
