//! Spec and life-table parsing, CSV output.
//!
//! Specs are TOML. Numbers in CSV output carry 10 significant digits.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::cea::CeaRow;
use crate::engine::{CohortTrace, TransitionDynamicsArray};
use crate::epi::SurvivalCurve;
use crate::model::{LifeTable, ModelSpec};
use crate::pipeline::StrategyResult;
use crate::psa::{DecisionCurves, PsaResult};
use crate::transition::TransitionArray;
use crate::{Error, Result};

/// Marker for undefined values (e.g. prevalence once nobody is alive).
pub const MISSING: &str = "NA";

pub fn parse_spec(text: &str) -> Result<ModelSpec> {
    toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_spec(path: &Path) -> Result<ModelSpec> {
    parse_spec(&fs::read_to_string(path)?)
}

pub fn spec_to_string(spec: &ModelSpec) -> Result<String> {
    toml::to_string(spec).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Deserialize)]
struct LifeTableRow {
    age: u32,
    mortality_rate: f64,
}

/// Reads CSV with header `age,mortality_rate`.
pub fn parse_life_table<R: Read>(reader: R) -> Result<LifeTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["age", "mortality_rate"] {
        return Err(Error::Parse(format!(
            "life table header must be `age,mortality_rate`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize::<LifeTableRow>() {
        let rec = rec.map_err(|e| Error::Parse(format!("life table: {e}")))?;
        rows.push((rec.age, rec.mortality_rate));
    }
    LifeTable::new(rows)
}

pub fn read_life_table(path: &Path) -> Result<LifeTable> {
    parse_life_table(fs::File::open(path)?)
}

/// Formats with 10 significant digits, dropping trailing zeros.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.9e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| MISSING.to_string(), fmt_num)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

pub fn write_trace<W: Write>(w: W, trace: &CohortTrace) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec!["cycle".to_string()];
    header.extend(trace.labels().iter().cloned());
    out.write_record(&header)?;
    for (t, row) in trace.values().rows().into_iter().enumerate() {
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|x| fmt_num(*x)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_survival<W: Write>(w: W, s: &SurvivalCurve) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["cycle", "survival"])?;
    for (t, v) in s.values().iter().enumerate() {
        out.write_record([t.to_string(), fmt_num(*v)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_prevalence<W: Write>(w: W, groups: &[(String, Vec<Option<f64>>)]) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec!["cycle".to_string()];
    header.extend(groups.iter().map(|(n, _)| n.clone()));
    out.write_record(&header)?;
    let len = groups.first().map_or(0, |(_, v)| v.len());
    for t in 0..len {
        let mut rec = vec![t.to_string()];
        rec.extend(groups.iter().map(|(_, v)| opt(v[t])));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_outcomes<W: Write>(w: W, costs: &[f64], qalys: &[f64]) -> Result<()> {
    if costs.len() != qalys.len() {
        return Err(Error::DimensionMismatch("cost and QALY vectors differ in length".into()));
    }
    let mut out = writer(w);
    out.write_record(["cycle", "cost", "qaly"])?;
    for (t, (c, q)) in costs.iter().zip(qalys).enumerate() {
        out.write_record([t.to_string(), fmt_num(*c), fmt_num(*q)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_totals<W: Write>(w: W, results: &[StrategyResult]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["strategy", "cost", "qaly", "life_expectancy"])?;
    for r in results {
        out.write_record([
            r.strategy.clone(),
            fmt_num(r.total_cost),
            fmt_num(r.total_qaly),
            fmt_num(r.life_expectancy),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Long format `origin,destination,cycle,probability`, non-zero entries only.
pub fn write_transition_array<W: Write>(w: W, arr: &TransitionArray) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["origin", "destination", "cycle", "probability"])?;
    let labels = arr.labels();
    for t in 0..arr.n_cycles() {
        for (i, from) in labels.iter().enumerate() {
            for (j, to) in labels.iter().enumerate() {
                let p = arr.get(i, j, t);
                if p != 0.0 {
                    out.write_record([from.as_str(), to.as_str(), &t.to_string(), &fmt_num(p)])?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Long format `cycle,origin,destination,mass`, non-zero entries only.
pub fn write_dynamics<W: Write>(w: W, a: &TransitionDynamicsArray) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["cycle", "origin", "destination", "mass"])?;
    let labels = a.labels();
    for t in 0..=a.n_cycles() {
        let slice = a.slice(t);
        for (i, from) in labels.iter().enumerate() {
            for (j, to) in labels.iter().enumerate() {
                let m = slice[[i, j]];
                if m != 0.0 {
                    out.write_record([&t.to_string(), from.as_str(), to.as_str(), &fmt_num(m)])?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_cea<W: Write>(w: W, rows: &[CeaRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["strategy", "cost", "effect", "inc_cost", "inc_effect", "icer", "status"])?;
    for r in rows {
        out.write_record([
            r.strategy.clone(),
            fmt_num(r.cost),
            fmt_num(r.effect),
            opt(r.inc_cost),
            opt(r.inc_effect),
            opt(r.icer),
            r.status.code().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_frontier<W: Write>(w: W, rows: &[CeaRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["strategy", "cost", "effect"])?;
    for r in rows {
        out.write_record([r.strategy.clone(), fmt_num(r.cost), fmt_num(r.effect)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_psa_samples<W: Write>(w: W, res: &PsaResult) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["sample", "strategy", "cost", "qaly"])?;
    for i in 0..res.n_samples() {
        for (s, name) in res.strategies.iter().enumerate() {
            out.write_record([
                i.to_string(),
                name.clone(),
                fmt_num(res.costs[[i, s]]),
                fmt_num(res.effects[[i, s]]),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One row per sample, one column per parameter.
pub fn write_psa_parameters<W: Write>(w: W, res: &PsaResult) -> Result<()> {
    let mut out = writer(w);
    let names: Vec<String> = res
        .parameters
        .first()
        .map(|p| p.names().map(str::to_string).collect())
        .unwrap_or_default();
    let mut header = vec!["sample".to_string()];
    header.extend(names.iter().cloned());
    out.write_record(&header)?;
    for (i, p) in res.parameters.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        for name in &names {
            rec.push(fmt_num(p.get(name)?));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// `wtp,<strategy...>,ceaf`.
pub fn write_ceac<W: Write>(w: W, curves: &DecisionCurves) -> Result<()> {
    let a = &curves.acceptability;
    let mut out = writer(w);
    let mut header = vec!["wtp".to_string()];
    header.extend(curves.strategies.iter().cloned());
    header.push("ceaf".into());
    out.write_record(&header)?;
    for (k, wtp) in a.wtp.iter().enumerate() {
        let mut rec = vec![fmt_num(*wtp)];
        rec.extend(a.ceac.row(k).iter().map(|x| fmt_num(*x)));
        rec.push(curves.strategies[a.ceaf[k]].clone());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// `wtp,<strategy...>` expected loss.
pub fn write_elc<W: Write>(w: W, curves: &DecisionCurves) -> Result<()> {
    let l = &curves.loss;
    let mut out = writer(w);
    let mut header = vec!["wtp".to_string()];
    header.extend(curves.strategies.iter().cloned());
    out.write_record(&header)?;
    for (k, wtp) in l.wtp.iter().enumerate() {
        let mut rec = vec![fmt_num(*wtp)];
        rec.extend(l.loss.row(k).iter().map(|x| fmt_num(*x)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_evpi<W: Write>(w: W, curves: &DecisionCurves) -> Result<()> {
    let l = &curves.loss;
    let mut out = writer(w);
    out.write_record(["wtp", "evpi"])?;
    for (wtp, e) in l.wtp.iter().zip(&l.evpi) {
        out.write_record([fmt_num(*wtp), fmt_num(*e)])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `contents` produced by `f` to `path`, creating parent directories.
pub fn write_file<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    f(&mut file)?;
    file.flush()?;
    Ok(())
}
