//! CSV formats for link samples and parameter traces.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::diagnostics::TraceSeries;
use crate::error::{Error, Result};
use crate::sampler::ChainOutput;
use crate::scalar::Scalar;

/// Writes `iteration,id_a,id_b`, one row per link per emitted sample.
pub fn write_links<F, W: Write>(
    w: W,
    out: &ChainOutput<F>,
    ids_a: &[String],
    ids_b: &[String],
) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["iteration", "id_a", "id_b"])?;
    for s in &out.samples {
        let it = s.iteration.to_string();
        for &(i, j) in &s.links {
            wr.write_record([it.as_str(), &ids_a[i as usize], &ids_b[j as usize]])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Writes `iteration,parameter,value`, one row per scalar per emitted sample.
pub fn write_trace<F: Scalar, W: Write>(w: W, out: &ChainOutput<F>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["iteration", "parameter", "value"])?;
    for (s, row) in out.samples.iter().zip(&out.trace) {
        let it = s.iteration.to_string();
        for (name, v) in out.parameter_names.iter().zip(row) {
            wr.write_record([it.as_str(), name, &v.to_string()])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Reads a trace CSV back into one series per parameter, in order of first appearance.
pub fn read_trace<R: Read>(r: R, name: &str) -> Result<Vec<TraceSeries<f64>>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let col = |c: &str| {
        headers
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| Error::MissingColumn {
                file: name.into(),
                column: c.into(),
            })
    };
    let (pc, vc) = (col("parameter")?, col("value")?);
    let mut order: Vec<String> = Vec::new();
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let p = row.get(pc).unwrap_or("").to_string();
        let raw = row.get(vc).unwrap_or("");
        let v: f64 = raw.parse().map_err(|_| Error::Parse {
            file: name.into(),
            line,
            message: format!("`{raw}` is not a number"),
        })?;
        let entry = values.entry(p.clone()).or_insert_with(|| {
            order.push(p.clone());
            Vec::new()
        });
        entry.push(v);
    }
    Ok(order
        .into_iter()
        .map(|n| TraceSeries {
            values: values.remove(&n).unwrap_or_default(),
            name: n,
        })
        .collect())
}

/// Reads a link-sample CSV into `(iteration, pairs of ids)` groups, in order
/// of increasing iteration.
pub fn read_links<R: Read>(r: R, name: &str) -> Result<Vec<(usize, Vec<(String, String)>)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let col = |c: &str| {
        headers
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| Error::MissingColumn {
                file: name.into(),
                column: c.into(),
            })
    };
    let (ic, ac, bc) = (col("iteration")?, col("id_a")?, col("id_b")?);
    let mut groups: BTreeMap<usize, Vec<(String, String)>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let raw = row.get(ic).unwrap_or("");
        let it: usize = raw.parse().map_err(|_| Error::Parse {
            file: name.into(),
            line,
            message: format!("`{raw}` is not an iteration number"),
        })?;
        groups.entry(it).or_default().push((
            row.get(ac).unwrap_or("").to_string(),
            row.get(bc).unwrap_or("").to_string(),
        ));
    }
    Ok(groups.into_iter().collect())
}
