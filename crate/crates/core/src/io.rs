//! CSV formats and float formatting shared by the library and the CLI.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{arg_err, Result};
use crate::rkhs::SampleSet;
use crate::spectral::DiscreteSpace;

/// Scientific notation with 17 significant digits; parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn dataset_header(m: usize) -> Vec<String> {
    let mut h: Vec<String> = ["trial", "i", "node_index"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=m).map(|k| format!("y_{k}")));
    h
}

/// Writes `trial,i,node_index,y_1..y_m` rows. The sample must carry node indices.
pub fn write_dataset_csv<W: Write>(out: W, trials: &[(usize, &SampleSet)]) -> Result<()> {
    let m = trials.first().map(|(_, s)| s.m()).unwrap_or(1);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(dataset_header(m))?;
    for (trial, s) in trials {
        let nodes = s.nodes().ok_or_else(|| arg_err!("dataset rows need node indices"))?;
        for (i, &z) in nodes.iter().enumerate() {
            let mut row = vec![trial.to_string(), i.to_string(), z.to_string()];
            row.extend(s.output(i).iter().map(|&v| fmt_f64(v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses a dataset CSV into one sample per trial. Errors name the offending row.
pub fn read_dataset_csv<R: Read>(input: R, space: &DiscreteSpace) -> Result<BTreeMap<usize, SampleSet>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let m = header.len().checked_sub(3).filter(|&m| m > 0).ok_or_else(|| arg_err!("dataset header needs at least one y column"))?;
    let expected = dataset_header(m);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(arg_err!("dataset header must be {}", expected.join(",")));
    }
    let mut rows: BTreeMap<usize, (Vec<usize>, Vec<Vec<f64>>)> = BTreeMap::new();
    for (k, rec) in r.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| arg_err!("row {line}: {e}"))?;
        if rec.len() != m + 3 {
            return Err(arg_err!("row {line}: expected {} fields, got {}", m + 3, rec.len()));
        }
        let int = |j: usize| rec[j].trim().parse::<usize>().map_err(|_| arg_err!("row {line}: bad integer {:?}", &rec[j]));
        let trial = int(0)?;
        let node = int(2)?;
        if node >= space.len() {
            return Err(arg_err!("row {line}: node index {node} outside space of {} nodes", space.len()));
        }
        let y = (3..m + 3)
            .map(|j| match rec[j].trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(arg_err!("row {line}: bad value {:?}", &rec[j])),
            })
            .collect::<Result<Vec<_>>>()?;
        let entry = rows.entry(trial).or_default();
        entry.0.push(node);
        entry.1.push(y);
    }
    rows.into_iter()
        .map(|(t, (nodes, ys))| Ok((t, SampleSet::on_space(space, nodes, ys)?)))
        .collect()
}
