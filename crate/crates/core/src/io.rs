//! File formats shared with the command line driver and the plotting scripts.
//!
//! Vertex indices in files are zero-based, like the API. Floats are written in
//! shortest round-trip form, so identical runs give identical bytes.
//!
//! * trajectory CSV: `t,j,s,i,r`, one row per stored time and node;
//! * trajectory binary: `n: u64`, `rows: u64`, `dt: f64`, then per row
//!   `t, s_0..s_{n-1}, i_0.., r_0..`, all little endian;
//! * variance CSV: `t,j,var_s,var_i,var_r`;
//! * errors CSV: `scheme,n,norm,sup_error`;
//! * degrees CSV: `j,d`;
//! * step graphon CSV: first line `n`, then `n` comma-separated rows;
//! * adjacency: dense CSV of `n` rows, or edge list lines `j k weight` with `j ≤ k`.

use std::io::{BufRead, Read, Write};

use serde::Serialize;

use crate::analysis::ErrorReport;
use crate::error::{Error, Result};
use crate::graphon::StepGraphon;
use crate::graphs::{AdjacencyMatrix, Provenance};
use crate::sir::{SirState, SirTrajectory};

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

pub fn write_trajectory_csv<W: Write>(w: W, times: &[f64], states: &[SirState]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["t", "j", "s", "i", "r"])?;
    for (t, st) in times.iter().zip(states) {
        let t = fmt(*t);
        for j in 0..st.n() {
            out.write_record([t.as_str(), &j.to_string(), &fmt(st.s[j]), &fmt(st.i[j]), &fmt(st.r[j])])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Stored times and states from a trajectory CSV.
pub fn read_trajectory_csv<R: Read>(r: R) -> Result<(Vec<f64>, Vec<SirState>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "j", "s", "i", "r"] {
        return Err(Error::Format(format!("unexpected trajectory header {headers:?}")));
    }
    let mut times: Vec<f64> = Vec::new();
    let mut states: Vec<SirState> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |q: usize| -> Result<f64> {
            rec[q]
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("column {q} of {rec:?}: {e}")))
        };
        let (t, j) = (field(0)?, rec[1].parse::<usize>().map_err(|e| Error::Format(e.to_string()))?);
        if j == 0 {
            times.push(t);
            states.push(SirState::zeros(0));
        }
        let st = states.last_mut().ok_or_else(|| Error::Format("first row must have j = 0".into()))?;
        if st.n() != j {
            return Err(Error::Format(format!("node {j} out of order at t = {t}")));
        }
        st.s.push(field(2)?);
        st.i.push(field(3)?);
        st.r.push(field(4)?);
    }
    Ok((times, states))
}

pub fn write_trajectory_binary<W: Write>(mut w: W, traj: &SirTrajectory) -> Result<()> {
    let n = traj.n();
    w.write_all(&(n as u64).to_le_bytes())?;
    w.write_all(&(traj.times.len() as u64).to_le_bytes())?;
    w.write_all(&traj.dt.to_le_bytes())?;
    for (t, st) in traj.times.iter().zip(&traj.states) {
        w.write_all(&t.to_le_bytes())?;
        for v in st.s.iter().chain(&st.i).chain(&st.r) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `(dt, times, states)` from the binary trajectory block.
pub fn read_trajectory_binary<R: Read>(mut r: R) -> Result<(f64, Vec<f64>, Vec<SirState>)> {
    let mut word = [0u8; 8];
    let mut next = |r: &mut R| -> Result<[u8; 8]> {
        r.read_exact(&mut word)?;
        Ok(word)
    };
    let n = u64::from_le_bytes(next(&mut r)?) as usize;
    let rows = u64::from_le_bytes(next(&mut r)?) as usize;
    let dt = f64::from_le_bytes(next(&mut r)?);
    let mut times = Vec::with_capacity(rows);
    let mut states = Vec::with_capacity(rows);
    let mut buf = vec![0u8; 8 * (1 + 3 * n)];
    for _ in 0..rows {
        r.read_exact(&mut buf)?;
        let vals: Vec<f64> = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        times.push(vals[0]);
        states.push(SirState {
            s: vals[1..1 + n].to_vec(),
            i: vals[1 + n..1 + 2 * n].to_vec(),
            r: vals[1 + 2 * n..].to_vec(),
        });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after {rows} rows", rest.len())));
    }
    Ok((dt, times, states))
}

pub fn write_variance_csv<W: Write>(w: W, times: &[f64], variance: &[SirState]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["t", "j", "var_s", "var_i", "var_r"])?;
    for (t, st) in times.iter().zip(variance) {
        let t = fmt(*t);
        for j in 0..st.n() {
            out.write_record([t.as_str(), &j.to_string(), &fmt(st.s[j]), &fmt(st.i[j]), &fmt(st.r[j])])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_errors_csv<W: Write>(w: W, reports: &[ErrorReport]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["scheme", "n", "norm", "sup_error"])?;
    for r in reports {
        out.write_record([r.scheme.as_str(), &r.n.to_string(), r.norm.name(), &fmt(r.sup_error)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_degrees_csv<W: Write>(w: W, degrees: &[f64]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["j", "d"])?;
    for (j, d) in degrees.iter().enumerate() {
        out.write_record([j.to_string(), fmt(*d)])?;
    }
    out.flush()?;
    Ok(())
}

fn write_rows<W: Write>(out: &mut csv::Writer<W>, n: usize, get: impl Fn(usize, usize) -> f64) -> Result<()> {
    for j in 0..n {
        out.write_record((0..n).map(|k| fmt(get(j, k))))?;
    }
    Ok(())
}

pub fn write_step_csv<W: Write>(w: W, g: &StepGraphon) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).flexible(true).from_writer(w);
    out.write_record([g.n().to_string()])?;
    write_rows(&mut out, g.n(), |j, k| g.get(j, k))?;
    out.flush()?;
    Ok(())
}

/// Step graphon CSV; the leading size line is optional.
pub fn read_step_csv<R: Read>(r: R) -> Result<StepGraphon> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut declared = None;
    for (q, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if q == 0 && rec.len() == 1 {
            if let Ok(n) = rec[0].trim().parse::<usize>() {
                declared = Some(n);
                continue;
            }
        }
        let row = rec
            .iter()
            .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Format(format!("row {q}: `{v}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if let Some(n) = declared {
        if rows.len() != n {
            return Err(Error::Format(format!("declared size {n} but found {} rows", rows.len())));
        }
    }
    StepGraphon::from_rows(&rows)
}

pub fn write_adjacency_csv<W: Write>(w: W, a: &AdjacencyMatrix) -> Result<()> {
    let mut out = csv_writer(w);
    write_rows(&mut out, a.n(), |j, k| a.get(j, k))?;
    out.flush()?;
    Ok(())
}

pub fn write_edge_list<W: Write>(mut w: W, a: &AdjacencyMatrix) -> Result<()> {
    for j in 0..a.n() {
        for k in j..a.n() {
            let v = a.get(j, k);
            if v != 0.0 {
                writeln!(w, "{j} {k} {}", fmt(v))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Edge list of an `n`-vertex graph; missing pairs are zero.
pub fn read_edge_list<R: BufRead>(r: R, n: usize, meta: Provenance) -> Result<AdjacencyMatrix> {
    let mut w = vec![0.0; n * n];
    for (q, line) in r.lines().enumerate() {
        let line = line?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("line {}: `{line}`", q + 1));
        if parts.len() != 3 {
            return Err(bad());
        }
        let j: usize = parts[0].parse().map_err(|_| bad())?;
        let k: usize = parts[1].parse().map_err(|_| bad())?;
        let v: f64 = parts[2].parse().map_err(|_| bad())?;
        if j >= n || k >= n {
            return Err(bad());
        }
        w[j * n + k] = v;
        w[k * n + j] = v;
    }
    AdjacencyMatrix::new(n, w, meta)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
