//! Trace files: comma-delimited text, one row per iteration.
//!
//! ```text
//! k,t,loss,eta,residual,step_norm[,dist]
//! ```
//!
//! Reals are written in scientific notation with 17 significant digits,
//! which reproduces every `f64` bit for bit on reading.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::optimizer::{Trace, TraceRow};

pub const TRACE_HEADER: &str = "k,t,loss,eta,residual,step_norm";

fn has_dist(trace: &Trace) -> Result<bool> {
    let with = trace.rows.iter().filter(|r| r.dist.is_some()).count();
    match with {
        0 => Ok(false),
        n if n == trace.len() => Ok(true),
        _ => Err(Error::usage("trace mixes rows with and without a dist column")),
    }
}

pub fn write_trace_to<W: Write>(mut out: W, trace: &Trace) -> std::io::Result<()> {
    let dist = has_dist(trace).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()))?;
    out.write_all(TRACE_HEADER.as_bytes())?;
    if dist {
        out.write_all(b",dist")?;
    }
    out.write_all(b"\n")?;
    for r in &trace.rows {
        write!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.k, r.t, r.loss, r.eta, r.residual, r.step_norm
        )?;
        if let Some(d) = r.dist {
            write!(out, ",{d:.16e}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_trace(path: impl AsRef<Path>, trace: &Trace) -> Result<()> {
    let path = path.as_ref();
    has_dist(trace)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace_to(BufWriter::new(file), trace).map_err(|e| Error::io(path, e))
}

pub fn read_trace_from<R: Read>(input: R) -> Result<Trace> {
    let mut lines = BufReader::new(input).lines();
    let header = match lines.next() {
        Some(h) => h.map_err(|e| Error::data(format!("cannot read trace header: {e}")))?,
        None => return Err(Error::data("trace file is empty, expected a header")),
    };
    let dist = if header == TRACE_HEADER {
        false
    } else if header.strip_suffix(",dist") == Some(TRACE_HEADER) {
        true
    } else {
        return Err(Error::data(format!("unexpected trace header '{header}'")));
    };
    let width = if dist { 7 } else { 6 };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::data(format!("line {lineno}: {e}")))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::data(format!(
                "line {lineno}: expected {width} fields, found {}",
                fields.len()
            )));
        }
        let real = |j: usize| {
            fields[j]
                .parse::<f64>()
                .map_err(|_| Error::data(format!("line {lineno}: bad number '{}'", fields[j])))
        };
        rows.push(TraceRow {
            k: fields[0]
                .parse()
                .map_err(|_| Error::data(format!("line {lineno}: bad iteration '{}'", fields[0])))?,
            t: real(1)?,
            loss: real(2)?,
            eta: real(3)?,
            residual: real(4)?,
            step_norm: real(5)?,
            dist: if dist { Some(real(6)?) } else { None },
        });
    }
    Ok(Trace { rows })
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace_from(file).map_err(|e| match e {
        Error::Data(msg) => Error::data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(k: u64, vals: [f64; 5], dist: Option<f64>) -> TraceRow {
        TraceRow {
            k,
            t: vals[0],
            loss: vals[1],
            eta: vals[2],
            residual: vals[3],
            step_norm: vals[4],
            dist,
        }
    }

    fn bits(t: &Trace) -> Vec<Vec<u64>> {
        t.rows
            .iter()
            .map(|r| {
                let mut v = vec![r.k, r.t.to_bits(), r.loss.to_bits(), r.eta.to_bits()];
                v.extend([r.residual.to_bits(), r.step_norm.to_bits()]);
                v.extend(r.dist.map(f64::to_bits));
                v
            })
            .collect()
    }

    fn round_trip(t: &Trace) -> Trace {
        let mut buf = Vec::new();
        write_trace_to(&mut buf, t).unwrap();
        read_trace_from(buf.as_slice()).unwrap()
    }

    #[test]
    fn empty_trace_is_header_only() {
        let mut buf = Vec::new();
        write_trace_to(&mut buf, &Trace::default()).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,t,loss,eta,residual,step_norm\n");
        assert_eq!(round_trip(&Trace::default()), Trace::default());
    }

    #[test]
    fn one_row_round_trip() {
        let t = Trace {
            rows: vec![row(3, [0.1, 2.5e-300, -0.0, 1.0 / 3.0, f64::MIN_POSITIVE], Some(7.0))],
        };
        let back = round_trip(&t);
        assert_eq!(bits(&back), bits(&t));
        let mut buf = Vec::new();
        write_trace_to(&mut buf, &t).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,t,loss,eta,residual,step_norm,dist\n3,1.0000000000000001e-1,"));
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(read_trace_from("".as_bytes()).is_err());
        assert!(read_trace_from("k,t\n".as_bytes()).is_err());
        assert!(read_trace_from("k,t,loss,eta,residual,step_norm\n1,2,3\n".as_bytes()).is_err());
        assert!(read_trace_from("k,t,loss,eta,residual,step_norm\nx,1,1,1,1,1\n".as_bytes()).is_err());
        let mixed = Trace {
            rows: vec![row(0, [0.0; 5], None), row(1, [0.0; 5], Some(1.0))],
        };
        assert!(write_trace_to(Vec::new(), &mixed).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_finite_values_round_trip(
            vals in prop::collection::vec((any::<u64>(), prop::array::uniform5(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO)), 0..50),
            with_dist in any::<bool>(),
        ) {
            let t = Trace {
                rows: vals.iter().map(|(k, v)| row(*k, *v, with_dist.then_some(v[0] * 0.5))).collect(),
            };
            prop_assert_eq!(bits(&round_trip(&t)), bits(&t));
        }
    }
}
