//! Problem snapshot files.
//!
//! A snapshot is a CSV file of tagged records, one per line:
//!
//! ```text
//! stogreedy-problem,1
//! shape,vector,<n>            | shape,matrix,<rows>,<cols>
//! block_size,<b>
//! y,<y_1>,...,<y_m>
//! p,<p_1>,...,<p_M>           (optional)
//! w_star,<w_1>,...            (optional)
//! row,<a_j1>,...,<a_jd>       (m lines, in measurement order)
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a snapshot back
//! reproduces the objective bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{validate_sampling, BlockObjective, ObjectiveError, SignalShape};

const MAGIC: &str = "stogreedy-problem";
const VERSION: &str = "1";

/// A problem loaded from disk, optionally with its planted solution.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub objective: BlockObjective,
    pub w_star: Option<DVector<f64>>,
}

fn floats(tag: &str, xs: impl IntoIterator<Item = f64>) -> Vec<String> {
    std::iter::once(tag.to_string()).chain(xs.into_iter().map(|x| format!("{x:?}"))).collect()
}

/// Writes `obj` (and `w_star` if given) to `out`.
pub fn write_snapshot<W: Write>(out: W, obj: &BlockObjective, w_star: Option<&DVector<f64>>) -> Result<(), ObjectiveError> {
    let mut w = csv::WriterBuilder::new().flexible(true).has_headers(false).from_writer(out);
    w.write_record([MAGIC, VERSION])?;
    match obj.shape() {
        SignalShape::Vector { n } => w.write_record(["shape", "vector", &n.to_string()])?,
        SignalShape::Matrix { rows, cols } => {
            w.write_record(["shape", "matrix", &rows.to_string(), &cols.to_string()])?
        }
    }
    w.write_record(["block_size", &obj.block_size().to_string()])?;
    w.write_record(floats("y", obj.observations().iter().copied()))?;
    w.write_record(floats("p", obj.sampling().iter().copied()))?;
    if let Some(ws) = w_star {
        w.write_record(floats("w_star", ws.iter().copied()))?;
    }
    for row in obj.design().row_iter() {
        w.write_record(floats("row", row.iter().copied()))?;
    }
    w.flush()?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> ObjectiveError {
    ObjectiveError::Snapshot(msg.into())
}

fn parse_usize(s: Option<&str>, what: &str) -> Result<usize, ObjectiveError> {
    s.ok_or_else(|| bad(format!("missing {what}")))?.trim().parse().map_err(|_| bad(format!("invalid {what}")))
}

fn parse_floats(rec: &csv::StringRecord, line: u64) -> Result<Vec<f64>, ObjectiveError> {
    rec.iter()
        .skip(1)
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad(format!("line {line}: invalid number {s:?}"))))
        .collect()
}

/// Reads a snapshot written by [`write_snapshot`].
pub fn read_snapshot<R: Read>(input: R) -> Result<Snapshot, ObjectiveError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).has_headers(false).from_reader(input);
    let mut records = rdr.records();
    let header = records.next().ok_or_else(|| bad("empty file"))??;
    if header.get(0) != Some(MAGIC) {
        return Err(bad("not a problem file"));
    }
    if header.get(1).map(str::trim) != Some(VERSION) {
        return Err(bad(format!("unsupported version {:?}", header.get(1).unwrap_or(""))));
    }
    let mut shape = None;
    let mut block_size = None;
    let mut y = None;
    let mut p = None;
    let mut w_star = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |pos| pos.line());
        match rec.get(0).map(str::trim) {
            Some("shape") => {
                shape = Some(match rec.get(1).map(str::trim) {
                    Some("vector") => SignalShape::Vector { n: parse_usize(rec.get(2), "length")? },
                    Some("matrix") => SignalShape::Matrix {
                        rows: parse_usize(rec.get(2), "row count")?,
                        cols: parse_usize(rec.get(3), "column count")?,
                    },
                    _ => return Err(bad(format!("line {line}: unknown shape"))),
                })
            }
            Some("block_size") => block_size = Some(parse_usize(rec.get(1), "block size")?),
            Some("y") => y = Some(parse_floats(&rec, line)?),
            Some("p") => p = Some(parse_floats(&rec, line)?),
            Some("w_star") => w_star = Some(parse_floats(&rec, line)?),
            Some("row") => rows.push(parse_floats(&rec, line)?),
            Some("") | None => {}
            Some(tag) => return Err(bad(format!("line {line}: unknown record {tag:?}"))),
        }
    }
    let shape = shape.ok_or_else(|| bad("missing shape record"))?;
    let b = block_size.ok_or_else(|| bad("missing block_size record"))?;
    let y = y.ok_or_else(|| bad("missing y record"))?;
    let dim = shape.dim();
    if rows.len() != y.len() {
        return Err(bad(format!("{} rows for {} observations", rows.len(), y.len())));
    }
    if let Some(r) = rows.iter().position(|r| r.len() != dim) {
        return Err(bad(format!("row {r} has {} entries, expected {dim}", rows[r].len())));
    }
    let design = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
    let mut objective = BlockObjective::from_design(design, DVector::from_vec(y), b, shape)?;
    if let Some(p) = p {
        validate_sampling(&p, objective.block_count())?;
        objective = objective.with_sampling(p)?;
    }
    let w_star = match w_star {
        Some(ws) if ws.len() != dim => return Err(bad(format!("w_star has {} entries, expected {dim}", ws.len()))),
        Some(ws) => Some(DVector::from_vec(ws)),
        None => None,
    };
    Ok(Snapshot { objective, w_star })
}

/// Convenience wrappers over files.
impl Snapshot {
    pub fn load(path: &Path) -> Result<Self, ObjectiveError> {
        read_snapshot(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ObjectiveError> {
        let file = std::fs::File::create(path)?;
        write_snapshot(std::io::BufWriter::new(file), &self.objective, self.w_star.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, gaussian_vector};
    use crate::rng::stream;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = stream(9, &[]);
        let a = gaussian_matrix(7, 4, &mut rng) * 1e-3;
        let y = gaussian_vector(7, &mut rng);
        let obj = BlockObjective::sparse_regression(a, y, 3).unwrap().with_sampling(vec![0.5, 0.3, 0.2]).unwrap();
        let ws = gaussian_vector(4, &mut rng);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &obj, Some(&ws)).unwrap();
        let back = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back.objective.design(), obj.design());
        assert_eq!(back.objective.observations(), obj.observations());
        assert_eq!(back.objective.sampling(), obj.sampling());
        assert_eq!(back.objective.block_size(), 3);
        assert_eq!(back.w_star.unwrap(), ws);
    }

    #[test]
    fn matrix_shape_round_trip() {
        let probes = vec![DMatrix::from_element(2, 3, 0.5); 2];
        let obj = BlockObjective::matrix_recovery(&probes, DVector::from_vec(vec![1.0, 2.0]), 1).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &obj, None).unwrap();
        let back = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back.objective.shape(), SignalShape::Matrix { rows: 2, cols: 3 });
        assert!(back.w_star.is_none());
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(read_snapshot("".as_bytes()).is_err());
        assert!(read_snapshot("other,1\n".as_bytes()).is_err());
        assert!(read_snapshot("stogreedy-problem,2\n".as_bytes()).is_err());
        let missing_row = "stogreedy-problem,1\nshape,vector,2\nblock_size,1\ny,1.0,2.0\nrow,1.0,0.0\n";
        assert!(matches!(read_snapshot(missing_row.as_bytes()), Err(ObjectiveError::Snapshot(_))));
        let ok = "stogreedy-problem,1\nshape,vector,2\nblock_size,1\ny,1.0,2.0\nrow,1.0,0.0\nrow,0.0,1.0\n";
        assert_eq!(read_snapshot(ok.as_bytes()).unwrap().objective.block_count(), 2);
    }
}
