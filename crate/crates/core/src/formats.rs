//! On-disk formats.
//!
//! * Kernel cache (`FSKM`, binary little-endian): magic, version u32 = 1,
//!   kind u8, n u32, rows u32, cols u32, row-major f64 values, then the row
//!   ids and column ids as u32-length-prefixed UTF-8 strings.
//! * Dense features (`FSDM`, text): header `FSDM v1 <rows> <cols>`, then one
//!   `<id>\t<v1> <v2> … <vcols>` line per row.
//! * Word occurrences (`FSWO`, text): header `FSWO v1 <rows> <cols>`, then
//!   `<doc id>\t<position>\t<word>\t<v1> … <vcols>` in document order.
//! * Models (binary): `FSKR` for dual models, `FSRR` for primal models.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::explain::WordOccurrence;
use crate::learner::{DualModel, PrimalModel};
use crate::matrix::{DenseMatrix, KernelMatrix};
use crate::ngram::{KernelKind, PresenceRule};

pub const KERNEL_MAGIC: &[u8; 4] = b"FSKM";
pub const DUAL_MAGIC: &[u8; 4] = b"FSKR";
pub const PRIMAL_MAGIC: &[u8; 4] = b"FSRR";
pub const FORMAT_VERSION: u32 = 1;

fn fmt_err(origin: &str, message: impl Into<String>) -> Error {
    Error::Format {
        path: origin.to_string(),
        message: message.into(),
    }
}

struct ByteReader<R> {
    inner: R,
    origin: String,
}

impl<R: Read> ByteReader<R> {
    fn exact<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| fmt_err(&self.origin, format!("truncated file: {e}")))?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.exact::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.exact()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.exact()?))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; count * 8];
        self.inner
            .read_exact(&mut bytes)
            .map_err(|e| fmt_err(&self.origin, format!("truncated values: {e}")))?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let mut bytes = vec![0u8; len];
        self.inner
            .read_exact(&mut bytes)
            .map_err(|e| fmt_err(&self.origin, format!("truncated string: {e}")))?;
        String::from_utf8(bytes).map_err(|_| fmt_err(&self.origin, "id is not valid UTF-8"))
    }

    fn strings(&mut self, count: usize) -> Result<Vec<String>> {
        (0..count).map(|_| self.string()).collect()
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.exact::<4>()?;
        if &got != magic {
            return Err(fmt_err(
                &self.origin,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&got),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(fmt_err(&self.origin, format!("unsupported format version {version}")));
        }
        Ok(())
    }

    fn at_end(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(fmt_err(&self.origin, "trailing bytes after payload")),
            Err(e) => Err(fmt_err(&self.origin, e.to_string())),
        }
    }
}

fn put_string(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn to_u32(v: usize, what: &str) -> std::io::Result<u32> {
    u32::try_from(v).map_err(|_| {
        std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            format!("{what} {v} does not fit in u32"),
        )
    })
}

pub fn write_kernel(k: &KernelMatrix, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(KERNEL_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[k.kind().code()])?;
    w.write_all(&to_u32(k.n(), "n")?.to_le_bytes())?;
    w.write_all(&to_u32(k.rows(), "row count")?.to_le_bytes())?;
    w.write_all(&to_u32(k.cols(), "column count")?.to_le_bytes())?;
    let mut buf = Vec::with_capacity(k.values().len() * 8);
    for v in k.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    for id in k.row_ids().iter().chain(k.col_ids()) {
        put_string(&mut w, id)?;
    }
    w.flush()
}

pub fn read_kernel(r: impl Read, origin: &str) -> Result<KernelMatrix> {
    let mut r = ByteReader {
        inner: r,
        origin: origin.to_string(),
    };
    r.header(KERNEL_MAGIC)?;
    let code = r.u8()?;
    let kind = KernelKind::from_code(code).ok_or_else(|| fmt_err(origin, format!("unknown kernel kind {code}")))?;
    let n = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let values = r.f64s(rows * cols)?;
    let row_ids = r.strings(rows)?;
    let col_ids = r.strings(cols)?;
    r.at_end()?;
    KernelMatrix::new(row_ids, col_ids, values, kind, n)
}

pub fn save_kernel(k: &KernelMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_kernel(k, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_kernel(path: impl AsRef<Path>) -> Result<KernelMatrix> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_kernel(BufReader::new(f), &path.display().to_string())
}

/// Scientific notation with 17 significant digits; round-trips exactly.
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_vector(w: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            w.write_all(b" ")?;
        }
        w.write_all(fmt_float(*v).as_bytes())?;
    }
    Ok(())
}

pub fn write_dense(x: &DenseMatrix, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "FSDM v1 {} {}", x.rows(), x.dim())?;
    for (i, id) in x.row_ids().iter().enumerate() {
        w.write_all(id.as_bytes())?;
        w.write_all(b"\t")?;
        write_vector(&mut w, x.row(i))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn parse_header(line: Option<std::io::Result<String>>, magics: &[&str], origin: &str) -> Result<(usize, usize)> {
    let line = line
        .ok_or_else(|| fmt_err(origin, "missing header line"))?
        .map_err(|e| Error::io(origin, e))?;
    let parts: Vec<&str> = line.split_whitespace().collect();
    match parts.as_slice() {
        [magic, "v1", rows, cols] if magics.contains(magic) => {
            let rows = rows.parse().map_err(|_| fmt_err(origin, format!("bad row count {rows:?}")))?;
            let cols = cols.parse().map_err(|_| fmt_err(origin, format!("bad column count {cols:?}")))?;
            Ok((rows, cols))
        }
        [magic, version, ..] if magics.contains(magic) => {
            Err(fmt_err(origin, format!("unsupported version {version:?}")))
        }
        _ => Err(fmt_err(origin, format!("bad header {line:?}"))),
    }
}

fn parse_vector(text: &str, cols: usize, origin: &str, line_no: usize) -> Result<Vec<f64>> {
    let values = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>().map_err(|_| Error::Parse {
                path: origin.to_string(),
                line: line_no,
                message: format!("bad number {t:?}"),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != cols {
        return Err(Error::Parse {
            path: origin.to_string(),
            line: line_no,
            message: format!("expected {cols} values, found {}", values.len()),
        });
    }
    Ok(values)
}

pub fn read_dense(r: impl BufRead, origin: &str) -> Result<DenseMatrix> {
    let mut lines = r.lines();
    let (rows, cols) = parse_header(lines.next(), &["FSDM"], origin)?;
    let mut ids = Vec::with_capacity(rows);
    let mut values = Vec::with_capacity(rows * cols);
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.is_empty() {
            continue;
        }
        let (id, rest) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: line_no,
            message: "missing tab after id".into(),
        })?;
        ids.push(id.to_string());
        values.extend(parse_vector(rest, cols, origin, line_no)?);
    }
    if ids.len() != rows {
        return Err(fmt_err(origin, format!("header declares {rows} rows, found {}", ids.len())));
    }
    DenseMatrix::new(ids, cols, values)
}

pub fn save_dense(x: &DenseMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dense(x, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_dense(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dense(BufReader::new(f), &path.display().to_string())
}

pub fn write_occurrences(occs: &[WordOccurrence], dim: usize, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "FSWO v1 {} {}", occs.len(), dim)?;
    for o in occs {
        write!(w, "{}\t{}\t{}\t", o.doc_id, o.position, o.word)?;
        write_vector(&mut w, &o.vector)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Reads a word-occurrence stream. The `FSDM` magic is accepted as well.
pub fn read_occurrences(r: impl BufRead, origin: &str) -> Result<Vec<WordOccurrence>> {
    let mut lines = r.lines();
    let (rows, cols) = parse_header(lines.next(), &["FSWO", "FSDM"], origin)?;
    let mut out = Vec::with_capacity(rows);
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(4, '\t');
        let bad = |what: &str| Error::Parse {
            path: origin.to_string(),
            line: line_no,
            message: format!("missing {what}"),
        };
        let doc_id = parts.next().ok_or_else(|| bad("document id"))?;
        let position = parts.next().ok_or_else(|| bad("position"))?;
        let word = parts.next().ok_or_else(|| bad("word"))?;
        let rest = parts.next().ok_or_else(|| bad("vector"))?;
        let position = position.parse().map_err(|_| Error::Parse {
            path: origin.to_string(),
            line: line_no,
            message: format!("bad position {position:?}"),
        })?;
        out.push(WordOccurrence {
            doc_id: doc_id.to_string(),
            position,
            word: word.to_string(),
            vector: parse_vector(rest, cols, origin, line_no)?,
        });
    }
    if out.len() != rows {
        return Err(fmt_err(origin, format!("header declares {rows} rows, found {}", out.len())));
    }
    Ok(out)
}

pub fn load_occurrences(path: impl AsRef<Path>) -> Result<Vec<WordOccurrence>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_occurrences(BufReader::new(f), &path.display().to_string())
}

/// Per-document mean of occurrence vectors, in first-appearance order.
pub fn mean_by_document(occs: &[WordOccurrence], dim: usize) -> Result<DenseMatrix> {
    let mut order: Vec<String> = Vec::new();
    let mut sums: std::collections::HashMap<&str, (Vec<f64>, usize)> = Default::default();
    for o in occs {
        if o.vector.len() != dim {
            return Err(Error::arg(format!("occurrence vector of dimension {}", o.vector.len())));
        }
        let entry = sums.entry(o.doc_id.as_str()).or_insert_with(|| {
            order.push(o.doc_id.clone());
            (vec![0.0; dim], 0)
        });
        for (s, v) in entry.0.iter_mut().zip(&o.vector) {
            *s += v;
        }
        entry.1 += 1;
    }
    let mut values = Vec::with_capacity(order.len() * dim);
    for id in &order {
        let (sum, count) = &sums[id.as_str()];
        values.extend(sum.iter().map(|s| s / *count as f64));
    }
    DenseMatrix::new(order, dim, values)
}

pub fn write_dual_model(m: &DualModel, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(DUAL_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[m.kind.code()])?;
    w.write_all(&to_u32(m.n, "n")?.to_le_bytes())?;
    w.write_all(&[match m.presence {
        PresenceRule::AtLeastOnce => 0,
        PresenceRule::MoreThanOnce => 1,
    }])?;
    w.write_all(&m.lambda.to_le_bytes())?;
    w.write_all(&to_u32(m.train_ids.len(), "training size")?.to_le_bytes())?;
    for a in &m.coefficients {
        w.write_all(&a.to_le_bytes())?;
    }
    for id in &m.train_ids {
        put_string(&mut w, id)?;
    }
    w.flush()
}

pub fn read_dual_model(r: impl Read, origin: &str) -> Result<DualModel> {
    let mut r = ByteReader {
        inner: r,
        origin: origin.to_string(),
    };
    r.header(DUAL_MAGIC)?;
    let code = r.u8()?;
    let kind = KernelKind::from_code(code).ok_or_else(|| fmt_err(origin, format!("unknown kernel kind {code}")))?;
    let n = r.u32()? as usize;
    let presence = match r.u8()? {
        0 => PresenceRule::AtLeastOnce,
        1 => PresenceRule::MoreThanOnce,
        other => return Err(fmt_err(origin, format!("unknown presence rule {other}"))),
    };
    let lambda = r.f64()?;
    let m = r.u32()? as usize;
    let coefficients = r.f64s(m)?;
    let train_ids = r.strings(m)?;
    r.at_end()?;
    Ok(DualModel {
        train_ids,
        coefficients,
        lambda,
        kind,
        n,
        presence,
    })
}

pub fn write_primal_model(m: &PrimalModel, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(PRIMAL_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&m.lambda.to_le_bytes())?;
    w.write_all(&to_u32(m.weights.len(), "dimension")?.to_le_bytes())?;
    for v in &m.weights {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_primal_model(r: impl Read, origin: &str) -> Result<PrimalModel> {
    let mut r = ByteReader {
        inner: r,
        origin: origin.to_string(),
    };
    r.header(PRIMAL_MAGIC)?;
    let lambda = r.f64()?;
    let p = r.u32()? as usize;
    let weights = r.f64s(p)?;
    r.at_end()?;
    Ok(PrimalModel { weights, lambda })
}

/// A model file of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredModel {
    Dual(DualModel),
    Primal(PrimalModel),
}

pub fn save_model(model: &StoredModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    match model {
        StoredModel::Dual(m) => write_dual_model(m, f),
        StoredModel::Primal(m) => write_primal_model(m, f),
    }
    .map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<StoredModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    match bytes.get(..4) {
        Some(m) if m == DUAL_MAGIC => read_dual_model(bytes.as_slice(), &origin).map(StoredModel::Dual),
        Some(m) if m == PRIMAL_MAGIC => read_primal_model(bytes.as_slice(), &origin).map(StoredModel::Primal),
        _ => Err(fmt_err(&origin, "not a model file")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kernel(rows: usize, cols: usize) -> KernelMatrix {
        KernelMatrix::new(
            (0..rows).map(|i| format!("r{i}")).collect(),
            (0..cols).map(|i| format!("c{i}é")).collect(),
            (0..rows * cols).map(|v| v as f64 * 0.5).collect(),
            KernelKind::Hisk,
            7,
        )
        .unwrap()
    }

    #[test]
    fn kernel_header_layout() {
        let mut buf = Vec::new();
        write_kernel(&kernel(1, 2), &mut buf).unwrap();
        assert_eq!(&buf[..4], b"FSKM");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(buf[8], 1);
        assert_eq!(u32::from_le_bytes(buf[9..13].try_into().unwrap()), 7);
        assert_eq!(u32::from_le_bytes(buf[13..17].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[17..21].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(buf[29..37].try_into().unwrap()), 0.5);
        assert_eq!(u32::from_le_bytes(buf[37..41].try_into().unwrap()), 2);
        assert_eq!(&buf[41..43], b"r0");
    }

    #[test]
    fn kernel_rejects_bad_magic_and_version() {
        let mut buf = Vec::new();
        write_kernel(&kernel(2, 2), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_kernel(bad.as_slice(), "m"), Err(Error::Format { .. })));
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(matches!(read_kernel(bad.as_slice(), "m"), Err(Error::Format { .. })));
        assert!(read_kernel(&buf[..buf.len() - 1], "m").is_err());
        assert_eq!(read_kernel(buf.as_slice(), "m").unwrap(), kernel(2, 2));
    }

    #[test]
    fn dense_layout() {
        let x = DenseMatrix::from_rows(vec!["a".into(), "b".into()], vec![vec![1.0, -0.25], vec![0.1, 3e-9]]).unwrap();
        let mut buf = Vec::new();
        write_dense(&x, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("FSDM v1 2 2\na\t1.0000000000000000e0 -2.5000000000000000e-1\n"));
        assert_eq!(read_dense(buf.as_slice(), "m").unwrap(), x);
    }

    #[test]
    fn dense_errors() {
        assert!(read_dense("FSDM v2 1 1\na\t1\n".as_bytes(), "m").is_err());
        assert!(read_dense("XXXX v1 1 1\na\t1\n".as_bytes(), "m").is_err());
        assert!(matches!(read_dense("FSDM v1 1 2\na\t1\n".as_bytes(), "m"), Err(Error::Parse { line: 2, .. })));
        assert!(read_dense("FSDM v1 2 1\na\t1\n".as_bytes(), "m").is_err());
        // plain decimal input written by other tools
        let x = read_dense("FSDM v1 1 3\nd1\t0.12345678 -1 2.5e-3\n".as_bytes(), "m").unwrap();
        assert_eq!(x.row(0), &[0.12345678, -1.0, 0.0025]);
    }

    #[test]
    fn occurrence_stream_and_means() {
        let occs = vec![
            WordOccurrence { doc_id: "d1".into(), position: 0, word: "le".into(), vector: vec![1.0, 2.0] },
            WordOccurrence { doc_id: "d1".into(), position: 1, word: "chat".into(), vector: vec![3.0, 4.0] },
            WordOccurrence { doc_id: "d2".into(), position: 0, word: "x".into(), vector: vec![5.0, 6.0] },
        ];
        let mut buf = Vec::new();
        write_occurrences(&occs, 2, &mut buf).unwrap();
        assert!(buf.starts_with(b"FSWO v1 3 2\nd1\t0\tle\t"));
        let back = read_occurrences(buf.as_slice(), "m").unwrap();
        assert_eq!(back, occs);
        let means = mean_by_document(&back, 2).unwrap();
        assert_eq!(means.row_ids(), &["d1".to_string(), "d2".to_string()]);
        assert_eq!(means.row(0), &[2.0, 3.0]);
        let empty = read_occurrences("FSWO v1 0 768\n".as_bytes(), "m").unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn models_round_trip() {
        let d = DualModel {
            train_ids: vec!["a".into(), "b".into()],
            coefficients: vec![0.25, -1e-300],
            lambda: 1e-2,
            kind: KernelKind::Pbsk,
            n: 7,
            presence: PresenceRule::MoreThanOnce,
        };
        let mut buf = Vec::new();
        write_dual_model(&d, &mut buf).unwrap();
        assert_eq!(read_dual_model(buf.as_slice(), "m").unwrap(), d);
        assert!(read_primal_model(buf.as_slice(), "m").is_err());
        let p = PrimalModel { weights: vec![1.5, -2.0], lambda: 1e-6 };
        let mut buf = Vec::new();
        write_primal_model(&p, &mut buf).unwrap();
        assert_eq!(read_primal_model(buf.as_slice(), "m").unwrap(), p);
    }

    proptest! {
        #[test]
        fn dense_text_round_trips_exactly(rows in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 3), 0..6)) {
            let ids = (0..rows.len()).map(|i| format!("doc {i}")).collect();
            let x = DenseMatrix::new(ids, 3, rows.concat()).unwrap();
            let mut buf = Vec::new();
            write_dense(&x, &mut buf).unwrap();
            prop_assert_eq!(read_dense(buf.as_slice(), "m").unwrap(), x);
        }

        #[test]
        fn kernel_binary_round_trips(r in 0usize..5, c in 0usize..5, seed in any::<u64>()) {
            let k = KernelMatrix::new(
                (0..r).map(|i| format!("{seed}-{i}")).collect(),
                (0..c).map(|i| format!("c{i}")).collect(),
                (0..r * c).map(|i| (seed.wrapping_mul(i as u64 + 1) % 1000) as f64).collect(),
                KernelKind::Linear,
                0,
            ).unwrap();
            let mut buf = Vec::new();
            write_kernel(&k, &mut buf).unwrap();
            prop_assert_eq!(read_kernel(buf.as_slice(), "m").unwrap(), k);
        }
    }
}
