//! Dataset files and the data-level script commands.
//!
//! Two on-disk layouts are supported (see `docs/data-format.md`):
//!
//! * ascii: a header line `n d k [t]`, then `n` rows of `d` reals followed by
//!   a class index (`k > 0`) or `t` real targets (`k = 0`).
//! * binary: `LYRD`, a version byte, little-endian `u32` `n d k` (plus `t`
//!   when `k = 0`), `n·d` `f64` samples, then `n` `u32` labels or `n·t` `f64`
//!   targets.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::ast::FileType;

pub const BINARY_MAGIC: &[u8; 4] = b"LYRD";
pub const BINARY_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Binary { path: PathBuf, message: String },
    #[error("cannot divide data by zero")]
    DivByZero,
    #[error("yuv needs three colour planes but samples have dimension {0}")]
    NotRgb(usize),
    #[error("reference data has dimension {found}, expected {expected}")]
    DimMismatch { expected: usize, found: usize },
}

/// Shape information available without reading the sample payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataHeader {
    pub samples: usize,
    pub dim: usize,
    /// Number of classes; zero for real-valued targets.
    pub classes: usize,
    /// Target dimension when `classes == 0`.
    pub targets: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    Classes { count: usize, index: Vec<u32> },
    Targets { dim: usize, values: Vec<f64> },
}

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Stats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub dim: usize,
    /// Row-major `n × dim`.
    pub samples: Vec<f64>,
    pub labels: Labels,
    /// Statistics of the data as it was before its last `zscore`/`center`.
    pub stats: Option<Stats>,
    pub balance: bool,
}

impl DataSet {
    pub fn new(dim: usize, samples: Vec<f64>, labels: Labels) -> Self {
        assert!(dim > 0 && samples.len() % dim == 0, "sample buffer must be n × dim");
        DataSet { dim, samples, labels, stats: None, balance: false }
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn header(&self) -> DataHeader {
        let (classes, targets) = match &self.labels {
            Labels::Classes { count, .. } => (*count, 0),
            Labels::Targets { dim, .. } => (0, *dim),
        };
        DataHeader { samples: self.len(), dim: self.dim, classes, targets }
    }

    pub fn class_of(&self, i: usize) -> Option<usize> {
        match &self.labels {
            Labels::Classes { index, .. } => Some(index[i] as usize),
            Labels::Targets { .. } => None,
        }
    }

    pub fn target(&self, i: usize) -> Option<&[f64]> {
        match &self.labels {
            Labels::Targets { dim, values } => Some(&values[i * dim..(i + 1) * dim]),
            Labels::Classes { .. } => None,
        }
    }

    pub fn compute_stats(&self) -> Stats {
        let n = self.len() as f64;
        let mut mean = vec![0.0; self.dim];
        for row in self.samples.chunks(self.dim) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.dim];
        for row in self.samples.chunks(self.dim) {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let sd = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Stats { mean, sd }
    }

    /// Statistics another data set should be normalized with when this one
    /// is named as the reference.
    pub fn reference_stats(&self) -> Stats {
        self.stats.clone().unwrap_or_else(|| self.compute_stats())
    }

    fn check_stats(&self, stats: &Stats) -> Result<(), DataError> {
        if stats.mean.len() != self.dim {
            return Err(DataError::DimMismatch { expected: self.dim, found: stats.mean.len() });
        }
        Ok(())
    }

    /// Per-dimension standardization. Dimensions with zero deviation map to 0.
    pub fn zscore(&mut self, reference: Option<&Stats>) -> Result<(), DataError> {
        let stats = match reference {
            Some(s) => s.clone(),
            None => self.compute_stats(),
        };
        self.check_stats(&stats)?;
        for row in self.samples.chunks_mut(self.dim) {
            for ((x, m), s) in row.iter_mut().zip(&stats.mean).zip(&stats.sd) {
                *x = if *s > 0.0 { (*x - m) / s } else { 0.0 };
            }
        }
        self.stats = Some(stats);
        Ok(())
    }

    pub fn center(&mut self, reference: Option<&Stats>) -> Result<(), DataError> {
        let stats = match reference {
            Some(s) => s.clone(),
            None => self.compute_stats(),
        };
        self.check_stats(&stats)?;
        for row in self.samples.chunks_mut(self.dim) {
            for (x, m) in row.iter_mut().zip(&stats.mean) {
                *x -= m;
            }
        }
        self.stats = Some(stats);
        Ok(())
    }

    pub fn div(&mut self, value: f64) -> Result<(), DataError> {
        if value == 0.0 {
            return Err(DataError::DivByZero);
        }
        self.samples.iter_mut().for_each(|x| *x /= value);
        Ok(())
    }

    /// RGB → YUV on planar samples (`R` plane, then `G`, then `B`), with
    /// Y = 0.299R + 0.587G + 0.114B, U = 0.492(B − Y), V = 0.877(R − Y).
    pub fn yuv(&mut self) -> Result<(), DataError> {
        if self.dim % 3 != 0 {
            return Err(DataError::NotRgb(self.dim));
        }
        let plane = self.dim / 3;
        for row in self.samples.chunks_mut(self.dim) {
            for p in 0..plane {
                let (r, g, b) = (row[p], row[plane + p], row[2 * plane + p]);
                let y = 0.299 * r + 0.587 * g + 0.114 * b;
                row[p] = y;
                row[plane + p] = 0.492 * (b - y);
                row[2 * plane + p] = 0.877 * (r - y);
            }
        }
        Ok(())
    }

    /// Sample indices for one epoch. With `balance` set, minority classes are
    /// topped up with uniformly drawn duplicates until every class matches the
    /// majority count. The result is shuffled.
    pub fn epoch_indices<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        if let (true, Labels::Classes { count, index }) = (self.balance, &self.labels) {
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); *count];
            for (i, &c) in index.iter().enumerate() {
                by_class[c as usize].push(i);
            }
            let majority = by_class.iter().map(Vec::len).max().unwrap_or(0);
            for members in by_class.iter().filter(|m| !m.is_empty()) {
                for _ in members.len()..majority {
                    idx.push(members[rng.random_range(0..members.len())]);
                }
            }
        }
        idx.shuffle(rng);
        idx
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

fn fmt_err(path: &Path, line: usize, message: impl Into<String>) -> DataError {
    DataError::Format { path: path.to_path_buf(), line, message: message.into() }
}

fn bin_err(path: &Path, message: impl Into<String>) -> DataError {
    DataError::Binary { path: path.to_path_buf(), message: message.into() }
}

fn parse_header_fields(path: &Path, line_no: usize, line: &str) -> Result<DataHeader, DataError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let nums: Vec<usize> = fields
        .iter()
        .map(|f| f.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| fmt_err(path, line_no, "header must be non-negative integers `n d k [t]`"))?;
    let (samples, dim, classes, targets) = match nums.as_slice() {
        [n, d, k] if *k > 0 => (*n, *d, *k, 0),
        [n, d, 0, t] => (*n, *d, 0, *t),
        [_, _, 0] => return Err(fmt_err(path, line_no, "regression header needs a target count `n d 0 t`")),
        _ => return Err(fmt_err(path, line_no, format!("malformed header `{line}`"))),
    };
    if samples == 0 || dim == 0 {
        return Err(fmt_err(path, line_no, "data set needs at least one sample of non-zero dimension"));
    }
    Ok(DataHeader { samples, dim, classes, targets })
}

pub fn read_header(path: &Path, format: FileType) -> Result<DataHeader, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    match format {
        FileType::Ascii => {
            let mut reader = BufReader::new(file);
            let mut line_no = 0;
            let mut line = String::new();
            loop {
                line.clear();
                line_no += 1;
                if reader.read_line(&mut line).map_err(io_err(path))? == 0 {
                    return Err(fmt_err(path, line_no, "missing header"));
                }
                if !line.trim().is_empty() {
                    return parse_header_fields(path, line_no, line.trim());
                }
            }
        }
        FileType::Binary => read_binary_header(path, &mut BufReader::new(file)),
    }
}

pub fn load(path: &Path, format: FileType) -> Result<DataSet, DataError> {
    match format {
        FileType::Ascii => load_ascii(path),
        FileType::Binary => load_binary(path),
    }
}

pub fn load_ascii(path: &Path) -> Result<DataSet, DataError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_ascii(path, &text)
}

/// Parses ascii dataset text; `path` is only used in error messages.
pub fn parse_ascii(path: &Path, text: &str) -> Result<DataSet, DataError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty());
    let Some((hl, header_line)) = lines.next() else {
        return Err(fmt_err(path, 1, "missing header"));
    };
    let header = parse_header_fields(path, hl, header_line.trim())?;
    let label_width = if header.classes > 0 { 1 } else { header.targets };
    let width = header.dim + label_width;

    let mut samples = Vec::with_capacity(header.samples * header.dim);
    let mut classes = Vec::new();
    let mut targets = Vec::new();
    let mut last_line = hl;
    for row in 0..header.samples {
        let Some((line_no, line)) = lines.next() else {
            return Err(fmt_err(path, last_line + 1, format!("expected {} rows, found {row}", header.samples)));
        };
        last_line = line_no;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != width {
            return Err(fmt_err(path, line_no, format!("expected {width} values, found {}", fields.len())));
        }
        for f in &fields[..header.dim] {
            let x: f64 = f.parse().map_err(|_| fmt_err(path, line_no, format!("`{f}` is not a number")))?;
            samples.push(x);
        }
        if header.classes > 0 {
            let f = fields[header.dim];
            let c: u32 = f.parse().map_err(|_| fmt_err(path, line_no, format!("`{f}` is not a class index")))?;
            if c as usize >= header.classes {
                return Err(fmt_err(path, line_no, format!("label {c} out of range 0..{}", header.classes)));
            }
            classes.push(c);
        } else {
            for f in &fields[header.dim..] {
                let t: f64 = f.parse().map_err(|_| fmt_err(path, line_no, format!("`{f}` is not a number")))?;
                targets.push(t);
            }
        }
    }
    if let Some((line_no, _)) = lines.next() {
        return Err(fmt_err(path, line_no, format!("more than the {} declared rows", header.samples)));
    }
    let labels = if header.classes > 0 {
        Labels::Classes { count: header.classes, index: classes }
    } else {
        Labels::Targets { dim: header.targets, values: targets }
    };
    Ok(DataSet::new(header.dim, samples, labels))
}

fn read_binary_header<R: Read>(path: &Path, r: &mut R) -> Result<DataHeader, DataError> {
    let short = |_| bin_err(path, "truncated header");
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(short)?;
    if &magic != BINARY_MAGIC {
        return Err(bin_err(path, "bad magic, expected LYRD"));
    }
    let version = r.read_u8().map_err(short)?;
    if version != BINARY_VERSION {
        return Err(bin_err(path, format!("unsupported version {version}")));
    }
    let samples = r.read_u32::<LittleEndian>().map_err(short)? as usize;
    let dim = r.read_u32::<LittleEndian>().map_err(short)? as usize;
    let classes = r.read_u32::<LittleEndian>().map_err(short)? as usize;
    let targets = if classes == 0 { r.read_u32::<LittleEndian>().map_err(short)? as usize } else { 0 };
    if samples == 0 || dim == 0 {
        return Err(bin_err(path, "data set needs at least one sample of non-zero dimension"));
    }
    Ok(DataHeader { samples, dim, classes, targets })
}

pub fn load_binary(path: &Path) -> Result<DataSet, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = BufReader::new(file);
    let header = read_binary_header(path, &mut r)?;
    let short = |_| bin_err(path, "truncated payload");
    let mut samples = vec![0.0; header.samples * header.dim];
    r.read_f64_into::<LittleEndian>(&mut samples).map_err(short)?;
    let labels = if header.classes > 0 {
        let mut index = vec![0u32; header.samples];
        r.read_u32_into::<LittleEndian>(&mut index).map_err(short)?;
        if let Some((i, c)) = index.iter().enumerate().find(|(_, &c)| c as usize >= header.classes) {
            return Err(bin_err(path, format!("sample {i}: label {c} out of range 0..{}", header.classes)));
        }
        Labels::Classes { count: header.classes, index }
    } else {
        let mut values = vec![0.0; header.samples * header.targets];
        r.read_f64_into::<LittleEndian>(&mut values).map_err(short)?;
        Labels::Targets { dim: header.targets, values }
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io_err(path))? != 0 {
        return Err(bin_err(path, "trailing bytes after payload"));
    }
    Ok(DataSet::new(header.dim, samples, labels))
}

pub fn write_ascii<W: Write>(ds: &DataSet, out: W) -> io::Result<()> {
    let mut w = BufWriter::new(out);
    let h = ds.header();
    if h.classes > 0 {
        writeln!(w, "{} {} {}", h.samples, h.dim, h.classes)?;
    } else {
        writeln!(w, "{} {} 0 {}", h.samples, h.dim, h.targets)?;
    }
    for i in 0..ds.len() {
        let mut fields: Vec<String> = ds.sample(i).iter().map(|x| x.to_string()).collect();
        match &ds.labels {
            Labels::Classes { index, .. } => fields.push(index[i].to_string()),
            Labels::Targets { .. } => fields.extend(ds.target(i).unwrap().iter().map(|x| x.to_string())),
        }
        writeln!(w, "{}", fields.join(" "))?;
    }
    w.flush()
}

pub fn write_binary<W: Write>(ds: &DataSet, out: W) -> io::Result<()> {
    let mut w = BufWriter::new(out);
    let h = ds.header();
    w.write_all(BINARY_MAGIC)?;
    w.write_u8(BINARY_VERSION)?;
    w.write_u32::<LittleEndian>(h.samples as u32)?;
    w.write_u32::<LittleEndian>(h.dim as u32)?;
    w.write_u32::<LittleEndian>(h.classes as u32)?;
    if h.classes == 0 {
        w.write_u32::<LittleEndian>(h.targets as u32)?;
    }
    for &x in &ds.samples {
        w.write_f64::<LittleEndian>(x)?;
    }
    match &ds.labels {
        Labels::Classes { index, .. } => {
            for &c in index {
                w.write_u32::<LittleEndian>(c)?;
            }
        }
        Labels::Targets { values, .. } => {
            for &t in values {
                w.write_f64::<LittleEndian>(t)?;
            }
        }
    }
    w.flush()
}

pub fn save(ds: &DataSet, path: &Path, format: FileType) -> Result<(), DataError> {
    let file = File::create(path).map_err(io_err(path))?;
    match format {
        FileType::Ascii => write_ascii(ds, file),
        FileType::Binary => write_binary(ds, file),
    }
    .map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn xor_file() -> DataSet {
        parse_ascii(Path::new("xor.txt"), "2 2 2\n0 1 1\n1 1 0\n").unwrap()
    }

    #[test]
    fn ascii_xor() {
        let ds = xor_file();
        assert_eq!(ds.header(), DataHeader { samples: 2, dim: 2, classes: 2, targets: 0 });
        assert_eq!(ds.sample(1), &[1.0, 1.0]);
        assert_eq!(ds.class_of(0), Some(1));
    }

    #[test]
    fn malformed_row_names_line() {
        let err = parse_ascii(Path::new("x"), "3 2 2\n0 1 1\n1 0\n1 1 0\n").unwrap_err();
        match err {
            DataError::Format { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn label_out_of_range() {
        let err = parse_ascii(Path::new("x"), "1 1 2\n0.5 2\n").unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");
    }

    #[test]
    fn regression_targets() {
        let ds = parse_ascii(Path::new("x"), "2 1 0 2\n1 2 3\n4 5 6\n").unwrap();
        assert_eq!(ds.target(1), Some(&[5.0, 6.0][..]));
        assert!(parse_ascii(Path::new("x"), "2 1 0\n1\n2\n").is_err());
    }

    #[test]
    fn zscore_constant_column_is_zero() {
        let mut ds = parse_ascii(Path::new("x"), "3 2 2\n5 1 0\n5 2 1\n5 3 0\n").unwrap();
        ds.zscore(None).unwrap();
        for i in 0..3 {
            assert_eq!(ds.sample(i)[0], 0.0);
        }
    }

    #[test]
    fn div_255() {
        let mut ds = parse_ascii(Path::new("x"), "2 2 2\n0 255 0\n255 0 1\n").unwrap();
        ds.div(255.0).unwrap();
        assert_eq!(ds.samples, vec![0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(ds.div(0.0), Err(DataError::DivByZero)));
    }

    #[test]
    fn yuv_of_pure_red() {
        let mut ds = DataSet::new(3, vec![1.0, 0.0, 0.0], Labels::Classes { count: 1, index: vec![0] });
        ds.yuv().unwrap();
        let y: f64 = 0.299;
        assert!((ds.samples[0] - y).abs() < 1e-15);
        assert!((ds.samples[1] - 0.492 * (0.0 - y)).abs() < 1e-15);
        assert!((ds.samples[2] - 0.877 * (1.0 - y)).abs() < 1e-15);
        assert!((ds.samples[1] + 0.147108).abs() < 1e-9);
        assert!((ds.samples[2] - 0.614777).abs() < 1e-9);
        let mut bad = xor_file();
        assert!(matches!(bad.yuv(), Err(DataError::NotRgb(2))));
    }

    #[test]
    fn reference_stats_prefer_cache() {
        let mut tr = parse_ascii(Path::new("x"), "2 1 2\n0 0\n4 1\n").unwrap();
        let mut ts = parse_ascii(Path::new("x"), "1 1 2\n4 0\n").unwrap();
        tr.zscore(None).unwrap();
        ts.zscore(Some(&tr.reference_stats())).unwrap();
        assert_eq!(ts.samples, vec![1.0]);
    }

    #[test]
    fn balance_tops_up_minorities() {
        let mut ds = parse_ascii(Path::new("x"), "4 1 2\n0 0\n1 0\n2 0\n3 1\n").unwrap();
        ds.balance = true;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let idx = ds.epoch_indices(&mut rng);
        assert_eq!(idx.len(), 6);
        assert_eq!(idx.iter().filter(|&&i| i == 3).count(), 3);
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let ds = parse_ascii(Path::new("x"), "2 3 0 1\n1 2 3 0.5\n4 5 6 -1\n").unwrap();
        save(&ds, &path, FileType::Binary).unwrap();
        let back = load_binary(&path).unwrap();
        assert_eq!(back, ds);
        assert_eq!(read_header(&path, FileType::Binary).unwrap(), ds.header());
        let mut bytes = Vec::new();
        write_binary(&back, &mut bytes).unwrap();
        assert_eq!(bytes, std::fs::read(&path).unwrap());
    }
}
