//! Row-stored dataset files, the block splitter and block readers.
//!
//! Binary layout: a 20-byte header (`"IBOS"`, `u16` version, `u16` flags with
//! bit 0 set when a response column is present, `u64` row count, `u32`
//! covariate count) followed by rows of little-endian `f64`, covariates first
//! and the response last.
//!
//! CSV layout: comma-separated, response in the last column, optional header
//! on the first line. A first line is treated as a header when none of its
//! fields parse as a number.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{validate_block, DataBlock, DatasetMeta};
use crate::dnc::{shuffle_assignment, Partitioning};
use crate::error::{Error, Result};
use crate::kv::{KvDoc, KvWriter};

pub const MAGIC: &[u8; 4] = b"IBOS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 20;
const FLAG_RESPONSE: u16 = 1;
pub const MANIFEST_NAME: &str = "blocks.manifest";
const IO_CHUNK_ROWS: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Binary => "bin",
            Format::Csv => "csv",
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Binary => "binary",
            Format::Csv => "csv",
        })
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" | "bin" => Ok(Format::Binary),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidParameter(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryHeader {
    pub n_rows: u64,
    pub p: u32,
    pub has_response: bool,
}

impl BinaryHeader {
    pub fn row_width(&self) -> usize {
        self.p as usize + usize::from(self.has_response)
    }

    pub fn payload_len(&self) -> u64 {
        self.n_rows * self.row_width() as u64 * 8
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..4].copy_from_slice(MAGIC);
        b[4..6].copy_from_slice(&VERSION.to_le_bytes());
        let flags = if self.has_response { FLAG_RESPONSE } else { 0 };
        b[6..8].copy_from_slice(&flags.to_le_bytes());
        b[8..16].copy_from_slice(&self.n_rows.to_le_bytes());
        b[16..20].copy_from_slice(&self.p.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN]) -> Result<Self> {
        if &b[..4] != MAGIC {
            return Err(Error::HeaderMismatch("missing binary magic bytes".into()));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(Error::HeaderMismatch(format!("unsupported binary version {version}")));
        }
        let flags = u16::from_le_bytes([b[6], b[7]]);
        let n_rows = u64::from_le_bytes(b[8..16].try_into().expect("8 bytes"));
        let p = u32::from_le_bytes(b[16..20].try_into().expect("4 bytes"));
        if p == 0 {
            return Err(Error::HeaderMismatch("covariate count is zero".into()));
        }
        Ok(Self { n_rows, p, has_response: flags & FLAG_RESPONSE != 0 })
    }

    pub fn meta(&self, source: &Path) -> Result<DatasetMeta> {
        DatasetMeta::new(self.n_rows as usize, self.p as usize, self.has_response, source.to_path_buf())
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

/// Reads and checks the header of a binary file, including its payload length.
pub fn read_binary_header(path: &Path) -> Result<BinaryHeader> {
    let mut f = open(path)?;
    let header = read_header_from(&mut f, path)?;
    let len = f.metadata().map_err(|e| Error::io(path, e))?.len();
    if len != HEADER_LEN as u64 + header.payload_len() {
        return Err(Error::HeaderMismatch(format!(
            "{}: header declares {} rows of {} values but the payload has {} bytes",
            path.display(),
            header.n_rows,
            header.row_width(),
            len.saturating_sub(HEADER_LEN as u64)
        )));
    }
    Ok(header)
}

fn read_header_from(r: &mut impl Read, path: &Path) -> Result<BinaryHeader> {
    let mut b = [0u8; HEADER_LEN];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::HeaderMismatch(format!("{}: file shorter than the binary header", path.display())),
        _ => Error::io(path, e),
    })?;
    BinaryHeader::from_bytes(&b)
}

/// Guesses the format from the leading bytes.
pub fn detect_format(path: &Path) -> Result<Format> {
    let mut f = open(path)?;
    let mut b = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let n = f.read(&mut b[got..]).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        got += n;
    }
    Ok(if got == 4 && &b == MAGIC { Format::Binary } else { Format::Csv })
}

/// Detected format, checked against a declared one.
pub fn resolve_format(path: &Path, declared: Option<Format>) -> Result<Format> {
    let found = detect_format(path)?;
    match declared {
        Some(d) if d != found => Err(Error::HeaderMismatch(format!(
            "{} was declared {d} but looks like {found}",
            path.display()
        ))),
        _ => Ok(found),
    }
}

/// Streams rows into a binary file; the row count is patched in on `finish`.
pub struct BinaryWriter {
    out: BufWriter<File>,
    path: PathBuf,
    header: BinaryHeader,
    buf: Vec<u8>,
}

impl BinaryWriter {
    pub fn create(path: &Path, p: usize, has_response: bool) -> Result<Self> {
        let header = BinaryHeader { n_rows: 0, p: p as u32, has_response };
        let mut out = BufWriter::with_capacity(1 << 20, create(path)?);
        out.write_all(&header.to_bytes()).map_err(|e| Error::io(path, e))?;
        Ok(Self { out, path: path.to_path_buf(), header, buf: Vec::new() })
    }

    /// Writes one row; `values` holds covariates then the response if any.
    pub fn write_row(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.header.row_width() {
            return Err(Error::DimensionMismatch { expected: self.header.row_width(), found: values.len() });
        }
        self.buf.clear();
        for v in values {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self.out.write_all(&self.buf).map_err(|e| Error::io(&self.path, e))?;
        self.header.n_rows += 1;
        Ok(())
    }

    pub fn write_block(&mut self, block: &DataBlock) -> Result<()> {
        let p = self.header.p as usize;
        if block.n_covariates() != p || block.responses().is_some() != self.header.has_response {
            return Err(Error::DimensionMismatch { expected: self.header.row_width(), found: block.n_covariates() });
        }
        let cols: Vec<&[f64]> = (0..p).map(|j| block.column(j)).collect();
        let y = block.responses().map(|y| y.as_slice());
        self.buf.clear();
        for i in 0..block.rows() {
            for c in &cols {
                self.buf.extend_from_slice(&c[i].to_le_bytes());
            }
            if let Some(y) = y {
                self.buf.extend_from_slice(&y[i].to_le_bytes());
            }
            if self.buf.len() >= 1 << 20 {
                self.out.write_all(&self.buf).map_err(|e| Error::io(&self.path, e))?;
                self.buf.clear();
            }
        }
        self.out.write_all(&self.buf).map_err(|e| Error::io(&self.path, e))?;
        self.header.n_rows += block.rows() as u64;
        Ok(())
    }

    pub fn finish(mut self) -> Result<BinaryHeader> {
        let path = self.path.clone();
        let wrap = |e| Error::io(&path, e);
        self.out.flush().map_err(wrap)?;
        let mut f = self.out.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
        f.seek(SeekFrom::Start(0)).map_err(wrap)?;
        f.write_all(&self.header.to_bytes()).map_err(wrap)?;
        f.sync_data().ok();
        Ok(self.header)
    }
}

pub fn write_binary(path: &Path, block: &DataBlock) -> Result<()> {
    let mut w = BinaryWriter::create(path, block.n_covariates(), block.responses().is_some())?;
    w.write_block(block)?;
    w.finish().map(|_| ())
}

/// Reads `rows` rows of `header`'s shape from `r` into a block.
fn read_binary_rows(r: &mut impl Read, header: &BinaryHeader, rows: usize, path: &Path) -> Result<DataBlock> {
    let p = header.p as usize;
    let width = header.row_width();
    let mut cov = DMatrix::zeros(rows, p);
    let mut y = header.has_response.then(|| DVector::zeros(rows));
    let mut buf = vec![0u8; IO_CHUNK_ROWS.min(rows.max(1)) * width * 8];
    let mut done = 0;
    while done < rows {
        let take = IO_CHUNK_ROWS.min(rows - done);
        let bytes = &mut buf[..take * width * 8];
        r.read_exact(bytes).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::HeaderMismatch(format!("{}: payload is truncated", path.display())),
            _ => Error::io(path, e),
        })?;
        for (i, row) in bytes.chunks_exact(width * 8).enumerate() {
            for (j, v) in row.chunks_exact(8).enumerate() {
                let v = f64::from_le_bytes(v.try_into().expect("8 bytes"));
                if j < p {
                    cov[(done + i, j)] = v;
                } else if let Some(y) = y.as_mut() {
                    y[done + i] = v;
                }
            }
        }
        done += take;
    }
    DataBlock::new(cov, y)
}

pub fn read_binary(path: &Path) -> Result<DataBlock> {
    let header = read_binary_header(path)?;
    let mut r = BufReader::with_capacity(1 << 20, open(path)?);
    r.seek(SeekFrom::Start(HEADER_LEN as u64)).map_err(|e| Error::io(path, e))?;
    let block = read_binary_rows(&mut r, &header, header.n_rows as usize, path)?;
    validate_block(&block, &header.meta(path)?)?;
    Ok(block)
}

/// Reads consecutive row ranges of one binary file as numbered blocks.
pub struct BinaryBlockReader {
    reader: BufReader<File>,
    path: PathBuf,
    header: BinaryHeader,
    rows_read: usize,
    next_index: usize,
}

impl BinaryBlockReader {
    pub fn open(path: &Path) -> Result<Self> {
        let header = read_binary_header(path)?;
        let mut reader = BufReader::with_capacity(1 << 20, open(path)?);
        reader.seek(SeekFrom::Start(HEADER_LEN as u64)).map_err(|e| Error::io(path, e))?;
        Ok(Self { reader, path: path.to_path_buf(), header, rows_read: 0, next_index: 0 })
    }

    pub fn header(&self) -> BinaryHeader {
        self.header
    }

    pub fn meta(&self) -> Result<DatasetMeta> {
        self.header.meta(&self.path)
    }

    /// Next block of up to `rows` rows, or `None` at end of file.
    pub fn next_block(&mut self, rows: usize) -> Result<Option<DataBlock>> {
        let left = self.header.n_rows as usize - self.rows_read;
        if left == 0 {
            return Ok(None);
        }
        let take = rows.min(left).max(1);
        let block = read_binary_rows(&mut self.reader, &self.header, take, &self.path)?
            .with_placement(self.next_index, self.rows_read);
        validate_block(&block, &self.meta()?)?;
        self.rows_read += take;
        self.next_index += 1;
        Ok(Some(block))
    }
}

/// True when no field of `line` parses as a number.
fn is_header_line(line: &str) -> bool {
    line.split(',').all(|f| f.trim().parse::<f64>().is_err())
}

pub fn csv_header(p: usize, has_response: bool) -> String {
    let mut names: Vec<String> = (1..=p).map(|j| format!("z{j}")).collect();
    if has_response {
        names.push("y".into());
    }
    names.join(",")
}

/// Parses a CSV file. `expect_p` fixes the covariate count; otherwise it is
/// inferred from the first data row.
pub fn read_csv(path: &Path, has_response: bool, expect_p: Option<usize>) -> Result<DataBlock> {
    let reader = BufReader::with_capacity(1 << 20, open(path)?);
    let mut width = expect_p.map(|p| p + usize::from(has_response));
    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if i == 0 && is_header_line(&line) {
            continue;
        }
        let before = values.len();
        for (col, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::MalformedRow {
                line: lineno,
                reason: format!("field {} `{}` is not a number", col + 1, field.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { row: rows, col });
            }
            values.push(v);
        }
        let got = values.len() - before;
        let w = *width.get_or_insert(got);
        if got != w {
            return Err(Error::MalformedRow { line: lineno, reason: format!("expected {w} fields, found {got}") });
        }
        rows += 1;
    }
    let width = width.ok_or(Error::EmptyInput)?;
    let p = width.checked_sub(usize::from(has_response)).filter(|&p| p > 0).ok_or_else(|| {
        Error::MalformedRow { line: 1, reason: "rows have no covariate columns".into() }
    })?;
    if rows == 0 {
        return Err(Error::EmptyInput);
    }
    let all = DMatrix::from_row_slice(rows, width, &values);
    let cov = all.columns(0, p).into_owned();
    let y = has_response.then(|| all.column(p).into_owned());
    DataBlock::new(cov, y)
}

pub fn write_csv(path: &Path, block: &DataBlock, header: bool) -> Result<()> {
    let mut out = BufWriter::with_capacity(1 << 20, create(path)?);
    let p = block.n_covariates();
    let wrap = |e| Error::io(path, e);
    if header {
        writeln!(out, "{}", csv_header(p, block.responses().is_some())).map_err(wrap)?;
    }
    let mut line = String::new();
    for i in 0..block.rows() {
        line.clear();
        for j in 0..p {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&block.column(j)[i].to_string());
        }
        if let Some(y) = block.responses() {
            line.push(',');
            line.push_str(&y[i].to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(wrap)?;
    }
    out.flush().map_err(wrap)
}

/// Reads a whole dataset file. `has_response` only matters for CSV.
pub fn read_dataset(path: &Path, format: Option<Format>, has_response: bool) -> Result<DataBlock> {
    match resolve_format(path, format)? {
        Format::Binary => read_binary(path),
        Format::Csv => read_csv(path, has_response, None),
    }
}

pub fn write_dataset(path: &Path, block: &DataBlock, format: Format) -> Result<()> {
    match format {
        Format::Binary => write_binary(path, block),
        Format::Csv => write_csv(path, block, true),
    }
}

/// Reads one block file and validates it against the parent dataset.
pub fn read_block(path: &Path, meta: &DatasetMeta) -> Result<DataBlock> {
    let block = match detect_format(path)? {
        Format::Binary => {
            let header = read_binary_header(path)?;
            if header.p as usize != meta.n_covariates || header.has_response != meta.has_response {
                return Err(Error::HeaderMismatch(format!(
                    "{}: block has p = {} (response: {}) but the dataset has p = {} (response: {})",
                    path.display(),
                    header.p,
                    header.has_response,
                    meta.n_covariates,
                    meta.has_response
                )));
            }
            read_binary(path)?
        }
        Format::Csv => read_csv(path, meta.has_response, Some(meta.n_covariates))?,
    };
    validate_block(&block, meta)?;
    Ok(block)
}

/// Shape of a source file, without reading its values.
pub fn probe(path: &Path, format: Option<Format>, has_response: bool) -> Result<(Format, DatasetMeta)> {
    let fmt = resolve_format(path, format)?;
    let meta = match fmt {
        Format::Binary => read_binary_header(path)?.meta(path)?,
        Format::Csv => {
            let (rows, width, _) = scan_csv_shape(path)?;
            let p = width.saturating_sub(usize::from(has_response));
            DatasetMeta::new(rows, p, has_response, path.to_path_buf())?
        }
    };
    Ok((fmt, meta))
}

/// Counts data rows and checks field counts; returns `(rows, width, header)`.
fn scan_csv_shape(path: &Path) -> Result<(usize, usize, Option<String>)> {
    let reader = BufReader::with_capacity(1 << 20, open(path)?);
    let mut rows = 0;
    let mut width = None;
    let mut header = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if i == 0 && is_header_line(&line) {
            header = Some(line);
            continue;
        }
        check_fields(&line, i + 1, &mut width)?;
        rows += 1;
    }
    Ok((rows, width.ok_or(Error::EmptyInput)?, header))
}

fn check_fields(line: &str, lineno: usize, width: &mut Option<usize>) -> Result<()> {
    let got = line.split(',').count();
    let w = *width.get_or_insert(got);
    if got != w || line.trim().is_empty() {
        return Err(Error::MalformedRow { line: lineno, reason: format!("expected {w} fields, found {got}") });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockEntry {
    /// File name relative to the manifest directory.
    pub path: PathBuf,
    pub row_offset: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockManifest {
    pub format: Format,
    pub n_rows: usize,
    pub n_covariates: usize,
    pub has_response: bool,
    pub partitioning: Partitioning,
    pub rows_per_block: usize,
    pub blocks: Vec<BlockEntry>,
}

impl BlockManifest {
    pub fn to_kv(&self) -> String {
        let mut w = KvWriter::new();
        w.put("format", self.format)
            .put("n_rows", self.n_rows)
            .put("n_covariates", self.n_covariates)
            .put("has_response", self.has_response);
        match self.partitioning {
            Partitioning::Sequential => w.put("partitioning", "sequential"),
            Partitioning::RandomShuffle { seed } => w.put("partitioning", "shuffle").put("shuffle_seed", seed),
        };
        w.put("rows_per_block", self.rows_per_block).put("blocks", self.blocks.len());
        for (b, e) in self.blocks.iter().enumerate() {
            w.put(format_args!("block[{}].path", b + 1), e.path.display())
                .put(format_args!("block[{}].row_offset", b + 1), e.row_offset)
                .put(format_args!("block[{}].rows", b + 1), e.rows);
        }
        w.finish()
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        let partitioning = match doc.require("partitioning")?.value.as_str() {
            "sequential" => Partitioning::Sequential,
            "shuffle" => Partitioning::RandomShuffle { seed: doc.parse_value("shuffle_seed")? },
            _ => return Err(doc.require("partitioning")?.error("expected sequential or shuffle")),
        };
        let n_blocks: usize = doc.parse_value("blocks")?;
        let blocks = (1..=n_blocks)
            .map(|b| {
                Ok(BlockEntry {
                    path: PathBuf::from(&doc.require(&format!("block[{b}].path"))?.value),
                    row_offset: doc.parse_value(&format!("block[{b}].row_offset"))?,
                    rows: doc.parse_value(&format!("block[{b}].rows"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let m = Self {
            format: doc.parse_value("format")?,
            n_rows: doc.parse_value("n_rows")?,
            n_covariates: doc.parse_value("n_covariates")?,
            has_response: doc.parse_value("has_response")?,
            partitioning,
            rows_per_block: doc.parse_value("rows_per_block")?,
            blocks,
        };
        if m.blocks.iter().map(|b| b.rows).sum::<usize>() != m.n_rows {
            return Err(Error::Config { line: 0, key: "blocks".into(), message: "block rows do not add up to n_rows".into() });
        }
        Ok(m)
    }
}

fn block_file_name(b: usize, format: Format) -> PathBuf {
    PathBuf::from(format!("block_{:05}.{}", b + 1, format.extension()))
}

fn write_manifest(out_dir: &Path, m: &BlockManifest) -> Result<()> {
    let path = out_dir.join(MANIFEST_NAME);
    fs::write(&path, m.to_kv()).map_err(|e| Error::io(&path, e))
}

/// Cuts `source` into consecutive files of `rows_per_block` rows (the last
/// may be short). Binary payload bytes are copied verbatim and CSV lines are
/// copied without parsing, with any header repeated in every block.
pub fn split(source: &Path, rows_per_block: usize, out_dir: &Path, format: Option<Format>, has_response: bool) -> Result<BlockManifest> {
    if rows_per_block == 0 {
        return Err(Error::InvalidParameter("rows per block must be positive".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let fmt = resolve_format(source, format)?;
    let (meta, blocks) = match fmt {
        Format::Binary => split_binary(source, rows_per_block, out_dir)?,
        Format::Csv => split_csv(source, rows_per_block, out_dir, has_response)?,
    };
    let m = BlockManifest {
        format: fmt,
        n_rows: meta.n_rows,
        n_covariates: meta.n_covariates,
        has_response: meta.has_response,
        partitioning: Partitioning::Sequential,
        rows_per_block,
        blocks,
    };
    write_manifest(out_dir, &m)?;
    Ok(m)
}

fn split_binary(source: &Path, rows_per_block: usize, out_dir: &Path) -> Result<(DatasetMeta, Vec<BlockEntry>)> {
    let header = read_binary_header(source)?;
    let meta = header.meta(source)?;
    let mut r = BufReader::with_capacity(1 << 20, open(source)?);
    r.seek(SeekFrom::Start(HEADER_LEN as u64)).map_err(|e| Error::io(source, e))?;
    let row_bytes = header.row_width() as u64 * 8;
    let mut entries = Vec::new();
    let mut offset = 0usize;
    while offset < meta.n_rows {
        let rows = rows_per_block.min(meta.n_rows - offset);
        let name = block_file_name(entries.len(), Format::Binary);
        let path = out_dir.join(&name);
        let mut out = BufWriter::with_capacity(1 << 20, create(&path)?);
        let h = BinaryHeader { n_rows: rows as u64, ..header };
        out.write_all(&h.to_bytes()).map_err(|e| Error::io(&path, e))?;
        let want = rows as u64 * row_bytes;
        let copied = std::io::copy(&mut (&mut r).take(want), &mut out).map_err(|e| Error::io(&path, e))?;
        if copied != want {
            return Err(Error::HeaderMismatch(format!("{}: payload is truncated", source.display())));
        }
        out.flush().map_err(|e| Error::io(&path, e))?;
        entries.push(BlockEntry { path: name, row_offset: offset, rows });
        offset += rows;
    }
    Ok((meta, entries))
}

fn split_csv(source: &Path, rows_per_block: usize, out_dir: &Path, has_response: bool) -> Result<(DatasetMeta, Vec<BlockEntry>)> {
    let reader = BufReader::with_capacity(1 << 20, open(source)?);
    let mut header: Option<String> = None;
    let mut width = None;
    let mut entries: Vec<BlockEntry> = Vec::new();
    let mut out: Option<(PathBuf, BufWriter<File>)> = None;
    let mut rows = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if i == 0 && is_header_line(&line) {
            header = Some(line);
            continue;
        }
        check_fields(&line, i + 1, &mut width)?;
        if rows.is_multiple_of(rows_per_block) {
            if let Some((path, mut w)) = out.take() {
                w.flush().map_err(|e| Error::io(&path, e))?;
            }
            let name = block_file_name(entries.len(), Format::Csv);
            let path = out_dir.join(&name);
            let mut w = BufWriter::with_capacity(1 << 20, create(&path)?);
            if let Some(h) = &header {
                writeln!(w, "{h}").map_err(|e| Error::io(&path, e))?;
            }
            entries.push(BlockEntry { path: name, row_offset: rows, rows: 0 });
            out = Some((path, w));
        }
        let (path, w) = out.as_mut().expect("block file open");
        writeln!(w, "{line}").map_err(|e| Error::io(&*path, e))?;
        entries.last_mut().expect("entry").rows += 1;
        rows += 1;
    }
    if let Some((path, mut w)) = out.take() {
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    let width = width.ok_or(Error::EmptyInput)?;
    let p = width.checked_sub(usize::from(has_response)).filter(|&p| p > 0).ok_or_else(|| Error::MalformedRow {
        line: 1,
        reason: "rows have no covariate columns".into(),
    })?;
    Ok((DatasetMeta::new(rows, p, has_response, source.to_path_buf())?, entries))
}

/// Random partition on disk: rows are assigned to `blocks` balanced blocks by
/// a seeded permutation and streamed to per-block files, keeping source
/// order within each block.
pub fn shuffle_split(
    source: &Path,
    blocks: usize,
    seed: u64,
    out_dir: &Path,
    format: Option<Format>,
    has_response: bool,
) -> Result<BlockManifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (fmt, meta) = probe(source, format, has_response)?;
    let assignment = shuffle_assignment(meta.n_rows, blocks, seed)?;
    let owner = assignment.block_of_rows();
    let names: Vec<PathBuf> = (0..blocks).map(|b| block_file_name(b, fmt)).collect();

    match fmt {
        Format::Binary => {
            let header = read_binary_header(source)?;
            let mut writers = names
                .iter()
                .map(|n| BinaryWriter::create(&out_dir.join(n), meta.n_covariates, meta.has_response))
                .collect::<Result<Vec<_>>>()?;
            let mut r = BufReader::with_capacity(1 << 20, open(source)?);
            r.seek(SeekFrom::Start(HEADER_LEN as u64)).map_err(|e| Error::io(source, e))?;
            let width = header.row_width();
            let mut buf = vec![0u8; width * 8];
            let mut row = vec![0.0; width];
            for &b in &owner {
                r.read_exact(&mut buf).map_err(|e| Error::io(source, e))?;
                for (v, bytes) in row.iter_mut().zip(buf.chunks_exact(8)) {
                    *v = f64::from_le_bytes(bytes.try_into().expect("8 bytes"));
                }
                writers[b].write_row(&row)?;
            }
            for w in writers {
                w.finish()?;
            }
        }
        Format::Csv => {
            let mut writers = names
                .iter()
                .map(|n| {
                    let path = out_dir.join(n);
                    Ok((BufWriter::new(create(&path)?), path))
                })
                .collect::<Result<Vec<_>>>()?;
            let reader = BufReader::with_capacity(1 << 20, open(source)?);
            let mut row = 0usize;
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| Error::io(source, e))?;
                if i == 0 && is_header_line(&line) {
                    for (w, path) in writers.iter_mut() {
                        writeln!(w, "{line}").map_err(|e| Error::io(&*path, e))?;
                    }
                    continue;
                }
                let (w, path) = &mut writers[owner[row]];
                writeln!(w, "{line}").map_err(|e| Error::io(&*path, e))?;
                row += 1;
            }
            for (mut w, path) in writers {
                w.flush().map_err(|e| Error::io(&path, e))?;
            }
        }
    }

    let entries = names
        .into_iter()
        .zip(&assignment.sizes)
        .map(|(path, &rows)| BlockEntry { path, row_offset: 0, rows })
        .collect();
    let m = BlockManifest {
        format: fmt,
        n_rows: meta.n_rows,
        n_covariates: meta.n_covariates,
        has_response: meta.has_response,
        partitioning: Partitioning::RandomShuffle { seed },
        rows_per_block: meta.n_rows.div_ceil(blocks),
        blocks: entries,
    };
    write_manifest(out_dir, &m)?;
    Ok(m)
}

/// A directory of block files described by a manifest.
#[derive(Debug, Clone)]
pub struct BlockSet {
    pub dir: PathBuf,
    pub manifest: BlockManifest,
    row_ids: Option<Vec<Vec<usize>>>,
}

impl BlockSet {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest = BlockManifest::from_kv(&text)?;
        let row_ids = match manifest.partitioning {
            Partitioning::Sequential => None,
            Partitioning::RandomShuffle { seed } => {
                let a = shuffle_assignment(manifest.n_rows, manifest.blocks.len(), seed)?;
                if a.sizes != manifest.blocks.iter().map(|b| b.rows).collect::<Vec<_>>() {
                    return Err(Error::Config { line: 0, key: "blocks".into(), message: "block sizes do not match the shuffle".into() });
                }
                Some(a.sorted_blocks())
            }
        };
        Ok(Self { dir: dir.to_path_buf(), manifest, row_ids })
    }

    pub fn len(&self) -> usize {
        self.manifest.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.blocks.is_empty()
    }

    pub fn meta(&self) -> Result<DatasetMeta> {
        DatasetMeta::new(self.manifest.n_rows, self.manifest.n_covariates, self.manifest.has_response, self.dir.clone())
    }

    pub fn block_path(&self, b: usize) -> PathBuf {
        self.dir.join(&self.manifest.blocks[b].path)
    }

    /// Loads block `b` with its global placement.
    pub fn read_block(&self, b: usize) -> Result<DataBlock> {
        let entry = &self.manifest.blocks[b];
        let block = read_block(&self.block_path(b), &self.meta()?)?;
        if block.rows() != entry.rows {
            return Err(Error::HeaderMismatch(format!(
                "{}: manifest lists {} rows, file has {}",
                entry.path.display(),
                entry.rows,
                block.rows()
            )));
        }
        let block = block.with_placement(b, entry.row_offset);
        match &self.row_ids {
            Some(ids) => block.with_row_ids(ids[b].clone()),
            None => Ok(block),
        }
    }

    pub fn read_all(&self) -> Result<Vec<DataBlock>> {
        (0..self.len()).map(|b| self.read_block(b)).collect()
    }

    /// Loads and processes blocks one at a time per worker, in block order.
    pub fn map_blocks<T, F>(&self, threads: Option<usize>, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(DataBlock) -> Result<T> + Sync + Send,
    {
        self.map_indices(threads, |b| self.read_block(b).and_then(&f))
    }

    pub(crate) fn map_indices<T, F>(&self, threads: Option<usize>, run: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        match threads {
            Some(1) => (0..self.len()).map(run).collect(),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
                .install(|| (0..self.len()).into_par_iter().map(run).collect()),
            None => (0..self.len()).into_par_iter().map(run).collect(),
        }
    }
}
