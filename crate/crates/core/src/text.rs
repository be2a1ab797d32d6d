//! Unicode helpers and the plain-text vector format shared by word vectors
//! and concept matrices.

use std::io::{BufRead, Write};

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// NFC + lowercase. Lowercasing can denormalize some sequences, so NFC is
/// applied on both sides.
pub fn fold_case(s: &str) -> String {
    s.nfc().collect::<String>().to_lowercase().nfc().collect()
}

/// One data row of a text vector file.
#[derive(Debug, Clone, PartialEq)]
pub struct TextRow {
    /// 1-based line number in the source.
    pub line: usize,
    pub key: String,
    pub values: Vec<f64>,
}

/// Streaming reader for the `"<count> <dim>"` header + `"<key> <f1> ... <fd>"`
/// row format.
pub struct TextVectorReader<R> {
    reader: R,
    count: usize,
    dim: usize,
    read: usize,
    line: usize,
    buf: String,
}

impl<R: BufRead> TextVectorReader<R> {
    pub fn new(mut reader: R) -> Result<Self> {
        let mut buf = String::new();
        if reader.read_line(&mut buf)? == 0 {
            return Err(Error::parse(1, "missing header"));
        }
        let mut fields = buf.split_ascii_whitespace();
        let (count, dim) = match (fields.next(), fields.next(), fields.next()) {
            (Some(c), Some(d), None) => (c, d),
            _ => return Err(Error::parse(1, "header must be `<count> <dim>`")),
        };
        let count: usize = count
            .parse()
            .map_err(|_| Error::parse(1, format!("invalid count `{count}`")))?;
        let dim: usize = dim
            .parse()
            .map_err(|_| Error::parse(1, format!("invalid dimension `{dim}`")))?;
        if dim == 0 {
            return Err(Error::parse(1, "dimension must be positive"));
        }
        Ok(TextVectorReader {
            reader,
            count,
            dim,
            read: 0,
            line: 1,
            buf,
        })
    }

    pub fn declared_rows(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn read_row(&mut self) -> Result<TextRow> {
        self.buf.clear();
        self.line += 1;
        if self.reader.read_line(&mut self.buf)? == 0 {
            return Err(Error::parse(
                self.line,
                format!("expected {} rows, found {}", self.count, self.read),
            ));
        }
        let row = self.buf.trim_end_matches(['\n', '\r']);
        // fastText dumps end every row with a trailing space.
        let row = row.strip_suffix(' ').unwrap_or(row);
        let mut fields = row.split(' ');
        let key = match fields.next() {
            Some(k) if !k.is_empty() => k.to_owned(),
            _ => return Err(Error::parse(self.line, "empty key")),
        };
        let mut values = Vec::with_capacity(self.dim);
        for field in fields {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(self.line, format!("invalid number `{field}`")))?;
            values.push(v);
        }
        if values.len() != self.dim {
            return Err(Error::parse(
                self.line,
                format!("expected {} components, found {}", self.dim, values.len()),
            ));
        }
        self.read += 1;
        Ok(TextRow {
            line: self.line,
            key,
            values,
        })
    }
}

impl<R: BufRead> Iterator for TextVectorReader<R> {
    type Item = Result<TextRow>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.read >= self.count {
            return None;
        }
        let row = self.read_row();
        if row.is_err() {
            // Stop after the first error.
            self.read = self.count;
        }
        Some(row)
    }
}

/// Writes rows in the text vector format. `{}` on f64 prints the shortest
/// representation that parses back to the same bits.
pub fn write_text_vectors<'a, W, I>(mut out: W, dim: usize, rows: I) -> Result<()>
where
    W: Write,
    I: ExactSizeIterator<Item = (&'a str, &'a [f64])>,
{
    writeln!(out, "{} {}", rows.len(), dim)?;
    for (key, values) in rows {
        if values.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: values.len(),
            });
        }
        out.write_all(key.as_bytes())?;
        for v in values {
            write!(out, " {v}")?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
