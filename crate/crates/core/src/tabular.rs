//! Delimiter-separated input handling shared by every file reader.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};

const CANDIDATE_DELIMITERS: [u8; 4] = *b",\t;|";

/// Picks the candidate delimiter that occurs most often in the header line;
/// comma when none occurs.
pub(crate) fn sniff_delimiter(header: &[u8]) -> u8 {
    CANDIDATE_DELIMITERS
        .iter()
        .copied()
        .max_by_key(|d| {
            let n = header.iter().filter(|b| *b == d).count();
            // prefer earlier candidates on ties
            (n, std::cmp::Reverse(CANDIDATE_DELIMITERS.iter().position(|x| x == d)))
        })
        .filter(|d| header.contains(d))
        .unwrap_or(b',')
}

/// A header-addressed table reader. Lines starting with `#` are comments.
pub(crate) struct Table<R: Read> {
    pub name: String,
    pub reader: csv::Reader<R>,
    headers: Vec<String>,
}

impl Table<BufReader<std::fs::File>> {
    pub(crate) fn open(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Table::from_reader(file, path.display().to_string())
    }
}

impl<R: Read> Table<BufReader<R>> {
    pub(crate) fn from_reader(inner: R, name: String) -> Result<Self> {
        let mut buffered = BufReader::new(inner);
        let delimiter = {
            let buf = buffered.fill_buf().map_err(|e| Error::io(&name, e))?;
            let header = buf
                .split(|b| *b == b'\n')
                .find(|line| !line.starts_with(b"#") && !line.iter().all(u8::is_ascii_whitespace))
                .unwrap_or(&[]);
            sniff_delimiter(header)
        };
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(buffered);
        let headers = match reader.headers() {
            Ok(h) => h.iter().map(|s| s.trim_start_matches('\u{feff}').to_owned()).collect(),
            Err(e) => return Err(Error::format(&name, format!("unreadable header row: {e}"))),
        };
        Ok(Table {
            name,
            reader,
            headers,
        })
    }
}

impl<R: Read> Table<R> {
    /// Case-insensitive column lookup.
    pub(crate) fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h.eq_ignore_ascii_case(name))
    }

    /// True when the input has no header row at all.
    pub(crate) fn is_blank(&self) -> bool {
        self.headers.iter().all(|h| h.is_empty())
    }

    pub(crate) fn require(&self, name: &str) -> Result<usize> {
        self.column(name)
            .ok_or_else(|| Error::format(&self.name, format!("missing required column {name:?}")))
    }
}

/// Field accessor returning `""` for short rows.
pub(crate) fn field(record: &csv::StringRecord, column: usize) -> &str {
    record.get(column).unwrap_or("")
}

/// Parses an optional cell: blank means absent.
pub(crate) fn optional<T: std::str::FromStr>(raw: &str, what: &str) -> std::result::Result<Option<T>, String> {
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse()
        .map(Some)
        .map_err(|_| format!("invalid {what} {raw:?}"))
}

/// Integer post cell; accepts "12" and "12.0".
pub(crate) fn optional_post(raw: &str, what: &str) -> std::result::Result<Option<u32>, String> {
    if raw.is_empty() {
        return Ok(None);
    }
    if let Ok(p) = raw.parse::<u32>() {
        return Ok(Some(p));
    }
    match raw.parse::<f64>() {
        Ok(x) if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64 => Ok(Some(x as u32)),
        _ => Err(format!("invalid {what} {raw:?}: expected a whole milepost")),
    }
}
