use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::{dedup_interactions, Interaction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    Csv,
    Tsv,
}

impl Delimiter {
    pub fn as_char(self) -> char {
        match self {
            Delimiter::Csv => ',',
            Delimiter::Tsv => '\t',
        }
    }
}

impl FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Delimiter::Csv),
            "tsv" => Ok(Delimiter::Tsv),
            other => Err(Error::InvalidArgument(format!("unknown delimiter format '{other}'"))),
        }
    }
}

/// Zero-based column positions of each field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnLayout {
    pub user: usize,
    pub item: usize,
    pub label: Option<usize>,
    pub timestamp: Option<usize>,
}

impl Default for ColumnLayout {
    fn default() -> Self {
        Self {
            user: 0,
            item: 1,
            label: None,
            timestamp: None,
        }
    }
}

impl FromStr for ColumnLayout {
    type Err = Error;

    /// Parses a declared column order such as `user,item,label,timestamp`.
    /// Unknown names (e.g. `rating`) occupy a position but are ignored.
    fn from_str(s: &str) -> Result<Self> {
        let (mut user, mut item, mut label, mut timestamp) = (None, None, None, None);
        for (pos, name) in s.split(',').map(str::trim).enumerate() {
            let slot = match name {
                "user" => &mut user,
                "item" => &mut item,
                "label" => &mut label,
                "timestamp" => &mut timestamp,
                _ => continue,
            };
            if slot.replace(pos).is_some() {
                return Err(Error::InvalidArgument(format!("column '{name}' declared twice")));
            }
        }
        match (user, item) {
            (Some(user), Some(item)) => Ok(Self {
                user,
                item,
                label,
                timestamp,
            }),
            _ => Err(Error::InvalidArgument(
                "column layout must name both 'user' and 'item'".into(),
            )),
        }
    }
}

impl std::fmt::Display for ColumnLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut named = vec![(self.user, "user"), (self.item, "item")];
        if let Some(p) = self.label {
            named.push((p, "label"));
        }
        if let Some(p) = self.timestamp {
            named.push((p, "timestamp"));
        }
        named.sort();
        let width = named.last().map_or(0, |(p, _)| p + 1);
        let cols: Vec<&str> = (0..width)
            .map(|p| named.iter().find(|(q, _)| *q == p).map_or("_", |(_, n)| *n))
            .collect();
        write!(f, "{}", cols.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputFormat {
    pub delimiter: Delimiter,
    pub columns: ColumnLayout,
}

impl Default for InputFormat {
    fn default() -> Self {
        Self {
            delimiter: Delimiter::Tsv,
            columns: ColumnLayout::default(),
        }
    }
}

pub fn load_interactions(path: &Path, format: &InputFormat) -> Result<Vec<Interaction>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(file, format).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Reads delimiter-separated interactions. Blank lines and lines starting
/// with `#` are skipped. Row numbers in errors are 1-based line numbers.
pub fn parse_interactions<R: Read>(reader: R, format: &InputFormat) -> Result<Vec<Interaction>> {
    let delim = format.delimiter.as_char();
    let cols = format.columns;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let row = idx + 1;
        let line = line.map_err(|e| Error::io("<input>", e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
        if fields.len() < 2 {
            return Err(Error::MalformedRow {
                row,
                reason: format!("expected at least 2 columns, found {}", fields.len()),
            });
        }
        let required = |pos: usize, name: &str| -> Result<String> {
            match fields.get(pos) {
                Some(v) if !v.is_empty() => Ok(v.to_string()),
                _ => Err(Error::MalformedRow {
                    row,
                    reason: format!("missing {name} in column {}", pos + 1),
                }),
            }
        };
        let user = required(cols.user, "user")?;
        let item = required(cols.item, "item")?;
        let label = cols
            .label
            .and_then(|p| fields.get(p))
            .filter(|v| !v.is_empty())
            .map(|v| v.to_string());
        let timestamp = match cols.timestamp.and_then(|p| fields.get(p)).filter(|v| !v.is_empty()) {
            Some(v) => Some(v.parse::<i64>().map_err(|_| Error::MalformedRow {
                row,
                reason: format!("timestamp '{v}' is not an integer"),
            })?),
            None => None,
        };
        out.push(Interaction {
            user,
            item,
            label,
            timestamp,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyResult("input contains no interactions".into()));
    }
    Ok(dedup_interactions(out))
}

/// Writes interactions as `user<d>item[<d>label]`, the label column present
/// only when `with_labels` is set (missing labels become empty fields).
pub fn write_interactions<W: Write>(
    mut out: W,
    interactions: &[Interaction],
    delimiter: Delimiter,
    with_labels: bool,
) -> std::io::Result<()> {
    let d = delimiter.as_char();
    for it in interactions {
        if with_labels {
            writeln!(out, "{}{d}{}{d}{}", it.user, it.item, it.label.as_deref().unwrap_or(""))?;
        } else {
            writeln!(out, "{}{d}{}", it.user, it.item)?;
        }
    }
    Ok(())
}
