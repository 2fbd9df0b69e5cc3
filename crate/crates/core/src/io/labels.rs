//! Atlas label-name tables.
//!
//! Two layouts are accepted:
//!
//! * CSV with `index,name` rows. A header row is skipped when its first
//!   field is not an integer. Unquoted names containing commas are rejoined.
//! * FSL atlas XML (`<label index="0" ...>Frontal Pole</label>`). FSL indices
//!   are zero-based while the label volume stores `index + 1`, so entries are
//!   keyed by `index + 1`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};

pub type LabelTable = BTreeMap<u32, String>;

fn insert(table: &mut LabelTable, path: &Path, label: u32, name: String) -> Result<()> {
    if let Some(prev) = table.insert(label, name.clone()) {
        return Err(Error::format(
            path,
            format!("label index {label} defined twice ({prev:?} and {name:?})"),
        ));
    }
    Ok(())
}

pub fn parse_csv(text: &str, path: &Path) -> Result<LabelTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut table = LabelTable::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, format!("csv: {e}")))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let index = record.get(0).unwrap_or_default();
        let label: u32 = match index.parse() {
            Ok(l) => l,
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::format(
                    path,
                    format!("row {}: label index {index:?} is not a non-negative integer", i + 1),
                ))
            }
        };
        let name = record.iter().skip(1).collect::<Vec<_>>().join(", ");
        if name.is_empty() {
            return Err(Error::format(path, format!("row {}: missing region name", i + 1)));
        }
        insert(&mut table, path, label, name)?;
    }
    Ok(table)
}

fn unescape_xml(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'")
        .replace("&amp;", "&")
}

pub fn parse_xml(text: &str, path: &Path) -> Result<LabelTable> {
    static RE: OnceLock<(Regex, Regex)> = OnceLock::new();
    let (label_re, index_re) = RE.get_or_init(|| {
        (
            Regex::new(r"(?s)<label\b([^>]*)>(.*?)</label>").unwrap(),
            Regex::new(r#"\bindex\s*=\s*["'](\d+)["']"#).unwrap(),
        )
    });
    let mut table = LabelTable::new();
    for cap in label_re.captures_iter(text) {
        let index: u32 = index_re
            .captures(&cap[1])
            .and_then(|c| c[1].parse().ok())
            .ok_or_else(|| Error::format(path, format!("label without index: {}", &cap[0])))?;
        let name = unescape_xml(cap[2].trim());
        insert(&mut table, path, index + 1, name)?;
    }
    if table.is_empty() {
        return Err(Error::format(path, "no <label> entries found"));
    }
    Ok(table)
}

pub fn read_label_table(path: &Path) -> Result<LabelTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_xml = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("xml"))
        || text.trim_start().starts_with('<');
    if is_xml {
        parse_xml(&text, path)
    } else {
        parse_csv(&text, path)
    }
}
