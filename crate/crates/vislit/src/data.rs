//! User-supplied data files: human baseline accuracies and synonym tables.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;
use vislit_core::scoring::SynonymTable;

/// Human accuracies on the original test, one row per question id.
pub const BUNDLED_BASELINE: &str = include_str!("../data/vlat_baseline.csv");

pub fn parse_baseline(text: &str, context: &str) -> Result<BTreeMap<u8, f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::format(context, e))?;
        let bad = || Error::format(context, format!("row {}: expected question_id,accuracy", i + 2));
        let id: u8 = row.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let acc: f64 = row.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::format(context, format!("row {}: accuracy {acc} outside [0, 1]", i + 2)));
        }
        out.insert(id, acc);
    }
    Ok(out)
}

pub fn load_baseline(path: Option<&Path>) -> Result<BTreeMap<u8, f64>> {
    match path {
        None => parse_baseline(BUNDLED_BASELINE, "bundled baseline"),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(format!("reading {}", p.display()), e))?;
            parse_baseline(&text, &p.display().to_string())
        }
    }
}

/// Ordered `surface,canonical` rows; earlier rows take precedence.
pub fn load_synonyms(path: Option<&Path>) -> Result<SynonymTable> {
    let Some(p) = path else { return Ok(SynonymTable::default()) };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(p)
        .map_err(|e| Error::format(p.display().to_string(), e))?;
    let mut entries = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::format(p.display().to_string(), e))?;
        match (row.get(0), row.get(1)) {
            (Some(a), Some(b)) if !a.is_empty() => entries.push((a.to_string(), b.to_string())),
            _ => return Err(Error::format(p.display().to_string(), "expected surface,canonical")),
        }
    }
    Ok(SynonymTable { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_baseline_covers_every_item() {
        let b = load_baseline(None).unwrap();
        assert_eq!(b.len(), 53);
        assert_eq!(b[&5], 0.77);
        assert_eq!(b[&14], 0.47);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(parse_baseline("question_id,accuracy\n1,1.5\n", "t").is_err());
        assert!(parse_baseline("question_id,accuracy\nx,0.5\n", "t").is_err());
    }
}
