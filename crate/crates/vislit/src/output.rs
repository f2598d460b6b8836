//! Writing report tables and figures.

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::raster::render_png;
use std::path::{Path, PathBuf};
use vislit_core::report::{Figure, Table};

pub fn table_csv(t: &Table) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let ctx = || format!("table {}", t.name);
    w.write_record(&t.header).map_err(|e| Error::format(ctx(), e))?;
    for r in &t.rows {
        w.write_record(r).map_err(|e| Error::format(ctx(), e))?;
    }
    w.into_inner().map_err(|e| Error::format(ctx(), e))
}

pub fn write_table(dir: &Path, t: &Table) -> Result<PathBuf> {
    let p = dir.join(format!("{}.csv", t.name));
    write_atomic(&p, &table_csv(t)?)?;
    Ok(p)
}

/// Writes `<name>.png` and the plotted data as `<name>.csv`.
pub fn write_figure(dir: &Path, f: &Figure) -> Result<(PathBuf, PathBuf)> {
    let png = dir.join(format!("{}.png", f.name));
    write_atomic(&png, &render_png(&f.scene)?)?;
    let mut data = f.data.clone();
    data.name = f.name.clone();
    let csv = write_table(dir, &data)?;
    Ok((png, csv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_fields() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec!["x, y".into(), "1".into()]);
        assert_eq!(String::from_utf8(table_csv(&t).unwrap()).unwrap(), "a,b\n\"x, y\",1\n");
    }
}
