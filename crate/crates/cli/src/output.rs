//! CSV emission: `#` comment header with the schema version and the resolved
//! configuration, a column line, rows, then an optional trailing `#` block.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::SCHEMA_VERSION;

pub struct CsvOut {
    rows: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(
        path: &Path,
        kind: &str,
        config: &impl Serialize,
        columns: &[&str],
    ) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(f);
        writeln!(w, "# schema_version={SCHEMA_VERSION}")?;
        writeln!(w, "# kind={kind}")?;
        writeln!(w, "# config={}", serde_json::to_string(config)?)?;
        let mut rows = csv::Writer::from_writer(w);
        rows.write_record(columns)?;
        Ok(Self { rows })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        self.rows.write_record(fields)?;
        Ok(())
    }

    /// Writes the trailing `# key=value` block and closes the file.
    pub fn finish(self, trailer: &[(String, String)]) -> Result<()> {
        let mut w = self.rows.into_inner().map_err(|e| e.into_error())?;
        for (k, v) in trailer {
            writeln!(w, "# {k}={v}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that reads back to the same bits.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e16).contains(&a) || !a.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn pair(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

#[cfg(test)]
mod tests {
    use super::num;

    #[test]
    fn numbers_round_trip() {
        for x in [
            0.0,
            -0.0,
            1.0,
            0.1,
            1.7669748230352877e-16,
            -3.5e-5,
            2.5e20,
            12345.678,
            f64::MIN_POSITIVE,
        ] {
            assert_eq!(
                num(x).parse::<f64>().unwrap().to_bits(),
                x.to_bits(),
                "{}",
                num(x)
            );
        }
        assert_eq!(num(1e-16), "1e-16");
    }
}
