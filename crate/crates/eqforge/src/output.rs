//! Deterministic CSV emission. Every file starts with the version banner
//! and the resolved configuration echo, numbers are printed in shortest
//! round-trip form, and the whole file is assembled in memory and written
//! in one call, so identical runs produce identical bytes.

use std::path::Path;

use crate::config::RunConfig;
use crate::error::Result;

pub const VERSION_BANNER: &str = concat!("# eqforge v", env!("CARGO_PKG_VERSION"));

/// Shortest decimal representation that parses back to the same value.
pub fn fmt(x: f64) -> String {
    format!("{x}")
}

pub struct CsvFile {
    lines: Vec<String>,
}

impl CsvFile {
    /// Banner, config echo, then the column header.
    pub fn new(cfg: &RunConfig, header: &str) -> CsvFile {
        let mut lines = vec![VERSION_BANNER.to_string()];
        lines.extend(cfg.echo_lines());
        lines.push(header.to_string());
        CsvFile { lines }
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        self.lines
            .push(cells.into_iter().collect::<Vec<_>>().join(","));
    }

    /// A trailing `# ...` line, used for pass/fail summaries.
    pub fn comment(&mut self, text: &str) {
        self.lines.push(format!("# {text}"));
    }

    pub fn write(self, path: &Path) -> Result<()> {
        let mut body = self.lines.join("\n");
        body.push('\n');
        std::fs::write(path, body)?;
        Ok(())
    }
}
