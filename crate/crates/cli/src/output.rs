//! Atomic file output: every file is written to a temporary file in the
//! target directory and renamed into place.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&root).map_err(|e| CliError::Output {
            path: root.clone(),
            source: e,
        })?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `name` through `fill`, replacing any previous file only once
    /// the new content is complete.
    pub fn write<F>(&self, name: &str, fill: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut dyn Write) -> io::Result<()>,
    {
        let target = self.path(name);
        let wrap = |e: io::Error| CliError::Output {
            path: target.clone(),
            source: e,
        };
        let tmp = NamedTempFile::new_in(&self.root).map_err(wrap)?;
        {
            let mut out = BufWriter::new(tmp.as_file());
            fill(&mut out).map_err(wrap)?;
            out.flush().map_err(wrap)?;
        }
        tmp.persist(&target).map_err(|e| wrap(e.error))?;
        Ok(target)
    }
}

/// A gnuplot script plotting `column` of every trace against its first.
pub fn gnuplot_script(traces: &[(String, PathBuf)], ylabel: &str, column: usize) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key outside\n");
    s.push_str("set xlabel 'iteration'\n");
    s.push_str(&format!("set ylabel '{ylabel}'\n"));
    if column == 4 {
        s.push_str("set logscale y\n");
    }
    let parts: Vec<String> = traces
        .iter()
        .map(|(title, path)| {
            let file = path.file_name().map_or_else(
                || path.display().to_string(),
                |f| Path::new(f).display().to_string(),
            );
            format!("'{file}' using 1:{column} skip 1 with lines title '{title}'")
        })
        .collect();
    s.push_str("plot ");
    s.push_str(&parts.join(", \\\n     "));
    s.push('\n');
    s
}
