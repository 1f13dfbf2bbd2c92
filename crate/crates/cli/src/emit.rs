//! Report files. JSON keys keep struct order and maps are sorted, so two
//! identical runs write identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::Failure;

pub struct Out {
    dir: PathBuf,
}

fn unwritable(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::input(format!("{}: {e}", path.display()))
}

impl Out {
    pub fn new(dir: &Path) -> Result<Out, Failure> {
        fs::create_dir_all(dir).map_err(|e| unwritable(dir, e))?;
        Ok(Out { dir: dir.to_path_buf() })
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, Failure> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| unwritable(&path, e))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| unwritable(&path, e))?;
        Ok(path)
    }

    /// Header first, even when there are no rows.
    pub fn csv<I>(&self, name: &str, header: &[String], rows: I) -> Result<PathBuf, Failure>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| unwritable(&path, e))?;
        w.write_record(header).map_err(|e| unwritable(&path, e))?;
        for row in rows {
            w.write_record(&row).map_err(|e| unwritable(&path, e))?;
        }
        w.flush().map_err(|e| unwritable(&path, e))?;
        Ok(path)
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn nums(v: &[f64]) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|x| num(*x))
}

/// Column names `prefix1..prefixk` for the given levels.
pub fn per_level(prefix: &str, levels: impl Iterator<Item = usize>) -> Vec<String> {
    levels.map(|j| format!("{prefix}{j}")).collect()
}
