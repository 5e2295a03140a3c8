//! Reference d-spacing database, loaded from a user-supplied CSV.
//!
//! Expected layout: a `name,hkl,d_angstrom` header followed by one row per
//! reflection. Lines starting with `#` and blank lines are ignored, so a
//! shipped database can carry commented placeholders for entries the user
//! still has to look up.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One reference reflection.
#[derive(Debug, Clone, PartialEq)]
pub struct DbEntry {
    pub name: String,
    pub hkl: String,
    pub d_angstrom: f64,
}

/// Immutable set of reference reflections; shareable across frame workers.
#[derive(Debug, Clone, Default)]
pub struct DSpacingDB {
    entries: Vec<DbEntry>,
}

impl DSpacingDB {
    pub fn from_entries(entries: Vec<DbEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if !(e.d_angstrom > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "entry {} ({} {}): d must be positive, got {}",
                    i, e.name, e.hkl, e.d_angstrom
                )));
            }
            for other in &entries[..i] {
                if other.name == e.name && other.hkl == e.hkl {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate entry ({}, {})",
                        e.name, e.hkl
                    )));
                }
            }
        }
        Ok(DSpacingDB { entries })
    }

    pub fn entries(&self) -> &[DbEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry with the smallest relative d deviation from `d_calc`.
    pub fn nearest(&self, d_calc: f64) -> Option<(&DbEntry, f64)> {
        self.entries
            .iter()
            .map(|e| (e, (d_calc - e.d_angstrom).abs() / e.d_angstrom))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
    }
}

/// Loads a d-spacing database CSV.
pub fn read_dspacing_db(path: &Path) -> Result<DSpacingDB> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    let mut saw_header = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["name", "hkl", "d_angstrom"] {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    msg: format!("expected header `name,hkl,d_angstrom`, found `{line}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("expected 3 comma-separated fields, found {}", cols.len()),
            });
        }
        let d: f64 = cols[2].parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg: format!("invalid d-spacing `{}`", cols[2]),
        })?;
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("d-spacing must be positive, got {d}"),
            });
        }
        let entry = DbEntry {
            name: cols[0].to_string(),
            hkl: cols[1].to_string(),
            d_angstrom: d,
        };
        if entries
            .iter()
            .any(|e: &DbEntry| e.name == entry.name && e.hkl == entry.hkl)
        {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                msg: format!("duplicate entry ({}, {})", entry.name, entry.hkl),
            });
        }
        entries.push(entry);
    }
    if !saw_header {
        return Err(Error::format(path, "missing `name,hkl,d_angstrom` header"));
    }
    DSpacingDB::from_entries(entries)
}
