//! Human-diffable flat key = value text with `[section]` headers. Used
//! for run manifests, bundle manifests, reports and configuration files.

use std::fs;
use std::path::Path;

use crate::error::{io_err, AppError, Result};

/// Ordered sections of ordered key/value pairs. Order is preserved so the
/// serialized text (and hence its hash) is stable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub sections: Vec<(String, Vec<(String, String)>)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn section_mut(&mut self, name: &str) -> &mut Vec<(String, String)> {
        if let Some(pos) = self.sections.iter().position(|(n, _)| n == name) {
            &mut self.sections[pos].1
        } else {
            self.sections.push((name.to_string(), Vec::new()));
            &mut self.sections.last_mut().unwrap().1
        }
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl ToString) {
        let entries = self.section_mut(section);
        if let Some(pair) = entries.iter_mut().find(|(k, _)| k == key) {
            pair.1 = value.to_string();
        } else {
            entries.push((key.to_string(), value.to_string()));
        }
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .iter()
            .find(|(n, _)| n == section)
            .and_then(|(_, entries)| entries.iter().find(|(k, _)| k == key))
            .map(|(_, v)| v.as_str())
    }

    pub fn section(&self, name: &str) -> Option<&[(String, String)]> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, e)| e.as_slice())
    }

    pub fn require(&self, section: &str, key: &str, path: &Path) -> Result<&str> {
        self.get(section, key).ok_or_else(|| AppError::Format {
            what: "manifest",
            path: path.to_path_buf(),
            detail: format!("missing [{section}] {key}"),
        })
    }

    pub fn parse_value<T: std::str::FromStr>(
        &self,
        section: &str,
        key: &str,
        path: &Path,
    ) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.require(section, key, path)?;
        raw.parse::<T>().map_err(|e| AppError::Format {
            what: "manifest",
            path: path.to_path_buf(),
            detail: format!("[{section}] {key} = {raw}: {e}"),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, entries) in &self.sections {
            out.push('[');
            out.push_str(name);
            out.push_str("]\n");
            for (k, v) in entries {
                out.push_str(k);
                out.push_str(" = ");
                out.push_str(v);
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut manifest = Manifest::new();
        let mut current: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                current = Some(name.to_string());
                manifest.section_mut(name);
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(AppError::Format {
                    what: "manifest",
                    path: path.to_path_buf(),
                    detail: format!("line {}: expected key = value, got {raw:?}", lineno + 1),
                });
            };
            let section = current.clone().unwrap_or_else(|| "general".to_string());
            manifest
                .section_mut(&section)
                .push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_text(&text, path)
    }
}

/// Hex SHA-256 of a text blob; used to hash-link manifests.
pub fn sha256_hex(text: &str) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_order_and_values() {
        let mut m = Manifest::new();
        m.set("run", "label", "toroidal-0.75");
        m.set("run", "frames", 120);
        m.set("config", "t_end", 3.0_f64);
        m.set("config", "bx", 0.75_f64);
        let text = m.to_text();
        let back = Manifest::from_text(&text, Path::new("m.txt")).unwrap();
        assert_eq!(m, back);
        assert_eq!(back.get("run", "frames"), Some("120"));
        let t_end: f64 = back.parse_value("config", "t_end", Path::new("m.txt")).unwrap();
        assert_eq!(t_end, 3.0);
    }

    #[test]
    fn floats_round_trip_through_text() {
        let vals = [0.1, 1.0 / 3.0, 1e-17, 9806.0, -9.81, f64::MIN_POSITIVE];
        for v in vals {
            let mut m = Manifest::new();
            m.set("s", "v", v);
            let back = Manifest::from_text(&m.to_text(), Path::new("x")).unwrap();
            let parsed: f64 = back.parse_value("s", "v", Path::new("x")).unwrap();
            assert_eq!(parsed, v, "value {v} did not survive");
        }
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# header\n\n[a]\nx = 1\n# note\ny = 2\n";
        let m = Manifest::from_text(text, Path::new("c")).unwrap();
        assert_eq!(m.get("a", "x"), Some("1"));
        assert_eq!(m.get("a", "y"), Some("2"));
    }

    #[test]
    fn malformed_line_is_reported_with_number() {
        let text = "[a]\nnonsense\n";
        let err = Manifest::from_text(text, Path::new("bad")).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
