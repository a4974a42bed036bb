//! Flat key=value run configuration and manifests.
//!
//! The format is diff-friendly text: optional `[section]` headers turn
//! following keys into `section.key`, `#` starts a comment, one `key =
//! value` per line. Manifests are rendered with sorted keys so the
//! fingerprint (SHA-256 of the rendered text) is stable across platforms.

use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

pub type ConfigMap = BTreeMap<String, String>;

pub fn parse_config(text: &str) -> Result<ConfigMap> {
    let mut out = ConfigMap::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected key = value, got {line:?}",
                lineno + 1
            )));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        let full = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        out.insert(full, value.trim().to_string());
    }
    Ok(out)
}

/// Render with sorted keys, one `key = value` per line, LF endings.
pub fn render_config(map: &ConfigMap) -> String {
    let mut out = String::new();
    for (k, v) in map {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(v);
        out.push('\n');
    }
    out
}

/// SHA-256 hex of the canonical rendering, excluding any existing
/// `fingerprint` key.
pub fn fingerprint(map: &ConfigMap) -> String {
    let mut canonical = map.clone();
    canonical.remove("fingerprint");
    let mut hasher = Sha256::new();
    hasher.update(render_config(&canonical).as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_sections_and_comments() {
        let text = "# run configuration\nseed = 7\n[phantom]\nkind = two-square\nnoise = 0.01\n[recon]\ngamma = 1e-2\n";
        let map = parse_config(text).unwrap();
        assert_eq!(map["seed"], "7");
        assert_eq!(map["phantom.kind"], "two-square");
        assert_eq!(map["recon.gamma"], "1e-2");
    }

    #[test]
    fn roundtrip_through_render() {
        let text = "b = 2\na = 1\n[s]\nc = 3\n";
        let map = parse_config(text).unwrap();
        let rendered = render_config(&map);
        assert_eq!(rendered, "a = 1\nb = 2\ns.c = 3\n");
        assert_eq!(parse_config(&rendered).unwrap(), map);
    }

    #[test]
    fn malformed_line_rejected() {
        assert!(parse_config("just words\n").is_err());
        assert!(parse_config("= nameless\n").is_err());
    }

    #[test]
    fn fingerprint_stable_and_sensitive() {
        let a = parse_config("x = 1\ny = 2\n").unwrap();
        let b = parse_config("y = 2\nx = 1\n").unwrap();
        assert_eq!(fingerprint(&a), fingerprint(&b)); // order-insensitive
        let c = parse_config("x = 1\ny = 3\n").unwrap();
        assert_ne!(fingerprint(&a), fingerprint(&c));
        // A stored fingerprint does not feed back into itself.
        let mut with_print = a.clone();
        with_print.insert("fingerprint".into(), fingerprint(&a));
        assert_eq!(fingerprint(&with_print), fingerprint(&a));
    }
}
