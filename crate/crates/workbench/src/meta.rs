//! Language metadata: family, script and a map position per language code.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};
use polyprobe_core::analytics::NodeMeta;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageMeta {
    pub code: String,
    pub name: String,
    pub family: String,
    pub script: String,
    pub latitude: f64,
    pub longitude: f64,
    #[serde(rename = "examples")]
    pub example_count: u64,
}

impl LanguageMeta {
    fn check(&self) -> Result<(), String> {
        if self.code.is_empty() {
            return Err("empty language code".into());
        }
        if self.family.trim().is_empty() {
            return Err(format!("{}: empty family", self.code));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(format!("{}: latitude {} out of range", self.code, self.latitude));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(format!("{}: longitude {} out of range", self.code, self.longitude));
        }
        Ok(())
    }

    pub fn node_meta(&self) -> NodeMeta {
        NodeMeta {
            latitude: self.latitude,
            longitude: self.longitude,
            family: self.family.clone(),
        }
    }
}

/// Metadata keyed by language code.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetaTable {
    by_code: BTreeMap<String, LanguageMeta>,
}

impl MetaTable {
    /// Reads `code,name,family,script,latitude,longitude,examples` rows.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
        let mut by_code = BTreeMap::new();
        for (i, row) in reader.deserialize::<LanguageMeta>().enumerate() {
            let line = i + 2;
            let meta = row.with_context(|| format!("{}: row {line}", path.display()))?;
            if let Err(reason) = meta.check() {
                bail!("{}: row {line}: {reason}", path.display());
            }
            if by_code.contains_key(&meta.code) {
                bail!("{}: row {line}: duplicate code {}", path.display(), meta.code);
            }
            by_code.insert(meta.code.clone(), meta);
        }
        Ok(MetaTable { by_code })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = LanguageMeta>) -> Self {
        MetaTable {
            by_code: entries.into_iter().map(|m| (m.code.clone(), m)).collect(),
        }
    }

    pub fn get(&self, code: &str) -> Option<&LanguageMeta> {
        self.by_code.get(code)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LanguageMeta> {
        self.by_code.values()
    }

    pub fn len(&self) -> usize {
        self.by_code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_code.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "code,name,family,script,latitude,longitude,examples").unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_rows() {
        let f = csv_file("de,German,Indo-European,Latin,51.0,10.0,208000\nfi,Finnish,Uralic,Latin,64.0,26.0,34000\n");
        let t = MetaTable::load(f.path()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("fi").unwrap().family, "Uralic");
        assert_eq!(t.get("de").unwrap().example_count, 208000);
    }

    #[test]
    fn rejects_bad_rows() {
        for body in [
            "de,German,Indo-European,Latin,95.0,10.0,1\n",
            "de,German,Indo-European,Latin,50.0,190.0,1\n",
            "de,German,,Latin,50.0,10.0,1\n",
            "de,German,Indo-European,Latin,50.0,10.0,1\nde,German,Indo-European,Latin,50.0,10.0,1\n",
            "de,German,Indo-European,Latin,north,10.0,1\n",
        ] {
            assert!(MetaTable::load(csv_file(body).path()).is_err(), "{body}");
        }
    }

    #[test]
    fn bundled_table_is_valid() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/languages.csv");
        let t = MetaTable::load(&path).unwrap();
        assert!(t.len() >= 100);
        assert_eq!(t.get("eu").unwrap().family, "Isolate");
    }
}
