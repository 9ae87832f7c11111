//! Dataset manifest: one record per line, tab separated
//! `id<TAB>modality<TAB>label<TAB>split`. Lines starting with `#` are comments.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::config::ModalityPool;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    /// Fundus-like color photographs.
    A,
    /// Cross-sectional, layered scans.
    B,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::A => "A",
            Modality::B => "B",
        })
    }
}

impl FromStr for Modality {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "A" => Ok(Modality::A),
            "B" => Ok(Modality::B),
            other => Err(format!("unknown modality `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub id: String,
    pub modality: Modality,
    pub label: String,
    pub split: Split,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub records: Vec<Record>,
}

impl DatasetManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| Error::Manifest {
                line: line_no,
                reason,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 tab-separated fields, got {}", fields.len())));
            }
            let id = fields[0].to_string();
            if id.is_empty() || fields[2].is_empty() {
                return Err(err("empty id or label".into()));
            }
            if !seen.insert(id.clone()) {
                return Err(err(format!("duplicate id `{id}`")));
            }
            records.push(Record {
                id,
                modality: fields[1].parse().map_err(err)?,
                label: fields[2].to_string(),
                split: fields[3].parse().map_err(err)?,
            });
        }
        Ok(Self { records })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# id\tmodality\tlabel\tsplit\n");
        for r in &self.records {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", r.id, r.modality, r.label, r.split));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Sorted distinct labels; a label's position is its class index.
    pub fn class_names(&self) -> Vec<String> {
        self.records
            .iter()
            .map(|r| r.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn select(&self, split: Split, pool: ModalityPool) -> Vec<&Record> {
        self.records
            .iter()
            .filter(|r| r.split == split && pool.contains(r.modality))
            .collect()
    }

    /// Ids must not appear in more than one split.
    pub fn check_disjoint(&self) -> std::result::Result<(), Vec<String>> {
        let mut split_of: HashMap<&str, Split> = HashMap::new();
        let mut bad = Vec::new();
        for r in &self.records {
            if let Some(prev) = split_of.insert(&r.id, r.split) {
                if prev != r.split {
                    bad.push(r.id.clone());
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let text = "# header\nx1\tA\tc00\ttrain\nx2\tB\tc01\ttest\n";
        let m = DatasetManifest::parse(text).unwrap();
        assert_eq!(m.records.len(), 2);
        assert_eq!(m.records[1].modality, Modality::B);
        assert_eq!(DatasetManifest::parse(&m.to_text()).unwrap(), m);
        assert_eq!(m.class_names(), vec!["c00", "c01"]);
    }

    #[test]
    fn bad_lines_report_line_number() {
        let err = DatasetManifest::parse("x1\tA\tc\ttrain\nx2\tC\tc\ttrain\n").unwrap_err();
        assert!(matches!(err, Error::Manifest { line: 2, .. }), "{err}");
        assert!(DatasetManifest::parse("x1\tA\tc\n").is_err());
        assert!(DatasetManifest::parse("x1\tA\tc\ttrain\nx1\tA\tc\tval\n").is_err());
    }
}
