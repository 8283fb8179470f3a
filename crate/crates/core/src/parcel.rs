//! Vertex labels: lobe grouping and nearest-vertex label transfer.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;
use crate::metrics::nearest_points;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lobe {
    Frontal,
    Parietal,
    Occipital,
    Temporal,
    CingulateInsula,
    Unknown,
}

impl Lobe {
    pub const ALL: [Lobe; 6] = [Lobe::Frontal, Lobe::Parietal, Lobe::Occipital, Lobe::Temporal, Lobe::CingulateInsula, Lobe::Unknown];

    pub fn name(self) -> &'static str {
        match self {
            Lobe::Frontal => "frontal",
            Lobe::Parietal => "parietal",
            Lobe::Occipital => "occipital",
            Lobe::Temporal => "temporal",
            Lobe::CingulateInsula => "cingulate-insula",
            Lobe::Unknown => "unknown",
        }
    }

    /// Integer code used when lobes are written as vertex labels (0 = unknown).
    pub fn code(self) -> i32 {
        match self {
            Lobe::Unknown => 0,
            Lobe::Frontal => 1,
            Lobe::Parietal => 2,
            Lobe::Occipital => 3,
            Lobe::Temporal => 4,
            Lobe::CingulateInsula => 5,
        }
    }
}

impl fmt::Display for Lobe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Lobe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Lobe::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown lobe {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub label: i32,
    pub name: String,
    pub lobe: Lobe,
}

/// Label id to region name and lobe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    entries: BTreeMap<i32, LabelEntry>,
}

const DESIKAN_KILLIANY: &str = include_str!("../data/dk_lobes.json");

impl LabelTable {
    pub fn new(entries: Vec<LabelEntry>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for e in entries {
            let label = e.label;
            if map.insert(label, e).is_some() {
                return Err(Error::Format(format!("label {label} listed twice")));
            }
        }
        Ok(LabelTable { entries: map })
    }

    /// The 34 Desikan-Killiany cortical regions (FreeSurfer aparc ids) with their lobes.
    pub fn desikan_killiany() -> Self {
        Self::from_json(DESIKAN_KILLIANY).expect("bundled table is valid")
    }

    /// Parses a JSON array of `{"label", "name", "lobe"}` objects.
    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries.values().collect::<Vec<_>>()).expect("serialisable")
    }

    /// Identity table over the lobe codes.
    pub fn lobes() -> Self {
        let entries = Lobe::ALL.into_iter().map(|l| LabelEntry { label: l.code(), name: l.name().to_string(), lobe: l }).collect();
        Self::new(entries).expect("codes are unique")
    }

    pub fn get(&self, label: i32) -> Option<&LabelEntry> {
        self.entries.get(&label)
    }

    pub fn lobe(&self, label: i32) -> Lobe {
        self.entries.get(&label).map_or(Lobe::Unknown, |e| e.lobe)
    }

    pub fn entries(&self) -> impl Iterator<Item = &LabelEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Label id to lobe name, for region aggregation.
    pub fn lobe_regions(&self) -> BTreeMap<i32, String> {
        self.entries.iter().map(|(&l, e)| (l, e.lobe.name().to_string())).collect()
    }
}

/// Per-vertex lobes plus the number of vertices whose label was not in the table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LobeGrouping {
    pub lobes: Vec<Lobe>,
    pub unknown_labels: usize,
}

impl LobeGrouping {
    pub fn codes(&self) -> Vec<i32> {
        self.lobes.iter().map(|l| l.code()).collect()
    }
}

pub fn group_to_lobes(labels: &[i32], table: &LabelTable) -> LobeGrouping {
    let mut unknown_labels = 0;
    let lobes = labels
        .iter()
        .map(|&l| match table.get(l) {
            Some(e) => e.lobe,
            None => {
                unknown_labels += 1;
                Lobe::Unknown
            }
        })
        .collect();
    LobeGrouping { lobes, unknown_labels }
}

/// Labels carried to a target mesh, with the distance to the source vertex each came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTransfer {
    pub labels: Vec<i32>,
    pub distances: Vec<f64>,
}

/// Gives every target vertex the label of its nearest source vertex.
pub fn transfer_labels(source: &TriangleMesh, source_labels: &[i32], target: &TriangleMesh) -> Result<LabelTransfer> {
    if source.vertices.is_empty() {
        return Err(Error::arg("label transfer from an empty mesh"));
    }
    if source_labels.len() != source.vertex_count() {
        return Err(Error::arg(format!("{} labels for {} source vertices", source_labels.len(), source.vertex_count())));
    }
    let cell = source.median_edge_length();
    let (labels, distances) = nearest_points(&source.vertices, &target.vertices, if cell > 0.0 { cell } else { 1.0 })
        .into_iter()
        .map(|(i, d)| (source_labels[i], d))
        .unzip();
    Ok(LabelTransfer { labels, distances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use nalgebra::Vector3;

    #[test]
    fn bundled_table_has_34_cortical_regions() {
        let t = LabelTable::desikan_killiany();
        assert_eq!(t.entries().filter(|e| e.lobe != Lobe::Unknown).count(), 34);
        assert_eq!(t.lobe(24), Lobe::Frontal);
        assert_eq!(t.lobe(35), Lobe::CingulateInsula);
        assert_eq!(LabelTable::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let json = r#"[{"label":1,"name":"a","lobe":"frontal"},{"label":1,"name":"b","lobe":"temporal"}]"#;
        assert!(LabelTable::from_json(json).is_err());
    }

    #[test]
    fn grouping_counts_unknowns_and_is_idempotent() {
        let t = LabelTable::desikan_killiany();
        let g = group_to_lobes(&[24, 5, 999, 35], &t);
        assert_eq!(g.lobes, vec![Lobe::Frontal, Lobe::Occipital, Lobe::Unknown, Lobe::CingulateInsula]);
        assert_eq!(g.unknown_labels, 1);
        let again = group_to_lobes(&g.codes(), &LabelTable::lobes());
        assert_eq!(again.lobes, g.lobes);
    }

    #[test]
    fn transfer_copies_and_tolerates_small_shift() {
        let s = shapes::icosphere(10.0, 3);
        let labels: Vec<i32> = s.vertices.iter().map(|p| (p.z > 0.0) as i32).collect();
        let same = transfer_labels(&s, &labels, &s).unwrap();
        assert_eq!(same.labels, labels);
        assert!(same.distances.iter().all(|&d| d == 0.0));
        let moved = transfer_labels(&s, &labels, &s.translated(Vector3::new(0.01, 0.0, 0.0))).unwrap();
        assert_eq!(moved.labels, labels);
        assert!(transfer_labels(&TriangleMesh::default(), &[], &s).is_err());
    }
}
