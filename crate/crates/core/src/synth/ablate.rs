use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{AblationMode, GeneratorConfig};
use crate::error::{Error, Result};
use crate::volio::LabelGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelClass {
    Background,
    Extracerebral,
    CerebellumBrainstem,
    Left,
    Right,
    Midline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelInfo {
    pub name: String,
    pub class: LabelClass,
}

/// Which anatomical class each integer label belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSchema {
    labels: BTreeMap<i16, LabelInfo>,
}

impl LabelSchema {
    pub fn new(labels: BTreeMap<i16, LabelInfo>) -> Self {
        LabelSchema { labels }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialisable")
    }

    pub fn get(&self, label: i16) -> Option<&LabelInfo> {
        self.labels.get(&label)
    }

    /// Unlisted labels have no class and are never removed.
    pub fn class(&self, label: i16) -> Option<LabelClass> {
        self.labels.get(&label).map(|i| i.class)
    }

    pub fn labels(&self) -> impl Iterator<Item = (i16, &LabelInfo)> {
        self.labels.iter().map(|(&l, i)| (l, i))
    }
}

fn removed(mode: AblationMode, class: LabelClass) -> bool {
    use LabelClass::*;
    match mode {
        AblationMode::Full => false,
        AblationMode::NoExtracerebral => class == Extracerebral,
        AblationMode::NoCerebellumBrainstem => matches!(class, Extracerebral | CerebellumBrainstem),
        AblationMode::LeftHemi => matches!(class, Extracerebral | CerebellumBrainstem | Right | Midline),
        AblationMode::RightHemi => matches!(class, Extracerebral | CerebellumBrainstem | Left | Midline),
    }
}

/// Sets every label whose class the mode removes to background (0).
pub fn ablate(labels: &LabelGrid, mode: AblationMode, schema: &LabelSchema) -> LabelGrid {
    if mode == AblationMode::Full {
        return labels.clone();
    }
    let drop: BTreeMap<i16, bool> = schema.labels().map(|(l, i)| (l, removed(mode, i.class))).collect();
    labels.map(|l| if drop.get(&l).copied().unwrap_or(false) { 0 } else { l })
}

/// Parses the mode name first so an unknown mode is an argument error.
pub fn ablate_named(labels: &LabelGrid, mode: &str, schema: &LabelSchema) -> Result<LabelGrid> {
    Ok(ablate(labels, mode.parse()?, schema))
}

pub fn sample_ablation_mode<R: Rng>(config: &GeneratorConfig, rng: &mut R) -> AblationMode {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = AblationMode::Full;
    for m in AblationMode::ALL {
        let p = config.ablation_probs.get(m);
        if p > 0.0 {
            acc += p;
            last = m;
            if u < acc {
                return m;
            }
        }
    }
    last
}

pub(crate) fn check_schema(labels: &LabelGrid, schema: &LabelSchema) -> Result<()> {
    for &l in labels.data() {
        if l != 0 && schema.get(l).is_none() {
            return Err(Error::Mapping(format!("label {l} is not in the label schema")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::phantom::Phantom;
    use crate::synth::rng::{RngState, Stream};

    fn count(l: &LabelGrid, schema: &LabelSchema, class: LabelClass) -> usize {
        l.data().iter().filter(|&&v| schema.class(v) == Some(class)).count()
    }

    #[test]
    fn modes_remove_their_classes() {
        let ph = Phantom::default();
        let schema = LabelSchema::phantom();
        let labels = ph.labels(&ph.geometry(1.0, 4.0).unwrap());
        assert_eq!(ablate(&labels, AblationMode::Full, &schema), labels);

        let left = ablate(&labels, AblationMode::LeftHemi, &schema);
        assert!(count(&labels, &schema, LabelClass::Right) > 0);
        assert_eq!(count(&left, &schema, LabelClass::Right), 0);
        assert_eq!(count(&left, &schema, LabelClass::Left), count(&labels, &schema, LabelClass::Left));

        let bg = |l: &LabelGrid| l.data().iter().filter(|&&v| v == 0).count();
        let noex = ablate(&labels, AblationMode::NoExtracerebral, &schema);
        assert!(bg(&noex) > bg(&labels));

        for m in AblationMode::ALL {
            let once = ablate(&labels, m, &schema);
            assert_eq!(ablate(&once, m, &schema), once, "{m}");
        }
        assert!(matches!(ablate_named(&labels, "no-skull", &schema), Err(Error::Argument(_))));
    }

    #[test]
    fn schema_json_round_trip() {
        let s = LabelSchema::phantom();
        assert_eq!(LabelSchema::from_json(&s.to_json()).unwrap(), s);
        let parsed = LabelSchema::from_json(r#"{"3": {"name": "wm", "class": "left"}}"#).unwrap();
        assert_eq!(parsed.class(3), Some(LabelClass::Left));
        assert!(LabelSchema::from_json(r#"{"3": {"name": "wm", "class": "brain"}}"#).is_err());
    }

    #[test]
    fn mode_frequencies_follow_probabilities() {
        let c = GeneratorConfig::default();
        let mut rng = RngState::new(0).stream(Stream::Ablation);
        let n = 20000;
        let full = (0..n).filter(|_| sample_ablation_mode(&c, &mut rng) == AblationMode::Full).count();
        assert!((full as f64 / n as f64 - 0.6).abs() < 0.02);
        let only = GeneratorConfig { ablation_probs: crate::synth::AblationProbs::only(AblationMode::RightHemi), ..c };
        assert!((0..100).all(|_| sample_ablation_mode(&only, &mut rng) == AblationMode::RightHemi));
    }
}
