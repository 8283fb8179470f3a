use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label-removal mode applied before synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    Full,
    NoExtracerebral,
    NoCerebellumBrainstem,
    LeftHemi,
    RightHemi,
}

impl AblationMode {
    pub const ALL: [AblationMode; 5] = [
        AblationMode::Full,
        AblationMode::NoExtracerebral,
        AblationMode::NoCerebellumBrainstem,
        AblationMode::LeftHemi,
        AblationMode::RightHemi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::NoExtracerebral => "no-extracerebral",
            AblationMode::NoCerebellumBrainstem => "no-cerebellum-brainstem",
            AblationMode::LeftHemi => "left-hemi",
            AblationMode::RightHemi => "right-hemi",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown ablation mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct AblationProbs {
    pub full: f64,
    pub no_extracerebral: f64,
    pub no_cerebellum_brainstem: f64,
    pub left_hemi: f64,
    pub right_hemi: f64,
}

impl Default for AblationProbs {
    fn default() -> Self {
        AblationProbs { full: 0.6, no_extracerebral: 0.2, no_cerebellum_brainstem: 0.1, left_hemi: 0.05, right_hemi: 0.05 }
    }
}

impl AblationProbs {
    pub fn only(mode: AblationMode) -> Self {
        let mut p = AblationProbs { full: 0.0, no_extracerebral: 0.0, no_cerebellum_brainstem: 0.0, left_hemi: 0.0, right_hemi: 0.0 };
        *p.get_mut(mode) = 1.0;
        p
    }

    pub fn get(&self, mode: AblationMode) -> f64 {
        match mode {
            AblationMode::Full => self.full,
            AblationMode::NoExtracerebral => self.no_extracerebral,
            AblationMode::NoCerebellumBrainstem => self.no_cerebellum_brainstem,
            AblationMode::LeftHemi => self.left_hemi,
            AblationMode::RightHemi => self.right_hemi,
        }
    }

    fn get_mut(&mut self, mode: AblationMode) -> &mut f64 {
        match mode {
            AblationMode::Full => &mut self.full,
            AblationMode::NoExtracerebral => &mut self.no_extracerebral,
            AblationMode::NoCerebellumBrainstem => &mut self.no_cerebellum_brainstem,
            AblationMode::LeftHemi => &mut self.left_hemi,
            AblationMode::RightHemi => &mut self.right_hemi,
        }
    }
}

/// How control-grid velocities are interpolated onto the image lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VelocityUpsampling {
    /// Smooth (C2) cubic B-spline.
    #[default]
    CubicBspline,
    Trilinear,
}

/// Target acquisition for resolution simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Acquisition {
    Isotropic { mm: f64 },
    /// `slice_axis` is the lattice axis (0, 1 or 2) sampled at `slice_mm`.
    Anisotropic { inplane_mm: f64, slice_mm: f64, slice_axis: usize },
}

impl Acquisition {
    pub fn spacing(&self) -> [f64; 3] {
        match *self {
            Acquisition::Isotropic { mm } => [mm; 3],
            Acquisition::Anisotropic { inplane_mm, slice_mm, slice_axis } => {
                let mut s = [inplane_mm; 3];
                s[slice_axis.min(2)] = slice_mm;
                s
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Acquisition::Anisotropic { slice_axis, .. } = *self {
            if slice_axis > 2 {
                return Err(Error::arg(format!("slice axis {slice_axis} is not 0, 1 or 2")));
            }
        }
        let s = self.spacing();
        if s.iter().any(|&v| !(v >= 1.0) || !v.is_finite()) {
            return Err(Error::arg(format!("acquisition spacing must be at least 1 mm, got {s:?}")));
        }
        Ok(())
    }
}

/// Named acquisition protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "hyperfine-axial")]
    HyperfineAxial,
    #[serde(rename = "iso2")]
    Iso2,
    #[serde(rename = "iso3")]
    Iso3,
    #[serde(rename = "iso4")]
    Iso4,
    #[serde(rename = "postmortem-2.3")]
    Postmortem,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::HyperfineAxial, Preset::Iso2, Preset::Iso3, Preset::Iso4, Preset::Postmortem];

    pub fn name(self) -> &'static str {
        match self {
            Preset::HyperfineAxial => "hyperfine-axial",
            Preset::Iso2 => "iso2",
            Preset::Iso3 => "iso3",
            Preset::Iso4 => "iso4",
            Preset::Postmortem => "postmortem-2.3",
        }
    }

    pub fn acquisition(self) -> Acquisition {
        match self {
            // 1.6 x 1.6 mm axial slices, 5 mm thick
            Preset::HyperfineAxial => Acquisition::Anisotropic { inplane_mm: 1.6, slice_mm: 5.0, slice_axis: 2 },
            Preset::Iso2 => Acquisition::Isotropic { mm: 2.0 },
            Preset::Iso3 => Acquisition::Isotropic { mm: 3.0 },
            Preset::Iso4 => Acquisition::Isotropic { mm: 4.0 },
            Preset::Postmortem => Acquisition::Anisotropic { inplane_mm: 2.30, slice_mm: 2.31, slice_axis: 2 },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown preset {s:?}")))
    }
}

/// Every randomization range of the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub rotation_max_deg: f64,
    pub translation_max_mm: f64,
    pub scale_range: [f64; 2],
    /// Upper bound of the control-point velocity standard deviation.
    pub svf_sigma_mm: f64,
    pub svf_grid: usize,
    pub svf_steps: u32,
    pub svf_upsample: VelocityUpsampling,
    pub gmm_mean_range: [f64; 2],
    pub gmm_std_range: [f64; 2],
    pub bias_log_max: f64,
    pub bias_grid: usize,
    /// Noise standard deviation in percent of the image intensity range.
    pub noise_std_range: [f64; 2],
    pub inplane_spacing_range_mm: [f64; 2],
    pub slice_spacing_range_mm: [f64; 2],
    pub iso_spacing_range_mm: [f64; 2],
    /// Probability of drawing an isotropic rather than a thick-slice acquisition.
    pub isotropic_prob: f64,
    /// Fixed acquisition; when absent one is drawn from the spacing ranges.
    pub acquisition: Option<Acquisition>,
    pub ablation_probs: AblationProbs,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            rotation_max_deg: 40.0,
            translation_max_mm: 10.0,
            scale_range: [0.85, 1.15],
            svf_sigma_mm: 6.0,
            svf_grid: 10,
            svf_steps: 8,
            svf_upsample: VelocityUpsampling::CubicBspline,
            gmm_mean_range: [0.0, 255.0],
            gmm_std_range: [0.0, 35.0],
            bias_log_max: 1.0,
            bias_grid: 4,
            noise_std_range: [0.0, 15.0],
            inplane_spacing_range_mm: [1.0, 2.0],
            slice_spacing_range_mm: [1.0, 5.0],
            iso_spacing_range_mm: [1.0, 4.0],
            isotropic_prob: 0.5,
            acquisition: None,
            ablation_probs: AblationProbs::default(),
        }
    }
}

impl GeneratorConfig {
    /// No randomization: identity geometry, noiseless piecewise-constant contrast, 1 mm output.
    pub fn identity() -> Self {
        GeneratorConfig {
            rotation_max_deg: 0.0,
            translation_max_mm: 0.0,
            scale_range: [1.0, 1.0],
            svf_sigma_mm: 0.0,
            gmm_std_range: [0.0, 0.0],
            bias_log_max: 0.0,
            noise_std_range: [0.0, 0.0],
            acquisition: Some(Acquisition::Isotropic { mm: 1.0 }),
            ablation_probs: AblationProbs::only(AblationMode::Full),
            ..GeneratorConfig::default()
        }
    }

    pub fn with_preset(mut self, preset: Preset) -> Self {
        self.acquisition = Some(preset.acquisition());
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: GeneratorConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serialisable")
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::arg(format!("{name} must be finite and non-negative, got {v}")))
            }
        };
        let range = |name: &str, r: [f64; 2]| -> Result<()> {
            if r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] {
                Ok(())
            } else {
                Err(Error::arg(format!("{name} must satisfy lo <= hi, got {r:?}")))
            }
        };
        nonneg("rotation_max_deg", self.rotation_max_deg)?;
        nonneg("translation_max_mm", self.translation_max_mm)?;
        nonneg("svf_sigma_mm", self.svf_sigma_mm)?;
        nonneg("bias_log_max", self.bias_log_max)?;
        range("scale_range", self.scale_range)?;
        if self.scale_range[0] <= 0.0 {
            return Err(Error::arg("scale_range must be positive"));
        }
        range("gmm_mean_range", self.gmm_mean_range)?;
        range("gmm_std_range", self.gmm_std_range)?;
        range("noise_std_range", self.noise_std_range)?;
        nonneg("gmm_std_range", self.gmm_std_range[0])?;
        nonneg("noise_std_range", self.noise_std_range[0])?;
        for (name, r) in [
            ("inplane_spacing_range_mm", self.inplane_spacing_range_mm),
            ("slice_spacing_range_mm", self.slice_spacing_range_mm),
            ("iso_spacing_range_mm", self.iso_spacing_range_mm),
        ] {
            range(name, r)?;
            if r[0] < 1.0 {
                return Err(Error::arg(format!("{name} must not go below 1 mm, got {r:?}")));
            }
        }
        if self.svf_grid < 2 || self.bias_grid < 1 {
            return Err(Error::arg("svf_grid must be at least 2 and bias_grid at least 1"));
        }
        if self.svf_steps < 1 {
            return Err(Error::arg("svf_steps must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.isotropic_prob) {
            return Err(Error::arg(format!("isotropic_prob {} outside [0, 1]", self.isotropic_prob)));
        }
        let mut total = 0.0;
        for m in AblationMode::ALL {
            let p = self.ablation_probs.get(m);
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::arg(format!("ablation probability for {m} is {p}")));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!("ablation probabilities sum to {total}, not 1")));
        }
        if let Some(a) = &self.acquisition {
            a.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = GeneratorConfig::default();
        c.validate().unwrap();
        GeneratorConfig::identity().validate().unwrap();
        assert_eq!(GeneratorConfig::from_json(&c.to_json()).unwrap(), c);
        let partial = GeneratorConfig::from_json(r#"{"rotation_max_deg": 15}"#).unwrap();
        assert_eq!(partial.rotation_max_deg, 15.0);
        assert_eq!(partial.svf_grid, 10);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = GeneratorConfig::default();
        c.scale_range = [1.2, 0.9];
        assert!(c.validate().is_err());
        let mut c = GeneratorConfig::default();
        c.ablation_probs.full = 0.5;
        assert!(c.validate().is_err());
        let mut c = GeneratorConfig::default();
        c.iso_spacing_range_mm = [0.5, 4.0];
        assert!(c.validate().is_err());
        assert!(GeneratorConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(Preset::HyperfineAxial.acquisition().spacing(), [1.6, 1.6, 5.0]);
        assert_eq!(Preset::Iso3.acquisition().spacing(), [3.0; 3]);
        assert_eq!(Preset::Iso4.acquisition().spacing(), [4.0; 3]);
        assert_eq!(Preset::Postmortem.acquisition().spacing(), [2.30, 2.30, 2.31]);
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{}\"", p.name()));
        }
        assert!(Acquisition::Isotropic { mm: 0.8 }.validate().is_err());
    }

    #[test]
    fn ablation_names() {
        for m in AblationMode::ALL {
            assert_eq!(m.name().parse::<AblationMode>().unwrap(), m);
        }
        assert!(matches!("both-hemi".parse::<AblationMode>(), Err(Error::Argument(_))));
    }
}
