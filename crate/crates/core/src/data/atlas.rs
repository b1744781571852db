//! Region-of-interest atlas.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token accepted in place of a file path to select the 116-region AAL atlas.
pub const BUILTIN_TOKEN: &str = "builtin";

/// The 116 labels of the Automated Anatomical Labeling template, in index order.
pub const AAL116_LABELS: [&str; 116] = [
    "Precentral_L", "Precentral_R", "Frontal_Sup_L", "Frontal_Sup_R",
    "Frontal_Sup_Orb_L", "Frontal_Sup_Orb_R", "Frontal_Mid_L", "Frontal_Mid_R",
    "Frontal_Mid_Orb_L", "Frontal_Mid_Orb_R", "Frontal_Inf_Oper_L", "Frontal_Inf_Oper_R",
    "Frontal_Inf_Tri_L", "Frontal_Inf_Tri_R", "Frontal_Inf_Orb_L", "Frontal_Inf_Orb_R",
    "Rolandic_Oper_L", "Rolandic_Oper_R", "Supp_Motor_L", "Supp_Motor_R",
    "Olfactory_L", "Olfactory_R", "Frontal_Sup_Med_L", "Frontal_Sup_Med_R",
    "Frontal_Med_Orb_L", "Frontal_Med_Orb_R", "Rectus_L", "Rectus_R",
    "Insula_L", "Insula_R", "Cingulum_Ant_L", "Cingulum_Ant_R",
    "Cingulum_Mid_L", "Cingulum_Mid_R", "Cingulum_Post_L", "Cingulum_Post_R",
    "Hippocampus_L", "Hippocampus_R", "ParaHippo_L", "ParaHippo_R",
    "Amygdala_L", "Amygdala_R", "Calcarine_L", "Calcarine_R",
    "Cuneus_L", "Cuneus_R", "Lingual_L", "Lingual_R",
    "Occipital_Sup_L", "Occipical_Sup_R", "Occipital_Mid_L", "Occipical_Mid_R",
    "Occipital_Inf_L", "Occipital_Inf_R", "Fusiform_L", "Fusiform_R",
    "Postcentral_L", "Postcentral_R", "Parietal_Sup_L", "Parietal_Sup_R",
    "Parietal_Inf_L", "Parietal_Inf_R", "SupraMarginal_L", "SupraMarginal_R",
    "Angular_L", "Angular_R", "Precuneus_L", "Precuneus_R",
    "Paracentral_Lob_L", "Paracentral_Lob_R", "Caudate_L", "Caudate_R",
    "Putamen_L", "Putamen_R", "Pallidum_L", "Pallidum_R",
    "Thalamus_L", "Thalamus_R", "Heschl_L", "Heschl_R",
    "Temporal_Sup_L", "Temporal_Sup_R", "Templ_Pole_Sup_L", "Templ_Pole_Sup_R",
    "Temporal_Mid_L", "Temporal_Mid_R", "Templ_Pole_Mid_L", "Temp_Pole_Mid_R",
    "Temporal_Inf_L", "Temporal_Inf_R", "Cerebelm_Crus1_L", "Cerebelm_Crus1_R",
    "Cerebelm_Crus2_L", "Cerebelm_Crus2_R", "Cerebelum_3_L", "Cerebelum_3_R",
    "Cerebelum_4_5_L", "Cerebelum_4_5_R", "Cerebelum_6_L", "Cerebelum_6_R",
    "Cerebelum_7_L", "Cerebelum_7_R", "Cerebelum_8_L", "Cerebelum_8_R",
    "Cerebelum_9_L", "Cerebelum_9_R", "Cerebelum_10_L", "Cerebelum_10_R",
    "Vermis_1_2", "Vermis_3", "Vermis_4_5", "Vermis_6",
    "Vermis_7", "Vermis_8", "Vermis_9", "Vermis_10",
];

/// Where an atlas comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AtlasSource {
    Builtin,
    File(PathBuf),
}

impl AtlasSource {
    /// Interprets `builtin` as the AAL-116 atlas and anything else as a path.
    pub fn parse(s: &str) -> Self {
        if s == BUILTIN_TOKEN {
            AtlasSource::Builtin
        } else {
            AtlasSource::File(PathBuf::from(s))
        }
    }
}

/// Ordered list of ROI names. Index 0 in memory is ROI #1 in the atlas.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct RoiAtlas {
    labels: Vec<String>,
}

impl RoiAtlas {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyAtlas);
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::DuplicateLabel(label.clone()));
            }
        }
        Ok(Self { labels })
    }

    pub fn aal116() -> Self {
        Self {
            labels: AAL116_LABELS.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Anonymous atlas `ROI_1 .. ROI_n`, handy for synthetic data of arbitrary width.
    pub fn numbered(n: usize) -> Result<Self> {
        Self::new((1..=n).map(|i| format!("ROI_{i}")).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Label of the zero-based ROI `index`.
    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

impl TryFrom<Vec<String>> for RoiAtlas {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        Self::new(labels)
    }
}

impl From<RoiAtlas> for Vec<String> {
    fn from(atlas: RoiAtlas) -> Self {
        atlas.labels
    }
}

/// Loads an atlas file (one label per line, blank lines ignored) or the builtin atlas.
pub fn load_atlas(source: &AtlasSource) -> Result<RoiAtlas> {
    match source {
        AtlasSource::Builtin => Ok(RoiAtlas::aal116()),
        AtlasSource::File(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_atlas(&text)
        }
    }
}

pub fn parse_atlas(text: &str) -> Result<RoiAtlas> {
    let labels: Vec<String> = text
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect();
    RoiAtlas::new(labels)
}

pub fn write_atlas(atlas: &RoiAtlas, path: &Path) -> Result<()> {
    let mut text = atlas.labels.join("\n");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
