//! The landmarks-to-weights model.
//!
//! Three architecture variants share the same input/output contract:
//!
//! - `FullGrouping` — per-region 1D convolutions, group MLPs over
//!   concatenated member-region features, and one scalar head per target.
//! - `ConvGrouping` — per-region convolutions, then a single MLP from the
//!   concatenated region features to all targets.
//! - `NoGrouping` — a plain MLP over the flattened landmark vector.
//!
//! Gradients are hand-derived for the three fixed architectures; there is no
//! generic autodiff here.

mod layers;
mod model;
mod tensor;
mod train;

pub use model::{check_params, forward, grad, init_params, predict};
pub use tensor::{NetworkParams, Tensor};
pub use train::{
    adam_step, dataset_fingerprint, load_params, loss, lr_schedule, save_params, train, AdamState,
    EpochRecord, TrainConfig, TrainReport,
};

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::align::LANDMARK_COUNT;
use crate::error::{Error, Result};

/// Network variant, in the order of increasing structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    NoGrouping,
    ConvGrouping,
    FullGrouping,
}

impl Variant {
    pub fn all() -> [Variant; 3] {
        [Variant::NoGrouping, Variant::ConvGrouping, Variant::FullGrouping]
    }

    pub fn label(&self) -> &'static str {
        match self {
            Variant::NoGrouping => "none",
            Variant::ConvGrouping => "conv",
            Variant::FullGrouping => "full",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "no_grouping" => Ok(Variant::NoGrouping),
            "conv" | "conv_grouping" => Ok(Variant::ConvGrouping),
            "full" | "full_grouping" => Ok(Variant::FullGrouping),
            other => Err(Error::invalid(format!(
                "unknown variant `{other}` (expected none|conv|full)"
            ))),
        }
    }
}

/// Ordered landmark regions fed to the per-region convolutions.
///
/// The default follows the iBUG 68-point topology. Jaw points 0-16 belong to
/// no region and are not seen by the grouped variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub regions: Vec<(String, Vec<usize>)>,
}

impl RegionPartition {
    pub fn ibug_default() -> Self {
        let r = |name: &str, range: std::ops::Range<usize>| {
            (name.to_string(), range.collect::<Vec<_>>())
        };
        RegionPartition {
            regions: vec![
                r("eyebrow_right", 17..22),
                r("eyebrow_left", 22..27),
                r("nose", 27..31),
                r("nostril", 31..36),
                r("eye_right", 36..42),
                r("eye_left", 42..48),
                r("lips", 48..60),
                r("teeth", 60..68),
            ],
        }
    }

    pub fn region_index(&self, name: &str) -> Option<usize> {
        self.regions.iter().position(|(n, _)| n == name)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (name, indices) in &self.regions {
            if indices.is_empty() {
                return Err(Error::invalid(format!("region `{name}` is empty")));
            }
            for &i in indices {
                if i >= LANDMARK_COUNT {
                    return Err(Error::invalid(format!(
                        "region `{name}` references landmark {i} out of range"
                    )));
                }
                if !seen.insert(i) {
                    return Err(Error::invalid(format!(
                        "landmark {i} appears in more than one region"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Which feature each target's head reads: a single region, or a named group
/// of regions whose features pass through an extra MLP.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupSpec {
    /// Group name -> member region names.
    pub groups: BTreeMap<String, Vec<String>>,
    /// Target name -> region or group name.
    pub target_source: BTreeMap<String, String>,
}

impl GroupSpec {
    pub fn validate(&self, target_names: &[String]) -> Result<()> {
        self.validate_with(target_names, &RegionPartition::ibug_default())
    }

    pub fn validate_with(
        &self,
        target_names: &[String],
        partition: &RegionPartition,
    ) -> Result<()> {
        for (group, members) in &self.groups {
            if partition.region_index(group).is_some() {
                return Err(Error::invalid(format!(
                    "group `{group}` shadows a region name"
                )));
            }
            if members.is_empty() {
                return Err(Error::invalid(format!("group `{group}` has no members")));
            }
            for m in members {
                if partition.region_index(m).is_none() {
                    return Err(Error::invalid(format!(
                        "group `{group}` references unknown region `{m}`"
                    )));
                }
            }
        }
        for name in target_names {
            match self.target_source.get(name) {
                None => {
                    return Err(Error::invalid(format!(
                        "target `{name}` has no feature source"
                    )))
                }
                Some(src) => {
                    if partition.region_index(src).is_none() && !self.groups.contains_key(src) {
                        return Err(Error::invalid(format!(
                            "target `{name}` maps to unknown source `{src}`"
                        )));
                    }
                }
            }
        }
        for name in self.target_source.keys() {
            if !target_names.iter().any(|t| t == name) {
                return Err(Error::invalid(format!(
                    "source entry for unknown target `{name}`"
                )));
            }
        }
        Ok(())
    }
}

/// Hidden-layer sizes. These are artifact defaults, not values the training
/// recipe dictates; they are serialized with the parameters so a saved model
/// is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSizes {
    /// Channels of the two per-region 1D convolutions.
    pub conv_channels: [usize; 2],
    pub kernel: usize,
    /// Width of the per-region feature after flatten+linear.
    pub region_feature: usize,
    /// Group MLP: concat(member features) -> hidden -> feature.
    pub group_hidden: usize,
    pub group_feature: usize,
    /// Per-target head: feature -> hidden -> 1.
    pub head_hidden: usize,
    /// ConvGrouping trunk: concat(region features) -> hidden -> K.
    pub conv_mlp_hidden: usize,
    /// NoGrouping trunk: 136 -> hidden[0] -> hidden[1] -> K.
    pub mlp_hidden: [usize; 2],
    /// LeakyReLU slope for every hidden activation.
    pub leaky_slope: f64,
}

impl Default for LayerSizes {
    fn default() -> Self {
        LayerSizes {
            conv_channels: [16, 32],
            kernel: 3,
            region_feature: 32,
            group_hidden: 64,
            group_feature: 32,
            head_hidden: 16,
            conv_mlp_hidden: 128,
            mlp_hidden: [256, 128],
            leaky_slope: 1e-2,
        }
    }
}

/// Everything needed to build, run, and serialize one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub variant: Variant,
    pub partition: RegionPartition,
    pub group_spec: GroupSpec,
    /// Target order; defines output component order and head naming.
    pub target_names: Vec<String>,
    #[serde(default)]
    pub sizes: LayerSizes,
}

/// Resolved feature source for one target head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureSource {
    Region(usize),
    Group(usize),
}

impl NetworkSpec {
    /// Spec for a rig, using the default iBUG partition and the rig's own
    /// group specification.
    pub fn for_rig(variant: Variant, rig: &crate::rig::BlendshapeRig) -> Self {
        NetworkSpec {
            variant,
            partition: RegionPartition::ibug_default(),
            group_spec: rig.group_spec.clone(),
            target_names: rig.target_names(),
            sizes: LayerSizes::default(),
        }
    }

    pub fn k(&self) -> usize {
        self.target_names.len()
    }

    /// Group names in canonical (sorted) order.
    pub fn group_names(&self) -> Vec<&String> {
        self.group_spec.groups.keys().collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.partition.validate()?;
        if self.target_names.is_empty() {
            return Err(Error::invalid("network needs at least one target"));
        }
        if self.variant == Variant::FullGrouping {
            self.group_spec
                .validate_with(&self.target_names, &self.partition)?;
        }
        Ok(())
    }

    /// Per-target feature source, in target order. Only meaningful for
    /// `FullGrouping`.
    pub fn resolve_sources(&self) -> Result<Vec<FeatureSource>> {
        let group_names = self.group_names();
        self.target_names
            .iter()
            .map(|name| {
                let src = self.group_spec.target_source.get(name).ok_or_else(|| {
                    Error::invalid(format!("target `{name}` has no feature source"))
                })?;
                if let Some(r) = self.partition.region_index(src) {
                    Ok(FeatureSource::Region(r))
                } else if let Some(g) = group_names.iter().position(|n| *n == src) {
                    Ok(FeatureSource::Group(g))
                } else {
                    Err(Error::invalid(format!(
                        "target `{name}` maps to unknown source `{src}`"
                    )))
                }
            })
            .collect()
    }
}
