//! Experiment manifests (TOML or JSON) and their expansion into engine configs.

use std::path::{Path, PathBuf};

use lth_core::adjudicate::{DatasetClass, VerdictThresholds};
use lth_core::data::Augment;
use lth_core::nn::{ArchSpec, InitScheme};
use lth_core::optim::{Preset, TrainRecipe};
use lth_core::protocol::{DataSpec, Experiment, Seeds, SweepGrid};
use lth_core::prune::PruneScope;
use lth_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Field-wise replacements applied on top of a preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecipeOverrides {
    pub total_epochs: Option<u32>,
    pub initial_lr: Option<f64>,
    pub schedule: Option<lth_core::optim::Schedule>,
    pub warmup_epochs: Option<u32>,
    pub momentum: Option<f64>,
    pub weight_decay: Option<f64>,
    pub batch_size: Option<usize>,
    pub rewind_epoch: Option<u32>,
    pub augment: Option<Augment>,
}

impl RecipeOverrides {
    fn apply(&self, mut r: TrainRecipe) -> TrainRecipe {
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f.clone() { r.$f = v; } )*};
        }
        set!(
            total_epochs,
            initial_lr,
            schedule,
            warmup_epochs,
            momentum,
            weight_decay,
            batch_size,
            rewind_epoch,
            augment
        );
        r
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSpec {
    pub dataset_class: Option<DatasetClass>,
    pub delta_similar: Option<f64>,
    pub delta_gap: Option<f64>,
    pub s_min: Option<f64>,
}

impl ThresholdSpec {
    pub fn resolve(&self, fallback: DatasetClass) -> VerdictThresholds {
        let mut t = VerdictThresholds::for_class(self.dataset_class.unwrap_or(fallback));
        if let Some(v) = self.delta_similar {
            t.delta_similar = v;
        }
        if let Some(v) = self.delta_gap {
            t.delta_gap = v;
        }
        if let Some(v) = self.s_min {
            t.s_min = v;
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub arch: ArchSpec,
    pub data: DataSpec,
    pub seeds: Seeds,
    pub preset: Option<Preset>,
    pub recipe: Option<TrainRecipe>,
    #[serde(default)]
    pub overrides: RecipeOverrides,
    pub init: Option<InitScheme>,
    pub scope: Option<PruneScope>,
    pub sdt_tolerance: Option<f64>,
    pub checkpoint_stride: Option<u32>,
    pub eval_batch: Option<usize>,
    pub sweep: Option<SweepGrid>,
    #[serde(default)]
    pub thresholds: ThresholdSpec,
    /// Whether pretraining counts as full-length; defaults to true only for an
    /// unmodified preset length.
    pub trained_full: Option<bool>,
    pub out_dir: Option<PathBuf>,
}

/// A manifest after preset expansion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Effective {
    pub experiment: Experiment,
    pub sweep: Option<SweepGrid>,
    pub thresholds: VerdictThresholds,
    pub trained_full: bool,
    pub out_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        if is_json {
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }

    pub fn expand(&self, default_out: &Path) -> Result<Effective> {
        let base = match (&self.preset, &self.recipe) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either `preset` or `recipe`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "manifest needs a `preset` or a `recipe`".into(),
                ))
            }
            (Some(p), None) => p.recipe(),
            (None, Some(r)) => r.clone(),
        };
        let recipe = self.overrides.apply(base.clone());
        let full_length = self.preset.is_some() && recipe.total_epochs == base.total_epochs;
        let mut exp = Experiment::new(self.arch.clone(), self.data.clone(), recipe, self.seeds);
        if let Some(v) = self.init {
            exp.init = v;
        }
        if let Some(v) = self.scope {
            exp.scope = v;
        }
        if let Some(v) = self.sdt_tolerance {
            exp.sdt_tolerance = v;
        }
        if let Some(v) = self.checkpoint_stride {
            exp.checkpoint_stride = v;
        }
        if let Some(v) = self.eval_batch {
            exp.eval_batch = v;
        }
        exp.validate()?;
        if let Some(g) = &self.sweep {
            g.validate_for(&exp)?;
        }
        let thresholds = self
            .thresholds
            .resolve(DatasetClass::from_num_classes(self.arch.num_classes));
        thresholds.validate()?;
        Ok(Effective {
            experiment: exp,
            sweep: self.sweep.clone(),
            thresholds,
            trained_full: self.trained_full.unwrap_or(full_length),
            out_dir: self
                .out_dir
                .clone()
                .unwrap_or_else(|| default_out.to_path_buf()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
preset = "cifar-style"

[arch]
kind = "fc"
widths = [8]
num_classes = 2
input_shape = [2]

[data]
source = "synthetic"
kind = "spirals"
n_train = 10
n_test = 10
num_classes = 2
noise = 0.1
seed = 1

[seeds]
init = 1
reinit = 2
data = 3
"#;

    #[test]
    fn preset_expands_to_table_values() {
        let m: Manifest = toml::from_str(BASE).unwrap();
        let e = m.expand(Path::new("out")).unwrap();
        let r = &e.experiment.recipe;
        assert_eq!((r.total_epochs, r.batch_size, r.rewind_epoch), (160, 64, 8));
        assert_eq!(r.weight_decay, 5e-4);
        assert!(e.trained_full);
        assert_eq!(e.thresholds.delta_similar, 0.5);
    }

    #[test]
    fn overrides_clear_the_full_length_attestation() {
        let text = format!("{BASE}\n[overrides]\ntotal_epochs = 20\nrewind_epoch = 1\n");
        let m: Manifest = toml::from_str(&text).unwrap();
        let e = m.expand(Path::new("out")).unwrap();
        assert_eq!(e.experiment.recipe.total_epochs, 20);
        assert!(!e.trained_full);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("bogus = 1\n{BASE}");
        assert!(toml::from_str::<Manifest>(&text).is_err());
        let text = BASE.replace("noise = 0.1", "noise = 0.1\nextra = 2");
        assert!(toml::from_str::<Manifest>(&text).is_err());
    }
}
