use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use tintegrate_core::integrators::Scheme;
use tintegrate_core::pde::{DatasetConfig, PdeTag, ProblemSetup};
use tintegrate_core::training::{ModelSpec, Regime, TrainConfig};
use tintegrate_core::{Error, Result};

pub const SNAPSHOT_FILE: &str = "experiment.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetParams {
    pub n_samples: usize,
    pub n_train: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOptions {
    /// Inference scheme for TI-DON; its default is AB2/AM3.
    pub integrator: Option<Scheme>,
    /// Evaluation step; the stored step when absent.
    pub dt_eval: Option<f64>,
    pub dt_list: Vec<f64>,
    pub trials: usize,
}

/// Everything needed to rerun every stage of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pde: PdeTag,
    pub seed: u64,
    pub paper_scale: bool,
    pub dataset_dir: PathBuf,
    pub run_dir: PathBuf,
    pub dataset: DatasetParams,
    pub regimes: Vec<Regime>,
    /// Keyed by regime name.
    pub train: BTreeMap<String, TrainConfig>,
    pub models: BTreeMap<String, ModelSpec>,
    pub eval: EvalOptions,
}

/// Total samples per problem; the desk scale keeps a tenth. Four fifths train.
fn default_samples(pde: PdeTag, paper_scale: bool) -> usize {
    let paper = match pde {
        PdeTag::Burgers1d | PdeTag::Kdv1d => 2500,
        PdeTag::Ks1d => 3000,
        PdeTag::Heat3d => 1000,
    };
    if paper_scale {
        paper
    } else {
        paper / 10
    }
}

impl ExperimentConfig {
    pub fn defaults(pde: PdeTag, paper_scale: bool, seed: u64) -> Result<Self> {
        let setup = ProblemSetup::new(pde, paper_scale)?;
        let n_samples = default_samples(pde, paper_scale);
        let mut train = BTreeMap::new();
        let mut models = BTreeMap::new();
        for r in Regime::ALL {
            let mut cfg = TrainConfig::default_for(&setup, r, paper_scale);
            cfg.seed = seed;
            train.insert(r.name().to_string(), cfg);
            models.insert(r.name().to_string(), ModelSpec::default_for(&setup, r, paper_scale));
        }
        Ok(Self {
            pde,
            seed,
            paper_scale,
            dataset_dir: PathBuf::from("data").join(pde.name()),
            run_dir: PathBuf::from("runs").join(pde.name()),
            dataset: DatasetParams {
                n_samples,
                n_train: n_samples * 4 / 5,
            },
            regimes: Regime::ALL.to_vec(),
            train,
            models,
            eval: EvalOptions::default(),
        })
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            pde: self.pde,
            n_samples: self.dataset.n_samples,
            n_train: self.dataset.n_train,
            seed: self.seed,
            paper_scale: self.paper_scale,
        }
    }

    pub fn train_config(&self, regime: Regime) -> Result<&TrainConfig> {
        self.train
            .get(regime.name())
            .ok_or_else(|| Error::Config(format!("no training settings for {regime}")))
    }

    pub fn model_spec(&self, regime: Regime) -> Result<&ModelSpec> {
        self.models
            .get(regime.name())
            .ok_or_else(|| Error::Config(format!("no model settings for {regime}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset_config().validate()?;
        let setup = ProblemSetup::new(self.pde, self.paper_scale)?;
        let sensors = setup.grid.active_coords();
        for &r in &self.regimes {
            self.train_config(r)?.validate()?;
            self.model_spec(r)?.validate(r, sensors.rows(), sensors.cols())?;
        }
        for key in self.train.keys().chain(self.models.keys()) {
            key.parse::<Regime>()?;
        }
        if let Some(dt) = self.eval.dt_eval {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("eval.dt_eval must be positive, got {dt}")));
            }
        }
        if let Some(dt) = self.eval.dt_list.iter().find(|&&dt| !(dt > 0.0)) {
            return Err(Error::Config(format!("eval.dt_list holds a non-positive step {dt}")));
        }
        if self.eval.trials == 1 {
            return Err(Error::Config("eval.trials must be 0 or at least 2".into()));
        }
        Ok(())
    }

    pub fn write_snapshot(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(dir.join(SNAPSHOT_FILE), json)?;
        Ok(())
    }
}

/// User-side settings before defaults are filled in.
#[derive(Clone, Debug, Default)]
pub struct ConfigLayers {
    pub file: Option<PathBuf>,
    /// `key.path=value` pairs.
    pub overrides: Vec<String>,
    /// Flag values, applied last, as dotted keys.
    pub flags: Vec<(String, Value)>,
}

impl ConfigLayers {
    pub fn flag(&mut self, key: &str, value: impl Into<Value>) {
        self.flags.push((key.to_string(), value.into()));
    }

    /// The user's document: file, then `--set` overrides, then flags.
    pub fn user_value(&self) -> Result<Value> {
        let mut v = match &self.file {
            Some(p) => {
                if !p.is_file() {
                    return Err(Error::Missing(p.clone()));
                }
                serde_json::from_str(&std::fs::read_to_string(p)?)?
            }
            None => Value::Object(Map::new()),
        };
        if !v.is_object() {
            return Err(Error::Config("the config file must hold a JSON object".into()));
        }
        for o in &self.overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not of the form key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_dotted(&mut v, key, value)?;
        }
        for (key, value) in &self.flags {
            set_dotted(&mut v, key, value.clone())?;
        }
        Ok(v)
    }

    /// Merges the user's document over the defaults it selects.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        self.resolve_with(|_| Ok(()))
    }

    /// Like [`resolve`](Self::resolve), letting `adjust` fill keys the user left unset.
    pub fn resolve_with(&self, adjust: impl FnOnce(&mut Value) -> Result<()>) -> Result<ExperimentConfig> {
        let mut user = self.user_value()?;
        adjust(&mut user)?;
        let pde: PdeTag = match user.get("pde") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("pde: {e}")))?,
            None => PdeTag::Burgers1d,
        };
        let paper_scale = user.get("paper_scale").and_then(Value::as_bool).unwrap_or(false);
        let seed = match user.get("seed") {
            Some(v) => v
                .as_u64()
                .ok_or_else(|| Error::Config(format!("seed must be a non-negative integer, got {v}")))?,
            None => 0,
        };
        let mut merged = serde_json::to_value(ExperimentConfig::defaults(pde, paper_scale, seed)?)?;
        deep_merge(&mut merged, user);
        let cfg: ExperimentConfig =
            serde_json::from_value(merged).map_err(|e| Error::Config(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sets `a.b.c` inside `root`, creating objects on the way.
pub fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key `{key}`")));
    }
    let mut cur = root;
    for p in &parts[..parts.len() - 1] {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{key}`: `{p}` is not inside an object")))?;
        cur = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    let obj = cur
        .as_object_mut()
        .ok_or_else(|| Error::Config(format!("`{key}` does not address an object field")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn deep_merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn dotted_overrides_nest_and_parse_json() {
        let mut layers = ConfigLayers::default();
        layers.overrides = vec!["train.ti_rk4.epochs=77".into(), "eval.dt_list=[0.1,0.01]".into()];
        let cfg = layers.resolve().unwrap();
        assert_eq!(cfg.train_config(Regime::TiRk4).unwrap().epochs, 77);
        assert_eq!(cfg.eval.dt_list, vec![0.1, 0.01]);
        assert_eq!(cfg.train_config(Regime::Fr).unwrap().epochs, 20_000);
    }

    #[test]
    fn flags_win_over_overrides() {
        let mut layers = ConfigLayers::default();
        layers.overrides = vec!["seed=3".into()];
        layers.flag("seed", 9);
        let cfg = layers.resolve().unwrap();
        assert_eq!(cfg.seed, 9);
        assert!(cfg.train.values().all(|t| t.seed == 9));
    }

    #[test]
    fn unknown_fields_and_bad_values_are_config_errors() {
        let mut layers = ConfigLayers::default();
        layers.overrides = vec!["bogus=1".into()];
        assert!(matches!(layers.resolve(), Err(Error::Config(_))));
        layers.overrides = vec!["dataset.n_train=100000".into()];
        assert!(matches!(layers.resolve(), Err(Error::Config(_))));
        layers.overrides = vec!["noequals".into()];
        assert!(matches!(layers.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn merge_replaces_leaves_and_keeps_siblings() {
        let mut a = json!({"x": {"y": 1, "z": 2}, "w": [1]});
        deep_merge(&mut a, json!({"x": {"y": 5}, "w": [2, 3]}));
        assert_eq!(a, json!({"x": {"y": 5, "z": 2}, "w": [2, 3]}));
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg = ConfigLayers::default().resolve().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
