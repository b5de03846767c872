use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use tintegrate_core::eval::{
    alpha_histogram, evaluate_model, evaluate_suite, multi_trial, summary_csv, timestep_refinement_study,
    training_window_states, write_alpha_hist, write_refinement, write_suite, write_trials, InferenceKind,
    MetricSeries, SuiteMethod,
};
use tintegrate_core::pde::{generate_dataset, Manifest, TrajectoryDataset, MANIFEST_FILE};
use tintegrate_core::rng::{derive_seed, indexed_seed};
use tintegrate_core::training::{train, write_loss_curve, alpha_stats_csv, Checkpoint, Regime, StateSet, Window};
use tintegrate_core::{Error, Result};

use crate::config::{ConfigLayers, ExperimentConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOSS_FILE: &str = "loss.csv";
pub const ALPHA_STATS_FILE: &str = "alpha_stats.csv";
pub const EVAL_DIR: &str = "eval";

pub fn checkpoint_path(run_dir: &Path, regime: Regime) -> PathBuf {
    run_dir.join(regime.name()).join(CHECKPOINT_FILE)
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let p = dir.join(MANIFEST_FILE);
    if !p.is_file() {
        return Err(Error::Missing(p));
    }
    Ok(serde_json::from_str(&fs::read_to_string(&p)?)?)
}

/// Resolves the config of a command that consumes an existing dataset; the
/// problem comes from the dataset unless the user named one.
fn resolve_for_dataset(layers: &ConfigLayers) -> Result<(ExperimentConfig, TrajectoryDataset)> {
    let user = layers.user_value()?;
    let dir = match user.get("dataset_dir").and_then(Value::as_str) {
        Some(d) => PathBuf::from(d),
        None => {
            let pde = user.get("pde").and_then(Value::as_str).unwrap_or("burgers1d");
            PathBuf::from("data").join(pde)
        }
    };
    let manifest = read_manifest(&dir)?;
    let cfg = layers.resolve_with(|v| {
        v["dataset_dir"] = Value::String(dir.to_string_lossy().into_owned());
        if v.get("pde").is_none() {
            v["pde"] = serde_json::to_value(manifest.setup.pde)?;
        }
        if v.get("dataset").is_none() {
            v["dataset"] = serde_json::json!({"n_samples": manifest.n_samples, "n_train": manifest.n_train});
        }
        Ok(())
    })?;
    if cfg.pde != manifest.setup.pde {
        return Err(Error::Config(format!(
            "config is for {} but {} holds {}",
            cfg.pde,
            dir.display(),
            manifest.setup.pde
        )));
    }
    let ds = TrajectoryDataset::load(&cfg.dataset_dir)?;
    Ok((cfg, ds))
}

pub fn generate(layers: &ConfigLayers) -> Result<()> {
    let cfg = layers.resolve()?;
    let start = Instant::now();
    let ds = generate_dataset(&cfg.dataset_config())?;
    ds.save(&cfg.dataset_dir)?;
    cfg.write_snapshot(&cfg.dataset_dir)?;
    let m = &ds.manifest;
    let shape: Vec<String> = m.spatial_shape.iter().map(|n| n.to_string()).collect();
    println!(
        "{}: {} samples ({} train / {} test), {} frames × {} points, dt_save {}, t_train {}, T {}",
        m.setup.pde,
        m.n_samples,
        m.n_train,
        m.n_samples - m.n_train,
        m.setup.n_t + 1,
        shape.join("×"),
        m.setup.dt_save,
        m.setup.t_train,
        m.t_final
    );
    println!("wrote {}", cfg.dataset_dir.display());
    eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

pub fn train_cmd(layers: &ConfigLayers) -> Result<()> {
    let (cfg, ds) = resolve_for_dataset(layers)?;
    cfg.write_snapshot(&cfg.run_dir)?;
    for &regime in &cfg.regimes {
        let tc = cfg.train_config(regime)?;
        let spec = cfg.model_spec(regime)?;
        println!("training {regime}: {} updates, batch {}", tc.epochs, tc.batch_size);
        let start = Instant::now();
        let ckpt = train(tc, spec, &ds)?;
        let dir = cfg.run_dir.join(regime.name());
        ckpt.save(&dir.join(CHECKPOINT_FILE))?;
        write_loss_curve(&dir.join(LOSS_FILE), &ckpt.meta.curve)?;
        if regime == Regime::TiLearnable {
            fs::write(dir.join(ALPHA_STATS_FILE), alpha_stats_csv(&ckpt.meta.alpha_stats))?;
        }
        match ckpt.meta.best_test_loss {
            Some(l) => println!("  best test loss {l:.4e} at update {}", ckpt.meta.best_epoch),
            None => println!("  no test loss recorded"),
        }
        eprintln!("  elapsed {:.1}s", start.elapsed().as_secs_f64());
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub n_states: usize,
    pub mean: [f64; 4],
    pub median: [f64; 4],
    pub reference: [f64; 4],
}

fn inference_kind(cfg: &ExperimentConfig, regime: Regime) -> InferenceKind {
    match (regime, cfg.eval.integrator) {
        (Regime::TiRk4, Some(s)) => InferenceKind::Integrator(s),
        _ => InferenceKind::default_for(regime),
    }
}

pub fn eval_cmd(layers: &ConfigLayers) -> Result<()> {
    let (cfg, ds) = resolve_for_dataset(layers)?;
    let test = ds.test_split()?;
    let out = cfg.run_dir.join(EVAL_DIR);
    let mut loaded: Vec<(Regime, Option<Checkpoint>)> = Vec::new();
    for regime in Regime::ALL {
        let ckpt = match Checkpoint::load(&checkpoint_path(&cfg.run_dir, regime)) {
            Ok(c) => Some(c),
            Err(Error::Missing(_)) => None,
            Err(e) => return Err(e),
        };
        loaded.push((regime, ckpt));
    }
    if loaded.iter().all(|(_, c)| c.is_none()) {
        return Err(Error::Missing(cfg.run_dir.join("<regime>").join(CHECKPOINT_FILE)));
    }
    cfg.write_snapshot(&cfg.run_dir)?;

    let methods: Vec<SuiteMethod> = loaded
        .iter()
        .map(|(r, c)| SuiteMethod {
            name: r.label().to_string(),
            checkpoint: c.as_ref(),
            kind: Some(inference_kind(&cfg, *r)),
        })
        .collect();
    let suite = evaluate_suite(&methods, &test, cfg.eval.dt_eval)?;
    for notice in &suite.skipped {
        eprintln!("notice: {notice}");
    }
    write_suite(&out, &suite.series, test.setup())?;
    print!("{}", summary_csv(&suite.series));

    let ckpt_of = |r: Regime| loaded.iter().find(|(q, _)| *q == r).and_then(|(_, c)| c.as_ref());

    if !cfg.eval.dt_list.is_empty() {
        match ckpt_of(Regime::TiRk4).or_else(|| ckpt_of(Regime::TiLearnable)) {
            Some(c) => {
                let model = c.model()?;
                let kind = inference_kind(&cfg, model.regime);
                let curves = timestep_refinement_study(&model, &c.best, kind, &cfg.eval.dt_list, &test)?;
                write_refinement(&out.join("refinement.csv"), &cfg.eval.dt_list, &curves)?;
                for (dt, s) in cfg.eval.dt_list.iter().zip(&curves) {
                    println!("dt={dt}: final rel_l2 {}", s.final_error());
                }
            }
            None => eprintln!("notice: no TI checkpoint, timestep refinement skipped"),
        }
    }

    if let Some(c) = ckpt_of(Regime::TiLearnable) {
        let model = c.model()?;
        let train_set = StateSet::from_dataset(&ds.train_split()?, model.state_indices());
        let window = Window::for_train_steps(ds.setup().train_steps(), train_set.n_frames)?;
        let h = alpha_histogram(&model, &c.best, &training_window_states(&train_set, window))?;
        write_alpha_hist(&out.join("alpha_hist.csv"), &h)?;
        let summary = AlphaSummary {
            n_states: h.n_states,
            mean: h.mean,
            median: h.median,
            reference: h.reference,
        };
        fs::write(out.join("alpha_summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    }

    if cfg.eval.trials >= 2 {
        let base = derive_seed(cfg.seed, "trials");
        let seeds: Vec<u64> = (0..cfg.eval.trials as u64).map(|i| indexed_seed(base, i)).collect();
        let available: Vec<&Checkpoint> = loaded.iter().filter_map(|(_, c)| c.as_ref()).collect();
        let summary = multi_trial(&seeds, |seed| {
            available
                .iter()
                .map(|c| -> Result<MetricSeries> {
                    let mut tc = c.meta.config.clone();
                    tc.seed = seed;
                    let trial = train(&tc, &c.meta.spec, &ds)?;
                    let model = trial.model()?;
                    let kind = inference_kind(&cfg, model.regime);
                    let dt = cfg.eval.dt_eval.unwrap_or(test.setup().dt_save);
                    evaluate_model(model.regime.label(), &model, &trial.best, kind, dt, &test)
                })
                .collect()
        })?;
        for (seed, err) in &summary.failed {
            eprintln!("notice: trial with seed {seed} failed and is excluded: {err}");
        }
        write_trials(&out.join("trials.csv"), &summary)?;
        println!("{} trials aggregated", summary.n_trials - summary.failed.len());
    }
    println!("wrote {}", out.display());
    Ok(())
}
