//! JSON-in/JSON-out operations behind the static page in `www/`.
//! The plain functions are usable natively; the `wasm_bindgen` wrappers
//! turn errors into `{"error": ...}` objects.

use furcnet::data::{make_split, standardize_partition, synth_generate, SynthConfig};
use furcnet::eval::percent_improvement;
use furcnet::train::{evaluate, fit};
use furcnet::{build, param_count, ArchClass, NetworkSpec, StageSpec, TrainConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct LayerInfo {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
    pub params: usize,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub label: String,
    pub on_grid: bool,
    pub layers: Vec<LayerInfo>,
    pub params: usize,
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub val_rmse: f64,
    pub params: usize,
}

fn spec(arch: &str, stage1: &str, stage2: &str, tasks: usize) -> Result<NetworkSpec, String> {
    let arch: ArchClass = arch.parse().map_err(|e: furcnet::Error| e.to_string())?;
    let s1: StageSpec = stage1.parse().map_err(|e: furcnet::Error| e.to_string())?;
    let s2 = match (arch, stage2.trim()) {
        (ArchClass::ExtendedFurcated, "") => Some(StageSpec::new(2, 128)),
        (ArchClass::ExtendedFurcated, s) => Some(s.parse().map_err(|e: furcnet::Error| e.to_string())?),
        (_, "") => None,
        (_, _) => return Err(format!("{} has no stage-2 network", arch.display_name())),
    };
    Ok(NetworkSpec::new(arch, s1, s2, tasks).off_grid())
}

pub fn summarize(arch: &str, stage1: &str, stage2: &str, tasks: usize) -> Result<Summary, String> {
    let spec = spec(arch, stage1, stage2, tasks)?;
    let model = build(&spec, 0).map_err(|e| e.to_string())?;
    let layers = model
        .layer_names()
        .into_iter()
        .zip(model.layers())
        .map(|(name, l)| LayerInfo {
            name,
            inputs: l.in_dim(),
            outputs: l.out_dim(),
            params: l.param_count(),
        })
        .collect();
    let mut strict = spec.clone();
    strict.off_grid = false;
    Ok(Summary {
        label: spec.to_string(),
        on_grid: strict.validate().is_ok(),
        layers,
        params: param_count(&model),
    })
}

/// Trains on a small synthetic single-task problem and returns the loss curve.
pub fn train_curve(arch: &str, stage1: &str, stage2: &str, rows: usize, epochs: usize, seed: u64) -> Result<Curve, String> {
    let err = |e: furcnet::Error| e.to_string();
    if epochs < 2 {
        return Err("need at least 2 epochs".into());
    }
    let spec = spec(arch, stage1, stage2, 1)?.with_dropout(0.0);
    let (data, _) = synth_generate(&SynthConfig::new(rows, seed, 2.0, 0.05).with_tasks(1)).map_err(err)?;
    let plan = make_split(data.len(), seed).map_err(err)?;
    let (_, train, held) = standardize_partition(&data, &plan.train_rows(0), &[&plan.folds[0]]).map_err(err)?;
    let mut config = TrainConfig::for_tasks(1, seed);
    config.max_epochs = epochs;
    config.patience = epochs - 1;
    let model = build(&spec, seed).map_err(err)?;
    let params = param_count(&model);
    let result = fit(model, &train, &held[0], &config).map_err(err)?;
    let val_rmse = evaluate(&result.model, &held[0]).map_err(err)?.rmse[0];
    Ok(Curve {
        train_loss: result.history.iter().map(|r| r.train_loss).collect(),
        val_loss: result.history.iter().map(|r| r.val_loss).collect(),
        best_epoch: result.best_epoch,
        val_rmse,
        params,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| serde_json::json!({ "error": e.to_string() }).to_string()),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

#[wasm_bindgen]
pub fn describe(arch: &str, stage1: &str, stage2: &str, tasks: usize) -> String {
    to_json(summarize(arch, stage1, stage2, tasks))
}

#[wasm_bindgen]
pub fn improvement(baseline_rmse: f64, model_rmse: f64) -> String {
    to_json(percent_improvement(baseline_rmse, model_rmse).map_err(|e| e.to_string()))
}

#[wasm_bindgen]
pub fn train(arch: &str, stage1: &str, stage2: &str, rows: usize, epochs: usize, seed: u32) -> String {
    to_json(train_curve(arch, stage1, stage2, rows, epochs, seed as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn describe_counts_parameters() {
        let s = summarize("extended", "2(64)", "", 3).unwrap();
        assert_eq!(s.params, 54_147);
        assert!(s.on_grid);
        assert_eq!(s.layers.last().unwrap().name, "output");
        let odd = summarize("simple", "1(8)", "", 1).unwrap();
        assert!(!odd.on_grid);
    }

    #[test]
    fn bad_input_is_an_error_object() {
        let v: serde_json::Value = serde_json::from_str(&describe("baseline", "2(16)", "2(16)", 1)).unwrap();
        assert!(v["error"].is_string());
        let v: serde_json::Value = serde_json::from_str(&improvement(0.0, 1.0)).unwrap();
        assert!(v["error"].is_string());
        assert_eq!(improvement(0.2, 0.1), "50.0");
    }

    #[test]
    fn training_curve_is_deterministic() {
        let a = train("simple", "2(8)", "", 200, 5, 3);
        assert_eq!(a, train("simple", "2(8)", "", 200, 5, 3));
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["train_loss"].as_array().unwrap().len(), 5);
        assert!(v["val_rmse"].as_f64().unwrap().is_finite());
    }
}
