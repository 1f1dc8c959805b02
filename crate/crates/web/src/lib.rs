//! Browser bindings for the static demo page in `www/`.
//!
//! Every export returns a JSON string, either the result or
//! `{"code": ..., "message": ...}` so the page can show engine errors verbatim.

use fieldlab_core::dataset::{advise_sufficiency, dataset_stats, split_dataset, tier_for, SplitRatio};
use fieldlab_core::models::{default_registry, feasible_models, select_model, SelectionConstraints};
use fieldlab_core::synth::{loss_curve, random_detection_set, CurveShape, SetShape};
use fieldlab_core::training::{check_convergence, convergence_step, ConvergencePolicy};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).unwrap_or_else(|e| error("SERIALIZE", e))
}

fn error(code: &str, message: impl std::fmt::Display) -> String {
    json!({ "code": code, "message": message.to_string() }).to_string()
}

/// The built-in registry as a JSON array.
#[wasm_bindgen]
pub fn registry() -> String {
    to_json(&default_registry())
}

/// `constraints` is a JSON `SelectionConstraints`; blank bounds are omitted.
#[wasm_bindgen]
pub fn select(constraints: &str) -> String {
    let constraints: SelectionConstraints = match serde_json::from_str(constraints) {
        Ok(c) => c,
        Err(e) => return error("INVALID_CONSTRAINTS", e),
    };
    let registry = default_registry();
    let feasible: Vec<&str> = feasible_models(&registry, &constraints)
        .iter()
        .map(|m| m.name.as_str())
        .collect();
    match select_model(&registry, &constraints) {
        Ok(chosen) => to_json(&json!({ "chosen": chosen, "feasible": feasible })),
        Err(e) => error(e.code(), e),
    }
}

/// Splits a seeded synthetic detection set and grades each class.
#[wasm_bindgen]
pub fn split_demo(images: u32, classes: u32, ratio: &str, seed: u32) -> String {
    let ratio: SplitRatio = match ratio.parse() {
        Ok(r) => r,
        Err(e) => return error("INVALID_RATIO", e),
    };
    let set = random_detection_set(u64::from(seed), SetShape::new(images as usize, classes as usize));
    let split = match split_dataset(&set, &ratio, u64::from(seed)) {
        Ok(s) => s,
        Err(e) => return error(e.code(), e),
    };
    let stats = dataset_stats(&set);
    let advice = advise_sufficiency(&stats);
    let (train, test, eval) = split.sizes();
    to_json(&json!({
        "sizes": { "train": train, "test": test, "eval": eval },
        "strata": split.strata,
        "stats": stats,
        "advice": advice,
        "weakest": advice.weakest(),
    }))
}

/// Tier for a per-class image count, for the slider readout.
#[wasm_bindgen]
pub fn tier(images_per_class: u32) -> String {
    to_json(&tier_for(images_per_class as usize))
}

/// Synthesizes a loss curve and replays the convergence rule over it.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn convergence_demo(
    seed: u32,
    points: u32,
    plateau: f64,
    rate: f64,
    noise: f64,
    threshold: f64,
    window: u32,
    patience: u32,
) -> String {
    let policy = ConvergencePolicy::new(threshold, window as usize, patience as usize);
    if let Err(e) = policy.validate() {
        return error(e.code(), e);
    }
    let curve = loss_curve(
        u64::from(seed),
        CurveShape {
            points: points as usize,
            every: 10,
            start: 2.0,
            plateau,
            rate,
            noise,
        },
    );
    to_json(&json!({
        "curve": curve,
        "decision": check_convergence(&curve, &policy),
        "converged_at": convergence_step(&curve, &policy),
    }))
}
