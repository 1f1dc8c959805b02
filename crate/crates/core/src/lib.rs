//! Pipeline engine for building citizen-science camera apps: annotated
//! datasets in, trained-model packages and app build manifests out.

pub mod annotations;
pub mod appforge;
pub mod dataset;
pub mod domain;
pub mod ids;
pub mod models;
pub mod synth;
pub mod training;
