#![allow(dead_code)]

pub mod bl_grid;

use std::path::PathBuf;

use sfde::config::{load_config, Resolved};

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

pub fn preset(name: &str) -> Resolved {
    load_config(&config_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
