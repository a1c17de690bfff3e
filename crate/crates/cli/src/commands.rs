//! The four subcommands.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use qbld_core::diagnostics::{default_batch_size, summarize, summary_json, ChainSummary};
use qbld_core::inference::{covariate_effect, fit_metrics, information_criteria, mean_draw_loglik, AlphaSource, EffectRequest};
use qbld_core::model::{load_panel_csv, simulate_qbld, write_panel_to, PanelDataset};
use qbld_core::sampler::run_chain;
use qbld_core::{DrawMetadata, DrawStore};
use serde::Deserialize;
use serde_json::json;

use crate::config::{load_design, load_fit, read_json, FitConfig, LoglikMode};
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, write_atomic, write_json, ManifestBuilder};

pub const DATA_FILE: &str = "data.csv";
pub const TRUTH_FILE: &str = "truth.json";
pub const DRAWS_FILE: &str = "draws.csv";
pub const META_FILE: &str = "draws_meta.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const EFFECTS_FILE: &str = "effects.json";

pub fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let (design, raw) = load_design(config, seed)?;
    let (data, truth) = simulate_qbld(&design)?;
    ensure_dir(out)?;
    let mut manifest = ManifestBuilder::start("simulate", raw);
    manifest.seed(design.seed).input(config);

    let data_path = out.join(DATA_FILE);
    write_atomic(&data_path, |w| Ok(write_panel_to(&data, w)?))?;
    manifest.output(&data_path);
    let truth_path = out.join(TRUTH_FILE);
    write_json(&truth_path, &truth)?;
    manifest.output(&truth_path);
    manifest.finish(out)?;
    eprintln!(
        "simulated {} individuals x {} periods, share of y = 1: {:.4}",
        design.n,
        design.t,
        data.ones_share()
    );
    Ok(())
}

fn load_data(cfg: &FitConfig, path: &Path) -> CliResult<PanelDataset> {
    if !path.exists() {
        return Err(CliError::io(path, "no such file"));
    }
    Ok(load_panel_csv(path, &cfg.columns)?)
}

fn summary_document(store: &DrawStore, summary: &[(String, ChainSummary)], batch_size: usize) -> serde_json::Value {
    json!({
        "p": store.meta.p,
        "algorithm": store.meta.algorithm,
        "retained": store.len(),
        "batch_size": batch_size,
        "parameters": summary_json(summary),
    })
}

fn print_summary(summary: &[(String, ChainSummary)]) {
    println!("{:<12} {:>10} {:>10} {:>8} {:>8}", "parameter", "mean", "std", "IF", "acf10");
    for (name, s) in summary {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!("{:<12} {:>10.4} {:>10.4} {:>8} {:>8}", name, s.mean, s.std, f(s.if_factor), f(s.acf_at(10)));
    }
}

pub fn fit(config: &Path, data_path: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let (cfg, raw) = load_fit(config, seed)?;
    let sampler = cfg.sampler()?;
    if cfg.loglik == LoglikMode::DrawAverage && !cfg.store_alpha {
        return Err(CliError::Config("loglik = \"draw_average\" needs store_alpha = true".into()));
    }
    let data = load_data(&cfg, data_path)?;
    let spec = cfg.model(data.k())?;
    ensure_dir(out)?;
    let mut manifest = ManifestBuilder::start("fit", raw);
    manifest.seed(cfg.seed).algorithm(cfg.algorithm).input(config).input(data_path);

    let store = run_chain(&data, &spec, &sampler)?;

    let draws_path = out.join(DRAWS_FILE);
    write_atomic(&draws_path, |w| Ok(store.write_csv(w)?))?;
    manifest.output(&draws_path);
    let meta_path = out.join(META_FILE);
    write_json(&meta_path, &store.meta)?;
    manifest.output(&meta_path);

    let batch_size = cfg.batch_size.unwrap_or_else(|| default_batch_size(store.len()));
    let summary = summarize(&store, Some(batch_size))?;
    let summary_path = out.join(SUMMARY_FILE);
    write_json(&summary_path, &summary_document(&store, &summary, batch_size))?;
    manifest.output(&summary_path);

    let metrics = match cfg.loglik {
        LoglikMode::PosteriorMean => fit_metrics(&store, &data, &spec)?,
        LoglikMode::DrawAverage => information_criteria(mean_draw_loglik(&store, &data, &spec)?, data.k(), data.n_obs())?,
    };
    let metrics_path = out.join(METRICS_FILE);
    write_json(
        &metrics_path,
        &json!({
            "loglik": metrics.loglik,
            "caic": metrics.caic,
            "cbic": metrics.cbic,
            "dof": metrics.dof,
            "N_obs": metrics.n_obs,
            "loglik_at": cfg.loglik,
        }),
    )?;
    manifest.output(&metrics_path);
    manifest.finish(out)?;

    print_summary(&summary);
    println!("loglik {:.3}  cAIC {:.3}  cBIC {:.3}", metrics.loglik, metrics.caic, metrics.cbic);
    Ok(())
}

fn read_draws(dir: &Path) -> CliResult<DrawStore> {
    let meta_path = dir.join(META_FILE);
    let draws_path = dir.join(DRAWS_FILE);
    let meta_file = File::open(&meta_path).map_err(|e| CliError::io(&meta_path, e))?;
    let meta: DrawMetadata =
        serde_json::from_reader(BufReader::new(meta_file)).map_err(|e| CliError::io(&meta_path, e))?;
    let draws = File::open(&draws_path).map_err(|e| CliError::io(&draws_path, e))?;
    Ok(DrawStore::read_csv(BufReader::new(draws), meta)?)
}

pub fn summarize_cmd(draws_dir: &Path, out: Option<&Path>, batch_size: Option<usize>) -> CliResult<()> {
    let store = read_draws(draws_dir)?;
    let out = out.unwrap_or(draws_dir);
    ensure_dir(out)?;
    let mut manifest = ManifestBuilder::start("summarize", json!({ "batch_size": batch_size }));
    manifest.seed(store.meta.seed).algorithm(store.meta.algorithm).input(draws_dir);
    let b = batch_size.unwrap_or_else(|| default_batch_size(store.len()));
    let summary = summarize(&store, Some(b))?;
    let path = out.join(SUMMARY_FILE);
    write_json(&path, &summary_document(&store, &summary, b))?;
    manifest.output(&path);
    manifest.finish(out)?;
    print_summary(&summary);
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EffectsFile {
    List(Vec<EffectRequest>),
    Wrapped { effects: Vec<EffectRequest> },
}

pub fn effects(
    config: &Path,
    draws_dir: &Path,
    data_path: &Path,
    effects_path: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
) -> CliResult<()> {
    let (cfg, raw) = load_fit(config, seed)?;
    let requests = match crate::config::parse::<EffectsFile>(&read_json(effects_path)?, effects_path)? {
        EffectsFile::List(r) | EffectsFile::Wrapped { effects: r } => r,
    };
    let store = read_draws(draws_dir)?;
    if store.meta.p != cfg.p.value() {
        return Err(CliError::Config(format!(
            "config p = {} but the draws were fitted at p = {}",
            cfg.p.value(),
            store.meta.p
        )));
    }
    let data = load_data(&cfg, data_path)?;
    let spec = cfg.model(data.k())?;
    let source = if !store.has_alpha() && cfg.alpha_fallback {
        AlphaSource::PriorFallback { seed: cfg.seed }
    } else {
        AlphaSource::Stored
    };
    let results = requests
        .iter()
        .map(|r| covariate_effect(&store, &data, r, &spec, source))
        .collect::<qbld_core::Result<Vec<_>>>()?;

    let out = out.unwrap_or(draws_dir);
    ensure_dir(out)?;
    let mut manifest = ManifestBuilder::start("effects", raw);
    manifest.seed(cfg.seed).input(config).input(draws_dir).input(data_path).input(effects_path);
    let path = out.join(EFFECTS_FILE);
    let alpha = match source {
        AlphaSource::Stored => "posterior draws",
        AlphaSource::PriorFallback { .. } => "N(0, phi2 I) fallback",
    };
    write_json(&path, &json!({ "p": store.meta.p, "alpha": alpha, "effects": results }))?;
    manifest.output(&path);
    manifest.finish(out)?;

    let mut stdout = std::io::stdout().lock();
    for e in &results {
        let _ = writeln!(
            stdout,
            "{:<16} {:<20} mean {:>9.5}  std {:>8.5}  95% [{:.5}, {:.5}]",
            e.name, e.contrast, e.mean, e.std, e.lower_95, e.upper_95
        );
    }
    Ok(())
}

pub fn required<'a>(flag: &str, value: &'a Option<PathBuf>) -> CliResult<&'a Path> {
    value.as_deref().ok_or_else(|| CliError::Config(format!("--{flag} is required")))
}
