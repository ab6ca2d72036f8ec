//! `fusionforge gen` — synthetic dataset generation.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use fusionforge_core::score_data::{
    generate_synthetic, save_labels, save_manifest, save_scores, Dataset, DatasetManifest,
    StreamEntry, SynthConfig,
};
use ndarray::Array2;

use crate::util::{read_text, write_json};

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Output directory for CSVs and manifests
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub classes: usize,
    #[arg(long)]
    pub streams: usize,
    /// Training sample count
    #[arg(long, default_value_t = 600)]
    pub train: usize,
    /// Test sample count
    #[arg(long, default_value_t = 3000)]
    pub test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reliability on a stream's favored classes (c % M == m pattern)
    #[arg(long, default_value_t = 0.9)]
    pub rel_high: f64,
    /// Reliability elsewhere
    #[arg(long, default_value_t = 0.55)]
    pub rel_low: f64,
    /// Full M x C reliability matrix as headerless CSV, overriding the
    /// staggered pattern
    #[arg(long)]
    pub reliability: Option<PathBuf>,
    /// Concentration of wrong-class noise mass
    #[arg(long, default_value_t = 0.25)]
    pub sharpness: f64,
}

fn load_reliability(path: &PathBuf, m: usize, c: usize) -> Result<Array2<f64>> {
    let text = read_text(path)?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            line.split(',')
                .map(|cell| cell.trim().parse::<f64>().map_err(|e| anyhow::anyhow!("{e}")))
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.len() != m || rows.iter().any(|r| r.len() != c) {
        bail!("reliability file must be {m} rows x {c} columns");
    }
    Ok(Array2::from_shape_fn((m, c), |(i, j)| rows[i][j]))
}

fn write_split(dir: &PathBuf, split: &str, ds: &Dataset) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let labels_name = format!("{split}_labels.csv");
    save_labels(
        &dir.join(&labels_name),
        &ds.labels,
        &ds.streams[0].sample_ids,
    )?;
    files.push(labels_name.clone());

    let mut entries = Vec::new();
    for stream in &ds.streams {
        let name = format!("{split}_{}.csv", stream.stream_id);
        save_scores(&dir.join(&name), stream, &ds.labels.class_names)?;
        entries.push(StreamEntry {
            id: stream.stream_id.clone(),
            path: name.clone(),
        });
        files.push(name);
    }

    let manifest = DatasetManifest {
        mode: ds.mode,
        labels: labels_name,
        streams: entries,
    };
    let manifest_name = format!("{split}_manifest.json");
    save_manifest(&dir.join(&manifest_name), &manifest)?;
    files.push(manifest_name);
    Ok(files)
}

pub fn run(args: GenArgs) -> Result<()> {
    let reliability = match &args.reliability {
        Some(path) => load_reliability(path, args.streams, args.classes)?,
        None => Array2::from_shape_fn((args.streams, args.classes), |(m, c)| {
            if args.streams > 0 && c % args.streams == m {
                args.rel_high
            } else {
                args.rel_low
            }
        }),
    };
    let cfg = SynthConfig {
        n_train: args.train,
        n_test: args.test,
        n_classes: args.classes,
        n_streams: args.streams,
        reliability,
        confusion_sharpness: args.sharpness,
        seed: args.seed,
    };
    let (train, test) = generate_synthetic(&cfg)?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut files = write_split(&args.out, "train", &train)?;
    files.extend(write_split(&args.out, "test", &test)?);

    // The embedded config makes a run reproducible from its outputs alone.
    let config = serde_json::json!({
        "command": "gen",
        "synth_config": cfg,
        "files": files,
    });
    write_json(&args.out.join("gen_config.json"), &config)?;
    println!(
        "wrote {} files to {} (seed {})",
        files.len() + 1,
        args.out.display(),
        cfg.seed
    );
    Ok(())
}
