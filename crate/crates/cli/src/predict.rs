//! `fusionforge predict` — fused score emission.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use fusionforge_core::fusion_solver::{predict, FusionModel};
use fusionforge_core::score_data::{load_dataset, save_scores, stack_streams};

use crate::util::read_text;

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Fitted model JSON
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset manifest to score
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output CSV of fused per-class scores
    #[arg(long, default_value = "fused.csv")]
    pub out: PathBuf,
}

pub fn run(args: PredictArgs) -> Result<()> {
    let model = FusionModel::from_json(&read_text(&args.model)?)?;
    let dataset = load_dataset(&args.manifest)?;
    let stacked = stack_streams(&dataset.streams)?;
    let fused = predict(&model, &stacked)?;
    save_scores(&args.out, &fused, &dataset.labels.class_names)?;
    println!(
        "wrote fused scores for {} samples to {}",
        fused.n_samples(),
        args.out.display()
    );
    Ok(())
}
