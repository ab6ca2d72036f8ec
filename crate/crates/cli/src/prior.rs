//! `fusionforge prior` — confusion-prior estimation and export.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use fusionforge_core::class_prior::{estimate_prior, PriorDiagonal};
use fusionforge_core::score_data::load_dataset;

use crate::util::write_text;

#[derive(Args, Debug)]
pub struct PriorArgs {
    /// Manifest of the dataset to estimate from. Prefer held-out
    /// validation scores; training scores give an optimistic diagonal.
    #[arg(long)]
    pub from: PathBuf,
    /// Diagonal convention: correct-classification rate or zero
    #[arg(long, default_value = "accuracy")]
    pub diagonal: PriorDiagonal,
    /// Output path; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: PriorArgs) -> Result<()> {
    let dataset = load_dataset(&args.from)?;
    let prior = estimate_prior(&dataset, args.diagonal)?;
    let json = prior.to_json();
    match &args.out {
        Some(path) => {
            write_text(path, &json)?;
            println!(
                "wrote prior for {} streams to {}",
                prior.n_streams(),
                path.display()
            );
        }
        None => println!("{json}"),
    }
    Ok(())
}
