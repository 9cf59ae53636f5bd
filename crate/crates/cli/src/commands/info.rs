//! Capacity accounting: exact parameter count and FLOPs for a config.

use std::path::PathBuf;

use clap::Args as ClapArgs;
use voxelseg::model::{flops_estimate, param_count_for, ModelConfig};
use voxelseg::Result;

use crate::config::RunConfig;

#[derive(ClapArgs)]
pub struct Args {
    /// Run-configuration JSON; its model section is used. Defaults apply
    /// when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Cubic input edge length for the FLOPs estimate
    #[arg(long, default_value_t = 128)]
    pub extent: usize,
}

pub fn run(args: &Args) -> Result<()> {
    let model = match &args.config {
        Some(path) => RunConfig::load(path)?.model,
        None => ModelConfig::default(),
    };
    model.validate()?;
    let params = param_count_for(&model)?;
    let flops = flops_estimate(&model, [args.extent; 3])?;
    println!("parameters: {params}");
    println!("input: {0}x{0}x{0}", args.extent);
    println!("flops: {flops}");
    Ok(())
}
