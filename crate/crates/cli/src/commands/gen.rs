//! Deterministic synthetic-case generation.

use std::path::PathBuf;

use clap::Args as ClapArgs;
use voxelseg::data::{gen_phantom, save_case, PhantomSpec};
use voxelseg::{Error, Result};

#[derive(ClapArgs)]
pub struct Args {
    /// How many cases to generate
    #[arg(long)]
    pub count: usize,
    /// Cubic volume edge length in voxels
    #[arg(long)]
    pub size: usize,
    /// Base seed; case i is generated from seed + i
    #[arg(long)]
    pub seed: u64,
    /// Directory to create the case subdirectories in
    #[arg(long)]
    pub out: PathBuf,
    /// Network depth the volumes must stay compatible with
    #[arg(long, default_value_t = 4)]
    pub levels: u32,
    /// Write into a non-empty output directory
    #[arg(long)]
    pub force: bool,
}

pub fn run(args: &Args) -> Result<()> {
    if args.count == 0 {
        return Err(Error::Validation("--count must be at least 1".into()));
    }
    let divisor = 1usize
        .checked_shl(args.levels)
        .ok_or_else(|| Error::Validation(format!("--levels {} is out of range", args.levels)))?;
    if args.size % divisor != 0 {
        return Err(Error::Validation(format!(
            "--size {} must be divisible by {divisor}: pooling halves each extent {} times",
            args.size, args.levels
        )));
    }
    if args.out.exists() && !args.force {
        let occupied =
            std::fs::read_dir(&args.out).map_err(|e| Error::io(&args.out, e))?.next().is_some();
        if occupied {
            return Err(Error::Validation(format!(
                "output directory {} is not empty; pass --force to write into it",
                args.out.display()
            )));
        }
    }
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let spec = PhantomSpec::for_extent(args.size);
    for i in 0..args.count {
        let case_id = format!("phantom_{i:03}");
        let case = gen_phantom(&spec, args.seed.wrapping_add(i as u64), &case_id)?;
        save_case(&args.out, &case)?;
    }
    println!("wrote {} cases of extent {} to {}", args.count, args.size, args.out.display());
    Ok(())
}
