//! Runs the finite-difference battery and reports per-layer agreement.

use clap::Args as ClapArgs;
use voxelseg::gradcheck::run_battery;
use voxelseg::{Error, Result};

#[derive(ClapArgs)]
pub struct Args {
    /// Upper bound on the relative error of any check, on top of each
    /// check's own (often tighter) built-in tolerance
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Seed for the randomized shapes and values
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: &Args) -> Result<()> {
    if !(args.tol > 0.0 && args.tol.is_finite()) {
        return Err(Error::Validation(format!("--tol {} must be positive and finite", args.tol)));
    }
    let report = run_battery(args.seed)?;
    print!("{}", report.table());
    let worst = report.rows.iter().map(|r| r.max_rel).fold(0.0_f64, f64::max);
    if report.all_passed() && worst <= args.tol {
        println!("all {} checks within {:.0e}", report.rows.len(), args.tol);
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "gradient verification failed: worst relative error {worst:.3e} against limit {:.0e}",
            args.tol
        )))
    }
}
