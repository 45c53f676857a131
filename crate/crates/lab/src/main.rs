use clap::Parser;
use freeopt::cli::{run, Cli};

fn main() -> anyhow::Result<()> {
    let result = run(Cli::parse())?;
    println!("{}", result.summary);
    if !result.warnings.is_empty() {
        eprintln!("warnings:");
        for w in &result.warnings {
            eprintln!("  {w}");
        }
    }
    Ok(())
}
