//! The β₃ × milestone-ratio ablation on the smoke problem, driven through
//! the harness exactly as `anon-harness run` would. Output lands in
//! `ablation/` (manifest.csv, table.csv, one run directory per cell).

use anon_optim::harness::{run_sweep, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::from_toml(
        r#"
experiment = "ablation"
optimizer = "anon"
gamma = 1.0
lr = 0.1
out = "ablation"
"#,
    )?;
    let outcome = run_sweep(&cfg, 0)?;
    println!("final loss, rows r, columns beta3");
    print!("{:>4}", "r");
    for b in &cfg.sweep_beta3 {
        print!(" {b:>10}");
    }
    println!();
    for &r in &cfg.sweep_ratio {
        print!("{r:>4}");
        for &b in &cfg.sweep_beta3 {
            let p = outcome
                .points
                .iter()
                .find(|p| p.config.ratio == r && p.config.beta3 == b)
                .expect("every cell ran");
            print!(" {:>10.6}", p.headline());
        }
        println!();
    }
    Ok(())
}
