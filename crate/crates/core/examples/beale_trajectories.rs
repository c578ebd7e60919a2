//! Every optimizer on log-Beale from (−2.5, −1.5), each with its own
//! learning rate picked from the grid. Trajectories go to `beale/`.

use std::fs;

use anon_optim::frame::ScheduleSpec;
use anon_optim::harness::output::trajectory_table;
use anon_optim::optim::{OptimizerKind, OptimizerSpec};
use anon_optim::testbed::functions::{run_function, tune_function_lr, TestFunction};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let f = TestFunction::BealeLog;
    let start = f.default_start();
    let steps = 2000;
    let mut specs: Vec<(String, OptimizerSpec)> = OptimizerKind::ALL
        .into_iter()
        .filter(|k| !k.is_anon())
        .map(|k| (k.to_string(), OptimizerSpec::new(k)))
        .collect();
    for gamma in [-0.5, 0.5, 1.0] {
        let spec = OptimizerSpec {
            epsilon: 1e-8,
            ..OptimizerSpec::anon(gamma)
        };
        specs.push((format!("anon_g{gamma}"), spec));
    }

    fs::create_dir_all("beale")?;
    println!(
        "{:<14} {:>8} {:>14} {:>10}",
        "optimizer", "lr", "final loss", "to 1e-3"
    );
    for (name, spec) in &specs {
        let lr = tune_function_lr(f, spec, start, steps)?.best_lr;
        let run = run_function(f, spec, start, steps, ScheduleSpec::constant(lr))?;
        let hit = run
            .first_below(1e-3)
            .map_or("-".to_string(), |t| t.to_string());
        println!("{name:<14} {lr:>8} {:>14.6e} {hit:>10}", run.final_loss());
        fs::write(
            format!("beale/{name}.csv"),
            trajectory_table(&run.records).to_csv(),
        )?;
    }
    Ok(())
}
