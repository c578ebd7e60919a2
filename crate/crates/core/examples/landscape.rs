//! Log-Beale as seen through Anon's pre-conditioner after 100 steps: prints
//! ψ and the induced axis scales for each rate on the search grid, then
//! writes the scaled landscape for the tuned rate to `landscape.csv`.

use anon_optim::frame::ScheduleSpec;
use anon_optim::harness::output::{grid_table, Table};
use anon_optim::optim::OptimizerSpec;
use anon_optim::testbed::functions::{
    landscape_scale, preconditioned_scale, run_function, tune_function_lr, GridSpec, TestFunction,
};
use anon_optim::testbed::LR_GRID;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let f = TestFunction::BealeLog;
    let start = f.default_start();
    let spec = OptimizerSpec {
        epsilon: 1e-8,
        ..OptimizerSpec::anon(-0.5)
    };
    println!(
        "{:>8} {:>12} {:>12} {:>8} {:>8}",
        "lr", "psi_x", "psi_y", "s_x", "s_y"
    );
    for lr in LR_GRID {
        let run = run_function(f, &spec, start, 100, ScheduleSpec::constant(lr))?;
        let psi = [run.final_psi[0], run.final_psi[1]];
        let s = preconditioned_scale(psi)?;
        println!(
            "{lr:>8} {:>12.5e} {:>12.5e} {:>8.4} {:>8.4}",
            psi[0], psi[1], s[0], s[1]
        );
    }

    let tuned = tune_function_lr(f, &spec, start, 2000)?.best_lr;
    let run = run_function(f, &spec, start, 100, ScheduleSpec::constant(tuned))?;
    let scale = preconditioned_scale([run.final_psi[0], run.final_psi[1]])?;
    let range = [-4.5, 4.5];
    let grid = GridSpec {
        x_range: range,
        y_range: range,
        nx: 61,
        ny: 61,
    };
    let values = landscape_scale(f, scale, &grid)?;
    let axis = GridSpec::axis(range, 61);
    let table: Table = grid_table(&axis, &axis, &values);
    std::fs::write("landscape.csv", table.to_csv())?;
    println!("tuned lr = {tuned}, scale = {scale:?}, wrote landscape.csv");
    Ok(())
}
