//! Logistic regression on the seeded synthetic problem with every optimizer,
//! each at the best constant rate from the grid.

use anon_optim::frame::ScheduleSpec;
use anon_optim::optim::{OptimizerKind, OptimizerSpec};
use anon_optim::testbed::functions::lr_grid_search;
use anon_optim::testbed::smoke::{smoke_train, SmokeConfig};

fn main() -> anon_optim::error::Result<()> {
    let cfg = SmokeConfig::default();
    let seed = 0;
    let mut specs: Vec<OptimizerSpec> = OptimizerKind::ALL
        .into_iter()
        .filter(|k| !k.is_anon())
        .map(OptimizerSpec::new)
        .collect();
    specs.extend([-0.5, 0.0, 0.5, 1.0, 1.5].map(|g| OptimizerSpec {
        epsilon: 1e-8,
        ..OptimizerSpec::anon(g)
    }));

    println!(
        "{:<16} {:>8} {:>12} {:>12}",
        "optimizer", "lr", "loss@1", "loss@200"
    );
    for spec in &specs {
        let search = lr_grid_search(|lr| {
            let run = smoke_train(seed, spec, ScheduleSpec::constant(lr), &cfg)?;
            Ok(if run.diverged {
                f64::INFINITY
            } else {
                run.final_loss()
            })
        })?;
        let run = smoke_train(seed, spec, ScheduleSpec::constant(search.best_lr), &cfg)?;
        let name = if spec.kind.is_anon() {
            format!("anon(g={})", spec.gamma)
        } else {
            spec.kind.to_string()
        };
        println!(
            "{name:<16} {:>8} {:>12.6} {:>12.6}",
            search.best_lr,
            run.records[0].loss,
            run.final_loss()
        );
    }
    Ok(())
}
