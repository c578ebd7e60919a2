use anon_optim::optim::{OptimizerKind, OptimizerSpec};
use anon_optim::testbed::online::{power_of_ten_checkpoints, run_online, OnlineConfig};

fn main() -> anon_optim::error::Result<()> {
    let cfg = OnlineConfig::default();
    let cps = power_of_ten_checkpoints(cfg.horizon);
    for (b1, b2) in [(0.5, 0.75), (0.9, 0.99)] {
        println!("beta1 = {b1}, beta2 = {b2}");
        for kind in [
            OptimizerKind::Adam,
            OptimizerKind::Amsgrad,
            OptimizerKind::Anon,
        ] {
            let spec = OptimizerSpec::new(kind).with_betas(b1, b2);
            let run = run_online(&spec, &cfg, &cps)?;
            let avg: Vec<String> = run
                .ledger
                .points
                .iter()
                .map(|p| format!("R/T@{}={:.4}", p.t, p.avg_regret))
                .collect();
            println!(
                "  {:<8} {}  theta_T={:+.4}  first theta<=-0.99: {:?}",
                kind.as_str(),
                avg.join(" "),
                run.theta.last().unwrap(),
                run.first_crossing(-0.99)
            );
        }
    }
    Ok(())
}
