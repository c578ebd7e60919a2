//! Anon in snapshot form, the accumulator form and the closed-form ψ over
//! the full history, side by side on one random gradient stream.

use anon_optim::anon::{
    anon_psi_explicit, milestone_indices, Anon, AnonAlt, AnonConfig, IduConfig, MilestoneSchedule,
};
use anon_optim::frame::{BoxRegion, Frame, Rule, ScheduleSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> anon_optim::error::Result<()> {
    let cfg = AnonConfig {
        idu: IduConfig {
            gamma: 0.5,
            epsilon: 1e-8,
            milestones: MilestoneSchedule::new(3)?,
            ..IduConfig::default()
        },
        ..AnonConfig::default()
    };
    let horizon = 400;
    let normal = Normal::new(0.0, 2.0).expect("valid normal");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let grads: Vec<f64> = (0..horizon).map(|_| normal.sample(&mut rng)).collect();

    let schedule = ScheduleSpec::constant(0.05);
    let mut a = Frame::new(Anon::new(cfg, 1)?, schedule, BoxRegion::unbounded(1))?;
    let mut b = Frame::new(AnonAlt::new(cfg, 1)?, schedule, BoxRegion::unbounded(1))?;
    let (mut ta, mut tb) = ([0.0], [0.0]);
    let milestones: Vec<u64> = milestone_indices(3, horizon as u64)?
        .iter()
        .map(|m| m.t)
        .collect();
    let mut max_gap: f64 = 0.0;

    println!(
        "{:>5} {:>14} {:>14} {:>14}",
        "t", "psi snapshot", "psi accum", "psi explicit"
    );
    for (i, g) in grads.iter().enumerate() {
        a.step(&mut ta, &[*g])?;
        b.step(&mut tb, &[*g])?;
        max_gap = max_gap.max((ta[0] - tb[0]).abs());
        let t = i as u64 + 1;
        if milestones.contains(&t) {
            let explicit = anon_psi_explicit(&grads[..=i], &cfg.idu)?;
            println!(
                "{t:>5} {:>14.8e} {:>14.8e} {:>14.8e}",
                a.rule().psi()[0],
                b.rule().psi()[0],
                explicit
            );
        }
    }
    println!("max |theta_snapshot - theta_accum| over {horizon} steps: {max_gap:.3e}");
    Ok(())
}
