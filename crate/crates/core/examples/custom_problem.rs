//! Using the frame directly on your own objective: an ill-conditioned
//! quadratic in a box, with decoupled weight decay and gradient clipping,
//! checkpointed halfway and resumed bit-exactly.

use anon_optim::anon::{Anon, AnonConfig, IduConfig};
use anon_optim::frame::{BoxRegion, Frame, FrameOptions, ScheduleSpec};

fn grad(theta: &[f64]) -> Vec<f64> {
    theta
        .iter()
        .enumerate()
        .map(|(i, x)| 10f64.powi(i as i32 - 2) * (x - 1.0))
        .collect()
}

fn main() -> anon_optim::error::Result<()> {
    let dim = 5;
    let cfg = AnonConfig {
        idu: IduConfig {
            gamma: 0.5,
            epsilon: 1e-8,
            ..IduConfig::default()
        },
        ..AnonConfig::default()
    };
    let options = FrameOptions {
        weight_decay: Some(1e-3),
        clip_norm: Some(50.0),
    };
    let region = BoxRegion::cube(dim, -3.0, 3.0)?;
    let schedule = ScheduleSpec::constant(0.05);
    let mut frame =
        Frame::new(Anon::new(cfg, dim)?, schedule, region.clone())?.with_options(options);
    let mut theta = vec![-2.0; dim];
    for _ in 0..500 {
        let g = grad(&theta);
        frame.step(&mut theta, &g)?;
    }
    let ckpt = frame.rule().checkpoint();
    let json = serde_json::to_string(&ckpt).expect("checkpoint serializes");
    let (mut resumed_theta, t) = (theta.clone(), frame.t());

    for _ in 0..500 {
        let g = grad(&theta);
        frame.step(&mut theta, &g)?;
    }

    let restored = Anon::restore(
        cfg,
        &serde_json::from_str(&json).expect("checkpoint parses"),
    )?;
    let mut resumed = Frame::new(restored, schedule, region)?
        .with_options(options)
        .resumed_at(t);
    for _ in 0..500 {
        let g = grad(&resumed_theta);
        resumed.step(&mut resumed_theta, &g)?;
    }
    println!("theta after 1000 steps: {theta:.5?}");
    println!("resumed run identical: {}", theta == resumed_theta);
    Ok(())
}
