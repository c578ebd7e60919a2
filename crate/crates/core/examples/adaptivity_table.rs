//! Measured (central difference) against closed-form adaptivity for every
//! pre-conditioner on a handful of seeded histories, plus the bound check
//! for each Anon γ.

use anon_optim::adaptivity::{
    adaptivity_report, sample_trials, suite_models, DEFAULT_H, SUITE_GAMMAS,
};

fn main() -> anon_optim::error::Result<()> {
    let trials = sample_trials(7, 6, 64)?;
    for trial in &trials {
        println!(
            "trial {} (len {}, beta2 {}, eps {:e})",
            trial.index,
            trial.history.len(),
            trial.beta2,
            trial.epsilon
        );
        for model in suite_models(trial, &SUITE_GAMMAS) {
            let r = adaptivity_report(&model, std::slice::from_ref(&trial.history), DEFAULT_H)?;
            let c = &r.coordinates[0];
            let bound = c.bound.map_or(String::new(), |v| {
                format!("  in [{:+.4}, {:+.4}]: {}", v.lower, v.upper, v.holds)
            });
            println!(
                "  {:<18} measured {:+.6}  analytic {:+.6}{}",
                r.optimizer,
                c.measured,
                c.analytic.unwrap_or(f64::NAN),
                bound
            );
        }
    }
    Ok(())
}
