//! Two-dimensional test functions and deterministic trajectory runs.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{diverged, TrajectoryRecord, LR_GRID};
use crate::error::{OptimError, Result};
use crate::frame::{BoxRegion, Frame, FrameOptions, Rule, ScheduleSpec};
use crate::optim::OptimizerSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFunction {
    BealeLog,
    Rosenbrock,
    Rastrigin,
}

pub fn beale(x: f64, y: f64) -> f64 {
    let (r1, r2, r3) = beale_residuals(x, y);
    r1 * r1 + r2 * r2 + r3 * r3
}

fn beale_residuals(x: f64, y: f64) -> (f64, f64, f64) {
    (
        1.5 - x + x * y,
        2.25 - x + x * y * y,
        2.625 - x + x * y * y * y,
    )
}

/// `ln(1 + Beale(x, y)) / 10` and its gradient.
pub fn beale_log(x: f64, y: f64) -> (f64, [f64; 2]) {
    let (r1, r2, r3) = beale_residuals(x, y);
    let b = r1 * r1 + r2 * r2 + r3 * r3;
    let dbx = 2.0 * (r1 * (y - 1.0) + r2 * (y * y - 1.0) + r3 * (y * y * y - 1.0));
    let dby = 2.0 * (r1 * x + r2 * 2.0 * x * y + r3 * 3.0 * x * y * y);
    let outer = 0.1 / (1.0 + b);
    ((1.0 + b).ln() / 10.0, [outer * dbx, outer * dby])
}

/// `(1 − x)² + 100(y − x²)²` and its gradient.
pub fn rosenbrock(x: f64, y: f64) -> (f64, [f64; 2]) {
    let a = 1.0 - x;
    let b = y - x * x;
    (a * a + 100.0 * b * b, [-2.0 * a - 400.0 * x * b, 200.0 * b])
}

/// `20 + x² + y² − 10cos(2πx) − 10cos(2πy)` and its gradient.
pub fn rastrigin(x: f64, y: f64) -> (f64, [f64; 2]) {
    let w = 2.0 * PI;
    (
        20.0 + x * x + y * y - 10.0 * (w * x).cos() - 10.0 * (w * y).cos(),
        [
            2.0 * x + 10.0 * w * (w * x).sin(),
            2.0 * y + 10.0 * w * (w * y).sin(),
        ],
    )
}

impl TestFunction {
    pub const ALL: [TestFunction; 3] = [Self::BealeLog, Self::Rosenbrock, Self::Rastrigin];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::BealeLog => "beale-log",
            Self::Rosenbrock => "rosenbrock",
            Self::Rastrigin => "rastrigin",
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> (f64, [f64; 2]) {
        match self {
            Self::BealeLog => beale_log(x, y),
            Self::Rosenbrock => rosenbrock(x, y),
            Self::Rastrigin => rastrigin(x, y),
        }
    }

    pub fn loss(&self, x: f64, y: f64) -> f64 {
        self.eval(x, y).0
    }

    /// Global minimizer and minimum value.
    pub fn optimum(&self) -> ([f64; 2], f64) {
        match self {
            Self::BealeLog => ([3.0, 0.5], 0.0),
            Self::Rosenbrock => ([1.0, 1.0], 0.0),
            Self::Rastrigin => ([0.0, 0.0], 0.0),
        }
    }

    pub fn default_start(&self) -> [f64; 2] {
        match self {
            Self::BealeLog => [-2.5, -1.5],
            Self::Rosenbrock => [-1.5, 2.0],
            Self::Rastrigin => [2.5, -1.5],
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestFunction {
    type Err = OptimError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| OptimError::Config(format!("unknown function `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionRun {
    pub records: Vec<TrajectoryRecord>,
    /// Set when the run was cut short by the divergence guard.
    pub diverged: bool,
    /// Per-coordinate ψ when the run stopped.
    pub final_psi: Vec<f64>,
}

impl FunctionRun {
    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(f64::INFINITY, |r| r.loss)
    }

    /// First step whose post-update loss is below `target`.
    pub fn first_below(&self, target: f64) -> Option<u64> {
        self.records
            .iter()
            .find(|r| r.loss < target)
            .map(|r| r.step)
    }
}

pub fn run_function(
    f: TestFunction,
    spec: &OptimizerSpec,
    start: [f64; 2],
    steps: u64,
    schedule: ScheduleSpec,
) -> Result<FunctionRun> {
    run_function_with(
        f,
        spec.build(2)?,
        start,
        steps,
        schedule,
        FrameOptions::default(),
    )
}

pub fn run_function_with<R: Rule>(
    f: TestFunction,
    rule: R,
    start: [f64; 2],
    steps: u64,
    schedule: ScheduleSpec,
    options: FrameOptions,
) -> Result<FunctionRun> {
    if start.iter().any(|x| !x.is_finite()) {
        return Err(OptimError::Domain("start point is not finite".into()));
    }
    let mut frame = Frame::new(rule, schedule, BoxRegion::unbounded(2))?.with_options(options);
    let mut theta = start;
    let mut records = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        let (_, grad) = f.eval(theta[0], theta[1]);
        let report = match frame.step(&mut theta, &grad) {
            Ok(r) => r,
            Err(OptimError::NonFinite { .. }) => {
                return Ok(FunctionRun {
                    records,
                    diverged: true,
                    final_psi: frame.rule().psi(),
                })
            }
            Err(e) => return Err(e),
        };
        let loss = f.loss(theta[0], theta[1]);
        records.push(TrajectoryRecord::new(
            report.t,
            loss,
            &theta,
            report.grad_norm,
            report.lr,
            &frame.rule().psi(),
        ));
        if diverged(&theta, loss) {
            return Ok(FunctionRun {
                records,
                diverged: true,
                final_psi: frame.rule().psi(),
            });
        }
    }
    Ok(FunctionRun {
        records,
        diverged: false,
        final_psi: frame.rule().psi(),
    })
}

/// Outcome of a learning-rate grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSearch {
    pub best_lr: f64,
    /// `(η, score)` for every grid point; diverged runs score `+∞`.
    pub scores: Vec<(f64, f64)>,
}

/// Picks the constant learning rate from [`LR_GRID`] with the lowest
/// `score(run)`. Ties go to the smaller rate.
pub fn lr_grid_search<F>(mut run: F) -> Result<LrSearch>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut scores = Vec::with_capacity(LR_GRID.len());
    for &lr in &LR_GRID {
        let s = run(lr)?;
        scores.push((lr, if s.is_nan() { f64::INFINITY } else { s }));
    }
    let best_lr = scores
        .iter()
        .fold((f64::NAN, f64::INFINITY), |best, &(lr, s)| {
            if s < best.1 || best.0.is_nan() {
                (lr, s)
            } else {
                best
            }
        })
        .0;
    Ok(LrSearch { best_lr, scores })
}

/// Grid search on a test function: score is the final loss.
pub fn tune_function_lr(
    f: TestFunction,
    spec: &OptimizerSpec,
    start: [f64; 2],
    steps: u64,
) -> Result<LrSearch> {
    lr_grid_search(|lr| {
        let run = run_function(f, spec, start, steps, ScheduleSpec::constant(lr))?;
        Ok(if run.diverged {
            f64::INFINITY
        } else {
            run.final_loss()
        })
    })
}

/// Rectangular evaluation grid `[x0, x1] × [y0, y1]` with `nx × ny` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn axis(range: [f64; 2], n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![range[0]];
        }
        (0..n)
            .map(|i| range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Axis scales `ψ^{-1/2}` normalized so the larger one is 1. A step
/// `θ ← θ − η g/ψ` is plain gradient descent in `u = √ψ·θ`, so plotting
/// `f(s∘u)` shows the landscape the pre-conditioned optimizer sees.
pub fn preconditioned_scale(psi: [f64; 2]) -> Result<[f64; 2]> {
    if psi.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
        return Err(OptimError::Domain(format!("psi {psi:?} must be positive")));
    }
    let raw = psi.map(|p| 1.0 / p.sqrt());
    let top = raw[0].max(raw[1]);
    Ok(raw.map(|s| s / top))
}

/// Loss over a grid of points `(s_x·u, s_y·v)`, rows indexed by `v`.
pub fn landscape_scale(f: TestFunction, scale: [f64; 2], grid: &GridSpec) -> Result<Vec<Vec<f64>>> {
    if grid.nx == 0 || grid.ny == 0 {
        return Err(OptimError::Config(
            "landscape grid must be non-empty".into(),
        ));
    }
    if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(OptimError::Domain(format!(
            "scaling {scale:?} must be positive"
        )));
    }
    let us = GridSpec::axis(grid.x_range, grid.nx);
    let vs = GridSpec::axis(grid.y_range, grid.ny);
    Ok(vs
        .iter()
        .map(|v| {
            us.iter()
                .map(|u| f.loss(scale[0] * u, scale[1] * v))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::OptimizerKind;
    use proptest::prelude::*;

    fn fd(f: TestFunction, x: f64, y: f64, h: f64) -> [f64; 2] {
        [
            (f.loss(x + h, y) - f.loss(x - h, y)) / (2.0 * h),
            (f.loss(x, y + h) - f.loss(x, y - h)) / (2.0 * h),
        ]
    }

    #[test]
    fn beale_examples() {
        let (l, g) = beale_log(3.0, 0.5);
        assert_eq!(l, 0.0);
        assert_eq!(g, [0.0, 0.0]);
        assert_eq!(beale(0.0, 0.0), 14.203125);
        let (l, _) = beale_log(0.0, 0.0);
        assert!((l - 15.203125f64.ln() / 10.0).abs() < 1e-16);
        assert!((l - 0.2721501).abs() < 1e-7);
        let (_, g) = beale_log(1.0, 1.0);
        let n = fd(TestFunction::BealeLog, 1.0, 1.0, 1e-5);
        assert!((g[0] - n[0]).abs() < 1e-8 && (g[1] - n[1]).abs() < 1e-8);
    }

    #[test]
    fn rosenbrock_rastrigin_examples() {
        assert_eq!(rosenbrock(1.0, 1.0).0, 0.0);
        assert_eq!(rosenbrock(0.0, 0.0).0, 1.0);
        assert_eq!(rastrigin(0.0, 0.0).0, 0.0);
        for f in TestFunction::ALL {
            let ([x, y], v) = f.optimum();
            let (l, g) = f.eval(x, y);
            assert!((l - v).abs() < 1e-12);
            assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12);
        }
    }

    #[test]
    fn names_round_trip() {
        for f in TestFunction::ALL {
            assert_eq!(f.as_str().parse::<TestFunction>().unwrap(), f);
        }
        assert!("himmelblau".parse::<TestFunction>().is_err());
    }

    #[test]
    fn optimum_is_a_fixed_point() {
        for f in TestFunction::ALL {
            for kind in [
                OptimizerKind::Sgdm,
                OptimizerKind::Adam,
                OptimizerKind::Anon,
            ] {
                let (opt, _) = f.optimum();
                let run = run_function(
                    f,
                    &OptimizerSpec::new(kind),
                    opt,
                    20,
                    ScheduleSpec::constant(0.1),
                )
                .unwrap();
                assert!(
                    run.records.iter().all(|r| r.theta == opt.to_vec()),
                    "{f} {kind}"
                );
            }
        }
    }

    #[test]
    fn divergence_is_flagged_not_fatal() {
        let run = run_function(
            TestFunction::Rosenbrock,
            &OptimizerSpec::new(OptimizerKind::Sgd),
            [-1.5, 2.0],
            500,
            ScheduleSpec::constant(10.0),
        )
        .unwrap();
        assert!(run.diverged);
        assert!(run.records.len() < 500);
    }

    #[test]
    fn landscape_identity_and_stretch() {
        let grid = GridSpec {
            x_range: [-1.0, 1.0],
            y_range: [-2.0, 2.0],
            nx: 5,
            ny: 3,
        };
        let raw = landscape_scale(TestFunction::Rosenbrock, [1.0, 1.0], &grid).unwrap();
        assert_eq!(raw[2][4], rosenbrock(1.0, 2.0).0);
        let stretched = landscape_scale(TestFunction::Rosenbrock, [2.0, 1.0], &grid).unwrap();
        // spacing along x doubles, i.e. half the sampling density
        assert_eq!(stretched[0][3], rosenbrock(1.0, -2.0).0);
        assert_eq!(stretched[0][4], rosenbrock(2.0, -2.0).0);
        assert!(landscape_scale(TestFunction::Rosenbrock, [0.0, 1.0], &grid).is_err());
    }

    #[test]
    fn identity_preconditioner_leaves_the_landscape_raw() {
        let run = run_function(
            TestFunction::BealeLog,
            &OptimizerSpec::new(OptimizerKind::Sgd),
            [-2.5, -1.5],
            100,
            ScheduleSpec::constant(0.01),
        )
        .unwrap();
        assert_eq!(
            preconditioned_scale([run.final_psi[0], run.final_psi[1]]).unwrap(),
            [1.0, 1.0]
        );
        assert_eq!(preconditioned_scale([4.0, 1.0]).unwrap(), [0.5, 1.0]);
    }

    #[test]
    fn negative_gamma_shrinks_the_x_axis_at_step_100() {
        let f = TestFunction::BealeLog;
        let spec = OptimizerSpec {
            epsilon: 1e-8,
            ..OptimizerSpec::anon(-0.5)
        };
        let tuned = tune_function_lr(f, &spec, f.default_start(), 2000)
            .unwrap()
            .best_lr;
        assert_eq!(tuned, 10.0);
        let run = run_function(
            f,
            &spec,
            f.default_start(),
            100,
            ScheduleSpec::constant(tuned),
        )
        .unwrap();
        let s = preconditioned_scale([run.final_psi[0], run.final_psi[1]]).unwrap();
        assert!(s[0] < s[1], "{s:?}");
    }

    #[test]
    fn grid_search_prefers_lower_score_then_smaller_rate() {
        let s = lr_grid_search(|lr| Ok((lr.log10() + 2.0).abs())).unwrap();
        assert_eq!(s.best_lr, 1e-2);
        let s = lr_grid_search(|_| Ok(1.0)).unwrap();
        assert_eq!(s.best_lr, 1e-4);
        let s = lr_grid_search(|lr| Ok(if lr > 1.0 { f64::NAN } else { -lr })).unwrap();
        assert_eq!(s.best_lr, 1.0);
    }

    /// Central difference of Rosenbrock in exact rational arithmetic, so the
    /// only error left is the O(h²) truncation.
    fn rosenbrock_fd_exact(x: f64, y: f64, h: f64) -> [f64; 2] {
        use num::{BigRational, ToPrimitive};
        let q = |v: f64| BigRational::from_float(v).unwrap();
        let f = |x: &BigRational, y: &BigRational| {
            let one = q(1.0);
            let a = &one - x;
            let b = y - x * x;
            &a * &a + q(100.0) * &b * &b
        };
        let (qx, qy, qh) = (q(x), q(y), q(h));
        let two_h = q(2.0) * &qh;
        let dx = (f(&(&qx + &qh), &qy) - f(&(&qx - &qh), &qy)) / &two_h;
        let dy = (f(&qx, &(&qy + &qh)) - f(&qx, &(&qy - &qh))) / &two_h;
        [dx.to_f64().unwrap(), dy.to_f64().unwrap()]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn gradients_match_finite_differences(x in -4.0f64..4.0, y in -4.0f64..4.0) {
            for f in TestFunction::ALL {
                let (_, g) = f.eval(x, y);
                let n = match f {
                    TestFunction::Rosenbrock => rosenbrock_fd_exact(x, y, 1e-6),
                    _ => fd(f, x, y, 1e-6),
                };
                prop_assert!((g[0] - n[0]).abs() < 1e-6, "{} {:?} {:?}", f, g, n);
                prop_assert!((g[1] - n[1]).abs() < 1e-6, "{} {:?} {:?}", f, g, n);
            }
        }
    }
}
