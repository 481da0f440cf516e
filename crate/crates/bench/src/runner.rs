//! Cylinder benchmark driver.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use emacflow_core::fem::{make_mixed_space, DirichletData, FemError};
use emacflow_core::mesh::{BoundaryTag, MeshError};
use emacflow_core::quantities::{force_direct, force_residual, monitors, StepQuantities};
use emacflow_core::timeloop::{
    run_simulation, CheckpointError, FlowOperator, RunStatus, StepError, StepInfo, TimeStepper,
};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::record::{read_rows, CsvLog, RecordError, Row, Summary};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("discretization: {0}")]
    Fem(#[from] FemError),
    #[error("initial condition: {0}")]
    Initial(#[from] StepError),
    #[error("resume: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("output: {0}")]
    Record(#[from] RecordError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub rows: Vec<Row>,
    pub summary: Summary,
    /// Why the last step failed, for failed runs.
    pub failure: Option<String>,
}

/// Benchmark operator: uniform inflow `(1, 0)` on the outer boundary and
/// no-slip on the cylinder.
pub fn benchmark_operator(config: &RunConfig) -> Result<Arc<FlowOperator<f64>>, RunError> {
    let mesh = config.mesh.spec().build::<f64>()?;
    let tags = mesh.tags();
    for tag in [BoundaryTag::Outer, BoundaryTag::Cylinder] {
        if !tags.contains(&tag) {
            return Err(ConfigError::Invalid(format!("mesh has no {tag} boundary")).into());
        }
    }
    let (h_min, h_max) = mesh.edge_length_range();
    log::info!(
        "mesh: {} vertices, {} triangles, edge lengths [{h_min:.3e}, {h_max:.3e}]",
        mesh.n_vertices(),
        mesh.n_triangles()
    );
    let space = Arc::new(make_mixed_space(Arc::new(mesh), config.order)?);
    log::info!("P{}/P{}: {} unknowns", config.order, config.order - 1, space.size());
    let bc = DirichletData::new()
        .with(BoundaryTag::Outer, |_, _, _| [1.0, 0.0])
        .no_slip(BoundaryTag::Cylinder);
    Ok(Arc::new(FlowOperator::new(space, config.nu(), config.form, bc)))
}

/// Quantities recorded after an accepted step.
pub fn step_quantities(stepper: &TimeStepper<f64>, info: &StepInfo) -> StepQuantities {
    let op = stepper.operator();
    let cyl = BoundaryTag::Cylinder;
    let u = stepper.current();
    let f = force_residual(op, &cyl, info.kind, stepper.config().dt, &stepper.states())
        .unwrap_or([f64::NAN; 2]);
    let fd = force_direct(op.space(), &cyl, u, op.nu(), op.form());
    let m = monitors(op.assembler(), u);
    StepQuantities {
        t: info.t,
        drag: f[0],
        lift: f[1],
        drag_direct: fd[0],
        lift_direct: fd[1],
        kinetic_energy: m.kinetic_energy,
        momentum: m.momentum,
        angular_momentum: m.angular_momentum,
        div_l2: m.div_l2,
        newton_iters: info.newton.as_ref().map_or(0, |r| r.n_iterations()),
        factorizations: info.factorizations,
        residual: info.residual,
    }
}

/// Runs the benchmark described by `config`, writing the CSV, the summary
/// and periodic checkpoints to the configured paths.
///
/// With `resume`, the run continues from that checkpoint and keeps the rows
/// of the existing CSV up to the checkpoint time. Solver failures end the
/// run early and are reported in the summary, not as errors.
pub fn run_benchmark(config: &RunConfig, resume: Option<&Path>) -> Result<RunRecord, RunError> {
    config.validate()?;
    let threads = if config.deterministic {
        Some(1)
    } else {
        config.threads
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| RunError::ThreadPool(e.to_string()))?;
    pool.install(|| run_inner(config, resume))
}

fn run_inner(config: &RunConfig, resume: Option<&Path>) -> Result<RunRecord, RunError> {
    let start = Instant::now();
    let op = benchmark_operator(config)?;
    let scheme = config.scheme_config();
    let newton = config.newton.into();
    let (mut stepper, mut rows) = match resume {
        Some(path) => {
            let stepper = TimeStepper::restore(op, scheme, newton, path)?;
            let t0 = stepper.time();
            let rows: Vec<Row> = if config.output.csv.exists() {
                read_rows(&config.output.csv)?
                    .into_iter()
                    .filter(|r| r.t <= t0 + 1e-6 * config.dt)
                    .collect()
            } else {
                Vec::new()
            };
            log::info!("resuming at step {} (t = {t0}), {} rows kept", stepper.step_index(), rows.len());
            (stepper, rows)
        }
        None => {
            let u0 = op.stokes(0.0)?;
            (TimeStepper::new(op, scheme, newton, u0), Vec::new())
        }
    };

    let mut csv = CsvLog::create(&config.output.csv, &rows)?;
    let mut write_error = None;
    let checkpoint = (config.checkpoint_every > 0)
        .then_some((config.output.checkpoint.as_path(), config.checkpoint_every));
    let report_every = (1.0 / config.dt).round().max(1.0) as usize;
    let outcome = run_simulation(&mut stepper, checkpoint, |s, info| {
        let q = step_quantities(s, info);
        let row = Row::from(&q);
        if write_error.is_none() {
            write_error = csv.push(&row).err();
        }
        rows.push(row);
        if info.step % report_every == 0 {
            log::info!(
                "t = {:.2}: drag {:.5} lift {:+.5} E {:.4} div {:.3e}",
                q.t,
                q.drag,
                q.lift,
                q.kinetic_energy,
                q.div_l2
            );
        }
    });
    if let Some(e) = write_error {
        return Err(e.into());
    }
    csv.flush()?;
    let failure = match outcome.status {
        RunStatus::Completed => None,
        RunStatus::SolverFailed { t, reason } => Some(format!("solver failed at t = {t}: {reason}")),
    };
    let summary = Summary::from_rows(&rows, config, start.elapsed().as_secs_f64());
    summary.write(&config.output.summary)?;
    Ok(RunRecord {
        rows,
        summary,
        failure,
    })
}
