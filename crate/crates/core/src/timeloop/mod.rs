//! Time stepping: Stokes start, CN/BDF2/BDF3 fully implicit steps, SBDF2
//! steps, startup sequencing and checkpoints.

mod checkpoint;
mod stencil;

use std::collections::VecDeque;
use std::sync::Arc;

use thiserror::Error;

use crate::assembly::{apply_dirichlet, Assembler, ConvectiveForm};
use crate::fem::{Constraints, DirichletData, FemError, MixedSpace};
use crate::linsolve::{factorize, Factorization, LinsolveError};
use crate::nonlinear::{newton_solve, NewtonConfig, NewtonError, NewtonReport, NonlinearProblem};
use crate::scalar::{norm2, Real};
use crate::sparse::CsrMatrix;

pub use checkpoint::{CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use stencil::{Scheme, Stencil};

/// Default number of steps between checkpoints.
pub const DEFAULT_CHECKPOINT_EVERY: usize = 1000;

/// SBDF2 aborts once the velocity norm grows by this factor over
/// [`BLOWUP_WINDOW`] steps.
pub const BLOWUP_FACTOR: f64 = 1e6;
pub const BLOWUP_WINDOW: usize = 10;

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Newton(#[from] NewtonError),
    #[error(transparent)]
    Linsolve(#[from] LinsolveError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("velocity norm grew from {from:.3e} to {to:.3e} within {BLOWUP_WINDOW} steps; time step likely violates the CFL limit")]
    Unstable { from: f64, to: f64 },
    #[error("{scheme} step needs {needed} previous states, history holds {have}")]
    InsufficientHistory {
        scheme: Scheme,
        needed: usize,
        have: usize,
    },
    #[error("Stokes residual {0:.3e} above 1e-10")]
    StokesResidual(f64),
}

/// Mass, viscous and divergence operators of one discretization, plus the
/// convective form and boundary data.
pub struct FlowOperator<T: Real> {
    asm: Assembler<T>,
    mass: CsrMatrix<T>,
    visc: CsrMatrix<T>,
    div: CsrMatrix<T>,
    nu: T,
    form: ConvectiveForm,
    bc: DirichletData<T>,
}

impl<T: Real> FlowOperator<T> {
    pub fn new(space: Arc<MixedSpace<T>>, nu: T, form: ConvectiveForm, bc: DirichletData<T>) -> Self {
        let asm = Assembler::new(space);
        let mass = asm.assemble_mass();
        let visc = asm.assemble_viscous(nu);
        let div = asm.assemble_div();
        FlowOperator {
            asm,
            mass,
            visc,
            div,
            nu,
            form,
            bc,
        }
    }

    pub fn space(&self) -> &Arc<MixedSpace<T>> {
        self.asm.space()
    }

    pub fn assembler(&self) -> &Assembler<T> {
        &self.asm
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn form(&self) -> ConvectiveForm {
        self.form
    }

    pub fn boundary_data(&self) -> &DirichletData<T> {
        &self.bc
    }

    pub fn mass(&self) -> &CsrMatrix<T> {
        &self.mass
    }

    pub fn viscous(&self) -> &CsrMatrix<T> {
        &self.visc
    }

    pub fn divergence(&self) -> &CsrMatrix<T> {
        &self.div
    }

    pub fn constraints(&self, t: f64) -> Result<Constraints<T>, FemError> {
        self.bc.constraints(self.space(), T::lit(t))
    }

    /// `m M + theta A + B`, unconstrained.
    pub fn system_matrix(&self, m: T, theta: T) -> CsrMatrix<T> {
        let mut l = self.div.clone();
        if m != T::zero() {
            l.axpy(m, &self.mass);
        }
        l.axpy(theta, &self.visc);
        l
    }

    pub fn convective(&self, u: &[T]) -> Vec<T> {
        self.asm.assemble_convective(self.form, u)
    }

    /// Solves the steady Stokes problem with the boundary data at `t`.
    pub fn stokes(&self, t: f64) -> Result<Vec<T>, StepError> {
        let l = self.system_matrix(T::zero(), T::one());
        let c = self.constraints(t)?;
        let mut a = l.clone();
        apply_dirichlet(&mut a, None, &c);
        let f = factorize(&a)?;
        let e = vec![T::zero(); l.n()];
        let u = solve_constrained(&l, &f, &e, &c)?;
        let mut r = l.mul(&u);
        c.zero(&mut r);
        let res = norm2(&r).as_f64();
        if !(res <= 1e-10) {
            return Err(StepError::StokesResidual(res));
        }
        Ok(u)
    }

    /// Solves the steady Navier–Stokes problem by Newton's method from `u`.
    pub fn steady(&self, u: &mut [T], config: &NewtonConfig) -> Result<NewtonReport, StepError> {
        let l = self.system_matrix(T::zero(), T::one());
        let c = self.constraints(0.0)?;
        c.impose(u);
        let e = vec![T::zero(); l.n()];
        let mut p = StepProblem::new(self, &l, T::one(), &e, &c, T::one());
        Ok(newton_solve(&mut p, u, config, &mut None)?)
    }

    /// Unconstrained residual `L u + theta c(u) + e` of one step.
    pub fn step_residual(&self, kind: Scheme, dt: f64, states: &[&[T]]) -> Result<Vec<T>, StepError> {
        let st = kind.stencil();
        if states.len() < st.depth() {
            return Err(StepError::InsufficientHistory {
                scheme: kind,
                needed: st.depth() - 1,
                have: states.len().saturating_sub(1),
            });
        }
        let l = self.system_matrix(T::lit(st.alpha[0] / dt), T::lit(st.theta));
        let e = self.known_terms(kind, dt, &states[1..]);
        let mut r = l.mul(states[0]);
        for (ri, ei) in r.iter_mut().zip(&e) {
            *ri += *ei;
        }
        if st.implicit_convection() {
            let cu = self.convective(states[0]);
            for (ri, ci) in r.iter_mut().zip(&cu) {
                *ri += T::lit(st.theta) * *ci;
            }
        }
        Ok(r)
    }

    /// Terms of a step equation that depend only on past states, newest
    /// first.
    fn known_terms(&self, kind: Scheme, dt: f64, past: &[&[T]]) -> Vec<T> {
        let st = kind.stencil();
        let n = self.mass.n();
        let mut hist = vec![T::zero(); n];
        for (a, u) in st.alpha[1..].iter().zip(past) {
            for (h, &x) in hist.iter_mut().zip(u.iter()) {
                *h += T::lit(a / dt) * x;
            }
        }
        let mut e = self.mass.mul(&hist);
        let explicit = 1.0 - st.theta;
        if explicit != 0.0 {
            self.visc.matvec_add(T::lit(explicit), past[0], &mut e);
            let c1 = self.convective(past[0]);
            for (ei, ci) in e.iter_mut().zip(&c1) {
                *ei += T::lit(explicit) * *ci;
            }
        }
        for (w, u) in st.extrapolation.iter().zip(past) {
            let cu = self.convective(u);
            for (ei, ci) in e.iter_mut().zip(&cu) {
                *ei += T::lit(*w) * *ci;
            }
        }
        e
    }
}

/// Solves `L u + e = 0` with `u = g` on constrained dofs, given a
/// factorization of `L` after elimination.
fn solve_constrained<T: Real>(
    l: &CsrMatrix<T>,
    f: &Factorization<T>,
    e: &[T],
    c: &Constraints<T>,
) -> Result<Vec<T>, LinsolveError> {
    let mut rhs: Vec<T> = e.iter().map(|&x| -x).collect();
    l.matvec_add(-T::one(), &c.values, &mut rhs);
    c.impose(&mut rhs);
    f.solve_in_place(&mut rhs)?;
    Ok(rhs)
}

/// `s (L u + theta c(u) + e)` with constrained rows removed.
struct StepProblem<'a, T: Real> {
    op: &'a FlowOperator<T>,
    l: &'a CsrMatrix<T>,
    theta: T,
    e: &'a [T],
    c: &'a Constraints<T>,
    scale: T,
    /// Point of the most recent Jacobian evaluation.
    jacobian_at: Option<Vec<T>>,
}

impl<'a, T: Real> StepProblem<'a, T> {
    fn new(
        op: &'a FlowOperator<T>,
        l: &'a CsrMatrix<T>,
        theta: T,
        e: &'a [T],
        c: &'a Constraints<T>,
        scale: T,
    ) -> Self {
        StepProblem {
            op,
            l,
            theta,
            e,
            c,
            scale,
            jacobian_at: None,
        }
    }
}

impl<T: Real> NonlinearProblem<T> for StepProblem<'_, T> {
    fn residual(&mut self, u: &[T], r: &mut [T]) {
        self.l.matvec(u, r);
        let cu = self.op.convective(u);
        for ((ri, &ei), &ci) in r.iter_mut().zip(self.e).zip(&cu) {
            *ri = self.scale * (*ri + ei + self.theta * ci);
        }
        self.c.zero(r);
    }

    fn jacobian(&mut self, u: &[T]) -> CsrMatrix<T> {
        self.jacobian_at = Some(u.to_vec());
        jacobian_matrix(self.op, self.l, self.theta, self.scale, u, self.c)
    }
}

fn jacobian_matrix<T: Real>(
    op: &FlowOperator<T>,
    l: &CsrMatrix<T>,
    theta: T,
    scale: T,
    u: &[T],
    c: &Constraints<T>,
) -> CsrMatrix<T> {
    let mut j = l.clone();
    j.axpy(theta, &op.asm.assemble_convective_jacobian(op.form, u));
    j.scale(scale);
    apply_dirichlet(&mut j, None, c);
    j
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
}

impl SchemeConfig {
    /// Number of steps needed to reach `t_end`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Outcome of one accepted step.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub step: usize,
    pub t: f64,
    pub kind: Scheme,
    /// `None` for linear SBDF2 steps.
    pub newton: Option<NewtonReport>,
    pub factorizations: usize,
    /// Final constrained residual norm.
    pub residual: f64,
}

/// Holds the recent states and solver state of a running simulation.
pub struct TimeStepper<T: Real> {
    op: Arc<FlowOperator<T>>,
    config: SchemeConfig,
    newton: NewtonConfig,
    step: usize,
    /// Newest first: `u^n, u^{n-1}, ...`.
    history: VecDeque<Vec<T>>,
    log: Vec<Scheme>,
    matrices: Vec<(Scheme, Arc<CsrMatrix<T>>)>,
    factor: Option<Factorization<T>>,
    /// Step type and state at which `factor` was computed.
    factor_point: Option<(Scheme, Vec<T>)>,
    sbdf2: Option<Factorization<T>>,
    norms: VecDeque<f64>,
}

impl<T: Real> TimeStepper<T> {
    /// Starts from `u0` at `t = 0`.
    pub fn new(op: Arc<FlowOperator<T>>, config: SchemeConfig, newton: NewtonConfig, u0: Vec<T>) -> Self {
        if config.scheme == Scheme::Sbdf2 {
            let (h, _) = op.space().mesh().edge_length_range();
            let k = op.space().order() as f64;
            let advisory = h.as_f64() * k.powf(-1.5);
            log::info!(
                "SBDF2 time step {} vs. h k^(-3/2) = {:.3e} (c = 1)",
                config.dt,
                advisory
            );
            if config.dt > advisory {
                log::warn!("SBDF2 time step exceeds the CFL advisory; the run may blow up");
            }
        }
        let norms = VecDeque::from([velocity_norm(&op, &u0)]);
        TimeStepper {
            op,
            config,
            newton,
            step: 0,
            history: VecDeque::from([u0]),
            log: Vec::new(),
            matrices: Vec::new(),
            factor: None,
            factor_point: None,
            sbdf2: None,
            norms,
        }
    }

    pub fn operator(&self) -> &Arc<FlowOperator<T>> {
        &self.op
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dt
    }

    pub fn current(&self) -> &[T] {
        &self.history[0]
    }

    /// Stored states, newest first.
    pub fn states(&self) -> Vec<&[T]> {
        self.history.iter().map(|v| v.as_slice()).collect()
    }

    /// Step types taken so far, in order.
    pub fn step_log(&self) -> &[Scheme] {
        &self.log
    }

    /// Kind of the most recent step, if any.
    pub fn last_kind(&self) -> Option<Scheme> {
        self.log.last().copied()
    }

    fn matrix(&mut self, kind: Scheme) -> Arc<CsrMatrix<T>> {
        if let Some((_, m)) = self.matrices.iter().find(|(k, _)| *k == kind) {
            return m.clone();
        }
        let st = kind.stencil();
        let m = Arc::new(
            self.op
                .system_matrix(T::lit(st.alpha[0] / self.config.dt), T::lit(st.theta)),
        );
        self.matrices.push((kind, m.clone()));
        m
    }

    /// Residual scaling: the step equations are multiplied by `dt` so the
    /// mass term is `O(element area)`.
    fn scale(&self) -> T {
        T::lit(self.config.dt)
    }

    /// Advances one step.
    pub fn advance(&mut self) -> Result<StepInfo, StepError> {
        let n = self.step + 1;
        let kind = self.config.scheme.kind_for_step(n);
        let st = kind.stencil();
        if self.history.len() + 1 < st.depth() {
            return Err(StepError::InsufficientHistory {
                scheme: kind,
                needed: st.depth() - 1,
                have: self.history.len(),
            });
        }
        let t = n as f64 * self.config.dt;
        let c = self.op.constraints(t)?;
        let l = self.matrix(kind);
        let past: Vec<&[T]> = self.history.iter().map(|v| v.as_slice()).collect();
        let e = self.op.known_terms(kind, self.config.dt, &past);
        let mut u = self.history[0].clone();
        let info = if kind == Scheme::Sbdf2 {
            let mut fresh = 0;
            if self.sbdf2.is_none() {
                let mut a = (*l).clone();
                apply_dirichlet(&mut a, None, &c);
                self.sbdf2 = Some(factorize(&a)?);
                fresh = 1;
            }
            u = solve_constrained(&l, self.sbdf2.as_ref().expect("factorized"), &e, &c)?;
            let mut r = l.mul(&u);
            for (ri, ei) in r.iter_mut().zip(&e) {
                *ri = self.scale() * (*ri + *ei);
            }
            c.zero(&mut r);
            StepInfo {
                step: n,
                t,
                kind,
                newton: None,
                factorizations: fresh,
                residual: norm2(&r).as_f64(),
            }
        } else {
            c.impose(&mut u);
            let scale = self.scale();
            let mut p = StepProblem::new(&self.op, &l, T::lit(st.theta), &e, &c, scale);
            let report = newton_solve(&mut p, &mut u, &self.newton, &mut self.factor)?;
            if let Some(at) = p.jacobian_at.take() {
                self.factor_point = Some((kind, at));
            }
            StepInfo {
                step: n,
                t,
                kind,
                factorizations: report.factorizations,
                residual: report.final_residual,
                newton: Some(report),
            }
        };
        if !u.iter().all(|x| x.is_finite()) {
            return Err(StepError::Unstable {
                from: self.norms[0],
                to: f64::INFINITY,
            });
        }
        let norm = velocity_norm(&self.op, &u);
        if self.norms.len() > BLOWUP_WINDOW {
            self.norms.pop_front();
        }
        let oldest = self.norms.iter().copied().fold(f64::INFINITY, f64::min);
        self.norms.push_back(norm);
        if kind == Scheme::Sbdf2 && norm > BLOWUP_FACTOR * oldest.max(f64::MIN_POSITIVE) {
            return Err(StepError::Unstable {
                from: oldest,
                to: norm,
            });
        }
        self.history.push_front(u);
        self.history.truncate(4);
        self.step = n;
        self.log.push(kind);
        Ok(info)
    }

    /// Rebuilds the quasi-Newton factorization recorded at a checkpoint.
    fn rebuild_factor(&mut self, kind: Scheme, at: Vec<T>) -> Result<(), StepError> {
        let st = kind.stencil();
        let l = self.matrix(kind);
        let t = self.time();
        let c = self.op.constraints(t)?;
        let j = jacobian_matrix(&self.op, &l, T::lit(st.theta), self.scale(), &at, &c);
        self.factor = Some(factorize(&j)?);
        self.factor_point = Some((kind, at));
        Ok(())
    }
}

fn velocity_norm<T: Real>(op: &FlowOperator<T>, u: &[T]) -> f64 {
    norm2(&u[..2 * op.space().n_u()]).as_f64()
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// The step to time `t` could not be completed.
    SolverFailed { t: f64, reason: String },
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub steps: usize,
    pub t_max: f64,
}

/// Steps `stepper` up to the configured end time.
///
/// `observer` runs after every accepted step. With `checkpoint` set, a
/// checkpoint is written every `every` steps to the given path.
pub fn run_simulation<T: Real>(
    stepper: &mut TimeStepper<T>,
    checkpoint: Option<(&std::path::Path, usize)>,
    mut observer: impl FnMut(&TimeStepper<T>, &StepInfo),
) -> RunOutcome {
    let total = stepper.config.n_steps();
    let scheme = stepper.config.scheme;
    if stepper.step == 0 {
        let startup = scheme.startup_steps().min(total);
        if startup > 0 {
            log::info!("{scheme}: {startup} Crank-Nicolson startup step(s)");
        }
    }
    while stepper.step < total {
        match stepper.advance() {
            Ok(info) => {
                observer(stepper, &info);
                if let Some((path, every)) = checkpoint {
                    if every > 0 && stepper.step % every == 0 {
                        if let Err(e) = stepper.write_checkpoint(path) {
                            log::warn!("checkpoint at step {} failed: {e}", stepper.step);
                        }
                    }
                }
            }
            Err(e) => {
                let t = (stepper.step + 1) as f64 * stepper.config.dt;
                log::warn!("solver failed at t = {t}: {e}");
                return RunOutcome {
                    status: RunStatus::SolverFailed {
                        t,
                        reason: e.to_string(),
                    },
                    steps: stepper.step,
                    t_max: stepper.time(),
                };
            }
        }
    }
    RunOutcome {
        status: RunStatus::Completed,
        steps: stepper.step,
        t_max: stepper.time(),
    }
}
