//! Quasi-Newton iteration with a damped line search and lazy refactorization.

use thiserror::Error;

use crate::linsolve::{factorize, factorize_with, Factorization, LinsolveError};
use crate::scalar::{norm2, Real};
use crate::sparse::CsrMatrix;

/// A system `R(U) = 0` with Jacobian `R'(U)`.
///
/// The residual must already have constrained entries zeroed, and the
/// Jacobian must carry identity rows there.
pub trait NonlinearProblem<T: Real> {
    fn residual(&mut self, u: &[T], r: &mut [T]);
    fn jacobian(&mut self, u: &[T]) -> CsrMatrix<T>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Absolute tolerance on the Euclidean residual norm.
    pub tol: f64,
    /// Refactorize when the residual drops by less than this factor.
    pub refactor_ratio: f64,
    /// Line-search damping factor.
    pub damping: f64,
    /// Trial steps per line search, the full step included.
    pub max_line_search: usize,
    pub max_iterations: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: 1e-11,
            refactor_ratio: 0.1,
            damping: 0.5,
            max_line_search: 8,
            max_iterations: 20,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), NewtonError> {
        let ok = self.tol > 0.0
            && self.refactor_ratio > 0.0
            && self.refactor_ratio < 1.0
            && self.damping > 0.0
            && self.damping < 1.0
            && self.max_line_search >= 1
            && self.max_iterations >= 1;
        if ok {
            Ok(())
        } else {
            Err(NewtonError::InvalidConfig(*self))
        }
    }
}

/// One outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// Residual norm of the accepted iterate.
    pub residual: f64,
    /// Step length that was accepted.
    pub step: f64,
    /// Number of times the step was shortened.
    pub damping_steps: usize,
    /// No trial step decreased the residual; the last one was taken anyway.
    pub forced: bool,
    /// The residual dropped by less than the refactorization ratio.
    pub refactor_requested: bool,
    /// A new factorization was computed at the accepted iterate.
    pub refactorized: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NewtonReport {
    pub converged: bool,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub iterations: Vec<IterationRecord>,
    /// Factorizations computed during this solve, the initial one included.
    pub factorizations: usize,
    /// The solve started from a caller-provided factorization.
    pub reused_factorization: bool,
}

impl NewtonReport {
    pub fn n_iterations(&self) -> usize {
        self.iterations.len()
    }

    pub fn n_damped(&self) -> usize {
        self.iterations.iter().filter(|r| r.damping_steps > 0).count()
    }

    /// Iterations that needed damping and also requested a refactorization.
    pub fn n_damped_and_slow(&self) -> usize {
        self.iterations
            .iter()
            .filter(|r| r.damping_steps > 0 && r.refactor_requested)
            .count()
    }
}

#[derive(Debug, Error)]
pub enum NewtonError {
    #[error("Newton iteration did not converge: residual {:.3e} after {} iterations", .0.final_residual, .0.n_iterations())]
    Failed(Box<NewtonReport>),
    #[error(transparent)]
    Linsolve(#[from] LinsolveError),
    #[error("invalid Newton configuration {0:?}")]
    InvalidConfig(NewtonConfig),
}

/// Solves `R(U) = 0` starting from `u`, which holds the result on return.
///
/// `factor` is reused as the initial Jacobian approximation when present and
/// holds the most recent factorization afterwards. Factorizations are
/// computed lazily: a refactorization requested by the last iteration of a
/// converged solve is skipped.
pub fn newton_solve<T: Real, P: NonlinearProblem<T>>(
    problem: &mut P,
    u: &mut [T],
    config: &NewtonConfig,
    factor: &mut Option<Factorization<T>>,
) -> Result<NewtonReport, NewtonError> {
    config.validate()?;
    let n = u.len();
    let tol = T::lit(config.tol);
    let gamma = T::lit(config.damping);
    let delta = T::lit(config.refactor_ratio);
    let mut report = NewtonReport {
        reused_factorization: factor.is_some(),
        ..Default::default()
    };

    let mut r = vec![T::zero(); n];
    problem.residual(u, &mut r);
    let mut rho = norm2(&r);
    report.initial_residual = rho.as_f64();
    report.final_residual = rho.as_f64();
    let mut stale = factor.is_none();

    let mut w = vec![T::zero(); n];
    let mut trial = vec![T::zero(); n];
    let mut r_trial = vec![T::zero(); n];
    while !(rho < tol) {
        if report.iterations.len() == config.max_iterations || !rho.is_finite() {
            return Err(NewtonError::Failed(Box::new(report)));
        }
        if stale {
            let j = problem.jacobian(u);
            let f = match factor.take() {
                Some(old) => factorize_with(&j, old.ordering().clone())?,
                None => factorize(&j)?,
            };
            *factor = Some(f);
            report.factorizations += 1;
            if let Some(last) = report.iterations.last_mut() {
                last.refactorized = true;
            }
        }
        let f = factor.as_ref().expect("factorization present");
        for (wi, &ri) in w.iter_mut().zip(&r) {
            *wi = -ri;
        }
        f.solve_in_place(&mut w)?;

        let mut omega = T::one();
        let mut record = None;
        for j in 0..config.max_line_search {
            for ((t, &ui), &wi) in trial.iter_mut().zip(u.iter()).zip(&w) {
                *t = ui + omega * wi;
            }
            problem.residual(&trial, &mut r_trial);
            let rho_trial = norm2(&r_trial);
            let last = j + 1 == config.max_line_search;
            if rho_trial < rho || last {
                record = Some(IterationRecord {
                    residual: rho_trial.as_f64(),
                    step: omega.as_f64(),
                    damping_steps: j,
                    forced: !(rho_trial < rho),
                    refactor_requested: rho_trial > delta * rho,
                    refactorized: false,
                });
                u.copy_from_slice(&trial);
                std::mem::swap(&mut r, &mut r_trial);
                rho = rho_trial;
                break;
            }
            omega *= gamma;
        }
        let record = record.expect("line search always accepts");
        log::trace!(
            "newton {}: rho = {:.3e}, step = {}, damping = {}",
            report.iterations.len() + 1,
            record.residual,
            record.step,
            record.damping_steps
        );
        stale = record.refactor_requested;
        report.iterations.push(record);
        report.final_residual = rho.as_f64();
    }
    report.converged = true;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Componentwise `u_i^p - c_i`.
    struct Power {
        p: i32,
        c: Vec<f64>,
        jacobians: usize,
    }

    impl NonlinearProblem<f64> for Power {
        fn residual(&mut self, u: &[f64], r: &mut [f64]) {
            for ((ri, &ui), &ci) in r.iter_mut().zip(u).zip(&self.c) {
                *ri = ui.powi(self.p) - ci;
            }
        }
        fn jacobian(&mut self, u: &[f64]) -> CsrMatrix<f64> {
            self.jacobians += 1;
            let t: Vec<_> = u
                .iter()
                .enumerate()
                .map(|(i, &ui)| (i, i, self.p as f64 * ui.powi(self.p - 1)))
                .collect();
            CsrMatrix::from_triplets(u.len(), &t)
        }
    }

    struct Linear {
        k: CsrMatrix<f64>,
        f: Vec<f64>,
    }

    impl NonlinearProblem<f64> for Linear {
        fn residual(&mut self, u: &[f64], r: &mut [f64]) {
            self.k.matvec(u, r);
            for (ri, fi) in r.iter_mut().zip(&self.f) {
                *ri -= fi;
            }
        }
        fn jacobian(&mut self, _: &[f64]) -> CsrMatrix<f64> {
            self.k.clone()
        }
    }

    #[test]
    fn linear_converges_in_one_step() {
        let k = CsrMatrix::from_dense(&[
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ]);
        let mut p = Linear {
            k,
            f: vec![1.0, 2.0, 3.0],
        };
        let mut u = vec![0.0; 3];
        let mut fac = None;
        let rep = newton_solve(&mut p, &mut u, &NewtonConfig::default(), &mut fac).unwrap();
        assert_eq!(rep.n_iterations(), 1);
        assert_eq!(rep.iterations[0].damping_steps, 0);
        assert_eq!(rep.factorizations, 1);
        assert!(rep.final_residual < 1e-11);
    }

    #[test]
    fn square_root_has_quadratic_tail() {
        let mut p = Power {
            p: 2,
            c: vec![4.0],
            jacobians: 0,
        };
        // Exact Jacobian every iteration.
        let cfg = NewtonConfig {
            refactor_ratio: 1e-300,
            ..Default::default()
        };
        let mut u = vec![3.0];
        let mut fac = None;
        let rep = newton_solve(&mut p, &mut u, &cfg, &mut fac).unwrap();
        assert!((u[0] - 2.0).abs() < 1e-12);
        // Oracle: e_{i+1} = e_i^2 / (2 u_i), so rho_{i+1} / rho_i^2 -> 1/16.
        let rho: Vec<f64> = std::iter::once(rep.initial_residual)
            .chain(rep.iterations.iter().map(|r| r.residual))
            .collect();
        for w in rho.windows(2) {
            if w[1] > 1e-14 {
                let ratio = w[1] / (w[0] * w[0]);
                assert!(ratio < 0.1, "{ratio}");
            }
        }
        assert!(rep.n_iterations() <= 6);
    }

    #[test]
    fn stale_jacobian_triggers_refactorization_audit() {
        let mut p = Power {
            p: 3,
            c: vec![8.0, 27.0],
            jacobians: 0,
        };
        // Start from a factorization built far away.
        let mut fac = Some(factorize(&p.jacobian(&[0.5, 0.5])).unwrap());
        let mut u = vec![2.5, 3.5];
        let rep = newton_solve(&mut p, &mut u, &NewtonConfig::default(), &mut fac).unwrap();
        assert!(rep.reused_factorization);
        assert!(rep.factorizations >= 1);
        let last = rep.n_iterations() - 1;
        let mut prev = rep.initial_residual;
        for (i, it) in rep.iterations.iter().enumerate() {
            assert_eq!(it.refactor_requested, it.residual > 0.1 * prev);
            // Lazy: the final iteration never refactorizes.
            assert_eq!(it.refactorized, it.refactor_requested && i != last);
            prev = it.residual;
        }
        let n_refac = rep.iterations.iter().filter(|r| r.refactorized).count();
        assert_eq!(rep.factorizations, n_refac);
        assert_eq!(p.jacobians, 1 + n_refac);
    }

    /// `u^2 + 1` paired with a Jacobian of the wrong sign: every step
    /// moves uphill.
    struct Uphill;

    impl NonlinearProblem<f64> for Uphill {
        fn residual(&mut self, u: &[f64], r: &mut [f64]) {
            r[0] = u[0] * u[0] + 1.0;
        }
        fn jacobian(&mut self, _: &[f64]) -> CsrMatrix<f64> {
            CsrMatrix::from_dense(&[vec![-1.0]])
        }
    }

    #[test]
    fn hopeless_problem_fails_with_report() {
        let mut p = Uphill;
        let mut u = vec![1.0];
        let err = newton_solve(&mut p, &mut u, &NewtonConfig::default(), &mut None).unwrap_err();
        match err {
            NewtonError::Failed(rep) => {
                assert!(!rep.converged);
                assert_eq!(rep.n_iterations(), 20);
                assert!(rep.iterations.iter().all(|r| r.forced && r.damping_steps == 7));
                assert!(rep.iterations.iter().all(|r| r.step == 0.5f64.powi(7)));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn singular_jacobian_propagates() {
        let mut p = Power {
            p: 2,
            c: vec![4.0],
            jacobians: 0,
        };
        let mut u = vec![0.0];
        let err = newton_solve(&mut p, &mut u, &NewtonConfig::default(), &mut None).unwrap_err();
        assert!(matches!(
            err,
            NewtonError::Linsolve(LinsolveError::SingularMatrix { pivot: 0 })
        ));
    }

    #[test]
    fn config_is_validated() {
        let cfg = NewtonConfig {
            damping: 1.5,
            ..Default::default()
        };
        assert!(matches!(
            newton_solve(&mut Power { p: 2, c: vec![1.0], jacobians: 0 }, &mut [1.0], &cfg, &mut None),
            Err(NewtonError::InvalidConfig(_))
        ));
    }

    proptest! {
        #[test]
        fn accepted_iterates_decrease_unless_forced(
            c in proptest::collection::vec(0.5f64..30.0, 1..4),
            start in 0.3f64..6.0,
            p in 2i32..5,
        ) {
            let n = c.len();
            let mut prob = Power { p, c, jacobians: 0 };
            let mut u = vec![start; n];
            let rep = match newton_solve(&mut prob, &mut u, &NewtonConfig::default(), &mut None) {
                Ok(r) => r,
                Err(NewtonError::Failed(r)) => *r,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            let mut prev = rep.initial_residual;
            for it in &rep.iterations {
                prop_assert!(it.forced || it.residual < prev);
                prop_assert!(it.damping_steps < 8);
                prev = it.residual;
            }
            if rep.converged {
                prop_assert!(rep.final_residual < 1e-11);
            }
        }
    }
}
