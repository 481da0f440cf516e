//! Verification suites with machine-readable results.
//!
//! Every check records what was measured and the bound it was held to, so
//! a failing check can be read without rerunning it.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use emacflow_core::fem::{make_mixed_space, quadrature, DirichletData, LagrangeElement, MixedSpace};
use emacflow_core::mesh::{build_rect_mesh, BoundaryTag, MeshSpec};
use emacflow_core::nonlinear::{newton_solve, NewtonConfig, NewtonReport, NonlinearProblem};
use emacflow_core::quantities::estimate_period;
use emacflow_core::sparse::CsrMatrix;
use emacflow_core::timeloop::{run_simulation, FlowOperator, RunStatus, SchemeConfig, TimeStepper};
use emacflow_core::{Assembler, ConvectiveForm, Scheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    /// Human-readable acceptance bound on `measured`.
    pub bound: String,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, measured: f64, bound: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            measured,
            bound: bound.into(),
            detail: String::new(),
        }
    }

    fn at_most(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Check::new(name, measured <= limit, measured, format!("<= {limit:e}"))
    }

    fn at_least(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Check::new(name, measured >= limit, measured, format!(">= {limit:e}"))
    }

    fn near(name: impl Into<String>, measured: f64, target: f64, tol: f64) -> Self {
        Check::new(
            name,
            (measured - target).abs() <= tol,
            measured,
            format!("{target} +- {tol}"),
        )
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(suite: impl Into<String>, checks: Vec<Check>) -> Self {
        Report {
            suite: suite.into(),
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Identities,
    ConvergenceSpace,
    ConvergenceTime,
    Newton,
    Period,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Identities,
        Suite::ConvergenceSpace,
        Suite::ConvergenceTime,
        Suite::Newton,
        Suite::Period,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::ConvergenceSpace => "convergence-space",
            Suite::ConvergenceTime => "convergence-time",
            Suite::Newton => "newton",
            Suite::Period => "period",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Suite::ALL.iter().map(|x| x.name()).collect();
                format!("unknown suite '{s}' (expected one of {})", names.join(", "))
            })
    }
}

pub fn run_verification(suite: Suite) -> Report {
    let checks = match suite {
        Suite::Identities => [
            conservation(100),
            form_relation(20),
            jacobian_slope(),
            stencil_identities(),
        ]
        .concat(),
        Suite::ConvergenceSpace => [spatial_convergence(2), spatial_convergence(3)].concat(),
        Suite::ConvergenceTime => temporal_convergence(&Scheme::ALL, &[ConvectiveForm::Convective, ConvectiveForm::Emac]),
        Suite::Newton => newton_behaviour(),
        Suite::Period => period_estimator(),
    };
    Report::new(suite.name(), checks)
}

fn unit_square(n: usize, k: usize) -> Arc<MixedSpace<f64>> {
    let mesh = build_rect_mesh((0.0, 1.0), (0.0, 1.0), n, n).expect("valid rectangle");
    Arc::new(make_mixed_space(Arc::new(mesh), k).expect("supported order"))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn abs_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x * y).abs()).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Random velocity vanishing on the boundary, zero pressure.
fn random_zero_trace(s: &MixedSpace<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut u = s.zeros();
    for x in &mut u[..2 * s.n_u()] {
        *x = rng.random_range(-1.0..1.0);
    }
    DirichletData::new()
        .no_slip(BoundaryTag::Wall)
        .constraints(s, 0.0)
        .expect("wall tag present")
        .impose(&mut u);
    u
}

/// Conservation kill-tests on `fields` random zero-trace fields per order,
/// 10x10 cells (200 triangles).
pub fn conservation(fields: usize) -> Vec<Check> {
    const TOL: f64 = 1e-11;
    const WITNESS: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checks = Vec::new();
    for k in [2, 3] {
        let s = unit_square(10, k);
        let asm = Assembler::new(s.clone());
        let e1 = s.interpolate_velocity(|_| [1.0, 0.0]);
        let e2 = s.interpolate_velocity(|_| [0.0, 1.0]);
        let rot = s.interpolate_velocity(|p| [-p[1], p[0]]);
        let names = [
            "emac energy",
            "skew energy",
            "emac momentum x",
            "emac momentum y",
            "emac angular momentum",
            "cons momentum x",
            "cons momentum y",
            "cons angular momentum",
        ];
        let mut worst = [0.0f64; 8];
        let mut witness = [f64::INFINITY; 2];
        for _ in 0..fields {
            let u = random_zero_trace(&s, &mut rng);
            let emac = asm.assemble_convective(ConvectiveForm::Emac, &u);
            let skew = asm.assemble_convective(ConvectiveForm::Skew, &u);
            let cons = asm.assemble_convective(ConvectiveForm::Conservative, &u);
            let conv = asm.assemble_convective(ConvectiveForm::Convective, &u);
            let pairs: [(&[f64], &[f64]); 8] = [
                (&emac, &u),
                (&skew, &u),
                (&emac, &e1),
                (&emac, &e2),
                (&emac, &rot),
                (&cons, &e1),
                (&cons, &e2),
                (&cons, &rot),
            ];
            for (w, (r, v)) in worst.iter_mut().zip(pairs) {
                *w = w.max(dot(r, v).abs() / abs_dot(r, v));
            }
            witness[0] = witness[0].min(dot(&conv, &u).abs() / abs_dot(&conv, &u));
            witness[1] = witness[1].min(dot(&cons, &u).abs() / abs_dot(&cons, &u));
        }
        for (name, w) in names.iter().zip(worst) {
            checks.push(Check::at_most(format!("k={k} {name}"), w, TOL));
        }
        checks.push(Check::at_least(format!("k={k} conv energy witness"), witness[0], WITNESS));
        checks.push(Check::at_least(format!("k={k} cons energy witness"), witness[1], WITNESS));
    }
    checks
}

/// `(grad |u|^2/2, w)` and `((div u) u, w)` for every velocity test
/// function, by direct quadrature with physical gradients from the 2x2
/// Jacobian of each cell.
pub fn gradient_and_divergence_terms(s: &MixedSpace<f64>, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = s.order();
    let el = LagrangeElement::new(k);
    let rule = quadrature::<f64>(3 * k).expect("degree within range");
    let mesh = s.mesh();
    let nu = s.n_u();
    let mut grad_ke = vec![0.0; s.size()];
    let mut div_u = vec![0.0; s.size()];
    let nl = el.n_local();
    let mut phi = vec![0.0; nl];
    let mut dl = vec![[0.0; 3]; nl];
    for t in 0..mesh.n_triangles() {
        let [p0, p1, p2] = mesh.triangle_coords(t);
        let j = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let dofs = s.velocity().cell_dofs(t);
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            el.eval(*b, &mut phi);
            el.eval_dbary(*b, &mut dl);
            let grads: Vec<[f64; 2]> = dl
                .iter()
                .map(|d| {
                    let (gx, ge) = (d[1] - d[0], d[2] - d[0]);
                    [
                        (j[1][1] * gx - j[1][0] * ge) / det,
                        (-j[0][1] * gx + j[0][0] * ge) / det,
                    ]
                })
                .collect();
            let mut uu = [0.0; 2];
            let mut g = [[0.0; 2]; 2];
            for (a, &d) in dofs.iter().enumerate() {
                for c in 0..2 {
                    uu[c] += u[c * nu + d] * phi[a];
                    g[c][0] += u[c * nu + d] * grads[a][0];
                    g[c][1] += u[c * nu + d] * grads[a][1];
                }
            }
            let gk = [uu[0] * g[0][0] + uu[1] * g[1][0], uu[0] * g[0][1] + uu[1] * g[1][1]];
            let dv = g[0][0] + g[1][1];
            let wt = w * det.abs();
            for (a, &d) in dofs.iter().enumerate() {
                for c in 0..2 {
                    grad_ke[c * nu + d] += wt * gk[c] * phi[a];
                    div_u[c * nu + d] += wt * dv * uu[c] * phi[a];
                }
            }
        }
    }
    (grad_ke, div_u)
}

/// EMAC against the convective form plus the two extra terms on `fields`
/// unconstrained random fields per order.
pub fn form_relation(fields: usize) -> Vec<Check> {
    const TOL: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    [2, 3]
        .into_iter()
        .map(|k| {
            let s = unit_square(6, k);
            let asm = Assembler::new(s.clone());
            let mut worst = 0.0f64;
            for _ in 0..fields {
                let u = random_vec(s.size(), &mut rng);
                let emac = asm.assemble_convective(ConvectiveForm::Emac, &u);
                let conv = asm.assemble_convective(ConvectiveForm::Convective, &u);
                let (gk, dv) = gradient_and_divergence_terms(&s, &u);
                let diff: Vec<f64> = (0..s.size()).map(|i| emac[i] - conv[i] - gk[i] - dv[i]).collect();
                worst = worst.max(max_abs(&diff) / max_abs(&emac));
            }
            Check::at_most(format!("k={k} emac = conv + gradient + divergence"), worst, TOL)
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Central differences of the convective term against its assembled
/// Jacobian for step sizes spanning three decades; the check is on the
/// slope of the relative error.
pub fn jacobian_slope() -> Vec<Check> {
    let eps = [1e-1, 1e-2, 1e-3, 1e-4];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = unit_square(6, 2);
    let asm = Assembler::new(s.clone());
    ConvectiveForm::ALL
        .into_iter()
        .map(|form| {
            let u = random_vec(s.size(), &mut rng);
            let v = random_vec(s.size(), &mut rng);
            let jv = asm.assemble_convective_jacobian(form, &u).mul(&v);
            let norm_jv = jv.iter().map(|x| x * x).sum::<f64>().sqrt();
            let errors: Vec<f64> = eps
                .iter()
                .map(|&e| {
                    let up: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + e * b).collect();
                    let um: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - e * b).collect();
                    let cp = asm.assemble_convective(form, &up);
                    let cm = asm.assemble_convective(form, &um);
                    let d2: f64 = (0..s.size())
                        .map(|i| ((cp[i] - cm[i]) / (2.0 * e) - jv[i]).powi(2))
                        .sum();
                    // Zero errors would make the fit undefined; floor at the
                    // smallest positive double.
                    (d2.sqrt() / norm_jv).max(f64::MIN_POSITIVE)
                })
                .collect();
            let slope = log_slope(&eps, &errors);
            Check::near(format!("{form} finite-difference slope"), slope, 2.0, 0.2)
                .with_detail(format!("relative errors {} at eps {eps:?}", sci(&errors)))
        })
        .collect()
}

/// Stencil weights applied to polynomial histories.
pub fn stencil_identities() -> Vec<Check> {
    const TOL: f64 = 1e-12;
    let (t, dt) = (1.3, 0.1);
    let mut checks = Vec::new();
    for scheme in Scheme::ALL {
        let st = scheme.stencil();
        let mut worst = 0.0f64;
        for m in 0..=scheme.order() as i32 {
            let f = |x: f64| x.powi(m);
            let df = |x: f64| if m == 0 { 0.0 } else { m as f64 * x.powi(m - 1) };
            let lhs: f64 = st
                .alpha
                .iter()
                .enumerate()
                .map(|(j, a)| a * f(t - j as f64 * dt) / dt)
                .sum();
            let rhs = st.theta * df(t) + (1.0 - st.theta) * df(t - dt);
            worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
            if !st.extrapolation.is_empty() && m < scheme.order() as i32 {
                let ex: f64 = st
                    .extrapolation
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * f(t - (j + 1) as f64 * dt))
                    .sum();
                worst = worst.max((ex - f(t)).abs() / f(t).abs().max(1.0));
            }
        }
        checks.push(Check::at_most(
            format!("{scheme} exact up to degree {}", scheme.order()),
            worst,
            TOL,
        ));
    }
    let bdf3 = Scheme::Bdf3.stencil().alpha;
    let expected = [11.0 / 6.0, -3.0, 1.5, -1.0 / 3.0];
    let dev = bdf3
        .iter()
        .zip(expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    checks.push(
        Check::at_most("bdf3 weights (11/6, -3, 3/2, -1/3)", dev, 0.0)
            .with_detail(format!("{bdf3:?}")),
    );
    checks
}

/// Checks that refactorizations happen exactly when the residual dropped
/// by less than `ratio`, and only when another iteration follows.
pub fn audit_refactorizations(report: &NewtonReport, ratio: f64) -> Result<usize, String> {
    let mut prev = report.initial_residual;
    let last = report.iterations.len().saturating_sub(1);
    let mut count = usize::from(!report.reused_factorization && !report.iterations.is_empty());
    for (i, it) in report.iterations.iter().enumerate() {
        let slow = it.residual > ratio * prev;
        if it.refactor_requested != slow {
            return Err(format!(
                "iteration {}: rho {:e} after {prev:e}, requested = {}",
                i + 1,
                it.residual,
                it.refactor_requested
            ));
        }
        if it.refactorized != (slow && i != last) {
            return Err(format!(
                "iteration {}: refactorized = {} with requested = {slow}, last = {}",
                i + 1,
                it.refactorized,
                i == last
            ));
        }
        count += usize::from(it.refactorized);
        prev = it.residual;
    }
    if count != report.factorizations {
        return Err(format!(
            "report counts {} factorizations, iterations imply {count}",
            report.factorizations
        ));
    }
    Ok(report.iterations.len())
}

struct LinearSystem {
    a: CsrMatrix<f64>,
    b: Vec<f64>,
}

impl NonlinearProblem<f64> for LinearSystem {
    fn residual(&mut self, u: &[f64], r: &mut [f64]) {
        self.a.matvec(u, r);
        for (ri, bi) in r.iter_mut().zip(&self.b) {
            *ri -= bi;
        }
    }

    fn jacobian(&mut self, _: &[f64]) -> CsrMatrix<f64> {
        self.a.clone()
    }
}

/// Benchmark geometry at the coarsest built-in level with uniform inflow.
pub fn cylinder_operator(nu: f64, form: ConvectiveForm) -> Arc<FlowOperator<f64>> {
    let mesh = MeshSpec::CylinderBenchmark { level: 0 }
        .build::<f64>()
        .expect("built-in mesh");
    let space = Arc::new(make_mixed_space(Arc::new(mesh), 2).expect("P2/P1"));
    let bc = DirichletData::new()
        .with(BoundaryTag::Outer, |_, _, _| [1.0, 0.0])
        .no_slip(BoundaryTag::Cylinder);
    Arc::new(FlowOperator::new(space, nu, form, bc))
}

pub fn newton_behaviour() -> Vec<Check> {
    let config = NewtonConfig::default();
    let mut checks = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 60;
    let mut trip = Vec::new();
    for i in 0..n {
        trip.push((i, i, 4.0 + rng.random_range(0.0..1.0)));
        if i + 1 < n {
            trip.push((i, i + 1, rng.random_range(-1.0..1.0)));
            trip.push((i + 1, i, rng.random_range(-1.0..1.0)));
        }
    }
    let mut lin = LinearSystem {
        a: CsrMatrix::from_triplets(n, &trip),
        b: random_vec(n, &mut rng),
    };
    let mut u = vec![0.0; n];
    match newton_solve(&mut lin, &mut u, &config, &mut None) {
        Ok(r) => checks.push(Check::near("linear system iterations", r.n_iterations() as f64, 1.0, 0.0)),
        Err(e) => checks.push(Check::new("linear system iterations", false, f64::NAN, "1").with_detail(e.to_string())),
    }

    let op = cylinder_operator(0.1, ConvectiveForm::Emac);
    let steady = op.stokes(0.0).and_then(|mut u| op.steady(&mut u, &config));
    match steady {
        Ok(r) => {
            checks.push(
                Check::at_most("steady Re=20 iterations", r.n_iterations() as f64, 10.0)
                    .with_detail(format!("final residual {:.3e}", r.final_residual)),
            );
            checks.push(Check::at_most("steady Re=20 residual", r.final_residual, config.tol));
            let audit = audit_refactorizations(&r, config.refactor_ratio);
            checks.push(
                Check::new("steady Re=20 refactorization audit", audit.is_ok(), 0.0, "no mismatch")
                    .with_detail(audit.err().unwrap_or_default()),
            );
        }
        Err(e) => checks.push(
            Check::new("steady Re=20 iterations", false, f64::NAN, "<= 10").with_detail(e.to_string()),
        ),
    }

    // Transient runs reuse factorizations across steps.
    for scheme in [Scheme::Bdf3, Scheme::CrankNicolson] {
        let op = cylinder_operator(0.004, ConvectiveForm::Emac);
        let name = format!("{scheme} transient refactorization audit");
        let u0 = match op.stokes(0.0) {
            Ok(u) => u,
            Err(e) => {
                checks.push(Check::new(name, false, f64::NAN, "no mismatch").with_detail(e.to_string()));
                continue;
            }
        };
        let sc = SchemeConfig {
            scheme,
            dt: 0.02,
            t_end: 0.4,
        };
        let mut stepper = TimeStepper::new(op, sc, config, u0);
        let mut audited = 0;
        let mut problem = None;
        let outcome = run_simulation(&mut stepper, None, |_, info| {
            if let Some(r) = &info.newton {
                match audit_refactorizations(r, config.refactor_ratio) {
                    Ok(n) => audited += n,
                    Err(e) => {
                        problem.get_or_insert(format!("step {}: {e}", info.step));
                    }
                }
            }
        });
        if let RunStatus::SolverFailed { reason, .. } = outcome.status {
            problem.get_or_insert(reason);
        }
        checks.push(
            Check::new(name, problem.is_none(), audited as f64, "no mismatch")
                .with_detail(problem.unwrap_or_else(|| format!("{audited} iterations audited"))),
        );
    }
    checks
}

pub fn period_estimator() -> Vec<Check> {
    let sample = |f: &dyn Fn(f64) -> (f64, f64), dt: f64, t_end: f64| {
        let n = (t_end / dt).round() as usize;
        let t: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
        let (d, l): (Vec<f64>, Vec<f64>) = t.iter().map(|&x| f(x)).unzip();
        (t, d, l)
    };
    let harmonic = |per: f64| {
        let w = 2.0 * PI / per;
        move |x: f64| {
            (
                (w * x).cos() + 0.3 * (2.0 * w * x + 0.4).cos(),
                (w * x).sin() + 0.2 * (3.0 * w * x).sin(),
            )
        }
    };
    let mut checks = Vec::new();

    let w = 2.0 * PI / 9.0;
    let (t, d, l) = sample(&|x| ((w * x).cos(), (w * x).sin()), 0.01, 100.0);
    let err = estimate_period(&t, &d, &l, (0.0, 100.0)).map_or(f64::INFINITY, |e| (e.period - 9.0).abs());
    checks.push(Check::at_most("circle period error", err, 1e-4));

    // Non-circular cycle, so the discretization error is visible.
    let truth = 9.1234;
    let est: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&dt| {
            let (t, d, l) = sample(&harmonic(truth), dt, 100.0);
            estimate_period(&t, &d, &l, (10.0, 90.0)).map_or(f64::NAN, |e| e.period)
        })
        .collect();
    let order = ((est[0] - est[1]) / (est[1] - est[2])).abs().log2();
    checks.push(
        Check::near("self-convergence order", order, 2.0, 0.3)
            .with_detail(format!("periods {est:?} at dt 0.04, 0.02, 0.01")),
    );

    let (t, d, l) = sample(&harmonic(8.8), 0.01, 120.0);
    let t2: Vec<f64> = t.iter().map(|x| x + 13.0).collect();
    let d2: Vec<f64> = d.iter().map(|x| 3.0 * x + 2.0).collect();
    let l2: Vec<f64> = l.iter().map(|x| -0.5 * x + 7.0).collect();
    let dev = match (
        estimate_period(&t, &d, &l, (20.0, 110.0)),
        estimate_period(&t2, &d2, &l2, (33.0, 123.0)),
    ) {
        (Ok(a), Ok(b)) => (a.period - b.period).abs() / a.period,
        _ => f64::INFINITY,
    };
    checks.push(Check::at_most("affine invariance", dev, 1e-12));
    checks
}

/// Exact steady solution at Reynolds number `re`, with kinematic pressure.
#[derive(Debug, Clone, Copy)]
pub struct Kovasznay {
    pub nu: f64,
    pub lambda: f64,
}

impl Kovasznay {
    pub fn new(re: f64) -> Self {
        Kovasznay {
            nu: 1.0 / re,
            lambda: re / 2.0 - (re * re / 4.0 + 4.0 * PI * PI).sqrt(),
        }
    }

    pub fn u(&self, x: f64, y: f64) -> [f64; 2] {
        let e = (self.lambda * x).exp();
        [
            1.0 - e * (2.0 * PI * y).cos(),
            self.lambda / (2.0 * PI) * e * (2.0 * PI * y).sin(),
        ]
    }

    pub fn p(&self, x: f64, _y: f64) -> f64 {
        0.5 * (1.0 - (2.0 * self.lambda * x).exp())
    }
}

/// L2 errors of the velocity and of the mean-adjusted pressure.
pub fn l2_errors(
    s: &MixedSpace<f64>,
    x: &[f64],
    u: impl Fn(f64, f64) -> [f64; 2],
    p: impl Fn(f64, f64) -> f64,
) -> (f64, f64) {
    let k = s.order();
    let rule = quadrature::<f64>(2 * k + 4).expect("degree within range");
    let mesh = s.mesh();
    let (nu, po) = (s.n_u(), s.p_offset());
    let mut eu = 0.0;
    // Integrals of the pressure difference, its square, and the area.
    let (mut ep, mut ep2, mut area) = (0.0, 0.0, 0.0);
    for t in 0..mesh.n_triangles() {
        let g = s.geometry(t);
        let jac = 2.0 * g.area.abs();
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let [px, py] = g.map(*b);
            let ue = u(px, py);
            let uh = [
                s.velocity().evaluate(&x[..nu], t, *b),
                s.velocity().evaluate(&x[nu..2 * nu], t, *b),
            ];
            let ph = s.pressure().evaluate(&x[po..po + s.n_p()], t, *b);
            let wt = w * jac;
            eu += wt * ((uh[0] - ue[0]).powi(2) + (uh[1] - ue[1]).powi(2));
            let d = ph - p(px, py);
            ep += wt * d;
            ep2 += wt * d * d;
            area += wt;
        }
    }
    (eu.sqrt(), (ep2 - ep * ep / area).max(0.0).sqrt())
}

/// Kovasznay flow at Re = 20 on `[-0.5, 1]^2` with the convective form,
/// solved by Newton's method on 4, 8, 16 and 32 cells per side.
pub fn spatial_convergence(k: usize) -> Vec<Check> {
    let kov = Kovasznay::new(20.0);
    let cells = [4usize, 8, 16, 32];
    let mut h = Vec::new();
    let mut errs = Vec::new();
    for &n in &cells {
        let mesh = build_rect_mesh((-0.5, 1.0), (-0.5, 1.0), n, n).expect("valid rectangle");
        let space = Arc::new(make_mixed_space(Arc::new(mesh), k).expect("supported order"));
        let bc = DirichletData::new().with(BoundaryTag::Wall, move |x, y, _| kov.u(x, y));
        let op = FlowOperator::new(space.clone(), kov.nu, ConvectiveForm::Convective, bc);
        let solved = op.stokes(0.0).and_then(|mut u| op.steady(&mut u, &NewtonConfig::default()).map(|_| u));
        match solved {
            Ok(u) => {
                h.push(1.5 / n as f64);
                errs.push(l2_errors(&space, &u, |x, y| kov.u(x, y), |x, y| kov.p(x, y)));
            }
            Err(e) => {
                return vec![Check::new(format!("k={k} Kovasznay solve"), false, f64::NAN, "converges")
                    .with_detail(format!("{n} cells: {e}"))]
            }
        }
    }
    let eu: Vec<f64> = errs.iter().map(|e| e.0).collect();
    let ep: Vec<f64> = errs.iter().map(|e| e.1).collect();
    vec![
        Check::near(format!("k={k} velocity L2 rate"), log_slope(&h, &eu), (k + 1) as f64, 0.3)
            .with_detail(format!("errors {} at cells {cells:?}", sci(&eu))),
        Check::near(format!("k={k} pressure L2 rate"), log_slope(&h, &ep), k as f64, 0.3)
            .with_detail(format!("errors {} at cells {cells:?}", sci(&ep))),
    ]
}

/// Decaying Taylor-Green vortex with viscosity `nu`.
#[derive(Debug, Clone, Copy)]
pub struct TaylorGreen {
    pub nu: f64,
}

impl TaylorGreen {
    pub fn u(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let d = (-2.0 * self.nu * t).exp();
        [-x.cos() * y.sin() * d, x.sin() * y.cos() * d]
    }
}

/// Velocity at `t_end` of a Taylor-Green run with step `dt`.
fn taylor_green_run(
    space: &Arc<MixedSpace<f64>>,
    tg: TaylorGreen,
    scheme: Scheme,
    form: ConvectiveForm,
    dt: f64,
    t_end: f64,
) -> Result<Vec<f64>, String> {
    let bc = DirichletData::new().with(BoundaryTag::Wall, move |x, y, t| tg.u(x, y, t));
    let op = Arc::new(FlowOperator::new(space.clone(), tg.nu, form, bc));
    let u0 = space.interpolate_velocity(|p| tg.u(p[0], p[1], 0.0));
    let sc = SchemeConfig { scheme, dt, t_end };
    let mut stepper = TimeStepper::new(op, sc, NewtonConfig::default(), u0);
    match run_simulation(&mut stepper, None, |_, _| {}).status {
        RunStatus::Completed => Ok(stepper.current().to_vec()),
        RunStatus::SolverFailed { t, reason } => Err(format!("dt {dt} failed at t = {t}: {reason}")),
    }
}

/// Temporal rates on the Taylor-Green vortex over `[0, 2 pi]^2` with exact
/// boundary data. Errors are measured in the velocity L2 norm against a run
/// of the same scheme with an eight times smaller step, which removes the
/// spatial error from the comparison.
pub fn temporal_convergence(schemes: &[Scheme], forms: &[ConvectiveForm]) -> Vec<Check> {
    let tg = TaylorGreen { nu: 0.1 };
    let t_end = 1.0;
    let steps = [0.1, 0.05, 0.025];
    let mesh = build_rect_mesh((0.0, 2.0 * PI), (0.0, 2.0 * PI), 8, 8).expect("valid rectangle");
    let space = Arc::new(make_mixed_space(Arc::new(mesh), 2).expect("P2/P1"));
    let asm = Assembler::new(space.clone());
    let mass = asm.assemble_mass();
    let nu2 = 2 * space.n_u();
    let mut checks = Vec::new();
    for &form in forms {
        for &scheme in schemes {
            let name = format!("{scheme} {form} temporal rate");
            let run = |dt| taylor_green_run(&space, tg, scheme, form, dt, t_end);
            let result = (|| -> Result<Vec<f64>, String> {
                let reference = run(steps[steps.len() - 1] / 8.0)?;
                steps
                    .iter()
                    .map(|&dt| {
                        let mut d = run(dt)?;
                        for (a, b) in d.iter_mut().zip(&reference) {
                            *a -= b;
                        }
                        d[nu2..].iter_mut().for_each(|x| *x = 0.0);
                        Ok(mass.bilinear(&d, &d).max(0.0).sqrt())
                    })
                    .collect()
            })();
            let target = scheme.order() as f64;
            checks.push(match result {
                Ok(errs) => Check::near(name, log_slope(&steps, &errs), target, 0.4)
                    .with_detail(format!("errors {} at dt {steps:?}", sci(&errs))),
                Err(e) => Check::new(name, false, f64::NAN, format!("{target} +- 0.4")).with_detail(e),
            });
        }
    }
    checks
}

fn sci(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}
