use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fem::{make_mixed_space, DirichletData};
use crate::nonlinear::NewtonConfig;
use crate::mesh::{build_rect_mesh, BoundaryEdge, Mesh, MeshSpec};

fn rect_space(x: (f64, f64), y: (f64, f64), n: usize, k: usize) -> Arc<MixedSpace<f64>> {
    let mesh = build_rect_mesh(x, y, n, n).unwrap();
    Arc::new(make_mixed_space(Arc::new(mesh), k).unwrap())
}

/// Polar grid on the regular `sectors`-gon inscribed in the unit circle.
fn disk_mesh(sectors: usize, rings: usize) -> Mesh<f64> {
    let mut v = vec![[0.0, 0.0]];
    for j in 1..=rings {
        let r = j as f64 / rings as f64;
        for i in 0..sectors {
            let a = 2.0 * PI * i as f64 / sectors as f64;
            v.push([r * a.cos(), r * a.sin()]);
        }
    }
    let id = |j: usize, i: usize| 1 + (j - 1) * sectors + i % sectors;
    let mut tris = Vec::new();
    for i in 0..sectors {
        tris.push([0, id(1, i), id(1, i + 1)]);
        for j in 1..rings {
            tris.push([id(j, i), id(j + 1, i), id(j + 1, i + 1)]);
            tris.push([id(j, i), id(j + 1, i + 1), id(j, i + 1)]);
        }
    }
    let edges = (0..sectors)
        .map(|i| BoundaryEdge {
            vertices: [id(rings, i), id(rings, i + 1)],
            tag: BoundaryTag::Wall,
        })
        .collect();
    Mesh::new(v, tris, edges, None).unwrap()
}

#[test]
fn monitors_of_uniform_flow_on_unit_square() {
    let space = rect_space((0.0, 1.0), (0.0, 1.0), 3, 2);
    let asm = Assembler::new(space.clone());
    let u = space.interpolate_velocity(|_| [1.0, 0.0]);
    let m = monitors(&asm, &u);
    assert!((m.kinetic_energy - 0.5).abs() < 1e-13);
    assert!((m.momentum[0] - 1.0).abs() < 1e-13);
    assert!(m.momentum[1].abs() < 1e-13);
    assert!((m.angular_momentum + 0.5).abs() < 1e-13);
    assert!(m.div_l2 < 1e-14);
}

#[test]
fn angular_momentum_of_rigid_rotation_on_disk() {
    let sectors = 64;
    let space = Arc::new(make_mixed_space(Arc::new(disk_mesh(sectors, 6)), 2).unwrap());
    let asm = Assembler::new(space.clone());
    let u = space.interpolate_velocity(|p| [-p[1], p[0]]);
    let m = monitors(&asm, &u);
    // Integral of r^2 over the polygon, triangle by triangle from the centre.
    let a = 2.0 * PI / sectors as f64;
    let polygon = sectors as f64 * (0.5 * a.sin() / 6.0) * (2.0 + a.cos());
    assert!((m.angular_momentum - polygon).abs() < 1e-12);
    assert!((m.angular_momentum - PI / 2.0).abs() < PI / 2.0 - polygon + 1e-12);
    assert!(m.div_l2 < 1e-12);
    assert!(m.momentum.iter().all(|x| x.abs() < 1e-13));
}

#[test]
fn monitors_are_repeatable() {
    let space = rect_space((0.0, 1.0), (0.0, 1.0), 5, 3);
    let asm = Assembler::new(space.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let u: Vec<f64> = (0..space.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let a = monitors(&asm, &u);
    let b = monitors(&asm, &u);
    assert_eq!(a.kinetic_energy.to_bits(), b.kinetic_energy.to_bits());
    assert_eq!(a.div_l2.to_bits(), b.div_l2.to_bits());
    assert!(a.div_l2 > 0.0);
}

fn cylinder(nu: f64, form: ConvectiveForm) -> Arc<FlowOperator<f64>> {
    let mesh = MeshSpec::CylinderBenchmark { level: 0 }.build::<f64>().unwrap();
    let space = Arc::new(make_mixed_space(Arc::new(mesh), 2).unwrap());
    let bc = DirichletData::new()
        .with(BoundaryTag::Outer, |_, _, _| [1.0, 0.0])
        .no_slip(BoundaryTag::Cylinder);
    Arc::new(FlowOperator::new(space, nu, form, bc))
}

#[test]
fn constant_pressure_exerts_no_force() {
    let op = cylinder(0.1, ConvectiveForm::Convective);
    let mut u = op.space().zeros();
    op.space().set_pressure(&mut u, |_| 3.7);
    for form in [ConvectiveForm::Convective, ConvectiveForm::Emac] {
        let f = force_direct(op.space(), &BoundaryTag::Cylinder, &u, 0.1, form);
        assert!(f[0].abs() < 1e-12 && f[1].abs() < 1e-12, "{f:?}");
    }
}

#[test]
fn stokes_drag_is_positive_and_both_functionals_agree() {
    let op = cylinder(1.0, ConvectiveForm::Emac);
    let u = op.stokes(0.0).unwrap();
    let states = [u.as_slice(); 3];
    let res = force_residual(&op, &BoundaryTag::Cylinder, Scheme::Bdf2, 0.01, &states).unwrap();
    let dir = force_direct(op.space(), &BoundaryTag::Cylinder, &u, 1.0, ConvectiveForm::Emac);
    assert!(res[0] > 0.0 && dir[0] > 0.0);
    assert!((res[0] - dir[0]).abs() < 0.05 * res[0], "{res:?} vs {dir:?}");
    // Symmetric data; the mesh is symmetric only up to its grading.
    assert!(res[1].abs() < 1e-3 * res[0]);
    // No-slip makes the EMAC pressure shift vanish on the body.
    let conv = force_direct(op.space(), &BoundaryTag::Cylinder, &u, 1.0, ConvectiveForm::Convective);
    assert!((conv[0] - dir[0]).abs() <= 1e-10 * dir[0].abs());
}

#[test]
fn residual_force_matches_term_by_term_assembly() {
    let space = rect_space((0.0, 1.0), (0.0, 1.0), 4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let states: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..space.size()).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
    let nu = 0.3;
    let dt = 0.1;
    for form in ConvectiveForm::ALL {
        let op = FlowOperator::new(space.clone(), nu, form, DirichletData::new().no_slip(BoundaryTag::Wall));
        let asm = Assembler::new(space.clone());
        let m = asm.assemble_mass();
        let a = asm.assemble_viscous(nu);
        let b = asm.assemble_div();
        let c: Vec<Vec<f64>> = states.iter().map(|s| asm.assemble_convective(form, s)).collect();
        let [vx, vy] = force_lifting(&space, &BoundaryTag::Wall);
        for kind in Scheme::ALL {
            let st = kind.stencil();
            // Each term separately, then combined with the stencil weights.
            let time: f64 = (0..st.alpha.len())
                .map(|j| st.alpha[j] / dt * m.bilinear(&vx, &states[j]))
                .sum();
            let visc = st.theta * a.bilinear(&vx, &states[0])
                + (1.0 - st.theta) * a.bilinear(&vx, &states[1]);
            let pres = b.bilinear(&vx, &states[0]);
            let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
            let conv = if st.extrapolation.is_empty() {
                st.theta * dot(&vx, &c[0]) + (1.0 - st.theta) * dot(&vx, &c[1])
            } else {
                st.extrapolation
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * dot(&vx, &c[j + 1]))
                    .sum()
            };
            let oracle = -(time + visc + pres + conv);
            let f = force_residual(&op, &BoundaryTag::Wall, kind, dt, &refs).unwrap();
            assert!(
                (f[0] - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
                "{form} {kind}: {} vs {oracle}",
                f[0]
            );
            let r = op.step_residual(kind, dt, &refs).unwrap();
            assert_eq!(f[1], -dot(&vy, &r));
        }
    }
}

#[test]
fn residual_force_requires_history() {
    let space = rect_space((0.0, 1.0), (0.0, 1.0), 2, 2);
    let op = FlowOperator::new(space.clone(), 1.0, ConvectiveForm::Emac, DirichletData::new());
    let u = space.zeros();
    assert!(matches!(
        force_residual(&op, &BoundaryTag::Wall, Scheme::Bdf3, 0.1, &[&u, &u, &u]),
        Err(StepError::InsufficientHistory { .. })
    ));
}

/// Kovasznay flow, an exact steady solution.
struct Kovasznay {
    nu: f64,
    lambda: f64,
}

impl Kovasznay {
    fn new(re: f64) -> Self {
        Kovasznay {
            nu: 1.0 / re,
            lambda: re / 2.0 - (re * re / 4.0 + 4.0 * PI * PI).sqrt(),
        }
    }

    fn u(&self, x: f64, y: f64) -> [f64; 2] {
        let e = (self.lambda * x).exp();
        [
            1.0 - e * (2.0 * PI * y).cos(),
            self.lambda / (2.0 * PI) * e * (2.0 * PI * y).sin(),
        ]
    }

    /// Force on the whole boundary of a box: `-integral of u (u . n)`.
    fn boundary_force(&self, x: (f64, f64), y: (f64, f64)) -> [f64; 2] {
        let (xs, ws) = gauss_legendre_unit(12);
        let sides = [
            ([x.0, y.0], [x.1, y.0], [0.0, -1.0]),
            ([x.1, y.0], [x.1, y.1], [1.0, 0.0]),
            ([x.1, y.1], [x.0, y.1], [0.0, 1.0]),
            ([x.0, y.1], [x.0, y.0], [-1.0, 0.0]),
        ];
        let mut f = [0.0; 2];
        for (a, b, n) in sides {
            let len = ((b[0] - a[0]) as f64).hypot(b[1] - a[1]);
            let pieces = 64;
            for s in 0..pieces {
                for (&xi, &w) in xs.iter().zip(&ws) {
                    let r = (s as f64 + xi) / pieces as f64;
                    let u = self.u(a[0] + r * (b[0] - a[0]), a[1] + r * (b[1] - a[1]));
                    let un = u[0] * n[0] + u[1] * n[1];
                    for c in 0..2 {
                        f[c] -= w * len / pieces as f64 * u[c] * un;
                    }
                }
            }
        }
        f
    }
}

#[test]
fn residual_force_converges_faster_than_direct() {
    let kov = Kovasznay::new(20.0);
    let (bx, by) = ((-0.5, 1.0), (-0.5, 1.0));
    let exact = kov.boundary_force(bx, by);
    let mut errs = Vec::new();
    for n in [4, 8, 16] {
        let space = rect_space(bx, by, n, 2);
        let bc = DirichletData::new().with(BoundaryTag::Wall, move |x, y, _| Kovasznay::new(20.0).u(x, y));
        let op = FlowOperator::new(space.clone(), kov.nu, ConvectiveForm::Convective, bc);
        let mut u = op.stokes(0.0).unwrap();
        assert!(op.steady(&mut u, &NewtonConfig::default()).unwrap().converged);
        let states = [u.as_slice(); 3];
        let res = force_residual(&op, &BoundaryTag::Wall, Scheme::Bdf2, 1.0, &states).unwrap();
        let dir = force_direct(&space, &BoundaryTag::Wall, &u, kov.nu, ConvectiveForm::Convective);
        let err = |f: [f64; 2]| (f[0] - exact[0]).hypot(f[1] - exact[1]);
        errs.push((err(res), err(dir)));
    }
    let rate = |a: f64, b: f64| (a / b).log2();
    let res_rate = rate(errs[1].0, errs[2].0);
    let dir_rate = rate(errs[1].1, errs[2].1);
    for (r, d) in &errs {
        assert!(r < d, "{errs:?}");
    }
    assert!(res_rate > dir_rate + 1.0, "rates {res_rate} vs {dir_rate}: {errs:?}");
}
