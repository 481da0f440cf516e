use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fem::{make_mixed_space, DirichletData, LagrangeElement};
use crate::mesh::{build_rect_mesh, BoundaryTag, Mesh};

fn space(n: usize, k: usize) -> Arc<MixedSpace<f64>> {
    let mesh = build_rect_mesh((0.0, 1.0), (0.0, 1.0), n, n).unwrap();
    Arc::new(make_mixed_space(Arc::new(mesh), k).unwrap())
}

/// Random velocity vanishing on the whole boundary; zero pressure.
fn random_zero_trace(s: &MixedSpace<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut u = s.zeros();
    let nu = s.n_u();
    for x in &mut u[..2 * nu] {
        *x = rng.random_range(-1.0..1.0);
    }
    let c = DirichletData::new()
        .no_slip(BoundaryTag::Wall)
        .constraints(s, 0.0)
        .unwrap();
    c.impose(&mut u);
    u
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn mass_integrals() {
    for k in 2..=3 {
        let s = space(3, k);
        let asm = Assembler::new(s.clone());
        let m = asm.assemble_mass();
        let one = s.interpolate_velocity(|_| [1.0, 0.0]);
        assert!((m.bilinear(&one, &one) - 1.0).abs() < 1e-13);
        let x = s.interpolate_velocity(|p| [p[0], 0.0]);
        assert!((m.bilinear(&x, &x) - 1.0 / 3.0).abs() < 1e-13);
    }
}

#[test]
fn mass_velocity_block_positive_definite() {
    let s = space(1, 2);
    let m = Assembler::new(s.clone()).assemble_mass().to_dense();
    let n = 2 * s.n_u();
    // Dense Cholesky of the velocity block.
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i][p] * l[j][p]).sum();
            if i == j {
                let d = m[i][i] - s;
                assert!(d > 0.0, "pivot {i} = {d}");
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            assert!((m[i][j] - m[j][i]).abs() < 1e-16);
        }
    }
}

#[test]
fn viscous_values() {
    let s = space(2, 2);
    let a = Assembler::new(s.clone()).assemble_viscous(1.0);
    let u = s.interpolate_velocity(|p| [p[0], -p[1]]);
    assert!((a.bilinear(&u, &u) - 4.0).abs() < 1e-12);
    let r = s.interpolate_velocity(|p| [-p[1], p[0]]);
    assert!(a.bilinear(&r, &r).abs() < 1e-13);
    assert!(a.mul(&r).iter().all(|v| v.abs() < 1e-13));
}

#[test]
fn viscous_symmetric() {
    let s = space(3, 3);
    let a = Assembler::new(s.clone()).assemble_viscous(0.7);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let u: Vec<f64> = (0..s.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..s.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (uv, vu) = (a.bilinear(&u, &v), a.bilinear(&v, &u));
        assert!((uv - vu).abs() <= 1e-13 * uv.abs().max(1.0));
    }
}

#[test]
fn divergence_values() {
    let s = space(2, 2);
    let b = Assembler::new(s.clone()).assemble_div();
    let mut q = s.zeros();
    s.set_pressure(&mut q, |_| 1.0);
    let v = s.interpolate_velocity(|p| [p[0], p[1]]);
    assert!((b.bilinear(&q, &v) + 2.0).abs() < 1e-13);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let v0 = random_zero_trace(&s, &mut rng);
    assert!(b.bilinear(&q, &v0).abs() < 1e-13);
    // Transposed blocks are identical.
    for i in 0..s.size() {
        let (cols, vals) = b.row(i);
        for (&j, &x) in cols.iter().zip(vals) {
            assert_eq!(x, b.get(j, i));
        }
    }
    // Multiplier row integrates the pressure.
    let lam = s.lambda_index();
    let mut e = s.zeros();
    e[lam] = 1.0;
    assert!((b.bilinear(&e, &q) - 1.0).abs() < 1e-14);
}

#[test]
fn constant_field_convection_vanishes() {
    let s = space(2, 2);
    let asm = Assembler::new(s.clone());
    let u = s.interpolate_velocity(|_| [0.3, -1.2]);
    // The conservative form is integrated by parts, so it vanishes only
    // against test functions with zero trace.
    let c = DirichletData::new()
        .no_slip(BoundaryTag::Wall)
        .constraints(&s, 0.0)
        .unwrap();
    for form in ConvectiveForm::ALL {
        let r = asm.assemble_convective(form, &u);
        for (i, x) in r.iter().enumerate() {
            if form != ConvectiveForm::Conservative || !c.mask[i] {
                assert!(x.abs() < 1e-14, "{form} row {i}: {x}");
            }
        }
    }
}

#[test]
fn rigid_rotation() {
    let s = space(3, 2);
    let asm = Assembler::new(s.clone());
    let u = s.interpolate_velocity(|p| [-p[1], p[0]]);
    let emac = asm.assemble_convective(ConvectiveForm::Emac, &u);
    assert!(emac.iter().all(|x| x.abs() < 1e-14));
    // (u . grad) u = (-x, -y), so c_conv(u, u, .) = M (-x, -y).
    let conv = asm.assemble_convective(ConvectiveForm::Convective, &u);
    let m = asm.assemble_mass();
    let expect = m.mul(&s.interpolate_velocity(|p| [-p[0], -p[1]]));
    for (a, b) in conv.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-14);
    }
}

/// Independent quadrature of `(grad |u|^2/2, w)` and `((div u) u, w)` for all
/// velocity test functions, evaluated from first principles.
fn extra_terms(s: &MixedSpace<f64>, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = s.order();
    let el = LagrangeElement::new(k);
    let rule = crate::fem::quadrature::<f64>(3 * k).unwrap();
    let mesh = s.mesh();
    let nu = s.n_u();
    let mut grad_ke = vec![0.0; s.size()];
    let mut div_u = vec![0.0; s.size()];
    let nl = el.n_local();
    let mut phi = vec![0.0; nl];
    let mut dl = vec![[0.0; 3]; nl];
    for t in 0..mesh.n_triangles() {
        let [p0, p1, p2] = mesh.triangle_coords(t);
        // Physical gradient by solving the 2x2 Jacobian system.
        let j = [[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let dofs = s.velocity().cell_dofs(t);
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            el.eval(*b, &mut phi);
            el.eval_dbary(*b, &mut dl);
            // Reference derivatives d/dxi = d/dl1 - d/dl0, d/deta = d/dl2 - d/dl0.
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
            // grad(|u|^2/2)_j = sum_i u_i d_j u_i
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

#[test]
fn emac_equals_conv_plus_gradient_and_divergence_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 2..=3 {
        let s = space(4, k);
        let asm = Assembler::new(s.clone());
        for _ in 0..5 {
            let u: Vec<f64> = (0..s.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let emac = asm.assemble_convective(ConvectiveForm::Emac, &u);
            let conv = asm.assemble_convective(ConvectiveForm::Convective, &u);
            let (gk, dv) = extra_terms(&s, &u);
            let scale = emac.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for i in 0..s.size() {
                let diff = emac[i] - conv[i] - gk[i] - dv[i];
                assert!(diff.abs() <= 1e-12 * scale, "k={k} i={i} diff {diff:e}");
            }
        }
    }
}

#[test]
fn conservation_kills() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 2..=3 {
        let s = space(4, k);
        let asm = Assembler::new(s.clone());
        let e1 = s.interpolate_velocity(|_| [1.0, 0.0]);
        let e2 = s.interpolate_velocity(|_| [0.0, 1.0]);
        let rot = s.interpolate_velocity(|p| [-p[1], p[0]]);
        for _ in 0..5 {
            let u = random_zero_trace(&s, &mut rng);
            let abs_dot = |r: &[f64], w: &[f64]| -> f64 {
                r.iter().zip(w).map(|(a, b)| (a * b).abs()).sum()
            };
            let emac = asm.assemble_convective(ConvectiveForm::Emac, &u);
            let skew = asm.assemble_convective(ConvectiveForm::Skew, &u);
            let cons = asm.assemble_convective(ConvectiveForm::Conservative, &u);
            let conv = asm.assemble_convective(ConvectiveForm::Convective, &u);
            for (r, w, what) in [
                (&emac, &u, "emac energy"),
                (&skew, &u, "skew energy"),
                (&emac, &e1, "emac e1"),
                (&emac, &e2, "emac e2"),
                (&emac, &rot, "emac rotation"),
                (&cons, &e1, "cons e1"),
                (&cons, &e2, "cons e2"),
                (&cons, &rot, "cons rotation"),
            ] {
                let v = dot(r, w);
                assert!(v.abs() <= 1e-11 * abs_dot(r, w), "{what}: {v:e}");
            }
            assert!(dot(&conv, &u).abs() > 1e-6);
            assert!(dot(&cons, &u).abs() > 1e-6);
        }
    }
}

#[test]
fn jacobian_matches_directional_derivative() {
    // Forms are quadratic: c(u + w) - c(u - w) = 2 J(u) w exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s = space(3, 2);
    let asm = Assembler::new(s.clone());
    for form in ConvectiveForm::ALL {
        let u: Vec<f64> = (0..s.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..s.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let up: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + b).collect();
        let um: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a - b).collect();
        let cp = asm.assemble_convective(form, &up);
        let cm = asm.assemble_convective(form, &um);
        let jw = asm.assemble_convective_jacobian(form, &u).mul(&w);
        let scale = jw.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..s.size() {
            let fd = 0.5 * (cp[i] - cm[i]);
            assert!((fd - jw[i]).abs() < 1e-13 * scale, "{form} row {i}");
        }
        // J(u) u = 2 c(u) by homogeneity of degree two.
        let ju = asm.assemble_convective_jacobian(form, &u).mul(&u);
        let c = asm.assemble_convective(form, &u);
        for i in 0..s.size() {
            assert!((ju[i] - 2.0 * c[i]).abs() < 1e-13 * scale);
        }
    }
}

#[test]
fn jacobian_linear_in_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s = space(2, 3);
    let asm = Assembler::new(s.clone());
    let u: Vec<f64> = (0..s.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u2: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
    for form in ConvectiveForm::ALL {
        let j0 = asm.assemble_convective_jacobian(form, &s.zeros());
        assert!(j0.values().iter().all(|&v| v == 0.0));
        let j1 = asm.assemble_convective_jacobian(form, &u);
        let j2 = asm.assemble_convective_jacobian(form, &u2);
        for (a, b) in j1.values().iter().zip(j2.values()) {
            assert!((2.0 * a - b).abs() <= 1e-13 * b.abs().max(1.0));
        }
    }
}

#[test]
fn dirichlet_homogeneous_identity_rows() {
    let s = space(2, 2);
    let asm = Assembler::new(s.clone());
    let mut a = asm.assemble_viscous(1.0);
    a.axpy(1.0, &asm.assemble_div());
    let c = DirichletData::new()
        .no_slip(BoundaryTag::Wall)
        .constraints(&s, 0.0)
        .unwrap();
    let mut rhs = vec![1.0; s.size()];
    apply_dirichlet(&mut a, Some(&mut rhs), &c);
    for i in 0..s.size() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if c.mask[i] {
                assert_eq!(v, if i == j { 1.0 } else { 0.0 });
            } else if c.mask[j] {
                assert_eq!(v, 0.0);
            }
        }
        if c.mask[i] {
            assert_eq!(rhs[i], 0.0);
        }
    }
}

#[test]
fn pattern_excludes_pressure_pressure_pairs() {
    let s = space(2, 2);
    let p = mixed_pattern(&s);
    let off = s.p_offset();
    for i in off..s.lambda_index() {
        for &j in p.row(i) {
            assert!(j < off || j == i || j == s.lambda_index());
        }
    }
}

#[test]
fn form_names_round_trip() {
    for f in ConvectiveForm::ALL {
        assert_eq!(f.name().parse::<ConvectiveForm>().unwrap(), f);
    }
    assert!("upwind".parse::<ConvectiveForm>().is_err());
}

#[test]
fn assembly_independent_of_thread_count() {
    let mesh: Mesh<f64> = build_rect_mesh((0.0, 1.0), (0.0, 1.0), 12, 12).unwrap();
    let s = Arc::new(make_mixed_space(Arc::new(mesh), 2).unwrap());
    let asm = Assembler::new(s.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let u: Vec<f64> = (0..s.size()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| asm.assemble_convective_jacobian(ConvectiveForm::Emac, &u));
    let b = four.install(|| asm.assemble_convective_jacobian(ConvectiveForm::Emac, &u));
    assert_eq!(a.values(), b.values());
}
