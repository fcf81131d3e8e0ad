use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use vembeam_core::quadrature::GaussLegendre;
use vembeam_core::*;

fn spec(order: usize, length: f64, ei: f64) -> ElementSpec {
    ElementSpec::new(order, length, MaterialParams::new(ei, 1.0, 1.0).unwrap()).unwrap()
}

fn eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

fn deriv(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, &a)| k as f64 * a).collect()
}

/// Element DOFs of `w` with nodal values, slopes and moment integrals taken
/// by high-order quadrature.
fn sampled_dofs(s: &ElementSpec, w: &[f64]) -> DVector<f64> {
    let l = s.length;
    let dw = deriv(w);
    let rule = GaussLegendre::new(12);
    let mut v = vec![eval(w, 0.0), eval(&dw, 0.0), eval(w, l), eval(&dw, l)];
    for j in 0..s.moment_count() {
        let integral: f64 = rule
            .mapped(0.0, l)
            .map(|(x, wt)| wt * x.powi(j as i32) * eval(w, x))
            .sum();
        v.push(integral / l.powi(j as i32 + 1));
    }
    DVector::from_vec(v)
}

#[test]
fn gram_matrix_matches_quadrature() {
    for order in 3..=6 {
        for length in [0.3, 1.0, 2.0] {
            let s = spec(order, length, 1.0);
            let g = build_g(&s).unwrap();
            let rule = GaussLegendre::new(order + 2);
            for j in 2..=order {
                for k in 2..=order {
                    let oracle: f64 = rule
                        .mapped(0.0, length)
                        .map(|(x, w)| {
                            w * (j * (j - 1)) as f64
                                * x.powi(j as i32 - 2)
                                * (k * (k - 1)) as f64
                                * x.powi(k as i32 - 2)
                        })
                        .sum();
                    let got = g[(j - 2, k - 2)];
                    assert!((got - oracle).abs() <= 1e-12 * oracle.abs().max(1.0), "{order} {j} {k}");
                }
            }
            let eig = g.symmetric_eigen().eigenvalues;
            assert!(eig.min() > 0.0);
        }
    }
}

#[test]
fn gram_and_rhs_small_cases() {
    let g = build_g(&spec(3, 2.0, 1.0)).unwrap();
    assert_eq!(g, DMatrix::from_row_slice(2, 2, &[8.0, 24.0, 24.0, 96.0]));
    let r = build_r(&spec(3, 1.0, 1.0)).unwrap();
    assert_eq!(
        r,
        DMatrix::from_row_slice(2, 4, &[0.0, -2.0, 0.0, 2.0, 6.0, 0.0, -6.0, 6.0])
    );
    let r2 = build_r(&spec(3, 2.0, 1.0)).unwrap();
    assert_eq!(
        r2.row(1).iter().copied().collect::<Vec<_>>(),
        vec![6.0, 0.0, -6.0, 12.0]
    );
    assert_eq!(monomial_integral(2.0, 0).unwrap(), 2.0);
    assert_eq!(monomial_integral(1.0, 3).unwrap(), 0.25);
    assert!((monomial_integral(2.0, 2).unwrap() - 8.0 / 3.0).abs() < 1e-15);
    assert!(matches!(monomial_integral(1.0, -1), Err(VemError::NegativePower(-1))));
}

#[test]
fn rhs_equals_curvature_inner_product() {
    // r * dofs(w) must equal integral p'' w'' for any polynomial w of degree <= n
    for order in 3..=6 {
        let s = spec(order, 0.7, 1.0);
        let r = build_r(&s).unwrap();
        let w: Vec<f64> = (0..=order).map(|k| ((k * 37 % 11) as f64 - 5.0) * 0.3).collect();
        let d2w = deriv(&deriv(&w));
        let lhs = &r * sampled_dofs(&s, &w);
        let rule = GaussLegendre::new(order + 2);
        for j in 2..=order {
            let oracle: f64 = rule
                .mapped(0.0, s.length)
                .map(|(x, wt)| wt * (j * (j - 1)) as f64 * x.powi(j as i32 - 2) * eval(&d2w, x))
                .sum();
            assert!(
                (lhs[j - 2] - oracle).abs() < 1e-11 * oracle.abs().max(1.0),
                "{order} {j}"
            );
        }
    }
}

#[test]
fn cubic_projection_and_stiffness() {
    let proj = build_projection(&spec(3, 1.0, 1.0)).unwrap();
    let expected = DMatrix::from_row_slice(2, 4, &[-3.0, -2.0, 3.0, -1.0, 2.0, 1.0, -2.0, 1.0]);
    assert!((&proj.p - expected).abs().max() < 1e-13);
    let k = element_stiffness(&spec(3, 1.0, 1.0)).unwrap();
    let hermite = DMatrix::from_row_slice(
        4,
        4,
        &[12., 6., -12., 6., 6., 4., -6., 2., -12., -6., 12., -6., 6., 2., -6., 4.],
    );
    assert!((&k - &hermite).abs().max() < 1e-10 * 12.0);
    // Hermite matrix EI/L^3 [12, 6L, ...] for other lengths
    for l in [0.25f64, 2.0, 3.5] {
        let k = element_stiffness(&spec(3, l, 2.0)).unwrap();
        let d = [1.0, l, 1.0, l];
        for i in 0..4 {
            for j in 0..4 {
                let oracle = 2.0 / l.powi(3) * d[i] * hermite[(i, j)] * d[j];
                assert!((k[(i, j)] - oracle).abs() <= 1e-10 * oracle.abs().max(1.0));
            }
        }
    }
}

#[test]
fn projection_residual_is_tiny() {
    // the f64 floor eps |G| |P| passes 1e-12 |r| for short high-order elements
    let cubic = [0.005, 0.01, 0.5, 2.0].map(|l| (3, l));
    for (order, length) in cubic
        .into_iter()
        .chain([(4, 0.1), (4, 1.0), (4, 3.0), (5, 0.5), (5, 1.0), (5, 3.0)])
    {
        {
            let p = build_projection(&spec(order, length, 1.0)).unwrap();
            let res = (&p.g * &p.p - &p.r).norm() / p.r.norm();
            assert!(res <= 1e-12, "{order} {length}: {res}");
        }
    }
}

#[test]
fn quartic_rank_and_load_examples() {
    let k = element_stiffness(&spec(4, 1.0, 1.0)).unwrap();
    let eig = k.symmetric_eigen().eigenvalues;
    let big = eig.max();
    assert_eq!(eig.iter().filter(|&&e| e > 1e-10 * big).count(), 3);

    let f = element_load(&spec(4, 2.0, 1.0), &LoadSpec::uniform(5.0)).unwrap();
    assert_eq!(f.as_slice(), &[0.0, 0.0, 0.0, 0.0, 10.0]);
    let zero = LoadSpec {
        distributed: vec![0.0, 0.0],
        nodal: [0.0; 4],
    };
    assert!(element_load(&spec(5, 1.0, 1.0), &zero)
        .unwrap()
        .iter()
        .all(|&v| v == 0.0));
    let point = LoadSpec {
        distributed: vec![],
        nodal: [0.0, 0.0, 3.0, 0.0],
    };
    assert_eq!(
        element_load(&spec(4, 1.0, 1.0), &point).unwrap().as_slice(),
        &[0.0, 0.0, 3.0, 0.0, 0.0]
    );
    assert!(matches!(
        element_load(&spec(3, 1.0, 1.0), &LoadSpec::uniform(1.0)),
        Err(VemError::UnsupportedLoad { .. })
    ));

    let a = axial_stiffness(&ElementSpec::new(4, 2.0, MaterialParams::new(2.0, 1.0, 3.0).unwrap()).unwrap()).unwrap();
    assert_eq!(a, DMatrix::from_row_slice(2, 2, &[3.0, -3.0, -3.0, 3.0]));
}

#[test]
fn condensed_element_is_hermite() {
    // the homogeneous beam solution is cubic, so eliminating the moments of
    // any order leaves the Hermite matrix
    for order in 3..=6 {
        for l in [0.1, 1.0, 3.0] {
            let c = CondensedBending::new(&spec(order, l, 5.0)).unwrap();
            let hermite = element_stiffness(&spec(3, l, 5.0)).unwrap();
            let scale = hermite.abs().max();
            assert!((&c.stiffness - &hermite).abs().max() < 1e-11 * scale, "{order} {l}");
        }
    }
}

fn poly_strategy() -> impl Strategy<Value = (usize, f64, Vec<f64>)> {
    (3usize..=6, 0.2f64..3.0).prop_flat_map(|(n, l)| (Just(n), Just(l), prop::collection::vec(-2.0f64..2.0, n + 1)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_reproduces_polynomials((order, length, w) in poly_strategy()) {
        let s = spec(order, length, 1.0);
        let proj = build_projection(&s).unwrap();
        let a = proj.coefficients(&sampled_dofs(&s, &w));
        for k in 0..=order {
            let tol = 1e-10 * (1.0 + w[k].abs()) / length.powi(k as i32).min(1.0);
            prop_assert!((a[k] - w[k]).abs() <= tol, "k={} {} vs {}", k, a[k], w[k]);
        }
    }

    #[test]
    fn stiffness_symmetric_psd_with_rigid_kernel(order in 3usize..=6, length in 0.2f64..3.0, ei in 0.1f64..10.0) {
        let s = spec(order, length, ei);
        let k = element_stiffness(&s).unwrap();
        let norm = k.norm();
        prop_assert!((&k - k.transpose()).norm() <= 1e-12 * norm);
        let eig = k.clone().symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() >= -1e-9 * eig.max());
        prop_assert_eq!(eig.iter().filter(|&&e| e > 1e-9 * eig.max()).count(), order - 1);
        // rigid translation w = 1 and rotation w = x
        for w in [vec![1.0], vec![0.0, 1.0]] {
            let v = sampled_dofs(&s, &w);
            prop_assert!((&k * &v).norm() <= 1e-9 * norm * v.norm());
        }
    }

    #[test]
    fn load_is_linear(order in 4usize..=6, length in 0.2f64..3.0,
                      q in prop::collection::vec(-5.0f64..5.0, 3),
                      p in prop::collection::vec(-5.0f64..5.0, 3),
                      alpha in -3.0f64..3.0) {
        let s = spec(order, length, 1.0);
        let deg = order - 4;
        let mk = |c: &[f64]| LoadSpec { distributed: c[..=deg].to_vec(), nodal: [c[0], c[1], 0.0, c[2]] };
        let combo: Vec<f64> = q.iter().zip(&p).map(|(a, b)| a + alpha * b).collect();
        let lhs = element_load(&s, &mk(&combo)).unwrap();
        let rhs = element_load(&s, &mk(&q)).unwrap() + element_load(&s, &mk(&p)).unwrap() * alpha;
        prop_assert!((lhs - &rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }
}
