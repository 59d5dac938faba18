use egra_core::{
    generate, EquilibriumInstance, GeneratorSpec, Matrix, Polyhedron, ProblemError, Vector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn v(x: &[f64]) -> Vector {
    Vector::from_row_slice(x)
}

fn unit_box(m: usize) -> Polyhedron {
    Polyhedron::from_box(&vec![-1.0; m], &vec![1.0; m]).unwrap()
}

#[test]
fn hand_evaluations() {
    let inst = EquilibriumInstance::new(
        Matrix::zeros(2, 2),
        Matrix::zeros(2, 2),
        v(&[1.0, 1.0]),
        unit_box(2),
    )
    .unwrap();
    assert_eq!(
        inst.bifunction_eval(&v(&[0.0, 0.0]), &v(&[1.0, 2.0]))
            .unwrap(),
        3.0
    );

    // Px + Qy + q = (3, 0), y - x = (-1, 1)
    let inst = EquilibriumInstance::new(
        Matrix::identity(2, 2) * 2.0,
        Matrix::identity(2, 2),
        v(&[1.0, -1.0]),
        unit_box(2),
    )
    .unwrap();
    assert_eq!(
        inst.bifunction_eval(&v(&[1.0, 0.0]), &v(&[0.0, 1.0]))
            .unwrap(),
        -3.0
    );
}

#[test]
fn hand_gradients() {
    let inst = EquilibriumInstance::new(
        Matrix::identity(2, 2),
        Matrix::identity(2, 2),
        Vector::zeros(2),
        unit_box(2),
    )
    .unwrap();
    let g = inst
        .bifunction_grad_y(&v(&[1.0, 1.0]), &v(&[1.0, 1.0]))
        .unwrap();
    assert_eq!(g, v(&[2.0, 2.0]));

    let p = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
    let inst =
        EquilibriumInstance::new(p.clone(), Matrix::zeros(2, 2), v(&[0.5, -1.0]), unit_box(2))
            .unwrap();
    let x = v(&[0.3, -0.7]);
    let expected = &p * &x + v(&[0.5, -1.0]);
    for y in [v(&[0.0, 0.0]), v(&[5.0, -3.0])] {
        assert_eq!(inst.bifunction_grad_y(&x, &y).unwrap(), expected);
    }
}

#[test]
fn dimension_mismatch_is_an_argument_error() {
    let inst = generate(&GeneratorSpec::new(3, 0)).unwrap();
    let err = inst
        .bifunction_eval(&Vector::zeros(2), &Vector::zeros(3))
        .unwrap_err();
    assert!(matches!(err, ProblemError::Dimension { .. }));
    assert!(inst
        .bifunction_grad_y(&Vector::zeros(3), &Vector::zeros(4))
        .is_err());
}

#[test]
fn vanishes_on_the_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for seed in 0..20 {
        let inst = generate(&GeneratorSpec::new(8, seed)).unwrap();
        for _ in 0..20 {
            let x = gaussian_vector(&mut rng, 8) * 10.0;
            let f = inst.bifunction_eval(&x, &x).unwrap();
            assert!(f.abs() <= 1e-12 * (1.0 + x.norm_squared()));
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-6;
    for trial in 0..100 {
        let inst = generate(&GeneratorSpec::new(5, trial)).unwrap();
        let x = gaussian_vector(&mut rng, 5);
        let y = gaussian_vector(&mut rng, 5);
        let g = inst.bifunction_grad_y(&x, &y).unwrap();
        for j in 0..5 {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[j] += h;
            ym[j] -= h;
            let fd = (inst.bifunction_eval(&x, &yp).unwrap()
                - inst.bifunction_eval(&x, &ym).unwrap())
                / (2.0 * h);
            assert!(
                (fd - g[j]).abs() <= 1e-5 * (1.0 + g[j].abs()),
                "component {j}: {fd} vs {}",
                g[j]
            );
        }
    }
}

#[test]
fn antisymmetry_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..50 {
        let inst = generate(&GeneratorSpec::new(6, seed)).unwrap();
        let x = gaussian_vector(&mut rng, 6) * 3.0;
        let y = gaussian_vector(&mut rng, 6) * 3.0;
        let d = &y - &x;
        let rhs = -(d.transpose() * (inst.p() - inst.q_matrix()) * &d)[0];
        let lhs = inst.bifunction_eval(&x, &y).unwrap() + inst.bifunction_eval(&y, &x).unwrap();
        assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }
}

#[test]
fn lipschitz_constants_hand_case() {
    let inst = EquilibriumInstance::new(
        Matrix::identity(2, 2) * 2.0,
        Matrix::identity(2, 2),
        Vector::zeros(2),
        unit_box(2),
    )
    .unwrap();
    let (c1, c2) = inst.lipschitz_constants();
    assert!((c1 - 0.5).abs() < 1e-12 && (c2 - 0.5).abs() < 1e-12);

    // Sampled ratio (f(x,y) + f(y,z) - f(x,z)) / (||x-y||² + ||y-z||²) never exceeds 0.5,
    // checked with the sign convention of the inequality: -ratio <= c.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let x = gaussian_vector(&mut rng, 2);
        let y = gaussian_vector(&mut rng, 2);
        let z = gaussian_vector(&mut rng, 2);
        let lhs = inst.bifunction_eval(&x, &y).unwrap() + inst.bifunction_eval(&y, &z).unwrap()
            - inst.bifunction_eval(&x, &z).unwrap();
        let ratio = -lhs / ((&x - &y).norm_squared() + (&y - &z).norm_squared());
        worst = worst.max(ratio);
    }
    assert!(worst <= 0.5 + 1e-8, "{worst}");
    assert!(
        worst > 0.4,
        "sampling should get close to the bound, got {worst}"
    );

    let same = EquilibriumInstance::new(
        Matrix::identity(2, 2),
        Matrix::identity(2, 2),
        Vector::zeros(2),
        unit_box(2),
    )
    .unwrap();
    assert_eq!(same.lipschitz_constants(), (0.0, 0.0));
}

#[test]
fn lipschitz_certificate_on_generated_instances() {
    for seed in 0..3 {
        let inst = generate(&GeneratorSpec::new(10, seed)).unwrap();
        assert_eq!(
            inst.certify_lipschitz(10_000, seed).unwrap(),
            inst.lipschitz_constants()
        );
    }
}

#[test]
fn monotonicity_reports() {
    // P - Q = I
    let inst = EquilibriumInstance::new(
        Matrix::identity(3, 3) * 2.0,
        Matrix::identity(3, 3),
        Vector::zeros(3),
        unit_box(3),
    )
    .unwrap();
    let r = inst.check_monotonicity(500, 0).unwrap();
    assert!((r.strongly_monotone_gamma.unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(
        (
            r.monotone_violations,
            r.pseudomonotone_violations,
            r.lipschitz_violations
        ),
        (0, 0, 0)
    );

    let inst = EquilibriumInstance::new(
        Matrix::identity(3, 3),
        Matrix::identity(3, 3),
        Vector::zeros(3),
        unit_box(3),
    )
    .unwrap();
    let r = inst.check_monotonicity(500, 0).unwrap();
    assert_eq!(r.strongly_monotone_gamma, None);
    assert_eq!(r.monotone_violations, 0);

    for seed in 0..5 {
        let inst = generate(&GeneratorSpec::new(10, seed)).unwrap();
        let r = inst.check_monotonicity(300, seed).unwrap();
        assert_eq!(r.pseudomonotone_violations, 0);
        assert_eq!(r.lipschitz_c1, r.lipschitz_c2);
        assert!(r.monotone_violations <= r.samples_tested);
    }
    assert!(inst_with_zero_samples().is_err());
}

fn inst_with_zero_samples() -> Result<egra_core::MonotonicityReport, ProblemError> {
    generate(&GeneratorSpec::new(2, 0))
        .unwrap()
        .check_monotonicity(0, 0)
}

#[test]
fn validation_names_the_offending_eigenvalue() {
    let bad_q = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
    let err =
        EquilibriumInstance::new(bad_q.clone(), bad_q, Vector::zeros(2), unit_box(2)).unwrap_err();
    match err {
        ProblemError::NotPositiveSemidefinite { eigenvalue, .. } => {
            assert!((eigenvalue + 0.5).abs() < 1e-12)
        }
        other => panic!("unexpected {other:?}"),
    }
    // Q - P = I is not negative semidefinite
    let err = EquilibriumInstance::new(
        Matrix::zeros(2, 2),
        Matrix::identity(2, 2),
        Vector::zeros(2),
        unit_box(2),
    )
    .unwrap_err();
    assert!(matches!(err, ProblemError::NotNegativeSemidefinite { .. }));
    let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
    let err =
        EquilibriumInstance::new(asym.clone(), asym, Vector::zeros(2), unit_box(2)).unwrap_err();
    assert!(matches!(err, ProblemError::Asymmetric { .. }));
}

#[test]
fn polyhedron_rejects_infeasible_interior_point() {
    let a = Matrix::from_row_slice(1, 1, &[1.0]);
    assert!(Polyhedron::new(a.clone(), v(&[0.0]), v(&[1.0])).is_err());
    assert!(Polyhedron::new(Matrix::zeros(0, 1), Vector::zeros(0), v(&[1.0])).is_err());
    let c = Polyhedron::from_inequalities(a, v(&[2.0])).unwrap();
    assert!(c.contains(c.interior_point(), 0.0));
}

#[test]
fn json_round_trip_is_bit_exact() {
    let spec = GeneratorSpec::new(7, 42);
    let inst = generate(&spec).unwrap();
    let text = inst.to_json(Some(&spec)).unwrap();
    let (back, provenance) = EquilibriumInstance::from_json(&text).unwrap();
    assert_eq!(back, inst);
    assert_eq!(provenance, Some(spec.clone()));
    assert_eq!(back.to_json(Some(&spec)).unwrap(), text);

    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in [
        "dim",
        "P",
        "Q",
        "q",
        "A",
        "b",
        "interior_point",
        "generator_spec",
    ] {
        assert!(value.get(key).is_some(), "missing key {key}");
    }
}

#[test]
fn malformed_json_is_rejected() {
    assert!(matches!(
        EquilibriumInstance::from_json("{\"dim\": 2"),
        Err(ProblemError::Json(_))
    ));
    let inst = generate(&GeneratorSpec::new(2, 0)).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&inst.to_json(None).unwrap()).unwrap();
    value["dim"] = 3.into();
    assert!(EquilibriumInstance::from_json(&value.to_string()).is_err());
}

#[test]
fn sampled_points_are_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let inst = generate(&GeneratorSpec::new(10, 1)).unwrap();
    for _ in 0..200 {
        let x = inst.feasible().sample_point(&mut rng).unwrap();
        assert!(inst.feasible().max_violation(&x) <= 1e-9);
    }
}
