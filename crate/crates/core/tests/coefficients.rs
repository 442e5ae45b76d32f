use pdmp_fv::quadrature::adaptive_simpson;
use pdmp_fv::{
    build_tcp_model, compute_coefficients, verify_balance, Mesh1D, QuadratureRule, QuadratureSpec,
    TcpVariant,
};
use proptest::prelude::*;

fn spec(rule: QuadratureRule, points: usize, seed: u64) -> QuadratureSpec {
    QuadratureSpec {
        points_per_cell: points,
        rule,
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn balance_and_consistency_on_random_meshes(
        cuts in prop::collection::btree_set(1u32..1999, 1..40),
        tau in 0.005f64..1.0,
        points in 1usize..80,
        random_rule in any::<bool>(),
        seed in any::<u64>(),
        variant in prop::sample::select(TcpVariant::ALL.to_vec()),
    ) {
        let mut edges = vec![0.0];
        edges.extend(cuts.iter().map(|&c| c as f64 / 1000.0));
        edges.push(2.0);
        let mesh = Mesh1D::from_edges(edges).unwrap();
        let last = mesh.volume(mesh.num_cells() - 1);
        let model = build_tcp_model(variant, 2.0, 0.5, last).unwrap();
        let rule = if random_rule { QuadratureRule::FixedSeedUniform } else { QuadratureRule::MidpointComposite };
        let c = compute_coefficients(&model, &mesh, tau, spec(rule, points, seed)).unwrap();
        let max_volume = mesh.volumes().into_iter().fold(0.0, f64::max);
        prop_assert!(verify_balance(&c, &mesh).max_violation <= 1e-13 * max_volume);
        prop_assert!(c.is_nonnegative());
        prop_assert!(c.lambda_consistency() <= 1e-12);
        prop_assert!(c.boundary_excess() <= 1e-12);
        // The translation flow never leaves [0, 2) before reaching the boundary.
        prop_assert!(c.lost_flow().iter().all(|&l| l == 0.0));
    }
}

#[test]
fn lambda_k_matches_independent_quadrature() {
    let model = build_tcp_model(TcpVariant::FiniteWithJump, 2.0, 0.5, 0.1).unwrap();
    let mesh = Mesh1D::uniform(model.domain(), 0.1).unwrap();
    let c = compute_coefficients(&model, &mesh, 0.1, QuadratureSpec::default()).unwrap();
    for k in 0..mesh.num_cells() {
        let (a, b) = mesh.cell(k);
        let exact = adaptive_simpson(|x| model.rate(x), a, b, 1e-14);
        let from_row: f64 = c.lambda_mat().outer_view(k).unwrap().data().iter().sum();
        assert!((c.lambda_vec()[k] - exact).abs() < 1e-12);
        assert!((from_row - exact).abs() < 1e-12);
    }
}

#[test]
fn midpoint_rule_is_bitwise_deterministic() {
    let model = build_tcp_model(TcpVariant::FiniteWithJump, 2.0, 0.5, 0.05).unwrap();
    let mesh = Mesh1D::uniform(model.domain(), 0.05).unwrap();
    let a = compute_coefficients(&model, &mesh, 0.07, QuadratureSpec::default()).unwrap();
    let b = compute_coefficients(&model, &mesh, 0.07, QuadratureSpec::default()).unwrap();
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    a.write_triplets(&mut ta).unwrap();
    b.write_triplets(&mut tb).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn random_rule_depends_only_on_seed() {
    let model = build_tcp_model(TcpVariant::FiniteWithJump, 2.0, 0.5, 0.1).unwrap();
    let mesh = Mesh1D::uniform(model.domain(), 0.1).unwrap();
    let run = |seed| {
        let c = compute_coefficients(
            &model,
            &mesh,
            0.15,
            spec(QuadratureRule::FixedSeedUniform, 32, seed),
        )
        .unwrap();
        let mut out = Vec::new();
        c.write_triplets(&mut out).unwrap();
        out
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}

#[test]
fn equal_step_and_width_give_unit_shift() {
    for variant in TcpVariant::ALL {
        let h = 0.25;
        let model = build_tcp_model(variant, 2.0, 0.5, h).unwrap();
        let mesh = Mesh1D::uniform(model.domain(), h).unwrap();
        let c = compute_coefficients(&model, &mesh, h, QuadratureSpec::default()).unwrap();
        let n = mesh.num_cells();
        for (k, row) in c.v().outer_iterator().enumerate() {
            if k + 1 < n {
                assert_eq!(row.nnz(), 1);
                assert_eq!(row.get(k + 1), Some(&1.0));
            } else {
                assert_eq!(row.nnz(), 0);
                assert_eq!(c.q_vec()[k], 1.0);
            }
        }
    }
}
