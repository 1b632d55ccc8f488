use bernflow::flow::Init;
use bernflow::{FlowConfig, FlowModel, Interval, PriorKind, Scheme, TargetDiffeo};
use proptest::prelude::*;

fn scheme(reciprocal: bool) -> Scheme {
    if reciprocal {
        Scheme::ReciprocalSquare
    } else {
        Scheme::CumulativePositive
    }
}

fn random_model(d: usize, n: usize, layers: usize, reciprocal: bool, seed: u64) -> FlowModel {
    FlowConfig {
        dimension: d,
        degree: n,
        layers,
        scheme: scheme(reciprocal),
        hidden: vec![8],
        alternate_order: true,
        init: Init::Random { seed },
        ..FlowConfig::default()
    }
    .build(TargetDiffeo::identity(d))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_undoes_forward_and_logdets_cancel(
        d in 1usize..=4,
        n in 2usize..=15,
        layers in 1usize..=3,
        reciprocal: bool,
        seed in 0u64..1000,
        u in prop::collection::vec(0.05f64..0.95, 4),
    ) {
        let model = random_model(d, n, layers, reciprocal, seed);
        let z = &u[..d];
        let (x, fwd) = model.forward(z).unwrap();
        let (back, inv) = model.inverse(&x).unwrap();
        for (a, b) in back.iter().zip(z) {
            prop_assert!((a - b).abs() <= 1e-8, "{back:?} vs {z:?}");
        }
        prop_assert!((fwd + inv).abs() <= 1e-8, "{fwd} + {inv}");
    }

    #[test]
    fn forward_stays_in_the_target_box(
        d in 1usize..=3,
        n in 2usize..=12,
        seed in 0u64..1000,
        u in prop::collection::vec(0.0f64..=1.0, 3),
    ) {
        let lo = -3.0;
        let hi = 7.5;
        let diffeo = TargetDiffeo::affine_from_unit(vec![Interval::new(lo, hi).unwrap(); d]);
        let model = FlowConfig {
            dimension: d,
            degree: n,
            layers: 2,
            hidden: vec![8],
            init: Init::Random { seed },
            ..FlowConfig::default()
        }
        .build(diffeo)
        .unwrap();
        let (x, _) = model.forward(&u[..d]).unwrap();
        prop_assert!(x.iter().all(|v| (lo..=hi).contains(v)), "{x:?}");
    }

    #[test]
    fn later_outputs_never_move_earlier_ones_in_one_layer(
        n in 2usize..=10,
        seed in 0u64..1000,
        z in prop::collection::vec(0.05f64..0.95, 3),
        bump in 1e-3f64..0.04,
    ) {
        let model = random_model(3, n, 1, false, seed);
        let (x, _) = model.forward(&z).unwrap();
        let mut moved = z.clone();
        moved[2] += bump;
        let (y, _) = model.forward(&moved).unwrap();
        prop_assert_eq!(x[0], y[0]);
        prop_assert_eq!(x[1], y[1]);
    }
}

#[test]
fn one_dimensional_densities_integrate_to_one() {
    for seed in 0..6 {
        for prior in [PriorKind::default(), PriorKind::UniformUnit, PriorKind::SquashedNormal] {
            let model = FlowConfig {
                degree: 12,
                layers: 2,
                prior,
                hidden: vec![4],
                init: Init::Random { seed },
                ..FlowConfig::default()
            }
            .build(TargetDiffeo::affine_from_unit(vec![Interval::new(-1.0, 2.0).unwrap()]))
            .unwrap();
            let cells = 20_000;
            let width = 3.0 / cells as f64;
            let mass: f64 = (0..cells)
                .map(|i| model.log_density(&[-1.0 + (i as f64 + 0.5) * width]).unwrap().exp() * width)
                .sum();
            assert!((mass - 1.0).abs() < 1e-3, "seed {seed} prior {prior:?}: {mass}");
        }
    }
}

#[test]
fn checkpoints_reload_bitwise() {
    let model = random_model(3, 9, 3, true, 17);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let back = FlowModel::load(&path).unwrap();
    assert_eq!(back.params_flat(), model.params_flat());
    let x = model.sample(20, 3).unwrap();
    assert_eq!(
        back.log_density_batch(x.view()).unwrap(),
        model.log_density_batch(x.view()).unwrap()
    );
}

#[test]
fn samples_are_seeded_and_inside_the_support() {
    let model = random_model(2, 7, 2, false, 4);
    let a = model.sample(200, 11).unwrap();
    assert_eq!(a, model.sample(200, 11).unwrap());
    assert_ne!(a, model.sample(200, 12).unwrap());
    assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn identity_initialisation_is_the_identity_map() {
    let model = FlowConfig {
        dimension: 3,
        degree: 10,
        layers: 3,
        alternate_order: true,
        ..FlowConfig::default()
    }
    .build(TargetDiffeo::identity(3))
    .unwrap();
    let z = [0.1, 0.45, 0.93];
    let (x, logdet) = model.forward(&z).unwrap();
    for (a, b) in x.iter().zip(&z) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(logdet.abs() < 1e-10);
}
