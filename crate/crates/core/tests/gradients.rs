//! Analytic gradients against central finite differences.

mod common;

use cfik::kin::{Dim, Pose};
use cfik::net::{frame_feature, Activation};
use cfik::presets;
use common::{check_network, check_objective};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn objective_gradients_planar(seed in 0u64..1_000_000) {
        let (t, a) = check_objective(&presets::flat_arm5(), seed);
        prop_assert!(t < 1e-4, "grad_total rel err {t}");
        prop_assert!(a < 1e-4, "grad_aux rel err {a}");
    }

    #[test]
    fn objective_gradients_spatial(seed in 0u64..1_000_000) {
        let (t, a) = check_objective(&presets::spatial_arm7(), seed);
        prop_assert!(t < 1e-4, "grad_total rel err {t}");
        prop_assert!(a < 1e-4, "grad_aux rel err {a}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn network_parameter_gradients(seed in 0u64..1_000_000, tanh in any::<bool>()) {
        let act = if tanh { Activation::Tanh } else { Activation::Silu };
        let e = check_network(seed, act);
        prop_assert!(e < 1e-4, "network gradient rel err {e}");
    }
}

#[test]
fn frame_feature_is_orthonormal() {
    let p = Pose::from_xyz_rpy([0.1, 0.2, 0.3], [0.4, -0.5, 0.6]);
    let f = frame_feature(Dim::Spatial, &p);
    let r = nalgebra::Matrix3::from_row_slice(&f.0[3..]);
    assert!((r * r.transpose() - nalgebra::Matrix3::identity()).amax() < 1e-12);
}

