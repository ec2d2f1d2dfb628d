use approx::assert_relative_eq;
use nalgebra::Matrix3;
use proptest::prelude::*;
use relaxed_damage::damage::{
    condense_beta, damage, damage_antiderivative, incremental_dissipation, incremental_potential, IncrementAnchor,
};
use relaxed_damage::hyperelastic::{d2psi0_df2, dpsi0_df, psi0, psi0_uniaxial, MaterialParams};
use relaxed_damage::Error;

fn nh() -> MaterialParams {
    MaterialParams::neo_hooke(0.0, 0.5, 0.5, 0.99)
}

fn yeoh() -> MaterialParams {
    MaterialParams::yeoh(6.0, 1.0, 900.0, 1.0, 0.99)
}

// Reference values below were evaluated independently with 30-digit
// arithmetic from the closed-form energies and damage law.
const NH_AT_2: f64 = 0.403426409720027345;
const YEOH_AT_1_1: f64 = 0.0761477882844862884;
const DAMAGE_AT_D0: f64 = 0.625799353240272102;
const ANTIDERIVATIVE_AT_D0: f64 = 0.364200646759727898;

#[test]
fn undeformed_state_has_zero_energy() {
    for p in [nh(), yeoh(), MaterialParams::neo_hooke(1.3, 0.7, 1.0, 0.5)] {
        assert_eq!(psi0(&Matrix3::identity(), &p).unwrap(), 0.0);
        assert_eq!(psi0_uniaxial(1.0, &p).unwrap(), 0.0);
    }
}

#[test]
fn neo_hooke_closed_form() {
    let f = Matrix3::from_diagonal(&nalgebra::Vector3::new(2.0, 1.0, 1.0));
    assert_relative_eq!(psi0(&f, &nh()).unwrap(), NH_AT_2, max_relative = 1e-14);
    assert_relative_eq!(psi0_uniaxial(2.0, &nh()).unwrap(), NH_AT_2, max_relative = 1e-14);
}

#[test]
fn yeoh_symbolic_value() {
    let f = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.1, 1.0, 1.0));
    assert_relative_eq!(psi0(&f, &yeoh()).unwrap(), YEOH_AT_1_1, max_relative = 1e-12);
    assert_relative_eq!(psi0_uniaxial(1.1, &yeoh()).unwrap(), YEOH_AT_1_1, max_relative = 1e-12);
}

#[test]
fn uniaxial_stress_oracle() {
    assert_eq!(dpsi0_df(1.0, &nh()).unwrap(), 0.0);
    assert_relative_eq!(dpsi0_df(2.0, &nh()).unwrap(), 0.5 * (2.0 - 0.5), max_relative = 1e-14);
}

#[test]
fn non_positive_stretch_is_rejected() {
    for f in [0.0, -1.0] {
        assert!(matches!(psi0_uniaxial(f, &nh()), Err(Error::InvalidDeformation(_))));
        assert!(dpsi0_df(f, &yeoh()).is_err());
    }
    let mut inverted = Matrix3::identity();
    inverted[(0, 0)] = -1.0;
    assert!(matches!(psi0(&inverted, &nh()), Err(Error::InvalidDeformation(_))));
}

#[test]
fn damage_closed_form() {
    assert_eq!(damage(0.0, &nh()).unwrap(), 0.0);
    assert_relative_eq!(damage(0.5, &nh()).unwrap(), DAMAGE_AT_D0, max_relative = 1e-14);
    assert!(damage(50.0 * 0.5, &nh()).unwrap() > 0.9999 * 0.99);
    assert!(matches!(damage(-1e-3, &nh()), Err(Error::Domain(_))));
}

#[test]
fn antiderivative_closed_form() {
    let p = MaterialParams::neo_hooke(0.0, 0.5, 1.0, 0.99);
    assert_eq!(damage_antiderivative(0.0, &p).unwrap(), 0.0);
    assert_relative_eq!(damage_antiderivative(1.0, &p).unwrap(), ANTIDERIVATIVE_AT_D0, max_relative = 1e-14);
    assert!(damage_antiderivative(-1.0, &p).is_err());
}

#[test]
fn antiderivative_slope_is_damage() {
    let h = 1e-6;
    let fd = (damage_antiderivative(0.5 + h, &nh()).unwrap() - damage_antiderivative(0.5 - h, &nh()).unwrap()) / (2.0 * h);
    assert_relative_eq!(fd, DAMAGE_AT_D0, max_relative = 1e-8);
}

#[test]
fn internal_variable_is_a_running_maximum() {
    assert_eq!(condense_beta(1.2, 5.0, &nh()).unwrap(), 5.0);
    assert_eq!(condense_beta(1.0, 0.3, &nh()).unwrap(), 0.3);
    assert_relative_eq!(condense_beta(2.0, 0.0, &nh()).unwrap(), NH_AT_2, max_relative = 1e-14);
    assert!(condense_beta(2.0, -1.0, &nh()).is_err());
}

#[test]
fn potential_vanishes_at_the_anchor() {
    for (f, beta) in [(1.0, 0.0f64), (1.7, 0.3), (2.5, 1.5)] {
        let beta = beta.max(psi0_uniaxial(f, &nh()).unwrap());
        let anchor = IncrementAnchor::new(f, beta, &nh()).unwrap();
        assert!(incremental_potential(f, &anchor, &nh()).unwrap().abs() < 1e-14);
    }
}

#[test]
fn virgin_potential_has_one_nonconvex_zone() {
    let anchor = IncrementAnchor::virgin(&nh());
    let h = 1e-3;
    let w = |f: f64| incremental_potential(f, &anchor, &nh()).unwrap();
    let mut sign_changes = 0;
    let mut last = None;
    let mut f = 1.0 + h;
    while f < 20.0 - h {
        let c = (w(f + h) - 2.0 * w(f) + w(f - h)) / (h * h) > 0.0;
        if last.is_some_and(|l| l != c) {
            sign_changes += 1;
        }
        last = Some(c);
        f += 0.01;
    }
    assert_eq!(sign_changes, 2, "expected one convex-concave-convex pattern");
}

#[test]
fn dissipation_of_damage_growth_is_positive() {
    assert!(incremental_dissipation(0.4, 0.6, 0.5) > 0.0);
    assert_eq!(incremental_dissipation(0.4, 0.5, 0.5), 0.0);
}

fn params() -> impl Strategy<Value = MaterialParams> {
    prop_oneof![
        (0.0..2.0f64, 0.1..2.0f64, 0.1..2.0f64, 0.1..0.99f64).prop_map(|(l, m, d0, di)| MaterialParams::neo_hooke(l, m, d0, di)),
        (0.1..10.0f64, 0.0..5.0f64, 0.0..1000.0f64, 0.1..2.0f64, 0.1..0.99f64)
            .prop_map(|(a, b, c, d0, di)| MaterialParams::yeoh(a, b, c, d0, di)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn uniaxial_derivatives_match_finite_differences(p in params(), f in 0.8..5.0f64) {
        let h = 1e-6 * f;
        let fd1 = (psi0_uniaxial(f + h, &p).unwrap() - psi0_uniaxial(f - h, &p).unwrap()) / (2.0 * h);
        let fd2 = (dpsi0_df(f + h, &p).unwrap() - dpsi0_df(f - h, &p).unwrap()) / (2.0 * h);
        let d1 = dpsi0_df(f, &p).unwrap();
        let d2 = d2psi0_df2(f, &p).unwrap();
        prop_assert!((fd1 - d1).abs() <= 1e-6 * (1.0 + d1.abs()), "{fd1} vs {d1}");
        prop_assert!((fd2 - d2).abs() <= 1e-6 * (1.0 + d2.abs()), "{fd2} vs {d2}");
    }

    #[test]
    fn frozen_internal_variable_gives_scaled_stress(p in params(), beta_k in 0.5..5.0f64, f in 0.95..1.3f64) {
        prop_assume!(psi0_uniaxial(f, &p).unwrap() < beta_k * 0.9);
        let anchor = IncrementAnchor::new(1.0, beta_k, &p).unwrap();
        let h = 1e-6;
        let fd = (incremental_potential(f + h, &anchor, &p).unwrap() - incremental_potential(f - h, &anchor, &p).unwrap()) / (2.0 * h);
        let exact = (1.0 - damage(beta_k, &p).unwrap()) * dpsi0_df(f, &p).unwrap();
        prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()));
    }

    #[test]
    fn damage_is_bounded_and_monotone(p in params(), a in 0.0..50.0f64, b in 0.0..50.0f64) {
        let (lo, hi) = (a.min(b), a.max(b));
        let (dl, dh) = (damage(lo, &p).unwrap(), damage(hi, &p).unwrap());
        prop_assert!(0.0 <= dl && dl <= dh && dh <= p.dinf);
    }
}
