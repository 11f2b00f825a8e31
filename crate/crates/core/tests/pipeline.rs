//! End-to-end paths through the public API.

use equidist_core::constants::{bound_evaluate, explicit_ledger, AssumptionParams, NormGrowth};
use equidist_core::geometry::{select_direction, tuple_stats, ConeDomain, Direction, ExpFloor, RootAction, TranslationTuple};
use equidist_core::modular::{correlation, fit_decay, horocycle_stats, BumpProfile, HorocycleMeasure, ModularObservable};
use equidist_core::selection::choose_window;

fn power_law() -> AssumptionParams {
    AssumptionParams {
        base_degree: 1,
        eq1_constant: 1.0,
        eq1_exponent: 1.0,
        mixing_constant: 1.0,
        mixing_exponent: 0.4,
        holder_constant: 1.0,
        holder_exponent: 1.0,
        growth: NormGrowth::PowerLaw {
            l1: 1.0,
            ell: 1.0,
            l2: 1.0,
        },
    }
}

#[test]
fn tuple_to_window() {
    let action = RootAction::horospherical(2, 1);
    let domain = ConeDomain::Horospherical { m: 2, n: 1 };
    let tuple = TranslationTuple::new(vec![vec![3.0, 3.0, 6.0], vec![5.0, 6.0, 11.0], vec![12.0, 10.0, 22.0]], domain).unwrap();
    let stats = tuple_stats(&action, &tuple, &ExpFloor).unwrap();
    assert!(stats.delta_r.ln() > 0.0);
    let Direction::Selected(selection) = select_direction(&action, &tuple).unwrap() else {
        panic!("separated tuple must select a direction");
    };
    // θ = M^{-1/2} sits inside [M^{-1}, 1).
    let theta = (-0.5 * selection.max_separation.ln()).exp();
    let window = choose_window(&selection, theta).unwrap();
    assert!(window.checks.all_ok());
    assert!(window.p >= 1 && window.p < 3);
}

#[test]
fn measured_error_against_the_bound() {
    let ledger = explicit_ledger(&power_law(), 2).unwrap();
    let profile = BumpProfile::smooth(2.0, 3.0).unwrap();
    let obs = ModularObservable::Eisenstein { profile };
    let mu = obs.mean().unwrap();
    let haar = HorocycleMeasure::haar();
    let s_norm = profile.derivative_norm(ledger.row(1).unwrap().d_r, 2000);
    let mut deltas = Vec::new();
    let mut errors = Vec::new();
    for t in [3.0, 4.0, 5.0, 6.0] {
        let err = (correlation(&haar, &[obs], &[t], 1 << 14).unwrap().value - mu).norm();
        let delta = horocycle_stats(&[t]).unwrap().delta_r;
        let bound = bound_evaluate(&ledger, 1, delta, haar.wiener_norm(), &[s_norm]).unwrap();
        assert!(bound.bound >= err, "t = {t}: bound {} < error {err}", bound.bound);
        deltas.push(delta.value());
        errors.push(err);
    }
    assert!(fit_decay(&deltas, &errors).unwrap().exponent > 0.0);
}
