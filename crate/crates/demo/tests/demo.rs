use shuffle_vr_demo::{convex_envelope_data, ordering_race_data, rho_profile_data};

#[test]
fn rho_profile_matches_the_planted_ratio() {
    let r = rho_profile_data(200, 5, 0.1, 3).unwrap();
    assert_eq!(r.scores.len(), 200);
    assert!((r.rho - 1.0 / 180.0).abs() <= 1e-3 / 180.0, "{}", r.rho);
    assert!((r.rho - r.rho_planted).abs() <= 1e-6 * r.rho_planted);
    // the leading scores decay geometrically
    assert!((r.scores[1] / r.scores[0] - 0.1).abs() < 1e-6);
}

#[test]
fn optimal_order_leads_the_race() {
    let race = ordering_race_data(60, 5, 0.5, 0.5, 15, 1).unwrap();
    let last = |i: usize| *race.series[i].value.last().unwrap();
    assert_eq!(race.series[0].label, "optimal cyclic");
    assert_eq!(race.series[0].epoch.len(), 16);
    for i in 1..race.series.len() {
        assert!(last(0) <= last(i), "{} beats the optimal order", race.series[i].label);
    }
}

#[test]
fn residual_stays_under_its_envelope() {
    let e = convex_envelope_data(20, 6, 0.5, 60, 2).unwrap();
    assert_eq!(e.residual.value.len(), e.bound.value.len());
    for (r, b) in e.residual.value.iter().zip(&e.bound.value) {
        assert!(r <= b, "{r} > {b}");
    }
}

#[test]
fn rejects_oversized_requests() {
    assert!(rho_profile_data(5000, 5, 0.1, 0).is_err());
    assert!(ordering_race_data(10, 5, 0.1, 0.5, 10_000, 0).is_err());
    assert!(convex_envelope_data(10, 3, 1.0, 10, 0).is_err());
}

#[test]
fn output_serializes() {
    let json = serde_json::to_string(&convex_envelope_data(5, 3, 0.5, 3, 0).unwrap()).unwrap();
    assert!(json.starts_with("{\"residual\":{\"label\":\"residual\""));
}
