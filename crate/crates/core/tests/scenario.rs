use beacon_core::scenario::{Scenario, ScenarioKind};

fn load(name: &str) -> Scenario {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::load(&path).unwrap()
}

#[test]
fn shipped_scenarios_carry_network_parameters() {
    for name in ["homogeneous.cfg", "traffic_light.cfg"] {
        let s = load(name);
        let m = &s.mac;
        assert_eq!((m.r_s_km, m.r_i_km), (0.2, 0.5), "{name}");
        assert_eq!((m.slot_us, m.payload_bytes, m.data_rate_bps), (16.0, 500.0, 3.0e6));
        assert_eq!((m.cch_ms, m.beacon_hz), (50.0, 10.0));
        assert_eq!(m.cch_slots(), 3125);
        assert_eq!(m.tx_slots(), 80);
        assert!(s.w_ss.iter().all(|w| [4, 8, 16, 32, 64].contains(w)));
    }
}

#[test]
fn traffic_light_is_red_before_evaluation() {
    let s = load("traffic_light.cfg");
    assert_eq!(s.kind, ScenarioKind::Profile);
    assert_eq!(s.lights.len(), 1);
    let l = &s.lights[0];
    assert_eq!(l.position_km, 2.0);
    assert_eq!(l.red, vec![(4.0, 4.5)]);
    assert_eq!(s.eval.time_min, 4.5);
    assert_eq!(s.w_ss, vec![4, 8, 16, 32]);
}

#[test]
fn homogeneous_sweep_covers_reference_rates() {
    let s = load("homogeneous.cfg");
    assert_eq!(s.kind, ScenarioKind::Sweep);
    for r in [2.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0] {
        assert!(s.arrival.sweep.contains(&r));
    }
}

#[test]
fn round_trip_keeps_every_field() {
    let s = load("traffic_light.cfg");
    assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
}
