use beacon_core::contention::idle_access_slots;
use beacon_core::simulator::sparse_access_delays;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mean(v: &[u32]) -> f64 {
    v.iter().map(|&d| d as f64).sum::<f64>() / v.len() as f64
}

#[test]
fn sparse_arrivals_skip_backoff() {
    for w in [8u32, 16, 32, 64] {
        let mut rng = ChaCha8Rng::seed_from_u64(w as u64);
        let with = sparse_access_delays(5, w, 2, 80, 50_000.0, 200, true, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(w as u64);
        let without = sparse_access_delays(5, w, 2, 80, 50_000.0, 200, false, &mut rng);
        assert!(mean(&with) <= 2.0, "W={w}: {}", mean(&with));
        // AIFS plus a uniform counter on [0, W-1]
        let expect = 2.0 + (w as f64 - 1.0) / 2.0;
        assert!((mean(&without) - expect).abs() < 0.15 * expect, "W={w}: {} vs {expect}", mean(&without));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lone_node_delay_is_exact(seed in any::<u64>(), w in 1u32..128, aifs in 0u32..6, immediate in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // one packet, so the channel is certainly idle when it arrives
        let d = sparse_access_delays(1, w, aifs, 80, 1.0e3, 1, immediate, &mut rng);
        prop_assert_eq!(d.len(), 1);
        if immediate {
            prop_assert_eq!(d[0], 0);
        } else {
            prop_assert!(d[0] >= aifs && d[0] < aifs + w);
        }
    }

    #[test]
    fn idle_access_rule(idle in 0u32..10, aifs in 0u32..6, counter in 0u32..64) {
        prop_assert_eq!(idle_access_slots(idle, aifs, counter, false), aifs + counter);
        prop_assert!(idle_access_slots(idle, aifs, counter, true) <= aifs);
    }
}
