use beacon_core::contention::{
    busy_of_tau, run_unsaturated, saturated_tau_of_p, solve_saturated, MacConfig, DEFAULT_MAX_SLOTS,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRID_W: [u32; 5] = [4, 8, 16, 32, 64];
const GRID_N: [f64; 6] = [0.5, 2.0, 5.0, 10.0, 20.0, 40.0];

// Plain bisection on tau - f(1 - exp(-n tau)), written without the library helpers.
fn oracle_tau(n: f64, w: u32) -> f64 {
    let g = |t: f64| {
        let p = 1.0 - (-n * t).exp();
        t - 2.0 * (1.0 - p) / (1.0 - 2.0 * p + w as f64)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn saturated_grid_matches_bisection_oracle() {
    let start = std::time::Instant::now();
    for w in GRID_W {
        for n in GRID_N {
            let s = solve_saturated(n, w).unwrap();
            let resid_tau = (s.tau - saturated_tau_of_p(s.p, w)).abs();
            let resid_p = (s.p - busy_of_tau(s.tau, n)).abs();
            assert!(resid_tau <= 1e-10 && resid_p <= 1e-10, "W={w} n={n}: {resid_tau:e} {resid_p:e}");
            let o = oracle_tau(n, w);
            assert!((s.tau - o).abs() <= 1e-8, "W={w} n={n}: {} vs {o}", s.tau);
        }
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

fn mac(w: u32, chain: &str) -> MacConfig {
    MacConfig { w_ss: w, chain: chain.into(), ..MacConfig::default() }
}

#[test]
fn chain_mass_is_conserved_and_drains() {
    for chain in ["fire-on-zero", "literal"] {
        for w in GRID_W {
            for n in GRID_N {
                let tr = run_unsaturated(n, &mac(w, chain), DEFAULT_MAX_SLOTS).unwrap();
                assert!(!tr.truncated);
                for j in 0..tr.slots() {
                    assert!((tr.mass(j) - 1.0).abs() <= 1e-12, "{chain} W={w} n={n} slot {j}");
                }
                assert!(1.0 - tr.pi_idle.last().unwrap() < 1e-5);
            }
        }
    }
}

// Mean-field particle oracle: 1e5 independent tagged nodes whose busy
// probability each slot comes from the particles' own share at counter 0.
fn particle_starts(n: f64, w: u32, runs: usize, slots: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counter: Vec<Option<u32>> = (0..runs).map(|_| Some(rng.gen_range(0..w))).collect();
    let mut starts = Vec::with_capacity(slots);
    for _ in 0..slots {
        let at_zero = counter.iter().filter(|c| **c == Some(0)).count();
        let p = 1.0 - (-n * at_zero as f64 / runs as f64).exp();
        starts.push(at_zero as f64 / runs as f64);
        for c in counter.iter_mut() {
            *c = match *c {
                Some(0) | None => None,
                Some(k) if rng.gen::<f64>() < p => Some(k),
                Some(k) => Some(k - 1),
            };
        }
    }
    starts
}

#[test]
fn chain_start_law_matches_particle_oracle() {
    let runs = 100_000;
    let tr = run_unsaturated(10.0, &mac(16, "fire-on-zero"), DEFAULT_MAX_SLOTS).unwrap();
    let mc = particle_starts(10.0, 16, runs, tr.slots(), 7);
    let n = runs as f64;
    let z = |t: f64, m: f64| (m - t).abs() / (t * (1.0 - t) / n).sqrt();
    // slots expecting fewer than 20 starts are pooled, the normal bound means
    // nothing at a count of one
    let (mut tail_t, mut tail_m) = (0.0, 0.0);
    for (j, (&t, &m)) in tr.start.iter().zip(&mc).enumerate() {
        if t * n < 20.0 {
            tail_t += t;
            tail_m += m;
            continue;
        }
        assert!(z(t, m) <= 3.0, "slot {j}: chain {t:.5} vs particles {m:.5} ({:.2} sigma)", z(t, m));
    }
    assert!(z(tail_t, tail_m) <= 3.0, "tail {tail_t:.2e} vs {tail_m:.2e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mass_and_idle_are_monotone(n in 0.0f64..60.0, wi in 0usize..5, literal in any::<bool>()) {
        let chain = if literal { "literal" } else { "fire-on-zero" };
        let tr = run_unsaturated(n, &mac(GRID_W[wi], chain), DEFAULT_MAX_SLOTS).unwrap();
        for j in 0..tr.slots() {
            prop_assert!((tr.mass(j) - 1.0).abs() <= 1e-12);
            if j > 0 {
                prop_assert!(tr.pi_idle[j] >= tr.pi_idle[j - 1]);
            }
        }
    }

    #[test]
    fn literal_busy_probability_never_rises(n in 0.0f64..60.0, wi in 0usize..5) {
        let tr = run_unsaturated(n, &mac(GRID_W[wi], "literal"), DEFAULT_MAX_SLOTS).unwrap();
        for pair in tr.p.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-15);
        }
    }

    #[test]
    fn saturated_root_is_unique_and_in_range(n in 0.0f64..100.0, w in 1u32..256) {
        let s = solve_saturated(n, w).unwrap();
        prop_assert!(s.tau > 0.0 && s.tau <= 1.0);
        prop_assert!((s.tau - oracle_tau(n, w)).abs() <= 1e-8);
    }
}
