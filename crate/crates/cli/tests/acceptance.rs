//! Acceptance suite: one PASS/FAIL line per criterion, sub-checks indented
//! below it. Exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use beacon_cli::{run_manifest, CheckLine, Pipeline, RunManifest, RunOutcome};
use beacon_core::contention::{
    busy_of_tau, run_unsaturated, saturated_tau_of_p, solve_saturated, MacConfig, DEFAULT_MAX_SLOTS,
};
use beacon_core::performance::{
    capture_free_region, coordinated_estimate, evaluate_locations, CaptureInterference, ExactTau, LinearInterference,
};
use beacon_core::simulator::sparse_access_delays;
use beacon_core::traffic_model::{solve_density, ArrivalProcess, GridSpec, VelocityProfile};
use beacon_core::validation::ks_statistic;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    id: u32,
    title: &'static str,
    lines: Vec<(bool, String)>,
}

impl Verdict {
    fn new(id: u32, title: &'static str) -> Self {
        Self { id, title, lines: Vec::new() }
    }

    fn check(&mut self, pass: bool, detail: impl Into<String>) {
        self.lines.push((pass, detail.into()));
    }

    fn take(&mut self, checks: &[CheckLine], keep: impl Fn(&str) -> bool) {
        let before = self.lines.len();
        for c in checks.iter().filter(|c| keep(&c.name)) {
            self.check(c.pass, format!("{}: {}", c.name, c.detail));
        }
        if self.lines.len() == before {
            self.check(false, "no matching checks were produced");
        }
    }

    fn pass(&self) -> bool {
        !self.lines.is_empty() && self.lines.iter().all(|l| l.0)
    }
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(pipeline: Pipeline, scenario_file: &str, out: &Path) -> (RunOutcome, f64) {
    let mut m = RunManifest::new(pipeline, Some(scenario(scenario_file)), out.to_path_buf());
    m.check = true;
    let t = Instant::now();
    let o = run_manifest(&m).unwrap_or_else(|e| panic!("{} on {scenario_file}: {e}", pipeline.name()));
    (o, t.elapsed().as_secs_f64())
}

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

fn c1() -> Verdict {
    let mut v = Verdict::new(1, "saturated fixed point");
    let t = Instant::now();
    let (mut resid, mut diff): (f64, f64) = (0.0, 0.0);
    for w in [4u32, 8, 16, 32, 64] {
        for n in [0.5, 2.0, 5.0, 10.0, 20.0, 40.0] {
            match solve_saturated(n, w) {
                Ok(s) => {
                    resid =
                        resid.max((s.tau - saturated_tau_of_p(s.p, w)).abs()).max((s.p - busy_of_tau(s.tau, n)).abs());
                    diff = diff.max((s.tau - oracle_tau(n, w)).abs());
                }
                Err(e) => v.check(false, format!("W={w} n={n}: {e}")),
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    v.check(resid <= 1e-10, format!("max residual {resid:.1e} (<= 1e-10)"));
    v.check(diff <= 1e-8, format!("max gap to bisection oracle {diff:.1e} (<= 1e-8)"));
    v.check(secs < 1.0, format!("{secs:.3} s for 30 cells"));
    v
}

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

fn c2() -> Verdict {
    let mut v = Verdict::new(2, "unsaturated chain");
    let t = Instant::now();
    let mut mass_err: f64 = 0.0;
    let mut idle_gap: f64 = 0.0;
    for w in [4u32, 16, 64] {
        for n in [1.0, 10.0, 40.0] {
            let mac = MacConfig { w_ss: w, ..MacConfig::default() };
            let tr = run_unsaturated(n, &mac, DEFAULT_MAX_SLOTS).expect("chain");
            mass_err = (0..tr.slots()).map(|j| (tr.mass(j) - 1.0).abs()).fold(mass_err, f64::max);
            idle_gap = idle_gap.max(1.0 - tr.pi_idle.last().copied().unwrap_or(0.0));
        }
    }
    v.check(mass_err <= 1e-12, format!("max |mass - 1| {mass_err:.1e}"));
    v.check(idle_gap < 1e-5, format!("final 1 - pi_idle {idle_gap:.1e}"));

    let runs = 100_000;
    let tr = run_unsaturated(10.0, &MacConfig::default(), DEFAULT_MAX_SLOTS).expect("chain");
    let mc = particle_starts(10.0, 16, runs, tr.slots(), 7);
    let n = runs as f64;
    let z = |t: f64, m: f64| (m - t).abs() / (t * (1.0 - t) / n).sqrt();
    let (mut worst, mut at) = (0.0f64, 0usize);
    let (mut tail_t, mut tail_m) = (0.0, 0.0);
    for (j, (&t, &m)) in tr.start.iter().zip(&mc).enumerate() {
        // slots expecting under 20 starts are pooled into one tail cell
        if t * n < 20.0 {
            tail_t += t;
            tail_m += m;
        } else if z(t, m) > worst {
            (worst, at) = (z(t, m), j + 1);
        }
    }
    let tail_z = if tail_t > 0.0 { z(tail_t, tail_m) } else { 0.0 };
    v.check(
        worst <= 3.0 && tail_z <= 3.0,
        format!("W=16 n=10, 1e5 runs: worst slot {at} at {worst:.2} sigma, pooled tail {tail_z:.2} sigma"),
    );
    let secs = t.elapsed().as_secs_f64();
    v.check(secs < 120.0, format!("{secs:.2} s"));
    v
}

fn c7(hom: &RunOutcome) -> Verdict {
    let mut v = Verdict::new(7, "K-S reproduction");
    v.take(&hom.checks, |n| n.contains("K-S decisions"));
    let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&y| y <= x).count() as f64 / s.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    for _ in 0..50 {
        let a: Vec<f64> = (0..rng.gen_range(2..30)).map(|_| (rng.gen::<f64>() * 10.0).round() / 2.0).collect();
        let b: Vec<f64> = (0..rng.gen_range(2..30)).map(|_| (rng.gen::<f64>() * 12.0).round() / 2.0).collect();
        let brute = a.iter().chain(&b).map(|&x| (ecdf(&a, x) - ecdf(&b, x)).abs()).fold(0.0, f64::max);
        if ks_statistic(&a, &b) != brute {
            mismatches += 1;
        }
    }
    v.check(
        mismatches == 0,
        format!("statistic equals brute-force ECDF gap on 50 random pairs ({mismatches} mismatches)"),
    );
    v
}

fn c8(out: &Path) -> Verdict {
    let mut v = Verdict::new(8, "coordinated scheme");
    let (o, _) = run(Pipeline::Coordinated, "homogeneous.cfg", out);
    v.take(&o.checks, |_| true);
    let mac = MacConfig::default();
    let t = Instant::now();
    let mut ok = true;
    for k in 1..=600 {
        ok &= coordinated_estimate(k as f64 * 0.1 * 1.5, &mac, 0.2).is_ok();
    }
    let secs = t.elapsed().as_secs_f64();
    v.check(ok && secs < 1.0, format!("600 estimates in {secs:.4} s"));
    v
}

fn c9() -> Verdict {
    let mut v = Verdict::new(9, "immediate access");
    for w in [16u32, 64] {
        let mut rng = ChaCha8Rng::seed_from_u64(w as u64);
        let with = sparse_access_delays(5, w, 2, 80, 50_000.0, 200, true, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(w as u64);
        let without = sparse_access_delays(5, w, 2, 80, 50_000.0, 200, false, &mut rng);
        let mean = |d: &[u32]| d.iter().map(|&x| x as f64).sum::<f64>() / d.len() as f64;
        let (a, b) = (mean(&with), mean(&without));
        let half = w as f64 / 2.0;
        v.check(a <= 2.0, format!("W={w}: {a:.2} slots with immediate access"));
        v.check((b - half).abs() <= 0.25 * half, format!("W={w}: {b:.2} slots without (W/2 = {half})"));
    }
    let mut lone_ok = true;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        lone_ok &= sparse_access_delays(1, 32, 2, 80, 1.0e3, 1, true, &mut rng) == [0];
    }
    v.check(lone_ok, "lone node: delay exactly 0 with immediate access (200 seeds)");
    v
}

fn c10() -> Verdict {
    let mut v = Verdict::new(10, "capture effect");
    let grid = GridSpec { length_km: 5.0, dx_km: 0.01, dt_min: 0.01, horizon_min: 6.0 };
    let locations = [1.5, 2.0, 2.5, 3.0, 3.5];
    let (mut points, mut worse) = (0, Vec::new());
    for rate in [2.0, 5.0, 10.0, 20.0, 40.0] {
        let profile =
            solve_density(&grid, &ArrivalProcess::constant(rate).unwrap(), &VelocityProfile::uniform(1.0)).unwrap();
        for w in [4u32, 16, 64] {
            let mac = MacConfig { w_ss: w, ..MacConfig::default() };
            let lin =
                evaluate_locations(&profile, 6.0, &locations, &mac, &ExactTau::default(), &LinearInterference).unwrap();
            let cap = evaluate_locations(
                &profile,
                6.0,
                &locations,
                &mac,
                &ExactTau::default(),
                &CaptureInterference::default(),
            )
            .unwrap();
            for (l, c) in lin.iter().zip(&cap) {
                points += 1;
                if c.bpi < l.bpi - 1e-9 {
                    worse.push(format!("rate {rate} W={w} x={}", l.location_km));
                }
            }
        }
    }
    v.check(
        worse.is_empty(),
        format!(
            "capture BPI >= linear BPI on {points} points{}",
            if worse.is_empty() { String::new() } else { format!(", not at {}", worse.join(", ")) }
        ),
    );
    let mut gap: f64 = 0.0;
    for &(a, x) in &[(2.0, 2.7), (2.0, 1.1), (0.5, 0.55), (3.0, 4.4)] {
        for &(k, alpha) in &[(10.0, 3.0), (4.0, 2.0), (10.0, 4.0)] {
            let f = |y: f64| k * (y - a).abs().powf(alpha) - (y - x).abs().powf(alpha);
            let (mut lo, mut hi) = (a, x);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let (l, h) = capture_free_region(a, x, k, alpha).unwrap();
            let bound = if x > a { h.unwrap() } else { l.unwrap() };
            gap = gap.max((bound - 0.5 * (lo + hi)).abs());
        }
    }
    v.check(gap <= 1e-9, format!("capture boundary vs numeric root: {gap:.1e} km"));
    v
}

fn csv_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = |name: &str| tmp.path().join(name);
    let mut verdicts = vec![c1(), c2()];

    let (hom, _) = run(Pipeline::Both, "homogeneous.cfg", &dir("homogeneous"));
    let mut v = Verdict::new(3, "homogeneous BPI");
    v.take(&hom.checks, |n| n.contains("BPI < 0.3") || n.starts_with("bpi relative error"));
    verdicts.push(v);
    let mut v = Verdict::new(4, "homogeneous delay");
    v.take(&hom.checks, |n| n.contains("delay at 50") || n.starts_with("delay relative error"));
    verdicts.push(v);
    let mut v = Verdict::new(5, "homogeneous throughput");
    v.take(&hom.checks, |n| n.starts_with("throughput"));
    verdicts.push(v);

    let (light, secs) = run(Pipeline::Both, "traffic_light.cfg", &dir("light_a"));
    let mut v = Verdict::new(6, "traffic-light scenario");
    v.take(&light.checks, |_| true);
    v.check(secs < 900.0, format!("{secs:.1} s"));
    verdicts.push(v);

    verdicts.push(c7(&hom));
    verdicts.push(c8(&dir("coordinated")));
    verdicts.push(c9());
    verdicts.push(c10());

    let mut v = Verdict::new(11, "determinism");
    run(Pipeline::Both, "traffic_light.cfg", &dir("light_b"));
    let (a, b) = (csv_bytes(&dir("light_a")), csv_bytes(&dir("light_b")));
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    v.check(
        !a.is_empty() && a.len() == b.len() && differing.is_empty(),
        format!("{} CSVs compared, differing: {differing:?}", a.len()),
    );
    verdicts.push(v);

    let mut failed = 0;
    for v in &verdicts {
        println!("{} criterion {:>2}: {}", if v.pass() { "PASS" } else { "FAIL" }, v.id, v.title);
        for (pass, d) in &v.lines {
            println!("        {} {d}", if *pass { "ok  " } else { "miss" });
        }
        failed += usize::from(!v.pass());
    }
    println!("{} of {} criteria pass", verdicts.len() - failed, verdicts.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
