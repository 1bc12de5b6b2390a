//! Microscopic reference: Poisson arrivals, Greenshield car following and a
//! slot-level CSMA/CA broadcast on every CCH interval with frozen positions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contention::{idle_access_slots, MacConfig};
use crate::error::{Error, Result};
use crate::traffic_model::{ArrivalProcess, VelocityMode, VelocityProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub trials: u32,
    pub seed: u64,
    pub mobility_tick_min: f64,
    /// Times at which positions are frozen and one or more CCH intervals run.
    pub snapshot_times: Vec<f64>,
    /// Independent CCH intervals per snapshot (fresh backoff draws, same positions).
    pub mac_repeats: u32,
    pub bin_km: f64,
    /// Homogeneous runs aggregate all cars inside this window into one cell.
    pub window_km: Option<(f64, f64)>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            seed: 42,
            mobility_tick_min: 0.005,
            snapshot_times: vec![4.5],
            mac_repeats: 1,
            bin_km: 0.1,
            window_km: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, dt_min: f64) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if !(self.mobility_tick_min > 0.0) || self.mobility_tick_min > dt_min * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "mobility tick {} must be positive and no larger than the analytical dt {dt_min}",
                self.mobility_tick_min
            )));
        }
        if self.snapshot_times.is_empty() || self.snapshot_times.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("snapshot times must be non-empty and non-negative".into()));
        }
        if self.mac_repeats == 0 || !(self.bin_km > 0.0) {
            return Err(Error::Config("mac_repeats and bin_km must be positive".into()));
        }
        Ok(())
    }
}

/// Road and traffic inputs shared with the analytical pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Road {
    pub length_km: f64,
    pub arrival: ArrivalProcess,
    pub velocity: VelocityProfile,
}

/// Arrival times on [0, horizon] from the piecewise-constant rate table.
pub fn arrival_times<R: Rng>(arrival: &ArrivalProcess, horizon: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::new();
    let pieces = arrival.pieces();
    for (i, &(start, rate)) in pieces.iter().enumerate() {
        let end = pieces.get(i + 1).map_or(horizon, |p| p.0.min(horizon));
        if start >= horizon || rate <= 0.0 {
            continue;
        }
        let exp = Exp::new(rate).expect("positive rate");
        let mut t = start;
        loop {
            t += exp.sample(rng);
            if t > end {
                break;
            }
            out.push(t);
        }
    }
    out
}

/// Car positions inside [0, L] at each requested time (ascending), for one trial.
pub fn mobility_snapshots<R: Rng>(road: &Road, tick: f64, times: &[f64], rng: &mut R) -> Vec<Vec<f64>> {
    let horizon = times.iter().cloned().fold(0.0, f64::max);
    let arrivals = arrival_times(&road.arrival, horizon, rng);
    let v = &road.velocity;
    let greenshield = v.mode == VelocityMode::Greenshield;
    let gap = if greenshield { 1.0 / v.k_jam } else { 0.0 };
    let look = v.lookahead_km;
    let keep_until = road.length_km + look.max(0.0) + 1e-9;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut out = vec![Vec::new(); times.len()];
    // cars held leader-first (descending position)
    let mut cars: Vec<f64> = Vec::new();
    let mut next_arrival = 0usize;
    let mut t = 0.0;
    let mut next_snap = 0usize;
    let mut speeds = Vec::new();
    loop {
        while next_snap < order.len() && times[order[next_snap]] <= t + 0.5 * tick {
            let mut snap: Vec<f64> = cars.iter().cloned().filter(|&x| x <= road.length_km).collect();
            snap.reverse();
            out[order[next_snap]] = snap;
            next_snap += 1;
        }
        if next_snap >= order.len() {
            break;
        }
        // entries wait at x = 0 until the follower gap is available
        while next_arrival < arrivals.len() && arrivals[next_arrival] <= t {
            if cars.last().is_none_or(|&last| last >= gap) {
                cars.push(0.0);
                next_arrival += 1;
            } else {
                break;
            }
        }
        speeds.clear();
        let mut ahead_hi = 0usize;
        for (i, &x) in cars.iter().enumerate() {
            let base = v.base(x, t);
            let speed = if greenshield && look > 0.0 {
                // cars in (x, x + look] are the ones with index < i and position <= x + look
                while ahead_hi < i && cars[ahead_hi] > x + look {
                    ahead_hi += 1;
                }
                let count = i - ahead_hi.min(i);
                let n_ahead = count as f64 / look;
                (base * (1.0 - n_ahead / v.k_jam)).clamp(0.0, base)
            } else {
                base
            };
            speeds.push(speed);
        }
        let mut leader: Option<f64> = None;
        for i in 0..cars.len() {
            let x = cars[i];
            let mut nx = x + speeds[i] * tick;
            if let Some(stop) = v.stop_line(x, t + tick) {
                if x < stop {
                    nx = nx.min(stop - 1e-9);
                }
            }
            if let Some(l) = leader {
                if greenshield {
                    nx = nx.min(l - gap);
                }
            }
            nx = nx.max(x);
            cars[i] = nx;
            leader = Some(nx);
        }
        if !greenshield {
            cars.sort_by(|a, b| b.total_cmp(a));
        }
        let gone = cars.iter().take_while(|&&x| x > keep_until).count();
        cars.drain(..gone);
        t += tick;
    }
    out
}

/// Outcome of one beacon in one CCH interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeaconOutcome {
    pub x: f64,
    pub audience: u32,
    pub received: u32,
    /// Slot at which the transmission completes (start + tx time), if sent.
    pub delay_slots: Option<u32>,
}

struct Fenwick(Vec<i32>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0; n + 1])
    }
    fn add(&mut self, i: usize, d: i32) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += d;
            i += i & i.wrapping_neg();
        }
    }
    fn prefix(&self, i: usize) -> i32 {
        let mut i = i;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
    /// Sum over [lo, hi).
    fn range(&self, lo: usize, hi: usize) -> i32 {
        self.prefix(hi) - self.prefix(lo)
    }
}

/// One CCH interval on static positions (ascending). Each car draws a counter
/// uniformly on [0, W-1]; a pending car that hears any transmission within r_i
/// freezes, otherwise it decrements or, at zero, starts a transmission of
/// `tx_slots`. A receiver behind the sender within r_s decodes the beacon
/// unless it was itself on air or another overlapping transmitter lies within
/// r_i of it.
pub fn run_cch<R: Rng>(positions: &[f64], mac: &MacConfig, rng: &mut R) -> Vec<BeaconOutcome> {
    let n = positions.len();
    let w = mac.w_ss;
    let t_tx = mac.tx_slots();
    let cch = mac.cch_slots();
    let ri = mac.r_i_km;
    let lo: Vec<usize> = positions.iter().map(|&x| positions.partition_point(|&y| y < x - ri)).collect();
    let hi: Vec<usize> = positions.iter().map(|&x| positions.partition_point(|&y| y <= x + ri)).collect();
    let mut counter: Vec<u32> = (0..n).map(|_| rng.gen_range(0..w)).collect();
    let mut start: Vec<Option<u32>> = vec![None; n];
    let mut pending: Vec<usize> = (0..n).collect();
    let mut on_air = Fenwick::new(n);
    let mut ending: Vec<(u32, usize)> = Vec::new();
    let mut starters = Vec::new();
    let mut s = 0u32;
    while s < cch && !pending.is_empty() {
        ending.retain(|&(end, i)| {
            if end <= s {
                on_air.add(i, -1);
                false
            } else {
                true
            }
        });
        starters.clear();
        let mut progressed = false;
        for &i in &pending {
            if on_air.range(lo[i], hi[i]) > 0 {
                continue;
            }
            progressed = true;
            if counter[i] == 0 {
                starters.push(i);
            } else {
                counter[i] -= 1;
            }
        }
        if !starters.is_empty() {
            for &i in &starters {
                // a transmission started in slot s must also end inside the CCH
                if s + t_tx <= cch {
                    start[i] = Some(s);
                    on_air.add(i, 1);
                    ending.push((s + t_tx, i));
                }
            }
            pending.retain(|i| !starters.contains(i));
        }
        if progressed {
            s += 1;
        } else {
            // everyone is frozen until the next transmission ends
            s = ending.iter().map(|e| e.0).min().unwrap_or(cch).max(s + 1);
        }
    }
    resolve_receptions(positions, &start, mac)
}

/// Reception outcome of every beacon given the transmission start slots.
pub fn resolve_receptions(positions: &[f64], start: &[Option<u32>], mac: &MacConfig) -> Vec<BeaconOutcome> {
    let n = positions.len();
    let t_tx = mac.tx_slots();
    let ri = mac.r_i_km;
    let rs = mac.r_s_km;
    let mut tx: Vec<(u32, usize)> = start.iter().enumerate().filter_map(|(i, s)| s.map(|s| (s, i))).collect();
    tx.sort_unstable();
    let mut out = Vec::with_capacity(n);
    let mut overlapping: Vec<usize> = Vec::new();
    for i in 0..n {
        let x = positions[i];
        let a_lo = positions.partition_point(|&y| y < x - rs);
        let a_hi = positions.partition_point(|&y| y < x);
        let audience = (a_lo..a_hi).filter(|&j| j != i).count() as u32;
        let mut received = 0;
        if let Some(si) = start[i] {
            let first = tx.partition_point(|&(sk, _)| sk + t_tx <= si);
            overlapping.clear();
            for &(sk, k) in &tx[first..] {
                if sk >= si + t_tx {
                    break;
                }
                if k != i {
                    overlapping.push(k);
                }
            }
            for j in a_lo..a_hi {
                if j == i {
                    continue;
                }
                let xj = positions[j];
                let hit = overlapping.iter().any(|&k| k == j || (positions[k] - xj).abs() <= ri);
                if !hit {
                    received += 1;
                }
            }
        }
        out.push(BeaconOutcome { x, audience, received, delay_slots: start[i].map(|s| s + t_tx) });
    }
    out
}

/// Per-bin accumulator; everything is summed in a fixed order for reproducibility.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BinStats {
    pub cars: u64,
    pub bpi_n: u64,
    pub bpi_sum: f64,
    pub bpi_sq: f64,
    pub sent: u64,
    pub delay_sum: f64,
    pub delay_sq: f64,
    pub received_sent: f64,
}

impl BinStats {
    fn push(&mut self, o: &BeaconOutcome) {
        self.cars += 1;
        if o.audience > 0 {
            let b = o.received as f64 / o.audience as f64;
            self.bpi_n += 1;
            self.bpi_sum += b;
            self.bpi_sq += b * b;
        }
        if let Some(d) = o.delay_slots {
            self.sent += 1;
            self.delay_sum += d as f64;
            self.delay_sq += (d as f64) * (d as f64);
            self.received_sent += o.received as f64;
        }
    }

    fn merge(&mut self, o: &BinStats) {
        self.cars += o.cars;
        self.bpi_n += o.bpi_n;
        self.bpi_sum += o.bpi_sum;
        self.bpi_sq += o.bpi_sq;
        self.sent += o.sent;
        self.delay_sum += o.delay_sum;
        self.delay_sq += o.delay_sq;
        self.received_sent += o.received_sent;
    }

    pub fn bpi(&self) -> Option<f64> {
        (self.bpi_n > 0).then(|| self.bpi_sum / self.bpi_n as f64)
    }

    pub fn bpi_half_width(&self) -> Option<f64> {
        half_width(self.bpi_n, self.bpi_sum, self.bpi_sq)
    }

    pub fn delay(&self) -> Option<f64> {
        (self.sent > 0).then(|| self.delay_sum / self.sent as f64)
    }

    pub fn delay_half_width(&self) -> Option<f64> {
        half_width(self.sent, self.delay_sum, self.delay_sq)
    }

    /// Successful receptions per second: mean receptions per sent beacon over mean delay.
    pub fn throughput(&self, slot_s: f64) -> Option<f64> {
        (self.sent > 0 && self.delay_sum > 0.0).then(|| self.received_sent / (self.delay_sum * slot_s))
    }
}

fn half_width(n: u64, sum: f64, sq: f64) -> Option<f64> {
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Some(1.96 * (var / nf).sqrt())
}

/// Aggregated simulation output for one W.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub w_ss: u32,
    pub bin_km: f64,
    pub bins: Vec<BinStats>,
    /// Aggregate over the configured window (homogeneous runs).
    pub window: Option<BinStats>,
    pub snapshots: u64,
    /// Mean cars per km in each bin over all snapshots.
    pub density: Vec<f64>,
}

/// Centre of bin `i`, rounded to a nanometre so tables print 1.45 rather than
/// 1.4500000000000002.
pub fn bin_centre(i: usize, bin_km: f64) -> f64 {
    (((i as f64 + 0.5) * bin_km) * 1e12).round() / 1e12
}

impl SimResult {
    pub fn bin_centre(&self, i: usize) -> f64 {
        bin_centre(i, self.bin_km)
    }

    pub fn window_density(&self, window: (f64, f64)) -> Option<f64> {
        self.window.as_ref().map(|w| w.cars as f64 / (self.snapshots as f64 * (window.1 - window.0)))
    }
}

fn trial_rng(seed: u64, trial: u32) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(trial as u64 + 1);
    r
}

struct TrialOut {
    per_w: Vec<(Vec<BinStats>, BinStats)>,
    snapshots: u64,
}

/// Run all trials for every W in `w_values` on shared mobility realizations.
pub fn simulate(road: &Road, mac: &MacConfig, w_values: &[u32], sim: &SimConfig) -> Result<Vec<SimResult>> {
    mac.validate()?;
    if w_values.is_empty() {
        return Err(Error::Config("no contention windows to simulate".into()));
    }
    let nbins = (road.length_km / sim.bin_km).ceil() as usize;
    let outs: Vec<TrialOut> = (0..sim.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(sim.seed, trial);
            let snaps = mobility_snapshots(road, sim.mobility_tick_min, &sim.snapshot_times, &mut rng);
            let mut per_w = Vec::with_capacity(w_values.len());
            for &w in w_values {
                let cfg = mac.with_w(w);
                let mut bins = vec![BinStats::default(); nbins];
                let mut win = BinStats::default();
                for positions in &snaps {
                    for _ in 0..sim.mac_repeats {
                        for o in run_cch(positions, &cfg, &mut rng) {
                            let b = ((o.x / sim.bin_km) as usize).min(nbins - 1);
                            bins[b].push(&o);
                            if let Some((lo, hi)) = sim.window_km {
                                if o.x >= lo && o.x < hi {
                                    win.push(&o);
                                }
                            }
                        }
                    }
                }
                per_w.push((bins, win));
            }
            TrialOut { per_w, snapshots: (snaps.len() as u64) * sim.mac_repeats as u64 }
        })
        .collect();
    let mut results = Vec::with_capacity(w_values.len());
    for (wi, &w) in w_values.iter().enumerate() {
        let mut bins = vec![BinStats::default(); nbins];
        let mut win = BinStats::default();
        let mut snapshots = 0;
        for o in &outs {
            for (b, s) in bins.iter_mut().zip(&o.per_w[wi].0) {
                b.merge(s);
            }
            win.merge(&o.per_w[wi].1);
            snapshots += o.snapshots;
        }
        let density = bins.iter().map(|b| b.cars as f64 / (snapshots as f64 * sim.bin_km)).collect();
        results.push(SimResult {
            w_ss: w,
            bin_km: sim.bin_km,
            bins,
            window: sim.window_km.map(|_| win),
            snapshots,
            density,
        });
    }
    Ok(results)
}

/// Empirical density on a grid of spacing `dx`, averaged over trials, at one time.
pub fn empirical_density(road: &Road, sim: &SimConfig, t: f64, dx: f64) -> Vec<f64> {
    let nb = (road.length_km / dx).round() as usize + 1;
    let counts: Vec<Vec<u64>> = (0..sim.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(sim.seed, trial);
            let snaps = mobility_snapshots(road, sim.mobility_tick_min, &[t], &mut rng);
            let mut c = vec![0u64; nb];
            for &x in &snaps[0] {
                // nearest grid node, cells centred on nodes
                let i = ((x / dx).round() as usize).min(nb - 1);
                c[i] += 1;
            }
            c
        })
        .collect();
    let mut total = vec![0u64; nb];
    for c in &counts {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    total
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let width = if i == 0 || i == nb - 1 { 0.5 * dx } else { dx };
            c as f64 / (sim.trials as f64 * width)
        })
        .collect()
}

/// Access delays (slots from arrival to transmission start) for sparse packet
/// arrivals on an otherwise idle channel shared by `nodes` stations in range.
#[allow(clippy::too_many_arguments)]
pub fn sparse_access_delays<R: Rng>(
    nodes: usize,
    w_ss: u32,
    aifs: u32,
    tx_slots: u32,
    mean_gap_slots: f64,
    packets_per_node: usize,
    immediate: bool,
    rng: &mut R,
) -> Vec<u32> {
    #[derive(Clone)]
    struct Node {
        arrivals: Vec<u64>,
        next: usize,
        queued_at: Option<u64>,
        aifs_left: u32,
        counter: u32,
    }
    let exp = Exp::new(1.0 / mean_gap_slots).expect("positive gap");
    let mut ns: Vec<Node> = (0..nodes)
        .map(|_| {
            let mut t = 0.0;
            let arrivals = (0..packets_per_node)
                .map(|_| {
                    t += exp.sample(rng);
                    t.ceil() as u64
                })
                .collect();
            Node { arrivals, next: 0, queued_at: None, aifs_left: 0, counter: 0 }
        })
        .collect();
    let mut delays = Vec::new();
    let mut busy_until = 0u64;
    // the channel has been idle since before the first arrival
    let mut last_busy_end: Option<u64> = None;
    let mut s = 0u64;
    loop {
        if ns.iter().all(|n| n.next >= n.arrivals.len() && n.queued_at.is_none()) {
            break;
        }
        let idle = s >= busy_until;
        let idle_for = match (idle, last_busy_end) {
            (false, _) => 0,
            (true, None) => u32::MAX,
            (true, Some(e)) => (s - e).min(u32::MAX as u64) as u32,
        };
        let mut starters = Vec::new();
        for (i, n) in ns.iter_mut().enumerate() {
            if n.queued_at.is_none() && n.next < n.arrivals.len() && n.arrivals[n.next] <= s {
                n.queued_at = Some(n.arrivals[n.next]);
                n.next += 1;
                n.counter = rng.gen_range(0..w_ss);
                n.aifs_left = aifs;
                if idle && idle_access_slots(idle_for, aifs, n.counter, immediate) == 0 {
                    starters.push(i);
                    continue;
                }
            }
            if n.queued_at.is_some() && idle {
                if n.aifs_left > 0 {
                    n.aifs_left -= 1;
                } else if n.counter == 0 {
                    starters.push(i);
                } else {
                    n.counter -= 1;
                }
            }
        }
        for &i in &starters {
            let q = ns[i].queued_at.take().unwrap();
            delays.push((s - q) as u32);
        }
        if !starters.is_empty() {
            busy_until = s + tx_slots as u64;
            last_busy_end = Some(busy_until);
        }
        s += 1;
        // skip idle stretches with nothing queued
        if ns.iter().all(|n| n.queued_at.is_none()) {
            let next = ns.iter().filter(|n| n.next < n.arrivals.len()).map(|n| n.arrivals[n.next]).min();
            if let Some(t) = next {
                s = s.max(t);
            }
        }
    }
    delays
}
