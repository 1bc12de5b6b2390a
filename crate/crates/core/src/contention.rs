//! Backoff contention: the saturated fixed point, the per-CCH (unsaturated)
//! virtual-slot chains, and the log-linear tau approximation with its fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MacConfig {
    pub w_ss: u32,
    pub r_s_km: f64,
    pub r_i_km: f64,
    pub slot_us: f64,
    pub payload_bytes: f64,
    pub data_rate_bps: f64,
    pub cch_ms: f64,
    pub beacon_hz: f64,
    /// Overrides the transmission time computed from payload and rate.
    pub tx_slots: Option<u32>,
    pub aifs_slots: u32,
    /// Per-slot probabilities of generating or receiving a non-beacon packet.
    /// The chains model beacon-only traffic and require both to be zero.
    pub p_g: f64,
    pub p_r: f64,
    /// Registered name of the unsaturated chain.
    pub chain: String,
    pub neighbourhood: Neighbourhood,
    /// Reach of the contention neighbourhood as a multiple of r_i.
    pub neighbour_span: f64,
}

/// How cars around a node add up to the chain's mean neighbour count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Neighbourhood {
    /// A car at distance d counts by the share 1 - d/2h of the node's sensing
    /// range that it senses too (h = span * r_i). Cars near the edge are often
    /// frozen by transmitters the node cannot hear.
    Overlap,
    /// Every car within h counts fully.
    Window,
}

impl Default for MacConfig {
    fn default() -> Self {
        Self {
            w_ss: 16,
            r_s_km: 0.2,
            r_i_km: 0.5,
            slot_us: 16.0,
            payload_bytes: 500.0,
            data_rate_bps: 3.0e6,
            cch_ms: 50.0,
            beacon_hz: 10.0,
            // 500 B at 3 Mbps is 83.3 slots of 16 us; the reference figure is 80
            tx_slots: Some(80),
            aifs_slots: 2,
            p_g: 0.0,
            p_r: 0.0,
            chain: "fire-on-zero".into(),
            neighbourhood: Neighbourhood::Overlap,
            neighbour_span: 1.0,
        }
    }
}

impl MacConfig {
    pub fn with_w(&self, w: u32) -> Self {
        Self { w_ss: w, ..self.clone() }
    }

    pub fn tx_slots(&self) -> u32 {
        self.tx_slots
            .unwrap_or_else(|| (self.payload_bytes * 8.0 / self.data_rate_bps / (self.slot_us * 1e-6)).ceil() as u32)
    }

    pub fn cch_slots(&self) -> u32 {
        (self.cch_ms * 1000.0 / self.slot_us).round() as u32
    }

    /// One CCH plus one SCH interval: the beacon period.
    pub fn channel_period_min(&self) -> f64 {
        1.0 / (self.beacon_hz * 60.0)
    }

    pub fn slot_s(&self) -> f64 {
        self.slot_us * 1e-6
    }

    pub fn neighbour_reach(&self) -> f64 {
        self.neighbour_span * self.r_i_km
    }

    /// Weight of a car at distance `d` in the contention neighbour count.
    pub fn neighbour_weight(&self, d: f64) -> f64 {
        let h = self.neighbour_reach();
        let d = d.abs();
        if d > h {
            return 0.0;
        }
        match self.neighbourhood {
            Neighbourhood::Overlap => 1.0 - d / (2.0 * h),
            Neighbourhood::Window => 1.0,
        }
    }

    /// Mean neighbour count per unit density on a homogeneous road.
    pub fn neighbour_length(&self) -> f64 {
        let h = self.neighbour_reach();
        match self.neighbourhood {
            Neighbourhood::Overlap => 1.5 * h,
            Neighbourhood::Window => 2.0 * h,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_ss < 1 {
            return Err(Error::Config("w_ss must be at least 1".into()));
        }
        if !(self.r_s_km > 0.0 && self.r_i_km >= self.r_s_km) {
            return Err(Error::Config(format!(
                "need 0 < r_s <= r_i, got r_s = {}, r_i = {}",
                self.r_s_km, self.r_i_km
            )));
        }
        for (name, v) in [
            ("slot_us", self.slot_us),
            ("payload_bytes", self.payload_bytes),
            ("data_rate_bps", self.data_rate_bps),
            ("cch_ms", self.cch_ms),
            ("beacon_hz", self.beacon_hz),
            ("neighbour_span", self.neighbour_span),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.cch_ms > 1000.0 / self.beacon_hz {
            return Err(Error::Config("CCH interval longer than the beacon period".into()));
        }
        if !(0.0..=1.0).contains(&self.p_g) || !(0.0..=1.0).contains(&self.p_r) {
            return Err(Error::Config("p_g and p_r must be probabilities".into()));
        }
        if self.tx_slots() == 0 || self.tx_slots() >= self.cch_slots() {
            return Err(Error::Config("transmission must fit inside one CCH interval".into()));
        }
        Ok(())
    }
}

fn check_inputs(mean_neighbors: f64, w_ss: u32) -> Result<()> {
    if w_ss < 1 {
        return Err(Error::Input("w_ss must be at least 1".into()));
    }
    if !(mean_neighbors >= 0.0) || !mean_neighbors.is_finite() {
        return Err(Error::Input(format!("mean neighbour count must be non-negative, got {mean_neighbors}")));
    }
    Ok(())
}

/// tau = 2 (1 - p) / (1 - 2p + W)
pub fn saturated_tau_of_p(p: f64, w_ss: u32) -> f64 {
    2.0 * (1.0 - p) / (1.0 - 2.0 * p + w_ss as f64)
}

/// p = 1 - exp(-N tau)
pub fn busy_of_tau(tau: f64, mean_neighbors: f64) -> f64 {
    -(-mean_neighbors * tau).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaturatedSolution {
    pub tau: f64,
    pub p: f64,
    pub residual: f64,
    pub iterations: usize,
    pub w_ss: u32,
    pub mean_neighbors: f64,
}

impl SaturatedSolution {
    /// Stationary occupancy of counter state k. State 0 always transmits, the
    /// others freeze with probability p, and the reload is uniform on [0, W-1].
    pub fn occupancy(&self, k: u32) -> f64 {
        if k == 0 {
            self.tau
        } else if k < self.w_ss {
            (self.w_ss - k) as f64 * self.tau / (self.w_ss as f64 * (1.0 - self.p))
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaturatedMethod {
    Bisection,
    DampedIteration,
}

fn saturated_residual(tau: f64, n: f64, w: u32) -> f64 {
    (tau - saturated_tau_of_p(busy_of_tau(tau, n), w)).abs()
}

pub fn solve_saturated(mean_neighbors: f64, w_ss: u32) -> Result<SaturatedSolution> {
    solve_saturated_with(SaturatedMethod::Bisection, mean_neighbors, w_ss)
}

/// Joint fixed point of the saturated backoff equations. The residual
/// tau - f(p(tau)) is increasing in tau on [0, 1], so the root is unique.
pub fn solve_saturated_with(method: SaturatedMethod, mean_neighbors: f64, w_ss: u32) -> Result<SaturatedSolution> {
    check_inputs(mean_neighbors, w_ss)?;
    let g = |tau: f64| tau - saturated_tau_of_p(busy_of_tau(tau, mean_neighbors), w_ss);
    let (tau, iterations) = match method {
        SaturatedMethod::Bisection => {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let mut it = 0;
            while hi - lo > 1e-16 && it < 200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
                it += 1;
            }
            (0.5 * (lo + hi), it)
        }
        SaturatedMethod::DampedIteration => {
            let mut tau = 2.0 / (1.0 + w_ss as f64);
            let mut theta = 0.5;
            let mut last_step = f64::INFINITY;
            let mut it = 0;
            loop {
                let target = saturated_tau_of_p(busy_of_tau(tau, mean_neighbors), w_ss);
                let step = (target - tau).abs();
                it += 1;
                if step < 1e-15 {
                    break;
                }
                // halve the damping whenever the iteration stops contracting
                if step >= last_step {
                    theta *= 0.5;
                }
                last_step = step;
                tau += theta * (target - tau);
                if it >= 10_000 {
                    return Err(Error::Solver {
                        what: "saturated damped iteration".into(),
                        residual: saturated_residual(tau, mean_neighbors, w_ss),
                    });
                }
            }
            (tau, it)
        }
    };
    let residual = saturated_residual(tau, mean_neighbors, w_ss);
    if residual > 1e-10 {
        return Err(Error::Solver { what: "saturated fixed point".into(), residual });
    }
    Ok(SaturatedSolution { tau, p: busy_of_tau(tau, mean_neighbors), residual, iterations, w_ss, mean_neighbors })
}

/// Contending mass below which a trace stops.
pub const TRACE_EPS: f64 = 1e-6;

/// State evolution of one beacon's backoff over virtual slots within a CCH.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnsaturatedTrace {
    pub chain: String,
    pub w_ss: u32,
    pub mean_neighbors: f64,
    pub tx_slots: u32,
    /// Counter-state distribution at each virtual slot (index 0 is slot 1).
    pub states: Vec<Vec<f64>>,
    pub pi_idle: Vec<f64>,
    pub p: Vec<f64>,
    /// Probability that the beacon starts transmitting at each virtual slot.
    pub start: Vec<f64>,
    pub truncated: bool,
}

impl UnsaturatedTrace {
    pub fn slots(&self) -> usize {
        self.p.len()
    }

    pub fn mass(&self, j: usize) -> f64 {
        self.states[j].iter().sum::<f64>() + self.pi_idle[j]
    }

    /// Physical slots elapsed before virtual slot j (0-based): busy slots last a
    /// whole transmission, idle ones a single slot.
    pub fn waits(&self) -> Vec<f64> {
        let t = self.tx_slots as f64;
        let mut out = Vec::with_capacity(self.p.len());
        let mut acc = 0.0;
        for &p in &self.p {
            out.push(acc);
            acc += t * p + (1.0 - p);
        }
        out
    }

    /// Mean access delay plus transmission time, in physical slots, over beacons
    /// that finish inside a CCH of `cch_slots`.
    pub fn delay_slots(&self, cch_slots: u32) -> f64 {
        let t = self.tx_slots as f64;
        let waits = self.waits();
        let (mut num, mut den) = (0.0, 0.0);
        for (w, s) in waits.iter().zip(&self.start) {
            if w + t <= cch_slots as f64 {
                num += w * s;
                den += s;
            }
        }
        if den > 0.0 {
            t + num / den
        } else {
            f64::NAN
        }
    }

    /// Probability the beacon is sent before the CCH closes.
    pub fn sent_within(&self, cch_slots: u32) -> f64 {
        let t = self.tx_slots as f64;
        self.waits().iter().zip(&self.start).filter(|(w, _)| **w + t <= cch_slots as f64).map(|(_, s)| s).sum()
    }

    fn normalized_start(&self) -> Vec<f64> {
        let total: f64 = self.start.iter().sum();
        if total <= 0.0 {
            return vec![0.0; self.start.len()];
        }
        self.start.iter().map(|s| s / total).collect()
    }

    /// Transmission-weighted average of the per-slot start probability: the
    /// chance that a given peer starts in the same virtual slot as this beacon.
    pub fn same_slot_rate(&self) -> f64 {
        self.normalized_start().iter().map(|s| s * s).sum()
    }

    /// Chance that a peer not sharing this beacon's channel view is on air
    /// during some part of this beacon's transmission: start times closer than
    /// one transmission duration.
    pub fn overlap_rate(&self) -> f64 {
        let s = self.normalized_start();
        let w = self.waits();
        let t = self.tx_slots as f64;
        let mut prefix = vec![0.0; s.len() + 1];
        for i in 0..s.len() {
            prefix[i + 1] = prefix[i] + s[i];
        }
        let (mut lo, mut hi) = (0usize, 0usize);
        let mut acc = 0.0;
        for i in 0..s.len() {
            while w[lo] <= w[i] - t {
                lo += 1;
            }
            while hi < s.len() && w[hi] < w[i] + t {
                hi += 1;
            }
            acc += s[i] * (prefix[hi] - prefix[lo]);
        }
        acc.min(1.0)
    }
}

/// A virtual-slot chain for one beacon per CCH.
pub trait ContentionChain: Send + Sync {
    fn name(&self) -> &'static str;
    fn trace(&self, mean_neighbors: f64, w_ss: u32, tx_slots: u32, max_slots: usize) -> Result<UnsaturatedTrace>;
}

/// The recursion as written: a node at counter 0 transmits only if its slot is
/// idle and otherwise stays at 0, while the busy probability counts every node
/// at 0 as a transmitter.
#[derive(Debug, Default, Clone, Copy)]
pub struct LiteralChain;

/// Counter 0 always transmits and counters above 0 freeze on busy slots, which
/// is the transient version of the saturated chain.
#[derive(Debug, Default, Clone, Copy)]
pub struct FireOnZeroChain;

fn run_chain<F>(
    name: &str,
    mean_neighbors: f64,
    w_ss: u32,
    tx_slots: u32,
    max_slots: usize,
    mut step: F,
) -> Result<UnsaturatedTrace>
where
    F: FnMut(&[f64], f64, &mut [f64]) -> (f64, f64),
{
    check_inputs(mean_neighbors, w_ss)?;
    if max_slots == 0 {
        return Err(Error::Input("max_slots must be positive".into()));
    }
    let w = w_ss as usize;
    let mut pi = vec![1.0 / w as f64; w];
    let mut idle = 0.0;
    let mut tr = UnsaturatedTrace {
        chain: name.to_string(),
        w_ss,
        mean_neighbors,
        tx_slots,
        states: Vec::new(),
        pi_idle: Vec::new(),
        p: Vec::new(),
        start: Vec::new(),
        truncated: false,
    };
    let mut next = vec![0.0; w];
    loop {
        let p = busy_of_tau(pi[0], mean_neighbors);
        let (start, to_idle) = step(&pi, p, &mut next);
        tr.states.push(pi.clone());
        tr.pi_idle.push(idle);
        tr.p.push(p);
        tr.start.push(start);
        idle += to_idle;
        std::mem::swap(&mut pi, &mut next);
        let contending: f64 = pi.iter().sum();
        if contending < TRACE_EPS {
            tr.states.push(pi.clone());
            tr.pi_idle.push(idle);
            tr.p.push(busy_of_tau(pi[0], mean_neighbors));
            tr.start.push(0.0);
            break;
        }
        if tr.p.len() >= max_slots {
            tr.truncated = true;
            break;
        }
    }
    Ok(tr)
}

impl ContentionChain for LiteralChain {
    fn name(&self) -> &'static str {
        "literal"
    }

    fn trace(&self, mean_neighbors: f64, w_ss: u32, tx_slots: u32, max_slots: usize) -> Result<UnsaturatedTrace> {
        let w = w_ss as usize;
        run_chain(self.name(), mean_neighbors, w_ss, tx_slots, max_slots, |pi, p, next| {
            let sent = pi[0] * (1.0 - p);
            if w == 1 {
                next[0] = pi[0] * p;
                return (sent, sent);
            }
            for k in 0..w - 1 {
                next[k] = pi[k + 1] * (1.0 - p) + p * pi[k];
            }
            next[w - 1] = pi[w - 1] * p;
            (sent, sent)
        })
    }
}

impl ContentionChain for FireOnZeroChain {
    fn name(&self) -> &'static str {
        "fire-on-zero"
    }

    fn trace(&self, mean_neighbors: f64, w_ss: u32, tx_slots: u32, max_slots: usize) -> Result<UnsaturatedTrace> {
        let w = w_ss as usize;
        run_chain(self.name(), mean_neighbors, w_ss, tx_slots, max_slots, |pi, p, next| {
            let sent = pi[0];
            if w == 1 {
                next[0] = 0.0;
                return (sent, sent);
            }
            next[0] = pi[1] * (1.0 - p);
            for k in 1..w - 1 {
                next[k] = pi[k + 1] * (1.0 - p) + p * pi[k];
            }
            next[w - 1] = pi[w - 1] * p;
            (sent, sent)
        })
    }
}

pub const DEFAULT_MAX_SLOTS: usize = 200_000;

/// Trace the chain named in `cfg` for the given neighbour count.
pub fn run_unsaturated(mean_neighbors: f64, cfg: &MacConfig, max_slots: usize) -> Result<UnsaturatedTrace> {
    if cfg.p_g != 0.0 || cfg.p_r != 0.0 {
        return Err(Error::Input("the per-CCH chains model beacon-only traffic (p_g = p_r = 0)".into()));
    }
    let chain = crate::registry::chain(&cfg.chain)?;
    chain.trace(mean_neighbors, cfg.w_ss, cfg.tx_slots(), max_slots)
}

/// Access delay, in slots, of a packet arriving at an otherwise idle channel.
/// With immediate access a packet that finds the channel idle for at least AIFS
/// goes out at once; otherwise it waits out AIFS and then its backoff counter.
pub fn idle_access_slots(idle_for: u32, aifs: u32, counter: u32, immediate: bool) -> u32 {
    if immediate {
        aifs.saturating_sub(idle_for)
    } else {
        aifs + counter
    }
}

/// One log-linear fit of a rate ratio against ln(n): k1 ln n + k2(W) + k3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioFit {
    pub k1: f64,
    pub k2: Vec<(u32, f64)>,
    pub k3: f64,
    pub max_rel_err: f64,
    /// (n, W, target, fitted) for every grid point.
    pub points: Vec<(f64, u32, f64, f64)>,
}

impl RatioFit {
    pub fn ratio(&self, n: f64, w: u32) -> Option<f64> {
        let k2 = self.k2.iter().find(|(kw, _)| *kw == w)?.1;
        Some(self.k1 * n.ln() + k2 + self.k3)
    }

    pub fn worst(&self, count: usize) -> Vec<(f64, u32, f64)> {
        let mut v: Vec<_> = self.points.iter().map(|&(n, w, y, f)| (n, w, ((f - y) / y).abs())).collect();
        v.sort_by(|a, b| b.2.total_cmp(&a.2));
        v.truncate(count);
        v
    }
}

pub const TAU_FIT_ARTIFACT_VERSION: u32 = 1;
pub const TAU_FIT_MAX_REL_ERR: f64 = 0.15;

/// Fitted coefficients for the same-slot and overlap rates, with their grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauCoefficients {
    pub version: u32,
    pub chain: String,
    pub neighbour_length_km: f64,
    pub tx_slots: u32,
    pub densities: Vec<f64>,
    pub w_values: Vec<u32>,
    pub same_slot: RatioFit,
    pub overlap: RatioFit,
}

impl TauCoefficients {
    pub fn max_rel_err(&self) -> f64 {
        self.same_slot.max_rel_err.max(self.overlap.max_rel_err)
    }

    pub fn passes(&self) -> bool {
        self.max_rel_err() <= TAU_FIT_MAX_REL_ERR
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("coefficients serialize")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(format!("calibration artifact: {e}")))?;
        if c.version != TAU_FIT_ARTIFACT_VERSION {
            return Err(Error::Config(format!("calibration artifact version {} unsupported", c.version)));
        }
        Ok(c)
    }

    fn in_range(&self, n: f64, w: u32) -> bool {
        let lo = self.densities.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.densities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        self.w_values.contains(&w) && n >= lo && n <= hi
    }
}

/// Least squares with a common slope and one intercept per W; the per-W
/// intercepts are split into their mean (k3) and deviations (k2).
fn fit_log_linear(samples: &[(f64, u32, f64)]) -> RatioFit {
    let mut ws: Vec<u32> = samples.iter().map(|s| s.1).collect();
    ws.sort_unstable();
    ws.dedup();
    let group = |w: u32| samples.iter().filter(move |s| s.1 == w);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut means = Vec::new();
    for &w in &ws {
        let cnt = group(w).count() as f64;
        let mx = group(w).map(|s| s.0.ln()).sum::<f64>() / cnt;
        let my = group(w).map(|s| s.2).sum::<f64>() / cnt;
        for s in group(w) {
            sxy += (s.0.ln() - mx) * (s.2 - my);
            sxx += (s.0.ln() - mx).powi(2);
        }
        means.push((w, mx, my));
    }
    let k1 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercepts: Vec<(u32, f64)> = means.iter().map(|&(w, mx, my)| (w, my - k1 * mx)).collect();
    let k3 = intercepts.iter().map(|c| c.1).sum::<f64>() / intercepts.len() as f64;
    let k2: Vec<(u32, f64)> = intercepts.iter().map(|&(w, c)| (w, c - k3)).collect();
    let mut fit = RatioFit { k1, k2, k3, max_rel_err: 0.0, points: Vec::new() };
    for &(n, w, y) in samples {
        let f = fit.ratio(n, w).unwrap();
        fit.points.push((n, w, y, f));
    }
    fit.max_rel_err = fit.points.iter().map(|&(_, _, y, f)| ((f - y) / y).abs()).fold(0.0, f64::max);
    fit
}

/// The saturated tau at density n, used as the base of the approximation.
fn tau_sat_at(n: f64, w: u32, cfg: &MacConfig) -> Result<f64> {
    Ok(solve_saturated(cfg.neighbour_length() * n, w)?.tau)
}

/// Fit the log-linear ratio of chain rates to the saturated tau over the grid.
pub fn fit_tau_coefficients(densities: &[f64], w_values: &[u32], cfg: &MacConfig) -> Result<TauCoefficients> {
    if densities.is_empty() || w_values.is_empty() {
        return Err(Error::Input("calibration grid is empty".into()));
    }
    if densities.iter().any(|&n| !(n > 0.0)) {
        return Err(Error::Input("calibration densities must be positive".into()));
    }
    let chain = crate::registry::chain(&cfg.chain)?;
    let mut same = Vec::new();
    let mut over = Vec::new();
    for &w in w_values {
        for &n in densities {
            let nbar = cfg.neighbour_length() * n;
            let tr = chain.trace(nbar, w, cfg.tx_slots(), DEFAULT_MAX_SLOTS)?;
            let ts = tau_sat_at(n, w, cfg)?;
            same.push((n, w, tr.same_slot_rate() / ts));
            over.push((n, w, tr.overlap_rate() / ts));
        }
    }
    Ok(TauCoefficients {
        version: TAU_FIT_ARTIFACT_VERSION,
        chain: cfg.chain.clone(),
        neighbour_length_km: cfg.neighbour_length(),
        tx_slots: cfg.tx_slots(),
        densities: densities.to_vec(),
        w_values: w_values.to_vec(),
        same_slot: fit_log_linear(&same),
        overlap: fit_log_linear(&over),
    })
}

/// Fit and enforce the 15% relative-error ceiling.
pub fn calibrate_tau(densities: &[f64], w_values: &[u32], cfg: &MacConfig) -> Result<TauCoefficients> {
    let c = fit_tau_coefficients(densities, w_values, cfg)?;
    if !c.passes() {
        let worst: Vec<String> = c
            .same_slot
            .worst(3)
            .into_iter()
            .map(|(n, w, e)| format!("same-slot n={n} W={w} err={:.1}%", 100.0 * e))
            .chain(c.overlap.worst(3).into_iter().map(|(n, w, e)| format!("overlap n={n} W={w} err={:.1}%", 100.0 * e)))
            .collect();
        return Err(Error::Calibration(format!(
            "max relative error {:.1}% exceeds {:.0}%; worst: {}",
            100.0 * c.max_rel_err(),
            100.0 * TAU_FIT_MAX_REL_ERR,
            worst.join(", ")
        )));
    }
    Ok(c)
}

/// Concurrency rates seen by a beacon at a location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauRates {
    pub same_slot: f64,
    pub overlap: f64,
    pub extrapolated: bool,
}

/// Approximate rates at local density `n` (cars/km) from fitted coefficients.
pub fn approx_tau_unsat(n: f64, cfg: &MacConfig, coeffs: &TauCoefficients) -> Result<TauRates> {
    if !(n > 0.0) {
        return Ok(TauRates { same_slot: 0.0, overlap: 0.0, extrapolated: false });
    }
    if coeffs.chain != cfg.chain
        || coeffs.tx_slots != cfg.tx_slots()
        || (coeffs.neighbour_length_km - cfg.neighbour_length()).abs() > 1e-12
    {
        return Err(Error::Config("calibration artifact was fitted for a different chain or neighbourhood".into()));
    }
    let ts = tau_sat_at(n, cfg.w_ss, cfg)?;
    let extrapolated = !coeffs.in_range(n, cfg.w_ss);
    let ratio = |fit: &RatioFit| -> Result<f64> {
        fit.ratio(n, cfg.w_ss).ok_or_else(|| Error::Domain(format!("W = {} not in the calibration grid", cfg.w_ss)))
    };
    Ok(TauRates {
        same_slot: (ratio(&coeffs.same_slot)? * ts).clamp(0.0, 1.0),
        overlap: (ratio(&coeffs.overlap)? * ts).clamp(0.0, 1.0),
        extrapolated,
    })
}

/// Exact rates from the chain trace.
pub fn exact_tau_unsat(mean_neighbors: f64, cfg: &MacConfig) -> Result<TauRates> {
    let tr = run_unsaturated(mean_neighbors, cfg, DEFAULT_MAX_SLOTS)?;
    Ok(TauRates { same_slot: tr.same_slot_rate(), overlap: tr.overlap_rate(), extrapolated: tr.truncated })
}

/// Independent root of the saturated equations via generic bisection, for cross-checks.
pub fn saturated_root_bracketed(mean_neighbors: f64, w_ss: u32) -> Option<f64> {
    quad::bisect(|t| t - saturated_tau_of_p(busy_of_tau(t, mean_neighbors), w_ss), 0.0, 1.0, 1e-15, 500)
}
