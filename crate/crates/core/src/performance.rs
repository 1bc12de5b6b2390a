//! Location-dependent broadcast performance: BPI from the nearest concurrent
//! transmitter on each side, access delay from the contention chain, and the
//! resulting broadcast throughput.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::Serialize;

use crate::contention::{
    approx_tau_unsat, run_unsaturated, MacConfig, Neighbourhood, TauCoefficients, TauRates, UnsaturatedTrace,
    DEFAULT_MAX_SLOTS,
};
use crate::error::{Error, Result};
use crate::quad;
use crate::traffic_model::{DensityProfile, SliceCounter};

/// Where a concurrent transmitter at `x` corrupts the target region of a sender
/// at `a`. Returns the corrupted interval of receivers, already clipped to the
/// target region [a - r_s, a].
pub trait InterferenceModel: Send + Sync {
    fn name(&self) -> &'static str;
    /// Lowest and highest interferer position behind the sender that can matter.
    fn behind_range(&self, a: f64, mac: &MacConfig) -> (f64, f64);
    fn corrupted(&self, a: f64, x: f64, mac: &MacConfig) -> Option<(f64, f64)>;
}

/// A receiver is lost whenever it lies within r_i of a concurrent transmitter.
#[derive(Debug, Default, Clone, Copy)]
pub struct LinearInterference;

/// A receiver survives an interferer within r_i if the signal-to-interference
/// ratio clears K under path-loss exponent alpha.
#[derive(Debug, Clone, Copy)]
pub struct CaptureInterference {
    pub k: f64,
    pub alpha: f64,
}

impl Default for CaptureInterference {
    fn default() -> Self {
        Self { k: 10.0, alpha: 3.0 }
    }
}

fn clip_target(a: f64, mac: &MacConfig, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let lo = lo.max(a - mac.r_s_km);
    let hi = hi.min(a);
    (hi > lo).then_some((lo, hi))
}

impl InterferenceModel for LinearInterference {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn behind_range(&self, a: f64, mac: &MacConfig) -> (f64, f64) {
        (a - mac.r_s_km - mac.r_i_km, a - mac.r_s_km)
    }

    fn corrupted(&self, a: f64, x: f64, mac: &MacConfig) -> Option<(f64, f64)> {
        clip_target(a, mac, x - mac.r_i_km, x + mac.r_i_km)
    }
}

/// Interference-free interval around a sender at `a` for one interferer at `x`
/// under the capture condition K d_sender^alpha <= d_interferer^alpha. Each
/// bound is `None` when the region is unbounded on that side.
pub fn capture_free_region(a: f64, x: f64, k: f64, alpha: f64) -> Result<(Option<f64>, Option<f64>)> {
    if !(k >= 1.0) || !(alpha > 0.0) {
        return Err(Error::Input(format!("capture needs K >= 1 and alpha > 0, got K = {k}, alpha = {alpha}")));
    }
    let d = (x - a).abs();
    if d == 0.0 {
        return Err(Error::Input("interferer coincides with the sender".into()));
    }
    let r = k.powf(1.0 / alpha);
    let near = d / (1.0 + r);
    let far = (r > 1.0).then(|| d / (r - 1.0));
    Ok(if x > a { (far.map(|f| a - f), Some(a + near)) } else { (Some(a - near), far.map(|f| a + f)) })
}

impl InterferenceModel for CaptureInterference {
    fn name(&self) -> &'static str {
        "capture"
    }

    fn behind_range(&self, a: f64, mac: &MacConfig) -> (f64, f64) {
        (a - mac.r_s_km - mac.r_i_km, a)
    }

    fn corrupted(&self, a: f64, x: f64, mac: &MacConfig) -> Option<(f64, f64)> {
        // the target region lies behind the sender, so only the lower bound of
        // the free interval matters
        let (lo, _) = capture_free_region(a, x, self.k, self.alpha).ok()?;
        clip_target(a, mac, x - mac.r_i_km, (x + mac.r_i_km).min(lo?))
    }
}

/// Analytical performance at one location and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerfResult {
    pub location_km: f64,
    pub time_min: f64,
    pub w_ss: u32,
    pub density: f64,
    pub n_target: f64,
    pub n_contention: f64,
    pub bpi: f64,
    pub delay_slots: f64,
    pub throughput: f64,
    pub no_audience: bool,
    pub extrapolated: bool,
    pub quad_error: f64,
}

/// How the per-location concurrency rates are obtained.
pub trait TauEstimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn rates(&self, density: f64, n_contention: f64, mac: &MacConfig) -> Result<TauRates>;
}

/// Rates read off the chain trace, memoised by neighbour count.
#[derive(Default)]
pub struct ExactTau {
    cache: Mutex<HashMap<(u32, u64), TauRates>>,
}

impl TauEstimator for ExactTau {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn rates(&self, _density: f64, n_contention: f64, mac: &MacConfig) -> Result<TauRates> {
        let key = (mac.w_ss, n_contention.to_bits());
        if let Some(r) = self.cache.lock().unwrap().get(&key) {
            return Ok(*r);
        }
        let tr = run_unsaturated(n_contention, mac, DEFAULT_MAX_SLOTS)?;
        let r = TauRates { same_slot: tr.same_slot_rate(), overlap: tr.overlap_rate(), extrapolated: tr.truncated };
        self.cache.lock().unwrap().insert(key, r);
        Ok(r)
    }
}

/// The log-linear approximation with fitted coefficients.
pub struct ApproxTau {
    pub coeffs: TauCoefficients,
}

impl TauEstimator for ApproxTau {
    fn name(&self) -> &'static str {
        "approx"
    }

    /// Evaluated at the density that would give the same neighbour count on a
    /// homogeneous road, so both estimators see the same neighbourhood.
    fn rates(&self, _density: f64, n_contention: f64, mac: &MacConfig) -> Result<TauRates> {
        approx_tau_unsat(n_contention / mac.neighbour_length(), mac, &self.coeffs)
    }
}

/// Mean contention neighbour count at `a`: the density weighted by the
/// neighbourhood kernel of `mac`.
pub fn contention_neighbours(counter: &SliceCounter, a: f64, mac: &MacConfig) -> f64 {
    let h = mac.neighbour_reach();
    if mac.neighbourhood == Neighbourhood::Window {
        return counter.count(a - h, a + h);
    }
    // the kernel has its kink at a, which is a sample point, so the trapezoid
    // error comes only from the density interpolant
    const M: usize = 128;
    let step = h / M as f64;
    let mut acc = 0.0;
    for k in 0..=2 * M {
        let x = a - h + k as f64 * step;
        let f = counter.density(x) * mac.neighbour_weight(x - a);
        acc += if k == 0 || k == 2 * M { 0.5 * f } else { f };
    }
    acc * step
}

/// Per-slice state shared by every location query at one time.
pub struct Evaluator<'a> {
    pub mac: MacConfig,
    pub time_min: f64,
    counter: SliceCounter,
    xs: Vec<f64>,
    sync_cum: Vec<f64>,
    ovl_cum: Vec<f64>,
    sync_rate: Vec<f64>,
    ovl_rate: Vec<f64>,
    extrapolated: bool,
    interference: &'a dyn InterferenceModel,
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let dx = xs[1] - xs[0];
    let pos = (x - xs[0]) / dx;
    let i = (pos.floor() as usize).min(n - 2);
    let w = pos - i as f64;
    ys[i] * (1.0 - w) + ys[i + 1] * w
}

impl<'a> Evaluator<'a> {
    pub fn new(
        profile: &DensityProfile,
        time_min: f64,
        mac: &MacConfig,
        tau: &dyn TauEstimator,
        interference: &'a dyn InterferenceModel,
    ) -> Result<Self> {
        mac.validate()?;
        let counter = profile.counter(time_min)?;
        let xs = profile.xs().to_vec();
        let mut sync_rate = Vec::with_capacity(xs.len());
        let mut ovl_rate = Vec::with_capacity(xs.len());
        let mut extrapolated = false;
        for &x in &xs {
            let nc = contention_neighbours(&counter, x, mac);
            let r = tau.rates(counter.density(x), nc, mac)?;
            extrapolated |= r.extrapolated;
            sync_rate.push(r.same_slot);
            ovl_rate.push(r.overlap);
        }
        let dens: Vec<f64> = xs.iter().map(|&x| counter.density(x)).collect();
        let h_sync: Vec<f64> = dens.iter().zip(&sync_rate).map(|(n, t)| n * t).collect();
        let h_ovl: Vec<f64> = dens.iter().zip(&ovl_rate).map(|(n, t)| n * t).collect();
        Ok(Self {
            mac: mac.clone(),
            time_min,
            sync_cum: quad::cumulative_trapezoid(&xs, &h_sync),
            ovl_cum: quad::cumulative_trapezoid(&xs, &h_ovl),
            counter,
            xs,
            sync_rate,
            ovl_rate,
            extrapolated,
            interference,
        })
    }

    fn road(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    fn clip(&self, x: f64) -> f64 {
        let (lo, hi) = self.road();
        x.clamp(lo, hi)
    }

    fn cum(&self, table: &[f64], x: f64) -> f64 {
        interp(&self.xs, table, self.clip(x))
    }

    /// Expected concurrent transmitters between u < v as seen from sender `a`:
    /// same-slot rate inside a's sensing range, overlap rate beyond it.
    fn hazard(&self, a: f64, u: f64, v: f64) -> f64 {
        if v <= u {
            return 0.0;
        }
        let ri = self.mac.r_i_km;
        let split = |lo: f64, hi: f64, tab: &[f64]| {
            if hi > lo {
                self.cum(tab, hi) - self.cum(tab, lo)
            } else {
                0.0
            }
        };
        let (s_lo, s_hi) = (a - ri, a + ri);
        split(u.max(s_lo), v.min(s_hi), &self.sync_cum)
            + split(u, v.min(s_lo), &self.ovl_cum)
            + split(u.max(s_hi), v, &self.ovl_cum)
    }

    fn rate_density(&self, a: f64, x: f64) -> f64 {
        let (lo, hi) = self.road();
        if x < lo || x > hi {
            return 0.0;
        }
        let rate = if (x - a).abs() <= self.mac.r_i_km {
            interp(&self.xs, &self.sync_rate, x)
        } else {
            interp(&self.xs, &self.ovl_rate, x)
        };
        rate * self.counter.density(x)
    }

    fn union_count(&self, p: Option<(f64, f64)>, q: Option<(f64, f64)>) -> f64 {
        match (p, q) {
            (None, None) => 0.0,
            (Some((a, b)), None) | (None, Some((a, b))) => self.counter.count(a, b),
            (Some((a1, b1)), Some((a2, b2))) => {
                if b1 < a2 || b2 < a1 {
                    self.counter.count(a1, b1) + self.counter.count(a2, b2)
                } else {
                    self.counter.count(a1.min(a2), b1.max(b2))
                }
            }
        }
    }

    /// Expected fraction of the backward target region that receives the beacon.
    pub fn bpi(&self, a: f64) -> (f64, f64, bool) {
        let mac = &self.mac;
        let n_tr = self.counter.count(a - mac.r_s_km, a);
        if n_tr <= 1e-12 {
            return (1.0, 0.0, true);
        }
        let tau_tr_n = self.hazard(a, a - mac.r_s_km, a);
        let base = (-tau_tr_n).exp();
        let xi = |ir_b: Option<(f64, f64)>, ir_c: Option<(f64, f64)>| {
            ((1.0 - self.union_count(ir_b, ir_c) / n_tr).clamp(0.0, 1.0)) * base
        };
        let (b_lo, b_hi) = self.interference.behind_range(a, mac);
        let c_hi = a + mac.r_i_km;
        // the nearest interferer ahead: density over [a, c_hi] plus an atom for "none in reach"
        let tol = 1e-7;
        let inner = |ir_b: Option<(f64, f64)>| -> (f64, f64) {
            let (v, e) = quad::adaptive(
                |c| {
                    let p = self.rate_density(a, c) * (-self.hazard(a, a, c)).exp();
                    if p == 0.0 {
                        0.0
                    } else {
                        p * xi(ir_b, self.interference.corrupted(a, c, mac))
                    }
                },
                a,
                c_hi,
                tol,
                30,
            );
            let atom = (-self.hazard(a, a, c_hi)).exp();
            (v + atom * xi(ir_b, None), e)
        };
        let (vb, eb) = quad::adaptive(
            |b| {
                let p = self.rate_density(a, b) * (-self.hazard(a, b, a)).exp();
                if p == 0.0 {
                    return 0.0;
                }
                p * inner(self.interference.corrupted(a, b, mac)).0
            },
            b_lo,
            b_hi,
            tol,
            30,
        );
        // no effective interferer behind within reach
        let atom_b = (-self.hazard(a, b_lo, a)).exp();
        let (v0, e0) = inner(None);
        let total = vb + atom_b * v0;
        (total.clamp(0.0, 1.0), eb + e0, false)
    }

    pub fn n_contention(&self, a: f64) -> f64 {
        contention_neighbours(&self.counter, a, &self.mac)
    }

    pub fn evaluate(&self, a: f64, trace_cache: &TraceCache) -> Result<PerfResult> {
        let (lo, hi) = self.road();
        if a < lo || a > hi {
            return Err(Error::Domain(format!("location {a} outside the road")));
        }
        let mac = &self.mac;
        let n_tr = self.counter.count(a - mac.r_s_km, a);
        let nc = self.n_contention(a);
        let (bpi, quad_error, no_audience) = self.bpi(a);
        let trace = trace_cache.get(nc, mac)?;
        let delay = trace.delay_slots(mac.cch_slots());
        let throughput = if no_audience { 0.0 } else { n_tr * bpi / (delay * mac.slot_s()) };
        Ok(PerfResult {
            location_km: a,
            time_min: self.time_min,
            w_ss: mac.w_ss,
            density: self.counter.density(a),
            n_target: n_tr,
            n_contention: nc,
            bpi,
            delay_slots: delay,
            throughput,
            no_audience,
            extrapolated: self.extrapolated || trace.truncated,
            quad_error,
        })
    }
}

/// Memoised chain traces keyed by (W, neighbour count).
#[derive(Default)]
pub struct TraceCache {
    map: Mutex<HashMap<(u32, u64, String), std::sync::Arc<UnsaturatedTrace>>>,
}

impl TraceCache {
    pub fn get(&self, n: f64, mac: &MacConfig) -> Result<std::sync::Arc<UnsaturatedTrace>> {
        let key = (mac.w_ss, n.to_bits(), mac.chain.clone());
        if let Some(t) = self.map.lock().unwrap().get(&key) {
            return Ok(t.clone());
        }
        let t = std::sync::Arc::new(run_unsaturated(n, mac, DEFAULT_MAX_SLOTS)?);
        self.map.lock().unwrap().insert(key, t.clone());
        Ok(t)
    }
}

/// Evaluate every location at one time with the given strategies.
pub fn evaluate_locations(
    profile: &DensityProfile,
    time_min: f64,
    locations: &[f64],
    mac: &MacConfig,
    tau: &dyn TauEstimator,
    interference: &dyn InterferenceModel,
) -> Result<Vec<PerfResult>> {
    use rayon::prelude::*;
    let ev = Evaluator::new(profile, time_min, mac, tau, interference)?;
    let cache = TraceCache::default();
    locations.par_iter().map(|&a| ev.evaluate(a, &cache)).collect()
}

/// Fully coordinated broadcast: every car in the region takes one frame in a
/// random order, so BPI is one and the delay is the mean queue position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoordinatedResult {
    pub n_a: f64,
    pub frame_slots: f64,
    pub delay_slots: f64,
    pub bpi: f64,
    pub throughput: f64,
    pub empty: bool,
}

pub fn coordinated_estimate(n_a: f64, mac: &MacConfig, overhead: f64) -> Result<CoordinatedResult> {
    if !(n_a >= 0.0) || !(overhead >= 0.0) {
        return Err(Error::Input("density and overhead must be non-negative".into()));
    }
    let frame = mac.payload_bytes * 8.0 * (1.0 + overhead) / (mac.data_rate_bps * mac.slot_s());
    if n_a == 0.0 {
        return Ok(CoordinatedResult {
            n_a,
            frame_slots: frame,
            delay_slots: 0.0,
            bpi: 1.0,
            throughput: 0.0,
            empty: true,
        });
    }
    let delay = frame * (n_a + 1.0) / 2.0;
    let bpi = 1.0;
    let throughput = bpi * n_a * mac.r_s_km / (delay * mac.slot_s());
    Ok(CoordinatedResult { n_a, frame_slots: frame, delay_slots: delay, bpi, throughput, empty: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic_model::{solve_density, ArrivalProcess, GridSpec, VelocityProfile};

    fn uniform_profile(rate: f64) -> DensityProfile {
        let g = GridSpec { length_km: 6.0, dx_km: 0.01, dt_min: 0.005, horizon_min: 7.0 };
        solve_density(&g, &ArrivalProcess::constant(rate).unwrap(), &VelocityProfile::uniform(1.0)).unwrap()
    }

    #[test]
    fn empty_road_has_no_audience() {
        let p = uniform_profile(0.0);
        let mac = MacConfig::default();
        let r = evaluate_locations(&p, 7.0, &[3.0], &mac, &ExactTau::default(), &LinearInterference).unwrap();
        assert!(r[0].no_audience);
        assert_eq!(r[0].bpi, 1.0);
        assert_eq!(r[0].throughput, 0.0);
    }

    #[test]
    fn bpi_falls_with_density() {
        let mac = MacConfig { tx_slots: Some(80), ..MacConfig::default() };
        let mut last = 1.0;
        for rate in [2.0, 5.0, 10.0, 20.0, 30.0] {
            let p = uniform_profile(rate);
            let r = evaluate_locations(&p, 7.0, &[3.0], &mac, &ExactTau::default(), &LinearInterference).unwrap();
            assert!(r[0].bpi < last, "rate {rate}: {}", r[0].bpi);
            assert!(r[0].bpi > 0.0);
            last = r[0].bpi;
        }
    }

    #[test]
    fn capture_region_with_unit_threshold() {
        let (lo, hi) = capture_free_region(1.0, 1.4, 1.0, 3.0).unwrap();
        assert!(lo.is_none());
        assert!((hi.unwrap() - 1.2).abs() < 1e-15);
        assert!(capture_free_region(1.0, 1.0, 10.0, 3.0).is_err());
    }

    #[test]
    fn coordinated_default_frame() {
        let mac = MacConfig::default();
        let r = coordinated_estimate(1.0, &mac, 0.2).unwrap();
        assert!((r.frame_slots - 100.0).abs() < 1e-9);
        assert!((r.delay_slots - 100.0).abs() < 1e-9);
        let r = coordinated_estimate(0.0, &mac, 0.2).unwrap();
        assert!(r.empty);
    }
}
