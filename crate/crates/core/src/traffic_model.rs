//! Macroscopic traffic: expected car density n(x, t) on a one-way road fed by a
//! time-varying Poisson arrival stream at x = 0.
//!
//! Two velocity modes are supported. In independent mode cars follow a
//! prescribed speed field and the density is transported along characteristics.
//! In greenshield mode the speed is scaled by the density just ahead,
//! v = v_f (1 - n_ahead / k_jam), and the density is advanced with an upwind
//! finite-volume step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Piecewise-constant arrival rate table: `(start_min, cars_per_min)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalProcess {
    pieces: Vec<(f64, f64)>,
}

impl ArrivalProcess {
    pub fn new(mut pieces: Vec<(f64, f64)>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::Config("arrival table is empty".into()));
        }
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pieces[0].0 > 0.0 {
            return Err(Error::Config("arrival table must start at t = 0".into()));
        }
        for &(t, r) in &pieces {
            if !t.is_finite() || !r.is_finite() || r < 0.0 {
                return Err(Error::Config(format!("bad arrival entry ({t}, {r})")));
            }
        }
        Ok(Self { pieces })
    }

    pub fn constant(rate: f64) -> Result<Self> {
        Self::new(vec![(0.0, rate)])
    }

    pub fn pieces(&self) -> &[(f64, f64)] {
        &self.pieces
    }

    pub fn rate(&self, t: f64) -> f64 {
        let idx = self.pieces.partition_point(|p| p.0 <= t);
        if idx == 0 {
            0.0
        } else {
            self.pieces[idx - 1].1
        }
    }

    /// Expected arrivals in [0, t].
    pub fn cumulative(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &(start, rate)) in self.pieces.iter().enumerate() {
            if start >= t {
                break;
            }
            let end = self.pieces.get(i + 1).map_or(f64::INFINITY, |p| p.0).min(t);
            acc += rate * (end - start.max(0.0));
        }
        acc
    }

    pub fn integral(&self, t1: f64, t2: f64) -> f64 {
        self.cumulative(t2) - self.cumulative(t1)
    }
}

/// A traffic light with red intervals `(start, end]` and a speed ramp applied
/// upstream of the stop line while red. The ramp is a piecewise-linear table of
/// `(offset_km, multiplier)` with offsets relative to the light (negative =
/// upstream); it reaches zero at the stop line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Light {
    pub position_km: f64,
    pub red: Vec<(f64, f64)>,
    pub ramp: Vec<(f64, f64)>,
}

impl Light {
    pub fn is_red(&self, t: f64) -> bool {
        self.red.iter().any(|&(a, b)| t > a && t <= b)
    }

    fn ramp_multiplier(&self, offset: f64) -> f64 {
        if offset > 0.0 || self.ramp.is_empty() {
            return 1.0;
        }
        interp_table(&self.ramp, offset)
    }

    pub fn multiplier(&self, x: f64, t: f64) -> f64 {
        if self.is_red(t) {
            self.ramp_multiplier(x - self.position_km)
        } else {
            1.0
        }
    }

    fn validate(&self) -> Result<()> {
        if self.ramp.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Config("light ramp offsets must be strictly increasing".into()));
        }
        if self.ramp.iter().any(|&(o, m)| o > 0.0 || !(0.0..=1.0).contains(&m)) {
            return Err(Error::Config("light ramp needs offsets <= 0 and multipliers in [0, 1]".into()));
        }
        if self.red.iter().any(|&(a, b)| b < a) {
            return Err(Error::Config("red interval end precedes start".into()));
        }
        Ok(())
    }
}

fn interp_table(table: &[(f64, f64)], x: f64) -> f64 {
    if x <= table[0].0 {
        return table[0].1;
    }
    let last = table[table.len() - 1];
    if x >= last.0 {
        return last.1;
    }
    let i = table.partition_point(|p| p.0 <= x);
    let (x0, y0) = table[i - 1];
    let (x1, y1) = table[i];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VelocityMode {
    Independent,
    Greenshield,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityProfile {
    pub v_free: f64,
    pub mode: VelocityMode,
    pub k_jam: f64,
    pub lookahead_km: f64,
    pub lights: Vec<Light>,
}

impl VelocityProfile {
    pub fn uniform(v_free: f64) -> Self {
        Self { v_free, mode: VelocityMode::Independent, k_jam: f64::INFINITY, lookahead_km: 0.0, lights: Vec::new() }
    }

    /// Free (interaction-less) speed at (x, t), km/min.
    pub fn base(&self, x: f64, t: f64) -> f64 {
        self.lights.iter().fold(self.v_free, |v, l| v * l.multiplier(x, t))
    }

    fn base_dx(&self, x: f64, t: f64) -> f64 {
        let h = 1e-7;
        (self.base(x + h, t) - self.base(x - h, t)) / (2.0 * h)
    }

    /// Position of the red stop line the car at `x` must not cross at time `t`.
    pub fn stop_line(&self, x: f64, t: f64) -> Option<f64> {
        self.lights.iter().filter(|l| l.is_red(t) && l.position_km >= x).map(|l| l.position_km).min_by(f64::total_cmp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_free > 0.0) || !self.v_free.is_finite() {
            return Err(Error::Config("v_free must be positive".into()));
        }
        if self.mode == VelocityMode::Greenshield {
            if !(self.k_jam > 0.0) || !self.k_jam.is_finite() {
                return Err(Error::Config("greenshield mode needs a finite positive k_jam".into()));
            }
            if self.lookahead_km < 0.0 {
                return Err(Error::Config("lookahead must be non-negative".into()));
            }
        }
        for l in &self.lights {
            l.validate()?;
        }
        Ok(())
    }
}

/// v = v_free (1 - n_ahead / k_jam), clamped to [0, v_free].
pub fn greenshield_speed(n_ahead: f64, v_free: f64, k_jam: f64) -> Result<f64> {
    if n_ahead < 0.0 || !n_ahead.is_finite() {
        return Err(Error::Input(format!("negative or non-finite density {n_ahead}")));
    }
    if !(k_jam > 0.0) {
        return Err(Error::Input("k_jam must be positive".into()));
    }
    Ok((v_free * (1.0 - n_ahead / k_jam)).clamp(0.0, v_free.max(0.0)))
}

/// Free-flow branch of the homogeneous Greenshield steady state: the density
/// carrying flow `rate` at free speed `v_free`. `None` past capacity.
pub fn greenshield_steady_density(rate: f64, v_free: f64, k_jam: f64) -> Option<f64> {
    let capacity = v_free * k_jam / 4.0;
    if rate > capacity {
        return None;
    }
    Some(0.5 * k_jam * (1.0 - (1.0 - rate / capacity).max(0.0).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub length_km: f64,
    pub dx_km: f64,
    pub dt_min: f64,
    pub horizon_min: f64,
}

impl GridSpec {
    pub fn validate(&self, v_max: f64) -> Result<()> {
        for (name, v) in
            [("length", self.length_km), ("dx", self.dx_km), ("dt", self.dt_min), ("horizon", self.horizon_min)]
        {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("grid {name} must be positive")));
            }
        }
        if v_max * self.dt_min > self.dx_km * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "CFL violated: v_max*dt = {} km exceeds dx = {} km",
                v_max * self.dt_min,
                self.dx_km
            )));
        }
        Ok(())
    }

    fn nodes(&self) -> usize {
        (self.length_km / self.dx_km).round() as usize + 1
    }

    fn steps(&self) -> usize {
        (self.horizon_min / self.dt_min).round() as usize
    }
}

/// Expected density on the space-time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    xs: Vec<f64>,
    times: Vec<f64>,
    values: Vec<f64>,
    pub mode: VelocityMode,
    pub k_jam: f64,
    /// Arrivals the entry cell could not absorb (greenshield mode), cars.
    pub blocked_inflow: f64,
}

impl DensityProfile {
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn length(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let m = self.xs.len();
        &self.values[k * m..(k + 1) * m]
    }

    /// True when car-to-car interaction is active, so the Poisson count model is approximate.
    pub fn approximate(&self) -> bool {
        self.mode == VelocityMode::Greenshield
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= -1e-12 && t <= self.horizon() + 1e-9) {
            return Err(Error::Domain(format!("time {t} outside [0, {}]", self.horizon())));
        }
        Ok(())
    }

    /// Density slice at time t, linear in time between stored rows.
    pub fn slice(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let dt = self.times[1] - self.times[0];
        let pos = (t / dt).clamp(0.0, (self.times.len() - 1) as f64);
        let k = (pos.floor() as usize).min(self.times.len() - 1);
        let w = pos - k as f64;
        if w < 1e-9 || k + 1 >= self.times.len() {
            return Ok(self.row(k).to_vec());
        }
        if w > 1.0 - 1e-9 {
            return Ok(self.row(k + 1).to_vec());
        }
        Ok(self.row(k).iter().zip(self.row(k + 1)).map(|(a, b)| a * (1.0 - w) + b * w).collect())
    }

    /// Density at (x, t) by linear interpolation. Zero outside the road.
    pub fn at(&self, x: f64, t: f64) -> Result<f64> {
        let s = self.slice(t)?;
        Ok(interp_nodes(&self.xs, &s, x))
    }

    /// Expected number of cars in [x1, x2] at time t: exact integral of the
    /// piecewise-linear interpolant, i.e. the trapezoid rule on the grid.
    pub fn expected_count(&self, x1: f64, x2: f64, t: f64) -> Result<f64> {
        if x1 > x2 {
            return Err(Error::Domain(format!("interval [{x1}, {x2}] is reversed")));
        }
        let tol = 1e-9;
        if x1 < -tol || x2 > self.length() + tol {
            return Err(Error::Domain(format!("interval [{x1}, {x2}] leaves the road [0, {}]", self.length())));
        }
        let s = self.slice(t)?;
        Ok(SliceCounter::new(&self.xs, &s).count(x1, x2))
    }

    /// Counter for one time slice, with the window clipped to the road.
    pub fn counter(&self, t: f64) -> Result<SliceCounter> {
        let s = self.slice(t)?;
        Ok(SliceCounter::new(&self.xs, &s))
    }
}

fn interp_nodes(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x < xs[0] - 1e-12 || x > xs[n - 1] + 1e-12 {
        return 0.0;
    }
    let dx = xs[1] - xs[0];
    let pos = ((x - xs[0]) / dx).clamp(0.0, (n - 1) as f64);
    let i = (pos.floor() as usize).min(n - 2);
    let w = pos - i as f64;
    ys[i] * (1.0 - w) + ys[i + 1] * w
}

/// Cumulative-count lookup for a single time slice. Counts outside the road are zero.
#[derive(Debug, Clone)]
pub struct SliceCounter {
    x0: f64,
    dx: f64,
    density: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SliceCounter {
    pub fn new(xs: &[f64], density: &[f64]) -> Self {
        Self {
            x0: xs[0],
            dx: xs[1] - xs[0],
            density: density.to_vec(),
            cumulative: quad::cumulative_trapezoid(xs, density),
        }
    }

    pub fn length(&self) -> f64 {
        self.x0 + self.dx * (self.density.len() - 1) as f64
    }

    pub fn density(&self, x: f64) -> f64 {
        let n = self.density.len();
        if x < self.x0 || x > self.length() {
            return 0.0;
        }
        let pos = ((x - self.x0) / self.dx).clamp(0.0, (n - 1) as f64);
        let i = (pos.floor() as usize).min(n - 2);
        let w = pos - i as f64;
        self.density[i] * (1.0 - w) + self.density[i + 1] * w
    }

    /// Integral of the interpolant from the road start to x (clipped).
    pub fn cumulative(&self, x: f64) -> f64 {
        let n = self.density.len();
        if x <= self.x0 {
            return 0.0;
        }
        if x >= self.length() {
            return self.cumulative[n - 1];
        }
        let pos = (x - self.x0) / self.dx;
        let i = (pos.floor() as usize).min(n - 2);
        let h = x - (self.x0 + i as f64 * self.dx);
        let n0 = self.density[i];
        let slope = (self.density[i + 1] - n0) / self.dx;
        self.cumulative[i] + n0 * h + 0.5 * slope * h * h
    }

    pub fn count(&self, x1: f64, x2: f64) -> f64 {
        (self.cumulative(x2) - self.cumulative(x1)).max(0.0)
    }
}

/// Poisson count with the given mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountDistribution {
    pub mean: f64,
    /// Set when the density came from the interacting (greenshield) model.
    pub approximate: bool,
}

impl CountDistribution {
    pub fn pmf(&self, k: u64) -> f64 {
        if self.mean == 0.0 {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        let kf = k as f64;
        (kf * self.mean.ln() - self.mean - ln_factorial(k)).exp()
    }

    pub fn cdf(&self, k: u64) -> f64 {
        let mut term = (-self.mean).exp();
        let mut acc = term;
        for i in 1..=k {
            term *= self.mean / i as f64;
            acc += term;
        }
        acc.min(1.0)
    }
}

fn ln_factorial(k: u64) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

pub fn count_distribution(profile: &DensityProfile, x1: f64, x2: f64, t: f64) -> Result<CountDistribution> {
    let mean = profile.expected_count(x1, x2, t)?;
    Ok(CountDistribution { mean, approximate: profile.approximate() })
}

fn clamp_density(v: f64, what: &str) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= -1e-9 {
        Ok(0.0)
    } else {
        Err(Error::Numerical(format!("negative density {v:e} at {what}")))
    }
}

pub fn solve_density(grid: &GridSpec, arrival: &ArrivalProcess, velocity: &VelocityProfile) -> Result<DensityProfile> {
    velocity.validate()?;
    grid.validate(velocity.v_free)?;
    match velocity.mode {
        VelocityMode::Independent => solve_independent(grid, arrival, velocity),
        VelocityMode::Greenshield => solve_greenshield(grid, arrival, velocity),
    }
}

fn grid_axes(grid: &GridSpec) -> (Vec<f64>, Vec<f64>) {
    let xs = (0..grid.nodes()).map(|i| i as f64 * grid.dx_km).collect();
    let times = (0..=grid.steps()).map(|k| k as f64 * grid.dt_min).collect();
    (xs, times)
}

#[derive(Clone, Copy)]
struct Marker {
    entry: f64,
    x: f64,
    log_j: f64,
}

fn rk4_marker(v: &VelocityProfile, m: &mut Marker, t: f64, h: f64) {
    let f = |x: f64, t: f64| (v.base(x, t), v.base_dx(x, t));
    let (k1x, k1j) = f(m.x, t);
    let (k2x, k2j) = f(m.x + 0.5 * h * k1x, t + 0.5 * h);
    let (k3x, k3j) = f(m.x + 0.5 * h * k2x, t + 0.5 * h);
    let (k4x, k4j) = f(m.x + h * k3x, t + h);
    m.x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    m.log_j += h / 6.0 * (k1j + 2.0 * k2j + 2.0 * k3j + k4j);
}

fn require_positive_speed(grid: &GridSpec, velocity: &VelocityProfile, xs: &[f64], times: &[f64]) -> Result<()> {
    for &t in times.iter().step_by(10) {
        for &x in xs {
            if velocity.base(x, t) <= 0.0 {
                return Err(Error::Config(format!(
                    "independent mode needs strictly positive speed; v({x:.3}, {t:.3}) = 0 (use greenshield mode for stop lines, dx = {})",
                    grid.dx_km
                )));
            }
        }
    }
    Ok(())
}

/// Characteristic solution: every grid step launches a marker at x = 0 carrying
/// its entry time and the log-Jacobian of the flow map, so that
/// n(X(t; s), t) = alpha(s) / v(0, s) * exp(-int_s^t v_x du).
fn solve_independent(grid: &GridSpec, arrival: &ArrivalProcess, velocity: &VelocityProfile) -> Result<DensityProfile> {
    let (xs, times) = grid_axes(grid);
    require_positive_speed(grid, velocity, &xs, &times)?;
    let m = xs.len();
    let length = xs[m - 1];
    let mut values = vec![0.0; m * times.len()];
    // markers ordered by entry time: oldest (furthest) first
    let mut markers: Vec<Marker> = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        if k > 0 {
            let h = grid.dt_min;
            let substeps = 4;
            for mk in markers.iter_mut() {
                for s in 0..substeps {
                    rk4_marker(velocity, mk, times[k - 1] + s as f64 * h / substeps as f64, h / substeps as f64);
                }
            }
            let keep_from = markers.iter().position(|mk| mk.x <= length + grid.dx_km).unwrap_or(markers.len());
            // keep one marker past the end so the last nodes interpolate
            markers.drain(..keep_from.saturating_sub(1));
        }
        markers.push(Marker { entry: t, x: 0.0, log_j: 0.0 });
        let dens = |mk: &Marker| arrival.rate(mk.entry) / velocity.base(0.0, mk.entry) * (-mk.log_j).exp();
        let row = &mut values[k * m..(k + 1) * m];
        // walk markers from the entry point outward
        let mut j = markers.len() - 1;
        for (i, &x) in xs.iter().enumerate() {
            while j > 0 && markers[j - 1].x < x {
                j -= 1;
            }
            let near = &markers[j];
            let v = if j == 0 {
                if (x - near.x).abs() < 1e-12 {
                    dens(near)
                } else {
                    0.0
                }
            } else {
                let far = &markers[j - 1];
                let span = far.x - near.x;
                let w = if span > 0.0 { (x - near.x) / span } else { 0.0 };
                dens(near) * (1.0 - w) + dens(far) * w
            };
            row[i] = clamp_density(v, &format!("x = {x}, t = {t}"))?;
        }
    }
    Ok(DensityProfile {
        xs,
        times,
        values,
        mode: VelocityMode::Independent,
        k_jam: velocity.k_jam,
        blocked_inflow: 0.0,
    })
}

/// Position at time `t` of the car that entered at time `s` (independent mode).
pub fn trajectory(velocity: &VelocityProfile, s: f64, t: f64) -> f64 {
    let mut mk = Marker { entry: s, x: 0.0, log_j: 0.0 };
    if t <= s {
        return 0.0;
    }
    let steps = ((t - s) / 0.001).ceil().max(1.0) as usize;
    let h = (t - s) / steps as f64;
    for i in 0..steps {
        rk4_marker(velocity, &mut mk, s + i as f64 * h, h);
    }
    mk.x
}

/// Entry time of the car located at `x` at time `t`, by bisection to 1e-6 min.
pub fn sigma(velocity: &VelocityProfile, x: f64, t: f64) -> Result<f64> {
    if x < 0.0 {
        return Err(Error::Domain(format!("x = {x} is before the road start")));
    }
    if x == 0.0 {
        return Ok(t);
    }
    let reach = trajectory(velocity, 0.0, t);
    if x > reach {
        return Err(Error::Domain(format!("no car has reached x = {x} by t = {t} (front at {reach:.4})")));
    }
    quad::bisect(|s| trajectory(velocity, s, t) - x, 0.0, t, 1e-6, 200)
        .ok_or_else(|| Error::Solver { what: "sigma bisection".into(), residual: f64::NAN })
}

/// Upwind step with the lookahead-limited Greenshield flux. The lookahead density
/// is at least the next cell's, so inflow never pushes a cell past k_jam while
/// v dt <= dx.
fn solve_greenshield(grid: &GridSpec, arrival: &ArrivalProcess, velocity: &VelocityProfile) -> Result<DensityProfile> {
    let (xs, times) = grid_axes(grid);
    let m = xs.len();
    let dx = grid.dx_km;
    let dt = grid.dt_min;
    let kj = velocity.k_jam;
    let window = ((velocity.lookahead_km / dx).round() as usize).max(1);
    let mut values = vec![0.0; m * times.len()];
    let mut n = vec![0.0; m];
    let mut flux = vec![0.0; m];
    let mut prefix = vec![0.0; m + 1];
    let mut blocked = 0.0;
    for k in 1..times.len() {
        let t = times[k - 1];
        for i in 0..m {
            prefix[i + 1] = prefix[i] + n[i];
        }
        for i in 0..m {
            // cells beyond the road copy the last cell
            let hi = i + window;
            let inside = hi.min(m - 1) - i;
            let sum = prefix[i + 1 + inside] - prefix[i + 1] + (window - inside) as f64 * n[m - 1];
            let next = if i + 1 < m { n[i + 1] } else { n[m - 1] };
            let ahead = (sum / window as f64).max(next);
            // no flux through a face that a red stop line cuts
            let blocked_face = velocity.stop_line(xs[i] + 1e-12, t).is_some_and(|l| l <= xs[i] + dx + 1e-12);
            let v = if blocked_face { 0.0 } else { velocity.base(xs[i] + 0.5 * dx, t) };
            flux[i] = n[i] * greenshield_speed(ahead.min(kj), v, kj)?;
        }
        let demand = arrival.rate(t);
        let v0 = velocity.base(0.0, t);
        let supply = if n[0] <= 0.5 * kj { 0.25 * v0 * kj } else { v0 * n[0] * (1.0 - n[0] / kj) };
        let inflow = demand.min(supply.max(0.0));
        blocked += (demand - inflow) * dt;
        let mut prev = inflow;
        for i in 0..m {
            let updated = n[i] + dt / dx * (prev - flux[i]);
            prev = flux[i];
            n[i] = clamp_density(updated, &format!("x = {}, t = {}", xs[i], times[k]))?;
            if n[i] > kj * (1.0 + 1e-9) {
                return Err(Error::Solver {
                    what: format!("density above k_jam at x = {}", xs[i]),
                    residual: n[i] - kj,
                });
            }
            n[i] = n[i].min(kj);
        }
        values[k * m..(k + 1) * m].copy_from_slice(&n);
    }
    Ok(DensityProfile { xs, times, values, mode: VelocityMode::Greenshield, k_jam: kj, blocked_inflow: blocked })
}
