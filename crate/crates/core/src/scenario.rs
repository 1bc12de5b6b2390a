//! Scenario files: road, traffic, lights, MAC and simulation settings in one
//! TOML document with typed sections.
//!
//! Times in a scenario file run on the scenario clock. The road is simulated
//! for `warmup_min` before that clock starts so it is already filled at t = 0;
//! `internal_time` converts to the solver clock.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contention::MacConfig;
use crate::error::{Error, Result};
use crate::simulator::{Road, SimConfig};
use crate::traffic_model::{ArrivalProcess, GridSpec, Light, VelocityMode, VelocityProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    /// Performance along the road at one time.
    Profile,
    /// Homogeneous traffic at a list of arrival rates, measured in a window.
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadSection {
    pub length_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalSection {
    /// `(start_min, cars_per_min)` on the scenario clock. The first rate also
    /// covers the warm-up.
    #[serde(default)]
    pub rates: Vec<(f64, f64)>,
    /// Constant rates for a sweep; simulated and evaluated.
    #[serde(default)]
    pub sweep: Vec<f64>,
    /// Extra sweep rates evaluated analytically only.
    #[serde(default)]
    pub analytic_only: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySection {
    pub mode: VelocityMode,
    pub v_free: f64,
    #[serde(default = "infinite")]
    pub k_jam: f64,
    #[serde(default)]
    pub lookahead_km: f64,
}

fn infinite() -> f64 {
    f64::INFINITY
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub dx_km: f64,
    pub dt_min: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { dx_km: 0.01, dt_min: 0.005 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub time_min: f64,
    /// Sweep scenarios: the simulator aggregates this window and the analytical
    /// model is evaluated at its centre.
    #[serde(default)]
    pub window_km: Option<(f64, f64)>,
    #[serde(default = "default_tau")]
    pub tau: String,
    #[serde(default = "default_interference")]
    pub interference: String,
}

fn default_tau() -> String {
    "exact".into()
}

fn default_interference() -> String {
    "linear".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub trials: u32,
    pub seed: u64,
    pub mobility_tick_min: f64,
    /// Snapshot times on the scenario clock. When empty, `cch_cycles`
    /// consecutive beacon periods ending at the evaluation time are used.
    pub snapshot_times: Vec<f64>,
    pub cch_cycles: u32,
    pub mac_repeats: u32,
    pub bin_km: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            trials: 200,
            seed: 42,
            mobility_tick_min: 0.005,
            snapshot_times: Vec::new(),
            cch_cycles: 10,
            mac_repeats: 1,
            bin_km: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub densities: Vec<f64>,
    pub w_values: Vec<u32>,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self { densities: vec![1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 60.0], w_values: vec![4, 8, 16, 32] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub warmup_min: f64,
    pub w_ss: Vec<u32>,
    pub road: RoadSection,
    pub arrival: ArrivalSection,
    pub velocity: VelocitySection,
    #[serde(default)]
    pub lights: Vec<Light>,
    #[serde(default)]
    pub grid: GridSection,
    pub eval: EvalSection,
    #[serde(default)]
    pub mac: MacConfig,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn internal_time(&self, t: f64) -> f64 {
        t + self.warmup_min
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.road.length_km > 0.0) || !self.road.length_km.is_finite() {
            return bad("road.length_km must be positive".into());
        }
        if !(self.warmup_min >= 0.0) {
            return bad("warmup_min must be non-negative".into());
        }
        if self.w_ss.is_empty() || self.w_ss.contains(&0) {
            return bad("w_ss must list at least one window of size >= 1".into());
        }
        self.mac.validate()?;
        if self.mac.r_s_km > self.road.length_km {
            return bad("transmission range exceeds the road length".into());
        }
        if !(self.eval.time_min >= 0.0) {
            return bad("eval.time_min must be non-negative".into());
        }
        crate::registry::interference(&self.eval.interference)?;
        if !crate::registry::TAU_MODES.contains(&self.eval.tau.as_str()) {
            return bad(format!("unknown tau mode '{}'", self.eval.tau));
        }
        match self.kind {
            ScenarioKind::Profile => {
                if self.arrival.rates.is_empty() {
                    return bad("profile scenarios need arrival.rates".into());
                }
            }
            ScenarioKind::Sweep => {
                if self.arrival.sweep.is_empty() {
                    return bad("sweep scenarios need arrival.sweep".into());
                }
                if self.arrival.sweep.iter().chain(&self.arrival.analytic_only).any(|r| !(*r >= 0.0)) {
                    return bad("sweep rates must be non-negative".into());
                }
                match self.eval.window_km {
                    Some((lo, hi)) if lo >= 0.0 && hi > lo && hi <= self.road.length_km => {}
                    _ => return bad("sweep scenarios need eval.window_km inside the road".into()),
                }
            }
        }
        for l in &self.lights {
            if !(0.0..=self.road.length_km).contains(&l.position_km) {
                return bad(format!("light at {} km is off the road", l.position_km));
            }
            let mut red = l.red.clone();
            red.sort_by(|a, b| a.0.total_cmp(&b.0));
            if red.windows(2).any(|w| w[1].0 < w[0].1) {
                return bad(format!("red intervals of the light at {} km overlap", l.position_km));
            }
            // the grid has to resolve the deceleration zone
            for seg in l.ramp.windows(2) {
                if self.grid.dx_km > 0.5 * (seg[1].0 - seg[0].0) {
                    return bad(format!(
                        "grid dx {} km does not resolve the ramp segment [{}, {}] km",
                        self.grid.dx_km, seg[0].0, seg[1].0
                    ));
                }
            }
        }
        let velocity = self.velocity_profile();
        velocity.validate()?;
        self.grid_spec(self.eval.time_min).validate(self.velocity.v_free)?;
        self.sim_config()?.validate(self.grid.dt_min)?;
        if self.sim.cch_cycles == 0 {
            return bad("sim.cch_cycles must be positive".into());
        }
        Ok(())
    }

    /// Arrival rates on the solver clock; `rate` replaces the table in sweeps.
    pub fn arrival_process(&self, rate: Option<f64>) -> Result<ArrivalProcess> {
        if let Some(r) = rate {
            return ArrivalProcess::constant(r);
        }
        let mut pieces: Vec<(f64, f64)> = self.arrival.rates.clone();
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
        let shifted = pieces
            .iter()
            .enumerate()
            .map(|(i, &(t, r))| (if i == 0 { 0.0 } else { self.internal_time(t) }, r))
            .collect();
        ArrivalProcess::new(shifted)
    }

    pub fn velocity_profile(&self) -> VelocityProfile {
        let lights = self
            .lights
            .iter()
            .map(|l| Light {
                red: l.red.iter().map(|&(a, b)| (self.internal_time(a), self.internal_time(b))).collect(),
                ..l.clone()
            })
            .collect();
        VelocityProfile {
            v_free: self.velocity.v_free,
            mode: self.velocity.mode,
            k_jam: self.velocity.k_jam,
            lookahead_km: self.velocity.lookahead_km,
            lights,
        }
    }

    /// Grid reaching scenario time `t`.
    pub fn grid_spec(&self, t: f64) -> GridSpec {
        GridSpec {
            length_km: self.road.length_km,
            dx_km: self.grid.dx_km,
            dt_min: self.grid.dt_min,
            horizon_min: self.internal_time(t),
        }
    }

    pub fn road(&self, rate: Option<f64>) -> Result<Road> {
        Ok(Road {
            length_km: self.road.length_km,
            arrival: self.arrival_process(rate)?,
            velocity: self.velocity_profile(),
        })
    }

    /// Snapshot times on the scenario clock.
    pub fn snapshot_times(&self) -> Vec<f64> {
        if !self.sim.snapshot_times.is_empty() {
            return self.sim.snapshot_times.clone();
        }
        let period = self.mac.channel_period_min();
        (0..self.sim.cch_cycles).rev().map(|k| (self.eval.time_min - k as f64 * period).max(0.0)).collect()
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        Ok(SimConfig {
            trials: self.sim.trials,
            seed: self.sim.seed,
            mobility_tick_min: self.sim.mobility_tick_min,
            snapshot_times: self.snapshot_times().iter().map(|&t| self.internal_time(t)).collect(),
            mac_repeats: self.sim.mac_repeats,
            bin_km: self.sim.bin_km,
            window_km: match self.kind {
                ScenarioKind::Sweep => self.eval.window_km,
                ScenarioKind::Profile => None,
            },
        })
    }

    /// Evaluation points: simulator bin centres for profiles, the window centre
    /// for sweeps.
    pub fn locations(&self) -> Vec<f64> {
        match self.kind {
            ScenarioKind::Profile => {
                let n = (self.road.length_km / self.sim.bin_km).ceil() as usize;
                (0..n).map(|i| crate::simulator::bin_centre(i, self.sim.bin_km).min(self.road.length_km)).collect()
            }
            ScenarioKind::Sweep => {
                let (lo, hi) = self.eval.window_km.expect("validated");
                vec![0.5 * (lo + hi)]
            }
        }
    }

    /// Every sweep rate, simulated ones first, sorted and deduplicated.
    pub fn sweep_rates(&self, include_analytic_only: bool) -> Vec<f64> {
        let mut r = self.arrival.sweep.clone();
        if include_analytic_only {
            r.extend(&self.arrival.analytic_only);
        }
        r.sort_by(f64::total_cmp);
        r.dedup();
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
kind = "profile"
warmup_min = 5.0
w_ss = [16]
[road]
length_km = 5.0
[arrival]
rates = [[0.0, 10.0]]
[velocity]
mode = "independent"
v_free = 1.0
[eval]
time_min = 4.5
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(s.mac, MacConfig::default());
        assert_eq!(s.sim.trials, 200);
        assert_eq!(s.locations().len(), 50);
        let snaps = s.sim_config().unwrap().snapshot_times;
        assert_eq!(snaps.len(), 10);
        assert!((snaps[9] - 9.5).abs() < 1e-12);
        assert!((snaps[9] - snaps[8] - 0.1 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_field_reports_its_location() {
        let text = MINIMAL.replace("[road]", "[road]\nlenght = 3");
        let e = Scenario::from_toml(&text).unwrap_err().to_string();
        assert!(e.contains("lenght"), "{e}");
        assert!(e.contains("line"), "{e}");
    }

    #[test]
    fn lights_shift_with_warmup() {
        let text =
            format!("{MINIMAL}\n[[lights]]\nposition_km = 2.0\nred = [[4.0, 4.5]]\nramp = [[-0.3, 1.0], [0.0, 0.0]]\n");
        let s = Scenario::from_toml(&text).unwrap();
        let v = s.velocity_profile();
        assert!(v.lights[0].is_red(9.5));
        assert!(!v.lights[0].is_red(4.5));
    }

    #[test]
    fn rejects_overlapping_red_and_coarse_grid() {
        let overlap = format!("{MINIMAL}\n[[lights]]\nposition_km = 2.0\nred = [[4.0, 4.5], [4.4, 5.0]]\nramp = []\n");
        assert!(Scenario::from_toml(&overlap).is_err());
        let coarse = format!(
            "{MINIMAL}\n[[lights]]\nposition_km = 2.0\nred = [[4.0, 4.5]]\nramp = [[-0.01, 1.0], [0.0, 0.0]]\n"
        );
        assert!(Scenario::from_toml(&coarse).is_err());
    }
}
