use beacon_core::contention::fit_tau_coefficients;
use beacon_core::performance::{coordinated_estimate, evaluate_locations, PerfResult};
use beacon_core::registry;
use beacon_core::scenario::{Scenario, ScenarioKind};
use beacon_core::simulator::{simulate, BinStats};
use beacon_core::traffic_model::{solve_density, DensityProfile};
use beacon_core::validation::{build_report, ComparisonReport, DEFAULT_SIGNIFICANCE};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{records_to_csv, write_rows, write_text};
use crate::{config_err, Prepared, RunFailure, RunOutcome};

#[derive(Debug, Clone, Serialize)]
pub struct PerfRow {
    pub location_km: f64,
    pub density: f64,
    pub bpi: f64,
    pub delay_slots: f64,
    pub throughput_pps: f64,
    pub w_ss: u32,
    pub rate_per_min: Option<f64>,
    pub time_min: f64,
    pub n_target: f64,
    pub n_contention: f64,
    pub no_audience: bool,
    pub extrapolated: bool,
}

impl PerfRow {
    fn new(r: &PerfResult, rate: Option<f64>, time_min: f64) -> Self {
        Self {
            location_km: r.location_km,
            density: r.density,
            bpi: r.bpi,
            delay_slots: r.delay_slots,
            throughput_pps: r.throughput,
            w_ss: r.w_ss,
            rate_per_min: rate,
            time_min,
            n_target: r.n_target,
            n_contention: r.n_contention,
            no_audience: r.no_audience,
            extrapolated: r.extrapolated,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimRow {
    pub location_km: f64,
    pub density: f64,
    pub bpi: Option<f64>,
    pub delay_slots: Option<f64>,
    pub throughput_pps: Option<f64>,
    pub w_ss: u32,
    pub rate_per_min: Option<f64>,
    pub bpi_ci95: Option<f64>,
    pub delay_ci95: Option<f64>,
    pub cars: u64,
    pub senders: u64,
    pub audience_cars: u64,
    pub trials: u32,
    pub snapshots: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
struct DensityRow {
    rate_per_min: Option<f64>,
    x_km: f64,
    t_min: f64,
    density: f64,
}

/// Analytical results: one row list per W (in scenario order), plus the
/// density slice at the evaluation time for each rate.
pub struct Analytic {
    pub by_w: Vec<(u32, Vec<PerfRow>)>,
    pub slices: Vec<(Option<f64>, Vec<f64>, Vec<f64>)>,
}

impl Analytic {
    pub fn rows(&self, w: u32) -> Option<&[PerfRow]> {
        self.by_w.iter().find(|r| r.0 == w).map(|r| r.1.as_slice())
    }
}

pub struct Simulated {
    pub by_w: Vec<(u32, Vec<SimRow>)>,
}

impl Simulated {
    pub fn rows(&self, w: u32) -> Option<&[SimRow]> {
        self.by_w.iter().find(|r| r.0 == w).map(|r| r.1.as_slice())
    }
}

fn rates(s: &Scenario, include_analytic_only: bool) -> Vec<Option<f64>> {
    match s.kind {
        ScenarioKind::Profile => vec![None],
        ScenarioKind::Sweep => s.sweep_rates(include_analytic_only).into_iter().map(Some).collect(),
    }
}

fn solve(s: &Scenario, rate: Option<f64>) -> Result<DensityProfile, RunFailure> {
    let grid = s.grid_spec(s.eval.time_min);
    Ok(solve_density(&grid, &s.arrival_process(rate)?, &s.velocity_profile())?)
}

/// Evaluate every (rate, W) cell of the scenario.
pub fn evaluate(p: &Prepared) -> Result<Analytic, RunFailure> {
    let s = &p.scenario;
    let t = s.internal_time(s.eval.time_min);
    let locations = s.locations();
    type RateCell = (Option<f64>, Vec<f64>, Vec<f64>, Vec<Vec<PerfRow>>);
    let per_rate: Vec<RateCell> = rates(s, true)
        .into_par_iter()
        .map(|rate| -> Result<_, RunFailure> {
            let profile = solve(s, rate)?;
            let interference = registry::interference(&s.eval.interference)?;
            let mut rows = Vec::with_capacity(s.w_ss.len());
            for &w in &s.w_ss {
                let tau = registry::tau_estimator(&s.eval.tau, p.coeffs.clone())?;
                let mac = s.mac.with_w(w);
                let res = evaluate_locations(&profile, t, &locations, &mac, tau.as_ref(), interference.as_ref())?;
                rows.push(res.iter().map(|r| PerfRow::new(r, rate, s.eval.time_min)).collect());
            }
            Ok((rate, profile.xs().to_vec(), profile.slice(t)?, rows))
        })
        .collect::<Result<_, _>>()?;
    let mut by_w: Vec<(u32, Vec<PerfRow>)> = s.w_ss.iter().map(|&w| (w, Vec::new())).collect();
    let mut slices = Vec::new();
    for (rate, xs, n, rows) in per_rate {
        for (slot, r) in by_w.iter_mut().zip(rows) {
            slot.1.extend(r);
        }
        slices.push((rate, xs, n));
    }
    Ok(Analytic { by_w, slices })
}

pub fn analytical(p: &Prepared, outcome: &mut RunOutcome) -> Result<Analytic, RunFailure> {
    let a = evaluate(p)?;
    let density: Vec<DensityRow> = a
        .slices
        .iter()
        .flat_map(|(rate, xs, n)| {
            xs.iter().zip(n).map(|(&x, &d)| DensityRow {
                rate_per_min: *rate,
                x_km: x,
                t_min: p.scenario.eval.time_min,
                density: d,
            })
        })
        .collect();
    write_rows(p, "density.csv", &density, outcome)?;
    for (w, rows) in &a.by_w {
        write_rows(p, &format!("perf_W{w}.csv"), rows, outcome)?;
    }
    Ok(a)
}

fn sim_row(b: &BinStats, x: f64, density: f64, w: u32, rate: Option<f64>, snapshots: u64, p: &Prepared) -> SimRow {
    SimRow {
        location_km: x,
        density,
        bpi: b.bpi(),
        delay_slots: b.delay(),
        throughput_pps: b.throughput(p.scenario.mac.slot_s()),
        w_ss: w,
        rate_per_min: rate,
        bpi_ci95: b.bpi_half_width(),
        delay_ci95: b.delay_half_width(),
        cars: b.cars,
        senders: b.sent,
        audience_cars: b.bpi_n,
        trials: p.scenario.sim.trials,
        snapshots,
        seed: p.scenario.sim.seed,
    }
}

pub fn simulated(p: &Prepared, outcome: &mut RunOutcome) -> Result<Simulated, RunFailure> {
    let s = &p.scenario;
    let sim = s.sim_config()?;
    let mut by_w: Vec<(u32, Vec<SimRow>)> = s.w_ss.iter().map(|&w| (w, Vec::new())).collect();
    for rate in rates(s, false) {
        let road = s.road(rate)?;
        let results = simulate(&road, &s.mac, &s.w_ss, &sim)?;
        for (slot, r) in by_w.iter_mut().zip(&results) {
            match (s.kind, sim.window_km) {
                (ScenarioKind::Sweep, Some(win)) => {
                    let b = r.window.clone().unwrap_or_default();
                    let d = r.window_density(win).unwrap_or(0.0);
                    slot.1.push(sim_row(&b, 0.5 * (win.0 + win.1), d, r.w_ss, rate, r.snapshots, p));
                }
                _ => {
                    for (i, b) in r.bins.iter().enumerate() {
                        slot.1.push(sim_row(b, r.bin_centre(i), r.density[i], r.w_ss, rate, r.snapshots, p));
                    }
                }
            }
        }
    }
    for (w, rows) in &by_w {
        write_rows(p, &format!("sim_W{w}.csv"), rows, outcome)?;
    }
    Ok(Simulated { by_w })
}

type Pick = fn(&PerfRow, &SimRow) -> (f64, Option<f64>);

const METRICS: [(&str, Pick); 3] = [
    ("bpi", |a, s| (a.bpi, s.bpi)),
    ("delay", |a, s| (a.delay_slots, s.delay_slots)),
    ("throughput", |a, s| (a.throughput_pps, s.throughput_pps)),
];

/// Analytical and simulated rows are matched by rate (sweeps) or location
/// (profiles). Locations without an analytical audience are left out of the
/// comparison.
pub fn reports(
    p: &Prepared,
    a: &Analytic,
    s: &Simulated,
    outcome: &mut RunOutcome,
) -> Result<Vec<ComparisonReport>, RunFailure> {
    let sc = &p.scenario;
    let (row_label, keys): (&str, Vec<f64>) = match sc.kind {
        ScenarioKind::Sweep => ("lambda", sc.sweep_rates(false)),
        ScenarioKind::Profile => ("location_km", sc.locations()),
    };
    let key = |rate: Option<f64>, x: f64| match sc.kind {
        ScenarioKind::Sweep => rate.unwrap_or(f64::NAN),
        ScenarioKind::Profile => x,
    };
    let same = |u: f64, v: f64| (u - v).abs() < 1e-9;
    let mut out = Vec::new();
    for (metric, pick) in METRICS {
        let mut an = vec![vec![f64::NAN; sc.w_ss.len()]; keys.len()];
        let mut sm = vec![vec![None; sc.w_ss.len()]; keys.len()];
        for (c, &w) in sc.w_ss.iter().enumerate() {
            let (ar, sr) = (a.rows(w).unwrap_or(&[]), s.rows(w).unwrap_or(&[]));
            for (r, &k) in keys.iter().enumerate() {
                let ra = ar.iter().find(|x| same(key(x.rate_per_min, x.location_km), k));
                let rs = sr.iter().find(|x| same(key(x.rate_per_min, x.location_km), k));
                if let (Some(ra), Some(rs)) = (ra, rs) {
                    let (va, vs) = pick(ra, rs);
                    an[r][c] = va;
                    sm[r][c] = if ra.no_audience { None } else { vs };
                }
            }
        }
        if an.iter().flatten().any(|v| v.is_nan()) {
            return Err(RunFailure {
                status: crate::ExitStatus::SolverFailure,
                message: format!("analytical and simulated grids do not line up for {metric}"),
            });
        }
        let rep = build_report(metric, row_label, &keys, &sc.w_ss, &an, &sm, DEFAULT_SIGNIFICANCE)?;
        write_text(p, &format!("report_{metric}.csv"), &rep.to_csv(), outcome)?;
        write_text(p, &format!("report_{metric}.txt"), &rep.to_text(), outcome)?;
        out.push(rep);
    }
    Ok(out)
}

/// Per W: density of the throughput peak, smallest BPI, largest delay.
pub fn headline(s: &Scenario, a: &Analytic) -> Vec<String> {
    let mut lines = Vec::new();
    for (w, rows) in &a.by_w {
        let live: Vec<&PerfRow> = rows.iter().filter(|r| !r.no_audience).collect();
        let Some(peak) = live.iter().max_by(|x, y| x.throughput_pps.total_cmp(&y.throughput_pps)) else {
            lines.push(format!("W={w}: no location with an audience"));
            continue;
        };
        let min_bpi = live.iter().min_by(|x, y| x.bpi.total_cmp(&y.bpi)).unwrap();
        let max_delay = live.iter().max_by(|x, y| x.delay_slots.total_cmp(&y.delay_slots)).unwrap();
        let at = |r: &PerfRow| match s.kind {
            ScenarioKind::Sweep => format!("{:.1} cars/km", r.density),
            ScenarioKind::Profile => format!("{:.2} km", r.location_km),
        };
        lines.push(format!(
            "W={w}: peak throughput {:.1} pkt/s at {}; min BPI {:.3} at {}; max delay {:.0} slots at {}",
            peak.throughput_pps,
            at(peak),
            min_bpi.bpi,
            at(min_bpi),
            max_delay.delay_slots,
            at(max_delay),
        ));
    }
    lines
}

pub fn calibrate(p: &Prepared, outcome: &mut RunOutcome) -> Result<(), RunFailure> {
    let s = &p.scenario;
    let c = fit_tau_coefficients(&s.calibration.densities, &s.calibration.w_values, &s.mac)?;
    write_text(p, "tau_fit.toml", &c.to_toml(), outcome)?;
    let head: Vec<String> =
        ["rate", "density", "w_ss", "target", "fitted", "rel_err"].iter().map(|h| h.to_string()).collect();
    let mut records = Vec::new();
    for (name, fit) in [("same_slot", &c.same_slot), ("overlap", &c.overlap)] {
        for &(n, w, y, f) in &fit.points {
            let e = ((f - y) / y).abs();
            records.push(vec![
                name.to_string(),
                n.to_string(),
                w.to_string(),
                y.to_string(),
                f.to_string(),
                e.to_string(),
            ]);
        }
    }
    write_text(p, "tau_fit.csv", &records_to_csv(&head, &records)?, outcome)?;
    outcome.summary.push(format!(
        "fit max relative error: same-slot {:.1}%, overlap {:.1}%",
        100.0 * c.same_slot.max_rel_err,
        100.0 * c.overlap.max_rel_err
    ));
    if !c.passes() {
        let worst: Vec<String> = c
            .same_slot
            .worst(3)
            .iter()
            .map(|(n, w, e)| format!("same-slot n={n} W={w} {:.1}%", 100.0 * e))
            .chain(c.overlap.worst(3).iter().map(|(n, w, e)| format!("overlap n={n} W={w} {:.1}%", 100.0 * e)))
            .collect();
        outcome.summary.push(format!("calibration above ceiling; worst points: {}", worst.join(", ")));
        outcome.calibration_failed = true;
    }
    Ok(())
}

pub struct CoordinatedRow {
    pub density: f64,
    pub throughput_pps: f64,
    /// CSMA/CA analytical throughput for each scenario W at the same density.
    pub csma: Vec<(u32, f64)>,
}

pub fn coordinated(p: &Prepared, overhead: f64, outcome: &mut RunOutcome) -> Result<Vec<CoordinatedRow>, RunFailure> {
    let s = &p.scenario;
    if s.kind != ScenarioKind::Sweep {
        return Err(config_err("the coordinated pipeline needs a sweep scenario".into()));
    }
    let a = evaluate(p)?;
    let mut head: Vec<String> =
        ["density", "frame_slots", "delay_slots", "bpi", "throughput_pps"].iter().map(|h| h.to_string()).collect();
    head.extend(s.w_ss.iter().map(|w| format!("csma_W{w}_throughput_pps")));
    let mut records = Vec::new();
    let mut rows = Vec::new();
    let first = &a.by_w[0].1;
    for (i, base) in first.iter().enumerate() {
        let c = coordinated_estimate(base.density, &s.mac, overhead)?;
        let csma: Vec<(u32, f64)> = a.by_w.iter().map(|(w, r)| (*w, r[i].throughput_pps)).collect();
        let mut rec = vec![
            base.density.to_string(),
            c.frame_slots.to_string(),
            c.delay_slots.to_string(),
            c.bpi.to_string(),
            c.throughput.to_string(),
        ];
        rec.extend(csma.iter().map(|(_, t)| t.to_string()));
        records.push(rec);
        rows.push(CoordinatedRow { density: base.density, throughput_pps: c.throughput, csma });
    }
    write_text(p, "coordinated.csv", &records_to_csv(&head, &records)?, outcome)?;
    if let (Some(lo), Some(hi)) =
        (rows.iter().map(|r| r.throughput_pps).reduce(f64::min), rows.iter().map(|r| r.throughput_pps).reduce(f64::max))
    {
        outcome.summary.push(format!("coordinated throughput {lo:.1} to {hi:.1} pkt/s (overhead {overhead})"));
    }
    Ok(rows)
}
