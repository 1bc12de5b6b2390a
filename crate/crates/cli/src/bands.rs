// Published reference errors used by `--check`. Relative errors are
// fractions; the traffic-light averages are percentages.

/// Slack added to every reference band to allow for desk-scale trial counts.
pub const BAND_SLACK: f64 = 0.05;

pub const HOMOGENEOUS_W: [u32; 4] = [4, 8, 16, 32];

/// Homogeneous BPI error by arrival rate for W = 4, 8, 16, 32.
pub const BPI_REFERENCE: [(f64, [f64; 4]); 4] = [
    (5.0, [0.03, 0.03, 0.02, 0.0]),
    (10.0, [0.06, 0.07, 0.06, 0.11]),
    (20.0, [0.08, 0.09, 0.01, 0.06]),
    (30.0, [0.06, 0.07, 0.06, 0.05]),
];

/// Homogeneous delay error by arrival rate for W = 4, 8, 16, 32, 64.
pub const DELAY_W: [u32; 5] = [4, 8, 16, 32, 64];
pub const DELAY_REFERENCE: [(f64, [f64; 5]); 6] = [
    (2.0, [0.08, 0.02, 0.03, 0.06, 0.08]),
    (5.0, [0.13, 0.07, 0.0, 0.05, 0.08]),
    (10.0, [0.13, 0.02, 0.0, 0.04, 0.02]),
    (20.0, [0.0, 0.03, 0.01, 0.02, 0.04]),
    (30.0, [0.04, 0.05, 0.07, 0.05, 0.02]),
    (40.0, [0.03, 0.02, 0.07, 0.09, 0.0]),
];

/// Homogeneous throughput error by arrival rate for W = 4, 8, 16, 32.
pub const THROUGHPUT_REFERENCE: [(f64, [f64; 4]); 5] = [
    (2.0, [0.07, 0.08, 0.26, 0.43]),
    (5.0, [0.14, 0.04, 0.04, 0.07]),
    (10.0, [0.02, 0.05, 0.08, 0.11]),
    (20.0, [0.06, 0.06, 0.08, 0.01]),
    (30.0, [0.10, 0.01, 0.01, 0.10]),
];

/// Per-cell bands: the largest reference error of the table applies to every
/// cell, except that a larger cell value (the sparse-traffic throughput
/// outliers) is its own band.
pub fn bpi_band(_rate: f64, _w: u32) -> f64 {
    0.11 + BAND_SLACK
}

pub fn delay_band(_rate: f64, _w: u32) -> f64 {
    0.13 + BAND_SLACK
}

pub fn throughput_band(rate: f64, w: u32) -> f64 {
    let cell = THROUGHPUT_REFERENCE
        .iter()
        .find(|r| r.0 == rate)
        .and_then(|r| HOMOGENEOUS_W.iter().position(|&x| x == w).map(|c| r.1[c]))
        .unwrap_or(0.0);
    cell.max(0.14) + BAND_SLACK
}

/// Traffic-light average relative errors in percent for W = 4, 8, 16, 32.
pub const PROFILE_BPI_REFERENCE: [f64; 4] = [14.71, 7.34, 9.98, 11.27];
pub const PROFILE_DELAY_REFERENCE: [f64; 4] = [2.32, 1.28, 7.59, 0.79];
pub const PROFILE_THROUGHPUT_REFERENCE: [f64; 4] = [11.59, 5.31, 6.58, 3.31];

/// Coordinated throughput target and tolerance, packets per second.
pub const COORDINATED_TARGET: f64 = 250.0;
pub const COORDINATED_TOLERANCE: f64 = 5.0;
