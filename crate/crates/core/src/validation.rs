//! Analytical-versus-simulated agreement: relative errors and the two-sample
//! Kolmogorov-Smirnov test, arranged as rate-by-W (or location-by-W) tables.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_SIGNIFICANCE: f64 = 0.10;

/// Pointwise comparison of two aligned series, the simulated one as reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSeries {
    /// `None` where the reference is zero and the analytical value is not.
    pub relative: Vec<Option<f64>>,
    pub absolute: Vec<f64>,
    /// Indices excluded from the relative average.
    pub flagged: Vec<usize>,
    pub mean_relative: Option<f64>,
    pub max_relative: Option<f64>,
    pub mean_absolute: f64,
}

fn rel_err(a: f64, s: f64) -> Option<f64> {
    if s == 0.0 {
        (a == 0.0).then_some(0.0)
    } else {
        Some((a - s).abs() / s.abs())
    }
}

pub fn relative_error(analytical: &[f64], simulated: &[f64]) -> Result<ErrorSeries> {
    if analytical.len() != simulated.len() {
        return Err(Error::Input(format!(
            "series not aligned: {} analytical vs {} simulated points",
            analytical.len(),
            simulated.len()
        )));
    }
    if analytical.is_empty() {
        return Err(Error::Input("empty series".into()));
    }
    let rel: Vec<Option<f64>> = analytical.iter().zip(simulated).map(|(&a, &s)| rel_err(a, s)).collect();
    let abs: Vec<f64> = analytical.iter().zip(simulated).map(|(a, s)| (a - s).abs()).collect();
    let flagged = rel.iter().enumerate().filter(|r| r.1.is_none()).map(|r| r.0).collect();
    let kept: Vec<f64> = rel.iter().flatten().copied().collect();
    Ok(ErrorSeries {
        mean_relative: (!kept.is_empty()).then(|| kept.iter().sum::<f64>() / kept.len() as f64),
        max_relative: kept.iter().copied().reduce(f64::max),
        mean_absolute: abs.iter().sum::<f64>() / abs.len() as f64,
        relative: rel,
        absolute: abs,
        flagged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// 1 when the two samples are judged to come from different laws.
    pub decision: u8,
}

/// Largest gap between the two empirical CDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        // step past every copy of the smaller value in both samples
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Kolmogorov survival function Q(l) = 2 sum (-1)^(k-1) exp(-2 k^2 l^2).
pub fn kolmogorov_q(l: f64) -> f64 {
    if l < 0.2 {
        // the alternating series converges too slowly here and Q is 1 to
        // double precision anyway
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * l * l).exp();
        sum += sign * term;
        if term < 1e-16 * sum.abs().max(1e-300) {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample K-S test with the asymptotic p-value and the usual small-sample
/// correction l = (sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) D.
pub fn ks_test(a: &[f64], b: &[f64], significance: f64) -> Result<KsResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Input("K-S test needs at least two points per sample".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Input("K-S samples must be finite".into()));
    }
    let d = ks_statistic(a, b);
    let ne = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64;
    let en = ne.sqrt();
    let p = kolmogorov_q((en + 0.12 + 0.11 / en) * d);
    Ok(KsResult { statistic: d, p_value: p, decision: u8::from(p < significance) })
}

/// Relative errors on a row-by-W grid plus row and column K-S tests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub metric: String,
    pub row_label: String,
    pub rows: Vec<f64>,
    pub w_values: Vec<u32>,
    pub analytical: Vec<Vec<f64>>,
    pub simulated: Vec<Vec<Option<f64>>>,
    /// `None` where the simulated value is undefined or zero.
    pub relative: Vec<Vec<Option<f64>>>,
    pub row_ks: Vec<Option<KsResult>>,
    pub col_ks: Vec<Option<KsResult>>,
    pub col_mean_relative: Vec<Option<f64>>,
    pub col_mean_absolute: Vec<Option<f64>>,
    pub flagged: Vec<(usize, usize)>,
}

fn ks_pairs(pairs: &[(f64, f64)], significance: f64) -> Option<KsResult> {
    let (a, s): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    ks_test(&a, &s, significance).ok()
}

/// Build the report. `simulated[r][c]` is `None` where the simulator has no
/// defined value (for instance no car had an audience); such cells are
/// excluded and flagged. A shape mismatch is an incomplete-report error.
pub fn build_report(
    metric: &str,
    row_label: &str,
    rows: &[f64],
    w_values: &[u32],
    analytical: &[Vec<f64>],
    simulated: &[Vec<Option<f64>>],
    significance: f64,
) -> Result<ComparisonReport> {
    let mut gaps = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        for (c, w) in w_values.iter().enumerate() {
            let a = analytical.get(r).and_then(|v| v.get(c));
            let s = simulated.get(r).and_then(|v| v.get(c));
            if a.is_none() || s.is_none() {
                gaps.push(format!("({row_label}={row}, W={w})"));
            }
        }
    }
    if !gaps.is_empty() || analytical.len() != rows.len() || simulated.len() != rows.len() {
        return Err(Error::Input(format!("incomplete report for {metric}; missing cells: {}", gaps.join(" "))));
    }
    let mut relative = vec![vec![None; w_values.len()]; rows.len()];
    let mut flagged = Vec::new();
    for r in 0..rows.len() {
        for c in 0..w_values.len() {
            relative[r][c] = simulated[r][c].and_then(|s| rel_err(analytical[r][c], s));
            if relative[r][c].is_none() {
                flagged.push((r, c));
            }
        }
    }
    let pairs_row = |r: usize| -> Vec<(f64, f64)> {
        (0..w_values.len()).filter_map(|c| simulated[r][c].map(|s| (analytical[r][c], s))).collect()
    };
    let pairs_col = |c: usize| -> Vec<(f64, f64)> {
        (0..rows.len()).filter_map(|r| simulated[r][c].map(|s| (analytical[r][c], s))).collect()
    };
    let col_mean = |f: &dyn Fn(usize) -> Option<f64>| {
        let v: Vec<f64> = (0..rows.len()).filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(ComparisonReport {
        metric: metric.into(),
        row_label: row_label.into(),
        rows: rows.to_vec(),
        w_values: w_values.to_vec(),
        row_ks: (0..rows.len()).map(|r| ks_pairs(&pairs_row(r), significance)).collect(),
        col_ks: (0..w_values.len()).map(|c| ks_pairs(&pairs_col(c), significance)).collect(),
        col_mean_relative: (0..w_values.len()).map(|c| col_mean(&|r| relative[r][c])).collect(),
        col_mean_absolute: (0..w_values.len())
            .map(|c| col_mean(&|r| simulated[r][c].map(|s| (analytical[r][c] - s).abs())))
            .collect(),
        analytical: analytical.to_vec(),
        simulated: simulated.to_vec(),
        relative,
        flagged,
    })
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

fn fmt_ks(k: &Option<KsResult>) -> (String, String) {
    match k {
        Some(k) => (k.decision.to_string(), format!("{:.2}", k.p_value)),
        None => ("-".into(), "-".into()),
    }
}

impl ComparisonReport {
    pub fn max_relative(&self) -> Option<f64> {
        self.relative.iter().flatten().flatten().copied().reduce(f64::max)
    }

    pub fn all_ks_accept(&self) -> bool {
        self.row_ks.iter().chain(&self.col_ks).flatten().all(|k| k.decision == 0)
    }

    /// Relative-error table with the K-S decision and p-value appended to each
    /// row and column, then the per-W averages.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let ws: Vec<String> = self.w_values.iter().map(|w| format!("W{w}")).collect();
        let _ = writeln!(out, "{},{},ks_decision,ks_p", self.row_label, ws.join(","));
        for (r, row) in self.rows.iter().enumerate() {
            let cells: Vec<String> = self.relative[r].iter().map(|v| fmt_opt(*v, 4)).collect();
            let (d, p) = fmt_ks(&self.row_ks[r]);
            let _ = writeln!(out, "{row},{},{d},{p}", cells.join(","));
        }
        let (ds, ps): (Vec<String>, Vec<String>) = self.col_ks.iter().map(fmt_ks).unzip();
        let _ = writeln!(out, "ks_decision,{},,", ds.join(","));
        let _ = writeln!(out, "ks_p,{},,", ps.join(","));
        let mr: Vec<String> = self.col_mean_relative.iter().map(|v| fmt_opt(*v, 4)).collect();
        let ma: Vec<String> = self.col_mean_absolute.iter().map(|v| fmt_opt(*v, 4)).collect();
        let _ = writeln!(out, "avg_relative,{},,", mr.join(","));
        let _ = writeln!(out, "avg_absolute,{},,", ma.join(","));
        out
    }

    pub fn to_text(&self) -> String {
        let mut table: Vec<Vec<String>> = Vec::new();
        let mut head = vec![self.row_label.clone()];
        head.extend(self.w_values.iter().map(|w| format!("W={w}")));
        head.extend(["K-S".to_string(), "p".to_string()]);
        table.push(head);
        for (r, row) in self.rows.iter().enumerate() {
            let mut line = vec![format!("{row}")];
            line.extend(self.relative[r].iter().map(|v| fmt_opt(*v, 2)));
            let (d, p) = fmt_ks(&self.row_ks[r]);
            line.extend([d, p]);
            table.push(line);
        }
        let (ds, ps): (Vec<String>, Vec<String>) = self.col_ks.iter().map(fmt_ks).unzip();
        for (label, vals) in [("K-S", ds), ("p", ps)] {
            let mut line = vec![label.to_string()];
            line.extend(vals);
            table.push(line);
        }
        let mut avg = vec!["avg %".to_string()];
        avg.extend(self.col_mean_relative.iter().map(|v| fmt_opt(v.map(|x| 100.0 * x), 2)));
        table.push(avg);
        let cols = table.iter().map(|l| l.len()).max().unwrap_or(0);
        let widths: Vec<usize> =
            (0..cols).map(|c| table.iter().filter_map(|l| l.get(c)).map(|s| s.len()).max().unwrap_or(0)).collect();
        let mut out = format!("{} relative error\n", self.metric);
        for line in table {
            let cells: Vec<String> = line.iter().enumerate().map(|(c, s)| format!("{s:>w$}", w = widths[c])).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_series_have_zero_error() {
        let e = relative_error(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.mean_relative, Some(0.0));
        assert_eq!(e.mean_absolute, 0.0);
    }

    #[test]
    fn ten_percent() {
        let e = relative_error(&[1.1], &[1.0]).unwrap();
        assert!((e.relative[0].unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_reference_is_flagged_not_averaged() {
        let e = relative_error(&[0.5, 1.1], &[0.0, 1.0]).unwrap();
        assert_eq!(e.flagged, vec![0]);
        assert_eq!(e.relative[0], None);
        assert!((e.mean_relative.unwrap() - 0.1).abs() < 1e-12);
        assert!((e.absolute[0] - 0.5).abs() < 1e-12);
        assert!(relative_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ks_extremes() {
        let a = [0.1, 0.4, 0.7, 0.9];
        let same = ks_test(&a, &a, DEFAULT_SIGNIFICANCE).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert_eq!(same.decision, 0);
        assert_eq!(same.p_value, 1.0);
        let far: Vec<f64> = (0..30).map(|i| 10.0 + i as f64).collect();
        let near: Vec<f64> = (0..30).map(|i| i as f64 / 10.0).collect();
        let apart = ks_test(&near, &far, DEFAULT_SIGNIFICANCE).unwrap();
        assert_eq!(apart.statistic, 1.0);
        assert_eq!(apart.decision, 1);
        assert!(ks_test(&[1.0], &a, 0.1).is_err());
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Q(1) and Q(1.36), the familiar 27% and 5% points
        assert!((kolmogorov_q(1.0) - 0.26999967).abs() < 1e-7);
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 5e-4);
    }

    #[test]
    fn single_cell_report_has_no_ks() {
        let r = build_report("bpi", "lambda", &[10.0], &[16], &[vec![0.55]], &[vec![Some(0.5)]], 0.1).unwrap();
        assert!((r.relative[0][0].unwrap() - 0.1).abs() < 1e-12);
        assert!(r.row_ks[0].is_none() && r.col_ks[0].is_none());
        assert!(r.to_csv().contains("0.1000"));
    }

    #[test]
    fn ragged_report_lists_gaps() {
        let e = build_report(
            "delay",
            "lambda",
            &[5.0, 10.0],
            &[4, 8],
            &[vec![1.0, 2.0], vec![1.0]],
            &[vec![Some(1.0), Some(2.0)], vec![Some(1.0), Some(1.0)]],
            0.1,
        )
        .unwrap_err()
        .to_string();
        assert!(e.contains("lambda=10, W=8"), "{e}");
    }
}
