//! Pearson correlation of FOI tracks against a state-of-health series, with
//! two-tailed Student-t p-values.
//!
//! The SOH series is an external input (CSV `period,soh_pct`); nothing here
//! estimates capacity.

use serde::Serialize;
use thiserror::Error;

use crate::foi::{FeatureLabel, FoiTrack};
use crate::math;
use crate::types::PeriodTag;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {required} samples, found {found}")]
    TooFewSamples { found: usize, required: usize },
    #[error("zero variance in input series")]
    ZeroVariance,
    #[error("|r| = 1 is degenerate; p = 0 by convention")]
    DegenerateR,
}

/// Sample Pearson correlation coefficient. Errors on length mismatch, fewer
/// than three samples, or zero variance.
pub fn pearson(x: &[Scalar], y: &[Scalar]) -> Result<Scalar, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(StatsError::TooFewSamples {
            found: x.len(),
            required: 3,
        });
    }
    math::pearson(x, y).ok_or(StatsError::ZeroVariance)
}

/// Two-tailed p-value for a Pearson coefficient via
/// t = r √((n−2)/(1−r²)) against Student's t with n−2 degrees of freedom.
/// |r| = 1 returns [`StatsError::DegenerateR`]; by convention the caller
/// reports p = 0 flagged.
pub fn p_value(r: Scalar, n: usize) -> Result<Scalar, StatsError> {
    if n < 3 {
        return Err(StatsError::TooFewSamples {
            found: n,
            required: 3,
        });
    }
    if r.abs() >= 1.0 {
        return Err(StatsError::DegenerateR);
    }
    let df = (n - 2) as Scalar;
    let t = r * (df / (1.0 - r * r)).sqrt();
    Ok(math::student_t_two_tailed(t, df))
}

/// Correlation of one track against SOH.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationResult {
    pub foi_id: u32,
    pub feature: FeatureLabel,
    pub r: Scalar,
    /// Two-tailed p; 0.0 with `degenerate` set when |r| = 1.
    pub p_value: Scalar,
    pub n: usize,
    pub degenerate: bool,
}

/// A track skipped during correlation, and why.
#[derive(Debug, Clone, Serialize)]
pub struct SkippedTrack {
    pub foi_id: u32,
    pub feature: FeatureLabel,
    pub reason: String,
}

#[derive(Debug, Serialize)]
pub struct CorrelationReport {
    pub results: Vec<CorrelationResult>,
    pub skipped: Vec<SkippedTrack>,
}

/// Correlate every track with the SOH series over their common periods.
/// Tracks with fewer than three common periods are skipped and reported.
pub fn correlate_tracks(tracks: &[FoiTrack], soh: &[(PeriodTag, Scalar)]) -> CorrelationReport {
    let soh_map: std::collections::BTreeMap<PeriodTag, Scalar> = soh.iter().copied().collect();
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for track in tracks {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for obs in &track.observations {
            if let Some(&s) = soh_map.get(&obs.period_tag) {
                xs.push(obs.normalized_value);
                ys.push(s);
            }
        }
        if xs.len() < 3 {
            skipped.push(SkippedTrack {
                foi_id: track.spec.foi_id,
                feature: track.feature_label(),
                reason: format!("{} common periods with SOH, need 3", xs.len()),
            });
            continue;
        }
        let r = match pearson(&xs, &ys) {
            Ok(r) => r,
            Err(e) => {
                skipped.push(SkippedTrack {
                    foi_id: track.spec.foi_id,
                    feature: track.feature_label(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let (p, degenerate) = match p_value(r, xs.len()) {
            Ok(p) => (p, false),
            Err(StatsError::DegenerateR) => (0.0, true),
            Err(e) => {
                skipped.push(SkippedTrack {
                    foi_id: track.spec.foi_id,
                    feature: track.feature_label(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        results.push(CorrelationResult {
            foi_id: track.spec.foi_id,
            feature: track.feature_label(),
            r,
            p_value: p,
            n: xs.len(),
            degenerate,
        });
    }
    results.sort_by(|a, b| (a.foi_id, a.feature).cmp(&(b.foi_id, b.feature)));
    CorrelationReport { results, skipped }
}

/// Output CSV mirroring the report layout: `foi,feature,r,p`.
pub fn report_to_csv(report: &CorrelationReport) -> String {
    let mut out = String::from("foi,feature,r,p\n");
    for r in &report.results {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.foi_id, r.feature, r.r, r.p_value
        ));
    }
    out
}

/// Parse an SOH CSV: header `period,soh_pct`, one row per period.
pub fn parse_soh_csv(text: &str) -> Result<Vec<(PeriodTag, Scalar)>, String> {
    let mut out = Vec::new();
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "period,soh_pct" => {}
        other => return Err(format!("bad SOH header: {other:?}")),
    }
    for (no, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (p, v) = line
            .split_once(',')
            .ok_or_else(|| format!("line {}: expected two fields", no + 2))?;
        let tag = crate::types::parse_period(p.trim())
            .ok_or_else(|| format!("line {}: bad period `{p}`", no + 2))?;
        let soh: Scalar = v
            .trim()
            .parse()
            .map_err(|_| format!("line {}: bad soh `{v}`", no + 2))?;
        out.push((tag, soh));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    // ------------------------------------------------------------------
    // independent oracles
    // ------------------------------------------------------------------

    /// Brute-force Pearson via the uncentered sum formula; an algebraic
    /// route independent of the two-pass implementation.
    fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    /// Student-t two-tailed tail probability by Simpson quadrature of the
    /// density over [0, |t|]; the normalizing constant comes from exact
    /// half-integer gamma recurrences, not from the Lanczos ln_gamma the
    /// implementation uses.
    fn t_two_tailed_oracle(t: f64, df: u32) -> f64 {
        let coeff = t_norm_const(df);
        let f = |x: f64| coeff * (1.0 + x * x / df as f64).powf(-((df as f64 + 1.0) / 2.0));
        let a = 0.0;
        let b = t.abs();
        let n = 200_000; // even
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            acc += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
        }
        let integral = acc * h / 3.0;
        1.0 - 2.0 * integral
    }

    /// Γ((df+1)/2) / (√(df·π) Γ(df/2)) via integer/half-integer recurrences.
    fn t_norm_const(df: u32) -> f64 {
        // gamma(twice/2) for twice = 1, 2, 3, ...
        fn gamma_half_steps(twice: u32) -> f64 {
            if twice % 2 == 0 {
                let k = twice / 2;
                (1..k).map(|i| i as f64).product()
            } else {
                let mut g = std::f64::consts::PI.sqrt(); // gamma(1/2)
                let mut arg = 0.5f64;
                while ((2.0 * arg) as u32) < twice {
                    g *= arg;
                    arg += 1.0;
                }
                g
            }
        }
        gamma_half_steps(df + 1)
            / ((df as f64 * std::f64::consts::PI).sqrt() * gamma_half_steps(df))
    }

    // ------------------------------------------------------------------
    // pearson
    // ------------------------------------------------------------------

    #[test]
    fn exact_linear_dependence() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_checked_value() {
        // x=[1,2,3], y=[1,2,2] -> r = sqrt(3)/2
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0]).unwrap();
        assert!((r - 3.0f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_oracle_to_1e12() {
        let cases: Vec<(Vec<f64>, Vec<f64>)> = vec![
            (vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 2.0]),
            (vec![0.3, -1.2, 2.7, 0.9], vec![1.1, 0.4, -0.2, 2.2]),
            (
                vec![10.0, 12.5, 9.1, 14.0, 11.1],
                vec![100.2, 98.0, 101.4, 95.5, 99.1],
            ),
            (
                vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
                vec![2.0, 2.9, 4.2, 8.3, 16.5, 31.0, 65.0],
            ),
        ];
        for (x, y) in cases {
            let got = pearson(&x, &y).unwrap();
            let want = pearson_oracle(&x, &y);
            assert!((got - want).abs() < 1e-12, "got {got} want {want}");
        }
    }

    #[test]
    fn error_paths() {
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0, 2.0]),
            Err(StatsError::TooFewSamples { .. })
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(StatsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::ZeroVariance)
        ));
    }

    #[test]
    fn symmetry_and_affine_invariance() {
        let x = [0.4, 1.9, -0.7, 3.3, 2.1];
        let y = [1.0, 0.2, 0.9, -1.4, 0.3];
        let rxy = pearson(&x, &y).unwrap();
        let ryx = pearson(&y, &x).unwrap();
        assert!((rxy - ryx).abs() < 1e-15);
        let ax: Vec<f64> = x.iter().map(|v| -2.5 * v + 7.0).collect();
        let cy: Vec<f64> = y.iter().map(|v| 4.0 * v - 1.0).collect();
        let r2 = pearson(&ax, &cy).unwrap();
        assert!((r2 + rxy).abs() < 1e-12, "sign flips with a*c < 0");
    }

    // ------------------------------------------------------------------
    // p-values
    // ------------------------------------------------------------------

    #[test]
    fn zero_r_gives_p_one() {
        for n in [3usize, 5, 12, 50] {
            assert!((p_value(0.0, n).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn df2_closed_form_case() {
        // r = 0.5, n = 4 -> t = 0.8165, df = 2 -> p = 0.5
        let p = p_value(0.5, 4).unwrap();
        assert!((p - 0.5).abs() < 1e-12, "p = {p}");
    }

    #[test]
    fn strong_correlation_small_sample() {
        // r = 0.95, n = 7 -> p ≈ 0.001
        let p = p_value(0.95, 7).unwrap();
        let t = 0.95 * (5.0f64 / (1.0 - 0.9025)).sqrt();
        let want = t_two_tailed_oracle(t, 5);
        assert!((p - want).abs() < 1e-6, "p {p} oracle {want}");
        assert!(p > 0.0005 && p < 0.002, "p = {p}");
    }

    #[test]
    fn matches_quadrature_oracle_to_1e6() {
        for &(r, n) in &[
            (0.1, 5usize),
            (0.3, 8),
            (0.5, 4),
            (0.7, 10),
            (0.9, 6),
            (-0.6, 9),
            (0.99, 12),
        ] {
            let p = p_value(r, n).unwrap();
            let df = (n - 2) as f64;
            let t = r * (df / (1.0 - r * r)).sqrt();
            let want = t_two_tailed_oracle(t, (n - 2) as u32);
            assert!((p - want).abs() < 1e-6, "r={r} n={n}: p {p} oracle {want}");
        }
    }

    #[test]
    fn degenerate_r_is_flagged() {
        assert!(matches!(p_value(1.0, 5), Err(StatsError::DegenerateR)));
        assert!(matches!(p_value(-1.0, 5), Err(StatsError::DegenerateR)));
    }

    #[test]
    fn p_decreases_with_abs_r() {
        let mut last = 1.01;
        for k in 0..20 {
            let r = k as f64 * 0.049;
            let p = p_value(r, 9).unwrap();
            assert!(p < last, "p({r}) = {p} not below {last}");
            last = p;
        }
    }

    #[test]
    fn p_bounds() {
        for &r in &[-0.999, -0.5, 0.0, 0.31, 0.87, 0.9999] {
            for n in [3usize, 4, 7, 40] {
                let p = p_value(r, n).unwrap();
                assert!((0.0..=1.0).contains(&p), "p({r},{n}) = {p}");
            }
        }
    }

    #[test]
    fn soh_csv_parses() {
        let text = "period,soh_pct\n2016,100\n2017,97.2\n2018-03,94.9\n";
        let rows = parse_soh_csv(text).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].0, PeriodTag::Year(2016));
        assert_eq!(rows[2].0, PeriodTag::Month(2018, 3));
        assert!((rows[1].1 - 97.2).abs() < 1e-12);
        assert!(parse_soh_csv("nope\n1,2\n").is_err());
    }
}
