//! Gaussian smoothing and numerical differentiation of qOCV curves into
//! incremental-capacity (dQ/dV over V) and differential-voltage (dV/dQ over
//! SOC) curves.
//!
//! Smoothing happens before differentiation; the sigma used is recorded on
//! the output. Kernels are truncated at ±4σ with reflection padding so the
//! boundaries grow no artificial peaks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::qocv::QocvCurve;
use crate::types::{Direction, PeriodTag};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("sigma {sigma} exceeds 10 % of curve span {span}")]
    SigmaTooLarge { sigma: Scalar, span: Scalar },
    #[error("voltage grid not strictly increasing and uniform")]
    NonMonotonicVoltage,
    #[error("soc not strictly increasing; curve cannot be resampled onto an SOC grid")]
    NonMonotonicSoc,
    #[error("curve too short: {points} points")]
    TooShort { points: usize },
}

/// Kind of differential curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffKind {
    /// dQ/dV against voltage; %Q per volt.
    IncrementalCapacity,
    /// dV/dQ against SOC; volts per %Q.
    DifferentialVoltage,
}

impl std::fmt::Display for DiffKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DiffKind::IncrementalCapacity => write!(f, "ica"),
            DiffKind::DifferentialVoltage => write!(f, "dva"),
        }
    }
}

/// A differentiated curve on a uniform x grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffCurve {
    pub kind: DiffKind,
    /// Volts (IC) or percent SOC (DV), strictly increasing.
    pub x: Vec<Scalar>,
    /// %Q/V (IC) or V/%Q (DV).
    pub y: Vec<Scalar>,
    /// Sigma used on the source curve, in x units.
    pub smoothing_sigma: Scalar,
    pub direction: Direction,
    pub period_tag: PeriodTag,
}

impl DiffCurve {
    pub fn x_step(&self) -> Scalar {
        if self.x.len() < 2 {
            0.0
        } else {
            self.x[1] - self.x[0]
        }
    }
}

/// Voltage as a function of SOC on a uniform SOC grid; the DVA-side
/// representation of a fused curve.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageOfSoc {
    pub soc: Vec<Scalar>,
    pub voltage: Vec<Scalar>,
    pub direction: Direction,
    pub period_tag: PeriodTag,
    pub smoothing_sigma: Scalar,
}

fn check_uniform_voltage(curve: &QocvCurve) -> Result<Scalar, DiffError> {
    if curve.grid.len() < 3 {
        return Err(DiffError::TooShort {
            points: curve.grid.len(),
        });
    }
    let dx = curve.voltage_step;
    for w in curve.grid.windows(2) {
        let d = w[1].voltage - w[0].voltage;
        if d <= 0.0 || (d - dx).abs() > 1e-9 * dx.max(1.0) {
            return Err(DiffError::NonMonotonicVoltage);
        }
    }
    Ok(dx)
}

/// Gaussian-smooth the SOC course of a fused curve along its voltage grid.
/// Grid, counts and flags stay untouched.
pub fn smooth(curve: &QocvCurve, sigma_v: Scalar) -> Result<QocvCurve, DiffError> {
    let dx = check_uniform_voltage(curve)?;
    let (lo, hi) = curve.voltage_range();
    let span = hi - lo;
    if sigma_v > 0.10 * span {
        return Err(DiffError::SigmaTooLarge {
            sigma: sigma_v,
            span,
        });
    }
    let soc: Vec<Scalar> = curve.grid.iter().map(|p| p.mean_soc).collect();
    let smoothed = math::gaussian_smooth(&soc, dx, sigma_v);
    let mut out = curve.clone();
    for (p, s) in out.grid.iter_mut().zip(smoothed) {
        p.mean_soc = s;
    }
    Ok(out)
}

/// IC curve: central-difference gradient of SOC with respect to voltage.
/// The input should already be smoothed; the sigma is carried through for
/// the record.
pub fn ica(curve: &QocvCurve, smoothing_sigma: Scalar) -> Result<DiffCurve, DiffError> {
    let dx = check_uniform_voltage(curve)?;
    let soc: Vec<Scalar> = curve.grid.iter().map(|p| p.mean_soc).collect();
    let y = math::central_gradient(&soc, dx);
    Ok(DiffCurve {
        kind: DiffKind::IncrementalCapacity,
        x: curve.grid.iter().map(|p| p.voltage).collect(),
        y,
        smoothing_sigma,
        direction: curve.direction,
        period_tag: curve.period_tag,
    })
}

/// Resample a fused curve onto a uniform SOC grid (default step 0.25 pp),
/// inverting SOC(V) to V(SOC). Requires strictly increasing SOC.
pub fn resample_soc(curve: &QocvCurve, step_pp: Scalar) -> Result<VoltageOfSoc, DiffError> {
    if curve.grid.len() < 3 {
        return Err(DiffError::TooShort {
            points: curve.grid.len(),
        });
    }
    let socs: Vec<Scalar> = curve.grid.iter().map(|p| p.mean_soc).collect();
    for w in socs.windows(2) {
        if w[1] <= w[0] {
            return Err(DiffError::NonMonotonicSoc);
        }
    }
    let volts: Vec<Scalar> = curve.grid.iter().map(|p| p.voltage).collect();
    let lo = (socs[0] / step_pp).ceil() * step_pp;
    let hi = (socs[socs.len() - 1] / step_pp).floor() * step_pp;
    if hi <= lo {
        return Err(DiffError::TooShort { points: 0 });
    }
    let n = ((hi - lo) / step_pp).round() as usize + 1;
    let grid: Vec<Scalar> = (0..n).map(|k| lo + k as Scalar * step_pp).collect();
    let voltage = math::resample_linear(&socs, &volts, &grid);
    Ok(VoltageOfSoc {
        soc: grid,
        voltage,
        direction: curve.direction,
        period_tag: curve.period_tag,
        smoothing_sigma: 0.0,
    })
}

/// Gaussian-smooth the voltage course over the SOC grid.
pub fn smooth_voltage(curve: &VoltageOfSoc, sigma_pp: Scalar) -> Result<VoltageOfSoc, DiffError> {
    if curve.soc.len() < 3 {
        return Err(DiffError::TooShort {
            points: curve.soc.len(),
        });
    }
    let span = curve.soc[curve.soc.len() - 1] - curve.soc[0];
    if sigma_pp > 0.10 * span {
        return Err(DiffError::SigmaTooLarge {
            sigma: sigma_pp,
            span,
        });
    }
    let dx = curve.soc[1] - curve.soc[0];
    let voltage = math::gaussian_smooth(&curve.voltage, dx, sigma_pp);
    Ok(VoltageOfSoc {
        soc: curve.soc.clone(),
        voltage,
        direction: curve.direction,
        period_tag: curve.period_tag,
        smoothing_sigma: sigma_pp,
    })
}

/// DV curve: central-difference gradient of voltage with respect to SOC.
pub fn dva(curve: &VoltageOfSoc) -> Result<DiffCurve, DiffError> {
    if curve.soc.len() < 3 {
        return Err(DiffError::TooShort {
            points: curve.soc.len(),
        });
    }
    let dx = curve.soc[1] - curve.soc[0];
    for w in curve.soc.windows(2) {
        if w[1] <= w[0] {
            return Err(DiffError::NonMonotonicSoc);
        }
    }
    let y = math::central_gradient(&curve.voltage, dx);
    Ok(DiffCurve {
        kind: DiffKind::DifferentialVoltage,
        x: curve.soc.clone(),
        y,
        smoothing_sigma: curve.smoothing_sigma,
        direction: curve.direction,
        period_tag: curve.period_tag,
    })
}

/// Curve CSV export: `x,y`.
pub fn diff_to_csv(curve: &DiffCurve) -> String {
    let mut out = String::from("x,y\n");
    for (x, y) in curve.x.iter().zip(curve.y.iter()) {
        out.push_str(&format!("{x},{y}\n"));
    }
    out
}

/// Metadata block exported next to the CSV.
#[derive(Debug, Serialize, Deserialize)]
pub struct DiffMeta {
    pub kind: DiffKind,
    pub sigma: Scalar,
    pub direction: Direction,
    pub period: String,
    pub points: usize,
}

impl DiffMeta {
    pub fn of(curve: &DiffCurve) -> Self {
        Self {
            kind: curve.kind,
            sigma: curve.smoothing_sigma,
            direction: curve.direction,
            period: curve.period_tag.to_string(),
            points: curve.x.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qocv::QocvPoint;

    /// Fused curve for OCV(soc) = 3.0 + a*soc + b*soc^2, sampled on a
    /// uniform voltage grid.
    fn quadratic_curve(a: Scalar, b: Scalar, step_v: Scalar) -> QocvCurve {
        let v_of = |s: Scalar| 3.0 + a * s + b * s * s;
        let (v0, v1) = (v_of(0.0), v_of(100.0));
        let n = ((v1 - v0) / step_v).floor() as usize;
        let grid: Vec<QocvPoint> = (0..=n)
            .map(|k| {
                let v = (v0 / step_v).ceil() * step_v + k as Scalar * step_v;
                // invert the quadratic for exact soc(v)
                let soc = if b == 0.0 {
                    (v - 3.0) / a
                } else {
                    (-a + (a * a + 4.0 * b * (v - 3.0)).sqrt()) / (2.0 * b)
                };
                QocvPoint {
                    voltage: v,
                    mean_soc: soc,
                    n_contributing: 30,
                    soc_std: 0.0,
                    sparse: false,
                }
            })
            .collect();
        QocvCurve {
            direction: Direction::Discharge,
            period_tag: PeriodTag::Year(2017),
            grid,
            phase_count: 30,
            voltage_step: step_v,
        }
    }

    #[test]
    fn ica_of_linear_curve_is_constant() {
        // 3.0..4.0 V over 0..100 % -> dSOC/dV = 100 %/V
        let curve = quadratic_curve(0.01, 0.0, 0.005);
        let ic = ica(&curve, 0.0).unwrap();
        for y in &ic.y {
            assert!((y - 100.0).abs() < 1e-6, "{y}");
        }
    }

    #[test]
    fn ica_matches_analytic_reciprocal_slope() {
        // OCV = 3.0 + 0.01 s + 1e-5 s^2; IC(V) = 1/(0.01 + 2e-5 s)
        let curve = quadratic_curve(0.01, 1e-5, 0.002);
        let ic = ica(&curve, 0.0).unwrap();
        for (x, y) in ic.x.iter().zip(ic.y.iter()).skip(1).take(ic.x.len() - 2) {
            let s = (-0.01 + (0.01f64 * 0.01 + 4.0 * 1e-5 * (x - 3.0)).sqrt()) / (2.0 * 1e-5);
            let expect = 1.0 / (0.01 + 2.0 * 1e-5 * s);
            assert!(
                ((y - expect) / expect).abs() <= 1e-3,
                "x={x} y={y} expect={expect}"
            );
        }
    }

    #[test]
    fn dva_of_linear_curve_is_constant() {
        let curve = quadratic_curve(0.01, 0.0, 0.005);
        let v_of_s = resample_soc(&curve, 0.25).unwrap();
        let dv = dva(&v_of_s).unwrap();
        for y in &dv.y {
            assert!((y - 0.01).abs() < 1e-9, "{y}");
        }
    }

    #[test]
    fn dva_matches_analytic_slope() {
        let curve = quadratic_curve(0.01, 1e-5, 0.002);
        let v_of_s = resample_soc(&curve, 0.25).unwrap();
        let dv = dva(&v_of_s).unwrap();
        for (s, y) in dv.x.iter().zip(dv.y.iter()).skip(1).take(dv.x.len() - 2) {
            let expect = 0.01 + 2.0 * 1e-5 * s;
            assert!(
                ((y - expect) / expect).abs() <= 1e-3,
                "s={s} y={y} expect={expect}"
            );
        }
    }

    #[test]
    fn smooth_identity_below_grid_step() {
        let curve = quadratic_curve(0.01, 1e-5, 0.005);
        let out = smooth(&curve, 0.0005).unwrap();
        for (a, b) in curve.grid.iter().zip(out.grid.iter()) {
            assert_eq!(a.mean_soc, b.mean_soc);
        }
    }

    #[test]
    fn oversized_sigma_is_rejected() {
        let curve = quadratic_curve(0.01, 0.0, 0.005);
        // span is 1 V; 0.2 V sigma > 10 %
        assert!(matches!(
            smooth(&curve, 0.2),
            Err(DiffError::SigmaTooLarge { .. })
        ));
    }

    #[test]
    fn reciprocity_of_ic_and_dv() {
        // IC(V(s)) * DV(s) = 1 within 1 % away from boundaries
        let curve = quadratic_curve(0.01, 1e-5, 0.002);
        let sig_v = 0.010;
        let smoothed = smooth(&curve, sig_v).unwrap();
        let ic = ica(&smoothed, sig_v).unwrap();
        let v_of_s = resample_soc(&smoothed, 0.25).unwrap();
        let dv = dva(&v_of_s).unwrap();
        let margin_v = 4.0 * sig_v;
        let (vlo, vhi) = (ic.x[0] + margin_v, ic.x[ic.x.len() - 1] - margin_v);
        for (i, s) in dv.x.iter().enumerate() {
            let v = math::resample_linear(&v_of_s.soc, &v_of_s.voltage, &[*s])[0];
            if v < vlo || v > vhi {
                continue;
            }
            let ic_at = math::resample_linear(&ic.x, &ic.y, &[v])[0];
            let product = ic_at * dv.y[i];
            assert!(
                (product - 1.0).abs() <= 0.01,
                "s={s} product={product}"
            );
        }
    }

    #[test]
    fn ic_area_equals_soc_span() {
        let curve = quadratic_curve(0.01, 1e-5, 0.002);
        let ic = ica(&curve, 0.0).unwrap();
        // trapezoid over the IC curve
        let dx = ic.x_step();
        let mut area = 0.0;
        for w in ic.y.windows(2) {
            area += 0.5 * (w[0] + w[1]) * dx;
        }
        let span = curve.grid.last().unwrap().mean_soc - curve.grid[0].mean_soc;
        assert!((area - span).abs() <= 0.5, "area {area} vs span {span}");
    }

    #[test]
    fn plateau_becomes_ic_peak() {
        // a voltage plateau concentrates SOC in a narrow voltage band:
        // dSOC/dV spikes there, so the IC curve peaks at the plateau voltage
        let step = 0.005;
        let n = 200;
        let mut soc = 0.0;
        let grid: Vec<QocvPoint> = (0..n)
            .map(|k| {
                let v = 3.0 + k as Scalar * step;
                let dsoc_dv = 80.0 + 250.0 * (-((v - 3.5) / 0.03) * ((v - 3.5) / 0.03)).exp();
                soc += dsoc_dv * step;
                QocvPoint {
                    voltage: v,
                    mean_soc: soc,
                    n_contributing: 10,
                    soc_std: 0.0,
                    sparse: false,
                }
            })
            .collect();
        let curve = QocvCurve {
            direction: Direction::Discharge,
            period_tag: PeriodTag::Year(2017),
            grid,
            phase_count: 10,
            voltage_step: step,
        };
        let ic = ica(&curve, 0.0).unwrap();
        let peak_x = ic.x[ic
            .y
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0];
        assert!(
            (3.48..=3.52).contains(&peak_x),
            "IC peak at {peak_x}, expected near the 3.5 V plateau"
        );

        // and the matching DV curve is near zero across the plateau's SOC span
        let v_of_s = resample_soc(&curve, 0.25).unwrap();
        let dv = dva(&v_of_s).unwrap();
        let dv_at_plateau = dv
            .x
            .iter()
            .zip(dv.y.iter())
            .filter(|(s, _)| {
                // SOC where v = 3.5 on the fixture
                let v = math::resample_linear(&v_of_s.soc, &v_of_s.voltage, &[**s])[0];
                (v - 3.5).abs() < 0.01
            })
            .map(|(_, y)| *y)
            .fold(Scalar::INFINITY, Scalar::min);
        let dv_away = dv.y.iter().copied().fold(0.0, Scalar::max);
        assert!(dv_at_plateau < 0.5 * dv_away);
    }

    #[test]
    fn noisy_sine_smoothing_reduces_rms_five_fold() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        // cosine over 2.5 periods: zero slope at both ends, so the
        // reflection padding introduces no boundary artifact of its own
        let n = 2001usize;
        let lambda = 800.0;
        let amp = 20.0;
        let clean: Vec<Scalar> = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * i as Scalar / lambda).cos())
            .collect();
        let noisy: Vec<Scalar> = clean
            .iter()
            .map(|c| {
                let u1: Scalar = rng.gen_range(1e-12..1.0);
                let u2: Scalar = rng.gen_range(0.0..1.0);
                let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                c + g // sigma 1
            })
            .collect();
        let smoothed = math::gaussian_smooth(&noisy, 1.0, 10.0);
        let rms = |v: &[Scalar]| -> Scalar {
            (v.iter().map(|x| x * x).sum::<Scalar>() / v.len() as Scalar).sqrt()
        };
        let before: Vec<Scalar> = noisy.iter().zip(&clean).map(|(a, b)| a - b).collect();
        let after: Vec<Scalar> = smoothed.iter().zip(&clean).map(|(a, b)| a - b).collect();
        let ratio = rms(&before) / rms(&after);
        assert!(ratio >= 5.0, "rms reduction {ratio}");

        // the filter itself must not displace peaks: interior crest of the
        // smoothed clean fixture stays put (residual noise jitter on a wide
        // crest is a property of the noise, not of the filter)
        let crest = |v: &[Scalar]| -> usize {
            ((lambda * 0.5) as usize..(lambda * 1.5) as usize)
                .max_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap())
                .unwrap()
        };
        let smoothed_clean = math::gaussian_smooth(&clean, 1.0, 10.0);
        let shift = crest(&smoothed_clean) as isize - crest(&clean) as isize;
        assert!(shift.abs() <= 1, "peak moved {shift} grid steps");
    }
}
