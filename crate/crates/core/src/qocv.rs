//! Partial-curve alignment, fusion into per-period qOCV curves and capacity
//! fade between periods.
//!
//! Fusion samples every partial at small voltage steps and takes the mean
//! SOC across partials per step. Before that, per-partial SOC offsets
//! (anchor errors) are removed by shifting each partial horizontally to the
//! cross-partial mean; only SOC moves, the voltage course is untouched.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;
use crate::phases::PartialQocvCurve;
use crate::types::{Direction, PeriodTag};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum QocvError {
    #[error("need {required} partials, found {found}")]
    InsufficientPhases { found: usize, required: usize },
    #[error("partials share no voltage overlap")]
    NoVoltageOverlap,
    #[error("no grid point reached the contribution minimum")]
    NoCoverage,
    #[error("voltage {voltage} outside curve range")]
    VoltageOutOfRange { voltage: Scalar },
}

/// One fused grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QocvPoint {
    /// Cell-level voltage, volts.
    pub voltage: Scalar,
    /// Mean SOC of contributing partials, percent of nominal capacity.
    pub mean_soc: Scalar,
    pub n_contributing: usize,
    /// Population standard deviation of SOC across contributors, pp.
    pub soc_std: Scalar,
    /// Below the contribution minimum.
    pub sparse: bool,
}

/// Fused qOCV curve for one period and direction. Voltage strictly
/// increasing along the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QocvCurve {
    pub direction: Direction,
    pub period_tag: PeriodTag,
    pub grid: Vec<QocvPoint>,
    pub phase_count: usize,
    pub voltage_step: Scalar,
}

impl QocvCurve {
    pub fn voltage_range(&self) -> (Scalar, Scalar) {
        (
            self.grid.first().map_or(0.0, |p| p.voltage),
            self.grid.last().map_or(0.0, |p| p.voltage),
        )
    }

    /// SOC at a voltage by linear interpolation on the fused grid.
    pub fn soc_at(&self, voltage: Scalar) -> Result<Scalar, QocvError> {
        let (lo, hi) = self.voltage_range();
        if voltage < lo || voltage > hi || self.grid.len() < 2 {
            return Err(QocvError::VoltageOutOfRange { voltage });
        }
        let xs: Vec<Scalar> = self.grid.iter().map(|p| p.voltage).collect();
        let ys: Vec<Scalar> = self.grid.iter().map(|p| p.mean_soc).collect();
        Ok(math::resample_linear(&xs, &ys, &[voltage])[0])
    }

    pub fn is_soc_monotonic(&self) -> bool {
        self.grid.windows(2).all(|w| w[1].mean_soc >= w[0].mean_soc)
    }
}

/// Alignment and fusion settings.
#[derive(Debug, Clone)]
pub struct FuseConfig {
    /// Voltage grid step, cell level, volts.
    pub voltage_step_v: Scalar,
    /// Minimum partials per grid point before it counts as covered.
    pub min_phases_per_point: usize,
    /// Minimum partials per period for a curve to exist at all.
    pub min_phases_per_period: usize,
    /// Partials needing a larger shift than this are dropped.
    pub outlier_offset_pp: Scalar,
    /// Alignment fixed-point settings.
    pub max_iterations: usize,
    pub convergence_pp: Scalar,
}

impl Default for FuseConfig {
    fn default() -> Self {
        Self {
            voltage_step_v: 0.005,
            min_phases_per_point: 3,
            min_phases_per_period: 20,
            outlier_offset_pp: 10.0,
            max_iterations: 20,
            convergence_pp: 0.01,
        }
    }
}

/// SOC values of one partial sampled at the shared voltage grid.
///
/// A partial is a polyline in (SOC, V); for every grid voltage the SOC of
/// each crossing is found by linear interpolation and crossings are
/// averaged. This stays well-defined when noise makes the voltage course
/// locally non-monotonic.
fn sample_at_grid(partial: &PartialQocvCurve, grid_start: i64, step: Scalar) -> GridSamples {
    let mut sums: std::collections::BTreeMap<i64, (Scalar, u32)> = std::collections::BTreeMap::new();
    for w in partial.points.windows(2) {
        let (va, vb) = (w[0].voltage, w[1].voltage);
        let (sa, sb) = (w[0].soc, w[1].soc);
        let (lo, hi) = if va <= vb { (va, vb) } else { (vb, va) };
        let mut k = (lo / step).ceil() as i64;
        while (k as Scalar) * step <= hi {
            let vg = k as Scalar * step;
            if vb != va {
                let soc = sa + (sb - sa) * (vg - va) / (vb - va);
                let e = sums.entry(k).or_insert((0.0, 0));
                e.0 += soc;
                e.1 += 1;
            }
            k += 1;
        }
    }
    GridSamples {
        offset: grid_start,
        values: sums
            .into_iter()
            .map(|(k, (sum, n))| (k, sum / n as Scalar))
            .collect(),
    }
}

struct GridSamples {
    #[allow(dead_code)]
    offset: i64,
    /// (grid index, mean SOC of crossings at that voltage)
    values: Vec<(i64, Scalar)>,
}

/// Outcome of alignment: shifted partials plus the offsets applied.
#[derive(Debug)]
pub struct Alignment {
    pub partials: Vec<PartialQocvCurve>,
    pub offsets_pp: Vec<Scalar>,
    pub dropped_outliers: usize,
    pub dropped_no_overlap: usize,
    pub iterations: usize,
}

/// One fixed-point pass over the non-excluded partials. Returns the
/// offsets, the per-partial count of constrained grid points, and the
/// iteration count.
fn align_round(
    sampled: &[GridSamples],
    excluded: &[bool],
    cfg: &FuseConfig,
) -> (Vec<Scalar>, Vec<u32>, usize) {
    let n = sampled.len();
    let mut offsets = vec![0.0 as Scalar; n];
    let mut constrained = vec![0u32; n];
    let mut iterations = 0;
    for _ in 0..cfg.max_iterations {
        iterations += 1;
        // pointwise cross-partial mean with the current offsets applied
        let mut acc: std::collections::BTreeMap<i64, (Scalar, u32)> =
            std::collections::BTreeMap::new();
        for (p, s) in sampled.iter().enumerate() {
            if excluded[p] {
                continue;
            }
            for &(k, soc) in &s.values {
                let e = acc.entry(k).or_insert((0.0, 0));
                e.0 += soc - offsets[p];
                e.1 += 1;
            }
        }
        // a grid point constrains a partial only when at least one other
        // partial crosses it too
        let mut max_change = 0.0 as Scalar;
        for (p, s) in sampled.iter().enumerate() {
            if excluded[p] {
                continue;
            }
            let mut diff_sum = 0.0;
            let mut hits = 0u32;
            for &(k, soc) in &s.values {
                if let Some(&(total, count)) = acc.get(&k) {
                    if count < 2 {
                        continue;
                    }
                    diff_sum += (soc - offsets[p]) - total / count as Scalar;
                    hits += 1;
                }
            }
            constrained[p] = hits;
            if hits == 0 {
                continue;
            }
            let adjust = diff_sum / hits as Scalar;
            offsets[p] += adjust;
            max_change = max_change.max(adjust.abs());
        }
        if max_change < cfg.convergence_pp {
            break;
        }
    }
    (offsets, constrained, iterations)
}

/// Shift each partial's SOC to the pointwise cross-partial mean over the
/// shared voltage range. Iterates to a fixed point; shape is preserved
/// exactly (pure horizontal translation). Partials needing a shift beyond
/// the outlier limit are dropped and the rest re-aligned without them, so a
/// broken anchor cannot drag the mean.
pub fn align_partials(partials: &[PartialQocvCurve], cfg: &FuseConfig) -> Alignment {
    if partials.len() < 2 {
        return Alignment {
            partials: partials.to_vec(),
            offsets_pp: vec![0.0; partials.len()],
            dropped_outliers: 0,
            dropped_no_overlap: 0,
            iterations: 0,
        };
    }
    let step = cfg.voltage_step_v;
    let sampled: Vec<GridSamples> = partials.iter().map(|p| sample_at_grid(p, 0, step)).collect();
    let mut excluded = vec![false; partials.len()];
    let mut dropped_outliers = 0usize;
    let mut iterations = 0usize;
    let (offsets, constrained) = loop {
        let (mut offsets, constrained, iters) = align_round(&sampled, &excluded, cfg);
        iterations += iters;
        // pin the mean offset of constrained partials to zero: the gauge
        // freedom of a common shift
        let mut sum = 0.0;
        let mut n = 0usize;
        for p in 0..offsets.len() {
            if !excluded[p] && constrained[p] > 0 {
                sum += offsets[p];
                n += 1;
            }
        }
        if n > 0 {
            let mean = sum / n as Scalar;
            for p in 0..offsets.len() {
                if !excluded[p] && constrained[p] > 0 {
                    offsets[p] -= mean;
                }
            }
        }
        // drop only the worst offender per round: one broken anchor drags
        // the gauge mean, so milder offsets must be re-judged without it
        let worst = (0..offsets.len())
            .filter(|&p| !excluded[p] && offsets[p].abs() > cfg.outlier_offset_pp)
            .max_by(|&a, &b| offsets[a].abs().partial_cmp(&offsets[b].abs()).unwrap());
        match worst {
            Some(p) => {
                excluded[p] = true;
                dropped_outliers += 1;
            }
            None => break (offsets, constrained),
        }
    };

    let mut shifted = Vec::new();
    let mut kept_offsets = Vec::new();
    let mut dropped_no_overlap = 0usize;
    for (p, partial) in partials.iter().enumerate() {
        if excluded[p] {
            continue;
        }
        if constrained[p] == 0 {
            // nothing to align against: pass through unshifted, tallied
            dropped_no_overlap += 1;
            shifted.push(partial.clone());
            kept_offsets.push(0.0);
            continue;
        }
        let mut c = partial.clone();
        for point in &mut c.points {
            point.soc -= offsets[p];
        }
        kept_offsets.push(offsets[p]);
        shifted.push(c);
    }
    Alignment {
        partials: shifted,
        offsets_pp: kept_offsets,
        dropped_outliers,
        dropped_no_overlap,
        iterations,
    }
}

/// Fuse aligned partials into a per-period curve: mean and std of SOC per
/// voltage grid point, restricted to the contiguous well-covered range.
pub fn fuse(
    partials: &[PartialQocvCurve],
    direction: Direction,
    period_tag: PeriodTag,
    cfg: &FuseConfig,
) -> Result<QocvCurve, QocvError> {
    if partials.len() < cfg.min_phases_per_period {
        return Err(QocvError::InsufficientPhases {
            found: partials.len(),
            required: cfg.min_phases_per_period,
        });
    }
    let step = cfg.voltage_step_v;
    let mut acc: std::collections::BTreeMap<i64, Vec<Scalar>> = std::collections::BTreeMap::new();
    for partial in partials {
        for (k, soc) in sample_at_grid(partial, 0, step).values {
            acc.entry(k).or_default().push(soc);
        }
    }
    if acc.is_empty() {
        return Err(QocvError::NoVoltageOverlap);
    }
    // contiguous run of indices meeting the contribution minimum
    let covered: Vec<i64> = acc
        .iter()
        .filter(|(_, socs)| socs.len() >= cfg.min_phases_per_point)
        .map(|(k, _)| *k)
        .collect();
    if covered.is_empty() {
        return Err(QocvError::NoCoverage);
    }
    let (first, last) = (covered[0], *covered.last().unwrap());
    let grid: Vec<QocvPoint> = acc
        .range(first..=last)
        .map(|(&k, socs)| {
            let n = socs.len();
            let mean = socs.iter().sum::<Scalar>() / n as Scalar;
            let var = socs.iter().map(|s| (s - mean) * (s - mean)).sum::<Scalar>() / n as Scalar;
            QocvPoint {
                voltage: k as Scalar * step,
                mean_soc: mean,
                n_contributing: n,
                soc_std: var.sqrt(),
                sparse: n < cfg.min_phases_per_point,
            }
        })
        .collect();
    Ok(QocvCurve {
        direction,
        period_tag,
        grid,
        phase_count: partials.len(),
        voltage_step: step,
    })
}

/// SOC difference between two curves at a voltage, in percentage points of
/// nominal capacity: `soc_a(V) - soc_b(V)`.
pub fn capacity_fade(
    curve_a: &QocvCurve,
    curve_b: &QocvCurve,
    at_voltage: Scalar,
) -> Result<Scalar, QocvError> {
    Ok(curve_a.soc_at(at_voltage)? - curve_b.soc_at(at_voltage)?)
}

/// Curve CSV: `voltage_v,mean_soc_pct,n,soc_std_pp`.
pub fn curve_to_csv(curve: &QocvCurve) -> String {
    let mut out = String::from("voltage_v,mean_soc_pct,n,soc_std_pp\n");
    for p in &curve.grid {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.voltage, p.mean_soc, p.n_contributing, p.soc_std
        ));
    }
    out
}

/// Metadata block exported next to the CSV.
#[derive(Debug, Serialize, Deserialize)]
pub struct QocvMeta {
    pub direction: Direction,
    pub period: String,
    pub phase_count: usize,
    pub voltage_step_v: Scalar,
    pub points: usize,
    pub sparse_points: usize,
}

impl QocvMeta {
    pub fn of(curve: &QocvCurve) -> Self {
        Self {
            direction: curve.direction,
            period: curve.period_tag.to_string(),
            phase_count: curve.phase_count,
            voltage_step_v: curve.voltage_step,
            points: curve.grid.len(),
            sparse_points: curve.grid.iter().filter(|p| p.sparse).count(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phases::PartialPoint;

    fn linear_partial(offset_pp: Scalar, lo_soc: Scalar, hi_soc: Scalar) -> PartialQocvCurve {
        // OCV(soc) = 3.0 + 0.01 * soc over the requested span
        let n = ((hi_soc - lo_soc) / 0.25) as usize;
        let points: Vec<PartialPoint> = (0..=n)
            .map(|k| {
                let soc = lo_soc + 0.25 * k as Scalar;
                PartialPoint {
                    soc: soc + offset_pp,
                    voltage: 3.0 + 0.01 * soc,
                    extrapolated_dcr: false,
                }
            })
            .collect();
        PartialQocvCurve {
            points,
            direction: Direction::Charge,
            source_phase_id: 0,
            period_tag: PeriodTag::Year(2017),
            mean_c_rate: 0.1,
        }
    }

    #[test]
    fn symmetric_offsets_cancel() {
        let cfg = FuseConfig {
            min_phases_per_period: 2,
            min_phases_per_point: 2,
            ..FuseConfig::default()
        };
        let partials = vec![linear_partial(2.0, 10.0, 90.0), linear_partial(-2.0, 10.0, 90.0)];
        let aligned = align_partials(&partials, &cfg);
        assert_eq!(aligned.partials.len(), 2);
        // both shifted to the common mean: residual offset ~0
        let p0 = &aligned.partials[0].points;
        let p1 = &aligned.partials[1].points;
        for (a, b) in p0.iter().zip(p1.iter()) {
            assert!((a.soc - b.soc).abs() < 1e-9);
        }
        assert!((aligned.offsets_pp[0] - 2.0).abs() < 1e-9);
        assert!((aligned.offsets_pp[1] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn single_partial_is_unchanged() {
        let cfg = FuseConfig::default();
        let partials = vec![linear_partial(3.0, 10.0, 60.0)];
        let aligned = align_partials(&partials, &cfg);
        assert_eq!(aligned.partials, partials);
    }

    #[test]
    fn alignment_preserves_shape() {
        let cfg = FuseConfig {
            min_phases_per_period: 2,
            min_phases_per_point: 2,
            ..FuseConfig::default()
        };
        let partials = vec![
            linear_partial(1.5, 20.0, 80.0),
            linear_partial(-0.5, 10.0, 70.0),
            linear_partial(0.0, 30.0, 90.0),
        ];
        let aligned = align_partials(&partials, &cfg);
        for (orig, shifted) in partials.iter().zip(aligned.partials.iter()) {
            let d0 = orig.points[0].soc - shifted.points[0].soc;
            for (a, b) in orig.points.iter().zip(shifted.points.iter()) {
                assert!((a.soc - b.soc - d0).abs() < 1e-12, "pure translation");
                assert_eq!(a.voltage, b.voltage, "voltage untouched");
            }
        }
    }

    #[test]
    fn outlier_partial_is_dropped() {
        let cfg = FuseConfig {
            min_phases_per_period: 2,
            min_phases_per_point: 2,
            ..FuseConfig::default()
        };
        let partials = vec![
            linear_partial(0.0, 10.0, 90.0),
            linear_partial(0.1, 10.0, 90.0),
            linear_partial(-0.1, 10.0, 90.0),
            linear_partial(40.0, 10.0, 90.0), // broken anchor
        ];
        let aligned = align_partials(&partials, &cfg);
        assert_eq!(aligned.dropped_outliers, 1);
        assert_eq!(aligned.partials.len(), 3);
    }

    #[test]
    fn fuse_of_identical_linear_partials_is_linear() {
        let cfg = FuseConfig {
            min_phases_per_period: 3,
            min_phases_per_point: 3,
            ..FuseConfig::default()
        };
        let partials = vec![
            linear_partial(0.0, 0.0, 100.0),
            linear_partial(0.0, 0.0, 100.0),
            linear_partial(0.0, 0.0, 100.0),
        ];
        let curve = fuse(&partials, Direction::Charge, PeriodTag::Year(2017), &cfg).unwrap();
        for p in &curve.grid {
            let expect = (p.voltage - 3.0) / 0.01;
            assert!((p.mean_soc - expect).abs() < 1e-9);
            assert!(p.soc_std < 1e-9);
            assert_eq!(p.n_contributing, 3);
        }
        assert!(curve.is_soc_monotonic());
        // voltage grid strictly increasing
        assert!(curve.grid.windows(2).all(|w| w[1].voltage > w[0].voltage));
    }

    #[test]
    fn fuse_means_and_std_per_point() {
        // two partials crossing 3.6 V at SOC 50 and 52 -> mean 51, std 1
        let cfg = FuseConfig {
            min_phases_per_period: 2,
            min_phases_per_point: 2,
            ..FuseConfig::default()
        };
        let partials = vec![linear_partial(-10.0, 55.0, 65.0), linear_partial(-8.0, 55.0, 65.0)];
        // soc at 3.6 V: underlying soc 60 -> shifted by -10/-8 => 50 / 52
        let curve = fuse(&partials, Direction::Charge, PeriodTag::Year(2017), &cfg).unwrap();
        let at = curve
            .grid
            .iter()
            .find(|p| (p.voltage - 3.6).abs() < 1e-9)
            .unwrap();
        assert!((at.mean_soc - 51.0).abs() < 1e-9);
        assert!((at.soc_std - 1.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_partials_is_an_error() {
        let cfg = FuseConfig::default();
        let partials = vec![linear_partial(0.0, 0.0, 100.0)];
        assert!(matches!(
            fuse(&partials, Direction::Charge, PeriodTag::Year(2017), &cfg),
            Err(QocvError::InsufficientPhases { found: 1, required: 20 })
        ));
    }

    #[test]
    fn capacity_fade_identity_and_shift() {
        let cfg = FuseConfig {
            min_phases_per_period: 3,
            min_phases_per_point: 3,
            ..FuseConfig::default()
        };
        let year1: Vec<PartialQocvCurve> =
            (0..3).map(|_| linear_partial(0.0, 0.0, 100.0)).collect();
        let curve1 = fuse(&year1, Direction::Discharge, PeriodTag::Year(2016), &cfg).unwrap();
        assert_eq!(capacity_fade(&curve1, &curve1, 3.5).unwrap(), 0.0);

        // shifted curve: same voltages at 12 pp lower SOC
        let year7: Vec<PartialQocvCurve> = (0..3)
            .map(|_| {
                let mut p = linear_partial(0.0, 12.0, 100.0);
                for pt in &mut p.points {
                    pt.soc -= 12.0;
                }
                p
            })
            .collect();
        let curve7 = fuse(&year7, Direction::Discharge, PeriodTag::Year(2022), &cfg).unwrap();
        let fade = capacity_fade(&curve1, &curve7, 3.9).unwrap();
        assert!((fade - 12.0).abs() < 1e-9);
    }

    #[test]
    fn fade_outside_range_is_error() {
        let cfg = FuseConfig {
            min_phases_per_period: 3,
            min_phases_per_point: 3,
            ..FuseConfig::default()
        };
        let parts: Vec<PartialQocvCurve> = (0..3).map(|_| linear_partial(0.0, 20.0, 80.0)).collect();
        let curve = fuse(&parts, Direction::Charge, PeriodTag::Year(2017), &cfg).unwrap();
        assert!(matches!(
            capacity_fade(&curve, &curve, 4.2),
            Err(QocvError::VoltageOutOfRange { .. })
        ));
    }

    #[test]
    fn fusion_of_monotonic_partials_is_monotonic() {
        let cfg = FuseConfig {
            min_phases_per_period: 3,
            min_phases_per_point: 3,
            ..FuseConfig::default()
        };
        let partials = vec![
            linear_partial(0.4, 0.0, 100.0),
            linear_partial(-0.2, 0.0, 100.0),
            linear_partial(0.1, 0.0, 100.0),
        ];
        let aligned = align_partials(&partials, &cfg);
        let curve = fuse(&aligned.partials, Direction::Charge, PeriodTag::Year(2017), &cfg).unwrap();
        assert!(curve.is_soc_monotonic());
    }
}
