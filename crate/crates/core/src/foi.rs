//! Features of interest on IC/DV curves: per-chemistry catalogs, windowed
//! extremum location with sub-grid refinement, normalized lifetime tracks,
//! and qualitative degradation-mode attribution.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{DiffCurve, DiffKind};
use crate::math;
use crate::types::{Chemistry, PeriodTag};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum FoiError {
    #[error("window [{lo}, {hi}] outside curve domain")]
    WindowOutOfDomain { lo: Scalar, hi: Scalar },
    #[error("no extremum inside window (curve monotonic or flat there)")]
    NoExtremumFound,
    #[error("spec expects {expected} curve, got {got}")]
    KindMismatch { expected: DiffKind, got: DiffKind },
    #[error("peak-distance spec needs a pair_window")]
    MissingPairWindow,
    #[error("need at least 2 located observations, found {found}")]
    InsufficientObservations { found: usize },
    #[error("no catalog entries for chemistry {0}")]
    UnknownChemistry(Chemistry),
    #[error("catalog parse error: {0}")]
    CatalogParse(String),
}

/// What a spec extracts from the curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    PeakIntensity,
    PeakPosition,
    ValleyIntensity,
    PeakDistance,
}

/// Short feature label used in correlation tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum FeatureLabel {
    Int,
    Pos,
    Dist,
}

impl std::fmt::Display for FeatureLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureLabel::Int => write!(f, "int"),
            FeatureLabel::Pos => write!(f, "pos"),
            FeatureLabel::Dist => write!(f, "dist"),
        }
    }
}

/// Degradation modes under investigation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationMode {
    Lli,
    LamNe,
    LamPe,
}

impl std::fmt::Display for DegradationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DegradationMode::Lli => write!(f, "LLI"),
            DegradationMode::LamNe => write!(f, "LAM_NE"),
            DegradationMode::LamPe => write!(f, "LAM_PE"),
        }
    }
}

/// Drift direction that argues for a degradation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftSign {
    Increasing,
    Decreasing,
}

/// Expected feature drift under a degradation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmHypothesis {
    pub mode: DegradationMode,
    pub sign: DriftSign,
}

/// One catalog entry: which extremum to track, where, and what its drift
/// would say about degradation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoiSpec {
    pub foi_id: u32,
    pub chemistry: Chemistry,
    pub curve_kind: DiffKind,
    pub feature: FeatureKind,
    /// X-axis interval: volts for ICA, percent SOC for DVA.
    pub window: (Scalar, Scalar),
    /// Second interval for peak distances.
    pub pair_window: Option<(Scalar, Scalar)>,
    pub dm_hypothesis: Vec<DmHypothesis>,
    pub low_confidence: bool,
}

impl FoiSpec {
    pub fn feature_label(&self) -> FeatureLabel {
        match self.feature {
            FeatureKind::PeakIntensity | FeatureKind::ValleyIntensity => FeatureLabel::Int,
            FeatureKind::PeakPosition => FeatureLabel::Pos,
            FeatureKind::PeakDistance => FeatureLabel::Dist,
        }
    }
}

// TOML shape of the catalog file.
#[derive(Debug, Deserialize)]
struct CatalogFile {
    foi: Vec<CatalogEntry>,
}

#[derive(Debug, Deserialize)]
struct CatalogEntry {
    id: u32,
    chemistry: Chemistry,
    curve: CatalogCurve,
    feature: FeatureKind,
    window: [Scalar; 2],
    pair_window: Option<[Scalar; 2]>,
    #[serde(default)]
    dm: Vec<DmEntry>,
    #[serde(default)]
    low_confidence: bool,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CatalogCurve {
    Ica,
    Dva,
}

#[derive(Debug, Deserialize)]
struct DmEntry {
    mode: DegradationMode,
    sign: DriftSign,
}

const BUILTIN_CATALOG: &str = include_str!("../assets/foi_catalog.toml");

/// Parse a catalog file (TOML, same schema as the shipped default).
pub fn parse_catalog(text: &str) -> Result<Vec<FoiSpec>, FoiError> {
    let file: CatalogFile =
        toml::from_str(text).map_err(|e| FoiError::CatalogParse(e.to_string()))?;
    Ok(file
        .foi
        .into_iter()
        .map(|e| FoiSpec {
            foi_id: e.id,
            chemistry: e.chemistry,
            curve_kind: match e.curve {
                CatalogCurve::Ica => DiffKind::IncrementalCapacity,
                CatalogCurve::Dva => DiffKind::DifferentialVoltage,
            },
            feature: e.feature,
            window: (e.window[0], e.window[1]),
            pair_window: e.pair_window.map(|w| (w[0], w[1])),
            dm_hypothesis: e
                .dm
                .into_iter()
                .map(|d| DmHypothesis {
                    mode: d.mode,
                    sign: d.sign,
                })
                .collect(),
            low_confidence: e.low_confidence,
        })
        .collect())
}

/// The shipped default catalog for one chemistry. Windows live in an
/// editable data file compiled in as the default; see `parse_catalog` for
/// custom files.
pub fn builtin_catalog(chemistry: Chemistry) -> Result<Vec<FoiSpec>, FoiError> {
    let all = parse_catalog(BUILTIN_CATALOG)?;
    let specs: Vec<FoiSpec> = all.into_iter().filter(|s| s.chemistry == chemistry).collect();
    if specs.is_empty() {
        return Err(FoiError::UnknownChemistry(chemistry));
    }
    Ok(specs)
}

/// A located extremum (or extremum pair) on one curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocatedFoi {
    /// Value selected by the spec's feature kind.
    pub raw_value: Scalar,
    /// Refined x of the (first) extremum.
    pub x: Scalar,
    /// Refined y of the (first) extremum.
    pub y: Scalar,
    /// Refined x of the pair-window extremum for distances.
    pub pair_x: Option<Scalar>,
}

fn window_slice(curve: &DiffCurve, window: (Scalar, Scalar)) -> Result<(usize, usize), FoiError> {
    let (lo, hi) = window;
    let start = curve.x.iter().position(|&x| x >= lo);
    let end = curve.x.iter().rposition(|&x| x <= hi);
    match (start, end) {
        (Some(s), Some(e)) if e >= s + 2 => Ok((s, e)),
        _ => Err(FoiError::WindowOutOfDomain { lo, hi }),
    }
}

/// Extremum inside a window: strict interior grid extremum, refined by a
/// parabola through its neighbors. Ties resolve to the smallest x; a window
/// where the curve is monotonic or flat has no extremum.
fn extremum_in(
    curve: &DiffCurve,
    window: (Scalar, Scalar),
    maximum: bool,
) -> Result<math::Extremum<Scalar>, FoiError> {
    let (start, end) = window_slice(curve, window)?;
    let better = |a: Scalar, b: Scalar| if maximum { a > b } else { a < b };
    let mut k = start;
    for i in start..=end {
        if better(curve.y[i], curve.y[k]) {
            k = i;
        }
    }
    // interior requirement: the winner must beat the window edges
    if k == start || k == end {
        return Err(FoiError::NoExtremumFound);
    }
    if curve.y[k] == curve.y[start] && curve.y[k] == curve.y[end] {
        return Err(FoiError::NoExtremumFound);
    }
    let dx = curve.x_step();
    Ok(math::parabolic_refine(curve.x[0], dx, &curve.y, k))
}

/// Locate the spec's feature on one curve.
pub fn locate(spec: &FoiSpec, curve: &DiffCurve) -> Result<LocatedFoi, FoiError> {
    if spec.curve_kind != curve.kind {
        return Err(FoiError::KindMismatch {
            expected: spec.curve_kind,
            got: curve.kind,
        });
    }
    match spec.feature {
        FeatureKind::PeakIntensity => {
            let e = extremum_in(curve, spec.window, true)?;
            Ok(LocatedFoi {
                raw_value: e.y,
                x: e.x,
                y: e.y,
                pair_x: None,
            })
        }
        FeatureKind::PeakPosition => {
            let e = extremum_in(curve, spec.window, true)?;
            Ok(LocatedFoi {
                raw_value: e.x,
                x: e.x,
                y: e.y,
                pair_x: None,
            })
        }
        FeatureKind::ValleyIntensity => {
            let e = extremum_in(curve, spec.window, false)?;
            Ok(LocatedFoi {
                raw_value: e.y,
                x: e.x,
                y: e.y,
                pair_x: None,
            })
        }
        FeatureKind::PeakDistance => {
            let pair = spec.pair_window.ok_or(FoiError::MissingPairWindow)?;
            let a = extremum_in(curve, spec.window, true)?;
            let b = extremum_in(curve, pair, true)?;
            Ok(LocatedFoi {
                raw_value: (b.x - a.x).abs(),
                x: a.x,
                y: a.y,
                pair_x: Some(b.x),
            })
        }
    }
}

/// One period's located and normalized value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FoiObservation {
    pub period_tag: PeriodTag,
    pub raw_value: Scalar,
    /// Percent; see the normalization rules on [`track`].
    pub normalized_value: Scalar,
}

/// Normalization reference taken from the first observed period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizationRef {
    /// Highest peak of the first-period curve (intensities).
    pub highest_peak: Scalar,
    /// X-axis range of the first-period curve (positions, distances).
    pub x_range: (Scalar, Scalar),
}

/// Lifetime track of one feature.
#[derive(Debug, Clone, Serialize)]
pub struct FoiTrack {
    pub spec: FoiSpec,
    pub observations: Vec<FoiObservation>,
    /// Least-squares slope of the normalized value over time, pp/a.
    pub drift_pp_per_year: Scalar,
    pub r_squared: Scalar,
    pub normalization: NormalizationRef,
    /// Periods where the feature could not be located.
    pub missing_periods: Vec<PeriodTag>,
}

impl FoiTrack {
    pub fn feature_label(&self) -> FeatureLabel {
        self.spec.feature_label()
    }
}

/// Track a spec across per-period curves (sorted by period ascending).
///
/// Normalization, all relative to the **first** period's curve:
/// intensities by its highest peak, positions by its x range, distances by
/// its SOC range. Drift is the least-squares slope of the normalized value
/// against period midpoints in years; missing periods are skipped, never
/// interpolated.
pub fn track(spec: &FoiSpec, curves: &[DiffCurve]) -> Result<FoiTrack, FoiError> {
    let mut sorted: Vec<&DiffCurve> = curves.iter().filter(|c| c.kind == spec.curve_kind).collect();
    sorted.sort_by_key(|c| c.period_tag);
    let first = sorted
        .first()
        .ok_or(FoiError::InsufficientObservations { found: 0 })?;
    let highest_peak = first.y.iter().copied().fold(Scalar::MIN, Scalar::max);
    let x_range = (first.x[0], *first.x.last().unwrap());
    let span = x_range.1 - x_range.0;

    let mut observations = Vec::new();
    let mut missing = Vec::new();
    for curve in &sorted {
        match locate(spec, curve) {
            Ok(found) => {
                let normalized = match spec.feature {
                    FeatureKind::PeakIntensity | FeatureKind::ValleyIntensity => {
                        found.raw_value / highest_peak * 100.0
                    }
                    FeatureKind::PeakPosition => (found.raw_value - x_range.0) / span * 100.0,
                    FeatureKind::PeakDistance => found.raw_value / span * 100.0,
                };
                observations.push(FoiObservation {
                    period_tag: curve.period_tag,
                    raw_value: found.raw_value,
                    normalized_value: normalized,
                });
            }
            Err(FoiError::KindMismatch { .. }) => unreachable!("pre-filtered by kind"),
            Err(_) => missing.push(curve.period_tag),
        }
    }
    if observations.len() < 2 {
        return Err(FoiError::InsufficientObservations {
            found: observations.len(),
        });
    }
    let xs: Vec<Scalar> = observations
        .iter()
        .map(|o| o.period_tag.as_years())
        .collect();
    let ys: Vec<Scalar> = observations.iter().map(|o| o.normalized_value).collect();
    let fit = math::linear_fit(&xs, &ys).expect("two or more periods");
    Ok(FoiTrack {
        spec: spec.clone(),
        observations,
        drift_pp_per_year: fit.slope,
        r_squared: fit.r_squared,
        normalization: NormalizationRef {
            highest_peak,
            x_range,
        },
        missing_periods: missing,
    })
}

/// Verdict for one degradation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DmVerdict {
    Dominant,
    Possible,
    NotIndicated,
}

#[derive(Debug, Clone, Serialize)]
pub struct DmFinding {
    pub verdict: DmVerdict,
    /// FOI ids whose drift matches the hypothesis sign.
    pub supporting: Vec<u32>,
    /// FOI ids whose drift opposes it.
    pub contradicting: Vec<u32>,
}

/// Qualitative attribution report; never a quantitative Ah split.
#[derive(Debug, Clone, Serialize)]
pub struct DmReport {
    pub findings: std::collections::BTreeMap<DegradationMode, DmFinding>,
    /// Significance floor applied to |drift|, pp/a.
    pub drift_floor_pp_per_year: Scalar,
}

/// Vote-based aggregation: every track whose |drift| clears the floor votes
/// for (sign matches the hypothesis) or against (sign opposes) each of its
/// spec's modes. Dominant needs two or more supporters and a majority;
/// one supporter leaves the mode possible; none leaves it not indicated.
pub fn attribute_dm(tracks: &[FoiTrack], drift_floor_pp_per_year: Scalar) -> DmReport {
    use std::collections::BTreeMap;
    let mut sup: BTreeMap<DegradationMode, Vec<u32>> = BTreeMap::new();
    let mut con: BTreeMap<DegradationMode, Vec<u32>> = BTreeMap::new();
    for mode in [
        DegradationMode::Lli,
        DegradationMode::LamNe,
        DegradationMode::LamPe,
    ] {
        sup.insert(mode, Vec::new());
        con.insert(mode, Vec::new());
    }
    for track in tracks {
        if track.drift_pp_per_year.abs() < drift_floor_pp_per_year {
            continue;
        }
        let observed = if track.drift_pp_per_year > 0.0 {
            DriftSign::Increasing
        } else {
            DriftSign::Decreasing
        };
        for hyp in &track.spec.dm_hypothesis {
            if hyp.sign == observed {
                sup.get_mut(&hyp.mode).unwrap().push(track.spec.foi_id);
            } else {
                con.get_mut(&hyp.mode).unwrap().push(track.spec.foi_id);
            }
        }
    }
    let findings = sup
        .into_iter()
        .map(|(mode, supporting)| {
            let contradicting = con.remove(&mode).unwrap_or_default();
            let verdict = if supporting.is_empty() {
                DmVerdict::NotIndicated
            } else if supporting.len() >= 2 && supporting.len() > contradicting.len() {
                DmVerdict::Dominant
            } else {
                DmVerdict::Possible
            };
            (
                mode,
                DmFinding {
                    verdict,
                    supporting,
                    contradicting,
                },
            )
        })
        .collect();
    DmReport {
        findings,
        drift_floor_pp_per_year,
    }
}

/// Track CSV export: `period,raw,normalized`.
pub fn track_to_csv(track: &FoiTrack) -> String {
    let mut out = String::from("period,raw,normalized\n");
    for o in &track.observations {
        out.push_str(&format!(
            "{},{},{}\n",
            o.period_tag, o.raw_value, o.normalized_value
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Direction;

    fn gaussian_curve(
        kind: DiffKind,
        x0: Scalar,
        dx: Scalar,
        n: usize,
        center: Scalar,
        amp: Scalar,
        width: Scalar,
        period: PeriodTag,
    ) -> DiffCurve {
        let x: Vec<Scalar> = (0..n).map(|k| x0 + k as Scalar * dx).collect();
        let y: Vec<Scalar> = x
            .iter()
            .map(|&v| amp * (-((v - center) / width) * ((v - center) / width) / 2.0).exp())
            .collect();
        DiffCurve {
            kind,
            x,
            y,
            smoothing_sigma: 0.0,
            direction: Direction::Discharge,
            period_tag: period,
        }
    }

    fn ica_spec(feature: FeatureKind, window: (Scalar, Scalar)) -> FoiSpec {
        FoiSpec {
            foi_id: 1,
            chemistry: Chemistry::LmoNmcBlend,
            curve_kind: DiffKind::IncrementalCapacity,
            feature,
            window,
            pair_window: None,
            dm_hypothesis: vec![],
            low_confidence: false,
        }
    }

    #[test]
    fn builtin_catalog_counts() {
        // six LMO specs (4 ICA, 2 DVA), six NMC (5 ICA, 1 DVA), five LFP
        // (3 ICA, 2 DVA)
        let lmo = builtin_catalog(Chemistry::LmoNmcBlend).unwrap();
        assert_eq!(lmo.len(), 6);
        assert_eq!(
            lmo.iter()
                .filter(|s| s.curve_kind == DiffKind::IncrementalCapacity)
                .count(),
            4
        );
        let nmc = builtin_catalog(Chemistry::Nmc).unwrap();
        assert_eq!(nmc.len(), 6);
        assert_eq!(
            nmc.iter()
                .filter(|s| s.curve_kind == DiffKind::IncrementalCapacity)
                .count(),
            5
        );
        let lfp = builtin_catalog(Chemistry::Lfp).unwrap();
        assert_eq!(lfp.len(), 5);
        assert_eq!(
            lfp.iter()
                .filter(|s| s.curve_kind == DiffKind::DifferentialVoltage)
                .count(),
            2
        );
        // every distance spec carries its pair window
        for s in lmo.iter().chain(&nmc).chain(&lfp) {
            if s.feature == FeatureKind::PeakDistance {
                assert!(s.pair_window.is_some());
            }
        }
    }

    #[test]
    fn locates_gaussian_peak() {
        // peak at 3.50 V, amplitude 225: position and intensity recovered
        let curve = gaussian_curve(
            DiffKind::IncrementalCapacity,
            3.3,
            0.005,
            171,
            3.50,
            225.0,
            0.04,
            PeriodTag::Year(2016),
        );
        let pos = locate(&ica_spec(FeatureKind::PeakPosition, (3.4, 3.6)), &curve).unwrap();
        assert!((pos.raw_value - 3.50).abs() < 1e-6, "{}", pos.raw_value);
        let int = locate(&ica_spec(FeatureKind::PeakIntensity, (3.4, 3.6)), &curve).unwrap();
        assert!((int.raw_value - 225.0).abs() < 1e-3, "{}", int.raw_value);
    }

    #[test]
    fn flat_window_has_no_extremum() {
        let mut curve = gaussian_curve(
            DiffKind::IncrementalCapacity,
            3.3,
            0.005,
            171,
            3.50,
            225.0,
            0.04,
            PeriodTag::Year(2016),
        );
        for y in &mut curve.y {
            *y = 5.0;
        }
        assert!(matches!(
            locate(&ica_spec(FeatureKind::PeakPosition, (3.4, 3.6)), &curve),
            Err(FoiError::NoExtremumFound)
        ));
    }

    #[test]
    fn monotonic_window_has_no_extremum() {
        let x: Vec<Scalar> = (0..100).map(|k| 3.3 + 0.005 * k as Scalar).collect();
        let y: Vec<Scalar> = (0..100).map(|k| k as Scalar).collect();
        let curve = DiffCurve {
            kind: DiffKind::IncrementalCapacity,
            x,
            y,
            smoothing_sigma: 0.0,
            direction: Direction::Discharge,
            period_tag: PeriodTag::Year(2016),
        };
        assert!(matches!(
            locate(&ica_spec(FeatureKind::PeakPosition, (3.4, 3.6)), &curve),
            Err(FoiError::NoExtremumFound)
        ));
    }

    #[test]
    fn window_outside_domain_errors() {
        let curve = gaussian_curve(
            DiffKind::IncrementalCapacity,
            3.3,
            0.005,
            171,
            3.50,
            225.0,
            0.04,
            PeriodTag::Year(2016),
        );
        assert!(matches!(
            locate(&ica_spec(FeatureKind::PeakPosition, (5.0, 6.0)), &curve),
            Err(FoiError::WindowOutOfDomain { .. })
        ));
    }

    #[test]
    fn kind_mismatch_errors() {
        let curve = gaussian_curve(
            DiffKind::DifferentialVoltage,
            0.0,
            0.25,
            400,
            50.0,
            0.02,
            3.0,
            PeriodTag::Year(2016),
        );
        assert!(matches!(
            locate(&ica_spec(FeatureKind::PeakPosition, (40.0, 60.0)), &curve),
            Err(FoiError::KindMismatch { .. })
        ));
    }

    #[test]
    fn two_peak_distance() {
        // DV peaks at 15 % and 65 % SOC -> distance 50 pp
        let mut curve = gaussian_curve(
            DiffKind::DifferentialVoltage,
            0.0,
            0.25,
            401,
            15.0,
            0.02,
            3.0,
            PeriodTag::Year(2016),
        );
        let second = gaussian_curve(
            DiffKind::DifferentialVoltage,
            0.0,
            0.25,
            401,
            65.0,
            0.03,
            3.0,
            PeriodTag::Year(2016),
        );
        for (a, b) in curve.y.iter_mut().zip(second.y.iter()) {
            *a += b;
        }
        let spec = FoiSpec {
            foi_id: 5,
            chemistry: Chemistry::LmoNmcBlend,
            curve_kind: DiffKind::DifferentialVoltage,
            feature: FeatureKind::PeakDistance,
            window: (5.0, 30.0),
            pair_window: Some((55.0, 78.0)),
            dm_hypothesis: vec![],
            low_confidence: false,
        };
        let found = locate(&spec, &curve).unwrap();
        assert!((found.raw_value - 50.0).abs() < 0.01, "{}", found.raw_value);
    }

    #[test]
    fn locate_is_scale_covariant() {
        let curve = gaussian_curve(
            DiffKind::IncrementalCapacity,
            3.3,
            0.005,
            171,
            3.52,
            200.0,
            0.04,
            PeriodTag::Year(2016),
        );
        let mut scaled = curve.clone();
        for y in &mut scaled.y {
            *y *= 3.0;
        }
        let spec_int = ica_spec(FeatureKind::PeakIntensity, (3.4, 3.62));
        let spec_pos = ica_spec(FeatureKind::PeakPosition, (3.4, 3.62));
        let i1 = locate(&spec_int, &curve).unwrap().raw_value;
        let i2 = locate(&spec_int, &scaled).unwrap().raw_value;
        assert!((i2 / i1 - 3.0).abs() < 1e-12);
        let p1 = locate(&spec_pos, &curve).unwrap().raw_value;
        let p2 = locate(&spec_pos, &scaled).unwrap().raw_value;
        assert!((p1 - p2).abs() < 1e-12);
    }

    fn yearly_curves(
        positions: &[Scalar],
        amps: &[Scalar],
        first_year: i32,
    ) -> Vec<DiffCurve> {
        positions
            .iter()
            .zip(amps.iter())
            .enumerate()
            .map(|(k, (&c, &a))| {
                gaussian_curve(
                    DiffKind::IncrementalCapacity,
                    3.3,
                    0.005,
                    171, // 3.3..4.15 V
                    c,
                    a,
                    0.04,
                    PeriodTag::Year(first_year + k as i32),
                )
            })
            .collect()
    }

    #[test]
    fn constant_track_has_zero_drift() {
        let curves = yearly_curves(&[3.5; 5], &[200.0; 5], 2016);
        let t = track(&ica_spec(FeatureKind::PeakPosition, (3.4, 3.62)), &curves).unwrap();
        assert!(t.drift_pp_per_year.abs() < 1e-9, "{}", t.drift_pp_per_year);
    }

    #[test]
    fn position_drift_normalization_arithmetic() {
        // 3.50 -> 3.55 V over 6 years on a 3.3..4.15 range:
        // normalized drift = (0.05/0.85)/6 * 100 ≈ 0.980 pp/a
        let positions: Vec<Scalar> = (0..7).map(|k| 3.50 + 0.05 * k as Scalar / 6.0).collect();
        let amps = vec![200.0; 7];
        let curves = yearly_curves(&positions, &amps, 2015);
        let t = track(&ica_spec(FeatureKind::PeakPosition, (3.4, 3.62)), &curves).unwrap();
        let expect = (0.05 / 0.85) * 100.0 / 6.0;
        assert!(
            (t.drift_pp_per_year - expect).abs() < 1e-4,
            "drift {} expect {expect}",
            t.drift_pp_per_year
        );
        assert!(t.r_squared > 0.999);
        // raw positions move by ~8.3 mV/a; x range normalization per the
        // first period curve
        assert!((t.normalization.x_range.0 - 3.3).abs() < 1e-9);
        assert!((t.normalization.x_range.1 - 4.15).abs() < 1e-9);
    }

    #[test]
    fn intensity_normalized_by_first_period_highest_peak() {
        let curves = yearly_curves(&[3.5, 3.5, 3.5], &[200.0, 180.0, 160.0], 2016);
        let t = track(&ica_spec(FeatureKind::PeakIntensity, (3.4, 3.62)), &curves).unwrap();
        assert!((t.observations[0].normalized_value - 100.0).abs() < 0.05);
        assert!((t.observations[2].normalized_value - 80.0).abs() < 0.05);
        assert!((t.drift_pp_per_year + 10.0).abs() < 0.1);
    }

    #[test]
    fn missing_periods_are_skipped_not_interpolated() {
        let mut curves = yearly_curves(&[3.5, 3.51, 3.52, 3.53], &[200.0; 4], 2016);
        // flatten 2017's window so the peak disappears there
        for y in &mut curves[1].y {
            *y = 1.0;
        }
        let t = track(&ica_spec(FeatureKind::PeakPosition, (3.4, 3.62)), &curves).unwrap();
        assert_eq!(t.observations.len(), 3);
        assert_eq!(t.missing_periods, vec![PeriodTag::Year(2017)]);
    }

    #[test]
    fn too_few_observations_error() {
        let curves = yearly_curves(&[3.5], &[200.0], 2016);
        assert!(matches!(
            track(&ica_spec(FeatureKind::PeakPosition, (3.4, 3.62)), &curves),
            Err(FoiError::InsufficientObservations { found: 1 })
        ));
    }

    fn fake_track(foi_id: u32, drift: Scalar, hyp: Vec<DmHypothesis>) -> FoiTrack {
        FoiTrack {
            spec: FoiSpec {
                foi_id,
                chemistry: Chemistry::LmoNmcBlend,
                curve_kind: DiffKind::IncrementalCapacity,
                feature: FeatureKind::PeakPosition,
                window: (3.4, 3.6),
                pair_window: None,
                dm_hypothesis: hyp,
                low_confidence: false,
            },
            observations: vec![],
            drift_pp_per_year: drift,
            r_squared: 1.0,
            normalization: NormalizationRef {
                highest_peak: 1.0,
                x_range: (0.0, 1.0),
            },
            missing_periods: vec![],
        }
    }

    #[test]
    fn lli_dominant_with_three_supporters() {
        let lli_up = vec![DmHypothesis {
            mode: DegradationMode::Lli,
            sign: DriftSign::Increasing,
        }];
        let lli_down = vec![DmHypothesis {
            mode: DegradationMode::Lli,
            sign: DriftSign::Decreasing,
        }];
        let tracks = vec![
            fake_track(1, 1.0, lli_up.clone()),   // FOI1 pos up
            fake_track(1, -2.0, lli_down.clone()), // FOI1 int down
            fake_track(2, -1.5, lli_down),        // FOI2 int down
            fake_track(3, 0.9, lli_up),           // FOI3 pos up
        ];
        let report = attribute_dm(&tracks, 0.5);
        let lli = &report.findings[&DegradationMode::Lli];
        assert_eq!(lli.verdict, DmVerdict::Dominant);
        assert_eq!(lli.supporting.len(), 4);
        assert_eq!(
            report.findings[&DegradationMode::LamNe].verdict,
            DmVerdict::NotIndicated
        );
    }

    #[test]
    fn drifts_below_floor_indicate_nothing() {
        let hyp = vec![
            DmHypothesis {
                mode: DegradationMode::Lli,
                sign: DriftSign::Increasing,
            },
            DmHypothesis {
                mode: DegradationMode::LamPe,
                sign: DriftSign::Decreasing,
            },
        ];
        let tracks = vec![fake_track(1, 0.2, hyp.clone()), fake_track(2, -0.3, hyp)];
        let report = attribute_dm(&tracks, 0.5);
        for (_, finding) in &report.findings {
            assert_eq!(finding.verdict, DmVerdict::NotIndicated);
            assert!(finding.supporting.is_empty());
            assert!(finding.contradicting.is_empty());
        }
    }

    #[test]
    fn opposing_drift_contradicts() {
        let hyp = vec![DmHypothesis {
            mode: DegradationMode::LamNe,
            sign: DriftSign::Decreasing,
        }];
        let tracks = vec![fake_track(5, 2.0, hyp)]; // increases instead
        let report = attribute_dm(&tracks, 0.5);
        let lam = &report.findings[&DegradationMode::LamNe];
        assert_eq!(lam.verdict, DmVerdict::NotIndicated);
        assert_eq!(lam.contradicting, vec![5]);
    }

    #[test]
    fn single_supporter_is_possible() {
        let hyp = vec![DmHypothesis {
            mode: DegradationMode::LamPe,
            sign: DriftSign::Decreasing,
        }];
        let report = attribute_dm(&[fake_track(4, -1.0, hyp)], 0.5);
        assert_eq!(
            report.findings[&DegradationMode::LamPe].verdict,
            DmVerdict::Possible
        );
    }

    #[test]
    fn track_determinism() {
        let positions: Vec<Scalar> = (0..6).map(|k| 3.50 + 0.007 * k as Scalar).collect();
        let curves = yearly_curves(&positions, &[200.0; 6], 2016);
        let spec = ica_spec(FeatureKind::PeakPosition, (3.4, 3.62));
        let a = track(&spec, &curves).unwrap();
        let b = track(&spec, &curves).unwrap();
        assert_eq!(a.drift_pp_per_year.to_bits(), b.drift_pp_per_year.to_bits());
    }
}
