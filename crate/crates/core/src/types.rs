//! Domain types shared across the pipeline stages.

use chrono::{DateTime, Datelike, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::Scalar;

/// One timestamped telemetry sample at system level.
///
/// Sign convention: `current > 0` means the battery is charging.
/// Timestamps are unix epoch seconds (UTC, 1 s resolution).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub timestamp: i64,
    /// Battery terminal voltage, system level, volts. Always > 0.
    pub voltage: Scalar,
    /// Signed battery current, amperes.
    pub current: Scalar,
    /// Signed power, watts. Informational only.
    pub power: Scalar,
    /// Housing temperature, °C, within [-40, 80].
    pub temperature: Scalar,
}

/// Marker for a hole in the sample sequence (consecutive timestamps more
/// than the gap threshold apart).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapMarker {
    /// Last timestamp before the gap.
    pub before: i64,
    /// First timestamp after the gap.
    pub after: i64,
}

impl GapMarker {
    pub fn seconds(&self) -> i64 {
        self.after - self.before
    }
}

/// Item yielded by a telemetry stream: either a validated record or a gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StreamItem {
    Record(TelemetryRecord),
    Gap(GapMarker),
}

/// Battery chemistry of a system. Determines the FOI catalog and the
/// simulator OCV preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chemistry {
    /// Blend of lithium manganese oxide and NMC.
    LmoNmcBlend,
    /// Lithium nickel manganese cobalt oxide.
    Nmc,
    /// Lithium iron phosphate.
    Lfp,
}

impl std::fmt::Display for Chemistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Chemistry::LmoNmcBlend => write!(f, "lmo_nmc_blend"),
            Chemistry::Nmc => write!(f, "nmc"),
            Chemistry::Lfp => write!(f, "lfp"),
        }
    }
}

/// End-of-discharge voltage with the instant it became active. The BMS may
/// lower the EOD limit over the lifetime of a system; the history is kept
/// as config, never inferred from data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EodEpoch {
    /// Unix epoch seconds from which this EOD voltage applies.
    pub from: i64,
    pub volts: Scalar,
}

/// Static description of one storage system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub system_id: String,
    pub chemistry: Chemistry,
    /// Nominal capacity in ampere-hours. Reference for C-rates and for the
    /// default SOC normalization.
    pub nominal_capacity_ah: Scalar,
    pub nominal_voltage_v: Scalar,
    /// Series cell count; divides system voltage down to cell level for
    /// curve analysis. 1 means system == cell.
    pub cell_count_series: u32,
    /// End-of-charge voltage, system level.
    pub eoc_voltage_v: Scalar,
    /// Taper current below which a sustained end-of-charge hold counts as a
    /// full-charge anchor.
    pub eoc_taper_current_a: Scalar,
    /// End-of-discharge voltage history, system level, ordered by `from`.
    pub eod_voltage_v: Vec<EodEpoch>,
}

impl SystemConfig {
    /// Current for a 1C rate in amperes (nominal capacity per hour).
    pub fn current_1c(&self) -> Scalar {
        self.nominal_capacity_ah
    }

    /// EOD voltage active at `timestamp`. Falls back to the earliest epoch
    /// when the timestamp predates the history.
    pub fn eod_voltage_at(&self, timestamp: i64) -> Scalar {
        let mut active = self.eod_voltage_v.first().map(|e| e.volts).unwrap_or(0.0);
        for epoch in &self.eod_voltage_v {
            if epoch.from <= timestamp {
                active = epoch.volts;
            } else {
                break;
            }
        }
        active
    }

    /// Basic sanity checks: positive capacity and EOC above every EOD epoch.
    pub fn validate(&self) -> Result<(), String> {
        if self.nominal_capacity_ah <= 0.0 {
            return Err("nominal_capacity_ah must be > 0".into());
        }
        if self.cell_count_series == 0 {
            return Err("cell_count_series must be >= 1".into());
        }
        for epoch in &self.eod_voltage_v {
            if self.eoc_voltage_v <= epoch.volts {
                return Err(format!(
                    "eoc_voltage_v {} must exceed eod_voltage_v {}",
                    self.eoc_voltage_v, epoch.volts
                ));
            }
        }
        Ok(())
    }
}

/// Direction of an operational phase or a fused curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Charge,
    Discharge,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::Charge => write!(f, "charge"),
            Direction::Discharge => write!(f, "discharge"),
        }
    }
}

/// Analysis period a phase or curve belongs to: a calendar year or month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PeriodTag {
    Year(i32),
    Month(i32, u32),
}

impl PeriodTag {
    /// Tag for the UTC calendar year of `timestamp`.
    pub fn year_of(timestamp: i64) -> Self {
        PeriodTag::Year(utc(timestamp).year())
    }

    /// Tag for the UTC calendar month of `timestamp`.
    pub fn month_of(timestamp: i64) -> Self {
        let dt = utc(timestamp);
        PeriodTag::Month(dt.year(), dt.month())
    }

    /// Whether `timestamp` falls inside this period.
    pub fn contains(&self, timestamp: i64) -> bool {
        match self {
            PeriodTag::Year(_) => PeriodTag::year_of(timestamp) == *self,
            PeriodTag::Month(_, _) => PeriodTag::month_of(timestamp) == *self,
        }
    }

    /// Period midpoint expressed in decimal years, for drift fits over time.
    pub fn as_years(&self) -> Scalar {
        match self {
            PeriodTag::Year(y) => *y as Scalar + 0.5,
            PeriodTag::Month(y, m) => *y as Scalar + (*m as Scalar - 0.5) / 12.0,
        }
    }
}

impl std::fmt::Display for PeriodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PeriodTag::Year(y) => write!(f, "{y:04}"),
            PeriodTag::Month(y, m) => write!(f, "{y:04}-{m:02}"),
        }
    }
}

/// Kind of an SOC anchor event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    /// Detected full charge: voltage at EOC with taper current sustained.
    FullChargeAnchor,
    /// Anchor supplied by the caller (e.g. from a capacity test).
    ManualAnchor,
}

fn utc(timestamp: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(timestamp, 0).single().unwrap_or_default()
}

/// Parse a period string as produced by `Display` (`2017` or `2017-03`).
pub fn parse_period(s: &str) -> Option<PeriodTag> {
    if let Some((y, m)) = s.split_once('-') {
        Some(PeriodTag::Month(y.parse().ok()?, m.parse().ok()?))
    } else {
        Some(PeriodTag::Year(s.parse().ok()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eod_history_lookup() {
        let cfg = SystemConfig {
            system_id: "s".into(),
            chemistry: Chemistry::LmoNmcBlend,
            nominal_capacity_ah: 40.0,
            nominal_voltage_v: 3.7,
            cell_count_series: 1,
            eoc_voltage_v: 4.15,
            eoc_taper_current_a: 2.0,
            eod_voltage_v: vec![
                EodEpoch { from: 0, volts: 3.4 },
                EodEpoch {
                    from: 1_000,
                    volts: 3.3,
                },
            ],
        };
        assert_eq!(cfg.eod_voltage_at(-5), 3.4);
        assert_eq!(cfg.eod_voltage_at(500), 3.4);
        assert_eq!(cfg.eod_voltage_at(1_000), 3.3);
        assert_eq!(cfg.eod_voltage_at(2_000), 3.3);
        cfg.validate().unwrap();
    }

    #[test]
    fn period_tags() {
        // 2017-06-15T12:00:00Z
        let ts = 1_497_528_000;
        assert_eq!(PeriodTag::year_of(ts), PeriodTag::Year(2017));
        assert_eq!(PeriodTag::month_of(ts), PeriodTag::Month(2017, 6));
        assert!(PeriodTag::Year(2017).contains(ts));
        assert!(!PeriodTag::Year(2018).contains(ts));
        assert_eq!(parse_period("2017"), Some(PeriodTag::Year(2017)));
        assert_eq!(parse_period("2017-06"), Some(PeriodTag::Month(2017, 6)));
        assert_eq!(PeriodTag::Month(2017, 6).to_string(), "2017-06");
    }

    #[test]
    fn period_midpoints_are_evenly_spaced() {
        let a = PeriodTag::Year(2016).as_years();
        let b = PeriodTag::Year(2017).as_years();
        assert_eq!(b - a, 1.0);
        let m1 = PeriodTag::Month(2017, 1).as_years();
        let m2 = PeriodTag::Month(2017, 2).as_years();
        assert!((m2 - m1 - 1.0 / 12.0).abs() < 1e-12);
    }
}
