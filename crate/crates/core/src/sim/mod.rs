//! Synthetic battery + household-load generator with fully known ground
//! truth. Stands in for field capacity tests: every quantity the pipeline
//! estimates (SOC, DCR, OCV, fade, peak drift) has a truth entry in the
//! emitted event log.
//!
//! The OCV presets are piecewise profiles built to exhibit the qualitative
//! features of each chemistry (plateaus, transition peaks, steep ends);
//! they are stand-ins, not fits of real cells.

mod run;

pub use run::{
    generate, EventLog, GenerateSummary, LoadScenario, NoiseConfig, PhaseTruth, PulseTruth,
    Simulator, TemperatureConfig,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Chemistry;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config out of range: {0}")]
    ConfigOutOfRange(String),
    #[error("degradation exceeds capacity: usable window empty after {years} years")]
    DegradationExceedsCapacity { years: Scalar },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Parametric dV/dSOC profile: a base slope, an extra steep start (and
/// optionally end), and Gaussian transition bumps whose centers are the DV
/// peaks. Integrating yields a strictly increasing OCV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OcvShape {
    /// Cell voltage at 0 % and 100 % SOC.
    pub v_bottom: Scalar,
    pub v_top: Scalar,
    pub base_slope: Scalar,
    /// (amplitude, tau): extra slope `amp * exp(-s/tau)` at the bottom.
    pub steep_bottom: (Scalar, Scalar),
    /// Same at the top, as `amp * exp(-(100-s)/tau)`.
    pub steep_top: (Scalar, Scalar),
    /// (center %SOC, amplitude, width): DV transition peaks.
    pub bumps: Vec<(Scalar, Scalar, Scalar)>,
}

impl OcvShape {
    fn dv_ds(&self, s: Scalar) -> Scalar {
        let mut v = self.base_slope;
        v += self.steep_bottom.0 * (-s / self.steep_bottom.1).exp();
        v += self.steep_top.0 * (-(100.0 - s) / self.steep_top.1).exp();
        for &(c, a, w) in &self.bumps {
            let z = (s - c) / w;
            v += a * (-0.5 * z * z).exp();
        }
        v
    }

    /// Shrink the spacing of the transition peaks toward the top of the
    /// curve by `factor` (< 1), the loss-of-active-material signature.
    fn scale_plateaus(&self, factor: Scalar) -> OcvShape {
        let mut shape = self.clone();
        for bump in &mut shape.bumps {
            bump.0 = 100.0 - (100.0 - bump.0) * factor;
        }
        shape
    }

    /// Tabulate the integrated profile on a fine SOC grid, normalized so
    /// the endpoints hit (0, v_bottom) and (100, v_top) exactly.
    pub fn tabulate(&self, points: usize) -> OcvTable {
        assert!(points >= 2);
        let n = points - 1;
        let ds = 100.0 / n as Scalar;
        let mut cum = Vec::with_capacity(points);
        let mut acc = 0.0;
        cum.push(0.0);
        let mut prev = self.dv_ds(0.0);
        for k in 1..=n {
            let s = k as Scalar * ds;
            let cur = self.dv_ds(s);
            acc += 0.5 * (prev + cur) * ds;
            cum.push(acc);
            prev = cur;
        }
        let total = acc;
        let span = self.v_top - self.v_bottom;
        let soc: Vec<Scalar> = (0..=n).map(|k| k as Scalar * ds).collect();
        let volts: Vec<Scalar> = cum
            .iter()
            .map(|c| self.v_bottom + c / total * span)
            .collect();
        OcvTable { soc, volts }
    }
}

/// Tabulated strictly monotonic OCV: cell volts over percent SOC.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OcvTable {
    pub soc: Vec<Scalar>,
    pub volts: Vec<Scalar>,
}

impl OcvTable {
    /// Cell voltage at an SOC; linear extension with the end slopes outside
    /// the tabulated domain.
    pub fn voltage_at(&self, soc: Scalar) -> Scalar {
        let n = self.soc.len();
        if soc <= self.soc[0] {
            let slope = (self.volts[1] - self.volts[0]) / (self.soc[1] - self.soc[0]);
            return self.volts[0] + (soc - self.soc[0]) * slope;
        }
        if soc >= self.soc[n - 1] {
            let slope =
                (self.volts[n - 1] - self.volts[n - 2]) / (self.soc[n - 1] - self.soc[n - 2]);
            return self.volts[n - 1] + (soc - self.soc[n - 1]) * slope;
        }
        crate::math::resample_linear(&self.soc, &self.volts, &[soc])[0]
    }

    /// SOC where the table crosses a voltage (inverse lookup).
    pub fn soc_at(&self, voltage: Scalar) -> Scalar {
        crate::math::resample_linear(&self.volts, &self.soc, &[voltage])[0]
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.volts.windows(2).all(|w| w[1] > w[0])
    }
}

/// Cell-level DC resistance surface: high at low SOC and low temperature.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DcrSurface {
    pub base_ohm: Scalar,
    pub soc_amp: Scalar,
    pub soc_tau: Scalar,
    pub temp_amp: Scalar,
    pub temp_tau: Scalar,
}

impl DcrSurface {
    pub fn cell_ohm(&self, soc: Scalar, temp: Scalar) -> Scalar {
        self.base_ohm
            * (1.0 + self.soc_amp * (-soc / self.soc_tau).exp())
            * (1.0 + self.temp_amp * (-temp / self.temp_tau).exp())
    }
}

/// Per-year degradation rates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
pub struct DegradationSchedule {
    /// Horizontal OCV shift, pp/a: `V(s) = V0(s + shift)`.
    pub lli_shift_pp_per_year: Scalar,
    /// Usable-capacity loss, pp of nominal per year.
    pub capacity_fade_pp_per_year: Scalar,
    /// Compounded DCR growth, percent per year.
    pub dcr_growth_pct_per_year: Scalar,
    /// Plateau-spacing shrink factor per year (e.g. 0.01 = 1 %/a), the LAM
    /// signature. None leaves plateau positions untouched.
    pub lam_plateau_shrink_per_year: Option<Scalar>,
}

impl DegradationSchedule {
    /// Pure LLI: the OCV shifts and the usable window shrinks by the same
    /// amount, so the battery still tops out exactly at the EOC voltage.
    pub fn pure_lli(pp_per_year: Scalar) -> Self {
        Self {
            lli_shift_pp_per_year: pp_per_year,
            capacity_fade_pp_per_year: pp_per_year,
            ..Self::default()
        }
    }
}

/// Synthetic battery: pristine shape plus a degradation schedule applied
/// for `aged_years`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimBattery {
    pub chemistry: Chemistry,
    pub shape: OcvShape,
    pub dcr: DcrSurface,
    /// Nominal capacity, Ah. C-rates and nominal SOC refer to this.
    pub capacity_ah: Scalar,
    pub cell_count_series: u32,
    pub eoc_v_cell: Scalar,
    pub eod_v_cell: Scalar,
    pub degradation: DegradationSchedule,
    pub aged_years: Scalar,
}

impl SimBattery {
    pub fn preset(chemistry: Chemistry) -> SimBattery {
        match chemistry {
            Chemistry::LmoNmcBlend => SimBattery {
                chemistry,
                shape: OcvShape {
                    v_bottom: 3.30,
                    v_top: 4.15,
                    base_slope: 0.0055,
                    steep_bottom: (0.010, 7.0),
                    steep_top: (0.0, 1.0),
                    bumps: vec![
                        (13.0, 0.011, 3.0),
                        (45.0, 0.016, 2.2),
                        (66.0, 0.011, 3.5),
                    ],
                },
                dcr: DcrSurface {
                    base_ohm: 0.00455,
                    soc_amp: 0.45,
                    soc_tau: 18.0,
                    temp_amp: 0.55,
                    temp_tau: 14.0,
                },
                capacity_ah: 40.0,
                cell_count_series: 1,
                eoc_v_cell: 4.15,
                eod_v_cell: 3.30,
                degradation: DegradationSchedule::default(),
                aged_years: 0.0,
            },
            Chemistry::Nmc => SimBattery {
                chemistry,
                shape: OcvShape {
                    v_bottom: 3.00,
                    v_top: 4.20,
                    base_slope: 0.0060,
                    steep_bottom: (0.020, 5.0),
                    steep_top: (0.010, 6.0),
                    bumps: vec![(10.0, 0.030, 2.5), (50.0, 0.006, 8.0), (87.0, 0.020, 3.0)],
                },
                dcr: DcrSurface {
                    base_ohm: 0.0020,
                    soc_amp: 0.40,
                    soc_tau: 16.0,
                    temp_amp: 0.40,
                    temp_tau: 15.0,
                },
                capacity_ah: 120.0,
                cell_count_series: 1,
                eoc_v_cell: 4.20,
                eod_v_cell: 3.00,
                degradation: DegradationSchedule::default(),
                aged_years: 0.0,
            },
            Chemistry::Lfp => SimBattery {
                chemistry,
                shape: OcvShape {
                    v_bottom: 2.90,
                    v_top: 3.60,
                    base_slope: 0.0012,
                    steep_bottom: (0.030, 4.0),
                    steep_top: (0.030, 4.0),
                    bumps: vec![(25.0, 0.0035, 3.0), (60.0, 0.0035, 3.0)],
                },
                dcr: DcrSurface {
                    base_ohm: 0.0015,
                    soc_amp: 0.40,
                    soc_tau: 18.0,
                    temp_amp: 0.45,
                    temp_tau: 14.0,
                },
                capacity_ah: 160.0,
                cell_count_series: 1,
                eoc_v_cell: 3.60,
                eod_v_cell: 2.90,
                degradation: DegradationSchedule::default(),
                aged_years: 0.0,
            },
        }
    }

    /// Apply the degradation schedule for `years` more. Shift composition
    /// is additive; DCR growth compounds.
    pub fn age(&self, years: Scalar) -> Result<SimBattery, SimError> {
        if years < 0.0 {
            return Err(SimError::ConfigOutOfRange("years must be >= 0".into()));
        }
        let mut aged = self.clone();
        aged.aged_years += years;
        if aged.soc_min() >= aged.soc_max() {
            return Err(SimError::DegradationExceedsCapacity {
                years: aged.aged_years,
            });
        }
        Ok(aged)
    }

    /// Accumulated horizontal OCV shift, pp.
    pub fn lli_shift_pp(&self) -> Scalar {
        self.degradation.lli_shift_pp_per_year * self.aged_years
    }

    /// Usable-capacity loss, pp of nominal.
    pub fn capacity_fade_pp(&self) -> Scalar {
        self.degradation.capacity_fade_pp_per_year * self.aged_years
    }

    /// State of health: usable capacity relative to nominal, percent.
    pub fn soh_pct(&self) -> Scalar {
        100.0 - self.capacity_fade_pp()
    }

    /// Compounded DCR multiplier.
    pub fn dcr_multiplier(&self) -> Scalar {
        (1.0 + self.degradation.dcr_growth_pct_per_year / 100.0).powf(self.aged_years)
    }

    fn aged_shape(&self) -> OcvShape {
        match self.degradation.lam_plateau_shrink_per_year {
            Some(rate) => {
                let factor = (1.0 - rate).powf(self.aged_years);
                self.shape.scale_plateaus(factor)
            }
            None => self.shape.clone(),
        }
    }

    /// Aged, tabulated OCV over the pristine nominal-SOC domain.
    pub fn ocv_table(&self) -> OcvTable {
        self.aged_shape().tabulate(2001)
    }

    /// Lowest reachable nominal SOC: the charge-exhaustion floor after
    /// capacity fade, net of the horizontal shift.
    pub fn soc_min(&self) -> Scalar {
        self.capacity_fade_pp() - self.lli_shift_pp()
    }

    /// Highest reachable nominal SOC: where the shifted curve meets the EOC
    /// voltage.
    pub fn soc_max(&self) -> Scalar {
        100.0 - self.lli_shift_pp()
    }

    /// Cell voltage at nominal SOC for the aged battery.
    pub fn voltage_cell_at(&self, table: &OcvTable, soc_nominal: Scalar) -> Scalar {
        table.voltage_at(soc_nominal + self.lli_shift_pp())
    }

    /// System-level DC resistance at (SOC, T) for the aged battery.
    pub fn dcr_system_ohm(&self, soc: Scalar, temp: Scalar) -> Scalar {
        self.dcr.cell_ohm(soc, temp) * self.dcr_multiplier() * self.cell_count_series as Scalar
    }

    /// System end-of-charge / end-of-discharge voltages.
    pub fn eoc_v_system(&self) -> Scalar {
        self.eoc_v_cell * self.cell_count_series as Scalar
    }

    pub fn eod_v_system(&self) -> Scalar {
        self.eod_v_cell * self.cell_count_series as Scalar
    }

    /// One-C current in amperes.
    pub fn current_1c(&self) -> Scalar {
        self.capacity_ah
    }
}
