// Scratch harness: run the pipeline over a short simulated window and
// report curve quality and FOI locations for preset calibration.

use ocvtrace_core::dcr::{build_table, detect_pulses, PulseConfig, TableConfig};
use ocvtrace_core::diff;
use ocvtrace_core::foi;
use ocvtrace_core::ingest::{SocConfig, SocTracker};
use ocvtrace_core::phases::{apply_filters, correct_overvoltage, CorrectionConfig, PhaseConfig};
use ocvtrace_core::qocv::{align_partials, fuse, FuseConfig};
use ocvtrace_core::sim::{LoadScenario, SimBattery, Simulator};
use ocvtrace_core::types::{Chemistry, Direction, EodEpoch, PeriodTag, SystemConfig};

fn main() {
    let battery = SimBattery::preset(Chemistry::LmoNmcBlend);
    let scenario = LoadScenario::daily(&battery, 40);
    let seed = 42;

    let system = SystemConfig {
        system_id: "dbg".into(),
        chemistry: battery.chemistry,
        nominal_capacity_ah: battery.capacity_ah,
        nominal_voltage_v: 3.7,
        cell_count_series: battery.cell_count_series,
        eoc_voltage_v: battery.eoc_v_system() - 0.03 * battery.cell_count_series as f64,
        eoc_taper_current_a: 0.4,
        eod_voltage_v: vec![EodEpoch {
            from: 0,
            volts: battery.eod_v_system(),
        }],
    };

    // pass 1: pulses -> one table
    let sim = Simulator::new(&battery, &scenario, seed).unwrap();
    let mut tracker = SocTracker::new(&system, SocConfig::default());
    let pcfg = PulseConfig::for_system(&system);
    let pulses = detect_pulses(sim.stream_items(), &mut tracker, &pcfg).unwrap();
    println!("pulses detected: {}", pulses.len());
    let t0 = scenario.start_timestamp;
    let t1 = t0 + scenario.days as i64 * 86_400;
    let table = build_table(&pulses, &TableConfig::default(), t0, t1).unwrap();
    println!("table populated cells: {}", table.populated_cells());

    // pass 2: phases -> partials -> fused discharge curve
    let sim = Simulator::new(&battery, &scenario, seed).unwrap();
    let mut tracker = SocTracker::new(&system, SocConfig::default());
    let phase_cfg = PhaseConfig::for_system(&system);
    let raw_phases =
        ocvtrace_core::phases::split_by_sign(sim.stream_items(), &mut tracker, phase_cfg.clone())
            .unwrap();
    println!("raw phases: {}", raw_phases.len());
    let mut audit = Vec::new();
    let mut next_id = 10_000;
    let kept = apply_filters(raw_phases, &phase_cfg, &mut next_id, &mut audit);
    println!("kept phases: {}", kept.len());
    let ccfg = CorrectionConfig::for_system(&system);
    let mut partials = Vec::new();
    let mut skipped = 0;
    for phase in kept.iter().filter(|p| p.direction == Direction::Discharge) {
        match correct_overvoltage(phase, &table, &ccfg) {
            Ok(p) => partials.push(p),
            Err(_) => skipped += 1,
        }
    }
    println!("discharge partials: {} (skipped {skipped})", partials.len());

    let fcfg = FuseConfig::default();
    let aligned = align_partials(&partials, &fcfg);
    println!(
        "aligned: kept {} dropped_outliers {} no_overlap {} iters {}",
        aligned.partials.len(),
        aligned.dropped_outliers,
        aligned.dropped_no_overlap,
        aligned.iterations
    );
    let curve = fuse(
        &aligned.partials,
        Direction::Discharge,
        PeriodTag::Year(2016),
        &fcfg,
    )
    .unwrap();
    println!(
        "fused: {} grid pts, v {:.3}..{:.3}",
        curve.grid.len(),
        curve.voltage_range().0,
        curve.voltage_range().1
    );

    // curve vs true OCV
    let truth = battery.ocv_table();
    let mut worst: (f64, f64) = (0.0, 0.0);
    for p in &curve.grid {
        if p.mean_soc < 10.0 || p.mean_soc > 90.0 {
            continue;
        }
        let true_soc = truth.soc_at(p.voltage);
        let err = (p.mean_soc - true_soc).abs();
        if err > worst.0 {
            worst = (err, p.voltage);
        }
    }
    println!(
        "max |dSOC| vs truth (10-90%): {:.3} pp at {:.3} V",
        worst.0, worst.1
    );

    // diff curves + FOI locations
    let smoothed = diff::smooth(&curve, 0.010).unwrap();
    let ic = diff::ica(&smoothed, 0.010).unwrap();
    let v_of_s = diff::resample_soc(&smoothed, 0.25).unwrap();
    let v_smooth = diff::smooth_voltage(&v_of_s, 1.0).unwrap();
    let dv = diff::dva(&v_smooth).unwrap();
    println!("ic pts {} dv pts {}", ic.x.len(), dv.x.len());

    // where are the IC maxima?
    let mut ys: Vec<(f64, f64)> = ic.x.iter().cloned().zip(ic.y.iter().cloned()).collect();
    ys.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    println!("top IC points:");
    for (x, y) in ys.iter().take(8) {
        println!("  {:.3} V -> {:.1} %/V", x, y);
    }
    let mut dvs: Vec<(f64, f64)> = dv.x.iter().cloned().zip(dv.y.iter().cloned()).collect();
    dvs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    println!("top DV points:");
    for (x, y) in dvs.iter().take(8) {
        println!("  {:.1} % -> {:.5} V/%", x, y);
    }

    for spec in foi::builtin_catalog(Chemistry::LmoNmcBlend).unwrap() {
        let curve_ref = if spec.curve_kind == diff::DiffKind::IncrementalCapacity {
            &ic
        } else {
            &dv
        };
        match foi::locate(&spec, curve_ref) {
            Ok(l) => println!(
                "FOI {} {:?} {:?}: raw {:.4} at x {:.3}",
                spec.foi_id, spec.curve_kind, spec.feature, l.raw_value, l.x
            ),
            Err(e) => println!("FOI {} {:?}: {}", spec.foi_id, spec.curve_kind, e),
        }
    }
}
