//! Input impedance cost of the bulk-to-gate connection.
//!
//! The bulk-tied input device adds its bulk-junction capacitance at the
//! gate, lowering the input impedance at every frequency. The example
//! sweeps both variants and calibrates the junction capacitance per area
//! so the bulk-tied input hits a chosen impedance at 50 kHz.
//!
//! Run with: `cargo run --example input_impedance`

use mirrornoise::mna::{self, log_grid, ModelContext};
use mirrornoise::topologies::{build_tc_half, InputDrive, TcHalfParams};
use mirrornoise::ProcessParams;

fn main() {
    let base = TcHalfParams {
        input_drive: InputDrive::Open,
        ..TcHalfParams::default()
    };
    let tied = TcHalfParams {
        dtmos: true,
        ..base
    };

    // Calibrate cj so |Zin(50 kHz)| lands on 7 MOhm.
    let f_spot = 50.0e3;
    let z_target = 7.0e6;
    let c_total = 1.0 / (2.0 * std::f64::consts::PI * f_spot * z_target);
    let cj = (c_total - base.c_gate) / base.m1.gate_area();
    println!(
        "junction capacitance for |Zin({:.0} kHz)| = {:.0} MOhm: cj = {:.3e} F/m^2",
        f_spot / 1e3,
        z_target / 1e6,
        cj
    );

    let ctx = ModelContext::new(ProcessParams {
        cj_bulk: cj,
        ..ProcessParams::default()
    });
    let circuit_base = build_tc_half(&base).unwrap();
    let circuit_tied = build_tc_half(&tied).unwrap();
    let prep_base = mna::prepare(&circuit_base, &ctx).unwrap();
    let prep_tied = mna::prepare(&circuit_tied, &ctx).unwrap();

    let grid = log_grid(1.0e3, 10.0e6, 9);
    println!("\n  freq [Hz]    |Zin| fixed bulk    |Zin| bulk tied");
    for (i, f) in grid.iter().enumerate() {
        let zb = prep_base
            .input_impedance(("in", "0"), &[*f])
            .unwrap()
            .values[0]
            .norm();
        let zt = prep_tied
            .input_impedance(("in", "0"), &[*f])
            .unwrap()
            .values[0]
            .norm();
        println!(
            "  {f:>10.0}   {:>13.3} MOhm   {:>12.3} MOhm",
            zb / 1e6,
            zt / 1e6
        );
        let _ = i;
    }

    let z50 = prep_tied
        .input_impedance(("in", "0"), &[f_spot])
        .unwrap()
        .values[0]
        .norm();
    println!(
        "\nbulk-tied |Zin| at the calibration point: {:.2} MOhm",
        z50 / 1e6
    );
}
