//! Constrained mirror design search.
//!
//! Minimizes the amplifier's input-referred noise over mirror width,
//! length, and degeneration resistance while holding half the supply as
//! diode headroom, then compares against the conventional baseline found
//! under the same constraints and translates the noise win into an
//! iso-noise power saving.
//!
//! Run with: `cargo run --example design_optimization`

use mirrornoise::devmodel::{MosGeometry, ProcessParams};
use mirrornoise::sweep_opt::{
    iso_noise_power_ratio, nef, optimize, DesignSpec, GridScale, RangeSpec,
};

fn main() {
    // With a large input resistance the tail-source term is a first-order
    // noise contributor, which is exactly where degeneration pays off.
    let spec = DesignSpec {
        vdd: 0.8,
        min_headroom_diode: None, // defaults to vdd/2
        max_v_de: None,           // defaults to vdd/4
        branch_current: 1.0e-6,
        w3_range: RangeSpec::Values {
            values: vec![2.0e-6, 5.0e-6, 10.0e-6, 20.0e-6],
        },
        l3_range: RangeSpec::Grid {
            min: 0.25e-6,
            max: 4.0e-6,
            points: 9,
            scale: GridScale::Log,
        },
        rde_range: RangeSpec::Values {
            values: vec![0.0, 10.0e3, 30.0e3, 50.0e3, 100.0e3],
        },
        spot_frequency: 1.0e5,
        process: ProcessParams::default(),
        input_device: MosGeometry::new(500.0e-6, 0.25e-6),
        dtmos: false,
        r_in: 50.0e3,
        v_in_cm: 0.25,
    };
    let optimum = optimize(&spec).unwrap();

    println!("chosen design point:");
    println!(
        "  W3 = {:.1} um, L3 = {:.2} um, R_de = {:.0} kOhm",
        optimum.chosen.w3 * 1e6,
        optimum.chosen.l3 * 1e6,
        optimum.chosen.r_de / 1e3
    );
    println!(
        "  input-referred {:.2} nV/rtHz",
        optimum.chosen.noise_v_rthz * 1e9
    );
    println!(
        "  diode headroom {:.0} mV, degeneration drop {:.0} mV",
        optimum.chosen.headroom.headroom_diode * 1e3,
        optimum.chosen.headroom.v_de * 1e3
    );

    println!("\nconventional baseline under the same constraints:");
    println!(
        "  W3 = {:.1} um, L3 = {:.2} um -> {:.2} nV/rtHz, headroom {:.0} mV",
        optimum.baseline.w3 * 1e6,
        optimum.baseline.l3 * 1e6,
        optimum.baseline.noise_v_rthz * 1e9,
        optimum.baseline.headroom.headroom_diode * 1e3
    );

    println!(
        "\nnoise ratio (chosen/baseline): {:.4}",
        optimum.noise_ratio
    );
    println!(
        "diode headroom improvement:    {:.0} mV",
        optimum.headroom_delta * 1e3
    );

    let power_ratio = iso_noise_power_ratio(optimum.noise_ratio).unwrap();
    println!(
        "iso-noise power scaling:       {:.3} ({:.1}% saving at equal noise)",
        power_ratio,
        100.0 * (1.0 - power_ratio)
    );

    // Noise efficiency bookkeeping for a representative operating point.
    let p = ProcessParams::default();
    let value = nef(36.0e-6, 3.09e-6, 1.44e6, &p);
    println!("\nNEF at 36 uVrms, 3.09 uA, 1.44 MHz: {value:.2}");

    println!(
        "\nfull result as JSON:\n{}",
        serde_json::to_string_pretty(&optimum).unwrap()
    );
}
