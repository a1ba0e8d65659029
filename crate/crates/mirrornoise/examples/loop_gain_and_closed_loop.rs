//! Loop gain and closed-loop gain of the full amplifier.
//!
//! Measures the return ratio of the first-stage regulation loop, sweeps
//! it over frequency, and checks the closed-loop DC gain against the
//! resistance-ratio ideal within the 1/(1+T) feedback bound.
//!
//! Run with: `cargo run --example loop_gain_and_closed_loop`

use mirrornoise::mna::{self, log_grid, ModelContext};
use mirrornoise::topologies::build_full_ia;
use mirrornoise::FullIaParams;

fn main() {
    let params = FullIaParams {
        mirror_ratio: 0.2005,
        ..FullIaParams::default()
    };
    let circuit = build_full_ia(&params).unwrap();
    let ctx = ModelContext::default();
    let prep = mna::prepare(&circuit, &ctx).unwrap();

    let grid = log_grid(1.0, 100.0e6, 9);
    let t = prep.loop_gain(&grid).unwrap();
    println!("loop response of the regulation loop:");
    println!("  freq [Hz]    |T| [dB]   phase [deg]");
    for ((f, db), ph) in grid.iter().zip(t.magnitude_db()).zip(t.phase_deg()) {
        println!("  {f:>11.1}  {db:>8.2}   {ph:>8.1}");
    }

    let t0 = prep.loop_gain(&[0.0]).unwrap().values[0].norm();
    let gain = prep.solve_ac("VINP", "dout", &[0.0]).unwrap().values[0].norm();
    let ideal = params.ideal_gain();
    let bound_db = 20.0 * (1.0 + 1.0 / t0).log10();
    println!("\nclosed-loop DC gain: {:.4} dB", 20.0 * gain.log10());
    println!(
        "ideal m*Rout/Rin:    {:.4} dB (m = {}, ratio = {})",
        20.0 * ideal.log10(),
        params.mirror_ratio,
        params.r_out_ratio
    );
    println!("loop gain:           {:.1} dB", 20.0 * t0.log10());
    println!("feedback bound:      {:.6} dB", bound_db);
    println!(
        "deviation:           {:.6} dB ({})",
        (20.0 * gain.log10() - 20.0 * ideal.log10()).abs(),
        if (20.0 * gain.log10() - 20.0 * ideal.log10()).abs() <= bound_db {
            "inside the bound"
        } else {
            "OUTSIDE the bound"
        }
    );

    // Lead compensation only shapes the loop; DC gain is untouched.
    let no_clc = FullIaParams {
        c_lc: 0.0,
        ..params
    };
    let c2 = build_full_ia(&no_clc).unwrap();
    let prep2 = mna::prepare(&c2, &ctx).unwrap();
    let gain2 = prep2.solve_ac("VINP", "dout", &[0.0]).unwrap().values[0].norm();
    println!(
        "\nDC gain without the lead capacitor: {:.6} dB (unchanged)",
        20.0 * gain2.log10()
    );
}
