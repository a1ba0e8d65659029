//! Input-referred noise of the full amplifier.
//!
//! Compares three builds at 100 kHz: conventional tail, degenerated tail,
//! and degenerated tail with the bulk-tied input pair. The per-source
//! breakdown shows the tail term collapsing under degeneration and the
//! input-device term shrinking with the extra body transconductance.
//!
//! Run with: `cargo run --example amplifier_noise_breakdown`

use mirrornoise::mna::{self, ModelContext};
use mirrornoise::topologies::build_full_ia;
use mirrornoise::FullIaParams;

fn report(label: &str, params: &FullIaParams) -> f64 {
    let circuit = build_full_ia(params).unwrap();
    let prep = mna::prepare(&circuit, &ModelContext::default()).unwrap();
    let noise = prep.noise_at_output(None, None, None, &[100.0e3]).unwrap();
    let input = noise.input_referred[0];
    println!("{label}: input-referred {:.2} nV/rtHz", input.sqrt() * 1e9);
    let mut shown = 0.0;
    for (name, fraction) in noise.breakdown_at(0) {
        if fraction > 0.02 {
            println!("    {name:<16} {:5.1}%", 100.0 * fraction);
            shown += fraction;
        }
    }
    println!("    {:<16} {:5.1}%", "(others)", 100.0 * (1.0 - shown));
    input
}

fn main() {
    let baseline = FullIaParams {
        r_de: 0.0,
        dtmos: false,
        ..FullIaParams::default()
    };
    let degenerated = FullIaParams {
        r_de: 50.0e3,
        dtmos: false,
        ..baseline
    };
    let both = FullIaParams {
        dtmos: true,
        ..degenerated
    };

    let a = report("conventional tails         ", &baseline);
    let b = report("degenerated tails (50k)    ", &degenerated);
    let c = report("degenerated + bulk-tied M1 ", &both);

    println!(
        "\nRMS improvement from degeneration:   {:5.2}%",
        100.0 * (1.0 - (b / a).sqrt())
    );
    println!(
        "further improvement from bulk tie:   {:5.2}%",
        100.0 * (1.0 - (c / b).sqrt())
    );
    let combined = 1.0 - (c / a).sqrt();
    println!(
        "combined:                            {:5.2}%",
        100.0 * combined
    );
    println!(
        "iso-noise power implication:         {:.1}% less supply current at equal noise",
        100.0 * (1.0 - (1.0 - combined) * (1.0 - combined))
    );
}
