//! Parsing netlist text and running AC analyses on it.
//!
//! Shows the grammar (engineering suffixes, MOSFET cards, macro
//! amplifiers, directives), positioned diagnostics on bad input, and the
//! serialize/parse round trip.
//!
//! Run with: `cargo run --example netlist_analysis`

use mirrornoise::mna::{self, log_grid, ModelContext};
use mirrornoise::netlist::parse_netlist;

const FILTER: &str = "\
rc low-pass with buffer
V1 in 0 DC=0 AC=1
R1 in mid 1k
C1 mid 0 1.59155n
E1 out 0 mid out GAIN=1000
R2 out 0 10k
.end
";

fn main() {
    let circuit = parse_netlist(FILTER).unwrap();
    println!(
        "parsed '{}': {} elements",
        circuit.title,
        circuit.elements.len()
    );

    let prep = mna::prepare(&circuit, &ModelContext::default()).unwrap();
    let grid = log_grid(1.0e3, 1.0e6, 7);
    let ac = prep.solve_ac("V1", "out", &grid).unwrap();
    println!("\n  freq [Hz]   |gain| [dB]   phase [deg]");
    for ((f, db), ph) in grid.iter().zip(ac.magnitude_db()).zip(ac.phase_deg()) {
        println!("  {f:>9.0}   {db:>10.3}   {ph:>10.2}");
    }

    // The -3 dB point of the RC is at 1/(2*pi*R*C) = 100 kHz.
    let f3 = 1.0 / (2.0 * std::f64::consts::PI * 1.0e3 * 1.59155e-9);
    let at_corner = prep.solve_ac("V1", "out", &[f3]).unwrap();
    println!(
        "\n|gain| at the RC corner: {:.4} (1/sqrt(2) = {:.4})",
        at_corner.values[0].norm(),
        1.0 / 2f64.sqrt()
    );

    // Round trip: serialization parses back to the same circuit.
    let round = parse_netlist(&circuit.serialize()).unwrap();
    assert_eq!(round, circuit);
    println!("serialize -> parse round trip: ok");

    // Broken input produces a positioned diagnostic instead of a crash.
    let bad = "title\nR1 a 0 4q\n.end\n";
    match parse_netlist(bad) {
        Err(d) => println!(
            "diagnostic for bad input: {}",
            d.display_with_file("example.cir")
        ),
        Ok(_) => unreachable!(),
    }
}
