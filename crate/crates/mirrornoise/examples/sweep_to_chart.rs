//! Sweep a design variable and render the result as an SVG chart.
//!
//! Runs the degeneration-resistance sweep on the mirror, writes the CSV,
//! and renders output noise and effective transconductance on log axes.
//! Identical inputs always produce byte-identical SVG.
//!
//! Run with: `cargo run --example sweep_to_chart`

use mirrornoise::cli::plot::{emit_svg, CsvTable, PlotSpec};
use mirrornoise::sweep_opt::{run_sweep, Observable, SweepSpec, SweepTarget, SweptVar};
use mirrornoise::topologies::MirrorTopoParams;
use mirrornoise::ProcessParams;

fn main() {
    let spec = SweepSpec {
        target: SweepTarget::Mirror(MirrorTopoParams::sdcm(50.0e3)),
        swept: SweptVar::RDe,
        values: vec![
            1.0e3, 2.0e3, 5.0e3, 1.0e4, 2.0e4, 5.0e4, 1.0e5, 2.0e5, 5.0e5, 1.0e6,
        ],
        observables: vec![
            Observable::OutputNoisePsd,
            Observable::GmEff,
            Observable::VDe,
        ],
        process: ProcessParams::default(),
        spot_frequency: 1.0e5,
    };
    let table = run_sweep(&spec).unwrap();
    let csv = table.to_csv();
    print!("{csv}");

    let parsed = CsvTable::parse(&csv).unwrap();
    let svg = emit_svg(
        &parsed,
        &PlotSpec {
            x: "r_de".to_string(),
            y: vec!["output_noise_psd".to_string()],
            logx: true,
            logy: true,
        },
    )
    .unwrap();

    let dir = std::env::temp_dir().join("mirrornoise-examples");
    std::fs::create_dir_all(&dir).unwrap();
    let csv_path = dir.join("rde_sweep.csv");
    let svg_path = dir.join("rde_sweep.svg");
    std::fs::write(&csv_path, &csv).unwrap();
    std::fs::write(&svg_path, &svg).unwrap();
    println!("\nwrote {} and {}", csv_path.display(), svg_path.display());

    let again = emit_svg(
        &parsed,
        &PlotSpec {
            x: "r_de".to_string(),
            y: vec!["output_noise_psd".to_string()],
            logx: true,
            logy: true,
        },
    )
    .unwrap();
    assert_eq!(svg, again);
    println!("second render is byte-identical: ok");
}
