//! Numerical noise analysis against the closed forms.
//!
//! Builds the standalone mirror netlists, runs the per-source MNA noise
//! superposition, and compares the totals with the analytic expressions —
//! the two must agree to rounding error when channel-length modulation is
//! off.
//!
//! Run with: `cargo run --example mirror_vs_mna`

use mirrornoise::mna::{self, ModelContext};
use mirrornoise::oracles::{mirror_params_from_process, sdcm_output_noise};
use mirrornoise::topologies::{build_mirror, MirrorTopoParams};
use mirrornoise::ProcessParams;

fn main() {
    // Flicker off so the thermal closed forms apply exactly.
    let process = ProcessParams {
        kf: 1.0e-300,
        ..ProcessParams::default()
    };
    let ctx = ModelContext::new(process);

    println!("  r_de [kOhm]  MNA total [V^2/Hz]  closed form [V^2/Hz]  rel err");
    for r_de in [0.0, 1.0e3, 10.0e3, 50.0e3, 100.0e3, 1.0e6] {
        let mut params = MirrorTopoParams::sdcm(r_de);
        if r_de == 0.0 {
            params = MirrorTopoParams {
                r_de: 0.0,
                ..params
            };
            params.kind = mirrornoise::MirrorKind::Conventional;
        }
        let circuit = build_mirror(&params).unwrap();
        let prep = mna::prepare(&circuit, &ctx).unwrap();
        let gm = prep.device_eval("M3").unwrap().gm;
        let report = prep.noise_at_output(None, None, None, &[1.0e3]).unwrap();
        let oracle =
            sdcm_output_noise(&mirror_params_from_process(gm, r_de, params.r_d, &process)).0;
        let rel = (report.total[0] - oracle).abs() / oracle;
        println!(
            "  {:>10.0}  {:>18.6e}  {:>20.6e}  {:.1e}",
            r_de / 1e3,
            report.total[0],
            oracle,
            rel
        );
    }

    // The per-source view shows where the reduction comes from.
    let circuit = build_mirror(&MirrorTopoParams::sdcm(100.0e3)).unwrap();
    let prep = mna::prepare(&circuit, &ModelContext::default()).unwrap();
    let report = prep.noise_at_output(None, None, None, &[100.0e3]).unwrap();
    println!("\nper-source breakdown at 100 kHz (r_de = 100 kOhm):");
    for (name, fraction) in report.breakdown_at(0) {
        println!("  {name:<14} {:5.1}%", 100.0 * fraction);
    }
}
