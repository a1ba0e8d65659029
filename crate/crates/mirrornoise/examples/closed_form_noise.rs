//! Closed-form mirror noise: conventional vs source-degenerated.
//!
//! Evaluates the output noise of a mirror branch directly from the
//! analytic expressions, shows how degeneration divides the device noise
//! by (1 + gm·R)², and prints the drain-referred transfer partition of the
//! two degenerated-branch sources.
//!
//! Run with: `cargo run --example closed_form_noise`

use mirrornoise::oracles::{
    appendix_transfers, cm_output_noise, sdcm_effective_gm, sdcm_output_noise, MirrorParams,
};

fn main() {
    let gm3 = 18.0e-6;
    let r_d = 1.0e6;

    println!(
        "conventional mirror, gm3 = {:.0} uS, Rd = {:.0} kOhm:",
        gm3 * 1e6,
        r_d / 1e3
    );
    let conv = MirrorParams::new(gm3, 0.0, r_d);
    let v2 = cm_output_noise(&conv);
    println!(
        "  output noise {:.3e} V^2/Hz = {:.1} nV/rtHz\n",
        v2,
        v2.sqrt() * 1e9
    );

    println!("degeneration sweep at the same device:");
    println!("  r_de [kOhm]  Gm_eff [uS]  1/R approx [uS]  output noise [nV/rtHz]");
    for r_de in [1.0e3, 10.0e3, 30.0e3, 50.0e3, 100.0e3] {
        let p = MirrorParams::new(gm3, r_de, r_d);
        let eff = sdcm_effective_gm(gm3, r_de);
        let (exact, _) = sdcm_output_noise(&p);
        println!(
            "  {:>10.0}  {:>11.3}  {:>15.1}  {:>21.1}",
            r_de / 1e3,
            eff.exact * 1e6,
            eff.approx.unwrap() * 1e6,
            exact.sqrt() * 1e9
        );
    }

    let r_de = 100.0e3;
    let eff = sdcm_effective_gm(gm3, r_de);
    println!(
        "\nat gm*R = {:.1} the 1/R approximation errs by {:.1}% (needs gm*R >> 1)",
        gm3 * r_de,
        100.0 * eff.approx_rel_err.unwrap()
    );

    let (h_rde, h_m3) = appendix_transfers(gm3, r_de);
    println!(
        "drain-current transfer partition at r_de = 100 kOhm: resistor {:.4}, device {:.4} \
         (sum {:.4})",
        h_rde,
        h_m3,
        h_rde + h_m3
    );
}
