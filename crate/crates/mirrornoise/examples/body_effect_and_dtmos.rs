//! Body effect and the bulk-to-gate connection.
//!
//! Threshold shift and bulk transconductance across source-bulk bias, the
//! self-consistent operating point of a bulk-tied device, the resulting
//! input-device noise ratio, and the gate-source magnitude across process
//! corners against the junction forward-bias limit.
//!
//! Run with: `cargo run --example body_effect_and_dtmos`

use mirrornoise::devmodel::{
    body_transconductance, gm_of_bias, small_signal_bulk_tied, threshold_voltage, MosBias,
    MosGeometry, ProcessParams,
};
use mirrornoise::oracles::dtmos_noise_ratio;
use mirrornoise::sweep_opt::vsg_across_corners;

fn main() {
    let p = ProcessParams::default();
    let geom = MosGeometry::new(500.0e-6, 0.25e-6);
    let id = 1.0e-6;

    println!("threshold and bulk transconductance vs source-bulk bias:");
    println!("  vsb [V]   vth [V]   gmb/gm");
    for vsb in [-0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.4] {
        let vth = threshold_voltage(vsb, &p).unwrap();
        let gm = gm_of_bias(&geom, &MosBias::with_vsb(id, vsb), &p).unwrap();
        let gmb = body_transconductance(gm, vsb, &p).unwrap();
        println!("  {vsb:>7.2}   {vth:.4}    {:.4}", gmb / gm);
    }

    // Bulk tied to gate: the forward body bias is the gate drive itself.
    let ss = small_signal_bulk_tied(&geom, id, &p).unwrap();
    println!("\nbulk-tied operating point at {:.0} uA:", id * 1e6);
    println!("  vgs  = {:.4} V (also the forward body bias)", ss.vgs);
    println!("  vth  = {:.4} V (down from {:.4} V)", ss.vth, p.vth0);
    println!(
        "  gm   = {:.2} uS, gmb = {:.2} uS",
        ss.gm * 1e6,
        ss.gmb * 1e6
    );
    let ratio = dtmos_noise_ratio(ss.gm, ss.gmb);
    println!(
        "  input-device RMS noise ratio gm/(gm+gmb) = {:.4}  ({:.1}% reduction)",
        ratio,
        100.0 * (1.0 - ratio)
    );

    // Safety: the junction must never see enough forward bias to conduct.
    let corners = [
        ("nominal", ProcessParams::default()),
        (
            "slow",
            ProcessParams {
                mu_cox: 2.0e-4,
                vth0: 0.35,
                ..ProcessParams::default()
            },
        ),
        (
            "fast",
            ProcessParams {
                mu_cox: 4.0e-4,
                vth0: 0.25,
                ..ProcessParams::default()
            },
        ),
        (
            "hot",
            ProcessParams {
                temperature: 350.0,
                ..ProcessParams::default()
            },
        ),
        (
            "cold",
            ProcessParams {
                temperature: 250.0,
                ..ProcessParams::default()
            },
        ),
    ];
    let params: Vec<ProcessParams> = corners.iter().map(|(_, p)| *p).collect();
    let vsgs = vsg_across_corners(&geom, id, true, &params).unwrap();
    println!("\nbulk-tied gate-source magnitude across corners (junction budget ~0.25 V):");
    for ((name, _), vsg) in corners.iter().zip(vsgs) {
        let verdict = if vsg < 0.25 { "ok" } else { "CHECK" };
        println!("  {name:<8} {:.1} mV  {verdict}", vsg * 1e3);
    }
}
