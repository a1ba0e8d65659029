//! Closed-form noise and transfer expressions for the mirror and amplifier
//! structures, used as independent references against the MNA engine and as
//! fast evaluators inside sweeps and the optimizer.
//!
//! Every function here is a direct transcription of a hand-derived small
//! signal result; none of them share code with [`crate::mna`].

use serde::{Deserialize, Serialize};

use crate::devmodel::ProcessParams;

/// Parameters of a (possibly degenerated) current mirror output branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorParams {
    /// Transconductance of the mirror output device (S).
    pub gm3: f64,
    /// Source degeneration resistance (Ω); zero for a conventional mirror.
    pub r_de: f64,
    /// Load resistance at the mirror output (Ω).
    pub r_d: f64,
    /// Thermal-noise excess factor γ.
    pub gamma_noise: f64,
    /// Temperature (K).
    pub temperature: f64,
}

impl MirrorParams {
    pub fn new(gm3: f64, r_de: f64, r_d: f64) -> Self {
        Self {
            gm3,
            r_de,
            r_d,
            gamma_noise: 1.0,
            temperature: 300.0,
        }
    }

    fn four_kt(&self) -> f64 {
        4.0 * crate::devmodel::BOLTZMANN * self.temperature
    }
}

/// Parameters of the input-stage noise expression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IaNoiseParams {
    /// Effective input-device transconductance (gm1, or gm1+gmb1 with the
    /// bulk tied to the gate) (S).
    pub gm1: f64,
    /// Effective tail-source transconductance seen at the input node (S).
    pub gm3: f64,
    /// Input resistance between the two half-circuit source nodes (Ω).
    pub r_in: f64,
    /// Thermal-noise excess factor γ.
    pub gamma_noise: f64,
    /// Temperature (K).
    pub temperature: f64,
}

impl IaNoiseParams {
    fn four_kt(&self) -> f64 {
        4.0 * crate::devmodel::BOLTZMANN * self.temperature
    }
}

/// Effective transconductance of a degenerated device, with the
/// large-`gm·R` approximation alongside the exact value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveGm {
    /// Exact `gm/(1 + gm·R)`.
    pub exact: f64,
    /// Approximation `1/R`; undefined when `R = 0`.
    pub approx: Option<f64>,
    /// Relative error of the approximation, `1/(gm·R)`; undefined at `R = 0`.
    pub approx_rel_err: Option<f64>,
}

/// Output noise voltage PSD of a conventional current mirror branch:
/// `4kTγ·gm3·Rd² + 4kT·Rd` (V²/Hz).
pub fn cm_output_noise(p: &MirrorParams) -> f64 {
    let four_kt = p.four_kt();
    four_kt * p.gamma_noise * p.gm3 * p.r_d * p.r_d + four_kt * p.r_d
}

/// Effective transconductance of the degenerated mirror device.
pub fn sdcm_effective_gm(gm3: f64, r_de: f64) -> EffectiveGm {
    let exact = gm3 / (1.0 + gm3 * r_de);
    if r_de == 0.0 {
        EffectiveGm {
            exact,
            approx: None,
            approx_rel_err: None,
        }
    } else {
        EffectiveGm {
            exact,
            approx: Some(1.0 / r_de),
            approx_rel_err: Some(1.0 / (gm3 * r_de)),
        }
    }
}

/// Output noise voltage PSD of a source-degenerated mirror branch.
///
/// Exact:
/// `[4kTγ·gm3 + (gm3·R)²·4kT/R] / (1 + gm3·R)² · Rd² + 4kT·Rd`.
/// Approximate (valid for `gm3·R ≫ 1`):
/// `4kT/R·(γ/(gm3·R) + 1)·Rd² + 4kT·Rd`.
///
/// Returns `(exact, approx)`; the approximation is infinite at `R = 0`.
pub fn sdcm_output_noise(p: &MirrorParams) -> (f64, f64) {
    let four_kt = p.four_kt();
    let loop_gain = p.gm3 * p.r_de;
    let rd_noise = four_kt * p.r_d;
    let exact_current = if p.r_de == 0.0 {
        four_kt * p.gamma_noise * p.gm3
    } else {
        (four_kt * p.gamma_noise * p.gm3 + loop_gain * loop_gain * four_kt / p.r_de)
            / ((1.0 + loop_gain) * (1.0 + loop_gain))
    };
    let exact = exact_current * p.r_d * p.r_d + rd_noise;
    let approx = if p.r_de == 0.0 {
        f64::INFINITY
    } else {
        four_kt / p.r_de * (p.gamma_noise / loop_gain + 1.0) * p.r_d * p.r_d + rd_noise
    };
    (exact, approx)
}

/// Output noise *current* PSD of the degenerated mirror device and its
/// resistor, i.e. [`sdcm_output_noise`] without the load (A²/Hz).
pub fn sdcm_output_current_noise(p: &MirrorParams) -> f64 {
    let four_kt = p.four_kt();
    if p.r_de == 0.0 {
        return four_kt * p.gamma_noise * p.gm3;
    }
    let loop_gain = p.gm3 * p.r_de;
    (four_kt * p.gamma_noise * p.gm3 + loop_gain * loop_gain * four_kt / p.r_de)
        / ((1.0 + loop_gain) * (1.0 + loop_gain))
}

/// Input-referred thermal noise voltage PSD of the amplifier input stage:
/// `4kTγ/gm1 + (4kTγ·gm3 + 4kT/(R_in/2))·(R_in/2)²` (V²/Hz).
///
/// The resistor term is the thermal noise current of the half input
/// resistance, `4kT/(R_in/2)`; with `r_in = 0` only the input-device term
/// remains.
pub fn ia_input_noise(p: &IaNoiseParams) -> f64 {
    let four_kt = p.four_kt();
    let device = four_kt * p.gamma_noise / p.gm1;
    if p.r_in == 0.0 {
        return device;
    }
    let r_half = p.r_in / 2.0;
    device + (four_kt * p.gamma_noise * p.gm3 + four_kt / r_half) * r_half * r_half
}

/// RMS input-referred noise ratio of the input device when body
/// transconductance assists the gate: `gm/(gm + gmb)`.
pub fn dtmos_noise_ratio(gm: f64, gmb: f64) -> f64 {
    gm / (gm + gmb)
}

/// Drain-referred transfer fractions of the two degenerated-branch noise
/// sources: `(h_rde, h_m3) = (gm·R/(1+gm·R), 1/(1+gm·R))`. They always sum
/// to one.
pub fn appendix_transfers(gm3: f64, r_de: f64) -> (f64, f64) {
    let loop_gain = gm3 * r_de;
    (loop_gain / (1.0 + loop_gain), 1.0 / (1.0 + loop_gain))
}

/// Input-referred noise of the half-circuit transconductance stage with
/// every noise source accounted for (V²/Hz). Used as the hand-analysis
/// reference for the MNA solution of the built topology.
///
/// Composition, with `G1` the effective input transconductance and
/// `Gm = m·G1/(1 + G1·R_in/2)` the stage transconductance:
/// * input device: `(4kTγ·gm1 + S_fl1)/G1²`
/// * tail source and its degeneration: `S_tail·(R_in/2)²`
/// * half input resistance: `4kT·(R_in/2)`
/// * output mirror and load: `[m²·S_din + S_dout + 4kT/R_d]/Gm²`
#[derive(Debug, Clone, Copy)]
pub struct TcHalfNoiseParams {
    /// Input device gate transconductance (S).
    pub gm1: f64,
    /// Extra bulk transconductance of the input device (S); zero without
    /// the bulk-to-gate connection.
    pub gmb1: f64,
    /// Input-device flicker current PSD at the evaluation frequency (A²/Hz).
    pub flicker1: f64,
    /// Tail device transconductance (S).
    pub gm3: f64,
    /// Tail flicker current PSD before degeneration (A²/Hz).
    pub flicker3: f64,
    /// Tail degeneration resistance (Ω).
    pub r_de: f64,
    /// Input resistance (Ω).
    pub r_in: f64,
    /// Output mirror ratio m.
    pub mirror_ratio: f64,
    /// Mirror input (diode) device transconductance (S).
    pub gm_din: f64,
    /// Mirror input flicker current PSD (A²/Hz).
    pub flicker_din: f64,
    /// Mirror output flicker current PSD (A²/Hz).
    pub flicker_dout: f64,
    /// Output load (Ω).
    pub r_d: f64,
    /// γ and temperature.
    pub gamma_noise: f64,
    pub temperature: f64,
}

/// Total input-referred PSD of the half circuit (V²/Hz) and the stage
/// transconductance it was referred through (S).
pub fn tc_half_input_noise(p: &TcHalfNoiseParams) -> (f64, f64) {
    let four_kt = 4.0 * crate::devmodel::BOLTZMANN * p.temperature;
    let g1 = p.gm1 + p.gmb1;
    let r_half = p.r_in / 2.0;
    let gm_stage = p.mirror_ratio * g1 / (1.0 + g1 * r_half);

    let input_dev = (four_kt * p.gamma_noise * p.gm1 + p.flicker1) / (g1 * g1);

    let tail_feedback = 1.0 + p.gm3 * p.r_de;
    let mut tail_current =
        (four_kt * p.gamma_noise * p.gm3 + p.flicker3) / (tail_feedback * tail_feedback);
    if p.r_de > 0.0 {
        let h_rde = p.gm3 * p.r_de / tail_feedback;
        tail_current += h_rde * h_rde * four_kt / p.r_de;
    }
    let tail = tail_current * r_half * r_half;

    let resistor = if p.r_in > 0.0 { four_kt * r_half } else { 0.0 };

    let m = p.mirror_ratio;
    let gm_dout = m * p.gm_din;
    let output = (m * m * (four_kt * p.gamma_noise * p.gm_din + p.flicker_din)
        + four_kt * p.gamma_noise * gm_dout
        + p.flicker_dout
        + four_kt / p.r_d)
        / (gm_stage * gm_stage);

    (input_dev + tail + resistor + output, gm_stage)
}

/// Ideal-mirror transconductance of the half circuit at DC:
/// `m·G1/(1 + G1·R_in/2)`.
pub fn tc_half_gm(g1: f64, r_in: f64, mirror_ratio: f64) -> f64 {
    mirror_ratio * g1 / (1.0 + g1 * r_in / 2.0)
}

/// Process-aware convenience: mirror parameters from an operating point.
pub fn mirror_params_from_process(
    gm3: f64,
    r_de: f64,
    r_d: f64,
    process: &ProcessParams,
) -> MirrorParams {
    MirrorParams {
        gm3,
        r_de,
        r_d,
        gamma_noise: process.gamma_noise,
        temperature: process.temperature,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn cm_output_noise_example() {
        let p = MirrorParams::new(3.0e-6, 0.0, 1.0e6);
        let total = cm_output_noise(&p);
        assert_relative_eq!(total, 6.627e-14, max_relative = 1e-3);
        assert_relative_eq!(total.sqrt(), 257.0e-9, max_relative = 2e-3);
    }

    #[test]
    fn cm_output_noise_resistor_only_limit() {
        let p = MirrorParams::new(1.0e-15, 0.0, 1.0e6);
        let four_kt = p.four_kt();
        assert_relative_eq!(cm_output_noise(&p), four_kt * 1.0e6, max_relative = 1e-6);
    }

    #[test]
    fn effective_gm_example() {
        let eff = sdcm_effective_gm(18.0e-6, 100.0e3);
        assert_relative_eq!(eff.exact, 6.4286e-6, max_relative = 1e-4);
        assert_relative_eq!(eff.approx.unwrap(), 1.0e-5, max_relative = 1e-12);
        // gm·R = 1.8 badly violates the gm·R ≫ 1 condition: 55.6% error.
        assert_relative_eq!(eff.approx_rel_err.unwrap(), 0.5556, max_relative = 1e-3);
        let measured = (eff.approx.unwrap() - eff.exact).abs() / eff.exact;
        assert_relative_eq!(measured, eff.approx_rel_err.unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn effective_gm_no_degeneration() {
        let eff = sdcm_effective_gm(18.0e-6, 0.0);
        assert_eq!(eff.exact, 18.0e-6);
        assert!(eff.approx.is_none());
    }

    #[test]
    fn effective_gm_approximation_converges() {
        // gm·R = 100 puts the approximation within 1%.
        let eff = sdcm_effective_gm(1.0e-4, 1.0e6);
        let rel = (eff.approx.unwrap() - eff.exact).abs() / eff.exact;
        assert!(rel < 0.011, "rel = {rel}");
    }

    #[test]
    fn sdcm_output_noise_example() {
        let p = MirrorParams::new(18.0e-6, 100.0e3, 1.0e6);
        let current = sdcm_output_current_noise(&p);
        assert_relative_eq!(current, 1.0651e-25, max_relative = 1e-3);
        // At γ = 1 the current PSD collapses to 4kT·gm/(1+gm·R).
        let collapsed = p.four_kt() * p.gm3 / (1.0 + p.gm3 * p.r_de);
        assert_relative_eq!(current, collapsed, max_relative = 1e-12);
    }

    #[test]
    fn sdcm_reduces_to_cm_without_degeneration() {
        let p = MirrorParams::new(5.0e-6, 0.0, 1.0e6);
        let (exact, _) = sdcm_output_noise(&p);
        assert_relative_eq!(exact, cm_output_noise(&p), max_relative = 1e-14);
    }

    #[test]
    fn ia_input_noise_examples() {
        // Input device alone.
        let only_m1 = IaNoiseParams {
            gm1: 29.75e-6,
            gm3: 0.0,
            r_in: 0.0,
            gamma_noise: 1.0,
            temperature: 300.0,
        };
        assert_relative_eq!(
            ia_input_noise(&only_m1).sqrt(),
            23.6e-9,
            max_relative = 2e-3
        );

        // Shrinking r_in collapses the second term.
        let big_r = IaNoiseParams {
            gm1: 29.75e-6,
            gm3: 1.0e-5,
            r_in: 50.0e3,
            ..only_m1
        };
        let small_r = IaNoiseParams {
            r_in: 4.0e3,
            ..big_r
        };
        let second = |p: &IaNoiseParams| ia_input_noise(p) - ia_input_noise(&only_m1);
        let at_50k = second(&big_r);
        let at_4k = second(&small_r);
        assert_relative_eq!(at_50k, 5.177e-16, max_relative = 1e-3);
        assert_relative_eq!(at_4k, 3.380e-17, max_relative = 1e-3);
        assert!(at_4k < at_50k / 10.0);
    }

    #[test]
    fn dtmos_noise_ratio_examples() {
        assert_eq!(dtmos_noise_ratio(1.0e-5, 0.0), 1.0);
        let gm = 29.75e-6;
        let ratio = dtmos_noise_ratio(gm, 0.2108185 * gm);
        assert_relative_eq!(ratio, 0.8259, max_relative = 1e-4);
        assert!(dtmos_noise_ratio(gm, 0.3 * gm) < dtmos_noise_ratio(gm, 0.2 * gm));
    }

    #[test]
    fn appendix_transfer_examples() {
        let (h_rde, h_m3) = appendix_transfers(18.0e-6, 100.0e3);
        assert_relative_eq!(h_rde, 0.6429, max_relative = 1e-3);
        assert_relative_eq!(h_m3, 0.3571, max_relative = 1e-3);
        let (z_rde, z_m3) = appendix_transfers(18.0e-6, 0.0);
        assert_eq!((z_rde, z_m3), (0.0, 1.0));
    }

    #[test]
    fn appendix_power_recombination_matches_closed_form() {
        let p = MirrorParams::new(18.0e-6, 100.0e3, 1.0e6);
        let four_kt = p.four_kt();
        let (h_rde, h_m3) = appendix_transfers(p.gm3, p.r_de);
        let recombined =
            h_rde * h_rde * four_kt / p.r_de + h_m3 * h_m3 * four_kt * p.gamma_noise * p.gm3;
        assert_relative_eq!(
            recombined,
            sdcm_output_current_noise(&p),
            max_relative = 1e-12
        );
    }

    proptest! {
        #[test]
        fn prop_partitions_sum_to_one(gm in 1.0e-7f64..1.0e-3, r in 0.0f64..1.0e7) {
            let (h_rde, h_m3) = appendix_transfers(gm, r);
            prop_assert!((h_rde + h_m3 - 1.0).abs() < 1.0e-12);
        }

        #[test]
        fn prop_approx_is_upper_bound(gm in 1.0e-6f64..1.0e-3, r in 1.0f64..1.0e7) {
            // The large-gm·R form always overestimates the exact PSD.
            let p = MirrorParams::new(gm, r, 1.0e6);
            let (exact, approx) = sdcm_output_noise(&p);
            prop_assert!(exact <= approx);
        }

        #[test]
        fn prop_exact_above_approx_envelope(gm in 1.0e-6f64..1.0e-3, r in 1.0e3f64..1.0e7) {
            // Sanity envelope for gm·R > 2: exact ≥ approx·(1 − 1/(gm·R)).
            // Valid while the load stays below the degeneration resistance;
            // a load-dominated output dilutes the envelope away.
            let p = MirrorParams::new(gm, r, r / 2.0);
            prop_assume!(gm * r > 2.0);
            let (exact, approx) = sdcm_output_noise(&p);
            prop_assert!(exact >= approx * (1.0 - 1.0 / (gm * r)) - 1.0e-30);
        }

        #[test]
        fn prop_ia_noise_monotonic(
            gm1 in 1.0e-6f64..1.0e-4,
            gm3 in 1.0e-7f64..1.0e-4,
            r_in in 1.0f64..1.0e5,
        ) {
            let base = IaNoiseParams { gm1, gm3, r_in, gamma_noise: 1.0, temperature: 300.0 };
            let v = ia_input_noise(&base);
            let more_rin = IaNoiseParams { r_in: r_in * 1.5, ..base };
            let more_gm3 = IaNoiseParams { gm3: gm3 * 1.5, ..base };
            let more_gm1 = IaNoiseParams { gm1: gm1 * 1.5, ..base };
            prop_assert!(ia_input_noise(&more_rin) > v);
            prop_assert!(ia_input_noise(&more_gm3) > v);
            prop_assert!(ia_input_noise(&more_gm1) < v);
        }

        #[test]
        fn prop_sdcm_noise_nonincreasing_in_rde(
            gm in 1.0e-6f64..1.0e-3,
            r1 in 0.0f64..1.0e6,
            dr in 1.0f64..1.0e6,
            gamma in 0.5f64..1.0,
        ) {
            // Monotone for γ in [0.5, 1]; the derivative changes sign for
            // smaller γ at very small gm·R.
            let mut p = MirrorParams::new(gm, r1, 1.0e6);
            p.gamma_noise = gamma;
            let (n1, _) = sdcm_output_noise(&p);
            p.r_de = r1 + dr;
            let (n2, _) = sdcm_output_noise(&p);
            prop_assert!(n2 <= n1 + 1.0e-30);
        }
    }
}
