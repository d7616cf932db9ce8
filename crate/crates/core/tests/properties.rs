use nalgebra::DMatrix;
use proptest::prelude::*;

use isscascade::cascade_cert::{linear_cascade_certificate, JumpMaps, LinearCascade};
use isscascade::hybrid_sim::{generate_adt_signal, validate_adt, AdtParams};
use isscascade::iss_check::{check_flow_decay, check_jump_growth, SamplingBox};
use isscascade::linear_synth::{corollary_bound, is_hurwitz, quad_cert_rates, LinearCascadeMode};
use isscascade::sampled_loop::section5::{run_example_section5, Section5Options};

/// 2x2 Hurwitz matrix: negative diagonal plus a bounded rotation part.
fn hurwitz2() -> impl Strategy<Value = DMatrix<f64>> {
    (0.3f64..3.0, 0.3f64..3.0, -2.0f64..2.0).prop_map(|(a, b, w)| DMatrix::from_row_slice(2, 2, &[-a, w, -w, -b]))
}

fn coupling2() -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0f64..2.0, 4).prop_map(|v| DMatrix::from_row_slice(2, 2, &v))
}

fn linear_mode() -> impl Strategy<Value = LinearCascadeMode> {
    (hurwitz2(), coupling2(), hurwitz2()).prop_map(|(a, b, f)| {
        LinearCascadeMode::new(a, b, f, DMatrix::identity(2, 2)).expect("consistent dimensions")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthesized_quadratic_certificates_pass_sampling(modes in prop::collection::vec(linear_mode(), 1..=3), seed in 0u64..1000) {
        for m in &modes {
            prop_assert!(is_hurwitz(&m.a) && is_hurwitz(&m.f));
        }
        let certs: Vec<_> = modes.iter().map(|m| quad_cert_rates(m, None, None).unwrap()).collect();
        let bound = corollary_bound(&certs).unwrap();
        prop_assert!(bound.a > 0.0);
        prop_assert!(bound.chibar >= 1.0);

        let cert = linear_cascade_certificate(&certs).unwrap();
        let sys = LinearCascade { modes };
        let region = SamplingBox { seed, ..SamplingBox::default() };
        let flow = check_flow_decay(&cert, &sys, 1500, &region, 1e-9);
        prop_assert!(flow.pass(), "{flow:?}");
        let jump = check_jump_growth(&cert, &JumpMaps::Identity, (2, 2, 2), 1500, &region, 1e-9);
        prop_assert!(jump.pass(), "{jump:?}");
    }

    #[test]
    fn generated_switching_signals_have_average_dwell_time(
        tau_a in 0.05f64..5.0,
        n0 in 1.0f64..4.0,
        modes in 2usize..5,
        seed in any::<u64>(),
    ) {
        let params = AdtParams { tau_a, n0 };
        let horizon = 30.0 * tau_a;
        let signal = generate_adt_signal(&params, modes, horizon, n0, 0.8, seed);
        prop_assert!(validate_adt(&signal, &params, 1e-9).ok);
        prop_assert!(signal.switches.windows(2).all(|w| w[0].t <= w[1].t));
        prop_assert!(signal.switches.iter().all(|s| s.mode < modes && s.t >= 0.0 && s.t <= horizon));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn sampled_loop_stays_in_its_flow_set(
        x0 in prop::array::uniform2(-3.0f64..3.0),
        z0 in prop::array::uniform2(-3.0f64..3.0),
        eta0 in prop::array::uniform2(0.0f64..2.0),
        initial_mode in 0usize..2,
        seed in 0u64..100,
    ) {
        let opts = Section5Options {
            x0,
            z0,
            eta0,
            initial_mode,
            seed,
            horizon: Some(90.0),
            ..Section5Options::default()
        };
        let r = run_example_section5(&opts).unwrap().report;
        prop_assert_eq!(r.flow_set_violations, 0);
        prop_assert_eq!(r.reset_violations, 0);
        prop_assert_eq!(r.timer_violations, 0);
        prop_assert!(r.min_eta >= -opts.event_tol);
        prop_assert!(r.min_gap_y > 0.0 && r.min_gap_u > 0.0);
        prop_assert!(r.adt.ok);
        prop_assert!(r.final_norm.is_finite());
    }
}
