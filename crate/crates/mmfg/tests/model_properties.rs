//! Property tests for the parameter container: bit-exact config round trips
//! and validator coverage over arbitrary finite coefficients.

use proptest::prelude::*;

use mmfg::model::{ModelParams, TerminalCondition};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6..1e6_f64,
        Just(0.0),
        Just(-0.0),
        Just(1.0),
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
    ]
}

fn terminal() -> impl Strategy<Value = TerminalCondition> {
    prop_oneof![
        finite().prop_map(|c| TerminalCondition::DeterministicConstant { c }),
        (finite(), -5.0..5.0_f64, -5.0..5.0_f64)
            .prop_map(|(c, a, b)| TerminalCondition::ExponentialMartingale { c, a, b }),
    ]
}

fn params() -> impl Strategy<Value = ModelParams> {
    (
        (0.01..10.0_f64, finite(), finite(), terminal(), terminal()),
        proptest::collection::vec(finite(), 44),
    )
        .prop_map(|((t, x0, x1, xi0, xi), v)| {
            let mut p = ModelParams::zeroed();
            p.T = t;
            p.x0_major = x0;
            p.x0_minor = x1;
            p.xi0 = xi0;
            p.xi = xi;
            let fields: Vec<&mut f64> = vec![
                &mut p.b1_0,
                &mut p.b2_0,
                &mut p.b3_0,
                &mut p.b4_0,
                &mut p.b1,
                &mut p.b2,
                &mut p.b3,
                &mut p.b4,
                &mut p.b5,
                &mut p.b6,
                &mut p.sigma0,
                &mut p.sigma,
                &mut p.f1_0,
                &mut p.f2_0,
                &mut p.f3_0,
                &mut p.f4_0,
                &mut p.f5_0,
                &mut p.f6_0,
                &mut p.f7_0,
                &mut p.f8_0,
                &mut p.f1,
                &mut p.f2,
                &mut p.f3,
                &mut p.f4,
                &mut p.f5,
                &mut p.f6,
                &mut p.f7,
                &mut p.f8,
                &mut p.f9,
                &mut p.f10,
                &mut p.f11,
                &mut p.f12,
                &mut p.Phi1_0,
                &mut p.Phi2_0,
                &mut p.Phi1,
                &mut p.Phi2,
                &mut p.Phi3,
                &mut p.mu1_0,
                &mut p.mu2_0,
                &mut p.mu1,
                &mut p.mu2,
                &mut p.mu3,
                &mut p.mu4,
                &mut p.gamma0,
            ];
            for (f, val) in fields.into_iter().zip(v) {
                *f = val;
            }
            p.gamma0 = p.gamma0.abs();
            p
        })
}

proptest! {
    /// Serialization uses shortest-round-trip decimals, so arbitrary finite
    /// parameters survive the config format bit for bit.
    #[test]
    fn config_round_trip_is_bit_exact(p in params()) {
        let text = serde_json::to_string(&p).unwrap();
        let back: ModelParams = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, p);
    }

    /// The validator never panics and always flags the degenerate coupling.
    #[test]
    fn validator_flags_the_degenerate_coupling(mut p in params()) {
        p.mu3 = 1.0;
        p.mu2_0 = 0.0;
        p.mu4 = 0.0;
        let report = p.validate();
        prop_assert!(report.violations.iter().any(|v| v.contains("mu3")));
    }

    /// Conditional expectations of exponential terminal data reduce to the
    /// realized value at the horizon on any path.
    #[test]
    fn terminal_condition_is_consistent_at_the_horizon(
        c in -10.0..10.0_f64,
        a in -3.0..3.0_f64,
        b in -3.0..3.0_f64,
        w in -5.0..5.0_f64,
        t in 0.01..5.0_f64,
    ) {
        let xi = TerminalCondition::ExponentialMartingale { c, a, b };
        let lhs = xi.conditional_expectation(t, w, t);
        let rhs = xi.realized(w, t);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
    }
}
