//! Switching signals with an average dwell-time constraint
//! `N(s, t) ≤ N0 + (t − s)/τ_a`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdtParams {
    pub tau_a: f64,
    #[serde(rename = "N0", alias = "n0")]
    pub n0: f64,
}

impl AdtParams {
    /// Admissible number of switches in a window of length `len`.
    pub fn budget(&self, len: f64) -> f64 {
        self.n0 + len / self.tau_a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub t: f64,
    pub mode: usize,
}

/// Right-continuous piecewise-constant mode signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSignal {
    pub initial_mode: usize,
    pub switches: Vec<SwitchEvent>,
}

impl SwitchingSignal {
    pub fn constant(mode: usize) -> Self {
        Self {
            initial_mode: mode,
            switches: Vec::new(),
        }
    }

    pub fn mode_at(&self, t: f64) -> usize {
        let k = self.switches.partition_point(|s| s.t <= t);
        if k == 0 {
            self.initial_mode
        } else {
            self.switches[k - 1].mode
        }
    }
}

/// Random switching driven by a dwell-time budget `τ(t) ∈ [0, N0]` that
/// grows at rate `1/τ_a` and pays one unit per switch.
///
/// Switch candidates arrive as a Poisson process of rate
/// `candidate_rate/τ_a`; a candidate is taken with probability
/// `switch_prob` whenever the budget is at least one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdtGenerator {
    pub tau0: f64,
    pub switch_prob: f64,
    pub candidate_rate: f64,
}

impl Default for AdtGenerator {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            switch_prob: 1.0,
            candidate_rate: 4.0,
        }
    }
}

impl AdtGenerator {
    pub fn generate(
        &self,
        params: &AdtParams,
        n_modes: usize,
        initial_mode: usize,
        horizon: f64,
        seed: u64,
    ) -> SwitchingSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut signal = SwitchingSignal::constant(initial_mode);
        if n_modes < 2 || self.switch_prob <= 0.0 {
            return signal;
        }
        let rate = self.candidate_rate / params.tau_a;
        let (mut t, mut budget, mut mode) = (0.0f64, self.tau0.clamp(0.0, params.n0), initial_mode);
        loop {
            let u: f64 = rng.gen();
            let wait = -(1.0 - u).ln() / rate;
            t += wait;
            if t > horizon {
                break;
            }
            budget = (budget + wait / params.tau_a).min(params.n0);
            let take: f64 = rng.gen();
            if budget >= 1.0 && take < self.switch_prob {
                budget -= 1.0;
                let pick = rng.gen_range(0..n_modes - 1);
                mode = if pick >= mode { pick + 1 } else { pick };
                signal.switches.push(SwitchEvent { t, mode });
            }
        }
        signal
    }
}

/// Timer-driven random signal on `[0, horizon]` with the default candidate
/// rate and `τ(0) = tau0`.
pub fn generate_adt_signal(
    params: &AdtParams,
    n_modes: usize,
    horizon: f64,
    tau0: f64,
    switch_prob: f64,
    seed: u64,
) -> SwitchingSignal {
    AdtGenerator {
        tau0,
        switch_prob,
        ..AdtGenerator::default()
    }
    .generate(params, n_modes, 0, horizon, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdtValidation {
    pub ok: bool,
    pub n_switches: usize,
    /// `N0 + (t_k − t_i)/τ_a − (k − i + 1)` minimized over all switch pairs
    /// (`N0` for an empty signal)
    pub worst_slack: f64,
    /// window `[t_i, t_k]` attaining the worst slack
    pub worst_window: Option<(f64, f64)>,
}

/// Exhaustive check over windows whose endpoints are switch times.
pub fn validate_adt(signal: &SwitchingSignal, params: &AdtParams, tol: f64) -> AdtValidation {
    let sw = &signal.switches;
    let mut worst = (params.n0, None);
    for i in 0..sw.len() {
        for k in i..sw.len() {
            let count = (k - i + 1) as f64;
            let slack = params.budget(sw[k].t - sw[i].t) - count;
            if slack < worst.0 {
                worst = (slack, Some((sw[i].t, sw[k].t)));
            }
        }
    }
    AdtValidation {
        ok: worst.0 >= -tol,
        n_switches: sw.len(),
        worst_slack: worst.0,
        worst_window: worst.1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn long_dwell_allows_one_switch() {
        let horizon = 20.0;
        let p = AdtParams { tau_a: horizon + 1.0, n0: 1.0 };
        for seed in 0..20 {
            let s = generate_adt_signal(&p, 3, horizon, 1.0, 1.0, seed);
            assert!(s.switches.len() <= 1);
        }
    }

    #[test]
    fn zero_probability_gives_constant_signal() {
        let p = AdtParams { tau_a: 0.5, n0: 2.0 };
        let s = generate_adt_signal(&p, 2, 10.0, 1.0, 0.0, 3);
        assert!(s.switches.is_empty());
        let v = validate_adt(&s, &p, 1e-9);
        assert!(v.ok && v.n_switches == 0);
    }

    #[test]
    fn fast_generator_passes_exhaustive_check() {
        let p = AdtParams { tau_a: 0.5, n0: 2.0 };
        let s = generate_adt_signal(&p, 2, 10.0, 1.0, 1.0, 42);
        assert!(s.switches.len() > 5);
        // oracle: count switches in every window [t_i, t_k] directly
        for a in &s.switches {
            for b in &s.switches {
                if b.t >= a.t {
                    let n = s.switches.iter().filter(|e| e.t >= a.t && e.t <= b.t).count() as f64;
                    assert!(n <= p.n0 + (b.t - a.t) / p.tau_a + 1e-9);
                }
            }
        }
        assert!(validate_adt(&s, &p, 1e-9).ok);
    }

    #[test]
    fn simultaneous_switches_violate_unit_chatter_bound() {
        let p = AdtParams { tau_a: 1.0, n0: 1.0 };
        let s = SwitchingSignal {
            initial_mode: 0,
            switches: vec![SwitchEvent { t: 1.0, mode: 1 }, SwitchEvent { t: 1.0, mode: 0 }],
        };
        let v = validate_adt(&s, &p, 1e-9);
        assert!(!v.ok);
        assert_eq!(v.worst_window, Some((1.0, 1.0)));
        assert_eq!(v.worst_slack, -1.0);
    }

    #[test]
    fn successor_differs_and_signal_is_right_continuous() {
        let p = AdtParams { tau_a: 0.3, n0: 1.0 };
        let s = generate_adt_signal(&p, 4, 30.0, 1.0, 0.7, 9);
        let mut prev = s.initial_mode;
        for e in &s.switches {
            assert_ne!(e.mode, prev);
            assert!(e.mode < 4);
            assert_eq!(s.mode_at(e.t), e.mode);
            prev = e.mode;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn generated_signals_satisfy_the_constraint(
            seed in any::<u64>(),
            tau_a in 0.05f64..5.0,
            n0 in 1.0f64..3.0,
            prob in 0.0f64..1.0,
            modes in 2usize..5,
        ) {
            let p = AdtParams { tau_a, n0 };
            let s = AdtGenerator { tau0: n0, switch_prob: prob, candidate_rate: 4.0 }
                .generate(&p, modes, 0, 20.0 * tau_a, seed);
            prop_assert!(validate_adt(&s, &p, 1e-9).ok);
        }
    }
}
