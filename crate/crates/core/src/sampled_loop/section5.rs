//! Two-mode academic example: a linear unstable plant and a plant with
//! absolute-value and saturation terms, both stabilized by observer-based
//! output feedback with event-triggered sampling of `y` and `u`.

use std::sync::Arc;

use nalgebra::{dmatrix, DMatrix};
use serde::{Deserialize, Serialize};

use super::{
    build_closed_loop, check_design_criteria, design_grid, quadratic_filter, sqrt_trigger, ClosedLoop, Controller,
    DesignCertificate, DesignReport, FilterDef, LoopMonitor, Plant, Result, TriggerDef,
};
use crate::adt_bounds::{compute_zeta_star, DwellBound, PsiFunction, ZetaOptions};
use crate::hybrid_sim::{
    simulate, validate_adt, AdtGenerator, AdtParams, AdtValidation, ArcRecorder, EventStats, HybridArc, JumpKind,
    Observer, SimConfig, SwitchingSignal,
};
use crate::kfun::{ComparisonFunction as CF, ScalarFn};
use crate::linear_synth::{
    sampled_mode_certificate, synth_sampled_gains, GainRecipe, SampledGainPack, SampledLinearMode,
};

fn sat(s: f64) -> f64 {
    s.clamp(-1.0, 1.0)
}

const A1: [[f64; 2]; 2] = [[0.5, -1.0], [0.0, 0.5]];
const K1: [f64; 2] = [-1.5, 2.5];
const L1: [f64; 2] = [3.5, -3.0];
const K2: [f64; 2] = [-2.0, -2.0];
const L2: [f64; 2] = [2.0, 2.0];

/// Plant of the example; input enters the second state, `y = x₁`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Section5Plant;

impl Plant for Section5Plant {
    fn n_modes(&self) -> usize {
        2
    }
    fn n_x(&self) -> usize {
        2
    }
    fn n_u(&self) -> usize {
        1
    }
    fn n_y(&self) -> usize {
        1
    }

    fn flow(&self, mode: usize, x: &[f64], u: &[f64], dx: &mut [f64]) {
        if mode == 0 {
            dx[0] = A1[0][0] * x[0] + A1[0][1] * x[1];
            dx[1] = A1[1][0] * x[0] + A1[1][1] * x[1] + u[0];
        } else {
            dx[0] = x[1] + 0.25 * x[0].abs();
            dx[1] = sat(x[0]) + u[0];
        }
    }

    fn output(&self, _mode: usize, x: &[f64], y: &mut [f64]) {
        y[0] = x[0];
    }
}

/// Observer-based controller; the observer copies the plant nonlinearities
/// evaluated at the held output.
#[derive(Debug, Clone, Copy, Default)]
pub struct Section5Controller;

impl Controller for Section5Controller {
    fn n_modes(&self) -> usize {
        2
    }
    fn n_z(&self) -> usize {
        2
    }

    fn flow(&self, mode: usize, z: &[f64], u: &[f64], y: &[f64], dz: &mut [f64]) {
        let innov = y[0] - z[0];
        if mode == 0 {
            dz[0] = A1[0][0] * z[0] + A1[0][1] * z[1] + L1[0] * innov;
            dz[1] = A1[1][0] * z[0] + A1[1][1] * z[1] + u[0] + L1[1] * innov;
        } else {
            dz[0] = z[1] + 0.25 * y[0].abs() + L2[0] * innov;
            dz[1] = sat(y[0]) + u[0] + L2[1] * innov;
        }
    }

    fn control(&self, mode: usize, z: &[f64], u: &mut [f64]) {
        u[0] = if mode == 0 {
            -(K1[0] * z[0] + K1[1] * z[1])
        } else {
            -sat(z[0]) + K2[0] * z[0] + K2[1] * z[1]
        };
    }
}

/// Linearizations at the origin used for the quadratic certificates
/// (`sat(s) ≈ s`, the `|x₁|` term is dropped).
pub fn section5_linearized() -> Vec<SampledLinearMode> {
    let b = dmatrix![0.0; 1.0];
    let c = dmatrix![1.0, 0.0];
    let a1 = DMatrix::from_fn(2, 2, |i, j| A1[i][j]);
    let a2 = dmatrix![0.0, 1.0; 1.0, 0.0];
    let k1 = dmatrix![K1[0], K1[1]];
    let k2 = dmatrix![1.0 - K2[0], -K2[1]];
    let l1 = dmatrix![L1[0]; L1[1]];
    let l2 = dmatrix![L2[0]; L2[1]];
    [(a1, k1, l1), (a2, k2, l2)]
        .into_iter()
        .map(|(a, k, l)| {
            let bk = &b * &k;
            SampledLinearMode {
                a_cl: &a - &bk,
                f: &a - &l * &c,
                l,
                bk,
                c: c.clone(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Section5Options {
    pub epsilon: f64,
    /// decay margin used in the design check; defaults to `epsilon`
    pub lambda: Option<f64>,
    pub recipe: GainRecipe,
    /// defaults to `1.05·ln(chibar)/epsilon`
    pub tau_a: Option<f64>,
    #[serde(rename = "N0", alias = "n0")]
    pub n0: f64,
    pub tau0: f64,
    /// defaults to `20·tau_a`
    pub horizon: Option<f64>,
    pub seed: u64,
    pub x0: [f64; 2],
    pub z0: [f64; 2],
    pub eta0: [f64; 2],
    pub initial_mode: usize,
    pub dt_base: f64,
    pub event_tol: f64,
    pub j_max: usize,
    /// keep every n-th integration step in the returned arc; `None` keeps
    /// no arc at all
    pub record_stride: Option<usize>,
}

impl Default for Section5Options {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            lambda: None,
            recipe: GainRecipe::Consistent,
            tau_a: None,
            n0: 1.0,
            tau0: 1.0,
            horizon: None,
            seed: 0,
            x0: [1.0, 0.5],
            z0: [0.0, 0.0],
            eta0: [1.0, 1.0],
            initial_mode: 0,
            dt_base: 1e-3,
            event_tol: 1e-9,
            j_max: 50_000_000,
            record_stride: None,
        }
    }
}

/// Gains, filters, triggers and the checks that depend only on them.
#[derive(Debug, Clone, PartialEq)]
pub struct Section5Design {
    pub gains: SampledGainPack,
    pub filters: Vec<FilterDef>,
    pub triggers: Vec<TriggerDef>,
    pub certificates: Vec<DesignCertificate>,
    pub lambda: f64,
    pub design: DesignReport,
    /// `ln(chibar)/ε`
    pub tau_a_threshold: f64,
    /// bound from the general dwell-time condition with linear `ψ`
    pub general_bound: DwellBound,
}

pub fn design_section5(epsilon: f64, lambda: Option<f64>, recipe: GainRecipe) -> Result<Section5Design> {
    let certs = section5_linearized()
        .iter()
        .map(|m| sampled_mode_certificate(m, None, None))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let gains = synth_sampled_gains(&certs, epsilon, recipe)?;
    let lambda = lambda.unwrap_or(epsilon);
    let mut filters = Vec::new();
    let mut triggers = Vec::new();
    let mut certificates = Vec::new();
    for g in &gains.modes {
        filters.push(quadratic_filter(g.a_o, g.a_c, g.rho_o, g.rho_c, g.gbar_o, g.gbar_c));
        triggers.push(sqrt_trigger(g.mu_o, g.mu_c));
        certificates.push(DesignCertificate {
            alpha_c: CF::linear(g.a_c),
            alpha_c_lower: CF::power(g.lambda_min_pc, 2.0),
            alpha_h: CF::linear(g.c_norm),
            nu: ScalarFn::constant(g.nu),
            theta: CF::power(2.0 * g.gbar_o / g.a_o, 2.0),
        });
    }
    let design = check_design_criteria(&filters, &triggers, &certificates, lambda, &design_grid());
    let c0 = gains
        .modes
        .iter()
        .map(|g| g.a_o.min(g.a_c).min(g.gbar_c / g.nu))
        .fold(f64::INFINITY, f64::min)
        / 4.0;
    let psi = PsiFunction::new(CF::linear(c0), c0)?;
    let general_bound = DwellBound::from_result(
        compute_zeta_star(&CF::linear(gains.chibar), &psi, 0.0, &ZetaOptions::default()),
        Some(lambda),
    )?;
    Ok(Section5Design {
        tau_a_threshold: gains.tau_a_min,
        gains,
        filters,
        triggers,
        certificates,
        lambda,
        design,
        general_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section5Report {
    pub epsilon: f64,
    pub lambda: f64,
    pub tau_a: f64,
    pub tau_a_threshold: f64,
    pub general_bound: DwellBound,
    pub chibar: f64,
    pub horizon: f64,
    pub design: DesignReport,
    pub adt: AdtValidation,
    pub switches: usize,
    pub sample_y_events: usize,
    pub sample_u_events: usize,
    pub min_gap_y: f64,
    pub min_gap_u: f64,
    pub events: EventStats,
    pub steps: usize,
    pub t_end: f64,
    pub initial_norm: f64,
    pub final_norm: f64,
    pub decay_ratio: f64,
    pub flow_set_violations: usize,
    pub worst_flow_set_excess: f64,
    pub min_eta: f64,
    pub reset_violations: usize,
    pub timer_violations: usize,
}

impl Section5Report {
    /// Decay to 1% of the initial size, flow-set membership, positive
    /// inter-sample gaps and a passing design check.
    pub fn converged(&self) -> bool {
        self.decay_ratio <= 1e-2
            && self.flow_set_violations == 0
            && self.reset_violations == 0
            && self.min_gap_y > 0.0
            && self.min_gap_u > 0.0
            && self.design.pass
            && self.adt.ok
    }
}

pub struct Section5Run {
    pub report: Section5Report,
    pub arc: Option<HybridArc>,
    pub system: ClosedLoop,
}

/// Switching schedule and closed loop for the given options.
pub fn section5_closed_loop(opts: &Section5Options, design: &Section5Design) -> Result<(ClosedLoop, f64)> {
    let tau_a = opts.tau_a.unwrap_or(1.05 * design.tau_a_threshold);
    let adt = AdtParams { tau_a, n0: opts.n0 };
    let horizon = opts.horizon.unwrap_or(20.0 * tau_a);
    let schedule = if tau_a.is_finite() && tau_a > 0.0 {
        AdtGenerator {
            tau0: opts.tau0,
            ..AdtGenerator::default()
        }
        .generate(&adt, 2, opts.initial_mode, horizon, opts.seed)
    } else {
        SwitchingSignal::constant(opts.initial_mode)
    };
    let sys = build_closed_loop(
        Arc::new(Section5Plant),
        Arc::new(Section5Controller),
        design.filters.clone(),
        design.triggers.clone(),
        adt,
        schedule,
    )?;
    Ok((sys, horizon))
}

/// Simulates a closed loop built by [`section5_closed_loop`], feeding every
/// point and jump to `extra` as well.
pub fn simulate_section5(
    opts: &Section5Options,
    design: &Section5Design,
    sys: &ClosedLoop,
    horizon: f64,
    extra: &mut dyn Observer,
) -> Result<Section5Report> {
    let cfg = SimConfig {
        dt_base: opts.dt_base,
        event_tol: opts.event_tol,
        t_max: horizon,
        j_max: opts.j_max,
        seed: opts.seed,
        ..SimConfig::default()
    };
    let s0 = sys.initial_state(&opts.x0, &opts.z0, (opts.eta0[0], opts.eta0[1]), opts.tau0);
    let mut monitor = LoopMonitor::new(sys, opts.event_tol);
    let mut stats = EventStats::default();
    let summary = simulate(sys, &s0, opts.initial_mode, &cfg, &mut (&mut monitor, (&mut stats, extra)))?;
    let initial_norm = monitor.initial_norm.unwrap_or(0.0);
    Ok(Section5Report {
        epsilon: opts.epsilon,
        lambda: design.lambda,
        tau_a: sys.adt.tau_a,
        tau_a_threshold: design.tau_a_threshold,
        general_bound: design.general_bound.clone(),
        chibar: design.gains.chibar,
        horizon,
        design: design.design.clone(),
        adt: validate_adt(&sys.schedule, &sys.adt, 1e-9),
        switches: stats.count(JumpKind::Switch),
        sample_y_events: stats.count(JumpKind::SampleY),
        sample_u_events: stats.count(JumpKind::SampleU),
        min_gap_y: stats.min_gap_or(JumpKind::SampleY, horizon),
        min_gap_u: stats.min_gap_or(JumpKind::SampleU, horizon),
        events: stats,
        steps: summary.steps,
        t_end: summary.t_end,
        initial_norm,
        final_norm: monitor.last_norm,
        decay_ratio: if initial_norm > 0.0 { monitor.last_norm / initial_norm } else { 0.0 },
        flow_set_violations: monitor.flow_set_violations,
        worst_flow_set_excess: monitor.worst_flow_set_excess,
        min_eta: monitor.min_eta,
        reset_violations: monitor.reset_violations,
        timer_violations: monitor.timer_violations,
    })
}

pub fn run_example_section5(opts: &Section5Options) -> Result<Section5Run> {
    let design = design_section5(opts.epsilon, opts.lambda, opts.recipe)?;
    let (system, horizon) = section5_closed_loop(opts, &design)?;
    let mut recorder = opts.record_stride.map(ArcRecorder::new);
    let report = match recorder.as_mut() {
        Some(rec) => simulate_section5(opts, &design, &system, horizon, rec)?,
        None => simulate_section5(opts, &design, &system, horizon, &mut ())?,
    };
    Ok(Section5Run {
        report,
        arc: recorder.map(|r| r.arc),
        system,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_synth::is_hurwitz;

    /// `(x, z)` matrix of a linearized mode with continuous sampling.
    fn full_loop(m: &SampledLinearMode, l: &DMatrix<f64>) -> DMatrix<f64> {
        let a = &m.a_cl + &m.bk;
        let lc = l * &m.c;
        let mut big = DMatrix::zeros(4, 4);
        big.view_mut((0, 0), (2, 2)).copy_from(&a);
        big.view_mut((0, 2), (2, 2)).copy_from(&(-&m.bk));
        big.view_mut((2, 0), (2, 2)).copy_from(&lc);
        big.view_mut((2, 2), (2, 2)).copy_from(&(&a - &m.bk - &lc));
        big
    }

    #[test]
    fn linearized_loops_are_hurwitz() {
        for m in section5_linearized() {
            assert!(is_hurwitz(&m.a_cl) && is_hurwitz(&m.f));
            assert!(is_hurwitz(&full_loop(&m, &m.l)));
        }
        let m = &section5_linearized()[0];
        assert_eq!(m.a_cl, dmatrix![0.5, -1.0; 1.5, -2.0]);
        assert_eq!(m.f, dmatrix![-3.0, -1.0; 3.0, 0.5]);
    }

    #[test]
    fn linear_mode_decays_under_sampling() {
        let opts = Section5Options {
            tau_a: Some(f64::INFINITY),
            horizon: Some(60.0),
            ..Section5Options::default()
        };
        let run = run_example_section5(&opts).unwrap();
        let r = &run.report;
        assert_eq!(r.switches, 0);
        assert!(r.decay_ratio < 1e-2, "{}", r.decay_ratio);
        assert_eq!(r.flow_set_violations, 0);
        assert!(r.sample_y_events > 0 && r.min_gap_y > 0.0);
    }

    #[test]
    fn design_checks_pass_for_default_gains() {
        let d = design_section5(0.2, None, GainRecipe::Consistent).unwrap();
        assert!(d.design.pass, "{:?}", d.design);
        assert!(d.general_bound.tau_a_min.unwrap() > d.tau_a_threshold);
        let nominal = design_section5(0.2, None, GainRecipe::Nominal).unwrap();
        assert!(!nominal.design.pass);
    }

    #[test]
    fn origin_start_stays_at_origin() {
        let opts = Section5Options {
            x0: [0.0; 2],
            horizon: Some(40.0),
            tau_a: Some(2.0),
            ..Section5Options::default()
        };
        let run = run_example_section5(&opts).unwrap();
        let r = &run.report;
        assert!(r.switches > 0);
        assert_eq!(r.sample_y_events + r.sample_u_events, 0);
        assert_eq!(r.flow_set_violations, 0);
        assert!(r.final_norm <= 1e-12 + r.initial_norm);
    }

    #[test]
    fn runs_are_deterministic() {
        let opts = Section5Options {
            horizon: Some(5.0),
            tau_a: Some(1.0),
            seed: 7,
            record_stride: Some(10),
            ..Section5Options::default()
        };
        let a = run_example_section5(&opts).unwrap();
        let b = run_example_section5(&opts).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.arc.as_ref().unwrap().jump_log, b.arc.as_ref().unwrap().jump_log);
        assert!(a.arc.unwrap().is_valid_time_domain());
    }
}
