//! Sample-based checks tying certificates to dynamics and to simulated
//! arcs.
//!
//! Every check produces a [`CheckReport`]. Samples are drawn from a seeded
//! generator up front and evaluated in parallel; the reduction runs in
//! sample order so that reports are reproducible.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adt_bounds::WFunction;
use crate::cascade_cert::{CascadeCertificate, CascadeDynamics, JumpMaps};
use crate::hybrid_sim::cascade::{CascadeHybrid, Disturbance};
use crate::hybrid_sim::{
    simulate, AdtGenerator, AdtParams, EventStats, HybridArc, JumpKind, Observer, SimConfig, SimError,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    /// smallest signed margin, relative unless stated otherwise by the check
    pub worst_margin: f64,
    pub worst_witness: Vec<f64>,
    pub tolerance: f64,
}

impl CheckReport {
    fn empty(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            samples: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            worst_witness: Vec::new(),
            tolerance,
        }
    }

    pub fn pass(&self) -> bool {
        self.violations == 0
    }

    fn add(&mut self, margin: f64, witness: impl FnOnce() -> Vec<f64>) {
        self.samples += 1;
        let margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        if margin < -self.tolerance {
            self.violations += 1;
        }
        if margin < self.worst_margin {
            self.worst_margin = margin;
            self.worst_witness = witness();
        }
    }
}

/// `(rhs − lhs)/(|lhs| + |rhs|)`, zero when both sides vanish.
fn relative_margin(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs() + rhs.abs();
    if scale == 0.0 {
        0.0
    } else {
        (rhs - lhs) / scale
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Where sample points are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingBox {
    /// half-width of the box around the origin
    pub half_width: f64,
    /// fraction of samples shrunk towards the origin by `10^(−U(0, decades))`
    pub near_origin_fraction: f64,
    pub decades: f64,
    pub seed: u64,
}

impl Default for SamplingBox {
    fn default() -> Self {
        Self {
            half_width: 10.0,
            near_origin_fraction: 0.5,
            decades: 6.0,
            seed: 0,
        }
    }
}

impl SamplingBox {
    /// `n` points in dimension `dim`; the whole point is rescaled for the
    /// near-origin part so that all coordinates shrink together.
    pub fn draw(&self, dim: usize, n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..n)
            .map(|_| {
                let mut p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0) * self.half_width).collect();
                if rng.gen::<f64>() < self.near_origin_fraction {
                    let k = 10f64.powf(-rng.gen_range(0.0..=self.decades));
                    p.iter_mut().for_each(|c| *c *= k);
                }
                p
            })
            .collect()
    }
}

fn reduce(name: &str, tol: f64, margins: Vec<(f64, Vec<f64>)>) -> CheckReport {
    let mut rep = CheckReport::empty(name, tol);
    for (m, w) in margins {
        rep.add(m, || w);
    }
    rep
}

/// Samples `⟨∇V_p, (f_c, f_o)⟩ ≤ −α_p(V_p) + γ_p(|d|)` in every mode.
pub fn check_flow_decay(
    cert: &CascadeCertificate,
    dynamics: &dyn CascadeDynamics,
    n_samples: usize,
    region: &SamplingBox,
    tol: f64,
) -> CheckReport {
    let (nc, no, nd) = dynamics.dims();
    let points = region.draw(nc + no + nd, n_samples);
    let margins = (0..cert.n_modes())
        .flat_map(|p| points.iter().map(move |pt| (p, pt)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(p, pt)| {
            let (x, rest) = pt.split_at(nc);
            let (e, d) = rest.split_at(no);
            let mut fx = vec![0.0; nc];
            let mut fe = vec![0.0; no];
            dynamics.f_c(p, x, e, &mut fx);
            dynamics.f_o(p, e, d, &mut fe);
            let m = &cert.modes[p];
            let (gx, ge) = m.gradient(x, e);
            let lhs: f64 = gx.iter().zip(&fx).chain(ge.iter().zip(&fe)).map(|(a, b)| a * b).sum();
            let v = m.value(x, e);
            let rhs = -m.alpha.eval(v).unwrap_or(f64::NAN) + m.gamma.eval(norm(d)).unwrap_or(f64::NAN);
            let mut w = vec![p as f64];
            w.extend_from_slice(pt);
            (relative_margin(lhs, rhs), w)
        })
        .collect();
    reduce("flow_decay", tol, margins)
}

/// Samples `V_q(g_c(x, e), g_o(e, d)) ≤ χ(V_p(x, e)) + ρ(|d|)` over all
/// ordered mode pairs, including `p = q`.
pub fn check_jump_growth(
    cert: &CascadeCertificate,
    maps: &JumpMaps,
    dims: (usize, usize, usize),
    n_samples: usize,
    region: &SamplingBox,
    tol: f64,
) -> CheckReport {
    let (nc, no, nd) = dims;
    let points = region.draw(nc + no + nd, n_samples);
    let n = cert.n_modes();
    let margins = (0..n * n)
        .flat_map(|pq| points.iter().map(move |pt| (pq / n, pq % n, pt)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(p, q, pt)| {
            let (x, rest) = pt.split_at(nc);
            let (e, d) = rest.split_at(no);
            let (xp, ep) = (maps.apply_c(x, e), maps.apply_o(e, d));
            let lhs = cert.value(q, &xp, &ep);
            let rhs = cert.chi.eval(cert.value(p, x, e)).unwrap_or(f64::NAN)
                + cert.rho.eval(norm(d)).unwrap_or(f64::NAN);
            let mut w = vec![p as f64, q as f64];
            w.extend_from_slice(pt);
            (relative_margin(lhs, rhs), w)
        })
        .collect();
    reduce("jump_growth", tol, margins)
}

/// Evaluates `W` at a stored arc point.
pub trait WEvaluator: Sync {
    fn w(&self, mode: usize, state: &[f64]) -> f64;
}

/// `W` for [`CascadeHybrid`] arcs: `exp(2c0ζτ)·φ(V_p(x, e))`.
pub struct CascadeW<'a> {
    pub cert: &'a CascadeCertificate,
    pub wf: &'a WFunction,
    pub dims: (usize, usize),
}

impl WEvaluator for CascadeW<'_> {
    fn w(&self, mode: usize, s: &[f64]) -> f64 {
        let (nc, no) = self.dims;
        let v = self.cert.value(mode, &s[..nc], &s[nc..nc + no]);
        self.wf.eval(s[nc + no], v, 0.0).unwrap_or(f64::NAN)
    }
}

impl<F: Fn(usize, &[f64]) -> f64 + Sync> WEvaluator for F {
    fn w(&self, mode: usize, state: &[f64]) -> f64 {
        self(mode, state)
    }
}

/// `W` must not increase along flows (relative tolerance), must contract by
/// `exp(2c0(ζ* − ζ))` across switches and stay unchanged across sampling
/// jumps.
pub fn check_w_monotone(arc: &HybridArc, w: &dyn WEvaluator, contraction: f64, tol: f64) -> CheckReport {
    let mut rep = CheckReport::empty("w_monotone", tol);
    for seg in &arc.segments {
        let vals: Vec<f64> = seg.states.iter().map(|s| w.w(seg.mode, s)).collect();
        for (k, pair) in vals.windows(2).enumerate() {
            let (a, b) = (pair[0], pair[1]);
            rep.add(relative_margin(b, a), || {
                let mut wit = vec![seg.times[k + 1], seg.j as f64, a, b];
                wit.extend_from_slice(&seg.states[k + 1]);
                wit
            });
        }
    }
    for r in &arc.jump_log {
        let before = w.w(r.mode_before, &r.state_before);
        let after = w.w(r.mode_after, &r.state_after);
        let margin = match r.kind {
            JumpKind::Switch | JumpKind::Reset => relative_margin(after, contraction * before),
            _ => -(after - before).abs() / (before.abs() + after.abs()).max(f64::MIN_POSITIVE),
        };
        rep.add(margin, || vec![r.t, r.j as f64, before, after]);
    }
    rep
}

/// One row of the empirical gain table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub level: f64,
    pub runs: usize,
    /// largest `|(x, e)|` over the last 20% of the horizon, maximized over runs
    pub tail_sup: f64,
    pub initial_norm: f64,
}

/// Running supremum of `|(x, e)|` over `t ≥ t_tail`.
struct TailSup {
    t_tail: f64,
    n: usize,
    sup: f64,
}

impl Observer for TailSup {
    fn on_flow(&mut self, t: f64, _j: usize, _mode: usize, s: &[f64], _boundary: bool) {
        if t >= self.t_tail {
            self.sup = self.sup.max(norm(&s[..self.n]));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainExperiment {
    pub levels: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    pub horizon: f64,
    pub dt_base: f64,
    /// hold time of the piecewise-constant input
    pub input_period: f64,
}

impl Default for GainExperiment {
    fn default() -> Self {
        Self {
            levels: vec![0.0, 0.01, 0.1, 1.0],
            runs: 8,
            seed: 0,
            horizon: 30.0,
            dt_base: 1e-2,
            input_period: 0.5,
        }
    }
}

/// Tail supremum of `|(x, e)|` under random inputs bounded by each level and
/// random switching with the given dwell-time parameters.
pub fn estimate_iss_gain(
    dynamics: Arc<dyn CascadeDynamics>,
    adt: AdtParams,
    x0: &[f64],
    e0: &[f64],
    exp: &GainExperiment,
) -> Result<Vec<GainRow>, SimError> {
    let (_, _, nd) = dynamics.dims();
    let n_modes = dynamics.n_modes();
    let jobs: Vec<(usize, usize)> = (0..exp.levels.len()).flat_map(|l| (0..exp.runs).map(move |r| (l, r))).collect();
    let results: Vec<Result<f64, SimError>> = jobs
        .par_iter()
        .map(|&(l, r)| {
            let seed = exp.seed.wrapping_add((l * exp.runs + r) as u64);
            let level = exp.levels[l];
            let input = if level > 0.0 {
                Disturbance::random(nd, level, exp.input_period, exp.horizon, seed)
            } else {
                Disturbance::zero(nd)
            };
            let schedule = AdtGenerator::default().generate(&adt, n_modes, 0, exp.horizon, seed);
            let sys = CascadeHybrid::new(dynamics.clone(), schedule, adt, input);
            let cfg = SimConfig {
                dt_base: exp.dt_base,
                t_max: exp.horizon,
                seed,
                ..SimConfig::default()
            };
            let mut obs = TailSup {
                t_tail: 0.8 * exp.horizon,
                n: x0.len() + e0.len(),
                sup: 0.0,
            };
            simulate(&sys, &sys.initial_state(x0, e0, adt.n0), 0, &cfg, &mut obs)?;
            Ok(obs.sup)
        })
        .collect();
    let initial_norm = (norm(x0).powi(2) + norm(e0).powi(2)).sqrt();
    let mut rows: Vec<GainRow> = exp
        .levels
        .iter()
        .map(|&level| GainRow {
            level,
            runs: exp.runs,
            tail_sup: 0.0,
            initial_norm,
        })
        .collect();
    for (&(l, _), res) in jobs.iter().zip(results) {
        rows[l].tail_sup = rows[l].tail_sup.max(res?);
    }
    Ok(rows)
}

/// Whether the table is nondecreasing in the level up to a relative slack.
pub fn gain_table_monotone(rows: &[GainRow], slack: f64) -> bool {
    rows.windows(2).all(|w| w[1].level < w[0].level || w[1].tail_sup >= (1.0 - slack) * w[0].tail_sup)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterEventStats {
    /// horizon length when fewer than two output samples occurred
    pub min_gap_y: f64,
    pub min_gap_u: f64,
    pub counts: BTreeMap<String, usize>,
    /// per-kind gap histograms by decade starting at `1e-9`
    pub histogram: BTreeMap<String, Vec<usize>>,
    /// same-kind events at identical times
    pub simultaneous: usize,
}

impl InterEventStats {
    pub fn from_stats(stats: &EventStats, horizon: f64) -> Self {
        Self {
            min_gap_y: stats.min_gap_or(JumpKind::SampleY, horizon),
            min_gap_u: stats.min_gap_or(JumpKind::SampleU, horizon),
            counts: stats.kinds.iter().map(|(k, v)| (k.clone(), v.count)).collect(),
            histogram: stats.kinds.iter().map(|(k, v)| (k.clone(), v.histogram.clone())).collect(),
            simultaneous: stats.kinds.values().map(|v| v.zero_gaps).sum(),
        }
    }

    pub fn ok(&self) -> bool {
        self.min_gap_y > 0.0 && self.min_gap_u > 0.0 && self.simultaneous == 0
    }
}

pub fn interevent_stats(arc: &HybridArc) -> InterEventStats {
    let mut stats = EventStats::default();
    for r in &arc.jump_log {
        stats.record(r.kind, r.t);
    }
    let horizon = arc.final_time() - arc.segments.first().map_or(0.0, |s| s.t_start);
    InterEventStats::from_stats(&stats, horizon)
}

/// A scalar function with a claimed gradient.
pub trait Differentiable: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// Composed `V_p` of one mode as a function of the stacked `(x, e)`.
pub struct ModeValue<'a> {
    pub cert: &'a CascadeCertificate,
    pub mode: usize,
    pub n_c: usize,
    pub n_o: usize,
}

impl Differentiable for ModeValue<'_> {
    fn dim(&self) -> usize {
        self.n_c + self.n_o
    }

    fn value(&self, s: &[f64]) -> f64 {
        self.cert.value(self.mode, &s[..self.n_c], &s[self.n_c..])
    }

    fn gradient(&self, s: &[f64]) -> Vec<f64> {
        let (mut gx, ge) = self.cert.gradient(self.mode, &s[..self.n_c], &s[self.n_c..]);
        gx.extend(ge);
        gx
    }
}

/// Central differences with step `h·max(1, |x_i|)` against the claimed
/// gradient; the margin is `−‖g_fd − g‖/‖g‖`.
pub fn grad_check(f: &dyn Differentiable, n_samples: usize, region: &SamplingBox, h: f64, tol: f64) -> CheckReport {
    let points = region.draw(f.dim(), n_samples);
    let margins = points
        .into_par_iter()
        .map(|x| {
            let g = f.gradient(&x);
            let mut xp = x.clone();
            let fd: Vec<f64> = (0..x.len())
                .map(|i| {
                    let step = h * x[i].abs().max(1.0);
                    xp[i] = x[i] + step;
                    let up = f.value(&xp);
                    xp[i] = x[i] - step;
                    let down = f.value(&xp);
                    xp[i] = x[i];
                    (up - down) / (2.0 * step)
                })
                .collect();
            let diff = fd.iter().zip(&g).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = norm(&g).max(norm(&fd));
            let margin = if scale == 0.0 { 0.0 } else { -diff / scale };
            (margin, x)
        })
        .collect();
    reduce("grad_check", tol, margins)
}
