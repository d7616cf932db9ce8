use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use isscascade::adt_bounds::{build_phi, build_psi, compute_zeta_star, DwellBound, PsiFunction, WFunction, ZetaOptions};
use isscascade::cascade_cert::builtin::{linear_two_mode, scalar_cascade_certificate, ScalarCascade};
use isscascade::cascade_cert::{linear_cascade_certificate, CascadeCertificate, CascadeDynamics, JumpMaps, LinearCascade};
use isscascade::hybrid_sim::cascade::{CascadeHybrid, Disturbance};
use isscascade::hybrid_sim::csv::{write_arc, CsvStream};
use isscascade::hybrid_sim::{
    simulate, validate_adt, AdtGenerator, AdtParams, AdtValidation, ArcRecorder, HybridArc, SimConfig,
    SwitchingSignal,
};
use isscascade::iss_check::{
    check_flow_decay, check_jump_growth, check_w_monotone, estimate_iss_gain, gain_table_monotone, grad_check,
    interevent_stats, CascadeW, CheckReport, ModeValue,
};
use isscascade::kfun::ComparisonFunction as CF;
use isscascade::linear_synth::{
    corollary_bound, matrix_rows, quad_cert_rates, sampled_mode_certificate, LinearCascadeMode, QuadraticCertificate,
};
use isscascade::sampled_loop::section5::{
    design_section5, section5_closed_loop, section5_linearized, simulate_section5, Section5Options, Section5Report,
};

use crate::config::{Builtin, CertificateSection, ScenarioConfig, SystemSection};

/// Command-line overrides shared by the subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epsilon: Option<f64>,
    pub tau_a: Option<f64>,
    pub horizon: Option<f64>,
}

/// JSON report plus overall verdict.
pub struct Outcome {
    pub ok: bool,
    pub report: Value,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Cascade system with its composed certificate.
struct CascadeSetup {
    dynamics: Arc<dyn CascadeDynamics>,
    cert: CascadeCertificate,
    quadratic: Option<Vec<QuadraticCertificate>>,
    /// decay rates entering `ψ`
    alphas: Vec<CF>,
}

fn linear_from_spec(cfg: &ScenarioConfig) -> Result<Option<LinearCascade>> {
    Ok(match &cfg.system {
        SystemSection::Linear { modes } => {
            let mut out = Vec::with_capacity(modes.len());
            for (p, m) in modes.iter().enumerate() {
                let mat = |rows: &Vec<Vec<f64>>, what: &str| {
                    matrix_rows::from_rows(rows).map_err(|e| anyhow!("mode {p}, matrix {what}: {e}"))
                };
                out.push(LinearCascadeMode::new(mat(&m.a, "a")?, mat(&m.b, "b")?, mat(&m.f, "f")?, mat(&m.g, "g")?)?);
            }
            Some(LinearCascade { modes: out })
        }
        SystemSection::Builtin { name: Builtin::LinearTwoMode } => Some(linear_two_mode()),
        _ => None,
    })
}

fn cascade_setup(cfg: &ScenarioConfig) -> Result<CascadeSetup> {
    let mut setup = if let Some(lin) = linear_from_spec(cfg)? {
        let quad = lin
            .modes
            .iter()
            .map(|m| quad_cert_rates(m, None, None))
            .collect::<Result<Vec<_>, _>>()?;
        let cert = linear_cascade_certificate(&quad)?;
        CascadeSetup {
            dynamics: Arc::new(lin),
            alphas: cert.modes.iter().map(|m| m.alpha.clone()).collect(),
            cert,
            quadratic: Some(quad),
        }
    } else if cfg.system == (SystemSection::Builtin { name: Builtin::ScalarCascade }) {
        let cert = scalar_cascade_certificate()?;
        CascadeSetup {
            dynamics: Arc::new(ScalarCascade),
            alphas: cert.modes.iter().map(|m| m.alpha.clone()).collect(),
            cert,
            quadratic: None,
        }
    } else {
        bail!("this command needs a cascade system (linear, scalar_cascade or linear_two_mode)");
    };
    if let CertificateSection::Gains { chi, alpha, .. } = &cfg.certificate {
        let n = setup.cert.n_modes();
        if !(alpha.len() == 1 || alpha.len() == n) {
            bail!("certificate.alpha needs 1 or {n} entries, got {}", alpha.len());
        }
        for (p, m) in setup.cert.modes.iter_mut().enumerate() {
            m.alpha = alpha[p.min(alpha.len() - 1)].clone();
        }
        setup.cert.chi = chi.clone();
        setup.alphas = setup.cert.modes.iter().map(|m| m.alpha.clone()).collect();
    }
    Ok(setup)
}

/// `c0` from the config, or `min_p α_p(1)`.
fn pick_c0(cfg: &ScenarioConfig, alphas: &[CF]) -> Result<f64> {
    if let CertificateSection::Gains { c0: Some(c0), .. } = &cfg.certificate {
        return Ok(*c0);
    }
    let mut c0 = f64::INFINITY;
    for a in alphas {
        c0 = c0.min(a.eval(1.0)?);
    }
    if !(c0 > 0.0 && c0.is_finite()) {
        bail!("cannot pick c0 from the decay rates");
    }
    Ok(c0)
}

struct BoundData {
    chi: CF,
    psi: PsiFunction,
    epsilon: f64,
    bound: DwellBound,
}

fn bound_data(cfg: &ScenarioConfig, chi: CF, alphas: &[CF], epsilon: f64) -> Result<BoundData> {
    let c0 = pick_c0(cfg, alphas)?;
    let psi = build_psi(alphas, c0)?;
    let bound = DwellBound::from_result(compute_zeta_star(&chi, &psi, epsilon, &ZetaOptions::default()), None)?;
    Ok(BoundData {
        chi,
        psi,
        epsilon,
        bound,
    })
}

fn epsilon(cfg: &ScenarioConfig, ov: &Overrides) -> f64 {
    ov.epsilon.unwrap_or(cfg.sim.epsilon)
}

fn sampled_options(cfg: &ScenarioConfig, ov: &Overrides) -> Section5Options {
    let mut opts = cfg.sampled.clone().unwrap_or_default();
    if let Some(e) = ov.epsilon {
        opts.epsilon = e;
    }
    if let Some(s) = ov.seed {
        opts.seed = s;
    }
    if let Some(t) = ov.tau_a.or(cfg.adt.map(|a| a.tau_a)) {
        opts.tau_a = Some(t);
    }
    if let Some(a) = cfg.adt {
        opts.n0 = a.n0;
    }
    if let Some(h) = ov.horizon {
        opts.horizon = Some(h);
    }
    opts
}

pub fn cmd_bound(cfg: &ScenarioConfig, ov: &Overrides) -> Result<Outcome> {
    let tau_a = ov.tau_a.or(cfg.adt.map(|a| a.tau_a));
    if cfg.is_sampled() {
        let opts = sampled_options(cfg, ov);
        let d = design_section5(opts.epsilon, opts.lambda, opts.recipe)?;
        let report = json!({
            "system": "section5",
            "epsilon": opts.epsilon,
            "lambda": d.lambda,
            "chibar": d.gains.chibar,
            "tau_a_min": d.tau_a_threshold,
            "general_condition": d.general_bound,
            "tau_a": tau_a,
            "tau_a_ok": tau_a.map(|t| t > d.tau_a_threshold),
        });
        return Ok(Outcome { ok: true, report });
    }
    let (chi, alphas, quad) = match (&cfg.certificate, cascade_setup(cfg)) {
        (_, Ok(setup)) => (setup.cert.chi, setup.alphas, setup.quadratic),
        (CertificateSection::Gains { chi, alpha, .. }, Err(_)) => (chi.clone(), alpha.clone(), None),
        (_, Err(e)) => return Err(e),
    };
    let b = bound_data(cfg, chi, &alphas, epsilon(cfg, ov))?;
    let corollary = quad.as_deref().map(corollary_bound).transpose()?;
    let report = json!({
        "epsilon": b.epsilon,
        "c0": b.psi.c0,
        "chi": to_value(&b.chi),
        "psi": to_value(&b.psi.psi),
        "zeta_star": b.bound.zeta_star,
        "tau_a_min": b.bound.tau_a_min,
        "argmax_s": b.bound.argmax_s,
        "divergent": b.bound.divergent,
        "quadratic": corollary,
        "tau_a": tau_a,
        "tau_a_ok": tau_a.and_then(|t| b.bound.tau_a_min.map(|m| t > m)),
    });
    Ok(Outcome {
        ok: !b.bound.divergent,
        report,
    })
}

pub fn cmd_synth_linear(cfg: &ScenarioConfig, ov: &Overrides, out: &Path) -> Result<Outcome> {
    let report = if cfg.is_sampled() {
        let opts = sampled_options(cfg, ov);
        let certs = section5_linearized()
            .iter()
            .map(|m| sampled_mode_certificate(m, None, None))
            .collect::<Result<Vec<_>, _>>()?;
        let d = design_section5(opts.epsilon, opts.lambda, opts.recipe)?;
        json!({ "modes": section5_linearized(), "certificates": certs, "gains": d.gains, "design": d.design })
    } else {
        let lin = linear_from_spec(cfg)?.ok_or_else(|| anyhow!("synth-linear needs a linear system"))?;
        let quad = lin
            .modes
            .iter()
            .map(|m| quad_cert_rates(m, None, None))
            .collect::<Result<Vec<_>, _>>()?;
        let composed = linear_cascade_certificate(&quad)?;
        let residuals: Vec<[f64; 2]> = lin
            .modes
            .iter()
            .zip(&quad)
            .map(|(m, c)| {
                [
                    isscascade::linear_synth::lyapunov_residual(&m.a, &c.p_c, &c.q_c),
                    isscascade::linear_synth::lyapunov_residual(&m.f, &c.p_o, &c.q_o),
                ]
            })
            .collect();
        let composed_modes: Vec<Value> = composed
            .modes
            .iter()
            .map(|m| json!({ "alpha": to_value(&m.alpha), "gamma": to_value(&m.gamma), "ell": to_value(&m.ell) }))
            .collect();
        json!({
            "certificates": quad,
            "residuals": residuals,
            "corollary": corollary_bound(&quad)?,
            "composed": { "modes": composed_modes, "chi": to_value(&composed.chi), "rho": to_value(&composed.rho) },
        })
    };
    std::fs::create_dir_all(out)?;
    let path = out.join("certificate.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(Outcome { ok: true, report })
}

fn initial(cfg_val: &Option<Vec<f64>>, dim: usize, what: &str) -> Result<Vec<f64>> {
    match cfg_val {
        Some(v) if v.len() == dim => Ok(v.clone()),
        Some(v) => bail!("{what} has {} entries, expected {dim}", v.len()),
        None => Ok(vec![1.0; dim]),
    }
}

struct CascadeRun {
    arc: HybridArc,
    sys: CascadeHybrid,
    adt_check: Option<AdtValidation>,
    w_check: Value,
    w_ok: bool,
}

fn run_cascade(cfg: &ScenarioConfig, ov: &Overrides, setup: &CascadeSetup) -> Result<CascadeRun> {
    let (nc, no, nd) = setup.dynamics.dims();
    let seed = ov.seed.unwrap_or(cfg.sim.seed);
    let eps = epsilon(cfg, ov);
    let bound = bound_data(cfg, setup.cert.chi.clone(), &setup.alphas, eps)?;
    let horizon = ov.horizon.unwrap_or(cfg.sim.horizon_t);
    let adt = match (cfg.adt, ov.tau_a) {
        (Some(a), t) => Some(AdtParams { tau_a: t.unwrap_or(a.tau_a), ..a }),
        (None, Some(t)) => Some(AdtParams { tau_a: t, n0: 1.0 }),
        (None, None) => None,
    };
    let multi = setup.dynamics.n_modes() > 1;
    let (schedule, adt_params) = match adt {
        Some(a) if multi => (AdtGenerator::default().generate(&a, setup.dynamics.n_modes(), 0, horizon, seed), a),
        Some(a) => (SwitchingSignal::constant(0), a),
        None => (SwitchingSignal::constant(0), AdtParams { tau_a: f64::INFINITY, n0: 1.0 }),
    };
    let adt_check = adt.filter(|_| multi).map(|a| validate_adt(&schedule, &a, 1e-9));
    let input = if cfg.sim.disturbance_level > 0.0 {
        Disturbance::random(nd, cfg.sim.disturbance_level, cfg.sim.disturbance_period, horizon, seed)
    } else {
        Disturbance::zero(nd)
    };
    let sys = CascadeHybrid::new(setup.dynamics.clone(), schedule, adt_params, input);
    let x0 = initial(&cfg.sim.x0, nc, "sim.x0")?;
    let e0 = initial(&cfg.sim.e0, no, "sim.e0")?;
    let sim = SimConfig {
        dt_base: cfg.sim.dt_base,
        event_tol: cfg.sim.event_tol,
        t_max: horizon,
        j_max: cfg.sim.horizon_j,
        seed,
        ..SimConfig::default()
    };
    let mut rec = ArcRecorder::new(cfg.output.stride);
    simulate(&sys, &sys.initial_state(&x0, &e0, adt_params.n0), 0, &sim, &mut rec)?;
    let arc = rec.arc;

    let (w_check, w_ok) = match bound.bound.zeta_star {
        _ if cfg.sim.disturbance_level > 0.0 => (json!({ "skipped": "nonzero input" }), true),
        None => (json!({ "skipped": "divergent dwell-time bound" }), false),
        Some(zs) if !(adt_params.tau_a > zs) => (
            json!({ "skipped": format!("tau_a = {} does not exceed zeta* = {zs}", adt_params.tau_a) }),
            false,
        ),
        Some(zs) => {
            let zeta = if adt_params.tau_a.is_finite() { 0.5 * (zs + adt_params.tau_a) } else { zs + 1.0 };
            let wf = WFunction::new(build_phi(bound.psi.clone()), zeta, zs, adt_params.tau_a, None, false)?;
            let w = CascadeW {
                cert: &setup.cert,
                wf: &wf,
                dims: (nc, no),
            };
            let rep = check_w_monotone(&arc, &w, wf.jump_contraction(), cfg.check.w_tol);
            let ok = rep.pass();
            (json!({ "zeta": zeta, "zeta_star": zs, "report": rep }), ok)
        }
    };
    Ok(CascadeRun {
        arc,
        sys,
        adt_check,
        w_check,
        w_ok,
    })
}

fn write_csv_arc(sys: &CascadeHybrid, arc: &HybridArc, out: &Path) -> Result<String> {
    std::fs::create_dir_all(out)?;
    let path = out.join("arc.csv");
    write_arc(sys, arc, BufWriter::new(File::create(&path)?)).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.display().to_string())
}

pub fn cmd_simulate(cfg: &ScenarioConfig, ov: &Overrides, out: &Path) -> Result<Outcome> {
    if cfg.is_sampled() {
        return cmd_example(cfg, ov, out);
    }
    let setup = cascade_setup(cfg)?;
    let run = run_cascade(cfg, ov, &setup)?;
    let csv = if cfg.output.csv { Some(write_csv_arc(&run.sys, &run.arc, out)?) } else { None };
    let adt_ok = run.adt_check.as_ref().map_or(true, |a| a.ok);
    let report = json!({
        "t_end": run.arc.final_time(),
        "jumps": run.arc.jump_log.len(),
        "final_state": run.arc.final_state(),
        "valid_time_domain": run.arc.is_valid_time_domain(),
        "adt": run.adt_check,
        "w_monotone": run.w_check,
        "csv": csv,
    });
    Ok(Outcome {
        ok: adt_ok && run.w_ok,
        report,
    })
}

fn sampled_summary(r: &Section5Report) -> Value {
    let mut v = to_value(r);
    if let Value::Object(m) = &mut v {
        m.insert("converged".into(), json!(r.converged()));
    }
    v
}

pub fn cmd_example(cfg: &ScenarioConfig, ov: &Overrides, out: &Path) -> Result<Outcome> {
    let opts = sampled_options(cfg, ov);
    let design = design_section5(opts.epsilon, opts.lambda, opts.recipe)?;
    let (sys, horizon) = section5_closed_loop(&opts, &design)?;
    let (report, csv) = if cfg.output.csv {
        std::fs::create_dir_all(out)?;
        let path = out.join("arc.csv");
        let mut stream = CsvStream::new(&sys, BufWriter::new(File::create(&path)?), cfg.output.stride);
        let report = simulate_section5(&opts, &design, &sys, horizon, &mut stream)?;
        stream.finish().with_context(|| format!("writing {}", path.display()))?;
        (report, Some(path.display().to_string()))
    } else {
        (simulate_section5(&opts, &design, &sys, horizon, &mut ())?, None)
    };
    let mut value = sampled_summary(&report);
    if let Value::Object(m) = &mut value {
        m.insert("csv".into(), json!(csv));
    }
    Ok(Outcome {
        ok: report.converged(),
        report: value,
    })
}

fn check_entry(rep: &CheckReport) -> Value {
    json!({ "pass": rep.pass(), "report": rep })
}

pub fn cmd_certify(cfg: &ScenarioConfig, ov: &Overrides) -> Result<Outcome> {
    if cfg.is_sampled() {
        let opts = Section5Options {
            record_stride: None,
            ..sampled_options(cfg, ov)
        };
        let design = design_section5(opts.epsilon, opts.lambda, opts.recipe)?;
        let (sys, horizon) = section5_closed_loop(&opts, &design)?;
        let report = simulate_section5(&opts, &design, &sys, horizon, &mut ())?;
        let gaps_ok = report.min_gap_y > 0.0 && report.min_gap_u > 0.0;
        let checks = json!({
            "design_criteria": { "pass": report.design.pass },
            "convergence": { "pass": report.decay_ratio <= 1e-2, "decay_ratio": report.decay_ratio },
            "flow_set": { "pass": report.flow_set_violations == 0 && report.reset_violations == 0 },
            "inter_event": { "pass": gaps_ok, "min_gap_y": report.min_gap_y, "min_gap_u": report.min_gap_u },
            "adt": { "pass": report.adt.ok, "report": report.adt },
        });
        let ok = report.converged();
        return Ok(Outcome {
            ok,
            report: json!({ "ok": ok, "checks": checks, "run": sampled_summary(&report) }),
        });
    }
    let setup = cascade_setup(cfg)?;
    let (nc, no, nd) = setup.dynamics.dims();
    let chk = &cfg.check;
    let mut region = chk.region;
    if let Some(s) = ov.seed {
        region.seed = s;
    }
    let mut checks = serde_json::Map::new();
    let mut ok = true;
    let mut add = |name: &str, pass: bool, value: Value| {
        ok &= pass;
        checks.insert(name.to_string(), value);
    };
    let flow = check_flow_decay(&setup.cert, setup.dynamics.as_ref(), chk.samples, &region, chk.tol);
    add("flow_decay", flow.pass(), check_entry(&flow));
    let jump = check_jump_growth(&setup.cert, &JumpMaps::Identity, (nc, no, nd), chk.samples, &region, chk.tol);
    add("jump_growth", jump.pass(), check_entry(&jump));
    for p in 0..setup.cert.n_modes() {
        let f = ModeValue {
            cert: &setup.cert,
            mode: p,
            n_c: nc,
            n_o: no,
        };
        let g = grad_check(&f, chk.samples.min(2000), &region, chk.grad_step, chk.grad_tol);
        add(&format!("gradient_mode_{p}"), g.pass(), check_entry(&g));
    }
    let bound = bound_data(cfg, setup.cert.chi.clone(), &setup.alphas, epsilon(cfg, ov))?;
    add("dwell_time_bound", !bound.bound.divergent, to_value(&bound.bound));
    let run = run_cascade(cfg, ov, &setup)?;
    add("w_monotone", run.w_ok, run.w_check.clone());
    if let Some(a) = &run.adt_check {
        add("adt", a.ok, to_value(a));
    }
    add("time_domain", run.arc.is_valid_time_domain(), json!(run.arc.is_valid_time_domain()));
    let stats = interevent_stats(&run.arc);
    add("inter_event", stats.simultaneous == 0, to_value(&stats));
    if let Some(exp) = &chk.gain {
        let adt = cfg.adt.unwrap_or(AdtParams {
            tau_a: f64::INFINITY,
            n0: 1.0,
        });
        let x0 = initial(&cfg.sim.x0, nc, "sim.x0")?;
        let e0 = initial(&cfg.sim.e0, no, "sim.e0")?;
        let rows = estimate_iss_gain(setup.dynamics.clone(), adt, &x0, &e0, exp)?;
        let gas = rows
            .iter()
            .filter(|r| r.level == 0.0)
            .all(|r| r.tail_sup <= 1e-2 * r.initial_norm);
        add(
            "iss_gain",
            gas,
            json!({ "rows": rows, "zero_input_decay": gas, "nondecreasing": gain_table_monotone(&rows, 0.1) }),
        );
    }
    Ok(Outcome {
        ok,
        report: json!({ "ok": ok, "checks": Value::Object(checks) }),
    })
}
