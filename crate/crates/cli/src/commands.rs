use std::fmt::Write as _;
use std::fs;

use gdp_core::accountant::{
    clt_mu, clt_report, ma_report, oracle_report, oracle_tradeoff, sampling_rate, steps, AccountantQuery, Target,
};
use gdp_core::dual::{calibrate_sigma, eps_from_delta, EpsDeltaPoint};
use gdp_core::moments::{LambdaMode, MomentsAccountant, MomentsAccountantConfig};
use gdp_core::pld::{composed_tradeoff, gap_check};
use gdp_core::tradeoff::{sup_distance, AlphaGrid};
use gdp_core::{PrivacyReport, Tradeoff, TradeoffFunction};
use gdp_optim::{run, Algorithm, Dataset, LearningRate, Logistic, TrainConfig};
use serde_json::{json, Map, Value};

use crate::args::{
    AccountArgs, AlgorithmArg, CalibrateArgs, CheckKind, CsvArgs, CurveKind, DurationArgs, SamplingArgs, TrainArgs,
    VerifyArgs,
};
use crate::error::{CliError, Result};
use crate::output::{document, fmt_fixed, fmt_prob, num, report_json, sig12, write_json, write_text};

/// Points of the α grid written by `tradeoff-csv`.
const CSV_POINTS: usize = 1000;

/// ε values sampled for the moments-accountant envelope curve.
const ENVELOPE_POINTS: usize = 400;

fn run_inputs(sampling: &SamplingArgs, duration: &DurationArgs, p: f64, steps: u64) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("n".into(), json!(sampling.n));
    m.insert("batch".into(), json!(sampling.batch));
    m.insert("p".into(), num(p));
    m.insert("epochs".into(), json!(duration.epochs));
    m.insert("T".into(), json!(steps));
    m
}

fn inputs_line(inputs: &Map<String, Value>) -> String {
    inputs
        .iter()
        .filter(|(_, v)| !v.is_null())
        .map(|(k, v)| format!("{k}={}", v.as_f64().map_or_else(|| v.to_string(), sig12)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn report_row(r: &PrivacyReport) -> String {
    format!(
        "{:<8}{:>10}{:>12}{:>14}\n",
        r.method.name(),
        fmt_fixed(r.mu),
        fmt_fixed(Some(r.eps)),
        fmt_prob(r.delta)
    )
}

pub fn account(args: &AccountArgs) -> Result<()> {
    let query = args.run.query(args.target.target()?)?;
    let p = query.sampling_rate()?;
    let steps = query.steps()?;
    let mut reports = vec![clt_report(&query)?, ma_report(&query, args.lambda_mode.into())?];
    if args.oracle {
        reports.push(oracle_report(&query, args.spacing)?);
    }

    let mut inputs = run_inputs(&args.run.sampling, &args.run.duration, p, steps);
    inputs.insert("sigma".into(), num(args.run.sigma));
    inputs.insert("delta".into(), json!(args.target.delta));
    inputs.insert("eps".into(), json!(args.target.eps));

    let mut out = String::new();
    writeln!(out, "{}", inputs_line(&inputs)).unwrap();
    if args.run.sigma == 0.0 && steps > 0 {
        writeln!(out, "no noise is added: the run is not private").unwrap();
    }
    write!(out, "{:<8}{:>10}{:>12}{:>14}\n", "method", "mu", "eps", "delta").unwrap();
    for r in &reports {
        out.push_str(&report_row(r));
    }
    write_text(None, &out)?;

    if let Some(path) = &args.json_out {
        let mut outputs = Map::new();
        outputs.insert("private".into(), json!(args.run.sigma > 0.0 || steps == 0));
        outputs.insert("reports".into(), Value::Array(reports.iter().map(report_json).collect()));
        write_json(path, &document("account", inputs, outputs))?;
    }
    Ok(())
}

pub fn calibrate(args: &CalibrateArgs) -> Result<()> {
    let sampling = args.sampling.sampling()?;
    let duration = args.duration.duration()?;
    let p = sampling_rate(&sampling)?;
    let steps = steps(&sampling, &duration)?;
    let target = EpsDeltaPoint::new(args.eps, args.delta)?;
    let result = calibrate_sigma(&target, p, steps)?;
    let mu = clt_mu(p, steps, result.sigma_tilde)?;
    let eps_check = eps_from_delta(mu, args.delta)?;

    let mut inputs = run_inputs(&args.sampling, &args.duration, p, steps);
    inputs.insert("eps".into(), num(args.eps));
    inputs.insert("delta".into(), num(args.delta));

    let mut out = String::new();
    writeln!(out, "{}", inputs_line(&inputs)).unwrap();
    writeln!(out, "sigma = {}", sig12(result.sigma_tilde)).unwrap();
    writeln!(out, "mu = {}", sig12(result.mu_tilde)).unwrap();
    writeln!(out, "eps at sigma = {}", sig12(eps_check)).unwrap();
    write_text(None, &out)?;

    if let Some(path) = &args.json_out {
        let mut outputs = Map::new();
        outputs.insert(
            "calibration".into(),
            json!({
                "sigma": num(result.sigma_tilde),
                "mu": num(result.mu_tilde),
                "iterations": result.iterations,
                "residual": num(result.residual),
                "eps_check": num(eps_check),
            }),
        );
        write_json(path, &document("calibrate", inputs, outputs))?;
    }
    Ok(())
}

/// Trade-off curve of one kind for the run.
enum Curve {
    Closed(TradeoffFunction),
    Envelope(gdp_core::moments::MaEnvelope),
}

impl Curve {
    fn value(&self, alpha: f64) -> f64 {
        match self {
            Curve::Closed(f) => f.value(alpha),
            Curve::Envelope(e) => e.value(alpha),
        }
    }
}

fn build_curve(kind: CurveKind, query: &AccountantQuery, delta: f64, spacing: f64) -> Result<Curve> {
    let p = query.sampling_rate()?;
    let steps = query.steps()?;
    let sigma = query.sigma;
    let ma = || -> Result<MomentsAccountant> {
        Ok(MomentsAccountant::new(MomentsAccountantConfig::new(sigma, p, steps)?)?)
    };
    Ok(match kind {
        CurveKind::Clt => Curve::Closed(TradeoffFunction::gaussian(clt_mu(p, steps, sigma)?)?),
        CurveKind::MaPoint => {
            let eps = ma()?.eps(delta, LambdaMode::Continuous)?;
            Curve::Closed(TradeoffFunction::eps_delta(eps, delta)?)
        }
        CurveKind::MaEnvelope => Curve::Envelope(ma()?.envelope(LambdaMode::Continuous, ENVELOPE_POINTS)?),
        CurveKind::Oracle => Curve::Closed(oracle_tradeoff(sigma, p, steps, spacing)?.0),
    })
}

pub fn csv_text(args: &CsvArgs) -> Result<String> {
    let query = args.run.query(Target::Delta { delta: args.delta })?;
    let mut out = String::from("alpha,beta,curve\n");
    for &kind in &args.curve {
        let curve = build_curve(kind, &query, args.delta, args.spacing)?;
        for i in 0..CSV_POINTS {
            let alpha = i as f64 / (CSV_POINTS - 1) as f64;
            writeln!(out, "{},{},{}", sig12(alpha), sig12(curve.value(alpha)), kind.name()).unwrap();
        }
    }
    Ok(out)
}

pub fn tradeoff_csv(args: &CsvArgs) -> Result<()> {
    write_text(args.out.as_deref(), &csv_text(args)?)
}

struct Check {
    name: String,
    measured: f64,
    threshold: f64,
    /// Passing means `measured ≤ threshold`.
    passed: bool,
    detail: String,
}

fn clt_oracle_check(args: &VerifyArgs) -> Result<Check> {
    let p = args.nu / (args.steps as f64).sqrt();
    let oracle = composed_tradeoff(args.sigma, p, args.steps, args.spacing)?;
    let mu = clt_mu(p, args.steps, args.sigma)?;
    let gap = sup_distance(&oracle, &TradeoffFunction::Gaussian { mu }, &AlphaGrid::default());
    Ok(Check {
        name: "clt-oracle".into(),
        measured: gap,
        threshold: args.tolerance,
        passed: gap <= args.tolerance,
        detail: format!("sigma={} T={} p={} mu={}", sig12(args.sigma), args.steps, sig12(p), sig12(mu)),
    })
}

/// Steps of the unsubsampled Gaussian check; kept small since the loss
/// spread grows like √T/σ.
const GAUSSIAN_STEPS: u64 = 16;

fn gaussian_check(args: &VerifyArgs) -> Result<Check> {
    let oracle = composed_tradeoff(args.sigma, 1.0, GAUSSIAN_STEPS, args.spacing)?;
    let mu = (GAUSSIAN_STEPS as f64).sqrt() / args.sigma;
    let gap = sup_distance(&oracle, &TradeoffFunction::Gaussian { mu }, &AlphaGrid::default());
    let threshold = 2.0 * args.spacing;
    Ok(Check {
        name: "gaussian".into(),
        measured: gap,
        threshold,
        passed: gap <= threshold,
        detail: format!("sigma={} T={GAUSSIAN_STEPS} p=1 mu={}", sig12(args.sigma), sig12(mu)),
    })
}

/// Tolerance of the moments-accountant gap inequality.
const GAP_TOLERANCE: f64 = 1e-4;

fn gap_checks(args: &VerifyArgs) -> Result<Vec<Check>> {
    let p = 1.0 / (args.gap_steps as f64).sqrt();
    args.gap_eps
        .iter()
        .map(|&eps| {
            let g = gap_check(args.sigma, p, args.gap_steps, eps)?;
            // Shortfall of δ_MA − δ_CLT below the bound; passes when ≤ tol.
            let shortfall = g.lower_bound - (g.delta_ma - g.delta_clt);
            Ok(Check {
                name: format!("gap eps={}", sig12(eps)),
                measured: shortfall,
                threshold: GAP_TOLERANCE,
                passed: g.holds(GAP_TOLERANCE),
                detail: format!(
                    "delta_ma={} delta_clt={} bound={}",
                    sig12(g.delta_ma),
                    sig12(g.delta_clt),
                    sig12(g.lower_bound)
                ),
            })
        })
        .collect()
}

pub fn verify(args: &VerifyArgs) -> Result<()> {
    let kinds = if args.check.is_empty() {
        vec![CheckKind::CltOracle, CheckKind::Gaussian, CheckKind::Gap]
    } else {
        args.check.clone()
    };
    let mut checks = Vec::new();
    for kind in kinds {
        match kind {
            CheckKind::CltOracle => checks.push(clt_oracle_check(args)?),
            CheckKind::Gaussian => checks.push(gaussian_check(args)?),
            CheckKind::Gap => checks.extend(gap_checks(args)?),
        }
    }
    let mut out = String::new();
    for c in &checks {
        writeln!(
            out,
            "{} {:<14} measured={} threshold={} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            sig12(c.measured),
            sig12(c.threshold),
            c.detail
        )
        .unwrap();
    }
    write_text(None, &out)?;

    if let Some(path) = &args.json_out {
        let mut inputs = Map::new();
        inputs.insert("sigma".into(), num(args.sigma));
        inputs.insert("T".into(), json!(args.steps));
        inputs.insert("nu".into(), num(args.nu));
        inputs.insert("tolerance".into(), num(args.tolerance));
        inputs.insert("spacing".into(), num(args.spacing));
        inputs.insert("gap_T".into(), json!(args.gap_steps));
        inputs.insert("gap_eps".into(), json!(args.gap_eps));
        let mut outputs = Map::new();
        outputs.insert(
            "checks".into(),
            Value::Array(
                checks
                    .iter()
                    .map(|c| {
                        json!({
                            "name": c.name,
                            "passed": c.passed,
                            "measured": num(c.measured),
                            "threshold": num(c.threshold),
                            "detail": c.detail,
                        })
                    })
                    .collect(),
            ),
        );
        write_json(path, &document("verify", inputs, outputs))?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(CliError::Verification {
            failed,
            total: checks.len(),
        });
    }
    Ok(())
}

pub fn train_demo(args: &TrainArgs) -> Result<()> {
    let data = match &args.data {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
            Dataset::parse(&text)?
        }
        None => Dataset::synthetic(args.examples, args.dim, args.seed),
    };
    let cfg = TrainConfig {
        eta: LearningRate::Constant(args.eta),
        clip_norm: args.clip,
        sigma: args.sigma,
        p: args.p,
        steps: args.steps,
        seed: args.seed,
        algorithm: match args.algorithm {
            AlgorithmArg::Sgd => Algorithm::Sgd,
            AlgorithmArg::Adam => Algorithm::Adam,
        },
        ..TrainConfig::default()
    };
    let outcome = run(&data, &Logistic, &cfg, args.delta)?;

    let mut out = String::new();
    writeln!(
        out,
        "examples={} dim={} algorithm={:?} sigma={} p={} T={} seed={}",
        data.len(),
        data.dim(),
        cfg.algorithm,
        sig12(cfg.sigma),
        sig12(cfg.p),
        cfg.steps,
        cfg.seed
    )
    .unwrap();
    let every = args.log_every.max(1) as usize;
    for (t, loss) in outcome.losses.iter().enumerate() {
        if t % every == 0 || t + 1 == outcome.losses.len() {
            writeln!(out, "step {t:>6}  loss {loss:.6}").unwrap();
        }
    }
    let r = &outcome.report;
    if cfg.sigma == 0.0 && cfg.steps > 0 {
        writeln!(out, "no noise is added: the run is not private (mu = inf)").unwrap();
    } else {
        writeln!(
            out,
            "privacy: mu = {}, eps = {} at delta = {}",
            fmt_fixed(r.mu),
            fmt_fixed(Some(r.eps)),
            fmt_prob(r.delta)
        )
        .unwrap();
    }
    write_text(None, &out)?;

    if let Some(path) = &args.json_out {
        let mut inputs = Map::new();
        inputs.insert("data".into(), json!(args.data.as_ref().map(|p| p.display().to_string())));
        inputs.insert("examples".into(), json!(data.len()));
        inputs.insert("dim".into(), json!(data.dim()));
        inputs.insert("algorithm".into(), json!(format!("{:?}", cfg.algorithm).to_lowercase()));
        inputs.insert("sigma".into(), num(cfg.sigma));
        inputs.insert("p".into(), num(cfg.p));
        inputs.insert("T".into(), json!(cfg.steps));
        inputs.insert("eta".into(), num(args.eta));
        inputs.insert("clip".into(), num(args.clip));
        inputs.insert("seed".into(), json!(cfg.seed));
        inputs.insert("delta".into(), num(args.delta));
        let mut outputs = Map::new();
        outputs.insert("private".into(), json!(cfg.sigma > 0.0 || cfg.steps == 0));
        outputs.insert("reports".into(), json!([report_json(r)]));
        outputs.insert(
            "training".into(),
            json!({
                "losses": outcome.losses.iter().map(|&l| num(l)).collect::<Vec<_>>(),
                "weights": outcome.state.theta.iter().map(|&w| num(w)).collect::<Vec<_>>(),
                "batch_sizes": outcome.batch_sizes,
            }),
        );
        write_json(path, &document("train-demo", inputs, outputs))?;
    }
    Ok(())
}
