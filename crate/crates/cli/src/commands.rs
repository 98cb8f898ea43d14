use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;

use drlqr::lti::{
    closed_loop_quadratic, h2_controller, hinf_gamma_lower_bound, load_system, lqr_blocks, noncausal_blocks,
    normalize_weights, plant_freq,
};
use drlqr::rational::{approximate, ControllerSS};
use drlqr::simulate::{monte_carlo, DisturbanceKind, MonteCarloConfig};
use drlqr::spectral::{cepstral_factor, Spectrum, DEFAULT_FLOOR};
use drlqr::synth::{synthesize, worst_case_cost, SynthesisConfig, SynthesisResult};
use drlqr::{GridSamples, StateSpace};
use serde_json::json;

use crate::output::{OutDir, PlotSpec};
use crate::{ApproxArgs, CliError, EvalArgs, Kind, SimArgs, SweepArgs, SynthArgs};

/// Relative approximation error above which `approx` warns.
const EPS_WARN: f64 = 1e-2;
const HINF_TOL: f64 = 1e-8;

fn load(path: &Path) -> Result<StateSpace, CliError> {
    Ok(normalize_weights(&load_system(path)?)?)
}

fn read_grid_csv(path: &Path, label: &str) -> Result<GridSamples, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    GridSamples::read_csv(label, BufReader::new(file))
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn read_controller(path: &Path) -> Result<ControllerSS, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    ControllerSS::from_json(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn synthesis_config(radius: f64, grid: usize, tol: f64, gamma_tol: f64) -> SynthesisConfig {
    SynthesisConfig { fp_tol: tol, gamma_tol, ..SynthesisConfig::new(radius).with_grid(grid) }
}

/// `T_K^*T_K` of a controller response on the plant grid.
fn tquad(ss: &StateSpace, k: &GridSamples) -> Result<GridSamples, CliError> {
    let (f, g) = plant_freq(ss, k.len())?;
    Ok(closed_loop_quadratic(k, &f, &g)?)
}

fn grid_csv(samples: &GridSamples) -> impl FnOnce(&mut dyn Write) -> std::io::Result<()> + '_ {
    move |out| samples.write_csv(out)
}

fn write_synthesis(out: &mut OutDir, res: &SynthesisResult) -> Result<(), CliError> {
    out.write_with("K.csv", grid_csv(&res.controller))?;
    out.write_plot(
        "K.plot.json",
        PlotSpec {
            data: "K.csv",
            title: "Controller frequency response",
            x: "omega",
            xlabel: "omega [rad/sample]",
            xscale: "linear",
            y: &["re(v_11)", "im(v_11)"],
            ylabel: "K",
            yscale: "linear",
        },
    )?;
    out.write_with("N.csv", grid_csv(res.nspec.samples()))?;
    out.write_plot(
        "N.plot.json",
        PlotSpec {
            data: "N.csv",
            title: "Fixed-point spectrum",
            x: "omega",
            xlabel: "omega [rad/sample]",
            xscale: "linear",
            y: &["re(v_11)"],
            ylabel: "N",
            yscale: "log",
        },
    )?;
    let changes = &res.fixed_point.changes;
    out.write_with("convergence.csv", |w| {
        writeln!(w, "iter,relative_change")?;
        for (i, c) in changes.iter().enumerate() {
            writeln!(w, "{},{c:.17e}", i + 1)?;
        }
        Ok(())
    })?;
    out.write_plot(
        "convergence.plot.json",
        PlotSpec {
            data: "convergence.csv",
            title: "Fixed-point convergence",
            x: "iter",
            xlabel: "iteration",
            xscale: "linear",
            y: &["relative_change"],
            ylabel: "max relative change",
            yscale: "log",
        },
    )?;
    let probes = &res.probes;
    out.write_with("gamma_probes.csv", |w| {
        writeln!(w, "probe,gamma,radius_residual,iterations")?;
        for (i, p) in probes.iter().enumerate() {
            let r = p.residual.map_or("nan".to_string(), |r| format!("{r:.17e}"));
            writeln!(w, "{i},{:.17e},{r},{}", p.gamma, p.iterations)?;
        }
        Ok(())
    })?;
    out.write_json("result.json", &res.summary())
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let ss = load(&args.system)?;
    let res = synthesize(&ss, &synthesis_config(args.radius, args.grid, args.tol, args.gamma_tol))?;
    let mut out = OutDir::create(&args.out)?;
    out.record_input(&args.system)?;
    write_synthesis(&mut out, &res)?;
    out.finish("synth", args)
}

pub fn approx(args: &ApproxArgs) -> Result<(), CliError> {
    let ss = load(&args.system)?;
    let samples = read_grid_csv(&args.nspec, "N")?;
    let nspec = Spectrum::new(samples)?;
    let blocks = lqr_blocks(&ss)?;
    let ap = approximate(&blocks, &ss, &nspec, args.order, args.eps_tol)?;
    let values = nspec.real_values();
    let peak = values.iter().copied().fold(0.0, f64::max);
    if ap.fit.eps_star > EPS_WARN * peak {
        eprintln!(
            "warning: order {} leaves a large approximation error (eps_star = {:.4e}, {:.2}% of max N)",
            args.order,
            ap.fit.eps_star,
            100.0 * ap.fit.eps_star / peak
        );
    }
    let mut out = OutDir::create(&args.out)?;
    out.record_input(&args.nspec)?;
    out.record_input(&args.system)?;
    out.write_json(
        "fit.json",
        &json!({
            "order": ap.fit.order,
            "eps_star": ap.fit.eps_star,
            "max_error": ap.fit.max_error,
            "lp_solves": ap.fit.lp_solves,
            "p": ap.fit.p.coeffs(),
            "q": ap.fit.q.coeffs(),
            "numerator": ap.numer,
            "denominator": ap.denom,
        }),
    )?;
    let text = ap.controller.to_json();
    out.write_with("controller.json", |w| writeln!(w, "{text}"))?;
    let fitted = ap.fit.ratio_samples(values.len());
    let n = values.len();
    out.write_with("response_error.csv", |w| {
        writeln!(w, "k,omega,N,P_over_Q,abs_error")?;
        for (k, (v, f)) in values.iter().zip(&fitted).enumerate() {
            let omega = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            writeln!(w, "{k},{omega:.17e},{v:.17e},{f:.17e},{:.17e}", (f - v).abs())?;
        }
        Ok(())
    })?;
    out.write_plot(
        "response_error.plot.json",
        PlotSpec {
            data: "response_error.csv",
            title: "Rational approximation of the spectrum",
            x: "omega",
            xlabel: "omega [rad/sample]",
            xscale: "linear",
            y: &["N", "P_over_Q"],
            ylabel: "spectrum",
            yscale: "log",
        },
    )?;
    out.finish("approx", args)
}

/// Controller response selected by an `eval` controller spec.
fn controller_response(ss: &StateSpace, spec: &str, grid: usize) -> Result<GridSamples, CliError> {
    match spec.split_once(':') {
        None if spec == "h2" => {
            let blocks = lqr_blocks(ss)?;
            let nb = noncausal_blocks(&blocks, ss, grid)?;
            Ok(h2_controller(&blocks, &nb)?)
        }
        None if spec == "hinf" => Ok(hinf_gamma_lower_bound(ss, grid, HINF_TOL)?.controller),
        Some(("dr", path)) => read_grid_csv(Path::new(path), "K"),
        Some(("ss", path)) => Ok(read_controller(Path::new(path))?.response(grid)?),
        _ => Err(CliError::input(format!("unknown controller '{spec}' (expected h2, hinf, dr:PATH or ss:PATH)"))),
    }
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let ss = load(&args.system)?;
    let k = controller_response(&ss, &args.controller, args.grid)?;
    let wc = worst_case_cost(&tquad(&ss, &k)?, args.radius)?;
    let gamma = wc.gamma_star.is_finite().then_some(wc.gamma_star);
    let report = json!({ "controller": args.controller, "r": args.radius, "cost": wc.cost, "gamma_star": gamma });
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable report"));
    if let Some(dir) = &args.out {
        let mut out = OutDir::create(dir)?;
        out.record_input(&args.system)?;
        if let Some((_, path)) = args.controller.split_once(':') {
            out.record_input(Path::new(path))?;
        }
        out.write_json("eval.json", &report)?;
        out.finish("eval", args)?;
    }
    Ok(())
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    if args.radii.is_empty() {
        return Err(CliError::input("no radii given"));
    }
    let ss = load(&args.system)?;
    let blocks = lqr_blocks(&ss)?;
    let nb = noncausal_blocks(&blocks, &ss, args.grid)?;
    let tq_h2 = tquad(&ss, &h2_controller(&blocks, &nb)?)?;
    let tq_hinf = tquad(&ss, &hinf_gamma_lower_bound(&ss, args.grid, HINF_TOL)?.controller)?;
    let mut rows = Vec::with_capacity(args.radii.len());
    for &r in &args.radii {
        let res = synthesize(&ss, &synthesis_config(r, args.grid, args.tol, args.gamma_tol))?;
        let mut row = vec![r, res.cost, worst_case_cost(&tq_h2, r)?.cost, worst_case_cost(&tq_hinf, r)?.cost];
        for &m in &args.orders {
            let cost = approximate(&blocks, &ss, &res.nspec, m, 1e-6)
                .map_err(CliError::from)
                .and_then(|ap| tquad(&ss, &ap.controller.response(args.grid)?))
                .and_then(|tq| Ok(worst_case_cost(&tq, r)?.cost));
            row.push(cost.unwrap_or_else(|e| {
                eprintln!("warning: order {m} at r = {r}: {}", e.message);
                f64::NAN
            }));
        }
        rows.push(row);
    }
    let mut columns = vec!["r".to_string(), "dr".into(), "h2".into(), "hinf".into()];
    columns.extend(args.orders.iter().map(|m| format!("ra{m}")));
    let mut out = OutDir::create(&args.out)?;
    out.record_input(&args.system)?;
    out.write_with("sweep.csv", |w| {
        writeln!(w, "{}", columns.join(","))?;
        for row in &rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    })?;
    let y: Vec<&str> = columns[1..].iter().map(String::as_str).collect();
    out.write_plot(
        "sweep.plot.json",
        PlotSpec {
            data: "sweep.csv",
            title: "Worst-case expected cost against radius",
            x: "r",
            xlabel: "Wasserstein radius r",
            xscale: "log",
            y: &y,
            ylabel: "worst-case cost",
            yscale: "log",
        },
    )?;
    out.finish("sweep", args)
}

fn thread_count() -> Result<usize, CliError> {
    match std::env::var("DRLQR_THREADS") {
        Ok(v) => v.parse().map_err(|_| CliError::input(format!("DRLQR_THREADS must be a nonnegative integer, got '{v}'"))),
        Err(_) => Ok(0),
    }
}

pub fn sim(args: &SimArgs) -> Result<(), CliError> {
    let ss = load(&args.system)?;
    let ctrl = read_controller(&args.controller)?;
    let kind = match args.kind {
        Kind::White => DisturbanceKind::White,
        Kind::Worst => {
            let r = args.radius.ok_or_else(|| CliError::input("--kind worst needs --radius"))?;
            let wc = worst_case_cost(&tquad(&ss, &ctrl.response(args.grid)?)?, r)?;
            let factor = cepstral_factor(&wc.spectrum()?, DEFAULT_FLOOR)?;
            DisturbanceKind::WorstCase { factor, taps: args.taps }
        }
    };
    let cfg = MonteCarloConfig { threads: thread_count()?, ..MonteCarloConfig::new(args.horizon, args.trials, args.seed) };
    let run = monte_carlo(&ss, &ctrl, &kind, &cfg)?;
    let label = kind.label();
    let csv = format!("sim_{label}.csv");
    let mut out = OutDir::create(&args.out)?;
    out.record_input(&args.system)?;
    out.record_input(&args.controller)?;
    out.write_with(&csv, |w| run.write_csv(w))?;
    out.write_plot(
        &format!("sim_{label}.plot.json"),
        PlotSpec {
            data: &csv,
            title: "Running-average cost",
            x: "t",
            xlabel: "time step",
            xscale: "linear",
            y: &["mean_cum_avg_cost", "std_cum_avg_cost"],
            ylabel: "cost",
            yscale: "linear",
        },
    )?;
    out.write_json(
        &format!("sim_{label}.json"),
        &json!({
            "kind": label,
            "horizon": run.horizon,
            "trials": run.trials,
            "seed": run.seed,
            "terminal_mean": run.terminal_mean(),
            "terminal_stderr": run.terminal_stderr(),
        }),
    )?;
    out.finish("sim", args)
}
