use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use quenchlab::config::RunConfig;
use quenchlab::decay::{self, decay_exponent, nash_n, sup_series};
use quenchlab::exit::{pde_exit_oracle, random_probes, simulate_survival, write_mc_csv, ExitProblem};
use quenchlab::harness::{
    self, find_a0, fit_rows, read_sweep_csv, scaling_fit, theorem1_experiment, Classifier, Manifest, SlabSetup,
    StopRule, Theorem1Settings,
};
use quenchlab::io::{fmt17, write_csv, write_json};
use quenchlab::pde::{make_initial_data, StripSolver};
use quenchlab::{CellIndex, CellularFlow, Error, StripDomain, SubSolution};

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_CENSORED: u8 = 3;

#[derive(Parser)]
#[command(name = "quenchlab", version, about = "Flame quenching by cellular flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Override any key: `--set section.key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true)]
    l: Option<String>,
    #[arg(long = "M", global = true)]
    m: Option<String>,
    #[arg(long, global = true)]
    theta0: Option<String>,
    #[arg(long = "L0", global = true)]
    l0: Option<String>,
    #[arg(long = "A", global = true)]
    a: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// coarse, standard or fine.
    #[arg(long, global = true)]
    tier: Option<String>,
    #[arg(long, global = true)]
    horizon: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the strip solver and classify the run.
    Simulate,
    /// Report the critical cell size and check the stationary barrier.
    VerifySubsolution,
    /// Passive or reactive run with sup-norm decay fit and streamline diagnostics.
    Decay,
    /// Survival probabilities: Monte Carlo against the Dirichlet PDE.
    ExitProb,
    /// Quenching amplitude brackets over slab widths.
    Sweep,
    /// Power-law fit of a sweep CSV.
    Fit {
        #[arg(long)]
        input: PathBuf,
    },
    /// One-cell ignition over a grid of (l, A).
    Theorem1,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>, Error> {
        let mut out = Vec::new();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("--set expects KEY=VALUE, got '{s}'")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        let flags = [
            ("flow.l", &self.l),
            ("reaction.M", &self.m),
            ("reaction.theta0", &self.theta0),
            ("initial.L0", &self.l0),
            ("solver.A", &self.a),
            ("seed", &self.seed),
            ("tier", &self.tier),
            ("solver.horizon", &self.horizon),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                out.push((k.to_string(), v.clone()));
            }
        }
        Ok(out)
    }

    fn load(&self) -> Result<RunConfig, Error> {
        let o = self.overrides()?;
        match &self.config {
            Some(p) => RunConfig::load(p, &o),
            None => RunConfig::parse_with("", &o),
        }
    }
}

enum Outcome {
    Done,
    Censored,
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, Error> {
    let dir = cfg.output_dir(Path::new("quenchlab-out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn manifest(dir: &Path, command: &str, cfg: &RunConfig, clock: Instant) -> Result<(), Error> {
    Manifest::new(command, cfg, cfg.seed, clock.elapsed().as_secs_f64())?.write(&dir.join("manifest.json"))
}

fn domain(cfg: &RunConfig) -> Result<StripDomain, Error> {
    StripDomain::new(cfg.flow.l, cfg.cells_x_half(), cfg.points_per_cell(), cfg.flow.boundary)
}

fn simulate(cfg: &RunConfig) -> Result<Outcome, Error> {
    let clock = Instant::now();
    let dir = out_dir(cfg)?;
    let d = domain(cfg)?;
    let flow = CellularFlow::new(cfg.flow.l)?;
    let reaction = cfg.reaction()?;
    let sub = SubSolution::for_reaction(&reaction, cfg.flow.l).ok();
    let init = make_initial_data(d, &cfg.initial_data()?, sub.as_ref())?;
    let sc = cfg.solver_config()?;
    let mut cls = Classifier::new(&d, &flow, &reaction, sub.as_ref(), sc.seed_cell, StopRule {
        on_quench: false,
        ..StopRule::default()
    });
    let mut solver = StripSolver::new(d, reaction.clone(), sc)?;
    let rec = solver.run_observed(&init, |row, field| cls.observe(row, field))?;
    rec.write_monitors(&dir.join("monitors.csv"))?;
    rec.final_field
        .write_snapshot(&dir.join("final"), cfg.solver.a, reaction.m, reaction.theta0)?;
    let verdict = cls.verdict();
    write_json(&dir.join("verdict.json"), &verdict)?;
    for w in &rec.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{} after {} steps (t = {}, leak {:.3e})",
        verdict.label(),
        rec.steps,
        rec.monitors.last().map_or(0.0, |m| m.t),
        rec.leak_fraction
    );
    manifest(&dir, "simulate", cfg, clock)?;
    Ok(Outcome::Done)
}

fn verify_subsolution(cfg: &RunConfig) -> Result<Outcome, Error> {
    let clock = Instant::now();
    let dir = out_dir(cfg)?;
    let reaction = cfg.reaction()?;
    let l = cfg.flow.l;
    let sub = SubSolution::for_reaction(&reaction, l)?;
    println!("l_min = {}", fmt17(sub.l_min()));
    println!(
        "l = {}: barrier boundary value {} ({})",
        fmt17(l),
        fmt17(sub.phi_boundary()),
        if sub.boundary_negative { "negative" } else { "not negative" }
    );
    let mut report = serde_json::json!({
        "l": l,
        "l_min": sub.l_min(),
        "phi_boundary": sub.phi_boundary(),
        "boundary_negative": sub.boundary_negative,
    });
    if sub.boundary_negative {
        let flow = CellularFlow::new(l)?;
        let v = sub.verify(&flow, &reaction, cfg.solver.a, cfg.points_per_cell(), cfg.solver.backend)?;
        println!("max residual {} at ({}, {})", fmt17(v.max_residual), v.at.0, v.at.1);
        report["verify"] = serde_json::to_value(&v)?;
    } else {
        println!("l is below l_min: no barrier to verify");
    }
    write_json(&dir.join("subsolution.json"), &report)?;
    manifest(&dir, "verify-subsolution", cfg, clock)?;
    Ok(Outcome::Done)
}

fn decay_cmd(cfg: &RunConfig) -> Result<Outcome, Error> {
    let clock = Instant::now();
    let dir = out_dir(cfg)?;
    let d = domain(cfg)?;
    let flow = CellularFlow::new(cfg.flow.l)?;
    let reaction = cfg.reaction()?;
    let sub = SubSolution::for_reaction(&reaction, cfg.flow.l).ok();
    let init = make_initial_data(d, &cfg.initial_data()?, sub.as_ref())?;
    let mut solver = StripSolver::new(d, reaction, cfg.solver_config()?)?;
    let rec = solver.run(&init)?;
    rec.write_monitors(&dir.join("monitors.csv"))?;
    let (t0, t1) = cfg.decay_window();
    let l = cfg.flow.l;
    let fit = decay_exponent(&sup_series(&rec), t0, t1);
    let profile: Vec<Vec<String>> = rec
        .monitors
        .iter()
        .filter(|m| m.t > 0.0)
        .map(|m| Ok(vec![fmt17(m.t), fmt17(m.sup_norm), fmt17(nash_n(m.t, l, cfg.decay.c1)?)]))
        .collect::<Result<_, Error>>()?;
    write_csv(&dir.join("decay_profile.csv"), &["t", "sup_norm", "N"], profile)?;
    let delta = cfg.decay.delta.unwrap_or_else(|| decay::default_delta(&flow));
    let diag = decay::scan_level(&rec.final_field, &flow, delta, cfg.solver.backend)?;
    decay::write_diagnostics(&dir.join("diagnostics.csv"), &[diag], cfg.decay.beta)?;
    let summary = match &fit {
        Ok(f) => {
            println!("decay exponent {} ± {} over [{t0}, {t1}]", fmt17(f.slope), fmt17(f.slope_stderr));
            serde_json::json!({ "t_min": t0, "t_max": t1, "fit": f })
        }
        Err(e) => {
            println!("no decay fit: {e}");
            serde_json::json!({ "t_min": t0, "t_max": t1, "fit": null, "reason": e.to_string() })
        }
    };
    write_json(&dir.join("decay.json"), &summary)?;
    manifest(&dir, "decay", cfg, clock)?;
    Ok(Outcome::Done)
}

fn exit_prob(cfg: &RunConfig) -> Result<Outcome, Error> {
    let clock = Instant::now();
    let dir = out_dir(cfg)?;
    let l = cfg.flow.l;
    let e = &cfg.exit;
    let problem = ExitProblem::new(l, cfg.solver.a, cfg.exit_level(), cfg.seed, e.n_paths, cfg.exit_dx_eff())?;
    let t_max = cfg.exit_t_max();
    let probes = random_probes(&problem, e.probes, 0.02 * l, t_max, cfg.seed)?;
    let starts: Vec<(f64, f64)> = probes.iter().map(|p| p.0).collect();
    let times: Vec<f64> = probes.iter().map(|p| p.1).collect();
    let all = simulate_survival(&problem, &starts, &times, cfg.solver.backend)?;
    // Row s·n + s pairs start s with its own time.
    let mc: Vec<_> = (0..probes.len()).map(|s| all[s * probes.len() + s].clone()).collect();
    write_mc_csv(&dir.join("mc.csv"), &mc)?;
    let table = pde_exit_oracle(&problem, e.oracle, t_max, cfg.solver.backend)?;
    let mut agree = 0;
    let mut rows = Vec::new();
    for r in &mc {
        let q = table.evaluate(r.t, r.x, r.y);
        let ok = (r.q_hat - q).abs() <= 3.0 * r.stderr;
        agree += usize::from(ok);
        rows.push(vec![fmt17(r.t), fmt17(r.x), fmt17(r.y), fmt17(q), u8::from(ok).to_string()]);
    }
    write_csv(&dir.join("oracle.csv"), &["t", "x", "y", "Q_oracle", "within_3se"], rows)?;
    table.write(&dir.join("q_table"), &problem)?;
    println!("{agree}/{} probes within 3 standard errors of the PDE oracle", mc.len());
    write_json(
        &dir.join("exit.json"),
        &serde_json::json!({
            "agree": agree,
            "probes": mc.len(),
            "rate_monotonicity_violation": table.rate_monotonicity_violation(),
        }),
    )?;
    manifest(&dir, "exit-prob", cfg, clock)?;
    Ok(Outcome::Done)
}

fn slab_setup(cfg: &RunConfig) -> Result<SlabSetup, Error> {
    Ok(SlabSetup {
        l: cfg.flow.l,
        reaction: cfg.reaction()?,
        l0: cfg.initial.l0.unwrap_or(0.0),
        points_per_cell: cfg.points_per_cell(),
        margin_cells: cfg.sweep.margin_cells,
        horizon: cfg.horizon(),
        solver: cfg.solver_config()?,
    })
}

fn sweep(cfg: &RunConfig) -> Result<Outcome, Error> {
    let clock = Instant::now();
    let dir = out_dir(cfg)?;
    let setup = slab_setup(cfg)?;
    let l0s = if cfg.sweep.l0_values.is_empty() {
        vec![cfg
            .initial
            .l0
            .ok_or_else(|| Error::Validation("sweep needs initial.L0 or sweep.L0_values".into()))?]
    } else {
        cfg.sweep.l0_values.clone()
    };
    let scan = cfg.scan_settings();
    let mut rows = Vec::new();
    // Rows are written as they finish so a long sweep leaves partial results.
    for &l0 in &l0s {
        let b = find_a0(&SlabSetup { l0, ..setup.clone() }, &scan)?;
        println!(
            "L0 = {l0}: A0 in [{}, {}]{}",
            b.a_lo,
            b.a_hi,
            b.reason.as_deref().map(|r| format!(" ({r})")).unwrap_or_default()
        );
        rows.push(b);
        harness::write_sweep_csv(&dir.join("sweep.csv"), &rows)?;
    }
    write_json(&dir.join("brackets.json"), &rows)?;
    if let Ok(fits) = scaling_fit(&fit_rows(&rows)) {
        write_json(&dir.join("fit.json"), &fits)?;
    }
    manifest(&dir, "sweep", cfg, clock)?;
    Ok(if rows.iter().any(|b| b.censored) {
        Outcome::Censored
    } else {
        Outcome::Done
    })
}

fn fit(common: &Common, input: &Path) -> Result<Outcome, Error> {
    let clock = Instant::now();
    let rows = read_sweep_csv(input)?;
    let fits = scaling_fit(&rows)?;
    for f in &fits {
        println!("{}: p = {} ± {}, C = {}", f.model, fmt17(f.p), fmt17(f.stderr), fmt17(f.c));
    }
    let dir = quenchlab::io::output_dir(input.parent().unwrap_or(Path::new(".")));
    write_json(&dir.join("fit.json"), &fits)?;
    let input_cfg = serde_json::json!({ "input": input, "config": common.config });
    Manifest::new("fit", &input_cfg, 0, clock.elapsed().as_secs_f64())?.write(&dir.join("manifest.json"))?;
    Ok(Outcome::Done)
}

fn theorem1(cfg: &RunConfig) -> Result<Outcome, Error> {
    let clock = Instant::now();
    let dir = out_dir(cfg)?;
    let reaction = cfg.reaction()?;
    let t = &cfg.theorem1;
    let ls = if t.l_values.is_empty() { vec![cfg.flow.l] } else { t.l_values.clone() };
    let as_ = if t.a_values.is_empty() { vec![cfg.solver.a] } else { t.a_values.clone() };
    let tc = if reaction.m > 0.0 { 1.0 / reaction.m } else { 1.0 };
    let mut solver = cfg.solver_config()?;
    solver.seed_cell = CellIndex::new(0, 0);
    let settings = Theorem1Settings {
        points_per_cell: cfg.points_per_cell(),
        cells_x_half: cfg.flow.cells_x_half.unwrap_or(2),
        horizon: cfg.solver.horizon.unwrap_or(50.0 * tc),
        min_time: t.min_time * tc,
        center_target: t.center_target,
        solver,
    };
    let table = theorem1_experiment(&ls, &as_, &reaction, &settings)?;
    let rows = table.rows.iter().map(|r| {
        vec![
            fmt17(r.l),
            fmt17(r.a),
            r.verdict.label().to_string(),
            r.t_center.map_or("none".into(), fmt17),
            fmt17(r.center_final),
        ]
    });
    write_csv(&dir.join("theorem1.csv"), &["l", "A", "verdict", "t_center", "center_final"], rows)?;
    for r in &table.rows {
        println!("l = {}, A = {}: {}", r.l, r.a, r.verdict.label());
    }
    println!("l_min = {}; transition band {:?}", table.l_min, table.band);
    write_json(&dir.join("theorem1.json"), &table)?;
    manifest(&dir, "theorem1", cfg, clock)?;
    Ok(Outcome::Done)
}

fn dispatch(cli: &Cli) -> Result<Outcome, Error> {
    if let Command::Fit { input } = &cli.command {
        return fit(&cli.common, input);
    }
    let cfg = cli.common.load()?;
    match &cli.command {
        Command::Simulate => simulate(&cfg),
        Command::VerifySubsolution => verify_subsolution(&cfg),
        Command::Decay => decay_cmd(&cfg),
        Command::ExitProb => exit_prob(&cfg),
        Command::Sweep => sweep(&cfg),
        Command::Theorem1 => theorem1(&cfg),
        Command::Fit { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli
        .common
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(EXIT_VALIDATION);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
        eprintln!("error: cannot start {jobs} workers: {e}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    match dispatch(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Censored) => {
            eprintln!("sweep censored: at least one row has no quenching bracket");
            ExitCode::from(EXIT_CENSORED)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical_abort() {
                ExitCode::from(EXIT_NUMERICAL)
            } else {
                ExitCode::from(EXIT_VALIDATION)
            }
        }
    }
}
