//! `rsc`: grasp analysis, single trials and trial batches from scenario files.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rsc_core::nullspace::{analyze_grasp_with, DEFAULT_RANK_TOL};
use rsc_core::qp::{assemble_qp, solve_internal_qp, QpDiagnostics, QpOptions};
use rsc_core::slip_bench::batch::{run_labelled, sample_scenarios, BatchRow, BatchSummary};
use rsc_core::slip_bench::{run_trial, BenchError, ScenarioConfig};

const EXIT_OK: u8 = 0;
const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NOT_APPLICABLE: u8 = 3;
const EXIT_NOT_ARRESTED: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(name = "rsc", version, about = "Reactive slip control: grasp analysis and simulated slip trials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the grasp and print the optimal internal-force profile.
    Analyze {
        #[arg(long)]
        scenario: PathBuf,
        /// Write the QP problem and solution as JSON.
        #[arg(long)]
        qp_dump: Option<PathBuf>,
    },
    /// Run one trial.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Controller command log.
        #[arg(long)]
        commands: Option<PathBuf>,
        /// Per-window detector band energies.
        #[arg(long)]
        energies: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write every N-th simulation step to the trace (default from the scenario, 10 = 1 ms).
        #[arg(long, value_name = "N")]
        decimation: Option<usize>,
        /// Override a parameter, e.g. `--set controller.alpha=8`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run many trials and summarize them.
    Batch {
        /// A scenario file (sampled from its `[batch.ranges]` when present) or a directory of them.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 20)]
        n: usize,
        /// First seed; trial `i` uses `seed + i`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Repeat the batch for each value, e.g. `detector.extra_latency_ms=0,50,150,450`.
        #[arg(long, value_name = "KEY=V1,V2,...")]
        sweep: Option<String>,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
}

fn exit_code(e: &BenchError) -> u8 {
    match e {
        BenchError::ScenarioInvalid(_) => EXIT_INVALID,
        BenchError::Io(_) => EXIT_IO,
        _ => EXIT_FAILURE,
    }
}

fn fail(e: BenchError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e))
}

fn create(path: &Path) -> Result<BufWriter<File>, BenchError> {
    File::create(path).map(BufWriter::new).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))
}

fn parse_assignment(s: &str) -> Result<(String, Vec<f64>), BenchError> {
    let bad = || BenchError::ScenarioInvalid(format!("expected KEY=VALUE[,VALUE...], got `{s}`"));
    let (k, v) = s.split_once('=').ok_or_else(bad)?;
    let values = v.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err(bad());
    }
    Ok((k.trim().to_string(), values))
}

fn analyze(path: &Path, qp_dump: Option<&Path>) -> Result<u8, BenchError> {
    let scenario = ScenarioConfig::load(path)?;
    let built = scenario.build()?;
    let model = &built.model;
    let a = analyze_grasp_with(&model.g, &model.j, DEFAULT_RANK_TOL, scenario.controller.actuation_tol).map_err(|e| BenchError::ScenarioInvalid(e.to_string()))?;
    println!("scenario          {}", scenario.name);
    println!("contacts          {}", model.num_contacts());
    println!("joints            {}", model.num_joints());
    println!("rank G            {}", a.internal.rank);
    println!("dim N(G)          {}", a.internal.k);
    println!("dim N(J^T)        {}", a.unactuable_dim);
    println!("dim N(G)∩N(J^T)   {}", a.hyperstatic_dim);
    println!("min actuation     {:.3e} (|J^T x| / sigma_max(J) over unit internal forces)", a.min_actuation);
    println!("graspable         {}", a.class.graspable);
    println!("defective         {}", a.class.defective);
    println!("hyperstatic       {}", a.class.hyperstatic);
    println!("rsc_applicable    {}", a.class.rsc_applicable);
    if !a.class.rsc_applicable {
        let why = if !a.class.graspable { "not graspable: no internal forces" } else { "hyperstatic: some internal forces need no joint torque" };
        println!("reactive slip control does not apply ({why})");
        return Ok(EXIT_NOT_APPLICABLE);
    }
    let problem = assemble_qp(model, &a.internal, &built.chains).map_err(|e| BenchError::ScenarioInvalid(e.to_string()))?;
    let profile = solve_internal_qp(&problem, &QpOptions::default()).map_err(|e| BenchError::ScenarioInvalid(e.to_string()))?;
    println!();
    println!("internal-force profile f0* (unit norm)");
    println!("  contact  finger   normal        t1        t2");
    for i in 0..model.num_contacts() {
        let f = profile.f0_star.local(i);
        println!("  {:7}  {:6}  {:8.5}  {:8.5}  {:8.5}", i, model.contacts[i].finger_id, f[0], f[1], f[2]);
    }
    let normals = profile.f0_star.normals();
    let max = normals.iter().copied().fold(f64::MIN, f64::max);
    let min = normals.iter().copied().fold(f64::MAX, f64::min);
    println!("balance ratio     {:.4} (largest / smallest normal)", max / min);
    println!("|G f0*|           {:.3e}", (&model.g * &profile.f0_star.0).norm());
    println!("qp status         {:?}", profile.status);
    println!("qp iterations     {}", profile.iterations);
    println!("qp objective      {:.6}", profile.objective_value);
    println!("qp solve time     {:.3} ms", profile.solve_time.as_secs_f64() * 1e3);
    if let Some(p) = qp_dump {
        std::fs::write(p, QpDiagnostics::new(&problem, &profile).to_json()).map_err(|e| BenchError::Io(format!("{}: {e}", p.display())))?;
    }
    Ok(EXIT_OK)
}

struct RunArgs<'a> {
    scenario: &'a Path,
    trace: Option<&'a Path>,
    metrics: Option<&'a Path>,
    commands: Option<&'a Path>,
    energies: Option<&'a Path>,
    seed: Option<u64>,
    decimation: Option<usize>,
    overrides: &'a [String],
}

fn run(args: RunArgs) -> Result<u8, BenchError> {
    let mut scenario = ScenarioConfig::load(args.scenario)?;
    for o in args.overrides {
        let (k, v) = parse_assignment(o)?;
        scenario.set_param(&k, v[0])?;
    }
    if let Some(s) = args.seed {
        scenario.seed = s;
    }
    if let Some(d) = args.decimation {
        if d == 0 {
            return Err(BenchError::ScenarioInvalid("--decimation must be at least 1".into()));
        }
        scenario.trace_decimation = d;
    }
    if args.energies.is_some() {
        scenario.detector.dump_energies = true;
    }
    // Open outputs first so an unwritable path fails before the trial runs.
    let trace_out = args.trace.map(create).transpose()?;
    let metrics_out = args.metrics.map(create).transpose()?;
    let commands_out = args.commands.map(create).transpose()?;
    let energies_out = args.energies.map(create).transpose()?;

    let (m, trace) = run_trial(&scenario)?;
    if let Some(w) = trace_out {
        trace.write_csv(w)?;
    }
    if let Some(w) = commands_out {
        trace.write_commands_csv(w)?;
    }
    if let Some(w) = energies_out {
        trace.write_energies_csv(w)?;
    }
    let ms = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{:.1} ms", v * 1e3));
    println!("scenario                  {} (seed {})", scenario.name, scenario.seed);
    println!("rsc applicable            {}", m.rsc_applicable);
    println!("slip start                {}", ms(m.slip_start));
    println!("slip stop                 {}", ms(m.slip_stop));
    println!("onset detection delay     {}", ms(m.onset_detection_delay));
    println!("offset detection delay    {}", ms(m.offset_detection_delay));
    println!("reaction -> stop delay    {}", ms(m.reaction_to_stop_delay));
    println!("pre-stop displacement     {:.3} mm", m.pre_stop_displacement * 1e3);
    println!("reinforcement steps       {}", m.reinforcements);
    println!("max |G Δf0| / α           {:.3e}", m.max_wrench_ratio);
    println!("stabilized                {}", m.stabilized);
    let stabilized = m.stabilized;
    if let Some(w) = metrics_out {
        let row = BatchRow { label: scenario.name.clone(), seed: scenario.seed, result: Ok(m) };
        BatchSummary::from_rows(vec![row]).write_csv(w)?;
    }
    Ok(if stabilized { EXIT_OK } else { EXIT_NOT_ARRESTED })
}

fn load_many(path: &Path) -> Result<Vec<ScenarioConfig>, BenchError> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(BenchError::ScenarioInvalid(format!("no .toml scenarios in {}", path.display())));
        }
        files.iter().map(|f| ScenarioConfig::load(f)).collect()
    } else {
        Ok(vec![ScenarioConfig::load(path)?])
    }
}

fn batch(path: &Path, n: usize, seed: Option<u64>, jobs: usize, sweep: Option<&str>, metrics: Option<&Path>) -> Result<u8, BenchError> {
    if n == 0 {
        return Err(BenchError::ScenarioInvalid("--n must be at least 1".into()));
    }
    let templates = load_many(path)?;
    let sweep = sweep.map(parse_assignment).transpose()?;
    let metrics_out = metrics.map(create).transpose()?;

    let mut trials = Vec::new();
    let points: Vec<Option<f64>> = match &sweep {
        Some((_, values)) => values.iter().map(|v| Some(*v)).collect(),
        None => vec![None],
    };
    for point in &points {
        for t in &templates {
            let mut t = t.clone();
            let mut label = t.name.clone();
            if let (Some((key, _)), Some(v)) = (&sweep, point) {
                t.set_param(key, *v)?;
                label = format!("{label} {key}={v}");
            }
            let first = seed.unwrap_or(t.seed);
            let drawn = if t.batch.is_some() {
                sample_scenarios(&t, n, first)?
            } else {
                (0..n)
                    .map(|i| {
                        let mut s = t.clone();
                        s.seed = first.wrapping_add(i as u64);
                        s
                    })
                    .collect()
            };
            trials.extend(drawn.into_iter().map(|s| (label.clone(), s)));
        }
    }
    let summary = run_labelled(trials, jobs)?;
    print!("{}", summary.render_table());
    if sweep.is_some() {
        println!();
        let mut labels: Vec<&str> = Vec::new();
        for r in &summary.rows {
            if !labels.contains(&r.label.as_str()) {
                labels.push(&r.label);
            }
        }
        for l in labels {
            let rows: Vec<BatchRow> = summary.rows.iter().filter(|r| r.label == l).cloned().collect();
            let s = BatchSummary::from_rows(rows);
            println!(
                "{l:40}  displacement {:7.3} ± {:6.3} mm  stabilized {:.0}%",
                s.pre_stop_displacement.mean * 1e3,
                s.pre_stop_displacement.std * 1e3,
                s.stabilized_fraction * 100.0
            );
        }
    }
    if let Some(w) = metrics_out {
        summary.write_csv(w)?;
    }
    for r in &summary.rows {
        if let Err(e) = &r.result {
            eprintln!("trial `{}` seed {} failed: {e}", r.label, r.seed);
        }
    }
    let code = summary
        .rows
        .iter()
        .map(|r| match &r.result {
            Ok(m) if m.stabilized => EXIT_OK,
            Ok(_) => EXIT_NOT_ARRESTED,
            Err(_) => EXIT_FAILURE,
        })
        .max_by_key(|c| match *c {
            EXIT_FAILURE => 2,
            EXIT_NOT_ARRESTED => 1,
            _ => 0,
        })
        .unwrap_or(EXIT_OK);
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze { scenario, qp_dump } => analyze(scenario, qp_dump.as_deref()),
        Command::Run { scenario, trace, metrics, commands, energies, seed, decimation, overrides } => run(RunArgs {
            scenario,
            trace: trace.as_deref(),
            metrics: metrics.as_deref(),
            commands: commands.as_deref(),
            energies: energies.as_deref(),
            seed: *seed,
            decimation: *decimation,
            overrides,
        }),
        Command::Batch { scenario, n, seed, jobs, sweep, metrics } => batch(scenario, *n, *seed, *jobs, sweep.as_deref(), metrics.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => fail(e),
    }
}
