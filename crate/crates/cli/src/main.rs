use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use carshare::bnb::{solve_exact, BnbOptions, NodeStrategy};
use carshare::heuristics::{grasp, tabu_search, vns, DEFAULT_ALPHA, DEFAULT_TENURE};
use carshare::instance::{fixtures, generate, GenParams, Group, Instance};
use carshare::lp::{LpStatus, Simplex};
use carshare::model::{Formulation, Problem};
use carshare::network::Network;
use carshare::preprocess::{minimize, ReductionStats};
use carshare::priority::priority_stats;
use carshare::report::{mean_sd, Aggregate, Method, RunReport};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "carshare", version, about = "Customer satisfaction solvers for two-station one-way car-sharing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write random benchmark instances (or a named fixture).
    Generate {
        #[arg(long, default_value = "st")]
        group: Group,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Write a hand-encoded fixture instead of random instances.
        #[arg(long)]
        fixture: Option<Fixture>,
    },
    /// Solve instances and print one JSON report per line.
    Solve {
        #[arg(long, default_value = "bb")]
        method: Method,
        #[arg(long, default_value = "cs2")]
        model: Formulation,
        #[arg(long, default_value_t = 600.0)]
        time_limit: f64,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_TENURE)]
        tenure: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Node selection for branch-and-bound.
        #[arg(long, value_enum, default_value_t = Strategy::BestBound)]
        strategy: Strategy,
        /// Branch-and-bound with rounding only.
        #[arg(long)]
        no_heuristics: bool,
        /// Build the model on the unreduced network.
        #[arg(long)]
        no_reduce: bool,
        /// Also write the per-set aggregate CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Instances solved in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Print network sizes before and after reduction as CSV.
    Preprocess {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Write the MIP model of one instance in MPS or LP format.
    Export {
        #[arg(long, value_enum, default_value_t = Format::Mps)]
        format: Format,
        #[arg(long, default_value = "cs2")]
        model: Formulation,
        #[arg(long)]
        no_reduce: bool,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        input: PathBuf,
    },
    /// Print precedence pair, reduced arc and forest arc counts as CSV.
    PriorityStats {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Copy, Clone, ValueEnum)]
enum Fixture {
    NetworkExample,
    AllOrNothing,
    NestedFive,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Strategy {
    BestBound,
    DepthFirst,
}

#[derive(Copy, Clone, ValueEnum)]
enum Format {
    Mps,
    Lp,
}

/// Failure with the exit code to report.
struct Failure {
    code: u8,
    message: String,
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    }
}

fn read_instance(path: &Path) -> Result<Instance, Failure> {
    Instance::read(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn instance_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Instance set of a file name like `st-n1000-s7`: everything before the
/// seed suffix.
fn set_name(instance: &str) -> String {
    match instance.rsplit_once("-s") {
        Some((head, tail)) if !tail.is_empty() && tail.chars().all(|c| c.is_ascii_digit()) => head.to_string(),
        _ => instance.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Generate {
            group,
            n,
            count,
            seed,
            out,
            fixture,
        } => run_generate(group, n, count, seed, &out, fixture),
        Command::Solve {
            method,
            model,
            time_limit,
            alpha,
            tenure,
            seed,
            strategy,
            no_heuristics,
            no_reduce,
            csv,
            jobs,
            inputs,
        } => {
            if !(time_limit.is_finite() && time_limit >= 0.0) {
                return Err(input_error("--time-limit must be a non-negative number"));
            }
            if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&tenure) {
                return Err(input_error("--alpha and --tenure must lie in [0, 1]"));
            }
            let settings = SolveSettings {
                method,
                model,
                time_limit: Duration::from_secs_f64(time_limit),
                alpha,
                tenure,
                seed,
                strategy: match strategy {
                    Strategy::BestBound => NodeStrategy::BestBound,
                    Strategy::DepthFirst => NodeStrategy::DepthFirst,
                },
                heuristics: !no_heuristics,
                reduce: !no_reduce,
            };
            run_solve(&settings, &inputs, jobs, csv.as_deref())
        }
        Command::Preprocess { inputs } => run_preprocess(&inputs),
        Command::Export {
            format,
            model,
            no_reduce,
            out,
            input,
        } => run_export(format, model, !no_reduce, out.as_deref(), &input),
        Command::PriorityStats { inputs } => run_priority_stats(&inputs),
    }
}

fn run_generate(group: Group, n: usize, count: u64, seed: u64, out: &Path, fixture: Option<Fixture>) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    if let Some(f) = fixture {
        let (name, inst) = match f {
            Fixture::NetworkExample => ("network_example", fixtures::network_example(2, 1)),
            Fixture::AllOrNothing => ("all_or_nothing", fixtures::all_or_nothing()),
            Fixture::NestedFive => ("nested_five", fixtures::nested_five()),
        };
        let path = out.join(format!("{name}.txt"));
        return inst.write(&path).map_err(|e| input_error(format!("{}: {e}", path.display())));
    }
    let params = GenParams::benchmark(group);
    for i in 0..count {
        let s = seed.wrapping_add(i);
        let inst = generate(group, n, s, &params).map_err(|e| input_error(e.to_string()))?;
        let path = out.join(format!("{group}-n{n}-s{s}.txt"));
        inst.write(&path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

struct SolveSettings {
    method: Method,
    model: Formulation,
    time_limit: Duration,
    alpha: f64,
    tenure: f64,
    seed: u64,
    strategy: NodeStrategy,
    heuristics: bool,
    reduce: bool,
}

fn solve_one(settings: &SolveSettings, path: &Path) -> Result<RunReport, Failure> {
    let inst = read_instance(path)?;
    let name = instance_name(path);
    let problem = Problem::new(inst, settings.model, settings.reduce).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    let report = match settings.method {
        Method::Bb => {
            let options = BnbOptions {
                time_limit: settings.time_limit,
                strategy: settings.strategy,
                node_limit: None,
                heuristics: settings.heuristics,
                seed: settings.seed,
            };
            let mut r = solve_exact(&problem, options).to_run_report(&name, &problem);
            r.seed = Some(settings.seed);
            r
        }
        method => {
            let h = match method {
                Method::Grasp => grasp(&problem, settings.alpha, settings.time_limit, settings.seed),
                Method::Vns => vns(&problem, settings.time_limit, settings.seed),
                _ => tabu_search(&problem, settings.tenure, settings.time_limit, settings.seed),
            };
            h.to_run_report(&name, &problem, Some(relaxation_bound(&problem)))
        }
    };
    Ok(report)
}

/// Floor of the LP relaxation value, the upper bound used for heuristic
/// gaps.
fn relaxation_bound(problem: &Problem) -> f64 {
    let mut lp = Simplex::<f64>::new(&problem.model).expect("models have finite bounds");
    lp.set_iteration_limit(usize::MAX);
    let sol = lp.solve();
    debug_assert_eq!(sol.status, LpStatus::Optimal);
    (sol.objective + 1e-6).floor()
}

fn run_solve(settings: &SolveSettings, inputs: &[PathBuf], jobs: usize, csv: Option<&Path>) -> Result<(), Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| input_error(e.to_string()))?;
    let results: Vec<Result<RunReport, Failure>> = pool.install(|| inputs.par_iter().map(|p| solve_one(settings, p)).collect());
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut reports = Vec::new();
    let mut failure = None;
    for r in results {
        match r {
            Ok(rep) => {
                writeln!(out, "{}", rep.to_json()).map_err(|e| io_failure(Path::new("<stdout>"), e))?;
                reports.push(rep);
            }
            Err(f) => {
                eprintln!("error: {}", f.message);
                failure.get_or_insert(f.code);
            }
        }
    }
    if let Some(path) = csv {
        let mut sets: BTreeMap<String, Vec<RunReport>> = BTreeMap::new();
        for r in &reports {
            sets.entry(set_name(&r.instance)).or_default().push(r.clone());
        }
        let mut text = String::from(Aggregate::CSV_HEADER);
        text.push('\n');
        for (set, runs) in &sets {
            text.push_str(&Aggregate::new(set.clone(), runs).to_csv());
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| io_failure(path, e))?;
    }
    match failure {
        // already reported per instance
        Some(code) => Err(Failure {
            code,
            message: String::new(),
        }),
        None => Ok(()),
    }
}

fn build_network(path: &Path) -> Result<Network, Failure> {
    let inst = read_instance(path)?;
    Network::build(&inst).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn run_preprocess(inputs: &[PathBuf]) -> Result<(), Failure> {
    println!("instance,vertices_before,arcs_before,vertices_after,arcs_after");
    for path in inputs {
        let net = build_network(path)?;
        let (min, _) = minimize(&net);
        let s = ReductionStats::new(&net, &min);
        println!(
            "{},{},{},{},{}",
            instance_name(path),
            s.vertices_before,
            s.arcs_before,
            s.vertices_after,
            s.arcs_after
        );
    }
    Ok(())
}

fn run_export(format: Format, model: Formulation, reduce: bool, out: Option<&Path>, input: &Path) -> Result<(), Failure> {
    let inst = read_instance(input)?;
    let problem = Problem::new(inst, model, reduce).map_err(|e| input_error(format!("{}: {e}", input.display())))?;
    let mut m = problem.model;
    m.name = instance_name(input);
    let text = match format {
        Format::Mps => m.to_mps(),
        Format::Lp => m.to_lp(),
    };
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io_failure(Path::new("<stdout>"), e)),
    }
}

fn run_priority_stats(inputs: &[PathBuf]) -> Result<(), Failure> {
    println!("instance,precedence_pairs,reduced_arcs,forest_arcs");
    let mut forest = Vec::new();
    for path in inputs {
        let inst = read_instance(path)?;
        let s = priority_stats(&inst);
        forest.push(s.forest_arcs as f64);
        println!("{},{},{},{}", instance_name(path), s.raw_pairs, s.reduced_arcs, s.forest_arcs);
    }
    let (mean, sd) = mean_sd(&forest);
    eprintln!("forest arcs: mean {mean:.2} sd {sd:.2} over {} instances", forest.len());
    Ok(())
}
