use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use presynth::benchgen::matchgate::{in_matchgate_target_set, synth_matchgate};
use presynth::benchgen::TaskSpec;
use presynth::circuit::json::{from_json, to_json_pretty};
use presynth::circuit::qasm::{emit_qasm, parse_qasm};
use presynth::circuit::Circuit;
use presynth::harness::{
    make_backend, plot_summary_svg, read_summary_csv, run_circuit, run_suite, verify_circuit, LearnerKind, RunConfig, RunContext, Strategy,
    SuiteConfig, DEFAULT_EPSILON, DENSE_CHECK_LIMIT,
};
use presynth::merge::Plan;
use presynth::synth::pipeline::is_clifford_t_circuit;
use presynth::synth::{merge_and_synthesize, BackendKind};

const EXIT_PARSE: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "presynth", version, about = "Merge-plan search and Clifford+T synthesis for quantum circuits")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Qasm,
}

#[derive(clap::Args)]
struct BackendArgs {
    #[arg(long, default_value = "kak+enum")]
    backend: BackendKind,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// T-count budget of the enumeration tables.
    #[arg(long)]
    budget: Option<u32>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a benchmark circuit from a task spec such as `random:n=6,depth=6,seed=1`.
    Gen {
        spec: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Synthesize a circuit directly (empty plan).
    Synth {
        /// Circuit file (.json or .qasm) or task spec.
        input: String,
        #[command(flatten)]
        backend: BackendArgs,
        /// Treat the input as a matchgate circuit.
        #[arg(long)]
        matchgate: bool,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Search for a merge plan, synthesize, verify and print a JSON report.
    Presyn {
        input: String,
        #[arg(long, default_value = "greedy")]
        strategy: Strategy,
        #[command(flatten)]
        backend: BackendArgs,
        /// Task seed when the input is a spec; also seeds the policy search.
        #[arg(long)]
        seed: Option<u64>,
        /// Episode length of the policy search.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value = "cem")]
        learner: LearnerKind,
        #[arg(long)]
        matchgate: bool,
        /// Skip single-qubit fusion after the plan.
        #[arg(long)]
        no_merge_1q: bool,
        /// Optimize slices of this many entangling layers independently.
        #[arg(long)]
        layer_wise: Option<usize>,
        /// Also compare against the baseline (strategy none).
        #[arg(long)]
        compare: bool,
        /// Write the synthesized circuit of the chosen strategy here.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Check that a synthesized circuit is within K*eps of the original.
    Verify {
        original: String,
        synthesized: String,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        /// Number of synthesized blocks K; defaults to the gate count of the original.
        #[arg(long)]
        blocks: Option<usize>,
        #[arg(long, default_value_t = DENSE_CHECK_LIMIT)]
        limit: usize,
    },
    /// Run a benchmark suite described by a TOML file.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the T-count of a circuit.
    Tcount {
        input: String,
        /// Count matchgate T gates instead.
        #[arg(long)]
        matchgate: bool,
    },
    /// Render a suite summary CSV as an SVG chart.
    Plot {
        summary: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

struct Fail(u8, String);

fn parse_err(e: impl std::fmt::Display) -> Fail {
    Fail(EXIT_PARSE, e.to_string())
}

/// Reads a circuit file, or generates one from a task spec if no such file exists.
fn load(input: &str, seed: Option<u64>) -> Result<(Circuit, Option<TaskSpec>), Fail> {
    let path = Path::new(input);
    if path.exists() {
        let text = std::fs::read_to_string(path).map_err(parse_err)?;
        let c = if input.ends_with(".qasm") { parse_qasm(&text) } else { from_json(&text) };
        return Ok((c.map_err(|e| parse_err(format!("{input}: {e}")))?, None));
    }
    let mut spec: TaskSpec = input.parse().map_err(|e| parse_err(format!("{input}: not a file or task spec ({e})")))?;
    if let Some(s) = seed {
        spec = spec.with_seed(s);
    }
    Ok((spec.generate(), Some(spec)))
}

fn write_circuit(c: &Circuit, format: Format, out: Option<&Path>) -> Result<(), Fail> {
    let text = match format {
        Format::Json => to_json_pretty(c) + "\n",
        Format::Qasm => emit_qasm(c).map_err(|e| Fail(1, e.to_string()))?,
    };
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Fail(1, e.to_string())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Fail> {
    match cli.cmd {
        Cmd::Gen { spec, seed, format, out } => {
            let (c, _) = load(&spec, seed)?;
            write_circuit(&c, format, out.as_deref())
        }
        Cmd::Synth {
            input,
            backend,
            matchgate,
            format,
            out,
        } => {
            let (c, spec) = load(&input, None)?;
            let b = make_backend(backend.backend, backend.epsilon, backend.budget);
            let matchgate = matchgate || spec.is_some_and(|s| s.is_matchgate());
            let (circuit, t, blocks) = if matchgate {
                let o = synth_matchgate(&c, &b).map_err(|e| Fail(EXIT_BACKEND, e.to_string()))?;
                (o.circuit, o.t_count, o.blocks)
            } else {
                let o = merge_and_synthesize(&c, &b, &Plan::new(), true).map_err(|e| Fail(EXIT_BACKEND, e.to_string()))?;
                let k = o.blocks();
                (o.circuit, o.t_count, k)
            };
            eprintln!("t_count {t}, blocks {blocks}");
            write_circuit(&circuit, format, out.as_deref())
        }
        Cmd::Presyn {
            input,
            strategy,
            backend,
            seed,
            horizon,
            learner,
            matchgate,
            no_merge_1q,
            layer_wise,
            compare,
            out,
        } => {
            let (c, spec) = load(&input, seed)?;
            let matchgate = matchgate || spec.as_ref().is_some_and(|s| s.is_matchgate());
            let mut cfg = RunConfig {
                backend: backend.backend,
                epsilon: backend.epsilon,
                budget: backend.budget,
                strategies: if compare && strategy != Strategy::None { vec![Strategy::None, strategy] } else { vec![strategy] },
                merge_1q: !no_merge_1q,
                learner,
                layer_wise,
                ..RunConfig::default()
            };
            cfg.policy.horizon = horizon;
            if let Some(s) = seed {
                cfg.policy.seed = s;
            }
            let ctx = RunContext::new(Arc::new(cfg.make_backend()));
            let label = spec.as_ref().map_or(input.clone(), |s| s.to_string());
            let report = run_circuit(&label, &c, matchgate, spec.as_ref().map(|s| s.seed()), &cfg, &ctx);
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            if report.partial && report.results.is_empty() {
                return Err(Fail(EXIT_BACKEND, report.failures.join("; ")));
            }
            if let (Some(p), Some(r)) = (out.as_deref(), report.result(strategy)) {
                write_circuit(&r.circuit, Format::Json, Some(p))?;
            }
            if !report.gate_sets_ok() || !report.bounds_ok() {
                return Err(Fail(EXIT_VERIFY, "synthesized circuit failed verification".into()));
            }
            if report.partial {
                return Err(Fail(EXIT_BACKEND, report.failures.join("; ")));
            }
            Ok(())
        }
        Cmd::Verify {
            original,
            synthesized,
            epsilon,
            blocks,
            limit,
        } => {
            let (a, _) = load(&original, None)?;
            let (b, _) = load(&synthesized, None)?;
            let k = blocks.unwrap_or(a.len());
            let v = verify_circuit(&a, &b, epsilon, k, limit).map_err(|e| Fail(EXIT_VERIFY, e.to_string()))?;
            let clifford_t = is_clifford_t_circuit(&b);
            let matchgate_set = b.gates().iter().all(in_matchgate_target_set);
            println!(
                "{}",
                serde_json::json!({
                    "distance": v.distance,
                    "bound": v.bound,
                    "bound_ok": v.bound_ok,
                    "clifford_t": clifford_t,
                    "matchgate_set": matchgate_set,
                })
            );
            if v.bound_ok && (clifford_t || matchgate_set) {
                Ok(())
            } else {
                Err(Fail(EXIT_VERIFY, "verification failed".into()))
            }
        }
        Cmd::Bench { config, out } => {
            let text = std::fs::read_to_string(&config).map_err(|e| parse_err(format!("{}: {e}", config.display())))?;
            let suite = SuiteConfig::from_toml(&text).map_err(parse_err)?;
            let res = run_suite(&suite, &out).map_err(|e| Fail(1, e.to_string()))?;
            for row in &res.summary {
                println!(
                    "{:<32} {:<9} {:<7} T={:>8.1} red={:>6.2}% len={:>5.2}",
                    row.task, row.backend, row.strategy, row.mean_t_count, row.mean_reduction_pct, row.mean_plan_length
                );
            }
            let failed = res.reports.iter().filter(|r| r.partial).count();
            if failed > 0 {
                eprintln!("{failed} cell(s) failed; see reports.jsonl");
            }
            Ok(())
        }
        Cmd::Tcount { input, matchgate } => {
            let (c, _) = load(&input, None)?;
            println!("{}", if matchgate { c.hat_t_count() } else { c.t_count() });
            Ok(())
        }
        Cmd::Plot { summary, out } => {
            let rows = read_summary_csv(&summary).map_err(parse_err)?;
            std::fs::write(&out, plot_summary_svg(&rows)).map_err(|e| Fail(1, e.to_string()))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
