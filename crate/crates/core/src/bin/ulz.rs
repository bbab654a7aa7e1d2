use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use ulz_core::bench::{aggregate, load_env, run_experiment, AgentKind, DiagnosticsConfig, ExperimentConfig};
use ulz_core::exactdp::{optimal_average_cost, StateSpace, DEFAULT_ALPHA};
use ulz_core::{Error, Result};

#[derive(Parser)]
#[command(name = "ulz", version, about = "Active LZ control, exact baselines and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a known environment exactly and print the optimal average cost.
    Solve {
        /// `rps` or a path to an environment JSON file.
        #[arg(long, default_value = "rps")]
        env: String,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// Write the value function and policy as JSON.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this agent instead of the configured list.
        #[arg(long)]
        agent: Option<String>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare several agents on one environment over a panel of seeds.
    Compare {
        #[arg(long, default_value = "rps")]
        env: String,
        /// Comma-separated agent kinds.
        #[arg(long, default_value = "active-lz,predictive-lz,optimal")]
        agents: String,
        #[arg(long, default_value_t = 1_000_000)]
        horizon: u64,
        /// Number of seeds; seeds 0..N are used.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Record suboptimal-action and one-step-inaccuracy fractions.
        #[arg(long)]
        diagnostics: bool,
        /// Tolerance for the one-step-inaccuracy diagnostic.
        #[arg(long, default_value_t = 0.2)]
        epsilon: f64,
    },
}

fn state_label(x: &[usize], a: &[usize]) -> String {
    let fmt = |w: &[usize]| w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
    format!("x=[{}] a=[{}]", fmt(x), fmt(a))
}

fn solve(env_source: &str, alpha: f64, dump: Option<PathBuf>) -> Result<()> {
    let start = Instant::now();
    let env = load_env(env_source)?;
    let sol = optimal_average_cost(&env, alpha)?;
    let elapsed = start.elapsed();
    println!("lambda* = {:.9}", sol.lambda);
    println!("alpha = {alpha}");
    println!("value iterations = {}", sol.discounted.iterations);
    println!("states = {}", sol.policy.actions.len());
    println!("policy:");
    let states = StateSpace::new(&env);
    for (s, &a) in sol.policy.actions.iter().enumerate() {
        let (x, aw) = states.decode(s);
        println!("  {} -> {}", state_label(&x, &aw), a);
    }
    println!("elapsed = {:.3}s", elapsed.as_secs_f64());
    if let Some(path) = dump {
        let doc = json!({
            "lambda": sol.lambda,
            "alpha": alpha,
            "iterations": sol.discounted.iterations,
            "values": sol.discounted.value.values,
            "policy": sol.policy.actions,
        });
        std::fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
    }
    Ok(())
}

fn report(cfg: &ExperimentConfig) -> Result<()> {
    let start = Instant::now();
    let traces = run_experiment(cfg)?;
    println!("{:<20} {:>10} {:>12}", "agent", "t", "avg_cost");
    for (agent, r) in aggregate(&traces) {
        println!("{:<20} {:>10} {:>12.6}", agent, r.t, r.avg_cost);
    }
    println!(
        "wrote {} traces to {} in {:.2}s",
        traces.len(),
        cfg.output.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn run(config: PathBuf, agent: Option<String>, out: Option<PathBuf>) -> Result<()> {
    let text = std::fs::read_to_string(&config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(name) = agent {
        cfg.agents = vec![AgentKind::parse(&name)?];
        cfg.validate()?;
    }
    if let Some(out) = out {
        cfg.output = out;
    }
    report(&cfg)
}

fn parse_agents(list: &str) -> Result<Vec<AgentKind>> {
    list.split(',').map(|s| AgentKind::parse(s.trim())).collect()
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { env, alpha, dump } => solve(&env, alpha, dump),
        Command::Run { config, agent, out } => run(config, agent, out),
        Command::Compare {
            env,
            agents,
            horizon,
            seeds,
            out,
            diagnostics,
            epsilon,
        } => {
            let cfg = ExperimentConfig {
                env,
                agents: parse_agents(&agents)?,
                horizon,
                seeds: (0..seeds).collect(),
                output: out,
                diagnostics: DiagnosticsConfig {
                    suboptimality: diagnostics,
                    one_step_epsilon: diagnostics.then_some(epsilon),
                },
                ..ExperimentConfig::default()
            };
            cfg.validate()?;
            report(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
