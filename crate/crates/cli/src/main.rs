//! fragsim: simulate duty-cycle-restricted LPWAN uplink strategies.
//!
//! Subcommands: `run` (one scenario), `sweep` (density/strategy/seed grid
//! with CSV tables and SVG plots), `table1` (fragmentation header-overhead
//! table) and `replay` (recompute metrics from a serialized event log).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fragsim::csvout;
use fragsim::plot::{self, Series};
use fragsim::strategies;
use fragsim::sweep::{self, SweepSpec};
use fragsim::table;
use fragsim::CliError;
use fragsim_core::config as configtext;
use fragsim_core::engine::{self, ScenarioConfig};
use fragsim_core::metrics;
use fragsim_core::protocol::Strategy;

#[derive(Parser)]
#[command(
    name = "fragsim",
    version,
    about = "Discrete-event simulator of dense duty-cycle-restricted LPWAN uplinks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its metrics as a CSV row.
    Run(RunArgs),
    /// Run a node-density sweep; writes per-run and aggregated CSV plus
    /// SVG plots.
    Sweep(SweepArgs),
    /// Print the fragmentation header-overhead table with reference values.
    Table1(TableArgs),
    /// Recompute the metrics of a serialized event log.
    Replay(ReplayArgs),
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario configuration file (key = value schema); defaults apply for
    /// missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the node count.
    #[arg(long)]
    nodes: Option<u32>,
    /// Override the strategy: aloha | buffered_aloha | frag | frag_retx.
    #[arg(long)]
    strategy: Option<String>,
    /// Fragments per packet (fragmenting strategies).
    #[arg(long)]
    fragments: Option<u8>,
    /// Retransmission session budget (frag_retx).
    #[arg(long)]
    sessions: Option<u8>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Write the full event log to this file.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Densities to sweep: `a..b` (inclusive), `a..b/step`, or a comma list.
    #[arg(long, default_value = "1..50")]
    node_counts: String,
    /// Strategy tokens (comma separated); defaults to the six headline
    /// strategies plus the gains-analysis extras.
    #[arg(long)]
    strategies: Option<String>,
    /// Independent seeds per (density, strategy) point.
    #[arg(long, default_value_t = 20)]
    seeds: u32,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Output directory for CSV tables and plots.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Skip SVG plot emission.
    #[arg(long)]
    no_plots: bool,
}

#[derive(Args)]
struct TableArgs {
    /// Scenario file providing the radio configuration and payload size.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fragment header sizes to tabulate, comma separated.
    #[arg(long, default_value = "9,1")]
    header_bytes: String,
    /// Largest fragment count (table covers 2..=N).
    #[arg(long, default_value_t = 5)]
    max_fragments: u8,
}

#[derive(Args)]
struct ReplayArgs {
    /// Serialized event log produced by `run --log`.
    log: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Table1(args) => cmd_table1(args),
        Command::Replay(args) => cmd_replay(args),
    }
}

fn load_scenario(args: &ScenarioArgs) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            configtext::parse_text(&text)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(nodes) = args.nodes {
        cfg.node_count = nodes;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.strategy.is_some() || args.fragments.is_some() || args.sessions.is_some() {
        let kind = match &args.strategy {
            Some(k) => k.clone(),
            None => strategies::kind_name(&cfg.strategy).to_string(),
        };
        let fragments = args.fragments.unwrap_or_else(|| cfg.strategy.fragments());
        let sessions = args.sessions.unwrap_or_else(|| cfg.strategy.sessions());
        let token = match kind.as_str() {
            "aloha" | "buffered_aloha" => kind.clone(),
            _ => format!("{kind}:{fragments}:{}", sessions.max(1)),
        };
        cfg.strategy = strategies::parse_token(&token)?;
        if kind == "frag" {
            cfg.strategy = Strategy::Frag { fragments };
        }
    }
    cfg.validate()
        .map_err(|e| CliError::usage(format!("invalid scenario: {e}")))?;
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let cfg = load_scenario(&args.scenario)?;
    let out = engine::run(&cfg).map_err(|e| CliError::usage(format!("invalid scenario: {e}")))?;
    if let Some(path) = &args.log {
        let log = out.log.as_ref().expect("run() collects the log");
        write_file(path, &log.to_text(&cfg))?;
    }
    println!("{}", csvout::RUNS_HEADER);
    println!("{}", csvout::run_row_csv(&cfg, &out.metrics));
    Ok(())
}

fn parse_node_counts(spec: &str) -> Result<Vec<u32>, CliError> {
    let bad = || CliError::usage(format!("bad node-count spec {spec:?}"));
    if let Some((range, step)) = spec.split_once('/') {
        let step: u32 = step.parse().map_err(|_| bad())?;
        if step == 0 {
            return Err(bad());
        }
        let (a, b) = range.split_once("..").ok_or_else(bad)?;
        let a: u32 = a.parse().map_err(|_| bad())?;
        let b: u32 = b.parse().map_err(|_| bad())?;
        let mut v: Vec<u32> = (a..=b).step_by(step as usize).collect();
        if v.last() != Some(&b) {
            v.push(b);
        }
        return Ok(v);
    }
    if let Some((a, b)) = spec.split_once("..") {
        let a: u32 = a.parse().map_err(|_| bad())?;
        let b: u32 = b.parse().map_err(|_| bad())?;
        if a == 0 || b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let base = load_scenario(&args.scenario)?;
    let node_counts = parse_node_counts(&args.node_counts)?;
    let strategies_list = match &args.strategies {
        Some(spec) => spec
            .split(',')
            .map(|t| strategies::parse_token(t.trim()))
            .collect::<Result<Vec<_>, _>>()?,
        None => strategies::default_sweep_strategies(),
    };
    let spec = SweepSpec {
        base: base.clone(),
        node_counts,
        strategies: strategies_list,
        seeds_per_point: args.seeds,
        jobs: args.jobs,
        audit: false,
    };

    let started = std::time::Instant::now();
    let rows = sweep::run_sweep(&spec)?;
    let summary = sweep::summarize(&spec, &rows);
    eprintln!(
        "{} runs in {:.1} s",
        rows.len(),
        started.elapsed().as_secs_f64()
    );

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::runtime(format!("{}: {e}", args.out_dir.display())))?;
    let runs_path = args.out_dir.join("sweep_runs.csv");
    write_file(&runs_path, &csvout::runs_csv(&base, &rows))?;
    let summary_path = args.out_dir.join("sweep_summary.csv");
    write_file(
        &summary_path,
        &csvout::summary_csv(&summary, spec.seeds_per_point > 1),
    )?;
    println!("wrote {}", runs_path.display());
    println!("wrote {}", summary_path.display());

    if !args.no_plots {
        for (name, svg) in build_plots(&spec, &summary) {
            let path = args.out_dir.join(name);
            write_file(&path, &svg)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

/// Builds the four standard sweep plots from the aggregated data.
fn build_plots(spec: &SweepSpec, summary: &[sweep::SummaryRow]) -> Vec<(&'static str, String)> {
    let line_series = |metric: fn(&sweep::SummaryRow) -> Option<sweep::Stat>| -> Vec<Series> {
        spec.strategies
            .iter()
            .filter(|s| {
                // Headline curves only; the gains extras would double every
                // color without adding structure.
                strategies::headline_strategies().contains(s)
                    || !strategies::default_sweep_strategies().contains(s)
            })
            .map(|&s| Series {
                label: strategies::label(&s),
                points: sweep::curve(summary, s, metric),
            })
            .filter(|s| !s.points.is_empty())
            .collect()
    };

    let mut out = Vec::new();
    out.push((
        "goodput_vs_nodes.svg",
        plot::line_chart(
            "Network goodput vs density",
            "sensor nodes",
            "goodput [%]",
            &line_series(|r| r.goodput),
        ),
    ));
    out.push((
        "app_capacity_vs_nodes.svg",
        plot::line_chart(
            "Application capacity vs density",
            "sensor nodes",
            "application capacity [%]",
            &line_series(|r| r.app_capacity),
        ),
    ));
    out.push((
        "energy_efficiency_vs_nodes.svg",
        plot::line_chart(
            "Energy efficiency vs density",
            "sensor nodes",
            "energy per correct packet [J]",
            &line_series(|r| r.energy_per_pkt_j),
        ),
    ));

    // Goodput gains over Buffered Aloha, averaged across the sweep.
    let mut groups = Vec::new();
    let mut frag_only = Vec::new();
    let mut one_session = Vec::new();
    let mut two_sessions = Vec::new();
    for fragments in 2..=5u8 {
        let frag = Strategy::Frag { fragments };
        let retx1 = Strategy::FragRetx {
            fragments,
            sessions: 1,
        };
        let retx2 = Strategy::FragRetx {
            fragments,
            sessions: 2,
        };
        let base_gain = sweep::mean_goodput_gain(summary, frag, Strategy::BufferedAloha);
        let gain1 = sweep::mean_goodput_gain(summary, retx1, frag);
        let gain2 = sweep::mean_goodput_gain(summary, retx2, retx1);
        if base_gain.is_none() && gain1.is_none() && gain2.is_none() {
            continue;
        }
        groups.push(format!("{fragments}"));
        frag_only.push(base_gain.unwrap_or(f64::NAN));
        one_session.push(gain1.unwrap_or(f64::NAN));
        two_sessions.push(gain2.unwrap_or(f64::NAN));
    }
    if !groups.is_empty() {
        let mut series = vec![("frag only vs Buffered Aloha".to_string(), frag_only)];
        if one_session.iter().any(|v| !v.is_nan()) {
            series.push(("+1st session".to_string(), one_session));
        }
        if two_sessions.iter().any(|v| !v.is_nan()) {
            series.push(("+2nd session".to_string(), two_sessions));
        }
        out.push((
            "goodput_gains.svg",
            plot::grouped_bar_chart(
                "Mean goodput gains by fragmentation degree",
                "fragments per packet",
                "gain [percentage points]",
                &groups,
                &series,
            ),
        ));
    }
    out
}

fn cmd_table1(args: TableArgs) -> Result<(), CliError> {
    let scenario = ScenarioArgs {
        config: args.config.clone(),
        nodes: None,
        strategy: None,
        fragments: None,
        sessions: None,
        seed: None,
    };
    let cfg = load_scenario(&scenario)?;
    let headers: Vec<u32> = args
        .header_bytes
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::usage(format!("bad header size {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    if args.max_fragments < 2 {
        return Err(CliError::usage("the table needs at least 2 fragments"));
    }
    let fragment_counts: Vec<u8> = (2..=args.max_fragments).collect();
    let rows = table::build_table(&cfg.radio, cfg.payload_bytes, &headers, &fragment_counts)?;
    println!(
        "header overhead for a {} B payload at SF{} / {} kHz",
        cfg.payload_bytes,
        cfg.radio.spreading_factor,
        cfg.radio.bandwidth_hz / 1000
    );
    print!("{}", table::render(&headers, &rows));
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.log)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.log.display())))?;
    let (cfg, report) = metrics::replay_text(&text)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.log.display())))?;
    println!("{}", csvout::RUNS_HEADER);
    println!("{}", csvout::run_row_csv(&cfg, &report));
    Ok(())
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::runtime(format!("{}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, content).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}
