use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use geolayer::sim::{self, Config, Scenario, SimError, Strategy};

/// Layered geo-distributed graph placement simulator.
#[derive(Parser)]
#[command(name = "geolayer", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write the report CSVs.
    Run {
        config: PathBuf,
        /// Output directory; falls back to $GEOLAYER_OUT, then ./report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the strategy named in the config.
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Also write the layer hierarchy to layers.txt.
        #[arg(long)]
        dump_layers: bool,
        /// Also write per-site steady heat to heat.csv.
        #[arg(long)]
        dump_heat: bool,
    },
    /// Print metrics of report B normalised to report A.
    Compare { a: PathBuf, b: PathBuf },
    /// Solve the scenario exactly and print the gap of the configured strategy.
    Oracle { config: PathBuf },
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("GEOLAYER_OUT").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("report"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), SimError> = match cli.cmd {
        Cmd::Run { config, out, strategy, dump_layers, dump_heat } => {
            let dir = out_dir(out);
            sim::run_to_dir(&config, strategy, &dir, dump_layers, dump_heat).map(|rep| {
                println!("{} total {} mean latency {:.3} ms -> {}", rep.strategy, rep.cost.total, rep.mean_latency() * 1000.0, dir.display());
            })
        }
        Cmd::Compare { a, b } => sim::compare(&a, &b).map(|rows| {
            let mut text = String::from("metric,a,b,ratio\n");
            for r in rows {
                text.push_str(&format!("{},{},{},{}\n", r.metric, r.a, r.b, r.ratio));
            }
            // a closed pipe downstream is not our failure
            let _ = std::io::stdout().write_all(text.as_bytes());
        }),
        Cmd::Oracle { config } => Config::load(&config).and_then(|cfg| {
            let strategy = cfg.strategy;
            let sc = Scenario::build(cfg)?;
            let rep = sim::run(&sc, strategy)?;
            let g = sim::oracle_gap(&sc, rep.cost.total)?;
            println!("cost,optimum,gap_percent,leaves");
            println!("{},{},{},{}", g.cost, g.optimum, g.gap_percent, g.leaves);
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
