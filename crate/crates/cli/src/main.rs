use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use slowread_cli::exit;
use slowread_cli::scenario::SCHEMA;
use slowread_cli::{parse_scenario, run_scenario, RunError};
use slowread_wire::{probe, serve, slow_read_attack, WireAttackConfig, WireError, WireServerConfig};

#[derive(Parser)]
#[command(name = "slowread", version, about = "Slow-read DoS testbed: deterministic simulator and loopback harness")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    /// Print the scenario JSON schema and exit.
    #[arg(long)]
    schema: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write events.log, metrics.csv, report.json and fingerprint.txt.
    Simulate {
        scenario: PathBuf,
        /// Overrides the scenario's seed; the report records the seed used.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory [default: out/<scenario name>]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Real-socket harness (loopback only unless overridden).
    #[command(subcommand)]
    Wire(WireCommand),
}

#[derive(Subcommand)]
enum WireCommand {
    /// Capacity-limited HTTP/1.0 server; prints one stats line per second.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, default_value_t = 50)]
        max_clients: u64,
        /// Seconds without write progress before a connection is dropped.
        #[arg(long, default_value_t = 10)]
        idle_timeout: u64,
        #[arg(long, default_value_t = 256 * 1024)]
        body_size: usize,
        /// Stop after this many seconds instead of running until killed.
        #[arg(long)]
        duration: Option<u64>,
        #[command(flatten)]
        unsafe_flag: UnsafeFlag,
    },
    /// Slow-read client; prints a JSON summary line.
    Attack {
        #[arg(long)]
        target: SocketAddr,
        #[arg(long, default_value_t = 60)]
        count: u64,
        /// SO_RCVBUF requested before connect, bytes.
        #[arg(long, default_value_t = 1024)]
        recv_buffer: usize,
        /// Paced application read rate, bytes/s.
        #[arg(long, default_value_t = 64)]
        read_rate: u64,
        /// Seconds to hold the connections.
        #[arg(long, default_value_t = 20)]
        hold: u64,
        #[command(flatten)]
        unsafe_flag: UnsafeFlag,
    },
    /// One request with a 2 s deadline; prints a JSON result line.
    Probe {
        #[arg(long)]
        target: SocketAddr,
        #[command(flatten)]
        unsafe_flag: UnsafeFlag,
    },
}

#[derive(Args)]
struct UnsafeFlag {
    /// Allow non-loopback addresses.
    #[arg(long = "unsafe-allow-non-loopback")]
    allow: bool,
}

fn wire_exit(e: WireError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        WireError::NonLoopbackRefused(_) => ExitCode::from(exit::INVALID as u8),
        WireError::Bind { .. } | WireError::Io(_) => ExitCode::from(exit::IO as u8),
    }
}

fn simulate(path: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> ExitCode {
    let mut scenario = match parse_scenario(&path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("invalid scenario {}: {e}", path.display());
            return ExitCode::from(exit::INVALID as u8);
        }
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let out = out.unwrap_or_else(|| PathBuf::from("out").join(&scenario.name));
    match run_scenario(&scenario, &out) {
        Ok(sim) => {
            println!("{}  {}", sim.fingerprint, out.display());
            ExitCode::SUCCESS
        }
        Err(RunError::Workload(e)) => {
            eprintln!("invalid scenario {}: {e}", path.display());
            ExitCode::from(exit::INVALID as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::IO as u8)
        }
    }
}

fn wire(cmd: WireCommand) -> ExitCode {
    match cmd {
        WireCommand::Serve { listen, max_clients, idle_timeout, body_size, duration, unsafe_flag } => {
            let cfg = WireServerConfig {
                listen,
                max_clients,
                idle_timeout: Duration::from_secs(idle_timeout),
                body_size,
                allow_non_loopback: unsafe_flag.allow,
            };
            let stop = Arc::new(AtomicBool::new(false));
            if let Some(secs) = duration {
                let stop = Arc::clone(&stop);
                std::thread::spawn(move || {
                    std::thread::sleep(Duration::from_secs(secs));
                    stop.store(true, Ordering::SeqCst);
                });
            }
            match serve(cfg, &stop, std::io::stdout()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => wire_exit(e),
            }
        }
        WireCommand::Attack { target, count, recv_buffer, read_rate, hold, unsafe_flag } => {
            let cfg = WireAttackConfig {
                target,
                count,
                recv_buffer,
                read_rate,
                hold: Duration::from_secs(hold),
                allow_non_loopback: unsafe_flag.allow,
            };
            match slow_read_attack(&cfg) {
                Ok(summary) => {
                    println!("{}", summary.to_json_line());
                    ExitCode::SUCCESS
                }
                Err(e) => wire_exit(e),
            }
        }
        WireCommand::Probe { target, unsafe_flag } => match probe(target, unsafe_flag.allow) {
            Ok(result) => {
                println!("{}", result.to_json_line());
                ExitCode::SUCCESS
            }
            Err(e) => wire_exit(e),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.schema {
        print!("{SCHEMA}");
        return ExitCode::SUCCESS;
    }
    match cli.command {
        Some(Command::Simulate { scenario, seed, out }) => simulate(scenario, seed, out),
        Some(Command::Wire(cmd)) => wire(cmd),
        None => {
            eprintln!("nothing to do; see --help");
            ExitCode::from(exit::INVALID as u8)
        }
    }
}
