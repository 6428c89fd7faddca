mod commands;
mod job;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Outcome, EXIT_FAILURE};
use job::JobFile;

/// Factor time-delay plants, split delayed transfer functions into FIR and
/// rational parts, and assemble FIR-form controllers from job files.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Print JSON instead of the text report.
    #[arg(long, global = true)]
    json: bool,
    /// Do not write CSV files next to the job file.
    #[arg(long, global = true)]
    no_csv: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Classify quasi-polynomials and locate their right half-plane roots.
    Analyze { job: PathBuf },
    /// Inner/outer factorization of a plant.
    Factor { job: PathBuf },
    /// Split a delayed rational function into rational and FIR parts.
    Phi { job: PathBuf },
    /// Assemble the controller in FIR form and check printed FIR blocks.
    Controller { job: PathBuf },
}

fn header() -> String {
    format!("qpfact {}", env!("CARGO_PKG_VERSION"))
}

fn run(cli: &Cli) -> Result<(Outcome, &'static str, &Path), CliError> {
    let (name, path) = match &cli.command {
        Command::Analyze { job } => ("analyze", job),
        Command::Factor { job } => ("factor", job),
        Command::Phi { job } => ("phi", job),
        Command::Controller { job } => ("controller", job),
    };
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Job(job::JobError::Syntax {
            line: 0,
            msg: format!("cannot read {}: {e}", path.display()),
        })
    })?;
    let job = JobFile::parse(&text)?;
    let outcome = match name {
        "analyze" => commands::analyze(&job)?,
        "factor" => commands::factor(&job)?,
        "phi" => commands::phi(&job)?,
        _ => commands::controller(&job)?,
    };
    Ok((outcome, name, path))
}

fn write_files(outcome: &Outcome, job: &Path) -> std::io::Result<Vec<PathBuf>> {
    let stem = job.file_stem().and_then(|s| s.to_str()).unwrap_or("job");
    let dir = job.parent().unwrap_or(Path::new("."));
    let mut written = Vec::new();
    for (suffix, content) in &outcome.files {
        let path = dir.join(format!("{stem}{suffix}"));
        std::fs::write(&path, content)?;
        written.push(path);
    }
    Ok(written)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (outcome, name, path) = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE as u8);
        }
    };
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let mut written = Vec::new();
    if !cli.no_csv {
        match write_files(&outcome, path) {
            Ok(w) => written = w,
            Err(e) => {
                eprintln!("error: writing CSV output: {e}");
                return ExitCode::from(EXIT_FAILURE as u8);
            }
        }
    }
    if cli.json {
        let files: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
        let doc = serde_json::json!({
            "version": header(),
            "command": name,
            "exit_code": outcome.code,
            "result": outcome.json,
            "files": files,
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("JSON values serialize"));
    } else {
        println!("{}", header());
        print!("{}", outcome.text);
        for p in &written {
            println!("wrote {}", p.display());
        }
    }
    ExitCode::from(outcome.code as u8)
}
