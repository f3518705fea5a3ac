use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use deform_funnel::paced::TICK_PERIOD;
use deform_funnel::{exit_code, load_config, Context, Scenario, SummaryRow};

/// Deformation-Jacobian control experiments on a simulated compliant hand.
#[derive(Debug, Parser)]
#[command(name = "deform-funnel", version)]
struct Cli {
    scenario: Scenario,
    /// Scenario configuration (TOML); an empty file uses every default.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Sleep one controller period after every actuation command.
    #[arg(long)]
    paced: bool,
}

fn print_rows(rows: &[SummaryRow]) {
    for r in rows {
        let status = if r.success { "ok" } else { "FAILED" };
        let failure = if r.failure.is_empty() { String::new() } else { format!(" ({})", r.failure) };
        println!("{} {} {status}{failure} ticks={} probes={}", r.scenario, r.key, r.ticks, r.probes);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let fail = |msg: String, rows: Option<Vec<SummaryRow>>| {
        eprintln!("deform-funnel: {msg}");
        if let Some(rows) = rows {
            print_rows(&rows);
        }
        ExitCode::from(2)
    };
    let config = match load_config(&cli.config, cli.seed) {
        Ok(c) => c,
        Err(e) => {
            // Still leave an outcome row behind.
            let ctx = Context::new(Default::default(), &cli.out);
            let row = SummaryRow::failed(cli.scenario.id(), "scenario", "error").with_note("error", e.to_string().replace(';', ","));
            let written = std::fs::create_dir_all(&cli.out)
                .map_err(Into::into)
                .and_then(|()| deform_funnel::report::write_summary(&ctx.out.join("summary.csv"), &[row]));
            if let Err(w) = written {
                eprintln!("deform-funnel: could not write summary: {w}");
            }
            return fail(e.to_string(), None);
        }
    };
    let mut ctx = Context::new(config, &cli.out);
    if cli.paced {
        ctx.pace = Some(TICK_PERIOD);
    }
    match deform_funnel::execute(cli.scenario, &ctx) {
        Ok(rows) => {
            print_rows(&rows);
            ExitCode::from(exit_code(&rows) as u8)
        }
        Err(e) => fail(e.to_string(), None),
    }
}
