mod args;
mod commands;

use clap::Parser;

use args::{Cli, Command};

fn main() {
    // Usage errors exit with status 2 from inside `parse`.
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let c = &cli.common;
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(c, a),
        Command::Ingest(a) => commands::ingest(c, a),
        Command::AugmentPreview(a) => commands::augment_preview(c, a),
        Command::Train(a) => commands::train(c, a),
        Command::Features(a) => commands::features(c, a),
        Command::Probe(a) => commands::probe(c, a),
        Command::Report(a) => commands::report(c, a),
        Command::Sweep(a) => commands::sweep(c, a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
