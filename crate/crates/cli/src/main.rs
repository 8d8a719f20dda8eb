mod args;
mod commands;
mod error;
mod output;

use clap::Parser;

use crate::args::{Cli, Command};

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Account(a) => commands::account(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::TradeoffCsv(a) => commands::tradeoff_csv(a),
        Command::Verify(a) => commands::verify(a),
        Command::TrainDemo(a) => commands::train_demo(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
