//! Batch-mode SPICE engine.
//!
//! Usage: `minispice -b <deck.cir> -r <output.raw>`
//!
//! Reads a deck, runs its analysis directives, writes an ngspice-style
//! ASCII raw file, and prints a run log to stdout. Exit code 0 means the
//! deck was executed (individual analyses may still have failed; failures
//! appear as `ERROR:` lines in the log). Exit code 1 means the deck could
//! not be read or parsed at all.

use analogforge::engine::{run_deck, write_ascii_rawfile};
use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut deck_path = None;
    let mut raw_path = None;
    let mut i = 0;
    while i < args.len() {
        match args[i].as_str() {
            "-b" => {
                deck_path = args.get(i + 1).cloned();
                i += 2;
            }
            "-r" => {
                raw_path = args.get(i + 1).cloned();
                i += 2;
            }
            "--version" => {
                println!("minispice {}", env!("CARGO_PKG_VERSION"));
                return ExitCode::SUCCESS;
            }
            other => {
                if deck_path.is_none() && !other.starts_with('-') {
                    deck_path = Some(other.to_string());
                    i += 1;
                } else {
                    eprintln!("minispice: unexpected argument {other}");
                    return ExitCode::FAILURE;
                }
            }
        }
    }

    let Some(deck_path) = deck_path else {
        eprintln!("usage: minispice -b <deck.cir> -r <output.raw>");
        return ExitCode::FAILURE;
    };
    let deck = match std::fs::read_to_string(&deck_path) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("minispice: cannot read {deck_path}: {e}");
            return ExitCode::FAILURE;
        }
    };

    match run_deck(&deck) {
        Ok(out) => {
            print!("{}", out.log);
            if let Some(raw_path) = raw_path {
                let raw = write_ascii_rawfile(&out);
                if let Err(e) = std::fs::write(&raw_path, raw) {
                    eprintln!("minispice: cannot write {raw_path}: {e}");
                    return ExitCode::FAILURE;
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("minispice: {e}");
            ExitCode::FAILURE
        }
    }
}
