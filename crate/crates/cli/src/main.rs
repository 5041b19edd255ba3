use clap::Parser;
use flexscatter_cli::command::Cli;

fn main() {
    match flexscatter_cli::dispatch(Cli::parse()) {
        Ok(m) => println!("{}: {} outputs", m.command.name(), m.outputs.len()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
