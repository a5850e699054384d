use clap::Parser;

fn main() {
    peakreg_cli::init_worker_pool();
    let cli = peakreg_cli::Cli::parse();
    if let Err(err) = peakreg_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(peakreg_cli::exit_code_for(&err));
    }
}
