use clap::Parser;
use fbt_service::cli::{run, Cli};

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    run(Cli::parse())
}
