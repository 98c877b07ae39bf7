//! Library surface of the `ddp` binary: clap definitions, subcommand
//! implementations, and fixture generation. Kept as a lib so integration
//! tests can drive commands without spawning processes.

pub mod commands;
pub mod fixture;
pub mod opts;

use ddp_core::error::Result;
use opts::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fixture(args) => {
            let arch: fixture::FixtureArch = args.arch.parse()?;
            fixture::generate_fixture(arch, &args.out, args.images, args.seed)
        }
        Command::Decompose(args) => commands::decompose::run(args),
        Command::Spectrum(args) => commands::spectrum::run(args),
        Command::Alpha(args) => commands::alpha::run(args),
        Command::Profile(args) => commands::profile::run(args),
        Command::Hypergraph(args) => commands::hypergraph::run(args),
        Command::Exemplars(args) => commands::exemplars::run(args),
        Command::DecomposeImage(args) => commands::decompose_image::run(args),
    }
}
