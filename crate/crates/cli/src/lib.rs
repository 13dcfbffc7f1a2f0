//! The `nunet` command line: argument parsing, run directories, charts and the named
//! experiments, usable in-process through [`run`].

pub mod args;
pub mod commands;
pub mod experiments;
pub mod plots;
pub mod run;

use anyhow::Result;
use clap::Parser;

use args::{Cli, Command};
use commands::UsageError;
use experiments::{ExperimentRegistry, ProtocolInputs};

/// Parses `args` (without the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv =
        std::iter::once(std::ffi::OsString::from("nunet")).chain(args.into_iter().map(Into::into));
    let cli = Cli::try_parse_from(argv).map_err(|e| UsageError(e.to_string()))?;
    dispatch(cli)
}

/// 2 for usage errors, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        2
    } else {
        1
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    commands::set_quiet(cli.quiet);
    match cli.command {
        Command::Prepare { data, out } => {
            commands::cmd_prepare(&data, &out)?;
        }
        Command::Cv {
            data,
            arch,
            train,
            out,
        } => {
            commands::cmd_cv(&data, &arch, &train, &out)?;
        }
        Command::Ablate {
            variants,
            data,
            widths,
            train,
            out,
        } => {
            commands::cmd_ablate(&variants, &data, &widths, &train, &out)?;
        }
        Command::DepthSweep {
            depths,
            data,
            widths,
            train,
            out,
        } => {
            commands::cmd_depth_sweep(&depths, &data, &widths, &train, &out)?;
        }
        Command::Complexity {
            variants,
            input_size,
            widths,
            out,
        } => {
            commands::cmd_complexity(&variants, input_size, &widths, &out)?;
        }
        Command::Eval { runs, table, out } => {
            commands::cmd_eval(&runs, &table, &out)?;
        }
        Command::External {
            checkpoints,
            data,
            train,
            table,
            out,
        } => {
            commands::cmd_external(&checkpoints, &data, &train, &table, &out)?;
        }
        Command::Compare { runs, table, out } => {
            commands::cmd_compare(&runs, &table, &out)?;
        }
        Command::Protocol {
            experiment,
            list,
            data_root,
            external_root,
            include_normal,
            seed,
            layout,
            widths,
            train,
            table,
            out,
        } => {
            let registry = ExperimentRegistry::with_defaults();
            if list {
                commands::say(&registry.listing());
                return Ok(());
            }
            let name = experiment
                .ok_or_else(|| commands::usage("experiment name required (see --list)"))?;
            let inputs = ProtocolInputs {
                data_root: data_root.as_deref(),
                external_root: external_root.as_deref(),
                include_normal,
                seed,
                layout: &layout,
                widths: &widths,
                train: &train,
                table: &table,
                out: &out,
            };
            let path = registry.get(&name)?.run(&inputs)?;
            commands::say(&format!("results in {}\n", path.display()));
        }
        Command::MakeToy {
            out,
            layout,
            count,
            size,
            seed,
        } => {
            commands::cmd_make_toy(&out, &layout, count, size, seed)?;
        }
    }
    Ok(())
}
