//! Command-line front end: `generate`, `simulate`, `validate`, `dump-ir`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cemit::EmitMode;
use crate::error::{Error, Result};
use crate::matval::{Dtype, MatValue};
use crate::model::{generate, simulate, Compiled, GenerateOptions};
use crate::optimizer::OptOptions;
use crate::validate::{binary_inputs, kalman_trajectory, random_inputs, run_generated, compare};

#[derive(Parser, Debug)]
#[command(name = "blockgen", version, about = "Generate C from block-diagram models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the generated C file.
    Generate {
        model: PathBuf,
        /// Output path; defaults to the model path with a `.c` extension.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Emit::Runtime)]
        emit: Emit,
        #[command(flatten)]
        opt: OptFlags,
    },
    /// Simulate the model directly and print one row per step.
    Simulate {
        model: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Compare direct simulation with the generated program.
    Validate {
        model: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        #[command(flatten)]
        opt: OptFlags,
    },
    /// Print the optimized intermediate representation.
    DumpIr {
        model: PathBuf,
        #[command(flatten)]
        opt: OptFlags,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Emit {
    /// Entry point reading ports through the simulator runtime.
    Runtime,
    /// Self-contained unit; the entry takes port arrays.
    Freestanding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stimulus {
    /// f64 in [-10, 10], small integers, fair-coin bools.
    Uniform,
    /// Integers and bools restricted to 0 and 1.
    Binary,
    /// Range/bearing measurements of a moving target.
    Trajectory,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct OptFlags {
    /// Keep dead code and unused statics.
    #[arg(long)]
    pub no_dce: bool,
    /// Disable constant folding.
    #[arg(long)]
    pub no_fold: bool,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct RunFlags {
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Stimulus::Uniform)]
    pub stimulus: Stimulus,
}

impl OptFlags {
    fn options(self, mode: EmitMode) -> GenerateOptions {
        GenerateOptions {
            opt: OptOptions {
                dce: !self.no_dce,
                fold: !self.no_fold,
                ..OptOptions::default()
            },
            mode,
        }
    }
}

fn load(path: &Path) -> Result<Compiled> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    Compiled::from_text(&text)
}

fn stimuli(c: &Compiled, run: RunFlags) -> Vec<Vec<MatValue>> {
    match run.stimulus {
        Stimulus::Uniform => random_inputs(c.input_sigs(), run.steps, run.seed),
        Stimulus::Binary => binary_inputs(c.input_sigs(), run.steps, run.seed),
        Stimulus::Trajectory => kalman_trajectory(run.steps, run.seed),
    }
}

/// 17 significant digits for f64; integers and bools as integers.
pub fn format_value(dtype: Dtype, x: f64) -> String {
    if dtype == Dtype::F64 {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Run with `args` (program name first). Returns the exit status.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32> {
    let io = |e: std::io::Error| Error::Parse(format!("write failed: {e}"));
    match command {
        Command::Generate {
            model,
            out: path,
            emit,
            opt,
        } => {
            let c = load(&model)?;
            let mode = match emit {
                Emit::Runtime => EmitMode::Runtime,
                Emit::Freestanding => EmitMode::Freestanding,
            };
            let g = generate(&c, &opt.options(mode))?;
            let path = path.unwrap_or_else(|| model.with_extension("c"));
            std::fs::write(&path, &g.c)
                .map_err(|e| Error::Parse(format!("cannot write {}: {e}", path.display())))?;
            for w in &g.warnings {
                writeln!(out, "warning: {w}").map_err(io)?;
            }
            writeln!(
                out,
                "wrote {}: {} statics, {} functions, {} instructions",
                path.display(),
                g.program.statics.len(),
                g.program.functions.len(),
                g.program.instr_count()
            )
            .map_err(io)?;
            Ok(0)
        }
        Command::Simulate { model, run } => {
            let c = load(&model)?;
            let sigs = c.output_sigs();
            let mut header = vec!["step".to_string()];
            for (k, s) in sigs.iter().enumerate() {
                for i in 0..s.rows * s.cols {
                    header.push(format!("out{}[{i}]", k + 1));
                }
            }
            writeln!(out, "{}", header.join("\t")).map_err(io)?;
            for (step, outs) in simulate(&c, &stimuli(&c, run))?.iter().enumerate() {
                let mut row = vec![step.to_string()];
                for v in outs {
                    row.extend(v.data().iter().map(|&x| format_value(v.dtype(), x)));
                }
                writeln!(out, "{}", row.join("\t")).map_err(io)?;
            }
            Ok(0)
        }
        Command::Validate { model, run, opt } => {
            let c = load(&model)?;
            let inputs = stimuli(&c, run);
            let sim = simulate(&c, &inputs)?;
            let g = generate(&c, &opt.options(EmitMode::Runtime))?;
            let gen = run_generated(&c, &g, &inputs)?;
            let report = compare(&sim, &gen)?;
            writeln!(out, "{report}").map_err(io)?;
            Ok(if report.passed() { 0 } else { 1 })
        }
        Command::DumpIr { model, opt } => {
            let c = load(&model)?;
            let g = generate(&c, &opt.options(EmitMode::Fragment))?;
            write!(out, "{}", g.program).map_err(io)?;
            Ok(0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "blockgen", "validate", "m.json", "--steps", "5", "--seed", "3", "--no-dce", "--stimulus", "binary",
        ])
        .unwrap();
        match cli.command {
            Command::Validate { run, opt, .. } => {
                assert_eq!((run.steps, run.seed, run.stimulus), (5, 3, Stimulus::Binary));
                assert!(opt.no_dce && !opt.no_fold);
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["blockgen", "simulate", "m.json", "--steps", "-1"]).is_err());
    }

    #[test]
    fn value_format() {
        assert_eq!(format_value(Dtype::F64, 0.1), "1.0000000000000001e-1");
        assert_eq!(format_value(Dtype::I32, -3.0), "-3");
    }
}
