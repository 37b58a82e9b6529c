mod args;

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use tempfile::NamedTempFile;

use ssam_core::data::{self, ExperimentConfig};
use ssam_core::experiment::{self, Problem};
use ssam_core::validate::{self, Suite, ValidateOptions};
use ssam_core::{Error, Result, Trace};

use args::{Cli, Command};

/// A failed validation run, reported with its own exit code.
struct ChecksFailed(Vec<String>);

enum Failure {
    Core(Error),
    Checks(ChecksFailed),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("ssam: {e}");
            ExitCode::from(match e {
                Error::Usage(_) => 1,
                Error::Data(_) | Error::Io { .. } => 2,
            })
        }
        Err(Failure::Checks(ChecksFailed(names))) => {
            eprintln!("ssam: {} validation check(s) failed: {}", names.len(), names.join(", "));
            ExitCode::from(3)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { exp, out } => {
            let cfg = exp.resolve(&[])?;
            let outcome = experiment::run_experiment(&cfg)?;
            write_trace_atomic(&out, &outcome.trace)?;
            write_config(&out.with_extension("config"), &cfg)?;
            let summary = experiment::summarize(&outcome.trace, &cfg)?;
            print!("{}", summary.render());
        }
        Command::Compare { exp, out } => {
            let cfg = exp.resolve(&[])?;
            let cmp = experiment::compare(&cfg)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            write_trace_atomic(&out.join("ssam.csv"), &cmp.ssam.trace)?;
            write_config(&out.join("ssam.config"), &cmp.ssam_config)?;
            write_trace_atomic(&out.join("sgd.csv"), &cmp.sgd.trace)?;
            write_config(&out.join("sgd.config"), &cmp.sgd_config)?;
            let summary = cmp.render_summary();
            write_atomic(&out.join("summary.txt"), |w| w.write_all(summary.as_bytes()))?;
            print!("{summary}");
        }
        Command::Validate {
            suite,
            h,
            paths,
            seed,
            inject_fault,
            out,
        } => {
            let opts = ValidateOptions {
                suites: parse_suites(&suite)?,
                h,
                paths,
                inject_fault,
                seed,
                ..ValidateOptions::default()
            };
            let report = validate::validate(&opts)?;
            let text = report.render();
            print!("{text}");
            if let Some(path) = out {
                write_atomic(&path, |w| w.write_all(text.as_bytes()))?;
            }
            if !report.all_pass() {
                let names = report.failures().map(|c| c.key()).collect();
                return Err(Failure::Checks(ChecksFailed(names)));
            }
        }
        Command::Simulate {
            exp,
            horizon_t,
            step_h,
            out,
        } => {
            let cfg = exp.resolve(&[("T", &horizon_t), ("h", &step_h)])?;
            let problem = Problem::build(&cfg)?;
            let flow = problem.simulate(&cfg)?;
            write_trace_atomic(&out, &flow.to_trace(problem.reference.as_ref()))?;
            write_config(&out.with_extension("config"), &cfg)?;
            println!("steps = {}", flow.states.len() - 1);
            println!("max_violation = {:e}", flow.max_violation());
            println!("w_change = {:e}", flow.w_change());
            println!("descent_bound = {:e}", flow.descent_bound());
        }
        Command::Datagen { exp, out } => {
            let cfg = exp.resolve(&[])?;
            let teacher = data::synth_teacher(
                cfg.arch,
                cfg.samples,
                cfg.teacher_noise,
                cfg.box_half_width,
                cfg.seed,
            )?;
            let delimiter = u8::try_from(cfg.delimiter)
                .map_err(|_| Error::Usage("delimiter must be a single-byte character".into()))?;
            let tmp = temp_beside(&out)?;
            data::write_csv(tmp.path(), &teacher.dataset, delimiter)?;
            persist(tmp, &out)?;
            write_config(&out.with_extension("config"), &cfg)?;
            println!("rows = {}", teacher.dataset.len());
        }
    }
    Ok(())
}

fn parse_suites(names: &[String]) -> Result<Vec<Suite>> {
    let mut suites = Vec::new();
    for name in names {
        let name = name.trim();
        if name == "all" {
            return Ok(Suite::ALL.to_vec());
        }
        let suite: Suite = name.parse()?;
        if !suites.contains(&suite) {
            suites.push(suite);
        }
    }
    if suites.is_empty() {
        return Err(Error::Usage("no validation suite selected".into()));
    }
    Ok(suites)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn temp_beside(path: &Path) -> Result<NamedTempFile> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    NamedTempFile::new_in(&dir).map_err(io_err(&dir))
}

fn persist(tmp: NamedTempFile, path: &Path) -> Result<()> {
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

/// Writes through a temporary file in the target directory, so readers never
/// see a partial file.
fn write_atomic(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<&mut NamedTempFile>) -> std::io::Result<()>,
) -> Result<()> {
    let mut tmp = temp_beside(path)?;
    {
        let mut w = BufWriter::new(&mut tmp);
        body(&mut w).and_then(|_| w.flush()).map_err(io_err(path))?;
    }
    persist(tmp, path)
}

fn write_trace_atomic(path: &Path, trace: &Trace) -> Result<()> {
    write_atomic(path, |w| data::write_trace_to(w, trace))
}

fn write_config(path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let text = format!("# hash = {}\n{}", cfg.hash(), cfg.render());
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}
