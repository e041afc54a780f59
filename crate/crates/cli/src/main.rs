//! `smilansky`: spectra, sweeps, thresholds, eigenfunctions, resonance
//! trajectories and scattering tables as CSV or JSON.
//!
//! Exit status: 0 success, 2 usage error, 3 solver non-convergence,
//! 4 domain error, 1 I/O failure. Failures print one JSON object on stderr.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use smilansky::export::{self, Metadata, ThresholdRow};
use smilansky::field::{self, AxisRange, GridSpec};
use smilansky::resonance::{self, ResonanceOptions, SearchBox};
use smilansky::scattering;
use smilansky::secular::SheetIndex;
use smilansky::spectrum::{self, SolverOptions};
use smilansky::Error;

/// Environment variable that sets the worker-thread count.
const WORKERS_ENV: &str = "SMILANSKY_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "smilansky",
    version,
    about = "Numerics for the Smilansky Hamiltonian"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct Output {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args)]
struct Solver {
    /// Initial truncation of the channel basis.
    #[arg(long)]
    truncation: Option<usize>,
    /// Eigenvalue tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

impl Solver {
    fn options(&self) -> SolverOptions {
        let mut o = SolverOptions::default();
        if let Some(n) = self.truncation {
            o.initial_truncation = n;
            o.max_truncation = o.max_truncation.max(n);
        }
        if let Some(t) = self.tol {
            o.eps_tolerance = t;
        }
        o
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Discrete eigenvalues at one coupling.
    Spectrum {
        #[arg(long)]
        lambda: f64,
        #[command(flatten)]
        solver: Solver,
        #[command(flatten)]
        output: Output,
    },
    /// Eigenvalues over a range of couplings.
    Sweep {
        #[arg(long)]
        lambda_min: f64,
        #[arg(long)]
        lambda_max: f64,
        #[arg(long)]
        steps: usize,
        /// Space the couplings uniformly in ln(√2 − λ).
        #[arg(long)]
        log_near_critical: bool,
        #[command(flatten)]
        solver: Solver,
        #[command(flatten)]
        output: Output,
    },
    /// Couplings at which the k-th eigenvalue appears, k = 2..k_max.
    Thresholds {
        #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
        k_max: u32,
        #[command(flatten)]
        solver: Solver,
        #[command(flatten)]
        output: Output,
    },
    /// Eigenfunction sampled on a grid, with its nodal domain count.
    Eigenfunction {
        #[arg(long)]
        lambda: f64,
        /// 1-based index of the eigenvalue.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        mode_index: u32,
        #[arg(long, default_value_t = -5.0, allow_negative_numbers = true)]
        x_min: f64,
        #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
        x_max: f64,
        #[arg(long, default_value_t = 400)]
        x_points: usize,
        #[arg(long, default_value_t = -12.0, allow_negative_numbers = true)]
        y_min: f64,
        #[arg(long, default_value_t = 6.0, allow_negative_numbers = true)]
        y_max: f64,
        #[arg(long, default_value_t = 400)]
        y_points: usize,
        #[command(flatten)]
        solver: Solver,
        #[command(flatten)]
        output: Output,
    },
    /// Resonance pole trajectory on a non-physical sheet.
    Trajectory {
        #[arg(long)]
        sheet: u32,
        /// Threshold the pole splits off from.
        #[arg(
            long,
            conflicts_with = "emergent",
            required_unless_present = "emergent"
        )]
        m: Option<u32>,
        /// Scan for poles that do not come from a threshold.
        #[arg(long)]
        emergent: bool,
        #[arg(long)]
        lambda_min: f64,
        #[arg(long)]
        lambda_max: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        re_min: f64,
        #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
        re_max: f64,
        #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
        im_min: f64,
        #[arg(long, default_value_t = -1e-6, allow_negative_numbers = true)]
        im_max: f64,
        /// Initial truncation for pole refinement.
        #[arg(long)]
        truncation: Option<usize>,
        #[command(flatten)]
        output: Output,
    },
    /// Reflection and transmission amplitudes at real energy k².
    Scatter {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        k2: f64,
        #[arg(long, default_value_t = 32)]
        truncation: usize,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Solver(Error),
    Io(io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Io(_) => 1,
            Failure::Solver(e) => solver_exit_code(e),
        }
    }

    fn report(&self) -> serde_json::Value {
        let (kind, message) = match self {
            Failure::Usage(m) => ("usage", m.clone()),
            Failure::Io(e) => ("io", e.to_string()),
            Failure::Solver(e) => (e.kind(), e.to_string()),
        };
        serde_json::json!({ "error": kind, "message": message, "exit_code": self.exit_code() })
    }
}

fn solver_exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence(_)
        | Error::NotARoot { .. }
        | Error::Escaped(_)
        | Error::ContourAmbiguity(_) => 3,
        Error::TrackingLost { source, .. } => solver_exit_code(source),
        _ => 4,
    }
}

fn open_output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn base_metadata(command: &str) -> Metadata {
    let mut m = Metadata::new();
    m.insert(
        "tool".into(),
        format!("smilansky {}", env!("CARGO_PKG_VERSION")),
    );
    m.insert("command".into(), command.into());
    m
}

fn put(m: &mut Metadata, key: &str, value: f64) {
    m.insert(key.into(), export::fmt_f64(value));
}

fn echo<T: serde::Serialize>(m: &mut Metadata, key: &str, value: &T) {
    m.insert(
        key.into(),
        serde_json::to_string(value).expect("options serialize"),
    );
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Spectrum {
            lambda,
            solver,
            output,
        } => {
            let opts = solver.options();
            let points = spectrum::find_eigenvalues(lambda, &opts)?;
            let mut meta = base_metadata("spectrum");
            put(&mut meta, "lambda", lambda);
            echo(&mut meta, "solver_options", &opts);
            let mut w = open_output(&output.out)?;
            match output.format {
                Format::Csv => export::write_spectrum_csv(&mut w, &meta, &points)?,
                Format::Json => export::write_json(&mut w, &meta, &points)?,
            }
            w.flush()?;
        }
        Command::Sweep {
            lambda_min,
            lambda_max,
            steps,
            log_near_critical,
            solver,
            output,
        } => {
            let opts = solver.options();
            opts.validate()?;
            let grid = spectrum::sweep_grid(lambda_min, lambda_max, steps, log_near_critical)?;
            let records = spectrum::sweep(&grid, &opts);
            let mut meta = base_metadata("sweep");
            put(&mut meta, "lambda_min", lambda_min);
            put(&mut meta, "lambda_max", lambda_max);
            meta.insert("steps".into(), steps.to_string());
            meta.insert("log_near_critical".into(), log_near_critical.to_string());
            echo(&mut meta, "solver_options", &opts);
            let mut w = open_output(&output.out)?;
            match output.format {
                Format::Csv => export::write_sweep_csv(&mut w, &meta, &records)?,
                Format::Json => export::write_json(&mut w, &meta, &records)?,
            }
            w.flush()?;
        }
        Command::Thresholds {
            k_max,
            solver,
            output,
        } => {
            let opts = solver.options();
            let rows = (2..=k_max as usize)
                .map(|k| {
                    spectrum::appearance_threshold(k, &opts)
                        .map(|lambda| ThresholdRow { k, lambda })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut meta = base_metadata("thresholds");
            meta.insert("k_max".into(), k_max.to_string());
            echo(&mut meta, "solver_options", &opts);
            let mut w = open_output(&output.out)?;
            match output.format {
                Format::Csv => export::write_thresholds_csv(&mut w, &meta, &rows)?,
                Format::Json => export::write_json(&mut w, &meta, &rows)?,
            }
            w.flush()?;
        }
        Command::Eigenfunction {
            lambda,
            mode_index,
            x_min,
            x_max,
            x_points,
            y_min,
            y_max,
            y_points,
            solver,
            output,
        } => {
            let opts = solver.options();
            let grid = GridSpec {
                x: AxisRange::new(x_min, x_max, x_points)?,
                y: AxisRange::new(y_min, y_max, y_points)?,
            };
            let points = spectrum::find_eigenvalues(lambda, &opts)?;
            let k = mode_index as usize;
            let point = points.get(k - 1).ok_or_else(|| {
                Error::Domain(format!(
                    "mode index {k} exceeds the {} eigenvalue(s) at lambda = {lambda}",
                    points.len()
                ))
            })?;
            let values = field::evaluate_field(point, &grid)?;
            let zero_band = field::default_zero_band(&values);
            let nodal = field::nodal_domain_count(&values, zero_band).ok();
            let ys = grid.y.coordinates();
            let axis = field::axis_restriction(point, &ys)?;

            let mut meta = base_metadata("eigenfunction");
            put(&mut meta, "lambda", lambda);
            meta.insert("mode_index".into(), k.to_string());
            put(&mut meta, "energy", point.energy);
            put(&mut meta, "zero_band", zero_band);
            meta.insert(
                "nodal_domains".into(),
                nodal.map_or("undetermined".into(), |n| n.to_string()),
            );
            echo(&mut meta, "grid", &grid);
            echo(&mut meta, "solver_options", &opts);
            let mut w = open_output(&output.out)?;
            match output.format {
                Format::Csv => export::write_field_csv(&mut w, &meta, &values)?,
                Format::Json => {
                    let header = export::FieldHeader {
                        metadata: meta,
                        lambda,
                        mode_index: k,
                        energy: point.energy,
                        x: grid.x,
                        y: grid.y,
                        nodal_domains: nodal,
                        zero_band,
                        axis_restriction: ys.into_iter().zip(axis).collect(),
                    };
                    export::write_field_matrix(&mut w, &header, &values)?
                }
            }
            w.flush()?;
        }
        Command::Trajectory {
            sheet,
            m,
            emergent,
            lambda_min,
            lambda_max,
            step,
            re_min,
            re_max,
            im_min,
            im_max,
            truncation,
            output,
        } => {
            let sheet = SheetIndex::new(sheet)?;
            let mut opts = ResonanceOptions::default();
            if let Some(n) = truncation {
                opts.initial_truncation = n;
                opts.max_truncation = opts.max_truncation.max(n);
            }
            let mut meta = base_metadata("trajectory");
            meta.insert("sheet".into(), sheet.to_string());
            put(&mut meta, "lambda_min", lambda_min);
            put(&mut meta, "lambda_max", lambda_max);
            put(&mut meta, "step", step);
            echo(&mut meta, "resonance_options", &opts);
            let mut w = open_output(&output.out)?;
            if emergent {
                if !(step > 0.0) || lambda_max < lambda_min {
                    return Err(Failure::Usage(
                        "emergent scan needs step > 0 and lambda_max >= lambda_min".into(),
                    ));
                }
                let search = SearchBox::new(re_min, re_max, im_min, im_max)?;
                let n = ((lambda_max - lambda_min) / step).round() as usize;
                let grid: Vec<f64> = (0..=n).map(|i| lambda_min + i as f64 * step).collect();
                let found = resonance::detect_emergent_poles(sheet, &grid, &search, &opts)?;
                echo(&mut meta, "search_box", &search);
                for (i, e) in found.iter().enumerate() {
                    put(
                        &mut meta,
                        &format!("emergence_{}", i + 1),
                        e.emergence_lambda,
                    );
                }
                match output.format {
                    Format::Csv => {
                        let t: Vec<_> = found.iter().map(|e| e.trajectory.clone()).collect();
                        export::write_trajectory_csv(&mut w, &meta, &t)?
                    }
                    Format::Json => export::write_json(&mut w, &meta, &found)?,
                }
            } else {
                let m = m.expect("clap enforces --m without --emergent");
                meta.insert("m".into(), m.to_string());
                let t =
                    resonance::trace_trajectory(sheet, m, (lambda_min, lambda_max), step, &opts)?;
                match output.format {
                    Format::Csv => {
                        export::write_trajectory_csv(&mut w, &meta, std::slice::from_ref(&t))?
                    }
                    Format::Json => export::write_json(&mut w, &meta, &t)?,
                }
            }
            w.flush()?;
        }
        Command::Scatter {
            lambda,
            k2,
            truncation,
            output,
        } => {
            let data = scattering::solve_reflection(lambda, k2, truncation)?;
            let mut meta = base_metadata("scatter");
            put(&mut meta, "lambda", lambda);
            put(&mut meta, "k_squared", k2);
            meta.insert("open_channels".into(), data.open_channels.to_string());
            put(&mut meta, "unitarity_defect", data.unitarity_defect);
            put(&mut meta, "reciprocity_defect", data.reciprocity_defect);
            meta.insert("truncation_used".into(), data.truncation_used.to_string());
            let mut w = open_output(&output.out)?;
            match output.format {
                Format::Csv => export::write_scattering_csv(&mut w, &meta, &data)?,
                Format::Json => export::write_json(&mut w, &meta, &data)?,
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn configure_workers() -> Result<(), Failure> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Failure::Usage(format!(
            "{WORKERS_ENV} must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn fail(f: Failure) -> ExitCode {
    eprintln!("{}", f.report());
    ExitCode::from(f.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail(Failure::Usage(e.to_string()));
        }
    };
    if let Err(f) = configure_workers() {
        return fail(f);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(f),
    }
}
