mod record;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use maxperim::codes::{self, Code, QuarterCode};
use maxperim::geometry;
use maxperim::mp::{self, DEFAULT_PRECISION_BITS, DEFAULT_TOL_BITS};
use maxperim::phase1::{self, Arithmetic, Suffix};
use maxperim::phase2::Variant;
use maxperim::pipeline::{
    self, EnumerateOptions, IntegerPolynomial, SolveOptions, Timings, DEFAULT_ENUMERATION_CAP,
};
use rug::Float;
use serde_json::json;

use record::{RecordError, SolutionRecord};

#[derive(Parser)]
#[command(name = "maxperim", version, about = "Small polygons of maximum perimeter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct NewtonArgs {
    #[arg(long, default_value_t = DEFAULT_PRECISION_BITS)]
    prec_bits: u32,
    #[arg(long, default_value_t = DEFAULT_TOL_BITS)]
    tol_bits: u32,
    /// double-factor | schur | minres | simplified-schur | simplified-double
    /// [default: schur below n = 32, simplified-schur from n = 32]
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long, default_value_t = 64)]
    max_iter: usize,
}

#[derive(Subcommand)]
enum Command {
    /// List canonical codes of an n-gon, one full code per line.
    Codes {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        count_only: bool,
    },
    /// Subset-sum search for the best symmetric quarter code (JSON lines).
    Phase1 {
        #[arg(long)]
        n: usize,
        /// int128 | float
        #[arg(long, default_value = "int128")]
        mode: Arithmetic,
        /// Fix the trailing selection bits, e.g. 01.
        #[arg(long, conflicts_with = "jobs")]
        suffix: Option<Suffix>,
        /// Split on 2^suffix-bits suffixes over this many threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = 4)]
        suffix_bits: u32,
        /// Report the k best selections.
        #[arg(long, default_value_t = 1, conflicts_with = "jobs")]
        top: usize,
    },
    /// Newton refinement for a fixed code.
    Phase2 {
        /// First half c_1..c_n of the code, or a file containing it.
        #[arg(long, required_unless_present = "quarter", allow_hyphen_values = true)]
        code: Option<String>,
        /// Quarter code c_1..c_(n/2) of an axially symmetric code.
        #[arg(long, conflicts_with = "code", allow_hyphen_values = true)]
        quarter: Option<String>,
        #[command(flatten)]
        newton: NewtonArgs,
    },
    /// Phase I, Phase II and verification for n = 2^s.
    Solve {
        #[arg(long)]
        n: usize,
        /// Skip Phase I and use this quarter code (required for n = 128).
        #[arg(long, allow_hyphen_values = true)]
        quarter_code: Option<String>,
        #[arg(long, default_value = "int128")]
        mode: Arithmetic,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        newton: NewtonArgs,
    },
    /// Solve every canonical code and rank the local maxima (JSON lines).
    EnumerateSolve {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Allow n above the default cap; set MAXPERIM_CHECKPOINT_DIR to resume.
        #[arg(long)]
        allow_large: bool,
        #[command(flatten)]
        newton: NewtonArgs,
    },
    /// Check whether a value is a root of an integer polynomial.
    Verify {
        /// q8, E8, or a file of "degree coefficient" lines.
        #[arg(long)]
        poly: String,
        #[arg(long, required_unless_present = "value_from", conflicts_with = "value_from", allow_hyphen_values = true)]
        value: Option<String>,
        /// Take the perimeter from a solution record.
        #[arg(long)]
        value_from: Option<PathBuf>,
        /// Evaluate at the square of the value.
        #[arg(long)]
        square: bool,
        /// Newton-refine the value as a root before checking.
        #[arg(long)]
        refine: bool,
        #[arg(long)]
        prec_bits: Option<u32>,
        #[arg(long)]
        tol_bits: Option<u32>,
    },
    /// Re-render a solution record.
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Svg,
    Tikz,
}

type Outcome = Result<(), String>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn usage(msg: impl std::fmt::Display) -> ! {
    use clap::CommandFactory;
    let mut cmd = Cli::command();
    cmd.error(clap::error::ErrorKind::ValueValidation, msg).exit()
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Codes { n, count_only } => cmd_codes(n, count_only),
        Command::Phase1 { n, mode, suffix, jobs, suffix_bits, top } => {
            cmd_phase1(n, mode, suffix, jobs, suffix_bits, top)
        }
        Command::Phase2 { code, quarter, newton } => cmd_phase2(code, quarter, &newton),
        Command::Solve { n, quarter_code, mode, jobs, newton } => {
            cmd_solve(n, quarter_code, mode, jobs, &newton)
        }
        Command::EnumerateSolve { n, jobs, allow_large, newton } => {
            cmd_enumerate(n, jobs, allow_large, &newton)
        }
        Command::Verify { poly, value, value_from, square, refine, prec_bits, tol_bits } => {
            cmd_verify(&poly, value, value_from, square, refine, prec_bits, tol_bits)
        }
        Command::Export { input, format, output } => cmd_export(&input, format, output),
    }
}

fn cmd_codes(n: usize, count_only: bool) -> Outcome {
    if count_only {
        let c = codes::count_codes(n).unwrap_or_else(|e| usage(e));
        println!("{c}");
        return Ok(());
    }
    let stream = codes::enumerate_codes(n).unwrap_or_else(|e| usage(e));
    let mut out = std::io::BufWriter::new(std::io::stdout().lock());
    for code in stream {
        use std::io::Write;
        writeln!(out, "{}", code.full_string()).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn cmd_phase1(
    n: usize,
    mode: Arithmetic,
    suffix: Option<Suffix>,
    jobs: usize,
    suffix_bits: u32,
    top: usize,
) -> Outcome {
    let inst = phase1::build_ssp(n).unwrap_or_else(|e| usage(e));
    let results = if jobs > 1 {
        vec![phase1::solve_ssp_parallel(&inst, mode, suffix_bits, jobs)]
    } else {
        match phase1::solve_ssp_best(&inst, mode, suffix.as_ref(), top) {
            Ok(v) => v.into_iter().map(Ok).collect(),
            Err(e) => vec![Err(e)],
        }
    };
    for r in results {
        let r = r.map_err(|e| e.to_string())?;
        let line = json!({
            "n": r.n,
            "quarter_code": r.quarter_string(),
            "gap_decimal": mp::to_decimal(&r.gap, 40),
            "gap_numerator": r.gap_numerator.map(|g| g.to_string()),
            "nodes": r.nodes_visited,
            "seconds": r.wall_time,
        });
        println!("{line}");
    }
    Ok(())
}

fn solve_options(newton: &NewtonArgs) -> SolveOptions {
    if newton.tol_bits + 8 > newton.prec_bits {
        usage(format!(
            "--tol-bits {} leaves no headroom below --prec-bits {}",
            newton.tol_bits, newton.prec_bits
        ));
    }
    SolveOptions {
        precision_bits: newton.prec_bits,
        tol_bits: newton.tol_bits,
        variant: newton.variant,
        max_iter: newton.max_iter,
        ..SolveOptions::default()
    }
}

fn read_code_arg(arg: &str) -> String {
    let path = Path::new(arg);
    if !arg.starts_with(['+', '-']) && path.is_file() {
        match std::fs::read_to_string(path) {
            Ok(s) => s.trim().to_string(),
            Err(e) => usage(format!("{arg}: {e}")),
        }
    } else {
        arg.to_string()
    }
}

fn cmd_phase2(code: Option<String>, quarter: Option<String>, newton: &NewtonArgs) -> Outcome {
    let opts = solve_options(newton);
    let (quarter, code) = match (code, quarter) {
        (_, Some(q)) => {
            let q = QuarterCode::parse(&read_code_arg(&q)).unwrap_or_else(|e| usage(e));
            let c = q.expand();
            (Some(q), c)
        }
        (Some(c), None) => (None, read_code_arg(&c).parse::<Code>().unwrap_or_else(|e| usage(e))),
        (None, None) => unreachable!("clap requires one of --code/--quarter"),
    };
    let t = Instant::now();
    let sol = pipeline::solve_code(&code, &opts.newton(code.n())).map_err(|e| e.to_string())?;
    let timings = Timings {
        phase2_seconds: t.elapsed().as_secs_f64(),
        ..Timings::default()
    };
    let rec = SolutionRecord::new(quarter.as_ref(), &sol.state, &sol.report, &sol.polygon, opts.tol_bits, timings);
    print!("{}", rec.to_json());
    Ok(())
}

fn cmd_solve(n: usize, quarter: Option<String>, mode: Arithmetic, jobs: usize, newton: &NewtonArgs) -> Outcome {
    let opts = SolveOptions {
        arithmetic: mode,
        jobs,
        ..solve_options(newton)
    };
    let quarter = quarter.map(|q| QuarterCode::parse(&read_code_arg(&q)).unwrap_or_else(|e| usage(e)));
    let sol = match pipeline::solve_two_phase(n, quarter, &opts) {
        Ok(s) => s,
        Err(e @ pipeline::PipelineError::Unsupported(_)) => usage(e),
        Err(e) => return Err(e.to_string()),
    };
    let s = &sol.solution;
    let rec = SolutionRecord::new(Some(&sol.quarter), &s.state, &s.report, &s.polygon, opts.tol_bits, sol.timings);
    print!("{}", rec.to_json());
    Ok(())
}

fn cmd_enumerate(n: usize, jobs: usize, allow_large: bool, newton: &NewtonArgs) -> Outcome {
    if n > DEFAULT_ENUMERATION_CAP && !allow_large {
        usage(format!("n = {n} exceeds the enumeration cap {DEFAULT_ENUMERATION_CAP}; pass --allow-large"));
    }
    let checkpoint = std::env::var_os("MAXPERIM_CHECKPOINT_DIR").map(|dir| {
        let dir = PathBuf::from(dir);
        let _ = std::fs::create_dir_all(&dir);
        dir.join(format!("n{n}-p{}-t{}.jsonl", newton.prec_bits, newton.tol_bits))
    });
    let opts = EnumerateOptions {
        solve: SolveOptions {
            jobs,
            ..solve_options(newton)
        },
        allow_large,
        checkpoint,
    };
    let ranked = pipeline::enumerate_and_solve(n, &opts).map_err(|e| e.to_string())?;
    let digits = mp::digits_for_bits(newton.prec_bits);
    for (rank, e) in ranked.entries.iter().enumerate() {
        let line = json!({
            "rank": rank + 1,
            "code": e.code.full_string(),
            "composition": codes::code_to_composition(&e.code).to_string(),
            "status": e.status,
            "perimeter": e.perimeter.as_ref().map(|p| mp::to_decimal(p, digits)),
            "iterations": e.iterations,
            "error": e.error,
        });
        println!("{line}");
    }
    Ok(())
}

fn load_record(path: &Path) -> Result<SolutionRecord, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    SolutionRecord::from_json(&text).map_err(|e| e.to_string())
}

fn cmd_verify(
    poly: &str,
    value: Option<String>,
    value_from: Option<PathBuf>,
    square: bool,
    refine: bool,
    prec_bits: Option<u32>,
    tol_bits: Option<u32>,
) -> Outcome {
    let polynomial = match poly {
        "q8" => IntegerPolynomial::q8().map_err(|e| e.to_string())?,
        "E8" | "e8" => IntegerPolynomial::e8(),
        path => {
            let text = std::fs::read_to_string(path).unwrap_or_else(|e| usage(format!("{path}: {e}")));
            IntegerPolynomial::parse(&text).unwrap_or_else(|e| usage(e))
        }
    };
    let (text, rec_prec, rec_tol) = match (value, value_from) {
        (Some(v), _) => (v, None, None),
        (None, Some(path)) => {
            let rec = load_record(&path)?;
            (rec.perimeter.clone(), Some(rec.precision_bits), Some(rec.tol_bits))
        }
        (None, None) => unreachable!("clap requires a value"),
    };
    let prec = prec_bits.or(rec_prec).unwrap_or(DEFAULT_PRECISION_BITS);
    let tol = tol_bits.or(rec_tol).unwrap_or(DEFAULT_TOL_BITS);
    let mut x = mp::parse_decimal(&text, prec).unwrap_or_else(|| usage(format!("bad value {text:?}")));
    if square {
        x = Float::with_val(prec, x.square_ref());
    }
    if refine {
        x = polynomial.refine_root(&x, 64);
    }
    let report = pipeline::verify_polynomial_root(&polynomial, &x, tol);
    println!("polynomial: {poly} (degree {})", polynomial.degree());
    println!("value: {}", mp::to_decimal(&x, mp::digits_for_bits(prec)));
    println!("|p(value)|: {}", mp::to_sci(&report.value_abs, 6));
    println!("backward error: {}", mp::to_sci(&report.backward_error, 6));
    if report.confirmed {
        println!("root confirmed");
        Ok(())
    } else {
        println!("not a root");
        Err("value is not a root within tolerance".into())
    }
}

fn cmd_export(input: &Path, format: Format, output: Option<PathBuf>) -> Outcome {
    let rec = load_record(input)?;
    let bytes = match format {
        Format::Json => rec.to_json(),
        Format::Csv | Format::Svg | Format::Tikz => {
            let (poly, graph) = rec.verify().map_err(|e: RecordError| e.to_string())?;
            match format {
                Format::Csv => record::to_csv(&poly),
                Format::Svg => geometry::to_svg(&poly, &graph),
                _ => geometry::to_tikz(&poly, &graph),
            }
        }
    };
    match output {
        Some(path) => std::fs::write(&path, bytes).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{bytes}");
            Ok(())
        }
    }
}
