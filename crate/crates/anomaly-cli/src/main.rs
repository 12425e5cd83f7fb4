//! `anomaly-lab` command-line front end.
//!
//! Exit codes: 0 when every claim passes, 1 on a verification failure, 2 on
//! an input or configuration error.

use anomaly_lab::corpus::{load_model, parse_action_json, Model};
use anomaly_lab::functional::{Caps, Class};
use anomaly_lab::models::{EquivariantAction, DiracData};
use anomaly_lab::report::{fmt12, Report};
use anomaly_lab::scalar::Q;
use anomaly_lab::suites::{self, SuiteConfig};
use anomaly_lab::{spectral, LabError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "anomaly-lab", version, about = "Index, obstruction and homotopy-transfer checks for finite free-fermion models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print ind(D) = dim ker D⁺ − dim ker D⁻.
    Index(Common),
    /// Str(e^{−tD²}) on the t-grid against the index.
    #[command(name = "mckean-singer")]
    McKeanSinger(Common),
    /// Obstruction per basis element and scale.
    Obstruction(Common),
    /// Run a named verification suite.
    Suite {
        #[arg(value_parser = ["qme", "hpl", "rg", "algebra", "obstruction", "all"])]
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Determinant-line pipeline and module triviality.
    Hpl(Common),
    /// RG flow of the interaction along the t-grid.
    RgFlow(Common),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct Common {
    /// Model file, or the name of a built-in model.
    #[arg(long)]
    model: String,
    /// `axial`, or a path to an action file. Defaults to the model's own action, else axial.
    #[arg(long)]
    action: Option<String>,
    /// Comma-separated, strictly increasing positive scales.
    #[arg(long, default_value = "0.5,1,2")]
    t_grid: String,
    #[arg(long, default_value_t = 4)]
    l_cap: usize,
    #[arg(long, default_value_t = 4)]
    xi_cap: usize,
    #[arg(long, default_value_t = 2)]
    hbar_cap: i32,
    /// Tolerance for floating comparisons.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write the output here instead of stdout.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Fault injection: perturb D⁻ by this amount so that D is not self-adjoint.
    #[arg(long)]
    break_adjoint: Option<String>,
    /// Fault injection: flip the Koszul sign between two generator classes, e.g. `phi,xi`.
    #[arg(long)]
    break_koszul: Option<String>,
    /// Fault injection: double the Hodge homotopy.
    #[arg(long)]
    break_eta: bool,
}

struct Loaded {
    dirac: DiracData,
    action: EquivariantAction,
    cfg: SuiteConfig,
}

fn input(msg: impl Into<String>) -> LabError {
    LabError::Input(msg.into())
}

fn parse_grid(s: &str) -> Result<Vec<f64>, LabError> {
    let grid: Vec<f64> = s
        .split(',')
        .map(|x| {
            let x = x.trim();
            if x == "inf" {
                Ok(f64::INFINITY)
            } else {
                x.parse::<f64>().map_err(|_| input(format!("bad t value {x:?}")))
            }
        })
        .collect::<Result<_, _>>()?;
    if grid.is_empty() || grid.iter().any(|t| t.is_nan() || *t <= 0.0) {
        return Err(input("t-grid must be non-empty and strictly positive"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(input("t-grid must be strictly increasing"));
    }
    Ok(grid)
}

fn parse_class(s: &str) -> Result<Class, LabError> {
    match s.trim() {
        "c" => Ok(Class::C),
        "phi" => Ok(Class::Phi),
        "xi" => Ok(Class::Xi),
        other => Err(input(format!("unknown generator class {other:?} (c, phi, xi)"))),
    }
}

fn load(c: &Common) -> Result<Loaded, LabError> {
    let Model { mut dirac, action, .. } = load_model(&c.model)?;
    if let Some(eps) = &c.break_adjoint {
        let eps: Q = anomaly_lab::corpus::parse_rational(eps)?;
        dirac = dirac.with_broken_adjoint(eps);
    }
    let action = match c.action.as_deref() {
        None => action.unwrap_or_else(|| anomaly_lab::models::axial_action(&dirac)),
        Some("axial") => anomaly_lab::models::axial_action(&dirac),
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| input(format!("{path}: {e}")))?;
            parse_action_json(&text, &dirac)?
        }
    };
    if c.l_cap < 1 || c.xi_cap < 1 || c.hbar_cap < 1 {
        return Err(input("caps must be at least 1"));
    }
    let koszul_fault = match &c.break_koszul {
        None => None,
        Some(s) => {
            let (a, b) = s.split_once(',').ok_or_else(|| input("--break-koszul expects two classes, e.g. phi,xi"))?;
            Some((parse_class(a)?, parse_class(b)?))
        }
    };
    let defaults = SuiteConfig::default();
    let cfg = SuiteConfig {
        caps: Caps { l: c.l_cap, xi: c.xi_cap, hbar: c.hbar_cap },
        t_grid: parse_grid(&c.t_grid)?,
        tol: c.tol.unwrap_or(defaults.tol),
        broken_eta: c.break_eta,
        koszul_fault,
        ..defaults
    };
    Ok(Loaded { dirac, action, cfg })
}

fn emit(c: &Common, text: &str) -> Result<(), LabError> {
    match &c.out {
        Some(p) => std::fs::write(p, text).map_err(|e| input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn render(command: &str, model: &str, r: &Report, format: Format) -> String {
    match format {
        Format::Csv => r.to_csv(),
        Format::Json => {
            let v = serde_json::json!({
                "command": command,
                "model": model,
                "pass": r.pass(),
                "claims": r.claims,
            });
            serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
        }
    }
}

/// `(t, str_value, target, abs_error)` rows of the McKean–Singer claim.
fn mckean_singer_csv(r: &Report) -> String {
    let mut out = String::from("t,str_value,target,abs_error\n");
    for c in r.claims.iter().filter(|c| !c.t_values.is_empty()) {
        for ((t, a), b) in c.t_values.iter().zip(&c.computed).zip(&c.expected) {
            out.push_str(&format!("{},{},{},{}\n", fmt12(t.0), fmt12(*a), fmt12(*b), fmt12((a - b).abs())));
        }
    }
    out
}

fn run(cli: &Cli) -> Result<bool, LabError> {
    match &cli.command {
        Command::Index(c) => {
            let l = load(c)?;
            let ind = l.dirac.index();
            let text = match c.format {
                Format::Json => format!("{}\n", serde_json::json!({ "model": c.model, "index": ind })),
                Format::Csv => format!("model,index\n{},{ind}\n", c.model),
            };
            emit(c, &text)?;
            Ok(true)
        }
        Command::McKeanSinger(c) => {
            let l = load(c)?;
            let r = spectral::mckean_singer(&l.dirac, &l.cfg.t_grid, c.tol.unwrap_or(1e-9))?;
            let text = match c.format {
                Format::Csv => mckean_singer_csv(&r),
                Format::Json => render("mckean-singer", &c.model, &r, Format::Json),
            };
            emit(c, &text)?;
            Ok(r.pass())
        }
        Command::Obstruction(c) => {
            let l = load(c)?;
            let r = suites::obstruction_suite(&l.dirac, &l.action, &l.cfg)?;
            emit(c, &render("obstruction", &c.model, &r, c.format))?;
            Ok(r.pass())
        }
        Command::Suite { name, common: c } => {
            let l = load(c)?;
            let r = suites::run_suite(name, &l.dirac, &l.action, &l.cfg)?;
            emit(c, &render(&format!("suite {name}"), &c.model, &r, c.format))?;
            for f in r.failures() {
                eprintln!("{}", f.status_line());
            }
            Ok(r.pass())
        }
        Command::Hpl(c) => {
            let l = load(c)?;
            let r = suites::hpl_suite(&l.dirac, &l.action, &l.cfg)?;
            emit(c, &render("hpl", &c.model, &r, c.format))?;
            Ok(r.pass())
        }
        Command::RgFlow(c) => {
            let l = load(c)?;
            let r = suites::rg_suite(&l.dirac, &l.action, &l.cfg)?;
            emit(c, &render("rg-flow", &c.model, &r, c.format))?;
            Ok(r.pass())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            // Verification errors raised as `Err` still count as failures, not input errors.
            match e {
                LabError::Identity(_) | LabError::DualPath(_) | LabError::Perturbation(_) | LabError::NotClosed(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
