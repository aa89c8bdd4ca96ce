mod config;

use std::{fs, io::Write, process::ExitCode};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tridiag_susy::{
    factorization::{commutator_band, compose_band, solve_factorization_unit_gauge},
    models::{ModelError, Params},
    oracle::{dense_eigenvalues, residual_check, OracleError, ResidualReport},
    recurrence::{normalize_pair, run_recurrence, NormalizationRecord, RecurrenceDiagnostics, RecurrenceOptions},
    verify::{run_suite, SuiteConfig},
    EigenPacket, ModelName, Side, C64,
};

use crate::config::{resolve, usage, Extra, Format, Global, ModelArgs, Resolved, Usage};

#[derive(Parser, Debug)]
#[command(name = "tridiag-susy", version, about = "Build, factorize and solve h-tridiagonal band operators")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Model description: parameters, band entries, reference data
    #[command(subcommand)]
    Model(ModelCommand),
    /// Truncated band coefficients
    #[command(subcommand)]
    Band(BandCommand),
    /// Factor sequences of the model, or (--solve) factors solved from its band
    Factorize {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        solve: bool,
    },
    /// SUSY partner band and commutator band
    Susy {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Eigenvector coefficients from the recurrence
    Eigs(Targets),
    /// Run the invariant suite; exits with 1 if any check fails
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 5)]
        max_level: usize,
    },
    /// Dense cross-checks: truncated spectrum and eigenvector residuals
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Subcommand, Debug)]
enum ModelCommand {
    /// Band, factors, spectrum and reference availability
    Describe(ModelArgs),
}

#[derive(Subcommand, Debug)]
enum BandCommand {
    /// The first N entries of a, b and b'
    Emit(ModelArgs),
}

#[derive(Subcommand, Debug)]
enum OracleCommand {
    /// Eigenvalues of the dense N x N truncation
    Eigs(ModelArgs),
    /// Residuals of recurrence eigenvectors against the dense truncation
    Residual(Targets),
}

#[derive(Args, Debug)]
struct Targets {
    #[command(flatten)]
    model: ModelArgs,
    /// Spectrum indices (default 0)
    #[arg(long, num_args = 1..)]
    levels: Vec<usize>,
    /// Explicit eigenvalue, for models without a known spectrum
    #[arg(long, num_args = 2, value_names = ["RE", "IM"], allow_negative_numbers = true)]
    energy: Option<Vec<f64>>,
    /// Also solve the adjoint side (and normalize the pair)
    #[arg(long)]
    both_sides: bool,
}

impl Targets {
    fn extra(&self, default_n: usize) -> Extra<'_> {
        Extra { levels: &self.levels, energy: self.energy.as_deref(), both_sides: self.both_sides, default_n }
    }
}

const DESCRIBE_N: usize = 16;
const SOLVE_N: usize = 120;

fn cplx(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

#[derive(Serialize)]
struct Header<'a> {
    model: ModelName,
    params: &'a Params,
    #[serde(rename = "N")]
    n: usize,
}

impl<'a> From<&'a Resolved> for Header<'a> {
    fn from(r: &'a Resolved) -> Self {
        Header { model: r.model.name, params: &r.model.params, n: r.n }
    }
}

fn emit(res: &Resolved, json: &impl Serialize, csv: impl FnOnce() -> Option<String>) -> anyhow::Result<()> {
    let text = match res.format {
        Format::Json => serde_json::to_string(json)? + "\n",
        Format::Csv => csv().ok_or_else(|| usage("csv output is not available for this command"))?,
    };
    match &res.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// `(level, E)` pairs: the explicit energy if given, otherwise the model
/// spectrum at the requested levels.
fn targets(res: &Resolved) -> anyhow::Result<Vec<(Option<usize>, C64)>> {
    if let Some(e) = res.energy {
        return Ok(vec![(None, e)]);
    }
    res.levels
        .iter()
        .map(|&l| {
            res.model
                .energy(l)
                .map(|e| (Some(l), e))
                .ok_or_else(|| usage(format!("spectrum unavailable for {}; pass --energy RE IM", res.model.name)))
        })
        .collect()
}

fn solve_side(res: &Resolved, level: Option<usize>, e: C64, side: Side) -> anyhow::Result<(EigenPacket, RecurrenceDiagnostics)> {
    let opts = RecurrenceOptions::default();
    let (packet, diagnostics) = match level {
        Some(l) => res.model.eigenvector(l, res.n, side, &opts)?,
        None => {
            let out = run_recurrence(&res.model.band, e, res.n, side, &opts).map_err(ModelError::from)?;
            (out.packet, out.diagnostics)
        }
    };
    if res.verbosity > 0 {
        eprintln!(
            "level {level:?} {side}: scheme {:?}, junction {:?}, junction residual {:.2e}, extent {}",
            diagnostics.scheme, diagnostics.junction, diagnostics.junction_residual, diagnostics.extent
        );
    }
    Ok((packet, diagnostics))
}

#[derive(Serialize)]
struct SolvedPacket {
    level: Option<usize>,
    #[serde(rename = "E")]
    e: [f64; 2],
    packet: EigenPacket,
    diagnostics: RecurrenceDiagnostics,
}

#[derive(Serialize)]
struct SolvedPair {
    level: Option<usize>,
    #[serde(rename = "E")]
    e: [f64; 2],
    right: EigenPacket,
    left: EigenPacket,
    normalization: NormalizationRecord,
    diagnostics: [RecurrenceDiagnostics; 2],
}

#[derive(Serialize)]
struct EigsOutput<'a> {
    #[serde(flatten)]
    header: Header<'a>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    packets: Vec<SolvedPacket>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pairs: Vec<SolvedPair>,
}

fn coefficient_rows(out: &mut String, level: Option<usize>, p: &EigenPacket) {
    let level = level.map_or(String::new(), |l| l.to_string());
    for (k, z) in p.coefficients().iter().enumerate() {
        out.push_str(&format!("{level},{},{k},{:?},{:?}\n", p.side(), z.re, z.im));
    }
}

fn cmd_eigs(res: &Resolved) -> anyhow::Result<ExitCode> {
    let mut output = EigsOutput { header: res.into(), packets: Vec::new(), pairs: Vec::new() };
    for (level, e) in targets(res)? {
        let (right, rd) = solve_side(res, level, e, Side::H)?;
        if res.both_sides {
            let (left, ld) = solve_side(res, level, e, Side::HDagger)?;
            let (right, left, normalization) =
                normalize_pair(&right, &left, res.tol.unwrap_or(1e-12)).map_err(ModelError::from)?;
            output.pairs.push(SolvedPair { level, e: cplx(e), right, left, normalization, diagnostics: [rd, ld] });
        } else {
            output.packets.push(SolvedPacket { level, e: cplx(e), packet: right, diagnostics: rd });
        }
    }
    emit(res, &output, || {
        let mut csv = String::from("level,side,k,re,im\n");
        for p in &output.packets {
            coefficient_rows(&mut csv, p.level, &p.packet);
        }
        for p in &output.pairs {
            coefficient_rows(&mut csv, p.level, &p.right);
            coefficient_rows(&mut csv, p.level, &p.left);
        }
        Some(csv)
    })?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ResidualEntry {
    level: Option<usize>,
    #[serde(rename = "E")]
    e: [f64; 2],
    side: Side,
    #[serde(flatten)]
    report: ResidualReport,
}

fn cmd_residual(res: &Resolved) -> anyhow::Result<ExitCode> {
    let t = res.model.band.truncate(res.n)?;
    let tol = res.tol.unwrap_or(1e-9);
    let mut entries = Vec::new();
    for (level, e) in targets(res)? {
        let sides: &[Side] = if res.both_sides { &[Side::H, Side::HDagger] } else { &[Side::H] };
        for &side in sides {
            let (p, _) = solve_side(res, level, e, side)?;
            entries.push(ResidualEntry { level, e: cplx(e), side, report: residual_check(&t, e, &p, tol)? });
        }
    }
    let pass = entries.iter().all(|r| r.report.pass);
    #[derive(Serialize)]
    struct Out<'a> {
        #[serde(flatten)]
        header: Header<'a>,
        pass: bool,
        residuals: &'a [ResidualEntry],
    }
    emit(res, &Out { header: res.into(), pass, residuals: &entries }, || {
        let mut csv = String::from("level,side,interior_residual,tail_mass,pass\n");
        for r in &entries {
            let level = r.level.map_or(String::new(), |l| l.to_string());
            csv.push_str(&format!("{level},{},{:?},{:?},{}\n", r.side, r.report.interior_residual, r.report.tail_mass, r.report.pass));
        }
        Some(csv)
    })?;
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn band_csv(band: &tridiag_susy::BandSpec, n: usize) -> String {
    let mut csv = String::from("n,a_re,a_im,b_re,b_im,bp_re,bp_im\n");
    for k in 0..n {
        let (a, b, bp) = (band.a(k), band.b(k), band.bp(k));
        csv.push_str(&format!("{k},{:?},{:?},{:?},{:?},{:?},{:?}\n", a.re, a.im, b.re, b.im, bp.re, bp.im));
    }
    csv
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let g = &cli.global;
    match &cli.command {
        Command::Model(ModelCommand::Describe(model)) => {
            let res = resolve(g, model, Extra::none(DESCRIBE_N))?;
            emit(&res, &res.model.describe(res.n), || None)?;
        }
        Command::Band(BandCommand::Emit(model)) => {
            let res = resolve(g, model, Extra::none(DESCRIBE_N))?;
            emit(&res, &res.model.band.to_json(res.n), || Some(band_csv(&res.model.band, res.n)))?;
        }
        Command::Factorize { model, solve } => {
            let res = resolve(g, model, Extra::none(DESCRIBE_N))?;
            let factors = if *solve { solve_factorization_unit_gauge(&res.model.band, res.n)? } else { res.model.factors.clone() };
            let back = compose_band(&factors);
            let band = &res.model.band;
            // b'_{N-1} needs d_N, which a solved factorization does not have
            let compose_max_error = (0..res.n.saturating_sub(1))
                .filter(|k| *solve || !res.model.factor_mismatch.contains(k))
                .flat_map(|k| [back.a(k) - band.a(k), back.b(k) - band.b(k), back.bp(k) - band.bp(k)])
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            #[derive(Serialize)]
            struct Out<'a> {
                #[serde(flatten)]
                header: Header<'a>,
                source: &'static str,
                factors: tridiag_susy::factorization::FactorizationJson,
                compose_max_error: f64,
                factor_mismatch: &'a [usize],
            }
            let out = Out {
                header: (&res).into(),
                source: if *solve { "solved" } else { "model" },
                factors: factors.to_json(res.n),
                compose_max_error,
                factor_mismatch: if *solve { &[] } else { &res.model.factor_mismatch },
            };
            emit(&res, &out, || None)?;
        }
        Command::Susy { model } => {
            let res = resolve(g, model, Extra::none(DESCRIBE_N))?;
            #[derive(Serialize)]
            struct Out<'a> {
                #[serde(flatten)]
                header: Header<'a>,
                susy_band: tridiag_susy::band::BandJson,
                commutator_band: tridiag_susy::band::BandJson,
                #[serde(skip_serializing_if = "Option::is_none")]
                susy_spectrum: Option<Vec<[f64; 2]>>,
            }
            let out = Out {
                header: (&res).into(),
                susy_band: res.model.susy.to_json(res.n),
                commutator_band: commutator_band(&res.model.factors).to_json(res.n),
                susy_spectrum: res.model.susy_spectrum.as_ref().map(|s| s.take(res.n).into_iter().map(cplx).collect()),
            };
            emit(&res, &out, || Some(band_csv(&res.model.susy, res.n)))?;
        }
        Command::Eigs(t) => return cmd_eigs(&resolve(g, &t.model, t.extra(SOLVE_N))?),
        Command::Verify { model, max_level } => {
            let res = resolve(g, model, Extra::none(SOLVE_N))?;
            let report = run_suite(&res.model, &SuiteConfig { n: res.n, max_level: *max_level, tol: res.tol });
            if res.verbosity > 0 {
                for c in report.checks.iter().filter(|c| !c.pass) {
                    eprintln!("FAIL {}: {:e} > {:e}", c.name, c.measured, c.threshold);
                }
            }
            emit(&res, &report, || None)?;
            return Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
        Command::Oracle(OracleCommand::Eigs(model)) => {
            let res = resolve(g, model, Extra::none(SOLVE_N))?;
            let est = dense_eigenvalues(&res.model.band.truncate(res.n)?)?;
            if let (Some(note), true) = (&est.condition_note, res.verbosity > 0) {
                eprintln!("{note}");
            }
            emit(&res, &est, || Some(est.to_csv()))?;
        }
        Command::Oracle(OracleCommand::Residual(t)) => return cmd_residual(&resolve(g, &t.model, t.extra(SOLVE_N))?),
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<ModelError>() {
        Some(ModelError::Recurrence(_)) => 1,
        Some(_) => 2,
        None => match e.downcast_ref::<OracleError>() {
            Some(OracleError::TooLarge(_)) => 2,
            _ => 1,
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
