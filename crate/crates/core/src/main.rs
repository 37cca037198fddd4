use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qif_core::io::{
    emit_qq, emit_report, emit_summary, emit_test, load_dataset, split_sample, standardize_columns,
    standardize_response, ColumnSchema, NamedFit, ReportFormat,
};
use qif_core::simulation::{parse_design, preset, qq_data, run_monte_carlo, Hypothesis, McOptions, Method, Study};
use qif_core::{
    build_basis, estimate_phi, fit, profile_test, AuxiliaryInfo, CorrelationStructure, ExtendedScoreConfig, FitOptions,
    LongitudinalDataset, MarginalModelSpec, QifError, Result,
};

#[derive(Parser)]
#[command(
    name = "qif",
    version,
    about = "Quadratic inference functions for longitudinal data, with subgroup auxiliary information"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit QIF (and GMMAI when --aux is given) to a long-format CSV file.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Profile test of one or more coefficients held at given values.
    Test {
        #[command(flatten)]
        data: DataArgs,
        /// `name=value` or `beta<j>=value`; repeat for a joint test.
        #[arg(long = "constrain", required = true)]
        constraints: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo study from a bundled preset or a key=value design file.
    Simulate {
        #[command(flatten)]
        study: StudyArgs,
        #[arg(long)]
        two_step: bool,
        /// Run replications on a single thread.
        #[arg(long)]
        serial: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Null profile statistics against chi-square(1) quantiles.
    Qq {
        #[command(flatten)]
        study: StudyArgs,
        /// Row of a preset to use (1-based).
        #[arg(long, default_value_t = 1)]
        row: usize,
        /// Defaults to the study's first hypothesis.
        #[arg(long)]
        hypothesis: Option<String>,
        #[arg(long, default_value = "qif")]
        method: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Long-format CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "id")]
    id: String,
    #[arg(long, default_value = "time")]
    time: String,
    #[arg(long, default_value = "y")]
    response: String,
    #[arg(long, value_delimiter = ',', required = true)]
    covariates: Vec<String>,
    #[arg(long, value_enum, default_value_t = LinkArg::Identity)]
    link: LinkArg,
    #[arg(long, default_value = "cs")]
    working: CorrelationStructure,
    /// Covariates to center and scale (sample SD) before any split.
    #[arg(long, value_delimiter = ',')]
    standardize: Vec<String>,
    #[arg(long)]
    standardize_response: bool,
    /// Fit on a random subset of this many subjects; the rest form the holdout.
    #[arg(long)]
    analysis_size: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Subgroup file, one group per line.
    #[arg(long)]
    aux: Option<PathBuf>,
    /// Where subgroup means come from: the subgroup file or the holdout sample.
    #[arg(long, value_enum, default_value_t = PhiArg::File)]
    phi: PhiArg,
    #[arg(long)]
    two_step: bool,
    #[arg(long)]
    allow_empty_subgroups: bool,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
}

#[derive(Args)]
struct StudyArgs {
    /// One of table1, table2, table3, table4.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// Design file of key = value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Structured,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkArg {
    Identity,
    Logit,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PhiArg {
    File,
    Holdout,
}

const DEFAULT_SEED: u64 = 20240101;
const DEFAULT_REPS: usize = 500;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qif: error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit { data, format, out } => {
            let prepared = prepare(&data)?;
            let format = match format {
                Format::Table => ReportFormat::Table,
                Format::Structured => ReportFormat::Structured,
            };
            let mut fits = Vec::new();
            for (label, config) in prepared.configs() {
                let r = fit(&config, &prepared.analysis, None, &prepared.options)?.ensure_converged()?;
                fits.push(NamedFit::new(label, data.covariates.clone(), r));
            }
            write_output(out.as_deref(), &emit_report(&fits, format))
        }
        Command::Test { data, constraints, out } => {
            let prepared = prepare(&data)?;
            let (indices, values) = parse_constraints(&constraints, &data.covariates)?;
            let mut text = String::new();
            for (label, config) in prepared.configs() {
                let t = profile_test(&config, &prepared.analysis, &indices, &values, &prepared.options)?;
                if !t.restricted_converged {
                    return Err(QifError::NonConvergence {
                        iterations: prepared.options.max_iterations,
                    });
                }
                let block = emit_test(label, &t);
                if text.is_empty() {
                    text.push_str(&block);
                } else {
                    text.push_str(block.lines().nth(1).unwrap_or(""));
                    text.push('\n');
                }
            }
            write_output(out.as_deref(), &text)
        }
        Command::Simulate {
            study,
            two_step,
            serial,
            out,
        } => {
            let studies = load_studies(&study)?;
            let options = McOptions {
                parallel: !serial,
                fit: FitOptions {
                    two_step,
                    ..FitOptions::default()
                },
                ..McOptions::default()
            };
            let mut rows = Vec::with_capacity(studies.len());
            for (i, s) in studies.into_iter().enumerate() {
                eprintln!("study {}: {}", i + 1, describe(&s));
                let summary = run_monte_carlo(&s.design, &s.methods, &s.hypotheses, &options)?;
                rows.push((s, summary));
            }
            write_output(out.as_deref(), &emit_summary(&rows, ','))
        }
        Command::Qq {
            study,
            row,
            hypothesis,
            method,
            out,
        } => {
            let studies = load_studies(&study)?;
            let s = row
                .checked_sub(1)
                .and_then(|r| studies.get(r))
                .ok_or_else(|| QifError::Config(format!("row {row} not in 1..={}", studies.len())))?;
            let hypothesis = match hypothesis {
                Some(h) => h.parse::<Hypothesis>()?,
                None => *s
                    .hypotheses
                    .first()
                    .ok_or_else(|| QifError::Config("no hypothesis given and the study defines none".into()))?,
            };
            let method: Method = method.parse()?;
            let pairs = qq_data(&s.design, hypothesis, method, s.design.replications)?;
            write_output(out.as_deref(), &emit_qq(&pairs))
        }
    }
}

struct Prepared {
    analysis: LongitudinalDataset,
    qif: ExtendedScoreConfig,
    aux: Option<AuxiliaryInfo>,
    options: FitOptions,
}

impl Prepared {
    fn configs(&self) -> Vec<(&'static str, ExtendedScoreConfig)> {
        let mut out = vec![("QIF", self.qif.clone())];
        if let Some(aux) = &self.aux {
            out.push(("GMMAI", self.qif.with_aux(Some(aux.clone()))));
        }
        out
    }
}

/// Load, standardize, split and attach auxiliary information.
fn prepare(args: &DataArgs) -> Result<Prepared> {
    let names: Vec<&str> = args.covariates.iter().map(String::as_str).collect();
    let schema = ColumnSchema::new(&args.id, &args.time, &args.response, &names);
    let loaded = load_dataset(&args.data, &schema)?;
    if loaded.dropped > 0 {
        eprintln!("dropped {} subjects with missing or incomplete records", loaded.dropped);
    }
    let mut dataset = loaded.dataset;
    if !args.standardize.is_empty() {
        let cols = args
            .standardize
            .iter()
            .map(|c| column_index(c, &args.covariates))
            .collect::<Result<Vec<_>>>()?;
        let (ds, transforms) = standardize_columns(&dataset, &cols)?;
        for (name, t) in args.standardize.iter().zip(&transforms) {
            eprintln!("standardized {name}: mean {:.6}, sample sd {:.6}", t.mean, t.sd);
        }
        dataset = ds;
    }
    if args.standardize_response {
        let (ds, t) = standardize_response(&dataset)?;
        eprintln!(
            "standardized {}: mean {:.6}, sample sd {:.6}",
            args.response, t.mean, t.sd
        );
        dataset = ds;
    }

    let (analysis, holdout) = match args.analysis_size {
        Some(size) => {
            let split = split_sample(&dataset, size, args.seed)?;
            (split.analysis, Some(split.holdout))
        }
        None => (dataset, None),
    };

    let aux = match &args.aux {
        None if args.phi == PhiArg::Holdout => {
            return Err(QifError::Config("--phi holdout needs a subgroup file (--aux)".into()))
        }
        None => None,
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| QifError::Io(format!("{}: {e}", path.display())))?;
            let (partition, inline) = AuxiliaryInfo::parse(&text)?;
            let phi = match args.phi {
                PhiArg::File => inline.ok_or_else(|| {
                    QifError::Config("subgroup file has no means; add '=> values' or use --phi holdout".into())
                })?,
                PhiArg::Holdout => {
                    let holdout = holdout
                        .as_ref()
                        .ok_or_else(|| QifError::Config("--phi holdout needs --analysis-size".into()))?;
                    let (phi, counts) = estimate_phi(holdout, &partition)?;
                    eprintln!(
                        "subgroup means from {} holdout subjects, group sizes {counts:?}",
                        holdout.n()
                    );
                    phi
                }
            };
            Some(AuxiliaryInfo::new(partition, phi)?)
        }
    };

    let spec = match args.link {
        LinkArg::Identity => MarginalModelSpec::gaussian(),
        LinkArg::Logit => MarginalModelSpec::bernoulli(),
    };
    let qif = ExtendedScoreConfig::qif(spec, build_basis(args.working, analysis.q())?);
    let options = FitOptions {
        max_iterations: args.max_iter,
        two_step: args.two_step,
        allow_empty_subgroups: args.allow_empty_subgroups,
        ..FitOptions::default()
    };
    Ok(Prepared {
        analysis,
        qif,
        aux,
        options,
    })
}

fn column_index(name: &str, covariates: &[String]) -> Result<usize> {
    if let Some(i) = covariates.iter().position(|c| c == name) {
        return Ok(i);
    }
    name.strip_prefix("beta")
        .and_then(|j| j.parse::<usize>().ok())
        .filter(|&j| (1..=covariates.len()).contains(&j))
        .map(|j| j - 1)
        .ok_or_else(|| QifError::Config(format!("'{name}' is not one of the covariates {covariates:?}")))
}

fn parse_constraints(raw: &[String], covariates: &[String]) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut indices = Vec::with_capacity(raw.len());
    let mut values = Vec::with_capacity(raw.len());
    for c in raw {
        let (name, value) = c
            .split_once('=')
            .ok_or_else(|| QifError::Config(format!("constraint '{c}' is not name=value")))?;
        indices.push(column_index(name.trim(), covariates)?);
        values.push(
            value
                .trim()
                .parse::<f64>()
                .map_err(|_| QifError::Config(format!("constraint '{c}' has a non-numeric value")))?,
        );
    }
    Ok((indices, values))
}

fn load_studies(args: &StudyArgs) -> Result<Vec<Study>> {
    let reps = args.reps;
    let mut studies = match (&args.preset, &args.config) {
        (Some(name), _) => preset(name, args.seed.unwrap_or(DEFAULT_SEED), reps.unwrap_or(DEFAULT_REPS))?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| QifError::Io(format!("{}: {e}", path.display())))?;
            let mut s = parse_design(&text)?;
            if let Some(seed) = args.seed {
                s.design.seed = seed;
            }
            vec![s]
        }
        (None, None) => return Err(QifError::Config("give --preset or --config".into())),
    };
    if args.config.is_some() {
        if let Some(r) = reps {
            for s in &mut studies {
                s.design.replications = r;
            }
        }
    }
    Ok(studies)
}

fn describe(s: &Study) -> String {
    s.label
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| QifError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
