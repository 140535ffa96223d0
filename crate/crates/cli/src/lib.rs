//! Pipelines behind the `cce-lab` binary: build a Markov game from a
//! normal-form game, produce a certificate for it, extract Nash equilibria
//! from the certificate, verify gaps and summarize runs.
//!
//! Exit codes: 0 pass, 1 a checked threshold failed, 2 usage or IO error.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use cce_core::constructions::{build_repeated_mg_with_horizon, KibitzerLayout};
use cce_core::equilibria::{
    best_response_general_exact, best_response_markov_enumerated, cce_gap, regret_of_sequence,
    value_exact, DeviationMode, GapMode, GapReport, ValueMethod, ValueOptions,
};
use cce_core::extraction::{
    algorithm1_extract, algorithm2_extract, build_deviation_policy_repeated,
    build_kibitzer_deviation, Algorithm2Params, CertificateDocument, Extraction, QueryReport,
    SparseCceCertificate, StepRecord,
};
use cce_core::factory::{
    adversarial_never_nash_sequence, fixture_game, hedge_selfplay_certificate, separation_fixture,
    stage_nash_certificate, BuiltGame, ConstructionKind, FIXTURE_NAMES,
};
use cce_core::policies::{DistributionalPolicy, MarkovPolicy, PolicyProgram, ProductPolicy};
use cce_core::rng::stream;
use cce_core::{game_size, Error, GameDocument, NormalFormGame};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
        }
    }

    fn from_bool(pass: bool) -> Self {
        if pass {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "cce-lab",
    version,
    about = "Sparse CCE and Nash extraction laboratory"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Construct a Markov game and write it with a manifest.
    Build(BuildArgs),
    /// Produce a certificate and write it with a manifest.
    Certify(CertifyArgs),
    /// Run the extraction algorithm for the construction, `--reps` times.
    Extract(ExtractArgs),
    /// Measure CCE gaps, regrets or the separation fixture's values.
    Verify(VerifyArgs),
    /// Summarize the CSV outputs found in a directory.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct GameArgs {
    /// Fixture name or path to a normal-form game document.
    #[arg(long)]
    pub game: String,
    #[arg(long, default_value = "repeated")]
    pub kind: ConstructionKind,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    /// Horizon of the repeated game instead of `2 floor(n0 / 2)`.
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Producer {
    StageNash,
    Hedge,
    Adversarial,
}

#[derive(Args, Debug, Clone)]
pub struct CertArgs {
    /// Certificate document to use instead of a producer.
    #[arg(long)]
    pub certificate: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "stage-nash")]
    pub producer: Producer,
    /// Number of members for the hedge and adversarial producers.
    #[arg(long = "T", default_value_t = 1)]
    pub t: usize,
    /// Nash gap allowed for the stage equilibrium.
    #[arg(long, default_value_t = 0.0)]
    pub eps_nash: f64,
    /// Hedge step size instead of `sqrt(8 ln n / T)`.
    #[arg(long)]
    pub eta: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct BuildArgs {
    #[command(flatten)]
    pub game: GameArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub game: GameArgs,
    #[command(flatten)]
    pub cert: CertArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub game: GameArgs,
    #[command(flatten)]
    pub cert: CertArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// Sample count of the kibitzer estimate instead of the formula.
    #[arg(long = "K")]
    pub k: Option<u64>,
    /// Acceptance threshold instead of `4 eps` or `14 (m + 1) eps / H`.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Success frequency needed for exit code 0.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub min_success: f64,
    /// Keep simulating after the check passes.
    #[arg(long)]
    pub full_episode: bool,
    /// Also write per-step transcripts as JSON lines.
    #[arg(long)]
    pub transcript: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Exact,
    Witness,
    MonteCarlo,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub game: GameArgs,
    #[command(flatten)]
    pub cert: CertArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "exact")]
    pub mode: Mode,
    /// Largest acceptable gap; defaults to `--eps`.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Fall back to witness deviations when exact mode is refused.
    #[arg(long)]
    pub allow_witness: bool,
    #[arg(long, default_value_t = 20_000)]
    pub samples: u64,
    #[arg(long, default_value_t = cce_core::policies::ENUMERATION_BUDGET)]
    pub budget: u64,
    /// Samples behind the kibitzer's witness deviation.
    #[arg(long = "K", default_value_t = 4)]
    pub k: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ReportArgs {
    #[arg(long)]
    pub dir: PathBuf,
}

pub fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Build(a) => cmd_build(&a),
        Command::Certify(a) => cmd_certify(&a),
        Command::Extract(a) => cmd_extract(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Report(a) => cmd_report(&a),
    }
}

/// The normal-form game a run starts from.
#[derive(Clone, Debug)]
pub struct Source {
    pub label: String,
    pub game: NormalFormGame,
    pub sha256: String,
}

pub fn load_source(spec: &str) -> Result<Source> {
    let game = if FIXTURE_NAMES.contains(&spec) {
        fixture_game(spec)?
    } else {
        let text = fs::read_to_string(spec).with_context(|| format!("reading game {spec}"))?;
        match GameDocument::from_json(&text).with_context(|| format!("parsing game {spec}"))? {
            GameDocument::NormalForm(g) => g,
            GameDocument::Markov(_) => {
                bail!("{spec} holds a Markov game; a normal-form game is needed")
            }
        }
    };
    let canonical = serde_json::to_string(&GameDocument::NormalForm(game.clone()))?;
    Ok(Source {
        label: spec.to_string(),
        sha256: hex::encode(Sha256::digest(canonical.as_bytes())),
        game,
    })
}

pub fn build_game(source: &Source, args: &GameArgs) -> Result<BuiltGame> {
    match (args.kind, args.horizon) {
        (ConstructionKind::Repeated, Some(h)) => Ok(BuiltGame::Repeated(
            build_repeated_mg_with_horizon(&source.game, h)?,
        )),
        (_, Some(_)) => bail!("--horizon applies to the repeated construction only"),
        (kind, None) => Ok(BuiltGame::build(&source.game, kind, args.eps)?),
    }
}

pub fn produce_certificate(
    source: &Source,
    built: &BuiltGame,
    args: &CertArgs,
) -> Result<SparseCceCertificate> {
    let cert = if let Some(path) = &args.certificate {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading certificate {}", path.display()))?;
        let doc: CertificateDocument = serde_json::from_str(&text)
            .with_context(|| format!("parsing certificate {}", path.display()))?;
        SparseCceCertificate::from_document(doc)?
    } else {
        match args.producer {
            Producer::StageNash => stage_nash_certificate(&source.game, built, args.eps_nash)?,
            Producer::Hedge => hedge_selfplay_certificate(&source.game, built, args.t, args.eta)?,
            Producer::Adversarial => match built {
                BuiltGame::Repeated(g) => adversarial_never_nash_sequence(&source.game, g, args.t)?,
                _ => bail!("the adversarial producer targets the repeated construction"),
            },
        }
    };
    cert.check(built.game())?;
    Ok(cert)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub label: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub horizon: usize,
    pub states: usize,
    pub action_counts: Vec<usize>,
    pub game_size: u64,
    pub max_reward_bits: u64,
    pub layout: Option<KibitzerLayout>,
}

impl Derived {
    pub fn of(built: &BuiltGame) -> Self {
        let g = built.game();
        Derived {
            horizon: g.horizon(),
            states: g.num_states(),
            action_counts: g.action_counts().to_vec(),
            game_size: game_size(g),
            max_reward_bits: g.beta(),
            layout: match built {
                BuiltGame::Kibitzer(k) => Some(k.layout.clone()),
                _ => None,
            },
        }
    }
}

/// One manifest per run. It carries no timestamps so that identical
/// configurations produce identical files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub source: SourceInfo,
    pub kind: Option<ConstructionKind>,
    pub eps: Option<f64>,
    pub seed: Option<u64>,
    pub parameters: serde_json::Value,
    pub derived: Option<Derived>,
    pub status: String,
}

impl Manifest {
    fn new(command: &str, source: &Source, args: &GameArgs) -> Self {
        Manifest {
            tool: "cce-lab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            source: SourceInfo {
                label: source.label.clone(),
                sha256: source.sha256.clone(),
            },
            kind: Some(args.kind),
            eps: Some(args.eps),
            seed: None,
            parameters: serde_json::Value::Null,
            derived: None,
            status: String::new(),
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_text(
            &dir.join("manifest.json"),
            &serde_json::to_string_pretty(self)?,
        )
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cert_parameters(args: &CertArgs) -> serde_json::Value {
    serde_json::json!({
        "certificate": args.certificate.as_ref().map(|p| p.display().to_string()),
        "producer": args.producer,
        "T": args.t,
        "eps_nash": args.eps_nash,
        "eta": args.eta,
    })
}

pub fn cmd_build(args: &BuildArgs) -> Result<Status> {
    let source = load_source(&args.game.game)?;
    let built = build_game(&source, &args.game)?;
    ensure_dir(&args.out)?;
    write_text(
        &args.out.join("game.json"),
        &GameDocument::Markov(built.game().clone()).to_json()?,
    )?;
    let mut manifest = Manifest::new("build", &source, &args.game);
    manifest.parameters = serde_json::json!({ "horizon_override": args.game.horizon });
    manifest.derived = Some(Derived::of(&built));
    manifest.status = "built".into();
    manifest.write(&args.out)?;
    let d = manifest.derived.as_ref().expect("set above");
    println!(
        "built {} game: H={} S={} A={:?} |G|={}",
        built.kind(),
        d.horizon,
        d.states,
        d.action_counts,
        d.game_size
    );
    Ok(Status::Pass)
}

pub fn cmd_certify(args: &CertifyArgs) -> Result<Status> {
    let source = load_source(&args.game.game)?;
    let built = build_game(&source, &args.game)?;
    let cert = produce_certificate(&source, &built, &args.cert)?;
    ensure_dir(&args.out)?;
    let doc = cert
        .to_document()
        .context("certificate members must be tabular to be written")?;
    write_text(
        &args.out.join("certificate.json"),
        &serde_json::to_string_pretty(&doc)?,
    )?;
    let mut manifest = Manifest::new("certify", &source, &args.game);
    manifest.seed = Some(args.seed);
    manifest.parameters = cert_parameters(&args.cert);
    manifest.derived = Some(Derived::of(&built));
    manifest.status = match cert.certified_gap {
        Some(g) => format!("certified gap {g}"),
        None => "uncertified".into(),
    };
    manifest.write(&args.out)?;
    println!("certificate with T={}: {}", cert.len(), manifest.status);
    Ok(Status::Pass)
}

/// One row of `extract.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractRow {
    pub repetition: usize,
    pub algorithm: String,
    pub outcome: String,
    pub member: Option<usize>,
    pub step: Option<usize>,
    pub profile: String,
    pub nash_gap: Option<f64>,
    pub queries_total: u64,
    pub queries_generative: u64,
    pub queries_reward: u64,
    pub queries_rhat: u64,
}

fn format_profile(profile: &[Vec<f64>]) -> String {
    profile
        .iter()
        .map(|row| {
            row.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join(";")
}

fn extract_row(rep: usize, algorithm: &str, outcome: &Extraction, q: QueryReport) -> ExtractRow {
    let (member, step, profile, gap) = match outcome {
        Extraction::Found {
            member,
            step,
            profile,
            ..
        } => (
            Some(*member),
            Some(*step),
            format_profile(profile),
            outcome.max_gap(),
        ),
        Extraction::Fail => (None, None, String::new(), None),
    };
    ExtractRow {
        repetition: rep,
        algorithm: algorithm.into(),
        outcome: if outcome.is_found() { "found" } else { "fail" }.into(),
        member,
        step,
        profile,
        nash_gap: gap,
        queries_total: q.total,
        queries_generative: q.generative_simulation,
        queries_reward: q.reward_realization,
        queries_rhat: q.rhat_estimation,
    }
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    repetition: usize,
    member: usize,
    k: u64,
    threshold: f64,
    steps: &'a [StepRecord],
    queries: QueryReport,
}

/// Run the extraction `reps` times; repetition `r` draws from stream `r`
/// of `seed`. Rows come back in repetition order.
pub fn run_extraction(
    source: &Source,
    built: &BuiltGame,
    cert: &SparseCceCertificate,
    args: &ExtractArgs,
) -> Result<(Vec<ExtractRow>, Vec<String>)> {
    match built {
        BuiltGame::Repeated(_) => {
            let threshold = args.threshold.unwrap_or(4.0 * args.game.eps);
            let outcome = algorithm1_extract(&source.game, cert, threshold)?;
            let rows = (0..args.reps)
                .map(|r| extract_row(r, "algorithm-1", &outcome, QueryReport::default()))
                .collect();
            Ok((rows, Vec::new()))
        }
        BuiltGame::Kibitzer(kib) => {
            let params = Algorithm2Params {
                eps: args.game.eps,
                k: args.k,
                threshold: args.threshold,
                full_episode: args.full_episode,
            };
            let runs = (0..args.reps)
                .into_par_iter()
                .map(|r| {
                    let mut rng = stream(args.seed, r as u64);
                    algorithm2_extract(&source.game, kib, cert, params, &mut rng)
                })
                .collect::<cce_core::Result<Vec<_>>>()?;
            let mut rows = Vec::with_capacity(runs.len());
            let mut lines = Vec::new();
            for (r, run) in runs.iter().enumerate() {
                if !run.queries.is_consistent() {
                    bail!("query accounting mismatch in repetition {r}");
                }
                rows.push(extract_row(r, "algorithm-2", &run.outcome, run.queries));
                if args.transcript {
                    lines.push(serde_json::to_string(&TranscriptLine {
                        repetition: r,
                        member: run.member,
                        k: run.k,
                        threshold: run.threshold,
                        steps: &run.transcript,
                        queries: run.queries,
                    })?);
                }
            }
            Ok((rows, lines))
        }
        BuiltGame::Alternative(_) => {
            bail!("extraction runs on the repeated and kibitzer constructions")
        }
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_extract(args: &ExtractArgs) -> Result<Status> {
    if args.reps == 0 {
        bail!("--reps must be positive");
    }
    let started = Instant::now();
    let source = load_source(&args.game.game)?;
    let built = build_game(&source, &args.game)?;
    let cert = produce_certificate(&source, &built, &args.cert)?;
    let (rows, transcripts) = run_extraction(&source, &built, &cert, args)?;
    ensure_dir(&args.out)?;
    write_csv(&args.out.join("extract.csv"), &rows)?;
    if args.transcript {
        let mut f = fs::File::create(args.out.join("transcripts.jsonl"))?;
        for line in &transcripts {
            writeln!(f, "{line}")?;
        }
    }
    let found = rows.iter().filter(|r| r.outcome == "found").count();
    let rate = found as f64 / rows.len() as f64;
    let status = Status::from_bool(rate >= args.min_success);
    let mut manifest = Manifest::new("extract", &source, &args.game);
    manifest.seed = Some(args.seed);
    manifest.parameters = serde_json::json!({
        "certificate": cert_parameters(&args.cert),
        "reps": args.reps,
        "K": args.k,
        "threshold": args.threshold,
        "min_success": args.min_success,
        "full_episode": args.full_episode,
    });
    manifest.derived = Some(Derived::of(&built));
    manifest.status = format!("{found}/{} found", rows.len());
    manifest.write(&args.out)?;
    println!("success frequency {rate} ({found}/{})", rows.len());
    eprintln!("wall time {:.3}s", started.elapsed().as_secs_f64());
    Ok(status)
}

/// One row of `verify.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub quantity: String,
    pub player: Option<usize>,
    pub value: f64,
    pub stderr: Option<f64>,
    pub method: String,
    pub threshold: Option<f64>,
    pub pass: bool,
}

fn method_tag(m: &ValueMethod) -> String {
    match m {
        ValueMethod::ExactDp => "exact-dp".into(),
        ValueMethod::ExactEnum => "exact-enum".into(),
        ValueMethod::MonteCarlo { samples, seed } => {
            format!("monte-carlo samples={samples} seed={seed}")
        }
    }
}

/// Witness deviations for every player of a constructed game.
pub fn witness_deviations(
    source: &Source,
    built: &BuiltGame,
    cert: &SparseCceCertificate,
    k: u64,
    budget: u64,
) -> Result<Vec<PolicyProgram>> {
    match built {
        BuiltGame::Repeated(_) => (0..2)
            .map(|j| Ok(build_deviation_policy_repeated(&source.game, cert, j)?))
            .collect(),
        BuiltGame::Kibitzer(kib) => (0..=kib.layout.num_players)
            .map(|i| Ok(build_kibitzer_deviation(kib, cert, i, k, budget)?))
            .collect(),
        BuiltGame::Alternative(_) => {
            bail!("no witness deviations for the alternative construction")
        }
    }
}

fn gap_rows(report: &GapReport, threshold: f64) -> Vec<VerifyRow> {
    let tag = match report.mode {
        GapMode::Exact => "exact".to_string(),
        GapMode::WitnessLowerBound => format!(
            "witness-lower-bound {}",
            method_tag(&report.base_values.method)
        ),
    };
    report
        .gains
        .iter()
        .enumerate()
        .map(|(i, &g)| VerifyRow {
            quantity: "deviation-gain".into(),
            player: Some(i),
            value: g,
            stderr: report.stderr.as_ref().map(|s| s[i]),
            method: tag.clone(),
            threshold: Some(threshold),
            pass: g <= threshold,
        })
        .collect()
}

fn verify_separation(args: &VerifyArgs) -> Result<Vec<VerifyRow>> {
    let fx = separation_fixture();
    let uniform = PolicyProgram::markov(MarkovPolicy::uniform(1, 2, 2));
    let mix = DistributionalPolicy::single(ProductPolicy(vec![uniform, fx.copy.clone()]));
    let (_, markov) = best_response_markov_enumerated(&fx.game, &mix, 0, args.budget)?;
    let (_, general) = best_response_general_exact(&fx.game, &mix, 0, args.budget)?;
    let reading = value_exact(
        &fx.game,
        &mix.with_deviation(0, &fx.reward_reading),
        args.budget,
    )?[0];
    let row = |quantity: &str, value: f64, expected: f64| VerifyRow {
        quantity: quantity.into(),
        player: Some(0),
        value,
        stderr: None,
        method: "exact".into(),
        threshold: Some(expected),
        pass: (value - expected).abs() <= 1e-12,
    };
    Ok(vec![
        row("best-markov-value", markov, 0.5),
        row("best-general-value", general, 0.75),
        row("reward-reading-value", reading, 0.75),
    ])
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<Status> {
    if args.game.game == "separation" {
        let rows = verify_separation(args)?;
        ensure_dir(&args.out)?;
        write_csv(&args.out.join("verify.csv"), &rows)?;
        for r in &rows {
            println!(
                "{} = {} (expected {})",
                r.quantity,
                r.value,
                r.threshold.unwrap_or(f64::NAN)
            );
        }
        return Ok(Status::from_bool(rows.iter().all(|r| r.pass)));
    }
    let source = load_source(&args.game.game)?;
    let built = build_game(&source, &args.game)?;
    let cert = produce_certificate(&source, &built, &args.cert)?;
    let game = built.game();
    let mixture = cert.mixture();
    let threshold = args.threshold.unwrap_or(args.game.eps);
    let witness = |budget: u64| -> Result<DeviationMode> {
        Ok(DeviationMode::Witness {
            deviations: witness_deviations(&source, &built, &cert, args.k, args.budget)?,
            options: ValueOptions {
                budget,
                samples: args.samples,
                seed: args.seed,
            },
        })
    };
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    let mut refused = false;
    match args.mode {
        Mode::Exact => {
            let exact = DeviationMode::Exact {
                budget: args.budget,
            };
            match cce_gap(game, &mixture, &exact) {
                Ok(report) => {
                    rows.extend(gap_rows(&report, threshold));
                    let regrets = regret_of_sequence(game, &cert.members, &exact)?;
                    let bound = threshold * cert.len() as f64;
                    rows.extend(regrets.iter().enumerate().map(|(i, &r)| VerifyRow {
                        quantity: "regret".into(),
                        player: Some(i),
                        value: r,
                        stderr: None,
                        method: "exact".into(),
                        threshold: Some(bound),
                        pass: r <= bound,
                    }));
                }
                Err(Error::Budget { what, budget }) => {
                    let note = format!("exact mode refused ({what} exceeds {budget}); downgrading to witness deviations");
                    eprintln!("{note}");
                    notes.push(note);
                    refused = true;
                    if args.allow_witness {
                        let report = cce_gap(game, &mixture, &witness(args.budget)?)?;
                        rows.extend(gap_rows(&report, threshold));
                    }
                }
                Err(e) => return Err(e.into()),
            }
        }
        Mode::Witness => rows.extend(gap_rows(
            &cce_gap(game, &mixture, &witness(args.budget)?)?,
            threshold,
        )),
        Mode::MonteCarlo => {
            rows.extend(gap_rows(&cce_gap(game, &mixture, &witness(0)?)?, threshold))
        }
    }
    ensure_dir(&args.out)?;
    write_csv(&args.out.join("verify.csv"), &rows)?;
    let pass = rows.iter().all(|r| r.pass) && (!refused || args.allow_witness);
    let mut manifest = Manifest::new("verify", &source, &args.game);
    manifest.seed = Some(args.seed);
    manifest.parameters = serde_json::json!({
        "certificate": cert_parameters(&args.cert),
        "mode": args.mode,
        "threshold": threshold,
        "samples": args.samples,
        "budget": args.budget,
        "K": args.k,
        "notes": notes,
    });
    manifest.derived = Some(Derived::of(&built));
    manifest.status = if pass { "pass" } else { "fail" }.into();
    manifest.write(&args.out)?;
    for r in &rows {
        println!(
            "{} player {} = {} [{}] {}",
            r.quantity,
            r.player.map_or("-".into(), |p| p.to_string()),
            r.value,
            r.method,
            if r.pass { "ok" } else { "over threshold" }
        );
    }
    Ok(Status::from_bool(pass))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub file: String,
    pub rows: usize,
    pub passed: usize,
    pub rate: f64,
    pub mean_gap: Option<f64>,
    pub max_gap: Option<f64>,
    pub mean_queries: Option<f64>,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn cmd_report(args: &ReportArgs) -> Result<Status> {
    if !args.dir.is_dir() {
        bail!("{} is not a directory", args.dir.display());
    }
    let mut summary = Vec::new();
    let extract = args.dir.join("extract.csv");
    if extract.exists() {
        let rows: Vec<ExtractRow> = read_rows(&extract)?;
        let gaps: Vec<f64> = rows.iter().filter_map(|r| r.nash_gap).collect();
        let n = rows.len();
        summary.push(SummaryRow {
            file: "extract.csv".into(),
            rows: n,
            passed: gaps.len(),
            rate: gaps.len() as f64 / n.max(1) as f64,
            mean_gap: (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64),
            max_gap: gaps.iter().copied().reduce(f64::max),
            mean_queries: (n > 0)
                .then(|| rows.iter().map(|r| r.queries_total as f64).sum::<f64>() / n as f64),
        });
    }
    let verify = args.dir.join("verify.csv");
    if verify.exists() {
        let rows: Vec<VerifyRow> = read_rows(&verify)?;
        let passed = rows.iter().filter(|r| r.pass).count();
        summary.push(SummaryRow {
            file: "verify.csv".into(),
            rows: rows.len(),
            passed,
            rate: passed as f64 / rows.len().max(1) as f64,
            mean_gap: None,
            max_gap: rows.iter().map(|r| r.value).reduce(f64::max),
            mean_queries: None,
        });
    }
    if summary.is_empty() {
        bail!("no extract.csv or verify.csv in {}", args.dir.display());
    }
    write_csv(&args.dir.join("summary.csv"), &summary)?;
    for s in &summary {
        println!("{}: {}/{} passed", s.file, s.passed, s.rows);
    }
    Ok(Status::Pass)
}
