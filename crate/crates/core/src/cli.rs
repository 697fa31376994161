//! Command-line front end: argument definitions and the commands behind them.
//!
//! Every command writes TSV whose first line is a `#meta` record of the
//! version, seed and settings in force. Exit codes: 0 on success, 1 on a
//! configuration or I/O failure, 2 when the run finished but produced error
//! rows (degenerate markers, Mendelian violations).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assoc::{
    otdt_adjusted_statistic, otdt_statistic, weighted_score_statistic, AssocResult, Method, ScoreWeights, TauPlan,
    WeightSpec,
};
use crate::error::{Error, Result};
use crate::kernels::{TraitKind, WeightKernel};
use crate::latentmodel::{omission_study, FamilyShape, LatentParams, OmissionStudy, OmissionStudyConfig, LRT_CRITICAL_05};
use crate::pedigree::{
    parse_cohort, read_allele_map, validate_mendelian, write_cohort_with_meta, Allele, Cohort, StudyMode,
};
use crate::power::{alt_distribution, critical_value, match_moments, AltSpec};
use crate::sim::{corrupt_leaves, even_sizes, simulate_cohort, simulate_latent_cohort, Causal, CohortSim, Layout};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "gentau", version, about = "Generalized tau association tests for family and case-control data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test every marker for association.
    Scan(ScanArgs),
    /// Write a synthetic cohort (pedigree, phenotype and covariate files).
    Simulate(SimulateArgs),
    /// Covariate-omission study of the latent-variable segregation model.
    SegStudy(SegStudyArgs),
    /// Approximate power from null and alternative moments of S.
    Power(PowerArgs),
    /// Check every marker for Mendelian inconsistencies.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub ped: PathBuf,
    #[arg(long)]
    pub phen: PathBuf,
    #[arg(long)]
    pub cov: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// `family` or `case_control`; case-control drops parent links.
    #[arg(long, default_value = "family")]
    pub mode: StudyMode,
    /// tdt, qtdt, otdt, otdt_adjusted, gen_tau or gen_tau_weighted.
    #[arg(long, default_value = "gen_tau")]
    pub method: Method,
    /// Trait columns, comma separated. Defaults to every trait for gen_tau
    /// and to the only trait otherwise.
    #[arg(long, value_delimiter = ',')]
    pub traits: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Gaussian kernel bandwidth on standardized covariates; the median
    /// pairwise distance when absent.
    #[arg(long)]
    pub weight_bandwidth: Option<f64>,
    #[arg(long, default_value = "gaussian")]
    pub weight_kernel: WeightKernel,
    /// `marker_id allele` lines overriding the minor-allele default.
    #[arg(long)]
    pub allele_map: Option<PathBuf>,
    /// Recorded in the header only; the scan uses no randomness.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Exit 0 even when some markers are degenerate.
    #[arg(long)]
    pub allow_degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Design {
    Trios,
    Singletons,
    Extended,
    Latent,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "trios")]
    pub design: Design,
    #[arg(long)]
    pub seed: u64,
    /// Output prefix: writes PREFIX.ped, PREFIX.phen and PREFIX.cov.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub families: usize,
    /// Total individuals for the extended design, split evenly.
    #[arg(long)]
    pub individuals: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub markers: usize,
    /// Risk-allele frequency range `lo,hi`.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.5])]
    pub maf: Vec<f64>,
    /// Trait kinds: quant, binary or ordinal:K, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = ["ordinal:4".to_string()])]
    pub traits: Vec<String>,
    #[arg(long, default_value_t = 0.3)]
    pub trait_correlation: f64,
    /// 1-based index of a causal marker.
    #[arg(long)]
    pub causal_marker: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub effect: f64,
    /// Change in the causal effect per unit of the covariate.
    #[arg(long, default_value_t = 0.0)]
    pub interaction: f64,
    /// Main covariate effect; a covariate column is written when given.
    #[arg(long)]
    pub covariate_effect: Option<f64>,
    /// Fraction of leaf offspring whose genotype is replaced by an
    /// impossible one, per marker.
    #[arg(long, default_value_t = 0.0)]
    pub corrupt: f64,
    /// Latent design: covariate coefficient.
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    /// Latent design: shared familial effect.
    #[arg(long, default_value_t = 1.0)]
    pub gamma1: f64,
    #[arg(long, default_value_t = 0.3)]
    pub theta1: f64,
    #[arg(long, default_value = "seven")]
    pub shape: String,
}

#[derive(Debug, Clone, Args)]
pub struct SegStudyArgs {
    /// `key = value` lines: replicates, seed, families, shape, theta1,
    /// alpha, betas, gammas, covariate_center, penalty.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PowerArgs {
    /// TSV with `#sigma0`, `#sigma1` and `#mu` blocks.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.05])]
    pub alpha: Vec<f64>,
    /// Recorded in the header only; the approximation is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// How the tested allele of each marker is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum AllelePolicy {
    Minor,
    /// Listed markers use the mapped allele, the rest the minor allele.
    Map(HashMap<String, Allele>),
}

impl AllelePolicy {
    fn label(&self) -> &'static str {
        match self {
            AllelePolicy::Minor => "minor",
            AllelePolicy::Map(_) => "map",
        }
    }
}

/// A validated scan.
#[derive(Clone, Debug)]
pub struct ScanConfig {
    pub cohort: Cohort,
    pub method: Method,
    pub traits: Vec<usize>,
    pub covariates: Vec<usize>,
    pub bandwidth: Option<f64>,
    pub kernel: WeightKernel,
    pub alleles: AllelePolicy,
    pub threads: usize,
    pub seed: Option<u64>,
}

impl ScanConfig {
    pub fn from_args(args: &ScanArgs) -> Result<Self> {
        let mut cohort = parse_cohort(&args.input.ped, &args.input.phen, args.input.cov.as_deref())?;
        if args.mode == StudyMode::CaseControl && cohort.mode == StudyMode::Family {
            cohort = cohort.into_case_control()?;
        }
        if args.mode == StudyMode::Family && cohort.mode == StudyMode::CaseControl {
            return Err(Error::InvalidArgument(
                "--mode family needs parents in the pedigree file; use --mode case_control".into(),
            ));
        }
        let traits = if args.traits.is_empty() {
            let all: Vec<usize> = (0..cohort.phenotypes.names.len()).collect();
            match args.method {
                Method::GenTau | Method::GenTauWeighted | Method::Tdt => all,
                _ if all.len() == 1 => all,
                m => {
                    return Err(Error::InvalidArgument(format!(
                        "{m} tests one trait; choose it with --traits"
                    )))
                }
            }
        } else {
            cohort.trait_columns(&args.traits)?
        };
        let covariates = if args.covariates.is_empty() {
            Vec::new()
        } else {
            cohort.covariate_columns(&args.covariates)?
        };
        let alleles = match &args.allele_map {
            None => AllelePolicy::Minor,
            Some(p) => AllelePolicy::Map(read_allele_map(p)?),
        };
        let cfg = ScanConfig {
            cohort,
            method: args.method,
            traits,
            covariates,
            bandwidth: args.weight_bandwidth,
            kernel: args.weight_kernel,
            alleles,
            threads: args.threads,
            seed: args.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Method, mode and selection compatibility.
    pub fn validate(&self) -> Result<()> {
        let m = self.method;
        let family_only = matches!(m, Method::Tdt | Method::Qtdt | Method::Otdt | Method::OtdtAdjusted);
        if family_only && self.cohort.mode != StudyMode::Family {
            return Err(Error::InvalidArgument(format!("{m} needs family data; use gen_tau for case-control")));
        }
        let single = matches!(m, Method::Qtdt | Method::Otdt | Method::OtdtAdjusted);
        if single && self.traits.len() != 1 {
            return Err(Error::InvalidArgument(format!("{m} tests exactly one trait, got {}", self.traits.len())));
        }
        if m == Method::Tdt && self.traits.len() > 1 {
            return Err(Error::InvalidArgument("tdt takes at most one (binary) trait".into()));
        }
        if m == Method::Tdt {
            if let Some(&t) = self.traits.first() {
                if self.cohort.phenotypes.kinds[t] != TraitKind::Binary {
                    return Err(Error::InvalidArgument("tdt needs a binary affection trait".into()));
                }
            }
        }
        if let (Method::Otdt | Method::OtdtAdjusted, Some(&t)) = (m, self.traits.first()) {
            if self.cohort.phenotypes.kinds[t] == TraitKind::Quantitative {
                return Err(Error::InvalidArgument(format!("{m} needs an ordinal or binary trait")));
            }
        }
        if self.traits.is_empty() && m != Method::Tdt {
            return Err(Error::InvalidArgument("no traits selected".into()));
        }
        let needs_cov = matches!(m, Method::OtdtAdjusted | Method::GenTauWeighted);
        if needs_cov && self.covariates.is_empty() {
            return Err(Error::InvalidArgument(format!("{m} requires --covariates")));
        }
        if !needs_cov && !self.covariates.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{m} ignores covariates; use gen_tau_weighted or otdt_adjusted"
            )));
        }
        if self.bandwidth.is_some() && m != Method::GenTauWeighted {
            return Err(Error::InvalidArgument("--weight-bandwidth applies to gen_tau_weighted only".into()));
        }
        Ok(())
    }

    fn allele(&self, marker: usize) -> Option<Allele> {
        let id = &self.cohort.markers[marker].marker_id;
        match &self.alleles {
            AllelePolicy::Map(map) if map.contains_key(id) => map.get(id).copied(),
            _ => self.cohort.minor_allele(marker),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    Degenerate,
    Error,
}

impl RowStatus {
    pub fn name(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Degenerate => "degenerate",
            RowStatus::Error => "error",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScanRow {
    pub marker_id: String,
    pub allele: Option<Allele>,
    pub status: RowStatus,
    pub result: Option<AssocResult>,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct ScanReport {
    pub meta: String,
    pub method: Method,
    pub rows: Vec<ScanRow>,
}

impl ScanReport {
    pub fn failures(&self, allow_degenerate: bool) -> usize {
        self.rows
            .iter()
            .filter(|r| match r.status {
                RowStatus::Ok => false,
                RowStatus::Degenerate => !allow_degenerate,
                RowStatus::Error => true,
            })
            .count()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{}\nmarker_id\tallele\tmethod\tstatistic\tdf\tp_value\tn_used\tstatus\tmessage\n", self.meta);
        for r in &self.rows {
            let allele = r.allele.map_or("NA".to_string(), |a| a.to_string());
            let (stat, df, p, n) = match &r.result {
                Some(a) => (fmt_num(a.statistic), a.df.to_string(), fmt_num(a.p_value), a.n_used.to_string()),
                None => ("NA".into(), "NA".into(), "NA".into(), "NA".into()),
            };
            let _ = writeln!(
                out,
                "{}\t{allele}\t{}\t{stat}\t{df}\t{p}\t{n}\t{}\t{}",
                r.marker_id,
                self.method,
                r.status.name(),
                if r.message.is_empty() { "NA" } else { &r.message }
            );
        }
        out
    }
}

fn meta_line(fields: &[(&str, String)]) -> String {
    let mut line = format!("#meta\tversion={VERSION}");
    for (k, v) in fields {
        let _ = write!(line, "\t{k}={v}");
    }
    line
}

/// Shortest round-trip text, in exponent form when very small or large.
pub fn fmt_num(x: f64) -> String {
    if x != 0.0 && x.is_finite() && !(1e-4..1e6).contains(&x.abs()) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map_or("NA".to_string(), |x| x.to_string())
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {threads} threads: {e}")))
}

enum Tester<'a> {
    Tau(TauPlan<'a>),
    Otdt(usize),
    OtdtAdjusted(usize, Vec<usize>),
    Score(ScoreWeights),
}

impl Tester<'_> {
    fn run(&self, cohort: &Cohort, marker: usize, allele: Allele) -> Result<AssocResult> {
        let id = &cohort.markers[marker].marker_id;
        match self {
            Tester::Tau(plan) => plan.test_index(marker, allele),
            Tester::Otdt(t) => otdt_statistic(cohort, id, allele, *t),
            Tester::OtdtAdjusted(t, covs) => otdt_adjusted_statistic(cohort, id, allele, *t, covs),
            Tester::Score(w) => weighted_score_statistic(cohort, id, allele, w),
        }
    }
}

/// Runs the scan on `cfg.threads` workers; rows come back in marker order
/// whatever the thread count.
pub fn run_scan(cfg: &ScanConfig) -> Result<ScanReport> {
    cfg.validate()?;
    let cohort = &cfg.cohort;
    let weights = (cfg.method == Method::GenTauWeighted).then(|| WeightSpec {
        covariates: cfg.covariates.clone(),
        bandwidth: cfg.bandwidth,
        kernel: cfg.kernel,
    });
    let tester = match cfg.method {
        Method::GenTau | Method::GenTauWeighted => Tester::Tau(TauPlan::new(cohort, &cfg.traits, weights.as_ref())?),
        Method::Otdt => Tester::Otdt(cfg.traits[0]),
        Method::OtdtAdjusted => Tester::OtdtAdjusted(cfg.traits[0], cfg.covariates.clone()),
        Method::Qtdt => Tester::Score(ScoreWeights::CenteredTrait(cfg.traits[0])),
        Method::Tdt => Tester::Score(match cfg.traits.first() {
            None => ScoreWeights::Unit,
            Some(&t) => ScoreWeights::Custom(
                cohort
                    .phenotypes
                    .values
                    .iter()
                    .map(|row| row[t].filter(|&v| v == 1.0))
                    .collect(),
            ),
        }),
        Method::CustomScore => return Err(Error::InvalidArgument("custom_score is library-only".into())),
    };
    let bandwidth = match &tester {
        Tester::Tau(plan) => plan.bandwidth(),
        _ => None,
    };
    let pool = thread_pool(cfg.threads)?;
    let rows: Vec<ScanRow> = pool.install(|| {
        (0..cohort.markers.len())
            .into_par_iter()
            .map(|m| {
                let marker_id = cohort.markers[m].marker_id.clone();
                let Some(allele) = cfg.allele(m) else {
                    return ScanRow {
                        marker_id,
                        allele: None,
                        status: RowStatus::Degenerate,
                        result: None,
                        message: "no called genotypes".into(),
                    };
                };
                match tester.run(cohort, m, allele) {
                    Ok(r) => ScanRow {
                        marker_id,
                        allele: Some(allele),
                        status: RowStatus::Ok,
                        result: Some(r),
                        message: String::new(),
                    },
                    Err(e) => ScanRow {
                        marker_id,
                        allele: Some(allele),
                        status: if e.is_degenerate() {
                            RowStatus::Degenerate
                        } else {
                            RowStatus::Error
                        },
                        result: None,
                        message: e.to_string().replace(['\t', '\n'], " "),
                    },
                }
            })
            .collect()
    });
    let names = |cols: &[usize], all: &[String]| cols.iter().map(|&c| all[c].clone()).collect::<Vec<_>>().join(",");
    let cov_names = cohort.covariates.as_ref().map_or(String::new(), |c| names(&cfg.covariates, &c.names));
    let meta = meta_line(&[
        ("command", "scan".into()),
        ("seed", fmt_opt(cfg.seed)),
        (
            "mode",
            match cohort.mode {
                StudyMode::Family => "family".into(),
                StudyMode::CaseControl => "case_control".into(),
            },
        ),
        ("method", cfg.method.to_string()),
        ("traits", names(&cfg.traits, &cohort.phenotypes.names)),
        ("covariates", if cov_names.is_empty() { "NA".into() } else { cov_names }),
        ("bandwidth", fmt_opt(bandwidth)),
        ("weight_kernel", if weights.is_some() { cfg.kernel.name().into() } else { "NA".into() }),
        ("covariate_scaling", if weights.is_some() { "standardized".into() } else { "NA".into() }),
        ("penalty_epsilon", "NA".into()),
        ("allele_policy", cfg.alleles.label().into()),
    ]);
    Ok(ScanReport {
        meta,
        method: cfg.method,
        rows,
    })
}

fn parse_trait_kind(s: &str) -> Result<TraitKind> {
    match s {
        "quant" => Ok(TraitKind::Quantitative),
        "binary" => Ok(TraitKind::Binary),
        _ => s
            .strip_prefix("ordinal:")
            .and_then(|k| k.parse::<u32>().ok())
            .filter(|&k| k >= 2)
            .map(|levels| TraitKind::Ordinal { levels })
            .ok_or_else(|| Error::InvalidArgument(format!("unknown trait kind {s:?}; use quant, binary or ordinal:K"))),
    }
}

fn parse_shape(s: &str) -> Result<FamilyShape> {
    match s {
        "trio" => Ok(FamilyShape::Trio),
        "seven" => Ok(FamilyShape::Seven),
        "eight" => Ok(FamilyShape::Eight),
        other => Err(Error::InvalidArgument(format!("unknown family shape {other:?}; use trio, seven or eight"))),
    }
}

fn shape_name(s: FamilyShape) -> &'static str {
    match s {
        FamilyShape::Trio => "trio",
        FamilyShape::Seven => "seven",
        FamilyShape::Eight => "eight",
    }
}

/// Simulated cohort and the meta line describing it.
pub fn run_simulate(args: &SimulateArgs) -> Result<(Cohort, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut meta = vec![
        ("command", "simulate".to_string()),
        ("seed", args.seed.to_string()),
        ("design", format!("{:?}", args.design).to_lowercase()),
    ];
    let mut cohort = if args.design == Design::Latent {
        let shape = parse_shape(&args.shape)?;
        let params = LatentParams {
            theta1: args.theta1,
            theta2: 0.5,
            beta: vec![args.beta],
            gamma: [args.gamma1, 0.0, 0.0],
            alpha: vec![-1.0, 1.0],
        };
        let maf = args.maf.first().copied().unwrap_or(0.3);
        meta.extend([
            ("shape", shape_name(shape).to_string()),
            ("theta1", args.theta1.to_string()),
            ("beta", args.beta.to_string()),
            ("gamma1", args.gamma1.to_string()),
        ]);
        simulate_latent_cohort(shape, args.families, &params, args.markers, maf, &mut rng)?
    } else {
        let [lo, hi] = args.maf[..] else {
            return Err(Error::InvalidArgument("--maf takes two values lo,hi".into()));
        };
        let layout = match args.design {
            Design::Trios => Layout::Trios,
            Design::Singletons => Layout::Singletons,
            Design::Extended => {
                let n = args.individuals.unwrap_or(args.families * 11);
                Layout::Extended(even_sizes(args.families, n)?)
            }
            Design::Latent => unreachable!(),
        };
        let causal = match args.causal_marker {
            None => None,
            Some(0) => return Err(Error::InvalidArgument("--causal-marker is 1-based".into())),
            Some(k) => Some(Causal {
                marker: k - 1,
                effect: args.effect,
                interaction: args.interaction,
            }),
        };
        let cfg = CohortSim {
            layout,
            families: args.families,
            markers: args.markers,
            maf: (lo, hi),
            traits: args.traits.iter().map(|t| parse_trait_kind(t)).collect::<Result<_>>()?,
            trait_correlation: args.trait_correlation,
            causal,
            covariate_effect: args.covariate_effect,
        };
        meta.extend([
            ("maf", format!("{lo},{hi}")),
            ("causal_marker", fmt_opt(args.causal_marker)),
            ("effect", args.effect.to_string()),
            ("interaction", args.interaction.to_string()),
            ("covariate_effect", fmt_opt(args.covariate_effect)),
        ]);
        simulate_cohort(&cfg, &mut rng)?
    };
    let mut corrupted = 0;
    if args.corrupt > 0.0 {
        for m in 0..cohort.markers.len() {
            corrupted += corrupt_leaves(&mut cohort, m, args.corrupt, &mut rng)?.len();
        }
    }
    meta.push(("corrupted_calls", corrupted.to_string()));
    Ok((cohort, meta_line(&meta)))
}

fn write_simulation(args: &SimulateArgs) -> Result<()> {
    let (cohort, meta) = run_simulate(args)?;
    let with = |ext: &str| {
        let mut s = args.out.clone().into_os_string();
        s.push(format!(".{ext}"));
        PathBuf::from(s)
    };
    let cov = cohort.covariates.is_some().then(|| with("cov"));
    write_cohort_with_meta(&cohort, &with("ped"), &with("phen"), cov.as_deref(), Some(&meta))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("{key}: bad number {x:?}")))
        })
        .collect()
}

/// Applies `key = value` lines to a study configuration. `#` starts a comment.
pub fn parse_study_config(text: &str, cfg: &mut OmissionStudyConfig) -> Result<()> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("config line {}: expected key = value", i + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        let int = |v: &str| {
            v.parse::<u64>()
                .map_err(|_| Error::InvalidArgument(format!("{key}: bad integer {v:?}")))
        };
        let one = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("{key}: bad number {v:?}")))
        };
        match key {
            "replicates" => cfg.replicates = int(value)? as usize,
            "seed" => cfg.seed = int(value)?,
            "families" => cfg.families = int(value)? as usize,
            "shape" => cfg.shape = parse_shape(value)?,
            "theta1" => cfg.theta1 = one(value)?,
            "alpha" => cfg.alpha = parse_list(key, value)?,
            "betas" => cfg.betas = parse_list(key, value)?,
            "gammas" => cfg.gammas = parse_list(key, value)?,
            "covariate_center" => cfg.covariate_center = one(value)?,
            "penalty" => cfg.penalty = one(value)?,
            other => return Err(Error::InvalidArgument(format!("config line {}: unknown key {other:?}", i + 1))),
        }
    }
    Ok(())
}

pub fn omission_tsv(cfg: &OmissionStudyConfig, table: &OmissionStudy) -> String {
    let failures: usize = table.failures.iter().flatten().sum();
    let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let mut out = meta_line(&[
        ("command", "seg-study".into()),
        ("seed", cfg.seed.to_string()),
        ("replicates", cfg.replicates.to_string()),
        ("families", cfg.families.to_string()),
        ("shape", shape_name(cfg.shape).into()),
        ("theta1", cfg.theta1.to_string()),
        ("alpha", list(&cfg.alpha)),
        ("covariate_center", cfg.covariate_center.to_string()),
        ("penalty_epsilon", cfg.penalty.to_string()),
        ("critical", LRT_CRITICAL_05.to_string()),
        ("failed_fits", failures.to_string()),
    ]);
    out.push_str("\nbeta");
    for g in &table.gammas {
        let _ = write!(out, "\tgamma1={g}");
    }
    out.push('\n');
    for (b, row) in table.betas.iter().zip(&table.rates) {
        let _ = write!(out, "{b}");
        for r in row {
            let _ = write!(out, "\t{r:.4}");
        }
        out.push('\n');
    }
    out
}

pub fn run_seg_study(args: &SegStudyArgs) -> Result<String> {
    let mut cfg = OmissionStudyConfig::default();
    if let Some(p) = &args.config {
        parse_study_config(&fs::read_to_string(p)?, &mut cfg)?;
    }
    cfg.seed = args.seed;
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    let table = thread_pool(args.threads)?.install(|| omission_study(&cfg))?;
    Ok(omission_tsv(&cfg, &table))
}

/// Reads `#sigma0`, `#sigma1` and `#mu` blocks of whitespace-separated rows.
pub fn parse_alt_spec(text: &str) -> Result<AltSpec> {
    let mut blocks: HashMap<String, Vec<Vec<f64>>> = HashMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with("#meta") {
            continue;
        }
        if let Some(name) = line.strip_prefix('#') {
            let name = name.trim().to_lowercase();
            if !matches!(name.as_str(), "sigma0" | "sigma1" | "mu") {
                return Err(Error::InvalidArgument(format!("spec line {}: unknown block #{name}", i + 1)));
            }
            blocks.insert(name.clone(), Vec::new());
            current = Some(name);
            continue;
        }
        let block = current
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("spec line {}: data before any #block", i + 1)))?;
        let row = line
            .split_whitespace()
            .map(|x| {
                x.parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("spec line {}: bad number {x:?}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(b) = blocks.get_mut(block) {
            b.push(row);
        }
    }
    let take = |name: &str| {
        blocks
            .get(name)
            .filter(|b| !b.is_empty())
            .ok_or_else(|| Error::InvalidArgument(format!("spec lacks a #{name} block")))
    };
    let mu: Vec<f64> = take("mu")?.concat();
    let p = mu.len();
    let matrix = |name: &str| -> Result<DMatrix<f64>> {
        let rows = take(name)?;
        if rows.len() != p || rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidArgument(format!("#{name} must be {p} x {p} to match #mu")));
        }
        Ok(DMatrix::from_row_iterator(p, p, rows.concat()))
    };
    Ok(AltSpec {
        sigma0: matrix("sigma0")?,
        sigma1: matrix("sigma1")?,
        mu: DVector::from_vec(mu),
    })
}

pub fn run_power(args: &PowerArgs) -> Result<String> {
    let spec = parse_alt_spec(&fs::read_to_string(&args.spec)?)?;
    if let Some(&bad) = args.alpha.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {bad}")));
    }
    let w = alt_distribution(&spec)?;
    let approx = match_moments(&w)?;
    let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let mut out = meta_line(&[
        ("command", "power".into()),
        ("seed", fmt_opt(args.seed)),
        ("p", spec.p().to_string()),
        ("null_df", w.null_df.to_string()),
        ("pinv_fallback", w.pinv_fallback.to_string()),
        ("e", list(&w.e)),
        ("phi", list(&w.phi)),
        ("l", approx.l.to_string()),
        ("upsilon", approx.upsilon.to_string()),
        ("match_case", approx.case.name().into()),
    ]);
    out.push_str("\nalpha\tcritical\tpower\n");
    for &a in &args.alpha {
        let q = critical_value(&w, a);
        let _ = writeln!(out, "{a}\t{}\t{}", fmt_num(q), fmt_num(approx.sf(q)));
    }
    Ok(out)
}

/// Violations as TSV and their count.
pub fn run_validate(args: &ValidateArgs) -> Result<(String, usize)> {
    let cohort = parse_cohort(&args.input.ped, &args.input.phen, args.input.cov.as_deref())?;
    let mut body = String::from("family_id\tindividual_id\tmarker_id\tchild\tfather\tmother\n");
    let mut count = 0;
    for m in &cohort.markers {
        for v in validate_mendelian(&cohort, &m.marker_id)? {
            count += 1;
            let _ = writeln!(
                body,
                "{}\t{}\t{}\t{}\t{}\t{}",
                v.family_id, v.individual_id, v.marker_id, v.child, v.father, v.mother
            );
        }
    }
    let meta = meta_line(&[
        ("command", "validate".into()),
        ("seed", "NA".into()),
        ("families", cohort.pedigrees().len().to_string()),
        ("individuals", cohort.n_individuals().to_string()),
        ("markers", cohort.markers.len().to_string()),
        ("violations", count.to_string()),
    ]);
    Ok((format!("{meta}\n{body}"), count))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Runs a parsed command and returns the process exit code.
pub fn execute(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Scan(a) => {
            let report = run_scan(&ScanConfig::from_args(a)?)?;
            emit(a.out.as_deref(), &report.to_tsv())?;
            let failed = report.failures(a.allow_degenerate);
            if failed > 0 {
                eprintln!("{failed} marker(s) could not be tested; see the status column");
                return Ok(2);
            }
        }
        Command::Simulate(a) => write_simulation(a)?,
        Command::SegStudy(a) => emit(a.out.as_deref(), &run_seg_study(a)?)?,
        Command::Power(a) => emit(a.out.as_deref(), &run_power(a)?)?,
        Command::Validate(a) => {
            let (text, count) = run_validate(a)?;
            emit(a.out.as_deref(), &text)?;
            if count > 0 {
                eprintln!("{count} Mendelian inconsistencies found");
                return Ok(2);
            }
        }
    }
    Ok(0)
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors share the configuration-failure code
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
