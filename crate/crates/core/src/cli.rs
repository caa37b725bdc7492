//! Command-line front end.
//!
//! Every flag may also be given in a TOML config file (`--config`), using the
//! flag name with dashes replaced by underscores as the key. Flags win over
//! the file; `SPARSE_VOTE_THREADS` sets the worker count when `--threads` is absent.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::dataset::{generate_synthetic, load_directory, Selection, SynthConfig};
use crate::dictfile::{load_dictionary, save_dictionary};
use crate::omp::{StoppingRule, DEFAULT_NOISELESS_EPS};
use crate::pipeline::{build_dictionary, classify_image, evaluate, Dictionary, EvaluationReport, GridSpec};
use crate::raster::load_image;

pub const THREADS_ENV: &str = "SPARSE_VOTE_THREADS";

pub const CSV_HEADER: &str = "image_id,true_label,predicted_label,correct,vote_margin";
pub const CSV_CLASS_HEADER: &str = "class,correct,total,accuracy";
pub const CSV_GLOBAL_HEADER: &str = "global_accuracy,n_correct,n_images";

#[derive(Debug, Parser)]
#[command(name = "sparse-vote", version, about = "Sparse-representation grid classifier")]
pub struct Cli {
    /// TOML file with default values for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a dictionary from the training images in a directory.
    BuildDict(CommonOpts),
    /// Classify the test images in a directory and write a report.
    Evaluate(EvaluateOpts),
    /// Classify a single image.
    Classify(ClassifyOpts),
    /// Write a synthetic occluded-face dataset as PGM files.
    SynthGen(SynthOpts),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    /// Run for the full patch dimension.
    Full,
    /// Stop after `rule_param` atoms.
    Sparsity,
    /// Stop once the residual norm is at most `rule_param`.
    Residual,
    /// Stop once the residual norm is at most `rule_param` (default 1e-10).
    Noiseless,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Test,
    All,
}

impl From<SplitArg> for Selection {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Selection::Train,
            SplitArg::Test => Selection::Test,
            SplitArg::All => Selection::All,
        }
    }
}

/// A grid count pair written `XxY`, e.g. `11x11`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridCounts(pub usize, pub usize);

impl FromStr for GridCounts {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (x, y) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected XxY, got {s:?}"))?;
        let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
        Ok(GridCounts(parse(x)?, parse(y)?))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonOpts {
    /// Directory of AR-named images.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Dictionary file to write or read.
    #[arg(long)]
    pub dict_path: Option<PathBuf>,
    /// Resize width [default: 55]
    #[arg(long)]
    pub width: Option<usize>,
    /// Resize height [default: 66]
    #[arg(long)]
    pub height: Option<usize>,
    /// Grid count along the width [default: 11]
    #[arg(long)]
    pub x_n: Option<usize>,
    /// Grid count along the height [default: 11]
    #[arg(long)]
    pub y_n: Option<usize>,
    /// Which side of the train/test split to read from `data_dir`.
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
    /// OMP stopping rule [default: full]
    #[arg(long, value_enum)]
    pub rule: Option<RuleKind>,
    /// Parameter of the stopping rule (sparsity or residual bound).
    #[arg(long)]
    pub rule_param: Option<f64>,
    /// Report format [default: csv]
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
    /// Random seed [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluateOpts {
    #[command(flatten)]
    pub common: CommonOpts,
    /// Report file [default: report.<format>]. With several grids the grid
    /// is appended to the stem, e.g. `report-7x7.csv`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Evaluate these grid sizes (repeatable). Dictionaries are built on the
    /// fly from `--train-dir` instead of read from `--dict-path`.
    #[arg(long = "grid")]
    pub grids: Vec<GridCounts>,
    /// Training images used with `--grid`.
    #[arg(long)]
    pub train_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ClassifyOpts {
    #[command(flatten)]
    pub common: CommonOpts,
    /// Image to classify.
    pub image: PathBuf,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthOpts {
    #[command(flatten)]
    pub common: CommonOpts,
    /// Output directory; receives `train/` and `test/`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub test_per_class: Option<usize>,
    #[arg(long)]
    pub subspace_dim: Option<usize>,
    /// Gaussian noise standard deviation (intensities in [0, 1]).
    #[arg(long)]
    pub noise: Option<f64>,
    /// Fraction of rows hidden by the occlusion band, in [0, 1).
    #[arg(long)]
    pub occlusion: Option<f64>,
    #[arg(long)]
    pub occlusion_value: Option<f64>,
}

/// Values read from `--config`. Keys mirror the long flag names.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data_dir: Option<PathBuf>,
    pub dict_path: Option<PathBuf>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub x_n: Option<usize>,
    pub y_n: Option<usize>,
    pub split: Option<SplitArg>,
    pub rule: Option<RuleKind>,
    pub rule_param: Option<f64>,
    pub format: Option<ReportFormat>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output: Option<PathBuf>,
    pub train_dir: Option<PathBuf>,
}

/// Fully resolved settings shared by all subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub dict_path: Option<PathBuf>,
    pub width: usize,
    pub height: usize,
    pub x_n: usize,
    pub y_n: usize,
    pub split: Option<SplitArg>,
    pub rule: RuleKind,
    pub rule_param: Option<f64>,
    pub format: ReportFormat,
    pub seed: u64,
    pub threads: usize,
}

impl RunConfig {
    fn resolve(file: &FileConfig, opts: &CommonOpts, threads: Option<usize>) -> Self {
        RunConfig {
            data_dir: opts.data_dir.clone().or_else(|| file.data_dir.clone()),
            dict_path: opts.dict_path.clone().or_else(|| file.dict_path.clone()),
            width: opts.width.or(file.width).unwrap_or(55),
            height: opts.height.or(file.height).unwrap_or(66),
            x_n: opts.x_n.or(file.x_n).unwrap_or(11),
            y_n: opts.y_n.or(file.y_n).unwrap_or(11),
            split: opts.split.or(file.split),
            rule: opts.rule.or(file.rule).unwrap_or(RuleKind::Full),
            rule_param: opts.rule_param.or(file.rule_param),
            format: opts.format.or(file.format).unwrap_or(ReportFormat::Csv),
            seed: opts.seed.or(file.seed).unwrap_or(42),
            threads: threads.or(file.threads).unwrap_or(0),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        Ok(GridSpec::new(self.width, self.height, self.x_n, self.y_n)?)
    }

    /// Turns the rule selection into a concrete rule for `dict`.
    pub fn stopping_rule(&self, dict: &Dictionary) -> Result<StoppingRule> {
        let rule = match (self.rule, self.rule_param) {
            (RuleKind::Full, _) => dict.default_rule(),
            (RuleKind::Sparsity, Some(s)) if s >= 1.0 && s.fract() == 0.0 => {
                StoppingRule::ExactSparsity(s as usize)
            }
            (RuleKind::Sparsity, p) => bail!("--rule sparsity needs a positive integer --rule-param, got {p:?}"),
            (RuleKind::Residual, Some(t)) => StoppingRule::ResidualBound(t),
            (RuleKind::Residual, None) => bail!("--rule residual needs --rule-param"),
            (RuleKind::Noiseless, p) => StoppingRule::Noiseless(p.unwrap_or(DEFAULT_NOISELESS_EPS)),
        };
        rule.validate()?;
        Ok(rule)
    }

    fn data_dir(&self) -> Result<&Path> {
        self.data_dir.as_deref().context("--data-dir is required")
    }

    fn dict_path(&self) -> Result<&Path> {
        self.dict_path.as_deref().context("--dict-path is required")
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let file = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => FileConfig::default(),
    };
    let common = match &cli.command {
        Command::BuildDict(c) => c,
        Command::Evaluate(e) => &e.common,
        Command::Classify(c) => &c.common,
        Command::SynthGen(s) => &s.common,
    };
    let config = RunConfig::resolve(&file, common, cli.threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .context("starting worker pool")?;
    pool.install(|| match &cli.command {
        Command::BuildDict(_) => cmd_build_dict(&config),
        Command::Evaluate(e) => cmd_evaluate(&config, e, &file),
        Command::Classify(c) => cmd_classify(&config, &c.image),
        Command::SynthGen(s) => cmd_synth_gen(&config, s),
    })
}

fn load_split(dir: &Path, selection: Selection) -> Result<Vec<crate::pipeline::LabeledImage>> {
    if !dir.is_dir() {
        bail!("{} is not a readable directory", dir.display());
    }
    let loaded = load_directory(dir, selection)
        .with_context(|| format!("loading images from {}", dir.display()))?;
    if !loaded.skipped.is_empty() {
        eprintln!(
            "skipped {} file(s) not named gender-person-index",
            loaded.skipped.len()
        );
    }
    Ok(loaded.samples)
}

pub fn cmd_build_dict(config: &RunConfig) -> Result<()> {
    let grid = config.grid()?;
    let dir = config.data_dir()?;
    let selection = config.split.unwrap_or(SplitArg::Train).into();
    let train = load_split(dir, selection)?;
    if train.is_empty() {
        bail!("no training samples in {}", dir.display());
    }
    let dict = build_dictionary(&train, &grid)?;
    let out = config.dict_path()?;
    save_dictionary(&dict, out).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "classes: {}  training images: {}  grid: {}x{} on {}x{}  patch: {}x{} ({} values)",
        dict.n_classes(),
        dict.n_train(),
        grid.x_n,
        grid.y_n,
        grid.width,
        grid.height,
        grid.grid_w(),
        grid.grid_h(),
        grid.patch_len()
    );
    Ok(())
}

fn report_path(base: &Path, grid: &GridSpec, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let name = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}-{}x{}.{ext}", grid.x_n, grid.y_n),
        None => format!("{stem}-{}x{}", grid.x_n, grid.y_n),
    };
    base.with_file_name(name)
}

pub fn cmd_evaluate(config: &RunConfig, opts: &EvaluateOpts, file: &FileConfig) -> Result<()> {
    let dir = config.data_dir()?;
    let selection = config.split.unwrap_or(SplitArg::Test).into();
    let test = load_split(dir, selection)?;
    if test.is_empty() {
        bail!("no test samples in {}", dir.display());
    }
    let output = opts
        .output
        .clone()
        .or_else(|| file.output.clone())
        .unwrap_or_else(|| PathBuf::from(format!("report.{}", config.format.extension())));

    let dictionaries: Vec<Dictionary> = if opts.grids.is_empty() {
        let path = config.dict_path()?;
        vec![load_dictionary(path).with_context(|| format!("loading dictionary {}", path.display()))?]
    } else {
        let train_dir = opts
            .train_dir
            .clone()
            .or_else(|| file.train_dir.clone())
            .context("--grid needs --train-dir")?;
        let train = load_split(&train_dir, Selection::Train)?;
        if train.is_empty() {
            bail!("no training samples in {}", train_dir.display());
        }
        opts.grids
            .iter()
            .map(|&GridCounts(x_n, y_n)| {
                let grid = GridSpec::new(config.width, config.height, x_n, y_n)?;
                Ok(build_dictionary(&train, &grid)?)
            })
            .collect::<Result<_>>()?
    };

    let several = dictionaries.len() > 1;
    for dict in &dictionaries {
        let rule = config.stopping_rule(dict)?;
        let report = evaluate(dict, &test, rule)?;
        let path = report_path(&output, dict.grid(), several);
        let text = render_report(&report, config.format)?;
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        let g = dict.grid();
        println!(
            "grid {}x{}: global accuracy {:.4} ({}/{})",
            g.x_n, g.y_n, report.global_accuracy, report.n_correct, report.n_images
        );
        eprintln!(
            "{:.3} s per image on average, report written to {}",
            report.mean_seconds_per_image(),
            path.display()
        );
    }
    Ok(())
}

pub fn cmd_classify(config: &RunConfig, image: &Path) -> Result<()> {
    let path = config.dict_path()?;
    let dict = load_dictionary(path).with_context(|| format!("loading dictionary {}", path.display()))?;
    let raster = load_image(image)?;
    let rule = config.stopping_rule(&dict)?;
    let p = classify_image(&dict, &raster, rule)?;

    let mut tally: Vec<(&String, &usize)> = p.votes.iter().collect();
    tally.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
    println!("predicted: {}", p.predicted);
    let votes: Vec<String> = tally.iter().map(|(l, v)| format!("{l}={v}")).collect();
    println!("votes: {}", votes.join(" "));
    println!("residual totals:");
    for (label, r) in &p.residual_totals {
        println!("  {label} {r:.6}");
    }
    Ok(())
}

pub fn cmd_synth_gen(config: &RunConfig, opts: &SynthOpts) -> Result<()> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        n_classes: opts.classes.unwrap_or(d.n_classes),
        n_train_per_class: opts.train_per_class.unwrap_or(d.n_train_per_class),
        n_test_per_class: opts.test_per_class.unwrap_or(d.n_test_per_class),
        width: config.width,
        height: config.height,
        subspace_dim: opts.subspace_dim.unwrap_or(d.subspace_dim),
        noise_sigma: opts.noise.unwrap_or(d.noise_sigma),
        occlusion_fraction: opts.occlusion.unwrap_or(d.occlusion_fraction),
        occlusion_value: opts.occlusion_value.unwrap_or(d.occlusion_value),
        seed: config.seed,
    };
    let data = generate_synthetic(&cfg)?;
    data.write_pgm_tree(&opts.out)
        .with_context(|| format!("writing dataset to {}", opts.out.display()))?;
    println!(
        "wrote {} training and {} test images to {}",
        data.train.len(),
        data.test.len(),
        opts.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct JsonGrid {
    width: usize,
    height: usize,
    x_n: usize,
    y_n: usize,
}

#[derive(Serialize)]
struct JsonImage<'a> {
    image_id: &'a str,
    true_label: &'a str,
    predicted_label: &'a str,
    correct: bool,
    vote_margin: usize,
    votes: &'a std::collections::BTreeMap<String, usize>,
}

#[derive(Serialize)]
struct JsonClass<'a> {
    label: &'a str,
    correct: usize,
    total: usize,
    accuracy: f64,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    grid: JsonGrid,
    images: Vec<JsonImage<'a>>,
    per_class: Vec<JsonClass<'a>>,
    global_accuracy: f64,
    n_correct: usize,
    n_images: usize,
}

/// Renders an evaluation report. Output depends only on the report contents,
/// never on timing.
pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => Ok(render_csv(report)),
        ReportFormat::Json => {
            let g = report.grid;
            let json = JsonReport {
                grid: JsonGrid {
                    width: g.width,
                    height: g.height,
                    x_n: g.x_n,
                    y_n: g.y_n,
                },
                images: report
                    .predictions
                    .iter()
                    .map(|p| JsonImage {
                        image_id: p.image_id.as_deref().unwrap_or(""),
                        true_label: p.true_label.as_deref().unwrap_or(""),
                        predicted_label: &p.predicted,
                        correct: p.is_correct().unwrap_or(false),
                        vote_margin: p.vote_margin(),
                        votes: &p.votes,
                    })
                    .collect(),
                per_class: report
                    .per_class
                    .iter()
                    .map(|(label, c)| JsonClass {
                        label,
                        correct: c.correct,
                        total: c.total,
                        accuracy: c.accuracy,
                    })
                    .collect(),
                global_accuracy: report.global_accuracy,
                n_correct: report.n_correct,
                n_images: report.n_images,
            };
            let mut s = serde_json::to_string_pretty(&json)?;
            s.push('\n');
            Ok(s)
        }
    }
}

fn render_csv(report: &EvaluationReport) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for p in &report.predictions {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.image_id.as_deref().unwrap_or(""),
            p.true_label.as_deref().unwrap_or(""),
            p.predicted,
            p.is_correct().unwrap_or(false),
            p.vote_margin()
        );
    }
    out.push('\n');
    out.push_str(CSV_CLASS_HEADER);
    out.push('\n');
    for (label, c) in &report.per_class {
        let _ = writeln!(out, "{label},{},{},{:.6}", c.correct, c.total, c.accuracy);
    }
    out.push('\n');
    out.push_str(CSV_GLOBAL_HEADER);
    out.push('\n');
    let _ = writeln!(
        out,
        "{:.6},{},{}",
        report.global_accuracy, report.n_correct, report.n_images
    );
    out
}
