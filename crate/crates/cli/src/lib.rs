//! Command implementations behind the `l3scan` executable.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Arg, ArgMatches, CommandFactory, FromArgMatches, Parser, Subcommand};
use l3scan_core::config::ExperimentConfig;
use l3scan_core::detection::{predict_l3, train_detector};
use l3scan_core::evaluate::{collect_rows, cross_validate, load_cases, muscle_measures, write_phantom_set};
use l3scan_core::image::{combined_mask, ERECTOR_SPINAE, PSOAS, RECTUS_ABDOMINIS};
use l3scan_core::metrics::muscle_area_cm2;
use l3scan_core::pgm::{write_detection_pgm, write_mask_pgm};
use l3scan_core::phantom::{gen_dataset, slice_image};
use l3scan_core::projection::make_detection_input;
use l3scan_core::report::{read_report_csv, summary_text, write_report_csv};
use l3scan_core::segmentation::{predict_masks, save_mask, train_segmenter};
use l3scan_core::volume::load_volume;
use l3scan_core::CoreError;
use l3scan_nn::{load_weights, save_weights};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl From<l3scan_nn::NnError> for CliError {
    fn from(e: l3scan_nn::NnError) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(CoreError::Config(_) | CoreError::Argument(_)) => EXIT_USAGE,
            CliError::Core(e) if e.is_numeric() => EXIT_NUMERIC,
            CliError::Core(_) => EXIT_DATA,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_USAGE => "usage",
            EXIT_NUMERIC => "numeric",
            _ => "data",
        }
    }

    /// `error[kind]: message` on a single line.
    pub fn reason(&self) -> String {
        let msg = self.to_string().replace('\n', " ");
        format!("error[{}]: {msg}", self.kind())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "l3scan",
    version,
    about = "L3 slice detection and muscle segmentation on CT volumes",
    after_help = "Every config key is also a flag: `--detect.epochs 10`. Precedence: flag > --config file > default. `l3scan print-config` lists all keys."
)]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a phantom set into data.dir (volumes, L3 masks, manifest.csv).
    PhantomGen,
    /// Write the 8-bit detection input of a volume as a P5 graymap.
    Mip { volume: PathBuf, out: PathBuf },
    /// Train the slice detector on all cases in data.dir.
    TrainDetect,
    /// Train the muscle segmenter on the L3 slices in data.dir.
    TrainSeg,
    /// Locate the L3 slice of a volume; prints a key = value record.
    Detect {
        volume: PathBuf,
        /// Also write the record here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Segment one axial slice; writes PREFIX.mhd/.raw and PREFIX.pgm and
    /// prints area and attenuation.
    Segment {
        volume: PathBuf,
        /// Slice index; defaults to 0 for single-slice files.
        #[arg(long)]
        slice: Option<usize>,
        #[arg(long, value_name = "PREFIX")]
        out: PathBuf,
    },
    /// k-fold cross-validation over data.dir; writes eval.report and
    /// out.dir/summary.txt.
    Evaluate,
    /// Summary tables for a per-case CSV.
    Report {
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration.
    PrintConfig,
}

fn command() -> clap::Command {
    let keys: Vec<(&'static str, &'static str)> = ExperimentConfig::default()
        .entries()
        .into_iter()
        .map(|(k, _, d)| (k, d))
        .collect();
    let mut cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for name in names {
        cmd = cmd.mut_subcommand(name, |sc| {
            sc.args(keys.iter().map(|&(k, d)| {
                Arg::new(k)
                    .long(k)
                    .value_name("VALUE")
                    .help(d)
                    .help_heading("Config keys")
            }))
        });
    }
    cmd
}

fn build_config(file: Option<&Path>, sub: &ArgMatches) -> CliResult<ExperimentConfig> {
    let mut cfg = match file {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", p.display()))
            })?;
            ExperimentConfig::from_text(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for (k, _, _) in ExperimentConfig::default().entries() {
        if let Some(v) = sub.get_one::<String>(k) {
            cfg.set(k, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CoreError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| CoreError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn loss_csv(loss: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in loss.iter().enumerate() {
        let _ = writeln!(s, "{},{l}", i + 1);
    }
    s
}

fn phantom_gen(cfg: &ExperimentConfig) -> CliResult<String> {
    let phantoms = gen_dataset(cfg.phantom_count, cfg.seed, &cfg.phantom_params()?)?;
    let dir = Path::new(&cfg.data_dir);
    write_phantom_set(&phantoms, dir)?;
    Ok(format!("wrote {} phantoms to {}\n", phantoms.len(), dir.display()))
}

fn mip(cfg: &ExperimentConfig, volume: &Path, out: &Path) -> CliResult<String> {
    let vol = load_volume(volume)?;
    let input = make_detection_input(&vol, cfg.view)?;
    ensure_parent(out)?;
    write_detection_pgm(&input, out)?;
    Ok(format!(
        "{} {}x{} mm_per_row={}\n",
        cfg.view, input.rows, input.cols, input.mm_per_row
    ))
}

fn train_detect(cfg: &ExperimentConfig) -> CliResult<String> {
    let cases = load_cases(Path::new(&cfg.data_dir))?;
    let data = cases
        .iter()
        .map(|c| {
            let input = make_detection_input(&c.volume, cfg.view)?;
            let row = input.z_mm_to_row(c.gt_z_mm);
            Ok((input, row))
        })
        .collect::<Result<Vec<_>, CoreError>>()?;
    let t = train_detector(
        &data,
        cfg.detect_spec(),
        &cfg.augment(),
        &cfg.detect_train(),
        cfg.detect_sigma,
    )?;
    let path = Path::new(&cfg.detect_weights);
    ensure_parent(path)?;
    save_weights(&t.model, path)?;
    write_text(&Path::new(&cfg.out_dir).join("detector_loss.csv"), &loss_csv(&t.epoch_loss))?;
    Ok(format!(
        "trained detector on {} cases, final loss {}\n",
        data.len(),
        t.epoch_loss.last().copied().unwrap_or(f64::NAN)
    ))
}

fn train_seg(cfg: &ExperimentConfig) -> CliResult<String> {
    let cases = load_cases(Path::new(&cfg.data_dir))?;
    let data: Vec<_> = cases.iter().map(|c| (c.slice(), c.mask.clone())).collect();
    let t = train_segmenter(
        &data,
        cfg.seg_spec(),
        &cfg.augment(),
        &cfg.seg_train(),
        cfg.seg_class_weights,
    )?;
    let path = Path::new(&cfg.seg_weights);
    ensure_parent(path)?;
    save_weights(&t.model, path)?;
    write_text(&Path::new(&cfg.out_dir).join("segmenter_loss.csv"), &loss_csv(&t.epoch_loss))?;
    Ok(format!(
        "trained segmenter on {} slices, final loss {}\n",
        data.len(),
        t.epoch_loss.last().copied().unwrap_or(f64::NAN)
    ))
}

fn detect(cfg: &ExperimentConfig, volume: &Path, out: Option<&Path>) -> CliResult<String> {
    let start = Instant::now();
    let vol = load_volume(volume)?;
    let model = load_weights(Path::new(&cfg.detect_weights))?;
    let r = predict_l3(&vol, &model, cfg.view, &cfg.detect_config())?;
    log::info!("detect took {:.3} s", start.elapsed().as_secs_f64());
    let text = r.to_record();
    if let Some(p) = out {
        write_text(p, &text)?;
    }
    Ok(text)
}

fn segment(cfg: &ExperimentConfig, volume: &Path, slice: Option<usize>, out: &Path) -> CliResult<String> {
    let vol = load_volume(volume)?;
    let d = vol.dims()[0];
    let z = match slice {
        Some(z) if z < d => z,
        Some(z) => {
            return Err(CliError::Usage(format!("slice {z} outside a volume of {d} slices")))
        }
        None if d == 1 => 0,
        None => return Err(CliError::Usage(format!("volume has {d} slices; pass --slice"))),
    };
    let s = slice_image(&vol, z);
    let s = l3scan_core::image::SliceImage::new(s.image, s.spacing)?;
    let model = load_weights(Path::new(&cfg.seg_weights))?;
    let mask = predict_masks(&s, &model)?;
    ensure_parent(out)?;
    save_mask(&mask, s.spacing, &out.with_extension("mhd"))?;
    write_mask_pgm(&mask, &out.with_extension("pgm"))?;
    let (area, ma) = muscle_measures(&combined_mask(&mask), &s, cfg.eval_hu_window)?;
    let mut text = String::new();
    let _ = writeln!(text, "slice_index = {z}");
    for (name, k) in [("erector_spinae", ERECTOR_SPINAE), ("psoas", PSOAS), ("rectus_abdominis", RECTUS_ABDOMINIS)] {
        let a = muscle_area_cm2(&mask.class(k), s.spacing, None, None)?;
        let _ = writeln!(text, "area_{name}_cm2 = {a}");
    }
    let _ = writeln!(text, "area_cm2 = {area}");
    let _ = writeln!(text, "ma_hu = {}", ma.map_or(String::new(), |v| v.to_string()));
    Ok(text)
}

fn evaluate(cfg: &ExperimentConfig) -> CliResult<String> {
    let cases = load_cases(Path::new(&cfg.data_dir))?;
    let folds = cross_validate(&cases, cfg)?;
    let rows = collect_rows(&cases, &folds);
    let report = Path::new(&cfg.eval_report);
    ensure_parent(report)?;
    write_report_csv(&rows, report)?;
    let summary = summary_text(&rows)?;
    write_text(&Path::new(&cfg.out_dir).join("summary.txt"), &summary)?;
    let mut text = format!("wrote {} rows to {}\n", rows.len(), report.display());
    for f in &folds {
        let _ = writeln!(text, "fold {}: train {} test {}", f.fold, f.train_ids.len(), f.test_ids.len());
    }
    Ok(text)
}

fn report(csv: &Path, out: Option<&Path>) -> CliResult<String> {
    let text = summary_text(&read_report_csv(csv)?)?;
    if let Some(p) = out {
        write_text(p, &text)?;
    }
    Ok(text)
}

/// Parses `args` (program name first), runs the command and returns its
/// standard output.
pub fn execute<I, T>(args: I) -> CliResult<String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(e.render().to_string()),
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    Err(CliError::Usage("a subcommand is required (see --help)".into()))
                }
                _ => {
                    // First paragraph of clap's message, on one line.
                    let text = e.render().to_string();
                    let para: Vec<&str> = text.lines().take_while(|l| !l.trim().is_empty()).map(str::trim).collect();
                    Err(CliError::Usage(para.join(" ").trim_start_matches("error: ").to_string()))
                }
            };
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))?;
    let (_, sub) = matches.subcommand().expect("subcommand required");
    let cfg = build_config(cli.config.as_deref(), sub)?;
    match &cli.command {
        Command::PhantomGen => phantom_gen(&cfg),
        Command::Mip { volume, out } => mip(&cfg, volume, out),
        Command::TrainDetect => train_detect(&cfg),
        Command::TrainSeg => train_seg(&cfg),
        Command::Detect { volume, out } => detect(&cfg, volume, out.as_deref()),
        Command::Segment { volume, slice, out } => segment(&cfg, volume, *slice, out),
        Command::Evaluate => evaluate(&cfg),
        Command::Report { csv, out } => report(csv, out.as_deref()),
        Command::PrintConfig => Ok(cfg.to_text()),
    }
}

/// Runs the process: prints output or a one-line reason, returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match execute(args) {
        Ok(text) => {
            print!("{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{}", e.reason());
            e.exit_code()
        }
    }
}
