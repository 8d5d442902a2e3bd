//! Command-line front end: synthesize surveys, decode IQ captures,
//! train models, and evaluate localization scenarios.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal
//! error. All file outputs are written to a temporary file in the
//! destination directory and renamed into place, so a failing command
//! never leaves partial output.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use wlanfp::dsss_modem::ModemConfig;
use wlanfp::eval::{error_cdf, run_scenario, standard_scenarios, summary_csv, summary_table, ScenarioSpec, SummaryRow};
use wlanfp::radiomap::{
    assemble_radio_map, build_dataset, decimate, default_grid, fmt_sig, read_survey_log,
    synthesize_survey, write_survey_log, FeatureMode, LocationGrid, RadioMap,
};
use wlanfp::receiver::{decode_capture, read_iq_capture, FingerprintSample};
use wlanfp::svm::{Kernel, MulticlassModel, SvmParams};
use wlanfp::{Error as LibError, WorldConfig};

/// Environment variable holding the default output directory.
const OUT_DIR_ENV: &str = "WLANFP_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "wlanfp",
    about = "WLAN fingerprinting localization toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct OutDir {
    /// Output directory (default: $WLANFP_OUT_DIR, else current dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutDir {
    fn resolve(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize a survey through the full PHY pipeline and write a
    /// survey log CSV.
    SynthSurvey {
        /// World config TOML (default: built-in world).
        #[arg(long)]
        world: Option<PathBuf>,
        /// Grid CSV (default: built-in 59-point perimeter grid).
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Override the world seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Survey only the first N grid locations.
        #[arg(long)]
        locations: Option<usize>,
        /// Captures per AP per location.
        #[arg(long, default_value_t = 30)]
        samples_per_ap: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Decode beacons from an IQ capture and append survey-log rows.
    Decode {
        /// Raw interleaved f32 IQ file.
        iq: PathBuf,
        /// TOML metadata sidecar.
        meta: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Train a multiclass SVM from a survey log and emit model JSON.
    Train {
        /// Survey log CSV produced by synth-survey.
        log: PathBuf,
        /// Grid CSV (default: built-in grid).
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Feature layout: rss_only or rss_plus_channel.
        #[arg(long, default_value = "rss_plus_channel")]
        features: String,
        /// Number of APs to use (first N from the log).
        #[arg(long, default_value_t = 2)]
        aps: usize,
        /// Survey granularity: 4ft, 8ft, or 12ft.
        #[arg(long, default_value = "4ft")]
        granularity: String,
        /// Training observations per location; the rest are held out.
        #[arg(long, default_value_t = 15)]
        train_per_location: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run localization scenarios and write summary + CDF files.
    Eval {
        /// Survey log CSV produced by synth-survey.
        log: PathBuf,
        /// Grid CSV (default: built-in grid).
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Restrict to one granularity: 4ft, 8ft, or 12ft.
        #[arg(long)]
        granularity: Option<String>,
        /// Restrict to the first N APs.
        #[arg(long)]
        aps: Option<usize>,
        /// Training observations per location.
        #[arg(long, default_value_t = 15)]
        train_per_location: usize,
        /// Reserved for stochastic components; the current pipeline
        /// is fully deterministic, so this does not affect output.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Render a summary CSV (from eval) as an aligned table.
    Report {
        /// summary.csv written by eval.
        summary: PathBuf,
    },
}

struct CliError {
    code: u8,
    message: String,
}

impl From<LibError> for CliError {
    fn from(err: LibError) -> Self {
        let code = match err {
            // Data problems: bad inputs, unreadable files, failed
            // integrity checks.
            LibError::Io(_)
            | LibError::Parse(_)
            | LibError::Integrity(_)
            | LibError::Config(_)
            | LibError::UnknownLocation(_)
            | LibError::Survey(_)
            | LibError::Encode(_)
            | LibError::Train(_)
            | LibError::Empty(_)
            | LibError::Dimension { .. } => 2,
            // Everything else is an internal invariant failure.
            _ => 3,
        };
        CliError { code, message: err.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError { code: 2, message: err.to_string() }
    }
}

fn data_error(message: impl Into<String>) -> CliError {
    CliError { code: 2, message: message.into() }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

/// Write bytes to `path` atomically (temp file + rename).
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn load_grid(path: &Option<PathBuf>) -> Result<LocationGrid, CliError> {
    match path {
        Some(p) => Ok(LocationGrid::read_csv(p)?),
        None => Ok(default_grid()),
    }
}

fn load_map(log: &Path, grid: &Option<PathBuf>) -> Result<RadioMap, CliError> {
    let grid = load_grid(grid)?;
    let rows = read_survey_log(log)?;
    let mut map = assemble_radio_map(grid, rows)?;
    // Partial surveys are fine: keep only grid points the log covers.
    let entries = map
        .samples
        .keys()
        .map(|&id| (id, map.grid.coordinates(id).unwrap()))
        .collect();
    map.grid = LocationGrid::new(entries, map.grid.spacing_m);
    Ok(map)
}

fn parse_granularity(s: &str) -> Result<u32, CliError> {
    match s {
        "4ft" => Ok(1),
        "8ft" => Ok(2),
        "12ft" => Ok(3),
        other => Err(data_error(format!(
            "unknown granularity {other:?} (expected 4ft, 8ft, or 12ft)"
        ))),
    }
}

fn ap_subset(map: &RadioMap, n: usize) -> Result<Vec<(String, wlanfp::MacAddr)>, CliError> {
    if n == 0 || n > map.aps.len() {
        return Err(data_error(format!(
            "requested {n} APs but the survey has {}",
            map.aps.len()
        )));
    }
    Ok(map.aps[..n].to_vec())
}

fn default_params(n_features: usize) -> SvmParams {
    SvmParams { kernel: Kernel::rbf_auto(n_features), ..SvmParams::default() }
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::SynthSurvey { world, grid, seed, locations, samples_per_ap, out } => {
            let mut world_cfg = match world {
                Some(p) => WorldConfig::load(&p)?,
                None => WorldConfig::default(),
            };
            if let Some(seed) = seed {
                world_cfg.seed = seed;
            }
            let mut grid = load_grid(&grid)?;
            if let Some(n) = locations {
                let keep: Vec<u32> = grid.ids().take(n).collect();
                if keep.len() < n {
                    return Err(data_error(format!(
                        "grid has only {} locations, {n} requested",
                        keep.len()
                    )));
                }
                let entries = keep
                    .into_iter()
                    .map(|id| (id, grid.coordinates(id).unwrap()))
                    .collect();
                grid = LocationGrid::new(entries, grid.spacing_m);
            }
            let map = synthesize_survey(&world_cfg, &grid, samples_per_ap)?;
            let out_dir = out.resolve();
            let path = out_dir.join("survey.csv");
            // write_survey_log is not atomic; render to memory first.
            let tmp_dir = tempdir_in(&out_dir)?;
            let staging = tmp_dir.join("survey.csv");
            write_survey_log(&map, &staging)?;
            write_atomic(&path, &std::fs::read(&staging)?)?;
            let _ = std::fs::remove_dir_all(&tmp_dir);
            println!(
                "{} samples across {} locations x {} APs -> {}",
                map.total_samples(),
                map.grid.len(),
                map.aps.len(),
                path.display()
            );
            Ok(())
        }
        Cmd::Decode { iq, meta, out } => {
            let cap = read_iq_capture(&iq, &meta)?;
            let cfg = ModemConfig::default();
            let decoded = decode_capture(&cap, &cfg)?;
            let path = out.resolve().join("decoded.csv");
            write_atomic(&path, render_decoded(&decoded).as_bytes())?;
            println!("{} beacons decoded -> {}", decoded.len(), path.display());
            Ok(())
        }
        Cmd::Train { log, grid, features, aps, granularity, train_per_location, out } => {
            let map = load_map(&log, &grid)?;
            let map = decimate(&map, parse_granularity(&granularity)?);
            let feature_mode: FeatureMode =
                features.parse().map_err(CliError::from)?;
            let ap_set = ap_subset(&map, aps)?;
            let ds = build_dataset(&map, &ap_set, feature_mode)?;
            let (train, _test) = wlanfp::split_per_location(&ds, train_per_location)?;
            let params = default_params(ap_set.len() * feature_mode.features_per_ap());
            let model = MulticlassModel::train(&train.features, &train.labels, &params)?;
            let path = out.resolve().join("model.json");
            write_atomic(&path, model.to_json()?.as_bytes())?;
            println!(
                "trained {} classes on {} observations -> {}",
                model.classes.len(),
                train.features.len(),
                path.display()
            );
            Ok(())
        }
        Cmd::Eval { log, grid, granularity, aps, train_per_location, seed: _seed, out } => {
            let map = load_map(&log, &grid)?;
            let decimation_filter = granularity.as_deref().map(parse_granularity).transpose()?;
            let scenarios: Vec<ScenarioSpec> = standard_scenarios()
                .into_iter()
                .filter(|s| decimation_filter.map_or(true, |d| s.decimation == d))
                .filter(|s| aps.map_or(true, |n| s.ap_indices.len() == n))
                .collect();
            if scenarios.is_empty() {
                return Err(data_error("scenario filters matched nothing"));
            }
            let out_dir = out.resolve();
            let mut rows = Vec::new();
            for spec in &scenarios {
                let n_features = spec.ap_indices.len() * spec.feature_mode.features_per_ap();
                let params = default_params(n_features);
                let report = run_scenario(&map, spec, &params, train_per_location)?;
                let grid_points = decimate(&map, spec.decimation).grid.len();
                rows.push(SummaryRow {
                    grid_points,
                    scenario: spec.label(),
                    accuracy_pct: report.accuracy_pct,
                    mean_error_m: report.mean_error_m,
                });
                let cdf = error_cdf(&report.errors);
                let mut body = String::from("error_m,cdf\n");
                for (e, frac) in cdf {
                    let _ = writeln!(body, "{},{}", fmt_sig(e), fmt_sig(frac));
                }
                let label = spec.label().replace(", ", "_").replace(' ', "");
                let cdf_path = out_dir.join(format!("cdf_{}pts_{}.csv", grid_points, label));
                write_atomic(&cdf_path, body.as_bytes())?;
            }
            let summary_path = out_dir.join("summary.csv");
            write_atomic(&summary_path, summary_csv(&rows).as_bytes())?;
            print!("{}", summary_table(&rows));
            println!("summary -> {}", summary_path.display());
            Ok(())
        }
        Cmd::Report { summary } => {
            let text = std::fs::read_to_string(&summary)?;
            let rows = parse_summary_csv(&text)?;
            print!("{}", summary_table(&rows));
            Ok(())
        }
    }
}

fn tempdir_in(dir: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)?;
    let staging = dir.join(format!(".wlanfp-staging-{}", std::process::id()));
    std::fs::create_dir_all(&staging)?;
    Ok(staging)
}

fn render_decoded(samples: &[FingerprintSample]) -> String {
    let mut out = String::from(
        "SSID,MAC-ID,RSSI (dB),W1 R,W2 R,W3 R,W4 R,W5 R,W1 I,W2 I,W3 I,W4 I,W5 I\n",
    );
    for s in samples {
        let mut fields = vec![s.ssid.clone(), s.mac.to_string(), fmt_sig(s.rss_db)];
        fields.extend(s.taps_re.iter().map(|&v| fmt_sig(v)));
        fields.extend(s.taps_im.iter().map(|&v| fmt_sig(v)));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>, CliError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("grid_points,") {
            continue;
        }
        // feature_set labels contain one comma ("2 AP, RSS"), so split
        // from both ends.
        let fields: Vec<&str> = line.splitn(2, ',').collect();
        let rest = fields.get(1).copied().unwrap_or("");
        let tail: Vec<&str> = rest.rsplitn(3, ',').collect();
        if fields.len() != 2 || tail.len() != 3 {
            return Err(data_error(format!("summary line {}: malformed row", i + 1)));
        }
        let bad = |what: &str| data_error(format!("summary line {}: bad {what}", i + 1));
        rows.push(SummaryRow {
            grid_points: fields[0].parse().map_err(|_| bad("grid_points"))?,
            scenario: tail[2].to_string(),
            accuracy_pct: tail[1].parse().map_err(|_| bad("accuracy"))?,
            mean_error_m: tail[0].parse().map_err(|_| bad("mean error"))?,
        });
    }
    if rows.is_empty() {
        return Err(data_error("summary CSV has no rows"));
    }
    Ok(rows)
}
