//! The `gaps` operator command line.
//!
//! [`run`] parses arguments, executes one subcommand against the data
//! directory and returns a [`CommandResult`]; `main` only prints it. Exit
//! codes: 0 success, 1 usage or validation error, 2 runtime failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use gaps_core::calendar::{parse_period, Resolution};
use gaps_core::geometry::read_geojson;
use gaps_core::grid::{render_overlay, ColorMap};
use gaps_core::model::{parse_catalogue, sync_datasets_with_progress, LayerKey, ModelError, Quantity, UrlFetcher};
use gaps_core::obs::ObsError;
use gaps_core::stats::Evaluation;
use gaps_service::cache::write_atomic;
use gaps_service::precompute::{evaluation_payload, precompute, Scope};
use gaps_service::{Config, ServiceError, Workspace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct CommandResult {
    pub exit_code: i32,
    pub summary: String,
    /// Machine-readable outcome, mirroring the corresponding API payload
    /// where there is one.
    pub report: Option<Value>,
    /// Where `report` was written, when `--report` was given.
    pub report_path: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(name = "gaps", version, about = "Geo-data portal engine for air-pollution studies")]
struct Cli {
    /// Data directory; relative input paths resolve against it.
    #[arg(long, global = true, env = "GAPS_DATA_DIR", default_value = ".")]
    data_dir: PathBuf,
    /// Also write the JSON report to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    /// No progress lines on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest the station registry CSV.
    IngestStations { csv: PathBuf },
    /// Ingest an hourly observations CSV.
    IngestObs { csv: PathBuf },
    /// Install a land-use or ecosystem class grid with its legend.
    IngestLandcover {
        asc: PathBuf,
        legend: PathBuf,
        #[arg(long, default_value = "landuse")]
        kind: String,
    },
    /// Replace the gazetteer with a toponym TSV.
    IngestGazetteer { tsv: PathBuf },
    /// Fetch every catalogue dataset and store it masked to the region of interest.
    SyncModel {
        catalogue: PathBuf,
        #[arg(long)]
        roi: PathBuf,
    },
    /// Fill the result cache with regional series and evaluations.
    Precompute {
        #[arg(long, value_delimiter = ',')]
        pollutants: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        resolutions: Vec<Resolution>,
        #[arg(long, value_delimiter = ',')]
        regions: Vec<String>,
    },
    /// Evaluate one concentration layer against the stations of a region.
    Evaluate {
        #[arg(long)]
        pollutant: String,
        #[arg(long)]
        resolution: Resolution,
        #[arg(long)]
        date: String,
        #[arg(long)]
        region: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print every place with this name.
    Geocode { name: String },
    /// Render a layer to PPM or PNG, chosen by the output extension.
    Render {
        #[command(flatten)]
        layer: LayerArgs,
        /// Render `value - threshold` instead of the value.
        #[arg(long)]
        exceedance: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
struct LayerArgs {
    #[arg(long)]
    pollutant: String,
    #[arg(long, default_value = "concentration")]
    quantity: Quantity,
    #[arg(long)]
    resolution: Resolution,
    #[arg(long)]
    date: String,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Failure { code: EXIT_VALIDATION, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure { code: EXIT_RUNTIME, message: message.into() }
    }
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        let code = match &e {
            ServiceError::Config(_)
            | ServiceError::Invalid(_)
            | ServiceError::Calendar(_)
            | ServiceError::Geometry(_)
            | ServiceError::Grid(_) => EXIT_VALIDATION,
            ServiceError::Obs(o) => match o {
                ObsError::Io(_) => EXIT_RUNTIME,
                _ => EXIT_VALIDATION,
            },
            ServiceError::Model(m) => match m {
                ModelError::Catalogue { .. } | ModelError::DuplicateId { .. } | ModelError::UnknownValue { .. } => {
                    EXIT_VALIDATION
                }
                _ => EXIT_RUNTIME,
            },
            _ => EXIT_RUNTIME,
        };
        Failure { code, message: e.to_string() }
    }
}

macro_rules! from_via_service {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::from(ServiceError::from(e))
            }
        }
    )*};
}
from_via_service!(
    ModelError,
    ObsError,
    gaps_core::grid::GridError,
    gaps_core::geometry::GeometryError,
    gaps_core::calendar::CalendarError
);

struct Outcome {
    summary: String,
    report: Option<Value>,
}

fn outcome(summary: impl Into<String>, report: &impl Serialize) -> Outcome {
    Outcome { summary: summary.into(), report: Some(serde_json::to_value(report).expect("reports serialise")) }
}

fn resolve(data_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        data_dir.join(p)
    }
}

fn read_input(data_dir: &Path, p: &Path) -> Result<Vec<u8>, Failure> {
    let path = resolve(data_dir, p);
    std::fs::read(&path).map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))
}

fn open(data_dir: &Path) -> Result<Workspace, Failure> {
    Workspace::open(&Config::new(data_dir)).map_err(Failure::from)
}

fn progress(label: &'static str, quiet: bool) -> impl FnMut(usize, usize) {
    move |done, total| {
        if !quiet {
            eprintln!("{label} {done}/{total}")
        }
    }
}

fn execute(cli: Cli) -> Result<Outcome, Failure> {
    let dir = cli.data_dir.as_path();
    let quiet = cli.quiet;
    match cli.command {
        Command::IngestStations { csv } => {
            let bytes = read_input(dir, &csv)?;
            let r = open(dir)?.ingest_stations(&bytes)?;
            Ok(outcome(
                format!("{} stations read: {} new, {} updated, {} rejected", r.rows, r.created, r.updated, r.rejected.len()),
                &r,
            ))
        }
        Command::IngestObs { csv } => {
            let bytes = read_input(dir, &csv)?;
            let r = open(dir)?.ingest_observations(&bytes)?;
            Ok(outcome(
                format!(
                    "{} observations read: {} new, {} updated, {} rejected",
                    r.rows,
                    r.created,
                    r.updated,
                    r.rejected.len()
                ),
                &r,
            ))
        }
        Command::IngestLandcover { asc, legend, kind } => {
            let grid = read_input(dir, &asc)?;
            let legend = read_input(dir, &legend)?;
            let r = open(dir)?.ingest_landcover(&kind, &grid, &legend)?;
            Ok(outcome(format!("{} grid {}x{} with {} classes", r.kind, r.ncols, r.nrows, r.classes), &r))
        }
        Command::IngestGazetteer { tsv } => {
            let bytes = read_input(dir, &tsv)?;
            let r = open(dir)?.ingest_gazetteer(&bytes)?;
            Ok(outcome(format!("{} toponyms indexed, {} rows skipped", r.accepted, r.skipped.len()), &r))
        }
        Command::SyncModel { catalogue, roi } => {
            let entries = parse_catalogue(&read_input(dir, &catalogue)?)?;
            let roi = read_geojson(&read_input(dir, &roi)?)?;
            let ws = open(dir)?;
            let report =
                sync_datasets_with_progress(ws.model(), &entries, &roi, &UrlFetcher::default(), &mut progress("sync", quiet));
            let summary = format!(
                "{} datasets: {} stored, {} failed (generation {})",
                report.fetched,
                report.stored,
                report.failures.len(),
                ws.model().generation()
            );
            if !report.failures.is_empty() {
                let reasons: Vec<String> = report.failures.iter().map(|f| format!("{}: {}", f.id, f.reason)).collect();
                return Err(Failure::runtime(format!("{summary}\n{}", reasons.join("\n"))));
            }
            Ok(outcome(summary, &report))
        }
        Command::Precompute { pollutants, resolutions, regions } => {
            let ws = open(dir)?;
            let scope = Scope { pollutants, resolutions, regions };
            let r = precompute(&ws, &scope, &mut progress("precompute", quiet))?;
            let summary = format!("{} computed, {} already cached, {} failed", r.computed, r.hits, r.failures.len());
            if !r.failures.is_empty() {
                let reasons: Vec<String> = r.failures.iter().map(|f| format!("{}: {}", f.key, f.reason)).collect();
                return Err(Failure::runtime(format!("{summary}\n{}", reasons.join("\n"))));
            }
            Ok(outcome(summary, &r))
        }
        Command::Evaluate { pollutant, resolution, date, region, out } => {
            let period = parse_period(&date)?;
            let key = LayerKey::new(pollutant.clone(), Quantity::Concentration, resolution, period.start)?;
            let ws = open(dir)?;
            ws.region(&region)?;
            ws.model().get_layer(&key)?;
            let (payload, _) = evaluation_payload(&ws, &pollutant, resolution, &region)?;
            let evals: Vec<Evaluation> =
                serde_json::from_slice(&payload).map_err(|e| Failure::runtime(format!("cached evaluation: {e}")))?;
            let eval = evals
                .into_iter()
                .find(|e| e.timestamp == key.timestamp)
                .ok_or_else(|| Failure::runtime(format!("no evaluation for {key}")))?;
            let summary = match &eval.result {
                Some(r) => format!(
                    "{key} in {region}: n={} fac2={:.3} fb={:.3} nmse={:.3} -> {}",
                    r.n,
                    r.fac2,
                    r.fb,
                    r.nmse,
                    if r.accepted { "accepted" } else { "not accepted" }
                ),
                None => format!("{key} in {region}: {}", eval.error.as_deref().unwrap_or("no result")),
            };
            if let Some(out) = out {
                let out = resolve(dir, &out);
                let bytes = serde_json::to_vec_pretty(&eval).expect("evaluation serialises");
                write_atomic(&out, &bytes).map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
            }
            Ok(outcome(summary, &eval))
        }
        Command::Geocode { name } => {
            let ws = open(dir)?;
            let g = ws.gazetteer();
            let matches = g.lookup(&name);
            let summary = if matches.is_empty() {
                let near = g.autocomplete(&name, 5);
                if near.is_empty() {
                    format!("no place named {name:?}")
                } else {
                    format!("no place named {name:?}; did you mean {}?", near.join(", "))
                }
            } else {
                matches
                    .iter()
                    .map(|m| format!("{}\t{}\t{}\t{}", m.name, m.location.lat, m.location.lon, m.country))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            Ok(outcome(summary, &matches))
        }
        Command::Render { layer, exceedance, out } => {
            let out = resolve(dir, &out);
            let png = match out.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
                Some("png") => true,
                Some("ppm") => false,
                _ => return Err(Failure::validation("--out must end in .ppm or .png")),
            };
            if exceedance.is_some_and(|t| !t.is_finite()) {
                return Err(Failure::validation("--exceedance must be finite"));
            }
            let ts = parse_period(&layer.date)?.start;
            let key = LayerKey::new(layer.pollutant, layer.quantity, layer.resolution, ts)?;
            let ws = open(dir)?;
            let mut grid = (*ws.model().get_layer(&key)?).clone();
            if let Some(t) = exceedance {
                grid = grid.compute_exceedance(t);
            }
            let img = render_overlay(&grid, &ColorMap::default())?;
            let bytes = if png { img.to_png() } else { img.to_ppm() };
            write_atomic(&out, &bytes).map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
            let e = grid.extent();
            #[derive(Serialize)]
            struct Rendered<'a> {
                layer: &'a LayerKey,
                out: &'a Path,
                width: usize,
                height: usize,
                bbox: [f64; 4],
            }
            let report = Rendered {
                layer: &key,
                out: &out,
                width: img.width,
                height: img.height,
                bbox: [e.min_lon, e.min_lat, e.max_lon, e.max_lat],
            };
            Ok(outcome(format!("{key} -> {} ({}x{})", out.display(), img.width, img.height), &report))
        }
        Command::Serve { config } => {
            let cfg = Config::load(&resolve(dir, &config))?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::runtime(e.to_string()))?;
            rt.block_on(async move {
                let handle = gaps_service::serve(cfg).await?;
                eprintln!("listening on http://{}", handle.addr);
                let _ = tokio::signal::ctrl_c().await;
                handle.shutdown().await;
                Ok::<_, ServiceError>(())
            })?;
            Ok(Outcome { summary: "server stopped".into(), report: None })
        }
    }
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            return CommandResult { exit_code: code, summary: e.render().to_string(), report: None, report_path: None };
        }
    };
    let report_path = cli.report.as_ref().map(|p| resolve(&cli.data_dir, p));
    match execute(cli) {
        Ok(o) => {
            let mut result = CommandResult { exit_code: EXIT_OK, summary: o.summary, report: o.report, report_path: None };
            if let (Some(path), Some(report)) = (report_path, &result.report) {
                let bytes = serde_json::to_vec_pretty(report).expect("json value serialises");
                match write_atomic(&path, &bytes) {
                    Ok(()) => result.report_path = Some(path),
                    Err(e) => {
                        result.exit_code = EXIT_RUNTIME;
                        result.summary = format!("{}\nreport {}: {e}", result.summary, path.display());
                    }
                }
            }
            result
        }
        Err(f) => CommandResult { exit_code: f.code, summary: f.message, report: None, report_path: None },
    }
}
