//! Command implementations behind the `scbeam` binary: config loading with
//! flag overrides, CSV/JSON output writing and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;
use sha2::{Digest, Sha256};

use scbeam_core::arrays::{measure_hpbw, Cut, GainSurface};
use scbeam_core::config;
use scbeam_core::error::{Error, Result};
use scbeam_core::metrics::{empirical_cdf, finite_values, sum_spectral_efficiency, StepRecord};
use scbeam_core::precoding::PrecoderMethod;
use scbeam_core::sc::ScMode;
use scbeam_core::scenario::{
    build_default_scenario, run_scenario_observed, ChannelObserver, ScenarioConfig, SimOutput,
};
use scbeam_core::smallscale::{azimuth_scaling_constant, zenith_scaling_constant};

/// Which runs a command should perform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScSelection {
    Sc1,
    None,
    Both,
}

impl ScSelection {
    pub fn modes(&self) -> Vec<ScMode> {
        match self {
            ScSelection::Sc1 => vec![ScMode::Sc1],
            ScSelection::None => vec![ScMode::None],
            ScSelection::Both => vec![ScMode::Sc1, ScMode::None],
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "sc1" => Ok(ScSelection::Sc1),
            "none" => Ok(ScSelection::None),
            "both" => Ok(ScSelection::Both),
            other => Err(Error::InvalidConfig(format!(
                "unknown sc selection '{other}' (expected sc1, none or both)"
            ))),
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub ensemble: Option<usize>,
    pub snr_db: Option<Vec<f64>>,
    pub precoders: Option<Vec<PrecoderMethod>>,
}

/// Loads the scenario from a file, or falls back to the built-in default
/// scenario, then applies the flag overrides.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<ScenarioConfig<f64>> {
    let mut cfg = match path {
        Some(p) => config::load::<f64>(p)?,
        None => build_default_scenario::<f64>(),
    };
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(ensemble) = overrides.ensemble {
        cfg.ensemble_size = ensemble;
    }
    if let Some(snr) = &overrides.snr_db {
        cfg.snr_grid_db = snr.clone();
    }
    if let Some(precoders) = &overrides.precoders {
        cfg.precoders = precoders.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_precoder(text: &str) -> Result<PrecoderMethod> {
    match text {
        "zf" => Ok(PrecoderMethod::Zf),
        "bd" => Ok(PrecoderMethod::Bd),
        "slnr" => Ok(PrecoderMethod::Slnr),
        other => Err(Error::InvalidConfig(format!(
            "unknown precoder '{other}' (expected zf, bd or slnr)"
        ))),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish_csv(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Reproducibility manifest written next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub timestamp_unix: u64,
    pub deviations: Deviations,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infinite_sinr_count: Option<usize>,
}

/// Modeling choices a reader needs to reproduce the numbers.
#[derive(Debug, Clone, Serialize)]
pub struct Deviations {
    pub cluster_count: usize,
    pub azimuth_scaling_table_n: usize,
    pub azimuth_scaling_constant: f64,
    pub zenith_scaling_table_n: usize,
    pub zenith_scaling_constant: f64,
    pub sc_angle_update: String,
    pub normalize_rx_power: bool,
}

pub fn config_hash(config: &ScenarioConfig<f64>) -> Result<String> {
    let text = config::to_toml_string(config)?;
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn write_manifest(
    out_dir: &Path,
    command: &str,
    config: &ScenarioConfig<f64>,
    infinite_sinr_count: Option<usize>,
) -> Result<PathBuf> {
    let (c_phi, az_n) = azimuth_scaling_constant(config.cluster_count);
    let (c_theta, zen_n) = zenith_scaling_constant(config.cluster_count);
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config_sha256: config_hash(config)?,
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        deviations: Deviations {
            cluster_count: config.cluster_count,
            azimuth_scaling_table_n: az_n,
            azimuth_scaling_constant: c_phi,
            zenith_scaling_table_n: zen_n,
            zenith_scaling_constant: c_theta,
            sc_angle_update: "bearing drift with lever arm c*tau + d3d".to_string(),
            normalize_rx_power: config.normalize_rx_power,
        },
        infinite_sinr_count,
    };
    let path = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(path)
}

/// Which panel the pattern command evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArraySelector {
    Bs,
    Ue,
}

impl ArraySelector {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "bs" => Ok(ArraySelector::Bs),
            "ue" => Ok(ArraySelector::Ue),
            other => Err(Error::InvalidConfig(format!(
                "unknown array selector '{other}' (expected bs or ue)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PatternSummary {
    pub array: String,
    pub peak_dbi: f64,
    pub hpbw_azimuth_deg: f64,
    pub hpbw_elevation_deg: f64,
}

/// Evaluates the composite array pattern on a scan grid and writes it as
/// CSV along with a JSON summary of the peak and half-power beamwidths.
pub fn cmd_pattern(
    config: &ScenarioConfig<f64>,
    selector: ArraySelector,
    resolution_deg: f64,
    out_dir: &Path,
) -> Result<PatternSummary> {
    if resolution_deg <= 0.0 {
        return Err(Error::InvalidConfig("pattern resolution must be positive".into()));
    }
    create_dir(out_dir)?;
    let (name, array_cfg) = match selector {
        ArraySelector::Bs => ("bs", &config.bs.array),
        ArraySelector::Ue => ("ue", &config.ues[0].array),
    };
    let geom = array_cfg.build(config.wavelength_m())?;
    let steps = |lo: f64, hi: f64| -> Vec<f64> {
        let count = ((hi - lo) / resolution_deg).round() as usize;
        (0..=count).map(|i| lo + i as f64 * resolution_deg).collect()
    };
    // Scan the front hemisphere around the boresight bearing.
    let azimuths = steps(geom.bearing_deg - 90.0, geom.bearing_deg + 90.0);
    let zeniths = steps(0.0, 180.0);
    let surface: GainSurface<f64> = geom.array_pattern(&azimuths, &zeniths, config.wavelength_m())?;

    let path = out_dir.join(format!("pattern_{name}.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record(["azimuth_deg", "zenith_deg", "gain_dbi"])
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    for (i, &az) in surface.azimuths_deg.iter().enumerate() {
        for (j, &zen) in surface.zeniths_deg.iter().enumerate() {
            w.write_record([az.to_string(), zen.to_string(), surface.at(i, j).to_string()])
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        }
    }
    finish_csv(w, &path)?;

    let (_, _, peak) = surface.peak();
    let summary = PatternSummary {
        array: name.to_string(),
        peak_dbi: peak,
        hpbw_azimuth_deg: measure_hpbw(&surface, Cut::Azimuth)?,
        hpbw_elevation_deg: measure_hpbw(&surface, Cut::Elevation)?,
    };
    let json_path = out_dir.join(format!("pattern_{name}_summary.json"));
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    fs::write(&json_path, json + "\n").map_err(io_err(&json_path))?;
    Ok(summary)
}

/// Runs both spatial-consistency modes with common random numbers and
/// writes the per-step cluster parameter traces of one UE and ensemble
/// member side by side.
pub fn cmd_evolve(
    config: &ScenarioConfig<f64>,
    member: usize,
    ue_id: usize,
    out_dir: &Path,
) -> Result<PathBuf> {
    create_dir(out_dir)?;
    if member >= config.ensemble_size {
        return Err(Error::InvalidConfig(format!(
            "member {member} out of range (ensemble size {})",
            config.ensemble_size
        )));
    }
    if ue_id == 0 || ue_id > config.ues.len() {
        return Err(Error::InvalidConfig(format!("ue {ue_id} out of range")));
    }
    // Channels and SINRs are not needed for parameter traces; keep the run
    // light by evaluating a single SNR point with one precoder. Members are
    // independent substreams, so truncating the ensemble right after the
    // traced member leaves its trace unchanged.
    let mut trace_cfg = config.clone();
    trace_cfg.snr_grid_db = vec![5.0];
    trace_cfg.precoders = vec![PrecoderMethod::Bd];
    trace_cfg.ensemble_size = member + 1;

    let mut by_mode = Vec::new();
    for mode in [ScMode::Sc1, ScMode::None] {
        let mut cfg = trace_cfg.clone();
        cfg.sc_mode = mode;
        let out = scbeam_core::scenario::run_scenario(&cfg)?;
        let traces: Vec<_> = out
            .traces
            .into_iter()
            .filter(|t| t.member == member && t.ue_id == ue_id)
            .collect();
        by_mode.push(traces);
    }
    let (sc, none) = (&by_mode[0], &by_mode[1]);
    if sc.len() != none.len() {
        return Err(Error::DimensionMismatch("trace lengths differ between modes".into()));
    }

    let path = out_dir.join(format!("evolve_ue{ue_id}_member{member}.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record([
        "distance_m",
        "cluster_id",
        "delay_ns_sc",
        "delay_abs_ns_sc",
        "delay_ns_nosc",
        "aod_deg_sc",
        "aoa_deg_sc",
        "aod_deg_nosc",
        "aoa_deg_nosc",
    ])
    .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    for (a, b) in sc.iter().zip(none.iter()) {
        w.write_record([
            a.cumulative_distance_m.to_string(),
            a.cluster.to_string(),
            a.delay_ns.to_string(),
            a.delay_abs_ns.to_string(),
            b.delay_ns.to_string(),
            a.aod_deg.to_string(),
            a.aoa_deg.to_string(),
            b.aod_deg.to_string(),
            b.aoa_deg.to_string(),
        ])
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    finish_csv(w, &path)?;
    write_manifest(out_dir, "evolve", config, None)?;
    Ok(path)
}

fn write_records_csv(path: &Path, outputs: &[(ScMode, SimOutput<f64>)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "member",
        "step_index",
        "ue_id",
        "distance_m",
        "sc_mode",
        "precoder",
        "snr_db",
        "sigma2",
        "sinr_linear",
        "se_bits_hz",
        "los",
    ])
    .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    for (mode, out) in outputs {
        for r in &out.records {
            w.write_record([
                r.member.to_string(),
                r.step_index.to_string(),
                r.ue_id.to_string(),
                r.cumulative_distance_m.to_string(),
                mode.as_str().to_string(),
                r.precoder.as_str().to_string(),
                r.snr_db.to_string(),
                r.sigma2.to_string(),
                r.sinr_linear.to_string(),
                r.se_bits.to_string(),
                r.los.to_string(),
            ])
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        }
    }
    finish_csv(w, path)
}

/// Binary channel dump sink: one file per (member, mode) under
/// `out_dir/channels/`, each record framed as a little-endian u32 header
/// length, a JSON header, then row-major interleaved re/im f64 entries.
struct ChannelDump {
    writers: Vec<Mutex<std::io::BufWriter<fs::File>>>,
}

impl ChannelDump {
    fn new(dir: &Path, mode: ScMode, members: usize) -> Result<Self> {
        create_dir(dir)?;
        let mut writers = Vec::with_capacity(members);
        for m in 0..members {
            let path = dir.join(format!("member{}_{}.bin", m, mode.as_str()));
            let file = fs::File::create(&path).map_err(io_err(&path))?;
            writers.push(Mutex::new(std::io::BufWriter::new(file)));
        }
        Ok(Self { writers })
    }

    fn write(&self, member: usize, h: &scbeam_core::ChannelMatrix64) {
        let header = format!(
            "{{\"ue_id\":{},\"step_index\":{},\"rows\":{},\"cols\":{},\"dtype\":\"complex128\",\"order\":\"row-major\"}}",
            h.ue_id,
            h.step_index,
            h.entries.nrows(),
            h.entries.ncols()
        );
        let mut w = self.writers[member].lock().expect("dump writer lock");
        w.write_all(&(header.len() as u32).to_le_bytes()).expect("dump header len");
        w.write_all(header.as_bytes()).expect("dump header");
        for row in 0..h.entries.nrows() {
            for col in 0..h.entries.ncols() {
                let v = h.entries[(row, col)];
                w.write_all(&v.re.to_le_bytes()).expect("dump re");
                w.write_all(&v.im.to_le_bytes()).expect("dump im");
            }
        }
    }

    fn finish(self) -> Result<()> {
        for w in self.writers {
            w.into_inner()
                .expect("dump writer lock")
                .flush()
                .map_err(|source| Error::Io {
                    path: "channel dump".to_string(),
                    source,
                })?;
        }
        Ok(())
    }
}

fn run_mode(
    config: &ScenarioConfig<f64>,
    mode: ScMode,
    dump_dir: Option<&Path>,
) -> Result<SimOutput<f64>> {
    let mut cfg = config.clone();
    cfg.sc_mode = mode;
    match dump_dir {
        None => scbeam_core::scenario::run_scenario(&cfg),
        Some(dir) => {
            let dump = ChannelDump::new(dir, mode, cfg.ensemble_size)?;
            let observe = |member: usize, h: &scbeam_core::ChannelMatrix64| {
                dump.write(member, h);
            };
            let observer: ChannelObserver<'_, f64> = &observe;
            let out = run_scenario_observed(&cfg, Some(observer))?;
            dump.finish()?;
            Ok(out)
        }
    }
}

/// Full pipeline: per-step records for every precoder and selected mode,
/// plus one SINR CDF file per (precoder, mode) at the chosen SNR point.
pub fn cmd_simulate(
    config: &ScenarioConfig<f64>,
    selection: ScSelection,
    cdf_snr_db: f64,
    dump_channels: bool,
    out_dir: &Path,
) -> Result<()> {
    create_dir(out_dir)?;
    if !config.snr_grid_db.iter().any(|&s| (s - cdf_snr_db).abs() < 1e-9) {
        return Err(Error::InvalidConfig(format!(
            "cdf snr {cdf_snr_db} dB is not on the configured SNR grid"
        )));
    }
    let dump_dir = out_dir.join("channels");
    let mut outputs = Vec::new();
    for mode in selection.modes() {
        let out = run_mode(config, mode, dump_channels.then_some(dump_dir.as_path()))?;
        outputs.push((mode, out));
    }

    write_records_csv(&out_dir.join("records.csv"), &outputs)?;

    let mut infinite = 0;
    for (mode, out) in &outputs {
        infinite += out.infinite_sinr_count;
        for &precoder in &config.precoders {
            let values: Vec<f64> = out
                .records
                .iter()
                .filter(|r| r.precoder == precoder && (r.snr_db - cdf_snr_db).abs() < 1e-9)
                .map(|r| r.sinr_linear)
                .collect();
            let (finite, _) = finite_values(&values);
            let cdf = empirical_cdf(&finite)?;
            let path = out_dir.join(format!("cdf_{}_{}.csv", precoder.as_str(), mode.as_str()));
            let mut w = csv_writer(&path)?;
            w.write_record(["sinr_linear", "sinr_db", "probability"])
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            for (value, p) in cdf.points() {
                w.write_record([
                    value.to_string(),
                    (10.0 * value.log10()).to_string(),
                    p.to_string(),
                ])
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            }
            finish_csv(w, &path)?;
        }
    }
    write_manifest(out_dir, "simulate", config, Some(infinite))?;
    Ok(())
}

/// Ergodic sum spectral efficiency over the SNR grid for every precoder
/// and selected mode.
pub fn cmd_sweep_snr(
    config: &ScenarioConfig<f64>,
    selection: ScSelection,
    out_dir: &Path,
) -> Result<()> {
    create_dir(out_dir)?;
    let mut outputs = Vec::new();
    for mode in selection.modes() {
        outputs.push((mode, run_mode(config, mode, None)?));
    }
    let path = out_dir.join("sweep_snr.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["snr_db", "precoder", "sc_mode", "r_sum_bits_hz"])
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    for &snr in &config.snr_grid_db {
        for &precoder in &config.precoders {
            for (mode, out) in &outputs {
                let group: Vec<StepRecord<f64>> = out
                    .records
                    .iter()
                    .filter(|r| r.precoder == precoder && (r.snr_db - snr).abs() < 1e-9)
                    .cloned()
                    .collect();
                let r_sum = sum_spectral_efficiency(&group)?;
                w.write_record([
                    snr.to_string(),
                    precoder.as_str().to_string(),
                    mode.as_str().to_string(),
                    r_sum.to_string(),
                ])
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            }
        }
    }
    finish_csv(w, &path)?;
    let infinite = outputs.iter().map(|(_, o)| o.infinite_sinr_count).sum();
    write_manifest(out_dir, "sweep-snr", config, Some(infinite))?;
    Ok(())
}

/// The built-in default scenario as a TOML document.
pub fn default_config_toml() -> Result<String> {
    config::to_toml_string(&build_default_scenario::<f64>())
}
