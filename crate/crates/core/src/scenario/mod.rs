//! Experiment drivers behind the `mmwloc` command line: random-geometry
//! sweeps of exact vs asymptotic PEB, PEB heatmaps, the moving-receiver
//! heatmap and downlink/uplink PEB distributions.
//!
//! Unlike the core modules this layer is `f64` only.

pub mod config;

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::Config;

use crate::asymptotic::{efim_asym_numeric, efim_po_ktt, efim_pov_asym};
use crate::error::{Error, Result};
use crate::estimand::{efim, peb, transformation_matrix, Estimand, Ktt};
use crate::fim_exact::{fim_channel, fim_channel_expected, ChannelParams, Link, Mode};
use crate::geometry::{build_uca, build_ula, channel_geometry, path_gains, Side};
use crate::scalar::{dbm_to_watts, unit, wrap_angle};
use crate::waveform::{noise_var_from_density, subcarrier_range};
use crate::{
    ArrayGeometry, BeamConfig, ChannelGeometry, PathGains, Placement, ReferenceSignal,
    WaveformConfig, SPEED_OF_LIGHT,
};

/// Rejection-sampling budget of [`sample_geometry`].
pub const MAX_DRAWS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    RelErr,
    Grid,
    DynamicGrid,
    DlUlCdf,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::RelErr => "relerr",
            Experiment::Grid => "grid",
            Experiment::DynamicGrid => "dynamic-grid",
            Experiment::DlUlCdf => "dlul-cdf",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayKind {
    Ula,
    Uca,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArraySpec {
    pub kind: ArrayKind,
    pub n: usize,
    /// Element spacing in carrier wavelengths.
    pub spacing: f64,
    /// Orientation in radians.
    pub orientation: f64,
}

impl ArraySpec {
    pub fn uca(n: usize) -> Self {
        Self {
            kind: ArrayKind::Uca,
            n,
            spacing: 0.5,
            orientation: 0.0,
        }
    }

    pub fn ula(n: usize, orientation: f64) -> Self {
        Self {
            kind: ArrayKind::Ula,
            n,
            spacing: 0.5,
            orientation,
        }
    }

    pub fn build(&self, wavelength: f64) -> Result<ArrayGeometry> {
        let s = self.spacing * wavelength;
        match self.kind {
            ArrayKind::Ula => build_ula(self.n, s, self.orientation),
            ArrayKind::Uca => build_uca(self.n, s, self.orientation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMethod {
    Asymptotic,
    Exact,
}

/// Parses `none`, `perfect` or a clock-error standard deviation in seconds.
pub fn parse_ktt(s: &str) -> Result<Ktt<f64>> {
    match s.trim() {
        "none" => Ok(Ktt::None),
        "perfect" => Ok(Ktt::Perfect),
        t => match t.parse::<f64>() {
            Ok(sigma) if sigma > 0.0 && sigma.is_finite() => Ok(Ktt::Imperfect { sigma }),
            _ => Err(Error::Config(format!(
                "ktt must be none, perfect or a positive std in seconds, got `{t}`"
            ))),
        },
    }
}

/// Everything one experiment run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub experiment: Experiment,
    pub seed: u64,

    pub carrier_hz: f64,
    pub sample_rate_hz: f64,
    pub n_fft: usize,
    pub n_cp: usize,
    pub n_blocks: usize,
    pub subcarriers: Vec<i64>,
    /// Transmit power summed over all blocks.
    pub total_power_dbm: f64,
    pub noise_density_dbm_hz: f64,
    pub reflection: f64,

    /// Transmitter array (the BS in `dlul-cdf`).
    pub tx_array: ArraySpec,
    /// Receiver array (the UE in `dlul-cdf`; its orientation is swept).
    pub rx_array: ArraySpec,
    pub ktt: Ktt<f64>,

    pub antennas: Vec<usize>,
    pub trials: usize,
    pub radius_m: f64,
    /// Minimum distance between link ends and scatterers. `None` means the
    /// Fraunhofer distance of the larger array.
    pub min_distance_m: Option<f64>,
    pub min_separation_rad: f64,
    pub n_scatterers: usize,

    pub tx_position: [f64; 2],
    pub scatterers: Vec<[f64; 2]>,
    pub grid_min_m: f64,
    pub grid_max_m: f64,
    pub grid_step_m: f64,
    pub method: GridMethod,
    pub exclusion_m: f64,

    pub speed_mps: f64,
    pub heading_rad: f64,

    pub bs_beams: usize,
    pub ue_beams: usize,
    pub positions: usize,
    pub sector_m: f64,
    pub ue_orientations_deg: Vec<f64>,
    /// UE noise variance over BS noise variance.
    pub noise_ratio_ue: f64,

    /// SHA-256 of the effective configuration.
    pub digest: String,
}

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "carrier_hz",
    "sample_rate_hz",
    "n_fft",
    "n_cp",
    "n_blocks",
    "subcarriers",
    "total_power_dbm",
    "noise_density_dbm_hz",
    "reflection",
    "tx_array",
    "tx_antennas",
    "tx_orientation_deg",
    "rx_array",
    "rx_antennas",
    "rx_orientation_deg",
    "spacing_wavelengths",
    "ktt",
    "antennas",
    "trials",
    "radius_m",
    "min_distance_m",
    "min_separation_deg",
    "n_scatterers",
    "tx_position",
    "scatterers",
    "grid_min_m",
    "grid_max_m",
    "grid_step_m",
    "method",
    "exclusion_m",
    "speed_kmh",
    "heading_deg",
    "bs_beams",
    "ue_beams",
    "positions",
    "sector_m",
    "ue_orientations_deg",
    "noise_ratio_ue",
];

fn parse_subcarriers(s: &str) -> Result<Vec<i64>> {
    let bad = || {
        Error::Config(format!(
            "subcarriers: expected `start:step:end` or a list, got `{s}`"
        ))
    };
    if s.contains(':') {
        let v: Vec<i64> = s
            .split(':')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if v.len() != 3 {
            return Err(bad());
        }
        subcarrier_range(v[0], v[1], v[2]).map_err(|e| Error::Config(e.to_string()))
    } else {
        s.split(',')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect()
    }
}

fn parse_array_kind(s: &str) -> Result<ArrayKind> {
    match s.trim() {
        "ula" => Ok(ArrayKind::Ula),
        "uca" => Ok(ArrayKind::Uca),
        t => Err(Error::Config(format!(
            "array must be ula or uca, got `{t}`"
        ))),
    }
}

fn parse_method(s: &str) -> Result<GridMethod> {
    match s.trim() {
        "asymptotic" => Ok(GridMethod::Asymptotic),
        "exact" => Ok(GridMethod::Exact),
        t => Err(Error::Config(format!(
            "method must be asymptotic or exact, got `{t}`"
        ))),
    }
}

impl ScenarioSpec {
    /// Built-in defaults of each experiment.
    pub fn defaults(experiment: Experiment) -> Self {
        let mut s = Self {
            experiment,
            seed: 0,
            carrier_hz: 38e9,
            sample_rate_hz: 245.76e6,
            n_fft: 1024,
            n_cp: 72,
            n_blocks: 1,
            subcarriers: (-297..=297).step_by(6).collect(),
            total_power_dbm: 20.0,
            noise_density_dbm_hz: -170.0,
            reflection: 0.1,
            tx_array: ArraySpec::uca(32),
            rx_array: ArraySpec::uca(32),
            ktt: Ktt::Perfect,
            antennas: vec![16, 32, 64],
            trials: 200,
            radius_m: 50.0,
            min_distance_m: Some(0.41),
            min_separation_rad: 3f64.to_radians(),
            n_scatterers: 2,
            tx_position: [0.0, 0.0],
            scatterers: vec![[10.0, 0.0], [-8.0, 12.0]],
            grid_min_m: -30.0,
            grid_max_m: 30.0,
            grid_step_m: 1.0,
            method: GridMethod::Asymptotic,
            exclusion_m: 0.41,
            speed_mps: 150.0 / 3.6,
            heading_rad: PI / 4.0,
            bs_beams: 23,
            ue_beams: 13,
            positions: 500,
            sector_m: 20.0,
            ue_orientations_deg: vec![180.0, 210.0],
            noise_ratio_ue: 2.0,
            digest: String::new(),
        };
        match experiment {
            Experiment::RelErr => s.ktt = Ktt::None,
            Experiment::Grid => {}
            Experiment::DynamicGrid => {
                s.n_blocks = 32;
                s.ktt = Ktt::Imperfect { sigma: 2e-9 };
            }
            Experiment::DlUlCdf => {
                s.tx_array = ArraySpec::ula(32, -PI / 4.0);
                s.rx_array = ArraySpec::ula(16, PI);
                s.min_distance_m = None;
            }
        }
        s
    }

    /// Defaults overridden by `cfg`. Unknown keys are rejected.
    pub fn from_config(experiment: Experiment, cfg: &Config) -> Result<Self> {
        if let Some(k) = cfg.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        let mut s = Self::defaults(experiment);
        macro_rules! take {
            ($key:literal, $field:expr) => {
                if let Some(v) = cfg.get($key)? {
                    $field = v;
                }
            };
        }
        take!("seed", s.seed);
        take!("carrier_hz", s.carrier_hz);
        take!("sample_rate_hz", s.sample_rate_hz);
        take!("n_fft", s.n_fft);
        take!("n_cp", s.n_cp);
        take!("n_blocks", s.n_blocks);
        if let Some(v) = cfg.raw("subcarriers") {
            s.subcarriers = parse_subcarriers(v)?;
        }
        take!("total_power_dbm", s.total_power_dbm);
        take!("noise_density_dbm_hz", s.noise_density_dbm_hz);
        take!("reflection", s.reflection);
        if let Some(v) = cfg.raw("tx_array") {
            s.tx_array.kind = parse_array_kind(v)?;
        }
        if let Some(v) = cfg.raw("rx_array") {
            s.rx_array.kind = parse_array_kind(v)?;
        }
        take!("tx_antennas", s.tx_array.n);
        take!("rx_antennas", s.rx_array.n);
        if let Some(d) = cfg.get::<f64>("tx_orientation_deg")? {
            s.tx_array.orientation = d.to_radians();
        }
        if let Some(d) = cfg.get::<f64>("rx_orientation_deg")? {
            s.rx_array.orientation = d.to_radians();
        }
        if let Some(v) = cfg.get::<f64>("spacing_wavelengths")? {
            s.tx_array.spacing = v;
            s.rx_array.spacing = v;
        }
        if let Some(v) = cfg.raw("ktt") {
            s.ktt = parse_ktt(v)?;
        }
        if let Some(v) = cfg.get_list("antennas")? {
            s.antennas = v;
        }
        take!("trials", s.trials);
        take!("radius_m", s.radius_m);
        if let Some(v) = cfg.get::<f64>("min_distance_m")? {
            s.min_distance_m = Some(v);
        }
        if let Some(d) = cfg.get::<f64>("min_separation_deg")? {
            s.min_separation_rad = d.to_radians();
        }
        take!("n_scatterers", s.n_scatterers);
        if let Some(p) = cfg.get_points("tx_position")? {
            s.tx_position = *p
                .first()
                .ok_or_else(|| Error::Config("tx_position is empty".into()))?;
        }
        if let Some(p) = cfg.get_points("scatterers")? {
            s.scatterers = p;
        }
        take!("grid_min_m", s.grid_min_m);
        take!("grid_max_m", s.grid_max_m);
        take!("grid_step_m", s.grid_step_m);
        if let Some(v) = cfg.raw("method") {
            s.method = parse_method(v)?;
        }
        take!("exclusion_m", s.exclusion_m);
        if let Some(v) = cfg.get::<f64>("speed_kmh")? {
            s.speed_mps = v / 3.6;
        }
        if let Some(d) = cfg.get::<f64>("heading_deg")? {
            s.heading_rad = d.to_radians();
        }
        take!("bs_beams", s.bs_beams);
        take!("ue_beams", s.ue_beams);
        take!("positions", s.positions);
        take!("sector_m", s.sector_m);
        if let Some(v) = cfg.get_list::<f64>("ue_orientations_deg")? {
            s.ue_orientations_deg = v;
        }
        take!("noise_ratio_ue", s.noise_ratio_ue);

        let mut effective = cfg.clone();
        effective.set("experiment", experiment.name());
        s.digest = effective.digest();
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.grid_step_m > 0.0) || self.grid_max_m < self.grid_min_m {
            return bad("grid step must be positive and grid bounds ordered");
        }
        if self.trials == 0 || self.positions == 0 {
            return bad("trial and position counts must be at least 1");
        }
        if self.antennas.is_empty() || self.antennas.iter().any(|&n| n < 2) {
            return bad("antenna counts must be at least 2");
        }
        if !(self.radius_m > 0.0) || !(self.sector_m > 0.0) {
            return bad("sampling region must have positive size");
        }
        if self.ue_orientations_deg.is_empty() {
            return bad("need at least one UE orientation");
        }
        if !(self.noise_ratio_ue > 0.0) || !(self.speed_mps >= 0.0) || !(self.exclusion_m >= 0.0) {
            return bad("noise ratio, speed and exclusion radius must be nonnegative");
        }
        self.waveform(self.n_blocks)
            .map(|_| ())
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn noise_var(&self) -> f64 {
        noise_var_from_density(dbm_to_watts(self.noise_density_dbm_hz), self.sample_rate_hz)
    }

    /// Waveform with `n_blocks` blocks sharing the total power.
    pub fn waveform(&self, n_blocks: usize) -> Result<WaveformConfig> {
        let per_block = dbm_to_watts(self.total_power_dbm) / n_blocks.max(1) as f64;
        WaveformConfig::new(
            self.n_fft,
            self.n_cp,
            n_blocks,
            self.sample_rate_hz,
            self.carrier_hz,
            self.subcarriers.clone(),
            per_block,
            self.noise_var(),
        )
    }

    fn min_distance(&self, arrays: &[&ArrayGeometry]) -> f64 {
        self.min_distance_m.unwrap_or_else(|| {
            arrays
                .iter()
                .map(|a| a.fraunhofer_distance(self.wavelength()))
                .fold(0.0, f64::max)
        })
    }
}

/// Independent stream `stream` of the run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn point_in_disk<R: Rng + ?Sized>(rng: &mut R, center: Vector2<f64>, radius: f64) -> Vector2<f64> {
    let r = radius * rng.random::<f64>().sqrt();
    let phi = rng.random_range(-PI..PI);
    center + unit(phi) * r
}

fn separated(angles: &[f64], min_sep: f64) -> bool {
    angles.iter().enumerate().all(|(i, &a)| {
        angles[i + 1..]
            .iter()
            .all(|&b| wrap_angle(a - b).abs() >= min_sep)
    })
}

fn direction(from: Vector2<f64>, to: Vector2<f64>) -> f64 {
    let d = to - from;
    d.y.atan2(d.x)
}

/// Random receiver and scatterers in a disk around the transmitter with
/// minimum distances and pairwise path separation at both ends.
pub fn sample_geometry<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    min_distance: f64,
    rng: &mut R,
) -> Result<Placement> {
    if min_distance >= spec.radius_m {
        return Err(Error::Infeasible(format!(
            "minimum distance {min_distance} m is not below the radius {} m",
            spec.radius_m
        )));
    }
    let tx = Vector2::from(spec.tx_position);
    for _ in 0..MAX_DRAWS {
        let rx = point_in_disk(rng, tx, spec.radius_m);
        let sc: Vec<_> = (0..spec.n_scatterers)
            .map(|_| point_in_disk(rng, tx, spec.radius_m))
            .collect();
        let far = (rx - tx).norm() > min_distance
            && sc
                .iter()
                .all(|s| (s - tx).norm() > min_distance && (s - rx).norm() > min_distance);
        if !far {
            continue;
        }
        let mut at_tx = vec![direction(tx, rx)];
        let mut at_rx = vec![direction(rx, tx)];
        at_tx.extend(sc.iter().map(|&s| direction(tx, s)));
        at_rx.extend(sc.iter().map(|&s| direction(rx, s)));
        if separated(&at_tx, spec.min_separation_rad) && separated(&at_rx, spec.min_separation_rad)
        {
            return Ok(Placement::new(tx, rx, sc));
        }
    }
    Err(Error::Infeasible(format!(
        "no admissible geometry in {MAX_DRAWS} draws"
    )))
}

/// `(PEB_as - PEB_ex) / PEB_ex`.
pub fn relative_error(exact_peb: f64, asym_peb: f64) -> Result<f64> {
    if !(exact_peb > 0.0 && exact_peb.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "exact PEB must be positive and finite, got {exact_peb}"
        )));
    }
    Ok((asym_peb - exact_peb) / exact_peb)
}

/// `n_antennas x n_beams` matrix of DFT beams centred on broadside:
/// `[P]_{k,j} = exp(-j 2 pi k (j - (M-1)/2) / N)`.
pub fn dft_codebook(n_antennas: usize, n_beams: usize) -> Result<DMatrix<Complex<f64>>> {
    if n_beams == 0 || n_beams > n_antennas {
        return Err(Error::InvalidArgument(format!(
            "{n_beams} beams for {n_antennas} antennas"
        )));
    }
    let centre = (n_beams as f64 - 1.0) / 2.0;
    Ok(DMatrix::from_fn(n_antennas, n_beams, |k, j| {
        Complex::from_polar(
            1.0,
            -2.0 * PI * k as f64 * (j as f64 - centre) / n_antennas as f64,
        )
    }))
}

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    /// Column names carry their unit as a suffix (`_m`, `_deg`).
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub seed: u64,
    pub digest: String,
}

impl ResultTable {
    pub fn new(columns: &[&str], seed: u64, digest: &str) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            seed,
            digest: digest.into(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "row of {} for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        if row.iter().any(|c| matches!(c, Cell::Num(v) if v.is_nan())) {
            return Err(Error::InvalidArgument("NaN in result row".into()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    /// Numeric column; text cells are skipped.
    pub fn numbers(&self, name: &str) -> Option<Vec<f64>> {
        Some(
            self.column(name)?
                .into_iter()
                .filter_map(Cell::as_f64)
                .collect(),
        )
    }

    /// Header plus rows, LF line endings, infinite values as `inf`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let field = |c: &Cell| match c {
            Cell::Num(v) if v.is_infinite() => (if *v > 0.0 { "inf" } else { "-inf" }).to_string(),
            Cell::Num(v) => v.to_string(),
            Cell::Text(t) => t.clone(),
        };
        // writing to memory cannot fail
        w.write_record(&self.columns).unwrap();
        for row in &self.rows {
            w.write_record(row.iter().map(field)).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

fn peb_or_inf(r: Result<f64>) -> Result<(f64, &'static str)> {
    match r {
        Ok(v) if v.is_finite() => Ok((v, "")),
        Ok(_) => Ok((f64::INFINITY, "singular")),
        Err(Error::NotIdentifiable { .. }) => Ok((f64::INFINITY, "not-identifiable")),
        Err(e) => Err(e),
    }
}

fn exact_peb(
    cfg: &WaveformConfig,
    arrays: (&ArrayGeometry, &ArrayGeometry),
    geom: &ChannelGeometry,
    gains: &PathGains,
    estimand: &Estimand<f64>,
) -> Result<f64> {
    let beams = BeamConfig::identity(arrays.0.len(), arrays.1.len());
    let link = Link::new(cfg, &beams, arrays.0, arrays.1)?;
    let params = ChannelParams::from_geometry(geom, gains, 0.0)?;
    let j = fim_channel_expected(link, &params, estimand.mode)?;
    let t = transformation_matrix(geom, estimand)?;
    peb(&efim(&j, &t, estimand.n_interest())?)
}

/// Exact (expected FIM) vs asymptotic PEB of a static receiver over random
/// geometries, for every antenna count. Geometry and gain phases of trial
/// `t` do not depend on the antenna count.
pub fn run_relerr(spec: &ScenarioSpec) -> Result<ResultTable> {
    let cfg = spec.waveform(spec.n_blocks)?;
    let lambda = spec.wavelength();
    let estimand = Estimand::new(Side::Rx, Mode::Static, spec.ktt);
    let min_distance = spec.min_distance_m.unwrap_or(0.0);
    let trials: Vec<(Placement, u64)> = (0..spec.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(spec.seed, t);
            let pl = sample_geometry(spec, min_distance, &mut rng)?;
            Ok((pl, rng.random()))
        })
        .collect::<Result<_>>()?;
    let mut table = ResultTable::new(
        &["n_antennas", "trial", "peb_exact_m", "peb_asym_m", "relerr"],
        spec.seed,
        &spec.digest,
    );
    for &n in &spec.antennas {
        let tx = ArraySpec { n, ..spec.tx_array }.build(lambda)?;
        let rx = ArraySpec { n, ..spec.rx_array }.build(lambda)?;
        let rows: Vec<Vec<Cell>> = trials
            .par_iter()
            .enumerate()
            .map(|(t, (pl, gain_seed))| {
                let geom = channel_geometry(pl, (&tx, &rx))?;
                let gains = path_gains(
                    &geom,
                    spec.reflection,
                    lambda,
                    &mut ChaCha8Rng::seed_from_u64(*gain_seed),
                )?;
                let (ex, _) = peb_or_inf(exact_peb(&cfg, (&tx, &rx), &geom, &gains, &estimand))?;
                let asym = efim_po_ktt(&cfg, (&tx, &rx), &geom, &gains, spec.ktt)
                    .and_then(|a| peb(&a.total));
                let (asym, _) = peb_or_inf(asym)?;
                let rel = if ex.is_finite() && asym.is_finite() {
                    relative_error(ex, asym)?
                } else {
                    f64::INFINITY
                };
                Ok(vec![
                    (n as f64).into(),
                    (t as f64).into(),
                    ex.into(),
                    asym.into(),
                    rel.into(),
                ])
            })
            .collect::<Result<_>>()?;
        for r in rows {
            table.push(r)?;
        }
    }
    Ok(table)
}

/// Grid coordinates `min, min + step, ...` up to `max` inclusive.
pub fn grid_axis(min: f64, max: f64, step: f64) -> Vec<f64> {
    let n = ((max - min) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| min + k as f64 * step).collect()
}

fn grid_points(spec: &ScenarioSpec) -> Vec<[f64; 2]> {
    let axis = grid_axis(spec.grid_min_m, spec.grid_max_m, spec.grid_step_m);
    axis.iter()
        .flat_map(|&y| axis.iter().map(move |&x| [x, y]))
        .collect()
}

// Why a grid point has no bound, if it has none.
fn inadmissible(spec: &ScenarioSpec, p: Vector2<f64>) -> Option<&'static str> {
    let tx = Vector2::from(spec.tx_position);
    let near = (p - tx).norm() < spec.exclusion_m
        || spec
            .scatterers
            .iter()
            .any(|s| (p - Vector2::from(*s)).norm() < spec.exclusion_m);
    near.then_some("near-field")
}

fn grid_placement(spec: &ScenarioSpec, p: Vector2<f64>) -> Placement {
    let sc = spec.scatterers.iter().map(|s| Vector2::from(*s)).collect();
    Placement::new(Vector2::from(spec.tx_position), p, sc)
}

fn unresolvable(geom: &ChannelGeometry) -> bool {
    geom.paths.iter().skip(1).any(|p| p.collinear)
}

/// Static receiver PEB over a square grid with fixed transmitter and
/// scatterers. Columns `x_m, y_m, peb_m, note`.
pub fn run_grid(spec: &ScenarioSpec) -> Result<ResultTable> {
    let cfg = spec.waveform(spec.n_blocks)?;
    let lambda = spec.wavelength();
    let tx = spec.tx_array.build(lambda)?;
    let rx = spec.rx_array.build(lambda)?;
    let estimand = Estimand::new(Side::Rx, Mode::Static, spec.ktt);
    let rows: Vec<Vec<Cell>> = grid_points(spec)
        .par_iter()
        .enumerate()
        .map(|(i, &[x, y])| {
            let p = Vector2::new(x, y);
            let (v, note) = match inadmissible(spec, p) {
                Some(why) => (f64::INFINITY, why),
                None => {
                    let geom = channel_geometry(&grid_placement(spec, p), (&tx, &rx))?;
                    if unresolvable(&geom) {
                        (f64::INFINITY, "unresolvable-path")
                    } else {
                        let gains = path_gains(
                            &geom,
                            spec.reflection,
                            lambda,
                            &mut stream_rng(spec.seed, i as u64),
                        )?;
                        let r = match spec.method {
                            GridMethod::Asymptotic => {
                                efim_po_ktt(&cfg, (&tx, &rx), &geom, &gains, spec.ktt)
                                    .and_then(|a| peb(&a.total))
                            }
                            GridMethod::Exact => {
                                exact_peb(&cfg, (&tx, &rx), &geom, &gains, &estimand)
                            }
                        };
                        peb_or_inf(r)?
                    }
                }
            };
            Ok(vec![x.into(), y.into(), v.into(), note.into()])
        })
        .collect::<Result<_>>()?;
    let mut table = ResultTable::new(&["x_m", "y_m", "peb_m", "note"], spec.seed, &spec.digest);
    for r in rows {
        table.push(r)?;
    }
    Ok(table)
}

/// Moving receiver PEB (position, orientation and velocity unknown) over the
/// grid, next to the static PEB with the same waveform and clock prior.
/// Columns `x_m, y_m, peb_m, peb_static_m, note`. Asymptotic route only.
pub fn run_dynamic_grid(spec: &ScenarioSpec) -> Result<ResultTable> {
    let cfg = spec.waveform(spec.n_blocks)?;
    let lambda = spec.wavelength();
    let tx = spec.tx_array.build(lambda)?;
    let rx = spec.rx_array.build(lambda)?;
    let velocity = unit(spec.heading_rad) * spec.speed_mps;
    let estimand = Estimand::new(Side::Rx, Mode::Dynamic, spec.ktt);
    let rows: Vec<Vec<Cell>> = grid_points(spec)
        .par_iter()
        .enumerate()
        .map(|(i, &[x, y])| {
            let p = Vector2::new(x, y);
            let (dynamic, fixed, note) = match inadmissible(spec, p) {
                Some(why) => (f64::INFINITY, f64::INFINITY, why),
                None => {
                    let pl = grid_placement(spec, p).with_motion(velocity, Side::Rx);
                    let geom = channel_geometry(&pl, (&tx, &rx))?;
                    if unresolvable(&geom) {
                        (f64::INFINITY, f64::INFINITY, "unresolvable-path")
                    } else {
                        let gains = path_gains(
                            &geom,
                            spec.reflection,
                            lambda,
                            &mut stream_rng(spec.seed, i as u64),
                        )?;
                        let d = match spec.ktt {
                            Ktt::None => efim_pov_asym(&cfg, (&tx, &rx), &geom, &gains)
                                .and_then(|a| peb(&a.total)),
                            _ => efim_asym_numeric(&cfg, (&tx, &rx), &geom, &gains, &estimand)
                                .and_then(|e| peb(&e)),
                        };
                        let s = efim_po_ktt(&cfg, (&tx, &rx), &geom, &gains, spec.ktt)
                            .and_then(|a| peb(&a.total));
                        let (d, nd) = peb_or_inf(d)?;
                        let (s, ns) = peb_or_inf(s)?;
                        (d, s, if nd.is_empty() { ns } else { nd })
                    }
                }
            };
            Ok(vec![
                x.into(),
                y.into(),
                dynamic.into(),
                fixed.into(),
                note.into(),
            ])
        })
        .collect::<Result<_>>()?;
    let mut table = ResultTable::new(
        &["x_m", "y_m", "peb_m", "peb_static_m", "note"],
        spec.seed,
        &spec.digest,
    );
    for r in rows {
        table.push(r)?;
    }
    Ok(table)
}

/// Downlink and uplink UE PEBs for one UE orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct DlUlPebs {
    /// UE orientation in degrees.
    pub orientation_deg: f64,
    pub positions: Vec<[f64; 2]>,
    pub downlink: Vec<f64>,
    pub uplink: Vec<f64>,
}

/// UE transmit power that makes uplink and downlink information equal.
pub fn matched_ue_power(
    power_bs: f64,
    noise_var_bs: f64,
    noise_var_ue: f64,
    beams_bs: usize,
    beams_ue: usize,
) -> f64 {
    power_bs * (noise_var_bs / noise_var_ue) * (beams_ue as f64 / beams_bs as f64)
}

/// Exact beamformed PEB of a UE in a square sector with the BS at the
/// corner, LOS only and perfect transmit-time knowledge, computed once with
/// the BS transmitting (downlink) and once with the UE transmitting
/// (uplink) under the matched power rule.
pub fn dlul_pebs(spec: &ScenarioSpec) -> Result<Vec<DlUlPebs>> {
    let lambda = spec.wavelength();
    let bs = spec.tx_array.build(lambda)?;
    let ue0 = spec.rx_array.build(lambda)?;
    let p_bs = dft_codebook(bs.len(), spec.bs_beams)?;
    let p_ue = dft_codebook(ue0.len(), spec.ue_beams)?;
    let dl_beams = BeamConfig::new(p_bs.clone(), p_ue.transpose())?;
    let ul_beams = BeamConfig::new(p_ue, p_bs.transpose())?;

    let var_bs = spec.noise_var();
    let var_ue = var_bs * spec.noise_ratio_ue;
    let base = spec.waveform(spec.n_blocks)?;
    let dl_cfg = WaveformConfig {
        noise_var: var_ue,
        ..base.clone()
    };
    let ul_cfg = WaveformConfig {
        noise_var: var_bs,
        tx_power: matched_ue_power(base.tx_power, var_bs, var_ue, spec.bs_beams, spec.ue_beams),
        ..base
    };
    let dl_signal = ReferenceSignal::beam_sweep(&dl_cfg, &dl_beams);
    let ul_signal = ReferenceSignal::beam_sweep(&ul_cfg, &ul_beams);

    let min_distance = spec.min_distance(&[&bs, &ue0]);
    let bs_pos = Vector2::from(spec.tx_position);
    let positions: Vec<[f64; 2]> = (0..spec.positions as u64)
        .map(|i| {
            let mut rng = stream_rng(spec.seed, i);
            for _ in 0..MAX_DRAWS {
                let p =
                    bs_pos + Vector2::new(rng.random::<f64>(), rng.random::<f64>()) * spec.sector_m;
                if (p - bs_pos).norm() > min_distance {
                    return Ok([p.x, p.y]);
                }
            }
            Err(Error::Infeasible(
                "no UE position outside the minimum distance".into(),
            ))
        })
        .collect::<Result<_>>()?;

    let dl_est = Estimand::new(Side::Rx, Mode::Static, Ktt::Perfect);
    let ul_est = Estimand::new(Side::Tx, Mode::Static, Ktt::Perfect);
    let one_peb = |cfg: &WaveformConfig,
                   beams: &BeamConfig,
                   signal: &ReferenceSignal,
                   pl: &Placement,
                   arrays: (&ArrayGeometry, &ArrayGeometry),
                   est: &Estimand<f64>,
                   stream: u64|
     -> Result<f64> {
        let geom = channel_geometry(pl, arrays)?;
        let gains = path_gains(
            &geom,
            spec.reflection,
            lambda,
            &mut stream_rng(spec.seed, stream),
        )?;
        let params = ChannelParams::from_geometry(&geom, &gains, 0.0)?;
        let j = fim_channel(
            Link::new(cfg, beams, arrays.0, arrays.1)?,
            &params,
            signal,
            Mode::Static,
        )?;
        let t = transformation_matrix(&geom, est)?;
        Ok(peb_or_inf(peb(&efim(&j, &t, est.n_interest())?))?.0)
    };

    spec.ue_orientations_deg
        .iter()
        .map(|&o| {
            let ue = ue0.with_orientation(o.to_radians());
            let pairs: Vec<(f64, f64)> = positions
                .par_iter()
                .enumerate()
                .map(|(i, &xy)| {
                    let p = Vector2::from(xy);
                    let dl = one_peb(
                        &dl_cfg,
                        &dl_beams,
                        &dl_signal,
                        &Placement::new(bs_pos, p, vec![]),
                        (&bs, &ue),
                        &dl_est,
                        i as u64,
                    )?;
                    let ul = one_peb(
                        &ul_cfg,
                        &ul_beams,
                        &ul_signal,
                        &Placement::new(p, bs_pos, vec![]),
                        (&ue, &bs),
                        &ul_est,
                        i as u64,
                    )?;
                    Ok((dl, ul))
                })
                .collect::<Result<_>>()?;
            let (downlink, uplink) = pairs.into_iter().unzip();
            Ok(DlUlPebs {
                orientation_deg: o,
                positions: positions.clone(),
                downlink,
                uplink,
            })
        })
        .collect()
}

// PEBs this close are one value; downlink and uplink twins differ by round-off
const TIE_REL: f64 = 1e-9;

fn empirical_cdf(sorted: &[f64], v: f64) -> f64 {
    let cut = v + v.abs() * TIE_REL;
    sorted.partition_point(|&x| x <= cut) as f64 / sorted.len() as f64
}

/// Empirical CDFs of downlink and uplink PEB evaluated at every observed
/// PEB, values within a relative 1e-9 merged. Columns
/// `orientation_deg, peb_m, cdf_dl, cdf_ul`.
pub fn run_dlul_cdf(spec: &ScenarioSpec) -> Result<ResultTable> {
    let mut table = ResultTable::new(
        &["orientation_deg", "peb_m", "cdf_dl", "cdf_ul"],
        spec.seed,
        &spec.digest,
    );
    for d in dlul_pebs(spec)? {
        let sort = |v: &[f64]| {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            s
        };
        let (dl, ul) = (sort(&d.downlink), sort(&d.uplink));
        let mut all = [dl.clone(), ul.clone()].concat();
        all.sort_by(f64::total_cmp);
        all.dedup_by(|b, a| *b <= *a + a.abs() * TIE_REL);
        let deg = d.orientation_deg;
        for v in all {
            table.push(vec![
                deg.into(),
                v.into(),
                empirical_cdf(&dl, v).into(),
                empirical_cdf(&ul, v).into(),
            ])?;
        }
    }
    Ok(table)
}

/// Runs the experiment named in `spec`.
pub fn run(spec: &ScenarioSpec) -> Result<ResultTable> {
    match spec.experiment {
        Experiment::RelErr => run_relerr(spec),
        Experiment::Grid => run_grid(spec),
        Experiment::DynamicGrid => run_dynamic_grid(spec),
        Experiment::DlUlCdf => run_dlul_cdf(spec),
    }
}
