//! Scenario description and its TOML configuration format.
//!
//! Field names carry their units (`fc_hz`, `position_m`, ...). Antenna
//! spacing may be written symbolically relative to the carrier wavelength,
//! e.g. `spacing_m = "lambda/2.1"`. Two scenarios are bundled: `canonical`
//! (bounds) and `estimation` (estimator runs).

use std::path::Path;

use serde::Deserialize;

use crate::channel::{DisturbanceCov, DmcParams, Material, Scatterer};
use crate::error::{Error, Result};
use crate::fim::SyncMode;
use crate::geometry::{enumerate_paths, Stripe, Vec3, Wall, SPEED_OF_LIGHT};
use crate::signal::Waveform;

pub const CANONICAL_TOML: &str = include_str!("../../scenarios/canonical.toml");
pub const ESTIMATION_TOML: &str = include_str!("../../scenarios/estimation.toml");

/// Axis-aligned search region and estimator grid settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub room_min: Vec3,
    pub room_max: Vec3,
    /// Grid step of the noncoherent position search (m).
    pub ncp_step: f64,
    /// Half-width of the coherent search box around the noncoherent estimate (m).
    pub cp_half_width: f64,
    /// Coherent grid step in wavelengths.
    pub cp_step_wavelengths: f64,
    /// Number of coherent grid minima refined locally.
    pub cp_candidates: usize,
    /// Scatterer grid step (m).
    pub sp_step: f64,
    /// IFFT length as a multiple of `K`.
    pub ifft_factor: usize,
    /// Evaluation budget for each simplex refinement.
    pub max_evals: usize,
}

impl SearchConfig {
    fn with_room(room_min: Vec3, room_max: Vec3) -> Self {
        Self {
            room_min,
            room_max,
            ncp_step: 0.25,
            cp_half_width: 0.3,
            cp_step_wavelengths: 0.25,
            cp_candidates: 64,
            sp_step: 0.1,
            ifft_factor: 16,
            max_evals: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub stripes: Vec<Stripe>,
    pub walls: Vec<Wall>,
    pub wall_names: Vec<String>,
    pub materials: Vec<Material>,
    pub ue_position: Vec3,
    pub delta_tau: f64,
    /// One entry (shared by all stripes) or one per stripe.
    pub delta_phi: Vec<f64>,
    pub scatterers: Vec<Scatterer>,
    pub waveform: Waveform,
    pub dmc_beta_d: f64,
    pub dmc_tau_d: f64,
    pub dnr_db: f64,
    pub sdnr_db: f64,
    pub pol_rs: Vec3,
    pub pol_ue: Vec3,
    pub sync_mode: SyncMode,
    /// 3, or 2 when the UE height is known.
    pub dim: usize,
    pub search: SearchConfig,
}

/// Which propagation components a bound or sweep includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum MultipathCase {
    /// LoS only.
    LosOnly,
    /// LoS and wall reflections.
    LosRp,
    /// LoS, reflections and scatterers.
    Full,
}

impl MultipathCase {
    pub fn label(&self) -> &'static str {
        match self {
            MultipathCase::LosOnly => "L--",
            MultipathCase::LosRp => "LR-",
            MultipathCase::Full => "LRS",
        }
    }
}

impl Scenario {
    pub fn canonical() -> Self {
        Self::from_toml_str(CANONICAL_TOML).expect("bundled canonical scenario is valid")
    }

    pub fn estimation() -> Self {
        Self::from_toml_str(ESTIMATION_TOML).expect("bundled estimation scenario is valid")
    }

    pub fn num_stripes(&self) -> usize {
        self.stripes.len()
    }

    pub fn num_scatterers(&self) -> usize {
        self.scatterers.len()
    }

    /// Number of specular components (LoS + reflections) for stripe `n`.
    pub fn num_specular(&self, n: usize) -> usize {
        crate::geometry::num_specular(&self.stripes[n], &self.walls)
    }

    /// Total components for stripe `n`.
    pub fn num_components(&self, n: usize) -> usize {
        self.num_specular(n) + self.num_scatterers()
    }

    /// Phase offset applied at stripe `n`.
    pub fn delta_phi_at(&self, n: usize) -> f64 {
        if self.delta_phi.len() == 1 {
            self.delta_phi[0]
        } else {
            self.delta_phi[n]
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.waveform.noise_power()
    }

    pub fn dmc_params(&self) -> DmcParams {
        DmcParams {
            alpha1: 10f64.powf(self.dnr_db / 10.0) * self.sigma2(),
            beta_d: self.dmc_beta_d,
            tau_d: self.dmc_tau_d,
        }
    }

    pub fn disturbance(&self, n: usize) -> Result<DisturbanceCov> {
        crate::channel::disturbance_covariance(
            &self.dmc_params(),
            self.sigma2(),
            &self.waveform.pilots,
            self.waveform.delta_f,
            self.stripes[n].num_antennas,
        )
    }

    /// Copy with a different total bandwidth (subcarrier count unchanged).
    pub fn with_bandwidth(&self, bandwidth: f64) -> Self {
        let mut s = self.clone();
        s.waveform.delta_f = bandwidth / s.waveform.num_subcarriers() as f64;
        s
    }

    /// Copy with `m` antennas per stripe.
    pub fn with_antennas(&self, m: usize) -> Self {
        let mut s = self.clone();
        for st in &mut s.stripes {
            st.num_antennas = m;
        }
        s
    }

    pub fn with_ue(&self, p: Vec3) -> Self {
        let mut s = self.clone();
        s.ue_position = p;
        s
    }

    pub fn with_case(&self, case: MultipathCase) -> Self {
        let mut s = self.clone();
        match case {
            MultipathCase::LosOnly => {
                s.walls.clear();
                s.wall_names.clear();
                s.scatterers.clear();
                for st in &mut s.stripes {
                    st.mounted_wall = None;
                }
            }
            MultipathCase::LosRp => s.scatterers.clear(),
            MultipathCase::Full => {}
        }
        s
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::SchemaError {
            path: String::new(),
            msg: e.message().to_string(),
        })?;
        let raw = RawScenario::from_table(value)?;
        raw.build()
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.materials {
            m.validate()?;
        }
        for (name, v) in [("rs", &self.pol_rs), ("ue", &self.pol_ue)] {
            if (v.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::SemanticError(format!("polarization `{name}` is not a unit vector")));
            }
        }
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::SemanticError(format!("dim must be 2 or 3, got {}", self.dim)));
        }
        if self.stripes.is_empty() {
            return Err(Error::SemanticError("at least one stripe is required".into()));
        }
        if self.delta_phi.len() != 1 && self.delta_phi.len() != self.stripes.len() {
            return Err(Error::SemanticError(
                "phase offset must be a scalar or have one entry per stripe".into(),
            ));
        }
        let (lo, hi) = (&self.search.room_min, &self.search.room_max);
        for (i, st) in self.stripes.iter().enumerate() {
            if st.phase_center.z < lo.z {
                return Err(Error::SemanticError(format!("stripe {i} is below the floor")));
            }
            if let Some(w) = st.mounted_wall {
                if w >= self.walls.len() {
                    return Err(Error::SemanticError(format!("stripe {i} mounted on unknown wall")));
                }
            }
        }
        let inside = |p: &Vec3| (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i]);
        if !inside(&self.ue_position) {
            return Err(Error::SemanticError("UE lies outside the room".into()));
        }
        for (j, sp) in self.scatterers.iter().enumerate() {
            if !(sp.radius > 0.0) {
                return Err(Error::SemanticError(format!("scatterer {j} has non-positive radius")));
            }
        }
        for n in 0..self.stripes.len() {
            enumerate_paths(self, n)?;
        }
        Ok(())
    }
}

/// Loads a scenario from a TOML file, or one of the bundled names.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    match path.to_str() {
        Some("canonical") => return Ok(Scenario::canonical()),
        Some("estimation") => return Ok(Scenario::estimation()),
        _ => {}
    }
    let text = std::fs::read_to_string(path)?;
    Scenario::from_toml_str(&text)
}

/// Parses `"lambda"`, `"lambda/2.1"`, `"lambda*0.5"` or a plain number of metres.
pub fn parse_length(expr: &str, lambda: f64) -> Option<f64> {
    let e = expr.trim();
    if let Some(rest) = e.strip_prefix("lambda") {
        let rest = rest.trim();
        if rest.is_empty() {
            return Some(lambda);
        }
        if let Some(div) = rest.strip_prefix('/') {
            return div.trim().parse::<f64>().ok().filter(|v| *v != 0.0).map(|v| lambda / v);
        }
        if let Some(mul) = rest.strip_prefix('*') {
            return mul.trim().parse::<f64>().ok().map(|v| lambda * v);
        }
        return None;
    }
    e.parse::<f64>().ok()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWaveform {
    fc_hz: f64,
    subcarriers: usize,
    #[serde(default)]
    bandwidth_hz: Option<f64>,
    #[serde(default)]
    subcarrier_spacing_hz: Option<f64>,
    #[serde(default = "default_temperature")]
    temperature_k: f64,
}

fn default_temperature() -> f64 {
    290.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLevels {
    sdnr_db: f64,
    dnr_db: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDmc {
    beta_d: f64,
    tau_d: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolarization {
    rs: [f64; 3],
    ue: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

impl ScalarOrList {
    fn into_vec(self) -> Vec<f64> {
        match self {
            ScalarOrList::Scalar(v) => vec![v],
            ScalarOrList::List(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUe {
    position_m: [f64; 3],
    clock_offset_s: f64,
    #[serde(default)]
    phase_offset_rad: Option<ScalarOrList>,
    #[serde(default)]
    phase_offset_deg: Option<ScalarOrList>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProcessing {
    sync: String,
    dim: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    name: String,
    eps_r: f64,
    mu_r: f64,
    sigma_s_per_m: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWall {
    #[serde(default)]
    name: Option<String>,
    point_m: [f64; 3],
    normal: [f64; 3],
    material: String,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum LengthSpec {
    Number(f64),
    Expr(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStripe {
    phase_center_m: [f64; 3],
    #[serde(default)]
    azimuth_rad: Option<f64>,
    #[serde(default)]
    azimuth_deg: Option<f64>,
    antennas: usize,
    spacing_m: LengthSpec,
    #[serde(default)]
    mounted_wall: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScatterer {
    position_m: [f64; 3],
    radius_m: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSearch {
    room_min_m: [f64; 3],
    room_max_m: [f64; 3],
    #[serde(default)]
    ncp_step_m: Option<f64>,
    #[serde(default)]
    cp_half_width_m: Option<f64>,
    #[serde(default)]
    cp_step_wavelengths: Option<f64>,
    #[serde(default)]
    cp_candidates: Option<usize>,
    #[serde(default)]
    sp_step_m: Option<f64>,
    #[serde(default)]
    ifft_factor: Option<usize>,
    #[serde(default)]
    max_evals: Option<usize>,
}

struct RawScenario {
    name: String,
    waveform: RawWaveform,
    levels: RawLevels,
    dmc: RawDmc,
    polarization: RawPolarization,
    ue: RawUe,
    processing: RawProcessing,
    materials: Vec<RawMaterial>,
    walls: Vec<RawWall>,
    stripes: Vec<RawStripe>,
    scatterers: Vec<RawScatterer>,
    search: RawSearch,
}

fn schema_err(path: &str, e: impl std::fmt::Display) -> Error {
    let msg = e.to_string();
    // Name the offending field when serde reports it.
    let field = ["missing field `", "unknown field `"]
        .iter()
        .find_map(|pat| {
            msg.find(pat).and_then(|i| {
                let rest = &msg[i + pat.len()..];
                rest.find('`').map(|j| rest[..j].to_string())
            })
        });
    let path = match field {
        Some(f) if path.is_empty() => f,
        Some(f) => format!("{path}.{f}"),
        None => path.to_string(),
    };
    Error::SchemaError { path, msg }
}

fn take<T: serde::de::DeserializeOwned>(table: &mut toml::Table, key: &str) -> Result<T> {
    let v = table.remove(key).ok_or_else(|| Error::SchemaError {
        path: key.to_string(),
        msg: format!("missing field `{key}`"),
    })?;
    v.try_into().map_err(|e| schema_err(key, e))
}

fn take_list<T: serde::de::DeserializeOwned>(table: &mut toml::Table, key: &str, required: bool) -> Result<Vec<T>> {
    let Some(v) = table.remove(key) else {
        if required {
            return Err(Error::SchemaError {
                path: key.to_string(),
                msg: format!("missing field `{key}`"),
            });
        }
        return Ok(Vec::new());
    };
    let toml::Value::Array(items) = v else {
        return Err(Error::SchemaError {
            path: key.to_string(),
            msg: "expected an array of tables".into(),
        });
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, item)| item.try_into().map_err(|e| schema_err(&format!("{key}[{i}]"), e)))
        .collect()
}

impl RawScenario {
    fn from_table(mut t: toml::Table) -> Result<Self> {
        let name = match t.remove("name") {
            Some(toml::Value::String(s)) => s,
            Some(_) => {
                return Err(Error::SchemaError {
                    path: "name".into(),
                    msg: "expected a string".into(),
                })
            }
            None => "unnamed".into(),
        };
        let raw = RawScenario {
            name,
            waveform: take(&mut t, "waveform")?,
            levels: take(&mut t, "levels")?,
            dmc: take(&mut t, "dmc")?,
            polarization: take(&mut t, "polarization")?,
            ue: take(&mut t, "ue")?,
            processing: take(&mut t, "processing")?,
            materials: take_list(&mut t, "materials", false)?,
            walls: take_list(&mut t, "walls", false)?,
            stripes: take_list(&mut t, "stripes", true)?,
            scatterers: take_list(&mut t, "scatterers", false)?,
            search: take(&mut t, "search")?,
        };
        if let Some(k) = t.keys().next() {
            return Err(Error::SchemaError {
                path: k.clone(),
                msg: format!("unknown field `{k}`"),
            });
        }
        Ok(raw)
    }

    fn build(self) -> Result<Scenario> {
        let w = &self.waveform;
        let delta_f = match (w.bandwidth_hz, w.subcarrier_spacing_hz) {
            (Some(b), None) => b / w.subcarriers as f64,
            (None, Some(df)) => df,
            _ => {
                return Err(Error::SchemaError {
                    path: "waveform.bandwidth_hz".into(),
                    msg: "give exactly one of `bandwidth_hz` or `subcarrier_spacing_hz`".into(),
                })
            }
        };
        if w.subcarriers == 0 || !(delta_f > 0.0) || !(w.fc_hz > 0.0) {
            return Err(Error::SemanticError("waveform needs K ≥ 1, Δf > 0, fc > 0".into()));
        }
        let waveform = Waveform::uniform(w.fc_hz, w.subcarriers, delta_f, w.temperature_k);
        let lambda = SPEED_OF_LIGHT / w.fc_hz;

        let materials: Vec<Material> = self
            .materials
            .iter()
            .map(|m| Material {
                eps_r: m.eps_r,
                mu_r: m.mu_r,
                sigma: m.sigma_s_per_m,
            })
            .collect();
        let material_index = |name: &str, path: String| {
            self.materials
                .iter()
                .position(|m| m.name == name)
                .ok_or(Error::SchemaError {
                    path,
                    msg: format!("unknown material `{name}`"),
                })
        };

        let mut walls = Vec::new();
        let mut wall_names = Vec::new();
        for (i, rw) in self.walls.iter().enumerate() {
            let n = Vec3::from(rw.normal);
            if n.norm() == 0.0 {
                return Err(Error::SemanticError(format!("wall {i} has a zero normal")));
            }
            let mat = material_index(&rw.material, format!("walls[{i}].material"))?;
            walls.push(Wall::new(Vec3::from(rw.point_m), n.normalize(), mat)?);
            wall_names.push(rw.name.clone().unwrap_or_else(|| format!("wall{i}")));
        }

        let mut stripes = Vec::new();
        for (i, rs) in self.stripes.iter().enumerate() {
            let azimuth = match (rs.azimuth_rad, rs.azimuth_deg) {
                (Some(r), None) => r,
                (None, Some(d)) => d.to_radians(),
                _ => {
                    return Err(Error::SchemaError {
                        path: format!("stripes[{i}].azimuth_rad"),
                        msg: "give exactly one of `azimuth_rad` or `azimuth_deg`".into(),
                    })
                }
            };
            let spacing = match &rs.spacing_m {
                LengthSpec::Number(v) => *v,
                LengthSpec::Expr(e) => parse_length(e, lambda).ok_or_else(|| Error::SchemaError {
                    path: format!("stripes[{i}].spacing_m"),
                    msg: format!("cannot parse length `{e}`"),
                })?,
            };
            let mounted = match &rs.mounted_wall {
                None => None,
                Some(name) => Some(wall_names.iter().position(|w| w == name).ok_or_else(|| {
                    Error::SchemaError {
                        path: format!("stripes[{i}].mounted_wall"),
                        msg: format!("unknown wall `{name}`"),
                    }
                })?),
            };
            stripes.push(Stripe::new(
                Vec3::from(rs.phase_center_m),
                azimuth,
                rs.antennas,
                spacing,
                mounted,
            )?);
        }

        let delta_phi = match (self.ue.phase_offset_rad, self.ue.phase_offset_deg) {
            (Some(r), None) => r.into_vec(),
            (None, Some(d)) => d.into_vec().into_iter().map(f64::to_radians).collect(),
            (None, None) => vec![0.0],
            _ => {
                return Err(Error::SchemaError {
                    path: "ue.phase_offset_rad".into(),
                    msg: "give at most one of `phase_offset_rad` or `phase_offset_deg`".into(),
                })
            }
        };

        let sync_mode = match self.processing.sync.to_ascii_lowercase().as_str() {
            "cp" => SyncMode::Cp,
            "ncp" => SyncMode::Ncp,
            other => {
                return Err(Error::SchemaError {
                    path: "processing.sync".into(),
                    msg: format!("expected `cp` or `ncp`, got `{other}`"),
                })
            }
        };

        let s = &self.search;
        let mut search = SearchConfig::with_room(Vec3::from(s.room_min_m), Vec3::from(s.room_max_m));
        if let Some(v) = s.ncp_step_m {
            search.ncp_step = v;
        }
        if let Some(v) = s.cp_half_width_m {
            search.cp_half_width = v;
        }
        if let Some(v) = s.cp_step_wavelengths {
            search.cp_step_wavelengths = v;
        }
        if let Some(v) = s.cp_candidates {
            search.cp_candidates = v;
        }
        if let Some(v) = s.sp_step_m {
            search.sp_step = v;
        }
        if let Some(v) = s.ifft_factor {
            search.ifft_factor = v;
        }
        if let Some(v) = s.max_evals {
            search.max_evals = v;
        }

        let scenario = Scenario {
            name: self.name,
            stripes,
            walls,
            wall_names,
            materials,
            ue_position: Vec3::from(self.ue.position_m),
            delta_tau: self.ue.clock_offset_s,
            delta_phi,
            scatterers: self
                .scatterers
                .iter()
                .map(|s| Scatterer {
                    position: Vec3::from(s.position_m),
                    radius: s.radius_m,
                })
                .collect(),
            waveform,
            dmc_beta_d: self.dmc.beta_d,
            dmc_tau_d: self.dmc.tau_d,
            dnr_db: self.levels.dnr_db,
            sdnr_db: self.levels.sdnr_db,
            pol_rs: Vec3::from(self.polarization.rs),
            pol_ue: Vec3::from(self.polarization.ue),
            sync_mode,
            dim: self.processing.dim,
            search,
        };
        if !(scenario.dmc_beta_d > 0.0) {
            return Err(Error::SemanticError("dmc.beta_d must be positive".into()));
        }
        scenario.validate()?;
        Ok(scenario)
    }
}
