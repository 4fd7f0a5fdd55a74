//! Estimation stack: noncoherent and coherent relaxed ML position search,
//! phase-offset and coarse clock estimators, null-space scatterer mapping,
//! and the joint ML refinement over all wanted parameters.
//!
//! Estimators only see a [`KnownEnvironment`] (stripes, walls, waveform,
//! disturbance statistics and search settings) and the observed matrices;
//! ground truth never enters.

pub mod clock;
pub mod jml;
pub mod nst;
pub mod pipeline;
pub mod rml;
pub mod simplex;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::channel::{DisturbanceCov, C64};
use crate::error::Result;
use crate::geometry::{paths_for, PathGeometry, Stripe, Vec3, Wall};
use crate::harness::scenario::{Scenario, SearchConfig};
use crate::signal::{kron, whitened_factors, Waveform};

pub use clock::coarse_clock_offset;
pub use jml::{jml_amplitudes, jml_cost, jml_refine};
pub use nst::{nst_map_scatterers, NstDip, SpGrid};
pub use pipeline::{run_pipeline, PipelineOutput};
pub use rml::{estimate_phase_offset, rml_cost, rml_ncp_amplitudes_and_cost, rml_position_search};

/// Everything an estimator may know about the deployment.
#[derive(Debug, Clone)]
pub struct KnownEnvironment {
    pub stripes: Vec<Stripe>,
    pub walls: Vec<Wall>,
    pub waveform: Waveform,
    pub covs: Vec<DisturbanceCov>,
    pub num_sp: usize,
    pub dim: usize,
    /// UE height, used only when `dim == 2`.
    pub known_height: f64,
    pub search: SearchConfig,
}

impl KnownEnvironment {
    pub fn from_scenario(s: &Scenario) -> Result<Self> {
        Ok(Self {
            stripes: s.stripes.clone(),
            walls: s.walls.clone(),
            waveform: s.waveform.clone(),
            covs: (0..s.num_stripes()).map(|n| s.disturbance(n)).collect::<Result<_>>()?,
            num_sp: s.num_scatterers(),
            dim: s.dim,
            known_height: s.ue_position.z,
            search: s.search.clone(),
        })
    }

    pub fn num_stripes(&self) -> usize {
        self.stripes.len()
    }

    /// Whitens the observed matrices: `Y'_n = Y_n W_fᵀ`.
    pub fn whiten(&self, y: &[DMatrix<C64>]) -> Vec<DMatrix<C64>> {
        y.iter().zip(&self.covs).map(|(y, c)| c.whiten_matrix(y)).collect()
    }

    pub fn paths(&self, n: usize, p: &Vec3, sps: &[Vec3], delta_tau: f64) -> Result<Vec<PathGeometry>> {
        paths_for(p, &self.stripes[n], &self.walls, sps, delta_tau)
    }

    /// Whitened stacked observations `y'_n = vec(Y'_n)`.
    pub fn prepare(&self, y: &[DMatrix<C64>]) -> Vec<DVector<C64>> {
        self.whiten(y)
            .into_iter()
            .map(|m| DVector::from_column_slice(m.as_slice()))
            .collect()
    }

    /// Whitened unit-gain response of stripe `n` as an `M × K` matrix.
    pub fn response_matrix(&self, n: usize, theta: f64, tau: f64) -> DMatrix<C64> {
        let (u, a) = whitened_factors(theta, tau, &self.waveform, &self.stripes[n], &self.covs[n]);
        &a * u.transpose()
    }

    pub fn response(&self, n: usize, theta: f64, tau: f64) -> DVector<C64> {
        let (u, a) = whitened_factors(theta, tau, &self.waveform, &self.stripes[n], &self.covs[n]);
        kron(&u, &a)
    }

    /// Maps the search coordinates (`dim` entries) to a 3-D position.
    pub fn position(&self, coords: &[f64]) -> Vec3 {
        if self.dim == 2 {
            Vec3::new(coords[0], coords[1], self.known_height)
        } else {
            Vec3::new(coords[0], coords[1], coords[2])
        }
    }
}

/// Wanted parameters `η_w = [p, δτ, δφ, p_SP]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WantedParams {
    pub p: Vec3,
    pub delta_tau: f64,
    pub delta_phi: f64,
    pub sp: Vec<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    #[serde(rename = "RML-NCP")]
    RmlNcp,
    #[serde(rename = "RML")]
    Rml,
    #[serde(rename = "NST")]
    Nst,
    #[serde(rename = "JML")]
    Jml,
}

impl Stage {
    pub fn label(&self) -> &'static str {
        match self {
            Stage::RmlNcp => "RML-NCP",
            Stage::Rml => "RML",
            Stage::Nst => "NST",
            Stage::Jml => "JML",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub stage: Stage,
    pub p_hat: [f64; 3],
    pub delta_tau_hat: f64,
    /// Wrapped to `(-π, π]`.
    pub delta_phi_hat: f64,
    pub sp_hats: Vec<[f64; 3]>,
    /// Per stripe, per component `[re, im]` of the estimated complex gains.
    pub amplitudes: Vec<Vec<[f64; 2]>>,
    pub cost: f64,
    pub cost_trace: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

impl EstimateReport {
    pub fn p(&self) -> Vec3 {
        Vec3::from(self.p_hat)
    }

    pub fn sps(&self) -> Vec<Vec3> {
        self.sp_hats.iter().map(|s| Vec3::from(*s)).collect()
    }

    pub fn wanted(&self) -> WantedParams {
        WantedParams {
            p: self.p(),
            delta_tau: self.delta_tau_hat,
            delta_phi: self.delta_phi_hat,
            sp: self.sps(),
        }
    }
}

pub(crate) fn gains_to_pairs(g: &[DVector<C64>]) -> Vec<Vec<[f64; 2]>> {
    g.iter().map(|v| v.iter().map(|c| [c.re, c.im]).collect()).collect()
}
