//! Full estimation chain: RML-NCP, phase read-out, RML, NST, JML.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::channel::C64;
use crate::error::Result;

use super::jml::{jml_amplitudes, jml_cost, jml_refine};
use super::nst::{nst_map_scatterers, SpGrid};
use super::rml::{rml_ncp_search, rml_position_search};
use super::{gains_to_pairs, EstimateReport, KnownEnvironment, Stage};

/// Reports of all four stages for one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineOutput {
    pub rml_ncp: EstimateReport,
    pub rml: EstimateReport,
    pub nst: EstimateReport,
    pub jml: EstimateReport,
}

impl PipelineOutput {
    pub fn stage(&self, s: Stage) -> &EstimateReport {
        match s {
            Stage::RmlNcp => &self.rml_ncp,
            Stage::Rml => &self.rml,
            Stage::Nst => &self.nst,
            Stage::Jml => &self.jml,
        }
    }
}

/// Runs every stage on raw observations; each stage only consumes the
/// previous stages' reports.
pub fn run_pipeline(env: &KnownEnvironment, y_raw: &[DMatrix<C64>]) -> Result<PipelineOutput> {
    let y = env.prepare(y_raw);
    let rml_ncp = rml_ncp_search(env, y_raw, &y)?;
    let rml = rml_position_search(env, &rml_ncp, &y)?;

    let dips = nst_map_scatterers(env, &y, &rml.p(), rml.delta_tau_hat, env.num_sp, &SpGrid::from_env(env))?;
    let mut eta = rml.wanted();
    eta.sp = dips.iter().map(|d| d.refined).collect();
    let cost = jml_cost(env, &eta, &y)?;
    let nst = EstimateReport {
        stage: Stage::Nst,
        sp_hats: eta.sp.iter().map(|s| (*s).into()).collect(),
        amplitudes: gains_to_pairs(&jml_amplitudes(env, &eta, &y)?),
        cost,
        cost_trace: dips.iter().map(|d| d.cost).collect(),
        evaluations: 0,
        converged: true,
        ..rml.clone()
    };
    let jml = jml_refine(env, &nst, &y)?;
    Ok(PipelineOutput { rml_ncp, rml, nst, jml })
}
