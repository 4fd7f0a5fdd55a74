//! Monte Carlo evaluation of the estimation pipeline against the bounds.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::estimators::{run_pipeline, EstimateReport, KnownEnvironment, PipelineOutput, Stage};
use crate::fim::{compute_bounds, BoundsReport, FimOptions};
use crate::geometry::{wrap_angle, Vec3, SPEED_OF_LIGHT};
use crate::harness::metrics::{ecdf, rmse, rmse_clean};
use crate::harness::scenario::Scenario;
use crate::signal::synthesize_trial;

pub const STAGES: [Stage; 4] = [Stage::RmlNcp, Stage::Rml, Stage::Nst, Stage::Jml];
pub const QUANTITIES: [&str; 4] = ["position_m", "clock_m", "phase_rad", "sp_m"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloConfig {
    pub sdnr_db: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    /// Multiplies the disturbance; 0 gives noise-free runs.
    pub noise_scale: f64,
}

impl MonteCarloConfig {
    pub fn new(sdnr_db: Vec<f64>, trials: usize, master_seed: u64) -> Self {
        Self {
            sdnr_db,
            trials,
            master_seed,
            noise_scale: 1.0,
        }
    }
}

/// Errors of one stage in one trial. Clock errors are in range units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageErrors {
    pub stage: Stage,
    pub position_m: f64,
    pub clock_m: f64,
    pub phase_rad: f64,
    /// RMS over scatterers after optimal matching; `None` when the stage has no scatterers.
    pub sp_m: Option<f64>,
}

impl StageErrors {
    pub fn get(&self, quantity: &str) -> Option<f64> {
        match quantity {
            "position_m" => Some(self.position_m),
            "clock_m" => Some(self.clock_m),
            "phase_rad" => Some(self.phase_rad),
            "sp_m" => self.sp_m,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub sdnr_db: f64,
    pub trial: usize,
    /// Stream index passed to the synthesizer.
    pub stream: u64,
    pub errors: Vec<StageErrors>,
    pub reports: Option<PipelineOutput>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub sdnr_db: f64,
    pub stage: Stage,
    pub quantity: &'static str,
    pub rmse_raw: f64,
    pub rmse_clean: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    /// Matching error bound (PEB, c·CEB, CPEB or RMS SP-PEB).
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EcdfSeries {
    pub sdnr_db: f64,
    pub stage: Stage,
    pub quantity: &'static str,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
    pub ecdf: Vec<EcdfSeries>,
    pub bounds: Vec<(f64, BoundsReport)>,
    pub trials: Vec<TrialRecord>,
}

impl MetricsTable {
    pub fn row(&self, sdnr_db: f64, stage: Stage, quantity: &str) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.sdnr_db == sdnr_db && r.stage == stage && r.quantity == quantity)
    }

    pub const CSV_HEADER: &'static str = "sdnr_db,stage,quantity,rmse_raw,rmse_clean,n_ok,n_failed,bound";

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:e},{:e},{},{},{:e}",
                r.sdnr_db,
                r.stage.label(),
                r.quantity,
                r.rmse_raw,
                r.rmse_clean,
                r.n_ok,
                r.n_failed,
                r.bound
            )?;
        }
        Ok(())
    }
}

/// Smallest RMS distance over all assignments of estimates to true scatterers.
pub fn matched_sp_error(est: &[Vec3], truth: &[Vec3]) -> f64 {
    fn best(est: &[Vec3], truth: &[Vec3], used: &mut Vec<bool>, i: usize) -> f64 {
        if i == truth.len() {
            return 0.0;
        }
        let mut b = f64::INFINITY;
        for j in 0..est.len() {
            if !used[j] {
                used[j] = true;
                b = b.min((est[j] - truth[i]).norm_squared() + best(est, truth, used, i + 1));
                used[j] = false;
            }
        }
        b
    }
    if truth.is_empty() {
        return 0.0;
    }
    (best(est, truth, &mut vec![false; est.len()], 0) / truth.len() as f64).sqrt()
}

fn stage_errors(r: &EstimateReport, s: &Scenario) -> StageErrors {
    let truth_sp: Vec<Vec3> = s.scatterers.iter().map(|x| x.position).collect();
    StageErrors {
        stage: r.stage,
        position_m: (r.p() - s.ue_position).norm(),
        clock_m: (r.delta_tau_hat - s.delta_tau) * SPEED_OF_LIGHT,
        phase_rad: wrap_angle(r.delta_phi_hat - s.delta_phi_at(0)),
        sp_m: (!r.sp_hats.is_empty()).then(|| matched_sp_error(&r.sps(), &truth_sp)),
    }
}

/// Runs `trials` snapshots at every SDNR. Trial `t` of point `i` uses stream
/// `i · trials + t` of `master_seed`; failures are recorded per trial.
pub fn run_monte_carlo(scenario: &Scenario, cfg: &MonteCarloConfig) -> Result<MetricsTable> {
    let mut table = MetricsTable {
        rows: Vec::new(),
        ecdf: Vec::new(),
        bounds: Vec::new(),
        trials: Vec::new(),
    };
    for (i, &sdnr) in cfg.sdnr_db.iter().enumerate() {
        let mut s = scenario.clone();
        s.sdnr_db = sdnr;
        let env = KnownEnvironment::from_scenario(&s)?;
        let bound = compute_bounds(&s, &FimOptions::from_scenario(&s)).unwrap_or(BoundsReport::infinite(s.num_scatterers()));
        let records: Vec<TrialRecord> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let stream = (i * cfg.trials + t) as u64;
                let run = synthesize_trial(&s, cfg.master_seed, stream, cfg.noise_scale)
                    .and_then(|obs| run_pipeline(&env, &obs.y));
                match run {
                    Ok(out) => TrialRecord {
                        sdnr_db: sdnr,
                        trial: t,
                        stream,
                        errors: STAGES.iter().map(|st| stage_errors(out.stage(*st), &s)).collect(),
                        reports: Some(out),
                        failure: None,
                    },
                    Err(e) => TrialRecord {
                        sdnr_db: sdnr,
                        trial: t,
                        stream,
                        errors: Vec::new(),
                        reports: None,
                        failure: Some(e.to_string()),
                    },
                }
            })
            .collect();
        let n_failed = records.iter().filter(|r| r.failure.is_some()).count();
        let sp_bound = if bound.sp_peb.is_empty() {
            f64::NAN
        } else {
            (bound.sp_peb.iter().map(|v| v * v).sum::<f64>() / bound.sp_peb.len() as f64).sqrt()
        };
        for (si, st) in STAGES.iter().enumerate() {
            for q in QUANTITIES {
                let errs: Vec<f64> = records
                    .iter()
                    .filter_map(|r| r.errors.get(si).and_then(|e| e.get(q)))
                    .collect();
                if errs.is_empty() && q == "sp_m" {
                    continue;
                }
                let b = match q {
                    "position_m" => bound.peb,
                    "clock_m" => bound.ceb_m,
                    "phase_rad" => bound.cpeb,
                    _ => sp_bound,
                };
                table.rows.push(MetricsRow {
                    sdnr_db: sdnr,
                    stage: *st,
                    quantity: q,
                    rmse_raw: rmse(&errs),
                    rmse_clean: rmse_clean(&errs),
                    n_ok: errs.len(),
                    n_failed,
                    bound: b,
                });
                let abs: Vec<f64> = errs.iter().map(|e| e.abs()).collect();
                table.ecdf.push(EcdfSeries {
                    sdnr_db: sdnr,
                    stage: *st,
                    quantity: q,
                    points: ecdf(&abs),
                });
            }
        }
        table.bounds.push((sdnr, bound));
        table.trials.extend(records);
    }
    Ok(table)
}
