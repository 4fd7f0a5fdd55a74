//! Quick invariant checks run by the `selftest` command.

use nalgebra::DVector;
use serde::Serialize;

use crate::channel::C64;
use crate::error::Result;
use crate::estimators::nst::specular_kernel;
use crate::estimators::{jml_amplitudes, jml_cost, rml_ncp_amplitudes_and_cost, KnownEnvironment, WantedParams};
use crate::fim::{compute_bounds, global_fim, FimOptions, SyncMode};
use crate::geometry::{enumerate_paths, mirror_ue};
use crate::harness::metrics::{ecdf, iqr_clean};
use crate::harness::scenario::{MultipathCase, Scenario};
use crate::signal::synthesize_trial;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, limit: f64) -> Check {
    Check {
        name,
        passed: value.is_finite() && value < limit,
        detail: format!("{value:.3e} < {limit:.0e}"),
    }
}

fn truth(s: &Scenario) -> WantedParams {
    WantedParams {
        p: s.ue_position,
        delta_tau: s.delta_tau,
        delta_phi: s.delta_phi_at(0),
        sp: s.scatterers.iter().map(|x| x.position).collect(),
    }
}

fn whitener_error(s: &Scenario) -> Result<f64> {
    let cov = s.disturbance(0)?;
    let n = cov.m * cov.k();
    let v = DVector::from_fn(n, |i, _| C64::new((i as f64).sin(), (0.5 * i as f64).cos()));
    let dense = cov.dense_whitener() * &v;
    Ok((cov.whiten(&v) - &dense).norm() / dense.norm())
}

fn whitened_identity_error(s: &Scenario) -> Result<f64> {
    let cov = s.disturbance(0)?;
    let w = cov.dense_whitener();
    let r = cov.dense();
    let i = nalgebra::DMatrix::<C64>::identity(r.nrows(), r.nrows());
    Ok((&w * r * w.adjoint() - &i).norm() / i.norm())
}

fn mirror_involution_error(s: &Scenario) -> f64 {
    s.walls
        .iter()
        .map(|w| (mirror_ue(&mirror_ue(&s.ue_position, w), w) - s.ue_position).norm())
        .fold(0.0, f64::max)
}

fn exact_recovery(s: &Scenario) -> Result<(f64, f64, f64)> {
    let env = KnownEnvironment::from_scenario(s)?;
    let obs = synthesize_trial(s, 0, 0, 0.0)?;
    let y = env.prepare(&obs.y);
    let eta = truth(s);
    let cost = jml_cost(&env, &eta, &y)?;
    let energy: f64 = y.iter().map(|v| v.norm_squared()).sum();
    jml_amplitudes(&env, &eta, &y)?;
    let ncp = {
        // The noncoherent model has no scatterers, so it is exact only without them.
        let s = s.with_case(MultipathCase::LosRp);
        let env = KnownEnvironment::from_scenario(&s)?;
        let y = env.prepare(&synthesize_trial(&s, 0, 0, 0.0)?.y);
        let energy: f64 = y.iter().map(|v| v.norm_squared()).sum();
        rml_ncp_amplitudes_and_cost(&env, &s.ue_position, s.delta_tau, &y)?.1 / energy
    };
    let mut kernel = 0.0f64;
    for n in 0..env.num_stripes() {
        let k = specular_kernel(&env, n, &eta.p, eta.delta_tau)?;
        for (i, path) in enumerate_paths(s, n)?.iter().enumerate() {
            if i >= s.num_specular(n) {
                break;
            }
            let c = env.response(n, path.aoa, path.pseudo_delay);
            kernel = kernel.max((k.adjoint() * &c).norm() / c.norm());
        }
    }
    Ok((cost / energy, ncp, kernel))
}

/// Runs every check; numerical failures are reported as failed checks.
pub fn run_selftest() -> Vec<Check> {
    let est = Scenario::estimation();
    let can = Scenario::canonical();
    let mut out = Vec::new();
    let fail = |name: &'static str, e: crate::error::Error| Check {
        name,
        passed: false,
        detail: e.to_string(),
    };

    out.push(check("mirror involution", mirror_involution_error(&can), 1e-12));
    match whitener_error(&est) {
        Ok(v) => out.push(check("structured whitener", v, 1e-10)),
        Err(e) => out.push(fail("structured whitener", e)),
    }
    match whitened_identity_error(&est) {
        Ok(v) => out.push(check("whitened covariance is identity", v, 1e-8)),
        Err(e) => out.push(fail("whitened covariance is identity", e)),
    }
    match exact_recovery(&est) {
        Ok((jml, ncp, kernel)) => {
            out.push(check("noise-free JML cost", jml, 1e-20));
            out.push(check("noise-free RML-NCP cost", ncp, 1e-20));
            out.push(check("kernel annihilation", kernel, 1e-10));
        }
        Err(e) => out.push(fail("noise-free recovery", e)),
    }
    match global_fim(&est, &FimOptions::from_scenario(&est)) {
        Ok(f) => {
            let asym = (&f - f.transpose()).norm() / f.norm();
            out.push(check("FIM symmetric", asym, 1e-12));
            let min = f.symmetric_eigenvalues().min() / f.norm();
            out.push(check("FIM positive semidefinite", -min, 1e-10));
        }
        Err(e) => out.push(fail("FIM", e)),
    }
    let (cp, ncp) = (
        compute_bounds(&est, &FimOptions::new(SyncMode::Cp, est.dim)),
        compute_bounds(&est, &FimOptions::new(SyncMode::Ncp, est.dim)),
    );
    match (cp, ncp) {
        (Ok(cp), Ok(ncp)) => out.push(Check {
            name: "coherent PEB below noncoherent",
            passed: cp.peb < ncp.peb,
            detail: format!("{:.3e} < {:.3e}", cp.peb, ncp.peb),
        }),
        (Err(e), _) | (_, Err(e)) => out.push(fail("coherent PEB below noncoherent", e)),
    }
    let sample = [0.3, 0.1, 0.2, 0.25, 0.15];
    out.push(Check {
        name: "IQR cleaning of clean data is a no-op",
        passed: iqr_clean(&sample) == sample,
        detail: String::new(),
    });
    out.push(Check {
        name: "ECDF reaches one",
        passed: ecdf(&sample).last().map(|p| p.1) == Some(1.0),
        detail: String::new(),
    });
    out
}
