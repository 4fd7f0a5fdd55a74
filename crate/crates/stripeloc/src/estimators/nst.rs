//! Null-space scatterer mapping.
//!
//! With `K_n` an orthonormal basis of `null(C'_nᴴ)`, the transformed
//! observation `K_nᴴ y'_n` is free of the specular paths and stays white.
//! For a candidate scatterer `q` the residual of fitting one free gain is
//! `‖ỹ‖² − |c'ᴴỹ|²/‖P⊥c'‖²` with `ỹ = P⊥ y'`, which equals the fit in the
//! transformed domain because `K_n K_nᴴ = P⊥`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::channel::C64;
use crate::error::{Error, Result};
use crate::geometry::{aoa, path_delay, Vec3};
use crate::linalg::{null_space_basis, orthonormal_basis};

use super::rml::specular_matrix;
use super::simplex::minimize;
use super::{KnownEnvironment, WantedParams};

/// Axis-aligned 3-D scan grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpGrid {
    pub min: Vec3,
    pub max: Vec3,
    pub step: f64,
}

impl SpGrid {
    pub fn from_env(env: &KnownEnvironment) -> Self {
        Self {
            min: env.search.room_min,
            max: env.search.room_max,
            step: env.search.sp_step,
        }
    }

    fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = ((self.max[i] - self.min[i]) / self.step + 1e-9).floor().max(0.0) as usize + 1;
        }
        c
    }

    fn point(&self, idx: [usize; 3]) -> Vec3 {
        Vec3::new(
            self.min.x + idx[0] as f64 * self.step,
            self.min.y + idx[1] as f64 * self.step,
            self.min.z + idx[2] as f64 * self.step,
        )
    }
}

/// One selected dip of the scan.
#[derive(Debug, Clone, PartialEq)]
pub struct NstDip {
    pub grid_point: Vec3,
    pub refined: Vec3,
    pub cost: f64,
}

/// Explicit orthonormal kernel of `C'_nᴴ` at `(p, δτ)`.
pub fn specular_kernel(env: &KnownEnvironment, n: usize, p: &Vec3, delta_tau: f64) -> Result<DMatrix<C64>> {
    null_space_basis(&specular_matrix(env, n, p, delta_tau)?)
}

struct Projected {
    q: DMatrix<C64>,
    y: DVector<C64>,
}

impl Projected {
    /// Single-scatterer residual of one stripe; `None` when the candidate
    /// response lies in the specular subspace.
    fn residual(&self, c: &DVector<C64>) -> Option<f64> {
        let qc = self.q.adjoint() * c;
        let den = c.norm_squared() - qc.norm_squared();
        if !(den > 1e-12 * c.norm_squared()) {
            return None;
        }
        let num = c.dotc(&self.y).norm_sqr();
        Some(self.y.norm_squared() - num / den)
    }
}

fn prepare(env: &KnownEnvironment, p: &Vec3, delta_tau: f64, y: &[DVector<C64>]) -> Result<Vec<Projected>> {
    (0..env.num_stripes())
        .map(|n| {
            let c = specular_matrix(env, n, p, delta_tau)?;
            if c.nrows() <= c.ncols() {
                return Err(Error::KernelEmpty {
                    mk: c.nrows(),
                    l: c.ncols(),
                });
            }
            let q = orthonormal_basis(&c);
            let yp = &y[n] - &q * (q.adjoint() * &y[n]);
            Ok(Projected { q, y: yp })
        })
        .collect()
}

fn candidate_cost(env: &KnownEnvironment, proj: &[Projected], p: &Vec3, delta_tau: f64, q: &Vec3) -> f64 {
    let mut acc = 0.0;
    for (n, pr) in proj.iter().enumerate() {
        let s = &env.stripes[n];
        let Ok(theta) = aoa(q, s) else { return f64::INFINITY };
        if (p - q).norm() == 0.0 {
            return f64::INFINITY;
        }
        let tau = path_delay(p, q, &s.phase_center) + delta_tau;
        let Some(r) = pr.residual(&env.response(n, theta, tau)) else {
            return f64::INFINITY;
        };
        acc += r;
    }
    acc
}

/// Scans `grid` for `j` well-separated dips (exclusion radius three steps)
/// and refines each with a simplex search.
pub fn nst_map_scatterers(
    env: &KnownEnvironment,
    y: &[DVector<C64>],
    p_hat: &Vec3,
    delta_tau_hat: f64,
    j: usize,
    grid: &SpGrid,
) -> Result<Vec<NstDip>> {
    if j == 0 {
        return Ok(Vec::new());
    }
    let proj = prepare(env, p_hat, delta_tau_hat, y)?;
    let counts = grid.counts();
    let total = counts[0] * counts[1] * counts[2];
    let unflatten = |i: usize| [i % counts[0], (i / counts[0]) % counts[1], i / (counts[0] * counts[1])];
    let costs: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|i| candidate_cost(env, &proj, p_hat, delta_tau_hat, &grid.point(unflatten(i))))
        .collect();
    let mut order: Vec<usize> = (0..total).filter(|&i| costs[i].is_finite()).collect();
    order.sort_by(|a, b| costs[*a].total_cmp(&costs[*b]));
    let radius = 3.0 * grid.step + 1e-9;
    let mut picked: Vec<Vec3> = Vec::with_capacity(j);
    for i in order {
        let q = grid.point(unflatten(i));
        if picked.iter().all(|o| (o - q).norm() > radius) {
            picked.push(q);
            if picked.len() == j {
                break;
            }
        }
    }
    if picked.is_empty() {
        return Err(Error::SearchFailure("scatterer scan has no finite cost".into()));
    }
    let steps = [grid.step / 2.0; 3];
    Ok(picked
        .into_iter()
        .map(|q0| {
            let f = |v: &[f64]| candidate_cost(env, &proj, p_hat, delta_tau_hat, &Vec3::new(v[0], v[1], v[2]));
            let r = minimize(&f, q0.as_slice(), &steps, env.search.max_evals);
            NstDip {
                grid_point: q0,
                refined: Vec3::new(r.x[0], r.x[1], r.x[2]),
                cost: r.cost,
            }
        })
        .collect())
}

/// Keeps the NST output usable by later stages.
pub fn with_scatterers(eta: &WantedParams, dips: &[NstDip]) -> WantedParams {
    WantedParams {
        sp: dips.iter().map(|d| d.refined).collect(),
        ..eta.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::Scenario;
    use crate::signal::synthesize_trial;

    #[test]
    fn kernel_annihilates_specular_paths() {
        let s = Scenario::estimation();
        let env = KnownEnvironment::from_scenario(&s).unwrap();
        for n in 0..env.num_stripes() {
            let k = specular_kernel(&env, n, &s.ue_position, s.delta_tau).unwrap();
            let c = specular_matrix(&env, n, &s.ue_position, s.delta_tau).unwrap();
            for col in c.column_iter() {
                assert!((k.adjoint() * col).norm() < 1e-10 * col.norm());
            }
        }
    }

    #[test]
    fn noise_free_single_sp_on_grid() {
        let s = Scenario::estimation();
        let env = KnownEnvironment::from_scenario(&s).unwrap();
        let y = env.prepare(&synthesize_trial(&s, 1, 0, 0.0).unwrap().y);
        let sp = s.scatterers[0].position;
        let grid = SpGrid {
            min: sp - Vec3::new(1.0, 1.0, 1.0),
            max: sp + Vec3::new(1.0, 1.0, 1.0),
            step: 0.1,
        };
        let dips = nst_map_scatterers(&env, &y, &s.ue_position, s.delta_tau, 1, &grid).unwrap();
        assert!((dips[0].grid_point - sp).norm() < 0.1);
        assert!((dips[0].refined - sp).norm() < 1e-3);
    }

    #[test]
    fn projected_residual_matches_kernel_fit() {
        let s = Scenario::estimation();
        let env = KnownEnvironment::from_scenario(&s).unwrap();
        let y = env.prepare(&synthesize_trial(&s, 4, 0, 1.0).unwrap().y);
        let proj = prepare(&env, &s.ue_position, s.delta_tau, &y).unwrap();
        let q = Vec3::new(3.0, 2.0, 1.0);
        let k = specular_kernel(&env, 0, &s.ue_position, s.delta_tau).unwrap();
        let th = aoa(&q, &env.stripes[0]).unwrap();
        let tau = path_delay(&s.ue_position, &q, &env.stripes[0].phase_center) + s.delta_tau;
        let c = env.response(0, th, tau);
        let (kc, ky) = (k.adjoint() * &c, k.adjoint() * &y[0]);
        let g = kc.dotc(&ky) / kc.norm_squared();
        let direct = (ky - kc * g).norm_squared();
        let fast = proj[0].residual(&c).unwrap();
        assert!((direct - fast).abs() < 1e-9 * direct);
    }
}
