//! Relaxed ML over the specular paths: the per-stripe noncoherent cost, the
//! phase-offset read-out, the coherent cost, and the two-level position search.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::channel::C64;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec3, SPEED_OF_LIGHT};
use crate::linalg::lstsq;

use super::clock::{clock_from_delays, peak_delays};
use super::jml::jml_cost;
use super::simplex::minimize;
use super::{gains_to_pairs, EstimateReport, KnownEnvironment, Stage, WantedParams};

/// Whitened specular responses `C'_n = [c'_LoS, c'_RP1, ...]`.
pub fn specular_matrix(env: &KnownEnvironment, n: usize, p: &Vec3, delta_tau: f64) -> Result<DMatrix<C64>> {
    let paths = env.paths(n, p, &[], delta_tau)?;
    let cols: Vec<DVector<C64>> = paths.iter().map(|g| env.response(n, g.aoa, g.pseudo_delay)).collect();
    Ok(DMatrix::from_columns(&cols))
}

/// Free complex gains of all specular paths per stripe and the summed residual.
pub fn rml_ncp_amplitudes_and_cost(
    env: &KnownEnvironment,
    p: &Vec3,
    delta_tau: f64,
    y: &[DVector<C64>],
) -> Result<(Vec<DVector<C64>>, f64)> {
    let mut gains = Vec::with_capacity(env.num_stripes());
    let mut cost = 0.0;
    for n in 0..env.num_stripes() {
        let sol = lstsq(&specular_matrix(env, n, p, delta_tau)?, &y[n])?;
        cost += sol.cost;
        gains.push(sol.x);
    }
    Ok((gains, cost))
}

/// `∠ Σ_n γ̂_n^LoS e^{j2π f_c τ_LoS,n(p)}`, wrapped.
pub fn phase_from_gains(env: &KnownEnvironment, p: &Vec3, gains: &[DVector<C64>]) -> Result<f64> {
    let mut sum = C64::new(0.0, 0.0);
    let mut scale = 0.0;
    for (g, s) in gains.iter().zip(&env.stripes) {
        let tau = (p - s.phase_center).norm() / SPEED_OF_LIGHT;
        sum += g[0] * C64::from_polar(1.0, std::f64::consts::TAU * env.waveform.fc * tau);
        scale += g[0].norm();
    }
    if !(sum.norm() >= 1e-12 * scale) || scale == 0.0 {
        return Err(Error::ZeroAggregate(sum.norm()));
    }
    Ok(wrap_angle(sum.arg()))
}

/// Phase offset from the noncoherent LoS gains at `(p, δτ)`.
pub fn estimate_phase_offset(env: &KnownEnvironment, p: &Vec3, delta_tau: f64, y: &[DVector<C64>]) -> Result<f64> {
    let (g, _) = rml_ncp_amplitudes_and_cost(env, p, delta_tau, y)?;
    phase_from_gains(env, p, &g)
}

/// Coherent cost: real LoS amplitudes with phases tied to `(p, δφ)`, free reflection gains.
pub fn rml_cost(env: &KnownEnvironment, p: &Vec3, delta_tau: f64, delta_phi: f64, y: &[DVector<C64>]) -> Result<f64> {
    let eta = WantedParams {
        p: *p,
        delta_tau,
        delta_phi,
        sp: Vec::new(),
    };
    jml_cost(env, &eta, y)
}

/// Coherent cost with the phase offset profiled out.
pub fn rml_profile_cost(env: &KnownEnvironment, p: &Vec3, delta_tau: f64, y: &[DVector<C64>]) -> Result<(f64, f64)> {
    let dphi = estimate_phase_offset(env, p, delta_tau, y)?;
    Ok((rml_cost(env, p, delta_tau, dphi, y)?, dphi))
}

/// Regular grid over `[lo, hi]` in `dim` coordinates.
fn grid(lo: &[f64], hi: &[f64], step: f64) -> (Vec<usize>, Vec<Vec<f64>>) {
    let counts: Vec<usize> = lo
        .iter()
        .zip(hi)
        .map(|(a, b)| ((b - a) / step + 1e-9).floor() as usize + 1)
        .collect();
    let total: usize = counts.iter().product();
    let pts = (0..total)
        .map(|mut i| {
            counts
                .iter()
                .zip(lo)
                .map(|(&c, &a)| {
                    let k = i % c;
                    i /= c;
                    a + k as f64 * step
                })
                .collect()
        })
        .collect();
    (counts, pts)
}

/// Indices of grid points no larger than any face/edge/corner neighbour, sorted by cost.
fn local_minima(counts: &[usize], costs: &[f64]) -> Vec<usize> {
    let dim = counts.len();
    let mut out: Vec<usize> = (0..costs.len())
        .filter(|&i| {
            if !costs[i].is_finite() {
                return false;
            }
            let mut idx = vec![0usize; dim];
            let mut r = i;
            for d in 0..dim {
                idx[d] = r % counts[d];
                r /= counts[d];
            }
            let nb = 3usize.pow(dim as u32);
            (0..nb).all(|mut code| {
                let mut j = 0usize;
                let mut stride = 1usize;
                for d in 0..dim {
                    let off = (code % 3) as isize - 1;
                    code /= 3;
                    let v = idx[d] as isize + off;
                    if v < 0 || v >= counts[d] as isize {
                        return true;
                    }
                    j += v as usize * stride;
                    stride *= counts[d];
                }
                j == i || costs[i] <= costs[j]
            })
        })
        .collect();
    out.sort_by(|a, b| costs[*a].total_cmp(&costs[*b]));
    out
}

pub(crate) fn box_bounds(env: &KnownEnvironment) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = (env.search.room_min, env.search.room_max);
    (lo.iter().take(env.dim).copied().collect(), hi.iter().take(env.dim).copied().collect())
}

/// Noncoherent stage: grid over the room with the clock offset from the
/// delay profiles, then simplex refinement of `(p, δτ)` from the best cells.
pub fn rml_ncp_search(env: &KnownEnvironment, y_raw: &[DMatrix<C64>], y: &[DVector<C64>]) -> Result<EstimateReport> {
    let nf = env.search.ifft_factor * env.waveform.num_subcarriers();
    let delays = peak_delays(env, y_raw, nf);
    let (lo, hi) = box_bounds(env);
    let (counts, pts) = grid(&lo, &hi, env.search.ncp_step);
    let costs: Vec<f64> = pts
        .par_iter()
        .map(|c| {
            let p = env.position(c);
            let dt = clock_from_delays(env, &delays, &p);
            rml_ncp_amplitudes_and_cost(env, &p, dt, y).map_or(f64::INFINITY, |r| r.1)
        })
        .collect();
    let minima = local_minima(&counts, &costs);
    if minima.is_empty() {
        return Err(Error::SearchFailure("noncoherent grid has no finite cost".into()));
    }
    let d = env.dim;
    let f = |v: &[f64]| {
        rml_ncp_amplitudes_and_cost(env, &env.position(&v[..d]), v[d], y).map_or(f64::INFINITY, |r| r.1)
    };
    let mut steps = vec![env.search.ncp_step / 4.0; d];
    steps.push(1.0 / (8.0 * env.waveform.bandwidth()));
    let best = minima
        .iter()
        .take(4)
        .map(|&i| {
            let mut x0 = pts[i].clone();
            x0.push(clock_from_delays(env, &delays, &env.position(&pts[i])));
            minimize(&f, &x0, &steps, env.search.max_evals)
        })
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("at least one candidate");
    let p = env.position(&best.x[..d]);
    let (gains, cost) = rml_ncp_amplitudes_and_cost(env, &p, best.x[d], y)?;
    let dphi = phase_from_gains(env, &p, &gains).unwrap_or(0.0);
    Ok(EstimateReport {
        stage: Stage::RmlNcp,
        p_hat: p.into(),
        delta_tau_hat: best.x[d],
        delta_phi_hat: dphi,
        sp_hats: Vec::new(),
        amplitudes: gains_to_pairs(&gains),
        cost,
        cost_trace: best.trace,
        evaluations: best.evaluations,
        converged: best.converged,
    })
}

/// Coherent stage around a noncoherent estimate.
///
/// The grid has step `cp_step_wavelengths · λ`. The clock offset at each
/// candidate keeps the noncoherent pseudo-delays fixed, so
/// `δτ̂(p) = δτ̂_0 + mean_n(‖p̂_0 − p_RS,n‖ − ‖p − p_RS,n‖)/c`, and the phase
/// offset is re-estimated per candidate. The lowest local minima are refined.
pub fn rml_position_search(env: &KnownEnvironment, init: &EstimateReport, y: &[DVector<C64>]) -> Result<EstimateReport> {
    let d = env.dim;
    let p0 = init.p();
    let dt0 = init.delta_tau_hat;
    let mean_range = |p: &Vec3| {
        env.stripes.iter().map(|s| (p - s.phase_center).norm()).sum::<f64>() / env.num_stripes() as f64
    };
    let r0 = mean_range(&p0);
    let clock_at = |p: &Vec3| dt0 + (r0 - mean_range(p)) / SPEED_OF_LIGHT;

    let hw = env.search.cp_half_width;
    let lo: Vec<f64> = p0.iter().take(d).map(|c| c - hw).collect();
    let hi: Vec<f64> = p0.iter().take(d).map(|c| c + hw).collect();
    let step = env.search.cp_step_wavelengths * env.waveform.lambda();
    let (counts, pts) = grid(&lo, &hi, step);
    if pts.is_empty() {
        return Err(Error::SearchFailure("coherent grid is empty".into()));
    }
    let costs: Vec<f64> = pts
        .par_iter()
        .map(|c| {
            let p = env.position(c);
            rml_profile_cost(env, &p, clock_at(&p), y).map_or(f64::INFINITY, |r| r.0)
        })
        .collect();
    let minima = local_minima(&counts, &costs);
    if minima.is_empty() {
        return Err(Error::SearchFailure("coherent grid has no finite cost".into()));
    }
    let f = |v: &[f64]| rml_profile_cost(env, &env.position(&v[..d]), v[d], y).map_or(f64::INFINITY, |r| r.0);
    let mut steps = vec![env.waveform.lambda() / 8.0; d];
    steps.push(1.0 / (8.0 * env.waveform.bandwidth()));
    let results: Vec<_> = minima
        .par_iter()
        .take(env.search.cp_candidates.max(1))
        .map(|&i| {
            let mut x0 = pts[i].clone();
            x0.push(clock_at(&env.position(&pts[i])));
            minimize(&f, &x0, &steps, env.search.max_evals)
        })
        .collect();
    let best = results
        .into_iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("at least one candidate");
    let p = env.position(&best.x[..d]);
    let dt = best.x[d];
    let (cost, dphi) = rml_profile_cost(env, &p, dt, y)?;
    let eta = WantedParams {
        p,
        delta_tau: dt,
        delta_phi: dphi,
        sp: Vec::new(),
    };
    let amps = super::jml::jml_amplitudes(env, &eta, y)?;
    Ok(EstimateReport {
        stage: Stage::Rml,
        p_hat: p.into(),
        delta_tau_hat: dt,
        delta_phi_hat: dphi,
        sp_hats: Vec::new(),
        amplitudes: gains_to_pairs(&amps),
        cost,
        cost_trace: best.trace,
        evaluations: best.evaluations,
        converged: best.converged,
    })
}
