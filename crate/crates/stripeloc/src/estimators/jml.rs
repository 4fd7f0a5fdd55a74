//! Joint ML with closed-form amplitude elimination.
//!
//! Per stripe the model is `y' = α e^{jφ_LoS} c'_LoS + Σ γ_l c'_l`, with the
//! LoS amplitude real and all other gains free. Splitting into real and
//! imaginary parts gives a real least-squares problem in
//! `x = [α, Re γ_1, Im γ_1, ...]` with basis `B = [e^{jφ}c'_LoS, c'_1, jc'_1, ...]`.

use nalgebra::{DMatrix, DVector};

use crate::channel::{path_phase, C64};
use crate::error::Result;
use crate::geometry::wrap_angle;
use crate::linalg::lstsq;

use super::simplex::minimize;
use super::{gains_to_pairs, EstimateReport, KnownEnvironment, Stage, WantedParams};

/// Complex basis `B_n` (`MK × (2(L+J) − 1)`) at `eta`.
pub fn basis_matrix(env: &KnownEnvironment, n: usize, eta: &WantedParams) -> Result<DMatrix<C64>> {
    let paths = env.paths(n, &eta.p, &eta.sp, eta.delta_tau)?;
    let mk = env.stripes[n].num_antennas * env.waveform.num_subcarriers();
    let mut b = DMatrix::<C64>::zeros(mk, 2 * paths.len() - 1);
    for (i, path) in paths.iter().enumerate() {
        let c = env.response(n, path.aoa, path.pseudo_delay);
        if i == 0 {
            let phi = path_phase(path.delay, env.waveform.fc, eta.delta_phi, 0.0);
            b.set_column(0, &(c * C64::from_polar(1.0, phi)));
        } else {
            b.set_column(2 * i - 1, &c);
            b.set_column(2 * i, &(c * C64::i()));
        }
    }
    Ok(b)
}

/// `[Re B; Im B]`.
pub fn stack_real_matrix(b: &DMatrix<C64>) -> DMatrix<f64> {
    let r = b.nrows();
    DMatrix::from_fn(2 * r, b.ncols(), |i, j| if i < r { b[(i, j)].re } else { b[(i - r, j)].im })
}

/// `[Re y; Im y]`.
pub fn stack_real_vector(y: &DVector<C64>) -> DVector<f64> {
    let r = y.len();
    DVector::from_fn(2 * r, |i, _| if i < r { y[i].re } else { y[i - r].im })
}

/// Converts the real LS solution of one stripe into complex gains, LoS first.
fn gains_from_real(x: &DVector<f64>, b0: C64) -> DVector<C64> {
    let l = x.len().div_ceil(2);
    DVector::from_fn(l, |i, _| {
        if i == 0 {
            b0 * x[0]
        } else {
            C64::new(x[2 * i - 1], x[2 * i])
        }
    })
}

fn stripe_fit(env: &KnownEnvironment, n: usize, eta: &WantedParams, y: &DVector<C64>) -> Result<(DVector<C64>, f64)> {
    let b = basis_matrix(env, n, eta)?;
    let sol = lstsq(&stack_real_matrix(&b), &stack_real_vector(y))?;
    let los = &env.paths(n, &eta.p, &[], eta.delta_tau)?[0];
    let rot = C64::from_polar(1.0, path_phase(los.delay, env.waveform.fc, eta.delta_phi, 0.0));
    Ok((gains_from_real(&sol.x, rot), sol.cost))
}

/// Closed-form complex path gains per stripe (LoS, reflections, scatterers).
pub fn jml_amplitudes(env: &KnownEnvironment, eta: &WantedParams, y: &[DVector<C64>]) -> Result<Vec<DVector<C64>>> {
    (0..env.num_stripes())
        .map(|n| stripe_fit(env, n, eta, &y[n]).map(|r| r.0))
        .collect()
}

/// Compressed negative log-likelihood `Σ_n ‖ẙ'_n − B̊_n B̊_n† ẙ'_n‖²`.
pub fn jml_cost(env: &KnownEnvironment, eta: &WantedParams, y: &[DVector<C64>]) -> Result<f64> {
    let mut acc = 0.0;
    for n in 0..env.num_stripes() {
        acc += stripe_fit(env, n, eta, &y[n])?.1;
    }
    Ok(acc)
}

/// Packs `eta` into search coordinates `[p (D), δτ, δφ, sp (3J)]`.
pub fn pack(env: &KnownEnvironment, eta: &WantedParams) -> Vec<f64> {
    let mut v: Vec<f64> = eta.p.iter().take(env.dim).copied().collect();
    v.push(eta.delta_tau);
    v.push(eta.delta_phi);
    for s in &eta.sp {
        v.extend(s.iter());
    }
    v
}

pub fn unpack(env: &KnownEnvironment, v: &[f64]) -> WantedParams {
    let d = env.dim;
    let sp = v[d + 2..]
        .chunks(3)
        .map(|c| crate::geometry::Vec3::new(c[0], c[1], c[2]))
        .collect();
    WantedParams {
        p: env.position(&v[..d]),
        delta_tau: v[d],
        delta_phi: v[d + 1],
        sp,
    }
}

/// Local simplex refinement of the JML cost over all wanted parameters.
pub fn jml_refine(env: &KnownEnvironment, initial: &EstimateReport, y: &[DVector<C64>]) -> Result<EstimateReport> {
    let x0 = pack(env, &initial.wanted());
    let lambda = env.waveform.lambda();
    let mut steps = vec![lambda / 8.0; env.dim];
    steps.push(1.0 / (8.0 * env.waveform.bandwidth()));
    steps.push(0.1);
    steps.extend(std::iter::repeat_n(env.search.sp_step / 2.0, 3 * initial.sp_hats.len()));
    let f = |v: &[f64]| jml_cost(env, &unpack(env, v), y).unwrap_or(f64::INFINITY);
    let res = minimize(&f, &x0, &steps, env.search.max_evals);
    let mut eta = unpack(env, &res.x);
    eta.delta_phi = wrap_angle(eta.delta_phi);
    let amps = jml_amplitudes(env, &eta, y)?;
    Ok(EstimateReport {
        stage: Stage::Jml,
        p_hat: eta.p.into(),
        delta_tau_hat: eta.delta_tau,
        delta_phi_hat: eta.delta_phi,
        sp_hats: eta.sp.iter().map(|s| (*s).into()).collect(),
        amplitudes: gains_to_pairs(&amps),
        cost: res.cost,
        cost_trace: res.trace,
        evaluations: res.evaluations,
        converged: res.converged,
    })
}
