//! Fisher information: local channel FIMs, Jacobians to the global
//! parameters, the equivalent FIM of the wanted parameters, and the derived
//! position, clock, phase and scatterer error bounds.

pub mod params;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{DisturbanceCov, C64};
use crate::error::{Error, Result};
use crate::geometry::{enumerate_paths, mirror_ue, PathKind, Stripe, Vec3, SPEED_OF_LIGHT};
use crate::harness::scenario::Scenario;
use crate::signal::{
    kron, pt_for_sdnr, steering_frequency, steering_frequency_deriv, steering_spatial,
    steering_spatial_deriv, Waveform,
};

pub use params::{local_params, GlobalParams, LocalChannelParams, ParamLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyncMode {
    /// One phase offset shared by all stripes.
    Cp,
    /// One phase offset per stripe.
    Ncp,
}

impl SyncMode {
    pub fn label(&self) -> &'static str {
        match self {
            SyncMode::Cp => "cp",
            SyncMode::Ncp => "ncp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FimOptions {
    pub sync_mode: SyncMode,
    /// 3, or 2 to treat the UE height as known.
    pub dim: usize,
    pub known_rp_phases: bool,
}

impl FimOptions {
    pub fn new(sync_mode: SyncMode, dim: usize) -> Self {
        Self {
            sync_mode,
            dim,
            known_rp_phases: false,
        }
    }

    pub fn from_scenario(scenario: &Scenario) -> Self {
        Self::new(scenario.sync_mode, scenario.dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    /// Position error bound (m).
    pub peb: f64,
    /// Clock error bound (s).
    pub ceb_s: f64,
    /// Clock error bound in range units, `c · CEB` (m).
    pub ceb_m: f64,
    /// Phase-offset error bound (rad).
    pub cpeb: f64,
    /// Per-scatterer position error bounds (m).
    pub sp_peb: Vec<f64>,
    /// Condition number of the equilibrated EFIM.
    pub efim_cond: f64,
}

impl BoundsReport {
    pub fn infinite(n_sp: usize) -> Self {
        Self {
            peb: f64::INFINITY,
            ceb_s: f64::INFINITY,
            ceb_m: f64::INFINITY,
            cpeb: f64::INFINITY,
            sp_peb: vec![f64::INFINITY; n_sp],
            efim_cond: f64::INFINITY,
        }
    }

    pub fn all_values(&self) -> Vec<f64> {
        let mut v = vec![self.peb, self.ceb_s, self.cpeb];
        v.extend_from_slice(&self.sp_peb);
        v
    }
}

/// Whitened derivative columns `∂μ/∂η_ch` of one stripe, `MK × 4Nc`.
pub fn local_derivatives(
    stripe: &Stripe,
    waveform: &Waveform,
    lp: &LocalChannelParams,
    cov: &DisturbanceCov,
) -> DMatrix<C64> {
    let nc = lp.len();
    let m = stripe.num_antennas;
    let k = waveform.num_subcarriers();
    let lambda = waveform.lambda();
    let s = DVector::from_column_slice(&waveform.pilots);
    let mut d = DMatrix::<C64>::zeros(m * k, 4 * nc);
    for i in 0..nc {
        let a = steering_spatial(lp.theta[i], m, stripe.spacing, lambda);
        let da = steering_spatial_deriv(lp.theta[i], m, stripe.spacing, lambda);
        let b = steering_frequency(lp.tau[i], k, waveform.delta_f).component_mul(&s);
        let db = steering_frequency_deriv(lp.tau[i], k, waveform.delta_f).component_mul(&s);
        let u = cov.whiten_freq(&b);
        let du = cov.whiten_freq(&db);
        let rot = C64::from_polar(1.0, lp.phi[i]);
        let gamma = rot * lp.alpha[i];
        let c = kron(&u, &a);
        d.set_column(i, &(kron(&u, &da) * gamma));
        d.set_column(nc + i, &(kron(&du, &a) * gamma));
        d.set_column(2 * nc + i, &(&c * (C64::i() * gamma)));
        d.set_column(3 * nc + i, &(c * rot));
    }
    d
}

/// Local FIM `2 Re{Dᴴ R⁻¹ D}` of one stripe.
pub fn local_fim(
    stripe: &Stripe,
    waveform: &Waveform,
    lp: &LocalChannelParams,
    cov: &DisturbanceCov,
) -> DMatrix<f64> {
    let d = local_derivatives(stripe, waveform, lp, cov);
    let g = d.adjoint() * &d;
    g.map(|v| 2.0 * v.re)
}

fn aoa_gradient(r: &Vec3) -> Vec3 {
    let rho2 = r.x * r.x + r.y * r.y;
    Vec3::new(r.y, -r.x, 0.0) / rho2
}

/// Jacobian `∂η_ch,n / ∂η` (rows: global layout, columns: stacked local order).
pub fn jacobian(scenario: &Scenario, n: usize, g: &GlobalParams, options: &FimOptions) -> Result<DMatrix<f64>> {
    let layout = ParamLayout::new(scenario, options);
    let stripe = &scenario.stripes[n];
    let p_rs = stripe.phase_center;
    let paths = crate::geometry::paths_for(&g.p, stripe, &scenario.walls, &g.sp, g.delta_tau)?;
    let nc = paths.len();
    let k_phase = -2.0 * std::f64::consts::PI * scenario.waveform.fc;
    let c = SPEED_OF_LIGHT;
    let mut t = DMatrix::<f64>::zeros(layout.total, 4 * nc);
    let put_pos = |t: &mut DMatrix<f64>, col: usize, v: &Vec3| {
        for i in 0..layout.dim {
            t[(i, col)] = v[i];
        }
    };
    for (i, path) in paths.iter().enumerate() {
        let (th, tau, ph) = (i, nc + i, 2 * nc + i);
        match path.kind {
            PathKind::Los => {
                let r = g.p - p_rs;
                let rn = r.norm();
                if rn == 0.0 {
                    return Err(Error::DegenerateGeometry("zero LoS range".into()));
                }
                put_pos(&mut t, th, &aoa_gradient(&r));
                put_pos(&mut t, tau, &(r / (c * rn)));
                put_pos(&mut t, ph, &(r * (k_phase / (c * rn))));
            }
            PathKind::Rp(l) => {
                let wall = &scenario.walls[l];
                let h = wall.householder();
                let rm = mirror_ue(&g.p, wall) - p_rs;
                let rn = rm.norm();
                if rn == 0.0 {
                    return Err(Error::DegenerateGeometry("zero mirror range".into()));
                }
                put_pos(&mut t, th, &(h * aoa_gradient(&rm)));
                put_pos(&mut t, tau, &(h * rm / (c * rn)));
                put_pos(&mut t, ph, &(h * rm * (k_phase / (c * rn))));
            }
            PathKind::Sp(j) => {
                let sp = g.sp[j];
                let r_us = sp - g.p;
                let r_s = sp - p_rs;
                let (nus, ns) = (r_us.norm(), r_s.norm());
                if nus == 0.0 || ns == 0.0 {
                    return Err(Error::DegenerateGeometry("zero scatterer range".into()));
                }
                put_pos(&mut t, tau, &(-r_us / (c * nus)));
                put_pos(&mut t, ph, &(-r_us * (k_phase / (c * nus))));
                let legs = r_s / ns + r_us / nus;
                let th_sp = aoa_gradient(&r_s);
                for q in 0..3 {
                    t[(layout.sp + 3 * j + q, th)] = th_sp[q];
                    t[(layout.sp + 3 * j + q, tau)] = legs[q] / c;
                    t[(layout.sp + 3 * j + q, ph)] = legs[q] * k_phase / c;
                }
            }
        }
        t[(layout.clock, tau)] = 1.0;
        let prow = if layout.n_ph == 1 { layout.phase } else { layout.phase + n };
        t[(prow, ph)] = 1.0;
        t[(layout.amp_offsets[n] + i, 3 * nc + i)] = 1.0;
    }
    for (slot, &k) in layout.nuisance_phase_components(n, scenario).iter().enumerate() {
        t[(layout.nuis_phase_offsets[n] + slot, 2 * nc + k)] = 1.0;
    }
    Ok(t)
}

/// Global FIM `Σ_n T_n J_n T_nᵀ` at parameters `g`.
pub fn global_fim_at(scenario: &Scenario, g: &GlobalParams, options: &FimOptions) -> Result<DMatrix<f64>> {
    let layout = ParamLayout::new(scenario, options);
    let parts: Result<Vec<DMatrix<f64>>> = (0..scenario.num_stripes())
        .into_par_iter()
        .map(|n| {
            let lp = local_params(scenario, n, g)?;
            let cov = scenario.disturbance(n)?;
            let j = local_fim(&scenario.stripes[n], &scenario.waveform, &lp, &cov);
            let t = jacobian(scenario, n, g, options)?;
            Ok(&t * j * t.transpose())
        })
        .collect();
    let mut f = DMatrix::<f64>::zeros(layout.total, layout.total);
    for p in parts? {
        f += p;
    }
    Ok(f)
}

/// Global FIM at the scenario's ground truth and SDNR.
pub fn global_fim(scenario: &Scenario, options: &FimOptions) -> Result<DMatrix<f64>> {
    let pt = pt_for_sdnr(scenario.sdnr_db, scenario)?;
    let g = GlobalParams::truth(scenario, pt)?;
    global_fim_at(scenario, &g, options)
}

/// Result of eliminating nuisance parameters.
#[derive(Debug, Clone)]
pub struct Efim {
    pub efim: DMatrix<f64>,
    /// `EFIM⁻¹`, the CRB of the wanted parameters.
    pub crb: DMatrix<f64>,
    /// Condition number of the equilibrated EFIM.
    pub cond: f64,
    /// Whether the nuisance block needed the pseudo-inverse fallback.
    pub used_pinv: bool,
}

const RANK_TOL: f64 = 1e-12;

fn equilibration(f: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(f.nrows(), |i, _| {
        let d = f[(i, i)];
        if d > 0.0 {
            1.0 / d.sqrt()
        } else {
            1.0
        }
    })
}

fn scale_sym(f: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(f.nrows(), f.ncols(), |i, j| f[(i, j)] * s[i] * s[j])
}

fn pinv_sym(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut rank = 0;
    let inv = DVector::from_fn(eig.eigenvalues.len(), |i, _| {
        let v = eig.eigenvalues[i];
        if v > RANK_TOL * max {
            rank += 1;
            1.0 / v
        } else {
            0.0
        }
    });
    let q = &eig.eigenvectors;
    (q * DMatrix::from_diagonal(&inv) * q.transpose(), rank)
}

/// Schur complement onto the first `n_wanted` parameters. The FIM is
/// equilibrated to unit diagonal first; a singular nuisance block falls back
/// to the pseudo-inverse.
pub fn efim(fim: &DMatrix<f64>, n_wanted: usize) -> Result<Efim> {
    let n = fim.nrows();
    let s = equilibration(fim);
    let f = scale_sym(fim, &s);
    let a = f.view((0, 0), (n_wanted, n_wanted)).into_owned();
    let b = f.view((0, n_wanted), (n_wanted, n - n_wanted)).into_owned();
    let c = f.view((n_wanted, n_wanted), (n - n_wanted, n - n_wanted)).into_owned();
    let (c_inv, used_pinv) = match c.clone().cholesky() {
        Some(ch) => (ch.inverse(), false),
        None => (pinv_sym(&c).0, true),
    };
    let e_scaled = &a - &b * c_inv * b.transpose();
    let e_scaled = (&e_scaled + e_scaled.transpose()) * 0.5;
    let eig = SymmetricEigen::new(e_scaled.clone());
    let (mut lo, mut hi, mut lo_idx) = (f64::INFINITY, 0.0f64, 0);
    for (i, v) in eig.eigenvalues.iter().enumerate() {
        if *v < lo {
            lo = *v;
            lo_idx = i;
        }
        hi = hi.max(v.abs());
    }
    let sw = s.rows(0, n_wanted).into_owned();
    if !(lo > RANK_TOL * hi) {
        let rank = eig.eigenvalues.iter().filter(|v| **v > RANK_TOL * hi).count();
        let dir = eig.eigenvectors.column(lo_idx).component_mul(&sw);
        let dir = &dir / dir.norm();
        return Err(Error::SingularFim {
            rank,
            dim: n_wanted,
            null_direction: dir.iter().copied().collect(),
        });
    }
    let crb_scaled = e_scaled
        .clone()
        .cholesky()
        .map(|ch| ch.inverse())
        .unwrap_or_else(|| pinv_sym(&e_scaled).0);
    let unscale_inv: Vec<f64> = sw.iter().map(|v| 1.0 / v).collect();
    let efim = DMatrix::from_fn(n_wanted, n_wanted, |i, j| e_scaled[(i, j)] * unscale_inv[i] * unscale_inv[j]);
    let crb = DMatrix::from_fn(n_wanted, n_wanted, |i, j| crb_scaled[(i, j)] * sw[i] * sw[j]);
    Ok(Efim {
        efim,
        crb,
        cond: hi / lo,
        used_pinv,
    })
}

/// Reads PEB, CEB, CPEB and SP-PEBs from the CRB of the wanted parameters.
pub fn bounds(e: &Efim, layout: &ParamLayout) -> BoundsReport {
    let crb = &e.crb;
    let tr = |start: usize, len: usize| (start..start + len).map(|i| crb[(i, i)]).sum::<f64>().sqrt();
    let ceb_s = crb[(layout.clock, layout.clock)].sqrt();
    BoundsReport {
        peb: tr(0, layout.dim),
        ceb_s,
        ceb_m: ceb_s * SPEED_OF_LIGHT,
        cpeb: tr(layout.phase, layout.n_ph),
        sp_peb: (0..layout.n_sp).map(|j| tr(layout.sp + 3 * j, 3)).collect(),
        efim_cond: e.cond,
    }
}

/// Bounds at transmit power `pt` (amplitudes follow the scenario geometry).
pub fn bounds_at_power(scenario: &Scenario, options: &FimOptions, pt: f64) -> Result<BoundsReport> {
    let layout = ParamLayout::new(scenario, options);
    let g = GlobalParams::truth(scenario, pt)?;
    let f = global_fim_at(scenario, &g, options)?;
    let e = efim(&f, layout.n_wanted)?;
    Ok(bounds(&e, &layout))
}

/// Bounds at the scenario's SDNR.
pub fn compute_bounds(scenario: &Scenario, options: &FimOptions) -> Result<BoundsReport> {
    let pt = pt_for_sdnr(scenario.sdnr_db, scenario)?;
    bounds_at_power(scenario, options, pt)
}

/// Low/mid and mid/high bandwidth-regime thresholds `(B_low, B_high)` in Hz.
pub fn bw_thresholds(scenario: &Scenario) -> Result<(f64, f64)> {
    let (mut los_sum, mut rp_sum, mut n_los, mut n_rp) = (0.0, 0.0, 0usize, 0usize);
    for n in 0..scenario.num_stripes() {
        for path in enumerate_paths(scenario, n)? {
            match path.kind {
                PathKind::Los => {
                    los_sum += path.delay;
                    n_los += 1;
                }
                PathKind::Rp(_) => {
                    rp_sum += path.delay;
                    n_rp += 1;
                }
                PathKind::Sp(_) => {}
            }
        }
    }
    if n_rp == 0 {
        return Err(Error::DegenerateGeometry("no reflections: B_low undefined".into()));
    }
    let tau_los = los_sum / n_los as f64;
    let dtau = rp_sum / n_rp as f64 - tau_los;
    if !(dtau > 0.0) {
        return Err(Error::DegenerateGeometry("non-positive mean delay gap".into()));
    }
    let k = scenario.waveform.num_subcarriers() as f64;
    let f = std::f64::consts::FRAC_1_SQRT_2;
    let b_low = k * (2.0 * f - 1.0).acos() / (2.0 * std::f64::consts::PI * dtau * (k - 1.0));
    let st = &scenario.stripes[0];
    let m = st.num_antennas as f64;
    let s_m = m * (m * m - 1.0) / 12.0;
    let s_k = (2.0 * k.powi(3) - 3.0 * k * k + k) / 6.0;
    let b_high = k * st.spacing / (tau_los * scenario.waveform.lambda()) * (s_m / s_k).sqrt();
    Ok((b_low, b_high))
}

/// PEB at each grid point with the UE moved there. Transmit power is held at
/// the value calibrated for the scenario's own UE position. Degenerate or
/// singular points yield `NaN`.
pub fn peb_heatmap(scenario: &Scenario, grid: &[Vec3], options: &FimOptions) -> Result<Vec<f64>> {
    let pt = pt_for_sdnr(scenario.sdnr_db, scenario)?;
    Ok(grid
        .par_iter()
        .map(|p| {
            let s = scenario.with_ue(*p);
            bounds_at_power(&s, options, pt).map(|b| b.peb).unwrap_or(f64::NAN)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{disturbance_covariance, DmcParams};
    use crate::harness::scenario::MultipathCase;

    fn white_cov(wf: &Waveform, m: usize) -> DisturbanceCov {
        let dmc = DmcParams { alpha1: 0.0, beta_d: 1.0, tau_d: 0.0 };
        disturbance_covariance(&dmc, wf.noise_power(), &wf.pilots, wf.delta_f, m).unwrap()
    }

    #[test]
    fn single_path_phase_information() {
        let wf = Waveform::uniform(3.5e9, 8, 1e6, 290.0);
        let st = Stripe::new(Vec3::zeros(), 0.0, 4, 0.04, None).unwrap();
        let lp = LocalChannelParams {
            kinds: vec![PathKind::Los],
            theta: vec![0.3],
            tau: vec![2e-8],
            phi: vec![0.9],
            alpha: vec![1e-3],
        };
        let j = local_fim(&st, &wf, &lp, &white_cov(&wf, 4));
        let sigma2 = wf.noise_power();
        let expect = 2.0 * 1e-6 * 4.0 * 8.0 / sigma2;
        assert!((j[(2, 2)] - expect).abs() / expect < 1e-12);
    }

    #[test]
    fn zero_amplitude_path_decouples() {
        let wf = Waveform::uniform(3.5e9, 6, 1e6, 290.0);
        let st = Stripe::new(Vec3::zeros(), 0.0, 3, 0.04, None).unwrap();
        let lp = LocalChannelParams {
            kinds: vec![PathKind::Los, PathKind::Rp(0)],
            theta: vec![0.3, -0.4],
            tau: vec![2e-8, 3e-8],
            phi: vec![0.9, 0.1],
            alpha: vec![1e-3, 0.0],
        };
        let j = local_fim(&st, &wf, &lp, &white_cov(&wf, 3));
        let nc = 2;
        for r in [1, nc + 1, 2 * nc + 1] {
            for c in 0..4 * nc {
                assert_eq!(j[(r, c)], 0.0);
            }
        }
        assert!(j[(3 * nc + 1, 3 * nc + 1)] > 0.0);
    }

    #[test]
    fn dimension_formula() {
        let s = Scenario::canonical();
        let (n, l, jj) = (4, 4, 2);
        for d in [2, 3] {
            let cp = ParamLayout::new(&s, &FimOptions::new(SyncMode::Cp, d));
            assert_eq!(cp.total, d + 2 + 3 * jj + 2 * n * (l + jj) - n);
            let ncp = ParamLayout::new(&s, &FimOptions::new(SyncMode::Ncp, d));
            assert_eq!(ncp.total, d + 1 + 3 * jj + 2 * n * (l + jj));
        }
    }

    #[test]
    fn los_only_delay_row_is_unit_direction() {
        let s = Scenario::canonical().with_case(MultipathCase::LosOnly);
        let g = GlobalParams::truth(&s, 1.0).unwrap();
        let t = jacobian(&s, 1, &g, &FimOptions::new(SyncMode::Cp, 3)).unwrap();
        let r = s.ue_position - s.stripes[1].phase_center;
        let u = r / (SPEED_OF_LIGHT * r.norm());
        for i in 0..3 {
            assert!((t[(i, 1)] - u[i]).abs() < 1e-20);
        }
    }

    #[test]
    fn ncp_association_structure() {
        let mut s = Scenario::canonical();
        s.stripes.truncate(2);
        s.delta_phi.truncate(1);
        s.scatterers.clear();
        s.walls.truncate(2);
        s.wall_names.truncate(2);
        // Stripe 0 sits on wall 0 and stripe 1 on wall 1, so each sees one
        // reflection; one scatterer brings Nc to 3.
        s.scatterers.push(crate::channel::Scatterer { position: Vec3::new(2.0, 2.2, 0.5), radius: 0.2 });
        let opt = FimOptions::new(SyncMode::Ncp, 3);
        let layout = ParamLayout::new(&s, &opt);
        let g = GlobalParams::truth(&s, 1.0).unwrap();
        for n in 0..2 {
            let t = jacobian(&s, n, &g, &opt).unwrap();
            let nc = 3;
            for slot in 0..nc - 1 {
                for k in 0..nc {
                    let v = t[(layout.nuis_phase_offsets[n] + slot, 2 * nc + k)];
                    assert_eq!(v, if k == slot + 1 { 1.0 } else { 0.0 });
                }
            }
            let other = 1 - n;
            for slot in 0..nc - 1 {
                for c in 0..4 * nc {
                    assert_eq!(t[(layout.nuis_phase_offsets[other] + slot, c)], 0.0);
                }
            }
            for k in 0..nc {
                assert_eq!(t[(layout.amp_offsets[n] + k, 3 * nc + k)], 1.0);
                assert_eq!(t[(layout.phase + n, 2 * nc + k)], 1.0);
                assert_eq!(t[(layout.phase + other, 2 * nc + k)], 0.0);
            }
        }
    }

    #[test]
    fn schur_equals_full_inverse() {
        let s = Scenario::canonical();
        let opt = FimOptions::new(SyncMode::Ncp, 3);
        let layout = ParamLayout::new(&s, &opt);
        let f = global_fim(&s, &opt).unwrap();
        let e = efim(&f, layout.n_wanted).unwrap();
        let sc = equilibration(&f);
        let inv = scale_sym(&f, &sc).cholesky().unwrap().inverse();
        for i in 0..layout.n_wanted {
            for j in 0..layout.n_wanted {
                let full = inv[(i, j)] * sc[i] * sc[j];
                let scale = (e.crb[(i, i)] * e.crb[(j, j)]).sqrt();
                // The NCP clock block has condition number near 1e8 at 10 MHz.
                assert!((full - e.crb[(i, j)]).abs() <= 1e-6 * scale, "{i} {j}");
            }
        }
    }

    #[test]
    fn fim_symmetric_psd() {
        let s = Scenario::canonical();
        let f = global_fim(&s, &FimOptions::new(SyncMode::Cp, 3)).unwrap();
        assert!((&f - f.transpose()).norm() <= 1e-12 * f.norm());
        let sc = equilibration(&f);
        let eig = SymmetricEigen::new(scale_sym(&f, &sc)).eigenvalues;
        assert!(eig.iter().all(|v| *v >= -1e-8));
    }

    #[test]
    fn heatmap_single_point_matches_bounds() {
        let s = Scenario::canonical();
        let opt = FimOptions::new(SyncMode::Cp, 3);
        let h = peb_heatmap(&s, &[s.ue_position], &opt).unwrap();
        let b = compute_bounds(&s, &opt).unwrap();
        assert!((h[0] - b.peb).abs() <= 1e-12 * b.peb);
    }

    #[test]
    fn doubling_room_halves_b_low() {
        let s = Scenario::canonical();
        let mut big = s.clone();
        for st in &mut big.stripes {
            st.phase_center *= 2.0;
        }
        for w in &mut big.walls {
            w.point_on_wall *= 2.0;
        }
        big.ue_position *= 2.0;
        let (a, _) = bw_thresholds(&s).unwrap();
        let (b, _) = bw_thresholds(&big).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
    }
}
