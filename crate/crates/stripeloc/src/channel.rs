//! Path amplitudes and phases, and the diffuse-plus-thermal disturbance model.
//!
//! Specular amplitudes follow the Friis equation with a polarization-resolved
//! Fresnel reflection coefficient; scatterers are perfectly conducting spheres
//! in the optical region, so their radar cross-section is `π r²`.
//!
//! The disturbance covariance is `R = (R_f ⊙ s sᴴ) ⊗ I_M + (σ²/K) I`, where
//! `R_f` is the Toeplitz matrix of the sampled dense-multipath spectrum. Only
//! the `K × K` factor `A = R_f ⊙ s sᴴ + (σ²/K) I` is ever factorized.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, PathGeometry, PathKind, Vec3, SPEED_OF_LIGHT};
use crate::harness::scenario::Scenario;

pub type C64 = Complex64;

pub const VACUUM_PERMEABILITY: f64 = 1.256_637_062_12e-6;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;

/// Electrical properties of a wall material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub eps_r: f64,
    pub mu_r: f64,
    /// Conductivity in S/m.
    pub sigma: f64,
}

impl Material {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_r >= 1.0 && self.mu_r > 0.0 && self.sigma >= 0.0) {
            return Err(Error::SemanticError(format!("invalid material {self:?}")));
        }
        Ok(())
    }
}

/// A perfectly conducting sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub position: Vec3,
    pub radius: f64,
}

impl Scatterer {
    /// Whether `2πr/λ > 10`, where the constant-RCS approximation holds.
    pub fn optical_region(&self, lambda: f64) -> bool {
        2.0 * std::f64::consts::PI * self.radius / lambda > 10.0
    }
}

/// Dense multipath spectrum parameters. `beta_d` and `tau_d` are normalized
/// to the band: the spectrum is evaluated at `f = k / K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmcParams {
    pub alpha1: f64,
    pub beta_d: f64,
    pub tau_d: f64,
}

/// Free-space impedance.
pub fn z0() -> f64 {
    (VACUUM_PERMEABILITY / VACUUM_PERMITTIVITY).sqrt()
}

/// Intrinsic impedance of a lossy material at `fc`.
pub fn intrinsic_impedance(material: &Material, fc: f64) -> C64 {
    let omega = 2.0 * std::f64::consts::PI * fc;
    let num = C64::new(0.0, omega * VACUUM_PERMEABILITY * material.mu_r);
    let den = C64::new(material.sigma, omega * VACUUM_PERMITTIVITY * material.eps_r);
    (num / den).sqrt()
}

/// Fresnel coefficients `(Γ∥, Γ⊥)` for incidence from free space.
pub fn fresnel_coefficients(angle_incidence: f64, material: &Material, fc: f64) -> (C64, C64) {
    let z1 = intrinsic_impedance(material, fc);
    let z0 = z0();
    let ci = angle_incidence.cos();
    // Past the critical angle (only when ε_r μ_r < 1) the wave is totally reflected.
    let st = (angle_incidence.sin() / (material.eps_r * material.mu_r).sqrt()).min(1.0);
    let ct = st.asin().cos();
    let par = (z1 * ct - z0 * ci) / (z1 * ct + z0 * ci);
    let perp = (z1 * ci - z0 * ct) / (z1 * ci + z0 * ct);
    (par, perp)
}

/// Polarization-resolved reflection coefficient: the incident polarization is
/// split along the wall normal and its complement, each part scaled by its
/// Fresnel coefficient, and the result is projected on the UE polarization.
pub fn reflection_coefficient(
    e_inc: &Vec3,
    e_ue: &Vec3,
    normal: &Vec3,
    angle_incidence: f64,
    material: &Material,
    fc: f64,
) -> C64 {
    let (g_par, g_perp) = fresnel_coefficients(angle_incidence, material, fc);
    let e_par = normal * e_inc.dot(normal);
    let e_perp = e_inc - e_par;
    g_par * e_par.dot(e_ue) + g_perp * e_perp.dot(e_ue)
}

/// Amplitude of a LoS or wall-reflected path.
pub fn rp_amplitude(scenario: &Scenario, stripe: usize, path: &PathGeometry, pt: f64) -> Result<f64> {
    let lambda = scenario.waveform.lambda();
    let p_rs = scenario.stripes[stripe].phase_center;
    let pol = scenario.pol_rs.dot(&scenario.pol_ue).abs();
    let dist = path.delay * SPEED_OF_LIGHT;
    if dist <= 0.0 {
        return Err(Error::DegenerateGeometry("zero path length".into()));
    }
    let friis = pt.sqrt() * lambda / (4.0 * std::f64::consts::PI * dist);
    match path.kind {
        PathKind::Los => Ok(friis * pol),
        PathKind::Rp(l) => {
            let wall = &scenario.walls[l];
            // The reflection point lies on the ray towards the mirror UE.
            let e = (path.via_point - p_rs).normalize();
            let theta_i = e.dot(&wall.normal).abs().min(1.0).acos();
            let gamma = reflection_coefficient(
                &scenario.pol_rs,
                &scenario.pol_ue,
                &wall.normal,
                theta_i,
                &scenario.materials[wall.material_id],
                scenario.waveform.fc,
            );
            Ok(friis * gamma.norm())
        }
        PathKind::Sp(_) => Err(Error::DegenerateGeometry(
            "rp_amplitude called on a scatterer path".into(),
        )),
    }
}

/// Amplitude of a scatterer path (bistatic radar equation, RCS `π r²`).
pub fn sp_amplitude(scenario: &Scenario, stripe: usize, path: &PathGeometry, pt: f64) -> Result<f64> {
    let PathKind::Sp(j) = path.kind else {
        return Err(Error::DegenerateGeometry("sp_amplitude called on a specular path".into()));
    };
    let p_rs = scenario.stripes[stripe].phase_center;
    let d_s = (path.via_point - p_rs).norm();
    let d_us = path.delay * SPEED_OF_LIGHT - d_s;
    if d_s <= 0.0 || d_us <= 0.0 {
        return Err(Error::DegenerateGeometry("zero scatterer range".into()));
    }
    Ok(sp_amplitude_from_ranges(
        pt,
        scenario.waveform.lambda(),
        scenario.scatterers[j].radius,
        scenario.pol_rs.dot(&scenario.pol_ue).abs(),
        d_us,
        d_s,
    ))
}

pub fn sp_amplitude_from_ranges(pt: f64, lambda: f64, radius: f64, pol: f64, d_us: f64, d_s: f64) -> f64 {
    let four_pi = 4.0 * std::f64::consts::PI;
    pt.sqrt() * lambda * (std::f64::consts::PI * radius * radius).sqrt() * pol
        / (four_pi.powf(1.5) * d_us * d_s)
}

/// Carrier phase of a path: `-2π fc τ + ϕ + δφ`, wrapped.
pub fn path_phase(tau: f64, fc: f64, delta_phi: f64, varphi: f64) -> f64 {
    wrap_angle(-2.0 * std::f64::consts::PI * fc * tau + varphi + delta_phi)
}

/// Sampled dense multipath spectrum `κ_k = ψ(k/K)`, `k = 0..K`.
pub fn dmc_psd_samples(dmc: &DmcParams, k: usize, delta_f: f64) -> Vec<C64> {
    let t_norm = 1.0 / (k as f64 * delta_f);
    (0..k)
        .map(|i| {
            let f = i as f64 * delta_f * t_norm;
            let w = 2.0 * std::f64::consts::PI * f;
            dmc.alpha1 * C64::from_polar(1.0, -w * dmc.tau_d) / C64::new(dmc.beta_d, w)
        })
        .collect()
}

/// Hermitian Toeplitz frequency covariance with first column `κ`.
pub fn dmc_frequency_covariance(dmc: &DmcParams, k: usize, delta_f: f64) -> DMatrix<C64> {
    let kappa = dmc_psd_samples(dmc, k, delta_f);
    DMatrix::from_fn(k, k, |r, c| {
        if r >= c {
            kappa[r - c]
        } else {
            kappa[c - r].conj()
        }
    })
}

/// Disturbance covariance with a Kronecker-lifted whitener.
#[derive(Debug, Clone)]
pub struct DisturbanceCov {
    pub r_f: DMatrix<C64>,
    /// `A = R_f ⊙ s sᴴ + (σ²/K) I`, so that `R = A ⊗ I_M`.
    pub factor: DMatrix<C64>,
    /// Lower Cholesky factor of `A`.
    pub chol: DMatrix<C64>,
    /// `W_f = chol⁻¹`; the whitener is `W_f ⊗ I_M`.
    pub w_f: DMatrix<C64>,
    pub m: usize,
}

pub fn disturbance_covariance(
    dmc: &DmcParams,
    sigma2: f64,
    pilots: &[C64],
    delta_f: f64,
    m: usize,
) -> Result<DisturbanceCov> {
    let k = pilots.len();
    let norm: f64 = pilots.iter().map(|s| s.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::SemanticError(format!("pilot norm² is {norm}, expected 1")));
    }
    let r_f = dmc_frequency_covariance(dmc, k, delta_f);
    let mut factor = DMatrix::from_fn(k, k, |r, c| r_f[(r, c)] * pilots[r] * pilots[c].conj());
    for i in 0..k {
        factor[(i, i)] += C64::new(sigma2 / k as f64, 0.0);
    }
    let chol = factor
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure("disturbance covariance is not positive definite".into()))?
        .l();
    let w_f = chol
        .solve_lower_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::NumericalFailure("singular Cholesky factor".into()))?;
    Ok(DisturbanceCov {
        r_f,
        factor,
        chol,
        w_f,
        m,
    })
}

impl DisturbanceCov {
    pub fn k(&self) -> usize {
        self.factor.nrows()
    }

    /// `W_f v` for a length-`K` vector.
    pub fn whiten_freq(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.w_f * v
    }

    /// Whitens an `M × K` observation: `vec(Y') = (W_f ⊗ I_M) vec(Y)`, i.e. `Y' = Y W_fᵀ`.
    pub fn whiten_matrix(&self, y: &DMatrix<C64>) -> DMatrix<C64> {
        y * self.w_f.transpose()
    }

    /// Whitens a stacked `MK` vector (antenna index fastest).
    pub fn whiten(&self, y: &DVector<C64>) -> DVector<C64> {
        let k = self.k();
        let mat = DMatrix::from_column_slice(self.m, k, y.as_slice());
        let w = self.whiten_matrix(&mat);
        DVector::from_column_slice(w.as_slice())
    }

    /// Dense `MK × MK` covariance.
    pub fn dense(&self) -> DMatrix<C64> {
        self.factor.kronecker(&DMatrix::identity(self.m, self.m))
    }

    /// Dense whitener `W_f ⊗ I_M`.
    pub fn dense_whitener(&self) -> DMatrix<C64> {
        self.w_f.kronecker(&DMatrix::identity(self.m, self.m))
    }
}
