//! Steering vectors, per-path responses, observation synthesis and SDNR.
//!
//! Stacked vectors use the antenna index fastest, so a response is
//! `c = (b ⊙ s) ⊗ a` and `vec(Y)` stacks the columns of the `M × K` matrix.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{DisturbanceCov, C64};
use crate::error::Result;
use crate::fim::params::{local_params, GlobalParams};
use crate::geometry::{enumerate_paths, Stripe, SPEED_OF_LIGHT};
use crate::harness::scenario::Scenario;

pub const BOLTZMANN: f64 = 1.380_649e-23;

const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub fc: f64,
    pub delta_f: f64,
    /// Unit-norm pilot symbols, one per subcarrier.
    pub pilots: Vec<C64>,
    pub temperature: f64,
}

impl Waveform {
    /// Constant-modulus pilots `s_k = 1/√K`.
    pub fn uniform(fc: f64, k: usize, delta_f: f64, temperature: f64) -> Self {
        let v = C64::new(1.0 / (k as f64).sqrt(), 0.0);
        Self {
            fc,
            delta_f,
            pilots: vec![v; k],
            temperature,
        }
    }

    pub fn num_subcarriers(&self) -> usize {
        self.pilots.len()
    }

    pub fn lambda(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }

    pub fn bandwidth(&self) -> f64 {
        self.delta_f * self.num_subcarriers() as f64
    }

    /// Total thermal noise power over the band, `k_B T B`.
    pub fn noise_power(&self) -> f64 {
        BOLTZMANN * self.temperature * self.bandwidth()
    }
}

pub fn steering_spatial(theta: f64, m: usize, d: f64, lambda: f64) -> DVector<C64> {
    let w = TAU * d * theta.sin() / lambda;
    DVector::from_fn(m, |i, _| C64::from_polar(1.0, w * i as f64))
}

/// `∂a/∂θ`.
pub fn steering_spatial_deriv(theta: f64, m: usize, d: f64, lambda: f64) -> DVector<C64> {
    let w = TAU * d * theta.sin() / lambda;
    let g = TAU * d * theta.cos() / lambda;
    DVector::from_fn(m, |i, _| C64::new(0.0, g * i as f64) * C64::from_polar(1.0, w * i as f64))
}

pub fn steering_frequency(tau: f64, k: usize, delta_f: f64) -> DVector<C64> {
    let w = -TAU * delta_f * tau;
    DVector::from_fn(k, |i, _| C64::from_polar(1.0, w * i as f64))
}

/// `∂b/∂τ`.
pub fn steering_frequency_deriv(tau: f64, k: usize, delta_f: f64) -> DVector<C64> {
    let w = -TAU * delta_f * tau;
    DVector::from_fn(k, |i, _| {
        C64::new(0.0, -TAU * delta_f * i as f64) * C64::from_polar(1.0, w * i as f64)
    })
}

/// `u ⊗ a` with the second factor running fastest.
pub fn kron(u: &DVector<C64>, a: &DVector<C64>) -> DVector<C64> {
    let m = a.len();
    DVector::from_fn(u.len() * m, |i, _| u[i / m] * a[i % m])
}

fn pilot_weighted(b: DVector<C64>, pilots: &[C64]) -> DVector<C64> {
    b.component_mul(&DVector::from_column_slice(pilots))
}

/// Noise-free unit-gain response `c(θ, τ)`.
pub fn response(theta: f64, tau: f64, waveform: &Waveform, stripe: &Stripe) -> DVector<C64> {
    let a = steering_spatial(theta, stripe.num_antennas, stripe.spacing, waveform.lambda());
    let b = steering_frequency(tau, waveform.num_subcarriers(), waveform.delta_f);
    kron(&pilot_weighted(b, &waveform.pilots), &a)
}

/// Whitened response `c' = (W_f (b ⊙ s)) ⊗ a`.
pub fn whitened_response(
    theta: f64,
    tau: f64,
    waveform: &Waveform,
    stripe: &Stripe,
    cov: &DisturbanceCov,
) -> DVector<C64> {
    let (u, a) = whitened_factors(theta, tau, waveform, stripe, cov);
    kron(&u, &a)
}

/// The two Kronecker factors of the whitened response: `(W_f (b ⊙ s), a)`.
pub fn whitened_factors(
    theta: f64,
    tau: f64,
    waveform: &Waveform,
    stripe: &Stripe,
    cov: &DisturbanceCov,
) -> (DVector<C64>, DVector<C64>) {
    let a = steering_spatial(theta, stripe.num_antennas, stripe.spacing, waveform.lambda());
    let b = steering_frequency(tau, waveform.num_subcarriers(), waveform.delta_f);
    (cov.whiten_freq(&pilot_weighted(b, &waveform.pilots)), a)
}

/// One synthesized snapshot for all stripes.
#[derive(Debug, Clone)]
pub struct Observation {
    /// Per-stripe `M × K` matrices.
    pub y: Vec<DMatrix<C64>>,
    pub rng_seed: u64,
    pub trial: u64,
    pub ground_truth: GlobalParams,
    /// Transmit power used (W).
    pub pt: f64,
}

/// Reproducible per-(seed, stripe, trial) generator.
pub fn stream_rng(master_seed: u64, stripe: usize, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((trial << 16) | stripe as u64);
    rng
}

/// Draws one disturbance matrix `W` (`M × K`) with `cov(vec W) = R`.
pub fn draw_disturbance(cov: &DisturbanceCov, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
    let (m, k) = (cov.m, cov.k());
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut z = DMatrix::<C64>::zeros(m, k);
    // Column-major fill keeps the draw order tied to vec(Z).
    for v in z.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *v = C64::new(re * h, im * h);
    }
    z * cov.chol.transpose()
}

/// Noise-free `M × K` signal of stripe `n` for parameters `g`.
pub fn noise_free_signal(scenario: &Scenario, n: usize, g: &GlobalParams) -> Result<DMatrix<C64>> {
    let stripe = &scenario.stripes[n];
    let wf = &scenario.waveform;
    let lp = local_params(scenario, n, g)?;
    let mut y = DMatrix::<C64>::zeros(stripe.num_antennas, wf.num_subcarriers());
    for i in 0..lp.len() {
        let a = steering_spatial(lp.theta[i], stripe.num_antennas, stripe.spacing, wf.lambda());
        let b = steering_frequency(lp.tau[i], wf.num_subcarriers(), wf.delta_f);
        let bs = pilot_weighted(b, &wf.pilots);
        let gain = C64::from_polar(lp.alpha[i], lp.phi[i]);
        y += (a * bs.transpose()) * gain;
    }
    Ok(y)
}

/// Synthesizes trial 0 at the scenario's SDNR.
pub fn synthesize(scenario: &Scenario, rng_seed: u64) -> Result<Observation> {
    synthesize_trial(scenario, rng_seed, 0, 1.0)
}

/// Synthesizes one trial; `noise_scale` multiplies the disturbance (0 gives noise-free data).
pub fn synthesize_trial(scenario: &Scenario, rng_seed: u64, trial: u64, noise_scale: f64) -> Result<Observation> {
    let pt = pt_for_sdnr(scenario.sdnr_db, scenario)?;
    let truth = GlobalParams::truth(scenario, pt)?;
    let mut y = Vec::with_capacity(scenario.num_stripes());
    for n in 0..scenario.num_stripes() {
        let mut yn = noise_free_signal(scenario, n, &truth)?;
        if noise_scale != 0.0 {
            let cov = scenario.disturbance(n)?;
            let mut rng = stream_rng(rng_seed, n, trial);
            yn += draw_disturbance(&cov, &mut rng) * C64::new(noise_scale, 0.0);
        }
        y.push(yn);
    }
    Ok(Observation {
        y,
        rng_seed,
        trial,
        ground_truth: truth,
        pt,
    })
}

/// `(1/(N K)) Σ_n ρ_n² ‖c'_n‖²` with unit transmit power.
fn sdnr_per_watt(scenario: &Scenario) -> Result<f64> {
    let wf = &scenario.waveform;
    let mut acc = 0.0;
    for n in 0..scenario.num_stripes() {
        let paths = enumerate_paths(scenario, n)?;
        let los = &paths[0];
        let rho = crate::channel::rp_amplitude(scenario, n, los, 1.0)?;
        let cov = scenario.disturbance(n)?;
        let c = whitened_response(los.aoa, los.pseudo_delay, wf, &scenario.stripes[n], &cov);
        acc += rho * rho * c.norm_squared();
    }
    Ok(acc / (scenario.num_stripes() * wf.num_subcarriers()) as f64)
}

/// SDNR in dB for transmit power `pt`.
pub fn sdnr(scenario: &Scenario, pt: f64) -> Result<f64> {
    Ok(10.0 * (pt * sdnr_per_watt(scenario)?).log10())
}

/// Transmit power that yields `target_sdnr_db`.
pub fn pt_for_sdnr(target_sdnr_db: f64, scenario: &Scenario) -> Result<f64> {
    Ok(10f64.powf(target_sdnr_db / 10.0) / sdnr_per_watt(scenario)?)
}

/// Writes the observation as little-endian `f64` pairs (re, im), stripe by
/// stripe, each stripe row-major over its `M × K` matrix.
pub fn dump_observation<W: Write>(obs: &Observation, mut out: W) -> std::io::Result<()> {
    for y in &obs.y {
        for r in 0..y.nrows() {
            for c in 0..y.ncols() {
                out.write_all(&y[(r, c)].re.to_le_bytes())?;
                out.write_all(&y[(r, c)].im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// CSV form of the dump: `stripe,antenna,subcarrier,re,im`.
pub fn dump_observation_csv<W: Write>(obs: &Observation, mut out: W) -> std::io::Result<()> {
    writeln!(out, "stripe,antenna,subcarrier,re,im")?;
    for (n, y) in obs.y.iter().enumerate() {
        for r in 0..y.nrows() {
            for c in 0..y.ncols() {
                writeln!(out, "{n},{r},{c},{:e},{:e}", y[(r, c)].re, y[(r, c)].im)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn stripe(m: usize, d: f64) -> Stripe {
        Stripe::new(Vec3::zeros(), 0.0, m, d, None).unwrap()
    }

    #[test]
    fn spatial_examples() {
        let a = steering_spatial(0.0, 5, 0.04, 0.0857);
        assert!(a.iter().all(|v| (v - C64::new(1.0, 0.0)).norm() < 1e-15));
        let b1 = steering_spatial(0.3, 6, 0.04, 0.0857);
        let b2 = steering_spatial(std::f64::consts::PI - 0.3, 6, 0.04, 0.0857);
        assert!((b1 - b2).norm() < 1e-12);
        let e = steering_spatial(std::f64::consts::FRAC_PI_2, 2, 0.5, 1.0);
        assert!((e[1] - C64::new(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn frequency_examples() {
        let df = 5e5;
        assert!(steering_frequency(0.0, 8, df).iter().all(|v| (v - C64::new(1.0, 0.0)).norm() < 1e-15));
        assert!(steering_frequency(1.0 / df, 8, df)
            .iter()
            .all(|v| (v - C64::new(1.0, 0.0)).norm() < 1e-12));
        let p = steering_frequency(3e-8, 8, df).component_mul(&steering_frequency(5e-8, 8, df));
        assert!((p - steering_frequency(8e-8, 8, df)).norm() < 1e-12);
    }

    #[test]
    fn derivatives_match_differences() {
        let h = 1e-7;
        let da = steering_spatial_deriv(0.4, 7, 0.04, 0.0857);
        let fd = (steering_spatial(0.4 + h, 7, 0.04, 0.0857) - steering_spatial(0.4 - h, 7, 0.04, 0.0857))
            / C64::new(2.0 * h, 0.0);
        assert!((da - fd).norm() < 1e-6);
        let ht = 1e-13;
        let db = steering_frequency_deriv(2e-8, 6, 5e5);
        let fd = (steering_frequency(2e-8 + ht, 6, 5e5) - steering_frequency(2e-8 - ht, 6, 5e5))
            / C64::new(2.0 * ht, 0.0);
        assert!((&db - &fd).norm() / db.norm() < 1e-5);
    }

    #[test]
    fn response_norm_and_layout() {
        let wf = Waveform::uniform(3.5e9, 4, 1e6, 290.0);
        let st = stripe(3, 0.04);
        let c = response(0.0, 0.0, &wf, &st);
        assert!(c.iter().all(|v| (v - C64::new(0.5, 0.0)).norm() < 1e-15));
        let c = response(0.7, 3e-8, &wf, &st);
        assert!((c.norm_squared() - 3.0).abs() < 1e-12);
        // Antenna index runs fastest.
        let a = steering_spatial(0.7, 3, 0.04, wf.lambda());
        let b = steering_frequency(3e-8, 4, 1e6);
        assert!((c[4] - a[1] * b[1] * 0.5).norm() < 1e-15);
    }

    #[test]
    fn white_whitened_response_scales() {
        let wf = Waveform::uniform(3.5e9, 4, 1e6, 290.0);
        let st = stripe(3, 0.04);
        let dmc = crate::channel::DmcParams { alpha1: 0.0, beta_d: 1.0, tau_d: 0.0 };
        let sigma2 = wf.noise_power();
        let cov = crate::channel::disturbance_covariance(&dmc, sigma2, &wf.pilots, wf.delta_f, 3).unwrap();
        let c = response(0.2, 1e-8, &wf, &st);
        let cw = whitened_response(0.2, 1e-8, &wf, &st, &cov);
        let s = (4.0 / sigma2).sqrt();
        assert!((cw - c * C64::new(s, 0.0)).norm() / s < 1e-12);
    }

    #[test]
    fn sdnr_round_trip() {
        let sc = Scenario::canonical();
        let pt = pt_for_sdnr(0.0, &sc).unwrap();
        assert!(sdnr(&sc, pt).unwrap().abs() < 1e-10);
        let pt2 = pt_for_sdnr(13.0, &sc).unwrap();
        assert!((sdnr(&sc, pt2).unwrap() - 13.0).abs() < 1e-10);
    }

    #[test]
    fn synthesis_is_reproducible() {
        let sc = Scenario::canonical();
        let a = synthesize(&sc, 11).unwrap();
        let b = synthesize(&sc, 11).unwrap();
        let c = synthesize(&sc, 12).unwrap();
        assert_eq!(a.y, b.y);
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn noise_free_single_los_is_rank_one() {
        let sc = Scenario::canonical().with_case(crate::harness::scenario::MultipathCase::LosOnly);
        let obs = synthesize_trial(&sc, 1, 0, 0.0).unwrap();
        for y in &obs.y {
            let sv = y.clone().svd(false, false).singular_values;
            assert!(sv[1] / sv[0] < 1e-12);
        }
    }

    #[test]
    fn dump_layout() {
        let sc = Scenario::canonical();
        let obs = synthesize(&sc, 3).unwrap();
        let mut buf = Vec::new();
        dump_observation(&obs, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 * 16 * 20 * 16);
        let re = f64::from_le_bytes(buf[16..24].try_into().unwrap());
        assert_eq!(re, obs.y[0][(0, 1)].re);
    }
}
