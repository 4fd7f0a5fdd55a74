//! Coarse clock-offset estimation from zero-padded delay profiles.

use nalgebra::DMatrix;
use rustfft::FftPlanner;

use crate::channel::C64;
use crate::geometry::{Vec3, SPEED_OF_LIGHT};

use super::KnownEnvironment;

/// Strongest-peak pseudo-delay of each stripe, in `[0, 1/Δf)`.
///
/// Each antenna row is de-rotated by the pilots, zero-padded to `nf` and
/// inverse transformed; powers are summed over antennas.
pub fn peak_delays(env: &KnownEnvironment, y: &[DMatrix<C64>], nf: usize) -> Vec<f64> {
    let k = env.waveform.num_subcarriers();
    let nf = nf.max(k);
    let fft = FftPlanner::<f64>::new().plan_fft_inverse(nf);
    let mut buf = vec![C64::new(0.0, 0.0); nf];
    y.iter()
        .map(|yn| {
            let mut power = vec![0.0; nf];
            for m in 0..yn.nrows() {
                buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
                for (kk, s) in env.waveform.pilots.iter().enumerate() {
                    buf[kk] = yn[(m, kk)] * s.conj();
                }
                fft.process(&mut buf);
                for (p, b) in power.iter_mut().zip(&buf) {
                    *p += b.norm_sqr();
                }
            }
            let q = power
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
                .0;
            q as f64 / (nf as f64 * env.waveform.delta_f)
        })
        .collect()
}

/// Averages `τ̂_n − ‖p − p_RS,n‖/c` over stripes. Per-stripe differences are
/// taken modulo `1/Δf` into a window centred on zero before averaging.
pub fn clock_from_delays(env: &KnownEnvironment, delays: &[f64], p: &Vec3) -> f64 {
    let period = 1.0 / env.waveform.delta_f;
    let sum: f64 = delays
        .iter()
        .zip(&env.stripes)
        .map(|(t, s)| {
            let d = t - (p - s.phase_center).norm() / SPEED_OF_LIGHT;
            d - period * (d / period).round()
        })
        .sum();
    sum / delays.len() as f64
}

/// Coarse clock offset at a hypothesized position, mapped to `[0, 1/Δf)`.
pub fn coarse_clock_offset(env: &KnownEnvironment, y: &[DMatrix<C64>], p: &Vec3, nf: usize) -> f64 {
    let period = 1.0 / env.waveform.delta_f;
    clock_from_delays(env, &peak_delays(env, y, nf), p).rem_euclid(period)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::Scenario;
    use crate::signal::synthesize_trial;

    fn los_only(delta_tau: f64) -> Scenario {
        let mut s = Scenario::estimation().with_case(crate::harness::scenario::MultipathCase::LosOnly);
        s.delta_tau = delta_tau;
        s
    }

    #[test]
    fn off_grid_error_within_half_bin() {
        let s = los_only(16.66e-9);
        let env = KnownEnvironment::from_scenario(&s).unwrap();
        let obs = synthesize_trial(&s, 3, 0, 0.0).unwrap();
        let nf = 16 * s.waveform.num_subcarriers();
        let bin = 1.0 / (nf as f64 * s.waveform.delta_f);
        for (n, t) in peak_delays(&env, &obs.y, nf).iter().enumerate() {
            let truth = (s.ue_position - s.stripes[n].phase_center).norm() / SPEED_OF_LIGHT + s.delta_tau;
            assert!((t - truth).abs() <= 0.5 * bin + 1e-15, "{n}: {t} vs {truth}");
        }
    }

    #[test]
    fn result_lies_in_one_period() {
        let s = los_only(-3e-9);
        let env = KnownEnvironment::from_scenario(&s).unwrap();
        let obs = synthesize_trial(&s, 3, 0, 0.0).unwrap();
        let t = coarse_clock_offset(&env, &obs.y, &s.ue_position, 320);
        assert!((0.0..1.0 / s.waveform.delta_f).contains(&t));
    }
}
