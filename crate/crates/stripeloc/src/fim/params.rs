//! Global and per-stripe parameter vectors and the frozen global index layout.
//!
//! Global layout: position (`D`), clock offset, phase offset(s) (1 or `N`),
//! scatterer positions (`3J`), then nuisance phases stripe by stripe
//! (non-LoS components in path order), then amplitudes stripe by stripe.

use serde::Serialize;

use crate::channel::{path_phase, rp_amplitude, sp_amplitude};
use crate::error::Result;
use crate::geometry::{paths_for, PathKind, Vec3};
use crate::harness::scenario::Scenario;

use super::{FimOptions, SyncMode};

/// Wanted and nuisance parameters of the whole network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalParams {
    pub p: Vec3,
    pub delta_tau: f64,
    /// Per-stripe phase offsets; all equal under coherent processing.
    pub delta_phi: Vec<f64>,
    pub sp: Vec<Vec3>,
    /// Per stripe, the phase terms `ϕ` of components `1..Nc`.
    pub varphi: Vec<Vec<f64>>,
    /// Per stripe, the amplitudes of all components.
    pub alpha: Vec<Vec<f64>>,
}

impl GlobalParams {
    /// Ground truth of `scenario` at transmit power `pt`. Reflection phases
    /// are zero: the phase of Γ is absorbed into the free phase terms.
    pub fn truth(scenario: &Scenario, pt: f64) -> Result<Self> {
        let n_st = scenario.num_stripes();
        let sp: Vec<Vec3> = scenario.scatterers.iter().map(|s| s.position).collect();
        let mut varphi = Vec::with_capacity(n_st);
        let mut alpha = Vec::with_capacity(n_st);
        for n in 0..n_st {
            let paths = paths_for(
                &scenario.ue_position,
                &scenario.stripes[n],
                &scenario.walls,
                &sp,
                scenario.delta_tau,
            )?;
            let mut a = Vec::with_capacity(paths.len());
            for path in &paths {
                a.push(match path.kind {
                    PathKind::Sp(_) => sp_amplitude(scenario, n, path, pt)?,
                    _ => rp_amplitude(scenario, n, path, pt)?,
                });
            }
            varphi.push(vec![0.0; paths.len() - 1]);
            alpha.push(a);
        }
        Ok(Self {
            p: scenario.ue_position,
            delta_tau: scenario.delta_tau,
            delta_phi: (0..n_st).map(|n| scenario.delta_phi_at(n)).collect(),
            sp,
            varphi,
            alpha,
        })
    }

    /// Flattens into the layout's order.
    pub fn to_vector(&self, layout: &ParamLayout, scenario: &Scenario) -> Vec<f64> {
        let mut v = vec![0.0; layout.total];
        for i in 0..layout.dim {
            v[i] = self.p[i];
        }
        v[layout.clock] = self.delta_tau;
        for i in 0..layout.n_ph {
            v[layout.phase + i] = self.delta_phi[i];
        }
        for (j, s) in self.sp.iter().enumerate() {
            for i in 0..3 {
                v[layout.sp + 3 * j + i] = s[i];
            }
        }
        for n in 0..layout.n_stripes {
            for (slot, &k) in layout.nuisance_phase_components(n, scenario).iter().enumerate() {
                v[layout.nuis_phase_offsets[n] + slot] = self.varphi[n][k - 1];
            }
            for (k, a) in self.alpha[n].iter().enumerate() {
                v[layout.amp_offsets[n] + k] = *a;
            }
        }
        v
    }

    /// Inverse of [`to_vector`]; entries the layout does not carry (the
    /// height when `D = 2`, known reflection phases) are kept from `self`.
    pub fn with_vector(&self, layout: &ParamLayout, scenario: &Scenario, v: &[f64]) -> Self {
        let mut g = self.clone();
        for i in 0..layout.dim {
            g.p[i] = v[i];
        }
        g.delta_tau = v[layout.clock];
        for n in 0..layout.n_stripes {
            let idx = if layout.n_ph == 1 { 0 } else { n };
            g.delta_phi[n] = v[layout.phase + idx];
        }
        for j in 0..g.sp.len() {
            for i in 0..3 {
                g.sp[j][i] = v[layout.sp + 3 * j + i];
            }
        }
        for n in 0..layout.n_stripes {
            for (slot, &k) in layout.nuisance_phase_components(n, scenario).iter().enumerate() {
                g.varphi[n][k - 1] = v[layout.nuis_phase_offsets[n] + slot];
            }
            for k in 0..g.alpha[n].len() {
                g.alpha[n][k] = v[layout.amp_offsets[n] + k];
            }
        }
        g
    }
}

/// Per-stripe channel parameters, stacked as (all θ, all τ̃, all φ, all α).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalChannelParams {
    pub kinds: Vec<PathKind>,
    pub theta: Vec<f64>,
    pub tau: Vec<f64>,
    pub phi: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl LocalChannelParams {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn stacked(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(4 * self.len());
        v.extend_from_slice(&self.theta);
        v.extend_from_slice(&self.tau);
        v.extend_from_slice(&self.phi);
        v.extend_from_slice(&self.alpha);
        v
    }
}

/// Maps global parameters to stripe `n`'s channel parameters.
pub fn local_params(scenario: &Scenario, n: usize, g: &GlobalParams) -> Result<LocalChannelParams> {
    let paths = paths_for(&g.p, &scenario.stripes[n], &scenario.walls, &g.sp, g.delta_tau)?;
    let fc = scenario.waveform.fc;
    let mut lp = LocalChannelParams {
        kinds: Vec::with_capacity(paths.len()),
        theta: Vec::with_capacity(paths.len()),
        tau: Vec::with_capacity(paths.len()),
        phi: Vec::with_capacity(paths.len()),
        alpha: g.alpha[n].clone(),
    };
    for (k, path) in paths.iter().enumerate() {
        let varphi = if k == 0 { 0.0 } else { g.varphi[n][k - 1] };
        lp.kinds.push(path.kind);
        lp.theta.push(path.aoa);
        lp.tau.push(path.pseudo_delay);
        lp.phi.push(path_phase(path.delay, fc, g.delta_phi[n], varphi));
    }
    Ok(lp)
}

/// Index layout of the global parameter vector for a scenario and options.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamLayout {
    pub dim: usize,
    pub n_stripes: usize,
    pub n_sp: usize,
    /// Number of phase-offset entries: 1 (CP) or `N` (NCP).
    pub n_ph: usize,
    pub clock: usize,
    pub phase: usize,
    pub sp: usize,
    pub nuis_phase_offsets: Vec<usize>,
    pub amp_offsets: Vec<usize>,
    pub known_rp_phases: bool,
    /// Number of wanted parameters (position, clock, phases, scatterers).
    pub n_wanted: usize,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(scenario: &Scenario, options: &FimOptions) -> Self {
        let dim = options.dim;
        let n_stripes = scenario.num_stripes();
        let n_sp = scenario.num_scatterers();
        let n_ph = match options.sync_mode {
            SyncMode::Cp => 1,
            SyncMode::Ncp => n_stripes,
        };
        let clock = dim;
        let phase = dim + 1;
        let sp = phase + n_ph;
        let n_wanted = sp + 3 * n_sp;
        let mut off = n_wanted;
        let mut nuis_phase_offsets = Vec::with_capacity(n_stripes);
        for n in 0..n_stripes {
            nuis_phase_offsets.push(off);
            let rp = scenario.num_specular(n) - 1;
            off += n_sp + if options.known_rp_phases { 0 } else { rp };
        }
        let mut amp_offsets = Vec::with_capacity(n_stripes);
        for n in 0..n_stripes {
            amp_offsets.push(off);
            off += scenario.num_components(n);
        }
        Self {
            dim,
            n_stripes,
            n_sp,
            n_ph,
            clock,
            phase,
            sp,
            nuis_phase_offsets,
            amp_offsets,
            known_rp_phases: options.known_rp_phases,
            n_wanted,
            total: off,
        }
    }

    /// Component indices (into the stripe's path list) whose `ϕ` is a nuisance parameter.
    pub fn nuisance_phase_components(&self, n: usize, scenario: &Scenario) -> Vec<usize> {
        let l = scenario.num_specular(n);
        let nc = scenario.num_components(n);
        (1..nc).filter(|&k| !(self.known_rp_phases && k < l)).collect()
    }
}
