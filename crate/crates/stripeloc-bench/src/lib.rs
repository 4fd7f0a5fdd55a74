//! Shared fixtures for the kernel benchmarks.

use stripeloc::estimators::{KnownEnvironment, WantedParams};
use stripeloc::signal::synthesize;
use stripeloc::{C64, Scenario};

use nalgebra::DVector;

/// Estimation scenario with one noisy snapshot, whitened and ready for cost evaluation.
pub struct CostFixture {
    pub scenario: Scenario,
    pub env: KnownEnvironment,
    pub y: Vec<DVector<C64>>,
    pub truth: WantedParams,
}

impl CostFixture {
    pub fn new(seed: u64) -> Self {
        let scenario = Scenario::estimation();
        let env = KnownEnvironment::from_scenario(&scenario).expect("bundled scenario is valid");
        let obs = synthesize(&scenario, seed).expect("bundled scenario synthesizes");
        let g = &obs.ground_truth;
        let truth = WantedParams {
            p: g.p,
            delta_tau: g.delta_tau,
            delta_phi: g.delta_phi[0],
            sp: g.sp.clone(),
        };
        let y = env.prepare(&obs.y);
        Self { scenario, env, y, truth }
    }
}
