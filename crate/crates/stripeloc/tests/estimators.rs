use nalgebra::{DMatrix, DVector};
use stripeloc::estimators::rml::{rml_cost, rml_profile_cost};
use stripeloc::estimators::{jml_amplitudes, jml_cost, rml_ncp_amplitudes_and_cost, KnownEnvironment, WantedParams};
use stripeloc::channel::path_phase;
use stripeloc::signal::synthesize_trial;
use stripeloc::{MultipathCase, Scenario, Vec3, C64};

fn truth(s: &Scenario) -> WantedParams {
    WantedParams {
        p: s.ue_position,
        delta_tau: s.delta_tau,
        delta_phi: s.delta_phi_at(0),
        sp: s.scatterers.iter().map(|x| x.position).collect(),
    }
}

fn noisy(s: &Scenario, seed: u64) -> (KnownEnvironment, Vec<DVector<C64>>) {
    let env = KnownEnvironment::from_scenario(s).unwrap();
    let y = env.prepare(&synthesize_trial(s, seed, 0, 1.0).unwrap().y);
    (env, y)
}

/// Un-eliminated cost of one stripe: fixed real LoS amplitude, free complex
/// gains for the other paths solved by complex least squares.
fn inner_cost(env: &KnownEnvironment, n: usize, eta: &WantedParams, y: &DVector<C64>, alpha: f64) -> f64 {
    let paths = env.paths(n, &eta.p, &eta.sp, eta.delta_tau).unwrap();
    let los = &paths[0];
    let rot = C64::from_polar(1.0, path_phase(los.delay, env.waveform.fc, eta.delta_phi, 0.0));
    let r = y - env.response(n, los.aoa, los.pseudo_delay) * (rot * alpha);
    let cols: Vec<DVector<C64>> = paths[1..].iter().map(|p| env.response(n, p.aoa, p.pseudo_delay)).collect();
    if cols.is_empty() {
        return r.norm_squared();
    }
    let c = DMatrix::from_columns(&cols);
    let g = c.clone().svd(true, true).solve(&r, 1e-14).unwrap();
    (r - c * g).norm_squared()
}

/// Minimum over the LoS amplitude of the exactly quadratic [`inner_cost`].
fn nested_cost(env: &KnownEnvironment, n: usize, eta: &WantedParams, y: &DVector<C64>, scale: f64) -> f64 {
    let (f0, fp, fm) = (
        inner_cost(env, n, eta, y, 0.0),
        inner_cost(env, n, eta, y, scale),
        inner_cost(env, n, eta, y, -scale),
    );
    let a = (fp + fm - 2.0 * f0) / (2.0 * scale * scale);
    let b = (fp - fm) / (2.0 * scale);
    f0 - b * b / (4.0 * a)
}

#[test]
fn jml_cost_matches_nested_least_squares() {
    let s = Scenario::estimation();
    let (env, y) = noisy(&s, 21);
    let t = truth(&s);
    for eta in [
        t.clone(),
        WantedParams {
            p: t.p + Vec3::new(0.013, -0.021, 0.0),
            delta_tau: t.delta_tau + 1e-10,
            delta_phi: t.delta_phi - 0.4,
            sp: vec![t.sp[0] + Vec3::new(0.05, 0.02, -0.03)],
        },
    ] {
        let gains = jml_amplitudes(&env, &eta, &y).unwrap();
        let oracle: f64 = (0..env.num_stripes())
            .map(|n| nested_cost(&env, n, &eta, &y[n], gains[n][0].norm().max(1e-3)))
            .sum();
        let cost = jml_cost(&env, &eta, &y).unwrap();
        assert!((cost - oracle).abs() <= 1e-9 * oracle, "{cost} vs {oracle}");
    }
}

#[test]
fn coherent_and_noncoherent_costs_agree_for_one_stripe() {
    let mut s = Scenario::estimation().with_case(MultipathCase::LosRp);
    s.stripes.truncate(1);
    let (env, y) = noisy(&s, 4);
    for dp in [Vec3::zeros(), Vec3::new(0.02, -0.01, 0.0), Vec3::new(-0.3, 0.2, 0.0)] {
        let p = s.ue_position + dp;
        let ncp = rml_ncp_amplitudes_and_cost(&env, &p, s.delta_tau, &y).unwrap().1;
        let (cp, _) = rml_profile_cost(&env, &p, s.delta_tau, &y).unwrap();
        assert!((cp - ncp).abs() <= 1e-9 * ncp, "{cp} vs {ncp}");
        // Any other phase offset can only do worse.
        let other = rml_cost(&env, &p, s.delta_tau, 0.3, &y).unwrap();
        assert!(other >= ncp * (1.0 - 1e-9));
    }
}

#[test]
fn cost_invariant_under_common_unit_modulus_rotation() {
    let s = Scenario::estimation();
    let (env, y) = noisy(&s, 9);
    let mut rotated = env.clone();
    let u = C64::from_polar(1.0, 1.1);
    for p in &mut rotated.waveform.pilots {
        *p *= u;
    }
    let yr: Vec<DVector<C64>> = y.iter().map(|v| v * u).collect();
    let eta = truth(&s);
    let (a, b) = (jml_cost(&env, &eta, &y).unwrap(), jml_cost(&rotated, &eta, &yr).unwrap());
    assert!((a - b).abs() <= 1e-9 * a, "{a} vs {b}");
}

#[test]
fn estimators_are_deterministic() {
    let s = Scenario::estimation();
    let (env, y) = noisy(&s, 3);
    let eta = truth(&s);
    assert_eq!(jml_cost(&env, &eta, &y).unwrap(), jml_cost(&env, &eta, &y).unwrap());
    assert_eq!(jml_amplitudes(&env, &eta, &y).unwrap(), jml_amplitudes(&env, &eta, &y).unwrap());
}
