#![allow(dead_code)]

use bridge_core::geometry::{cable_length, QuadratureGrid};
use bridge_core::integrator::integrate;
use bridge_core::stability::{build_initial_conditions, ExcitationSpec};
use bridge_core::{
    BridgeModel, DerivedParams, IntegratorSettings, MechanicalParams, ModalConfig, ModalState, Trajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tacoma() -> BridgeModel {
    BridgeModel::new(MechanicalParams::tacoma_narrows(), ModalConfig::default()).unwrap()
}

pub fn excite(model: &BridgeModel, mode: usize, amplitude: f64) -> ModalState {
    build_initial_conditions(model, &ExcitationSpec::new(mode, amplitude)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random state with bar amplitudes up to `w_max` [m] and `theta_max` [rad],
/// velocities up to one tenth of those per second.
pub fn random_state(model: &BridgeModel, rng: &mut ChaCha8Rng, w_max: f64, theta_max: f64) -> ModalState {
    let s = model.scale();
    let mut st = ModalState::zeros(model.config);
    for v in st.w.iter_mut() {
        *v = s.from_bar(rng.gen_range(-w_max..w_max));
    }
    for v in st.w_dot.iter_mut() {
        *v = s.from_bar(rng.gen_range(-0.1 * w_max..0.1 * w_max));
    }
    for v in st.theta.iter_mut() {
        *v = s.from_bar(rng.gen_range(-theta_max..theta_max));
    }
    for v in st.theta_dot.iter_mut() {
        *v = s.from_bar(rng.gen_range(-0.1 * theta_max..0.1 * theta_max));
    }
    st
}

/// Worst relative mismatch between the modal forces and the central
/// finite-difference gradient of the potential, measured against the
/// largest force component of the same family.
pub fn variational_mismatch(model: &BridgeModel, state: &ModalState) -> f64 {
    let (qw, qt) = model.generalized_forces(&state.w, &state.theta);
    let mut q: Vec<f64> = state.w.iter().chain(&state.theta).copied().collect();
    let nw = state.w.len();
    let potential = |q: &[f64]| model.potential_above_rest(&q[..nw], &q[nw..]);
    let mut worst = 0.0f64;
    for (forces, offset) in [(&qw, 0), (&qt, nw)] {
        let scale = forces.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (k, force) in forces.iter().enumerate() {
            let i = offset + k;
            let q0 = q[i];
            let h = 1e-6 * (1.0 + q0.abs());
            q[i] = q0 + h;
            let up = potential(&q);
            q[i] = q0 - h;
            let down = potential(&q);
            q[i] = q0;
            let fd = -(up - down) / (2.0 * h);
            worst = worst.max((fd - force).abs() / scale);
        }
    }
    worst
}

/// Largest `|w_bar|`, `|theta_bar|` differences between a trajectory and the
/// torsion mirror of another, relative to the peak amplitudes.
pub fn mirror_mismatch(a: &Trajectory, b: &Trajectory) -> (f64, f64) {
    let (w_peak, t_peak) = a.max_amplitudes();
    let mut dw = 0.0f64;
    let mut dt = 0.0f64;
    for i in 0..a.states.len() {
        for (x, y) in a.w_bar(i).iter().zip(b.w_bar(i)) {
            dw = dw.max((x - y).abs());
        }
        for (x, y) in a.theta_bar(i).iter().zip(b.theta_bar(i)) {
            dt = dt.max((x + y).abs());
        }
    }
    (dw / w_peak.max(f64::MIN_POSITIVE), dt / t_peak.max(f64::MIN_POSITIVE))
}

pub fn mirror_scenario(model: &BridgeModel, seed: u64, settings: &IntegratorSettings) -> (f64, f64) {
    let mut r = rng(seed);
    let st = random_state(model, &mut r, 2.0, 0.05);
    let a = integrate(model, &st, settings).unwrap();
    let b = integrate(model, &st.torsion_flipped(), settings).unwrap();
    mirror_mismatch(&a, &b)
}

/// Closed-form length of `y = a (x - c)^2 / 2`-type arcs: the parabola with
/// second derivative `-8f/L^2` over `[0, L]`, shifted in slope by `c`.
pub fn parabola_arc(f: f64, span: f64, slope_shift: f64) -> f64 {
    let a = 8.0 * f / (span * span);
    let prim = |s: f64| 0.5 * (s * (1.0 + s * s).sqrt() + s.asinh());
    (prim(slope_shift + a * span / 2.0) - prim(slope_shift - a * span / 2.0)) / a
}

pub fn table_cable_length_oracle() -> (f64, f64) {
    let p = MechanicalParams::tacoma_narrows();
    let grid = QuadratureGrid::default_for_span(p.l);
    let d = p.derive_on(&grid).unwrap();
    (cable_length(&grid, &d, &p), parabola_arc(p.f, p.l, 0.0))
}

/// Deck with cables removed: pure beam plus free torsion.
pub fn cables_off() -> BridgeModel {
    let mut p = MechanicalParams::tacoma_narrows();
    p.a = 0.0;
    let grid = QuadratureGrid::default_for_span(p.l);
    let derived = DerivedParams {
        q: 0.5 * p.m * p.gravity,
        h: 0.0,
        l_c: p.l,
        xi_bar: 0.0,
    };
    BridgeModel::from_parts(p, derived, ModalConfig::default(), grid).unwrap()
}
