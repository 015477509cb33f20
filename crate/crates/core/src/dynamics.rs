//! Galerkin-projected equations of motion of deck and cables.
//!
//! Vertical deflection `w` and rotation `theta` of the deck are expanded in
//! the sine basis `e_k(x) = sqrt(2/L) sin(k pi x / L)`, which is orthonormal
//! in L2(0, L). Each cable hangs from one deck edge, so its displacement is
//! `w + ell sin(theta)` or `w - ell sin(theta)`. The cable forces are projected
//! by quadrature on the grid of the [`CableProfile`]; the deck stiffness terms
//! are diagonal in the basis and applied analytically.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CableProfile, FieldSamples, QuadratureGrid};
use crate::params::{DerivedParams, MechanicalParams, ParamsError};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("state has {got} {what} entries, model expects {expected}")]
    Dimension {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("at least one longitudinal and one torsional mode are required")]
    NoModes,
    #[error(transparent)]
    Params(#[from] ParamsError),
}

/// Number of retained modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalConfig {
    pub n_w: usize,
    pub n_theta: usize,
}

impl Default for ModalConfig {
    fn default() -> Self {
        Self { n_w: 10, n_theta: 4 }
    }
}

impl ModalConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.n_w == 0 || self.n_theta == 0 {
            Err(DynamicsError::NoModes)
        } else {
            Ok(())
        }
    }

    /// Length of the flat first-order state vector.
    pub fn dim(&self) -> usize {
        2 * (self.n_w + self.n_theta)
    }
}

/// Modal coefficients and velocities at one instant.
///
/// Coefficients carry the sqrt(m) of the L2-normalised basis; the mode
/// amplitudes in metres and radians are `sqrt(2/L)` times the coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalState {
    pub t: f64,
    pub w: Vec<f64>,
    pub w_dot: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_dot: Vec<f64>,
}

/// Time derivative of a [`ModalState`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub w: Vec<f64>,
    pub w_dot: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_dot: Vec<f64>,
}

/// Converts between modal coefficients and mode amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeScale {
    to_bar: f64,
}

impl AmplitudeScale {
    pub fn for_span(span: f64) -> Self {
        Self {
            to_bar: (2.0 / span).sqrt(),
        }
    }

    pub fn to_bar(&self, coefficient: f64) -> f64 {
        self.to_bar * coefficient
    }

    pub fn from_bar(&self, amplitude: f64) -> f64 {
        amplitude / self.to_bar
    }
}

impl ModalState {
    pub fn zeros(config: ModalConfig) -> Self {
        Self {
            t: 0.0,
            w: vec![0.0; config.n_w],
            w_dot: vec![0.0; config.n_w],
            theta: vec![0.0; config.n_theta],
            theta_dot: vec![0.0; config.n_theta],
        }
    }

    pub fn config(&self) -> ModalConfig {
        ModalConfig {
            n_w: self.w.len(),
            n_theta: self.theta.len(),
        }
    }

    /// Flat layout `[w, w_dot, theta, theta_dot]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * (self.w.len() + self.theta.len()));
        v.extend_from_slice(&self.w);
        v.extend_from_slice(&self.w_dot);
        v.extend_from_slice(&self.theta);
        v.extend_from_slice(&self.theta_dot);
        v
    }

    pub fn from_slice(config: ModalConfig, t: f64, y: &[f64]) -> Self {
        let (nw, nt) = (config.n_w, config.n_theta);
        assert_eq!(y.len(), config.dim());
        Self {
            t,
            w: y[..nw].to_vec(),
            w_dot: y[nw..2 * nw].to_vec(),
            theta: y[2 * nw..2 * nw + nt].to_vec(),
            theta_dot: y[2 * nw + nt..].to_vec(),
        }
    }

    pub fn w_bar(&self, scale: AmplitudeScale) -> Vec<f64> {
        self.w.iter().map(|&c| scale.to_bar(c)).collect()
    }

    pub fn theta_bar(&self, scale: AmplitudeScale) -> Vec<f64> {
        self.theta.iter().map(|&c| scale.to_bar(c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.w
            .iter()
            .chain(&self.w_dot)
            .chain(&self.theta)
            .chain(&self.theta_dot)
            .all(|v| v.is_finite())
    }

    /// Copy with the rotation and its velocity negated.
    pub fn torsion_flipped(&self) -> Self {
        Self {
            theta: self.theta.iter().map(|v| -v).collect(),
            theta_dot: self.theta_dot.iter().map(|v| -v).collect(),
            ..self.clone()
        }
    }
}

/// Individual contributions to the total energy [J].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub kinetic_vertical: f64,
    pub kinetic_rotational: f64,
    pub bending: f64,
    pub torsion_saint_venant: f64,
    pub torsion_warping: f64,
    /// `H int xi sqrt(1 + (u + y)_x^2)` summed over both cables.
    pub cable_rest_tension: f64,
    /// `AE_c/(2 L_c) Gamma^2` summed over both cables.
    pub cable_stretching: f64,
    /// `-Mg int w`.
    pub dead_load: f64,
    /// Part of `cable_rest_tension` beyond its value in the rest state.
    cable_rest_increment: f64,
    rest_offset: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.rest_offset + self.above_rest()
    }

    /// Total minus the energy of the rest state, summed without the large
    /// constant so that small excursions keep full precision.
    pub fn above_rest(&self) -> f64 {
        self.kinetic_vertical
            + self.kinetic_rotational
            + self.bending
            + self.torsion_saint_venant
            + self.torsion_warping
            + self.cable_rest_increment
            + self.cable_stretching
            + self.dead_load
    }

    pub fn potential_above_rest(&self) -> f64 {
        self.above_rest() - self.kinetic_vertical - self.kinetic_rotational
    }

    pub fn rest_offset(&self) -> f64 {
        self.rest_offset
    }
}

/// Everything a right-hand-side evaluation needs, precomputed once.
#[derive(Debug, Clone)]
pub struct BridgeModel {
    pub params: MechanicalParams,
    pub derived: DerivedParams,
    pub config: ModalConfig,
    pub profile: CableProfile,
    n_basis: usize,
    /// `e_k(x_i)` node-major: `basis[i * n_basis + k]`.
    basis: Vec<f64>,
    basis_dx: Vec<f64>,
    bending_stiffness: Vec<f64>,
    torsion_stiffness: Vec<f64>,
    saint_venant_stiffness: Vec<f64>,
    warping_stiffness: Vec<f64>,
    dead_load_projection: Vec<f64>,
    rotary_inertia: f64,
    cable_axial: f64,
    rest_offset: f64,
}

/// Scratch fields shared by force and energy evaluations.
struct CableFields {
    theta: Vec<f64>,
    theta_x: Vec<f64>,
    du_alpha: Vec<f64>,
    du_beta: Vec<f64>,
}

impl BridgeModel {
    pub fn new(params: MechanicalParams, config: ModalConfig) -> Result<Self, DynamicsError> {
        let grid = QuadratureGrid::default_for_span(params.l);
        Self::with_grid(params, config, grid)
    }

    pub fn with_grid(
        params: MechanicalParams,
        config: ModalConfig,
        grid: QuadratureGrid,
    ) -> Result<Self, DynamicsError> {
        config.validate()?;
        let derived = params.derive_on(&grid)?;
        Ok(Self::assemble(params, derived, config, grid))
    }

    /// Builds a model from externally supplied derived constants, e.g. to
    /// switch the cables off with `h = 0` and `a = 0`.
    pub fn from_parts(
        params: MechanicalParams,
        derived: DerivedParams,
        config: ModalConfig,
        grid: QuadratureGrid,
    ) -> Result<Self, DynamicsError> {
        config.validate()?;
        Ok(Self::assemble(params, derived, config, grid))
    }

    fn assemble(params: MechanicalParams, derived: DerivedParams, config: ModalConfig, grid: QuadratureGrid) -> Self {
        let l = params.l;
        let n_basis = config.n_w.max(config.n_theta);
        let norm = (2.0 / l).sqrt();
        let mut basis = Vec::with_capacity(grid.len() * n_basis);
        let mut basis_dx = Vec::with_capacity(grid.len() * n_basis);
        for &x in &grid.nodes {
            for k in 1..=n_basis {
                let kappa = k as f64 * PI / l;
                basis.push(norm * (kappa * x).sin());
                basis_dx.push(norm * kappa * (kappa * x).cos());
            }
        }
        let wavenumber = |k: usize| k as f64 * PI / l;
        let bending_stiffness = (1..=config.n_w)
            .map(|k| params.e * params.i * wavenumber(k).powi(4))
            .collect();
        let warping_stiffness: Vec<f64> = (1..=config.n_theta)
            .map(|k| params.e * params.j * wavenumber(k).powi(4))
            .collect();
        let saint_venant_stiffness: Vec<f64> = (1..=config.n_theta)
            .map(|k| params.g_shear * params.k * wavenumber(k).powi(2))
            .collect();
        let torsion_stiffness = warping_stiffness
            .iter()
            .zip(&saint_venant_stiffness)
            .map(|(a, b)| a + b)
            .collect();
        let dead_load_projection = (1..=config.n_w)
            .map(|k| {
                let odd = if k % 2 == 1 { 2.0 } else { 0.0 };
                params.m * params.gravity * (2.0 * l).sqrt() * odd / (k as f64 * PI)
            })
            .collect();
        let profile = CableProfile::new(grid, &derived, &params);
        let rest_offset = 2.0
            * derived.h
            * profile
                .grid
                .weights
                .iter()
                .zip(&profile.xi)
                .map(|(w, xi)| w * xi * xi)
                .sum::<f64>();
        Self {
            params,
            derived,
            config,
            n_basis,
            basis,
            basis_dx,
            bending_stiffness,
            torsion_stiffness,
            saint_venant_stiffness,
            warping_stiffness,
            dead_load_projection,
            rotary_inertia: params.m * params.ell * params.ell / 3.0,
            cable_axial: if derived.l_c > 0.0 {
                params.a * params.e_c / derived.l_c
            } else {
                0.0
            },
            rest_offset,
            profile,
        }
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.profile.grid
    }

    pub fn scale(&self) -> AmplitudeScale {
        AmplitudeScale::for_span(self.params.l)
    }

    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    /// `Mg (1, e_k)` for each longitudinal mode.
    pub fn dead_load_projection(&self) -> &[f64] {
        &self.dead_load_projection
    }

    pub fn check(&self, state: &ModalState) -> Result<(), DynamicsError> {
        let nw = self.config.n_w;
        let nt = self.config.n_theta;
        for (what, got, expected) in [
            ("w", state.w.len(), nw),
            ("w_dot", state.w_dot.len(), nw),
            ("theta", state.theta.len(), nt),
            ("theta_dot", state.theta_dot.len(), nt),
        ] {
            if got != expected {
                return Err(DynamicsError::Dimension { what, got, expected });
            }
        }
        Ok(())
    }

    /// `w_x`, `theta` and `theta_x` at the grid nodes, from exact modal sums.
    pub fn deck_fields(&self, state: &ModalState) -> Result<(FieldSamples, FieldSamples, FieldSamples), DynamicsError> {
        self.check(state)?;
        let n = self.grid().len();
        let mut w_x = vec![0.0; n];
        let mut theta = vec![0.0; n];
        let mut theta_x = vec![0.0; n];
        for i in 0..n {
            let row = i * self.n_basis;
            w_x[i] = dot(&state.w, &self.basis_dx[row..]);
            theta[i] = dot(&state.theta, &self.basis[row..]);
            theta_x[i] = dot(&state.theta, &self.basis_dx[row..]);
        }
        Ok((FieldSamples(w_x), FieldSamples(theta), FieldSamples(theta_x)))
    }

    fn cable_fields(&self, w: &[f64], theta_c: &[f64]) -> CableFields {
        let n = self.grid().len();
        let ell = self.params.ell;
        let mut f = CableFields {
            theta: vec![0.0; n],
            theta_x: vec![0.0; n],
            du_alpha: vec![0.0; n],
            du_beta: vec![0.0; n],
        };
        for i in 0..n {
            let row = i * self.n_basis;
            let wx = dot(w, &self.basis_dx[row..]);
            let th = dot(theta_c, &self.basis[row..]);
            let thx = dot(theta_c, &self.basis_dx[row..]);
            // (ell sin theta)_x
            let hanger = ell * th.cos() * thx;
            f.theta[i] = th;
            f.theta_x[i] = thx;
            f.du_alpha[i] = wx + hanger;
            f.du_beta[i] = wx - hanger;
        }
        f
    }

    fn cable_forces(&self, du: &[f64]) -> Vec<f64> {
        let gamma = self.profile.gamma(du);
        let tension_extra = self.cable_axial * gamma;
        let h = self.derived.h;
        du.iter()
            .zip(&self.profile.slope)
            .zip(&self.profile.xi)
            .map(|((d, s), xi)| {
                let t = d + s;
                -(h * xi + tension_extra) * t / (1.0 + t * t).sqrt()
            })
            .collect()
    }

    /// Cable force densities `h_alpha` and `h_beta` at the nodes.
    pub fn h_alpha_beta(&self, state: &ModalState) -> Result<(FieldSamples, FieldSamples), DynamicsError> {
        self.check(state)?;
        let f = self.cable_fields(&state.w, &state.theta);
        Ok((
            FieldSamples(self.cable_forces(&f.du_alpha)),
            FieldSamples(self.cable_forces(&f.du_beta)),
        ))
    }

    /// Generalised forces `(Q_w, Q_theta)` acting on the modal coefficients:
    /// stiffness, cable and dead-load terms combined.
    pub fn generalized_forces(&self, w: &[f64], theta_c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nw = self.config.n_w;
        let nt = self.config.n_theta;
        let ell = self.params.ell;
        let f = self.cable_fields(w, theta_c);
        let ha = self.cable_forces(&f.du_alpha);
        let hb = self.cable_forces(&f.du_beta);

        let mut q_w: Vec<f64> = (0..nw)
            .map(|k| self.dead_load_projection[k] - self.bending_stiffness[k] * w[k])
            .collect();
        let mut q_t: Vec<f64> = (0..nt).map(|k| -self.torsion_stiffness[k] * theta_c[k]).collect();
        let weights = &self.grid().weights;
        for i in 0..weights.len() {
            let row = i * self.n_basis;
            let sum = weights[i] * (ha[i] + hb[i]);
            let diff = ell * weights[i] * (ha[i] - hb[i]);
            let (sin_t, cos_t) = f.theta[i].sin_cos();
            let ep = &self.basis_dx[row..row + self.n_basis];
            let e = &self.basis[row..row + self.n_basis];
            for k in 0..nw {
                q_w[k] += sum * ep[k];
            }
            // (e_k cos theta)_x = e_k' cos theta - e_k theta_x sin theta
            let shear = f.theta_x[i] * sin_t;
            for k in 0..nt {
                q_t[k] += diff * (ep[k] * cos_t - e[k] * shear);
            }
        }
        (q_w, q_t)
    }

    /// Writes the time derivative of the flat state `y` into `dy`.
    pub fn rhs_into(&self, y: &[f64], dy: &mut [f64]) {
        let nw = self.config.n_w;
        let nt = self.config.n_theta;
        let (w, rest) = y.split_at(nw);
        let (w_dot, rest) = rest.split_at(nw);
        let (theta, theta_dot) = rest.split_at(nt);
        let (q_w, q_t) = self.generalized_forces(w, theta);
        let m = self.params.m;
        dy[..nw].copy_from_slice(w_dot);
        for k in 0..nw {
            dy[nw + k] = q_w[k] / m;
        }
        dy[2 * nw..2 * nw + nt].copy_from_slice(theta_dot);
        for k in 0..nt {
            dy[2 * nw + nt + k] = q_t[k] / self.rotary_inertia;
        }
    }

    pub fn rhs(&self, state: &ModalState) -> Result<StateDerivative, DynamicsError> {
        self.check(state)?;
        let y = state.to_vec();
        let mut dy = vec![0.0; y.len()];
        self.rhs_into(&y, &mut dy);
        let d = ModalState::from_slice(self.config, state.t, &dy);
        Ok(StateDerivative {
            w: d.w,
            w_dot: d.w_dot,
            theta: d.theta,
            theta_dot: d.theta_dot,
        })
    }

    pub fn energy_breakdown(&self, state: &ModalState) -> Result<EnergyBreakdown, DynamicsError> {
        self.check(state)?;
        let mut e = self.potential_breakdown(&state.w, &state.theta);
        e.kinetic_vertical = 0.5 * self.params.m * sum_sq(&state.w_dot);
        e.kinetic_rotational = 0.5 * self.rotary_inertia * sum_sq(&state.theta_dot);
        Ok(e)
    }

    fn potential_breakdown(&self, w: &[f64], theta_c: &[f64]) -> EnergyBreakdown {
        let f = self.cable_fields(w, theta_c);
        let h = self.derived.h;
        let grid = self.grid();
        let mut rest_increment = 0.0;
        let mut gamma_a = 0.0;
        let mut gamma_b = 0.0;
        for i in 0..grid.len() {
            let (s, xi, wt) = (self.profile.slope[i], self.profile.xi[i], grid.weights[i]);
            let inc_a = crate::geometry::stretch_increment(f.du_alpha[i], s, xi);
            let inc_b = crate::geometry::stretch_increment(f.du_beta[i], s, xi);
            rest_increment += wt * xi * (inc_a + inc_b);
            gamma_a += wt * inc_a;
            gamma_b += wt * inc_b;
        }
        let bending = 0.5 * weighted_sq(&self.bending_stiffness, w);
        EnergyBreakdown {
            kinetic_vertical: 0.0,
            kinetic_rotational: 0.0,
            bending,
            torsion_saint_venant: 0.5 * weighted_sq(&self.saint_venant_stiffness, theta_c),
            torsion_warping: 0.5 * weighted_sq(&self.warping_stiffness, theta_c),
            cable_rest_tension: self.rest_offset + h * rest_increment,
            cable_stretching: 0.5 * self.cable_axial * (gamma_a * gamma_a + gamma_b * gamma_b),
            dead_load: -dot(w, &self.dead_load_projection),
            cable_rest_increment: h * rest_increment,
            rest_offset: self.rest_offset,
        }
    }

    /// Potential energy above the rest state as a function of the modal
    /// coefficients alone.
    pub fn potential_above_rest(&self, w: &[f64], theta_c: &[f64]) -> f64 {
        self.potential_breakdown(w, theta_c).potential_above_rest()
    }

    pub fn total_energy(&self, state: &ModalState) -> Result<f64, DynamicsError> {
        Ok(self.energy_breakdown(state)?.total())
    }

    /// Energy of the rest state, `2H int xi^2`.
    pub fn rest_energy(&self) -> f64 {
        self.rest_offset
    }

    /// Energy above rest of a flat state vector.
    pub fn energy_above_rest_flat(&self, y: &[f64]) -> f64 {
        let nw = self.config.n_w;
        let nt = self.config.n_theta;
        let w = &y[..nw];
        let w_dot = &y[nw..2 * nw];
        let theta = &y[2 * nw..2 * nw + nt];
        let theta_dot = &y[2 * nw + nt..];
        self.potential_above_rest(w, theta)
            + 0.5 * self.params.m * sum_sq(w_dot)
            + 0.5 * self.rotary_inertia * sum_sq(theta_dot)
    }

    /// Squared angular frequencies of the deck alone (cables removed).
    pub fn deck_only_frequencies_sq(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.bending_stiffness.iter().map(|s| s / self.params.m).collect(),
            self.torsion_stiffness.iter().map(|s| s / self.rotary_inertia).collect(),
        )
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sum_sq(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

fn weighted_sq(w: &[f64], a: &[f64]) -> f64 {
    w.iter().zip(a).map(|(k, v)| k * v * v).sum()
}
