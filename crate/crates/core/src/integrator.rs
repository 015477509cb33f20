//! Adaptive one-step time integration with dense output.
//!
//! Two methods are available: the Dormand-Prince 5(4) pair with its
//! fourth-order continuous extension, and the implicit TR-BDF2 scheme
//! (trapezoidal stage followed by BDF2) with a cubic Hermite interpolant.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, LU};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{AmplitudeScale, BridgeModel, ModalConfig, ModalState};

#[derive(Debug, Error, PartialEq)]
pub enum IntegratorError {
    #[error("step size underflow at t = {t}: last accepted time {last_good_t} s")]
    StepUnderflow { t: f64, last_good_t: f64 },
    #[error("non-finite state component {component} at t = {t} s")]
    NonFinite { component: usize, t: f64 },
    #[error("invalid integrator settings: {0}")]
    Settings(String),
    #[error("time {t} s outside the trajectory span [0, {t_end}]")]
    OutOfRange { t: f64, t_end: f64 },
    #[error("initial state has {got} entries, system expects {expected}")]
    Dimension { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Dormand-Prince 5(4).
    #[default]
    ExplicitRk,
    /// Trapezoidal rule / BDF2 composite, L-stable, second order.
    TrBdf2,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ExplicitRk => "explicit_rk",
            Method::TrBdf2 => "tr_bdf2",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = IntegratorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "explicit_rk" => Ok(Method::ExplicitRk),
            "tr_bdf2" => Ok(Method::TrBdf2),
            other => Err(IntegratorError::Settings(format!(
                "unknown method `{other}` (expected explicit_rk or tr_bdf2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_end: f64,
    pub max_step: f64,
    pub output_dt: f64,
    pub method: Method,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-7,
            abs_tol: 1e-9,
            t_end: 120.0,
            max_step: 1.0,
            output_dt: 0.1,
            method: Method::ExplicitRk,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<(), IntegratorError> {
        let bad = |m: String| Err(IntegratorError::Settings(m));
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if !(self.output_dt > 0.0 && self.output_dt.is_finite()) {
            return bad(format!("output_dt must be positive, got {}", self.output_dt));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.max_step.is_nan() || self.max_step <= 0.0 {
            return bad(format!("max_step must be positive, got {}", self.max_step));
        }
        Ok(())
    }

    /// Same settings with `rel_tol = tol` and `abs_tol` scaled to keep the
    /// default ratio between the two.
    pub fn with_tolerance(self, tol: f64) -> Self {
        Self {
            rel_tol: tol,
            abs_tol: tol * 1e-2,
            ..self
        }
    }

    /// Uniform output times `0, dt, 2dt, ...`, closed by `t_end`.
    pub fn output_times(&self) -> Vec<f64> {
        let n = (self.t_end / self.output_dt * (1.0 + 1e-12)).floor() as usize;
        let mut times: Vec<f64> = (0..=n).map(|i| i as f64 * self.output_dt).collect();
        let last = *times.last().unwrap();
        if (self.t_end - last).abs() <= 1e-9 * self.output_dt {
            *times.last_mut().unwrap() = self.t_end;
        } else {
            times.push(self.t_end);
        }
        times
    }
}

/// A first-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

impl OdeSystem for BridgeModel {
    fn dim(&self) -> usize {
        self.config.dim()
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        self.rhs_into(y, dy);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub jacobian_evals: usize,
    pub lu_decompositions: usize,
}

/// Continuous representation of one accepted step.
#[derive(Debug, Clone)]
enum Segment {
    /// Dormand-Prince coefficients `r0..r4`.
    Dopri { t0: f64, h: f64, coef: [Vec<f64>; 5] },
    /// Cubic Hermite data.
    Hermite {
        t0: f64,
        h: f64,
        y0: Vec<f64>,
        f0: Vec<f64>,
        y1: Vec<f64>,
        f1: Vec<f64>,
    },
}

impl Segment {
    fn span(&self) -> (f64, f64) {
        match self {
            Segment::Dopri { t0, h, .. } | Segment::Hermite { t0, h, .. } => (*t0, *t0 + *h),
        }
    }

    fn eval(&self, t: f64, out: &mut [f64]) {
        match self {
            Segment::Dopri { t0, h, coef } => {
                let s = (t - t0) / h;
                let s1 = 1.0 - s;
                for i in 0..out.len() {
                    out[i] = coef[0][i] + s * (coef[1][i] + s1 * (coef[2][i] + s * (coef[3][i] + s1 * coef[4][i])));
                }
            }
            Segment::Hermite { t0, h, y0, f0, y1, f1 } => {
                let s = (t - t0) / h;
                let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
                let h10 = s * (1.0 - s) * (1.0 - s);
                let h01 = s * s * (3.0 - 2.0 * s);
                let h11 = s * s * (s - 1.0);
                for i in 0..out.len() {
                    out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
                }
            }
        }
    }
}

/// Raw solver output: samples on the requested grid plus the dense segments.
#[derive(Debug, Clone)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: StepStats,
    segments: Vec<Segment>,
}

impl Solution {
    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Dense-output evaluation at arbitrary times inside the span. Times that
    /// coincide with stored samples return those samples unchanged.
    pub fn resample(&self, times: &[f64]) -> Result<Vec<Vec<f64>>, IntegratorError> {
        let t_end = self.t_end();
        let dim = self.states[0].len();
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            if !(0.0..=t_end).contains(&(t - self.times[0])) || t > t_end {
                return Err(IntegratorError::OutOfRange { t, t_end });
            }
            if let Ok(i) = self.times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
                out.push(self.states[i].clone());
                continue;
            }
            let idx = self
                .segments
                .partition_point(|s| s.span().1 < t)
                .min(self.segments.len() - 1);
            let mut y = vec![0.0; dim];
            self.segments[idx].eval(t, &mut y);
            out.push(y);
        }
        Ok(out)
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], rtol: f64, atol: f64) -> f64 {
    let n = err.len() as f64;
    let sum: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn first_non_finite(y: &[f64]) -> Option<usize> {
    y.iter().position(|v| !v.is_finite())
}

/// Integrates `sys` from `t = 0` and samples the solution on the settings' grid.
pub fn solve<S: OdeSystem>(sys: &S, y0: &[f64], settings: &IntegratorSettings) -> Result<Solution, IntegratorError> {
    settings.validate()?;
    if y0.len() != sys.dim() {
        return Err(IntegratorError::Dimension {
            got: y0.len(),
            expected: sys.dim(),
        });
    }
    if let Some(component) = first_non_finite(y0) {
        return Err(IntegratorError::NonFinite { component, t: 0.0 });
    }
    match settings.method {
        Method::ExplicitRk => dopri5(sys, y0, settings),
        Method::TrBdf2 => tr_bdf2(sys, y0, settings),
    }
}

/// Collects dense output on the uniform grid as steps are accepted.
struct Sampler {
    times: Vec<f64>,
    next: usize,
    states: Vec<Vec<f64>>,
}

impl Sampler {
    fn new(settings: &IntegratorSettings, y0: &[f64]) -> Self {
        let times = settings.output_times();
        Self {
            times,
            next: 1,
            states: vec![y0.to_vec()],
        }
    }

    fn feed(&mut self, seg: &Segment, y_end: &[f64]) {
        let (_, t1) = seg.span();
        while self.next < self.times.len() && self.times[self.next] <= t1 {
            let t = self.times[self.next];
            if t == t1 {
                self.states.push(y_end.to_vec());
            } else {
                let mut y = vec![0.0; y_end.len()];
                seg.eval(t, &mut y);
                self.states.push(y);
            }
            self.next += 1;
        }
    }
}

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn initial_step<S: OdeSystem>(
    sys: &S,
    y0: &[f64],
    f0: &[f64],
    order: i32,
    s: &IntegratorSettings,
    stats: &mut StepStats,
) -> f64 {
    let n = y0.len() as f64;
    let sc: Vec<f64> = y0.iter().map(|y| s.abs_tol + s.rel_tol * y.abs()).collect();
    let rms = |v: &[f64]| (v.iter().zip(&sc).map(|(a, b)| (a / b).powi(2)).sum::<f64>() / n).sqrt();
    let d0 = rms(y0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(s.max_step);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    sys.rhs(h0, &y1, &mut f1);
    stats.rhs_evals += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / (order as f64 + 1.0))
    };
    (100.0 * h0).min(h1).min(s.max_step).min(s.t_end)
}

fn dopri5<S: OdeSystem>(sys: &S, y0: &[f64], s: &IntegratorSettings) -> Result<Solution, IntegratorError> {
    let n = y0.len();
    let mut stats = StepStats::default();
    let mut sampler = Sampler::new(s, y0);
    let mut segments = Vec::new();
    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    sys.rhs(t, &y, &mut k1);
    stats.rhs_evals += 1;
    let mut h = initial_step(sys, &y, &k1, 5, s, &mut stats);
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut last_rejected = false;
    while t < s.t_end {
        let h_min = 16.0 * f64::EPSILON * t.abs().max(1.0);
        if h < h_min {
            return Err(IntegratorError::StepUnderflow {
                t: t + h,
                last_good_t: t,
            });
        }
        let mut last = false;
        if t + h >= s.t_end * (1.0 - 1e-14) {
            h = s.t_end - t;
            last = true;
        }
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.rhs(t + C2 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(t + C3 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(t + C4 * h, &tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(t + C5 * h, &tmp, &mut k5);
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.rhs(t + h, &tmp, &mut k6);
        for i in 0..n {
            y_new[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        let t_new = if last { s.t_end } else { t + h };
        sys.rhs(t_new, &y_new, &mut k7);
        stats.rhs_evals += 6;
        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let en = error_norm(&err, &y, &y_new, s.rel_tol, s.abs_tol);
        if !en.is_finite() {
            if let Some(component) = first_non_finite(&y_new) {
                if h <= h_min * 1e3 {
                    return Err(IntegratorError::NonFinite { component, t: t_new });
                }
            }
            stats.rejected += 1;
            h *= MIN_FACTOR;
            last_rejected = true;
            continue;
        }
        if en <= 1.0 {
            stats.accepted += 1;
            let mut coef: [Vec<f64>; 5] = Default::default();
            coef[0] = y.clone();
            coef[1] = y_new.iter().zip(&y).map(|(a, b)| a - b).collect();
            coef[2] = (0..n).map(|i| h * k1[i] - coef[1][i]).collect();
            coef[3] = (0..n).map(|i| coef[1][i] - h * k7[i] - coef[2][i]).collect();
            coef[4] = (0..n)
                .map(|i| h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]))
                .collect();
            let seg = Segment::Dopri { t0: t, h, coef };
            sampler.feed(&seg, &y_new);
            segments.push(seg);
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            let mut fac = SAFETY * en.max(1e-10).powf(-0.2);
            fac = fac.clamp(MIN_FACTOR, MAX_FACTOR);
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            h = (h * fac).min(s.max_step);
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h *= (SAFETY * en.powf(-0.2)).max(MIN_FACTOR);
        }
    }
    Ok(Solution {
        times: sampler.times,
        states: sampler.states,
        stats,
        segments,
    })
}

const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;
/// Diagonal coefficient shared by both implicit stages, `gamma / 2`.
const D_IMPLICIT: f64 = GAMMA / 2.0;
const NEWTON_MAX_ITER: usize = 6;

struct Newton {
    jac: DMatrix<f64>,
    lu: Option<(f64, LU<f64, nalgebra::Dyn, nalgebra::Dyn>)>,
    jac_fresh: bool,
}

impl Newton {
    fn jacobian<S: OdeSystem>(&mut self, sys: &S, t: f64, y: &[f64], f: &[f64], stats: &mut StepStats) {
        let n = y.len();
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; n];
        for j in 0..n {
            let d = f64::EPSILON.sqrt() * y[j].abs().max(1e-6);
            yp[j] = y[j] + d;
            sys.rhs(t, &yp, &mut fp);
            for i in 0..n {
                self.jac[(i, j)] = (fp[i] - f[i]) / d;
            }
            yp[j] = y[j];
        }
        stats.rhs_evals += n;
        stats.jacobian_evals += 1;
        self.lu = None;
        self.jac_fresh = true;
    }

    fn factor(&mut self, h: f64, stats: &mut StepStats) -> &LU<f64, nalgebra::Dyn, nalgebra::Dyn> {
        let stale = match &self.lu {
            Some((hh, _)) => *hh != h,
            None => true,
        };
        if stale {
            let n = self.jac.nrows();
            let m = DMatrix::<f64>::identity(n, n) - &self.jac * (D_IMPLICIT * h);
            self.lu = Some((h, m.lu()));
            stats.lu_decompositions += 1;
        }
        &self.lu.as_ref().unwrap().1
    }

    /// Solves `z = base + d h f(t, z)` by simplified Newton from `guess`.
    #[allow(clippy::too_many_arguments)]
    fn solve_stage<S: OdeSystem>(
        &mut self,
        sys: &S,
        t: f64,
        h: f64,
        base: &[f64],
        guess: &[f64],
        scale: &[f64],
        stats: &mut StepStats,
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = base.len();
        let mut z = guess.to_vec();
        let mut fz = vec![0.0; n];
        let mut prev_norm = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITER {
            sys.rhs(t, &z, &mut fz);
            stats.rhs_evals += 1;
            let resid = DVector::from_iterator(n, (0..n).map(|i| base[i] + D_IMPLICIT * h * fz[i] - z[i]));
            let delta = self.factor(h, stats).solve(&resid)?;
            let norm = (delta.iter().zip(scale).map(|(d, s)| (d / s).powi(2)).sum::<f64>() / n as f64).sqrt();
            for i in 0..n {
                z[i] += delta[i];
            }
            if !norm.is_finite() || (norm > prev_norm && prev_norm < f64::INFINITY && norm > 1e-3) {
                return None;
            }
            if norm <= 1e-3 {
                sys.rhs(t, &z, &mut fz);
                stats.rhs_evals += 1;
                return Some((z, fz));
            }
            prev_norm = norm;
        }
        None
    }
}

fn tr_bdf2<S: OdeSystem>(sys: &S, y0: &[f64], s: &IntegratorSettings) -> Result<Solution, IntegratorError> {
    let n = y0.len();
    let mut stats = StepStats::default();
    let mut sampler = Sampler::new(s, y0);
    let mut segments = Vec::new();
    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut f = vec![0.0; n];
    sys.rhs(t, &y, &mut f);
    stats.rhs_evals += 1;
    let mut h = initial_step(sys, &y, &f, 2, s, &mut stats);
    let mut newton = Newton {
        jac: DMatrix::zeros(n, n),
        lu: None,
        jac_fresh: false,
    };
    newton.jacobian(sys, t, &y, &f, &mut stats);
    // local error constant of the composite scheme
    let err_const = (-3.0 * GAMMA * GAMMA + 4.0 * GAMMA - 2.0) / (12.0 * (2.0 - GAMMA));
    let w_bdf_0 = (1.0 - GAMMA) * (1.0 - GAMMA) / (GAMMA * (2.0 - GAMMA));
    let w_bdf_g = 1.0 / (GAMMA * (2.0 - GAMMA));
    let mut last_rejected = false;
    while t < s.t_end {
        let h_min = 16.0 * f64::EPSILON * t.abs().max(1.0);
        if h < h_min {
            return Err(IntegratorError::StepUnderflow {
                t: t + h,
                last_good_t: t,
            });
        }
        let mut last = false;
        if t + h >= s.t_end * (1.0 - 1e-14) {
            h = s.t_end - t;
            last = true;
        }
        let scale: Vec<f64> = y.iter().map(|v| s.abs_tol + s.rel_tol * v.abs()).collect();

        // trapezoidal stage to t + gamma h
        let base1: Vec<f64> = (0..n).map(|i| y[i] + D_IMPLICIT * h * f[i]).collect();
        let guess1: Vec<f64> = (0..n).map(|i| y[i] + GAMMA * h * f[i]).collect();
        let stage1 = newton.solve_stage(sys, t + GAMMA * h, h, &base1, &guess1, &scale, &mut stats);
        let Some((y_g, f_g)) = stage1 else {
            if !newton.jac_fresh {
                newton.jacobian(sys, t, &y, &f, &mut stats);
            } else {
                h *= 0.5;
            }
            stats.rejected += 1;
            last_rejected = true;
            continue;
        };
        // BDF2 stage to t + h
        let base2: Vec<f64> = (0..n).map(|i| w_bdf_g * y_g[i] - w_bdf_0 * y[i]).collect();
        let guess2: Vec<f64> = (0..n).map(|i| y_g[i] + (1.0 - GAMMA) * h * f_g[i]).collect();
        let t_new = if last { s.t_end } else { t + h };
        let stage2 = newton.solve_stage(sys, t_new, h, &base2, &guess2, &scale, &mut stats);
        let Some((y_new, f_new)) = stage2 else {
            if !newton.jac_fresh {
                newton.jacobian(sys, t, &y, &f, &mut stats);
            } else {
                h *= 0.5;
            }
            stats.rejected += 1;
            last_rejected = true;
            continue;
        };
        if let Some(component) = first_non_finite(&y_new) {
            return Err(IntegratorError::NonFinite { component, t: t_new });
        }
        let raw = DVector::from_iterator(
            n,
            (0..n).map(|i| {
                2.0 * err_const * h * (f[i] / GAMMA - f_g[i] / (GAMMA * (1.0 - GAMMA)) + f_new[i] / (1.0 - GAMMA))
            }),
        );
        // filtered estimate, bounded for stiff components
        let est = newton.factor(h, &mut stats).solve(&raw).unwrap_or(raw);
        let en = error_norm(est.as_slice(), &y, &y_new, s.rel_tol, s.abs_tol);
        if en <= 1.0 {
            stats.accepted += 1;
            let seg = Segment::Hermite {
                t0: t,
                h,
                y0: y.clone(),
                f0: f.clone(),
                y1: y_new.clone(),
                f1: f_new.clone(),
            };
            sampler.feed(&seg, &y_new);
            segments.push(seg);
            t = t_new;
            y = y_new;
            f = f_new;
            newton.jac_fresh = false;
            let mut fac = SAFETY * en.max(1e-10).powf(-1.0 / 3.0);
            fac = fac.clamp(MIN_FACTOR, 5.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            last_rejected = false;
            // hold the factorisation for small changes
            if (0.9..=1.2).contains(&fac) {
                fac = 1.0;
            }
            h = (h * fac).min(s.max_step);
            if stats.accepted % 50 == 0 {
                newton.jacobian(sys, t, &y, &f, &mut stats);
            }
        } else {
            stats.rejected += 1;
            last_rejected = true;
            h *= (SAFETY * en.powf(-1.0 / 3.0)).max(MIN_FACTOR);
        }
    }
    Ok(Solution {
        times: sampler.times,
        states: sampler.states,
        stats,
        segments,
    })
}

/// Sampled bridge trajectory with the energy at every sample.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub config: ModalConfig,
    pub scale: AmplitudeScale,
    pub times: Vec<f64>,
    pub states: Vec<ModalState>,
    /// Total energy [J].
    pub energy: Vec<f64>,
    /// Energy above the rest state [J], kept separately for precision.
    pub energy_above_rest: Vec<f64>,
    pub rest_energy: f64,
    pub stats: StepStats,
    pub settings: IntegratorSettings,
    solution: Solution,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// `|E(t) - E(0)| / |E(0) - E_rest|` maximised over the samples.
    pub fn max_relative_drift(&self) -> f64 {
        let e0 = self.energy_above_rest[0];
        let max_abs = self.max_absolute_drift();
        if e0 == 0.0 {
            max_abs / self.rest_energy
        } else {
            max_abs / e0.abs()
        }
    }

    pub fn max_absolute_drift(&self) -> f64 {
        let e0 = self.energy_above_rest[0];
        self.energy_above_rest
            .iter()
            .map(|e| (e - e0).abs())
            .fold(0.0, f64::max)
    }

    pub fn theta_bar(&self, sample: usize) -> Vec<f64> {
        self.states[sample].theta_bar(self.scale)
    }

    pub fn w_bar(&self, sample: usize) -> Vec<f64> {
        self.states[sample].w_bar(self.scale)
    }

    /// Largest |w_bar| and |theta_bar| over the whole trajectory.
    pub fn max_amplitudes(&self) -> (f64, f64) {
        let mut mw: f64 = 0.0;
        let mut mt: f64 = 0.0;
        for s in &self.states {
            for v in s.w_bar(self.scale) {
                mw = mw.max(v.abs());
            }
            for v in s.theta_bar(self.scale) {
                mt = mt.max(v.abs());
            }
        }
        (mw, mt)
    }

    pub fn resample(&self, times: &[f64]) -> Result<Vec<ModalState>, IntegratorError> {
        Ok(self
            .solution
            .resample(times)?
            .into_iter()
            .zip(times)
            .map(|(y, &t)| ModalState::from_slice(self.config, t, &y))
            .collect())
    }
}

/// Integrates the bridge model from `initial` (taken at t = 0).
pub fn integrate(
    model: &BridgeModel,
    initial: &ModalState,
    settings: &IntegratorSettings,
) -> Result<Trajectory, IntegratorError> {
    model.check(initial).map_err(|_| IntegratorError::Dimension {
        got: initial.to_vec().len(),
        expected: model.dim(),
    })?;
    let y0 = initial.to_vec();
    let solution = solve(model, &y0, settings)?;
    let config = model.config;
    let states: Vec<ModalState> = solution
        .times
        .iter()
        .zip(&solution.states)
        .map(|(&t, y)| ModalState::from_slice(config, t, y))
        .collect();
    let energy_above_rest: Vec<f64> = solution
        .states
        .iter()
        .map(|y| model.energy_above_rest_flat(y))
        .collect();
    let rest_energy = model.rest_energy();
    Ok(Trajectory {
        config,
        scale: model.scale(),
        times: solution.times.clone(),
        energy: energy_above_rest.iter().map(|e| rest_energy + e).collect(),
        energy_above_rest,
        rest_energy,
        stats: solution.stats,
        settings: *settings,
        states,
        solution,
    })
}
