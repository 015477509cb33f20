//! Single-mode excitation, torsional instability classification, threshold
//! bisection and parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{BridgeModel, DynamicsError, ModalConfig, ModalState};
use crate::integrator::{integrate, IntegratorError, IntegratorSettings, Trajectory};
use crate::params::{MechanicalParams, SweepParam};

pub const DEFAULT_BACKGROUND_RATIO: f64 = 1e-3;
pub const DEFAULT_GROWTH_THRESHOLD: f64 = 10.0;
pub const MAX_BISECTION_ITERATIONS: usize = 64;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("excited mode {mode} outside 1..={n_w}")]
    ModeOutOfRange { mode: usize, n_w: usize },
    #[error("excitation amplitude must be positive, got {0}")]
    Amplitude(f64),
    #[error("bracket invalid: lower end {lo} m is {lo_verdict}, upper end {hi} m is {hi_verdict}")]
    BracketInvalid {
        lo: f64,
        hi: f64,
        lo_verdict: Box<InstabilityVerdict>,
        hi_verdict: Box<InstabilityVerdict>,
    },
    #[error("bisection did not reach resolution {resolution} m within {iterations} iterations")]
    NoConvergence { resolution: f64, iterations: usize },
    #[error("invalid search request: {0}")]
    Request(String),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Excitation of one longitudinal mode over a small uniform background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec {
    /// 1-based index of the excited longitudinal mode.
    pub mode: usize,
    /// Initial amplitude of that mode [m].
    pub amplitude_bar: f64,
    pub background_ratio: f64,
}

impl ExcitationSpec {
    pub fn new(mode: usize, amplitude_bar: f64) -> Self {
        Self {
            mode,
            amplitude_bar,
            background_ratio: DEFAULT_BACKGROUND_RATIO,
        }
    }

    pub fn with_amplitude(self, amplitude_bar: f64) -> Self {
        Self { amplitude_bar, ..self }
    }

    pub fn validate(&self, config: ModalConfig) -> Result<(), StabilityError> {
        if self.mode == 0 || self.mode > config.n_w {
            return Err(StabilityError::ModeOutOfRange {
                mode: self.mode,
                n_w: config.n_w,
            });
        }
        if !(self.amplitude_bar > 0.0 && self.amplitude_bar.is_finite()) {
            return Err(StabilityError::Amplitude(self.amplitude_bar));
        }
        Ok(())
    }
}

/// Initial state: mode `j` at the requested amplitude, every other amplitude
/// and every velocity at `background_ratio` times it. Velocities take the same
/// numerical value as the background amplitudes, in m/s and rad/s.
pub fn build_initial_conditions(model: &BridgeModel, spec: &ExcitationSpec) -> Result<ModalState, StabilityError> {
    spec.validate(model.config)?;
    let scale = model.scale();
    let background = scale.from_bar(spec.background_ratio * spec.amplitude_bar);
    let mut state = ModalState::zeros(model.config);
    state.w.fill(background);
    state.w_dot.fill(background);
    state.theta.fill(background);
    state.theta_dot.fill(background);
    state.w[spec.mode - 1] = scale.from_bar(spec.amplitude_bar);
    Ok(state)
}

/// How a trajectory is judged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSettings {
    /// Fraction of the run whose peak torsional amplitudes serve as reference.
    /// Zero means the initial amplitudes.
    pub reference_window_fraction: f64,
    pub growth_threshold: f64,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        Self {
            reference_window_fraction: 0.0,
            growth_threshold: DEFAULT_GROWTH_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstabilityVerdict {
    pub unstable: bool,
    pub growth_factor: f64,
    /// 1-based torsional mode with the largest growth.
    pub dominant_torsional_mode: usize,
    /// First sample time at which some mode reached the growth threshold.
    pub onset_time: Option<f64>,
    pub mode_growth: Vec<f64>,
    /// Peak |theta_bar| per mode [rad].
    pub mode_peak: Vec<f64>,
    /// Set when some reference amplitude was zero and replaced by a floor.
    pub degenerate_reference: bool,
}

impl std::fmt::Display for InstabilityVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (growth factor {:.3}, dominant torsional mode {})",
            if self.unstable { "unstable" } else { "stable" },
            self.growth_factor,
            self.dominant_torsional_mode
        )
    }
}

impl InstabilityVerdict {
    /// Torsional modes ordered by decreasing growth, 1-based.
    pub fn modes_by_growth(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.mode_growth.len()).collect();
        idx.sort_by(|&a, &b| self.mode_growth[b].total_cmp(&self.mode_growth[a]));
        idx.into_iter().map(|i| i + 1).collect()
    }
}

/// Smallest reference amplitude used in place of an exact zero.
const REFERENCE_FLOOR: f64 = f64::MIN_POSITIVE;

/// Judges torsional growth from sampled `|theta_bar_k(t)|` series.
pub fn classify_series(times: &[f64], theta_bar: &[Vec<f64>], settings: &ClassifierSettings) -> InstabilityVerdict {
    let n_theta = theta_bar.first().map_or(0, |v| v.len());
    let t0 = times[0];
    let t_end = *times.last().unwrap();
    let window_end = t0 + settings.reference_window_fraction * (t_end - t0);
    let mut reference = vec![0.0f64; n_theta];
    for (t, th) in times.iter().zip(theta_bar) {
        if *t > window_end && *t != t0 {
            break;
        }
        for k in 0..n_theta {
            reference[k] = reference[k].max(th[k].abs());
        }
    }
    let degenerate_reference = reference.contains(&0.0);
    for a in reference.iter_mut() {
        if *a == 0.0 {
            *a = REFERENCE_FLOOR;
        }
    }
    let mut peak = vec![0.0f64; n_theta];
    let mut onset_time = None;
    for (t, th) in times.iter().zip(theta_bar) {
        let mut now = 0.0f64;
        for k in 0..n_theta {
            let a = th[k].abs();
            peak[k] = peak[k].max(a);
            now = now.max(a / reference[k]);
        }
        if onset_time.is_none() && now >= settings.growth_threshold {
            onset_time = Some(*t);
        }
    }
    let mode_growth: Vec<f64> = peak.iter().zip(&reference).map(|(p, r)| p / r).collect();
    let (dominant, growth_factor) =
        mode_growth
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (k, &g)| if g > best.1 { (k, g) } else { best });
    InstabilityVerdict {
        unstable: growth_factor >= settings.growth_threshold,
        growth_factor,
        dominant_torsional_mode: dominant + 1,
        onset_time,
        mode_growth,
        mode_peak: peak,
        degenerate_reference,
    }
}

pub fn classify(trajectory: &Trajectory, settings: &ClassifierSettings) -> InstabilityVerdict {
    let series: Vec<Vec<f64>> = (0..trajectory.states.len()).map(|i| trajectory.theta_bar(i)).collect();
    classify_series(&trajectory.times, &series, settings)
}

/// Integrates one excitation and classifies it.
pub fn probe(
    model: &BridgeModel,
    spec: &ExcitationSpec,
    integrator: &IntegratorSettings,
    classifier: &ClassifierSettings,
) -> Result<InstabilityVerdict, StabilityError> {
    let initial = build_initial_conditions(model, spec)?;
    let trajectory = integrate(model, &initial, integrator)?;
    Ok(classify(&trajectory, classifier))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub amplitude_bar: f64,
    pub verdict: InstabilityVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub mode: usize,
    pub threshold_bar: f64,
    /// Final `(stable, unstable)` amplitudes [m].
    pub bracket: (f64, f64),
    pub iterations: usize,
    pub probes: Vec<Probe>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRequest {
    pub mode: usize,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub resolution: f64,
    pub background_ratio: f64,
}

impl ThresholdRequest {
    pub fn new(mode: usize, bracket_lo: f64, bracket_hi: f64, resolution: f64) -> Self {
        Self {
            mode,
            bracket_lo,
            bracket_hi,
            resolution,
            background_ratio: DEFAULT_BACKGROUND_RATIO,
        }
    }
}

/// Bisects on the excitation amplitude between a stable lower and an unstable
/// upper end. The stable-to-unstable transition is assumed monotone: thin
/// instability tongues below the threshold are not searched for.
pub fn find_threshold(
    model: &BridgeModel,
    request: &ThresholdRequest,
    integrator: &IntegratorSettings,
    classifier: &ClassifierSettings,
) -> Result<ThresholdResult, StabilityError> {
    let ThresholdRequest {
        mode,
        bracket_lo,
        bracket_hi,
        resolution,
        background_ratio,
    } = *request;
    if !(bracket_lo > 0.0 && bracket_lo < bracket_hi) {
        return Err(StabilityError::Request(format!(
            "bracket must satisfy 0 < lo < hi, got [{bracket_lo}, {bracket_hi}]"
        )));
    }
    if resolution.is_nan() || resolution <= 0.0 {
        return Err(StabilityError::Request(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    let spec = ExcitationSpec {
        mode,
        amplitude_bar: bracket_lo,
        background_ratio,
    };
    let run = |amp: f64| probe(model, &spec.with_amplitude(amp), integrator, classifier);
    let lo_verdict = run(bracket_lo)?;
    let hi_verdict = run(bracket_hi)?;
    if lo_verdict.unstable || !hi_verdict.unstable {
        return Err(StabilityError::BracketInvalid {
            lo: bracket_lo,
            hi: bracket_hi,
            lo_verdict: Box::new(lo_verdict),
            hi_verdict: Box::new(hi_verdict),
        });
    }
    let mut probes = vec![
        Probe {
            amplitude_bar: bracket_lo,
            verdict: lo_verdict,
        },
        Probe {
            amplitude_bar: bracket_hi,
            verdict: hi_verdict,
        },
    ];
    let (mut lo, mut hi) = (bracket_lo, bracket_hi);
    let mut iterations = 0;
    while hi - lo > resolution {
        if iterations == MAX_BISECTION_ITERATIONS {
            return Err(StabilityError::NoConvergence { resolution, iterations });
        }
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let verdict = run(mid)?;
        if verdict.unstable {
            hi = mid;
        } else {
            lo = mid;
        }
        probes.push(Probe {
            amplitude_bar: mid,
            verdict,
        });
    }
    Ok(ThresholdResult {
        mode,
        threshold_bar: 0.5 * (lo + hi),
        bracket: (lo, hi),
        iterations,
        probes,
    })
}

/// JSON-facing summary of a threshold search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub mode_j: usize,
    pub threshold_bar_m: f64,
    pub bracket_m: [f64; 2],
    pub iterations: usize,
    pub growth_threshold: f64,
    pub reference_window_fraction: f64,
    pub solver_settings: IntegratorSettings,
    pub probes: Vec<Probe>,
}

impl ThresholdSummary {
    pub fn new(result: &ThresholdResult, integrator: &IntegratorSettings, classifier: &ClassifierSettings) -> Self {
        Self {
            mode_j: result.mode,
            threshold_bar_m: result.threshold_bar,
            bracket_m: [result.bracket.0, result.bracket.1],
            iterations: result.iterations,
            growth_threshold: classifier.growth_threshold,
            reference_window_fraction: classifier.reference_window_fraction,
            solver_settings: *integrator,
            probes: result.probes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub is_baseline: bool,
    pub verdict: InstabilityVerdict,
}

/// Classifies the same excitation for each value of one parameter. Derived
/// constants are recomputed from scratch for every point. `workers = 0` uses
/// the global thread pool.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    base: &MechanicalParams,
    config: ModalConfig,
    param: SweepParam,
    values: &[f64],
    spec: &ExcitationSpec,
    integrator: &IntegratorSettings,
    classifier: &ClassifierSettings,
    workers: usize,
) -> Result<Vec<SweepPoint>, StabilityError> {
    let mut base_copy = *base;
    let baseline = *base_copy.field_mut(param);
    let point = |value: f64| -> Result<SweepPoint, StabilityError> {
        let mut p = *base;
        *p.field_mut(param) = value;
        let model = BridgeModel::new(p, config)?;
        let verdict = probe(&model, spec, integrator, classifier)?;
        Ok(SweepPoint {
            value,
            is_baseline: value == baseline,
            verdict,
        })
    };
    let run = || values.par_iter().map(|&v| point(v)).collect::<Result<Vec<_>, _>>();
    if workers == 0 {
        run()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| StabilityError::Request(e.to_string()))?;
        pool.install(run)
    }
}

/// CSV rendering of sweep results, one row per value.
pub fn sweep_csv(param: SweepParam, points: &[SweepPoint]) -> String {
    let n_theta = points.first().map_or(0, |p| p.verdict.mode_growth.len());
    let mut out = format!(
        "{},baseline,unstable,growth_factor,dominant_torsional_mode,onset_time_s",
        param.symbol()
    );
    for k in 1..=n_theta {
        out.push_str(&format!(",growth_theta_{k}"));
    }
    out.push('\n');
    for p in points {
        let v = &p.verdict;
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            p.value,
            p.is_baseline,
            v.unstable,
            v.growth_factor,
            v.dominant_torsional_mode,
            v.onset_time.map_or(String::new(), |t| t.to_string())
        ));
        for g in &v.mode_growth {
            out.push_str(&format!(",{g}"));
        }
        out.push('\n');
    }
    out
}
