//! Run configuration: mechanical constants plus solver and classifier
//! settings, read from one `key = value` file and overridden by flags.

use std::path::Path;

use bridge_core::geometry::{DEFAULT_NODES_PER_PANEL, DEFAULT_PANELS};
use bridge_core::params::{params_from_slots, parse_key_values, PARAM_KEYS};
use bridge_core::{
    BridgeModel, ClassifierSettings, IntegratorSettings, MechanicalParams, Method, ModalConfig, QuadratureGrid,
};

use crate::error::Failure;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: MechanicalParams,
    pub modes: ModalConfig,
    pub quad_panels: usize,
    pub quad_nodes_per_panel: usize,
    pub integrator: IntegratorSettings,
    pub classifier: ClassifierSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: MechanicalParams::tacoma_narrows(),
            modes: ModalConfig::default(),
            quad_panels: DEFAULT_PANELS,
            quad_nodes_per_panel: DEFAULT_NODES_PER_PANEL,
            integrator: IntegratorSettings::default(),
            classifier: ClassifierSettings::default(),
        }
    }
}

const RUN_KEYS: [&str; 11] = [
    "modes_w",
    "modes_theta",
    "quad_panels",
    "quad_nodes_per_panel",
    "rel_tol",
    "abs_tol",
    "t_end_s",
    "output_dt_s",
    "max_step_s",
    "method",
    "reference_window_fraction",
];
const GROWTH_KEY: &str = "growth_threshold";

impl RunConfig {
    /// Parses a config file. Keys left out keep their defaults; unknown keys
    /// and malformed values are errors carrying the line number.
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let mut cfg = Self::default();
        let mut slots: [Option<f64>; 12] = cfg.params.to_slots().map(Some);
        for (line, key, value) in parse_key_values(text).map_err(Failure::config)? {
            let bad = |what: &str| Failure::Config(format!("line {line}: `{key}`: {what} `{value}`"));
            let number = || value.parse::<f64>().map_err(|_| bad("cannot parse number"));
            let count = || value.parse::<usize>().map_err(|_| bad("cannot parse count"));
            if let Some(slot) = PARAM_KEYS.iter().position(|(k, _)| *k == key) {
                slots[slot] = Some(number()? * PARAM_KEYS[slot].1);
                continue;
            }
            match key.as_str() {
                "modes_w" => cfg.modes.n_w = count()?,
                "modes_theta" => cfg.modes.n_theta = count()?,
                "quad_panels" => cfg.quad_panels = count()?,
                "quad_nodes_per_panel" => cfg.quad_nodes_per_panel = count()?,
                "rel_tol" => cfg.integrator.rel_tol = number()?,
                "abs_tol" => cfg.integrator.abs_tol = number()?,
                "t_end_s" => cfg.integrator.t_end = number()?,
                "output_dt_s" => cfg.integrator.output_dt = number()?,
                "max_step_s" => cfg.integrator.max_step = number()?,
                "method" => cfg.integrator.method = value.parse().map_err(|_| bad("unknown method"))?,
                "reference_window_fraction" => cfg.classifier.reference_window_fraction = number()?,
                GROWTH_KEY => cfg.classifier.growth_threshold = number()?,
                _ => return Err(Failure::Config(format!("line {line}: unknown key `{key}`"))),
            }
        }
        cfg.params = params_from_slots(&slots).map_err(Failure::config)?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::parse(&text).map_err(|f| match f {
                    Failure::Config(m) => Failure::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn validate(&self) -> Result<(), Failure> {
        self.params.validated().map_err(Failure::config)?;
        self.modes.validate().map_err(|e| Failure::Config(e.to_string()))?;
        self.integrator.validate().map_err(|e| Failure::Config(e.to_string()))?;
        let c = &self.classifier;
        if !(0.0..1.0).contains(&c.reference_window_fraction) {
            return Err(Failure::Config(format!(
                "reference_window_fraction must lie in [0, 1), got {}",
                c.reference_window_fraction
            )));
        }
        if c.growth_threshold.is_nan() || c.growth_threshold <= 1.0 {
            return Err(Failure::Config(format!(
                "growth_threshold must exceed 1, got {}",
                c.growth_threshold
            )));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<BridgeModel, Failure> {
        self.model_with(self.params)
    }

    pub fn model_with(&self, params: MechanicalParams) -> Result<BridgeModel, Failure> {
        let grid = QuadratureGrid::new(params.l, self.quad_panels, self.quad_nodes_per_panel)
            .map_err(|e| Failure::Config(e.to_string()))?;
        BridgeModel::with_grid(params, self.modes, grid).map_err(|e| Failure::Config(e.to_string()))
    }

    /// Every key with its resolved value, in file units.
    pub fn pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = PARAM_KEYS
            .iter()
            .zip(self.params.to_slots())
            .map(|((k, scale), v)| (k.to_string(), (v / scale).to_string()))
            .collect();
        let s = &self.integrator;
        let run = [
            self.modes.n_w.to_string(),
            self.modes.n_theta.to_string(),
            self.quad_panels.to_string(),
            self.quad_nodes_per_panel.to_string(),
            s.rel_tol.to_string(),
            s.abs_tol.to_string(),
            s.t_end.to_string(),
            s.output_dt.to_string(),
            s.max_step.to_string(),
            s.method.to_string(),
            self.classifier.reference_window_fraction.to_string(),
        ];
        out.extend(RUN_KEYS.iter().zip(run).map(|(k, v)| (k.to_string(), v)));
        out.push((GROWTH_KEY.to_string(), self.classifier.growth_threshold.to_string()));
        out
    }

    /// Config file text that reproduces this configuration.
    pub fn to_file(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Command-line overrides shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub modes: Option<(usize, usize)>,
    pub t_end: Option<f64>,
    pub output_dt: Option<f64>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub method: Option<Method>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some((n_w, n_theta)) = self.modes {
            cfg.modes = ModalConfig { n_w, n_theta };
        }
        let s = &mut cfg.integrator;
        if let Some(v) = self.t_end {
            s.t_end = v;
        }
        if let Some(v) = self.output_dt {
            s.output_dt = v;
        }
        if let Some(v) = self.rel_tol {
            s.rel_tol = v;
        }
        if let Some(v) = self.abs_tol {
            s.abs_tol = v;
        }
        if let Some(m) = self.method {
            s.method = m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(RunConfig::parse("# nothing\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn resolved_file_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.params.f = 106.71;
        cfg.integrator.method = Method::TrBdf2;
        cfg.modes.n_theta = 6;
        cfg.classifier.reference_window_fraction = 0.1;
        assert_eq!(RunConfig::parse(&cfg.to_file()).unwrap(), cfg);
    }

    #[test]
    fn units_are_converted() {
        let cfg = RunConfig::parse("E_MPa = 100000\nf_m = 80\n").unwrap();
        assert_eq!(cfg.params.e, 1e11);
        assert_eq!(cfg.params.f, 80.0);
    }

    #[test]
    fn errors_name_the_line() {
        let e = RunConfig::parse("rel_tol = 1e-6\n\nbogus = 3\n").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let e = RunConfig::parse("t_end_s = soon\n").unwrap_err();
        assert!(e.to_string().contains("line 1"), "{e}");
        let e = RunConfig::parse("method = rk4\n").unwrap_err();
        assert!(e.to_string().contains("unknown method"), "{e}");
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::parse("t_end_s = 60\n").unwrap();
        Overrides {
            t_end: Some(10.0),
            modes: Some((4, 2)),
            ..Default::default()
        }
        .apply(&mut cfg);
        assert_eq!(cfg.integrator.t_end, 10.0);
        assert_eq!(cfg.modes, ModalConfig { n_w: 4, n_theta: 2 });
    }

    #[test]
    fn invalid_values_are_rejected() {
        let cfg = RunConfig::parse("f_m = -1\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::parse("growth_threshold = 0.5\n").unwrap();
        assert!(cfg.validate().is_err());
    }
}
