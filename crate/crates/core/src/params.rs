//! Mechanical constants of the bridge and the quantities derived from them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, QuadratureGrid};

/// Physical constants of deck and cables, SI base units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanicalParams {
    /// Deck Young modulus [Pa].
    pub e: f64,
    /// Cable Young modulus [Pa].
    pub e_c: f64,
    /// Deck shear modulus [Pa].
    pub g_shear: f64,
    /// Main span [m].
    pub l: f64,
    /// Half width of the deck [m].
    pub ell: f64,
    /// Cable sag [m].
    pub f: f64,
    /// Bending moment of inertia [m^4].
    pub i: f64,
    /// Torsional constant [m^4].
    pub k: f64,
    /// Warping constant [m^6].
    pub j: f64,
    /// Cable cross-section area [m^2].
    pub a: f64,
    /// Deck mass per unit length [kg/m].
    pub m: f64,
    /// Gravitational acceleration [m/s^2].
    pub gravity: f64,
}

pub const DEFAULT_GRAVITY: f64 = 9.81;

/// Initial horizontal cable tension listed for the Tacoma Narrows data set [N].
pub const TABLE_TENSION_N: f64 = 45_413e3;
/// Initial cable length listed for the Tacoma Narrows data set [m].
pub const TABLE_CABLE_LENGTH_M: f64 = 868.815;

impl MechanicalParams {
    /// Tacoma Narrows Bridge data set.
    pub fn tacoma_narrows() -> Self {
        Self {
            e: 210_000e6,
            e_c: 185_000e6,
            g_shear: 81_000e6,
            l: 853.44,
            ell: 6.0,
            f: 70.71,
            i: 0.154,
            k: 6.07e-6,
            j: 5.44,
            a: 0.1228,
            m: 7198.0,
            gravity: DEFAULT_GRAVITY,
        }
    }

    fn fields(&self) -> [(&'static str, f64); 12] {
        [
            ("E", self.e),
            ("E_c", self.e_c),
            ("G", self.g_shear),
            ("L", self.l),
            ("ell", self.ell),
            ("f", self.f),
            ("I", self.i),
            ("K", self.k),
            ("J", self.j),
            ("A", self.a),
            ("M", self.m),
            ("g", self.gravity),
        ]
    }

    /// Lists every violated invariant; an empty list means the set is usable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, value) in self.fields() {
            if !(value.is_finite() && value > 0.0) {
                out.push(Violation {
                    field: name,
                    message: format!("{name} must be positive (got {value})"),
                });
            }
        }
        if self.l > 0.0 && self.ell >= self.l / 10.0 {
            out.push(Violation {
                field: "ell",
                message: format!(
                    "ell ≪ L required: ell must be below L/10 (ell = {}, L = {})",
                    self.ell, self.l
                ),
            });
        }
        if self.f >= self.l {
            out.push(Violation {
                field: "f",
                message: format!("sag f must be below span L (f = {}, L = {})", self.f, self.l),
            });
        }
        out
    }

    pub fn validated(self) -> Result<Self, ParamsError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(ParamsError::Invalid(violations))
        }
    }

    /// Derived constants, with the cable length integrated on the default grid.
    pub fn derive(&self) -> Result<DerivedParams, ParamsError> {
        self.derive_on(&QuadratureGrid::default_for_span(self.l))
    }

    pub fn derive_on(&self, grid: &QuadratureGrid) -> Result<DerivedParams, ParamsError> {
        let p = self.validated()?;
        let q = p.m * p.gravity / 2.0;
        let h = p.m * p.gravity * p.l * p.l / (16.0 * p.f);
        let end_slope = p.m * p.gravity * p.l / (4.0 * h);
        let xi_bar = (1.0 + end_slope * end_slope).sqrt();
        let partial = DerivedParams { q, h, l_c: p.l, xi_bar };
        let l_c = geometry::cable_length(grid, &partial, &p);
        Ok(DerivedParams { l_c, ..partial })
    }

    /// Mutable access to one of the sweepable parameters.
    /// SI values ordered as [`PARAM_KEYS`].
    pub fn to_slots(&self) -> [f64; 12] {
        [
            self.e,
            self.e_c,
            self.g_shear,
            self.l,
            self.ell,
            self.f,
            self.i,
            self.k,
            self.j,
            self.a,
            self.m,
            self.gravity,
        ]
    }

    pub fn field_mut(&mut self, name: SweepParam) -> &mut f64 {
        match name {
            SweepParam::Sag => &mut self.f,
            SweepParam::Inertia => &mut self.i,
            SweepParam::Torsion => &mut self.k,
            SweepParam::Warping => &mut self.j,
            SweepParam::Mass => &mut self.m,
            SweepParam::CableArea => &mut self.a,
        }
    }
}

impl Default for MechanicalParams {
    fn default() -> Self {
        Self::tacoma_narrows()
    }
}

/// Quantities that follow from [`MechanicalParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    /// Dead load per cable [N/m].
    pub q: f64,
    /// Horizontal cable tension [N].
    pub h: f64,
    /// Cable length at rest [m].
    pub l_c: f64,
    /// Supremum of the cable stretch factor over the span.
    pub xi_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("invalid parameters: {}", join(.0))]
    Invalid(Vec<Violation>),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("unknown parameter `{0}` (expected one of f, I, K, J, M, A)")]
    UnknownParam(String),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.message.as_str()).collect::<Vec<_>>().join("; ")
}

/// Parameters a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepParam {
    Sag,
    Inertia,
    Torsion,
    Warping,
    Mass,
    CableArea,
}

impl SweepParam {
    pub fn symbol(self) -> &'static str {
        match self {
            SweepParam::Sag => "f",
            SweepParam::Inertia => "I",
            SweepParam::Torsion => "K",
            SweepParam::Warping => "J",
            SweepParam::Mass => "M",
            SweepParam::CableArea => "A",
        }
    }
}

impl FromStr for SweepParam {
    type Err = ParamsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "f" => SweepParam::Sag,
            "I" => SweepParam::Inertia,
            "K" => SweepParam::Torsion,
            "J" => SweepParam::Warping,
            "M" => SweepParam::Mass,
            "A" => SweepParam::CableArea,
            other => return Err(ParamsError::UnknownParam(other.to_string())),
        })
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Config keys with the factor converting the file unit to SI.
pub const PARAM_KEYS: [(&str, f64); 12] = [
    ("E_MPa", 1e6),
    ("Ec_MPa", 1e6),
    ("G_MPa", 1e6),
    ("L_m", 1.0),
    ("ell_m", 1.0),
    ("f_m", 1.0),
    ("I_m4", 1.0),
    ("K_m4", 1.0),
    ("J_m6", 1.0),
    ("A_m2", 1.0),
    ("M_kg_per_m", 1.0),
    ("g_m_per_s2", 1.0),
];

/// Raw `key = value` pairs with the line they came from.
pub fn parse_key_values(text: &str) -> Result<Vec<(usize, String, String)>, ParamsError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ParamsError::Parse {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(ParamsError::Parse {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            });
        }
        if out.iter().any(|(_, k, _): &(usize, String, String)| k == key) {
            return Err(ParamsError::Parse {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
        out.push((line, key.to_string(), value.to_string()));
    }
    Ok(out)
}

/// Parses a parameter file holding exactly the keys of [`PARAM_KEYS`].
pub fn parse_params(text: &str) -> Result<MechanicalParams, ParamsError> {
    let pairs = parse_key_values(text)?;
    let mut values = [None; 12];
    for (line, key, value) in &pairs {
        let slot = PARAM_KEYS
            .iter()
            .position(|(k, _)| k == key)
            .ok_or_else(|| ParamsError::Parse {
                line: *line,
                message: format!("unknown key `{key}`"),
            })?;
        let v: f64 = value.parse().map_err(|_| ParamsError::Parse {
            line: *line,
            message: format!("`{key}`: cannot parse `{value}` as a number"),
        })?;
        values[slot] = Some(v * PARAM_KEYS[slot].1);
    }
    params_from_slots(&values)
}

/// Builds parameters from values ordered as [`PARAM_KEYS`], already in SI.
pub fn params_from_slots(values: &[Option<f64>; 12]) -> Result<MechanicalParams, ParamsError> {
    let get = |i: usize| values[i].ok_or(ParamsError::MissingKey(PARAM_KEYS[i].0));
    Ok(MechanicalParams {
        e: get(0)?,
        e_c: get(1)?,
        g_shear: get(2)?,
        l: get(3)?,
        ell: get(4)?,
        f: get(5)?,
        i: get(6)?,
        k: get(7)?,
        j: get(8)?,
        a: get(9)?,
        m: get(10)?,
        gravity: get(11)?,
    })
}

/// Inverse of [`parse_params`]; writes file units.
pub fn format_params(p: &MechanicalParams) -> String {
    PARAM_KEYS
        .iter()
        .zip(p.to_slots())
        .map(|((key, scale), v)| format!("{key} = {}\n", v / scale))
        .collect()
}
