//! At-rest cable shape and the nonlocal cable functionals, evaluated on a
//! fixed composite Gauss-Legendre grid.

use std::f64::consts::PI;

use thiserror::Error;

use crate::params::{DerivedParams, MechanicalParams};

pub const DEFAULT_PANELS: usize = 64;
pub const DEFAULT_NODES_PER_PANEL: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("position x = {x} outside [0, {span}]")]
    OutOfSpan { x: f64, span: f64 },
    #[error("quadrature needs at least one panel and one node per panel")]
    EmptyGrid,
}

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite quadrature over (0, L) with equal panels.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub panel_count: usize,
    pub nodes_per_panel: usize,
    pub span: f64,
}

impl QuadratureGrid {
    pub fn new(span: f64, panel_count: usize, nodes_per_panel: usize) -> Result<Self, GeometryError> {
        if panel_count == 0 || nodes_per_panel == 0 {
            return Err(GeometryError::EmptyGrid);
        }
        let (ref_nodes, ref_weights) = gauss_legendre(nodes_per_panel);
        let width = span / panel_count as f64;
        let mut nodes = Vec::with_capacity(panel_count * nodes_per_panel);
        let mut weights = Vec::with_capacity(panel_count * nodes_per_panel);
        for panel in 0..panel_count {
            let centre = (panel as f64 + 0.5) * width;
            for (z, w) in ref_nodes.iter().zip(&ref_weights) {
                nodes.push(centre + 0.5 * width * z);
                weights.push(0.5 * width * w);
            }
        }
        Ok(Self {
            nodes,
            weights,
            panel_count,
            nodes_per_panel,
            span,
        })
    }

    pub fn default_for_span(span: f64) -> Self {
        Self::new(span, DEFAULT_PANELS, DEFAULT_NODES_PER_PANEL).expect("non-empty default grid")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn integrate_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, w)| w * f(x)).sum()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> FieldSamples {
        FieldSamples(self.nodes.iter().map(|&x| f(x)).collect())
    }
}

/// Values of a spatial function at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSamples(pub Vec<f64>);

impl FieldSamples {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_span(x: f64, p: &MechanicalParams) -> Result<(), GeometryError> {
    if (0.0..=p.l).contains(&x) {
        Ok(())
    } else {
        Err(GeometryError::OutOfSpan { x, span: p.l })
    }
}

/// Default tower height above the deck: the sag plus two metres.
pub fn default_tower_height(p: &MechanicalParams) -> f64 {
    p.f + 2.0
}

/// Height of the cable at rest. Towers of height `y0` hold the cable ends at `-y0`.
pub fn cable_shape(x: f64, dp: &DerivedParams, p: &MechanicalParams, y0: f64) -> Result<f64, GeometryError> {
    check_span(x, p)?;
    let c = p.m * p.gravity / (4.0 * dp.h);
    Ok(-c * x * x + c * p.l * x - y0)
}

pub fn cable_slope(x: f64, dp: &DerivedParams, p: &MechanicalParams) -> Result<f64, GeometryError> {
    check_span(x, p)?;
    Ok(slope_unchecked(x, dp, p))
}

/// A cable without tension is taken as flat, which is how the cables are
/// switched off.
#[inline]
fn slope_unchecked(x: f64, dp: &DerivedParams, p: &MechanicalParams) -> f64 {
    if dp.h == 0.0 {
        return 0.0;
    }
    p.m * p.gravity / (2.0 * dp.h) * (0.5 * p.l - x)
}

/// Stretch factor `sqrt(1 + y'^2)` of the cable at rest.
pub fn xi(x: f64, dp: &DerivedParams, p: &MechanicalParams) -> Result<f64, GeometryError> {
    let s = cable_slope(x, dp, p)?;
    Ok((1.0 + s * s).sqrt())
}

/// Cable length at rest by quadrature of the stretch factor.
pub fn cable_length(grid: &QuadratureGrid, dp: &DerivedParams, p: &MechanicalParams) -> f64 {
    grid.integrate_fn(|x| {
        let s = slope_unchecked(x, dp, p);
        (1.0 + s * s).sqrt()
    })
}

/// Rest-shape samples that every nonlocal evaluation needs.
#[derive(Debug, Clone)]
pub struct CableProfile {
    pub grid: QuadratureGrid,
    /// y' at the nodes.
    pub slope: Vec<f64>,
    /// sqrt(1 + y'^2) at the nodes.
    pub xi: Vec<f64>,
    pub rest_length: f64,
}

impl CableProfile {
    pub fn new(grid: QuadratureGrid, dp: &DerivedParams, p: &MechanicalParams) -> Self {
        let slope: Vec<f64> = grid.nodes.iter().map(|&x| slope_unchecked(x, dp, p)).collect();
        let xi = slope.iter().map(|s| (1.0 + s * s).sqrt()).collect();
        Self {
            grid,
            slope,
            xi,
            rest_length: dp.l_c,
        }
    }

    /// Length increment of a cable displaced by `u`, given `u_x` at the nodes.
    pub fn gamma(&self, du: &[f64]) -> f64 {
        debug_assert_eq!(du.len(), self.grid.len());
        du.iter()
            .zip(&self.grid.weights)
            .zip(self.slope.iter().zip(&self.xi))
            .fold(0.0, |acc, ((d, w), (s, xi))| acc + w * stretch_increment(*d, *s, *xi))
    }

    /// Unit tangent slope `(u + y)_x / sqrt(1 + (u + y)_x^2)` at the nodes.
    pub fn chi(&self, du: &[f64]) -> FieldSamples {
        FieldSamples(
            du.iter()
                .zip(&self.slope)
                .map(|(d, s)| {
                    let t = d + s;
                    t / (1.0 + t * t).sqrt()
                })
                .collect(),
        )
    }
}

/// `sqrt(1 + (d + s)^2) - xi` without cancellation for small `d`.
#[inline]
pub(crate) fn stretch_increment(d: f64, s: f64, xi: f64) -> f64 {
    let t = d + s;
    let r = (1.0 + t * t).sqrt();
    d * (d + 2.0 * s) / (r + xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::MechanicalParams;

    fn setup() -> (MechanicalParams, DerivedParams, CableProfile) {
        let p = MechanicalParams::tacoma_narrows();
        let d = p.derive().unwrap();
        let prof = CableProfile::new(QuadratureGrid::default_for_span(p.l), &d, &p);
        (p, d, prof)
    }

    // Closed-form arc length of a cable with slope c + a(L/2 - x).
    fn arc_oracle(a: f64, c: f64, l: f64) -> f64 {
        let prim = |s: f64| 0.5 * (s * (1.0 + s * s).sqrt() + s.asinh());
        (prim(c + 0.5 * a * l) - prim(c - 0.5 * a * l)) / a
    }

    #[test]
    fn gauss_legendre_small_rules() {
        let (x, w) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
        let (x, w) = gauss_legendre(3);
        assert_eq!(x[1], 0.0);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-15);
        assert!((x[2] - 0.6f64.sqrt()).abs() < 1e-15);
        let (x, w) = gauss_legendre(1);
        assert_eq!((x[0], w[0]), (0.0, 2.0));
    }

    #[test]
    fn grid_weights_and_order() {
        let g = QuadratureGrid::new(853.44, 64, 4).unwrap();
        let total: f64 = g.weights.iter().sum();
        assert!((total - 853.44).abs() / 853.44 < 1e-12);
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(g.nodes[0] > 0.0 && *g.nodes.last().unwrap() < 853.44);
        // degree 7 exact per panel
        let one_panel = QuadratureGrid::new(2.0, 1, 4).unwrap();
        let got = one_panel.integrate_fn(|x| x.powi(7));
        assert!((got - 2f64.powi(8) / 8.0).abs() < 1e-12);
        assert_eq!(QuadratureGrid::new(1.0, 0, 4), Err(GeometryError::EmptyGrid));
    }

    #[test]
    fn shape_points() {
        let (p, d, _) = setup();
        let y0 = default_tower_height(&p);
        assert!((cable_shape(0.0, &d, &p, y0).unwrap() + y0).abs() < 1e-12);
        assert!((cable_shape(p.l, &d, &p, y0).unwrap() + y0).abs() < 1e-9);
        assert!((cable_shape(p.l / 2.0, &d, &p, y0).unwrap() + y0 - p.f).abs() < 1e-10);
        let quarter = cable_shape(p.l / 4.0, &d, &p, y0).unwrap() + y0;
        assert!((quarter - 53.0325).abs() < 1e-9);
        assert!(cable_shape(-1.0, &d, &p, y0).is_err());
        assert!(matches!(
            cable_shape(p.l + 1.0, &d, &p, y0),
            Err(GeometryError::OutOfSpan { .. })
        ));
    }

    #[test]
    fn slope_and_xi_points() {
        let (p, d, _) = setup();
        let end = 4.0 * p.f / p.l;
        assert_eq!(cable_slope(p.l / 2.0, &d, &p).unwrap(), 0.0);
        assert!((cable_slope(0.0, &d, &p).unwrap() - end).abs() < 1e-14);
        assert!((cable_slope(p.l, &d, &p).unwrap() + end).abs() < 1e-14);
        assert!((end - 0.33141).abs() < 1e-5);
        assert_eq!(xi(p.l / 2.0, &d, &p).unwrap(), 1.0);
        assert!((xi(0.0, &d, &p).unwrap() - 1.05349).abs() < 1e-5);
        assert!(xi(2.0 * p.l, &d, &p).is_err());
    }

    #[test]
    fn xi_stays_below_supremum() {
        let (p, d, prof) = setup();
        let max = prof.xi.iter().cloned().fold(0.0, f64::max);
        assert!(max < d.xi_bar);
        for n in [10, 101, 1000] {
            for i in 1..n {
                let x = p.l * i as f64 / n as f64;
                let v = xi(x, &d, &p).unwrap();
                assert!((1.0..d.xi_bar).contains(&v));
            }
        }
    }

    #[test]
    fn cable_length_against_closed_form() {
        let (p, d, prof) = setup();
        let a = 8.0 * p.f / (p.l * p.l);
        let exact = arc_oracle(a, 0.0, p.l);
        assert!((exact - 868.814_950_76).abs() < 1e-6);
        assert!((prof.rest_length - exact).abs() / exact < 1e-10);
        assert!((d.l_c - 868.815).abs() / 868.815 < 5e-4);
    }

    #[test]
    fn cable_length_converges_with_rule_order() {
        let (p, d, _) = setup();
        let a = 8.0 * p.f / (p.l * p.l);
        let exact = arc_oracle(a, 0.0, p.l);
        // two-node rule: error O(h^4)
        let errs: Vec<f64> = [2, 4, 8]
            .iter()
            .map(|&n| (cable_length(&QuadratureGrid::new(p.l, n, 2).unwrap(), &d, &p) - exact).abs())
            .collect();
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!((rate - 4.0).abs() < 0.3, "rate {rate}");
        }
    }

    #[test]
    fn straight_cable_limit() {
        let mut p = MechanicalParams::tacoma_narrows();
        p.f = 1e-6;
        let d = p.derive().unwrap();
        assert!((d.l_c - p.l).abs() / p.l < 1e-12);
    }

    #[test]
    fn gamma_rest_is_zero() {
        let (_, _, prof) = setup();
        assert_eq!(prof.gamma(&vec![0.0; prof.grid.len()]), 0.0);
    }

    #[test]
    fn gamma_constant_slope_offset() {
        let (p, _, prof) = setup();
        let a = 8.0 * p.f / (p.l * p.l);
        for c in [-0.2, -1e-3, 1e-4, 0.05, 0.3] {
            let got = prof.gamma(&vec![c; prof.grid.len()]);
            let shifted = arc_oracle(a, c, p.l);
            let exact = shifted - arc_oracle(a, 0.0, p.l);
            // the oracle difference loses digits for tiny offsets, so compare
            // against the arc length itself
            assert!((got - exact).abs() <= 1e-10 * shifted, "c={c}: {got} vs {exact}");
            if c.abs() >= 0.05 {
                assert!((got - exact).abs() <= 1e-10 * exact.abs());
            }
        }
    }

    #[test]
    fn gamma_mirror_symmetry() {
        let (_, _, prof) = setup();
        let n = prof.grid.len();
        let du: Vec<f64> = (0..n).map(|i| 0.01 * (i as f64 * 0.37).sin() + 0.002).collect();
        let mirrored: Vec<f64> = (0..n).map(|i| -du[n - 1 - i]).collect();
        let a = prof.gamma(&du);
        let b = prof.gamma(&mirrored);
        assert!((a - b).abs() <= 1e-13 * a.abs());
    }

    #[test]
    fn chi_values() {
        let (_, _, prof) = setup();
        let n = prof.grid.len();
        let rest = prof.chi(&vec![0.0; n]);
        // ends of the grid sit near x = 0 and x = L
        for i in 0..n {
            assert!((prof.xi[i] * rest.0[i] - prof.slope[i]).abs() < 1e-14);
        }
        let big = prof.chi(&vec![1e3; n]);
        assert!(big.0.iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn chi_at_end_of_span() {
        let p = MechanicalParams::tacoma_narrows();
        let d = p.derive().unwrap();
        let grid = QuadratureGrid {
            nodes: vec![0.0, p.l / 2.0],
            weights: vec![0.5 * p.l, 0.5 * p.l],
            panel_count: 1,
            nodes_per_panel: 2,
            span: p.l,
        };
        let prof = CableProfile::new(grid, &d, &p);
        let c = prof.chi(&[0.0, 0.0]);
        assert!((c.0[0] - 0.31458).abs() < 1e-5);
        assert_eq!(c.0[1], 0.0);
    }
}
