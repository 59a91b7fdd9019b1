//! Scenario configuration: strict TOML parsing, range validation with
//! aggregated diagnostics, and a stable content hash that tags every output
//! artifact produced from the scenario.

use crate::geometry::{build_cell_geometry, CellGeometry};
use crate::kinematics::{KinematicsError, MicrostructureEvolution, RadiusLaw};
use nalgebra::{Point2, Vector2};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// Syntactic failure; the message carries the line/column from the parser.
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    /// All range violations collected in one pass.
    #[error("scenario validation failed:\n{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Kernel,
    Macro,
    Verify,
    Diagnostics,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Kernel => "kernel",
            Mode::Macro => "macro",
            Mode::Verify => "verify",
            Mode::Diagnostics => "diagnostics",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kernel" => Ok(Mode::Kernel),
            "macro" => Ok(Mode::Macro),
            "verify" => Ok(Mode::Verify),
            "diagnostics" => Ok(Mode::Diagnostics),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(default = "default_r0")]
    pub r0: f64,
    #[serde(default = "default_center")]
    pub center: [f64; 2],
    #[serde(default = "default_h_cell")]
    pub h_cell: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSection {
    /// One of "constant", "linear", "sinusoidal".
    #[serde(default = "default_family")]
    pub family: String,
    /// Rate (linear) or amplitude (sinusoidal).
    #[serde(default)]
    pub a: f64,
    /// Angular frequency for the sinusoidal family.
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Modulate the linear rate by sin(πx₁)sin(πx₂) across the macro domain.
    #[serde(default)]
    pub g: bool,
    /// Cut-off radius beyond which the deformation is the identity.
    #[serde(default = "default_cutoff")]
    pub r_c: f64,
    /// Final time.
    #[serde(default = "default_t_final")]
    pub t_final: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    #[serde(default = "default_mu")]
    pub mu: f64,
    /// Constant body force.
    #[serde(default)]
    pub f: [f64; 2],
    /// Boundary pressure: "linear_head" (1 − x₁) or "zero".
    #[serde(default = "default_p_b")]
    pub p_b: String,
    /// Initial micro velocity; only "zero" is configurable here.
    #[serde(default = "default_v0")]
    pub v0_init: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridsSection {
    #[serde(default = "default_n_time")]
    pub n_time: usize,
    #[serde(default = "default_macro_n")]
    pub macro_n: usize,
    #[serde(default = "default_eps_list")]
    pub eps_list: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesSection {
    #[serde(default = "default_tol_linear")]
    pub linear: f64,
    #[serde(default = "default_tol_quadrature")]
    pub quadrature: f64,
}

fn default_r0() -> f64 {
    0.25
}
fn default_center() -> [f64; 2] {
    [0.5, 0.5]
}
fn default_h_cell() -> f64 {
    0.05
}
fn default_family() -> String {
    "constant".into()
}
fn default_omega() -> f64 {
    std::f64::consts::PI
}
fn default_cutoff() -> f64 {
    0.4
}
fn default_t_final() -> f64 {
    1.0
}
fn default_mu() -> f64 {
    1.0
}
fn default_p_b() -> String {
    "linear_head".into()
}
fn default_v0() -> String {
    "zero".into()
}
fn default_n_time() -> usize {
    8
}
fn default_macro_n() -> usize {
    8
}
fn default_eps_list() -> Vec<f64> {
    vec![0.5, 0.25, 0.125]
}
fn default_tol_linear() -> f64 {
    1e-10
}
fn default_tol_quadrature() -> f64 {
    1e-12
}

fn default_geometry() -> GeometrySection {
    GeometrySection { r0: default_r0(), center: default_center(), h_cell: default_h_cell() }
}
fn default_evolution() -> EvolutionSection {
    EvolutionSection {
        family: default_family(),
        a: 0.0,
        omega: default_omega(),
        g: false,
        r_c: default_cutoff(),
        t_final: default_t_final(),
    }
}
fn default_physics() -> PhysicsSection {
    PhysicsSection { mu: default_mu(), f: [0.0; 2], p_b: default_p_b(), v0_init: default_v0() }
}
fn default_grids() -> GridsSection {
    GridsSection {
        n_time: default_n_time(),
        macro_n: default_macro_n(),
        eps_list: default_eps_list(),
    }
}
fn default_tolerances() -> TolerancesSection {
    TolerancesSection { linear: default_tol_linear(), quadrature: default_tol_quadrature() }
}
fn default_mode() -> Mode {
    Mode::Verify
}

/// A fully validated run configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_geometry")]
    pub geometry: GeometrySection,
    #[serde(default = "default_evolution")]
    pub evolution: EvolutionSection,
    #[serde(default = "default_physics")]
    pub physics: PhysicsSection,
    #[serde(default = "default_grids")]
    pub grids: GridsSection,
    #[serde(default = "default_tolerances")]
    pub tolerances: TolerancesSection,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            geometry: default_geometry(),
            evolution: default_evolution(),
            physics: default_physics(),
            grids: default_grids(),
            tolerances: default_tolerances(),
            mode: default_mode(),
            seed: 0,
        }
    }
}

impl Scenario {
    /// Radius law encoded by the evolution section.
    pub fn radius_law(&self) -> Result<RadiusLaw, ScenarioError> {
        match self.evolution.family.as_str() {
            "constant" => Ok(RadiusLaw::Constant),
            "linear" if self.evolution.g => Ok(RadiusLaw::MacroModulated { rate: self.evolution.a }),
            "linear" => Ok(RadiusLaw::Linear { rate: self.evolution.a }),
            "sinusoidal" => Ok(RadiusLaw::Sinusoidal {
                amplitude: self.evolution.a,
                omega: self.evolution.omega,
            }),
            other => Err(ScenarioError::Validation(vec![format!(
                "evolution.family: unknown family '{other}'"
            )])),
        }
    }

    pub fn cell_geometry(&self) -> Result<CellGeometry, ScenarioError> {
        build_cell_geometry(
            self.geometry.r0,
            Point2::new(self.geometry.center[0], self.geometry.center[1]),
        )
        .map_err(|e| ScenarioError::Validation(vec![format!("geometry: {e}")]))
    }

    /// Validated evolution object; runs the kinematic admissibility checks.
    pub fn evolution(&self) -> Result<MicrostructureEvolution, ScenarioError> {
        let geom = self.cell_geometry()?;
        let law = self.radius_law()?;
        Ok(MicrostructureEvolution::new(geom, law, self.evolution.r_c, self.evolution.t_final)?)
    }

    pub fn force(&self) -> Vector2<f64> {
        Vector2::new(self.physics.f[0], self.physics.f[1])
    }

    /// Boundary pressure trace.
    pub fn boundary_pressure(&self) -> impl Fn(&Point2<f64>) -> f64 {
        let linear = self.physics.p_b == "linear_head";
        move |x: &Point2<f64>| if linear { 1.0 - x.x } else { 0.0 }
    }

    /// Collect every range violation; empty means valid.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let g = &self.geometry;
        if !(g.r0 > 0.0 && g.r0 < 0.5) {
            v.push(format!("geometry.r0: {} outside (0, 0.5)", g.r0));
        }
        if !(g.center[0] > 0.0 && g.center[0] < 1.0 && g.center[1] > 0.0 && g.center[1] < 1.0) {
            v.push(format!("geometry.center: ({}, {}) outside (0,1)²", g.center[0], g.center[1]));
        }
        if !(g.h_cell > 0.005 && g.h_cell <= 0.5) {
            v.push(format!("geometry.h_cell: {} outside (0.005, 0.5]", g.h_cell));
        }
        let e = &self.evolution;
        if !["constant", "linear", "sinusoidal"].contains(&e.family.as_str()) {
            v.push(format!("evolution.family: unknown family '{}'", e.family));
        }
        if e.g && e.family != "linear" {
            v.push("evolution.g: macro modulation requires the linear family".into());
        }
        if !(e.r_c > g.r0 && e.r_c < 0.5) {
            v.push(format!("evolution.r_c: {} outside (r0, 0.5)", e.r_c));
        }
        if !(e.t_final > 0.0 && e.t_final <= 16.0) {
            v.push(format!("evolution.t_final: {} outside (0, 16]", e.t_final));
        }
        if !(e.omega.is_finite() && e.a.is_finite()) {
            v.push("evolution.a/omega: non-finite".into());
        }
        let p = &self.physics;
        if !(p.mu > 0.0) {
            v.push(format!("physics.mu: {} not positive", p.mu));
        }
        if !["linear_head", "zero"].contains(&p.p_b.as_str()) {
            v.push(format!("physics.p_b: unknown trace '{}'", p.p_b));
        }
        if p.v0_init != "zero" {
            v.push(format!("physics.v0_init: only 'zero' is configurable, got '{}'", p.v0_init));
        }
        if !p.f.iter().all(|c| c.is_finite()) {
            v.push("physics.f: non-finite component".into());
        }
        let gr = &self.grids;
        if !(1..=1024).contains(&gr.n_time) {
            v.push(format!("grids.n_time: {} outside 1..=1024", gr.n_time));
        }
        if !(2..=64).contains(&gr.macro_n) {
            v.push(format!("grids.macro_n: {} outside 2..=64", gr.macro_n));
        }
        if gr.eps_list.is_empty() {
            v.push("grids.eps_list: empty".into());
        }
        for &eps in &gr.eps_list {
            let n = 1.0 / eps;
            if !(eps > 0.0 && eps <= 0.5 && (n - n.round()).abs() < 1e-9) {
                v.push(format!("grids.eps_list: {eps} is not 1/n for an integer n ≥ 2"));
            }
        }
        let t = &self.tolerances;
        if !(t.linear > 0.0 && t.linear < 1e-2) {
            v.push(format!("tolerances.linear: {} outside (0, 1e-2)", t.linear));
        }
        if !(t.quadrature > 0.0 && t.quadrature < 1e-2) {
            v.push(format!("tolerances.quadrature: {} outside (0, 1e-2)", t.quadrature));
        }
        v
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Validation(v))
        }
    }

    /// Stable digest of the canonicalised input fields (shortest round-trip
    /// float formatting, fixed key order). The mode is excluded: the same
    /// physical scenario produces interchangeable artifacts across modes.
    pub fn hash(&self) -> String {
        let g = &self.geometry;
        let e = &self.evolution;
        let p = &self.physics;
        let gr = &self.grids;
        let t = &self.tolerances;
        let eps: Vec<String> = gr.eps_list.iter().map(|x| format!("{x}")).collect();
        let canon = format!(
            "r0={};center={},{};h_cell={};family={};a={};omega={};g={};r_c={};t_final={};\
             mu={};f={},{};p_b={};v0_init={};n_time={};macro_n={};eps={};\
             tol_linear={};tol_quadrature={};seed={}",
            g.r0,
            g.center[0],
            g.center[1],
            g.h_cell,
            e.family,
            e.a,
            e.omega,
            e.g,
            e.r_c,
            e.t_final,
            p.mu,
            p.f[0],
            p.f[1],
            p.p_b,
            p.v0_init,
            gr.n_time,
            gr.macro_n,
            eps.join(","),
            t.linear,
            t.quadrature,
            self.seed,
        );
        let mut hasher = Sha256::new();
        hasher.update(canon.as_bytes());
        let digest = hasher.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Parse and validate a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario_str(&text)
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = toml::from_str(text)?;
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_fills_documented_defaults() {
        let s = parse_scenario_str("").unwrap();
        assert_eq!(s.geometry.r0, 0.25);
        assert_eq!(s.geometry.center, [0.5, 0.5]);
        assert_eq!(s.physics.mu, 1.0);
        assert_eq!(s.physics.p_b, "linear_head");
        assert_eq!(s.grids.n_time, 8);
        assert_eq!(s.grids.eps_list, vec![0.5, 0.25, 0.125]);
        assert_eq!(s.mode, Mode::Verify);
        assert_eq!(s.radius_law().unwrap(), RadiusLaw::Constant);
        let pb = s.boundary_pressure();
        assert_eq!(pb(&Point2::new(0.25, 0.9)), 0.75);
    }

    #[test]
    fn out_of_range_radius_is_named_in_the_error() {
        let err = parse_scenario_str("[geometry]\nr0 = 0.6\n").unwrap_err();
        match err {
            ScenarioError::Validation(v) => {
                assert!(v.iter().any(|m| m.contains("geometry.r0")), "{v:?}");
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse_scenario_str("[geometry]\nradius = 0.25\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)), "{err}");
    }

    #[test]
    fn multiple_violations_are_aggregated() {
        let text = "[geometry]\nr0 = 0.7\n[physics]\nmu = -1.0\n[grids]\nn_time = 0\n";
        match parse_scenario_str(text).unwrap_err() {
            ScenarioError::Validation(v) => assert!(v.len() >= 3, "{v:?}"),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = parse_scenario_str("").unwrap();
        let b = parse_scenario_str("").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = parse_scenario_str("[physics]\nmu = 2.0\n").unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn families_map_to_radius_laws() {
        let lin = parse_scenario_str("[evolution]\nfamily = \"linear\"\na = -0.05\n").unwrap();
        assert_eq!(lin.radius_law().unwrap(), RadiusLaw::Linear { rate: -0.05 });
        let modulated =
            parse_scenario_str("[evolution]\nfamily = \"linear\"\na = 0.05\ng = true\n").unwrap();
        assert_eq!(modulated.radius_law().unwrap(), RadiusLaw::MacroModulated { rate: 0.05 });
        let sin = parse_scenario_str(
            "[evolution]\nfamily = \"sinusoidal\"\na = 0.05\nomega = 3.0\n",
        )
        .unwrap();
        assert_eq!(
            sin.radius_law().unwrap(),
            RadiusLaw::Sinusoidal { amplitude: 0.05, omega: 3.0 }
        );
        // Admissibility runs end to end for a shrinking disk.
        lin.evolution().unwrap();
    }
}
