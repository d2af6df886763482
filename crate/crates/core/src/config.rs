//! Scenario files (TOML). The grammar is documented in the README; unknown
//! keys are rejected and every section is validated before a run starts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::damage::{check_thresholds, DamageModel};
use crate::error::{Error, Result};
use crate::mechanics::{MechMaterial, PlaneMode, DEFAULT_MAX_ITERATIONS, DEFAULT_STABILIZATION};
use crate::mesh::Mesh;
use crate::output::Field;
use crate::sparse::SolverKind;
use crate::thermal::ThermalMaterial;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub mesh: MeshSpec,
    pub time: TimeSpec,
    pub thermal: ThermalSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanics: Option<MechanicsSpec>,
    pub peridynamics: PeridynamicsSpec,
    #[serde(default)]
    pub damage: DamageSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    /// Rectangles removed from the grid; an element is dropped when its
    /// centroid lies inside one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cutouts: Vec<Rect>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Rect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] > self.x[0] && p[0] < self.x[1] && p[1] > self.y[0] && p[1] < self.y[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub dt: f64,
    pub steps: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_theta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSpec {
    pub density: f64,
    pub specific_heat: f64,
    pub conductivity: f64,
    #[serde(default)]
    pub heat_source: f64,
    #[serde(default)]
    pub initial_temperature: f64,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dirichlet: Vec<TemperatureBc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flux: Vec<FluxBc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub convection: Vec<ConvectionBc>,
}

impl ThermalSpec {
    pub fn material(&self) -> ThermalMaterial {
        ThermalMaterial {
            density: self.density,
            specific_heat: self.specific_heat,
            conductivity: self.conductivity,
            heat_source: self.heat_source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureBc {
    pub boundary: String,
    pub value: f64,
    /// Ramp linearly from the initial temperature to `value` over the run.
    #[serde(default)]
    pub ramp: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxBc {
    pub boundary: String,
    /// Outward flux density, W/m².
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvectionBc {
    pub boundary: String,
    pub h: f64,
    pub ambient: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    X,
    Y,
}

impl Component {
    pub fn index(self) -> usize {
        match self {
            Component::X => 0,
            Component::Y => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanicsSpec {
    pub youngs_modulus: f64,
    pub poissons_ratio: f64,
    pub thermal_expansion: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fracture_energy: Option<f64>,
    pub plane: PlaneMode,
    /// Stabilization stiffness relative to Young's modulus.
    #[serde(default = "default_stabilization")]
    pub stabilization: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default)]
    pub body_force: [f64; 2],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub displacement: Vec<DisplacementBc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub traction: Vec<TractionBc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pin: Vec<PinBc>,
}

fn default_stabilization() -> f64 {
    DEFAULT_STABILIZATION
}

fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

impl MechanicsSpec {
    pub fn material(&self) -> MechMaterial {
        MechMaterial {
            youngs_modulus: self.youngs_modulus,
            poissons_ratio: self.poissons_ratio,
            thermal_expansion: self.thermal_expansion,
            fracture_energy: self.fracture_energy,
            plane: self.plane,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplacementBc {
    pub boundary: String,
    pub component: Component,
    pub value: f64,
    /// Ramp linearly from zero to `value` over the run.
    #[serde(default)]
    pub ramp: bool,
    /// Also prescribe the nodes of this many element layers behind the edge.
    /// Edge nodes alone act on the material points only through the
    /// stabilization, so grips and walls that must carry load need a layer
    /// about one horizon deep.
    #[serde(default)]
    pub layers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TractionBc {
    pub boundary: String,
    /// N/m² per unit thickness.
    pub value: [f64; 2],
    #[serde(default)]
    pub ramp: bool,
}

/// Zero displacement at the node nearest to `point`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinBc {
    pub point: [f64; 2],
    pub components: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeridynamicsSpec {
    /// δ / Δx
    pub horizon_ratio: f64,
    /// δ / l for the exponential micromodulus.
    #[serde(default = "default_length_ratio")]
    pub length_ratio: f64,
    /// Overrides the stretch derived from the fracture energy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critical_stretch: Option<f64>,
    /// Bonds may only fail when both points lie inside one of these
    /// rectangles; the rest of the body stays elastic. Empty means
    /// everywhere.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fracture_regions: Vec<Rect>,
}

fn default_length_ratio() -> f64 {
    3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Tensor,
    Classical,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DamageSpec {
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub precracks: Vec<Segment>,
}

impl DamageSpec {
    pub fn model(&self) -> Result<DamageModel> {
        match self.model {
            ModelKind::Tensor => Ok(DamageModel::Tensor),
            ModelKind::Classical => {
                let (Some(c1), Some(c2)) = (self.c1, self.c2) else {
                    return Err(Error::config("damage.c1 and damage.c2 are required by the classical model"));
                };
                check_thresholds(c1, c2)?;
                Ok(DamageModel::Classical { c1, c2 })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start: [f64; 2],
    pub end: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Write a VTK frame every this many steps; 0 writes only the last step.
    #[serde(default)]
    pub frame_every: usize,
    #[serde(default = "default_fields")]
    pub fields: Vec<Field>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeSpec>,
}

fn default_fields() -> Vec<Field> {
    Field::ALL.to_vec()
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            frame_every: 0,
            fields: default_fields(),
            probes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub name: String,
    pub point: [f64; 2],
    pub field: Field,
}

impl ScenarioConfig {
    /// Parses and validates a scenario; syntax errors carry line and column.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Canonical TOML form; parsing it gives back an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario configs are always representable in TOML")
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        let m = &self.mesh;
        if m.cutouts.is_empty() {
            return Mesh::structured(m.nx, m.ny, m.lx, m.ly);
        }
        let (dx, dy) = (m.lx / m.nx as f64, m.ly / m.ny as f64);
        Mesh::masked(m.nx, m.ny, m.lx, m.ly, |i, j| {
            let c = [(i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy];
            !m.cutouts.iter().any(|r| r.contains(c))
        })
    }

    /// Checks everything that can be checked without building the model.
    /// Returns warnings for tolerated mismatches.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        let t = &self.time;
        if !(t.dt > 0.0 && t.dt.is_finite()) {
            return Err(Error::config(format!("time.dt must be positive (got {})", t.dt)));
        }
        if t.steps == 0 {
            return Err(Error::config("time.steps must be at least 1"));
        }
        if !(0.0..=1.0).contains(&t.theta) {
            return Err(Error::config(format!("time.theta must lie in [0, 1] (got {})", t.theta)));
        }
        if t.theta < 0.5 {
            warnings.push(format!("time.theta = {} is only conditionally stable", t.theta));
        }
        self.thermal.material().validate()?;
        for c in &self.thermal.convection {
            if !(c.h >= 0.0) {
                return Err(Error::config(format!("convection h must be non-negative on '{}'", c.boundary)));
            }
        }
        let pd = &self.peridynamics;
        if !(pd.horizon_ratio > 0.0 && pd.length_ratio > 0.0) {
            return Err(Error::config("peridynamics.horizon_ratio and length_ratio must be positive"));
        }
        for r in self.mesh.cutouts.iter().chain(&pd.fracture_regions) {
            if !(r.x[0] < r.x[1] && r.y[0] < r.y[1]) {
                return Err(Error::config(format!(
                    "rectangle x = {:?}, y = {:?} must have increasing bounds",
                    r.x, r.y
                )));
            }
        }
        if let Some(s) = pd.critical_stretch {
            if !(s > 0.0) {
                return Err(Error::config("peridynamics.critical_stretch must be positive"));
            }
        }
        self.damage.model()?;
        for s in &self.damage.precracks {
            if s.start == s.end {
                return Err(Error::config("precrack segments must have non-zero length"));
            }
        }
        if let Some(m) = &self.mechanics {
            warnings.extend(m.material().validate()?);
            if !(m.stabilization >= 0.0) {
                return Err(Error::config("mechanics.stabilization must be non-negative"));
            }
            if m.max_iterations == 0 {
                return Err(Error::config("mechanics.max_iterations must be at least 1"));
            }
        }
        let mut names = std::collections::BTreeSet::new();
        for p in &self.output.probes {
            if !names.insert(p.name.as_str()) {
                return Err(Error::config(format!("duplicate probe name '{}'", p.name)));
            }
        }
        let mesh = &self.mesh;
        if mesh.nx == 0 || mesh.ny == 0 || !(mesh.lx > 0.0 && mesh.ly > 0.0) {
            return Err(Error::config("mesh needs nx, ny >= 1 and positive lx, ly"));
        }
        Ok(warnings)
    }
}

/// Scenario files shipped with the library.
pub const SCENARIOS: &[(&str, &str)] = &[
    ("timoshenko_plate", include_str!("../scenarios/timoshenko_plate.toml")),
    ("insulation_cracks", include_str!("../scenarios/insulation_cracks.toml")),
    ("insulation_cracks_classical", include_str!("../scenarios/insulation_cracks_classical.toml")),
    ("cruciform", include_str!("../scenarios/cruciform.toml")),
    ("quench_ceramic_300", include_str!("../scenarios/quench_ceramic_300.toml")),
    ("quench_ceramic_350", include_str!("../scenarios/quench_ceramic_350.toml")),
    ("quench_ceramic_400", include_str!("../scenarios/quench_ceramic_400.toml")),
    ("quench_ceramic_500", include_str!("../scenarios/quench_ceramic_500.toml")),
    ("quench_ceramic_600", include_str!("../scenarios/quench_ceramic_600.toml")),
    ("quench_coarse", include_str!("../scenarios/quench_coarse.toml")),
];

/// Looks up a shipped scenario by name.
pub fn builtin(name: &str) -> Option<Result<ScenarioConfig>> {
    SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ScenarioConfig::from_toml(text))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_shipped_scenario_parses_and_round_trips() {
        for (name, text) in SCENARIOS {
            let c = ScenarioConfig::from_toml(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(&c.name, name);
            let again = ScenarioConfig::from_toml(&c.to_toml()).unwrap();
            assert_eq!(c, again, "{name}");
        }
    }

    #[test]
    fn plate_scenario_uses_table_values() {
        let c = builtin("timoshenko_plate").unwrap().unwrap();
        let m = c.mechanics.as_ref().unwrap();
        assert_eq!((m.youngs_modulus, m.poissons_ratio, m.thermal_expansion), (1.0, 0.25, 0.016));
        assert_eq!(m.plane, PlaneMode::PlaneStrain);
        assert_eq!((c.mesh.nx, c.mesh.ny, c.mesh.lx, c.mesh.ly), (100, 100, 1.0, 1.0));
        assert_eq!((c.thermal.conductivity, c.thermal.specific_heat), (1.0, 1.0));
    }

    #[test]
    fn quench_scenario_uses_table_values() {
        let c = builtin("quench_ceramic_300").unwrap().unwrap();
        assert_eq!(c.thermal.convection[0].h, 65_000.0);
        assert_eq!(c.thermal.initial_temperature, 300.0);
        let m = c.mechanics.as_ref().unwrap();
        assert_eq!((m.youngs_modulus, m.fracture_energy), (370e9, Some(42.47)));
        let hs: Vec<f64> = ["350", "400", "500", "600"]
            .iter()
            .map(|t| builtin(&format!("quench_ceramic_{t}")).unwrap().unwrap().thermal.convection[0].h)
            .collect();
        assert_eq!(hs, [90_000.0, 82_000.0, 70_000.0, 60_000.0]);
    }

    fn minimal() -> String {
        r#"
name = "t"
[mesh]
nx = 2
ny = 2
lx = 1.0
ly = 1.0
[time]
dt = 0.1
steps = 1
[thermal]
density = 1.0
specific_heat = 1.0
conductivity = 1.0
[peridynamics]
horizon_ratio = 1.0
"#
        .to_string()
    }

    #[test]
    fn unknown_key_is_rejected_with_location() {
        let text = minimal().replace("steps = 1", "steps = 1\nstpes = 2");
        let err = ScenarioConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("stpes") && err.contains("line"), "{err}");
    }

    #[test]
    fn threshold_order_is_checked() {
        let text = minimal() + "[damage]\nmodel = \"classical\"\nc1 = 0.6\nc2 = 0.4\n";
        assert!(matches!(ScenarioConfig::from_toml(&text), Err(Error::Config(_))));
        let text = minimal() + "[damage]\nmodel = \"classical\"\nc1 = 0.4\n";
        assert!(ScenarioConfig::from_toml(&text).is_err());
    }

    #[test]
    fn poisson_mismatch_is_rejected() {
        let text = minimal()
            + "[mechanics]\nyoungs_modulus = 1.0\npoissons_ratio = 0.3\nthermal_expansion = 0.0\nplane = \"plane_strain\"\n";
        let err = ScenarioConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("Poisson"), "{err}");
    }

    #[test]
    fn bad_values_are_rejected() {
        for (from, to) in [("dt = 0.1", "dt = -0.1"), ("steps = 1", "steps = 0"), ("conductivity = 1.0", "conductivity = 0.0")] {
            assert!(ScenarioConfig::from_toml(&minimal().replace(from, to)).is_err(), "{to}");
        }
    }

    #[test]
    fn cutouts_remove_elements() {
        let mut c = ScenarioConfig::from_toml(&minimal()).unwrap();
        c.mesh.cutouts.push(Rect { x: [0.5, 1.0], y: [0.5, 1.0] });
        assert_eq!(c.build_mesh().unwrap().num_elements(), 3);
    }
}
