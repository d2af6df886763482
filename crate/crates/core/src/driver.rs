//! Staggered thermo-mechanical time stepping.
//!
//! Each step uses the conductivity left by the previous step's damage, takes
//! one θ-step of the heat equation, loads the peridynamic body with the new
//! temperature change, iterates bond failure to a fixed point, and finally
//! refreshes damage and conductivity for the next step.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bonds::{BondNetwork, Horizon};
use crate::config::ScenarioConfig;
use crate::damage::{ConductivityField, DamageField, DamageModel};
use crate::error::{Error, Result};
use crate::mechanics::{
    calibrate_tau0, critical_stretch, external_load, MechanicsSystem, Micromodulus,
};
use crate::mesh::{BoundaryEdge, Mesh};
use crate::output::{format_number, write_vtk, CsvTable, Field, FrameData};
use crate::sparse::Prescribed;
use crate::thermal::{assemble_load, compute_heat_flux, ConvectionEdge, FluxEdge, ThermalSystem};

/// Everything needed to resume a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationState {
    pub step: usize,
    pub time: f64,
    pub temperature: Vec<f64>,
    pub displacement: Vec<f64>,
    pub intact: Vec<bool>,
    pub damage: DamageField,
    pub conductivity: ConductivityField,
    /// Bond pairs broken by loading (precracks excluded).
    pub total_breaks: usize,
}

impl SimulationState {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("invalid state snapshot: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub time: f64,
    /// Linear mechanical solves in the fracture loop (0 without mechanics).
    pub iterations: usize,
    pub breaks: Vec<usize>,
    pub broken_pairs: usize,
}

/// Prescribed value `value + ramp·(step / steps)`.
#[derive(Debug, Clone)]
struct Constraint {
    index: usize,
    value: f64,
    ramp: f64,
}

#[derive(Debug, Clone)]
struct MechanicsRun {
    system: MechanicsSystem,
    micro: Micromodulus,
    critical_stretch: Option<f64>,
    constraints: Vec<Constraint>,
    steady_load: Vec<f64>,
    ramped_load: Vec<f64>,
    max_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    config: ScenarioConfig,
    mesh: Mesh,
    network: BondNetwork,
    model: DamageModel,
    thermal: ThermalSystem,
    thermal_fixed: Vec<Constraint>,
    thermal_load: Vec<f64>,
    mechanics: Option<MechanicsRun>,
    reference_temperature: f64,
    state: SimulationState,
}

fn edges(mesh: &Mesh, tag: &str) -> Result<Vec<BoundaryEdge>> {
    mesh.boundary(tag)
        .map(|e| e.to_vec())
        .map_err(|_| Error::config(format!("unknown boundary '{tag}'")))
}

fn nodes(mesh: &Mesh, tag: &str) -> Result<Vec<usize>> {
    mesh.node_set(tag)
        .map(|n| n.to_vec())
        .map_err(|_| Error::config(format!("unknown boundary '{tag}'")))
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        for w in config.validate()? {
            log::warn!("{w}");
        }
        let mesh = config.build_mesh()?;
        let pd = &config.peridynamics;
        let horizon = Horizon::from_ratios(&mesh, pd.horizon_ratio, pd.length_ratio)?;
        let mut network = BondNetwork::build(&mesh, horizon)?;
        for s in &config.damage.precracks {
            let n = network.seed_precrack(s.start, s.end)?;
            log::info!("precrack {:?} -> {:?} broke {n} bond pairs", s.start, s.end);
        }
        let model = config.damage.model()?;
        let k0 = config.thermal.conductivity;
        let damage = DamageField::compute(&network)?;
        let conductivity = model.conductivity(&damage, k0)?;

        let th = &config.thermal;
        // a node shared by two edges keeps the value of the first entry
        let mut thermal_fixed: Vec<Constraint> = Vec::new();
        let mut taken = vec![false; mesh.num_nodes()];
        for bc in &th.dirichlet {
            let target = if bc.ramp { bc.value - th.initial_temperature } else { 0.0 };
            let base = if bc.ramp { th.initial_temperature } else { bc.value };
            for n in nodes(&mesh, &bc.boundary)? {
                if !std::mem::replace(&mut taken[n], true) {
                    thermal_fixed.push(Constraint {
                        index: n,
                        value: base,
                        ramp: target,
                    });
                }
            }
        }
        let fixed_nodes = ramped(&thermal_fixed, 1.0)?;
        let mut convection = Vec::new();
        for bc in &th.convection {
            convection.extend(edges(&mesh, &bc.boundary)?.into_iter().map(|edge| ConvectionEdge {
                edge,
                h: bc.h,
                ambient: bc.ambient,
            }));
        }
        let mut flux = Vec::new();
        for bc in &th.flux {
            flux.extend(edges(&mesh, &bc.boundary)?.into_iter().map(|edge| FluxEdge { edge, q: bc.q }));
        }
        let thermal_load = assemble_load(&mesh, th.heat_source, &flux, &convection);
        let thermal = ThermalSystem::new(
            &mesh,
            th.material().capacity(),
            &conductivity,
            convection,
            fixed_nodes.indices(),
            th.solver,
        )?;

        let mechanics = match &config.mechanics {
            None => None,
            Some(spec) => {
                let material = spec.material();
                let tau0 = calibrate_tau0(&network, &material)?;
                let micro = Micromodulus {
                    tau0,
                    length: horizon.length,
                };
                let s0 = match (pd.critical_stretch, material.fracture_energy) {
                    (Some(s), _) => Some(s),
                    (None, Some(g)) => Some(critical_stretch(&mesh, &network, &micro, g)?),
                    (None, None) => None,
                };
                log::info!("micromodulus τ0 = {tau0:.6e}, critical stretch = {s0:?}");
                let mut constraints = Vec::new();
                for bc in &spec.displacement {
                    let layer = mesh
                        .boundary_layer_nodes(&bc.boundary, bc.layers)
                        .map_err(|_| Error::config(format!("unknown boundary '{}'", bc.boundary)))?;
                    for n in layer {
                        constraints.push(Constraint {
                            index: 2 * n + bc.component.index(),
                            value: if bc.ramp { 0.0 } else { bc.value },
                            ramp: if bc.ramp { bc.value } else { 0.0 },
                        });
                    }
                }
                for pin in &spec.pin {
                    if mesh.locate(pin.point).is_err() {
                        return Err(Error::config(format!("pin point {:?} lies outside the mesh", pin.point)));
                    }
                    let n = mesh.nearest_node(pin.point);
                    for c in &pin.components {
                        constraints.push(Constraint {
                            index: 2 * n + c.index(),
                            value: 0.0,
                            ramp: 0.0,
                        });
                    }
                }
                let mut steady = Vec::new();
                let mut growing = Vec::new();
                for bc in &spec.traction {
                    let target = if bc.ramp { &mut growing } else { &mut steady };
                    target.extend(edges(&mesh, &bc.boundary)?.into_iter().map(|e| (e, bc.value)));
                }
                let steady_load = external_load(&mesh, spec.body_force, &steady);
                let ramped_load = external_load(&mesh, [0.0, 0.0], &growing);
                let probe = ramped(&constraints, 1.0)?;
                let mut system = MechanicsSystem::new(
                    &mesh,
                    &network,
                    &micro,
                    &material,
                    spec.stabilization * material.youngs_modulus,
                    probe.indices(),
                    spec.solver,
                )?;
                let regions = &config.peridynamics.fracture_regions;
                if !regions.is_empty() {
                    let c = network.centroids();
                    let inside = |p: [f64; 2]| regions.iter().any(|r| r.contains(p));
                    let mask = (0..network.num_bonds())
                        .map(|k| inside(c[network.source(k)]) && inside(c[network.neighbors()[k]]))
                        .collect();
                    system.restrict_failure(&network, mask)?;
                }
                Some(MechanicsRun {
                    system,
                    micro,
                    critical_stretch: s0,
                    constraints,
                    steady_load,
                    ramped_load,
                    max_iterations: spec.max_iterations,
                })
            }
        };

        let t0 = th.initial_temperature;
        let state = SimulationState {
            step: 0,
            time: 0.0,
            temperature: vec![t0; mesh.num_nodes()],
            displacement: vec![0.0; 2 * mesh.num_nodes()],
            intact: network.intact().to_vec(),
            damage,
            conductivity,
            total_breaks: 0,
        };
        Ok(Simulation {
            config,
            mesh,
            network,
            model,
            thermal,
            thermal_fixed,
            thermal_load,
            mechanics,
            reference_temperature: t0,
            state,
        })
    }

    /// Rebuilds the model and continues from a saved state.
    pub fn resume(config: ScenarioConfig, state: SimulationState) -> Result<Self> {
        let mut sim = Simulation::new(config)?;
        let (nn, ne) = (sim.mesh.num_nodes(), sim.mesh.num_elements());
        if state.temperature.len() != nn
            || state.displacement.len() != 2 * nn
            || state.damage.scalar.len() != ne
            || state.conductivity.len() != ne
        {
            return Err(Error::config("state snapshot does not match the scenario mesh"));
        }
        if state.intact.iter().zip(sim.network.intact()).any(|(now, init)| *now && !*init) {
            return Err(Error::config("state snapshot heals bonds broken by the scenario precracks"));
        }
        sim.network.restore_intact(&state.intact)?;
        sim.state = state;
        Ok(sim)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn network(&self) -> &BondNetwork {
        &self.network
    }

    pub fn state(&self) -> &SimulationState {
        &self.state
    }

    pub fn thermal_system(&self) -> &ThermalSystem {
        &self.thermal
    }

    pub fn mechanics_system(&self) -> Option<&MechanicsSystem> {
        self.mechanics.as_ref().map(|m| &m.system)
    }

    pub fn micromodulus(&self) -> Option<Micromodulus> {
        self.mechanics.as_ref().map(|m| m.micro)
    }

    pub fn critical_stretch(&self) -> Option<f64> {
        self.mechanics.as_ref().and_then(|m| m.critical_stretch)
    }

    pub fn is_finished(&self) -> bool {
        self.state.step >= self.config.time.steps
    }

    /// Centroid temperature change relative to the initial field.
    pub fn centroid_temperature_change(&self) -> Vec<f64> {
        self.mesh
            .centroid_average(&self.state.temperature)
            .into_iter()
            .map(|t| t - self.reference_temperature)
            .collect()
    }

    pub fn heat_flux(&self) -> Result<Vec<[f64; 2]>> {
        compute_heat_flux(&self.mesh, &self.state.temperature, &self.state.conductivity)
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let step = self.state.step + 1;
        let time = step as f64 * self.config.time.dt;
        let wrap = |e: Error| match e {
            Error::NonConvergence { .. } | Error::StepFailure { .. } => e,
            other => Error::StepFailure {
                step,
                source: Box::new(other),
            },
        };

        self.thermal
            .set_conductivity(&self.mesh, &self.state.conductivity)
            .map_err(wrap)?;
        let fraction = step as f64 / self.config.time.steps as f64;
        let dirichlet = ramped(&self.thermal_fixed, fraction)?;
        let mut temperature = self.state.temperature.clone();
        let (dt, theta) = (self.config.time.dt, self.config.time.theta);
        self.thermal
            .theta_step(&mut temperature, &dirichlet, &self.thermal_load, dt, theta)
            .map_err(wrap)?;
        self.state.temperature = temperature;

        let (iterations, breaks) = match self.mechanics.as_mut() {
            None => (0, Vec::new()),
            Some(m) => {
                let constraints = ramped(&m.constraints, fraction)?;
                let external: Vec<f64> = m
                    .steady_load
                    .iter()
                    .zip(&m.ramped_load)
                    .map(|(a, b)| a + fraction * b)
                    .collect();
                let delta_t: Vec<f64> = self
                    .mesh
                    .centroid_average(&self.state.temperature)
                    .into_iter()
                    .map(|t| t - self.reference_temperature)
                    .collect();
                let out = m
                    .system
                    .fracture_loop(
                        &mut self.network,
                        &external,
                        &delta_t,
                        &constraints,
                        m.critical_stretch,
                        m.max_iterations,
                        step,
                    )
                    .map_err(wrap)?;
                self.state.displacement = out.displacement;
                (out.iterations, out.breaks)
            }
        };

        let new_breaks: usize = breaks.iter().sum();
        if new_breaks > 0 {
            self.state.damage = DamageField::compute(&self.network)?;
            self.state.conductivity = self.model.conductivity(&self.state.damage, self.config.thermal.conductivity)?;
            self.state.intact = self.network.intact().to_vec();
        }
        self.state.total_breaks += new_breaks;
        self.state.step = step;
        self.state.time = time;
        log::debug!("step {step}: t = {time:.6e}, {iterations} solves, {new_breaks} bond pairs broken");
        Ok(StepReport {
            step,
            time,
            iterations,
            breaks,
            broken_pairs: self.network.broken_pairs(),
        })
    }

    /// Samples a field at a point: bilinear for nodal fields, the owning
    /// element's value for element fields.
    pub fn probe(&self, point: [f64; 2], field: Field) -> Result<f64> {
        let flux;
        let heat_flux: &[[f64; 2]] = if matches!(field, Field::Jx | Field::Jy) {
            flux = self.heat_flux()?;
            &flux
        } else {
            &[]
        };
        let values = self.frame_data(heat_flux).values(field);
        if field.is_nodal() {
            self.mesh.interpolate(&values, point)
        } else {
            let (e, _) = self.mesh.locate(point)?;
            Ok(values[e])
        }
    }

    pub fn frame_data<'a>(&'a self, heat_flux: &'a [[f64; 2]]) -> FrameData<'a> {
        FrameData {
            temperature: &self.state.temperature,
            displacement: &self.state.displacement,
            damage: &self.state.damage,
            conductivity: &self.state.conductivity,
            heat_flux,
        }
    }
}

fn ramped(constraints: &[Constraint], fraction: f64) -> Result<Prescribed> {
    Prescribed::new(
        constraints
            .iter()
            .map(|c| (c.index, c.value + fraction * c.ramp))
            .collect(),
    )
}

/// Tables and files produced by a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub history: CsvTable,
    pub probes: CsvTable,
    pub frames: Vec<PathBuf>,
    pub state: SimulationState,
}

fn frame_due(every: usize, step: usize, last: usize) -> bool {
    step == last || (every > 0 && step % every == 0)
}

/// Runs the remaining steps of `sim`, writing frames, CSV tables and the
/// final state into `out_dir` when given.
pub fn run(sim: &mut Simulation, out_dir: Option<&Path>) -> Result<RunOutput> {
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let cfg = sim.config().clone();
    let mut probe_header = vec!["step", "time"];
    probe_header.extend(cfg.output.probes.iter().map(|p| p.name.as_str()));
    let mut probes = CsvTable::new(&probe_header);
    let mut history = CsvTable::new(&["step", "time", "iterations", "breaks", "broken_pairs", "max_damage"]);
    let mut frames = Vec::new();
    let last = cfg.time.steps;

    let record = |sim: &Simulation, probes: &mut CsvTable, frames: &mut Vec<PathBuf>| -> Result<()> {
        let st = sim.state();
        let mut row = vec![st.step.to_string(), format_number(st.time)];
        for p in &cfg.output.probes {
            row.push(format_number(sim.probe(p.point, p.field)?));
        }
        probes.push(&row);
        if let Some(dir) = out_dir {
            if frame_due(cfg.output.frame_every, st.step, last) {
                let flux = sim.heat_flux()?;
                let path = dir.join(format!("{}_{:06}.vtk", cfg.name, st.step));
                let title = format!("{} step {} time {}", cfg.name, st.step, format_number(st.time));
                write_vtk(&path, sim.mesh(), &sim.frame_data(&flux), &cfg.output.fields, &title)?;
                frames.push(path);
            }
        }
        Ok(())
    };

    if sim.state().step == 0 {
        record(sim, &mut probes, &mut frames)?;
    }
    while !sim.is_finished() {
        let report = sim.step()?;
        let max_damage = sim.state().damage.scalar.iter().fold(0.0_f64, |a, &b| a.max(b));
        history.push(&[
            report.step.to_string(),
            format_number(report.time),
            report.iterations.to_string(),
            report.breaks.iter().sum::<usize>().to_string(),
            report.broken_pairs.to_string(),
            format_number(max_damage),
        ]);
        record(sim, &mut probes, &mut frames)?;
    }
    if let Some(dir) = out_dir {
        probes.write(&dir.join("probes.csv"))?;
        history.write(&dir.join("history.csv"))?;
        let path = dir.join("state.json");
        std::fs::write(&path, sim.state().to_json()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(RunOutput {
        history,
        probes,
        frames,
        state: sim.state().clone(),
    })
}

/// Builds and runs a scenario from the start.
pub fn run_scenario(config: ScenarioConfig, out_dir: Option<&Path>) -> Result<RunOutput> {
    let mut sim = Simulation::new(config)?;
    run(&mut sim, out_dir)
}
