//! Multi-machine network assembly and steady-state solving.
//!
//! A network is a set of buses joined by series RL transmission lines, with
//! generators, loads, and optional virtual series compensators attached to
//! buses. Electrically everything is a balanced three-phase circuit, so all
//! vector quantities carry three components.
//!
//! The composite model keeps each generator's electrical states in its own
//! rotor frame and the line and load states in a frame rotating at the
//! steady velocity `ω_s` (the synchronous frame). In that chart the target
//! steady state is a genuine fixed point: every state is constant there, and
//! deviations from it are directly the transient content. Generator `i`
//! carries its angle as `δ_i`, the rotor angle measured relative to the
//! synchronous frame; the interface between the frames is the plane rotation
//! `G(δ)` with `w_machine = G(δ) w_syn`.

mod composite;
mod monitors;
mod steady;

pub use composite::CompositeSystem;
pub use monitors::{
    incremental_power_balance, incremental_power_terms, operating_point_residuals,
    total_shifted_hamiltonian, PowerBalance, ResidualEntry,
};
pub use steady::steady_state;

use std::collections::HashMap;

use crate::equilibrium::GeneratorEquilibrium;
use crate::error::NetworkError;
use crate::machine::GeneratorParams;

/// One series RL transmission line between two buses, per phase.
#[derive(Debug, Clone, PartialEq)]
pub struct LineParams {
    pub from_bus: String,
    pub to_bus: String,
    /// Series resistance per phase (Ω).
    pub r_line: f64,
    /// Series inductance per phase (H).
    pub l_line: f64,
}

/// A load attached to a bus.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadModel {
    /// Symmetric series RL branch from the bus to ground. A zero inductance
    /// makes it a purely resistive shunt, folded algebraically with no state.
    LinearRl { bus: String, r_load: f64, l_load: f64 },
    /// Balanced constant-current draw, specified in the synchronous frame as
    /// magnitude and phase: the drawn vector is
    /// `(amplitude·cos(phase), amplitude·sin(phase), 0)`.
    ConstantCurrent { bus: String, amplitude: f64, phase: f64 },
}

impl LoadModel {
    pub fn bus(&self) -> &str {
        match self {
            LoadModel::LinearRl { bus, .. } | LoadModel::ConstantCurrent { bus, .. } => bus,
        }
    }
}

/// A generator, the bus it feeds, and its series compensator setting.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorAttachment {
    pub bus: String,
    pub params: GeneratorParams,
    /// Virtual series resistance acting on current deviations (Ω).
    pub r_sssc: f64,
}

/// Complete description of a multi-machine system.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDescription {
    /// Target synchronous angular velocity (rad/s).
    pub omega_s: f64,
    pub generators: Vec<GeneratorAttachment>,
    pub lines: Vec<LineParams>,
    pub loads: Vec<LoadModel>,
}

/// Per-generator steady-state specification consumed by [`steady_state`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorTarget {
    /// The bus voltage this machine should see, as synchronous-frame
    /// constants (V). The solver derives the field current and torque.
    TerminalVoltage { v_x: f64, v_y: f64 },
    /// Fixed excitation: the solver finds the machine's angle (and, if no
    /// machine pins the frequency, the common velocity) matching them.
    FieldAndTorque { i_f: f64, tau_m: f64 },
}

/// A network-consistent steady state: every device's equations balance and
/// Kirchhoff's current law holds at every bus.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    /// Common steady velocity; also the rotation rate of the synchronous
    /// chart the composite model is expressed in (rad/s).
    pub omega_s: f64,
    /// Rotor-frame steady state of each generator, description order.
    pub generators: Vec<GeneratorEquilibrium>,
    /// Steady rotor angle of each generator relative to the synchronous
    /// frame (rad).
    pub delta_star: Vec<f64>,
    /// Steady line currents, synchronous frame (A), description order.
    pub line_currents: Vec<[f64; 3]>,
    /// Steady currents of the stateful (inductive) loads (A), in the order
    /// those loads appear in the description.
    pub load_currents: Vec<[f64; 3]>,
    /// Steady bus voltages, synchronous frame (V), in [`bus_order`] order.
    pub bus_voltages: Vec<[f64; 3]>,
}

impl OperatingPoint {
    /// Synchronous-frame stator current drawn by generator `i` at its bus.
    pub fn machine_syn_current(&self, i: usize) -> [f64; 3] {
        let eq = &self.generators[i];
        rotate(
            [eq.i_x_star, eq.i_y_star, eq.i_z_star],
            -self.delta_star[i],
        )
    }
}

/// Applies the machine-side rotation `G(phi)` in the xy plane:
/// `w_machine = G(δ) w_syn` and `w_syn = G(-δ) w_machine`.
pub(crate) fn rotate(w: [f64; 3], phi: f64) -> [f64; 3] {
    let (s, c) = phi.sin_cos();
    [c * w[0] - s * w[1], s * w[0] + c * w[1], w[2]]
}

/// Complex image of a synchronous-frame xy pair; rotations become unit
/// phase factors: `phasor(rotate(w, φ)) = e^{-jφ}·phasor(w)`.
pub(crate) fn phasor(w: [f64; 2]) -> nalgebra::Complex<f64> {
    nalgebra::Complex::new(w[0], -w[1])
}

pub(crate) fn unphasor(p: nalgebra::Complex<f64>) -> [f64; 2] {
    [p.re, -p.im]
}

/// Internal classification of a load for assembly purposes.
pub(crate) enum LoadClass<'a> {
    Dynamic { bus: &'a str, r: f64, l: f64 },
    Shunt { bus: &'a str, g: f64 },
    Constant { bus: &'a str, draw: [f64; 2] },
}

pub(crate) fn classify(load: &LoadModel) -> LoadClass<'_> {
    match load {
        LoadModel::LinearRl { bus, r_load, l_load } => {
            if *l_load == 0.0 {
                LoadClass::Shunt {
                    bus,
                    g: 1.0 / r_load,
                }
            } else {
                LoadClass::Dynamic {
                    bus,
                    r: *r_load,
                    l: *l_load,
                }
            }
        }
        LoadModel::ConstantCurrent { bus, amplitude, phase } => LoadClass::Constant {
            bus,
            draw: [amplitude * phase.cos(), amplitude * phase.sin()],
        },
    }
}

/// Buses in deterministic order of first appearance (generators, then lines,
/// then loads). Shared by assembly, steady-state solving, and reports.
pub fn bus_order(nd: &NetworkDescription) -> Vec<String> {
    let mut order = Vec::new();
    let mut seen = HashMap::new();
    let push = |name: &str, order: &mut Vec<String>, seen: &mut HashMap<String, ()>| {
        if !seen.contains_key(name) {
            seen.insert(name.to_owned(), ());
            order.push(name.to_owned());
        }
    };
    for g in &nd.generators {
        push(&g.bus, &mut order, &mut seen);
    }
    for l in &nd.lines {
        push(&l.from_bus, &mut order, &mut seen);
        push(&l.to_bus, &mut order, &mut seen);
    }
    for ld in &nd.loads {
        push(ld.bus(), &mut order, &mut seen);
    }
    order
}

impl NetworkDescription {
    /// Base frequency implied by the target velocity (Hz).
    pub fn frequency_hz(&self) -> f64 {
        self.omega_s / (2.0 * std::f64::consts::PI)
    }

    /// Checks the structural invariants: at least one generator, valid
    /// device parameters, and a connected bus graph. Lossless lines are
    /// accepted with a warning since they only give marginal damping of the
    /// line modes.
    pub fn validate(&self) -> Result<(), NetworkError> {
        if !(self.omega_s.is_finite() && self.omega_s > 0.0) {
            return Err(NetworkError::Description {
                why: format!("synchronous velocity must be positive, got {}", self.omega_s),
            });
        }
        if self.generators.is_empty() {
            return Err(NetworkError::Description {
                why: "network needs at least one generator".into(),
            });
        }
        for (k, g) in self.generators.iter().enumerate() {
            g.params.validated()?;
            if !(g.r_sssc.is_finite() && g.r_sssc >= 0.0) {
                return Err(NetworkError::Description {
                    why: format!(
                        "generator {k} at bus {}: series compensator resistance {} invalid",
                        g.bus, g.r_sssc
                    ),
                });
            }
        }
        for (k, l) in self.lines.iter().enumerate() {
            if l.from_bus == l.to_bus {
                return Err(NetworkError::Description {
                    why: format!("line {k} connects bus {} to itself", l.from_bus),
                });
            }
            if !(l.l_line.is_finite() && l.l_line > 0.0) {
                return Err(NetworkError::Description {
                    why: format!(
                        "line {k} ({} to {}): inductance must be positive, got {}; a \
                         zero-inductance branch would create an algebraic loop",
                        l.from_bus, l.to_bus, l.l_line
                    ),
                });
            }
            if !(l.r_line.is_finite() && l.r_line >= 0.0) {
                return Err(NetworkError::Description {
                    why: format!(
                        "line {k} ({} to {}): resistance must be non-negative, got {}",
                        l.from_bus, l.to_bus, l.r_line
                    ),
                });
            }
            if l.r_line == 0.0 {
                log::warn!(
                    "line {k} ({} to {}) is lossless; its current mode is only weakly stable",
                    l.from_bus,
                    l.to_bus
                );
            }
        }
        for (k, ld) in self.loads.iter().enumerate() {
            match ld {
                LoadModel::LinearRl { bus, r_load, l_load } => {
                    if !(r_load.is_finite() && *r_load > 0.0) {
                        return Err(NetworkError::Description {
                            why: format!(
                                "load {k} at bus {bus}: resistance must be positive, got {r_load}"
                            ),
                        });
                    }
                    if !(l_load.is_finite() && *l_load >= 0.0) {
                        return Err(NetworkError::Description {
                            why: format!(
                                "load {k} at bus {bus}: inductance must be non-negative, \
                                 got {l_load}"
                            ),
                        });
                    }
                }
                LoadModel::ConstantCurrent { bus, amplitude, phase } => {
                    if !(amplitude.is_finite() && phase.is_finite()) {
                        return Err(NetworkError::Description {
                            why: format!(
                                "load {k} at bus {bus}: amplitude and phase must be finite"
                            ),
                        });
                    }
                }
            }
        }

        // Connectivity over the line graph.
        let buses = bus_order(self);
        if buses.len() > 1 {
            let index: HashMap<&str, usize> = buses
                .iter()
                .enumerate()
                .map(|(i, b)| (b.as_str(), i))
                .collect();
            let mut adj = vec![Vec::new(); buses.len()];
            for l in &self.lines {
                let (a, b) = (index[l.from_bus.as_str()], index[l.to_bus.as_str()]);
                adj[a].push(b);
                adj[b].push(a);
            }
            let mut reached = vec![false; buses.len()];
            let mut stack = vec![0usize];
            reached[0] = true;
            while let Some(b) = stack.pop() {
                for &n in &adj[b] {
                    if !reached[n] {
                        reached[n] = true;
                        stack.push(n);
                    }
                }
            }
            if let Some(b) = reached.iter().position(|r| !r) {
                return Err(NetworkError::IsolatedBus {
                    bus: buses[b].clone(),
                    why: "no transmission path connects it to the rest of the network".into(),
                });
            }
        }
        Ok(())
    }
}

/// Builds the simulation-ready composite model. Fails on structural defects:
/// isolated buses, non-inductive branches, or bus algebra that cannot
/// determine the bus voltages.
pub fn assemble(nd: &NetworkDescription) -> Result<CompositeSystem, NetworkError> {
    nd.validate()?;
    CompositeSystem::new(nd)
}


#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gen_params() -> GeneratorParams {
        GeneratorParams {
            m: 100.0,
            d: 1e4,
            r: 0.1,
            r_f: 0.05,
            l_s: 0.3,
            l_s0: 0.0,
            l_sf: 0.3 * (2.0f64 / 3.0).sqrt(),
            l_f: 0.6,
            i_f: -50.0,
        }
    }

    #[test]
    fn rotation_and_phasor_agree() {
        let w = [3.0, -4.0, 1.5];
        for k in 0..20 {
            let phi = 0.37 * k as f64;
            let rotated = rotate(w, phi);
            let via_phasor = phasor([rotated[0], rotated[1]]);
            let direct = phasor([w[0], w[1]]) * nalgebra::Complex::from_polar(1.0, -phi);
            assert_relative_eq!(via_phasor.re, direct.re, epsilon = 1e-12);
            assert_relative_eq!(via_phasor.im, direct.im, epsilon = 1e-12);
            let back = unphasor(direct);
            assert_relative_eq!(back[0], rotated[0], epsilon = 1e-12);
            assert_relative_eq!(back[1], rotated[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn validation_catches_structural_defects() {
        let omega_s = 2.0 * std::f64::consts::PI * 60.0;
        let gen = GeneratorAttachment {
            bus: "a".into(),
            params: gen_params(),
            r_sssc: 0.0,
        };
        let line = |from: &str, to: &str| LineParams {
            from_bus: from.into(),
            to_bus: to.into(),
            r_line: 1.0,
            l_line: 0.05,
        };

        let no_gen = NetworkDescription {
            omega_s,
            generators: vec![],
            lines: vec![],
            loads: vec![],
        };
        assert!(matches!(
            no_gen.validate(),
            Err(NetworkError::Description { .. })
        ));

        let isolated = NetworkDescription {
            omega_s,
            generators: vec![gen.clone()],
            lines: vec![line("a", "b")],
            loads: vec![LoadModel::LinearRl {
                bus: "c".into(),
                r_load: 10.0,
                l_load: 0.0,
            }],
        };
        match isolated.validate() {
            Err(NetworkError::IsolatedBus { bus, .. }) => assert_eq!(bus, "c"),
            other => panic!("expected isolated-bus error, got {other:?}"),
        }

        let mut bad_line = line("a", "b");
        bad_line.l_line = 0.0;
        let algebraic_loop = NetworkDescription {
            omega_s,
            generators: vec![gen.clone()],
            lines: vec![bad_line],
            loads: vec![],
        };
        match algebraic_loop.validate() {
            Err(NetworkError::Description { why }) => assert!(why.contains("inductance")),
            other => panic!("expected inductance error, got {other:?}"),
        }

        let self_loop = NetworkDescription {
            omega_s,
            generators: vec![gen],
            lines: vec![line("a", "a")],
            loads: vec![],
        };
        assert!(self_loop.validate().is_err());
    }

    #[test]
    fn bus_order_is_first_appearance() {
        let nd = NetworkDescription {
            omega_s: 2.0 * std::f64::consts::PI * 60.0,
            generators: vec![GeneratorAttachment {
                bus: "g2".into(),
                params: gen_params(),
                r_sssc: 0.0,
            }],
            lines: vec![
                LineParams {
                    from_bus: "g1".into(),
                    to_bus: "mid".into(),
                    r_line: 5.0,
                    l_line: 0.1,
                },
                LineParams {
                    from_bus: "g2".into(),
                    to_bus: "mid".into(),
                    r_line: 5.0,
                    l_line: 0.1,
                },
            ],
            loads: vec![],
        };
        assert_eq!(bus_order(&nd), vec!["g2", "g1", "mid"]);
    }
}
