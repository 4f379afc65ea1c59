//! Network-description files. TOML with four sections; unknown keys are
//! rejected so typos fail loudly instead of silently defaulting. All values
//! are SI except `omega_s_hz`, which is given in Hz because nameplate data
//! quotes it that way.

use phgrid::machine::GeneratorParams;
use phgrid::network::{
    GeneratorAttachment, GeneratorTarget, LineParams, LoadModel, NetworkDescription,
};
use serde::Deserialize;
use std::path::Path;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    system: SystemSection,
    #[serde(rename = "generator", default)]
    generators: Vec<GeneratorSection>,
    #[serde(rename = "line", default)]
    lines: Vec<LineSection>,
    #[serde(rename = "load", default)]
    loads: Vec<LoadSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    omega_s_hz: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorSection {
    bus: String,
    #[serde(rename = "M")]
    m: f64,
    #[serde(rename = "D")]
    d: f64,
    r: f64,
    r_f: f64,
    #[serde(rename = "L_s")]
    l_s: f64,
    #[serde(rename = "L_s0")]
    l_s0: f64,
    #[serde(rename = "L_sf")]
    l_sf: f64,
    #[serde(rename = "L_f")]
    l_f: f64,
    #[serde(rename = "I_f")]
    i_f: Option<f64>,
    tau_m: Option<f64>,
    #[serde(rename = "V_x_star")]
    v_x_star: Option<f64>,
    #[serde(rename = "V_y_star")]
    v_y_star: Option<f64>,
    #[serde(rename = "R_sssc")]
    r_sssc: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineSection {
    from: String,
    to: String,
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "L")]
    l: Option<f64>,
    #[serde(rename = "X_at_omega_s")]
    x_at_omega_s: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadSection {
    bus: String,
    kind: String,
    #[serde(rename = "R")]
    r: Option<f64>,
    #[serde(rename = "L")]
    l: Option<f64>,
    amplitude: Option<f64>,
    phase: Option<f64>,
}

/// A parsed and validated scenario: the network plus one steady-state target
/// per generator, in section order.
#[derive(Debug)]
pub struct Scenario {
    pub network: NetworkDescription,
    pub targets: Vec<GeneratorTarget>,
}

/// Reads and validates a scenario file. The error string carries toml's
/// line/column diagnostics or, for cross-field rules, the section name.
pub fn load(path: &Path) -> Result<Scenario, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let cfg: ConfigFile =
        toml::from_str(&text).map_err(|e| format!("in {}:\n{e}", path.display()))?;
    scenario(cfg)
}

fn scenario(cfg: ConfigFile) -> Result<Scenario, String> {
    let omega_s = std::f64::consts::TAU * cfg.system.omega_s_hz;
    if !(omega_s.is_finite() && omega_s > 0.0) {
        return Err(format!(
            "[system]: omega_s_hz must be positive and finite, got {}",
            cfg.system.omega_s_hz
        ));
    }
    if cfg.generators.is_empty() {
        return Err("at least one [[generator]] section is required".into());
    }

    let mut generators = Vec::with_capacity(cfg.generators.len());
    let mut targets = Vec::with_capacity(cfg.generators.len());
    for (k, g) in cfg.generators.iter().enumerate() {
        let section = format!("generator {} (bus {})", k + 1, g.bus);
        let target = match (g.i_f, g.tau_m, g.v_x_star, g.v_y_star) {
            (Some(i_f), Some(tau_m), None, None) => GeneratorTarget::FieldAndTorque { i_f, tau_m },
            (None, None, Some(v_x), Some(v_y)) => GeneratorTarget::TerminalVoltage { v_x, v_y },
            _ => {
                return Err(format!(
                    "{section}: give either I_f with tau_m or V_x_star with V_y_star, not a mix"
                ))
            }
        };
        let params = GeneratorParams {
            m: g.m,
            d: g.d,
            r: g.r,
            r_f: g.r_f,
            l_s: g.l_s,
            l_s0: g.l_s0,
            l_sf: g.l_sf,
            l_f: g.l_f,
            i_f: g.i_f.unwrap_or(0.0),
        }
        .validated()
        .map_err(|e| format!("{section}: {e}"))?;
        generators.push(GeneratorAttachment { bus: g.bus.clone(), params, r_sssc: g.r_sssc });
        targets.push(target);
    }

    let mut lines = Vec::with_capacity(cfg.lines.len());
    for (k, line) in cfg.lines.iter().enumerate() {
        let section = format!("line {} ({} to {})", k + 1, line.from, line.to);
        let l_line = match (line.l, line.x_at_omega_s) {
            (Some(l), None) => l,
            (None, Some(x)) => x / omega_s,
            _ => return Err(format!("{section}: give exactly one of L or X_at_omega_s")),
        };
        lines.push(LineParams {
            from_bus: line.from.clone(),
            to_bus: line.to.clone(),
            r_line: line.r,
            l_line,
        });
    }

    let mut loads = Vec::with_capacity(cfg.loads.len());
    for (k, load) in cfg.loads.iter().enumerate() {
        let section = format!("load {} (bus {})", k + 1, load.bus);
        let model = match load.kind.as_str() {
            "rl" => match (load.r, load.l, load.amplitude, load.phase) {
                (Some(r), Some(l), None, None) => {
                    LoadModel::LinearRl { bus: load.bus.clone(), r_load: r, l_load: l }
                }
                _ => return Err(format!("{section}: kind \"rl\" takes R and L only")),
            },
            "const_current" => match (load.r, load.l, load.amplitude, load.phase) {
                (None, None, Some(amplitude), Some(phase)) => {
                    LoadModel::ConstantCurrent { bus: load.bus.clone(), amplitude, phase }
                }
                _ => {
                    return Err(format!(
                        "{section}: kind \"const_current\" takes amplitude and phase only"
                    ))
                }
            },
            other => {
                return Err(format!(
                    "{section}: unknown kind \"{other}\" (expected \"rl\" or \"const_current\")"
                ))
            }
        };
        loads.push(model);
    }

    Ok(Scenario { network: NetworkDescription { omega_s, generators, lines, loads }, targets })
}
