//! The four subcommands. Each returns the process exit code on success;
//! hard failures bubble up as [`CliError`] with the exit code implied by the
//! error class.

use std::f64::consts::TAU;
use std::path::Path;

use phgrid::certificates::{multi_machine_certificate, CertificateReport};
use phgrid::equilibrium::omega_equilibria;
use phgrid::network::{assemble, steady_state, CompositeSystem, OperatingPoint};
use phgrid::simulator::{
    convergence_metrics, integrate_batch, sample_initial_conditions, SimConfig, Trajectory,
};

use crate::config::{self, Scenario};
use crate::output::{fixed_width, sci, write_atomic};

/// Failure classes mapped onto the exit-code contract: 64 for anything wrong
/// with the inputs, 3 when a solver gives up, 1 when artifacts cannot be
/// produced.
pub enum CliError {
    Config(String),
    Solver(String),
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 64,
            CliError::Solver(_) => 3,
            CliError::Output(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Solver(m) | CliError::Output(m) => m,
        }
    }
}

fn solved(path: &Path) -> Result<(Scenario, OperatingPoint, CompositeSystem), CliError> {
    let sc = config::load(path).map_err(CliError::Config)?;
    let op = steady_state(&sc.network, &sc.targets)
        .map_err(|e| CliError::Solver(format!("steady-state solve failed: {e}")))?;
    let cs = assemble(&sc.network).map_err(|e| CliError::Solver(e.to_string()))?;
    Ok((sc, op, cs))
}

fn certificate_text(sc: &Scenario, op: &OperatingPoint, report: &CertificateReport) -> String {
    let mut rows = vec![vec![
        "gen".to_string(),
        "bus".to_string(),
        "R_sssc_ohm".to_string(),
        "margin".to_string(),
        "R_min_ohm".to_string(),
        "verdict".to_string(),
    ]];
    for (k, (g, m)) in sc.network.generators.iter().zip(&report.machines).enumerate() {
        rows.push(vec![
            (k + 1).to_string(),
            g.bus.clone(),
            format!("{:.6e}", g.r_sssc),
            format!("{:.6e}", m.margin),
            format!("{:.6e}", m.r_min),
            if m.holds { "holds".into() } else { "fails".into() },
        ]);
    }
    let mut text = String::from("stability certificate\n");
    text.push_str(&fixed_width(&rows));

    text.push_str("\nsteady-velocity uniqueness\n");
    let mut rows = vec![vec![
        "gen".to_string(),
        "indicator".to_string(),
        "predicted".to_string(),
        "found".to_string(),
        "roots_hz".to_string(),
        "verdict".to_string(),
    ]];
    for (k, (g, eq)) in sc.network.generators.iter().zip(&op.generators).enumerate() {
        let mut p = g.params;
        p.i_f = eq.i_f;
        let rep = omega_equilibria(eq.tau_m_star, [eq.v_x_star, eq.v_y_star, eq.v_z_star], &p);
        let roots: Vec<String> = rep.roots.iter().map(|w| format!("{:.4}", w / TAU)).collect();
        rows.push(vec![
            (k + 1).to_string(),
            format!("{:.6e}", rep.bcond_value),
            rep.predicted_root_count.to_string(),
            rep.real_root_count.to_string(),
            roots.join(" "),
            if rep.disagreement { "disagrees".into() } else { "agrees".into() },
        ]);
    }
    text.push_str(&fixed_width(&rows));
    text.push('\n');

    if report.all_hold {
        text.push_str("all generators certify\n");
    } else {
        for (k, (g, m)) in sc.network.generators.iter().zip(&report.machines).enumerate() {
            if !m.holds {
                text.push_str(&format!(
                    "generator {} (bus {}) fails: raise its virtual resistance to at least {:.6e} Ohm\n",
                    k + 1,
                    g.bus,
                    m.r_min
                ));
            }
        }
    }
    text
}

pub fn certify(path: &Path) -> Result<i32, CliError> {
    let (sc, op, _) = solved(path)?;
    let report = multi_machine_certificate(&sc.network, &op)
        .map_err(|e| CliError::Solver(e.to_string()))?;
    print!("{}", certificate_text(&sc, &op, &report));
    Ok(if report.all_hold { 0 } else { 2 })
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

/// Rows of (entity, index, quantity, value) covering every starred quantity.
fn equilibrium_rows(op: &OperatingPoint) -> Vec<(String, usize, String, f64)> {
    let mut rows = vec![("system".to_string(), 1, "omega_s_rad_s".to_string(), op.omega_s)];
    for (i, eq) in op.generators.iter().enumerate() {
        let g = |q: &str, v: f64| ("generator".to_string(), i + 1, q.to_string(), v);
        rows.extend([
            g("delta_star_rad", op.delta_star[i]),
            g("I_x_star_A", eq.i_x_star),
            g("I_y_star_A", eq.i_y_star),
            g("I_z_star_A", eq.i_z_star),
            g("V_x_star_V", eq.v_x_star),
            g("V_y_star_V", eq.v_y_star),
            g("V_z_star_V", eq.v_z_star),
            g("tau_m_star_Nm", eq.tau_m_star),
            g("I_f_A", eq.i_f),
        ]);
    }
    for (l, w) in op.line_currents.iter().enumerate() {
        for (axis, v) in ["I_x_star_A", "I_y_star_A", "I_z_star_A"].iter().zip(w) {
            rows.push(("line".to_string(), l + 1, axis.to_string(), *v));
        }
    }
    for (j, w) in op.load_currents.iter().enumerate() {
        for (axis, v) in ["I_x_star_A", "I_y_star_A", "I_z_star_A"].iter().zip(w) {
            rows.push(("load".to_string(), j + 1, axis.to_string(), *v));
        }
    }
    for (b, v) in op.bus_voltages.iter().enumerate() {
        for (axis, val) in ["V_x_star_V", "V_y_star_V", "V_z_star_V"].iter().zip(v) {
            rows.push(("bus".to_string(), b + 1, axis.to_string(), *val));
        }
    }
    rows
}

fn equilibrium_text(sc: &Scenario, cs: &CompositeSystem, op: &OperatingPoint) -> String {
    let mut text = format!(
        "operating point at omega_s = {:.6e} rad/s ({:.4} Hz)\n\n",
        op.omega_s,
        op.omega_s / TAU
    );

    let mut rows = vec![["gen", "bus", "delta_star_rad", "I_x_A", "I_y_A", "I_z_A", "tau_m_Nm", "I_f_A"]
        .map(String::from)
        .to_vec()];
    for (i, (g, eq)) in sc.network.generators.iter().zip(&op.generators).enumerate() {
        rows.push(vec![
            (i + 1).to_string(),
            g.bus.clone(),
            format!("{:.6e}", op.delta_star[i]),
            format!("{:.6e}", eq.i_x_star),
            format!("{:.6e}", eq.i_y_star),
            format!("{:.6e}", eq.i_z_star),
            format!("{:.6e}", eq.tau_m_star),
            format!("{:.6e}", eq.i_f),
        ]);
    }
    text.push_str(&fixed_width(&rows));

    text.push_str("\nmachine terminal voltages, rotor frame\n");
    let mut rows = vec![["gen", "V_x_V", "V_y_V", "V_z_V"].map(String::from).to_vec()];
    for (i, eq) in op.generators.iter().enumerate() {
        rows.push(vec![
            (i + 1).to_string(),
            format!("{:.6e}", eq.v_x_star),
            format!("{:.6e}", eq.v_y_star),
            format!("{:.6e}", eq.v_z_star),
        ]);
    }
    text.push_str(&fixed_width(&rows));

    if !op.line_currents.is_empty() {
        text.push_str("\nline flows, synchronous frame\n");
        let mut rows = vec![["line", "from", "to", "I_x_A", "I_y_A", "I_z_A"].map(String::from).to_vec()];
        for (l, w) in op.line_currents.iter().enumerate() {
            rows.push(vec![
                (l + 1).to_string(),
                sc.network.lines[l].from_bus.clone(),
                sc.network.lines[l].to_bus.clone(),
                format!("{:.6e}", w[0]),
                format!("{:.6e}", w[1]),
                format!("{:.6e}", w[2]),
            ]);
        }
        text.push_str(&fixed_width(&rows));
    }

    if !op.load_currents.is_empty() {
        text.push_str("\nstateful load currents, synchronous frame\n");
        let mut rows = vec![["load", "I_x_A", "I_y_A", "I_z_A"].map(String::from).to_vec()];
        for (j, w) in op.load_currents.iter().enumerate() {
            rows.push(vec![
                (j + 1).to_string(),
                format!("{:.6e}", w[0]),
                format!("{:.6e}", w[1]),
                format!("{:.6e}", w[2]),
            ]);
        }
        text.push_str(&fixed_width(&rows));
    }

    text.push_str("\nbus voltages, synchronous frame\n");
    let mut rows = vec![["bus", "name", "V_x_V", "V_y_V", "V_z_V"].map(String::from).to_vec()];
    for (b, v) in op.bus_voltages.iter().enumerate() {
        rows.push(vec![
            (b + 1).to_string(),
            cs.bus_names()[b].clone(),
            format!("{:.6e}", v[0]),
            format!("{:.6e}", v[1]),
            format!("{:.6e}", v[2]),
        ]);
    }
    text.push_str(&fixed_width(&rows));
    text
}

fn equilibrium_csv(op: &OperatingPoint) -> String {
    let mut text = String::from("entity,index,quantity,value\n");
    for (entity, index, quantity, value) in equilibrium_rows(op) {
        text.push_str(&format!("{entity},{index},{quantity},{}\n", sci(value)));
    }
    text
}

pub fn equilibrium(path: &Path, format: Format) -> Result<i32, CliError> {
    let (sc, op, cs) = solved(path)?;
    match format {
        Format::Text => print!("{}", equilibrium_text(&sc, &cs, &op)),
        Format::Csv => print!("{}", equilibrium_csv(&op)),
    }
    Ok(0)
}

pub struct SimulateArgs {
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub runs: usize,
    pub stride: usize,
    pub jobs: usize,
    pub initial: Option<String>,
}

fn parse_initial(text: &str, n_gens: usize) -> Result<Vec<f64>, CliError> {
    let vals: Vec<f64> = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| CliError::Config(format!("--initial: \"{t}\" is not a number")))
        })
        .collect::<Result<_, _>>()?;
    if vals.len() != 4 * n_gens {
        return Err(CliError::Config(format!(
            "--initial: expected {} values (freq_hz, I_x, I_y, I_z per generator), got {}",
            4 * n_gens,
            vals.len()
        )));
    }
    Ok(vals)
}

fn run_csv(cs: &CompositeSystem, traj: &Trajectory) -> String {
    let mut header = String::from("t");
    for i in 1..=cs.n_gens() {
        header.push_str(&format!(",freq_hz_{i},I_x_{i},I_y_{i},I_z_{i}"));
    }
    for l in 1..=cs.n_lines() {
        header.push_str(&format!(",line_{l}_I_x,line_{l}_I_y,line_{l}_I_z"));
    }
    header.push_str(",H_total_shifted,power_residual\n");

    let mut text = header;
    for k in 0..traj.len() {
        let x = &traj.states[k];
        let mut row = sci(traj.times[k]);
        for i in 0..cs.n_gens() {
            let o = cs.gen_offset(i);
            row.push_str(&format!(
                ",{},{},{},{}",
                sci(traj.frequencies_hz[k][i]),
                sci(x[o + 2]),
                sci(x[o + 3]),
                sci(x[o + 4])
            ));
        }
        for l in 0..cs.n_lines() {
            let w = cs.line_current(x, l);
            row.push_str(&format!(",{},{},{}", sci(w[0]), sci(w[1]), sci(w[2])));
        }
        row.push_str(&format!(",{},{}\n", sci(traj.h_total[k]), sci(traj.power_residual[k])));
        text.push_str(&row);
    }
    text
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn simulate(path: &Path, out: &Path, args: &SimulateArgs) -> Result<i32, CliError> {
    let (_sc, op, cs) = solved(path)?;
    phgrid::configure_threads(args.jobs);

    // n_runs only sizes the sampling draw; integration validates the rest of
    // the config, so a pure --initial invocation clamps it to one.
    let cfg = SimConfig {
        t_end: args.t_end,
        dt: args.dt,
        seed: args.seed,
        n_runs: args.runs.max(1),
        record_stride: args.stride,
        convergence_tolerance: 1e-3,
    };
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let mut x0s = if args.runs == 0 {
        Vec::new()
    } else {
        sample_initial_conditions(&cs, &op, &cfg).map_err(|e| CliError::Solver(e.to_string()))?
    };
    let n_sampled = x0s.len();
    if let Some(text) = &args.initial {
        let vals = parse_initial(text, cs.n_gens())?;
        let mut x = cs.operating_state(&op);
        for i in 0..cs.n_gens() {
            let o = cs.gen_offset(i);
            x[o + 1] = vals[4 * i] * TAU;
            x[o + 2] = vals[4 * i + 1];
            x[o + 3] = vals[4 * i + 2];
            x[o + 4] = vals[4 * i + 3];
        }
        cs.project_initial_state(&mut x).map_err(|e| CliError::Solver(e.to_string()))?;
        x0s.push(x);
    }
    if x0s.is_empty() {
        return Err(CliError::Config("nothing to run: --runs 0 and no --initial".into()));
    }

    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Output(format!("cannot create {}: {e}", out.display())))?;
    let results = integrate_batch(&cs, &x0s, &cfg, &op);

    let f_s = op.omega_s / TAU;
    let mut summary = String::from(
        "run,file,kind,status,converged,settling_time_s,final_state_distance_rel,\
         max_relative_uptick,h_start_J,h_end_J,worst_final_freq_dev_hz,error\n",
    );
    let mut failures = 0usize;
    for (k, result) in results.iter().enumerate() {
        let kind = if k < n_sampled { "sampled" } else { "explicit" };
        match result {
            Ok(traj) => {
                let file = format!("run_{:03}.csv", k + 1);
                write_atomic(&out.join(&file), &run_csv(&cs, traj))
                    .map_err(|e| CliError::Output(format!("cannot write {file}: {e}")))?;
                let metrics = convergence_metrics(traj, &op, cfg.convergence_tolerance);
                let dev = traj
                    .frequencies_hz
                    .last()
                    .map(|fs| fs.iter().map(|f| (f - f_s).abs()).fold(0.0, f64::max))
                    .unwrap_or(f64::INFINITY);
                let converged = dev < 1e-3;
                summary.push_str(&format!(
                    "{},{file},{kind},ok,{converged},{},{},{},{},{},{},\n",
                    k + 1,
                    metrics.settling_time.map(sci).unwrap_or_default(),
                    sci(metrics.final_state_distance),
                    sci(metrics.max_relative_uptick),
                    sci(traj.h_total[0]),
                    sci(*traj.h_total.last().unwrap()),
                    sci(dev),
                ));
            }
            Err(e) => {
                failures += 1;
                summary.push_str(&format!(
                    "{},,{kind},failed,false,,,,,,,{}\n",
                    k + 1,
                    csv_field(&e.to_string())
                ));
            }
        }
    }
    write_atomic(&out.join("summary.csv"), &summary)
        .map_err(|e| CliError::Output(format!("cannot write summary.csv: {e}")))?;
    log::info!(
        "wrote {} run files and summary.csv to {} ({} failed)",
        results.len() - failures,
        out.display(),
        failures
    );
    Ok(if failures > 0 { 1 } else { 0 })
}

pub fn report(path: &Path, out: Option<&Path>) -> Result<i32, CliError> {
    let (sc, op, cs) = solved(path)?;
    let cert = multi_machine_certificate(&sc.network, &op)
        .map_err(|e| CliError::Solver(e.to_string()))?;

    let mut text = format!(
        "transient-stability report\nnetwork: {} generators, {} lines, {} loads, {} buses\n\n",
        sc.network.generators.len(),
        sc.network.lines.len(),
        sc.network.loads.len(),
        cs.n_buses()
    );
    text.push_str(&equilibrium_text(&sc, &cs, &op));
    text.push('\n');
    text.push_str(&certificate_text(&sc, &op, &cert));

    match out {
        Some(p) => write_atomic(p, &text)
            .map_err(|e| CliError::Output(format!("cannot write {}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    Ok(if cert.all_hold { 0 } else { 2 })
}
