//! Network-consistent steady states.
//!
//! In the synchronous frame a steady state makes every device equation a
//! complex linear relation, using the encoding `w ↦ w_x - j·w_y` under
//! which a frame rotation by `δ` becomes the factor `e^{jδ}`. Each machine
//! behaves as the source `E = jω L_m I_f e^{jδ*}` behind the impedance
//! `... r + jω L_ss`; lines and RL loads are plain impedances; the series
//! compensators drop out because they act on deviations only.
//!
//! Voltage-targeted generators make their bus voltage a boundary condition
//! and the network solve is a single linear system; their excitation is
//! read off afterwards from the current the rest of the grid demands.
//! Generators specified by field current and torque keep `δ*` (and, when
//! nothing pins the frequency, the common velocity) as unknowns closed by
//! their torque balance, solved by a damped Newton iteration.

use nalgebra::{Complex, DMatrix, DVector};

use super::{
    bus_order, classify, phasor, unphasor, GeneratorTarget, LoadClass, NetworkDescription,
    OperatingPoint,
};
use crate::equilibrium::solve_generator_equilibrium;
use crate::error::NetworkError;

struct GridSkeleton {
    buses: Vec<String>,
    shunt_g: Vec<f64>,
    const_p: Vec<Complex<f64>>,
    /// (bus, R, L) for each stateful load, description order.
    rl: Vec<(usize, f64, f64)>,
    /// (from, to, R, L) per line.
    lines: Vec<(usize, usize, f64, f64)>,
    gen_bus: Vec<usize>,
    /// Target voltage per bus, if some generator imposes one.
    dirichlet: Vec<Option<Complex<f64>>>,
    /// Generator indices solved from field current and torque.
    free_gens: Vec<usize>,
}

impl GridSkeleton {
    fn build(
        nd: &NetworkDescription,
        targets: &[GeneratorTarget],
    ) -> Result<Self, NetworkError> {
        let buses = bus_order(nd);
        let index = |name: &str| buses.iter().position(|b| b == name).unwrap();
        let nb = buses.len();
        let mut shunt_g = vec![0.0; nb];
        let mut const_p = vec![Complex::new(0.0, 0.0); nb];
        let mut rl = Vec::new();
        for ld in &nd.loads {
            match classify(ld) {
                LoadClass::Shunt { bus, g } => shunt_g[index(bus)] += g,
                LoadClass::Constant { bus, draw } => const_p[index(bus)] += phasor(draw),
                LoadClass::Dynamic { bus, r, l } => rl.push((index(bus), r, l)),
            }
        }
        let lines = nd
            .lines
            .iter()
            .map(|l| (index(&l.from_bus), index(&l.to_bus), l.r_line, l.l_line))
            .collect();
        let gen_bus: Vec<usize> = nd.generators.iter().map(|g| index(&g.bus)).collect();

        let mut dirichlet = vec![None; nb];
        let mut free_gens = Vec::new();
        for (i, t) in targets.iter().enumerate() {
            match *t {
                GeneratorTarget::TerminalVoltage { v_x, v_y } => {
                    let b = gen_bus[i];
                    if dirichlet[b].is_some() {
                        return Err(NetworkError::Description {
                            why: format!(
                                "bus {} hosts more than one voltage-targeted generator; \
                                 their stator currents cannot be told apart",
                                buses[b]
                            ),
                        });
                    }
                    dirichlet[b] = Some(phasor([v_x, v_y]));
                }
                GeneratorTarget::FieldAndTorque { .. } => free_gens.push(i),
            }
        }
        Ok(GridSkeleton {
            buses,
            shunt_g,
            const_p,
            rl,
            lines,
            gen_bus,
            dirichlet,
            free_gens,
        })
    }

    /// Solves the complex nodal equations for the bus voltages, with the
    /// field-and-torque machines represented as sources behind their
    /// stator impedance at angles `delta` and velocity `omega`.
    fn bus_voltages(
        &self,
        nd: &NetworkDescription,
        targets: &[GeneratorTarget],
        omega: f64,
        delta: &[f64],
    ) -> Result<Vec<Complex<f64>>, NetworkError> {
        let nb = self.buses.len();
        let unknown: Vec<usize> = (0..nb).filter(|&b| self.dirichlet[b].is_none()).collect();
        let slot: Vec<Option<usize>> = {
            let mut s = vec![None; nb];
            for (k, &b) in unknown.iter().enumerate() {
                s[b] = Some(k);
            }
            s
        };
        let nu = unknown.len();
        let mut v_all: Vec<Complex<f64>> = (0..nb)
            .map(|b| self.dirichlet[b].unwrap_or(Complex::new(0.0, 0.0)))
            .collect();
        if nu == 0 {
            return Ok(v_all);
        }

        let mut y = DMatrix::from_element(nu, nu, Complex::new(0.0, 0.0));
        let mut rhs = DVector::from_element(nu, Complex::new(0.0, 0.0));
        let stamp = |b: usize, o: usize, adm: Complex<f64>, y: &mut DMatrix<Complex<f64>>,
                         rhs: &mut DVector<Complex<f64>>| {
            // Admittance between buses b and o, seen from b's equation.
            if let Some(rb) = slot[b] {
                y[(rb, rb)] += adm;
                match slot[o] {
                    Some(ro) => y[(rb, ro)] -= adm,
                    None => rhs[rb] += adm * self.dirichlet[o].unwrap(),
                }
            }
        };
        for &(from, to, r, l) in &self.lines {
            let adm = 1.0 / Complex::new(r, omega * l);
            stamp(from, to, adm, &mut y, &mut rhs);
            stamp(to, from, adm, &mut y, &mut rhs);
        }
        for (b, s) in slot.iter().enumerate() {
            if let Some(rb) = *s {
                y[(rb, rb)] += Complex::new(self.shunt_g[b], 0.0);
                rhs[rb] -= self.const_p[b];
            }
        }
        for &(b, r, l) in &self.rl {
            if let Some(rb) = slot[b] {
                y[(rb, rb)] += 1.0 / Complex::new(r, omega * l);
            }
        }
        for (k, &gi) in self.free_gens.iter().enumerate() {
            let b = self.gen_bus[gi];
            let p = &nd.generators[gi].params;
            let i_f = match targets[gi] {
                GeneratorTarget::FieldAndTorque { i_f, .. } => i_f,
                _ => unreachable!(),
            };
            let zm = Complex::new(p.r, omega * p.l_ss());
            let e = Complex::i() * omega * p.l_m() * i_f * Complex::from_polar(1.0, delta[k]);
            if let Some(rb) = slot[b] {
                y[(rb, rb)] += 1.0 / zm;
                rhs[rb] += e / zm;
            }
        }

        let lu = y.full_piv_lu();
        if !lu.is_invertible() {
            return Err(NetworkError::SingularAlgebra {
                element: "steady-state bus equations".into(),
                why: "the nodal admittance system is rank deficient".into(),
            });
        }
        let sol = lu.solve(&rhs).unwrap();
        for (k, &b) in unknown.iter().enumerate() {
            v_all[b] = sol[k];
        }
        Ok(v_all)
    }

    /// Phasor stator current drawn by generator `gi`, given all bus
    /// voltages and the angles of the field-and-torque machines.
    fn machine_current(
        &self,
        nd: &NetworkDescription,
        targets: &[GeneratorTarget],
        omega: f64,
        delta: &[f64],
        v_all: &[Complex<f64>],
        gi: usize,
    ) -> Complex<f64> {
        let b = self.gen_bus[gi];
        match targets[gi] {
            GeneratorTarget::FieldAndTorque { i_f, .. } => {
                let p = &nd.generators[gi].params;
                let k = self.free_gens.iter().position(|&g| g == gi).unwrap();
                let zm = Complex::new(p.r, omega * p.l_ss());
                let e =
                    Complex::i() * omega * p.l_m() * i_f * Complex::from_polar(1.0, delta[k]);
                (v_all[b] - e) / zm
            }
            GeneratorTarget::TerminalVoltage { .. } => {
                // Whatever current the rest of the grid leaves over at the
                // bus once every other attachment is accounted for.
                let mut inj = -self.shunt_g[b] * v_all[b] - self.const_p[b];
                for &(from, to, r, l) in &self.lines {
                    let cur = (v_all[from] - v_all[to]) / Complex::new(r, omega * l);
                    if to == b {
                        inj += cur;
                    }
                    if from == b {
                        inj -= cur;
                    }
                }
                for &(lb, r, l) in &self.rl {
                    if lb == b {
                        inj -= v_all[b] / Complex::new(r, omega * l);
                    }
                }
                for &og in &self.free_gens {
                    if og != gi && self.gen_bus[og] == b {
                        inj -= self.machine_current(nd, targets, omega, delta, v_all, og);
                    }
                }
                inj
            }
        }
    }
}

/// Splits an electromotive force into the source form `jω L_m I_f e^{jδ}`:
/// returns `(δ, I_f)` with `δ` the smaller-magnitude branch.
fn decompose_emf(
    e: Complex<f64>,
    omega: f64,
    l_m: f64,
    scale: f64,
    bus: &str,
) -> Result<(f64, f64), NetworkError> {
    use std::f64::consts::{FRAC_PI_2, PI, TAU};
    let mag = e.norm();
    if mag <= 1e-9 * scale {
        return Ok((0.0, 0.0));
    }
    if l_m == 0.0 {
        return Err(NetworkError::SteadyStateDiverged {
            why: format!(
                "generator at bus {bus} needs a nonzero source voltage but has no \
                 stator-field coupling"
            ),
            residual: mag,
        });
    }
    let wrap = |mut a: f64| {
        a %= TAU;
        if a > PI {
            a -= TAU;
        }
        if a <= -PI {
            a += TAU;
        }
        a
    };
    let phi = e.arg();
    let d_pos = wrap(phi - FRAC_PI_2);
    let d_neg = wrap(phi + FRAC_PI_2);
    Ok(if d_pos.abs() <= d_neg.abs() {
        (d_pos, mag / (omega * l_m))
    } else {
        (d_neg, -mag / (omega * l_m))
    })
}

/// Finds the steady state matching one target per generator.
///
/// With at least one voltage-targeted machine the steady velocity is the
/// network's `omega_s`; with none it is solved together with the angles.
/// Fails with [`NetworkError::SteadyStateDiverged`] when the torque-balance
/// iteration cannot close, for instance when a machine's torque exceeds
/// what the grid can transfer at any angle.
pub fn steady_state(
    nd: &NetworkDescription,
    targets: &[GeneratorTarget],
) -> Result<OperatingPoint, NetworkError> {
    nd.validate()?;
    if targets.len() != nd.generators.len() {
        return Err(NetworkError::Description {
            why: format!(
                "{} generators but {} steady-state targets",
                nd.generators.len(),
                targets.len()
            ),
        });
    }
    let grid = GridSkeleton::build(nd, targets)?;
    let n_free = grid.free_gens.len();
    let pinned = grid.dirichlet.iter().any(Option::is_some);

    // Unknowns: one angle per field-and-torque machine, except that with no
    // voltage anchor the first angle is the gauge and the common velocity
    // takes its slot.
    let unpack = |u: &DVector<f64>| -> (f64, Vec<f64>) {
        if pinned {
            (nd.omega_s, u.iter().copied().collect())
        } else {
            let mut d = Vec::with_capacity(n_free);
            for k in 0..n_free {
                d.push(if k == 0 { 0.0 } else { u[k - 1] });
            }
            (u[n_free - 1], d)
        }
    };
    let scales: Vec<f64> = grid
        .free_gens
        .iter()
        .map(|&gi| match targets[gi] {
            GeneratorTarget::FieldAndTorque { tau_m, .. } => tau_m.abs().max(1.0),
            _ => unreachable!(),
        })
        .collect();

    let residuals = |u: &DVector<f64>| -> Result<DVector<f64>, NetworkError> {
        let (omega, delta) = unpack(u);
        if !(omega.is_finite() && omega > 0.0) {
            return Err(NetworkError::SteadyStateDiverged {
                why: format!("torque-balance iteration left the valid range, ω = {omega}"),
                residual: f64::NAN,
            });
        }
        let v_all = grid.bus_voltages(nd, targets, omega, &delta)?;
        let mut f = DVector::zeros(n_free);
        for (k, &gi) in grid.free_gens.iter().enumerate() {
            let p = &nd.generators[gi].params;
            let (i_f, tau_m) = match targets[gi] {
                GeneratorTarget::FieldAndTorque { i_f, tau_m } => (i_f, tau_m),
                _ => unreachable!(),
            };
            let i_s = grid.machine_current(nd, targets, omega, &delta, &v_all, gi);
            let rotor = i_s * Complex::from_polar(1.0, -delta[k]);
            let i_y = -rotor.im;
            f[k] = (p.d * omega + p.l_m() * i_f * i_y - tau_m) / scales[k];
        }
        Ok(f)
    };

    let mut u = DVector::zeros(n_free);
    if !pinned && n_free > 0 {
        u[n_free - 1] = nd.omega_s;
    }

    if n_free > 0 {
        let mut f = residuals(&u)?;
        let mut converged = f.amax() < 1e-12;
        for _ in 0..100 {
            if converged {
                break;
            }
            let nu = u.len();
            let mut jac = DMatrix::zeros(nu, nu);
            for j in 0..nu {
                let h = 1e-6 * u[j].abs().max(1e-2);
                let mut up = u.clone();
                up[j] += h;
                let mut um = u.clone();
                um[j] -= h;
                let fp = residuals(&up)?;
                let fm = residuals(&um)?;
                for i in 0..nu {
                    jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
                }
            }
            let svd = jac.svd(true, true);
            let eps = svd.singular_values.max() * 1e-13;
            let step = svd.solve(&(-&f), eps).map_err(|_| {
                NetworkError::SteadyStateDiverged {
                    why: "singular Jacobian in the torque-balance iteration".into(),
                    residual: f.amax(),
                }
            })?;

            let mut t = 1.0;
            let mut advanced = false;
            while t >= 1.0 / 1024.0 {
                let cand = &u + &step * t;
                if let Ok(fc) = residuals(&cand) {
                    if fc.norm() < f.norm() {
                        u = cand;
                        f = fc;
                        advanced = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            converged = f.amax() < 1e-12;
            if !advanced {
                break;
            }
        }
        if !converged && f.amax() > 1e-10 {
            return Err(NetworkError::SteadyStateDiverged {
                why: "torque balance did not close; no steady angle transfers the \
                      requested torque at the requested excitation"
                    .into(),
                residual: f.amax(),
            });
        }
    }

    // Reconstruct every steady quantity from the solved voltages.
    let (omega, delta_free) = unpack(&u);
    let v_all = grid.bus_voltages(nd, targets, omega, &delta_free)?;
    let nb = grid.buses.len();

    let mut generators = Vec::with_capacity(nd.generators.len());
    let mut delta_star = Vec::with_capacity(nd.generators.len());
    for (gi, g) in nd.generators.iter().enumerate() {
        let b = grid.gen_bus[gi];
        let i_s = grid.machine_current(nd, targets, omega, &delta_free, &v_all, gi);
        let (delta, i_f, given_tau) = match targets[gi] {
            GeneratorTarget::TerminalVoltage { .. } => {
                let zm = Complex::new(g.params.r, omega * g.params.l_ss());
                let e = v_all[b] - zm * i_s;
                let scale = v_all[b].norm().max(zm.norm() * i_s.norm()).max(1.0);
                let (delta, i_f) = decompose_emf(e, omega, g.params.l_m(), scale, &grid.buses[b])?;
                (delta, i_f, None)
            }
            GeneratorTarget::FieldAndTorque { i_f, tau_m } => {
                let k = grid.free_gens.iter().position(|&x| x == gi).unwrap();
                (delta_free[k], i_f, Some(tau_m))
            }
        };
        let v_rotor = unphasor(v_all[b] * Complex::from_polar(1.0, -delta));
        let mut p = g.params;
        p.i_f = i_f;
        let mut eq = solve_generator_equilibrium(omega, [v_rotor[0], v_rotor[1], 0.0], &p)?;
        if let Some(tau_m) = given_tau {
            eq.tau_m_star = tau_m;
        }
        generators.push(eq);
        delta_star.push(delta);
    }

    let line_currents = grid
        .lines
        .iter()
        .map(|&(from, to, r, l)| {
            let cur = unphasor((v_all[from] - v_all[to]) / Complex::new(r, omega * l));
            [cur[0], cur[1], 0.0]
        })
        .collect();
    let load_currents = grid
        .rl
        .iter()
        .map(|&(b, r, l)| {
            let cur = unphasor(v_all[b] / Complex::new(r, omega * l));
            [cur[0], cur[1], 0.0]
        })
        .collect();
    let bus_voltages = (0..nb)
        .map(|b| {
            let v = unphasor(v_all[b]);
            [v[0], v[1], 0.0]
        })
        .collect();

    Ok(OperatingPoint {
        omega_s: omega,
        generators,
        delta_star,
        line_currents,
        load_currents,
        bus_voltages,
    })
}
