//! Staged swing-equation integration and the rotor-angle stability label.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{self, Equilibrium, NetworkCase, ReducedNetwork};

/// Equilibrium cycles recorded before the fault is applied.
pub const PRE_FAULT_CYCLES: usize = 2;
/// RK4 steps per cycle.
pub const STEPS_PER_CYCLE: usize = 10;
pub const DEFAULT_CLEARING_CYCLES: usize = 5;
pub const DEFAULT_HORIZON_S: f64 = 5.0;
/// Rotor-angle spread beyond which a case is labeled unstable.
pub const INSTABILITY_THRESHOLD_DEG: f64 = 360.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub load_scale: f64,
    pub dispatch_seed: u64,
    /// Faulted bus id; `None` simulates an undisturbed system with the same
    /// sample layout.
    pub fault_bus: Option<usize>,
    pub fault_clearing_cycles: usize,
    pub observation_horizon_s: f64,
}

impl Scenario {
    pub fn new(load_scale: f64, dispatch_seed: u64, fault_bus: Option<usize>) -> Self {
        Self {
            load_scale,
            dispatch_seed,
            fault_bus,
            fault_clearing_cycles: DEFAULT_CLEARING_CYCLES,
            observation_horizon_s: DEFAULT_HORIZON_S,
        }
    }

    pub fn validate(&self, base_frequency: f64) -> Result<()> {
        if self.load_scale.is_nan() || self.load_scale <= 0.0 {
            return Err(Error::invalid("load_scale must be positive"));
        }
        if self.fault_clearing_cycles < 1 {
            return Err(Error::invalid("fault_clearing_cycles must be at least 1"));
        }
        let t_clear = (PRE_FAULT_CYCLES + self.fault_clearing_cycles) as f64 / base_frequency;
        if self.observation_horizon_s.is_nan() || self.observation_horizon_s <= t_clear {
            return Err(Error::invalid(format!(
                "observation horizon {} s must exceed the clearing instant {t_clear:.4} s",
                self.observation_horizon_s
            )));
        }
        Ok(())
    }
}

/// Cycle-sampled generator channels over the staged fault process.
///
/// Sample `k` holds the state at `k` cycles and the electrical power of the
/// network in force from that instant on, so `t0_index` carries fault-on
/// power and `t0_index - 1` the last pre-fault value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub base_frequency: f64,
    pub t0_index: usize,
    pub tcl_index: usize,
    /// Per generator, per sample.
    pub delta: Vec<Vec<f64>>,
    pub omega_dev: Vec<Vec<f64>>,
    pub pm: Vec<Vec<f64>>,
    pub pe: Vec<Vec<f64>>,
    pub inertia: Vec<f64>,
}

impl Trajectory {
    pub fn n_generators(&self) -> usize {
        self.delta.len()
    }

    pub fn len(&self) -> usize {
        self.delta.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.base_frequency
    }

    pub fn check(&self) -> Result<()> {
        let n = self.n_generators();
        let len = self.len();
        let series_ok = [&self.delta, &self.omega_dev, &self.pm, &self.pe]
            .iter()
            .all(|s| s.len() == n && s.iter().all(|v| v.len() == len));
        if !series_ok || self.inertia.len() != n {
            return Err(Error::invalid("trajectory series have inconsistent shapes"));
        }
        if !(self.t0_index < self.tcl_index && self.tcl_index < len) {
            return Err(Error::invalid(format!(
                "need t0_index < tcl_index < len, got {} / {} / {len}",
                self.t0_index, self.tcl_index
            )));
        }
        Ok(())
    }

    /// Long-format CSV: `t_s,gen,delta_rad,omega_dev,pm_pu,pe_pu`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "t_s,gen,delta_rad,omega_dev,pm_pu,pe_pu")?;
        for k in 0..self.len() {
            let t = self.time(k);
            for g in 0..self.n_generators() {
                writeln!(
                    w,
                    "{t},{},{},{},{},{}",
                    g + 1,
                    self.delta[g][k],
                    self.omega_dev[g][k],
                    self.pm[g][k],
                    self.pe[g][k]
                )?;
            }
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to memory");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Swing-curve samples read back from a trajectory CSV (no fault timing).
#[derive(Debug, Clone, PartialEq)]
pub struct SwingCurves {
    pub time: Vec<f64>,
    /// Per generator, per sample.
    pub delta: Vec<Vec<f64>>,
}

impl SwingCurves {
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "t_s,gen,delta_rad,omega_dev,pm_pu,pe_pu" => {}
            _ => return Err(Error::format(1, "expected trajectory header")),
        }
        let mut time: Vec<f64> = Vec::new();
        let mut delta: Vec<Vec<f64>> = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(Error::format(i + 1, "expected 6 columns"));
            }
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::format(i + 1, e.to_string()));
            let t = parse(cols[0])?;
            let g: usize = cols[1].trim().parse().map_err(|_| Error::format(i + 1, "bad generator number"))?;
            if g == 0 {
                return Err(Error::format(i + 1, "generator numbers start at 1"));
            }
            if g == 1 {
                time.push(t);
            }
            if delta.len() < g {
                delta.resize(g, Vec::new());
            }
            delta[g - 1].push(parse(cols[2])?);
        }
        if delta.iter().any(|d| d.len() != time.len()) {
            return Err(Error::format(0, "generators have differing sample counts"));
        }
        Ok(Self { time, delta })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    pub fn max_spread_deg(&self) -> f64 {
        (0..self.time.len()).map(|k| spread(self.delta.iter().map(|d| d[k]))).fold(0.0, f64::max).to_degrees()
    }
}

impl From<&Trajectory> for SwingCurves {
    fn from(t: &Trajectory) -> Self {
        Self { time: (0..t.len()).map(|k| t.time(k)).collect(), delta: t.delta.clone() }
    }
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi - lo
}

struct Machines<'a> {
    inertia: &'a [f64],
    damping: &'a [f64],
    emf: &'a [f64],
    pm: &'a [f64],
}

impl Machines<'_> {
    fn derivative(
        &self,
        net: &ReducedNetwork,
        delta: &[f64],
        omega: &[f64],
        pe: &mut [f64],
        d_delta: &mut [f64],
        d_omega: &mut [f64],
    ) {
        netmodel::electrical_power_into(delta, net, self.emf, pe);
        for i in 0..delta.len() {
            d_delta[i] = omega[i];
            d_omega[i] = (self.pm[i] - pe[i] - self.damping[i] * omega[i]) / self.inertia[i];
        }
    }
}

/// Integrates pre-fault, fault-on and post-fault segments with fixed-step
/// RK4 and samples once per cycle.
pub fn simulate(case: &NetworkCase, scenario: &Scenario, equilibrium: &Equilibrium) -> Result<Trajectory> {
    scenario.validate(case.base_frequency)?;
    let pre = netmodel::reduce_to_generators(case, scenario.load_scale, None)?;
    let fault = match scenario.fault_bus {
        Some(bus) => netmodel::reduce_to_generators(case, scenario.load_scale, Some(bus))?,
        None => pre.clone(),
    };
    integrate(case, &pre, &fault, scenario, equilibrium)
}

/// Same as [`simulate`] with pre-built networks (the post-fault network is
/// the pre-fault one).
pub fn integrate(
    case: &NetworkCase,
    pre: &ReducedNetwork,
    fault: &ReducedNetwork,
    scenario: &Scenario,
    equilibrium: &Equilibrium,
) -> Result<Trajectory> {
    integrate_with_steps(case, pre, fault, scenario, equilibrium, STEPS_PER_CYCLE)
}

/// [`integrate`] with a custom number of RK4 steps per cycle.
pub fn integrate_with_steps(
    case: &NetworkCase,
    pre: &ReducedNetwork,
    fault: &ReducedNetwork,
    scenario: &Scenario,
    equilibrium: &Equilibrium,
    steps_per_cycle: usize,
) -> Result<Trajectory> {
    scenario.validate(case.base_frequency)?;
    if steps_per_cycle == 0 {
        return Err(Error::invalid("steps_per_cycle must be positive"));
    }
    let n = case.n_generators();
    if equilibrium.delta0.len() != n || equilibrium.pm.len() != n || pre.dim() != n || fault.dim() != n {
        return Err(Error::invalid("equilibrium and network dimensions must match the case"));
    }
    let inertia = case.inertia();
    let damping = case.damping();
    let emf = case.emf();
    let machines = Machines { inertia: &inertia, damping: &damping, emf: &emf, pm: &equilibrium.pm };

    let f = case.base_frequency;
    let t0_index = PRE_FAULT_CYCLES;
    let tcl_index = t0_index + scenario.fault_clearing_cycles;
    let total = (scenario.observation_horizon_s * f).round() as usize;
    let h = 1.0 / (f * steps_per_cycle as f64);

    let mut traj = Trajectory {
        base_frequency: f,
        t0_index,
        tcl_index,
        delta: vec![Vec::with_capacity(total + 1); n],
        omega_dev: vec![Vec::with_capacity(total + 1); n],
        pm: vec![Vec::with_capacity(total + 1); n],
        pe: vec![Vec::with_capacity(total + 1); n],
        inertia: inertia.clone(),
    };

    let mut delta = equilibrium.delta0.clone();
    let mut omega = vec![0.0; n];
    let mut pe = vec![0.0; n];
    let (mut k1d, mut k1w) = (vec![0.0; n], vec![0.0; n]);
    let (mut k2d, mut k2w) = (vec![0.0; n], vec![0.0; n]);
    let (mut k3d, mut k3w) = (vec![0.0; n], vec![0.0; n]);
    let (mut k4d, mut k4w) = (vec![0.0; n], vec![0.0; n]);
    let mut td = vec![0.0; n];
    let mut tw = vec![0.0; n];

    for k in 0..=total {
        let net = if k >= t0_index && k < tcl_index { fault } else { pre };
        netmodel::electrical_power_into(&delta, net, &emf, &mut pe);
        if delta.iter().chain(&omega).chain(&pe).any(|v| !v.is_finite()) {
            return Err(Error::IntegrationDiverged { last_finite_sample: k.saturating_sub(1) });
        }
        for g in 0..n {
            traj.delta[g].push(delta[g]);
            traj.omega_dev[g].push(omega[g]);
            traj.pm[g].push(equilibrium.pm[g]);
            traj.pe[g].push(pe[g]);
        }
        if k == total {
            break;
        }
        for _ in 0..steps_per_cycle {
            machines.derivative(net, &delta, &omega, &mut pe, &mut k1d, &mut k1w);
            for i in 0..n {
                td[i] = delta[i] + 0.5 * h * k1d[i];
                tw[i] = omega[i] + 0.5 * h * k1w[i];
            }
            machines.derivative(net, &td, &tw, &mut pe, &mut k2d, &mut k2w);
            for i in 0..n {
                td[i] = delta[i] + 0.5 * h * k2d[i];
                tw[i] = omega[i] + 0.5 * h * k2w[i];
            }
            machines.derivative(net, &td, &tw, &mut pe, &mut k3d, &mut k3w);
            for i in 0..n {
                td[i] = delta[i] + h * k3d[i];
                tw[i] = omega[i] + h * k3w[i];
            }
            machines.derivative(net, &td, &tw, &mut pe, &mut k4d, &mut k4w);
            for i in 0..n {
                delta[i] += h / 6.0 * (k1d[i] + 2.0 * k2d[i] + 2.0 * k3d[i] + k4d[i]);
                omega[i] += h / 6.0 * (k1w[i] + 2.0 * k2w[i] + 2.0 * k3w[i] + k4w[i]);
            }
        }
    }
    Ok(traj)
}

/// Largest rotor-angle spread over samples from fault inception on, in
/// degrees.
pub fn max_angle_divergence(traj: &Trajectory) -> Result<f64> {
    if traj.n_generators() < 2 {
        return Err(Error::invalid("angle divergence needs at least 2 generators"));
    }
    let rad = (traj.t0_index..traj.len()).map(|k| spread(traj.delta.iter().map(|d| d[k]))).fold(0.0, f64::max);
    Ok(rad.to_degrees())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityLabel {
    /// +1 stable, −1 unstable.
    pub value: i8,
    pub max_divergence_deg: f64,
}

impl StabilityLabel {
    pub fn from_divergence(max_divergence_deg: f64) -> Self {
        let value = if max_divergence_deg > INSTABILITY_THRESHOLD_DEG { -1 } else { 1 };
        Self { value, max_divergence_deg }
    }

    pub fn is_stable(&self) -> bool {
        self.value > 0
    }
}

pub fn label(traj: &Trajectory) -> Result<StabilityLabel> {
    Ok(StabilityLabel::from_divergence(max_angle_divergence(traj)?))
}
