//! Classical-model network: case files, load folding, Kron reduction onto
//! generator internal nodes, and the pre-fault equilibrium.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CASE_FORMAT: u32 = 1;

/// Conductance used to ground a faulted bus.
pub const FAULT_CONDUCTANCE: f64 = 1e6;

const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    /// Shunt admittance `[g, b]` in per-unit.
    #[serde(default)]
    pub shunt: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    /// Series admittance `[g, b]` in per-unit.
    pub y: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    /// Inertia constant in s²/rad (per-unit power base).
    pub m: f64,
    /// Damping in pu·s/rad.
    pub d: f64,
    /// Transient reactance x'd.
    pub xd: f64,
    /// Internal EMF magnitude.
    pub e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: usize,
    pub p: f64,
    pub q: f64,
}

/// A multi-machine network under the classical generator model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub format: u32,
    #[serde(default)]
    pub name: String,
    pub base_frequency: f64,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub loads: Vec<Load>,
}

impl NetworkCase {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let case: NetworkCase = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1)).unwrap_or(0);
            Error::format(line, e.message().to_string())
        })?;
        case.validate()?;
        Ok(case)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("case serializes")
    }

    /// The 3-machine, 9-bus synthetic case shipped with the crate.
    pub fn bundled_case3() -> Self {
        Self::from_toml_str(include_str!("../data/case3.txt")).expect("bundled case is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != CASE_FORMAT {
            return Err(Error::format(1, format!("unsupported case format {} (expected {CASE_FORMAT})", self.format)));
        }
        if self.base_frequency.is_nan() || self.base_frequency <= 0.0 {
            return Err(Error::invalid("base_frequency must be positive"));
        }
        let mut seen = HashMap::new();
        for (k, bus) in self.buses.iter().enumerate() {
            if seen.insert(bus.id, k).is_some() {
                return Err(Error::invalid(format!("duplicate bus id {}", bus.id)));
            }
        }
        let known = |id: usize, what: &str| -> Result<()> {
            if seen.contains_key(&id) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} references unknown bus {id}")))
            }
        };
        for br in &self.branches {
            known(br.from, "branch")?;
            known(br.to, "branch")?;
            if br.from == br.to {
                return Err(Error::invalid(format!("branch {0}-{0} is a self loop", br.from)));
            }
        }
        for g in &self.generators {
            known(g.bus, "generator")?;
            if !(g.m > 0.0 && g.xd > 0.0 && g.e > 0.0 && g.d >= 0.0) {
                return Err(Error::invalid(format!("generator at bus {} needs M > 0, x'd > 0, E > 0, D >= 0", g.bus)));
            }
        }
        for l in &self.loads {
            known(l.bus, "load")?;
        }
        if self.generators.len() < 2 {
            return Err(Error::invalid("at least 2 generators are required"));
        }
        Ok(())
    }

    /// Position of a bus id in `buses`.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn inertia(&self) -> Vec<f64> {
        self.generators.iter().map(|g| g.m).collect()
    }

    pub fn damping(&self) -> Vec<f64> {
        self.generators.iter().map(|g| g.d).collect()
    }

    pub fn emf(&self) -> Vec<f64> {
        self.generators.iter().map(|g| g.e).collect()
    }

    pub fn total_load(&self) -> f64 {
        self.loads.iter().map(|l| l.p).sum()
    }

    /// Branch and shunt admittance matrix, in `buses` order.
    pub fn branch_admittance(&self) -> DMatrix<Complex64> {
        let n = self.buses.len();
        let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for (k, bus) in self.buses.iter().enumerate() {
            y[(k, k)] += Complex64::new(bus.shunt[0], bus.shunt[1]);
        }
        for br in &self.branches {
            let i = self.bus_index(br.from).unwrap();
            let j = self.bus_index(br.to).unwrap();
            let ys = Complex64::new(br.y[0], br.y[1]);
            y[(i, i)] += ys;
            y[(j, j)] += ys;
            y[(i, j)] -= ys;
            y[(j, i)] -= ys;
        }
        y
    }
}

/// Nodal admittance matrix with every scaled load folded in as a constant
/// shunt admittance `conj(S)/|V|²` at a flat 1.0 pu voltage.
pub fn fold_loads(case: &NetworkCase, load_scale: f64) -> Result<DMatrix<Complex64>> {
    if load_scale.is_nan() || load_scale <= 0.0 {
        return Err(Error::invalid(format!("load_scale must be positive, got {load_scale}")));
    }
    let mut y = case.branch_admittance();
    let v2 = 1.0;
    for load in &case.loads {
        let k = case.bus_index(load.bus).ok_or_else(|| Error::invalid(format!("load at unknown bus {}", load.bus)))?;
        let s = Complex64::new(load.p, load.q) * load_scale;
        y[(k, k)] += s.conj() / v2;
    }
    Ok(y)
}

/// Reduced network over generator internal nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetwork {
    pub y_reduced: DMatrix<Complex64>,
    /// Matrix index to generator index (or retained node index for a raw
    /// reduction).
    pub generator_order: Vec<usize>,
}

impl ReducedNetwork {
    pub fn dim(&self) -> usize {
        self.y_reduced.nrows()
    }

    pub fn g(&self, i: usize, j: usize) -> f64 {
        self.y_reduced[(i, j)].re
    }

    pub fn b(&self, i: usize, j: usize) -> f64 {
        self.y_reduced[(i, j)].im
    }
}

/// Eliminates every node not in `retained`: `Y_rr − Y_re·Y_ee⁻¹·Y_er`.
pub fn kron_reduce(ybus: &DMatrix<Complex64>, retained: &[usize]) -> Result<ReducedNetwork> {
    let n = ybus.nrows();
    if ybus.ncols() != n {
        return Err(Error::invalid("admittance matrix must be square"));
    }
    let mut keep = vec![false; n];
    for &r in retained {
        if r >= n {
            return Err(Error::invalid(format!("retained node {r} out of range (n = {n})")));
        }
        if keep[r] {
            return Err(Error::invalid(format!("retained node {r} listed twice")));
        }
        keep[r] = true;
    }
    let eliminated: Vec<usize> = (0..n).filter(|&k| !keep[k]).collect();
    let nr = retained.len();
    let ne = eliminated.len();

    let y_rr = DMatrix::from_fn(nr, nr, |i, j| ybus[(retained[i], retained[j])]);
    if ne == 0 {
        return Ok(ReducedNetwork { y_reduced: y_rr, generator_order: retained.to_vec() });
    }
    let y_re = DMatrix::from_fn(nr, ne, |i, j| ybus[(retained[i], eliminated[j])]);
    let y_er = DMatrix::from_fn(ne, nr, |i, j| ybus[(eliminated[i], retained[j])]);
    let y_ee = DMatrix::from_fn(ne, ne, |i, j| ybus[(eliminated[i], eliminated[j])]);

    let singular = |detail: String| Error::ReductionSingular { nodes: eliminated.clone(), detail };
    let inv = y_ee.clone().try_inverse().ok_or_else(|| singular("matrix is not invertible".into()))?;
    let cond = one_norm(&y_ee) * one_norm(&inv);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(singular(format!("condition estimate {cond:.3e}")));
    }
    let y_red = y_rr - y_re * inv * y_er;
    Ok(ReducedNetwork { y_reduced: y_red, generator_order: retained.to_vec() })
}

fn one_norm(m: &DMatrix<Complex64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Builds the network seen by the generator EMFs: loads folded at
/// `load_scale`, an optional bolted fault at `fault_bus`, internal nodes
/// appended behind each x'd, then everything but the internal nodes
/// eliminated.
pub fn reduce_to_generators(case: &NetworkCase, load_scale: f64, fault_bus: Option<usize>) -> Result<ReducedNetwork> {
    let folded = fold_loads(case, load_scale)?;
    let n = case.buses.len();
    let g = case.n_generators();
    let mut y = DMatrix::from_element(n + g, n + g, Complex64::new(0.0, 0.0));
    y.view_mut((0, 0), (n, n)).copy_from(&folded);
    if let Some(fb) = fault_bus {
        let k = case.bus_index(fb).ok_or_else(|| Error::invalid(format!("fault at unknown bus {fb}")))?;
        y[(k, k)] += Complex64::new(FAULT_CONDUCTANCE, 0.0);
    }
    for (k, gen) in case.generators.iter().enumerate() {
        let bus = case.bus_index(gen.bus).unwrap();
        let yg = Complex64::new(0.0, -1.0 / gen.xd);
        let internal = n + k;
        y[(internal, internal)] += yg;
        y[(bus, bus)] += yg;
        y[(internal, bus)] -= yg;
        y[(bus, internal)] -= yg;
    }
    let retained: Vec<usize> = (n..n + g).collect();
    let mut reduced = kron_reduce(&y, &retained)?;
    reduced.generator_order = (0..g).collect();
    Ok(reduced)
}

/// Classical-model electrical power injected at each internal node.
pub fn electrical_power(delta: &[f64], reduced: &ReducedNetwork, emf: &[f64]) -> Result<Vec<f64>> {
    let n = reduced.dim();
    if delta.len() != n || emf.len() != n {
        return Err(Error::invalid(format!(
            "dimension mismatch: network {n}, angles {}, emf {}",
            delta.len(),
            emf.len()
        )));
    }
    let mut out = vec![0.0; n];
    electrical_power_into(delta, reduced, emf, &mut out);
    Ok(out)
}

/// Unchecked variant used in the integrator's inner loop.
pub(crate) fn electrical_power_into(delta: &[f64], reduced: &ReducedNetwork, emf: &[f64], out: &mut [f64]) {
    let n = delta.len();
    for i in 0..n {
        let mut p = emf[i] * emf[i] * reduced.g(i, i);
        for j in 0..n {
            if j != i {
                let d = delta[i] - delta[j];
                p += emf[i] * emf[j] * (reduced.g(i, j) * d.cos() + reduced.b(i, j) * d.sin());
            }
        }
        out[i] = p;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// Rotor angles in rad, generator 1 at 0.
    pub delta0: Vec<f64>,
    /// Mechanical power per generator; generator 1 carries the slack.
    pub pm: Vec<f64>,
    pub pe0: Vec<f64>,
}

pub const EQUILIBRIUM_TOL: f64 = 1e-12;
pub const MAX_NEWTON_ITERS: usize = 50;

/// Newton solve of `Pe(δ) = Pm` for generators 2..N with generator 1 as the
/// angle reference. Generator 1's mechanical power is set to its electrical
/// output at the solution so that it absorbs network losses.
pub fn solve_equilibrium(case: &NetworkCase, reduced: &ReducedNetwork, pm: &[f64]) -> Result<Equilibrium> {
    let n = reduced.dim();
    if pm.len() != n || case.n_generators() != n {
        return Err(Error::invalid(format!(
            "dimension mismatch: network {n}, pm {}, generators {}",
            pm.len(),
            case.n_generators()
        )));
    }
    let emf = case.emf();
    let mut delta = vec![0.0; n];
    let mut pe = vec![0.0; n];
    let m = n - 1;
    let mut residual = f64::INFINITY;

    for iter in 0..=MAX_NEWTON_ITERS {
        electrical_power_into(&delta, reduced, &emf, &mut pe);
        let mismatch = DVector::from_fn(m, |k, _| pm[k + 1] - pe[k + 1]);
        residual = mismatch.amax();
        if !residual.is_finite() {
            break;
        }
        if residual < EQUILIBRIUM_TOL {
            let mut pm_out = pm.to_vec();
            pm_out[0] = pe[0];
            return Ok(Equilibrium { delta0: delta, pm: pm_out, pe0: pe });
        }
        if iter == MAX_NEWTON_ITERS {
            break;
        }
        let jac = DMatrix::from_fn(m, m, |r, c| power_jacobian(&delta, reduced, &emf, r + 1, c + 1));
        let Some(step) = jac.lu().solve(&mismatch) else {
            break;
        };
        let largest = step.amax();
        let scale = if largest > 0.5 { 0.5 / largest } else { 1.0 };
        for k in 0..m {
            delta[k + 1] += scale * step[k];
        }
    }
    Err(Error::EquilibriumFailure { residual, iterations: MAX_NEWTON_ITERS })
}

/// `∂Pe_i/∂δ_k`.
fn power_jacobian(delta: &[f64], reduced: &ReducedNetwork, emf: &[f64], i: usize, k: usize) -> f64 {
    if i != k {
        let d = delta[i] - delta[k];
        emf[i] * emf[k] * (reduced.g(i, k) * d.sin() - reduced.b(i, k) * d.cos())
    } else {
        (0..delta.len())
            .filter(|&j| j != i)
            .map(|j| {
                let d = delta[i] - delta[j];
                emf[i] * emf[j] * (-reduced.g(i, j) * d.sin() + reduced.b(i, j) * d.cos())
            })
            .sum()
    }
}
