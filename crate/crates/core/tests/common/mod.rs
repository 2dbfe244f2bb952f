#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tsa_core::kernels::KernelChoice;
use tsa_core::netmodel::{self, NetworkCase};
use tsa_core::simulator::Trajectory;
use tsa_core::vbpmkl::{Dataset, SpaceSpec};

pub const TOY_FIXTURE: &str = include_str!("../fixtures/toy_two_class.csv");

/// Two-class, two-space toy set from the committed fixture.
pub fn toy() -> (Dataset, Vec<SpaceSpec>) {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for line in TOY_FIXTURE.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let v: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
        rows.push(v[..4].to_vec());
        targets.push(v[4] as usize);
    }
    let spaces = vec![
        SpaceSpec { name: "a".into(), columns: vec![0, 1], kernel: KernelChoice::gaussian() },
        SpaceSpec { name: "b".into(), columns: vec![2, 3], kernel: KernelChoice::gaussian() },
    ];
    (Dataset { rows, targets, n_classes: 2 }, spaces)
}

/// Two well-separated Gaussian blobs in the plane, alternating classes.
pub fn blobs(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let centre = if c == 0 { [2.5, 2.5] } else { [-2.5, -2.5] };
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        rows.push(vec![centre[0] + x, centre[1] + y]);
        targets.push(c);
    }
    Dataset { rows, targets, n_classes: 2 }
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, dim: usize, n_classes: usize) -> Dataset {
    let targets: Vec<usize> = (0..n).map(|i| i % n_classes).collect();
    let rows = targets
        .iter()
        .map(|&c| {
            (0..dim).map(|d| rng.sample::<f64, _>(StandardNormal) + if d == c % dim { 1.5 } else { 0.0 }).collect()
        })
        .collect();
    Dataset { rows, targets, n_classes }
}

/// Bundled case with purely reactive branches, shunts and loads and no
/// damping: the classical-model energy function is then conserved while
/// the network stays fixed.
pub fn lossless_case() -> NetworkCase {
    let mut case = NetworkCase::bundled_case3();
    for b in &mut case.branches {
        b.y[0] = 0.0;
    }
    for b in &mut case.buses {
        b.shunt[0] = 0.0;
    }
    for l in &mut case.loads {
        l.p = 0.0;
    }
    for g in &mut case.generators {
        g.d = 0.0;
    }
    case
}

/// Transient energy `Σ ½Mω² − Σ Pm δ − Σ_{i<j} E_iE_jB_ij cos(δ_i − δ_j)`
/// at sample `k`, for a lossless reduced network.
pub fn classical_energy(traj: &Trajectory, net: &netmodel::ReducedNetwork, emf: &[f64], k: usize) -> f64 {
    let n = traj.n_generators();
    let mut e = 0.0;
    for i in 0..n {
        e += 0.5 * traj.inertia[i] * traj.omega_dev[i][k].powi(2) - traj.pm[i][k] * traj.delta[i][k];
        for j in i + 1..n {
            e -= emf[i] * emf[j] * net.b(i, j) * (traj.delta[i][k] - traj.delta[j][k]).cos();
        }
    }
    e
}

/// Φ through an independent erfc implementation.
pub fn phi_oracle(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}
