//! Effective two-qubit parity state and its concurrence.
//!
//! The pseudospin operators act on a single photon's transverse field as
//! `Z = parity (f(x) -> f(-x))`, `X = sgn(x)` and `Y = i X Z`. On the
//! half-offset grid these satisfy the Pauli algebra exactly, so the 16
//! expectations define a genuine 4x4 density matrix over `{ee, eo, oe, oo}`.

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::biphoton::{BiphotonAmplitude, ParityOverlaps, Representation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> Matrix2<C64> {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli::I => Matrix2::new(l, o, o, l),
            Pauli::X => Matrix2::new(o, l, l, o),
            Pauli::Y => Matrix2::new(o, -i, i, o),
            Pauli::Z => Matrix2::new(l, o, o, -l),
        }
    }

    fn flips(self) -> bool {
        matches!(self, Pauli::Y | Pauli::Z)
    }

    /// Multiplier applied after the (optional) mirror, given the sign of `x`.
    fn factor(self, sign: f64) -> C64 {
        match self {
            Pauli::I | Pauli::Z => C64::new(1.0, 0.0),
            Pauli::X => C64::new(sign, 0.0),
            Pauli::Y => C64::new(0.0, sign),
        }
    }
}

fn kron(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

/// Table of `<sigma_a (x) sigma_b>` indexed in `Pauli::ALL` order.
pub type PauliTable = [[f64; 4]; 4];

/// All 16 expectations. Dense amplitudes apply each operator pair as an
/// explicit matrix map; lazy ones reuse the quadrant-resolved overlaps.
pub fn pauli_expectations(bp: &BiphotonAmplitude) -> PauliTable {
    match bp.representation() {
        Representation::Dense => dense_expectations(bp),
        Representation::Lazy => overlap_expectations(&ParityOverlaps::compute(bp)),
    }
}

pub fn overlap_expectations(ov: &ParityOverlaps) -> PauliTable {
    let mut out = [[0.0; 4]; 4];
    for (ia, a) in Pauli::ALL.iter().enumerate() {
        for (ib, b) in Pauli::ALL.iter().enumerate() {
            let t = usize::from(a.flips()) | (usize::from(b.flips()) << 1);
            let mut s = C64::new(0.0, 0.0);
            for q1 in 0..2 {
                for q2 in 0..2 {
                    let s1 = if q1 == 1 { 1.0 } else { -1.0 };
                    let s2 = if q2 == 1 { 1.0 } else { -1.0 };
                    s += ov.o[t][q1][q2] * a.factor(s1) * b.factor(s2);
                }
            }
            out[ia][ib] = s.re;
        }
    }
    out
}

fn dense_expectations(bp: &BiphotonAmplitude) -> PauliTable {
    let mat = bp.weighted_matrix().expect("dense amplitude");
    let g = bp.grid();
    let m = g.len();
    let mut out = [[0.0; 4]; 4];
    for (ia, a) in Pauli::ALL.iter().enumerate() {
        for (ib, b) in Pauli::ALL.iter().enumerate() {
            // (A (x) B) psi as a new matrix, then <psi, .>
            let mapped = nalgebra::DMatrix::from_fn(m, m, |j, k| {
                let sj = if a.flips() { g.mirror(j) } else { j };
                let sk = if b.flips() { g.mirror(k) } else { k };
                mat[(sj, sk)] * a.factor(g.sign(j)) * b.factor(g.sign(k))
            });
            let s: C64 = mat
                .iter()
                .zip(mapped.iter())
                .map(|(p, q)| p.conj() * q)
                .sum();
            out[ia][ib] = s.re;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParityDensityMatrix {
    rho: Matrix4<C64>,
}

impl ParityDensityMatrix {
    pub fn from_expectations(e: &PauliTable) -> Self {
        let mut rho = Matrix4::zeros();
        for (ia, a) in Pauli::ALL.iter().enumerate() {
            for (ib, b) in Pauli::ALL.iter().enumerate() {
                rho += kron(&a.matrix(), &b.matrix()) * C64::new(e[ia][ib] / 4.0, 0.0);
            }
        }
        ParityDensityMatrix { rho }
    }

    pub fn from_matrix(rho: Matrix4<C64>) -> Self {
        ParityDensityMatrix { rho }
    }

    /// Pure state from amplitudes over `{ee, eo, oe, oo}` (normalized here).
    pub fn from_pure(c: [C64; 4]) -> Self {
        let n: f64 = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let v = nalgebra::Vector4::from_iterator(c.iter().map(|z| z / n));
        ParityDensityMatrix {
            rho: v * v.adjoint(),
        }
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.rho
    }

    pub fn expectation(&self, a: Pauli, b: Pauli) -> f64 {
        (self.rho * kron(&a.matrix(), &b.matrix())).trace().re
    }

    pub fn expectations(&self) -> PauliTable {
        let mut out = [[0.0; 4]; 4];
        for (ia, a) in Pauli::ALL.iter().enumerate() {
            for (ib, b) in Pauli::ALL.iter().enumerate() {
                out[ia][ib] = self.expectation(*a, *b);
            }
        }
        out
    }

    /// Diagonal in `{ee, eo, oe, oo}` order.
    pub fn populations(&self) -> [f64; 4] {
        [
            self.rho[(0, 0)].re,
            self.rho[(1, 1)].re,
            self.rho[(2, 2)].re,
            self.rho[(3, 3)].re,
        ]
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let ev = self.rho.symmetric_eigen().eigenvalues;
        let mut out = [ev[0], ev[1], ev[2], ev[3]];
        out.sort_by(|a, b| b.total_cmp(a));
        out
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.rho - self.rho.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }
}

pub fn project_parity_tomography(bp: &BiphotonAmplitude) -> ParityDensityMatrix {
    ParityDensityMatrix::from_expectations(&pauli_expectations(bp))
}

fn hermitian_sqrt(m: &Matrix4<C64>) -> Matrix4<C64> {
    let eig = m.symmetric_eigen();
    let d = Matrix4::from_diagonal(&eig.eigenvalues.map(|l| C64::new(l.max(0.0).sqrt(), 0.0)));
    eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Wootters concurrence `max(0, mu1 - mu2 - mu3 - mu4)`.
pub fn concurrence(state: &ParityDensityMatrix) -> Result<f64> {
    const TOL: f64 = 1e-9;
    let herm = state.hermiticity_error();
    if herm > TOL {
        return Err(Error::InvalidDensityMatrix(format!(
            "not Hermitian (deviation {herm:.2e})"
        )));
    }
    let tr = state.trace();
    if (tr - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidDensityMatrix(format!(
            "trace {tr} differs from 1"
        )));
    }
    let rho = (state.rho + state.rho.adjoint()) * C64::new(0.5, 0.0);
    let eig = rho.symmetric_eigen();
    if let Some(bad) = eig.eigenvalues.iter().find(|&&l| l < -TOL) {
        return Err(Error::InvalidDensityMatrix(format!(
            "negative eigenvalue {bad:.3e}"
        )));
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let total: f64 = clipped.iter().sum();
    let d = Matrix4::from_diagonal(&clipped.map(|l| C64::new(l / total, 0.0)));
    let rho = eig.eigenvectors * d * eig.eigenvectors.adjoint();

    let yy = kron(&Pauli::Y.matrix(), &Pauli::Y.matrix());
    let tilde = yy * rho.conjugate() * yy;
    let root = hermitian_sqrt(&rho);
    let r = root * tilde * root;
    let r = (r + r.adjoint()) * C64::new(0.5, 0.0);
    let mut mu: Vec<f64> = r
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    mu.sort_by(|a, b| b.total_cmp(a));
    Ok((mu[0] - mu[1] - mu[2] - mu[3]).clamp(0.0, 1.0))
}
