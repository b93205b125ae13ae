//! Dense complex linear algebra and density-operator primitives.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

pub type C64 = Complex64;
pub type Operator = DMatrix<C64>;
pub type StateVector = DVector<C64>;

/// Hermiticity tolerance.
pub const HTOL: f64 = 1e-10;
/// Trace tolerance.
pub const TTOL: f64 = 1e-9;
/// Positivity tolerance.
pub const PTOL: f64 = 1e-9;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(d: usize) -> Operator {
    Operator::identity(d, d)
}

pub fn zeros(d: usize) -> Operator {
    Operator::zeros(d, d)
}

pub fn sigma_x() -> Operator {
    Operator::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

pub fn sigma_y() -> Operator {
    let i = C64::i();
    Operator::from_row_slice(2, 2, &[c(0.0), -i, i, c(0.0)])
}

pub fn sigma_z() -> Operator {
    Operator::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

pub fn trace(a: &Operator) -> C64 {
    a.diagonal().sum()
}

/// Largest |A_ij - conj(A_ji)|.
pub fn hermitian_residual(a: &Operator) -> f64 {
    let n = a.nrows();
    let mut r: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            r = r.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    r
}

/// Largest entry modulus.
pub fn max_norm(a: &Operator) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn hermitize(a: &Operator) -> Operator {
    (a + a.adjoint()) * c(0.5)
}

pub fn commutator(a: &Operator, b: &Operator) -> Operator {
    a * b - b * a
}

/// Kronecker product with `(a⊗b)[(i*nb + k, j*nb + l)] = a[i,j] * b[k,l]`.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    a.kronecker(b)
}

pub fn projector(psi: &StateVector) -> Operator {
    psi * psi.adjoint()
}

/// Hermitian eigendecomposition with eigenvalues ascending.
///
/// Fails when the input is not Hermitian within `HTOL` relative to its scale.
pub fn eigh(a: &Operator) -> Result<(DVector<f64>, Operator)> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("{}x{} is not square", a.nrows(), a.ncols())));
    }
    let scale = max_norm(a).max(1.0);
    let res = hermitian_residual(a);
    if res > HTOL * scale {
        return Err(Error::Numerical(format!("matrix not Hermitian (residual {res:.3e})")));
    }
    let eig = hermitize(a).symmetric_eigen();
    let n = a.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = Operator::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    Ok((vals, vecs))
}

/// Apply a real function to a Hermitian operator through its eigenvalues.
pub fn herm_fn(a: &Operator, f: impl Fn(f64) -> f64) -> Result<Operator> {
    let (vals, vecs) = eigh(a)?;
    Ok(spectral(&vecs, vals.iter().map(|&x| c(f(x)))))
}

/// `V diag(d) V†`.
pub fn spectral(vecs: &Operator, d: impl Iterator<Item = C64>) -> Operator {
    let n = vecs.nrows();
    let mut scaled = vecs.clone();
    for (k, dk) in d.enumerate() {
        let mut col = scaled.column_mut(k);
        col *= dk;
    }
    debug_assert_eq!(scaled.ncols(), n);
    scaled * vecs.adjoint()
}

/// `exp(-i t H)` for Hermitian `H`.
pub fn unitary(h: &Operator, t: f64) -> Result<Operator> {
    let (vals, vecs) = eigh(h)?;
    Ok(spectral(&vecs, vals.iter().map(|&e| C64::from_polar(1.0, -e * t))))
}

/// Sum of singular values of a Hermitian operator.
pub fn trace_norm_hermitian(a: &Operator) -> Result<f64> {
    let (vals, _) = eigh(a)?;
    Ok(vals.iter().map(|x| x.abs()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubsystemDims {
    pub da: usize,
    pub db: usize,
}

impl SubsystemDims {
    pub fn new(da: usize, db: usize) -> Self {
        Self { da, db }
    }

    pub fn total(&self) -> usize {
        self.da * self.db
    }

    fn check(&self, d: usize) -> Result<()> {
        if self.da == 0 || self.db == 0 || self.total() != d {
            return Err(Error::Dimension(format!(
                "operator of dimension {d} cannot be split as {}x{}",
                self.da, self.db
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    A,
    B,
}

/// A validated density operator (unit trace, Hermitian, positive up to tolerance).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator(Operator);

impl DensityOperator {
    pub fn new(op: Operator) -> Result<Self> {
        Self::validate(&op)?;
        Ok(Self(op))
    }

    /// Wrap without checks. Callers guarantee validity by construction.
    pub fn new_unchecked(op: Operator) -> Self {
        Self(op)
    }

    pub fn validate(op: &Operator) -> Result<()> {
        if !op.is_square() || op.nrows() == 0 {
            return Err(Error::Dimension("density operator must be square and non-empty".into()));
        }
        let tr = trace(op);
        if (tr - c(1.0)).norm() > TTOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let res = hermitian_residual(op);
        if res > HTOL {
            return Err(Error::InvalidState(format!("not Hermitian (residual {res:.3e})")));
        }
        let (vals, _) = eigh(op)?;
        if vals[0] < -PTOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {:.3e}", vals[0])));
        }
        Ok(())
    }

    pub fn pure(psi: &StateVector) -> Self {
        let n = psi.norm();
        Self(projector(&(psi / c(n))))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self(identity(d) / c(d as f64))
    }

    pub fn op(&self) -> &Operator {
        &self.0
    }

    pub fn into_op(self) -> Operator {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Eigenvalues clamped at zero.
    pub fn probabilities(&self) -> Vec<f64> {
        let (vals, _) = eigh(&self.0).expect("validated density operator is Hermitian");
        vals.iter().map(|&p| p.max(0.0)).collect()
    }

    pub fn expect(&self, obs: &Operator) -> f64 {
        trace(&(&self.0 * obs)).re
    }
}

/// Partial trace on a raw operator; `keep` selects the surviving factor.
pub fn partial_trace_op(op: &Operator, dims: SubsystemDims, keep: Keep) -> Result<Operator> {
    dims.check(op.nrows())?;
    let SubsystemDims { da, db } = dims;
    Ok(match keep {
        Keep::A => Operator::from_fn(da, da, |i, j| (0..db).map(|k| op[(i * db + k, j * db + k)]).sum()),
        Keep::B => Operator::from_fn(db, db, |k, l| (0..da).map(|i| op[(i * db + k, i * db + l)]).sum()),
    })
}

pub fn partial_trace(rho: &DensityOperator, dims: SubsystemDims, keep: Keep) -> Result<DensityOperator> {
    Ok(DensityOperator(partial_trace_op(rho.op(), dims, keep)?))
}

/// Partial transpose on subsystem A (`Keep::A`) or B (`Keep::B`).
pub fn partial_transpose(op: &Operator, dims: SubsystemDims, which: Keep) -> Result<Operator> {
    dims.check(op.nrows())?;
    let SubsystemDims { da, db } = dims;
    let n = da * db;
    Ok(Operator::from_fn(n, n, |r, s| {
        let (i, k) = (r / db, r % db);
        let (j, l) = (s / db, s % db);
        match which {
            Keep::A => op[(j * db + k, i * db + l)],
            Keep::B => op[(i * db + l, j * db + k)],
        }
    }))
}

fn same_dim(a: &DensityOperator, b: &DensityOperator) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("{} vs {}", a.dim(), b.dim())));
    }
    Ok(())
}

pub fn trace_distance(r1: &DensityOperator, r2: &DensityOperator) -> Result<f64> {
    same_dim(r1, r2)?;
    let d = 0.5 * trace_norm_hermitian(&hermitize(&(r1.op() - r2.op())))?;
    Ok(d.clamp(0.0, 1.0))
}

/// Uhlmann fidelity `tr sqrt(sqrt(r1) r2 sqrt(r1))` (not squared).
pub fn fidelity(r1: &DensityOperator, r2: &DensityOperator) -> Result<f64> {
    same_dim(r1, r2)?;
    let s = herm_fn(&hermitize(r1.op()), |x| x.max(0.0).sqrt())?;
    let inner = hermitize(&(&s * r2.op() * &s));
    let (vals, _) = eigh(&inner)?;
    Ok(vals.iter().map(|&x| x.max(0.0).sqrt()).sum::<f64>().clamp(0.0, 1.0))
}

pub fn purity(rho: &DensityOperator) -> f64 {
    rho.op().iter().map(|z| z.norm_sqr()).sum()
}

/// `-Σ p log_base p` with `0 log 0 = 0`.
pub fn von_neumann_entropy(rho: &DensityOperator, base: u32) -> f64 {
    shannon(&rho.probabilities(), base as f64)
}

pub fn shannon(ps: &[f64], base: f64) -> f64 {
    let ln_b = base.ln();
    -ps.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln() / ln_b).sum::<f64>()
}

/// Random operators for tests and examples.
pub mod random {
    use super::*;

    fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }

    pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Operator {
        Operator::from_fn(rows, cols, |_, _| gaussian(rng))
    }

    /// Haar-random pure state.
    pub fn state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> StateVector {
        let v = StateVector::from_fn(d, |_, _| gaussian(rng));
        let n = v.norm();
        v / c(n)
    }

    /// Random density operator of given rank (Ginibre ensemble).
    pub fn density<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> DensityOperator {
        let g = ginibre(d, rank.max(1), rng);
        let m = &g * g.adjoint();
        let t = trace(&m);
        DensityOperator(hermitize(&(m / t)))
    }

    pub fn hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Operator {
        let g = ginibre(d, d, rng);
        hermitize(&g)
    }

    /// Haar-random unitary from the QR decomposition of a Ginibre matrix.
    pub fn unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Operator {
        let qr = ginibre(d, d, rng).qr();
        let (q, r) = (qr.q(), qr.r());
        let mut u = q;
        for k in 0..d {
            let ph = r[(k, k)] / c(r[(k, k)].norm());
            let mut col = u.column_mut(k);
            col *= ph;
        }
        u
    }
}
