//! Spin operators for arbitrary total spin in the descending-m basis.

use crate::spinalg::{c, Operator, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpinQuantumNumber {
    pub two_j: u32,
}

impl SpinQuantumNumber {
    pub fn new(two_j: u32) -> Self {
        Self { two_j }
    }

    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.two_j as usize + 1
    }

    /// m value of basis index `k` (index 0 is m = J).
    pub fn m_of(&self, k: usize) -> f64 {
        self.j() - k as f64
    }
}

#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub jx: Operator,
    pub jy: Operator,
    pub jz: Operator,
    pub jplus: Operator,
    pub jminus: Operator,
}

/// Ladder coefficient `sqrt(J(J+1) - m(m±1))`.
pub fn ladder_coeff(j: f64, m: f64, raise: bool) -> f64 {
    let s = if raise { 1.0 } else { -1.0 };
    (j * (j + 1.0) - m * (m + s)).max(0.0).sqrt()
}

pub fn spin_operators(spin: SpinQuantumNumber) -> SpinOperators {
    let d = spin.dim();
    let j = spin.j();
    let mut jplus = Operator::zeros(d, d);
    // J+|m> lands on index k-1.
    for k in 1..d {
        jplus[(k - 1, k)] = c(ladder_coeff(j, spin.m_of(k), true));
    }
    let jminus = jplus.adjoint();
    let jz = Operator::from_fn(d, d, |r, s| if r == s { c(spin.m_of(r)) } else { c(0.0) });
    let jx = (&jplus + &jminus) * c(0.5);
    let jy = (&jplus - &jminus) / C64::new(0.0, 2.0);
    SpinOperators { jx, jy, jz, jplus, jminus }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinalg::{commutator, identity, max_norm, sigma_x, sigma_y, sigma_z};

    #[test]
    fn spin_half_is_half_pauli() {
        let s = spin_operators(SpinQuantumNumber::new(1));
        assert!(max_norm(&(&s.jx - sigma_x() * c(0.5))) < 1e-15);
        assert!(max_norm(&(&s.jy - sigma_y() * c(0.5))) < 1e-15);
        assert!(max_norm(&(&s.jz - sigma_z() * c(0.5))) < 1e-15);
    }

    #[test]
    fn spin_nine_halves_jz() {
        let s = spin_operators(SpinQuantumNumber::new(9));
        assert_eq!(s.jz.nrows(), 10);
        for k in 0..10 {
            assert_eq!(s.jz[(k, k)].re, 4.5 - k as f64);
        }
    }

    #[test]
    fn spin_one_raises_minus_one() {
        let s = spin_operators(SpinQuantumNumber::new(2));
        // |-1> is index 2, |0> is index 1.
        assert!((s.jplus[(1, 2)].re - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn algebra_holds_up_to_nine_halves() {
        for two_j in 1..=9 {
            let sp = SpinQuantumNumber::new(two_j);
            let s = spin_operators(sp);
            let i = C64::i();
            assert!(max_norm(&(commutator(&s.jx, &s.jy) - &s.jz * i)) < 1e-12);
            assert!(max_norm(&(commutator(&s.jy, &s.jz) - &s.jx * i)) < 1e-12);
            assert!(max_norm(&(commutator(&s.jz, &s.jx) - &s.jy * i)) < 1e-12);
            let j = sp.j();
            let cas = &s.jx * &s.jx + &s.jy * &s.jy + &s.jz * &s.jz;
            assert!(max_norm(&(cas - identity(sp.dim()) * c(j * (j + 1.0)))) < 1e-12);
            assert!(s.jplus.column(0).iter().all(|z| *z == c(0.0)));
        }
    }
}
