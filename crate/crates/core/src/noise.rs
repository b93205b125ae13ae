//! Open-system tools: Kraus channels, Lindblad generators for Z and X noise
//! in the hyperfine eigenbasis, closed-form dephasing rates, optimal working
//! points, steady states and exact small spin-bath coherence.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::breitrabi::{cos_theta, eigen_analytic, Branch, EigenSystem, Half, SpinSystemParams, SystemOperators};
use crate::dynamics::{fit_exponential_rate, TimeSeries};
use crate::roots::{bisect, linspace, sign_changes};
use crate::spectra::TransitionLabel;
use crate::spinalg::{
    c, eigh, hermitian_residual, hermitize, identity, kron, random, sigma_x, sigma_y, sigma_z, spectral, trace,
    DensityOperator, Operator, StateVector, C64,
};
use crate::{Error, Result};

/// Kraus representation of a channel.
#[derive(Debug, Clone)]
pub struct Channel {
    pub kraus: Vec<Operator>,
}

fn check_prob(name: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("{name} must lie in [0, 1], got {x}")));
    }
    Ok(())
}

fn check_time(name: &str, x: f64) -> Result<()> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::Domain(format!("{name} must be >= 0, got {x}")));
    }
    Ok(())
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("{name} must be > 0, got {x}")));
    }
    Ok(())
}

impl Channel {
    /// `(1-λ)ρ + λ σz ρ σz`.
    pub fn dephasing(lambda: f64) -> Result<Self> {
        check_prob("lambda", lambda)?;
        Ok(Self { kraus: vec![identity(2) * c((1.0 - lambda).sqrt()), sigma_z() * c(lambda.sqrt())] })
    }

    /// Dephasing after time `tau` with `λ = (1 - e^{-τ/T₂})/2`.
    pub fn dephasing_after(tau: f64, t2: f64) -> Result<Self> {
        check_time("tau", tau)?;
        check_positive("T2", t2)?;
        Self::dephasing(dephasing_lambda(tau, t2))
    }

    /// `(1-λ)ρ + (λ/3) Σ σ_i ρ σ_i`; λ = 3/4 gives I/2.
    pub fn depolarising(lambda: f64) -> Result<Self> {
        check_prob("lambda", lambda)?;
        let s = c((lambda / 3.0).sqrt());
        Ok(Self {
            kraus: vec![identity(2) * c((1.0 - lambda).sqrt()), sigma_x() * s, sigma_y() * s, sigma_z() * s],
        })
    }

    /// Depolarising after time `tau` at rate `gamma`: `λ = (3/4)(1 - e^{-4γτ})`.
    pub fn depolarising_after(tau: f64, gamma: f64) -> Result<Self> {
        check_time("tau", tau)?;
        check_time("gamma", gamma)?;
        Self::depolarising(0.75 * (1.0 - (-4.0 * gamma * tau).exp()))
    }

    /// `λ I/d + (1-λ)ρ` on a d-level system.
    pub fn depolarising_to_mixed(d: usize, lambda: f64) -> Result<Self> {
        check_prob("lambda", lambda)?;
        if d == 0 {
            return Err(Error::Dimension("d must be positive".into()));
        }
        // Kraus set from the d² matrix units scaled by sqrt(λ/d)
        let mut kraus = vec![identity(d) * c((1.0 - lambda).sqrt())];
        let s = c((lambda / d as f64).sqrt());
        for i in 0..d {
            for j in 0..d {
                let mut e = Operator::zeros(d, d);
                e[(i, j)] = s;
                kraus.push(e);
            }
        }
        Ok(Self { kraus })
    }

    /// `K₀ = diag(1, e^{-τ/2T₁})`, `K₁ = [[0, sqrt(1 - e^{-τ/T₁})], [0, 0]]`; relaxes to index 0.
    pub fn amplitude_damping(tau: f64, t1: f64) -> Result<Self> {
        check_time("tau", tau)?;
        check_positive("T1", t1)?;
        let e = (-tau / t1).exp();
        let k0 = Operator::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(e.sqrt())]);
        let k1 = Operator::from_row_slice(2, 2, &[c(0.0), c((1.0 - e).sqrt()), c(0.0), c(0.0)]);
        Ok(Self { kraus: vec![k0, k1] })
    }

    /// `Σ P(i) U_i ρ U_i†`.
    pub fn random_unitary(probs: &[f64], unitaries: &[Operator]) -> Result<Self> {
        if probs.len() != unitaries.len() || probs.is_empty() {
            return Err(Error::Dimension("one probability per unitary required".into()));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain("probabilities must be non-negative and sum to 1".into()));
        }
        let d = unitaries[0].nrows();
        for u in unitaries {
            if u.nrows() != d || u.ncols() != d {
                return Err(Error::Dimension("unitaries must share one square shape".into()));
            }
            let r = (u.adjoint() * u - identity(d)).iter().fold(0.0f64, |m, z| m.max(z.norm()));
            if r > 1e-10 {
                return Err(Error::Domain(format!("operator is not unitary (residual {r:.2e})")));
            }
        }
        Ok(Self { kraus: probs.iter().zip(unitaries).map(|(&p, u)| u * c(p.sqrt())).collect() })
    }

    pub fn dim(&self) -> usize {
        self.kraus[0].nrows()
    }

    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        if rho.dim() != self.dim() {
            return Err(Error::Dimension(format!("channel on {} vs state {}", self.dim(), rho.dim())));
        }
        let out = self.kraus.iter().fold(Operator::zeros(rho.dim(), rho.dim()), |acc, k| acc + k * rho.op() * k.adjoint());
        Ok(DensityOperator::new_unchecked(hermitize(&out)))
    }

    /// Largest entry of `Σ K†K - I`.
    pub fn completeness_residual(&self) -> f64 {
        let d = self.dim();
        let s = self.kraus.iter().fold(Operator::zeros(d, d), |acc, k| acc + k.adjoint() * k);
        (s - identity(d)).iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &Channel) -> Result<Channel> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension("channel dimensions differ".into()));
        }
        Ok(Channel { kraus: other.kraus.iter().flat_map(|b| self.kraus.iter().map(move |a| b * a)).collect() })
    }
}

pub fn dephasing_lambda(tau: f64, t2: f64) -> f64 {
    0.5 * (1.0 - (-tau / t2).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseAxis {
    Z,
    X,
}

/// Gaussian-correlated classical field noise with coupling `v` and correlation
/// parameter `chi` (µs²). `chi = +inf` selects the adiabatic limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub axis: NoiseAxis,
    pub v: f64,
    pub chi: f64,
}

impl NoiseSpec {
    pub fn new(axis: NoiseAxis, v: f64, chi: f64) -> Result<Self> {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Domain(format!("coupling must be >= 0, got {v}")));
        }
        if !(chi >= 0.0) {
            return Err(Error::Domain(format!("chi must be >= 0, got {chi}")));
        }
        Ok(Self { axis, v, chi })
    }

    pub fn adiabatic_z(v: f64) -> Result<Self> {
        Self::new(NoiseAxis::Z, v, f64::INFINITY)
    }

    pub fn diabatic_z(v: f64) -> Result<Self> {
        Self::new(NoiseAxis::Z, v, 0.0)
    }

    pub fn diabatic_x(v: f64) -> Result<Self> {
        Self::new(NoiseAxis::X, v, 0.0)
    }

    pub fn is_adiabatic(&self) -> bool {
        self.chi == f64::INFINITY
    }

    /// Rate weight `V² e^{-χΩ²}` of a Bohr frequency component.
    pub fn weight(&self, omega: f64, is_zero_bin: bool) -> f64 {
        let v2 = self.v * self.v;
        if is_zero_bin {
            v2
        } else if self.is_adiabatic() {
            0.0
        } else {
            v2 * (-self.chi * omega * omega).exp()
        }
    }
}

/// `ℒ` acting on column-stacked density operators of a d-level system.
#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    pub dim: usize,
    pub superop: Operator,
    pub hamiltonian_part: Operator,
    /// Columns are the representation basis in the product basis, if any.
    pub basis: Option<Operator>,
    /// Level labels of the representation basis, if it is the hyperfine eigenbasis.
    pub labels: Vec<(Half, Branch)>,
    /// Rate scale (V²) for tolerances.
    pub scale: f64,
}

/// Column-stacking index of `ρ[(i, j)]`.
pub fn vec_index(d: usize, i: usize, j: usize) -> usize {
    i + d * j
}

pub fn vectorize(rho: &Operator) -> DVector<C64> {
    DVector::from_column_slice(rho.as_slice())
}

pub fn unvectorize(v: &DVector<C64>, d: usize) -> Operator {
    Operator::from_column_slice(d, d, v.as_slice())
}

impl LindbladGenerator {
    /// `-i[H, ·] + Σ γ (L·L† - ½{L†L, ·})`.
    pub fn from_jumps(h: &Operator, jumps: &[(f64, Operator)], scale: f64) -> Result<Self> {
        let d = h.nrows();
        if !h.is_square() || hermitian_residual(h) > 1e-9 * (1.0 + h.norm()) {
            return Err(Error::Generator("Hamiltonian must be square and Hermitian".into()));
        }
        let one = identity(d);
        let mi = C64::new(0.0, -1.0);
        let mut s = (kron(&one, h) - kron(&h.transpose(), &one)) * mi;
        for (g, l) in jumps {
            if l.nrows() != d || l.ncols() != d {
                return Err(Error::Dimension("jump operator shape".into()));
            }
            if *g < 0.0 {
                return Err(Error::Generator(format!("negative rate {g}")));
            }
            if *g == 0.0 {
                continue;
            }
            let ldl = l.adjoint() * l;
            s += (kron(&l.conjugate(), l) - (kron(&one, &ldl) + kron(&ldl.transpose(), &one)) * c(0.5)) * c(*g);
        }
        Ok(Self { dim: d, superop: s, hamiltonian_part: h.clone(), basis: None, labels: vec![], scale })
    }

    pub fn apply(&self, rho: &Operator) -> Operator {
        unvectorize(&(&self.superop * vectorize(rho)), self.dim)
    }

    /// Product-basis state expressed in the generator's basis.
    pub fn to_generator_basis(&self, rho: &Operator) -> Operator {
        match &self.basis {
            Some(u) => u.adjoint() * rho * u,
            None => rho.clone(),
        }
    }

    pub fn from_generator_basis(&self, rho: &Operator) -> Operator {
        match &self.basis {
            Some(u) => u * rho * u.adjoint(),
            None => rho.clone(),
        }
    }

    pub fn index_of(&self, m: Half, branch: Branch) -> Option<usize> {
        self.labels.iter().position(|&(mm, bb)| mm == m && bb == branch)
    }

    /// Largest `|tr ℒ(E_ij)|` over matrix units; zero for a trace-preserving generator.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for col in 0..d * d {
            let t: C64 = (0..d).map(|k| self.superop[(vec_index(d, k, k), col)]).sum();
            worst = worst.max(t.norm());
        }
        worst
    }

    /// Connected components of the superoperator's sparsity graph.
    fn blocks(&self) -> Vec<Vec<usize>> {
        let n = self.superop.nrows();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for j in 0..n {
            for i in 0..n {
                if i != j && self.superop[(i, j)] != C64::new(0.0, 0.0) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a] = b;
                    }
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        groups.into_values().collect()
    }

    /// `exp(tℒ)` as a dense d²×d² matrix, built block by block.
    pub fn propagator(&self, t: f64) -> Operator {
        let n = self.superop.nrows();
        let mut out = Operator::zeros(n, n);
        for blk in self.blocks() {
            let k = blk.len();
            if k == 1 {
                let i = blk[0];
                out[(i, i)] = (self.superop[(i, i)] * c(t)).exp();
                continue;
            }
            let sub = Operator::from_fn(k, k, |a, b| self.superop[(blk[a], blk[b])] * c(t));
            let e = sub.exp();
            for a in 0..k {
                for b in 0..k {
                    out[(blk[a], blk[b])] = e[(a, b)];
                }
            }
        }
        out
    }
}

fn bin_frequencies(omegas: &mut [f64], tol: f64) -> Vec<f64> {
    omegas.sort_by(|a, b| a.total_cmp(b));
    let mut centers: Vec<f64> = Vec::new();
    let mut start = 0;
    for k in 1..=omegas.len() {
        if k == omegas.len() || omegas[k] - omegas[k - 1] > tol {
            let grp = &omegas[start..k];
            centers.push(grp.iter().sum::<f64>() / grp.len() as f64);
            start = k;
        }
    }
    centers
}

/// Frequency components `S(Ω) = Σ_{E_j - E_i = Ω} |i><i|S|j><j|` of an operator
/// given in the eigenbasis, binned at `tol`.
pub fn frequency_components(s: &Operator, energies: &[f64], tol: f64) -> Vec<(f64, Operator)> {
    let d = energies.len();
    let thresh = 1e-14 * (1.0 + s.iter().fold(0.0f64, |m, z| m.max(z.norm())));
    let mut entries = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if s[(i, j)].norm() > thresh {
                entries.push((i, j, energies[j] - energies[i]));
            }
        }
    }
    let mut all: Vec<f64> = entries.iter().map(|e| e.2).collect();
    let centers = bin_frequencies(&mut all, tol);
    let mut ops: Vec<(f64, Operator)> = centers.iter().map(|&w| (w, Operator::zeros(d, d))).collect();
    for (i, j, w) in entries {
        let k = centers
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - w).abs().total_cmp(&(b.1 - w).abs()))
            .map(|(k, _)| k)
            .expect("at least one bin");
        ops[k].1[(i, j)] = s[(i, j)];
    }
    ops
}

fn eigen_representation(p: &SpinSystemParams, b0: f64, spec: &NoiseSpec) -> Result<(EigenSystem, Operator)> {
    let es = eigen_analytic(p, b0)?;
    let ops = SystemOperators::new(p);
    let u = es.basis_matrix();
    let s = match spec.axis {
        NoiseAxis::Z => &ops.sz,
        NoiseAxis::X => &ops.sx,
    };
    Ok((es, u.adjoint() * s * &u))
}

fn generator_from(
    p: &SpinSystemParams,
    es: &EigenSystem,
    s_eig: &Operator,
    spec: &NoiseSpec,
    keep: Option<&[usize]>,
    basis: Operator,
) -> Result<LindbladGenerator> {
    let idx: Vec<usize> = match keep {
        Some(k) => k.to_vec(),
        None => (0..es.levels.len()).collect(),
    };
    let e_all = es.energies();
    let energies: Vec<f64> = idx.iter().map(|&i| e_all[i]).collect();
    let k = idx.len();
    let s = Operator::from_fn(k, k, |a, b| s_eig[(idx[a], idx[b])]);
    let tol = 1e-9 * p.a_iso;
    let jumps: Vec<(f64, Operator)> = frequency_components(&s, &energies, tol)
        .into_iter()
        .map(|(w, l)| (spec.weight(w, w.abs() <= tol), l))
        .filter(|(g, _)| *g > 0.0)
        .collect();
    let h = Operator::from_diagonal(&DVector::from_iterator(k, energies.iter().map(|&e| c(e))));
    let mut g = LindbladGenerator::from_jumps(&h, &jumps, spec.v * spec.v)?;
    g.labels = idx.iter().map(|&i| (es.levels[i].m, es.levels[i].branch)).collect();
    g.basis = Some(basis);
    Ok(g)
}

/// Z-noise generator on the full space, in the sorted hyperfine eigenbasis.
pub fn lindblad_z(p: &SpinSystemParams, b0: f64, spec: &NoiseSpec) -> Result<LindbladGenerator> {
    if spec.axis != NoiseAxis::Z {
        return Err(Error::Mode("lindblad_z needs a Z-axis noise spec".into()));
    }
    let (es, s) = eigen_representation(p, b0, spec)?;
    let u = es.basis_matrix();
    generator_from(p, &es, &s, spec, None, u)
}

/// X-noise generator; only the diabatic treatment exists for X noise.
pub fn lindblad_x(p: &SpinSystemParams, b0: f64, spec: &NoiseSpec) -> Result<LindbladGenerator> {
    if spec.axis != NoiseAxis::X {
        return Err(Error::Mode("lindblad_x needs an X-axis noise spec".into()));
    }
    if spec.is_adiabatic() {
        return Err(Error::Mode("X noise has no zero-frequency component; use a finite chi".into()));
    }
    let (es, s) = eigen_representation(p, b0, spec)?;
    let u = es.basis_matrix();
    generator_from(p, &es, &s, spec, None, u)
}

/// Generator for either axis.
pub fn lindblad(p: &SpinSystemParams, b0: f64, spec: &NoiseSpec) -> Result<LindbladGenerator> {
    match spec.axis {
        NoiseAxis::Z => lindblad_z(p, b0, spec),
        NoiseAxis::X => lindblad_x(p, b0, spec),
    }
}

/// Z-noise generator on `{φ+_m, φ-_m, φ+_{m-1}, φ-_{m-1}}` (in that order),
/// for `-I+3/2 <= m <= I-1/2`.
pub fn lindblad_z_truncated(p: &SpinSystemParams, b0: f64, spec: &NoiseSpec, m: Half) -> Result<LindbladGenerator> {
    if spec.axis != NoiseAxis::Z {
        return Err(Error::Mode("lindblad_z_truncated needs a Z-axis noise spec".into()));
    }
    let e = p.m_edge().0;
    if !p.m_allowed(m) || m.0 > e - 2 || m.0 < -e + 4 {
        return Err(Error::Domain(format!("subspace pair m={m}, m-1 must avoid the stretched states")));
    }
    let (es, s) = eigen_representation(p, b0, spec)?;
    let order = [(m, Branch::Plus), (m, Branch::Minus), (m.minus_one(), Branch::Plus), (m.minus_one(), Branch::Minus)];
    let idx: Vec<usize> = order.iter().map(|&(mm, b)| es.position(mm, b).expect("level exists")).collect();
    let u_full = es.basis_matrix();
    let basis = Operator::from_fn(u_full.nrows(), 4, |r, k| u_full[(r, idx[k])]);
    generator_from(p, &es, &s, spec, Some(&idx), basis)
}

/// `exp(tℒ) ρ₀` with ρ₀ given in the generator's basis.
pub fn evolve_lindblad(g: &LindbladGenerator, rho0: &DensityOperator, t: f64) -> Result<DensityOperator> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("time must be >= 0, got {t}")));
    }
    if rho0.dim() != g.dim {
        return Err(Error::Dimension(format!("state {} vs generator {}", rho0.dim(), g.dim)));
    }
    apply_propagator(g, &g.propagator(t), rho0)
}

fn apply_propagator(g: &LindbladGenerator, prop: &Operator, rho0: &DensityOperator) -> Result<DensityOperator> {
    let out = unvectorize(&(prop * vectorize(rho0.op())), g.dim);
    let tr = trace(&out);
    if (tr - c(1.0)).norm() > 1e-8 {
        return Err(Error::Generator(format!("trace drifted to {tr}")));
    }
    let out = hermitize(&out);
    let (vals, _) = eigh(&out)?;
    if vals[0] < -1e-6 {
        return Err(Error::Generator(format!("evolution produced eigenvalue {:.3e}", vals[0])));
    }
    Ok(DensityOperator::new_unchecked(out))
}

/// Evolution sampled at `times`; propagators are computed in parallel.
pub fn evolve_series(g: &LindbladGenerator, rho0: &DensityOperator, times: &[f64]) -> Result<Vec<DensityOperator>> {
    if rho0.dim() != g.dim {
        return Err(Error::Dimension(format!("state {} vs generator {}", rho0.dim(), g.dim)));
    }
    times
        .par_iter()
        .map(|&t| {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::Domain(format!("time must be >= 0, got {t}")));
            }
            apply_propagator(g, &g.propagator(t), rho0)
        })
        .collect()
}

/// Equal superposition of basis states `i` and `j` of the generator basis.
pub fn superposition(d: usize, i: usize, j: usize) -> DensityOperator {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = StateVector::zeros(d);
    v[i] = c(s);
    v[j] = c(s);
    DensityOperator::pure(&v)
}

/// `2|ρ_ij(t)|` for an initial equal superposition of `i` and `j`.
pub fn coherence_decay(g: &LindbladGenerator, i: usize, j: usize, times: &[f64]) -> Result<TimeSeries> {
    let rho0 = superposition(g.dim, i, j);
    let states = evolve_series(g, &rho0, times)?;
    Ok(TimeSeries::new(times.to_vec(), states.iter().map(|r| 2.0 * r.op()[(i, j)].norm()).collect()))
}

/// Single-exponential dephasing rate fitted to `coherence_decay`.
pub fn fitted_dephasing_rate(g: &LindbladGenerator, i: usize, j: usize, times: &[f64]) -> Result<f64> {
    let ts = coherence_decay(g, i, j, times)?;
    Ok(fit_exponential_rate(&ts.t, &ts.values))
}

/// Indices (upper, lower) of a transition's levels in a full-space generator.
pub fn transition_indices(g: &LindbladGenerator, t: &TransitionLabel) -> Result<(usize, usize)> {
    let (mu, bu) = t.upper();
    let (ml, bl) = t.lower();
    match (g.index_of(mu, bu), g.index_of(ml, bl)) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::Domain(format!("transition {t} not represented by this generator"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedRates {
    /// Dephasing rate 1/T₂ of the equal superposition.
    pub t2_rate: f64,
    /// Depolarisation rates (V²/2) sin²θ of the upper (m) and lower (m-1) subspaces; zero when adiabatic.
    pub t1_rates_per_m: (f64, f64),
    /// |<φ_u|Sz|φ_u> - <φ_l|Sz|φ_l>|.
    pub owp_distance: f64,
}

/// `<φ±_m|Sz|φ±_m> = ±cosθ_m / 2`.
pub fn sz_expectation(p: &SpinSystemParams, b0: f64, m: Half, branch: Branch) -> f64 {
    0.5 * branch.sign() * cos_theta(p, b0, m)
}

/// Closed-form Z-noise rates for a superposition across a transition.
pub fn predicted_rates(p: &SpinSystemParams, b0: f64, t: &TransitionLabel, spec: &NoiseSpec) -> Result<PredictedRates> {
    if spec.axis != NoiseAxis::Z {
        return Err(Error::Mode("closed-form rates exist for Z noise only".into()));
    }
    t.check(p)?;
    let v2 = spec.v * spec.v;
    let (mu, bu) = t.upper();
    let (ml, bl) = t.lower();
    let zu = sz_expectation(p, b0, mu, bu);
    let zl = sz_expectation(p, b0, ml, bl);
    let sin2 = |m: Half| 1.0 - cos_theta(p, b0, m).powi(2);
    if spec.is_adiabatic() {
        Ok(PredictedRates { t2_rate: 0.5 * v2 * (zu - zl).powi(2), t1_rates_per_m: (0.0, 0.0), owp_distance: (zu - zl).abs() })
    } else {
        Ok(PredictedRates {
            t2_rate: v2 * (0.25 - zu * zl),
            t1_rates_per_m: (0.5 * v2 * sin2(mu), 0.5 * v2 * sin2(ml)),
            owp_distance: (zu - zl).abs(),
        })
    }
}

/// `½P⁰(1 + e^{-t/T₁⁰}) - ½P¹(1 + e^{-t/T₁¹})`.
pub fn effective_depolarisation(p0: f64, p1: f64, t1_0: f64, t1_1: f64, t: f64) -> f64 {
    0.5 * p0 * (1.0 + (-t / t1_0).exp()) - 0.5 * p1 * (1.0 + (-t / t1_1).exp())
}

/// Field where the two levels of `t` have equal <Sz>, for `-I+3/2 <= m <= 0`.
pub fn owp_find(p: &SpinSystemParams, t: &TransitionLabel) -> Option<f64> {
    let e = p.m_edge().0;
    if !t.is_valid(p) || t.m.0 > 0 || t.m.0 < -e + 4 {
        return None;
    }
    let (mu, bu) = t.upper();
    let (ml, bl) = t.lower();
    let f = |b: f64| sz_expectation(p, b, mu, bu) - sz_expectation(p, b, ml, bl);
    let b_hi = 20.0 * p.a_iso * (p.i() + 1.0) / p.gamma_e;
    let grid = linspace(0.0, b_hi, 4001);
    let (lo, hi) = *sign_changes(f, &grid).first()?;
    if lo == hi {
        return Some(lo);
    }
    bisect(f, lo, hi, 0.0)
}

/// Hermitian, Hilbert-Schmidt orthonormal basis of the generator's kernel
/// (singular values <= 1e-8 V² within each block).
pub fn steady_states(g: &LindbladGenerator) -> Result<Vec<Operator>> {
    let d = g.dim;
    let tol = 1e-8 * g.scale.max(f64::MIN_POSITIVE);
    let mut kernel: Vec<DVector<C64>> = Vec::new();
    for blk in g.blocks() {
        let k = blk.len();
        let sub = Operator::from_fn(k, k, |a, b| g.superop[(blk[a], blk[b])]);
        let svd = sub.svd(false, true);
        let vt = svd.v_t.as_ref().expect("requested");
        for (r, &sv) in svd.singular_values.iter().enumerate() {
            if sv <= tol {
                let mut full = DVector::<C64>::zeros(d * d);
                for (a, &ia) in blk.iter().enumerate() {
                    full[ia] = vt[(r, a)].conj();
                }
                kernel.push(full);
            }
        }
    }
    if kernel.is_empty() {
        return Err(Error::Generator("generator has no stationary state".into()));
    }
    // Hermitian parts, then Gram-Schmidt under <A, B> = tr(A†B)
    let mut herm: Vec<Operator> = Vec::new();
    for v in &kernel {
        let x = unvectorize(v, d);
        herm.push((&x + x.adjoint()) * c(0.5));
        herm.push((&x - x.adjoint()) * C64::new(0.0, -0.5));
    }
    let mut basis: Vec<Operator> = Vec::new();
    for mut x in herm {
        for b in &basis {
            let ov = b.dotc(&x);
            x -= b * ov;
        }
        let n = x.norm();
        if n > 1e-8 {
            basis.push(hermitize(&(x / c(n))));
        }
        if basis.len() == kernel.len() {
            break;
        }
    }
    Ok(basis)
}

/// Spin bath coupled to the electron through `S_i ⊗ B_i`.
#[derive(Debug, Clone)]
pub struct BathSpec {
    pub n_spins: usize,
    pub hamiltonian: Operator,
    /// `B_x, B_y, B_z` on the bath; only `B_z` enters the secular coherence.
    pub couplings: [Operator; 3],
    pub initial_state: DensityOperator,
}

pub const MAX_BATH_SPINS: usize = 8;

fn single_site(n: usize, k: usize, op: &Operator) -> Operator {
    (0..n).fold(Operator::identity(1, 1), |acc, i| kron(&acc, &if i == k { op.clone() } else { identity(2) }))
}

impl BathSpec {
    pub fn new(n_spins: usize, hamiltonian: Operator, couplings: [Operator; 3], initial_state: DensityOperator) -> Result<Self> {
        if n_spins > MAX_BATH_SPINS {
            return Err(Error::Size(format!("{n_spins} bath spins exceeds the exact limit of {MAX_BATH_SPINS}")));
        }
        let d = 1usize << n_spins;
        let shapes_ok = hamiltonian.nrows() == d
            && hamiltonian.ncols() == d
            && couplings.iter().all(|b| b.nrows() == d && b.ncols() == d)
            && initial_state.dim() == d;
        if !shapes_ok {
            return Err(Error::Dimension(format!("bath operators must be {d}x{d}")));
        }
        if hermitian_residual(&hamiltonian) > 1e-10 || couplings.iter().any(|b| hermitian_residual(b) > 1e-10) {
            return Err(Error::Domain("bath operators must be Hermitian".into()));
        }
        Ok(Self { n_spins, hamiltonian, couplings, initial_state })
    }

    pub fn dim(&self) -> usize {
        1 << self.n_spins
    }

    /// Random dipolar-like bath: local fields, zz/flip-flop pairs, random hyperfine
    /// couplings and a random full-rank initial state. Energies in rad/µs.
    pub fn random(n_spins: usize, seed: u64) -> Result<Self> {
        if n_spins > MAX_BATH_SPINS {
            return Err(Error::Size(format!("{n_spins} bath spins exceeds the exact limit of {MAX_BATH_SPINS}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n_spins;
        let d = 1usize << n;
        let half = c(0.5);
        let (sx, sy, sz) = (sigma_x() * half, sigma_y() * half, sigma_z() * half);
        let mut h = Operator::zeros(d, d);
        let mut bz = Operator::zeros(d, d);
        let mut bx = Operator::zeros(d, d);
        for k in 0..n {
            h += single_site(n, k, &sz) * c(rng.random_range(-1.0..1.0));
            bz += single_site(n, k, &sz) * c(rng.random_range(-1.0..1.0));
            bx += single_site(n, k, &sx) * c(rng.random_range(-0.5..0.5));
            for l in (k + 1)..n {
                let j = rng.random_range(-0.2..0.2);
                let zz = single_site(n, k, &sz) * single_site(n, l, &sz);
                let ff = single_site(n, k, &sx) * single_site(n, l, &sx) + single_site(n, k, &sy) * single_site(n, l, &sy);
                h += (zz * c(-2.0) + ff) * c(j);
            }
        }
        let rho = random::density(d, d, &mut rng);
        Self::new(n, hermitize(&h), [hermitize(&bx), Operator::zeros(d, d), hermitize(&bz)], rho)
    }
}

struct CondEvolution {
    vals: Vec<f64>,
    vecs: Operator,
}

impl CondEvolution {
    fn new(bath: &BathSpec, sz: f64) -> Result<Self> {
        let k = &bath.hamiltonian + &bath.couplings[2] * c(sz);
        let (vals, vecs) = eigh(&hermitize(&k))?;
        Ok(Self { vals: vals.iter().copied().collect(), vecs })
    }

    fn unitary(&self, t: f64) -> Operator {
        spectral(&self.vecs, self.vals.iter().map(|&e| C64::from_polar(1.0, -e * t)))
    }
}

fn bath_overlap(bath: &BathSpec, a: &Operator, b: &Operator) -> Result<f64> {
    let (p, chi) = eigh(bath.initial_state.op())?;
    let m = a.adjoint() * b;
    let mut l = 0.0;
    for i in 0..p.len() {
        if p[i] <= 0.0 {
            continue;
        }
        let v = chi.column(i);
        let z = v.dotc(&(&m * v));
        l += p[i] * z.norm();
    }
    Ok(l)
}

/// `L(τ) = Σ_i P(i) |<U₁χ_i|U₀χ_i>|` for an equal superposition across `t`
/// (so `2|αβ| = 1`).
pub fn bath_coherence(p: &SpinSystemParams, b0: f64, t: &TransitionLabel, bath: &BathSpec, tgrid: &[f64]) -> Result<TimeSeries> {
    t.check(p)?;
    if bath.n_spins > MAX_BATH_SPINS {
        return Err(Error::Size(format!("{} bath spins exceeds {MAX_BATH_SPINS}", bath.n_spins)));
    }
    let (mu, bu) = t.upper();
    let (ml, bl) = t.lower();
    let u0 = CondEvolution::new(bath, sz_expectation(p, b0, mu, bu))?;
    let u1 = CondEvolution::new(bath, sz_expectation(p, b0, ml, bl))?;
    let values = tgrid
        .par_iter()
        .map(|&tau| bath_overlap(bath, &u1.unitary(tau), &u0.unitary(tau)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(TimeSeries::new(tgrid.to_vec(), values))
}

/// Hahn-echoed version: the levels are swapped by an ideal π pulse at τ and read at 2τ.
/// The returned time axis is 2τ.
pub fn bath_coherence_echo(
    p: &SpinSystemParams,
    b0: f64,
    t: &TransitionLabel,
    bath: &BathSpec,
    tgrid: &[f64],
) -> Result<TimeSeries> {
    t.check(p)?;
    if bath.n_spins > MAX_BATH_SPINS {
        return Err(Error::Size(format!("{} bath spins exceeds {MAX_BATH_SPINS}", bath.n_spins)));
    }
    let (mu, bu) = t.upper();
    let (ml, bl) = t.lower();
    let u0 = CondEvolution::new(bath, sz_expectation(p, b0, mu, bu))?;
    let u1 = CondEvolution::new(bath, sz_expectation(p, b0, ml, bl))?;
    let values = tgrid
        .par_iter()
        .map(|&tau| {
            let (a0, a1) = (u0.unitary(tau), u1.unitary(tau));
            bath_overlap(bath, &(&a0 * &a1), &(&a1 * &a0))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TimeSeries::new(tgrid.iter().map(|x| 2.0 * x).collect(), values))
}
