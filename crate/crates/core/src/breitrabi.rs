//! Breit–Rabi model of one donor: Hamiltonian, analytic eigensystem,
//! cancellation resonances, energy stationary points and ordering phases.
//!
//! The product basis is `|m_S> ⊗ |m_I>` with both factors in descending m
//! order, so index `s * (2I+1) + k` holds `m_S = 1/2 - s`, `m_I = I - k`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::angular::{spin_operators, SpinQuantumNumber};
use crate::roots::bisect;
use crate::spinalg::{c, eigh, identity, kron, Operator, StateVector, C64};
use crate::{mhz, to_mhz, Error, Result};

/// A half-integer stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Half(pub i32);

impl Half {
    pub fn from_twice(t: i32) -> Self {
        Half(t)
    }

    pub fn int(k: i32) -> Self {
        Half(2 * k)
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn twice(self) -> i32 {
        self.0
    }

    pub fn minus_one(self) -> Self {
        Half(self.0 - 2)
    }
}

impl fmt::Display for Half {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl FromStr for Half {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().replace('\u{2212}', "-");
        let bad = || Error::Config(format!("'{s}' is not an integer or half-integer"));
        if let Some((num, den)) = s.split_once('/') {
            let n: i32 = num.trim().parse().map_err(|_| bad())?;
            if den.trim() != "2" || n % 2 == 0 {
                return Err(bad());
            }
            Ok(Half(n))
        } else if let Ok(k) = s.parse::<i32>() {
            Ok(Half(2 * k))
        } else {
            let x: f64 = s.parse().map_err(|_| bad())?;
            let t = (2.0 * x).round();
            if (2.0 * x - t).abs() > 1e-9 {
                return Err(bad());
            }
            Ok(Half(t as i32))
        }
    }
}

impl Serialize for Half {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Half {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Branch::Plus => "+",
            Branch::Minus => "-",
        }
    }
}

impl Serialize for Branch {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for Branch {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match String::deserialize(d)?.as_str() {
            "+" => Ok(Branch::Plus),
            "-" => Ok(Branch::Minus),
            other => Err(serde::de::Error::custom(format!("bad branch '{other}'"))),
        }
    }
}

/// Constants of one donor species, in rad/µs (per tesla for the gyromagnetic ratios).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSystemParams {
    pub name: String,
    pub two_i: u32,
    pub gamma_e: f64,
    pub gamma_n: f64,
    pub a_iso: f64,
}

impl SpinSystemParams {
    pub fn new(name: &str, two_i: u32, gamma_e: f64, gamma_n: f64, a_iso: f64) -> Result<Self> {
        let p = Self { name: name.to_string(), two_i, gamma_e, gamma_n, a_iso };
        p.validate()?;
        Ok(p)
    }

    /// Build from linear units: GHz/T, MHz/T, MHz.
    pub fn from_linear(name: &str, two_i: u32, ge_ghz_per_t: f64, gn_mhz_per_t: f64, a_mhz: f64) -> Result<Self> {
        Self::new(name, two_i, mhz(ge_ghz_per_t * 1e3), mhz(gn_mhz_per_t), mhz(a_mhz))
    }

    pub fn si_p() -> Self {
        Self::from_linear("Si:P", 1, 27.974, 17.251, 117.5).expect("preset is valid")
    }

    pub fn si_bi() -> Self {
        Self::from_linear("Si:Bi", 9, 27.997, 6.963, 1475.4).expect("preset is valid")
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "Si:P" => Some(Self::si_p()),
            "Si:Bi" => Some(Self::si_bi()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.two_i == 0 {
            return Err(Error::Domain("nuclear spin must be positive".into()));
        }
        for (k, v) in [("gamma_e", self.gamma_e), ("gamma_n", self.gamma_n), ("a_iso", self.a_iso)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{k} must be positive, got {v}")));
            }
        }
        let dg = self.delta_gamma();
        if !(dg > 0.0 && dg < 1e-2) {
            return Err(Error::Domain(format!("gamma_n/gamma_e = {dg} outside (0, 1e-2)")));
        }
        Ok(())
    }

    pub fn i(&self) -> f64 {
        self.two_i as f64 / 2.0
    }

    pub fn delta_gamma(&self) -> f64 {
        self.gamma_n / self.gamma_e
    }

    pub fn nuclear_dim(&self) -> usize {
        self.two_i as usize + 1
    }

    pub fn dim(&self) -> usize {
        2 * self.nuclear_dim()
    }

    /// Largest |m|, I + 1/2.
    pub fn m_edge(&self) -> Half {
        Half(self.two_i as i32 + 1)
    }

    /// Reduced field ω̃₀ = γe B₀ / A.
    pub fn w_tilde(&self, b0: f64) -> f64 {
        self.gamma_e * b0 / self.a_iso
    }

    /// All m values, descending.
    pub fn m_values(&self) -> Vec<Half> {
        let e = self.m_edge().0;
        (0..=(e as usize)).map(|k| Half(e - 2 * k as i32)).collect()
    }

    pub fn is_edge(&self, m: Half) -> bool {
        m.0.abs() == self.m_edge().0
    }

    /// m has the parity of I + 1/2 and |m| <= I + 1/2.
    pub fn m_allowed(&self, m: Half) -> bool {
        let e = self.m_edge().0;
        m.0.abs() <= e && (m.0 - e) % 2 == 0
    }

    pub fn level_exists(&self, m: Half, branch: Branch) -> bool {
        let e = self.m_edge().0;
        if !self.m_allowed(m) {
            return false;
        }
        !((m.0 == -e && branch == Branch::Plus) || (m.0 == e && branch == Branch::Minus))
    }
}

/// Validated non-negative magnetic field in tesla.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FieldPoint {
    pub b0: f64,
}

impl FieldPoint {
    pub fn new(b0: f64) -> Result<Self> {
        if !(b0.is_finite() && b0 >= 0.0) {
            return Err(Error::Domain(format!("field must be finite and >= 0, got {b0}")));
        }
        Ok(Self { b0 })
    }
}

fn check_field(b0: f64) -> Result<()> {
    FieldPoint::new(b0).map(|_| ())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceParams {
    pub w: f64,
    pub o: f64,
    pub eps: f64,
    pub r: f64,
    pub theta: f64,
}

impl SubspaceParams {
    pub fn cos_theta(&self) -> f64 {
        self.theta.cos()
    }

    pub fn a(&self) -> f64 {
        (self.theta / 2.0).cos()
    }

    pub fn b(&self) -> f64 {
        (self.theta / 2.0).sin()
    }
}

fn check_m(p: &SpinSystemParams, m: Half) -> Result<()> {
    if !p.m_allowed(m) {
        return Err(Error::Domain(format!("m = {m} is not a half-integer with |m| <= {}", p.m_edge())));
    }
    Ok(())
}

/// Sub-Hamiltonian parameters of the 2x2 block with total magnetisation m.
pub fn subspace_params(p: &SpinSystemParams, b0: f64, m: Half) -> Result<SubspaceParams> {
    check_m(p, m)?;
    Ok(sub_unchecked(p, b0, m))
}

pub(crate) fn sub_unchecked(p: &SpinSystemParams, b0: f64, m: Half) -> SubspaceParams {
    let i = p.i();
    let dg = p.delta_gamma();
    let wt = p.w_tilde(b0);
    let mv = m.value();
    let w = mv + wt * (1.0 + dg);
    let o = (i * (i + 1.0) + 0.25 - mv * mv).max(0.0).sqrt();
    let eps = (1.0 + 4.0 * wt * mv * dg) / 2.0;
    if p.is_edge(m) {
        SubspaceParams { w, o: 0.0, eps, r: w, theta: 0.0 }
    } else {
        SubspaceParams { w, o, eps, r: w.hypot(o), theta: o.atan2(w) }
    }
}

/// cos θ_m.
pub fn cos_theta(p: &SpinSystemParams, b0: f64, m: Half) -> f64 {
    if p.is_edge(m) {
        1.0
    } else {
        let s = sub_unchecked(p, b0, m);
        s.w / s.r
    }
}

/// Energy of φ±_m in rad/µs (no existence check).
pub fn level_energy(p: &SpinSystemParams, b0: f64, m: Half, branch: Branch) -> f64 {
    let s = sub_unchecked(p, b0, m);
    0.5 * p.a_iso * (-s.eps + branch.sign() * s.r)
}

/// dE/dB₀ of φ±_m in rad/µs per tesla.
pub fn level_energy_slope(p: &SpinSystemParams, b0: f64, m: Half, branch: Branch) -> f64 {
    let dg = p.delta_gamma();
    -m.value() * p.gamma_e * dg + branch.sign() * 0.5 * p.gamma_e * (1.0 + dg) * cos_theta(p, b0, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticLevel {
    pub m: Half,
    pub branch: Branch,
    pub theta: f64,
    pub a: f64,
    pub b: f64,
    pub energy: f64,
    pub sorted_index: usize,
}

#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub b0: f64,
    /// Ascending in energy; `sorted_index` is the 1-based position.
    pub levels: Vec<AdiabaticLevel>,
    /// Product-basis vectors aligned with `levels`.
    pub vectors: Vec<StateVector>,
}

impl EigenSystem {
    pub fn position(&self, m: Half, branch: Branch) -> Option<usize> {
        self.levels.iter().position(|l| l.m == m && l.branch == branch)
    }

    pub fn level(&self, m: Half, branch: Branch) -> Option<&AdiabaticLevel> {
        self.position(m, branch).map(|k| &self.levels[k])
    }

    pub fn vector(&self, m: Half, branch: Branch) -> Option<&StateVector> {
        self.position(m, branch).map(|k| &self.vectors[k])
    }

    pub fn energies(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.energy).collect()
    }

    /// Unitary whose columns are the level vectors in sorted order.
    pub fn basis_matrix(&self) -> Operator {
        let d = self.vectors.len();
        let mut u = Operator::zeros(d, d);
        for (k, v) in self.vectors.iter().enumerate() {
            u.set_column(k, v);
        }
        u
    }

    pub fn to_json(&self) -> EigenSystemJson {
        EigenSystemJson {
            b0_tesla: self.b0,
            levels: self
                .levels
                .iter()
                .map(|l| LevelJson {
                    m: l.m,
                    branch: l.branch,
                    theta: l.theta,
                    a: l.a,
                    b: l.b,
                    energy_mhz: to_mhz(l.energy),
                    index: l.sorted_index,
                })
                .collect(),
            vectors: self.vectors.iter().map(|v| v.iter().map(|z| [z.re, z.im]).collect()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelJson {
    pub m: Half,
    pub branch: Branch,
    pub theta: f64,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "energy_MHz")]
    pub energy_mhz: f64,
    pub index: usize,
}

/// File form of an eigensystem; energies in MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystemJson {
    pub b0_tesla: f64,
    pub levels: Vec<LevelJson>,
    pub vectors: Vec<Vec<[f64; 2]>>,
}

/// Product-basis index of `|m_S> ⊗ |m_I>` given twice the quantum numbers.
pub fn product_index(p: &SpinSystemParams, two_ms: i32, two_mi: i32) -> Option<usize> {
    let ti = p.two_i as i32;
    if two_mi.abs() > ti || (ti - two_mi) % 2 != 0 || two_ms.abs() != 1 {
        return None;
    }
    let s = if two_ms > 0 { 0 } else { 1 };
    Some(s * p.nuclear_dim() + ((ti - two_mi) / 2) as usize)
}

/// Analytic vector of φ±_m at a field (no existence check).
pub fn level_vector_at(p: &SpinSystemParams, b0: f64, m: Half, branch: Branch) -> StateVector {
    let s = sub_unchecked(p, b0, m);
    level_vector(p, m, branch, s.a(), s.b())
}

/// φ+_m = a|+,m-1/2> + b|-,m+1/2>,  φ-_m = a|-,m+1/2> - b|+,m-1/2>.
fn level_vector(p: &SpinSystemParams, m: Half, branch: Branch, a: f64, b: f64) -> StateVector {
    let mut v = StateVector::zeros(p.dim());
    let up = product_index(p, 1, m.0 - 1);
    let down = product_index(p, -1, m.0 + 1);
    let (first, second, sb) = match branch {
        Branch::Plus => (up, down, b),
        Branch::Minus => (down, up, -b),
    };
    if let Some(k) = first {
        v[k] = c(a);
    }
    if let Some(k) = second {
        v[k] += c(sb);
    }
    v
}

fn assign_sorted(p: &SpinSystemParams, mut items: Vec<(AdiabaticLevel, StateVector)>) -> (Vec<AdiabaticLevel>, Vec<StateVector>) {
    let tol = 1e-12 * p.a_iso;
    items.sort_by(|x, y| x.0.energy.total_cmp(&y.0.energy));
    // Cluster near-degenerate energies, then order inside clusters by m desc, minus first.
    let mut start = 0;
    while start < items.len() {
        let mut end = start + 1;
        while end < items.len() && items[end].0.energy - items[end - 1].0.energy <= tol {
            end += 1;
        }
        items[start..end].sort_by(|x, y| y.0.m.cmp(&x.0.m).then(x.0.branch.cmp(&y.0.branch).reverse()));
        start = end;
    }
    let mut levels = Vec::with_capacity(items.len());
    let mut vectors = Vec::with_capacity(items.len());
    for (k, (mut l, v)) in items.into_iter().enumerate() {
        l.sorted_index = k + 1;
        levels.push(l);
        vectors.push(v);
    }
    (levels, vectors)
}

/// Closed-form eigensystem.
pub fn eigen_analytic(p: &SpinSystemParams, b0: f64) -> Result<EigenSystem> {
    check_field(b0)?;
    let mut items = Vec::with_capacity(p.dim());
    for m in p.m_values() {
        let s = sub_unchecked(p, b0, m);
        for branch in [Branch::Plus, Branch::Minus] {
            if !p.level_exists(m, branch) {
                continue;
            }
            let (a, b) = (s.a(), s.b());
            let level = AdiabaticLevel {
                m,
                branch,
                theta: s.theta,
                a,
                b,
                energy: 0.5 * p.a_iso * (-s.eps + branch.sign() * s.r),
                sorted_index: 0,
            };
            items.push((level, level_vector(p, m, branch, a, b)));
        }
    }
    let (levels, vectors) = assign_sorted(p, items);
    Ok(EigenSystem { b0, levels, vectors })
}

/// Operators of the coupled system on the product space.
#[derive(Debug, Clone)]
pub struct SystemOperators {
    pub sx: Operator,
    pub sy: Operator,
    pub sz: Operator,
    pub ix: Operator,
    pub iy: Operator,
    pub iz: Operator,
}

impl SystemOperators {
    pub fn new(p: &SpinSystemParams) -> Self {
        let s = spin_operators(SpinQuantumNumber::new(1));
        let n = spin_operators(SpinQuantumNumber::new(p.two_i));
        let (i2, in_) = (identity(2), identity(p.nuclear_dim()));
        Self {
            sx: kron(&s.jx, &in_),
            sy: kron(&s.jy, &in_),
            sz: kron(&s.jz, &in_),
            ix: kron(&i2, &n.jx),
            iy: kron(&i2, &n.jy),
            iz: kron(&i2, &n.jz),
        }
    }

    /// F_x = S_x + δγ I_x.
    pub fn fx(&self, dg: f64) -> Operator {
        &self.sx + &self.ix * c(dg)
    }

    pub fn fy(&self, dg: f64) -> Operator {
        &self.sy + &self.iy * c(dg)
    }

    /// Total magnetisation S_z + I_z.
    pub fn mz(&self) -> Operator {
        &self.sz + &self.iz
    }
}

pub fn hamiltonian_matrix(p: &SpinSystemParams, b0: f64) -> Operator {
    hamiltonian_with(p, b0, &SystemOperators::new(p))
}

pub fn hamiltonian_with(p: &SpinSystemParams, b0: f64, o: &SystemOperators) -> Operator {
    let zeeman = (&o.sz * c(p.gamma_e) - &o.iz * c(p.gamma_n)) * c(b0);
    let hf = (&o.sx * &o.ix + &o.sy * &o.iy + &o.sz * &o.iz) * c(p.a_iso);
    zeeman + hf
}

/// Dense diagonalisation oracle, labelled by overlap with the analytic vectors.
pub fn eigen_numeric(p: &SpinSystemParams, b0: f64) -> Result<EigenSystem> {
    check_field(b0)?;
    let ops = SystemOperators::new(p);
    let h = hamiltonian_with(p, b0, &ops);
    let (vals, vecs) = eigh(&h)?;
    let d = p.dim();
    let tol = 1e-9 * (p.a_iso + p.gamma_e * b0);

    // Resolve degenerate clusters by diagonalising total magnetisation inside each.
    let mz = ops.mz();
    let mut resolved: Vec<(f64, StateVector)> = Vec::with_capacity(d);
    let mut start = 0;
    while start < d {
        let mut end = start + 1;
        while end < d && vals[end] - vals[end - 1] <= tol {
            end += 1;
        }
        let block = vecs.columns(start, end - start).into_owned();
        if end - start == 1 {
            resolved.push((vals[start], block.column(0).into_owned()));
        } else {
            let proj = block.adjoint() * &mz * &block;
            let (_, w) = eigh(&crate::spinalg::hermitize(&proj))?;
            let rotated = &block * w;
            let hb = rotated.adjoint() * &h * &rotated;
            for k in 0..(end - start) {
                resolved.push((hb[(k, k)].re, rotated.column(k).into_owned()));
            }
        }
        start = end;
    }

    let analytic = eigen_analytic(p, b0)?;
    let mut used = vec![false; d];
    let mut items = Vec::with_capacity(d);
    for (level, av) in analytic.levels.iter().zip(&analytic.vectors) {
        let (best, ov) = resolved
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, (_, v))| (k, av.dotc(v)))
            .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
            .ok_or_else(|| Error::LabelMatch("ran out of numeric vectors".into()))?;
        if ov.norm() < 0.9 {
            return Err(Error::LabelMatch(format!(
                "level m={} {} has max overlap {:.3}",
                level.m,
                level.branch.symbol(),
                ov.norm()
            )));
        }
        used[best] = true;
        let phase = ov.conj() / c(ov.norm());
        let v = &resolved[best].1 * phase;
        let mut l = *level;
        l.energy = resolved[best].0;
        items.push((l, v));
    }
    let (levels, vectors) = assign_sorted(p, items);
    Ok(EigenSystem { b0, levels, vectors })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResonanceKind {
    I,
    II,
}

/// Cancellation resonance field of subspace m, if non-negative.
pub fn cancellation_resonance(p: &SpinSystemParams, m: Half, kind: ResonanceKind) -> Result<Option<f64>> {
    check_m(p, m)?;
    let scale = p.a_iso / (p.gamma_e * (1.0 + p.delta_gamma()));
    let b = match kind {
        ResonanceKind::I => -m.value() * scale,
        ResonanceKind::II => {
            if p.is_edge(m) {
                return Err(Error::Domain("type II needs |m| < I + 1/2".into()));
            }
            (sub_unchecked(p, 0.0, m).o - m.value()) * scale
        }
    };
    Ok((b >= 0.0).then_some(b))
}

/// Upper end of a bracket on which `cos θ_m(B) > target`.
fn cos_bracket(p: &SpinSystemParams, m: Half, target: f64) -> Option<f64> {
    let mut hi = p.a_iso / p.gamma_e;
    for _ in 0..200 {
        if cos_theta(p, hi, m) > target {
            return Some(hi);
        }
        hi *= 2.0;
    }
    None
}

/// Field where cos θ_m(B₀) equals `target`, if reachable for B₀ >= 0.
pub fn field_for_cos_theta(p: &SpinSystemParams, m: Half, target: f64) -> Option<f64> {
    let c0 = cos_theta(p, 0.0, m);
    if c0 > target || target >= 1.0 {
        return None;
    }
    if c0 == target {
        return Some(0.0);
    }
    let hi = cos_bracket(p, m, target)?;
    bisect(|b| cos_theta(p, b, m) - target, 0.0, hi, 1e-14)
}

/// Field where dE±_m/dB₀ = 0.
pub fn energy_stationary_fields(p: &SpinSystemParams, m: Half, branch: Branch) -> Result<Option<f64>> {
    check_m(p, m)?;
    if p.is_edge(m) {
        return Err(Error::Domain("edge levels have constant slope".into()));
    }
    let dg = p.delta_gamma();
    let target = branch.sign() * 2.0 * m.value() * dg / (1.0 + dg);
    Ok(field_for_cos_theta(p, m, target))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderingPhase {
    Low,
    High,
}

/// Low phase iff E+_m > E+_{m-1} for every pair of existing plus levels.
pub fn energy_ordering_phase(p: &SpinSystemParams, b0: f64) -> OrderingPhase {
    let low = p
        .m_values()
        .into_iter()
        .filter(|&m| p.level_exists(m, Branch::Plus) && p.level_exists(m.minus_one(), Branch::Plus))
        .all(|m| level_energy(p, b0, m, Branch::Plus) > level_energy(p, b0, m.minus_one(), Branch::Plus));
    if low {
        OrderingPhase::Low
    } else {
        OrderingPhase::High
    }
}

/// Field of the ordering-phase transition inside `[lo, hi]`, by bisection on the predicate.
pub fn phase_boundary(p: &SpinSystemParams, mut lo: f64, mut hi: f64) -> Option<f64> {
    let plo = energy_ordering_phase(p, lo);
    if plo == energy_ordering_phase(p, hi) {
        return None;
    }
    while hi - lo > 1e-9 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if energy_ordering_phase(p, mid) == plo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// `<ψ|A|ψ>` real part.
pub fn expectation(v: &StateVector, a: &Operator) -> f64 {
    v.dotc(&(a * v)).re
}

/// `<u|A|v>`.
pub fn matrix_element(u: &StateVector, a: &Operator, v: &StateVector) -> C64 {
    u.dotc(&(a * v))
}

/// Sum of all energies at a field, for trace checks.
pub fn energy_sum(es: &EigenSystem) -> f64 {
    es.levels.iter().map(|l| l.energy).sum()
}

/// Helper for callers that need a plain vector of energies.
pub fn energies_vector(es: &EigenSystem) -> DVector<f64> {
    DVector::from_vec(es.energies())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinalg::{commutator, max_norm};
    use approx::assert_relative_eq;

    fn h(t: i32) -> Half {
        Half(t)
    }

    #[test]
    fn half_formatting_round_trips() {
        for t in [-9, -8, -7, -1, 0, 1, 11] {
            let s = Half(t).to_string();
            assert_eq!(s.parse::<Half>().unwrap(), Half(t));
        }
        assert_eq!(Half(-7).to_string(), "-7/2");
        assert_eq!(Half(-8).to_string(), "-4");
        assert_eq!("−7/2".parse::<Half>().unwrap(), Half(-7));
        assert!("1/3".parse::<Half>().is_err());
    }

    #[test]
    fn zero_field_radius_is_i_plus_half() {
        let p = SpinSystemParams::si_bi();
        for m in p.m_values() {
            if !p.is_edge(m) {
                let s = subspace_params(&p, 0.0, m).unwrap();
                assert_relative_eq!(s.r, 5.0, epsilon = 1e-13);
            }
        }
        assert!(subspace_params(&p, 0.0, h(12)).is_err());
        assert!(subspace_params(&p, 0.0, h(1)).is_err());
    }

    #[test]
    fn type_one_field_zeroes_w() {
        let p = SpinSystemParams::si_bi();
        let b = cancellation_resonance(&p, h(-2), ResonanceKind::I).unwrap().unwrap();
        assert!((b - 0.0527).abs() < 5e-4);
        assert!(subspace_params(&p, b, h(-2)).unwrap().w.abs() <= 1e-12);
        assert_eq!(cancellation_resonance(&p, h(2), ResonanceKind::I).unwrap(), None);
    }

    #[test]
    fn type_two_field_equalises_w_and_o() {
        let p = SpinSystemParams::si_bi();
        let b = cancellation_resonance(&p, h(2), ResonanceKind::II).unwrap().unwrap();
        let s = subspace_params(&p, b, h(2)).unwrap();
        assert_relative_eq!(s.w, s.o, epsilon = 1e-12);
        assert_relative_eq!(s.theta, std::f64::consts::FRAC_PI_4, epsilon = 1e-12);
    }

    #[test]
    fn si_p_zero_field_singlet_triplet() {
        let p = SpinSystemParams::si_p();
        let (vals, _) = eigh(&hamiltonian_matrix(&p, 0.0)).unwrap();
        let a = p.a_iso;
        assert_relative_eq!(vals[0], -0.75 * a, epsilon = 1e-10 * a);
        for k in 1..4 {
            assert_relative_eq!(vals[k], 0.25 * a, epsilon = 1e-10 * a);
        }
    }

    #[test]
    fn hamiltonian_conserves_magnetisation() {
        let p = SpinSystemParams::si_bi();
        let ops = SystemOperators::new(&p);
        let hm = hamiltonian_with(&p, 0.3, &ops);
        assert!(max_norm(&commutator(&hm, &ops.mz())) <= 1e-12 * max_norm(&hm));
    }

    #[test]
    fn si_bi_zero_field_levels() {
        let p = SpinSystemParams::si_bi();
        let es = eigen_analytic(&p, 0.0).unwrap();
        let a = p.a_iso;
        let top = es.levels.last().unwrap().energy;
        assert_relative_eq!(top, a * 4.5 / 2.0, epsilon = 1e-12 * a);
        assert_relative_eq!(to_mhz(top), 3319.65, epsilon = 0.01);
        // F = I - 1/2 multiplet; the stretched minus level joins the upper cluster.
        let lower: Vec<_> = es.levels.iter().filter(|l| l.energy < 0.0).collect();
        assert_eq!(lower.len(), 9);
        assert!(lower.iter().all(|l| l.branch == Branch::Minus));
        let upper = es.levels.iter().filter(|l| (l.energy - top).abs() < 1e-12 * a).count();
        assert_eq!(upper, 11);
        for l in lower {
            assert_relative_eq!(l.energy, -a * 5.5 / 2.0, epsilon = 1e-12 * a);
        }
    }

    #[test]
    fn analytic_vectors_are_eigenvectors() {
        for p in [SpinSystemParams::si_p(), SpinSystemParams::si_bi()] {
            for b0 in [0.0, 0.01, 0.2, 3.0] {
                let es = eigen_analytic(&p, b0).unwrap();
                let hm = hamiltonian_matrix(&p, b0);
                for (l, v) in es.levels.iter().zip(&es.vectors) {
                    let r = &hm * v - v * c(l.energy);
                    assert!(r.norm() <= 1e-10 * p.a_iso, "{} {:?} at {b0}", l.m, l.branch);
                }
                let u = es.basis_matrix();
                assert!(max_norm(&(u.adjoint() * &u - identity(p.dim()))) < 1e-12);
            }
        }
    }

    #[test]
    fn numeric_matches_analytic_including_degenerate_zero_field() {
        let p = SpinSystemParams::si_bi();
        for b0 in [0.0, 0.05269, 0.3, 6.0] {
            let an = eigen_analytic(&p, b0).unwrap();
            let nu = eigen_numeric(&p, b0).unwrap();
            for (x, y) in an.levels.iter().zip(&nu.levels) {
                assert_relative_eq!(x.energy, y.energy, epsilon = 1e-9 * p.a_iso);
            }
            for (l, v) in an.levels.iter().zip(&an.vectors) {
                let w = nu.vector(l.m, l.branch).unwrap();
                assert!(v.dotc(w).norm() >= 1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn edge_levels_have_closed_form_energy() {
        let p = SpinSystemParams::si_bi();
        let b0 = 0.7;
        let w0 = p.gamma_e * b0;
        let dg = p.delta_gamma();
        let es = eigen_analytic(&p, b0).unwrap();
        let top = es.level(h(10), Branch::Plus).unwrap();
        let bottom = es.level(h(-10), Branch::Minus).unwrap();
        let base = p.a_iso * p.i() / 2.0;
        assert_relative_eq!(top.energy, 0.5 * w0 * (1.0 - 2.0 * dg * p.i()) + base, epsilon = 1e-9);
        assert_relative_eq!(bottom.energy, -0.5 * w0 * (1.0 - 2.0 * dg * p.i()) + base, epsilon = 1e-9);
        assert_eq!(top.theta, 0.0);
        assert!(es.level(h(-10), Branch::Plus).is_none());
    }

    #[test]
    fn stationary_points() {
        let p = SpinSystemParams::si_bi();
        let bp = energy_stationary_fields(&p, h(2), Branch::Plus).unwrap();
        assert_eq!(bp, None);
        let b_plus = energy_stationary_fields(&p, h(-2), Branch::Plus).unwrap().unwrap();
        let b_minus = energy_stationary_fields(&p, h(-2), Branch::Minus).unwrap().unwrap();
        let res = cancellation_resonance(&p, h(-2), ResonanceKind::I).unwrap().unwrap();
        assert!((b_plus - res).abs() < 1e-3 && (b_minus - res).abs() < 1e-3);
        for (b, br) in [(b_plus, Branch::Plus), (b_minus, Branch::Minus)] {
            let dh = 1e-6;
            let fd = (level_energy(&p, b + dh, h(-2), br) - level_energy(&p, b - dh, h(-2), br)) / (2.0 * dh);
            assert!(fd.abs() <= 1e-9 * p.gamma_e, "fd = {fd}");
        }
    }

    #[test]
    fn ordering_phases() {
        let p = SpinSystemParams::si_bi();
        assert_eq!(energy_ordering_phase(&p, 6.0), OrderingPhase::Low);
        assert_eq!(energy_ordering_phase(&p, 150.0), OrderingPhase::High);
        let b = phase_boundary(&p, 6.0, 150.0).unwrap();
        assert!((100.0..=115.0).contains(&b), "boundary {b}");
    }

    #[test]
    fn negative_field_rejected() {
        assert!(FieldPoint::new(-0.1).is_err());
        assert!(eigen_analytic(&SpinSystemParams::si_p(), -1.0).is_err());
    }
}
