//! Entanglement of eigenstates and thermal states: entropy of entanglement,
//! concurrence and negativity. The electron is subsystem A, the nucleus B.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::breitrabi::{eigen_analytic, sub_unchecked, Branch, Half, SpinSystemParams};
use crate::spinalg::{
    c, herm_fn, hermitize, kron, partial_trace, partial_transpose, projector, shannon, sigma_y,
    trace_norm_hermitian, von_neumann_entropy, DensityOperator, Keep, Operator, SubsystemDims,
};
use crate::{Error, Result};

/// Boltzmann constant in rad/µs per kelvin (20.8366 GHz/K).
pub const K_B: f64 = 20.836_619e3 * crate::TWO_PI;

/// Temperature in kelvin; zero selects the ground-manifold limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalSpec {
    pub temperature: f64,
}

impl ThermalSpec {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature.is_finite() && temperature >= 0.0) {
            return Err(Error::Domain(format!("temperature must be >= 0 K, got {temperature}")));
        }
        Ok(Self { temperature })
    }
}

pub fn electron_nucleus_dims(p: &SpinSystemParams) -> SubsystemDims {
    SubsystemDims::new(2, p.nuclear_dim())
}

fn check_level(p: &SpinSystemParams, m: Half, branch: Branch) -> Result<()> {
    if p.level_exists(m, branch) {
        Ok(())
    } else {
        Err(Error::Domain(format!("level m={m} {} does not exist", branch.symbol())))
    }
}

/// Entropy of entanglement `-a² log a² - b² log b²` of φ±_m, in bits.
pub fn eigenstate_entanglement(p: &SpinSystemParams, b0: f64, m: Half, branch: Branch) -> Result<f64> {
    eigenstate_entanglement_base(p, b0, m, branch, 2)
}

pub fn eigenstate_entanglement_base(p: &SpinSystemParams, b0: f64, m: Half, branch: Branch, base: u32) -> Result<f64> {
    check_level(p, m, branch)?;
    let s = sub_unchecked(p, b0, m);
    Ok(shannon(&[s.a().powi(2), s.b().powi(2)], base as f64))
}

/// Same quantity through the reduced electron state of the numeric vector.
pub fn eigenstate_entanglement_reduced(p: &SpinSystemParams, b0: f64, m: Half, branch: Branch, base: u32) -> Result<f64> {
    check_level(p, m, branch)?;
    let v = crate::breitrabi::level_vector_at(p, b0, m, branch);
    let rho = DensityOperator::pure(&v);
    let red = partial_trace(&rho, electron_nucleus_dims(p), Keep::A)?;
    Ok(von_neumann_entropy(&red, base))
}

/// `exp(-H/k_B T)/Z` from the analytic spectrum. At T = 0 the ground manifold
/// (levels within 1e-9 A of the minimum) is populated uniformly.
pub fn thermal_state(p: &SpinSystemParams, b0: f64, spec: ThermalSpec) -> Result<DensityOperator> {
    let es = eigen_analytic(p, b0)?;
    let e = es.energies();
    let e0 = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = if spec.temperature == 0.0 {
        e.iter().map(|&x| if x - e0 <= 1e-9 * p.a_iso { 1.0 } else { 0.0 }).collect()
    } else {
        let kt = K_B * spec.temperature;
        e.iter().map(|&x| (-(x - e0) / kt).exp()).collect()
    };
    let z: f64 = w.iter().sum();
    let d = p.dim();
    let mut rho = Operator::zeros(d, d);
    for (k, wk) in w.iter().enumerate() {
        if *wk > 0.0 {
            rho += projector(&es.vectors[k]) * c(wk / z);
        }
    }
    Ok(DensityOperator::new_unchecked(hermitize(&rho)))
}

/// Wootters concurrence of a two-qubit state.
pub fn concurrence(rho: &DensityOperator) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::Dimension(format!("concurrence needs a 4-dim state, got {}", rho.dim())));
    }
    let yy = kron(&sigma_y(), &sigma_y());
    // λ_i are the singular values of sqrt(ρ) Y sqrt(ρ)*, i.e. sqrt(eig(ρ ρ̃))
    let s = herm_fn(&hermitize(rho.op()), |x| x.max(0.0).sqrt())?;
    let vals = (&s * &yy * s.conjugate()).singular_values();
    let mut l: Vec<f64> = vals.iter().copied().collect();
    l.sort_by(|a, b| b.total_cmp(a));
    Ok((l[0] - l[1] - l[2] - l[3]).clamp(0.0, 1.0))
}

/// `(‖ρ^{T_A}‖₁ - 1)/(min(dA, dB) - 1)`. Zero does not certify separability beyond 2x3.
pub fn negativity(rho: &DensityOperator, dims: SubsystemDims) -> Result<f64> {
    negativity_on(rho, dims, Keep::A)
}

pub fn negativity_on(rho: &DensityOperator, dims: SubsystemDims, which: Keep) -> Result<f64> {
    let pt = partial_transpose(rho.op(), dims, which)?;
    let norm = trace_norm_hermitian(&hermitize(&pt))?;
    let dmin = dims.da.min(dims.db);
    if dmin < 2 {
        return Ok(0.0);
    }
    Ok(((norm - 1.0) / (dmin as f64 - 1.0)).max(0.0))
}

/// One point of a thermal sweep: concurrence for 4-dim systems, negativity otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalRow {
    pub b0: f64,
    pub temperature: f64,
    pub value: f64,
}

pub fn thermal_entanglement(p: &SpinSystemParams, b0: f64, spec: ThermalSpec) -> Result<f64> {
    let rho = thermal_state(p, b0, spec)?;
    if p.dim() == 4 {
        concurrence(&rho)
    } else {
        negativity(&rho, electron_nucleus_dims(p))
    }
}

/// Grid sweep over fields and temperatures, rows in input order (field-major).
pub fn thermal_sweep(p: &SpinSystemParams, fields: &[f64], temps: &[f64]) -> Result<Vec<ThermalRow>> {
    let pts: Vec<(f64, f64)> = fields.iter().flat_map(|&b| temps.iter().map(move |&t| (b, t))).collect();
    pts.par_iter()
        .map(|&(b0, t)| {
            let value = thermal_entanglement(p, b0, ThermalSpec::new(t)?)?;
            Ok(ThermalRow { b0, temperature: t, value })
        })
        .collect()
}

/// Thermal energy `k_B T` in MHz, for reporting.
pub fn kt_mhz(temperature: f64) -> f64 {
    crate::to_mhz(K_B * temperature)
}
