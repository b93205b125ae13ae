//! Acceptance table: each criterion recomputes its quantities from the library
//! and reports PASS/FAIL with the measured values and the wall-clock time.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::breitrabi::{cancellation_resonance, eigen_analytic, eigen_numeric, phase_boundary, Half, ResonanceKind, SpinSystemParams};
use crate::dynamics::{hahn_echo_check, protocol, rwa_error, EchoEnvironment, IntegratorConfig, ProtocolSpec, Scheme, WaitChannel};
use crate::entangle::{concurrence, negativity};
use crate::noise::{
    bath_coherence, evolve_lindblad, fitted_dephasing_rate, lindblad, lindblad_z_truncated, owp_find, predicted_rates, BathSpec, NoiseAxis,
    NoiseSpec,
};
use crate::roots::golden_min;
use crate::spectra::{
    cw_spectrum, fsp_exact, fsp_limit_closed_form, rabi_frequency, resonance_fields, transition_rate, Extremum, ScanGrid, TransitionKind,
    TransitionLabel,
};
use crate::spinalg::{eigh, random, DensityOperator, SubsystemDims};
use crate::{mhz, Result};

/// Criteria whose targets are not reproducible from the model (see the README).
pub const KNOWN_UNATTAINABLE: &[u32] = &[6];

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub detail: String,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: String) -> Self {
        Self { name: name.into(), detail, pass }
    }
}

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: u32,
    pub title: &'static str,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
    pub limit: Duration,
    pub error: Option<String>,
}

impl CriterionResult {
    pub fn within_time(&self) -> bool {
        self.elapsed <= self.limit
    }

    pub fn pass(&self) -> bool {
        self.error.is_none() && self.within_time() && self.checks.iter().all(|c| c.pass)
    }

    /// One summary line followed by one indented line per check.
    pub fn report(&self) -> String {
        let mut s = format!(
            "{} {}: {} ({:.2} s, limit {} s)",
            if self.pass() { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.limit.as_secs()
        );
        if let Some(e) = &self.error {
            s.push_str(&format!("\n    error: {e}"));
        }
        for c in &self.checks {
            s.push_str(&format!("\n    [{}] {}: {}", if c.pass { "ok" } else { "x" }, c.name, c.detail));
        }
        s
    }
}

type Body = fn() -> Result<Vec<Check>>;

const CRITERIA: &[(u32, &str, u64, Body)] = &[
    (1, "S-band resonance fields", 5, criterion_1),
    (2, "S-band rate and Rabi ratios", 1, criterion_2),
    (3, "adiabatic-Z dephasing ratio", 1, criterion_3),
    (4, "cancellation resonances and FSPs", 10, criterion_4),
    (5, "optimal working point", 60, criterion_5),
    (6, "X-band near-degenerate pair", 5, criterion_6),
    (7, "RWA convergence", 120, criterion_7),
    (8, "property suites", 300, criterion_8),
    (9, "energy-ordering phase boundary", 5, criterion_9),
];

pub fn criterion_ids() -> Vec<u32> {
    CRITERIA.iter().map(|c| c.0).collect()
}

pub fn run(id: u32) -> Option<CriterionResult> {
    let &(id, title, limit, body) = CRITERIA.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let outcome = body();
    let elapsed = start.elapsed();
    let (checks, error) = match outcome {
        Ok(c) => (c, None),
        Err(e) => (vec![], Some(e.to_string())),
    };
    Some(CriterionResult { id, title, checks, elapsed, limit: Duration::from_secs(limit), error })
}

pub fn run_all() -> Vec<CriterionResult> {
    CRITERIA.iter().filter_map(|c| run(c.0)).collect()
}

fn label(kind: TransitionKind, twice_m: i32) -> TransitionLabel {
    TransitionLabel::new(kind, Half(twice_m))
}

fn within(name: &str, value: f64, target: f64, tol: f64, unit: &str) -> Check {
    Check::new(name, (value - target).abs() <= tol, format!("{value:.5} {unit} (target {target} ± {tol})"))
}

const S_BAND_MHZ: f64 = 4044.0;
const X_BAND_MHZ: f64 = 9700.0;

/// Resonance fields (T) of the S-band pm and mm m=-4 lines.
pub fn s_band_fields() -> Result<(f64, f64)> {
    let p = SpinSystemParams::si_bi();
    let omega = mhz(S_BAND_MHZ);
    let grid = ScanGrid::for_frequency(&p, omega);
    let pick = |t: TransitionLabel| -> Result<f64> {
        resonance_fields(&p, omega, &t, &grid)?
            .first()
            .copied()
            .ok_or_else(|| crate::Error::Numerical(format!("no resonance for {t}")))
    };
    Ok((pick(label(TransitionKind::Pm, -8))?, pick(label(TransitionKind::Mm, -8))?))
}

fn criterion_1() -> Result<Vec<Check>> {
    let p = SpinSystemParams::si_bi();
    let lines = cw_spectrum(&p, mhz(S_BAND_MHZ), &ScanGrid::for_frequency(&p, mhz(S_BAND_MHZ)))?;
    let find = |t: TransitionLabel| lines.iter().find(|l| l.transition == t).map(|l| l.b0 * 1e3).unwrap_or(f64::NAN);
    Ok(vec![
        within("pm(m=-4) field", find(label(TransitionKind::Pm, -8)), 345.02, 1.0, "mT"),
        within("mm(m=-4) field", find(label(TransitionKind::Mm, -8)), 145.63, 1.0, "mT"),
    ])
}

fn criterion_2() -> Result<Vec<Check>> {
    let p = SpinSystemParams::si_bi();
    let (b_pm, b_mm) = s_band_fields()?;
    let (pm, mm) = (label(TransitionKind::Pm, -8), label(TransitionKind::Mm, -8));
    let rate = transition_rate(&p, b_pm, &pm)? / transition_rate(&p, b_mm, &mm)?;
    let w1 = mhz(1.0);
    let rabi = rabi_frequency(&p, b_pm, &pm, w1)? / rabi_frequency(&p, b_mm, &mm, w1)?;
    Ok(vec![within("c.w. rate ratio pm/mm", rate, 1.2, 0.05, ""), within("Rabi ratio pm/mm", rabi, 1.1, 0.05, "")])
}

fn criterion_3() -> Result<Vec<Check>> {
    let p = SpinSystemParams::si_bi();
    let (b_pm, b_mm) = s_band_fields()?;
    let spec = NoiseSpec::adiabatic_z(1.0)?;
    let r_pm = predicted_rates(&p, b_pm, &label(TransitionKind::Pm, -8), &spec)?.t2_rate;
    let r_mm = predicted_rates(&p, b_mm, &label(TransitionKind::Mm, -8), &spec)?.t2_rate;
    // T_S ∝ 1/rate
    Ok(vec![within("T_S(mm)/T_S(pm)", r_pm / r_mm, 1.4, 0.05, "")])
}

fn criterion_4() -> Result<Vec<Check>> {
    let p = SpinSystemParams::si_bi();
    let mut checks = Vec::new();
    for (k, target) in [0.0, 0.05, 0.11, 0.16, 0.21].into_iter().enumerate() {
        let m = Half(-2 * k as i32);
        let b = cancellation_resonance(&p, m, ResonanceKind::I)?.unwrap_or(f64::NAN);
        checks.push(within(&format!("type-I resonance m={}", m.value()), b, target, 0.005, "T"));
    }
    for (k, (tmin, tmax)) in [(0.03, 2.61), (0.08, 0.87), (0.13, 0.52), (0.19, 0.37)].into_iter().enumerate() {
        let m = Half(-2 * k as i32);
        let roots = fsp_exact(&p, &TransitionLabel::new(TransitionKind::Pm, m), &ScanGrid::default())?;
        let bmin = roots.iter().find(|r| r.kind == Extremum::Min).map(|r| r.b0).unwrap_or(f64::NAN);
        checks.push(within(&format!("FSP minimum pm m={}", m.value()), bmin, tmin, 0.005, "T"));
        let bmax = fsp_limit_closed_form(&p, m, Extremum::Max).unwrap_or(f64::NAN);
        checks.push(within(&format!("FSP maximum m={} (δγ→0)", m.value()), bmax, tmax, 0.02, "T"));
    }
    Ok(checks)
}

/// Field minimising the fitted diabatic-Z dephasing rate of pm m=-3 on [lo, hi].
pub fn diabatic_owp(lo: f64, hi: f64) -> Result<f64> {
    let p = SpinSystemParams::si_bi();
    let spec = NoiseSpec::diabatic_z(1.0)?;
    let m = Half(-6);
    let t = TransitionLabel::new(TransitionKind::Pm, m);
    let rate = |b: f64| -> Result<f64> {
        let g = lindblad_z_truncated(&p, b, &spec, m)?;
        let (i, j) = crate::noise::transition_indices(&g, &t)?;
        let pred = predicted_rates(&p, b, &t, &spec)?.t2_rate;
        let times: Vec<f64> = (1..=10).map(|k| k as f64 * 0.1 / pred).collect();
        fitted_dephasing_rate(&g, i, j, &times)
    };
    let failure = std::cell::RefCell::new(None);
    let b = golden_min(
        |b| match rate(b) {
            Ok(r) => r,
            Err(e) => {
                failure.replace(Some(e));
                f64::INFINITY
            }
        },
        lo,
        hi,
        1e-6,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(b),
    }
}

fn criterion_5() -> Result<Vec<Check>> {
    let p = SpinSystemParams::si_bi();
    let t = label(TransitionKind::Pm, -6);
    let owp = owp_find(&p, &t).unwrap_or(f64::NAN);
    let rate = predicted_rates(&p, owp, &t, &NoiseSpec::adiabatic_z(1.0)?)?.t2_rate;
    let dia = diabatic_owp(0.15, 0.22)?;
    Ok(vec![
        within("adiabatic OWP pm(m=-3)", owp, 0.1882, 0.002, "T"),
        Check::new("adiabatic rate at OWP", rate <= 1e-10, format!("{rate:.3e} V² (limit 1e-10)")),
        Check::new("diabatic fitted minimum", (0.180..=0.190).contains(&dia), format!("{dia:.5} T (window [0.180, 0.190])")),
    ])
}

fn criterion_6() -> Result<Vec<Check>> {
    let p = SpinSystemParams::si_bi();
    let omega = mhz(X_BAND_MHZ);
    let grid = ScanGrid::for_frequency(&p, omega);
    let (mp, pm) = (label(TransitionKind::Mp, 2), label(TransitionKind::Pm, 2));
    let first = |t: &TransitionLabel| -> Result<f64> {
        resonance_fields(&p, omega, t, &grid)?.first().copied().ok_or_else(|| crate::Error::Numerical(format!("no resonance for {t}")))
    };
    let (b_mp, b_pm) = (first(&mp)?, first(&pm)?);
    let sep = (b_pm - b_mp) * 1e3;
    let ratio = transition_rate(&p, b_mp, &mp)? / transition_rate(&p, b_pm, &pm)?;
    Ok(vec![
        within("separation pm - mp", sep, 0.14, 0.02, "mT"),
        Check::new("rate ratio mp/pm", (5e-4..=2e-3).contains(&ratio), format!("{ratio:.4e} (target 1e-3 within a factor of 2)")),
    ])
}

pub const RWA_RATIOS: [f64; 7] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4];

fn criterion_7() -> Result<Vec<Check>> {
    let pts = rwa_error(1.0, &RWA_RATIOS, &IntegratorConfig::default())?;
    let table = pts.iter().map(|p| format!("{:.0e}:{:.3e}", p.ratio, p.distance)).collect::<Vec<_>>().join(", ");
    let decreasing = pts.windows(2).all(|w| w[1].distance < w[0].distance);
    let last = pts.last().map(|p| p.distance).unwrap_or(f64::NAN);
    let zero = rwa_error(1.0, &[0.0], &IntegratorConfig::default())?[0].distance;
    Ok(vec![
        Check::new("strictly decreasing", decreasing, table),
        Check::new("D at ratio 1e-4", last <= 2e-4, format!("{last:.3e} (limit 2e-4)")),
        Check::new("D at ratio 0", zero <= 1e-15, format!("{zero:.1e}")),
    ])
}

/// Largest |E_analytic - E_numeric| / A over random parameter sets.
pub fn eigen_agreement(n: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let two_i = 2 * rng.random_range(0..5u32) + 1;
        let p = SpinSystemParams::from_linear(
            "random",
            two_i,
            rng.random_range(20.0..40.0),
            rng.random_range(1.0..20.0),
            rng.random_range(10.0..2000.0),
        )?;
        let b0 = rng.random_range(0.0..3.0) * p.a_iso * (p.i() + 1.0) / p.gamma_e;
        let a = eigen_analytic(&p, b0)?.energies();
        let mut nu = eigen_numeric(&p, b0)?.energies();
        let mut an = a.clone();
        an.sort_by(|x, y| x.total_cmp(y));
        nu.sort_by(|x, y| x.total_cmp(y));
        for (x, y) in an.iter().zip(&nu) {
            worst = worst.max((x - y).abs() / p.a_iso);
        }
    }
    Ok(worst)
}

/// Worst trace defect and most negative eigenvalue over random Lindblad runs.
pub fn lindblad_preservation(n: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = SpinSystemParams::si_p();
    let (mut tr_err, mut min_eig): (f64, f64) = (0.0, f64::INFINITY);
    for k in 0..n {
        let p = if k % 5 == 4 { SpinSystemParams::si_bi() } else { p.clone() };
        let axis = if k % 2 == 0 { NoiseAxis::Z } else { NoiseAxis::X };
        let chi = [0.0, 1e-4, f64::INFINITY][k % 3];
        let chi = if axis == NoiseAxis::X && chi.is_infinite() { 0.0 } else { chi };
        let spec = NoiseSpec::new(axis, rng.random_range(0.1..3.0), chi)?;
        let b0 = rng.random_range(0.0..1.0);
        let g = lindblad(&p, b0, &spec)?;
        let rho = random::density(p.dim(), rng.random_range(1..=4), &mut rng);
        let out = evolve_lindblad(&g, &rho, rng.random_range(0.0..5.0))?;
        tr_err = tr_err.max((crate::spinalg::trace(out.op()).re - 1.0).abs());
        let (vals, _) = eigh(out.op())?;
        min_eig = min_eig.min(vals.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    Ok((tr_err, min_eig))
}

/// Worst relative deviation of fitted versus closed-form Z dephasing rates.
pub fn fitted_vs_closed_form(n: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = SpinSystemParams::si_bi();
    let e = p.m_edge().0;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        // m with both neighbouring subspaces two-dimensional
        let m = Half(rng.random_range((-e + 3) / 2..=(e - 1) / 2) * 2);
        let kind = [TransitionKind::Pm, TransitionKind::Mp, TransitionKind::Pp, TransitionKind::Mm][rng.random_range(0..4)];
        let t = TransitionLabel::new(kind, m);
        let spec = if rng.random_bool(0.5) { NoiseSpec::adiabatic_z(1.0)? } else { NoiseSpec::diabatic_z(1.0)? };
        let b0 = rng.random_range(0.0..1.0);
        let pred = predicted_rates(&p, b0, &t, &spec)?.t2_rate;
        if pred < 1e-6 {
            continue;
        }
        let g = lindblad_z_truncated(&p, b0, &spec, m)?;
        let (i, j) = crate::noise::transition_indices(&g, &t)?;
        let times: Vec<f64> = (1..=10).map(|k| k as f64 * 0.2 / pred).collect();
        let fit = fitted_dephasing_rate(&g, i, j, &times)?;
        worst = worst.max((fit - pred).abs() / pred);
    }
    Ok(worst)
}

/// Smallest `C - N` over random two-qubit states.
pub fn concurrence_negativity_margin(n: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margin = f64::INFINITY;
    for _ in 0..n {
        let rank = rng.random_range(1..=4);
        let rho: DensityOperator = random::density(4, rank, &mut rng);
        let c = concurrence(&rho)?;
        let neg = negativity(&rho, SubsystemDims::new(2, 2))?;
        margin = margin.min(c - neg);
    }
    Ok(margin)
}

fn criterion_8() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let eig = eigen_agreement(100, 8)?;
    checks.push(Check::new("analytic vs numeric eigensystem (100 configs)", eig <= 1e-9, format!("max {eig:.2e}·A (limit 1e-9)")));
    let (tr, ev) = lindblad_preservation(30, 9)?;
    checks.push(Check::new(
        "Lindblad trace and positivity (30 runs)",
        tr <= 1e-8 && ev >= -1e-8,
        format!("trace defect {tr:.2e}, min eigenvalue {ev:.2e}"),
    ));
    let fit = fitted_vs_closed_form(20, 10)?;
    checks.push(Check::new("fitted vs closed-form rates (20 cases)", fit <= 0.01, format!("max relative deviation {fit:.2e}")));
    let t1 = 3.0;
    let schedule: Vec<f64> = (1..=30).map(|k| k as f64 * 0.2).collect();
    let r = protocol(&ProtocolSpec { scheme: Scheme::HahnT2, schedule, channel: WaitChannel::AmplitudeDamping { t1 }, nutation_rate: 0.0, echo_delay: 0.0 })?;
    let t2 = r.fit.as_ref().and_then(|f| f.params.get("T2").copied()).unwrap_or(f64::NAN);
    checks.push(Check::new("amplitude damping T2 = 2 T1", (t2 / (2.0 * t1) - 1.0).abs() <= 0.02, format!("T2/T1 = {:.4}", t2 / t1)));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let detunings: Vec<f64> = (0..100).map(|_| rng.random_range(-10.0..10.0)).collect();
    let e1 = hahn_echo_check(&EchoEnvironment::StaticDetuningEnsemble { detunings, tau: 1.7 })?;
    let e2 = hahn_echo_check(&EchoEnvironment::IsingBathSpin { coupling: 2.0, tau: std::f64::consts::PI / 2.0, bath_bloch: [0.2, 0.4, -0.5] })?;
    checks.push(Check::new("Hahn echo identity", e1 <= 1e-10 && e2 <= 1e-10, format!("static {e1:.1e}, Ising {e2:.1e}")));
    let p = SpinSystemParams::si_bi();
    let t = label(TransitionKind::Pm, -6);
    let owp = owp_find(&p, &t).unwrap_or(f64::NAN);
    let tgrid: Vec<f64> = (0..=20).map(|k| k as f64).collect();
    let l = bath_coherence(&p, owp, &t, &BathSpec::random(4, 12)?, &tgrid)?;
    let dev = l.values.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    checks.push(Check::new("bath coherence at the OWP", dev <= 1e-10, format!("max |L - 1| = {dev:.1e}")));
    let margin = concurrence_negativity_margin(1000, 13)?;
    checks.push(Check::new("C >= N on 1000 two-qubit states", margin >= -1e-10, format!("min C - N = {margin:.2e}")));
    Ok(checks)
}

fn criterion_9() -> Result<Vec<Check>> {
    let p = SpinSystemParams::si_bi();
    let b = phase_boundary(&p, 6.0, 150.0).unwrap_or(f64::NAN);
    Ok(vec![Check::new("ordering boundary", (100.0..=115.0).contains(&b), format!("{b:.3} T (window [100, 115])"))])
}
