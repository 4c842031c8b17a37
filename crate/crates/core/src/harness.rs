//! Experiment orchestration: seeded sweeps over channel realizations, the
//! benchmark schemes, sampling certificates and result files.
//!
//! Every realization draws its channels from `child_seed(seed, id)`, so the
//! same realization id sees the same fading at every grid point, and records
//! are merged in (grid point, realization id) order whatever the worker
//! count.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, info};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channels::{
    calibrate, child_rng, child_seed, dbm_to_w, generate_scenario, sample_bounded, sample_statistical,
    w_to_dbm, BoundedRegion, CorrelationSpec, CsiCovariance, GeometryConfig, Scenario, UncertaintyModel,
};
use crate::error::{Error, Result};
use crate::feasibility::{check_feasibility_scd, check_feasibility_sta, FeasibilityOptions, FeasibilityVerdict};
use crate::linalg::{frob2, random_phases, CMat, CVec, ONE};
use crate::problem::{interference, sinr_physical, BcdOptions, BeamformingSolution};
use crate::scd::run_bcd_scd;
use crate::sta::{fixed_phase_sta, run_bcd_sta};

/// Relative tolerance of the SINR certificate.
pub const SINR_TOL: f64 = 1e-6;
/// Relative tolerance of the sampled worst-case interference certificate.
pub const WC_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "SCD")]
    Scd,
    #[serde(rename = "STA")]
    Sta,
    #[serde(rename = "NoIRS-STA")]
    NoIrsSta,
    #[serde(rename = "RandPhase-STA")]
    RandPhaseSta,
    #[serde(rename = "Prephase-STA")]
    PrephaseSta,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Scd,
        Scheme::Sta,
        Scheme::NoIrsSta,
        Scheme::RandPhaseSta,
        Scheme::PrephaseSta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Scd => "SCD",
            Scheme::Sta => "STA",
            Scheme::NoIrsSta => "NoIRS-STA",
            Scheme::RandPhaseSta => "RandPhase-STA",
            Scheme::PrephaseSta => "Prephase-STA",
        }
    }

    /// Designed against the Gaussian error model.
    pub fn is_outage(self) -> bool {
        self != Scheme::Scd
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A quantity that can be swept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    DeltaG,
    N,
    MT,
    GammaDbm,
    Rate,
    L,
    Beta,
    PrX,
    PrY,
    IrsX,
    IrsY,
    StX,
    StY,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::DeltaG => "delta_g",
            Axis::N => "n",
            Axis::MT => "m_t",
            Axis::GammaDbm => "gamma_dbm",
            Axis::Rate => "rate",
            Axis::L => "l",
            Axis::Beta => "beta",
            Axis::PrX => "pr_x",
            Axis::PrY => "pr_y",
            Axis::IrsX => "irs_x",
            Axis::IrsY => "irs_y",
            Axis::StX => "st_x",
            Axis::StY => "st_y",
        }
    }

    fn is_count(self) -> bool {
        matches!(self, Axis::N | Axis::MT | Axis::L)
    }

    /// Metrics expected to be non-increasing along this axis.
    fn expected_trends(self) -> &'static [Metric] {
        match self {
            Axis::DeltaG | Axis::N | Axis::MT | Axis::L => &[Metric::FeasibilityRate, Metric::MeanPower],
            _ => &[],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    FeasibilityRate,
    MeanPower,
}

/// Operating point before any sweep value is applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasePoint {
    pub m_t: usize,
    pub n: usize,
    pub k: usize,
    pub l: usize,
    /// rate target of every SU, bit/s/Hz
    pub rate: f64,
    /// IT threshold of every PR
    pub gamma_dbm: f64,
    pub delta_g: f64,
    pub beta: f64,
    pub c_eta: f64,
}

impl Default for BasePoint {
    fn default() -> Self {
        Self {
            m_t: 4,
            n: 6,
            k: 2,
            l: 1,
            rate: 2.0,
            gamma_dbm: -80.0,
            delta_g: 0.05,
            beta: 0.05,
            c_eta: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub axis: Axis,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub base: BasePoint,
    /// grid axes; the first one varies slowest
    pub sweep: Vec<SweepAxis>,
    pub schemes: Vec<Scheme>,
    pub realizations: usize,
    pub seed: u64,
    pub options: BcdOptions,
    pub feasibility: FeasibilityOptions,
    /// Gaussian draws per outage estimate
    pub mc_samples: usize,
    /// ball draws per worst-case interference check
    pub wc_samples: usize,
    pub out_dir: PathBuf,
    pub workers: usize,
    /// record wall-clock times (makes the CSV output non-reproducible)
    pub timing: bool,
    /// write one solution file per solved record
    pub save_solutions: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            base: BasePoint::default(),
            sweep: Vec::new(),
            schemes: vec![Scheme::Scd, Scheme::Sta],
            realizations: 50,
            seed: 0,
            options: BcdOptions::default(),
            feasibility: FeasibilityOptions::default(),
            mc_samples: 10_000,
            wc_samples: 10_000,
            out_dir: PathBuf::from("results"),
            workers: 1,
            timing: false,
            save_solutions: false,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate().map_err(|e| config_err(e.to_string()))?;
        self.options.validate()?;
        if self.realizations == 0 {
            return Err(config_err("realizations must be at least 1"));
        }
        if self.schemes.is_empty() {
            return Err(config_err("no schemes selected"));
        }
        for (i, s) in self.schemes.iter().enumerate() {
            if self.schemes[..i].contains(s) {
                return Err(config_err(format!("scheme {s} listed twice")));
            }
        }
        if self.mc_samples < 1000 || self.wc_samples < 1000 {
            return Err(config_err("sample counts must be at least 1000"));
        }
        if self.workers == 0 {
            return Err(config_err("workers must be at least 1"));
        }
        for (i, ax) in self.sweep.iter().enumerate() {
            if self.sweep[..i].iter().any(|a| a.axis == ax.axis) {
                return Err(config_err(format!("axis {} swept twice", ax.axis.name())));
            }
            if ax.values.is_empty() {
                return Err(config_err(format!("axis {} has an empty grid", ax.axis.name())));
            }
            for &v in &ax.values {
                if !v.is_finite() {
                    return Err(config_err(format!("axis {} has a non-finite value", ax.axis.name())));
                }
                if ax.axis.is_count() && !(v >= 1.0 && v.fract() == 0.0) {
                    return Err(config_err(format!("axis {} needs positive integers", ax.axis.name())));
                }
            }
        }
        for point in self.grid() {
            self.setup(&point).check()?;
        }
        Ok(())
    }

    /// Cartesian product of the sweep axes.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut points = vec![GridPoint::default()];
        for ax in &self.sweep {
            points = points
                .into_iter()
                .flat_map(|p| {
                    ax.values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.values.push((ax.axis, v));
                        q
                    })
                })
                .collect();
        }
        points
    }

    pub fn axes(&self) -> Vec<Axis> {
        self.sweep.iter().map(|a| a.axis).collect()
    }

    /// Base point and geometry with the grid values applied.
    pub fn setup(&self, point: &GridPoint) -> PointSetup {
        let mut s = PointSetup {
            geometry: self.geometry.clone(),
            base: self.base.clone(),
        };
        for &(axis, v) in &point.values {
            let b = &mut s.base;
            let g = &mut s.geometry;
            match axis {
                Axis::DeltaG => b.delta_g = v,
                Axis::N => b.n = v as usize,
                Axis::MT => b.m_t = v as usize,
                Axis::GammaDbm => b.gamma_dbm = v,
                Axis::Rate => b.rate = v,
                Axis::L => b.l = v as usize,
                Axis::Beta => b.beta = v,
                Axis::PrX => g.pr[0] = v,
                Axis::PrY => g.pr[1] = v,
                Axis::IrsX => g.irs[0] = v,
                Axis::IrsY => g.irs[1] = v,
                Axis::StX => g.st[0] = v,
                Axis::StY => g.st[1] = v,
            }
        }
        s
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GridPoint {
    pub values: Vec<(Axis, f64)>,
}

impl GridPoint {
    pub fn get(&self, axis: Axis) -> Option<f64> {
        self.values.iter().find(|(a, _)| *a == axis).map(|(_, v)| *v)
    }

    pub fn labels(&self) -> BTreeMap<String, f64> {
        self.values.iter().map(|(a, v)| (a.name().to_string(), *v)).collect()
    }
}

/// Everything needed to draw and calibrate one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSetup {
    pub geometry: GeometryConfig,
    pub base: BasePoint,
}

impl PointSetup {
    fn check(&self) -> Result<()> {
        let b = &self.base;
        if b.m_t == 0 || b.n == 0 || b.k == 0 || b.l == 0 {
            return Err(config_err("M_t, N, K and L must be at least 1"));
        }
        if !(b.rate >= 0.0) || !b.gamma_dbm.is_finite() {
            return Err(config_err("rate must be nonnegative and Γ finite"));
        }
        if !(0.0..1.0).contains(&b.delta_g) || !(0.0..1.0).contains(&b.c_eta) {
            return Err(config_err("δ_g and c_η must lie in [0, 1)"));
        }
        if !(b.beta > 0.0 && b.beta < 1.0) {
            return Err(config_err("β must lie in (0, 1)"));
        }
        self.geometry.validate().map_err(|e| config_err(e.to_string()))
    }

    pub fn scenario(&self, seed: u64) -> Result<Scenario> {
        let b = &self.base;
        generate_scenario(
            &self.geometry,
            b.m_t,
            b.n,
            b.k,
            b.l,
            &vec![b.rate; b.k],
            &vec![dbm_to_w(b.gamma_dbm); b.l],
            seed,
        )
    }

    pub fn correlation(&self) -> CorrelationSpec {
        CorrelationSpec {
            c_eta: self.base.c_eta,
            delta_g: self.base.delta_g,
        }
    }
}

/// Fraction of draws `vec(ΔG) ~ CN(0, Σ)` for which the interference exceeds
/// `threshold`. An empty `φ` means no IRS.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_outage<R: Rng + ?Sized>(
    w: &CMat,
    phi: &CVec,
    g_d: &CVec,
    g_r: &CMat,
    cov: &CsiCovariance,
    threshold: f64,
    samples: usize,
    rng: &mut R,
) -> f64 {
    if samples == 0 {
        return 0.0;
    }
    let (m_t, n) = (g_d.len(), g_r.nrows());
    let mut hits = 0usize;
    for _ in 0..samples {
        let (dg_d, dg_r) = sample_statistical(cov, m_t, n, rng);
        if interference(&(g_d + dg_d), &(g_r + dg_r), w, phi) > threshold {
            hits += 1;
        }
    }
    hits as f64 / samples as f64
}

/// Largest interference over draws from the error balls, half of them on the
/// sphere boundaries. Sampling can only underestimate the true worst case, so
/// this is a necessary-condition check: it passes iff the maximum stays within
/// `threshold·(1 + 1e-6)`.
#[allow(clippy::too_many_arguments)]
pub fn worst_case_sample_it<R: Rng + ?Sized>(
    w: &CMat,
    phi: &CVec,
    g_d: &CVec,
    g_r: &CMat,
    region: &BoundedRegion,
    threshold: f64,
    samples: usize,
    rng: &mut R,
) -> (f64, bool) {
    let (m_t, n) = (g_d.len(), g_r.nrows());
    let mut worst = interference(g_d, g_r, w, phi);
    for i in 0..samples {
        let (dg_d, dg_r) = sample_bounded(region, m_t, n, rng, i % 2 == 0);
        worst = worst.max(interference(&(g_d + dg_d), &(g_r + dg_r), w, phi));
    }
    (worst, worst <= threshold * (1.0 + WC_TOL))
}

/// Binomial acceptance bound `β + 2·√(β(1−β)/S)`.
pub fn outage_acceptance(beta: f64, samples: usize) -> f64 {
    beta + 2.0 * (beta * (1.0 - beta) / samples as f64).sqrt()
}

/// Certificates of one solution in physical units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub sinr_ok: bool,
    /// worst SINR ratio `SINR_k/γ_k`
    pub sinr_ratio: f64,
    /// largest empirical outage over the PRs
    pub mc_outage: Option<f64>,
    pub mc_ok: bool,
    /// smallest `(Γ_l − max sampled IT_l)/Γ_l`
    pub wc_margin: Option<f64>,
    pub wc_ok: bool,
    pub rank_ok: bool,
    pub passed: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct CertifyOptions {
    pub mc_samples: usize,
    pub wc_samples: usize,
    pub rank_tol: f64,
    pub seed: u64,
}

const TAG_MC: u64 = 0x4d43;
const TAG_WC: u64 = 0x5743;
const TAG_RAND: u64 = 0x524e_4450;

/// Hard certificates of a scheme's solution: exact SINR at the nominal
/// channels for every scheme, the sampled worst case for the bounded scheme
/// and the empirical outage for the outage-constrained ones.
pub fn certify(
    scenario: &Scenario,
    stat: &UncertaintyModel,
    bounded: &UncertaintyModel,
    scheme: Scheme,
    sol: &BeamformingSolution,
    opts: &CertifyOptions,
) -> Result<Certificate> {
    let (UncertaintyModel::Statistical(stat), UncertaintyModel::Bounded(radii)) = (stat, bounded) else {
        return Err(Error::WrongModel("certify needs the statistical and the bounded model"));
    };
    let sinr = sinr_physical(scenario, &sol.w, &sol.phi);
    let mut sinr_ratio = f64::INFINITY;
    let mut sinr_ok = true;
    for (s, g) in sinr.iter().zip(&scenario.gamma) {
        if *g > 0.0 {
            sinr_ratio = sinr_ratio.min(s / g);
        }
        sinr_ok &= *s >= g * (1.0 - SINR_TOL);
    }
    let mut mc_outage: Option<f64> = None;
    let mut wc_margin: Option<f64> = None;
    let mut wc_ok = true;
    let mut mc_ok = true;
    let mut rng_mc = child_rng(opts.seed ^ TAG_MC, scheme as u64);
    let mut rng_wc = child_rng(opts.seed ^ TAG_WC, scheme as u64);
    for l in 0..scenario.l {
        let threshold = scenario.it_threshold[l];
        if !threshold.is_finite() {
            continue;
        }
        let (g_d, g_r) = (&scenario.g_d[l], &scenario.g_r[l]);
        let out = monte_carlo_outage(
            &sol.w,
            &sol.phi,
            g_d,
            g_r,
            &stat[l].cov,
            threshold,
            opts.mc_samples,
            &mut rng_mc,
        );
        mc_outage = Some(mc_outage.map_or(out, |m| m.max(out)));
        if scheme.is_outage() {
            mc_ok &= out <= outage_acceptance(stat[l].beta, opts.mc_samples);
        } else {
            let (worst, ok) = worst_case_sample_it(
                &sol.w,
                &sol.phi,
                g_d,
                g_r,
                &radii[l],
                threshold,
                opts.wc_samples,
                &mut rng_wc,
            );
            let margin = (threshold - worst) / threshold;
            wc_margin = Some(wc_margin.map_or(margin, |m| m.min(margin)));
            wc_ok &= ok;
        }
    }
    let rank_ok = sol.max_rank_ratio.map_or(true, |r| r <= opts.rank_tol);
    Ok(Certificate {
        sinr_ok,
        sinr_ratio,
        mc_outage,
        mc_ok,
        wc_margin,
        wc_ok,
        rank_ok,
        passed: sinr_ok && mc_ok && wc_ok && rank_ok,
    })
}

/// Outage design with `φ` drawn uniformly at random: the lowest-power
/// solution over `t_max` draws.
pub fn benchmark_randphase(
    scenario: &Scenario,
    model: &UncertaintyModel,
    opts: &BcdOptions,
    seed: u64,
) -> Result<BeamformingSolution> {
    let mut rng = child_rng(seed ^ TAG_RAND, 0);
    let mut best: Option<BeamformingSolution> = None;
    let mut last_err = None;
    for t in 0..opts.t_max {
        let phi = random_phases(&mut rng, scenario.n);
        match fixed_phase_sta(scenario, model, opts, &phi, true) {
            Ok(sol) => {
                if best.as_ref().map_or(true, |b| sol.power < b.power) {
                    best = Some(sol);
                }
            }
            Err(e) => {
                debug!("random phase draw {t}: {e}");
                last_err = Some(e);
            }
        }
    }
    let mut best = best.ok_or_else(|| last_err.unwrap_or(Error::SubproblemInfeasible("no draws".into())))?;
    best.iterations = opts.t_max;
    best.trace = vec![best.power];
    Ok(best)
}

/// Outage design with every reflection coefficient fixed to one.
pub fn benchmark_prephase(
    scenario: &Scenario,
    model: &UncertaintyModel,
    opts: &BcdOptions,
) -> Result<BeamformingSolution> {
    fixed_phase_sta(scenario, model, opts, &CVec::from_element(scenario.n, ONE), true)
}

/// Outage design without the IRS.
pub fn benchmark_noirs(
    scenario: &Scenario,
    model: &UncertaintyModel,
    opts: &BcdOptions,
) -> Result<BeamformingSolution> {
    fixed_phase_sta(scenario, model, opts, &CVec::zeros(0), false)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    /// feasibility check followed by the alternating optimization
    Full,
    /// feasibility check only; the recorded solution is the checker's point
    FeasibilityOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealizationRecord {
    pub point: usize,
    pub realization: usize,
    pub grid: GridPoint,
    pub scheme: Scheme,
    pub feasible: bool,
    pub iterations: usize,
    pub power_w: Option<f64>,
    pub power_dbm: Option<f64>,
    pub runtime_ms: Option<f64>,
    pub mc_outage: Option<f64>,
    pub wc_margin: Option<f64>,
    pub rank_ratio: Option<f64>,
    pub certificate: Option<Certificate>,
    /// feasibility indicator of the checker, threshold 1
    pub indicator: Option<f64>,
    pub note: String,
    pub solution: Option<BeamformingSolution>,
    /// seed of the channel realization
    pub scenario_seed: u64,
}

impl RealizationRecord {
    pub fn certified(&self) -> Option<bool> {
        self.certificate.as_ref().map(|c| c.passed)
    }
}

struct Outcome {
    feasible: bool,
    iterations: usize,
    indicator: Option<f64>,
    solution: Option<BeamformingSolution>,
    note: String,
}

impl Outcome {
    fn failed(e: impl fmt::Display) -> Self {
        Self {
            feasible: false,
            iterations: 0,
            indicator: None,
            solution: None,
            note: e.to_string(),
        }
    }
}

fn init_solution(v: &FeasibilityVerdict) -> BeamformingSolution {
    let power = frob2(&v.init_w);
    BeamformingSolution {
        w: v.init_w.clone(),
        phi: v.init_phi.clone(),
        power,
        trace: vec![power],
        iterations: 0,
        converged: false,
        max_rank_ratio: None,
    }
}

fn run_checked(
    verdict: Result<FeasibilityVerdict>,
    mode: RunMode,
    bcd: impl FnOnce(&FeasibilityVerdict) -> Result<BeamformingSolution>,
) -> Outcome {
    let v = match verdict {
        Ok(v) => v,
        Err(e) => return Outcome::failed(e),
    };
    let mut out = Outcome {
        feasible: v.feasible,
        iterations: v.iterations,
        indicator: Some(v.indicator),
        solution: None,
        note: String::new(),
    };
    if !v.feasible {
        return out;
    }
    match mode {
        RunMode::FeasibilityOnly => out.solution = Some(init_solution(&v)),
        RunMode::Full => match bcd(&v) {
            Ok(sol) => {
                out.iterations = sol.iterations;
                out.solution = Some(sol);
            }
            Err(e) => {
                // the checker's point is itself a valid solution
                out.note = format!("alternating optimization failed: {e}");
                out.solution = Some(init_solution(&v));
            }
        },
    }
    out
}

fn run_scheme(
    config: &ExperimentConfig,
    scheme: Scheme,
    scenario: &Scenario,
    stat: &UncertaintyModel,
    bounded: &UncertaintyModel,
    seed: u64,
    mode: RunMode,
) -> Outcome {
    let opts = &config.options;
    let fopts = FeasibilityOptions {
        seed: config.feasibility.seed ^ seed,
        ..config.feasibility.clone()
    };
    let fixed = |res: Result<BeamformingSolution>| match res {
        Ok(sol) => Outcome {
            feasible: true,
            iterations: sol.iterations,
            indicator: None,
            solution: Some(sol),
            note: String::new(),
        },
        Err(e) => Outcome::failed(e),
    };
    match scheme {
        Scheme::Scd => run_checked(check_feasibility_scd(scenario, bounded, opts, &fopts), mode, |v| {
            run_bcd_scd(scenario, bounded, opts, &v.init_w, &v.init_phi)
        }),
        Scheme::Sta => run_checked(check_feasibility_sta(scenario, stat, opts, &fopts), mode, |v| {
            run_bcd_sta(scenario, stat, opts, &v.init_w, &v.init_phi)
        }),
        Scheme::NoIrsSta => fixed(benchmark_noirs(scenario, stat, opts)),
        Scheme::RandPhaseSta => fixed(benchmark_randphase(scenario, stat, opts, seed)),
        Scheme::PrephaseSta => fixed(benchmark_prephase(scenario, stat, opts)),
    }
}

fn run_realization(
    config: &ExperimentConfig,
    point_idx: usize,
    point: &GridPoint,
    realization: usize,
    mode: RunMode,
) -> Vec<RealizationRecord> {
    let setup = config.setup(point);
    let seed = child_seed(config.seed, realization as u64);
    let blank = |scheme: Scheme, note: String| RealizationRecord {
        point: point_idx,
        realization,
        grid: point.clone(),
        scheme,
        feasible: false,
        iterations: 0,
        power_w: None,
        power_dbm: None,
        runtime_ms: None,
        mc_outage: None,
        wc_margin: None,
        rank_ratio: None,
        certificate: None,
        indicator: None,
        note,
        solution: None,
        scenario_seed: seed,
    };
    let prepared = setup
        .scenario(seed)
        .and_then(|sc| calibrate(&sc, &setup.correlation(), setup.base.beta).map(|(s, b)| (sc, s, b)));
    let (scenario, stat, bounded) = match prepared {
        Ok(x) => x,
        Err(e) => return config.schemes.iter().map(|&s| blank(s, e.to_string())).collect(),
    };
    let cert_opts = CertifyOptions {
        mc_samples: config.mc_samples,
        wc_samples: config.wc_samples,
        rank_tol: config.options.rank_tol,
        seed,
    };
    let mut records = Vec::with_capacity(config.schemes.len());
    for &scheme in &config.schemes {
        let start = Instant::now();
        let out = run_scheme(config, scheme, &scenario, &stat, &bounded, seed, mode);
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        let mut rec = blank(scheme, out.note);
        rec.feasible = out.feasible;
        rec.iterations = out.iterations;
        rec.indicator = out.indicator;
        rec.runtime_ms = config.timing.then_some(elapsed);
        if let Some(sol) = out.solution {
            rec.power_w = Some(sol.power);
            rec.power_dbm = Some(w_to_dbm(sol.power));
            rec.rank_ratio = sol.max_rank_ratio;
            match certify(&scenario, &stat, &bounded, scheme, &sol, &cert_opts) {
                Ok(c) => {
                    rec.mc_outage = c.mc_outage;
                    rec.wc_margin = c.wc_margin;
                    if !c.passed {
                        log::warn!(
                            "point {point_idx} realization {realization} {scheme}: certificate failed {c:?}"
                        );
                    }
                    rec.certificate = Some(c);
                }
                Err(e) => rec.note = e.to_string(),
            }
            rec.solution = Some(sol);
        }
        debug!(
            "point {point_idx} realization {realization} {scheme}: feasible {} power {:?} dBm",
            rec.feasible, rec.power_dbm
        );
        records.push(rec);
    }
    records
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub realizations: usize,
    pub feasible: usize,
    pub feasibility_rate: f64,
    /// mean over feasible realizations
    pub mean_power_w: Option<f64>,
    /// the mean power in dBm
    pub mean_power_dbm: Option<f64>,
    pub mean_iterations: Option<f64>,
    pub certificate_failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub point: usize,
    pub grid: BTreeMap<String, f64>,
    pub schemes: Vec<SchemeSummary>,
}

/// One monotonicity comparison along an axis with the other axes fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub axis: Axis,
    pub metric: Metric,
    pub scheme: Scheme,
    pub fixed: BTreeMap<String, f64>,
    pub x: Vec<f64>,
    pub y: Vec<Option<f64>>,
    /// non-increasing over the defined values; `None` with fewer than two
    pub held: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub realizations: usize,
    pub seed: u64,
    pub points: Vec<PointSummary>,
    pub trends: Vec<TrendCheck>,
    pub certificate_failures: usize,
}

impl Summary {
    pub fn scheme(&self, point: usize, scheme: Scheme) -> Option<&SchemeSummary> {
        self.points.get(point)?.schemes.iter().find(|s| s.scheme == scheme)
    }
}

pub struct ExperimentResult {
    pub records: Vec<RealizationRecord>,
    pub summary: Summary,
}

fn summarize_point(point: usize, grid: &GridPoint, schemes: &[Scheme], records: &[RealizationRecord]) -> PointSummary {
    let schemes = schemes
        .iter()
        .map(|&scheme| {
            let rs: Vec<&RealizationRecord> = records
                .iter()
                .filter(|r| r.point == point && r.scheme == scheme)
                .collect();
            let feasible: Vec<&&RealizationRecord> = rs.iter().filter(|r| r.feasible).collect();
            let powers: Vec<f64> = feasible.iter().filter_map(|r| r.power_w).collect();
            let mean_power_w = (!powers.is_empty()).then(|| powers.iter().sum::<f64>() / powers.len() as f64);
            let mean_iterations = (!feasible.is_empty())
                .then(|| feasible.iter().map(|r| r.iterations as f64).sum::<f64>() / feasible.len() as f64);
            SchemeSummary {
                scheme,
                realizations: rs.len(),
                feasible: feasible.len(),
                feasibility_rate: if rs.is_empty() {
                    0.0
                } else {
                    feasible.len() as f64 / rs.len() as f64
                },
                mean_power_w,
                mean_power_dbm: mean_power_w.map(w_to_dbm),
                mean_iterations,
                certificate_failures: rs.iter().filter(|r| r.certified() == Some(false)).count(),
            }
        })
        .collect();
    PointSummary {
        point,
        grid: grid.labels(),
        schemes,
    }
}

fn non_increasing(y: &[Option<f64>]) -> Option<bool> {
    let defined: Vec<f64> = y.iter().flatten().copied().collect();
    if defined.len() < 2 {
        return None;
    }
    Some(defined.windows(2).all(|w| w[1] <= w[0]))
}

fn trend_checks(config: &ExperimentConfig, grid: &[GridPoint], points: &[PointSummary]) -> Vec<TrendCheck> {
    let mut out = Vec::new();
    for ax in &config.sweep {
        if ax.values.len() < 2 {
            continue;
        }
        // group the grid points by their values on the other axes
        let mut groups: Vec<(Vec<(Axis, f64)>, Vec<usize>)> = Vec::new();
        for (i, p) in grid.iter().enumerate() {
            let key: Vec<(Axis, f64)> = p.values.iter().filter(|(a, _)| *a != ax.axis).copied().collect();
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, idx)) => idx.push(i),
                None => groups.push((key, vec![i])),
            }
        }
        for (key, mut idx) in groups {
            idx.sort_by(|&a, &b| {
                let (x, y) = (grid[a].get(ax.axis).unwrap(), grid[b].get(ax.axis).unwrap());
                x.total_cmp(&y)
            });
            let x: Vec<f64> = idx.iter().map(|&i| grid[i].get(ax.axis).unwrap()).collect();
            let fixed: BTreeMap<String, f64> = key.iter().map(|(a, v)| (a.name().to_string(), *v)).collect();
            for &metric in ax.axis.expected_trends() {
                for &scheme in &config.schemes {
                    let y: Vec<Option<f64>> = idx
                        .iter()
                        .map(|&i| {
                            let s = points[i].schemes.iter().find(|s| s.scheme == scheme)?;
                            match metric {
                                Metric::FeasibilityRate => Some(s.feasibility_rate),
                                Metric::MeanPower => s.mean_power_w,
                            }
                        })
                        .collect();
                    let held = non_increasing(&y);
                    info!(
                        "trend {:?} along {} for {scheme} at {fixed:?}: {:?}",
                        metric,
                        ax.axis.name(),
                        held
                    );
                    out.push(TrendCheck {
                        axis: ax.axis,
                        metric,
                        scheme,
                        fixed: fixed.clone(),
                        x: x.clone(),
                        y,
                        held,
                    });
                }
            }
        }
    }
    out
}

/// Run every grid point × realization on a pool of `config.workers` threads.
/// Per-realization failures are recorded, not returned.
pub fn run_experiment(config: &ExperimentConfig, mode: RunMode) -> Result<ExperimentResult> {
    config.validate()?;
    let grid = config.grid();
    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|p| (0..config.realizations).map(move |r| (p, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| config_err(e.to_string()))?;
    info!(
        "running {} grid points × {} realizations on {} workers",
        grid.len(),
        config.realizations,
        config.workers
    );
    let chunks: Vec<Vec<RealizationRecord>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(p, r)| run_realization(config, p, &grid[p], r, mode))
            .collect()
    });
    let records: Vec<RealizationRecord> = chunks.into_iter().flatten().collect();
    let points: Vec<PointSummary> = grid
        .iter()
        .enumerate()
        .map(|(i, g)| summarize_point(i, g, &config.schemes, &records))
        .collect();
    let trends = trend_checks(config, &grid, &points);
    let certificate_failures = records.iter().filter(|r| r.certified() == Some(false)).count();
    Ok(ExperimentResult {
        records,
        summary: Summary {
            realizations: config.realizations,
            seed: config.seed,
            points,
            trends,
            certificate_failures,
        },
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Header of the per-record CSV for the given sweep axes.
pub fn record_header(axes: &[Axis]) -> Vec<String> {
    let mut h = vec!["realization_id".to_string()];
    h.extend(axes.iter().map(|a| a.name().to_string()));
    h.extend(
        [
            "scheme",
            "feasible",
            "iterations",
            "power_dbm",
            "runtime_ms",
            "mc_outage",
            "wc_margin",
            "rank_ratio",
            "power_w",
            "certified",
            "note",
        ]
        .map(String::from),
    );
    h
}

fn record_row(r: &RealizationRecord, axes: &[Axis]) -> Vec<String> {
    let mut row = vec![r.realization.to_string()];
    row.extend(axes.iter().map(|&a| opt(r.grid.get(a))));
    row.push(r.scheme.name().to_string());
    row.push(r.feasible.to_string());
    row.push(r.iterations.to_string());
    row.push(opt(r.power_dbm.filter(|_| r.feasible)));
    row.push(opt(r.runtime_ms));
    row.push(opt(r.mc_outage));
    row.push(opt(r.wc_margin));
    row.push(opt(r.rank_ratio));
    row.push(opt(r.power_w.filter(|_| r.feasible)));
    row.push(r.certified().map(|c| c.to_string()).unwrap_or_default());
    row.push(r.note.clone());
    row
}

/// Content of a solution file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub scheme: Scheme,
    pub realization: usize,
    pub grid: BTreeMap<String, f64>,
    pub delta_g: f64,
    pub c_eta: f64,
    pub beta: f64,
    /// SHA-256 of the scenario's JSON encoding
    pub scenario_hash: String,
    pub scenario: Scenario,
    pub solution: BeamformingSolution,
}

pub fn scenario_hash(scenario: &Scenario) -> Result<String> {
    let bytes = serde_json::to_vec(scenario).map_err(|e| config_err(e.to_string()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Paths written by [`emit_results`].
#[derive(Clone, Debug, PartialEq)]
pub struct OutputPaths {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub plot: PathBuf,
    pub solutions: Vec<PathBuf>,
}

/// Write the per-record CSV, the summary JSON, the plot CSV and, when
/// enabled, one solution file per solved record. An empty result is an error
/// and leaves the directory untouched.
pub fn emit_results(result: &ExperimentResult, config: &ExperimentConfig, dir: &Path) -> Result<OutputPaths> {
    if result.records.is_empty() {
        return Err(config_err("no records to write"));
    }
    fs::create_dir_all(dir)?;
    let axes = config.axes();
    let paths = OutputPaths {
        records: dir.join("records.csv"),
        summary: dir.join("summary.json"),
        plot: dir.join("plot.csv"),
        solutions: Vec::new(),
    };

    let mut w = csv::Writer::from_path(&paths.records).map_err(csv_err)?;
    w.write_record(record_header(&axes)).map_err(csv_err)?;
    for r in &result.records {
        w.write_record(record_row(r, &axes)).map_err(csv_err)?;
    }
    w.flush()?;

    let json = serde_json::to_string_pretty(&result.summary).map_err(|e| config_err(e.to_string()))?;
    fs::write(&paths.summary, json + "\n")?;

    let mut w = csv::Writer::from_path(&paths.plot).map_err(csv_err)?;
    let mut header: Vec<String> = axes.iter().map(|a| a.name().to_string()).collect();
    for s in &config.schemes {
        header.push(format!("{}_feasibility_rate", s.name()));
        header.push(format!("{}_mean_power_dbm", s.name()));
    }
    w.write_record(&header).map_err(csv_err)?;
    for p in &result.summary.points {
        let mut row: Vec<String> = axes.iter().map(|a| opt(p.grid.get(a.name()).copied())).collect();
        for s in &p.schemes {
            row.push(s.feasibility_rate.to_string());
            row.push(opt(s.mean_power_dbm));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;

    let mut paths = paths;
    if config.save_solutions {
        let sol_dir = dir.join("solutions");
        fs::create_dir_all(&sol_dir)?;
        for r in result.records.iter().filter(|r| r.feasible) {
            let Some(sol) = &r.solution else { continue };
            let setup = config.setup(&r.grid);
            let scenario = setup.scenario(r.scenario_seed)?;
            let file = SolutionFile {
                scheme: r.scheme,
                realization: r.realization,
                grid: r.grid.labels(),
                delta_g: setup.base.delta_g,
                c_eta: setup.base.c_eta,
                beta: setup.base.beta,
                scenario_hash: scenario_hash(&scenario)?,
                scenario,
                solution: sol.clone(),
            };
            let path = sol_dir.join(format!("p{}_r{}_{}.json", r.point, r.realization, r.scheme.name()));
            let json = serde_json::to_string_pretty(&file).map_err(|e| config_err(e.to_string()))?;
            fs::write(&path, json + "\n")?;
            paths.solutions.push(path);
        }
    }
    Ok(paths)
}

/// Re-run the certificates of a stored solution.
pub fn validate_solution(file: &SolutionFile, mc_samples: usize, seed: u64) -> Result<Certificate> {
    file.scenario.validate()?;
    let hash = scenario_hash(&file.scenario)?;
    if hash != file.scenario_hash {
        return Err(config_err(format!(
            "scenario hash mismatch: file says {}, content hashes to {hash}",
            file.scenario_hash
        )));
    }
    let spec = CorrelationSpec {
        c_eta: file.c_eta,
        delta_g: file.delta_g,
    };
    let (stat, bounded) = calibrate(&file.scenario, &spec, file.beta)?;
    let opts = CertifyOptions {
        mc_samples,
        wc_samples: mc_samples,
        rank_tol: BcdOptions::default().rank_tol,
        seed,
    };
    certify(&file.scenario, &stat, &bounded, file.scheme, &file.solution, &opts)
}
