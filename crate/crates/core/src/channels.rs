//! Scenario generation, cascaded and combined channels, and the two CSI
//! uncertainty models.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cn_mat, cn_vec, frob2, norm2, CMat, CVec};
use crate::serde_cx;
use crate::stats::chi2_inv_cdf;

pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1000.0).log10()
}

/// `P_L0 + 10·α·log10(d/d0)` in dB.
pub fn path_loss_db(d: f64, alpha: f64, pl0_db: f64, d0: f64) -> f64 {
    pl0_db + 10.0 * alpha * (d / d0).log10()
}

pub fn rate_to_sinr(rate: f64) -> f64 {
    2f64.powf(rate) - 1.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrPlacement {
    /// fixed location for a single PR, disc placement otherwise
    #[default]
    Auto,
    Fixed,
    Disc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub pr: [f64; 2],
    pub st: [f64; 2],
    pub irs: [f64; 2],
    pub su_cell_center: [f64; 2],
    pub su_cell_radius: f64,
    pub pr_cell_center: [f64; 2],
    pub pr_cell_radius: f64,
    pub pr_placement: PrPlacement,
    pub alpha_irs: f64,
    pub alpha_stu: f64,
    pub pl0_db: f64,
    pub d0: f64,
    pub noise_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            pr: [0.0, 0.0],
            st: [300.0, 0.0],
            irs: [300.0, 30.0],
            su_cell_center: [600.0, 0.0],
            su_cell_radius: 20.0,
            pr_cell_center: [0.0, 0.0],
            pr_cell_radius: 200.0,
            pr_placement: PrPlacement::Auto,
            alpha_irs: 2.2,
            alpha_stu: 3.75,
            pl0_db: 30.0,
            d0: 1.0,
            noise_dbm_per_hz: -174.0,
            bandwidth_hz: 10e6,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha_irs > 0.0
            && self.alpha_stu > 0.0
            && self.d0 > 0.0
            && self.bandwidth_hz > 0.0
            && self.su_cell_radius >= 0.0
            && self.pr_cell_radius >= 0.0;
        if !ok {
            return Err(Error::InvalidGeometry(
                "exponents, d0 and bandwidth must be positive, radii nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn noise_power_w(&self) -> f64 {
        dbm_to_w(self.noise_dbm_per_hz) * self.bandwidth_hz
    }

    /// Linear channel variance of a link of length `d`.
    fn gain(&self, a: [f64; 2], b: [f64; 2], alpha: f64) -> Result<f64> {
        let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        if d <= 1e-9 {
            return Err(Error::InvalidGeometry(format!("zero distance between {a:?} and {b:?}")));
        }
        Ok(10f64.powf(-path_loss_db(d, alpha, self.pl0_db, self.d0) / 10.0))
    }
}

/// One channel realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub m_t: usize,
    pub n: usize,
    pub k: usize,
    pub l: usize,
    /// ST→IRS, `N×M_t`
    #[serde(with = "serde_cx::matrix")]
    pub f: CMat,
    #[serde(with = "serde_cx::vectors")]
    pub h_d: Vec<CVec>,
    #[serde(with = "serde_cx::vectors")]
    pub h_r: Vec<CVec>,
    /// estimated ST→PR channels
    #[serde(with = "serde_cx::vectors")]
    pub g_d: Vec<CVec>,
    /// estimated cascaded ST→IRS→PR channels, `N×M_t`
    #[serde(with = "serde_cx::matrices")]
    pub g_r: Vec<CMat>,
    pub noise: Vec<f64>,
    pub gamma: Vec<f64>,
    #[serde(with = "serde_cx::thresholds")]
    pub it_threshold: Vec<f64>,
    pub su_positions: Vec<[f64; 2]>,
    pub pr_positions: Vec<[f64; 2]>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let dims = |what: &str| Err(Error::DimensionMismatch(what.to_string()));
        if self.m_t == 0 || self.n == 0 || self.k == 0 || self.l == 0 {
            return dims("M_t, N, K and L must be at least 1");
        }
        if self.f.shape() != (self.n, self.m_t) {
            return dims("F must be N×M_t");
        }
        if self.h_d.len() != self.k
            || self.h_r.len() != self.k
            || self.noise.len() != self.k
            || self.gamma.len() != self.k
        {
            return dims("per-SU data must have K entries");
        }
        if self.g_d.len() != self.l || self.g_r.len() != self.l || self.it_threshold.len() != self.l {
            return dims("per-PR data must have L entries");
        }
        if self.h_d.iter().chain(&self.g_d).any(|v| v.len() != self.m_t) {
            return dims("direct channels must have M_t entries");
        }
        if self.h_r.iter().any(|v| v.len() != self.n) {
            return dims("reflect channels must have N entries");
        }
        if self.g_r.iter().any(|g| g.shape() != (self.n, self.m_t)) {
            return dims("cascaded channels must be N×M_t");
        }
        if self.noise.iter().any(|x| !(*x > 0.0)) || self.it_threshold.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::Domain("noise powers and thresholds must be positive".into()));
        }
        if self.gamma.iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::Domain("SINR targets must be nonnegative".into()));
        }
        Ok(())
    }

    /// `Ĝ_l = [Ĝ_r; ĝ_dᴴ]`.
    pub fn combined(&self, l: usize) -> CMat {
        combine(&self.g_r[l], &self.g_d[l]).expect("validated scenario")
    }

    /// `diag(h_r,kᴴ)F`.
    pub fn su_cascade(&self, k: usize) -> CMat {
        cascade(&self.h_r[k], &self.f).expect("validated scenario")
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for realization (or stream) `idx` of `master`.
pub fn child_seed(master: u64, idx: u64) -> u64 {
    splitmix(splitmix(master) ^ idx.wrapping_mul(0x2545_f491_4f6c_dd1d))
}

pub fn child_rng(master: u64, idx: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(master, idx))
}

// stream tags; each link class draws from its own stream so that changing
// one dimension leaves the others untouched
const TAG_F: u64 = 1;
const TAG_SU: u64 = 1 << 16;
const TAG_PR: u64 = 2 << 16;

fn uniform_in_disc<R: Rng>(rng: &mut R, center: [f64; 2], radius: f64) -> [f64; 2] {
    let r = radius * rng.gen::<f64>().sqrt();
    let th = rng.gen_range(0.0..std::f64::consts::TAU);
    [center[0] + r * th.cos(), center[1] + r * th.sin()]
}

#[allow(clippy::too_many_arguments)]
pub fn generate_scenario(
    geometry: &GeometryConfig,
    m_t: usize,
    n: usize,
    k: usize,
    l: usize,
    rate_targets: &[f64],
    it_thresholds: &[f64],
    rng_seed: u64,
) -> Result<Scenario> {
    geometry.validate()?;
    if m_t == 0 || n == 0 || k == 0 || l == 0 {
        return Err(Error::DimensionMismatch("M_t, N, K and L must be at least 1".into()));
    }
    if rate_targets.len() != k || it_thresholds.len() != l {
        return Err(Error::DimensionMismatch("one rate per SU and one threshold per PR".into()));
    }
    if rate_targets.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::Domain("rate targets must be nonnegative".into()));
    }
    let g = geometry;
    let noise = g.noise_power_w();

    let mut rng = child_rng(rng_seed, TAG_F);
    let f = cn_mat(&mut rng, n, m_t, g.gain(g.st, g.irs, g.alpha_irs)?);

    let mut h_d = Vec::with_capacity(k);
    let mut h_r = Vec::with_capacity(k);
    let mut su_positions = Vec::with_capacity(k);
    for i in 0..k {
        let mut rng = child_rng(rng_seed, TAG_SU + i as u64);
        let pos = uniform_in_disc(&mut rng, g.su_cell_center, g.su_cell_radius);
        h_d.push(cn_vec(&mut rng, m_t, g.gain(g.st, pos, g.alpha_stu)?));
        h_r.push(cn_vec(&mut rng, n, g.gain(g.irs, pos, g.alpha_irs)?));
        su_positions.push(pos);
    }

    let disc = match g.pr_placement {
        PrPlacement::Auto => l > 1,
        PrPlacement::Fixed => false,
        PrPlacement::Disc => true,
    };
    let mut g_d = Vec::with_capacity(l);
    let mut g_r = Vec::with_capacity(l);
    let mut pr_positions = Vec::with_capacity(l);
    for i in 0..l {
        let mut rng = child_rng(rng_seed, TAG_PR + i as u64);
        let pos = if disc {
            uniform_in_disc(&mut rng, g.pr_cell_center, g.pr_cell_radius)
        } else {
            g.pr
        };
        g_d.push(cn_vec(&mut rng, m_t, g.gain(g.st, pos, g.alpha_stu)?));
        let refl = cn_vec(&mut rng, n, g.gain(g.irs, pos, g.alpha_irs)?);
        g_r.push(cascade(&refl, &f)?);
        pr_positions.push(pos);
    }

    Ok(Scenario {
        m_t,
        n,
        k,
        l,
        f,
        h_d,
        h_r,
        g_d,
        g_r,
        noise: vec![noise; k],
        gamma: rate_targets.iter().map(|r| rate_to_sinr(*r)).collect(),
        it_threshold: it_thresholds.to_vec(),
        su_positions,
        pr_positions,
    })
}

/// `diag(g_rᴴ)·F`.
pub fn cascade(g_r: &CVec, f: &CMat) -> Result<CMat> {
    if g_r.len() != f.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "reflect channel of length {} for F with {} rows",
            g_r.len(),
            f.nrows()
        )));
    }
    let mut out = f.clone();
    for (i, gi) in g_r.iter().enumerate() {
        let s = gi.conj();
        out.row_mut(i).iter_mut().for_each(|z| *z *= s);
    }
    Ok(out)
}

/// `[G_r; g_dᴴ]`, `(N+1)×M_t`.
pub fn combine(g_r: &CMat, g_d: &CVec) -> Result<CMat> {
    if g_r.ncols() != g_d.len() {
        return Err(Error::DimensionMismatch(format!(
            "cascade with {} columns and direct channel of length {}",
            g_r.ncols(),
            g_d.len()
        )));
    }
    let n = g_r.nrows();
    Ok(CMat::from_fn(n + 1, g_r.ncols(), |i, j| {
        if i < n {
            g_r[(i, j)]
        } else {
            g_d[j].conj()
        }
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSpec {
    pub c_eta: f64,
    pub delta_g: f64,
}

impl CorrelationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.c_eta) || !(0.0..1.0).contains(&self.delta_g) {
            return Err(Error::Domain("c_η and δ_g must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// `[C]_{mn} = c^{|m−n|}`.
pub fn correlation_matrix(dim: usize, c_eta: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| c_eta.powi((i as i32 - j as i32).abs()))
}

/// Covariances of one PR's CSI errors, `Σ = (σC)(σC)ᴴ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiCovariance {
    pub sigma2_gd: f64,
    pub sigma2_gr: f64,
    /// `Σ^{1/2}` factors used for sampling
    pub sqrt_gd: CMat,
    pub sqrt_gr: CMat,
    pub cov_gd: CMat,
    pub cov_gr: CMat,
}

impl CsiCovariance {
    /// `blockdiag(Σ_gr, Σ_gd)`.
    pub fn combined(&self) -> CMat {
        let a = self.cov_gr.nrows();
        let b = self.cov_gd.nrows();
        let mut out = CMat::zeros(a + b, a + b);
        out.view_mut((0, 0), (a, a)).copy_from(&self.cov_gr);
        out.view_mut((a, a), (b, b)).copy_from(&self.cov_gd);
        out
    }

    /// The same covariance with every error scaled by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            sigma2_gd: self.sigma2_gd * s * s,
            sigma2_gr: self.sigma2_gr * s * s,
            sqrt_gd: self.sqrt_gd.map(|z| z * s),
            sqrt_gr: self.sqrt_gr.map(|z| z * s),
            cov_gd: self.cov_gd.map(|z| z * s * s),
            cov_gr: self.cov_gr.map(|z| z * s * s),
        }
    }
}

fn covariance_block(norm2: f64, dim: usize, spec: &CorrelationSpec) -> (f64, CMat, CMat) {
    let c = correlation_matrix(dim, spec.c_eta);
    let c2 = &c * &c;
    let sigma2 = spec.delta_g.powi(2) * norm2 * (dim as f64).sqrt() / c2.norm();
    let s = sigma2.sqrt();
    let sqrt = c.map(|x| Complex64::new(s * x, 0.0));
    let cov = c2.map(|x| Complex64::new(sigma2 * x, 0.0));
    (sigma2, sqrt, cov)
}

pub fn build_covariances(scenario: &Scenario, spec: &CorrelationSpec, l: usize) -> Result<CsiCovariance> {
    spec.validate()?;
    if l >= scenario.l {
        return Err(Error::DimensionMismatch(format!("PR index {l} out of range")));
    }
    let (sigma2_gd, sqrt_gd, cov_gd) = covariance_block(norm2(&scenario.g_d[l]), scenario.m_t, spec);
    let (sigma2_gr, sqrt_gr, cov_gr) =
        covariance_block(frob2(&scenario.g_r[l]), scenario.n * scenario.m_t, spec);
    Ok(CsiCovariance {
        sigma2_gd,
        sigma2_gr,
        sqrt_gd,
        sqrt_gr,
        cov_gd,
        cov_gr,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundedRegion {
    pub eps_d: f64,
    pub eps_r: f64,
}

/// Radii matched to the statistical model at outage level `β`.
pub fn calibrate_bounded_radii(cov: &CsiCovariance, beta: f64) -> Result<BoundedRegion> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidBeta(beta));
    }
    if beta == 0.0 {
        return Err(Error::Domain("β = 0 gives unbounded regions".into()));
    }
    let dim_d = cov.cov_gd.nrows() as u32;
    let dim_r = cov.cov_gr.nrows() as u32;
    Ok(BoundedRegion {
        eps_d: (cov.sigma2_gd / 2.0 * chi2_inv_cdf(2 * dim_d, 1.0 - beta)?).sqrt(),
        eps_r: (cov.sigma2_gr / 2.0 * chi2_inv_cdf(2 * dim_r, 1.0 - beta)?).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatisticalCsi {
    pub cov: CsiCovariance,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum UncertaintyModel {
    Bounded(Vec<BoundedRegion>),
    Statistical(Vec<StatisticalCsi>),
}

impl UncertaintyModel {
    pub fn len(&self) -> usize {
        match self {
            UncertaintyModel::Bounded(v) => v.len(),
            UncertaintyModel::Statistical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Both models for every PR of `scenario`: statistical covariances and the
/// matched bounded radii.
pub fn calibrate(
    scenario: &Scenario,
    spec: &CorrelationSpec,
    beta: f64,
) -> Result<(UncertaintyModel, UncertaintyModel)> {
    let mut stat = Vec::with_capacity(scenario.l);
    let mut bounded = Vec::with_capacity(scenario.l);
    for l in 0..scenario.l {
        let cov = build_covariances(scenario, spec, l)?;
        bounded.push(calibrate_bounded_radii(&cov, beta)?);
        stat.push(StatisticalCsi { cov, beta });
    }
    Ok((UncertaintyModel::Statistical(stat), UncertaintyModel::Bounded(bounded)))
}

fn ball_scale<R: Rng + ?Sized>(rng: &mut R, v: &mut [Complex64], radius: f64, boundary: bool) {
    for z in v.iter_mut() {
        *z = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    }
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let dim = 2 * v.len();
    let r = if boundary {
        radius
    } else {
        radius * rng.gen::<f64>().powf(1.0 / dim as f64)
    };
    if norm > 0.0 {
        v.iter_mut().for_each(|z| *z *= r / norm);
    }
}

/// One draw of `(Δg_d, vec⁻¹(ΔG_r))` from a Gaussian error model.
pub fn sample_statistical<R: Rng + ?Sized>(cov: &CsiCovariance, m_t: usize, n: usize, rng: &mut R) -> (CVec, CMat) {
    let t_d = cn_vec(rng, m_t, 1.0);
    let t_r = cn_vec(rng, n * m_t, 1.0);
    let dg_d = &cov.sqrt_gd * t_d;
    let vec_r = &cov.sqrt_gr * t_r;
    (dg_d, CMat::from_column_slice(n, m_t, vec_r.as_slice()))
}

/// One draw from the error balls, uniform inside them or on their spheres.
pub fn sample_bounded<R: Rng + ?Sized>(
    region: &BoundedRegion,
    m_t: usize,
    n: usize,
    rng: &mut R,
    boundary: bool,
) -> (CVec, CMat) {
    let mut dg_d = CVec::zeros(m_t);
    let mut dg_r = CMat::zeros(n, m_t);
    ball_scale(rng, dg_d.as_mut_slice(), region.eps_d, boundary);
    ball_scale(rng, dg_r.as_mut_slice(), region.eps_r, boundary);
    (dg_d, dg_r)
}

/// One draw of `(Δg_d, ΔG_r)` for PR `l`.
pub fn sample_error<R: Rng + ?Sized>(
    model: &UncertaintyModel,
    l: usize,
    m_t: usize,
    n: usize,
    rng: &mut R,
    boundary: bool,
) -> (CVec, CMat) {
    match model {
        UncertaintyModel::Statistical(v) => sample_statistical(&v[l].cov, m_t, n, rng),
        UncertaintyModel::Bounded(v) => sample_bounded(&v[l], m_t, n, rng, boundary),
    }
}
