#![allow(dead_code)]

use irscr::channels::{calibrate, child_seed, GeometryConfig, Scenario, UncertaintyModel};
use irscr::harness::{BasePoint, PointSetup};
use irscr::linalg::{cn_mat, cn_vec, random_phases, CMat, CVec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub scenario: Scenario,
    pub stat: UncertaintyModel,
    pub bounded: UncertaintyModel,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Reference operating point: M_t=4, N=6, K=2, L=1, r=2, Γ=−80 dBm.
pub fn reference() -> PointSetup {
    PointSetup {
        geometry: GeometryConfig::default(),
        base: BasePoint::default(),
    }
}

/// PR 60 m from the ST, close enough for the interference limit to bind.
pub fn near_pr(gamma_dbm: f64) -> PointSetup {
    let mut s = reference();
    s.geometry.pr = [300.0, 60.0];
    s.base.gamma_dbm = gamma_dbm;
    s
}

pub fn fixture(setup: &PointSetup, idx: u64) -> Fixture {
    let scenario = setup.scenario(child_seed(0x7e57, idx)).unwrap();
    let (stat, bounded) = calibrate(&scenario, &setup.correlation(), setup.base.beta).unwrap();
    Fixture {
        scenario,
        stat,
        bounded,
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn random_w(seed: u64, m_t: usize, k: usize) -> CMat {
    cn_mat(&mut rng(seed), m_t, k, 1.0)
}

pub fn random_vec(seed: u64, n: usize) -> CVec {
    cn_vec(&mut rng(seed), n, 1.0)
}

pub fn unit_phases(seed: u64, n: usize) -> CVec {
    random_phases(&mut rng(seed), n)
}
