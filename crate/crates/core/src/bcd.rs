//! Alternating precoder / phase loop shared by both schemes.

use log::debug;

use crate::error::Result;
use crate::linalg::{frob2, CMat, CVec};
use crate::problem::{BcdOptions, Problem};

pub struct BcdRun {
    /// internal precoder
    pub w: CMat,
    pub phi: CVec,
    /// physical power, initial point first
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Alternate `w_step(φ, W_t)` and `phi_step(W, φ_t)` until the relative
/// decrease `(P_t − P_{t+1})/P_{t+1}` drops below `ζ` or `t_max` outer
/// iterations have run. A precoder step that would raise the power is
/// discarded, so the trace never increases.
pub fn run_bcd(
    problem: &Problem,
    opts: &BcdOptions,
    w0: CMat,
    phi0: CVec,
    w_step: &mut dyn FnMut(&CVec, &CMat) -> Result<CMat>,
    phi_step: &mut dyn FnMut(&CMat, &CVec) -> Result<CVec>,
) -> Result<BcdRun> {
    let mut w = w0;
    let mut phi = phi0;
    let mut trace = vec![problem.power(&w)];
    let mut prev = frob2(&w);
    let mut iterations = 0;
    let mut converged = false;
    for t in 1..=opts.t_max {
        match w_step(&phi, &w) {
            Ok(cand) => {
                if frob2(&cand) < prev {
                    w = cand;
                } else {
                    debug!("outer {t}: precoder step did not lower the power, kept previous");
                }
            }
            Err(e) if t == 1 => return Err(e),
            Err(e) => {
                debug!("outer {t}: precoder step failed ({e}), stopping");
                break;
            }
        }
        iterations = t;
        let p = frob2(&w);
        trace.push(problem.power(&w));
        let rel = (prev - p) / p;
        prev = p;
        if problem.n > 0 {
            match phi_step(&w, &phi) {
                Ok(next) => phi = next,
                Err(e) => debug!("outer {t}: phase step kept previous phases ({e})"),
            }
        }
        // NaN (zero power) counts as converged
        if !(rel >= opts.zeta) {
            converged = true;
            break;
        }
    }
    Ok(BcdRun {
        w,
        phi,
        trace,
        iterations,
        converged,
    })
}
