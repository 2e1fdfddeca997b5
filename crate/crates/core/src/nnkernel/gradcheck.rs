//! Central-difference gradient checking.
//!
//! The fragment under test is a closure over a flat `f64` parameter vector.
//! Besides the loss it reports an activation `pattern` fingerprint (ReLU masks,
//! pooling argmax positions). A coordinate whose ±h probes change the pattern
//! straddles a non-differentiable point and is skipped rather than scored.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result of evaluating a differentiable fragment at one parameter point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    /// Analytic gradient; may be empty when not requested.
    pub grad: Vec<f64>,
    /// Fingerprint of every piecewise branch taken by the forward pass.
    pub pattern: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub h: f64,
    /// Check a seeded subset of this many coordinates (at least 200) instead of all of them.
    pub max_coords: Option<usize>,
    pub seed: u64,
    /// Lower bound on the relative-error denominator so vanishing gradients are not divided by ~0.
    pub denom_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { h: 1e-5, max_coords: None, seed: 0, denom_floor: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_coord: Option<usize>,
    pub checked: usize,
    pub skipped: usize,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare the analytic gradient at `params` with central differences.
///
/// `eval(params, want_grad)` must be a pure function of `params`.
pub fn grad_check<F>(params: &[f64], mut eval: F, cfg: &GradCheckConfig) -> GradCheckReport
where
    F: FnMut(&[f64], bool) -> Evaluation,
{
    let base = eval(params, true);
    assert_eq!(base.grad.len(), params.len(), "analytic gradient length must match parameter count");
    let coords: Vec<usize> = match cfg.max_coords {
        Some(limit) if params.len() > limit.max(200) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut picked = sample(&mut rng, params.len(), limit.max(200)).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..params.len()).collect(),
    };
    let mut probe = params.to_vec();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst_coord: None, checked: 0, skipped: 0 };
    for i in coords {
        let orig = probe[i];
        probe[i] = orig + cfg.h;
        let plus = eval(&probe, false);
        probe[i] = orig - cfg.h;
        let minus = eval(&probe, false);
        probe[i] = orig;
        if plus.pattern != base.pattern || minus.pattern != base.pattern {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus.loss - minus.loss) / (2.0 * cfg.h);
        let err = relative_error(base.grad[i], numeric, cfg.denom_floor);
        report.checked += 1;
        if report.worst_coord.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_coord = Some(i);
        }
    }
    report
}
