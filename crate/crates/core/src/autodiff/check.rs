use super::{Gradients, ParamKind, ParamStore};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which parameter coordinates a finite-difference check perturbs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdSelection {
    All,
    /// Every quantum coordinate, plus up to `per_tensor` seeded picks from
    /// each classical tensor.
    Sampled {
        per_tensor: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub checked: usize,
    /// Largest `|analytic − numeric| / |analytic|` over coordinates whose
    /// analytic gradient is at least `small_cutoff` in magnitude.
    pub max_rel_error: f64,
    /// Largest absolute error over the remaining (small-gradient) coordinates.
    pub max_abs_error_small: f64,
    pub small_cutoff: f64,
    /// `(parameter name, flat index, analytic, numeric)` of the worst relative miss.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl FdReport {
    pub fn passes(&self, rel_tol: f64, abs_tol: f64) -> bool {
        self.max_rel_error <= rel_tol && self.max_abs_error_small <= abs_tol
    }
}

/// Compares `analytic` against central differences of `loss_fn` with step `h`.
pub fn finite_difference_check<F, E>(
    loss_fn: F,
    store: &ParamStore,
    analytic: &Gradients,
    h: f64,
    selection: FdSelection,
) -> Result<FdReport, E>
where
    F: Fn(&ParamStore) -> Result<f64, E>,
{
    let small_cutoff = 1e-2;
    let mut work = store.clone();
    let mut report = FdReport {
        checked: 0,
        max_rel_error: 0.0,
        max_abs_error_small: 0.0,
        small_cutoff,
        worst: None,
    };
    for (id, p) in store.iter() {
        let n = p.value.len();
        let coords: Vec<usize> = match selection {
            FdSelection::Sampled { per_tensor, seed }
                if p.kind == ParamKind::Classical && n > per_tensor =>
            {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ (id.index() as u64).wrapping_mul(0x9E37_79B9));
                let mut picks = sample(&mut rng, n, per_tensor).into_vec();
                picks.sort_unstable();
                picks
            }
            _ => (0..n).collect(),
        };
        let cols = p.value.ncols();
        for flat in coords {
            let idx = [flat / cols, flat % cols];
            let orig = p.value[idx];
            work.value_mut(id)[idx] = orig + h;
            let up = loss_fn(&work)?;
            work.value_mut(id)[idx] = orig - h;
            let down = loss_fn(&work)?;
            work.value_mut(id)[idx] = orig;

            let numeric = (up - down) / (2.0 * h);
            let an = analytic.get(id)[idx];
            report.checked += 1;
            if an.abs() < small_cutoff {
                report.max_abs_error_small = report.max_abs_error_small.max((an - numeric).abs());
            } else {
                let rel = (an - numeric).abs() / an.abs();
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst = Some((p.name.clone(), flat, an, numeric));
                }
            }
        }
    }
    Ok(report)
}
