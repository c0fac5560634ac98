//! Data-parallel map with a sequential fallback.
//!
//! Results always come back in input order, so reductions over them are
//! bit-identical whichever mode ran.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    /// Rayon's global pool; falls back to sequential without the `parallel` feature.
    #[default]
    Parallel,
}

impl Exec {
    /// Whether this build can actually run work on more than one thread.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Runs `f` over consecutive chunks of `chunk` items each.
pub fn map_chunks<T, R, F>(exec: Exec, items: &[T], chunk: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&[T]) -> R + Sync + Send,
{
    let chunks: Vec<&[T]> = items.chunks(chunk.max(1)).collect();
    map(exec, &chunks, |c| f(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let seq = map(Exec::Sequential, &xs, |x| x * x);
        let par = map(Exec::Parallel, &xs, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[999], 998_001);
    }

    #[test]
    fn chunked_float_sums_are_bitwise_stable() {
        let xs: Vec<f64> = (0..257)
            .map(|i| (i as f64 * 0.37).sin() * 1e-3 + 1.0)
            .collect();
        let reduce = |exec| {
            map_chunks(exec, &xs, 16, |c| c.iter().sum::<f64>())
                .into_iter()
                .fold(0.0, |a, b| a + b)
        };
        assert_eq!(
            reduce(Exec::Sequential).to_bits(),
            reduce(Exec::Parallel).to_bits()
        );
    }
}
