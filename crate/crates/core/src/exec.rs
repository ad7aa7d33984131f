//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature (default) [`ExecMode::Parallel`] runs on the rayon pool; without it
//! both modes iterate sequentially. Output order always matches input order, so results are
//! identical across modes and thread counts.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            ExecMode::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            ExecMode::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_preserve_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = ExecMode::Sequential.map(&xs, |x| x * x);
        let b = ExecMode::Parallel.map(&xs, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(ExecMode::Parallel.map_range(5, |i| i), vec![0, 1, 2, 3, 4]);
    }
}
