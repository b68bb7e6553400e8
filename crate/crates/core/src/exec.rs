//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) independent work items (multistarts,
//! ladder rungs, audit sites, test corpora) are spread over the rayon pool.
//! Output order always matches input order, so results do not depend on the
//! schedule.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    /// Parallel when the `parallel` feature is compiled in.
    #[default]
    Auto,
    Sequential,
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self != Exec::Sequential
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_in_both_modes() {
        let xs: Vec<u64> = (0..1000).collect();
        let seq = Exec::Sequential.map(&xs, |x| x * x);
        let par = Exec::Parallel.map(&xs, |x| x * x);
        assert_eq!(seq, par);
        assert_eq!(seq[999], 998001);
    }
}
