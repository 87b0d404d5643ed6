//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature (default) the map runs on a rayon pool sized
//! by `workers` (0 = rayon's default). Without it, or with `workers == 1`,
//! the map is sequential. Either way the output order matches the input
//! order, so results are identical across worker counts.

/// Apply `f` to every item, returning outputs in input order.
#[cfg(feature = "parallel")]
pub fn map_points<I, O, F>(items: &[I], workers: usize, f: F) -> Vec<O>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> O + Sync + Send,
{
    use rayon::prelude::*;
    match workers {
        1 => items.iter().map(f).collect(),
        0 => items.par_iter().map(f).collect(),
        n => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("failed to build worker pool");
            pool.install(|| items.par_iter().map(f).collect())
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_points<I, O, F>(items: &[I], _workers: usize, f: F) -> Vec<O>
where
    F: Fn(&I) -> O,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_preserved_across_worker_counts() {
        let items: Vec<u64> = (0..64).collect();
        let seq = map_points(&items, 1, |&x| x * x);
        for workers in [0, 2, 4] {
            let par = map_points(&items, workers, |&x| x * x);
            assert_eq!(seq, par);
        }
    }
}
