//! Batch execution helpers.
//!
//! Rollout collection, benchmark runs, and gradient accumulation are all
//! independent per item, so they go through `map` which is backed by rayon
//! when the `parallel` feature is enabled (the default). Results are
//! collected in input order, so parallel and sequential execution produce
//! identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Derive an independent stream seed (splitmix64 finalizer over seed ^ salt).
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Map `f` over `items`, preserving order. Sequential reference path.
pub fn map_seq<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Map `f` over `items`, preserving order. Parallel when the feature is on.
#[cfg(feature = "parallel")]
pub fn map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    map_seq(items, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential() {
        let items: Vec<u64> = (0..257).collect();
        let f = |x: u64| x.wrapping_mul(0x9e3779b97f4a7c15).rotate_left(17);
        assert_eq!(map(items.clone(), f), map_seq(items, f));
    }
}
