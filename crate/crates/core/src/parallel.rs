//! Seeded Monte-Carlo fan-out. Work is cut into fixed-size chunks, each
//! with its own ChaCha stream, so results do not depend on thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "CWL_THREADS";

/// Samples per independent stream.
pub const CHUNK: u64 = 4096;

/// Parsed value of `CWL_THREADS`, if set.
pub fn thread_limit() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(Error::Parameter(format!(
                "{THREADS_ENV} must be a positive integer, got {s:?}"
            ))),
            Ok(n) => Ok(Some(n)),
        },
    }
}

/// The rng for chunk `index` of the run seeded with `seed`.
pub fn chunk_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `work(rng, len)` on every chunk of `samples` and returns the chunk
/// results in chunk order.
pub fn map_chunks<A, F>(samples: u64, seed: u64, work: F) -> Result<Vec<A>>
where
    A: Send,
    F: Fn(&mut ChaCha8Rng, u64) -> A + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let run = || -> Vec<A> {
        (0..chunks)
            .into_par_iter()
            .map(|i| {
                let len = CHUNK.min(samples - i * CHUNK);
                work(&mut chunk_rng(seed, i), len)
            })
            .collect()
    };
    match thread_limit()? {
        None => Ok(run()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Parameter(e.to_string()))?;
            Ok(pool.install(run))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn chunks_cover_samples_in_order() {
        let lens = map_chunks(10_000, 3, |_, len| len).unwrap();
        assert_eq!(lens, vec![4096, 4096, 1808]);
        assert!(map_chunks(0, 3, |_, len| len).unwrap().is_empty());
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a = map_chunks(3 * CHUNK, 9, |rng, _| rng.random::<u64>()).unwrap();
        let b = map_chunks(3 * CHUNK, 9, |rng, _| rng.random::<u64>()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        assert_ne!(a[1], a[2]);
    }
}
