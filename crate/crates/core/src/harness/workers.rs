use crate::error::Result;
#[cfg(feature = "parallel")]
use crate::error::Error;

/// Per-task fan-out. Results always come back in index order, so the
/// thread count never changes what is computed.
pub(crate) struct Workers {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Workers {
    pub(crate) fn new(threads: usize) -> Result<Self> {
        #[cfg(feature = "parallel")]
        {
            let pool = if threads > 1 {
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(threads)
                        .build()
                        .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
                )
            } else {
                None
            };
            Ok(Self { pool })
        }
        #[cfg(not(feature = "parallel"))]
        {
            if threads > 1 {
                log::warn!("built without the parallel feature; running single-threaded");
            }
            Ok(Self {})
        }
    }

    pub(crate) fn map<T: Send>(&self, n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            let results: Vec<Result<T>> = pool.install(|| (0..n).into_par_iter().map(&f).collect());
            return results.into_iter().collect();
        }
        (0..n).map(f).collect()
    }
}
