use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::{build_autocorrelation_with_step, build_filtered_kernel};
use super::{Autocorrelation, FilteredKernelTable, Kernel};
use crate::error::Result;

/// A kernel together with its immutable derived tables.
#[derive(Debug)]
pub struct KernelTables {
    pub kernel: Kernel,
    pub filtered: FilteredKernelTable,
    pub autocorrelation: Autocorrelation,
}

impl KernelTables {
    pub fn build(kernel: Kernel, grid_step: f64, half_range: f64) -> Result<Self> {
        let filtered = build_filtered_kernel(&kernel, grid_step, half_range)?;
        let autocorrelation = build_autocorrelation_with_step(&kernel, grid_step)?;
        Ok(KernelTables { kernel, filtered, autocorrelation })
    }
}

type CacheKey = (String, u64, u64);

/// Returns tables for `kernel`, building them at most once per process for a
/// given (kernel, grid_step, half_range).
pub fn shared_tables(kernel: &Kernel, grid_step: f64, half_range: f64) -> Result<Arc<KernelTables>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, Arc<KernelTables>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (kernel.fingerprint(), grid_step.to_bits(), half_range.to_bits());
    if let Some(hit) = cache.lock().unwrap().get(&key) {
        return Ok(Arc::clone(hit));
    }
    let tables = Arc::new(KernelTables::build(kernel.clone(), grid_step, half_range)?);
    Ok(Arc::clone(cache.lock().unwrap().entry(key).or_insert(tables)))
}
