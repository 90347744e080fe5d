//! Batch evaluation with a data-parallel (rayon) or sequential executor.
//!
//! Results are always returned in input order, so both modes produce
//! identical output.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::medium::ProblemInstance;
use crate::solver::{solve, SolveMethod, WaveSolution};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise runs sequentially.
    #[default]
    Parallel,
}

/// Applies `f` to every item, preserving order.
pub fn map_batch<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => items.iter().map(f).collect(),
        Execution::Parallel => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.iter().map(f).collect()
            }
        }
    }
}

/// Solves every instance with `method`.
pub fn solve_batch(
    instances: &[ProblemInstance],
    method: SolveMethod,
    tol: &Tolerances,
    exec: Execution,
) -> Vec<Result<WaveSolution>> {
    map_batch(instances, exec, |inst| solve(inst, method, tol))
}
