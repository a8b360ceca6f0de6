//! Wall-clock scaling of both algorithms in horizon length.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::error::GameError;
use crate::moving_horizon;
use crate::suboptimal;

use super::{HarnessResult, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    #[serde(rename = "K")]
    pub k: usize,
    pub wall_time_alg2_s: Option<f64>,
    pub wall_time_alg1_s: Option<f64>,
    pub solves_alg2: Option<usize>,
    pub solves_alg1: Option<usize>,
}

fn entry(rows: &mut BTreeMap<usize, ScalingRow>, k: usize) -> &mut ScalingRow {
    rows.entry(k).or_insert_with(|| ScalingRow {
        k,
        wall_time_alg2_s: None,
        wall_time_alg1_s: None,
        solves_alg2: None,
        solves_alg1: None,
    })
}

fn best_of<T>(repeats: usize, mut run: impl FnMut() -> crate::error::Result<T>) -> crate::error::Result<(f64, T)> {
    let mut best = f64::INFINITY;
    let mut out = None;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let value = run()?;
        best = best.min(start.elapsed().as_secs_f64());
        out = Some(value);
    }
    Ok((best, out.expect("at least one repeat")))
}

/// Times the moving-horizon algorithm over `alg2_ks` and the suboptimal one
/// over `alg1_ks` on a single thread, keeping the fastest of `repeats` runs.
/// Horizons whose enumeration exceeds `budget` are left blank.
pub fn run_scaling_benchmark(
    scn: &Scenario,
    alg2_ks: &[usize],
    alg1_ks: &[usize],
    repeats: usize,
    budget: u64,
) -> HarnessResult<Vec<ScalingRow>> {
    for list in [alg2_ks, alg1_ks] {
        if list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GameError::InvalidArgument("K lists must be strictly ascending".into()).into());
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| GameError::InvalidArgument(e.to_string()))?;
    pool.install(|| {
        let mut rows: BTreeMap<usize, ScalingRow> = BTreeMap::new();
        for &k in alg2_ks {
            let (t, res) = best_of(repeats, || {
                moving_horizon::run_moving_horizon(&scn.model, &scn.initial, k)
            })?;
            let r = entry(&mut rows, k);
            r.wall_time_alg2_s = Some(t);
            r.solves_alg2 = Some(res.solve_count);
        }
        for &k in alg1_ks {
            let required = suboptimal::required_nodes(scn.model.m() * scn.model.n(), k);
            if required > budget as f64 {
                log::warn!("skipping suboptimal K={k}: {required:.3e} nodes over budget {budget}");
                continue;
            }
            let (t, res) = best_of(repeats, || {
                suboptimal::robust_value_iteration(&scn.model, &scn.initial, k, budget)
            })?;
            let r = entry(&mut rows, k);
            r.wall_time_alg1_s = Some(t);
            r.solves_alg1 = Some(res.solve_count);
        }
        Ok(rows.into_values().collect())
    })
}
