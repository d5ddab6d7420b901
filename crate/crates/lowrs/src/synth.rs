//! Synthetic ground truth and per-scenario observation assembly.
//!
//! Low-rank components come from a bilinear factor model `X0 = W Z'` with
//! Gaussian factors, sparse components from the three-point distribution on
//! `{-1, 0, +1}`, noise is i.i.d. Gaussian, and sampling masks are i.i.d.
//! Bernoulli. Each quantity draws from its own labeled substream of the
//! scenario seed, so regenerating any one of them never disturbs the others.

use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::network::RoutingMatrix;
use crate::numerics::DenseMatrix;
use crate::rng::substream;

/// The hidden components a scenario is scored against.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// Low-rank component, shaped like the application's recovery target.
    /// Empty (0 x 0) when the scenario has none.
    pub x0: DenseMatrix,
    /// Sparse component with entries in `{-1, 0, +1}`; empty when absent.
    pub a0: DenseMatrix,
    pub true_rank: usize,
}

/// Binary observed-entry mask.
#[derive(Clone, Debug)]
pub struct SampleMask {
    pub mask: DenseMatrix,
}

impl SampleMask {
    pub fn full(rows: usize, cols: usize) -> Self {
        Self { mask: DenseMatrix::from_fn(rows, cols, |_, _| 1.0) }
    }

    /// Zeroes every entry of `m` outside the mask.
    pub fn project(&self, m: &DenseMatrix) -> DenseMatrix {
        self.mask.hadamard(m)
    }
}

/// Product of `rows x r` and `cols x r` Gaussian factor matrices with the
/// given per-entry variances.
pub fn gen_low_rank(
    rows: usize,
    cols: usize,
    r: usize,
    w_var: f64,
    z_var: f64,
    rng: &mut impl Rng,
) -> DenseMatrix {
    assert!(r <= rows.min(cols), "rank exceeds matrix dimensions");
    let w = gaussian_matrix(rows, r, w_var.sqrt(), rng);
    let z = gaussian_matrix(cols, r, z_var.sqrt(), rng);
    w.matmul(&z.t())
}

/// I.i.d. entries: -1 with probability `pi/2`, +1 with probability `pi/2`,
/// 0 otherwise.
pub fn gen_sparse(f: usize, t: usize, pi: f64, rng: &mut impl Rng) -> DenseMatrix {
    assert!((0.0..=1.0).contains(&pi), "probability out of range");
    DenseMatrix::from_fn(f, t, |_, _| {
        let u: f64 = rng.gen();
        if u < pi / 2.0 {
            -1.0
        } else if u < pi {
            1.0
        } else {
            0.0
        }
    })
}

/// I.i.d. Gaussian entries with standard deviation `sigma`.
pub fn gen_noise(rows: usize, cols: usize, sigma: f64, rng: &mut impl Rng) -> DenseMatrix {
    assert!(sigma >= 0.0, "sigma must be nonnegative");
    gaussian_matrix(rows, cols, sigma, rng)
}

/// I.i.d. Bernoulli(p) binary mask.
pub fn gen_mask(rows: usize, cols: usize, p: f64, rng: &mut impl Rng) -> SampleMask {
    assert!((0.0..=1.0).contains(&p), "probability out of range");
    SampleMask {
        mask: DenseMatrix::from_fn(rows, cols, |_, _| if rng.gen::<f64>() < p { 1.0 } else { 0.0 }),
    }
}

pub fn gaussian_matrix(rows: usize, cols: usize, sd: f64, rng: &mut impl Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// Which estimator a scenario exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Fully observed link loads `Y = R (Z0 + A0) + V`; recover the routed
    /// low-rank part and the sparse flow anomalies.
    Anomaly,
    /// Fully observed rows `Y = X0 + A0 + V`; robust PCA.
    RobustPca,
    /// Partially observed rows `P(Y) = P(X0 + V)`; matrix completion.
    Completion,
    /// Regression data `Y = R A0 + V`; distributed Lasso.
    Lasso,
}

/// Dimension and distribution knobs for the generators.
#[derive(Clone, Debug)]
pub struct SynthParams {
    /// Data rows for RobustPca/Completion; ignored for routed scenarios
    /// where the routing matrix fixes the row count.
    pub data_rows: usize,
    pub t_cols: usize,
    pub rank: usize,
    pub sigma: f64,
    pub pi: f64,
    pub p_obs: f64,
}

/// One scenario's observations, already split across agents.
#[derive(Clone, Debug)]
pub struct ScenarioData {
    pub kind: ScenarioKind,
    /// Per-agent observed blocks (masked where the scenario samples).
    pub y_parts: Vec<DenseMatrix>,
    /// Per-agent observation masks (all ones when fully observed).
    pub mask_parts: Vec<DenseMatrix>,
    /// Per-agent routing blocks for the routed scenarios.
    pub r_parts: Option<Vec<DenseMatrix>>,
    pub truth: GroundTruth,
    /// Row range of each agent within the stacked data.
    pub row_ranges: Vec<Range<usize>>,
}

impl ScenarioData {
    /// The stacked observed matrix (masked entries are zero).
    pub fn y_full(&self) -> DenseMatrix {
        DenseMatrix::vstack(&self.y_parts)
    }

    pub fn mask_full(&self) -> DenseMatrix {
        DenseMatrix::vstack(&self.mask_parts)
    }

    pub fn r_full(&self) -> Option<DenseMatrix> {
        self.r_parts.as_ref().map(|p| DenseMatrix::vstack(p))
    }
}

/// Composes the generators for one scenario and partitions the rows across
/// agents: routed scenarios split by link ownership, the others into
/// contiguous near-equal blocks.
pub fn build_scenario_data(
    kind: ScenarioKind,
    params: &SynthParams,
    routing: Option<&RoutingMatrix>,
    row_ranges_by_owner: Option<&[Range<usize>]>,
    n_agents: usize,
    seed: u64,
) -> Result<ScenarioData> {
    match kind {
        ScenarioKind::Anomaly => {
            let routing = routing.ok_or_else(|| {
                Error::ShapeMismatch("routed scenario needs a routing matrix".into())
            })?;
            let ranges = row_ranges_by_owner
                .ok_or_else(|| Error::ShapeMismatch("routed scenario needs row ownership".into()))?
                .to_vec();
            let (f, t) = (routing.n_flows(), params.t_cols);
            check_ownership(&ranges, routing.n_links(), n_agents)?;
            let z0 = gen_low_rank(
                f,
                t,
                params.rank,
                100.0 / f as f64,
                100.0 / t as f64,
                &mut substream(seed, "low-rank"),
            );
            let a0 = gen_sparse(f, t, params.pi, &mut substream(seed, "sparse"));
            let v = gen_noise(routing.n_links(), t, params.sigma, &mut substream(seed, "noise"));
            let x0 = routing.entries.matmul(&z0);
            let y = x0.add(&routing.entries.matmul(&a0)).add(&v);
            Ok(ScenarioData {
                kind,
                y_parts: split_rows(&y, &ranges),
                mask_parts: ranges.iter().map(|r| all_ones(r.len(), t)).collect(),
                r_parts: Some(split_rows(&routing.entries, &ranges)),
                truth: GroundTruth { x0, a0, true_rank: params.rank },
                row_ranges: ranges,
            })
        }
        ScenarioKind::RobustPca => {
            let (f, t) = (params.data_rows, params.t_cols);
            let ranges = equal_ranges(f, n_agents);
            let x0 = gen_low_rank(
                f,
                t,
                params.rank,
                100.0 / f as f64,
                100.0 / t as f64,
                &mut substream(seed, "low-rank"),
            );
            let a0 = gen_sparse(f, t, params.pi, &mut substream(seed, "sparse"));
            let v = gen_noise(f, t, params.sigma, &mut substream(seed, "noise"));
            let y = x0.add(&a0).add(&v);
            Ok(ScenarioData {
                kind,
                y_parts: split_rows(&y, &ranges),
                mask_parts: ranges.iter().map(|r| all_ones(r.len(), t)).collect(),
                r_parts: None,
                truth: GroundTruth { x0, a0, true_rank: params.rank },
                row_ranges: ranges,
            })
        }
        ScenarioKind::Completion => {
            let (l, t) = (params.data_rows, params.t_cols);
            let ranges = equal_ranges(l, n_agents);
            let x0 = gen_low_rank(
                l,
                t,
                params.rank,
                100.0 / l as f64,
                100.0 / t as f64,
                &mut substream(seed, "low-rank"),
            );
            let v = gen_noise(l, t, params.sigma, &mut substream(seed, "noise"));
            let mask = gen_mask(l, t, params.p_obs, &mut substream(seed, "mask"));
            let y = mask.project(&x0.add(&v));
            Ok(ScenarioData {
                kind,
                y_parts: split_rows(&y, &ranges),
                mask_parts: split_rows(&mask.mask, &ranges),
                r_parts: None,
                truth: GroundTruth { x0, a0: DenseMatrix::zeros(0, 0), true_rank: params.rank },
                row_ranges: ranges,
            })
        }
        ScenarioKind::Lasso => {
            let routing = routing.ok_or_else(|| {
                Error::ShapeMismatch("routed scenario needs a routing matrix".into())
            })?;
            let ranges = row_ranges_by_owner
                .ok_or_else(|| Error::ShapeMismatch("routed scenario needs row ownership".into()))?
                .to_vec();
            check_ownership(&ranges, routing.n_links(), n_agents)?;
            let (f, t) = (routing.n_flows(), params.t_cols);
            let a0 = gen_sparse(f, t, params.pi, &mut substream(seed, "sparse"));
            let v = gen_noise(routing.n_links(), t, params.sigma, &mut substream(seed, "noise"));
            let y = routing.entries.matmul(&a0).add(&v);
            Ok(ScenarioData {
                kind,
                y_parts: split_rows(&y, &ranges),
                mask_parts: ranges.iter().map(|r| all_ones(r.len(), t)).collect(),
                r_parts: Some(split_rows(&routing.entries, &ranges)),
                truth: GroundTruth { x0: DenseMatrix::zeros(0, 0), a0, true_rank: 0 },
                row_ranges: ranges,
            })
        }
    }
}

/// Contiguous near-equal row blocks; the first `rows % n` agents take one
/// extra row. Agents beyond `rows` end up with empty blocks.
pub fn equal_ranges(rows: usize, n_agents: usize) -> Vec<Range<usize>> {
    assert!(n_agents >= 1);
    let base = rows / n_agents;
    let extra = rows % n_agents;
    let mut out = Vec::with_capacity(n_agents);
    let mut start = 0;
    for i in 0..n_agents {
        let len = base + usize::from(i < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

fn split_rows(m: &DenseMatrix, ranges: &[Range<usize>]) -> Vec<DenseMatrix> {
    ranges.iter().map(|r| m.row_block(r.clone())).collect()
}

fn all_ones(rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| 1.0)
}

fn check_ownership(ranges: &[Range<usize>], total_rows: usize, n_agents: usize) -> Result<()> {
    if ranges.len() != n_agents {
        return Err(Error::ShapeMismatch(format!(
            "{} row ranges for {} agents",
            ranges.len(),
            n_agents
        )));
    }
    let covered: usize = ranges.iter().map(|r| r.len()).sum();
    if covered != total_rows {
        return Err(Error::ShapeMismatch(format!(
            "row ranges cover {covered} of {total_rows} rows"
        )));
    }
    Ok(())
}
