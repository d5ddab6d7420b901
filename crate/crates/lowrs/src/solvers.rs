//! The four concrete update-rule sets plugged into the engine.
//!
//! Every block update is the exact minimizer of its augmented-Lagrangian
//! subproblem: the factor blocks solve small `rho x rho` ridge systems, the
//! sparse blocks are soft-thresholding steps, and the split blocks reuse a
//! per-agent regularized Gram inverse that is computed once per run.

use crate::admm::{
    AgentState, ConsensusBlocks, Hyperparams, NeighborMessage, PrimalUpdate, StateShape,
    UpdateRules,
};
use crate::error::{Error, Result};
use crate::numerics::{inv_regularized_gram, solve_sym_pd, DenseMatrix};

/// Low-rank plus routed-sparse recovery from fully observed link loads.
/// Consensus runs on both the Q factor and the sparse block.
pub struct NetworkAnomaly {
    y: Vec<DenseMatrix>,
    r: Vec<DenseMatrix>,
    /// Cached `(R_n' R_n + c I)^{-1}`, valid for the construction-time `c`.
    rr_inv: Vec<DenseMatrix>,
    c: f64,
    rho: usize,
    t_cols: usize,
    f_flows: usize,
}

impl NetworkAnomaly {
    pub fn new(y: Vec<DenseMatrix>, r: Vec<DenseMatrix>, hp: &Hyperparams) -> Result<Self> {
        hp.validate()?;
        if y.len() != r.len() {
            return Err(Error::ShapeMismatch("one routing block per data block".into()));
        }
        let f_flows = r.first().map_or(0, |b| b.cols());
        let t_cols = y.first().map_or(0, |b| b.cols());
        for (yn, rn) in y.iter().zip(&r) {
            if yn.rows() != rn.rows() || yn.cols() != t_cols || rn.cols() != f_flows {
                return Err(Error::ShapeMismatch(format!(
                    "data block {:?} vs routing block {:?}",
                    yn.shape(),
                    rn.shape()
                )));
            }
        }
        let rr_inv =
            r.iter().map(|rn| inv_regularized_gram(rn, hp.c)).collect::<Result<Vec<_>>>()?;
        Ok(Self { y, r, rr_inv, c: hp.c, rho: hp.rho, t_cols, f_flows })
    }
}

impl UpdateRules for NetworkAnomaly {
    fn n_agents(&self) -> usize {
        self.y.len()
    }

    fn consensus(&self) -> ConsensusBlocks {
        ConsensusBlocks::QAndA
    }

    fn shape(&self, agent: usize) -> StateShape {
        StateShape {
            l: Some((self.y[agent].rows(), self.rho)),
            q: Some((self.t_cols, self.rho)),
            a: Some((self.f_flows, self.t_cols)),
            split_b: true,
        }
    }

    fn update_primal(
        &self,
        agent: usize,
        state: &AgentState,
        inbox: &[&NeighborMessage],
        hp: &Hyperparams,
    ) -> Result<PrimalUpdate> {
        check_penalty(self.c, hp)?;
        let n = self.n_agents() as f64;
        let jn = state.degree() as f64;
        let c = hp.c;
        let (y, r) = (&self.y[agent], &self.r[agent]);
        let (l, q) = (req(&state.l)?, req(&state.q)?);
        let (a, b) = (req(&state.a)?, req(&state.b)?);
        let (m, o, p) = (req(&state.m)?, req(&state.o)?, req(&state.p)?);
        let sum_q = sum_inbox(inbox, |msg| msg.q.as_ref(), state.id, q.shape())?;
        let sum_a = sum_inbox(inbox, |msg| msg.a.as_ref(), state.id, a.shape())?;

        // Q[k+1] = {Y'L - B'R'L - O + c sum_m (Q + Q_m)} [L'L + (ls/N + 2c|J|) I]^-1
        let rl = r.t().matmul(l);
        let rhs = y
            .t()
            .matmul(l)
            .sub(&b.t().matmul(&rl))
            .sub(o)
            .add(&q.scale(c * jn))
            .add(&sum_q.scale(c));
        let gram = ridge(&l.t().matmul(l), hp.lambda_star / n + 2.0 * c * jn);
        let q_new = solve_sym_pd(&gram, &rhs.t())?.t();

        // A[k+1] = S_{l1/N}(M + cB - P + c sum_m (A + A_m)) / (c (1 + 2|J|))
        let arg = m.add(&b.scale(c)).sub(p).add(&a.scale(c * jn)).add(&sum_a.scale(c));
        let a_new = arg.soft_threshold(hp.lambda_1 / n).scale(1.0 / (c * (1.0 + 2.0 * jn)));

        // L[k+1] = (Y - R B) Q[k+1] [Q'Q + ls I]^-1
        let lrhs = y.sub(&r.matmul(b)).matmul(&q_new);
        let lgram = ridge(&q_new.t().matmul(&q_new), hp.lambda_star);
        let l_new = solve_sym_pd(&lgram, &lrhs.t())?.t();

        // B[k+1] = (R'R + cI)^-1 {R'(Y - L[k+1] Q'[k+1]) - M + c A[k+1]}
        let inner = r
            .t()
            .matmul(&y.sub(&l_new.matmul(&q_new.t())))
            .sub(m)
            .add(&a_new.scale(c));
        let b_new = self.rr_inv[agent].matmul(&inner);

        Ok(PrimalUpdate { q: Some(q_new), a: Some(a_new), l: Some(l_new), b: Some(b_new) })
    }
}

/// Robust PCA over row-partitioned data: each agent keeps its own outlier
/// rows, so only the Q factor is consented and the sparse threshold is the
/// full (agent-local) `lambda_1`.
pub struct RobustPca {
    y: Vec<DenseMatrix>,
    rho: usize,
    t_cols: usize,
}

impl RobustPca {
    pub fn new(y: Vec<DenseMatrix>, hp: &Hyperparams) -> Result<Self> {
        hp.validate()?;
        let t_cols = y.first().map_or(0, |b| b.cols());
        if y.iter().any(|b| b.cols() != t_cols) {
            return Err(Error::ShapeMismatch("ragged data columns".into()));
        }
        Ok(Self { y, rho: hp.rho, t_cols })
    }
}

impl UpdateRules for RobustPca {
    fn n_agents(&self) -> usize {
        self.y.len()
    }

    fn consensus(&self) -> ConsensusBlocks {
        ConsensusBlocks::QOnly
    }

    fn shape(&self, agent: usize) -> StateShape {
        let rows = self.y[agent].rows();
        StateShape {
            l: Some((rows, self.rho)),
            q: Some((self.t_cols, self.rho)),
            a: Some((rows, self.t_cols)),
            split_b: false,
        }
    }

    fn update_primal(
        &self,
        agent: usize,
        state: &AgentState,
        inbox: &[&NeighborMessage],
        hp: &Hyperparams,
    ) -> Result<PrimalUpdate> {
        let n = self.n_agents() as f64;
        let jn = state.degree() as f64;
        let c = hp.c;
        let y = &self.y[agent];
        let (l, q, a, o) = (req(&state.l)?, req(&state.q)?, req(&state.a)?, req(&state.o)?);
        let sum_q = sum_inbox(inbox, |msg| msg.q.as_ref(), state.id, q.shape())?;

        let rhs = y
            .t()
            .matmul(l)
            .sub(&a.t().matmul(l))
            .sub(o)
            .add(&q.scale(c * jn))
            .add(&sum_q.scale(c));
        let gram = ridge(&l.t().matmul(l), hp.lambda_star / n + 2.0 * c * jn);
        let q_new = solve_sym_pd(&gram, &rhs.t())?.t();

        let lrhs = y.sub(a).matmul(&q_new);
        let lgram = ridge(&q_new.t().matmul(&q_new), hp.lambda_star);
        let l_new = solve_sym_pd(&lgram, &lrhs.t())?.t();

        // The sparse rows are agent-local, so the threshold is lambda_1, not
        // lambda_1 / N.
        let a_new = y.sub(&l_new.matmul(&q_new.t())).soft_threshold(hp.lambda_1);

        Ok(PrimalUpdate { q: Some(q_new), a: Some(a_new), l: Some(l_new), b: None })
    }
}

/// Matrix completion over row-partitioned, entry-sampled data. The masked
/// quadratic couples the factor entries, but the normal matrix is
/// block-diagonal, so Q is solved one data column at a time and L one data
/// row at a time, each through a `rho x rho` system.
pub struct MatrixCompletion {
    /// Observed blocks, zero outside the mask.
    y: Vec<DenseMatrix>,
    mask: Vec<DenseMatrix>,
    rho: usize,
    t_cols: usize,
}

impl MatrixCompletion {
    pub fn new(y: Vec<DenseMatrix>, mask: Vec<DenseMatrix>, hp: &Hyperparams) -> Result<Self> {
        hp.validate()?;
        if y.len() != mask.len() {
            return Err(Error::ShapeMismatch("one mask block per data block".into()));
        }
        let t_cols = y.first().map_or(0, |b| b.cols());
        for (yn, mn) in y.iter().zip(&mask) {
            if yn.shape() != mn.shape() || yn.cols() != t_cols {
                return Err(Error::ShapeMismatch("mask/data shape mismatch".into()));
            }
            if mn.data().iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::ShapeMismatch("mask entries must be 0 or 1".into()));
            }
        }
        // Work on the projected data so unobserved entries can never leak in.
        let y = y.iter().zip(&mask).map(|(yn, mn)| yn.hadamard(mn)).collect();
        Ok(Self { y, mask, rho: hp.rho, t_cols })
    }
}

impl UpdateRules for MatrixCompletion {
    fn n_agents(&self) -> usize {
        self.y.len()
    }

    fn consensus(&self) -> ConsensusBlocks {
        ConsensusBlocks::QOnly
    }

    fn shape(&self, agent: usize) -> StateShape {
        StateShape {
            l: Some((self.y[agent].rows(), self.rho)),
            q: Some((self.t_cols, self.rho)),
            a: None,
            split_b: false,
        }
    }

    fn update_primal(
        &self,
        agent: usize,
        state: &AgentState,
        inbox: &[&NeighborMessage],
        hp: &Hyperparams,
    ) -> Result<PrimalUpdate> {
        let n = self.n_agents() as f64;
        let jn = state.degree() as f64;
        let c = hp.c;
        let (y, mask) = (&self.y[agent], &self.mask[agent]);
        let (l, q, o) = (req(&state.l)?, req(&state.q)?, req(&state.o)?);
        let rho = self.rho;
        let rows = y.rows();
        let sum_q = sum_inbox(inbox, |msg| msg.q.as_ref(), state.id, q.shape())?;
        // c sum_m (Q + Q_m), one row per data column.
        let cons = q.scale(c * jn).add(&sum_q.scale(c));

        // Q column slices: for data column t solve
        // [L' diag(mask_t) L + (ls/N + 2c|J|) I] q_t = L'(mask_t. y_t) - o_t + cons_t.
        let shift_q = hp.lambda_star / n + 2.0 * c * jn;
        let mut q_new = DenseMatrix::zeros(self.t_cols, rho);
        for t in 0..self.t_cols {
            let mut gram = DenseMatrix::zeros(rho, rho);
            let mut rhs = DenseMatrix::zeros(rho, 1);
            for i in 0..rows {
                if mask.get(i, t) == 0.0 {
                    continue;
                }
                let li = l.row(i);
                for u in 0..rho {
                    for v in 0..rho {
                        gram.set(u, v, gram.get(u, v) + li[u] * li[v]);
                    }
                    rhs.set(u, 0, rhs.get(u, 0) + li[u] * y.get(i, t));
                }
            }
            for u in 0..rho {
                gram.set(u, u, gram.get(u, u) + shift_q);
                rhs.set(u, 0, rhs.get(u, 0) - o.get(t, u) + cons.get(t, u));
            }
            let qt = solve_sym_pd(&gram, &rhs)?;
            for u in 0..rho {
                q_new.set(t, u, qt.get(u, 0));
            }
        }

        // L row slices: for data row i solve
        // [Q' diag(mask_i) Q + ls I] l_i = Q'(mask_i . y_i).
        let mut l_new = DenseMatrix::zeros(rows, rho);
        for i in 0..rows {
            let mut gram = DenseMatrix::zeros(rho, rho);
            let mut rhs = DenseMatrix::zeros(rho, 1);
            for t in 0..self.t_cols {
                if mask.get(i, t) == 0.0 {
                    continue;
                }
                let qt = q_new.row(t);
                for u in 0..rho {
                    for v in 0..rho {
                        gram.set(u, v, gram.get(u, v) + qt[u] * qt[v]);
                    }
                    rhs.set(u, 0, rhs.get(u, 0) + qt[u] * y.get(i, t));
                }
            }
            for u in 0..rho {
                gram.set(u, u, gram.get(u, u) + hp.lambda_star);
            }
            let li = solve_sym_pd(&gram, &rhs)?;
            for u in 0..rho {
                l_new.set(i, u, li.get(u, 0));
            }
        }

        Ok(PrimalUpdate { q: Some(q_new), a: None, l: Some(l_new), b: None })
    }
}

/// Distributed Lasso: sparse regression against per-agent rows of a shared
/// design matrix. No factor blocks; the dual step reuses the penalty `c`.
pub struct Lasso {
    y: Vec<DenseMatrix>,
    rr_inv: Vec<DenseMatrix>,
    /// Cached `R_n' Y_n`.
    rty: Vec<DenseMatrix>,
    c: f64,
    t_cols: usize,
    f_flows: usize,
}

impl Lasso {
    pub fn new(y: Vec<DenseMatrix>, r: Vec<DenseMatrix>, hp: &Hyperparams) -> Result<Self> {
        hp.validate()?;
        if y.len() != r.len() {
            return Err(Error::ShapeMismatch("one design block per data block".into()));
        }
        let f_flows = r.first().map_or(0, |b| b.cols());
        let t_cols = y.first().map_or(0, |b| b.cols());
        for (yn, rn) in y.iter().zip(&r) {
            if yn.rows() != rn.rows() || yn.cols() != t_cols || rn.cols() != f_flows {
                return Err(Error::ShapeMismatch("design/data shape mismatch".into()));
            }
        }
        let rr_inv =
            r.iter().map(|rn| inv_regularized_gram(rn, hp.c)).collect::<Result<Vec<_>>>()?;
        let rty = r.iter().zip(&y).map(|(rn, yn)| rn.t().matmul(yn)).collect();
        Ok(Self { y, rr_inv, rty, c: hp.c, t_cols, f_flows })
    }
}

impl UpdateRules for Lasso {
    fn n_agents(&self) -> usize {
        self.y.len()
    }

    fn consensus(&self) -> ConsensusBlocks {
        ConsensusBlocks::AOnly
    }

    fn shape(&self, _agent: usize) -> StateShape {
        StateShape {
            l: None,
            q: None,
            a: Some((self.f_flows, self.t_cols)),
            split_b: true,
        }
    }

    /// The listed dual recursions step with the penalty itself.
    fn dual_step_size(&self, hp: &Hyperparams) -> f64 {
        hp.c
    }

    fn update_primal(
        &self,
        agent: usize,
        state: &AgentState,
        inbox: &[&NeighborMessage],
        hp: &Hyperparams,
    ) -> Result<PrimalUpdate> {
        check_penalty(self.c, hp)?;
        let n = self.n_agents() as f64;
        let jn = state.degree() as f64;
        let c = hp.c;
        let (a, b, m, p) = (req(&state.a)?, req(&state.b)?, req(&state.m)?, req(&state.p)?);
        let sum_a = sum_inbox(inbox, |msg| msg.a.as_ref(), state.id, a.shape())?;

        let arg = m.add(&b.scale(c)).sub(p).add(&a.scale(c * jn)).add(&sum_a.scale(c));
        let a_new = arg.soft_threshold(hp.lambda_1 / n).scale(1.0 / (c * (1.0 + 2.0 * jn)));

        let inner = self.rty[agent].sub(m).add(&a_new.scale(c));
        let b_new = self.rr_inv[agent].matmul(&inner);

        Ok(PrimalUpdate { q: None, a: Some(a_new), l: None, b: Some(b_new) })
    }
}

fn ridge(gram: &DenseMatrix, shift: f64) -> DenseMatrix {
    let mut out = gram.clone();
    for i in 0..out.rows() {
        out.set(i, i, out.get(i, i) + shift);
    }
    out
}

fn req(block: &Option<DenseMatrix>) -> Result<&DenseMatrix> {
    block
        .as_ref()
        .ok_or_else(|| Error::ShapeMismatch("rule set expects a block the state lacks".into()))
}

fn sum_inbox<'a>(
    inbox: &[&'a NeighborMessage],
    pick: impl Fn(&'a NeighborMessage) -> Option<&'a DenseMatrix>,
    agent: usize,
    shape: (usize, usize),
) -> Result<DenseMatrix> {
    let mut acc = DenseMatrix::zeros(shape.0, shape.1);
    for msg in inbox {
        let block =
            pick(msg).ok_or(Error::MissingMessage { agent, neighbor: msg.sender })?;
        acc = acc.add(block);
    }
    Ok(acc)
}

fn check_penalty(cached_c: f64, hp: &Hyperparams) -> Result<()> {
    if hp.c != cached_c {
        return Err(Error::ShapeMismatch(format!(
            "penalty c = {} differs from the {} the Gram inverses were built with",
            hp.c, cached_c
        )));
    }
    Ok(())
}
