//! Reference iteration that keeps every per-edge auxiliary variable and
//! multiplier explicit instead of folding them into the per-agent scaled
//! sums the production engine uses.
//!
//! For each ordered neighbor pair (n, m) this run carries the consensus
//! targets `f_bar/f_tilde` (for Q) and `g_bar/g_tilde` (for A) plus their
//! multipliers `c_bar/c_tilde` and `d_bar/d_tilde`. Multipliers ascend by
//! `mu/2` times the pairwise disagreement, the targets refresh from the
//! midpoint closed form, and the primal blocks solve the same subproblems
//! as the production rule set but against the explicit variables. With
//! multipliers started at zero the trajectory must coincide with the
//! reduced recursion to rounding accuracy, and the pair multipliers must
//! stay exactly antisymmetric; the equivalence tests assert both.

use std::collections::BTreeMap;

use crate::admm::{AgentState, Hyperparams};
use crate::error::{Error, Result};
use crate::numerics::{inv_regularized_gram, solve_sym_pd, DenseMatrix};
use crate::network::Graph;

type PairMap = BTreeMap<(usize, usize), DenseMatrix>;

/// Explicit-variable run over the general (routed, fully observed) problem.
pub struct UnreducedRun {
    graph: Graph,
    hp: Hyperparams,
    y: Vec<DenseMatrix>,
    r: Vec<DenseMatrix>,
    rr_inv: Vec<DenseMatrix>,
    pub q: Vec<DenseMatrix>,
    pub a: Vec<DenseMatrix>,
    pub l: Vec<DenseMatrix>,
    pub b: Vec<DenseMatrix>,
    pub m: Vec<DenseMatrix>,
    pub c_bar: PairMap,
    pub c_tilde: PairMap,
    pub d_bar: PairMap,
    pub d_tilde: PairMap,
    pub f_bar: PairMap,
    pub f_tilde: PairMap,
    pub g_bar: PairMap,
    pub g_tilde: PairMap,
}

impl UnreducedRun {
    /// Starts from the same initial states the production engine uses. All
    /// multipliers are zero; the consensus targets take their closed-form
    /// values at the initial primals (the midpoints), which for the zero
    /// sparse blocks are zero as well.
    pub fn new(
        graph: Graph,
        y: Vec<DenseMatrix>,
        r: Vec<DenseMatrix>,
        hp: Hyperparams,
        initial: &[AgentState],
    ) -> Result<Self> {
        let n = graph.n_nodes();
        if initial.len() != n || y.len() != n || r.len() != n {
            return Err(Error::ShapeMismatch("one state and data block per agent".into()));
        }
        let rr_inv =
            r.iter().map(|rn| inv_regularized_gram(rn, hp.c)).collect::<Result<Vec<_>>>()?;
        let take = |f: fn(&AgentState) -> &Option<DenseMatrix>| -> Result<Vec<DenseMatrix>> {
            initial
                .iter()
                .map(|s| {
                    f(s).clone()
                        .ok_or_else(|| Error::ShapeMismatch("initial state lacks a block".into()))
                })
                .collect()
        };
        let q = take(|s| &s.q)?;
        let a = take(|s| &s.a)?;
        let l = take(|s| &s.l)?;
        let b = take(|s| &s.b)?;
        let m = take(|s| &s.m)?;

        let mut run = Self {
            graph,
            hp,
            y,
            r,
            rr_inv,
            q,
            a,
            l,
            b,
            m,
            c_bar: PairMap::new(),
            c_tilde: PairMap::new(),
            d_bar: PairMap::new(),
            d_tilde: PairMap::new(),
            f_bar: PairMap::new(),
            f_tilde: PairMap::new(),
            g_bar: PairMap::new(),
            g_tilde: PairMap::new(),
        };
        for nn in 0..n {
            for &mm in run.graph.neighbors(nn) {
                let qz = DenseMatrix::zeros(run.q[nn].rows(), run.q[nn].cols());
                let az = DenseMatrix::zeros(run.a[nn].rows(), run.a[nn].cols());
                run.c_bar.insert((nn, mm), qz.clone());
                run.c_tilde.insert((nn, mm), qz.clone());
                run.d_bar.insert((nn, mm), az.clone());
                run.d_tilde.insert((nn, mm), az.clone());
                let fmid = run.q[nn].add(&run.q[mm]).scale(0.5);
                run.f_bar.insert((nn, mm), fmid.clone());
                run.f_tilde.insert((nn, mm), fmid);
                let gmid = run.a[nn].add(&run.a[mm]).scale(0.5);
                run.g_bar.insert((nn, mm), gmid.clone());
                run.g_tilde.insert((nn, mm), gmid);
            }
        }
        Ok(run)
    }

    /// One synchronous round: multipliers, then Q and A, then L, then B and
    /// the consensus targets.
    pub fn step(&mut self) -> Result<()> {
        let n = self.graph.n_nodes();
        let hp = self.hp.clone();
        let c = hp.c;
        let n_f = n as f64;

        // Dual ascent. The pair multipliers use the non-redundant half-step
        // recursion, which keeps c_bar(n,m) = -c_tilde(n,m) = -c_bar(m,n)
        // exact in floating point.
        for nn in 0..n {
            self.m[nn] = self.m[nn].add(&self.b[nn].sub(&self.a[nn]).scale(hp.mu));
            for &mm in self.graph.neighbors(nn) {
                let dq = self.q[nn].sub(&self.q[mm]).scale(0.5 * hp.mu);
                let e = (nn, mm);
                self.c_bar.insert(e, self.c_bar[&e].add(&dq));
                self.c_tilde.insert(e, self.c_tilde[&e].sub(&dq));
                let da = self.a[nn].sub(&self.a[mm]).scale(0.5 * hp.mu);
                self.d_bar.insert(e, self.d_bar[&e].add(&da));
                self.d_tilde.insert(e, self.d_tilde[&e].sub(&da));
            }
        }

        // First primal group: Q and A against the round-k targets.
        let mut q_new = Vec::with_capacity(n);
        let mut a_new = Vec::with_capacity(n);
        for nn in 0..n {
            let jn = self.graph.degree(nn) as f64;
            let (y, r) = (&self.y[nn], &self.r[nn]);
            let (l, b) = (&self.l[nn], &self.b[nn]);

            let mut dual_sum = DenseMatrix::zeros(self.q[nn].rows(), self.q[nn].cols());
            let mut target_sum = dual_sum.clone();
            for &mm in self.graph.neighbors(nn) {
                dual_sum = dual_sum.add(&self.c_bar[&(nn, mm)]).add(&self.c_tilde[&(mm, nn)]);
                target_sum = target_sum.add(&self.f_bar[&(nn, mm)]).add(&self.f_tilde[&(mm, nn)]);
            }
            let rhs = y
                .t()
                .matmul(l)
                .sub(&b.t().matmul(&r.t().matmul(l)))
                .sub(&dual_sum)
                .add(&target_sum.scale(c));
            let gram = ridge(&l.t().matmul(l), hp.lambda_star / n_f + 2.0 * c * jn);
            q_new.push(solve_sym_pd(&gram, &rhs.t())?.t());

            let mut a_dual = DenseMatrix::zeros(self.a[nn].rows(), self.a[nn].cols());
            let mut a_target = a_dual.clone();
            for &mm in self.graph.neighbors(nn) {
                a_dual = a_dual.add(&self.d_bar[&(nn, mm)]).add(&self.d_tilde[&(mm, nn)]);
                a_target = a_target.add(&self.g_bar[&(nn, mm)]).add(&self.g_tilde[&(mm, nn)]);
            }
            let arg = self.m[nn].add(&b.scale(c)).sub(&a_dual).add(&a_target.scale(c));
            a_new.push(
                arg.soft_threshold(hp.lambda_1 / n_f).scale(1.0 / (c * (1.0 + 2.0 * jn))),
            );
        }

        // Second primal group: L from the fresh Q and the old B.
        let mut l_new = Vec::with_capacity(n);
        for nn in 0..n {
            let lrhs = self.y[nn].sub(&self.r[nn].matmul(&self.b[nn])).matmul(&q_new[nn]);
            let lgram = ridge(&q_new[nn].t().matmul(&q_new[nn]), hp.lambda_star);
            l_new.push(solve_sym_pd(&lgram, &lrhs.t())?.t());
        }

        // Third group: B and the explicit consensus targets.
        let mut b_new = Vec::with_capacity(n);
        for nn in 0..n {
            let inner = self.r[nn]
                .t()
                .matmul(&self.y[nn].sub(&l_new[nn].matmul(&q_new[nn].t())))
                .sub(&self.m[nn])
                .add(&a_new[nn].scale(c));
            b_new.push(self.rr_inv[nn].matmul(&inner));
        }
        for nn in 0..n {
            for &mm in self.graph.neighbors(nn) {
                let e = (nn, mm);
                let f = self.c_bar[&e]
                    .add(&self.c_tilde[&e])
                    .scale(1.0 / (2.0 * c))
                    .add(&q_new[nn].add(&q_new[mm]).scale(0.5));
                self.f_bar.insert(e, f.clone());
                self.f_tilde.insert(e, f);
                let g = self.d_bar[&e]
                    .add(&self.d_tilde[&e])
                    .scale(1.0 / (2.0 * c))
                    .add(&a_new[nn].add(&a_new[mm]).scale(0.5));
                self.g_bar.insert(e, g.clone());
                self.g_tilde.insert(e, g);
            }
        }

        self.q = q_new;
        self.a = a_new;
        self.l = l_new;
        self.b = b_new;
        Ok(())
    }

    /// The reduced engine's O variable reconstructed from the pair
    /// multipliers: `2 sum_m c_bar(n, m)`.
    pub fn o_of(&self, agent: usize) -> DenseMatrix {
        let mut acc = DenseMatrix::zeros(self.q[agent].rows(), self.q[agent].cols());
        for &mm in self.graph.neighbors(agent) {
            acc = acc.add(&self.c_bar[&(agent, mm)]);
        }
        acc.scale(2.0)
    }

    /// Likewise `P = 2 sum_m d_bar(n, m)`.
    pub fn p_of(&self, agent: usize) -> DenseMatrix {
        let mut acc = DenseMatrix::zeros(self.a[agent].rows(), self.a[agent].cols());
        for &mm in self.graph.neighbors(agent) {
            acc = acc.add(&self.d_bar[&(agent, mm)]);
        }
        acc.scale(2.0)
    }

    /// Bitwise antisymmetry of every pair multiplier:
    /// `c_bar(n,m) = -c_tilde(n,m)` and `c_bar(n,m) = -c_bar(m,n)`, and the
    /// same for the d family.
    pub fn antisymmetry_holds_exactly(&self) -> bool {
        self.c_bar.iter().all(|(&(nn, mm), cb)| {
            exact_negation(cb, &self.c_tilde[&(nn, mm)])
                && exact_negation(cb, &self.c_bar[&(mm, nn)])
        }) && self.d_bar.iter().all(|(&(nn, mm), db)| {
            exact_negation(db, &self.d_tilde[&(nn, mm)])
                && exact_negation(db, &self.d_bar[&(mm, nn)])
        })
    }
}

fn exact_negation(a: &DenseMatrix, b: &DenseMatrix) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(&x, &y)| x == -y)
}

fn ridge(gram: &DenseMatrix, shift: f64) -> DenseMatrix {
    let mut out = gram.clone();
    for i in 0..out.rows() {
        out.set(i, i, out.get(i, i) + shift);
    }
    out
}
