//! Synchronous per-agent alternating-direction engine.
//!
//! One round is: receive the neighbors' round-k broadcasts, ascend the dual
//! variables on the consensus and splitting residuals, then refresh the
//! primal blocks in the fixed order Q, A, L, B through the plugged-in rule
//! set, and finally broadcast the new Q and/or A. Agents only ever read
//! their own round-k state and their neighbors' round-k messages (the
//! message board is double-buffered), so the result does not depend on the
//! order agents are visited in, and whole runs are bit-reproducible from the
//! seed.

use crate::error::{Error, Result};
use crate::network::Graph;
use crate::numerics::DenseMatrix;
use crate::rng::substream;
use crate::synth::gaussian_matrix;

/// Solver knobs shared by every rule set.
#[derive(Clone, Debug)]
pub struct Hyperparams {
    /// Rank-controlling weight on the factor Frobenius terms.
    pub lambda_star: f64,
    /// Sparsity-controlling weight on the l1 terms.
    pub lambda_1: f64,
    /// Quadratic penalty coefficient of the augmented Lagrangian.
    pub c: f64,
    /// Dual ascent step size.
    pub mu: f64,
    /// Column count of the bilinear factors (the postulated rank bound).
    pub rho: usize,
    pub max_rounds: usize,
    /// Normalized successive-change stopping tolerance.
    pub tol: f64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::ShapeMismatch(format!("invalid hyperparameter: {what}")));
        if self.lambda_star < 0.0 {
            return bad("lambda_star < 0");
        }
        if self.lambda_1 < 0.0 {
            return bad("lambda_1 < 0");
        }
        if self.c <= 0.0 {
            return bad("c <= 0");
        }
        if self.mu <= 0.0 {
            return bad("mu <= 0");
        }
        if self.rho == 0 {
            return bad("rho == 0");
        }
        if self.tol <= 0.0 {
            return bad("tol <= 0");
        }
        Ok(())
    }
}

/// Which blocks the agents consent on (and therefore broadcast).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConsensusBlocks {
    QAndA,
    QOnly,
    AOnly,
}

impl ConsensusBlocks {
    pub fn on_q(self) -> bool {
        matches!(self, ConsensusBlocks::QAndA | ConsensusBlocks::QOnly)
    }

    pub fn on_a(self) -> bool {
        matches!(self, ConsensusBlocks::QAndA | ConsensusBlocks::AOnly)
    }
}

/// Block dimensions of one agent's state; `None` means the rule set does
/// not carry that block.
#[derive(Clone, Debug)]
pub struct StateShape {
    pub l: Option<(usize, usize)>,
    pub q: Option<(usize, usize)>,
    pub a: Option<(usize, usize)>,
    /// Whether the l2/l1 cost split (B block and its multiplier M) exists.
    pub split_b: bool,
}

/// One agent's primal and dual blocks.
#[derive(Clone, Debug)]
pub struct AgentState {
    pub id: usize,
    /// Neighbor ids in ascending order.
    pub neighbor_ids: Vec<usize>,
    pub l: Option<DenseMatrix>,
    pub q: Option<DenseMatrix>,
    pub a: Option<DenseMatrix>,
    pub b: Option<DenseMatrix>,
    /// Multiplier of the split constraint B = A.
    pub m: Option<DenseMatrix>,
    /// Scaled sum of the Q-consensus multipliers.
    pub o: Option<DenseMatrix>,
    /// Scaled sum of the A-consensus multipliers.
    pub p: Option<DenseMatrix>,
}

impl AgentState {
    pub fn degree(&self) -> usize {
        self.neighbor_ids.len()
    }

    pub fn is_all_finite(&self) -> bool {
        self.blocks().iter().all(|(_, b)| b.is_all_finite())
    }

    fn blocks(&self) -> Vec<(&'static str, &DenseMatrix)> {
        [
            ("l", &self.l),
            ("q", &self.q),
            ("a", &self.a),
            ("b", &self.b),
            ("m", &self.m),
            ("o", &self.o),
            ("p", &self.p),
        ]
        .into_iter()
        .filter_map(|(n, b)| b.as_ref().map(|m| (n, m)))
        .collect()
    }
}

/// What an agent broadcasts after finishing a round.
#[derive(Clone, Debug)]
pub struct NeighborMessage {
    pub sender: usize,
    pub q: Option<DenseMatrix>,
    pub a: Option<DenseMatrix>,
}

/// New primal blocks produced by one agent's round; `None` leaves the block
/// untouched.
#[derive(Clone, Debug, Default)]
pub struct PrimalUpdate {
    pub q: Option<DenseMatrix>,
    pub a: Option<DenseMatrix>,
    pub l: Option<DenseMatrix>,
    pub b: Option<DenseMatrix>,
}

/// A concrete set of per-agent closed-form updates plugged into the engine.
pub trait UpdateRules {
    fn n_agents(&self) -> usize;

    fn consensus(&self) -> ConsensusBlocks;

    fn shape(&self, agent: usize) -> StateShape;

    /// Dual ascent step; defaults to mu, rule sets may tie it to c instead.
    fn dual_step_size(&self, hp: &Hyperparams) -> f64 {
        hp.mu
    }

    /// Computes the round-(k+1) primal blocks from the agent's round-k state
    /// (with round-k duals already stepped) and the neighbors' round-k
    /// messages.
    fn update_primal(
        &self,
        agent: usize,
        state: &AgentState,
        inbox: &[&NeighborMessage],
        hp: &Hyperparams,
    ) -> Result<PrimalUpdate>;
}

/// Zeroes the duals and the A/B blocks and draws the factor blocks from the
/// agent's standard-Gaussian substream `agent-init-<id>`.
pub fn init_agents(
    graph: &Graph,
    rules: &dyn UpdateRules,
    seed: u64,
) -> Result<Vec<AgentState>> {
    if !graph.is_connected() {
        return Err(Error::ConnectivityFailure { attempts: 0 });
    }
    if graph.n_nodes() != rules.n_agents() {
        return Err(Error::ShapeMismatch(format!(
            "graph has {} nodes, rule set expects {}",
            graph.n_nodes(),
            rules.n_agents()
        )));
    }
    let consensus = rules.consensus();
    let mut states = Vec::with_capacity(graph.n_nodes());
    for id in 0..graph.n_nodes() {
        let shape = rules.shape(id);
        let mut rng = substream(seed, &format!("agent-init-{id}"));
        let l = shape.l.map(|(r, c)| gaussian_matrix(r, c, 1.0, &mut rng));
        let q = shape.q.map(|(r, c)| gaussian_matrix(r, c, 1.0, &mut rng));
        let a = shape.a.map(|(r, c)| DenseMatrix::zeros(r, c));
        let b = shape.split_b.then(|| DenseMatrix::zeros(shape.a.unwrap().0, shape.a.unwrap().1));
        let m = b.clone();
        let o = (consensus.on_q() && shape.q.is_some())
            .then(|| DenseMatrix::zeros(shape.q.unwrap().0, shape.q.unwrap().1));
        let p = (consensus.on_a() && shape.a.is_some())
            .then(|| DenseMatrix::zeros(shape.a.unwrap().0, shape.a.unwrap().1));
        states.push(AgentState {
            id,
            neighbor_ids: graph.neighbors(id).to_vec(),
            l,
            q,
            a,
            b,
            m,
            o,
            p,
        });
    }
    Ok(states)
}

/// Dual ascent on the split and consensus residuals:
/// `M += mu (B - A)`, `O += mu sum_m (Q - Q_m)`, `P += mu sum_m (A - A_m)`.
/// Blocks the rule set does not carry are skipped.
pub fn dual_step(state: &mut AgentState, inbox: &[&NeighborMessage], mu: f64) -> Result<()> {
    for (&expected, msg) in state.neighbor_ids.iter().zip(inbox) {
        if msg.sender != expected {
            return Err(Error::MissingMessage { agent: state.id, neighbor: expected });
        }
    }
    if inbox.len() != state.neighbor_ids.len() {
        let missing = state.neighbor_ids.get(inbox.len()).copied().unwrap_or(0);
        return Err(Error::MissingMessage { agent: state.id, neighbor: missing });
    }

    if let (Some(m), Some(b), Some(a)) = (&mut state.m, &state.b, &state.a) {
        *m = m.add(&b.sub(a).scale(mu));
    }
    if let (Some(o), Some(q)) = (&mut state.o, &state.q) {
        let mut acc = DenseMatrix::zeros(q.rows(), q.cols());
        for msg in inbox {
            let qm = msg.q.as_ref().ok_or(Error::MissingMessage {
                agent: state.id,
                neighbor: msg.sender,
            })?;
            acc = acc.add(&q.sub(qm));
        }
        *o = o.add(&acc.scale(mu));
    }
    if let (Some(p), Some(a)) = (&mut state.p, &state.a) {
        let mut acc = DenseMatrix::zeros(a.rows(), a.cols());
        for msg in inbox {
            let am = msg.a.as_ref().ok_or(Error::MissingMessage {
                agent: state.id,
                neighbor: msg.sender,
            })?;
            acc = acc.add(&a.sub(am));
        }
        *p = p.add(&acc.scale(mu));
    }
    Ok(())
}

fn broadcast(state: &AgentState, consensus: ConsensusBlocks) -> NeighborMessage {
    NeighborMessage {
        sender: state.id,
        q: consensus.on_q().then(|| state.q.clone().expect("consented Q missing")),
        a: consensus.on_a().then(|| state.a.clone().expect("consented A missing")),
    }
}

/// Advances every agent one round against the round-k message board.
pub fn run_round(
    states: &mut [AgentState],
    rules: &dyn UpdateRules,
    hp: &Hyperparams,
) -> Result<()> {
    let order: Vec<usize> = (0..states.len()).collect();
    run_round_with_order(states, rules, hp, &order)
}

/// Same as [`run_round`], visiting agents in the given order. The result is
/// identical for any permutation; tests exercise exactly that contract.
pub fn run_round_with_order(
    states: &mut [AgentState],
    rules: &dyn UpdateRules,
    hp: &Hyperparams,
    order: &[usize],
) -> Result<()> {
    let consensus = rules.consensus();
    let board: Vec<NeighborMessage> =
        states.iter().map(|s| broadcast(s, consensus)).collect();
    let mu = rules.dual_step_size(hp);
    let mut next: Vec<Option<AgentState>> = vec![None; states.len()];
    for &n in order {
        let inbox: Vec<&NeighborMessage> =
            states[n].neighbor_ids.iter().map(|&m| &board[m]).collect();
        let mut s = states[n].clone();
        dual_step(&mut s, &inbox, mu)?;
        let update = rules.update_primal(n, &s, &inbox, hp)?;
        if let Some(q) = update.q {
            s.q = Some(q);
        }
        if let Some(a) = update.a {
            s.a = Some(a);
        }
        if let Some(l) = update.l {
            s.l = Some(l);
        }
        if let Some(b) = update.b {
            s.b = Some(b);
        }
        if !s.is_all_finite() {
            return Err(Error::NonFinite("agent state"));
        }
        next[n] = Some(s);
    }
    for (slot, s) in states.iter_mut().zip(next) {
        *slot = s.expect("order must cover every agent");
    }
    Ok(())
}

/// Per-agent relative distance to the network-wide average of a block.
#[derive(Clone, Debug)]
pub struct ConsensusError {
    pub per_agent: Vec<f64>,
    /// Set when the average had zero norm; errors are then absolute.
    pub degenerate: bool,
}

impl ConsensusError {
    pub fn max(&self) -> f64 {
        self.per_agent.iter().fold(0.0, |a, &b| a.max(b))
    }
}

/// Which block a consensus metric looks at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConsensusField {
    Q,
    A,
}

pub fn consensus_error(states: &[AgentState], which: ConsensusField) -> ConsensusError {
    let blocks: Vec<&DenseMatrix> = states
        .iter()
        .filter_map(|s| match which {
            ConsensusField::Q => s.q.as_ref(),
            ConsensusField::A => s.a.as_ref(),
        })
        .collect();
    if blocks.is_empty() {
        return ConsensusError { per_agent: vec![], degenerate: true };
    }
    let shape = blocks[0].shape();
    assert!(blocks.iter().all(|b| b.shape() == shape), "consensus over unequal shapes");
    let mut mean = DenseMatrix::zeros(shape.0, shape.1);
    for b in &blocks {
        mean = mean.add(b);
    }
    mean = mean.scale(1.0 / blocks.len() as f64);
    let norm = mean.frobenius_norm();
    let degenerate = norm == 0.0;
    let per_agent = blocks
        .iter()
        .map(|b| {
            let d = b.sub(&mean).frobenius_norm();
            if degenerate {
                d
            } else {
                d / norm
            }
        })
        .collect();
    ConsensusError { per_agent, degenerate }
}

/// Normalized successive-change criterion: true when every block of every
/// agent moved by less than `tol * (1 + |block|_F)` in the last round.
pub fn has_converged(prev: &[AgentState], curr: &[AgentState], tol: f64) -> bool {
    assert!(tol > 0.0);
    prev.iter().zip(curr).all(|(p, c)| {
        p.blocks().iter().zip(c.blocks()).all(|((_, bp), (_, bc))| {
            bp.sub(bc).frobenius_norm() < tol * (1.0 + bc.frobenius_norm())
        })
    })
}

/// One row of the per-round metric series.
#[derive(Clone, Debug)]
pub struct RoundMetrics {
    pub round: usize,
    /// Max-over-agents relative consensus error of Q (0 when not consented).
    pub consensus_q: f64,
    /// Max-over-agents relative consensus error of A (0 when not consented).
    pub consensus_a: f64,
    pub rel_err_x: f64,
    pub rel_err_a: f64,
    /// Separable surrogate objective evaluated on the averaged iterates.
    pub cost: f64,
}

/// Scenario-side evaluation of estimation errors and the objective; the
/// engine only knows states, not ground truth.
pub trait ScenarioEval {
    /// Returns `(rel_err_x, rel_err_a, cost)`.
    fn errors_and_cost(&self, states: &[AgentState]) -> (f64, f64, f64);
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub states: Vec<AgentState>,
    pub metrics: Vec<RoundMetrics>,
    pub converged: bool,
    pub rounds: usize,
}

/// Runs rounds until the stopping rule triggers or the budget runs out,
/// recording one metric row per round.
pub fn run(
    mut states: Vec<AgentState>,
    rules: &dyn UpdateRules,
    hp: &Hyperparams,
    eval: Option<&dyn ScenarioEval>,
) -> Result<RunReport> {
    hp.validate()?;
    let consensus = rules.consensus();
    let mut metrics = Vec::new();
    let mut converged = false;
    let mut rounds = 0;
    for round in 1..=hp.max_rounds {
        let prev = states.clone();
        run_round(&mut states, rules, hp)?;
        let cq = if consensus.on_q() { consensus_error(&states, ConsensusField::Q).max() } else { 0.0 };
        let ca = if consensus.on_a() { consensus_error(&states, ConsensusField::A).max() } else { 0.0 };
        let (rel_err_x, rel_err_a, cost) =
            eval.map_or((0.0, 0.0, 0.0), |e| e.errors_and_cost(&states));
        metrics.push(RoundMetrics { round, consensus_q: cq, consensus_a: ca, rel_err_x, rel_err_a, cost });
        rounds = round;
        if has_converged(&prev, &states, hp.tol) {
            converged = true;
            break;
        }
    }
    Ok(RunReport { states, metrics, converged, rounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Graph;

    fn default_hp() -> Hyperparams {
        Hyperparams {
            lambda_star: 0.1,
            lambda_1: 0.1,
            c: 0.1,
            mu: 0.1,
            rho: 2,
            max_rounds: 10,
            tol: 1e-6,
        }
    }

    /// Minimal rule set: every agent carries Q only and never updates it.
    struct Frozen {
        n: usize,
        q_shape: (usize, usize),
    }

    impl UpdateRules for Frozen {
        fn n_agents(&self) -> usize {
            self.n
        }
        fn consensus(&self) -> ConsensusBlocks {
            ConsensusBlocks::QOnly
        }
        fn shape(&self, _agent: usize) -> StateShape {
            StateShape { l: None, q: Some(self.q_shape), a: None, split_b: false }
        }
        fn update_primal(
            &self,
            _agent: usize,
            _state: &AgentState,
            _inbox: &[&NeighborMessage],
            _hp: &Hyperparams,
        ) -> Result<PrimalUpdate> {
            Ok(PrimalUpdate::default())
        }
    }

    #[test]
    fn init_zeroes_duals_and_is_deterministic() {
        let g = Graph::new(3, vec![(0, 1), (1, 2)]);
        let rules = Frozen { n: 3, q_shape: (4, 2) };
        let a = init_agents(&g, &rules, 42).unwrap();
        let b = init_agents(&g, &rules, 42).unwrap();
        for (sa, sb) in a.iter().zip(&b) {
            assert_eq!(sa.q, sb.q);
            assert_eq!(sa.o.as_ref().unwrap().frobenius_norm(), 0.0);
            assert!(sa.m.is_none() && sa.p.is_none() && sa.b.is_none());
        }
        // Different agents draw from different substreams.
        assert_ne!(a[0].q, a[1].q);
    }

    #[test]
    fn init_rejects_disconnected_graph() {
        let g = Graph::new(2, vec![]);
        let rules = Frozen { n: 2, q_shape: (2, 2) };
        assert!(matches!(
            init_agents(&g, &rules, 1),
            Err(Error::ConnectivityFailure { .. })
        ));
    }

    #[test]
    fn dual_step_zero_residual_keeps_duals() {
        let g = Graph::new(2, vec![(0, 1)]);
        let rules = Frozen { n: 2, q_shape: (3, 2) };
        let mut states = init_agents(&g, &rules, 5).unwrap();
        let shared = states[0].q.clone();
        states[1].q = shared.clone();
        let msg = NeighborMessage { sender: 1, q: shared, a: None };
        dual_step(&mut states[0], &[&msg], 0.1).unwrap();
        assert_eq!(states[0].o.as_ref().unwrap().frobenius_norm(), 0.0);
    }

    #[test]
    fn dual_step_isolated_agent_touches_only_split_dual() {
        let mut state = AgentState {
            id: 0,
            neighbor_ids: vec![],
            l: None,
            q: None,
            a: Some(DenseMatrix::from_vec(1, 1, vec![2.0])),
            b: Some(DenseMatrix::from_vec(1, 1, vec![5.0])),
            m: Some(DenseMatrix::zeros(1, 1)),
            o: None,
            p: Some(DenseMatrix::zeros(1, 1)),
        };
        dual_step(&mut state, &[], 0.5).unwrap();
        assert_eq!(state.m.as_ref().unwrap().get(0, 0), 0.5 * 3.0);
        assert_eq!(state.p.as_ref().unwrap().frobenius_norm(), 0.0);
    }

    #[test]
    fn dual_step_requires_every_neighbor_message() {
        let g = Graph::new(2, vec![(0, 1)]);
        let rules = Frozen { n: 2, q_shape: (2, 2) };
        let mut states = init_agents(&g, &rules, 9).unwrap();
        match dual_step(&mut states[0], &[], 0.1) {
            Err(Error::MissingMessage { agent: 0, neighbor: 1 }) => {}
            other => panic!("expected MissingMessage, got {other:?}"),
        }
    }

    #[test]
    fn run_zero_rounds_returns_initial_states() {
        let g = Graph::new(2, vec![(0, 1)]);
        let rules = Frozen { n: 2, q_shape: (2, 2) };
        let states = init_agents(&g, &rules, 3).unwrap();
        let before = states[0].q.clone();
        let hp = Hyperparams { max_rounds: 0, ..default_hp() };
        let report = run(states, &rules, &hp, None).unwrap();
        assert!(report.metrics.is_empty());
        assert_eq!(report.states[0].q, before);
        assert!(!report.converged);
    }

    #[test]
    fn consensus_error_examples() {
        let g = Graph::new(2, vec![(0, 1)]);
        let rules = Frozen { n: 2, q_shape: (2, 2) };
        let mut states = init_agents(&g, &rules, 8).unwrap();

        states[1].q = states[0].q.clone();
        let err = consensus_error(&states, ConsensusField::Q);
        assert!(!err.degenerate);
        assert!(err.max() < 1e-15);

        states[1].q = Some(states[0].q.as_ref().unwrap().scale(-1.0));
        let err = consensus_error(&states, ConsensusField::Q);
        assert!(err.degenerate);
        assert!(err.max() > 0.0);
    }

    #[test]
    fn consensus_error_matches_direct_recomputation() {
        let g = Graph::new(3, vec![(0, 1), (1, 2)]);
        let rules = Frozen { n: 3, q_shape: (3, 2) };
        let states = init_agents(&g, &rules, 12).unwrap();
        let err = consensus_error(&states, ConsensusField::Q);
        let mut mean = DenseMatrix::zeros(3, 2);
        for s in &states {
            mean = mean.add(s.q.as_ref().unwrap());
        }
        mean = mean.scale(1.0 / 3.0);
        for (s, &e) in states.iter().zip(&err.per_agent) {
            let direct = s.q.as_ref().unwrap().sub(&mean).frobenius_norm() / mean.frobenius_norm();
            assert!((e - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn has_converged_detects_stasis_and_motion() {
        let g = Graph::new(2, vec![(0, 1)]);
        let rules = Frozen { n: 2, q_shape: (2, 2) };
        let states = init_agents(&g, &rules, 4).unwrap();
        assert!(has_converged(&states, &states, 1e-6));
        let mut moved = states.clone();
        let mut q = moved[0].q.clone().unwrap();
        q.set(0, 0, q.get(0, 0) + 1.0);
        moved[0].q = Some(q);
        assert!(!has_converged(&states, &moved, 1e-6));
    }
}
