//! The one-shot Bayesian game a disclosure policy induces between the
//! two decoders.
//!
//! Decoder 1 observes the type (w0, w1), decoder 2 the type (w0, w2).
//! Beliefs over the opponent's private signal and posterior-averaged
//! cost tables are precomputed from the joint law of (U, W0, W1, W2),
//! so the same construction serves both the single-letter analysis and
//! empirical per-stage games built from simulated blocks.

use crate::error::{Error, Result};
use crate::model::{build_joint, Policy, PolicyCardinalities, ProblemInstance};
use crate::probcore::{Alphabet, JointDistribution, StochasticKernel};

/// Two interim costs within this of each other count as tied.
pub const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlayerId {
    One,
    Two,
}

impl PlayerId {
    pub fn index(self) -> usize {
        match self {
            PlayerId::One => 1,
            PlayerId::Two => 2,
        }
    }
}

/// A behavioral strategy pair: sigma_1 maps (w0, w1) to a distribution
/// over decoder 1's actions, sigma_2 maps (w0, w2) likewise.
#[derive(Debug, Clone)]
pub struct DecoderStrategy {
    sigma_1: StochasticKernel,
    sigma_2: StochasticKernel,
}

impl DecoderStrategy {
    pub fn new(sigma_1: StochasticKernel, sigma_2: StochasticKernel) -> Result<Self> {
        for (name, k) in [("sigma_1", &sigma_1), ("sigma_2", &sigma_2)] {
            if k.input_alphabets().len() != 2 {
                return Err(Error::ShapeMismatch(format!(
                    "{name} must condition on (w0, wi)"
                )));
            }
        }
        Ok(DecoderStrategy { sigma_1, sigma_2 })
    }

    /// Build from probability rows ordered with w0 most significant.
    pub fn from_rows(
        game: &SingleLetterGame,
        rows_1: Vec<Vec<f64>>,
        rows_2: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let c = game.cards();
        let w0 = Alphabet::numeric(c.w0);
        let sigma_1 = StochasticKernel::from_rows(
            vec![w0.clone(), Alphabet::numeric(c.w1)],
            Alphabet::numeric(game.n_v1()),
            rows_1,
        )?;
        let sigma_2 = StochasticKernel::from_rows(
            vec![w0, Alphabet::numeric(c.w2)],
            Alphabet::numeric(game.n_v2()),
            rows_2,
        )?;
        DecoderStrategy::new(sigma_1, sigma_2)
    }

    /// Deterministic strategies given as one action per (w0, wi) cell,
    /// row-major with w0 most significant.
    pub fn pure(game: &SingleLetterGame, actions_1: &[u8], actions_2: &[u8]) -> Result<Self> {
        let c = game.cards();
        if actions_1.len() != c.w0 * c.w1 || actions_2.len() != c.w0 * c.w2 {
            return Err(Error::ShapeMismatch(format!(
                "pure strategy grids must have {}x{} and {}x{} cells",
                c.w0, c.w1, c.w0, c.w2
            )));
        }
        let point = |n: usize, a: u8| -> Result<Vec<f64>> {
            if (a as usize) >= n {
                return Err(Error::InvalidArgument(format!(
                    "action index {a} out of range (alphabet size {n})"
                )));
            }
            let mut row = vec![0.0; n];
            row[a as usize] = 1.0;
            Ok(row)
        };
        let rows_1 = actions_1
            .iter()
            .map(|&a| point(game.n_v1(), a))
            .collect::<Result<Vec<_>>>()?;
        let rows_2 = actions_2
            .iter()
            .map(|&a| point(game.n_v2(), a))
            .collect::<Result<Vec<_>>>()?;
        DecoderStrategy::from_rows(game, rows_1, rows_2)
    }

    pub fn uniform(game: &SingleLetterGame) -> Self {
        let c = game.cards();
        let unif = |n: usize| vec![1.0 / n as f64; n];
        DecoderStrategy::from_rows(
            game,
            vec![unif(game.n_v1()); c.w0 * c.w1],
            vec![unif(game.n_v2()); c.w0 * c.w2],
        )
        .expect("uniform strategies are always valid")
    }

    pub fn sigma_1(&self) -> &StochasticKernel {
        &self.sigma_1
    }

    pub fn sigma_2(&self) -> &StochasticKernel {
        &self.sigma_2
    }

    /// Probability decoder 1 of type (w0, w1) plays v1.
    #[inline]
    pub fn prob_1(&self, w0: usize, w1: usize, v1: usize) -> f64 {
        let c1 = self.sigma_1.input_alphabets()[1].len();
        self.sigma_1.row_flat(w0 * c1 + w1).prob(v1)
    }

    /// Probability decoder 2 of type (w0, w2) plays v2.
    #[inline]
    pub fn prob_2(&self, w0: usize, w2: usize, v2: usize) -> f64 {
        let c2 = self.sigma_2.input_alphabets()[1].len();
        self.sigma_2.row_flat(w0 * c2 + w2).prob(v2)
    }
}

/// One player's exact best response: the selected deterministic strategy
/// (ties broken toward the lowest action index) plus, per supported type,
/// every action within [`TIE_TOL`] of the minimum.
#[derive(Debug, Clone)]
pub struct BestResponse {
    /// One action per (w0, wi) cell; unsupported cells hold 0.
    pub actions: Vec<u8>,
    /// Tied optimal actions per supported type, aligned with the game's
    /// type list for this player.
    pub tie_sets: Vec<Vec<u8>>,
}

/// Precomputed single-letter game: supported types, beliefs about the
/// opponent's signal, and posterior-averaged cost tables.
#[derive(Debug, Clone)]
pub struct SingleLetterGame {
    cards: PolicyCardinalities,
    n_u: usize,
    n_v1: usize,
    n_v2: usize,
    /// P(w0, w1, w2), flat over triples with w0 most significant.
    p_triple: Vec<f64>,
    /// P(u | w0, w1, w2) per supported triple.
    posterior: Vec<Option<Vec<f64>>>,
    /// C*_i(triple, v1, v2) for i = e, 1, 2; NaN at unsupported triples.
    cost_star_e: Vec<f64>,
    cost_star_1: Vec<f64>,
    cost_star_2: Vec<f64>,
    /// P(w0, w1) and P(w0, w2).
    p_pair_1: Vec<f64>,
    p_pair_2: Vec<f64>,
    /// P(w2 | w0, w1) and P(w1 | w0, w2) per supported pair.
    belief_1: Vec<Option<Vec<f64>>>,
    belief_2: Vec<Option<Vec<f64>>>,
    /// Supported (w0, w1) and (w0, w2) pairs in lexicographic order.
    types_1: Vec<(usize, usize)>,
    types_2: Vec<(usize, usize)>,
}

impl SingleLetterGame {
    /// Build from any joint law over axes [U, W0, W1, W2]. Zero-probability
    /// signal combinations are excluded from the type space.
    pub fn from_joint(joint: &JointDistribution, instance: &ProblemInstance) -> Result<Self> {
        let shape = joint.shape();
        if shape.len() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "expected axes [U, W0, W1, W2], found {} axes",
                shape.len()
            )));
        }
        let n_u = instance.n_u();
        if shape[0] != n_u {
            return Err(Error::ShapeMismatch(format!(
                "joint U axis has {} symbols, instance has {n_u}",
                shape[0]
            )));
        }
        let (c0, c1, c2) = (shape[1], shape[2], shape[3]);
        let cards = PolicyCardinalities::new(c0, c1, c2)?;
        let n_v1 = instance.n_v1();
        let n_v2 = instance.n_v2();
        let mass = joint.mass();
        let n_triples = c0 * c1 * c2;

        let mut p_triple = vec![0.0; n_triples];
        for u in 0..n_u {
            let base = u * n_triples;
            for t in 0..n_triples {
                p_triple[t] += mass[base + t];
            }
        }

        let mut posterior: Vec<Option<Vec<f64>>> = vec![None; n_triples];
        let mut cost_star_e = vec![f64::NAN; n_triples * n_v1 * n_v2];
        let mut cost_star_1 = vec![f64::NAN; n_triples * n_v1 * n_v2];
        let mut cost_star_2 = vec![f64::NAN; n_triples * n_v1 * n_v2];
        for t in 0..n_triples {
            if p_triple[t] == 0.0 {
                continue;
            }
            let post: Vec<f64> = (0..n_u).map(|u| mass[u * n_triples + t] / p_triple[t]).collect();
            for v1 in 0..n_v1 {
                for v2 in 0..n_v2 {
                    let idx = (t * n_v1 + v1) * n_v2 + v2;
                    let mut ce = 0.0;
                    let mut c1v = 0.0;
                    let mut c2v = 0.0;
                    for (u, &q) in post.iter().enumerate() {
                        if q > 0.0 {
                            ce += q * instance.cost_e.get(u, v1, v2);
                            c1v += q * instance.cost_1.get(u, v1, v2);
                            c2v += q * instance.cost_2.get(u, v1, v2);
                        }
                    }
                    cost_star_e[idx] = ce;
                    cost_star_1[idx] = c1v;
                    cost_star_2[idx] = c2v;
                }
            }
            posterior[t] = Some(post);
        }

        let mut p_pair_1 = vec![0.0; c0 * c1];
        let mut p_pair_2 = vec![0.0; c0 * c2];
        for w0 in 0..c0 {
            for w1 in 0..c1 {
                for w2 in 0..c2 {
                    let p = p_triple[(w0 * c1 + w1) * c2 + w2];
                    p_pair_1[w0 * c1 + w1] += p;
                    p_pair_2[w0 * c2 + w2] += p;
                }
            }
        }

        let mut belief_1: Vec<Option<Vec<f64>>> = vec![None; c0 * c1];
        let mut belief_2: Vec<Option<Vec<f64>>> = vec![None; c0 * c2];
        let mut types_1 = Vec::new();
        let mut types_2 = Vec::new();
        for w0 in 0..c0 {
            for w1 in 0..c1 {
                let pp = p_pair_1[w0 * c1 + w1];
                if pp > 0.0 {
                    types_1.push((w0, w1));
                    belief_1[w0 * c1 + w1] = Some(
                        (0..c2)
                            .map(|w2| p_triple[(w0 * c1 + w1) * c2 + w2] / pp)
                            .collect(),
                    );
                }
            }
            for w2 in 0..c2 {
                let pp = p_pair_2[w0 * c2 + w2];
                if pp > 0.0 {
                    types_2.push((w0, w2));
                    belief_2[w0 * c2 + w2] = Some(
                        (0..c1)
                            .map(|w1| p_triple[(w0 * c1 + w1) * c2 + w2] / pp)
                            .collect(),
                    );
                }
            }
        }

        Ok(SingleLetterGame {
            cards,
            n_u,
            n_v1,
            n_v2,
            p_triple,
            posterior,
            cost_star_e,
            cost_star_1,
            cost_star_2,
            p_pair_1,
            p_pair_2,
            belief_1,
            belief_2,
            types_1,
            types_2,
        })
    }

    pub fn cards(&self) -> PolicyCardinalities {
        self.cards
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_v1(&self) -> usize {
        self.n_v1
    }

    pub fn n_v2(&self) -> usize {
        self.n_v2
    }

    #[inline]
    pub fn triple_index(&self, w0: usize, w1: usize, w2: usize) -> usize {
        (w0 * self.cards.w1 + w1) * self.cards.w2 + w2
    }

    #[inline]
    pub fn triple_prob(&self, w0: usize, w1: usize, w2: usize) -> f64 {
        self.p_triple[self.triple_index(w0, w1, w2)]
    }

    pub fn pair_prob_1(&self, w0: usize, w1: usize) -> f64 {
        self.p_pair_1[w0 * self.cards.w1 + w1]
    }

    pub fn pair_prob_2(&self, w0: usize, w2: usize) -> f64 {
        self.p_pair_2[w0 * self.cards.w2 + w2]
    }

    /// P(u | w0, w1, w2), present only on supported triples.
    pub fn posterior_row(&self, w0: usize, w1: usize, w2: usize) -> Option<&[f64]> {
        self.posterior[self.triple_index(w0, w1, w2)].as_deref()
    }

    /// Decoder 1's belief P(w2 | w0, w1), present only on supported types.
    pub fn belief_row_1(&self, w0: usize, w1: usize) -> Option<&[f64]> {
        self.belief_1[w0 * self.cards.w1 + w1].as_deref()
    }

    /// Decoder 2's belief P(w1 | w0, w2), present only on supported types.
    pub fn belief_row_2(&self, w0: usize, w2: usize) -> Option<&[f64]> {
        self.belief_2[w0 * self.cards.w2 + w2].as_deref()
    }

    pub fn types_1(&self) -> &[(usize, usize)] {
        &self.types_1
    }

    pub fn types_2(&self) -> &[(usize, usize)] {
        &self.types_2
    }

    /// Posterior-averaged cost, `which` 0 for the encoder, 1 and 2 for the
    /// decoders. NaN on unsupported triples.
    #[inline]
    pub fn cost_star(&self, which: usize, w0: usize, w1: usize, w2: usize, v1: usize, v2: usize) -> f64 {
        let idx = (self.triple_index(w0, w1, w2) * self.n_v1 + v1) * self.n_v2 + v2;
        match which {
            0 => self.cost_star_e[idx],
            1 => self.cost_star_1[idx],
            2 => self.cost_star_2[idx],
            _ => panic!("cost table selector must be 0, 1, or 2"),
        }
    }

    /// Interim cost of playing `action` for the given type against the
    /// opponent's half of `strategies`.
    pub fn psi_of_action(
        &self,
        player: PlayerId,
        w0: usize,
        wi: usize,
        action: usize,
        strategies: &DecoderStrategy,
    ) -> Result<f64> {
        match player {
            PlayerId::One => {
                let belief = self.belief_row_1(w0, wi).ok_or_else(|| {
                    Error::UnsupportedType(format!("decoder 1 type (w0={w0}, w1={wi}) has probability zero"))
                })?;
                let mut acc = 0.0;
                for (w2, &b) in belief.iter().enumerate() {
                    if b == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for v2 in 0..self.n_v2 {
                        let q = strategies.prob_2(w0, w2, v2);
                        if q > 0.0 {
                            inner += q * self.cost_star(1, w0, wi, w2, action, v2);
                        }
                    }
                    acc += b * inner;
                }
                Ok(acc)
            }
            PlayerId::Two => {
                let belief = self.belief_row_2(w0, wi).ok_or_else(|| {
                    Error::UnsupportedType(format!("decoder 2 type (w0={w0}, w2={wi}) has probability zero"))
                })?;
                let mut acc = 0.0;
                for (w1, &b) in belief.iter().enumerate() {
                    if b == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for v1 in 0..self.n_v1 {
                        let q = strategies.prob_1(w0, w1, v1);
                        if q > 0.0 {
                            inner += q * self.cost_star(2, w0, w1, wi, v1, action);
                        }
                    }
                    acc += b * inner;
                }
                Ok(acc)
            }
        }
    }

    /// Interim expected cost of a type under a full strategy pair.
    pub fn expected_cost_psi(
        &self,
        player: PlayerId,
        w0: usize,
        wi: usize,
        strategies: &DecoderStrategy,
    ) -> Result<f64> {
        let (n_own, own_prob): (usize, Box<dyn Fn(usize) -> f64>) = match player {
            PlayerId::One => (
                self.n_v1,
                Box::new(move |v| strategies.prob_1(w0, wi, v)),
            ),
            PlayerId::Two => (
                self.n_v2,
                Box::new(move |v| strategies.prob_2(w0, wi, v)),
            ),
        };
        let mut acc = 0.0;
        for a in 0..n_own {
            let p = own_prob(a);
            if p > 0.0 {
                acc += p * self.psi_of_action(player, w0, wi, a, strategies)?;
            }
        }
        Ok(acc)
    }

    /// Exact pointwise best response for one player, holding the other
    /// side of `strategies` fixed.
    pub fn best_response(&self, player: PlayerId, strategies: &DecoderStrategy) -> BestResponse {
        let (types, n_own, grid_len, stride) = match player {
            PlayerId::One => (&self.types_1, self.n_v1, self.cards.w0 * self.cards.w1, self.cards.w1),
            PlayerId::Two => (&self.types_2, self.n_v2, self.cards.w0 * self.cards.w2, self.cards.w2),
        };
        let mut actions = vec![0u8; grid_len];
        let mut tie_sets = Vec::with_capacity(types.len());
        for &(w0, wi) in types {
            let costs: Vec<f64> = (0..n_own)
                .map(|a| {
                    self.psi_of_action(player, w0, wi, a, strategies)
                        .expect("listed types are supported")
                })
                .collect();
            let best = costs.iter().cloned().fold(f64::INFINITY, f64::min);
            let tied: Vec<u8> = (0..n_own)
                .filter(|&a| costs[a] <= best + TIE_TOL)
                .map(|a| a as u8)
                .collect();
            actions[w0 * stride + wi] = tied[0];
            tie_sets.push(tied);
        }
        BestResponse { actions, tie_sets }
    }

    /// The encoder's expected cost under a strategy pair, averaged over
    /// the full joint law.
    pub fn encoder_expected_cost(&self, strategies: &DecoderStrategy) -> f64 {
        let mut acc = 0.0;
        for w0 in 0..self.cards.w0 {
            for w1 in 0..self.cards.w1 {
                for w2 in 0..self.cards.w2 {
                    let p = self.triple_prob(w0, w1, w2);
                    if p == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for v1 in 0..self.n_v1 {
                        let q1 = strategies.prob_1(w0, w1, v1);
                        if q1 == 0.0 {
                            continue;
                        }
                        for v2 in 0..self.n_v2 {
                            let q2 = strategies.prob_2(w0, w2, v2);
                            if q2 > 0.0 {
                                inner += q1 * q2 * self.cost_star(0, w0, w1, w2, v1, v2);
                            }
                        }
                    }
                    acc += p * inner;
                }
            }
        }
        acc
    }
}

/// Game induced by a policy on an instance, via the joint signal law.
pub fn build_single_letter_game(
    instance: &ProblemInstance,
    policy: &Policy,
) -> Result<SingleLetterGame> {
    let joint = build_joint(instance, policy)?;
    SingleLetterGame::from_joint(&joint, instance)
}
