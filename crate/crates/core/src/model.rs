//! Problem instances, information policies, and rate-region membership.
//!
//! An instance fixes the source prior, the two decoders' action alphabets,
//! and three cost tables over (u, v1, v2). A policy is the conditional law
//! of the auxiliary signals (W0, W1, W2) given the source, either in the
//! factorized form Q(w0|u) Q(w1|u,w0) Q(w2|u,w0) or as an unrestricted
//! joint kernel used for the converse-side bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probcore::{Alphabet, FiniteDistribution, JointDistribution, StochasticKernel};

/// Feasibility tolerance for rate constraints, in bits.
pub const RATE_FEAS_TOL: f64 = 1e-9;

/// One failed validation rule, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Raw instance document as it appears on disk.
///
/// Keys: `alphabets` (three arrays of symbol strings for U, V1, V2),
/// `prior` (array over U), `costs` (three nested arrays indexed
/// `[u][v1][v2]`, in the order encoder, decoder 1, decoder 2), and
/// `rates` (`[R0, R1, R2]` in bits per symbol).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub alphabets: Vec<Vec<String>>,
    pub prior: Vec<f64>,
    pub costs: Vec<Vec<Vec<Vec<f64>>>>,
    pub rates: Vec<f64>,
}

impl InstanceFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("instance file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization cannot fail")
    }

    /// All violated invariants; empty means the file describes a valid instance.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.alphabets.len() != 3 {
            v.push(Violation {
                field: "alphabets".into(),
                rule: format!(
                    "expected exactly three alphabets (source, action 1, action 2), found {}",
                    self.alphabets.len()
                ),
            });
        }
        for (i, a) in self.alphabets.iter().enumerate() {
            if a.is_empty() {
                v.push(Violation {
                    field: format!("alphabets[{i}]"),
                    rule: "alphabet must be nonempty".into(),
                });
            }
            for (j, s) in a.iter().enumerate() {
                if a[..j].contains(s) {
                    v.push(Violation {
                        field: format!("alphabets[{i}][{j}]"),
                        rule: format!("duplicate symbol {s:?}"),
                    });
                }
            }
        }
        let sizes: Option<(usize, usize, usize)> = if self.alphabets.len() == 3 {
            Some((
                self.alphabets[0].len(),
                self.alphabets[1].len(),
                self.alphabets[2].len(),
            ))
        } else {
            None
        };

        if let Some((nu, _, _)) = sizes {
            if self.prior.len() != nu {
                v.push(Violation {
                    field: "prior".into(),
                    rule: format!("length {} does not match |U| = {nu}", self.prior.len()),
                });
            }
        }
        let mut sum = 0.0;
        let mut prior_entries_ok = true;
        for (j, &p) in self.prior.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                prior_entries_ok = false;
                v.push(Violation {
                    field: format!("prior[{j}]"),
                    rule: format!("entry {p} is not a finite nonnegative number"),
                });
            } else {
                sum += p;
            }
        }
        if prior_entries_ok && (sum - 1.0).abs() > 1e-9 {
            v.push(Violation {
                field: "prior".into(),
                rule: format!("masses sum to {sum}, not 1 within 1e-9"),
            });
        }

        if self.costs.len() != 3 {
            v.push(Violation {
                field: "costs".into(),
                rule: format!(
                    "expected three cost tables (encoder, decoder 1, decoder 2), found {}",
                    self.costs.len()
                ),
            });
        }
        for (i, table) in self.costs.iter().enumerate() {
            let name = ["c_e", "c_1", "c_2"].get(i).copied().unwrap_or("c_?");
            if let Some((nu, nv1, nv2)) = sizes {
                if table.len() != nu {
                    v.push(Violation {
                        field: format!("costs[{i}] ({name})"),
                        rule: format!("outer length {} does not match |U| = {nu}", table.len()),
                    });
                    continue;
                }
                for (u, rows) in table.iter().enumerate() {
                    if rows.len() != nv1 {
                        v.push(Violation {
                            field: format!("costs[{i}][{u}]"),
                            rule: format!("length {} does not match |V1| = {nv1}", rows.len()),
                        });
                        continue;
                    }
                    for (v1, row) in rows.iter().enumerate() {
                        if row.len() != nv2 {
                            v.push(Violation {
                                field: format!("costs[{i}][{u}][{v1}]"),
                                rule: format!("length {} does not match |V2| = {nv2}", row.len()),
                            });
                            continue;
                        }
                        for (v2, &c) in row.iter().enumerate() {
                            if !c.is_finite() {
                                v.push(Violation {
                                    field: format!("costs[{i}][{u}][{v1}][{v2}]"),
                                    rule: format!("entry {c} is not finite"),
                                });
                            }
                        }
                    }
                }
            }
        }

        if self.rates.len() != 3 {
            v.push(Violation {
                field: "rates".into(),
                rule: format!("expected [R0, R1, R2], found {} entries", self.rates.len()),
            });
        }
        for (i, &r) in self.rates.iter().enumerate() {
            if !r.is_finite() || r < 0.0 {
                v.push(Violation {
                    field: format!("rates[{i}]"),
                    rule: format!("rate {r} must be finite and nonnegative"),
                });
            }
        }
        v
    }

    /// Typed instance, or an error listing every violation.
    pub fn build(&self) -> Result<ProblemInstance> {
        let violations = self.validate();
        if !violations.is_empty() {
            let joined = violations
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::InvalidInstance(joined));
        }
        let alphabet_u = Alphabet::new(self.alphabets[0].clone())?;
        let alphabet_v1 = Alphabet::new(self.alphabets[1].clone())?;
        let alphabet_v2 = Alphabet::new(self.alphabets[2].clone())?;
        let source = FiniteDistribution::new(alphabet_u, self.prior.clone())?;
        let shape = [source.len(), alphabet_v1.len(), alphabet_v2.len()];
        Ok(ProblemInstance {
            source,
            action_alphabets: [alphabet_v1, alphabet_v2],
            cost_e: CostTable::from_nested(shape, &self.costs[0])?,
            cost_1: CostTable::from_nested(shape, &self.costs[1])?,
            cost_2: CostTable::from_nested(shape, &self.costs[2])?,
            rates: RateTriple::new(self.rates[0], self.rates[1], self.rates[2])?,
        })
    }
}

/// Free-function alias for the diagnostic validation pass.
pub fn validate_instance(file: &InstanceFile) -> Vec<Violation> {
    file.validate()
}

/// Cost tensor over (u, v1, v2), stored flat in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    shape: [usize; 3],
    data: Vec<f64>,
}

impl CostTable {
    pub fn new(shape: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let expect = shape[0] * shape[1] * shape[2];
        if data.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "cost table has {} entries, shape {shape:?} needs {expect}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidInstance(format!("cost entry {bad} is not finite")));
        }
        Ok(CostTable { shape, data })
    }

    pub fn from_nested(shape: [usize; 3], nested: &[Vec<Vec<f64>>]) -> Result<Self> {
        let mut data = Vec::with_capacity(shape[0] * shape[1] * shape[2]);
        if nested.len() != shape[0] {
            return Err(Error::ShapeMismatch("cost table outer length mismatch".into()));
        }
        for rows in nested {
            if rows.len() != shape[1] {
                return Err(Error::ShapeMismatch("cost table middle length mismatch".into()));
            }
            for row in rows {
                if row.len() != shape[2] {
                    return Err(Error::ShapeMismatch("cost table inner length mismatch".into()));
                }
                data.extend_from_slice(row);
            }
        }
        CostTable::new(shape, data)
    }

    /// Constant table, handy for degenerate test instances.
    pub fn constant(shape: [usize; 3], value: f64) -> Self {
        CostTable {
            shape,
            data: vec![value; shape[0] * shape[1] * shape[2]],
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v1: usize, v2: usize) -> f64 {
        debug_assert!(u < self.shape[0] && v1 < self.shape[1] && v2 < self.shape[2]);
        self.data[(u * self.shape[1] + v1) * self.shape[2] + v2]
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.shape[0])
            .map(|u| {
                (0..self.shape[1])
                    .map(|v1| (0..self.shape[2]).map(|v2| self.get(u, v1, v2)).collect())
                    .collect()
            })
            .collect()
    }
}

/// Common, private-1, and private-2 rates in bits per symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTriple {
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

impl RateTriple {
    pub fn new(r0: f64, r1: f64, r2: f64) -> Result<Self> {
        for r in [r0, r1, r2] {
            if !r.is_finite() || r < 0.0 {
                return Err(Error::InvalidInstance(format!(
                    "rate {r} must be finite and nonnegative"
                )));
            }
        }
        Ok(RateTriple { r0, r1, r2 })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.r0, self.r1, self.r2]
    }
}

/// A validated problem: source prior, action alphabets, costs, rates.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub source: FiniteDistribution,
    pub action_alphabets: [Alphabet; 2],
    pub cost_e: CostTable,
    pub cost_1: CostTable,
    pub cost_2: CostTable,
    pub rates: RateTriple,
}

impl ProblemInstance {
    pub fn n_u(&self) -> usize {
        self.source.len()
    }

    pub fn n_v1(&self) -> usize {
        self.action_alphabets[0].len()
    }

    pub fn n_v2(&self) -> usize {
        self.action_alphabets[1].len()
    }

    pub fn source_alphabet(&self) -> &Alphabet {
        self.source.alphabet()
    }

    /// Decoder cost table, `player` in {1, 2}.
    pub fn decoder_cost(&self, player: usize) -> &CostTable {
        match player {
            1 => &self.cost_1,
            2 => &self.cost_2,
            _ => panic!("player must be 1 or 2, got {player}"),
        }
    }

    pub fn with_rates(&self, rates: RateTriple) -> ProblemInstance {
        let mut out = self.clone();
        out.rates = rates;
        out
    }
}

/// Signal alphabet sizes for (W0, W1, W2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyCardinalities {
    pub w0: usize,
    pub w1: usize,
    pub w2: usize,
}

impl PolicyCardinalities {
    pub fn new(w0: usize, w1: usize, w2: usize) -> Result<Self> {
        if w0 == 0 || w1 == 0 || w2 == 0 {
            return Err(Error::InvalidArgument(
                "signal cardinalities must be at least 1".into(),
            ));
        }
        Ok(PolicyCardinalities { w0, w1, w2 })
    }

    /// Default sizes: |W0| = |V1|·|V2| + 1 and |Wi| = |Vi|.
    pub fn defaults_for(instance: &ProblemInstance) -> Self {
        PolicyCardinalities {
            w0: instance.n_v1() * instance.n_v2() + 1,
            w1: instance.n_v1(),
            w2: instance.n_v2(),
        }
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.w0, self.w1, self.w2]
    }
}

/// Factorized disclosure policy: Q(w0|u), Q(w1|u,w0), Q(w2|u,w0).
///
/// The factorization builds in the Markov chain W1 - (U,W0) - W2.
#[derive(Debug, Clone)]
pub struct InformationPolicy {
    q0: StochasticKernel,
    q1: StochasticKernel,
    q2: StochasticKernel,
}

impl InformationPolicy {
    pub fn new(q0: StochasticKernel, q1: StochasticKernel, q2: StochasticKernel) -> Result<Self> {
        if q0.input_alphabets().len() != 1 {
            return Err(Error::ShapeMismatch("q0 must condition on U alone".into()));
        }
        let u = &q0.input_alphabets()[0];
        let w0 = q0.output_alphabet();
        for (name, k) in [("q1", &q1), ("q2", &q2)] {
            if k.input_alphabets().len() != 2
                || k.input_alphabets()[0] != *u
                || k.input_alphabets()[1] != *w0
            {
                return Err(Error::ShapeMismatch(format!(
                    "{name} must condition on (U, W0) with the alphabets q0 declares"
                )));
            }
        }
        Ok(InformationPolicy { q0, q1, q2 })
    }

    /// Build from plain probability rows. `rows1` and `rows2` are ordered
    /// with u as the most significant index: row for (u, w0) sits at
    /// `u * cards.w0 + w0`.
    pub fn from_rows(
        source_alphabet: &Alphabet,
        cards: PolicyCardinalities,
        rows0: Vec<Vec<f64>>,
        rows1: Vec<Vec<f64>>,
        rows2: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let u = source_alphabet.clone();
        let w0 = Alphabet::numeric(cards.w0);
        let q0 = StochasticKernel::from_rows(vec![u.clone()], w0.clone(), rows0)?;
        let q1 = StochasticKernel::from_rows(
            vec![u.clone(), w0.clone()],
            Alphabet::numeric(cards.w1),
            rows1,
        )?;
        let q2 = StochasticKernel::from_rows(vec![u, w0], Alphabet::numeric(cards.w2), rows2)?;
        InformationPolicy::new(q0, q1, q2)
    }

    /// Point mass on the first signal everywhere: reveals nothing.
    pub fn uninformative(source_alphabet: &Alphabet, cards: PolicyCardinalities) -> Self {
        let nu = source_alphabet.len();
        let point = |card: usize| {
            let mut row = vec![0.0; card];
            row[0] = 1.0;
            row
        };
        InformationPolicy::from_rows(
            source_alphabet,
            cards,
            vec![point(cards.w0); nu],
            vec![point(cards.w1); nu * cards.w0],
            vec![point(cards.w2); nu * cards.w0],
        )
        .expect("uninformative construction is always valid")
    }

    /// Uniform rows everywhere: full support, still reveals nothing.
    pub fn uniform(source_alphabet: &Alphabet, cards: PolicyCardinalities) -> Self {
        let nu = source_alphabet.len();
        let unif = |card: usize| vec![1.0 / card as f64; card];
        InformationPolicy::from_rows(
            source_alphabet,
            cards,
            vec![unif(cards.w0); nu],
            vec![unif(cards.w1); nu * cards.w0],
            vec![unif(cards.w2); nu * cards.w0],
        )
        .expect("uniform construction is always valid")
    }

    /// W0 copies U exactly; W1 and W2 are constant. Needs cards.w0 >= |U|.
    pub fn full_revelation(source_alphabet: &Alphabet, cards: PolicyCardinalities) -> Result<Self> {
        let nu = source_alphabet.len();
        if cards.w0 < nu {
            return Err(Error::InvalidArgument(format!(
                "full revelation needs |W0| >= |U| ({} < {nu})",
                cards.w0
            )));
        }
        let mut rows0 = Vec::with_capacity(nu);
        for u in 0..nu {
            let mut row = vec![0.0; cards.w0];
            row[u] = 1.0;
            rows0.push(row);
        }
        let point = |card: usize| {
            let mut row = vec![0.0; card];
            row[0] = 1.0;
            row
        };
        InformationPolicy::from_rows(
            source_alphabet,
            cards,
            rows0,
            vec![point(cards.w1); nu * cards.w0],
            vec![point(cards.w2); nu * cards.w0],
        )
    }

    /// Rows drawn uniformly from the simplex (normalized exponentials).
    pub fn random<R: rand::Rng>(
        source_alphabet: &Alphabet,
        cards: PolicyCardinalities,
        rng: &mut R,
    ) -> Self {
        let nu = source_alphabet.len();
        let mut draw = |card: usize| -> Vec<f64> {
            let raw: Vec<f64> = (0..card)
                .map(|_| -f64::ln(1.0 - rng.gen::<f64>()))
                .collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        };
        let rows0 = (0..nu).map(|_| draw(cards.w0)).collect();
        let rows1 = (0..nu * cards.w0).map(|_| draw(cards.w1)).collect();
        let rows2 = (0..nu * cards.w0).map(|_| draw(cards.w2)).collect();
        InformationPolicy::from_rows(source_alphabet, cards, rows0, rows1, rows2)
            .expect("normalized random rows are valid")
    }

    pub fn cards(&self) -> PolicyCardinalities {
        PolicyCardinalities {
            w0: self.q0.output_len(),
            w1: self.q1.output_len(),
            w2: self.q2.output_len(),
        }
    }

    pub fn source_alphabet(&self) -> &Alphabet {
        &self.q0.input_alphabets()[0]
    }

    pub fn q0(&self) -> &StochasticKernel {
        &self.q0
    }

    pub fn q1(&self) -> &StochasticKernel {
        &self.q1
    }

    pub fn q2(&self) -> &StochasticKernel {
        &self.q2
    }

    #[inline]
    pub fn prob(&self, u: usize, w0: usize, w1: usize, w2: usize) -> f64 {
        let c0 = self.q0.output_len();
        self.q0.row_flat(u).prob(w0)
            * self.q1.row_flat(u * c0 + w0).prob(w1)
            * self.q2.row_flat(u * c0 + w0).prob(w2)
    }

    pub fn is_full_support(&self) -> bool {
        self.q0.is_full_support() && self.q1.is_full_support() && self.q2.is_full_support()
    }
}

/// Unrestricted disclosure policy: one joint row Q(w0,w1,w2|u) per source
/// symbol, flattened with w0 most significant.
#[derive(Debug, Clone)]
pub struct JointPolicy {
    cards: PolicyCardinalities,
    kernel: StochasticKernel,
}

impl JointPolicy {
    pub fn new(
        source_alphabet: &Alphabet,
        cards: PolicyCardinalities,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let out = Alphabet::numeric(cards.w0 * cards.w1 * cards.w2);
        let kernel = StochasticKernel::from_rows(vec![source_alphabet.clone()], out, rows)?;
        Ok(JointPolicy { cards, kernel })
    }

    pub fn from_factorized(policy: &InformationPolicy) -> Self {
        let cards = policy.cards();
        let nu = policy.source_alphabet().len();
        let rows = (0..nu)
            .map(|u| {
                let mut row = Vec::with_capacity(cards.w0 * cards.w1 * cards.w2);
                for w0 in 0..cards.w0 {
                    for w1 in 0..cards.w1 {
                        for w2 in 0..cards.w2 {
                            row.push(policy.prob(u, w0, w1, w2));
                        }
                    }
                }
                row
            })
            .collect();
        JointPolicy::new(policy.source_alphabet(), cards, rows)
            .expect("factorized rows always form a joint policy")
    }

    pub fn cards(&self) -> PolicyCardinalities {
        self.cards
    }

    pub fn source_alphabet(&self) -> &Alphabet {
        &self.kernel.input_alphabets()[0]
    }

    pub fn kernel(&self) -> &StochasticKernel {
        &self.kernel
    }

    #[inline]
    pub fn triple_index(&self, w0: usize, w1: usize, w2: usize) -> usize {
        (w0 * self.cards.w1 + w1) * self.cards.w2 + w2
    }

    #[inline]
    pub fn prob(&self, u: usize, w0: usize, w1: usize, w2: usize) -> f64 {
        self.kernel
            .row_flat(u)
            .prob(self.triple_index(w0, w1, w2))
    }

    pub fn is_full_support(&self) -> bool {
        self.kernel.is_full_support()
    }
}

/// Either policy shape, as accepted by the game and simulator layers.
#[derive(Debug, Clone)]
pub enum Policy {
    Factorized(InformationPolicy),
    Joint(JointPolicy),
}

impl Policy {
    pub fn cards(&self) -> PolicyCardinalities {
        match self {
            Policy::Factorized(p) => p.cards(),
            Policy::Joint(p) => p.cards(),
        }
    }

    pub fn source_alphabet(&self) -> &Alphabet {
        match self {
            Policy::Factorized(p) => p.source_alphabet(),
            Policy::Joint(p) => p.source_alphabet(),
        }
    }

    #[inline]
    pub fn prob(&self, u: usize, w0: usize, w1: usize, w2: usize) -> f64 {
        match self {
            Policy::Factorized(p) => p.prob(u, w0, w1, w2),
            Policy::Joint(p) => p.prob(u, w0, w1, w2),
        }
    }

    pub fn is_full_support(&self) -> bool {
        match self {
            Policy::Factorized(p) => p.is_full_support(),
            Policy::Joint(p) => p.is_full_support(),
        }
    }

    pub fn is_factorized(&self) -> bool {
        matches!(self, Policy::Factorized(_))
    }
}

/// On-disk form of a policy, also embedded in solver result documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyDoc {
    Factorized {
        cards: [usize; 3],
        w0_given_u: Vec<Vec<f64>>,
        w1_given_uw0: Vec<Vec<f64>>,
        w2_given_uw0: Vec<Vec<f64>>,
    },
    Joint {
        cards: [usize; 3],
        w0w1w2_given_u: Vec<Vec<f64>>,
    },
}

impl PolicyDoc {
    pub fn from_policy(policy: &Policy) -> Self {
        let rows_of = |k: &StochasticKernel| -> Vec<Vec<f64>> {
            k.rows().iter().map(|r| r.mass().to_vec()).collect()
        };
        match policy {
            Policy::Factorized(p) => PolicyDoc::Factorized {
                cards: p.cards().as_array(),
                w0_given_u: rows_of(p.q0()),
                w1_given_uw0: rows_of(p.q1()),
                w2_given_uw0: rows_of(p.q2()),
            },
            Policy::Joint(p) => PolicyDoc::Joint {
                cards: p.cards().as_array(),
                w0w1w2_given_u: rows_of(p.kernel()),
            },
        }
    }

    pub fn into_policy(self, source_alphabet: &Alphabet) -> Result<Policy> {
        match self {
            PolicyDoc::Factorized {
                cards,
                w0_given_u,
                w1_given_uw0,
                w2_given_uw0,
            } => {
                let cards = PolicyCardinalities::new(cards[0], cards[1], cards[2])?;
                Ok(Policy::Factorized(InformationPolicy::from_rows(
                    source_alphabet,
                    cards,
                    w0_given_u,
                    w1_given_uw0,
                    w2_given_uw0,
                )?))
            }
            PolicyDoc::Joint {
                cards,
                w0w1w2_given_u,
            } => {
                let cards = PolicyCardinalities::new(cards[0], cards[1], cards[2])?;
                Ok(Policy::Joint(JointPolicy::new(
                    source_alphabet,
                    cards,
                    w0w1w2_given_u,
                )?))
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("policy file: {e}")))
    }
}

/// Joint law of (U, W0, W1, W2) induced by the prior and a policy.
/// Axes are ordered [U, W0, W1, W2].
pub fn build_joint(instance: &ProblemInstance, policy: &Policy) -> Result<JointDistribution> {
    if policy.source_alphabet() != instance.source_alphabet() {
        return Err(Error::AlphabetMismatch {
            expected: format!("{:?}", instance.source_alphabet().symbols()),
            found: format!("{:?}", policy.source_alphabet().symbols()),
        });
    }
    let cards = policy.cards();
    let nu = instance.n_u();
    let mut mass = Vec::with_capacity(nu * cards.w0 * cards.w1 * cards.w2);
    for u in 0..nu {
        let pu = instance.source.prob(u);
        for w0 in 0..cards.w0 {
            for w1 in 0..cards.w1 {
                for w2 in 0..cards.w2 {
                    mass.push(pu * policy.prob(u, w0, w1, w2));
                }
            }
        }
    }
    JointDistribution::new(
        vec![
            instance.source_alphabet().clone(),
            Alphabet::numeric(cards.w0),
            Alphabet::numeric(cards.w1),
            Alphabet::numeric(cards.w2),
        ],
        mass,
    )
}

/// Which rate-region definition a membership test applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateVariant {
    /// Factorized policies, sum-rate constraints, non-strict.
    Q0,
    /// Any policy shape, same constraints; the converse-side region.
    Qhat0,
    /// Factorized full-support policies, split-rate strict constraints.
    Qtilde0,
}

impl std::str::FromStr for RateVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "q0" => Ok(RateVariant::Q0),
            "qhat0" => Ok(RateVariant::Qhat0),
            "qtilde0" => Ok(RateVariant::Qtilde0),
            other => Err(Error::InvalidArgument(format!(
                "unknown rate variant {other:?}, expected q0, qhat0, or qtilde0"
            ))),
        }
    }
}

impl std::fmt::Display for RateVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RateVariant::Q0 => "q0",
            RateVariant::Qhat0 => "qhat0",
            RateVariant::Qtilde0 => "qtilde0",
        };
        f.write_str(s)
    }
}

/// The five information quantities the rate constraints compare against.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateInformation {
    pub i_u_w0: f64,
    pub i_u_w0w1: f64,
    pub i_u_w0w2: f64,
    pub i_u_w1_given_w0: f64,
    pub i_u_w2_given_w0: f64,
}

pub fn policy_information(
    instance: &ProblemInstance,
    policy: &Policy,
) -> Result<RateInformation> {
    let joint = build_joint(instance, policy)?;
    Ok(RateInformation {
        i_u_w0: joint.mi_between(&[0], &[1])?,
        i_u_w0w1: joint.mi_between(&[0], &[1, 2])?,
        i_u_w0w2: joint.mi_between(&[0], &[1, 3])?,
        i_u_w1_given_w0: joint.cmi_between(&[0], &[2], &[1])?,
        i_u_w2_given_w0: joint.cmi_between(&[0], &[3], &[1])?,
    })
}

/// Outcome of a rate-region membership test. Slacks are rate minus
/// information, so feasibility means all slacks nonnegative (strictly
/// positive for the strict variant).
#[derive(Debug, Clone, Serialize)]
pub struct MembershipReport {
    pub variant: RateVariant,
    pub feasible: bool,
    pub slacks: [f64; 3],
    pub full_support: bool,
}

pub fn rate_membership(
    instance: &ProblemInstance,
    policy: &Policy,
    variant: RateVariant,
) -> Result<MembershipReport> {
    match variant {
        RateVariant::Q0 | RateVariant::Qtilde0 if !policy.is_factorized() => {
            return Err(Error::InvalidArgument(format!(
                "variant {variant} is defined for factorized policies only"
            )));
        }
        _ => {}
    }
    let info = policy_information(instance, policy)?;
    let [r0, r1, r2] = instance.rates.as_array();
    let full_support = policy.is_full_support();
    match variant {
        RateVariant::Q0 | RateVariant::Qhat0 => {
            let slacks = [
                r0 - info.i_u_w0,
                r0 + r1 - info.i_u_w0w1,
                r0 + r2 - info.i_u_w0w2,
            ];
            Ok(MembershipReport {
                variant,
                feasible: slacks.iter().all(|&s| s >= -RATE_FEAS_TOL),
                slacks,
                full_support,
            })
        }
        RateVariant::Qtilde0 => {
            let slacks = [
                r0 - info.i_u_w0,
                r1 - info.i_u_w1_given_w0,
                r2 - info.i_u_w2_given_w0,
            ];
            Ok(MembershipReport {
                variant,
                feasible: full_support && slacks.iter().all(|&s| s > RATE_FEAS_TOL),
                slacks,
                full_support,
            })
        }
    }
}
