//! Explicit random codebooks, typicality encoding, and block traces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{draw_from, trial_rng, TypicalityConfig};
use crate::error::{Error, Result};
use crate::game::DecoderStrategy;
use crate::model::{build_joint, Policy, PolicyCardinalities, ProblemInstance, RateTriple};
use crate::probcore::JointDistribution;

/// Hard ceiling on stored codeword symbols: n * K0 * (1 + K1 + K2).
pub const CODEBOOK_SYMBOL_BUDGET: u64 = 1 << 26;

/// Ceiling on source sequences enumerated by [`exhaustive_traces`].
pub const EXHAUSTIVE_SOURCE_BUDGET: u64 = 1 << 20;

/// Number of codewords at blocklength `n` and a per-symbol `rate` in bits.
pub fn message_count(n: usize, rate: f64) -> Result<usize> {
    let e = (n as f64 * rate + 1e-9).floor().max(0.0);
    if e >= 40.0 {
        return Err(Error::BudgetExceeded {
            required: format!("2^{e:.0} codewords"),
            budget: "2^40 codewords".into(),
        });
    }
    Ok(1usize << e as u32)
}

/// Whether the explicit codebook for (n, rates) fits the symbol budget.
pub fn explicit_codebook_fits(n: usize, rates: &RateTriple) -> bool {
    let (Ok(k0), Ok(k1), Ok(k2)) = (
        message_count(n, rates.r0),
        message_count(n, rates.r1),
        message_count(n, rates.r2),
    ) else {
        return false;
    };
    (n as u128) * (k0 as u128) * (1 + k1 + k2) as u128 <= CODEBOOK_SYMBOL_BUDGET as u128
}

/// A realized layered codebook.
///
/// The common layer holds `k0` words drawn i.i.d. from the signal marginal
/// Q(w0); each private layer holds, per common word, `k1` (resp. `k2`) words
/// drawn position-wise from Q(w1|w0) (resp. Q(w2|w0)). Message indices are
/// 0-based internally; encoder outputs are 1-based.
#[derive(Debug)]
pub struct Codebook {
    n: usize,
    rates: RateTriple,
    seed: u64,
    cards: PolicyCardinalities,
    n_u: usize,
    k0: usize,
    k1: usize,
    k2: usize,
    w0_words: Vec<u8>,
    w1_words: Vec<u8>,
    w2_words: Vec<u8>,
    /// Expected joint counts n * P(u, w0), row-major over (u, w0).
    tgt_uw0: Vec<f64>,
    /// Expected counts n * P(u, w0, w1).
    tgt_uw0w1: Vec<f64>,
    /// Expected counts n * P(u, w0, w2).
    tgt_uw0w2: Vec<f64>,
    /// Single-letter law over (U, W0, W1, W2) the words were drawn from.
    joint: JointDistribution,
}

impl Codebook {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rates(&self) -> RateTriple {
        self.rates
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cards(&self) -> PolicyCardinalities {
        self.cards
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn message_counts(&self) -> (usize, usize, usize) {
        (self.k0, self.k1, self.k2)
    }

    /// Symbol of common word `m0` (0-based) at position `t`.
    pub fn w0_symbol(&self, m0: usize, t: usize) -> u8 {
        self.w0_words[m0 * self.n + t]
    }

    /// Symbol of decoder-1 word `m1` under common word `m0` at position `t`.
    pub fn w1_symbol(&self, m0: usize, m1: usize, t: usize) -> u8 {
        self.w1_words[(m0 * self.k1 + m1) * self.n + t]
    }

    /// Symbol of decoder-2 word `m2` under common word `m0` at position `t`.
    pub fn w2_symbol(&self, m0: usize, m2: usize, t: usize) -> u8 {
        self.w2_words[(m0 * self.k2 + m2) * self.n + t]
    }

    /// Expected-count targets for the three typicality tests.
    pub fn targets(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.tgt_uw0, &self.tgt_uw0w1, &self.tgt_uw0w2)
    }

    /// The single-letter law over (U, W0, W1, W2) the words were drawn from.
    pub fn single_letter_joint(&self) -> &JointDistribution {
        &self.joint
    }
}

/// Draw the full layered codebook for `policy` at blocklength `n`.
///
/// Fails with a budget error when the stored symbol count would exceed
/// [`CODEBOOK_SYMBOL_BUDGET`]. Regeneration with the same arguments is
/// bit-identical: all randomness comes from one sequential stream.
pub fn generate_codebook(
    instance: &ProblemInstance,
    policy: &Policy,
    _config: &TypicalityConfig,
    n: usize,
    seed: u64,
) -> Result<Codebook> {
    if n == 0 {
        return Err(Error::InvalidArgument("blocklength must be positive".into()));
    }
    let rates = instance.rates;
    let k0 = message_count(n, rates.r0)?;
    let k1 = message_count(n, rates.r1)?;
    let k2 = message_count(n, rates.r2)?;
    let symbols = (n as u128) * (k0 as u128) * (1 + k1 + k2) as u128;
    if symbols > CODEBOOK_SYMBOL_BUDGET as u128 {
        return Err(Error::BudgetExceeded {
            required: format!("{symbols} codeword symbols"),
            budget: format!("{CODEBOOK_SYMBOL_BUDGET} codeword symbols"),
        });
    }

    let joint = build_joint(instance, policy)?;
    let cards = policy.cards();
    let (c0, c1, c2) = (cards.w0, cards.w1, cards.w2);

    let q_w0 = joint.marginalize(&[1])?.mass().to_vec();
    let pair01 = joint.marginalize(&[1, 2])?.mass().to_vec();
    let pair02 = joint.marginalize(&[1, 3])?.mass().to_vec();
    let cond = |pair: &[f64], cw: usize| -> Vec<Vec<f64>> {
        (0..c0)
            .map(|w0| {
                if q_w0[w0] > 0.0 {
                    (0..cw).map(|w| pair[w0 * cw + w] / q_w0[w0]).collect()
                } else {
                    vec![1.0 / cw as f64; cw]
                }
            })
            .collect()
    };
    let cond1 = cond(&pair01, c1);
    let cond2 = cond(&pair02, c2);

    let scale = |m: Vec<f64>| m.into_iter().map(|p| p * n as f64).collect::<Vec<f64>>();
    let tgt_uw0 = scale(joint.marginalize(&[0, 1])?.mass().to_vec());
    let tgt_uw0w1 = scale(joint.marginalize(&[0, 1, 2])?.mass().to_vec());
    let tgt_uw0w2 = scale(joint.marginalize(&[0, 1, 3])?.mass().to_vec());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w0_words = vec![0u8; k0 * n];
    for s in w0_words.iter_mut() {
        *s = draw_from(&q_w0, &mut rng);
    }
    let mut w1_words = vec![0u8; k0 * k1 * n];
    for m0 in 0..k0 {
        for m1 in 0..k1 {
            for t in 0..n {
                let w0s = w0_words[m0 * n + t] as usize;
                w1_words[(m0 * k1 + m1) * n + t] = draw_from(&cond1[w0s], &mut rng);
            }
        }
    }
    let mut w2_words = vec![0u8; k0 * k2 * n];
    for m0 in 0..k0 {
        for m2 in 0..k2 {
            for t in 0..n {
                let w0s = w0_words[m0 * n + t] as usize;
                w2_words[(m0 * k2 + m2) * n + t] = draw_from(&cond2[w0s], &mut rng);
            }
        }
    }

    Ok(Codebook {
        n,
        rates,
        seed,
        cards,
        n_u: instance.n_u(),
        k0,
        k1,
        k2,
        w0_words,
        w1_words,
        w2_words,
        tgt_uw0,
        tgt_uw0w1,
        tgt_uw0w2,
        joint,
    })
}

/// Encoder output: 1-based message indices plus failure flags.
///
/// On any typicality failure the message triple is (1, 1, 1) and the flag of
/// the failed search is set; the private searches only run once a common
/// word has been found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeResult {
    pub m0: u64,
    pub m1: u64,
    pub m2: u64,
    pub f0: bool,
    pub f1: bool,
    pub f2: bool,
}

impl EncodeResult {
    pub fn failed(&self) -> bool {
        self.f0 || self.f1 || self.f2
    }
}

/// First-match typicality encoding of one source block.
///
/// A candidate passes when the L1 gap between realized joint counts and
/// expected counts is at most n * delta.
pub fn encode(cb: &Codebook, u_seq: &[u8], config: &TypicalityConfig) -> Result<EncodeResult> {
    if u_seq.len() != cb.n {
        return Err(Error::ShapeMismatch(format!(
            "source block has length {}, codebook expects {}",
            u_seq.len(),
            cb.n
        )));
    }
    if let Some(&s) = u_seq.iter().find(|&&s| (s as usize) >= cb.n_u) {
        return Err(Error::ShapeMismatch(format!(
            "source symbol index {s} out of range for alphabet of size {}",
            cb.n_u
        )));
    }
    let thr = cb.n as f64 * config.delta();
    let (c0, c1, c2) = (cb.cards.w0, cb.cards.w1, cb.cards.w2);

    let mut counts0 = vec![0u32; cb.n_u * c0];
    let mut found0 = None;
    for m0 in 0..cb.k0 {
        counts0.fill(0);
        for t in 0..cb.n {
            counts0[u_seq[t] as usize * c0 + cb.w0_symbol(m0, t) as usize] += 1;
        }
        let dev: f64 = counts0
            .iter()
            .zip(&cb.tgt_uw0)
            .map(|(&c, &tgt)| (c as f64 - tgt).abs())
            .sum();
        if dev <= thr {
            found0 = Some(m0);
            break;
        }
    }
    let Some(m0) = found0 else {
        return Ok(EncodeResult {
            m0: 1,
            m1: 1,
            m2: 1,
            f0: true,
            f1: false,
            f2: false,
        });
    };

    let scan_private = |k: usize, card: usize, tgt: &[f64], sym: &dyn Fn(usize, usize) -> u8| {
        let mut counts = vec![0u32; cb.n_u * c0 * card];
        for m in 0..k {
            counts.fill(0);
            for t in 0..cb.n {
                let idx = (u_seq[t] as usize * c0 + cb.w0_symbol(m0, t) as usize) * card
                    + sym(m, t) as usize;
                counts[idx] += 1;
            }
            let dev: f64 = counts
                .iter()
                .zip(tgt)
                .map(|(&c, &tgt)| (c as f64 - tgt).abs())
                .sum();
            if dev <= thr {
                return Some(m);
            }
        }
        None
    };

    let found1 = scan_private(cb.k1, c1, &cb.tgt_uw0w1, &|m, t| cb.w1_symbol(m0, m, t));
    let found2 = scan_private(cb.k2, c2, &cb.tgt_uw0w2, &|m, t| cb.w2_symbol(m0, m, t));

    match (found1, found2) {
        (Some(m1), Some(m2)) => Ok(EncodeResult {
            m0: m0 as u64 + 1,
            m1: m1 as u64 + 1,
            m2: m2 as u64 + 1,
            f0: false,
            f1: false,
            f2: false,
        }),
        (f1, f2) => Ok(EncodeResult {
            m0: 1,
            m1: 1,
            m2: 1,
            f0: false,
            f1: f1.is_none(),
            f2: f2.is_none(),
        }),
    }
}

/// One simulated block: the source sequence, the transmitted messages with
/// failure flags, both decoders' realized action sequences, and a trace
/// weight (1 for sampled traces, the sequence probability for exhaustive
/// enumeration).
#[derive(Debug, Clone)]
pub struct BlockTrace {
    pub u_seq: Vec<u8>,
    pub m0: u64,
    pub m1: u64,
    pub m2: u64,
    pub f0: bool,
    pub f1: bool,
    pub f2: bool,
    pub v1_seq: Vec<u8>,
    pub v2_seq: Vec<u8>,
    pub weight: f64,
}

impl BlockTrace {
    pub fn failed(&self) -> bool {
        self.f0 || self.f1 || self.f2
    }
}

fn check_strategy_shape(
    cb: &Codebook,
    instance: &ProblemInstance,
    strategies: &DecoderStrategy,
) -> Result<()> {
    let s1 = strategies.sigma_1();
    let s2 = strategies.sigma_2();
    let shape1: Vec<usize> = s1.input_alphabets().iter().map(|a| a.len()).collect();
    let shape2: Vec<usize> = s2.input_alphabets().iter().map(|a| a.len()).collect();
    let want1 = vec![cb.cards.w0, cb.cards.w1];
    let want2 = vec![cb.cards.w0, cb.cards.w2];
    if shape1 != want1 || s1.output_len() != instance.n_v1() {
        return Err(Error::ShapeMismatch(format!(
            "decoder 1 strategy over {shape1:?}->{} does not fit signals {want1:?} and {} actions",
            s1.output_len(),
            instance.n_v1()
        )));
    }
    if shape2 != want2 || s2.output_len() != instance.n_v2() {
        return Err(Error::ShapeMismatch(format!(
            "decoder 2 strategy over {shape2:?}->{} does not fit signals {want2:?} and {} actions",
            s2.output_len(),
            instance.n_v2()
        )));
    }
    Ok(())
}

/// Encode one block and roll both decoders' actions symbol by symbol from
/// the realized codewords of the transmitted messages.
pub fn simulate_trace(
    cb: &Codebook,
    strategies: &DecoderStrategy,
    u_seq: Vec<u8>,
    config: &TypicalityConfig,
    rng: &mut ChaCha8Rng,
    weight: f64,
) -> Result<BlockTrace> {
    let enc = encode(cb, &u_seq, config)?;
    let (i0, i1, i2) = (
        (enc.m0 - 1) as usize,
        (enc.m1 - 1) as usize,
        (enc.m2 - 1) as usize,
    );
    let mut v1_seq = vec![0u8; cb.n];
    let mut v2_seq = vec![0u8; cb.n];
    for t in 0..cb.n {
        let w0s = cb.w0_symbol(i0, t) as usize;
        let w1s = cb.w1_symbol(i0, i1, t) as usize;
        let w2s = cb.w2_symbol(i0, i2, t) as usize;
        v1_seq[t] = draw_from(strategies.sigma_1().row(&[w0s, w1s]).mass(), rng);
        v2_seq[t] = draw_from(strategies.sigma_2().row(&[w0s, w2s]).mass(), rng);
    }
    Ok(BlockTrace {
        u_seq,
        m0: enc.m0,
        m1: enc.m1,
        m2: enc.m2,
        f0: enc.f0,
        f1: enc.f1,
        f2: enc.f2,
        v1_seq,
        v2_seq,
        weight,
    })
}

/// Monte-Carlo block traces from fresh source draws, one independent
/// substream per trial so results do not depend on scheduling.
pub fn sample_traces(
    cb: &Codebook,
    instance: &ProblemInstance,
    strategies: &DecoderStrategy,
    config: &TypicalityConfig,
    trials: u64,
    seed: u64,
) -> Result<Vec<BlockTrace>> {
    check_strategy_shape(cb, instance, strategies)?;
    let prior = instance.source.mass().to_vec();
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial + 1);
            let u_seq: Vec<u8> = (0..cb.n).map(|_| draw_from(&prior, &mut rng)).collect();
            simulate_trace(cb, strategies, u_seq, config, &mut rng, 1.0)
        })
        .collect()
}

/// Probability-weighted traces for every source sequence of positive mass.
pub fn exhaustive_traces(
    cb: &Codebook,
    instance: &ProblemInstance,
    strategies: &DecoderStrategy,
    config: &TypicalityConfig,
    seed: u64,
) -> Result<Vec<BlockTrace>> {
    check_strategy_shape(cb, instance, strategies)?;
    let nu = instance.n_u();
    let total = (nu as u128).checked_pow(cb.n as u32);
    match total {
        Some(t) if t <= EXHAUSTIVE_SOURCE_BUDGET as u128 => {}
        _ => {
            return Err(Error::BudgetExceeded {
                required: format!("{nu}^{} source sequences", cb.n),
                budget: format!("{EXHAUSTIVE_SOURCE_BUDGET} source sequences"),
            })
        }
    }
    let total = total.unwrap() as u64;
    let prior = instance.source.mass().to_vec();
    let traces: Result<Vec<Option<BlockTrace>>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut u_seq = vec![0u8; cb.n];
            let mut rem = idx;
            let mut weight = 1.0;
            for t in (0..cb.n).rev() {
                let s = (rem % nu as u64) as u8;
                rem /= nu as u64;
                u_seq[t] = s;
                weight *= prior[s as usize];
            }
            if weight <= 0.0 {
                return Ok(None);
            }
            let mut rng = trial_rng(seed, idx + 1);
            simulate_trace(cb, strategies, u_seq, config, &mut rng, weight).map(Some)
        })
        .collect();
    Ok(traces?.into_iter().flatten().collect())
}
