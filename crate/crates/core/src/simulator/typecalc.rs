//! Exact type-deviation arithmetic for the random-codebook ensemble.
//!
//! A length-`n` word drawn i.i.d. against a fixed source sequence splits into
//! independent per-cell binomial counts (one cell per conditioning symbol
//! pair).  The L1 typicality test is a sum of per-cell deviations, each a
//! flat-bottom V in the cell count.  Everything here works on truncated
//! deviation distributions: lists of (count, deviation, probability) entries
//! kept only while the deviation alone still fits the budget.

use rand::Rng;

/// Table of ln(i!) for exact binomial log-probabilities.
pub(crate) struct LnFact {
    table: Vec<f64>,
}

impl LnFact {
    pub fn new(n_max: usize) -> Self {
        let mut table = vec![0.0; n_max + 1];
        for i in 1..=n_max {
            table[i] = table[i - 1] + (i as f64).ln();
        }
        LnFact { table }
    }

    pub fn ln_choose(&self, n: usize, k: usize) -> f64 {
        debug_assert!(k <= n && n < self.table.len());
        self.table[n] - self.table[k] - self.table[n - k]
    }
}

/// One conditioning cell: `c` positions whose word symbols are i.i.d.
/// Bernoulli(`q`), scored against real-valued target counts for the
/// one-symbol and zero-symbol sub-cells.
pub(crate) struct Cell {
    pub c: usize,
    /// ln P(x ones), x in 0..=c.
    pub ln_p: Vec<f64>,
    /// |x - ones_target| + |(c - x) - zeros_target|.
    pub dev: Vec<f64>,
}

impl Cell {
    pub fn new(c: usize, q: f64, ones_target: f64, zeros_target: f64, lf: &LnFact) -> Cell {
        let mut ln_p = vec![f64::NEG_INFINITY; c + 1];
        if q <= 0.0 {
            ln_p[0] = 0.0;
        } else if q >= 1.0 {
            ln_p[c] = 0.0;
        } else {
            let (lq, lr) = (q.ln(), (1.0 - q).ln());
            for x in 0..=c {
                ln_p[x] = lf.ln_choose(c, x) + x as f64 * lq + (c - x) as f64 * lr;
            }
        }
        let dev = (0..=c)
            .map(|x| (x as f64 - ones_target).abs() + ((c - x) as f64 - zeros_target).abs())
            .collect();
        Cell { c, ln_p, dev }
    }
}

/// Deviation distribution truncated to `dev <= cap`, sorted ascending by
/// deviation, with cumulative probabilities for prefix-mass queries.
pub(crate) struct DevDist {
    pub x: Vec<u32>,
    pub dev: Vec<f64>,
    pub prob: Vec<f64>,
    cum: Vec<f64>,
}

impl DevDist {
    pub fn from_cell(cell: &Cell, cap: f64) -> DevDist {
        let mut entries: Vec<(u32, f64, f64)> = Vec::new();
        for x in 0..=cell.c {
            if cell.dev[x] <= cap && cell.ln_p[x] > f64::NEG_INFINITY {
                entries.push((x as u32, cell.dev[x], cell.ln_p[x].exp()));
            }
        }
        Self::from_entries(entries)
    }

    fn from_entries(mut entries: Vec<(u32, f64, f64)>) -> DevDist {
        entries.sort_unstable_by(|a, b| a.1.total_cmp(&b.1));
        let mut cum = Vec::with_capacity(entries.len());
        let mut acc = 0.0;
        for e in &entries {
            acc += e.2;
            cum.push(acc);
        }
        DevDist {
            x: entries.iter().map(|e| e.0).collect(),
            dev: entries.iter().map(|e| e.1).collect(),
            prob: entries.iter().map(|e| e.2).collect(),
            cum,
        }
    }

    /// Pairwise convolution of deviations, truncated to `cap`.  The count
    /// column is meaningless afterwards; convolved distributions are only
    /// queried for masses.
    pub fn convolve(a: &DevDist, b: &DevDist, cap: f64) -> DevDist {
        let mut entries = Vec::new();
        for i in 0..a.dev.len() {
            let budget = cap - a.dev[i];
            for j in 0..b.dev.len() {
                if b.dev[j] > budget {
                    break;
                }
                entries.push((0u32, a.dev[i] + b.dev[j], a.prob[i] * b.prob[j]));
            }
        }
        Self::from_entries(entries)
    }

    /// Total probability of entries with deviation <= r.
    pub fn mass_within(&self, r: f64) -> f64 {
        let k = self.dev.partition_point(|&d| d <= r);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }

    pub fn len(&self) -> usize {
        self.dev.len()
    }
}

/// P(dev_a + dev_b <= cap) for independent cells.
pub(crate) fn pair_mass(a: &DevDist, b: &DevDist, cap: f64) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut total = 0.0;
    for i in 0..small.len() {
        if small.dev[i] > cap {
            break;
        }
        total += small.prob[i] * large.mass_within(cap - small.dev[i]);
    }
    total
}

/// P(dev_0 + dev_1 + dev_23 <= cap) where `s23` is a pre-convolved pair.
pub(crate) fn quad_mass(d0: &DevDist, d1: &DevDist, s23: &DevDist, cap: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..d0.len() {
        if d0.dev[i] > cap {
            break;
        }
        let budget = cap - d0.dev[i];
        for j in 0..d1.len() {
            if d1.dev[j] > budget {
                break;
            }
            total += d0.prob[i] * d1.prob[j] * s23.mass_within(budget - d1.dev[j]);
        }
    }
    total
}

fn weighted_pick(weights: &[f64], rng: &mut impl Rng) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut r = rng.gen::<f64>() * total;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = Some(i);
        if r < w {
            return Some(i);
        }
        r -= w;
    }
    last
}

/// Draw per-cell counts for two cells conditioned on total deviation <= cap.
pub(crate) fn sample_pair(
    d0: &DevDist,
    d1: &DevDist,
    cap: f64,
    rng: &mut impl Rng,
) -> Option<(u32, u32)> {
    let w0: Vec<f64> = (0..d0.len())
        .map(|i| d0.prob[i] * d1.mass_within(cap - d0.dev[i]))
        .collect();
    let i = weighted_pick(&w0, rng)?;
    let budget = cap - d0.dev[i];
    let w1: Vec<f64> = (0..d1.len())
        .map(|j| if d1.dev[j] <= budget { d1.prob[j] } else { 0.0 })
        .collect();
    let j = weighted_pick(&w1, rng)?;
    Some((d0.x[i], d1.x[j]))
}

/// Draw per-cell counts for four cells conditioned on total deviation <= cap.
/// `s23` must be the convolution of `d[2]` and `d[3]` at the same cap.
pub(crate) fn sample_quad(
    d: &[DevDist; 4],
    s23: &DevDist,
    cap: f64,
    rng: &mut impl Rng,
) -> Option<[u32; 4]> {
    let w0: Vec<f64> = (0..d[0].len())
        .map(|i| {
            let budget = cap - d[0].dev[i];
            let mut m = 0.0;
            for j in 0..d[1].len() {
                if d[1].dev[j] > budget {
                    break;
                }
                m += d[1].prob[j] * s23.mass_within(budget - d[1].dev[j]);
            }
            d[0].prob[i] * m
        })
        .collect();
    let i0 = weighted_pick(&w0, rng)?;
    let b1 = cap - d[0].dev[i0];

    let w1: Vec<f64> = (0..d[1].len())
        .map(|j| {
            if d[1].dev[j] <= b1 {
                d[1].prob[j] * s23.mass_within(b1 - d[1].dev[j])
            } else {
                0.0
            }
        })
        .collect();
    let i1 = weighted_pick(&w1, rng)?;
    let b2 = b1 - d[1].dev[i1];

    let w2: Vec<f64> = (0..d[2].len())
        .map(|j| {
            if d[2].dev[j] <= b2 {
                d[2].prob[j] * d[3].mass_within(b2 - d[2].dev[j])
            } else {
                0.0
            }
        })
        .collect();
    let i2 = weighted_pick(&w2, rng)?;
    let b3 = b2 - d[2].dev[i2];

    let w3: Vec<f64> = (0..d[3].len())
        .map(|j| if d[3].dev[j] <= b3 { d[3].prob[j] } else { 0.0 })
        .collect();
    let i3 = weighted_pick(&w3, rng)?;
    Some([d[0].x[i0], d[1].x[i1], d[2].x[i2], d[3].x[i3]])
}

/// Exact draw of |ones(a) ∩ ones(b)| when a marks `x1` of `c` positions and b
/// independently marks `x2` of them uniformly over arrangements.
pub(crate) fn sample_hypergeometric(
    lf: &LnFact,
    c: usize,
    x1: usize,
    x2: usize,
    rng: &mut impl Rng,
) -> usize {
    debug_assert!(x1 <= c && x2 <= c);
    let lo = x1.saturating_sub(c - x2);
    let hi = x1.min(x2);
    if lo >= hi {
        return lo;
    }
    let denom = lf.ln_choose(c, x2);
    let mut r = rng.gen::<f64>();
    for j in lo..hi {
        let p = (lf.ln_choose(x1, j) + lf.ln_choose(c - x1, x2 - j) - denom).exp();
        if r < p {
            return j;
        }
        r -= p;
    }
    hi
}

/// ln of the message count 2^floor(n*rate + 1e-9).
pub(crate) fn ln_message_count(n: usize, rate: f64) -> f64 {
    (n as f64 * rate + 1e-9).floor().max(0.0) * std::f64::consts::LN_2
}

/// (1 - q)^K with K = exp(ln_k), stable for astronomically large K.
pub(crate) fn prob_no_hit(q: f64, ln_k: f64) -> f64 {
    if q <= 0.0 {
        return 1.0;
    }
    if q >= 1.0 {
        return 0.0;
    }
    let ln_per_word = (-q).ln_1p();
    let ln_magnitude = ln_k + (-ln_per_word).ln();
    if ln_magnitude > 709.0 {
        0.0
    } else {
        (-ln_magnitude.exp()).exp()
    }
}

/// Binomial draw by direct Bernoulli sweep; block lengths stay small.
pub(crate) fn sample_binomial(n: usize, p: f64, rng: &mut impl Rng) -> usize {
    let mut k = 0;
    for _ in 0..n {
        if rng.gen::<f64>() < p {
            k += 1;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const N: usize = 6;

    fn word_prob(word: usize, cells: &[(usize, f64)]) -> f64 {
        let mut p = 1.0;
        let mut pos = 0;
        for &(c, q) in cells {
            for _ in 0..c {
                let bit = (word >> pos) & 1;
                p *= if bit == 1 { q } else { 1.0 - q };
                pos += 1;
            }
        }
        p
    }

    fn word_dev(word: usize, cells: &[(usize, f64)], targets: &[(f64, f64)]) -> f64 {
        let mut dev = 0.0;
        let mut pos = 0;
        for (ci, &(c, _)) in cells.iter().enumerate() {
            let mut ones = 0;
            for _ in 0..c {
                ones += (word >> pos) & 1;
                pos += 1;
            }
            dev += (ones as f64 - targets[ci].0).abs() + ((c - ones) as f64 - targets[ci].1).abs();
        }
        dev
    }

    #[test]
    fn pair_mass_matches_exhaustive_word_enumeration() {
        let lf = LnFact::new(N);
        let cells = [(4usize, 0.3), (2usize, 0.6)];
        let targets = [(0.9, 2.1), (1.8, 1.2)];
        let cap = 2.5;
        let mut brute = 0.0;
        for word in 0..(1usize << N) {
            if word_dev(word, &cells, &targets) <= cap {
                brute += word_prob(word, &cells);
            }
        }
        let d0 = DevDist::from_cell(&Cell::new(4, 0.3, 0.9, 2.1, &lf), cap);
        let d1 = DevDist::from_cell(&Cell::new(2, 0.6, 1.8, 1.2, &lf), cap);
        assert!((pair_mass(&d0, &d1, cap) - brute).abs() < 1e-12);
    }

    #[test]
    fn quad_mass_matches_exhaustive_word_enumeration() {
        let lf = LnFact::new(N);
        let cells = [(2usize, 0.4), (2usize, 0.7), (1usize, 0.4), (1usize, 0.7)];
        let targets = [(0.8, 1.2), (1.5, 0.5), (0.3, 0.7), (0.8, 0.2)];
        let cap = 2.2;
        let mut brute = 0.0;
        for word in 0..(1usize << N) {
            if word_dev(word, &cells, &targets) <= cap {
                brute += word_prob(word, &cells);
            }
        }
        let mk = |i: usize| {
            DevDist::from_cell(
                &Cell::new(cells[i].0, cells[i].1, targets[i].0, targets[i].1, &lf),
                cap,
            )
        };
        let d = [mk(0), mk(1), mk(2), mk(3)];
        let s23 = DevDist::convolve(&d[2], &d[3], cap);
        assert!((quad_mass(&d[0], &d[1], &s23, cap) - brute).abs() < 1e-12);
    }

    #[test]
    fn conditional_quad_sampler_tracks_exact_marginal() {
        let lf = LnFact::new(N);
        let cells = [(2usize, 0.4), (2usize, 0.7), (1usize, 0.4), (1usize, 0.7)];
        let targets = [(0.8, 1.2), (1.5, 0.5), (0.3, 0.7), (0.8, 0.2)];
        let cap = 3.0;
        let mk = |i: usize| {
            DevDist::from_cell(
                &Cell::new(cells[i].0, cells[i].1, targets[i].0, targets[i].1, &lf),
                cap,
            )
        };
        let d = [mk(0), mk(1), mk(2), mk(3)];
        let s23 = DevDist::convolve(&d[2], &d[3], cap);

        let mut joint = vec![0.0; 3];
        let mut z = 0.0;
        for word in 0..(1usize << N) {
            let dev = word_dev(word, &cells, &targets);
            if dev <= cap {
                let p = word_prob(word, &cells);
                let ones0 = (word & 1) + ((word >> 1) & 1);
                joint[ones0] += p;
                z += p;
            }
        }
        for v in &mut joint {
            *v /= z;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut freq = vec![0.0; 3];
        let draws = 4000;
        for _ in 0..draws {
            let s = sample_quad(&d, &s23, cap, &mut rng).expect("feasible cap");
            let total: f64 = (0..4).map(|i| d[i].dev[0].min(0.0)).sum();
            let _ = total;
            let devsum: f64 = {
                let mut acc = 0.0;
                for (i, &x) in s.iter().enumerate() {
                    acc += (x as f64 - targets[i].0).abs()
                        + ((cells[i].0 - x as usize) as f64 - targets[i].1).abs();
                }
                acc
            };
            assert!(devsum <= cap + 1e-12);
            freq[s[0] as usize] += 1.0 / draws as f64;
        }
        for x in 0..3 {
            assert!(
                (freq[x] - joint[x]).abs() < 0.04,
                "x0={x}: sampled {} exact {}",
                freq[x],
                joint[x]
            );
        }
    }

    #[test]
    fn hypergeometric_sampler_matches_pmf() {
        let lf = LnFact::new(16);
        let (c, x1, x2) = (6usize, 3usize, 4usize);
        let denom = lf.ln_choose(c, x2);
        let pmf: Vec<f64> = (0..=3)
            .map(|j| {
                if j + (c - x2) < x1 || j > x1.min(x2) {
                    0.0
                } else {
                    (lf.ln_choose(x1, j) + lf.ln_choose(c - x1, x2 - j) - denom).exp()
                }
            })
            .collect();
        let total: f64 = pmf.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut freq = vec![0.0; 4];
        let draws = 6000;
        for _ in 0..draws {
            freq[sample_hypergeometric(&lf, c, x1, x2, &mut rng)] += 1.0 / draws as f64;
        }
        for j in 0..4 {
            assert!((freq[j] - pmf[j]).abs() < 0.03);
        }
    }

    #[test]
    fn no_hit_probability_handles_extremes() {
        assert_eq!(prob_no_hit(0.0, 10.0), 1.0);
        assert_eq!(prob_no_hit(1.0, 10.0), 0.0);
        let k4 = (4.0f64).ln();
        assert!((prob_no_hit(0.5, k4) - 0.0625).abs() < 1e-12);
        let huge = ln_message_count(400, 0.73);
        assert_eq!(prob_no_hit(0.9, huge), 0.0);
        assert!((prob_no_hit(1e-300, huge) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn message_count_floor_is_stable_near_integers() {
        assert!((ln_message_count(8, 0.5) - (16.0f64).ln()).abs() < 1e-12);
        assert!((ln_message_count(3, 1.0 / 3.0) - (2.0f64).ln()).abs() < 1e-12);
        assert_eq!(ln_message_count(4, 0.0), 0.0);
    }
}
