//! Discrete-time scrambling of biased coin flips into fair ones.
//!
//! Start from an independent sequence of ±1 bits indexed by `n <= 0`,
//! where bit `n` shows `+1` with probability `p_n` (all `p_n` strictly
//! inside `(0, 1)`). A deterministic extractor turns a block of earlier
//! bits `(eps_i)_{i in I_n}` into a single output `h_n`; the scrambled
//! sequence is `h_n * eps_n`. With the index family chosen so that each
//! `I_n` sits strictly in the past of `n` and the sets never overlap, the
//! scrambled sequence hides the original bias: conditionally on everything
//! older, a scrambled bit with a fair source bit is exactly fair.
//!
//! Everything here is exact: probabilities are arbitrary-precision
//! rationals, the extractor is interval arithmetic on `[0, 1)`, and
//! [`exact_joint_law`] enumerates the full joint distribution of a window
//! of scrambled bits — refusing (rather than approximating) when the
//! enumeration would touch more than [`ENUMERATION_BUDGET_BITS`] source
//! bits.
//!
//! A finite-bit extractor cannot be exactly fair for every biased law
//! (interval endpoints are products of `p_n` and `1 - p_n`, which can
//! never hit 1/2 for, say, constant `p = 7/10`), so the exact guarantees
//! are conditional: `h_n * eps_n` is exactly fair whenever `p_n = 1/2`,
//! and the joint law factorizes exactly whenever the referenced index
//! sets are disjoint. [`exact_joint_law`] reports the undecided mass and
//! exact marginals so both claims can be checked as stated.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::paths::SeededRng;

/// Largest number of source bits [`exact_joint_law`] will enumerate.
pub const ENUMERATION_BUDGET_BITS: usize = 24;

fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn one_half() -> BigRational {
    rational(1, 2)
}

fn check_probability(p: &BigRational) -> Result<()> {
    if p <= &BigRational::zero() || p >= &BigRational::one() {
        return Err(Error::invalid(format!("bit probability {p} must lie strictly in (0, 1)")));
    }
    Ok(())
}

/// The law of the source bits: `p_n` is the probability that bit `n`
/// shows `+1`, addressed by `n <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum BiasedBitLaw {
    /// Every bit has the same probability.
    Constant(BigRational),
    /// Probabilities cycle through a finite block, `p_n = block[|n| mod len]`.
    Periodic(Vec<BigRational>),
    /// Explicit table `p_{-k} = table[k]`; indices beyond the table are an
    /// error (the table is the truncation horizon).
    Table(Vec<BigRational>),
}

impl BiasedBitLaw {
    pub fn constant(p: BigRational) -> Result<Self> {
        check_probability(&p)?;
        Ok(BiasedBitLaw::Constant(p))
    }

    pub fn periodic(block: Vec<BigRational>) -> Result<Self> {
        if block.is_empty() {
            return Err(Error::invalid("periodic law needs a nonempty block"));
        }
        for p in &block {
            check_probability(p)?;
        }
        Ok(BiasedBitLaw::Periodic(block))
    }

    pub fn table(table: Vec<BigRational>) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::invalid("table law needs a nonempty table"));
        }
        for p in &table {
            check_probability(p)?;
        }
        Ok(BiasedBitLaw::Table(table))
    }

    /// Probability that bit `n` (with `n <= 0`) shows `+1`.
    pub fn p(&self, n: i64) -> Result<BigRational> {
        if n > 0 {
            return Err(Error::invalid(format!("bit index {n} must be <= 0")));
        }
        let offset = n.unsigned_abs() as usize;
        match self {
            BiasedBitLaw::Constant(p) => Ok(p.clone()),
            BiasedBitLaw::Periodic(block) => Ok(block[offset % block.len()].clone()),
            BiasedBitLaw::Table(table) => table.get(offset).cloned().ok_or_else(|| {
                Error::invalid(format!(
                    "bit index {n} lies beyond the table horizon {}",
                    table.len()
                ))
            }),
        }
    }

    /// Same probability as an f64, for Monte Carlo sampling.
    pub fn p_f64(&self, n: i64) -> Result<f64> {
        Ok(self.p(n)?.to_f64().expect("probabilities in (0,1) convert to f64"))
    }
}

/// Diffuseness accounting: the scrambling argument needs
/// `sum_n min(p_n, 1 - p_n)` to diverge, so convergent tails are the
/// red flag.
#[derive(Debug, Clone)]
pub struct DiffuseReport {
    /// Indices `0, -1, ..., -horizon` were summed.
    pub horizon: usize,
    /// Exact partial sum of `min(p_n, 1 - p_n)`.
    pub partial_sum: BigRational,
    /// The last (deepest) term of the sum.
    pub last_term: BigRational,
    /// True when the deepest term fell below the caller's threshold —
    /// the tail is visibly summable and the law is suspect.
    pub flagged_convergent: bool,
}

/// Sum `min(p_n, 1 - p_n)` over the window `n = 0, -1, ..., -horizon` and
/// flag laws whose terms have shrunk below `tail_threshold` by the end.
pub fn check_diffuse(
    law: &BiasedBitLaw,
    horizon: usize,
    tail_threshold: &BigRational,
) -> Result<DiffuseReport> {
    let mut partial_sum = BigRational::zero();
    let mut last_term = BigRational::zero();
    for k in 0..=horizon {
        let p = law.p(-(k as i64))?;
        let q = &BigRational::one() - &p;
        last_term = if p < q { p } else { q };
        partial_sum += &last_term;
    }
    Ok(DiffuseReport {
        horizon,
        partial_sum,
        flagged_convergent: &last_term < tail_threshold,
        last_term,
    })
}

/// Which indices feed each extractor: `I_n` lists the inputs of `h_n`,
/// all strictly below `n`, pairwise disjoint across the family.
#[derive(Debug, Clone)]
pub struct IndexFamily {
    /// `sets[k]` is `I_{-k}`, in extraction order.
    sets: Vec<Vec<i64>>,
    n_window: usize,
    bits_per_set: usize,
}

impl IndexFamily {
    /// The greedy family: iterate rounds `r = 1, 2, ...`; in round `r`,
    /// each of `n = 0, -1, ..., -(r-1)` in turn appends the largest
    /// not-yet-assigned index lying strictly below both `n` and the
    /// current members of `I_n`. Stops once every window set (the first
    /// `n_window`) holds `bits_per_set` members. Produces
    /// `I_0 = [-1, -2, -4, -7, -11, ...]`, `I_{-1} = [-3, -5, -8, ...]`,
    /// and so on: disjoint, strictly past-reading, and with assignment
    /// depth growing only quadratically.
    pub fn greedy(n_window: usize, bits_per_set: usize) -> Result<Self> {
        if n_window == 0 || bits_per_set == 0 {
            return Err(Error::invalid("greedy family needs n_window >= 1 and bits_per_set >= 1"));
        }
        let rounds = n_window + bits_per_set - 1;
        if rounds > 4096 {
            return Err(Error::invalid(format!(
                "greedy family with {rounds} rounds is too large"
            )));
        }
        let mut sets: Vec<Vec<i64>> = vec![Vec::new(); rounds];
        let mut next_free: i64 = -1;
        for r in 1..=rounds {
            for k in 0..r {
                // The largest unassigned index is the running counter and
                // automatically sits below n = -k and below every current
                // member (members were assigned earlier, hence are larger).
                debug_assert!(next_free < -(k as i64));
                debug_assert!(sets[k].last().map_or(true, |&m| next_free < m));
                sets[k].push(next_free);
                next_free -= 1;
            }
        }
        debug_assert!(sets[..n_window].iter().all(|s| s.len() >= bits_per_set));
        Ok(IndexFamily { sets, n_window, bits_per_set })
    }

    /// Explicit family for custom layouts. Keys are the target indices
    /// `n <= 0`; values are the ordered input lists. Validates that every
    /// input sits strictly below its target, that lists strictly decrease,
    /// and that no index feeds two extractors.
    pub fn from_sets(map: BTreeMap<i64, Vec<i64>>) -> Result<Self> {
        if map.is_empty() {
            return Err(Error::invalid("index family needs at least one set"));
        }
        let max_offset = map.keys().map(|n| n.unsigned_abs() as usize).max().unwrap();
        for n in map.keys() {
            if *n > 0 {
                return Err(Error::invalid(format!("family index {n} must be <= 0")));
            }
        }
        let mut seen = HashSet::new();
        let mut sets = vec![Vec::new(); max_offset + 1];
        let mut bits_per_set = usize::MAX;
        for (n, members) in map {
            for (j, &m) in members.iter().enumerate() {
                if m >= n {
                    return Err(Error::invalid(format!(
                        "input {m} of I_{n} must lie strictly below {n}"
                    )));
                }
                if j > 0 && m >= members[j - 1] {
                    return Err(Error::invalid(format!("I_{n} must strictly decrease")));
                }
                if !seen.insert(m) {
                    return Err(Error::invalid(format!("index {m} feeds two extractors")));
                }
            }
            bits_per_set = bits_per_set.min(members.len());
            sets[n.unsigned_abs() as usize] = members;
        }
        let n_window = sets.len();
        Ok(IndexFamily { sets, n_window, bits_per_set })
    }

    /// Window size the family was built for.
    pub fn n_window(&self) -> usize {
        self.n_window
    }

    /// Guaranteed members per window set.
    pub fn bits_per_set(&self) -> usize {
        self.bits_per_set
    }

    /// Inputs of `h_n`, empty beyond the assigned horizon.
    pub fn set(&self, n: i64) -> &[i64] {
        if n > 0 {
            return &[];
        }
        let offset = n.unsigned_abs() as usize;
        self.sets.get(offset).map_or(&[], |v| v.as_slice())
    }

    /// Most negative index the family ever references.
    pub fn horizon_index(&self) -> i64 {
        self.sets
            .iter()
            .flat_map(|s| s.iter().copied())
            .min()
            .unwrap_or(0)
            .min(-(self.sets.len() as i64 - 1))
    }

    /// Iterated input levels: level 0 is `I_0`, level `l + 1` collects the
    /// inputs of everything on level `l`. Truncation means deep levels
    /// simply stop growing.
    pub fn levels(&self, depth: usize) -> Vec<BTreeSet<i64>> {
        let mut levels = Vec::with_capacity(depth + 1);
        levels.push(self.set(0).iter().copied().collect::<BTreeSet<i64>>());
        for l in 0..depth {
            let next: BTreeSet<i64> =
                levels[l].iter().flat_map(|&n| self.set(n).iter().copied()).collect();
            levels.push(next);
        }
        levels
    }

    /// Indices in the assigned horizon that no level reaches (the root 0
    /// is excluded — it is the recursion's starting point, not residue).
    pub fn residual(&self, depth: usize) -> BTreeSet<i64> {
        let levels = self.levels(depth);
        let mut residual: BTreeSet<i64> = (self.horizon_index()..=-1).collect();
        for level in &levels {
            for n in level {
                residual.remove(n);
            }
        }
        residual
    }
}

/// Exact structural checks on an index family.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FamilyCheckReport {
    /// No index feeds two extractors.
    pub sets_disjoint: bool,
    /// Every input sits strictly below its target.
    pub inputs_below_target: bool,
    /// Level `l` only contains indices `<= -(l + 1)`.
    pub level_depth_bound: bool,
    /// Levels never overlap.
    pub levels_disjoint: bool,
    /// The residual set is closed: inputs of residual indices are residual.
    pub residual_closed: bool,
    pub pass: bool,
}

/// Verify the family structure exactly, to the requested level depth.
pub fn check_family(family: &IndexFamily, depth: usize) -> FamilyCheckReport {
    let mut seen = HashSet::new();
    let mut sets_disjoint = true;
    let mut inputs_below_target = true;
    for (k, set) in family.sets.iter().enumerate() {
        let n = -(k as i64);
        for &m in set {
            if m >= n {
                inputs_below_target = false;
            }
            if !seen.insert(m) {
                sets_disjoint = false;
            }
        }
    }
    let levels = family.levels(depth);
    let mut level_depth_bound = true;
    for (l, level) in levels.iter().enumerate() {
        if level.iter().any(|&n| n > -(l as i64 + 1)) {
            level_depth_bound = false;
        }
    }
    let mut levels_disjoint = true;
    let mut union: BTreeSet<i64> = BTreeSet::new();
    for level in &levels {
        for &n in level {
            if !union.insert(n) {
                levels_disjoint = false;
            }
        }
    }
    let residual = family.residual(depth);
    let residual_closed = residual
        .iter()
        .all(|&m| family.set(m).iter().all(|i| residual.contains(i)));
    let pass = sets_disjoint
        && inputs_below_target
        && level_depth_bound
        && levels_disjoint
        && residual_closed;
    FamilyCheckReport {
        sets_disjoint,
        inputs_below_target,
        level_depth_bound,
        levels_disjoint,
        residual_closed,
        pass,
    }
}

/// Outcome of one extractor run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Plus,
    Minus,
    Undecided,
}

impl Decision {
    /// +1, -1, or 0 for undecided.
    pub fn as_i8(self) -> i8 {
        match self {
            Decision::Plus => 1,
            Decision::Minus => -1,
            Decision::Undecided => 0,
        }
    }
}

/// Exact state of the interval extractor after consuming its bits.
#[derive(Debug, Clone)]
pub struct ExtractorState {
    low: BigRational,
    high: BigRational,
    bits_consumed: usize,
    decision: Decision,
}

impl ExtractorState {
    pub fn low(&self) -> &BigRational {
        &self.low
    }

    pub fn high(&self) -> &BigRational {
        &self.high
    }

    pub fn width(&self) -> BigRational {
        &self.high - &self.low
    }

    pub fn bits_consumed(&self) -> usize {
        self.bits_consumed
    }

    pub fn decision(&self) -> Decision {
        self.decision
    }
}

/// Run the interval extractor: starting from `[0, 1)`, bit `i` replaces
/// the interval with its left part of relative width `p_i` on `+1` and
/// the complementary right part on `-1`. The output is `+1` as soon as
/// the interval fits inside `[0, 1/2)`, `-1` inside `[1/2, 1)`, and
/// undecided if the bits run out first. Consumes only as many bits as the
/// decision needs.
pub fn extract_fair_bit(bits: &[i8], probs: &[BigRational]) -> Result<ExtractorState> {
    if bits.len() != probs.len() {
        return Err(Error::invalid(format!(
            "got {} bits but {} probabilities",
            bits.len(),
            probs.len()
        )));
    }
    let half = one_half();
    let mut low = BigRational::zero();
    let mut high = BigRational::one();
    let mut bits_consumed = 0;
    let mut decision = Decision::Undecided;
    for (&bit, p) in bits.iter().zip(probs) {
        check_probability(p)?;
        if bit != 1 && bit != -1 {
            return Err(Error::invalid(format!("bits must be +1 or -1, got {bit}")));
        }
        let cut = &low + p * (&high - &low);
        if bit == 1 {
            high = cut;
        } else {
            low = cut;
        }
        bits_consumed += 1;
        if high <= half {
            decision = Decision::Plus;
            break;
        }
        if low >= half {
            decision = Decision::Minus;
            break;
        }
    }
    Ok(ExtractorState { low, high, bits_consumed, decision })
}

/// Exact output distribution of one extractor under independent input
/// bits with the given probabilities: `(P[+1], P[-1], P[undecided])`.
/// Runs in linear time by tracking only the single interval that
/// straddles 1/2 — everything to its left has decided `+1` (total mass
/// `low`), everything to its right `-1`.
pub fn extractor_marginals(
    probs: &[BigRational],
) -> Result<(BigRational, BigRational, BigRational)> {
    let half = one_half();
    let mut low = BigRational::zero();
    let mut high = BigRational::one();
    for p in probs {
        check_probability(p)?;
        let cut = &low + p * (&high - &low);
        if cut > half {
            high = cut;
        } else if cut < half {
            low = cut;
        } else {
            // The cut hits 1/2 exactly: no straddler remains, every
            // deeper interval is decided.
            low = half.clone();
            high = half.clone();
            break;
        }
    }
    let minus = &BigRational::one() - &high;
    let undecided = &high - &low;
    Ok((low, minus, undecided))
}

/// One scrambled position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScrambleEntry {
    /// Target index `n`.
    pub n: i64,
    /// The source bit at `n`.
    pub eps: i8,
    /// Extractor output over `(eps_i)_{i in I_n}` (0 when undecided).
    pub h: i8,
    /// Scrambled bit `h * eps` (0 when undecided).
    pub product: i8,
    /// Bits the extractor consumed.
    pub bits_consumed: usize,
}

/// A scrambled window.
#[derive(Debug, Clone)]
pub struct ScrambledRecord {
    pub entries: Vec<ScrambleEntry>,
}

/// Scramble a fully specified bit assignment over the window
/// `n = 0, -1, ..., -(window - 1)`. The map must assign every referenced
/// index; targets whose extractor runs out of bits come back undecided.
pub fn scramble_assignment(
    law: &BiasedBitLaw,
    family: &IndexFamily,
    window: usize,
    eps: &BTreeMap<i64, i8>,
) -> Result<ScrambledRecord> {
    if window == 0 || window > family.n_window() {
        return Err(Error::invalid(format!(
            "window {window} outside the family's range 1..={}",
            family.n_window()
        )));
    }
    let mut entries = Vec::with_capacity(window);
    for k in 0..window {
        let n = -(k as i64);
        let inputs = family.set(n);
        let mut bits = Vec::with_capacity(inputs.len());
        let mut probs = Vec::with_capacity(inputs.len());
        for &i in inputs {
            let bit = *eps
                .get(&i)
                .ok_or_else(|| Error::invalid(format!("assignment missing bit {i}")))?;
            bits.push(bit);
            probs.push(law.p(i)?);
        }
        let state = extract_fair_bit(&bits, &probs)?;
        let eps_n = *eps
            .get(&n)
            .ok_or_else(|| Error::invalid(format!("assignment missing bit {n}")))?;
        if eps_n != 1 && eps_n != -1 {
            return Err(Error::invalid(format!("bits must be +1 or -1, got {eps_n}")));
        }
        let h = state.decision().as_i8();
        entries.push(ScrambleEntry {
            n,
            eps: eps_n,
            h,
            product: h * eps_n,
            bits_consumed: state.bits_consumed(),
        });
    }
    Ok(ScrambledRecord { entries })
}

/// Every index a window of extractors can read: the window bits
/// themselves plus each target's inputs (truncated to `bits_per_set`).
pub fn referenced_indices(
    family: &IndexFamily,
    window: usize,
    bits_per_set: usize,
) -> Vec<i64> {
    let mut referenced = BTreeSet::new();
    for k in 0..window {
        let n = -(k as i64);
        referenced.insert(n);
        for &i in family.set(n).iter().take(bits_per_set) {
            referenced.insert(i);
        }
    }
    referenced.into_iter().collect()
}

/// Monte Carlo frequencies of the scrambled bits for one target index.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ScrambleFrequency {
    pub n: i64,
    pub plus: usize,
    pub minus: usize,
    pub undecided: usize,
}

/// Sampled scrambling summary.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MonteCarloScramble {
    pub n_windows: usize,
    pub frequencies: Vec<ScrambleFrequency>,
}

/// Scramble `n_windows` independently sampled windows and tally the
/// outcomes per target index.
pub fn scramble_monte_carlo(
    law: &BiasedBitLaw,
    family: &IndexFamily,
    window: usize,
    n_windows: usize,
    seed: SeededRng,
) -> Result<MonteCarloScramble> {
    if n_windows == 0 {
        return Err(Error::insufficient("need at least one sampled window"));
    }
    let referenced = referenced_indices(family, window, usize::MAX);
    let probs: Vec<(i64, f64)> = referenced
        .iter()
        .map(|&i| Ok((i, law.p_f64(i)?)))
        .collect::<Result<_>>()?;
    let mut rng = seed.rng();
    let mut tallies: Vec<ScrambleFrequency> = (0..window)
        .map(|k| ScrambleFrequency { n: -(k as i64), plus: 0, minus: 0, undecided: 0 })
        .collect();
    for _ in 0..n_windows {
        let eps: BTreeMap<i64, i8> = probs
            .iter()
            .map(|&(i, p)| (i, if rng.gen::<f64>() < p { 1i8 } else { -1i8 }))
            .collect();
        let record = scramble_assignment(law, family, window, &eps)?;
        for (entry, tally) in record.entries.iter().zip(tallies.iter_mut()) {
            match entry.product {
                1 => tally.plus += 1,
                -1 => tally.minus += 1,
                _ => tally.undecided += 1,
            }
        }
    }
    Ok(MonteCarloScramble { n_windows, frequencies: tallies })
}

/// Exact marginal of one scrambled position.
#[derive(Debug, Clone)]
pub struct JointMarginal {
    pub n: i64,
    pub plus: BigRational,
    pub minus: BigRational,
    pub undecided: BigRational,
}

/// Exact joint law of a scrambled window, as a table from outcome vectors
/// (entries +1 / -1 / 0-for-undecided, ordered `n = 0, -1, ...`) to exact
/// probabilities.
#[derive(Debug, Clone)]
pub struct ExactJointLaw {
    /// Window targets in order.
    pub window: Vec<i64>,
    /// Source bits the enumeration ranged over.
    pub referenced: Vec<i64>,
    /// Joint probability of each outcome vector; values sum to 1 exactly.
    pub table: BTreeMap<Vec<i8>, BigRational>,
    /// Total mass of outcomes with at least one undecided position.
    pub undecided_mass: BigRational,
    /// Exact per-position marginals.
    pub marginals: Vec<JointMarginal>,
}

impl ExactJointLaw {
    /// Exact probability of one outcome vector (zero if absent).
    pub fn probability(&self, outcome: &[i8]) -> BigRational {
        self.table.get(outcome).cloned().unwrap_or_else(BigRational::zero)
    }
}

/// Enumerate the exact joint law of `(h_n * eps_n)` over the window
/// `n = 0, ..., -(window-1)`, with each extractor truncated to its first
/// `bits_per_set` inputs. Refuses with [`Error::BudgetExceeded`] when the
/// referenced bits outnumber [`ENUMERATION_BUDGET_BITS`].
pub fn exact_joint_law(
    law: &BiasedBitLaw,
    family: &IndexFamily,
    window: usize,
    bits_per_set: usize,
) -> Result<ExactJointLaw> {
    if window == 0 || window > family.n_window() {
        return Err(Error::invalid(format!(
            "window {window} outside the family's range 1..={}",
            family.n_window()
        )));
    }
    let referenced = referenced_indices(family, window, bits_per_set);
    if referenced.len() > ENUMERATION_BUDGET_BITS {
        return Err(Error::BudgetExceeded {
            bits: referenced.len(),
            budget: ENUMERATION_BUDGET_BITS,
        });
    }
    let slot_of: BTreeMap<i64, usize> =
        referenced.iter().enumerate().map(|(j, &i)| (i, j)).collect();
    // Per-slot (P[+1], P[-1]) and per-target truncated input slot lists.
    let mut slot_probs = Vec::with_capacity(referenced.len());
    for &i in &referenced {
        let p = law.p(i)?;
        check_probability(&p)?;
        let q = &BigRational::one() - &p;
        slot_probs.push((p, q));
    }
    let targets: Vec<(usize, Vec<usize>, Vec<BigRational>)> = (0..window)
        .map(|k| {
            let n = -(k as i64);
            let inputs: Vec<usize> = family
                .set(n)
                .iter()
                .take(bits_per_set)
                .map(|i| slot_of[i])
                .collect();
            let probs: Vec<BigRational> =
                inputs.iter().map(|&j| slot_probs[j].0.clone()).collect();
            (slot_of[&n], inputs, probs)
        })
        .collect();
    let mut table: BTreeMap<Vec<i8>, BigRational> = BTreeMap::new();
    let mut marginals: Vec<JointMarginal> = (0..window)
        .map(|k| JointMarginal {
            n: -(k as i64),
            plus: BigRational::zero(),
            minus: BigRational::zero(),
            undecided: BigRational::zero(),
        })
        .collect();
    let mut undecided_mass = BigRational::zero();
    let n_bits = referenced.len();
    let mut bits = vec![-1i8; n_bits];
    for mask in 0u64..(1u64 << n_bits) {
        let mut probability = BigRational::one();
        for (j, bit) in bits.iter_mut().enumerate() {
            if mask >> j & 1 == 1 {
                *bit = 1;
                probability *= &slot_probs[j].0;
            } else {
                *bit = -1;
                probability *= &slot_probs[j].1;
            }
        }
        let mut outcome = Vec::with_capacity(window);
        for (eps_slot, input_slots, probs) in &targets {
            let input_bits: Vec<i8> = input_slots.iter().map(|&j| bits[j]).collect();
            let state = extract_fair_bit(&input_bits, probs)?;
            outcome.push(state.decision().as_i8() * bits[*eps_slot]);
        }
        for (value, marginal) in outcome.iter().zip(marginals.iter_mut()) {
            match value {
                1 => marginal.plus += &probability,
                -1 => marginal.minus += &probability,
                _ => marginal.undecided += &probability,
            }
        }
        if outcome.iter().any(|&v| v == 0) {
            undecided_mass += &probability;
        }
        *table.entry(outcome).or_insert_with(BigRational::zero) += probability;
    }
    Ok(ExactJointLaw {
        window: (0..window).map(|k| -(k as i64)).collect(),
        referenced,
        table,
        undecided_mass,
        marginals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fair() -> BigRational {
        one_half()
    }

    fn seven_tenths() -> BigRational {
        rational(7, 10)
    }

    #[test]
    fn law_validation_and_addressing() {
        assert!(BiasedBitLaw::constant(BigRational::zero()).is_err());
        assert!(BiasedBitLaw::constant(BigRational::one()).is_err());
        let periodic =
            BiasedBitLaw::periodic(vec![rational(1, 3), rational(2, 3)]).unwrap();
        assert_eq!(periodic.p(0).unwrap(), rational(1, 3));
        assert_eq!(periodic.p(-1).unwrap(), rational(2, 3));
        assert_eq!(periodic.p(-2).unwrap(), rational(1, 3));
        assert!(periodic.p(1).is_err(), "positive indices are out of range");
        let table = BiasedBitLaw::table(vec![fair(), seven_tenths()]).unwrap();
        assert_eq!(table.p(-1).unwrap(), seven_tenths());
        assert!(table.p(-2).is_err(), "beyond the table horizon");
    }

    #[test]
    fn extractor_fair_bit_passes_through() {
        let state = extract_fair_bit(&[1], &[fair()]).unwrap();
        assert_eq!(state.decision(), Decision::Plus);
        assert_eq!(state.bits_consumed(), 1);
        assert_eq!(*state.high(), one_half());
        let state = extract_fair_bit(&[-1], &[fair()]).unwrap();
        assert_eq!(state.decision(), Decision::Minus);
        assert_eq!(*state.low(), one_half());
    }

    #[test]
    fn extractor_frozen_seven_tenths_cases() {
        let p2 = vec![seven_tenths(), seven_tenths()];
        // One +1: interval [0, 7/10) still straddles 1/2.
        let state = extract_fair_bit(&[1], &p2[..1].to_vec()).unwrap();
        assert_eq!(state.decision(), Decision::Undecided);
        assert_eq!(*state.high(), seven_tenths());
        // +1, +1: [0, 49/100) decides +1.
        let state = extract_fair_bit(&[1, 1], &p2).unwrap();
        assert_eq!(state.decision(), Decision::Plus);
        assert_eq!(*state.high(), rational(49, 100));
        assert_eq!(state.bits_consumed(), 2);
        // +1, -1: [49/100, 7/10) straddles: undecided after both bits.
        let state = extract_fair_bit(&[1, -1], &p2).unwrap();
        assert_eq!(state.decision(), Decision::Undecided);
        assert_eq!(*state.low(), rational(49, 100));
        assert_eq!(*state.high(), seven_tenths());
        // -1 alone: [7/10, 1) decides -1 without touching the second bit.
        let state = extract_fair_bit(&[-1, 1], &p2).unwrap();
        assert_eq!(state.decision(), Decision::Minus);
        assert_eq!(state.bits_consumed(), 1);
    }

    #[test]
    fn extractor_width_is_exact_product() {
        // Chosen so the interval straddles 1/2 after every bit: no early
        // decision, all three bits consumed.
        let probs = vec![rational(4, 5), rational(3, 7), rational(9, 11)];
        let state = extract_fair_bit(&[1, -1, 1], &probs).unwrap();
        assert_eq!(state.decision(), Decision::Undecided);
        assert_eq!(state.bits_consumed(), 3);
        // Widths multiply: 4/5 * 4/7 * 9/11 = 144/385.
        let expect = rational(144, 385);
        assert_eq!(state.width(), expect);
    }

    #[test]
    fn extractor_marginals_frozen_values() {
        // Constant 7/10 with two bits: P[+1] = 49/100, P[-1] = 3/10,
        // undecided 21/100.
        let (plus, minus, undecided) =
            extractor_marginals(&[seven_tenths(), seven_tenths()]).unwrap();
        assert_eq!(plus, rational(49, 100));
        assert_eq!(minus, rational(3, 10));
        assert_eq!(undecided, rational(21, 100));
        // A single fair bit decides everything.
        let (plus, minus, undecided) = extractor_marginals(&[fair()]).unwrap();
        assert_eq!(plus, one_half());
        assert_eq!(minus, one_half());
        assert!(undecided.is_zero());
    }

    #[test]
    fn undecided_mass_bound_at_depth_64() {
        // Constant 9/10, 64 bits: the undecided mass is at most
        // (9/10)^64 < 3/2500 = 1.2e-3 — checked as exact rationals.
        let probs = vec![rational(9, 10); 64];
        let (_, _, undecided) = extractor_marginals(&probs).unwrap();
        let mut bound = BigRational::one();
        for _ in 0..64 {
            bound *= rational(9, 10);
        }
        assert!(undecided <= bound);
        assert!(bound < rational(3, 2500));
    }

    #[test]
    fn greedy_family_frozen_structure() {
        let family = IndexFamily::greedy(4, 3).unwrap();
        assert_eq!(family.set(0), [-1, -2, -4, -7, -11, -16]);
        assert_eq!(family.set(-1), [-3, -5, -8, -12, -17]);
        assert_eq!(family.set(-2), [-6, -9, -13, -18]);
        assert_eq!(family.set(-3), [-10, -14, -19]);
        // The acceptance-size family keeps the same leading pattern.
        let large = IndexFamily::greedy(64, 8).unwrap();
        assert_eq!(&large.set(0)[..8], [-1, -2, -4, -7, -11, -16, -22, -29]);
    }

    #[test]
    fn greedy_family_passes_structural_checks() {
        let family = IndexFamily::greedy(8, 4).unwrap();
        let report = check_family(&family, 3);
        assert!(report.pass, "{report:?}");
        // Spot-check a level-1 membership: -1 in I_0 and -3 in I_{-1}.
        let levels = family.levels(1);
        assert!(levels[0].contains(&-1));
        assert!(levels[1].contains(&-3));
    }

    #[test]
    fn from_sets_validation() {
        let mut overlapping = BTreeMap::new();
        overlapping.insert(0, vec![-1, -2]);
        overlapping.insert(-1, vec![-2]);
        assert!(IndexFamily::from_sets(overlapping).is_err(), "-2 feeds two extractors");
        let mut forward = BTreeMap::new();
        forward.insert(-1, vec![0]);
        assert!(IndexFamily::from_sets(forward).is_err(), "inputs must be in the past");
        let mut fine = BTreeMap::new();
        fine.insert(0, vec![-2]);
        fine.insert(-1, vec![-3]);
        let family = IndexFamily::from_sets(fine).unwrap();
        assert_eq!(family.set(0), [-2]);
        assert_eq!(family.set(-1), [-3]);
    }

    #[test]
    fn scramble_reads_only_its_own_inputs() {
        // Exhaustively flip bits outside I_n and check h_n never moves.
        let family = IndexFamily::greedy(2, 2).unwrap();
        let law = BiasedBitLaw::constant(rational(3, 5)).unwrap();
        let referenced = referenced_indices(&family, 2, usize::MAX);
        let n_bits = referenced.len();
        for mask in 0u32..(1 << n_bits) {
            let eps: BTreeMap<i64, i8> = referenced
                .iter()
                .enumerate()
                .map(|(j, &i)| (i, if mask >> j & 1 == 1 { 1i8 } else { -1i8 }))
                .collect();
            let base = scramble_assignment(&law, &family, 2, &eps).unwrap();
            for &flip_index in &referenced {
                let mut mutated = eps.clone();
                mutated.insert(flip_index, -eps[&flip_index]);
                let changed = scramble_assignment(&law, &family, 2, &mutated).unwrap();
                for (a, b) in base.entries.iter().zip(changed.entries.iter()) {
                    if !family.set(a.n).contains(&flip_index) {
                        assert_eq!(a.h, b.h, "h_{} moved on a foreign bit {flip_index}", a.n);
                    }
                }
            }
        }
    }

    #[test]
    fn exact_joint_law_fair_extractor_makes_biased_bit_fair() {
        // I_0 = one fair bit, eps_0 biased at 3/5: the scrambled bit is
        // exactly fair with no undecided mass.
        let mut sets = BTreeMap::new();
        sets.insert(0, vec![-1]);
        let family = IndexFamily::from_sets(sets).unwrap();
        let law = BiasedBitLaw::table(vec![rational(3, 5), fair()]).unwrap();
        let joint = exact_joint_law(&law, &family, 1, 1).unwrap();
        assert!(joint.undecided_mass.is_zero());
        assert_eq!(joint.probability(&[1]), one_half());
        assert_eq!(joint.probability(&[-1]), one_half());
    }

    #[test]
    fn exact_joint_law_frozen_biased_extractor() {
        // I_0 = two bits at 7/10, eps_0 fair: undecided mass 21/100 and
        // the decided mass splits exactly evenly: P[+1] = 79/200.
        let mut sets = BTreeMap::new();
        sets.insert(0, vec![-1, -2]);
        let family = IndexFamily::from_sets(sets).unwrap();
        let law = BiasedBitLaw::table(vec![fair(), seven_tenths(), seven_tenths()]).unwrap();
        let joint = exact_joint_law(&law, &family, 1, 2).unwrap();
        assert_eq!(joint.undecided_mass, rational(21, 100));
        assert_eq!(joint.probability(&[1]), rational(79, 200));
        assert_eq!(joint.probability(&[-1]), rational(79, 200));
        assert_eq!(joint.probability(&[0]), rational(21, 100));
        let total: BigRational =
            joint.table.values().fold(BigRational::zero(), |a, v| a + v);
        assert_eq!(total, BigRational::one());
    }

    #[test]
    fn exact_joint_law_factorizes_on_disjoint_inputs() {
        // Disjoint referenced sets {0, -2} and {-1, -3} with a fair law:
        // all four decided outcomes carry exactly 1/4.
        let mut sets = BTreeMap::new();
        sets.insert(0, vec![-2]);
        sets.insert(-1, vec![-3]);
        let family = IndexFamily::from_sets(sets).unwrap();
        let law = BiasedBitLaw::constant(fair()).unwrap();
        let joint = exact_joint_law(&law, &family, 2, 1).unwrap();
        assert!(joint.undecided_mass.is_zero());
        for a in [-1i8, 1] {
            for b in [-1i8, 1] {
                assert_eq!(joint.probability(&[a, b]), rational(1, 4));
            }
        }
    }

    #[test]
    fn exact_joint_law_respects_budget() {
        let family = IndexFamily::greedy(8, 8).unwrap();
        let law = BiasedBitLaw::constant(fair()).unwrap();
        let err = exact_joint_law(&law, &family, 8, 8).unwrap_err();
        match err {
            Error::BudgetExceeded { bits, budget } => {
                assert!(bits > budget);
                assert_eq!(budget, ENUMERATION_BUDGET_BITS);
            }
            other => panic!("expected budget refusal, got {other}"),
        }
    }

    #[test]
    fn diffuse_check_frozen_sums() {
        let threshold = rational(1, 1_000_000);
        // Constant 7/10 over 101 indices: sum = 101 * 3/10 = 303/10.
        let law = BiasedBitLaw::constant(seven_tenths()).unwrap();
        let report = check_diffuse(&law, 100, &threshold).unwrap();
        assert_eq!(report.partial_sum, rational(303, 10));
        assert!(!report.flagged_convergent);
        // Geometric table p_{-k} = 2^{-k-2}: summable, flagged.
        let table: Vec<BigRational> =
            (0..101).map(|k| BigRational::new(BigInt::one(), BigInt::from(2) << (k + 1))).collect();
        let law = BiasedBitLaw::table(table).unwrap();
        let report = check_diffuse(&law, 100, &threshold).unwrap();
        assert!(report.partial_sum < one_half());
        assert!(report.flagged_convergent);
    }

    #[test]
    fn monte_carlo_matches_fair_law() {
        let family = IndexFamily::greedy(2, 2).unwrap();
        let law = BiasedBitLaw::constant(fair()).unwrap();
        let mc =
            scramble_monte_carlo(&law, &family, 2, 20_000, SeededRng::new(9001, 0)).unwrap();
        for freq in &mc.frequencies {
            let decided = (freq.plus + freq.minus) as f64;
            assert!(decided > 0.0);
            let ratio = freq.plus as f64 / decided;
            assert!(
                (ratio - 0.5).abs() < 0.02,
                "n = {}: plus ratio {ratio} strays from 1/2",
                freq.n
            );
        }
        let again =
            scramble_monte_carlo(&law, &family, 2, 20_000, SeededRng::new(9001, 0)).unwrap();
        assert_eq!(again.frequencies[0].plus, mc.frequencies[0].plus);
    }
}
