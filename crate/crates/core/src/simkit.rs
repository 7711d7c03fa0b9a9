//! End-to-end identification over the wiretap pair and Monte Carlo error
//! estimation.
//!
//! A transmission sends the coloring number `j` with the transmission code
//! and the color `T_i(j)` with the wiretap code. The receiver decodes both
//! blocks and accepts the tested identity iff the decoded color matches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{PoissonChannel, WiretapChannelPair, DEFAULT_TAIL_TOL};
use crate::error::{Error, Result};
use crate::idcode::{Color, ColoringNumber, Identity, SchemeSelector, TagScheme};
use crate::phycode::{CodeBudget, TransmissionCodebook, WiretapCodebook};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// SplitMix64 finalizer applied to `master + (index + 1) * golden`.
///
/// Distinct `(master, index)` pairs map to distinct seeds for all practical
/// purposes, and trial `t` of a run always receives the same seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Wilson score interval at 95% for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

/// Counts seen on one block structure: transmission part, then wiretap part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub transmission: Vec<u64>,
    pub wiretap: Vec<u64>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.transmission.len() + self.wiretap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transmission {
    pub bob: Observation,
    pub eve: Observation,
    pub coloring: ColoringNumber,
    pub color: Color,
}

/// Decoded coloring-number index and color, and the resulting decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub decoded_j: usize,
    pub decoded_color: usize,
    pub verdict: bool,
    pub truth: bool,
}

/// Scheme, the two codes and the channel pair.
///
/// Coloring numbers map to transmission messages `j1 * q2 + j2`, colors map
/// to the wiretap bin with the same value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationSystem {
    scheme: TagScheme,
    tx_code: TransmissionCodebook,
    wt_code: WiretapCodebook,
    pair: WiretapChannelPair,
}

/// Ideal and realized sizes of a system built from a budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sizing {
    pub n: usize,
    pub wiretap_length: usize,
    pub epsilon: f64,
    pub capacity: f64,
    pub ideal_transmission_log2: f64,
    pub ideal_wiretap_log2: f64,
    pub outer_bits: u32,
    pub inner_bits: u32,
    pub field_capped: bool,
    pub m_prime: u64,
    pub m_dprime: u64,
    pub bin_size: usize,
    pub code_cap: u64,
}

/// Everything needed to build a system from a budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub budget: CodeBudget,
    pub pair: WiretapChannelPair,
    pub peak: f64,
    pub bin_size: usize,
    pub code_cap: u64,
    pub selector: SchemeSelector,
    pub seed: u64,
}

impl IdentificationSystem {
    pub fn new(
        scheme: TagScheme,
        tx_code: TransmissionCodebook,
        wt_code: WiretapCodebook,
        pair: WiretapChannelPair,
    ) -> Result<Self> {
        if (tx_code.message_count() as u64) < scheme.coloring_count() {
            return Err(Error::infeasible(format!(
                "transmission code holds {} messages, the scheme has {} coloring numbers",
                tx_code.message_count(),
                scheme.coloring_count()
            )));
        }
        if (wt_code.message_count() as u64) < scheme.q2() {
            return Err(Error::infeasible(format!(
                "wiretap code holds {} secure messages, the scheme has {} colors",
                wt_code.message_count(),
                scheme.q2()
            )));
        }
        Ok(IdentificationSystem {
            scheme,
            tx_code,
            wt_code,
            pair,
        })
    }

    /// Selects the scheme from the budget and sizes both codes to it:
    /// `M' = q1 q2` and `M'' = q2`, each refused above `code_cap`.
    pub fn build(spec: &SystemSpec) -> Result<(Self, Sizing)> {
        let choice = spec.selector.select(&spec.budget)?;
        let scheme = choice.scheme;
        let m_prime = scheme.coloring_count();
        let m_dprime = scheme.q2();
        for (name, size) in [("transmission", m_prime), ("wiretap", m_dprime)] {
            if size > spec.code_cap {
                return Err(Error::infeasible(format!(
                    "{name} code needs {size} messages, cap is {}",
                    spec.code_cap
                )));
            }
        }
        let n = spec.budget.n();
        let n2 = spec.budget.wiretap_length();
        let tx = TransmissionCodebook::random(n, m_prime, spec.peak, derive_seed(spec.seed, 0x7478))?;
        let wt = WiretapCodebook::random(n2, m_dprime, spec.bin_size, spec.peak, derive_seed(spec.seed, 0x7774))?;
        let sizing = Sizing {
            n,
            wiretap_length: n2,
            epsilon: spec.budget.epsilon(),
            capacity: spec.budget.capacity(),
            ideal_transmission_log2: spec.budget.ideal_transmission_log2(),
            ideal_wiretap_log2: spec.budget.ideal_wiretap_log2(),
            outer_bits: choice.outer_bits,
            inner_bits: choice.inner_bits,
            field_capped: choice.capped,
            m_prime,
            m_dprime,
            bin_size: spec.bin_size,
            code_cap: spec.code_cap,
        };
        Ok((Self::new(scheme, tx, wt, spec.pair)?, sizing))
    }

    pub fn scheme(&self) -> &TagScheme {
        &self.scheme
    }
    pub fn transmission_code(&self) -> &TransmissionCodebook {
        &self.tx_code
    }
    pub fn wiretap_code(&self) -> &WiretapCodebook {
        &self.wt_code
    }
    pub fn pair(&self) -> &WiretapChannelPair {
        &self.pair
    }

    /// `n + n''`.
    pub fn block_length(&self) -> usize {
        self.tx_code.block_length() + self.wt_code.block_length()
    }

    /// Draws `j`, encodes `(j, T_i(j))` and passes it through both channels.
    /// Eve's counts are Bob's plus independent `Poisson(lambda_E - lambda_B)`
    /// noise.
    pub fn send(&self, identity: &Identity, seed: u64) -> Transmission {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coloring = ColoringNumber::random(&self.scheme, &mut rng);
        self.send_coloring(identity, coloring, &mut rng)
    }

    fn send_coloring<R: Rng + ?Sized>(
        &self,
        identity: &Identity,
        coloring: ColoringNumber,
        rng: &mut R,
    ) -> Transmission {
        let color = self.scheme.tag(identity, coloring);
        let j = self.scheme.coloring_index(coloring) as usize;
        let u = self.tx_code.codeword(j).expect("every coloring number has a codeword");
        let w = self
            .wt_code
            .encode_with(color.value() as usize, rng)
            .expect("every color has a bin");
        let main = self.pair.main();
        let bob = Observation {
            transmission: main.sample_with(&u, rng),
            wiretap: main.sample_with(&w, rng),
        };
        let eve = Observation {
            transmission: self.pair.degrade(&bob.transmission, rng),
            wiretap: self.pair.degrade(&bob.wiretap, rng),
        };
        Transmission {
            bob,
            eve,
            coloring,
            color,
        }
    }

    /// ML decoding of both blocks.
    pub fn decode(&self, obs: &Observation, channel: &PoissonChannel) -> Result<(usize, usize)> {
        let j = self.tx_code.ml_decode(&obs.transmission, channel)?;
        let c = self.wt_code.decode(&obs.wiretap, channel)?;
        Ok((j, c))
    }

    /// Decision for already decoded indices. Indices outside the scheme's
    /// coloring or color range are rejected.
    pub fn verdict_from_decoded(&self, tested: &Identity, j: usize, color: usize) -> bool {
        let Some(coloring) = self.scheme.coloring_from_index(j as u64) else {
            return false;
        };
        let Ok(color) = Color::new(&self.scheme, color as u64) else {
            return false;
        };
        self.scheme.verify(tested, coloring, color)
    }

    /// Decode-then-verify for one tested identity.
    pub fn receive_and_verify(&self, tested: &Identity, obs: &Observation, channel: &PoissonChannel) -> Result<bool> {
        let (j, c) = self.decode(obs, channel)?;
        Ok(self.verdict_from_decoded(tested, j, c))
    }

    fn draw_pair(&self, mode: &TypeTwoMode, rng: &mut ChaCha8Rng) -> (Identity, Identity) {
        match mode {
            TypeTwoMode::Uniform => {
                let sent = Identity::random(&self.scheme, rng);
                let tested = loop {
                    let c = Identity::random(&self.scheme, rng);
                    if c != sent {
                        break c;
                    }
                };
                (sent, tested)
            }
            TypeTwoMode::Fixed { sent, tested } => (sent.clone(), tested.clone()),
        }
    }

    fn check_mode(&self, mode: &TypeTwoMode) -> Result<()> {
        if let TypeTwoMode::Fixed { sent, tested } = mode {
            for id in [sent, tested] {
                Identity::new(&self.scheme, id.coefficients().to_vec())?;
            }
            if sent == tested {
                return Err(Error::domain("fixed pair needs two distinct identities"));
            }
        }
        Ok(())
    }

    /// Runs one paired trial: both the sent and a different identity are
    /// tested on the same observation, by Bob and by the attacker.
    fn trial(&self, master: u64, t: u64, mode: &TypeTwoMode, attacker: &dyn Attacker) -> Tally {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, t));
        let (sent, other) = self.draw_pair(mode, &mut rng);
        let tx = self.send_coloring(&sent, ColoringNumber::random(&self.scheme, &mut rng), &mut rng);
        let main = self.pair.main();
        let (j, c) = self
            .decode(&tx.bob, main)
            .expect("observation matches the block structure");
        let sent_j = self.scheme.coloring_index(tx.coloring) as usize;
        let decode_error = j != sent_j || c != tx.color.value() as usize;
        Tally {
            type1: u64::from(!self.verdict_from_decoded(&sent, j, c)),
            type2: u64::from(self.verdict_from_decoded(&other, j, c)),
            decode_errors: u64::from(decode_error),
            eve_type1: u64::from(!attacker.verdict(self, &sent, &tx.eve)),
            eve_type2: u64::from(attacker.verdict(self, &other, &tx.eve)),
        }
    }

    fn run(&self, trials: u64, seed: u64, mode: &TypeTwoMode, attacker: &dyn Attacker) -> Result<Tally> {
        if trials == 0 {
            return Err(Error::domain("need at least one trial"));
        }
        self.check_mode(mode)?;
        Ok((0..trials)
            .into_par_iter()
            .map(|t| self.trial(seed, t, mode, attacker))
            .reduce(Tally::default, Tally::merge))
    }

    /// Type-I and type-II error rates over `trials` paired trials.
    pub fn estimate_errors(&self, trials: u64, seed: u64, mode: &TypeTwoMode) -> Result<SimulationReport> {
        let tally = self.run(trials, seed, mode, &NoAttacker)?;
        Ok(SimulationReport::new(
            self,
            trials,
            seed,
            mode,
            tally.type1,
            tally.type2,
            tally.decode_errors,
        ))
    }

    /// Runs Bob and the attacker on the same transmissions and adds the exact
    /// wiretap-block leakage when the enumeration accepts the code.
    pub fn eve_advantage(
        &self,
        trials: u64,
        seed: u64,
        mode: &TypeTwoMode,
        attacker: &dyn Attacker,
    ) -> Result<EveReport> {
        let tally = self.run(trials, seed, mode, attacker)?;
        let bob = SimulationReport::new(self, trials, seed, mode, tally.type1, tally.type2, tally.decode_errors);
        let eve = SimulationReport::new(self, trials, seed, mode, tally.eve_type1, tally.eve_type2, 0);
        let (leakage_bits, leakage_note) = if self.wt_code.enumeration_feasible() {
            match self.wt_code.exact_leakage(&self.pair, DEFAULT_TAIL_TOL) {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            }
        } else {
            (None, Some("wiretap code too large for exact enumeration".to_string()))
        };
        let correct = trials - tally.eve_type1;
        let eve_yes_rate = correct as f64 / trials as f64;
        Ok(EveReport {
            attacker: attacker.name().to_string(),
            eve_yes_rate,
            eve_yes_ci: wilson_interval(correct, trials),
            baseline: self.scheme.collision_bound(),
            advantage: eve_yes_rate - self.scheme.collision_bound(),
            leakage_bits,
            leakage_note,
            bob,
            eve,
        })
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    type1: u64,
    type2: u64,
    decode_errors: u64,
    eve_type1: u64,
    eve_type2: u64,
}

impl Tally {
    fn merge(a: Tally, b: Tally) -> Tally {
        Tally {
            type1: a.type1 + b.type1,
            type2: a.type2 + b.type2,
            decode_errors: a.decode_errors + b.decode_errors,
            eve_type1: a.eve_type1 + b.eve_type1,
            eve_type2: a.eve_type2 + b.eve_type2,
        }
    }
}

/// How the identity tested for type-II errors is chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum TypeTwoMode {
    /// Each trial draws the sent identity and a different tested identity
    /// uniformly.
    Uniform,
    /// The same pair in every trial.
    Fixed { sent: Identity, tested: Identity },
}

/// An eavesdropper's identification rule.
pub trait Attacker: Sync {
    fn name(&self) -> &str;
    fn verdict(&self, system: &IdentificationSystem, tested: &Identity, z: &Observation) -> bool;
}

/// Bob's receiver run on Eve's counts, matched to Eve's channel.
#[derive(Debug, Clone, Copy, Default)]
pub struct SameDecoder;

impl Attacker for SameDecoder {
    fn name(&self) -> &str {
        "decode-then-verify"
    }

    fn verdict(&self, system: &IdentificationSystem, tested: &Identity, z: &Observation) -> bool {
        system
            .receive_and_verify(tested, z, system.pair().eavesdropper())
            .unwrap_or(false)
    }
}

struct NoAttacker;

impl Attacker for NoAttacker {
    fn name(&self) -> &str {
        "none"
    }

    fn verdict(&self, _: &IdentificationSystem, _: &Identity, _: &Observation) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub trials: u64,
    pub type1_errors: u64,
    pub type2_errors: u64,
    pub type1_rate: f64,
    pub type2_rate: f64,
    pub type1_ci: (f64, f64),
    pub type2_ci: (f64, f64),
    /// Trials where Bob got `j` or the color wrong.
    pub decode_errors: u64,
    pub collision_bound: f64,
    pub seed: u64,
    pub mode: TypeTwoMode,
    pub scheme: TagScheme,
    pub m_prime: usize,
    pub m_dprime: usize,
    pub bin_size: usize,
    pub lambda_b: f64,
    pub lambda_e: f64,
    pub peak: f64,
}

impl SimulationReport {
    fn new(
        system: &IdentificationSystem,
        trials: u64,
        seed: u64,
        mode: &TypeTwoMode,
        type1: u64,
        type2: u64,
        decode_errors: u64,
    ) -> Self {
        let n = trials as f64;
        SimulationReport {
            trials,
            type1_errors: type1,
            type2_errors: type2,
            type1_rate: type1 as f64 / n,
            type2_rate: type2 as f64 / n,
            type1_ci: wilson_interval(type1, trials),
            type2_ci: wilson_interval(type2, trials),
            decode_errors,
            collision_bound: system.scheme.collision_bound(),
            seed,
            mode: mode.clone(),
            scheme: system.scheme,
            m_prime: system.tx_code.message_count(),
            m_dprime: system.wt_code.message_count(),
            bin_size: system.wt_code.bin_size(),
            lambda_b: system.pair.main().dark_current(),
            lambda_e: system.pair.eavesdropper().dark_current(),
            peak: system.tx_code.peak(),
        }
    }

    /// Binomial standard deviation of the type-II rate at the collision bound.
    pub fn type2_sigma(&self) -> f64 {
        let p = self.collision_bound.min(1.0);
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EveReport {
    pub attacker: String,
    /// Fraction of trials where Eve accepted the identity actually sent.
    pub eve_yes_rate: f64,
    pub eve_yes_ci: (f64, f64),
    pub baseline: f64,
    pub advantage: f64,
    pub leakage_bits: Option<f64>,
    pub leakage_note: Option<String>,
    pub bob: SimulationReport,
    pub eve: SimulationReport,
}

/// Channel and simulation settings shared by every scaling row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub pair: WiretapChannelPair,
    pub peak: f64,
    pub bin_size: usize,
    pub code_cap: u64,
    pub selector: SchemeSelector,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub epsilon: f64,
    pub outer_bits: Option<u32>,
    pub scheme: Option<TagScheme>,
    /// Decimal digits of `N`.
    pub identity_digits: Option<usize>,
    pub log2_log2: Option<f64>,
    pub log2_log2_per_n: Option<f64>,
    pub log2_log2_per_outer_bit: Option<f64>,
    pub m_prime: Option<u64>,
    pub m_dprime: Option<u64>,
    /// The ideal sizes exceeded a field or code cap.
    pub capped: bool,
    pub feasible: bool,
    pub note: Option<String>,
    pub report: Option<SimulationReport>,
}

/// One row per budget; rows that cannot be built are flagged, not fatal.
pub fn scaling_study(budgets: &[CodeBudget], params: &ScalingParams, seed: u64) -> Vec<ScalingRow> {
    budgets
        .iter()
        .enumerate()
        .map(|(i, budget)| scaling_row(budget, params, derive_seed(seed, i as u64)))
        .collect()
}

fn scaling_row(budget: &CodeBudget, params: &ScalingParams, seed: u64) -> ScalingRow {
    let mut row = ScalingRow {
        n: budget.n(),
        epsilon: budget.epsilon(),
        outer_bits: None,
        scheme: None,
        identity_digits: None,
        log2_log2: None,
        log2_log2_per_n: None,
        log2_log2_per_outer_bit: None,
        m_prime: None,
        m_dprime: None,
        capped: false,
        feasible: false,
        note: None,
        report: None,
    };
    let choice = match params.selector.select(budget) {
        Ok(c) => c,
        Err(e) => {
            row.note = Some(e.to_string());
            return row;
        }
    };
    let s = choice.scheme;
    let ll = s.log2_log2();
    row.outer_bits = Some(choice.outer_bits);
    row.scheme = Some(s);
    row.identity_digits = Some(s.identity_count().to_string().len());
    row.log2_log2 = Some(ll);
    row.log2_log2_per_n = Some(ll / budget.n() as f64);
    row.log2_log2_per_outer_bit = (choice.outer_bits > 0).then(|| ll / f64::from(choice.outer_bits));
    row.m_prime = Some(s.coloring_count());
    row.m_dprime = Some(s.q2());
    row.capped = choice.capped
        || budget.ideal_transmission_log2() > (params.code_cap as f64).log2()
        || budget.ideal_wiretap_log2() > (params.code_cap as f64).log2();
    let spec = SystemSpec {
        budget: *budget,
        pair: params.pair,
        peak: params.peak,
        bin_size: params.bin_size,
        code_cap: params.code_cap,
        selector: params.selector,
        seed,
    };
    match IdentificationSystem::build(&spec)
        .and_then(|(sys, _)| sys.estimate_errors(params.trials, derive_seed(seed, 1), &TypeTwoMode::Uniform))
    {
        Ok(report) => {
            row.feasible = true;
            row.report = Some(report);
        }
        Err(e) => row.note = Some(e.to_string()),
    }
    row
}
