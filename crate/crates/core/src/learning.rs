//! Multiplicative weights for nature against best responses for the
//! aggregator, with averaged strategies certified by lower/upper bounds.

use std::time::Instant;

use crate::aggregator::AggregatorGrid;
use crate::best_response::{build_target, closed_form_best_response, FillPolicy, ResponseTarget};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::qp::{lipschitz_best_response, QpSettings, QpWarmStart};
use crate::regret::Paradigm;
use crate::scalar::{chunked_sum, Scalar};

/// How the multiplicative-weights rate is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateMode<T> {
    /// Rate 1 with utilities normalized by their current expectation.
    Experiment,
    /// `ln(1 + sqrt(2 ln n / T))` on raw clipped utilities.
    Theory,
    /// A fixed exponent coefficient on raw clipped utilities.
    Fixed(T),
}

impl<T: Scalar> std::str::FromStr for RateMode<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "experiment" => Ok(RateMode::Experiment),
            "theory" | "auto" => Ok(RateMode::Theory),
            other => match other.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(RateMode::Fixed(T::lit(v))),
                _ => Err(Error::InvalidArgument(format!(
                    "rate must be 'experiment', 'theory' or a positive number, got '{other}'"
                ))),
            },
        }
    }
}

impl<T: Scalar> std::fmt::Display for RateMode<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RateMode::Experiment => f.write_str("experiment"),
            RateMode::Theory => f.write_str("theory"),
            RateMode::Fixed(v) => write!(f, "{v}"),
        }
    }
}

/// Exponent coefficient for `n` actions over `rounds` rounds.
pub fn default_rate<T: Scalar>(n: usize, rounds: usize, mode: RateMode<T>) -> T {
    match mode {
        RateMode::Experiment => T::one(),
        RateMode::Fixed(v) => v,
        RateMode::Theory => {
            let ln_n = T::lit((n.max(1) as f64).ln());
            let t = T::lit(rounds.max(1) as f64);
            (T::one() + (T::lit(2.0) * ln_n / t).sqrt()).ln()
        }
    }
}

/// Same as [`default_rate`] for a real-valued action count (used to check the closed form).
pub fn theory_rate<T: Scalar>(n: T, rounds: usize) -> T {
    let t = T::lit(rounds.max(1) as f64);
    (T::one() + (T::lit(2.0) * n.ln() / t).sqrt()).ln()
}

/// One multiplicative-weights step `w' ∝ w exp(rate u)`, stabilized by
/// shifting utilities by their maximum. A negative rate gives the
/// loss-minimizing direction.
pub fn mw_step<T: Scalar>(weights: &[T], utilities: &[T], rate: T) -> Vec<T> {
    let live = |i: usize| weights[i] > T::zero();
    let shift = (0..weights.len())
        .filter(|&i| live(i))
        .map(|i| rate * utilities[i])
        .fold(T::neg_infinity(), T::max);
    let raw: Vec<T> = weights
        .iter()
        .zip(utilities)
        .map(|(w, u)| {
            if *w > T::zero() {
                *w * (rate * *u - shift).exp()
            } else {
                T::zero()
            }
        })
        .collect();
    let z = chunked_sum(&raw);
    raw.into_iter().map(|v| v / z).collect()
}

/// Loop controls.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig<T> {
    pub rounds: usize,
    pub rate: RateMode<T>,
    /// `None` for unconstrained aggregators.
    pub lipschitz: Option<T>,
    pub paradigm: Paradigm<T>,
    /// Stop once the certified gap is at most this.
    pub target_gap: T,
    pub symmetrize_responses: bool,
    /// Recorded for provenance; the loop itself is deterministic.
    pub seed: u64,
    /// Use `exp(-rate u)` instead of `exp(+rate u)`.
    pub paper_sign: bool,
    pub qp: QpSettings<T>,
    /// Rounds between certificate evaluations.
    pub check_every: usize,
    pub fill: FillPolicy<T>,
}

impl<T: Scalar> Default for LearnConfig<T> {
    fn default() -> Self {
        Self {
            rounds: 2000,
            rate: RateMode::Experiment,
            lipschitz: None,
            paradigm: Paradigm::additive(),
            target_gap: T::lit(1e-3),
            symmetrize_responses: false,
            seed: 0,
            paper_sign: false,
            qp: QpSettings::default(),
            check_every: 10,
            fill: FillPolicy::default(),
        }
    }
}

impl<T: Scalar> LearnConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidArgument("rounds must be at least 1".into()));
        }
        if let RateMode::Fixed(r) = self.rate {
            if !(r > T::zero()) {
                return Err(Error::InvalidArgument("rate must be positive".into()));
            }
        }
        if let Some(l) = self.lipschitz {
            if !(l >= T::zero()) {
                return Err(Error::InvalidArgument(
                    "Lipschitz constant must be nonnegative".into(),
                ));
            }
        }
        if !(self.target_gap >= T::zero()) || self.check_every == 0 {
            return Err(Error::InvalidArgument(
                "target gap must be nonnegative and check interval positive".into(),
            ));
        }
        self.paradigm.validate()?;
        self.qp.validate()
    }
}

/// One round of history. Bounds are present on certificate rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord<T> {
    pub round: usize,
    /// `max_theta R(f^t, theta)`.
    pub max_utility: T,
    /// `E_{w^t}[R(f^t, theta)]`.
    pub expected_utility: T,
    pub lower: Option<T>,
    pub upper: Option<T>,
}

/// Certified bounds on the game value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds<T> {
    /// Value of the best response to the averaged nature strategy.
    pub lower: T,
    /// Maximum regret of the averaged aggregator.
    pub upper: T,
    pub gap: T,
    /// Structure attaining the upper bound.
    pub argmax: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCertificate<T> {
    pub history: Vec<RoundRecord<T>>,
    pub lower_bound: T,
    pub upper_bound: T,
    pub gap: T,
    pub argmax: usize,
    pub rounds: usize,
    pub converged: bool,
    /// `max_theta sum_t u_theta^t - sum_t <w^t, u^t>` on the utilities fed to the update.
    pub online_regret: T,
    pub rate: T,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput<T> {
    pub f_star: AggregatorGrid<T>,
    pub w_bar: Vec<T>,
    pub certificate: EquilibriumCertificate<T>,
}

/// Initial nature strategy: proportional to multiplicity over structures with a defined regret.
pub fn initial_weights<T: Scalar>(family: &Family<T>, paradigm: &Paradigm<T>) -> Result<Vec<T>> {
    let adm = family.admissible(paradigm);
    let raw: Vec<T> = family
        .multiplicity()
        .iter()
        .zip(&adm)
        .map(|(m, a)| if *a { T::lit(*m as f64) } else { T::zero() })
        .collect();
    let z = chunked_sum(&raw);
    if !(z > T::zero()) {
        return Err(Error::InvalidArgument(
            "no structure in the family has a defined regret under this paradigm".into(),
        ));
    }
    Ok(raw.into_iter().map(|v| v / z).collect())
}

fn respond<T: Scalar>(
    target: &ResponseTarget<T>,
    config: &LearnConfig<T>,
    warm: &mut QpWarmStart<T>,
) -> Result<(AggregatorGrid<T>, T)> {
    match config.lipschitz {
        Some(l) if l / T::lit(target.n as f64) < T::one() => {
            let s = lipschitz_best_response(target, l, &config.qp, Some(warm))?;
            Ok((s.grid, s.dual))
        }
        _ => {
            let g = closed_form_best_response(target, config.fill);
            let v = target.residual(g.values());
            Ok((g, v))
        }
    }
}

/// Certified bounds for the averaged strategies.
pub fn bounds<T: Scalar>(
    family: &Family<T>,
    w_bar: &[T],
    f_bar: &AggregatorGrid<T>,
    config: &LearnConfig<T>,
) -> Result<Bounds<T>> {
    let mut warm = QpWarmStart::default();
    bounds_warm(family, w_bar, f_bar, config, &mut warm)
}

fn bounds_warm<T: Scalar>(
    family: &Family<T>,
    w_bar: &[T],
    f_bar: &AggregatorGrid<T>,
    config: &LearnConfig<T>,
    warm: &mut QpWarmStart<T>,
) -> Result<Bounds<T>> {
    let target = build_target(family, w_bar, &config.paradigm)?;
    let (_, residual_lb) = respond(&target, config, warm)?;
    let lower = target.to_regret(residual_lb.max(T::zero()) + target.constant);
    let (upper, argmax) = family
        .max_regret(f_bar, &config.paradigm)?
        .ok_or_else(|| Error::InvalidArgument("family has no admissible structure".into()))?;
    Ok(Bounds {
        lower,
        upper,
        gap: (upper - lower).max(T::zero()),
        argmax,
    })
}

/// Runs the learning loop on `family`.
pub fn run<T: Scalar>(family: &Family<T>, config: &LearnConfig<T>) -> Result<RunOutput<T>> {
    run_with(family, config, |_| {})
}

/// [`run`] with a callback invoked after every round.
pub fn run_with<T: Scalar>(
    family: &Family<T>,
    config: &LearnConfig<T>,
    mut on_round: impl FnMut(&RoundRecord<T>),
) -> Result<RunOutput<T>> {
    config.validate()?;
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty family".into()));
    }
    let start = Instant::now();
    let n = family.len();
    let side = family.side();
    let mut w = initial_weights(family, &config.paradigm)?;
    let rate = default_rate(n, config.rounds, config.rate);
    let signed_rate = if config.paper_sign { -rate } else { rate };
    let mut f_sum = vec![T::zero(); side * side];
    let mut w_sum = vec![T::zero(); n];
    let mut cum_u = vec![T::zero(); n];
    let mut cum_expected = T::zero();
    let mut warm = QpWarmStart::default();
    let mut bound_warm = QpWarmStart::default();
    let mut history = Vec::with_capacity(config.rounds);
    let mut last: Option<(Bounds<T>, AggregatorGrid<T>, Vec<T>)> = None;
    let mut converged = false;
    let mut rounds_done = 0;

    let wrap = |round: usize| {
        move |e: Error| Error::RoundFailed {
            round,
            source: Box::new(e),
        }
    };

    for round in 1..=config.rounds {
        let target = build_target(family, &w, &config.paradigm).map_err(wrap(round))?;
        let (mut f, _) = respond(&target, config, &mut warm).map_err(wrap(round))?;
        if config.symmetrize_responses {
            f = f.symmetrize();
        }
        let regrets = family.regrets(&f, &config.paradigm).map_err(wrap(round))?;
        let u: Vec<T> = regrets.iter().map(|r| r.unwrap_or(T::zero())).collect();
        let max_u = regrets
            .iter()
            .flatten()
            .copied()
            .fold(T::neg_infinity(), T::max);
        let wu: Vec<T> = w.iter().zip(&u).map(|(a, b)| *a * *b).collect();
        let expected = chunked_sum(&wu);

        for (s, v) in f_sum.iter_mut().zip(f.values()) {
            *s = *s + *v;
        }
        for (s, v) in w_sum.iter_mut().zip(&w) {
            *s = *s + *v;
        }

        let mut fed: Vec<T> = u.iter().map(|v| config.paradigm.clip(*v)).collect();
        if config.rate == RateMode::Experiment {
            let terms: Vec<T> = w.iter().zip(&fed).map(|(a, b)| *a * *b).collect();
            let e = chunked_sum(&terms);
            if e > T::zero() {
                fed.iter_mut().for_each(|v| *v = *v / e);
            }
        }
        let fed_terms: Vec<T> = w.iter().zip(&fed).map(|(a, b)| *a * *b).collect();
        cum_expected = cum_expected + chunked_sum(&fed_terms);
        for (c, v) in cum_u.iter_mut().zip(&fed) {
            *c = *c + *v;
        }
        let w_next = mw_step(&w, &fed, signed_rate);

        let mut rec = RoundRecord {
            round,
            max_utility: max_u,
            expected_utility: expected,
            lower: None,
            upper: None,
        };
        rounds_done = round;
        if round % config.check_every == 0 || round == config.rounds {
            let t = T::lit(round as f64);
            let mut f_bar = AggregatorGrid::new(
                family.n(),
                f_sum
                    .iter()
                    .map(|v| (*v / t).max(T::zero()).min(T::one()))
                    .collect(),
            )
            .map_err(wrap(round))?;
            if config.symmetrize_responses {
                f_bar = f_bar.symmetrize();
            }
            let w_bar: Vec<T> = w_sum.iter().map(|v| *v / t).collect();
            let b = bounds_warm(family, &w_bar, &f_bar, config, &mut bound_warm)
                .map_err(wrap(round))?;
            rec.lower = Some(b.lower);
            rec.upper = Some(b.upper);
            let done = b.gap <= config.target_gap;
            last = Some((b, f_bar, w_bar));
            if done {
                converged = true;
            }
        }
        on_round(&rec);
        history.push(rec);
        w = w_next;
        if converged {
            break;
        }
    }

    let (b, f_star, w_bar) = last.expect("the final round always evaluates bounds");
    let online_regret = cum_u.iter().copied().fold(T::neg_infinity(), T::max) - cum_expected;
    Ok(RunOutput {
        f_star,
        w_bar,
        certificate: EquilibriumCertificate {
            history,
            lower_bound: b.lower,
            upper_bound: b.upper,
            gap: b.gap,
            argmax: b.argmax,
            rounds: rounds_done,
            converged,
            online_regret,
            rate,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        },
    })
}
