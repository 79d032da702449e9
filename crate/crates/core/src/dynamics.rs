//! Kawasaki swap dynamics on a finite window.
//!
//! A rate function `c(γ, x, y) = c(γ, y, x)` is built from a proximity
//! weight `u(x, y)` and the swap ratio `φ(γ, x, y)`:
//!
//! | model         | `c(γ, x, y)`            | symmetric factor `a = c / √φ` |
//! |---------------|-------------------------|-------------------------------|
//! | `Metropolis`  | `u · min(φ, 1)`         | `u · min(√φ, 1/√φ)`           |
//! | `SqrtRatio`   | `u · √φ`                | `u`                           |
//! | `GlauberLike` | `u · (φ + 1)`           | `u · (√φ + 1/√φ)`             |
//!
//! In every case `a(γ) = a(σγ)`, so `P(γ) c(γ) = P(σγ) c(σγ)` and the
//! window DPP is reversible. The generator sums over ordered pairs, so an
//! unordered pair `{x, y}` with unequal occupancy jumps at rate `2c`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::dpp::{config_probability, enumerate_distribution, Configuration};
use crate::error::{Error, Result};
use crate::format::fmt_g17;
use crate::kernel::{KernelMatrix, Site, Window};
use crate::rn::{apply_transposition, rn_derivative, SwapPair, MIN_PROBABILITY};
use crate::rng::SeededRng;

/// Events between full recomputations of the cached rates.
pub const RATE_REFRESH_INTERVAL: usize = 10_000;

/// Largest tolerated drift between cached and recomputed rates.
const RATE_DRIFT_TOL: f64 = 1e-9;

/// Configurations whose rate tables are memoised before the cache is reset.
const RATE_CACHE_CAPACITY: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProximityKind {
    NearestNeighbor,
    ExpDecay { alpha: f64 },
    FiniteRange { r: u32 },
}

/// `u(x, y)`: a symmetric, summable proximity weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProximitySpec {
    pub kind: ProximityKind,
    pub weight: f64,
}

impl ProximitySpec {
    pub fn new(kind: ProximityKind, weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "proximity weight {weight} must be positive"
            )));
        }
        match kind {
            ProximityKind::ExpDecay { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                return Err(Error::InvalidParameter(format!(
                    "decay rate {alpha} must be positive"
                )))
            }
            ProximityKind::FiniteRange { r: 0 } => {
                return Err(Error::InvalidParameter("range must be at least 1".into()))
            }
            _ => {}
        }
        Ok(Self { kind, weight })
    }

    pub fn nearest_neighbor(weight: f64) -> Self {
        Self::new(ProximityKind::NearestNeighbor, weight).expect("positive weight")
    }
}

impl FromStr for ProximityKind {
    type Err = Error;

    /// `nn`, `exp:<alpha>` or `range:<r>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidParameter(format!(
                "unknown proximity {s:?} (nn, exp:<alpha>, range:<r>)"
            ))
        };
        match s.split_once(':') {
            None if s == "nn" => Ok(Self::NearestNeighbor),
            Some(("exp", a)) => Ok(Self::ExpDecay {
                alpha: a.parse().map_err(|_| bad())?,
            }),
            Some(("range", r)) => Ok(Self::FiniteRange {
                r: r.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ProximityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NearestNeighbor => write!(f, "nn"),
            Self::ExpDecay { alpha } => write!(f, "exp:{alpha}"),
            Self::FiniteRange { r } => write!(f, "range:{r}"),
        }
    }
}

pub fn proximity_u(spec: &ProximitySpec, x: Site, y: Site) -> Result<f64> {
    if x == y {
        return Err(Error::SamePoint(x.index()));
    }
    Ok(proximity_distance(spec, x.index().abs_diff(y.index())))
}

fn proximity_distance(spec: &ProximitySpec, d: u64) -> f64 {
    match spec.kind {
        ProximityKind::NearestNeighbor => {
            if d == 1 {
                spec.weight
            } else {
                0.0
            }
        }
        ProximityKind::ExpDecay { alpha } => spec.weight * (-alpha * d as f64).exp(),
        ProximityKind::FiniteRange { r } => {
            if d <= u64::from(r) {
                spec.weight
            } else {
                0.0
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    Metropolis,
    SqrtRatio,
    GlauberLike,
}

impl RateKind {
    pub const ALL: [RateKind; 3] = [
        RateKind::Metropolis,
        RateKind::SqrtRatio,
        RateKind::GlauberLike,
    ];

    /// `c / u` as a function of `φ`.
    pub fn from_phi(self, phi: f64) -> f64 {
        match self {
            Self::Metropolis => phi.min(1.0),
            Self::SqrtRatio => phi.sqrt(),
            Self::GlauberLike => phi + 1.0,
        }
    }
}

impl FromStr for RateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "metropolis" => Ok(Self::Metropolis),
            "sqrt-ratio" | "sqrt_ratio" => Ok(Self::SqrtRatio),
            "glauber-like" | "glauber_like" => Ok(Self::GlauberLike),
            _ => Err(Error::InvalidParameter(format!(
                "unknown rate model {s:?} (metropolis, sqrt-ratio, glauber-like)"
            ))),
        }
    }
}

impl fmt::Display for RateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Metropolis => "metropolis",
            Self::SqrtRatio => "sqrt-ratio",
            Self::GlauberLike => "glauber-like",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateModel {
    pub kind: RateKind,
    pub proximity: ProximitySpec,
}

impl RateModel {
    pub fn new(kind: RateKind, proximity: ProximitySpec) -> Self {
        Self { kind, proximity }
    }

    /// `c` for a given `u` and `φ`.
    pub fn rate_from(&self, u: f64, phi: f64) -> f64 {
        u * self.kind.from_phi(phi)
    }
}

/// `c(γ, x, y)`.
pub fn rate(
    model: &RateModel,
    k: &KernelMatrix,
    gamma: &Configuration,
    s: SwapPair,
) -> Result<f64> {
    let u = proximity_u(&model.proximity, s.x(), s.y())?;
    let phi = rn_derivative(k, gamma, s)?;
    Ok(model.rate_from(u, phi))
}

/// `a = c / √φ`, which must be invariant under the swap.
pub fn symmetric_factor(
    model: &RateModel,
    k: &KernelMatrix,
    gamma: &Configuration,
    s: SwapPair,
) -> Result<f64> {
    let phi = rn_derivative(k, gamma, s)?;
    Ok(rate(model, k, gamma, s)? / phi.sqrt())
}

/// Detailed-balance residual `|P(γ) c(γ) − P(σγ) c(σγ)|` together with
/// the larger of the two fluxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceResidual {
    pub residual: f64,
    pub max_flux: f64,
}

impl BalanceResidual {
    pub fn relative(&self) -> f64 {
        if self.residual == 0.0 {
            0.0
        } else {
            self.residual / self.max_flux.max(MIN_PROBABILITY)
        }
    }
}

pub fn symmetry_check_detailed(
    model: &RateModel,
    k: &KernelMatrix,
    gamma: &Configuration,
    s: SwapPair,
) -> Result<BalanceResidual> {
    let swapped = apply_transposition(gamma, s)?;
    if swapped == *gamma {
        return Ok(BalanceResidual {
            residual: 0.0,
            max_flux: 0.0,
        });
    }
    let f1 = config_probability(k, gamma)? * rate(model, k, gamma, s)?;
    let f2 = config_probability(k, &swapped)? * rate(model, k, &swapped, s)?;
    Ok(BalanceResidual {
        residual: (f1 - f2).abs(),
        max_flux: f1.max(f2),
    })
}

/// `|P(γ) c(γ, s) − P(σγ) c(σγ, s)|`.
pub fn symmetry_check(
    model: &RateModel,
    k: &KernelMatrix,
    gamma: &Configuration,
    s: SwapPair,
) -> Result<f64> {
    symmetry_check_detailed(model, k, gamma, s).map(|b| b.residual)
}

/// Outgoing jump rates of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRates {
    pub total: f64,
    /// Unordered pairs with unequal occupancy and `u > 0`, each at rate `2c`.
    pub per_pair: Vec<(SwapPair, f64)>,
}

/// Candidate pairs `(i, j)`, `i < j`, by window position, with `u > 0`.
fn candidate_pairs(model: &RateModel, w: &Window) -> Vec<(usize, usize, f64)> {
    let n = w.size();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let u = proximity_distance(&model.proximity, (j - i) as u64);
            if u > 0.0 {
                out.push((i, j, u));
            }
        }
    }
    out
}

pub fn total_jump_rate(
    model: &RateModel,
    k: &KernelMatrix,
    gamma: &Configuration,
) -> Result<JumpRates> {
    RateEngine::new(*model, k.clone()).compute(gamma)
}

/// Rate tables with per-configuration memoisation. φ may be evaluated on a
/// larger enclosing window with the sites outside the simulated window held
/// at a fixed environment configuration.
#[derive(Debug, Clone)]
pub struct RateEngine {
    model: RateModel,
    kernel: KernelMatrix,
    inner: Window,
    environment: Option<Configuration>,
    pairs: Vec<(usize, usize, f64)>,
    cache: HashMap<Vec<bool>, Arc<JumpRates>>,
}

impl RateEngine {
    pub fn new(model: RateModel, kernel: KernelMatrix) -> Self {
        let inner = *kernel.window();
        Self::build(model, kernel, inner, None)
    }

    /// φ evaluated on `kernel`'s window, which must contain `inner`; sites
    /// outside `inner` take their occupancy from `environment`.
    pub fn with_environment(
        model: RateModel,
        kernel: KernelMatrix,
        inner: Window,
        environment: Configuration,
    ) -> Result<Self> {
        if !kernel.window().contains_window(&inner) || environment.window() != kernel.window() {
            return Err(Error::WindowMismatch(format!(
                "phi window {} must contain simulation window {inner} and match the environment",
                kernel.window()
            )));
        }
        Ok(Self::build(model, kernel, inner, Some(environment)))
    }

    fn build(
        model: RateModel,
        kernel: KernelMatrix,
        inner: Window,
        environment: Option<Configuration>,
    ) -> Self {
        let pairs = candidate_pairs(&model, &inner);
        Self {
            model,
            kernel,
            inner,
            environment,
            pairs,
            cache: HashMap::new(),
        }
    }

    pub fn window(&self) -> &Window {
        &self.inner
    }

    fn probability(&self, gamma: &Configuration) -> Result<f64> {
        match &self.environment {
            None => config_probability(&self.kernel, gamma),
            Some(env) => {
                let mut full = env.clone();
                let offset = (self.inner.lo().index() - env.window().lo().index()) as usize;
                for (i, &o) in gamma.occupancy().iter().enumerate() {
                    full.set(offset + i, o);
                }
                config_probability(&self.kernel, &full)
            }
        }
    }

    /// Rates computed from scratch, bypassing the cache.
    pub fn compute(&self, gamma: &Configuration) -> Result<JumpRates> {
        if gamma.window() != &self.inner {
            return Err(Error::WindowMismatch(format!(
                "configuration window {} vs simulation window {}",
                gamma.window(),
                self.inner
            )));
        }
        let p = self.probability(gamma)?;
        if p < MIN_PROBABILITY {
            return Err(Error::ZeroProbability(p));
        }
        let mut per_pair = Vec::new();
        let mut total = 0.0;
        let mut swapped = gamma.clone();
        for &(i, j, u) in &self.pairs {
            if gamma.occupied_at(i) == gamma.occupied_at(j) {
                continue;
            }
            swapped.swap_positions(i, j);
            let phi = self.probability(&swapped)? / p;
            swapped.swap_positions(i, j);
            let r = 2.0 * self.model.rate_from(u, phi);
            total += r;
            let pair = SwapPair::new(self.inner.site(i), self.inner.site(j))?;
            per_pair.push((pair, r));
        }
        Ok(JumpRates { total, per_pair })
    }

    pub fn rates(&mut self, gamma: &Configuration) -> Result<Arc<JumpRates>> {
        if let Some(r) = self.cache.get(gamma.occupancy()) {
            return Ok(Arc::clone(r));
        }
        let r = Arc::new(self.compute(gamma)?);
        if self.cache.len() >= RATE_CACHE_CAPACITY {
            self.cache.clear();
        }
        self.cache
            .insert(gamma.occupancy().to_vec(), Arc::clone(&r));
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwapEvent {
    pub time: f64,
    pub swap: SwapPair,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub seed: u64,
    pub initial: Configuration,
    pub events: Vec<SwapEvent>,
    pub t_max: f64,
    /// The chain reached a configuration with zero total rate and idled.
    pub absorbed: bool,
}

impl Trajectory {
    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    /// Configurations visited, starting with the initial one.
    pub fn states(&self) -> impl Iterator<Item = Configuration> + '_ {
        let mut cur = self.initial.clone();
        std::iter::once(self.initial.clone()).chain(self.events.iter().map(move |e| {
            cur = apply_transposition(&cur, e.swap).expect("events lie in the window");
            cur.clone()
        }))
    }

    pub fn final_configuration(&self) -> Configuration {
        self.states().last().expect("at least the initial state")
    }

    /// Time spent in each configuration over `[0, t_max]`, keyed by bitmask.
    pub fn occupation_times(&self) -> HashMap<u64, f64> {
        let mut out = HashMap::new();
        let mut t_prev = 0.0;
        let mut states = self.states();
        let mut cur = states.next().expect("initial state");
        for (e, next) in self.events.iter().zip(states) {
            *out.entry(cur.to_bits().expect("small window"))
                .or_insert(0.0) += e.time - t_prev;
            t_prev = e.time;
            cur = next;
        }
        *out.entry(cur.to_bits().expect("small window"))
            .or_insert(0.0) += self.t_max - t_prev;
        out
    }

    /// `time,x,y` per event.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,x,y\n");
        for e in &self.events {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_g17(e.time),
                fmt_g17(e.swap.x().x()),
                fmt_g17(e.swap.y().x())
            ));
        }
        out
    }
}

/// Gillespie simulation of the swap dynamics up to time `t_max`.
pub fn simulate(
    model: &RateModel,
    k: &KernelMatrix,
    initial: &Configuration,
    t_max: f64,
    rng: &mut SeededRng,
) -> Result<Trajectory> {
    simulate_with_engine(&mut RateEngine::new(*model, k.clone()), initial, t_max, rng)
}

pub fn simulate_with_engine(
    engine: &mut RateEngine,
    initial: &Configuration,
    t_max: f64,
    rng: &mut SeededRng,
) -> Result<Trajectory> {
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "t_max = {t_max} must be finite and >= 0"
        )));
    }
    let mut gamma = initial.clone();
    let mut rates = engine.rates(&gamma)?;
    let mut t = 0.0;
    let mut events = Vec::new();
    let mut absorbed = false;
    loop {
        if rates.total <= 0.0 {
            absorbed = true;
            break;
        }
        let dt = rng.exponential(rates.total);
        if t + dt > t_max {
            break;
        }
        t += dt;
        let target = rng.uniform() * rates.total;
        let mut acc = 0.0;
        let mut chosen = None;
        for &(pair, r) in &rates.per_pair {
            if r <= 0.0 {
                continue;
            }
            acc += r;
            chosen = Some(pair);
            if acc > target {
                break;
            }
        }
        let pair = chosen.expect("positive total rate has a positive pair");
        gamma = apply_transposition(&gamma, pair)?;
        events.push(SwapEvent {
            time: t,
            swap: pair,
        });
        rates = engine.rates(&gamma)?;

        if events.len() % RATE_REFRESH_INTERVAL == 0 {
            let fresh = engine.compute(&gamma)?;
            let drift = fresh
                .per_pair
                .iter()
                .zip(&rates.per_pair)
                .map(|(a, b)| (a.1 - b.1).abs())
                .fold((fresh.total - rates.total).abs(), f64::max);
            if drift > RATE_DRIFT_TOL {
                return Err(Error::Numerical(format!(
                    "cached rates drifted by {drift:e}"
                )));
            }
        }
    }
    Ok(Trajectory {
        seed: rng.seed(),
        initial: initial.clone(),
        events,
        t_max,
        absorbed,
    })
}

/// Whether the sector of configurations with `count` particles is
/// connected under the model's positive-rate swaps.
pub fn sector_connected(model: &RateModel, k: &KernelMatrix, count: usize) -> Result<bool> {
    let w = *k.window();
    let n = w.size();
    if n > 20 || count > n {
        return Err(Error::Size {
            what: "sector connectivity window",
            size: n,
            limit: 20,
        });
    }
    let engine = RateEngine::new(*model, k.clone());
    let states: Vec<u64> = (0..1u64 << n)
        .filter(|m| m.count_ones() as usize == count)
        .collect();
    let start = states[0];
    let mut seen = std::collections::HashSet::from([start]);
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(m) = queue.pop_front() {
        let rates = engine.compute(&Configuration::from_bits(w, m))?;
        for (pair, r) in &rates.per_pair {
            if *r <= 0.0 {
                continue;
            }
            let i = w.position(pair.x()).expect("in window");
            let j = w.position(pair.y()).expect("in window");
            let next = m ^ (1 << i) ^ (1 << j);
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    Ok(seen.len() == states.len())
}

/// Window-scale integrability numbers for the rates at one site `x`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateIntegrability {
    /// `Σ_η P(η) Σ_{y≠x} c(η, x, y)`
    pub l1: f64,
    /// `Σ_η P(η) (Σ_{y≠x} c(η, x, y))²`
    pub l2_squared: f64,
}

pub fn rate_integrability(
    model: &RateModel,
    k: &KernelMatrix,
    x: Site,
) -> Result<RateIntegrability> {
    let pmf = enumerate_distribution(k)?;
    let w = *k.window();
    let xi = w
        .position(x)
        .ok_or_else(|| Error::WindowMismatch(format!("site {x} outside window {w}")))?;
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    for (m, &p) in pmf.probs().iter().enumerate() {
        if p < MIN_PROBABILITY {
            continue;
        }
        let mut sum = 0.0;
        for j in (0..w.size()).filter(|&j| j != xi) {
            let u = proximity_distance(&model.proximity, xi.abs_diff(j) as u64);
            if u == 0.0 {
                continue;
            }
            let (bi, bj) = (m >> xi & 1, m >> j & 1);
            let phi = if bi == bj {
                1.0
            } else {
                pmf.prob_of_mask((m ^ (1 << xi) ^ (1 << j)) as u64) / p
            };
            sum += model.rate_from(u, phi);
        }
        l1 += p * sum;
        l2 += p * sum * sum;
    }
    Ok(RateIntegrability { l1, l2_squared: l2 })
}

/// Metadata written next to a trajectory CSV.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryMeta {
    pub seed: u64,
    pub stream: u64,
    pub z: String,
    pub z_prime: String,
    pub window: String,
    pub rate_model: String,
    pub proximity: String,
    pub proximity_weight: f64,
    pub t_max: f64,
    pub initial_bitmask: String,
    pub n_events: usize,
    pub absorbed: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{kernel_matrix, AdmissiblePair};

    fn kernel(lo: i64, hi: i64) -> KernelMatrix {
        kernel_matrix(
            &AdmissiblePair::real(1.5, 1.7).unwrap(),
            &Window::new(lo, hi).unwrap(),
        )
        .unwrap()
    }

    fn nn(kind: RateKind) -> RateModel {
        RateModel::new(kind, ProximitySpec::nearest_neighbor(1.0))
    }

    #[test]
    fn proximity_values() {
        let nn1 = ProximitySpec::nearest_neighbor(1.0);
        assert_eq!(proximity_u(&nn1, Site(0), Site(1)).unwrap(), 1.0);
        assert_eq!(proximity_u(&nn1, Site(0), Site(3)).unwrap(), 0.0);
        let exp = ProximitySpec::new(ProximityKind::ExpDecay { alpha: 1.0 }, 2.0).unwrap();
        assert!((proximity_u(&exp, Site(2), Site(0)).unwrap() - 2.0 * (-2f64).exp()).abs() < 1e-16);
        let range = ProximitySpec::new(ProximityKind::FiniteRange { r: 2 }, 0.5).unwrap();
        assert_eq!(proximity_u(&range, Site(-1), Site(1)).unwrap(), 0.5);
        assert_eq!(proximity_u(&range, Site(-1), Site(2)).unwrap(), 0.0);
        assert_eq!(
            proximity_u(&nn1, Site(4), Site(4)),
            Err(Error::SamePoint(4))
        );
        assert!(ProximitySpec::new(ProximityKind::NearestNeighbor, 0.0).is_err());
        assert!(ProximitySpec::new(ProximityKind::ExpDecay { alpha: -1.0 }, 1.0).is_err());
        assert!(ProximitySpec::new(ProximityKind::FiniteRange { r: 0 }, 1.0).is_err());
    }

    #[test]
    fn proximity_parsing() {
        assert_eq!(
            "nn".parse::<ProximityKind>().unwrap(),
            ProximityKind::NearestNeighbor
        );
        assert_eq!(
            "exp:0.5".parse::<ProximityKind>().unwrap(),
            ProximityKind::ExpDecay { alpha: 0.5 }
        );
        assert_eq!(
            "range:3".parse::<ProximityKind>().unwrap(),
            ProximityKind::FiniteRange { r: 3 }
        );
        assert!("exp".parse::<ProximityKind>().is_err());
        for k in ["nn", "exp:0.5", "range:3"] {
            assert_eq!(k.parse::<ProximityKind>().unwrap().to_string(), k);
        }
        for k in RateKind::ALL {
            assert_eq!(k.to_string().parse::<RateKind>().unwrap(), k);
        }
    }

    #[test]
    fn rate_formulas() {
        let m = |kind| RateModel::new(kind, ProximitySpec::nearest_neighbor(1.0));
        assert_eq!(m(RateKind::Metropolis).rate_from(1.0, 4.0), 1.0);
        assert_eq!(m(RateKind::SqrtRatio).rate_from(2.0, 4.0), 4.0);
        assert_eq!(m(RateKind::GlauberLike).rate_from(0.5, 4.0), 2.5);
        assert_eq!(m(RateKind::Metropolis).rate_from(1.0, 0.25), 0.25);
    }

    #[test]
    fn detailed_balance_on_all_configurations() {
        let k = kernel(-3, 2);
        let w = *k.window();
        for kind in RateKind::ALL {
            let model = nn(kind);
            for m in 0..1u64 << 6 {
                let g = Configuration::from_bits(w, m);
                for i in 0..5 {
                    let s = SwapPair::new(w.site(i), w.site(i + 1)).unwrap();
                    let b = symmetry_check_detailed(&model, &k, &g, s).unwrap();
                    let tol = if kind == RateKind::Metropolis {
                        1e-12
                    } else {
                        1e-10
                    };
                    assert!(b.relative() < tol, "{kind} {g} {i}: {}", b.relative());
                }
            }
        }
    }

    #[test]
    fn fixed_point_balance_is_exactly_zero() {
        let k = kernel(0, 3);
        let g = Configuration::parse(*k.window(), "1100").unwrap();
        let s = SwapPair::new(Site(0), Site(1)).unwrap();
        assert_eq!(
            symmetry_check(&nn(RateKind::GlauberLike), &k, &g, s).unwrap(),
            0.0
        );
    }

    #[test]
    fn symmetric_factor_is_swap_invariant() {
        let k = kernel(-2, 3);
        let w = *k.window();
        let s = SwapPair::new(Site(-1), Site(2)).unwrap();
        for kind in RateKind::ALL {
            let model = RateModel::new(
                kind,
                ProximitySpec::new(ProximityKind::ExpDecay { alpha: 0.3 }, 1.0).unwrap(),
            );
            for m in 0..1u64 << 6 {
                let g = Configuration::from_bits(w, m);
                let a = symmetric_factor(&model, &k, &g, s).unwrap();
                let b =
                    symmetric_factor(&model, &k, &apply_transposition(&g, s).unwrap(), s).unwrap();
                assert!((a / b - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jump_rate_edge_cases() {
        let k = kernel(-3, 3);
        let w = *k.window();
        let model = nn(RateKind::Metropolis);
        let full = Configuration::parse(w, "1111111").unwrap();
        assert_eq!(total_jump_rate(&model, &k, &full).unwrap().total, 0.0);
        let empty = Configuration::empty(w);
        assert_eq!(total_jump_rate(&model, &k, &empty).unwrap().total, 0.0);
        let single = Configuration::parse(w, "0001000").unwrap();
        let r = total_jump_rate(&model, &k, &single).unwrap();
        assert_eq!(r.per_pair.len(), 2);
        let sum: f64 = r.per_pair.iter().map(|p| p.1).sum();
        assert_eq!(sum, r.total);
        // each unordered pair carries 2c
        let (pair, r0) = r.per_pair[0];
        assert!((r0 - 2.0 * rate(&model, &k, &single, pair).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn simulation_basics() {
        let k = kernel(-4, 3);
        let w = *k.window();
        let model = nn(RateKind::GlauberLike);
        let init = Configuration::parse(w, "01001010").unwrap();
        let t0 = simulate(&model, &k, &init, 0.0, &mut SeededRng::new(1)).unwrap();
        assert!(t0.events.is_empty());
        let run = |seed| simulate(&model, &k, &init, 50.0, &mut SeededRng::new(seed)).unwrap();
        let a = run(4);
        assert!(a.n_events() > 10);
        assert!(a.events.windows(2).all(|e| e[0].time < e[1].time));
        assert!(a.states().all(|c| c.particle_count() == 3));
        let mut cur = init.clone();
        for e in &a.events {
            assert_ne!(
                cur.is_occupied(e.swap.x()).unwrap(),
                cur.is_occupied(e.swap.y()).unwrap()
            );
            cur = apply_transposition(&cur, e.swap).unwrap();
        }
        let b = run(4);
        assert_eq!(a.events, b.events);
        let total: f64 = a.occupation_times().values().sum();
        assert!((total - 50.0).abs() < 1e-9);
        assert!(a.to_csv().starts_with("time,x,y\n"));
    }

    #[test]
    fn absorbing_state_idles() {
        let k = kernel(0, 3);
        let full = Configuration::parse(*k.window(), "1111").unwrap();
        let t = simulate(
            &nn(RateKind::Metropolis),
            &k,
            &full,
            5.0,
            &mut SeededRng::new(1),
        )
        .unwrap();
        assert!(t.absorbed && t.events.is_empty());
        assert_eq!(t.occupation_times()[&0b1111], 5.0);
    }

    #[test]
    fn environment_engine_matches_plain_engine_on_equal_windows() {
        let k = kernel(-2, 2);
        let w = *k.window();
        let model = nn(RateKind::SqrtRatio);
        let env = Configuration::empty(w);
        let a = RateEngine::with_environment(model, k.clone(), w, env).unwrap();
        let b = RateEngine::new(model, k.clone());
        let g = Configuration::parse(w, "10100").unwrap();
        assert_eq!(a.compute(&g).unwrap(), b.compute(&g).unwrap());
        let small = Window::new(-1, 1).unwrap();
        let env = Configuration::parse(w, "10001").unwrap();
        let c = RateEngine::with_environment(model, k.clone(), small, env).unwrap();
        assert!(
            c.compute(&Configuration::parse(small, "010").unwrap())
                .unwrap()
                .total
                > 0.0
        );
        assert!(RateEngine::with_environment(
            model,
            k,
            Window::new(-5, 0).unwrap(),
            Configuration::empty(w)
        )
        .is_err());
    }

    #[test]
    fn sectors_are_connected_under_nearest_neighbour_swaps() {
        let k = kernel(-3, 3);
        for count in 0..=7 {
            assert!(sector_connected(&nn(RateKind::Metropolis), &k, count).unwrap());
        }
    }

    #[test]
    fn integrability_diagnostics_are_finite() {
        let k = kernel(-3, 2);
        for kind in RateKind::ALL {
            let r = rate_integrability(&nn(kind), &k, Site(0)).unwrap();
            assert!(r.l1.is_finite() && r.l1 > 0.0);
            assert!(r.l2_squared.is_finite() && r.l2_squared >= r.l1 * r.l1 - 1e-12);
        }
    }
}
