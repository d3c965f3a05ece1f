use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use super::SimTime;
use crate::error::{Result, SimError};

/// FNV-1a over the stream name; stable across platforms and releases.
fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce5_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent random stream owned by one component.
///
/// The stream seed is derived from `(global seed, stream id)` so adding a
/// component never perturbs the draws seen by another.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: impl Into<String>) -> Self {
        let stream_id = stream_id.into();
        let derived = splitmix64(seed ^ splitmix64(fnv1a(&stream_id)));
        RngStream {
            seed,
            rng: ChaCha8Rng::seed_from_u64(derived),
            stream_id,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        p > 0.0 && self.unit() < p
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        self.rng.random_range(lo..=hi)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random::<u64>()
    }

    pub fn next_u32(&mut self) -> u32 {
        self.rng.random::<u32>()
    }

    /// Exponential with the given mean, in (rounded-up) nanoseconds.
    pub fn exponential_ns(&mut self, mean_ns: f64) -> SimTime {
        let u = 1.0 - self.unit();
        SimTime::from_ns_f64_ceil(-mean_ns * u.ln())
    }

    pub fn sample(&mut self, dist: &Dist) -> SimTime {
        dist.sample(self)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.rng);
    }
}

/// Latency distribution in nanoseconds.
#[derive(Debug, Clone, PartialEq)]
pub enum Dist {
    Constant(u64),
    /// Inclusive integer range.
    Uniform {
        lo: u64,
        hi: u64,
    },
    /// `exp(N(mu, sigma))`, clamped to `max`.
    LogNormal {
        mu: f64,
        sigma: f64,
        max: u64,
    },
}

impl Dist {
    pub const ZERO: Dist = Dist::Constant(0);

    pub fn uniform(lo: u64, hi: u64) -> Result<Dist> {
        Dist::Uniform { lo, hi }.validated()
    }

    pub fn lognormal(mu: f64, sigma: f64, max: u64) -> Result<Dist> {
        Dist::LogNormal { mu, sigma, max }.validated()
    }

    /// Lognormal parameterised by its (untruncated) arithmetic mean.
    pub fn lognormal_with_mean(mean_ns: f64, sigma: f64, max: u64) -> Result<Dist> {
        if mean_ns.is_nan() || mean_ns <= 0.0 {
            return Err(SimError::InvalidDistribution(format!(
                "lognormal mean {mean_ns} <= 0"
            )));
        }
        Dist::lognormal(mean_ns.ln() - sigma * sigma / 2.0, sigma, max)
    }

    pub fn validated(self) -> Result<Dist> {
        match &self {
            Dist::Constant(_) => {}
            Dist::Uniform { lo, hi } => {
                if hi < lo {
                    return Err(SimError::InvalidDistribution(format!(
                        "uniform hi {hi} < lo {lo}"
                    )));
                }
            }
            Dist::LogNormal { mu, sigma, .. } => {
                if !mu.is_finite() || !sigma.is_finite() || *sigma < 0.0 {
                    return Err(SimError::InvalidDistribution(format!(
                        "lognormal mu {mu} sigma {sigma}"
                    )));
                }
            }
        }
        Ok(self)
    }

    pub fn sample(&self, rng: &mut RngStream) -> SimTime {
        match *self {
            Dist::Constant(c) => SimTime::ns(c),
            Dist::Uniform { lo, hi } => {
                if lo == hi {
                    SimTime::ns(lo)
                } else {
                    SimTime::ns(rng.range_inclusive(lo, hi))
                }
            }
            Dist::LogNormal { mu, sigma, max } => {
                let v = if sigma == 0.0 {
                    mu.exp()
                } else {
                    LogNormal::new(mu, sigma)
                        .expect("validated parameters")
                        .sample(&mut rng.rng)
                };
                SimTime::from_ns_f64_ceil(v).min(SimTime::ns(max))
            }
        }
    }

    /// Support of the distribution, `[min, max]`.
    pub fn bounds(&self) -> (u64, u64) {
        match *self {
            Dist::Constant(c) => (c, c),
            Dist::Uniform { lo, hi } => (lo, hi),
            Dist::LogNormal { max, .. } => (0, max),
        }
    }

    /// Mean of the distribution ignoring truncation.
    pub fn nominal_mean(&self) -> f64 {
        match *self {
            Dist::Constant(c) => c as f64,
            Dist::Uniform { lo, hi } => (lo as f64 + hi as f64) / 2.0,
            Dist::LogNormal { mu, sigma, .. } => (mu + sigma * sigma / 2.0).exp(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Dist::Constant(0))
    }
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dist::Constant(c) => write!(f, "constant({c})"),
            Dist::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
            Dist::LogNormal { mu, sigma, max } => write!(f, "lognormal({mu:?},{sigma:?},{max})"),
        }
    }
}

impl FromStr for Dist {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Dist> {
        let bad = || SimError::InvalidDistribution(format!("cannot parse `{s}`"));
        let s = s.trim();
        let open = s.find('(').ok_or_else(bad)?;
        if !s.ends_with(')') {
            return Err(bad());
        }
        let name = s[..open].trim();
        let args: Vec<&str> = s[open + 1..s.len() - 1].split(',').map(str::trim).collect();
        let int = |a: &str| a.parse::<u64>().map_err(|_| bad());
        let float = |a: &str| a.parse::<f64>().map_err(|_| bad());
        match (name, args.as_slice()) {
            ("constant", [c]) => Ok(Dist::Constant(int(c)?)),
            ("uniform", [lo, hi]) => Dist::uniform(int(lo)?, int(hi)?),
            ("lognormal", [mu, sigma, max]) => {
                Dist::lognormal(float(mu)?, float(sigma)?, int(max)?)
            }
            ("lognormal_mean", [mean, sigma, max]) => {
                Dist::lognormal_with_mean(float(mean)?, float(sigma)?, int(max)?)
            }
            _ => Err(bad()),
        }
    }
}
