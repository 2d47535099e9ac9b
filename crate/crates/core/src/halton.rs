//! Adaptive Halton sampling.
//!
//! Candidates come from a two-dimensional Halton sequence scaled to the
//! workspace. Each candidate is kept with a probability that depends on its
//! clearance: zero inside the safety margin, highest at the preferred
//! clearance, and decaying to a floor `beta` far from obstacles. Cluttered
//! regions therefore end up densely sampled and open regions sparsely.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::workspace::Workspace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HaltonConfig {
    pub bases: Vec<u64>,
    pub n_candidates: usize,
    pub delta_min: f64,
    pub delta_opt: f64,
    pub sigma: f64,
    pub beta: f64,
    pub seed: u64,
}

impl Default for HaltonConfig {
    fn default() -> Self {
        Self {
            bases: vec![2, 3],
            n_candidates: 2000,
            delta_min: 0.3,
            delta_opt: 0.4,
            sigma: 0.5,
            beta: 0.2,
            seed: 0,
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl HaltonConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.bases.len() != 2 {
            problems.push(format!("sampling needs exactly 2 bases, got {}", self.bases.len()));
        }
        if self.bases.iter().any(|&b| b < 2) {
            problems.push("every Halton base must be at least 2".to_string());
        }
        for (i, &a) in self.bases.iter().enumerate() {
            for &b in &self.bases[i + 1..] {
                if a >= 2 && b >= 2 && gcd(a, b) != 1 {
                    problems.push(format!("Halton bases {a} and {b} are not coprime"));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.beta) {
            problems.push(format!("beta {} outside [0, 1]", self.beta));
        }
        if !(self.delta_min >= 0.0) {
            problems.push(format!("delta_min {} must be non-negative", self.delta_min));
        }
        if !(self.delta_opt >= self.delta_min) {
            problems.push(format!(
                "delta_opt {} must be at least delta_min {}",
                self.delta_opt, self.delta_min
            ));
        }
        if !(self.sigma > 0.0) {
            problems.push(format!("sigma {} must be positive", self.sigma));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub index: u64,
    pub position: Point,
    pub clearance: f64,
    pub accepted: bool,
}

/// Digit-reversal of `i` in base `b`, mapped into [0, 1).
pub fn radical_inverse(mut i: u64, base: u64) -> f64 {
    assert!(base >= 2, "radical inverse base must be at least 2");
    let inv_base = 1.0 / base as f64;
    let mut scale = inv_base;
    let mut value = 0.0;
    while i > 0 {
        value += (i % base) as f64 * scale;
        i /= base;
        scale *= inv_base;
    }
    value
}

/// Raw Halton point `i` in the unit square.
pub fn halton_point(i: u64, bases: &[u64]) -> Point {
    Point::new(radical_inverse(i, bases[0]), radical_inverse(i, bases[1]))
}

pub fn acceptance_probability(delta: f64, cfg: &HaltonConfig) -> f64 {
    if delta < cfg.delta_min {
        return 0.0;
    }
    let z = delta - cfg.delta_opt;
    cfg.beta + (1.0 - cfg.beta) * (-(z * z) / (2.0 * cfg.sigma * cfg.sigma)).exp()
}

/// Draws all candidates `1..=n_candidates` and decides acceptance for each.
///
/// Returns every candidate (accepted or not) so callers can inspect the
/// rejected ones; use [`accepted_points`] for the map itself. One uniform
/// draw is consumed per candidate regardless of outcome, so candidate `i`
/// always sees the same draw for a given seed.
pub fn sample_map(ws: &Workspace, cfg: &HaltonConfig) -> Result<Vec<SamplePoint>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n_candidates);
    for i in 1..=cfg.n_candidates as u64 {
        let unit = halton_point(i, &cfg.bases);
        let position = Point::new(unit.x * ws.width, unit.y * ws.height);
        let clearance = ws.clearance(position, true)?;
        let u: f64 = rng.gen();
        let accepted = u < acceptance_probability(clearance, cfg);
        out.push(SamplePoint {
            index: i,
            position,
            clearance,
            accepted,
        });
    }
    if !out.iter().any(|s| s.accepted) {
        return Err(Error::Config(format!(
            "no candidate accepted out of {} (check sampling parameters)",
            cfg.n_candidates
        )));
    }
    Ok(out)
}

pub fn accepted_points(samples: &[SamplePoint]) -> Vec<SamplePoint> {
    samples.iter().filter(|s| s.accepted).cloned().collect()
}

/// CSV export: `i,x,y,delta,accepted`.
pub fn write_samples_csv<W: std::io::Write>(samples: &[SamplePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "x", "y", "delta", "accepted"])?;
    for s in samples {
        w.write_record([
            s.index.to_string(),
            s.position.x.to_string(),
            s.position.y.to_string(),
            s.clearance.to_string(),
            s.accepted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
