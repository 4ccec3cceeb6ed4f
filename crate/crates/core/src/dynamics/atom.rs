use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};

use super::config::{InjectionGeometry, SourceConfig};
use crate::atomic_data::{AtomicData, GroundManifold};
use crate::{Error, Result};

/// One macro-atom. Each atom owns a random stream derived from the run
/// seed and its id, so trajectories do not depend on scheduling.
#[derive(Debug, Clone)]
pub struct Atom {
    pub id: u64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub manifold: GroundManifold,
    /// Expected number of scattered photons so far.
    pub scattered: f64,
    pub born: f64,
    /// Time of one-body loss.
    pub death: f64,
    pub(crate) rng: ChaCha8Rng,
}

impl Atom {
    pub fn new(id: u64, seed: u64, position: Vector3<f64>, velocity: Vector3<f64>) -> Self {
        Self {
            id,
            position,
            velocity,
            manifold: GroundManifold::F2,
            scattered: 0.0,
            born: 0.0,
            death: f64::INFINITY,
            rng: atom_rng(seed, id),
        }
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * AtomicData::rb87().constants.mass * self.velocity.norm_squared()
    }
}

pub(crate) fn atom_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.wrapping_add(1));
    rng
}

/// Stream reserved for injection counts and positions.
pub(crate) fn source_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

/// Maxwell–Boltzmann velocity at temperature `t` (K).
pub fn thermal_velocity<R: Rng + ?Sized>(t: f64, rng: &mut R) -> Vector3<f64> {
    let c = &AtomicData::rb87().constants;
    let sv = (c.boltzmann * t / c.mass).sqrt();
    if sv == 0.0 {
        return Vector3::zeros();
    }
    let n = Normal::new(0.0, sv).expect("finite width");
    Vector3::from_fn(|_, _| n.sample(rng))
}

/// Draws the macro-atoms delivered by the source during one step.
///
/// The count is Poisson with mean rate·dt·scale. Ids start at `next_id`;
/// each atom's loss time is drawn from its own stream.
#[allow(clippy::too_many_arguments)]
pub fn inject<R: Rng + ?Sized>(
    source: &SourceConfig,
    center: &Vector3<f64>,
    dt: f64,
    scale: f64,
    t: f64,
    loss_rate: f64,
    seed: u64,
    next_id: &mut u64,
    rng: &mut R,
) -> Result<Vec<Atom>> {
    let mean = source.rate * dt * scale;
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::InvalidInput("injection mean must be finite and ≥ 0".into()));
    }
    let count = if mean == 0.0 {
        0
    } else {
        Poisson::new(mean)
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .sample(rng) as u64
    };
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let offset = match source.geometry {
            InjectionGeometry::Ring { radius } => {
                let phi = rng.random::<f64>() * 2.0 * PI;
                Vector3::new(0.0, phi.cos(), phi.sin()) * radius
            }
            InjectionGeometry::Shell { radius } => {
                let cos_t = 2.0 * rng.random::<f64>() - 1.0;
                let sin_t = (1.0 - cos_t * cos_t).sqrt();
                let phi = rng.random::<f64>() * 2.0 * PI;
                Vector3::new(sin_t * phi.cos(), sin_t * phi.sin(), cos_t) * radius
            }
        };
        let mut atom = Atom::new(*next_id, seed, center + offset, Vector3::zeros());
        *next_id += 1;
        atom.velocity = thermal_velocity(source.temperature, &mut atom.rng);
        atom.born = t;
        atom.death = if loss_rate > 0.0 {
            t + Exp::new(loss_rate).expect("positive rate").sample(&mut atom.rng)
        } else {
            f64::INFINITY
        };
        out.push(atom);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source() -> SourceConfig {
        SourceConfig {
            rate: 1e6,
            temperature: 300e-6,
            geometry: InjectionGeometry::Ring { radius: 500e-6 },
        }
    }

    #[test]
    fn mean_count_and_ring_geometry() {
        let mut rng = source_rng(1);
        let mut id = 0;
        let c = Vector3::new(0.0, 1e-3, 0.0);
        let mut total = 0;
        for _ in 0..100 {
            let atoms = inject(&source(), &c, 1e-3, 0.1, 0.0, 1.0, 1, &mut id, &mut rng).unwrap();
            for a in &atoms {
                assert!(((a.position - c).norm() - 500e-6).abs() < 1e-12);
                assert_eq!(a.position.x, 0.0);
                assert!(a.death > 0.0);
            }
            total += atoms.len();
        }
        // mean 100 per step
        assert!((total as f64 / 100.0 - 100.0).abs() < 5.0, "{total}");
        assert_eq!(id as usize, total);
    }

    #[test]
    fn zero_rate_injects_nothing() {
        let s = SourceConfig { rate: 0.0, ..source() };
        let mut id = 0;
        let a = inject(
            &s,
            &Vector3::zeros(),
            1e-3,
            1.0,
            0.0,
            0.0,
            1,
            &mut id,
            &mut source_rng(1),
        )
        .unwrap();
        assert!(a.is_empty());
    }

    #[test]
    fn velocities_are_thermal() {
        let c = &AtomicData::rb87().constants;
        let mut rng = source_rng(3);
        let n = 20_000;
        let var: f64 = (0..n)
            .map(|_| thermal_velocity(300e-6, &mut rng).x.powi(2))
            .sum::<f64>()
            / n as f64;
        let t = c.mass * var / c.boltzmann;
        assert!((t - 300e-6).abs() / 300e-6 < 0.03, "{t}");
    }

    #[test]
    fn streams_are_independent_of_order() {
        let a = thermal_velocity(1e-4, &mut atom_rng(9, 4));
        let _ = thermal_velocity(1e-4, &mut atom_rng(9, 3));
        let b = thermal_velocity(1e-4, &mut atom_rng(9, 4));
        assert_eq!(a, b);
        assert_ne!(a, thermal_velocity(1e-4, &mut atom_rng(9, 5)));
    }
}
