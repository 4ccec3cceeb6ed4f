use std::io::Write;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::beam::ToneField;
use crate::atomic_data::{AtomicData, Level};
use crate::numeric::golden_max;
use crate::{Error, Result};

/// Uniform gravitational acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gravity {
    /// m/s².
    pub acceleration: f64,
    /// Unit vector along which gravity pulls.
    pub direction: Vector3<f64>,
}

impl Gravity {
    /// Standard gravity pulling along −z, perpendicular to the cavity axis.
    pub fn standard() -> Self {
        Self {
            acceleration: AtomicData::rb87().constants.standard_gravity,
            direction: -Vector3::z(),
        }
    }

    pub fn new(acceleration: f64, direction: Vector3<f64>) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0) || !acceleration.is_finite() || acceleration < 0.0 {
            return Err(Error::InvalidInput(
                "gravity needs a non-zero direction and g ≥ 0".into(),
            ));
        }
        Ok(Self {
            acceleration,
            direction: direction / n,
        })
    }

    /// Force on a mass (N).
    pub fn force(&self, mass: f64) -> Vector3<f64> {
        self.direction * (mass * self.acceleration)
    }

    /// Potential energy relative to the origin (J).
    pub fn potential(&self, mass: f64, point: &Vector3<f64>) -> f64 {
        -mass * self.acceleration * self.direction.dot(point)
    }
}

/// Ground-state (5S₁/₂) dipole potential of a set of tones, with the
/// polarizabilities resolved once.
#[derive(Debug, Clone)]
pub struct GroundPotential {
    tones: Vec<ToneField>,
    /// −α_s/(2ε₀c) per tone: energy per unit intensity (J m²/W).
    coefficients: Vec<f64>,
}

impl GroundPotential {
    pub fn new(tones: &[ToneField]) -> Result<Self> {
        let data = AtomicData::rb87();
        let mut coefficients = Vec::with_capacity(tones.len());
        for tone in tones {
            tone.validate()?;
            let alpha = data.scalar_polarizability(Level::S5Half, tone.wavelength)?;
            coefficients.push(data.constants.light_shift(alpha, 1.0));
        }
        Ok(Self {
            tones: tones.to_vec(),
            coefficients,
        })
    }

    pub fn tones(&self) -> &[ToneField] {
        &self.tones
    }

    /// Potential energy (J).
    pub fn at(&self, point: &Vector3<f64>) -> f64 {
        self.tones
            .iter()
            .zip(&self.coefficients)
            .map(|(t, c)| c * t.intensity_at(point))
            .sum()
    }

    /// Potential energy and its gradient.
    pub fn with_gradient(&self, point: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let mut u = 0.0;
        let mut g = Vector3::zeros();
        for (t, c) in self.tones.iter().zip(&self.coefficients) {
            let (i, gi) = t.intensity_and_gradient(point);
            u += c * i;
            g += gi * *c;
        }
        (u, g)
    }

    fn length_scales(&self) -> (f64, f64) {
        let lit = self.tones.iter().filter(|t| t.power > 0.0);
        let w = lit.clone().map(|t| t.waist).fold(f64::INFINITY, f64::min);
        let zr = lit.map(|t| t.rayleigh_range()).fold(f64::INFINITY, f64::min);
        (w, zr)
    }
}

/// Σ_tones −α_s(5S₁/₂)·I/(2ε₀c) at `point` (J).
pub fn ground_potential(tones: &[ToneField], point: &Vector3<f64>) -> Result<f64> {
    Ok(GroundPotential::new(tones)?.at(point))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapShape {
    /// Depth to the lowest escape path, including gravity sag if enabled (J).
    pub depth: f64,
    /// Depth of the optical potential alone (J).
    pub optical_depth: f64,
    /// Harmonic frequencies along x (cavity axis), y and z (Hz).
    pub frequencies: [f64; 3],
    /// Location of the potential minimum (m).
    pub minimum: Vector3<f64>,
    /// Escape saddle along the gravity direction, if gravity is enabled.
    pub saddle: Option<Vector3<f64>>,
}

impl TrapShape {
    pub fn depth_uk(&self) -> f64 {
        self.depth / AtomicData::rb87().constants.boltzmann * 1e6
    }

    pub fn optical_depth_uk(&self) -> f64 {
        self.optical_depth / AtomicData::rb87().constants.boltzmann * 1e6
    }
}

struct Landscape<'a> {
    optical: &'a GroundPotential,
    gravity: Option<Gravity>,
    mass: f64,
    steps: Vector3<f64>,
}

impl Landscape<'_> {
    fn energy(&self, p: &Vector3<f64>) -> f64 {
        self.optical.at(p) + self.gravity.map_or(0.0, |g| g.potential(self.mass, p))
    }

    fn gradient(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let g = self.optical.with_gradient(p).1;
        match self.gravity {
            Some(grav) => g - grav.force(self.mass),
            None => g,
        }
    }

    fn hessian(&self, p: &Vector3<f64>) -> Matrix3<f64> {
        let mut h = Matrix3::zeros();
        for j in 0..3 {
            let mut a = *p;
            let mut b = *p;
            a[j] += self.steps[j];
            b[j] -= self.steps[j];
            let col = (self.gradient(&a) - self.gradient(&b)) / (2.0 * self.steps[j]);
            h.set_column(j, &col);
        }
        (h + h.transpose()) * 0.5
    }

    /// Newton iteration from the origin; fails if the minimum runs off to
    /// the edge of the mode.
    fn minimum(&self, w: f64, zr: f64) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        let mut p = Vector3::zeros();
        for _ in 0..100 {
            let h = self.hessian(&p);
            let eig = SymmetricEigen::new(h);
            if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
                return Err(Error::NotTrapping(
                    "potential is not confining at the trial point".into(),
                ));
            }
            let step = eig
                .recompose()
                .try_inverse()
                .ok_or_else(|| Error::NotTrapping("singular Hessian".into()))?
                * self.gradient(&p);
            p -= step;
            if p.x.abs() > 10.0 * zr || (p.y * p.y + p.z * p.z).sqrt() > 2.0 * w {
                return Err(Error::NotTrapping("potential minimum lies at the boundary".into()));
            }
            if step.x.abs() < 1e-9 * zr && step.yz().norm() < 1e-9 * w {
                return Ok((p, self.hessian(&p)));
            }
        }
        Err(Error::NotTrapping("potential minimum search did not converge".into()))
    }
}

/// Depth, minimum and harmonic frequencies of the ground-state trap.
pub fn trap_shape(tones: &[ToneField], gravity: Option<Gravity>) -> Result<TrapShape> {
    let optical = GroundPotential::new(tones)?;
    let (w, zr) = optical.length_scales();
    if !w.is_finite() {
        return Err(Error::NotTrapping("no tone carries power".into()));
    }
    let mass = AtomicData::rb87().constants.mass;
    let steps = Vector3::new(zr * 1e-4, w * 1e-4, w * 1e-4);
    let bare = Landscape {
        optical: &optical,
        gravity: None,
        mass,
        steps,
    };
    let (optical_min, _) = bare.minimum(w, zr)?;
    let optical_depth = -optical.at(&optical_min);
    if !(optical_depth > 0.0) {
        return Err(Error::NotTrapping("net potential is not attractive".into()));
    }

    let full = Landscape { gravity, ..bare };
    let (minimum, hessian) = full.minimum(w, zr)?;
    let u_min = full.energy(&minimum);
    let frequencies = [0, 1, 2].map(|i| (hessian[(i, i)].max(0.0) / mass).sqrt() / (2.0 * std::f64::consts::PI));

    let (depth, saddle) = match gravity {
        None => (-u_min, None),
        Some(g) => {
            let d = g.direction;
            let reach = 4.0 * (d.x.abs() * 10.0 * zr + d.yz().norm() * w);
            let along = |s: f64| full.energy(&(minimum + d * s));
            let n = 2000;
            let ds = reach / n as f64;
            let mut prev = along(0.0);
            let mut peak = None;
            for i in 1..=n {
                let u = along(i as f64 * ds);
                if u < prev && i > 1 {
                    peak = Some(golden_max(along, (i as f64 - 2.0) * ds, i as f64 * ds, ds * 1e-6));
                    break;
                }
                prev = u;
            }
            let s = peak.ok_or_else(|| Error::NotTrapping("gravity exceeds the maximum dipole force".into()))?;
            let saddle = minimum + d * s;
            (full.energy(&saddle) - u_min, Some(saddle))
        }
    };
    Ok(TrapShape {
        depth,
        optical_depth,
        frequencies,
        minimum,
        saddle,
    })
}

/// Writes `x,y,z,U` rows (SI) for every point of the Cartesian product grid.
pub fn write_potential_grid<W: Write>(
    potential: &GroundPotential,
    gravity: Option<Gravity>,
    xs: &[f64],
    ys: &[f64],
    zs: &[f64],
    mut out: W,
) -> Result<()> {
    let mass = AtomicData::rb87().constants.mass;
    writeln!(out, "x,y,z,U")?;
    for &x in xs {
        for &y in ys {
            for &z in zs {
                let p = Vector3::new(x, y, z);
                let u = potential.at(&p) + gravity.map_or(0.0, |g| g.potential(mass, &p));
                writeln!(out, "{x:e},{y:e},{z:e},{u:e}")?;
            }
        }
    }
    Ok(())
}
