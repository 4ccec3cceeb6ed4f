use nalgebra::Vector3;

use crate::atomic_data::{AtomicData, Level, LevelId};
use crate::numeric::brent_root;
use crate::trap_optics::{Propagation, ToneField};
use crate::{Error, Result};

/// Per-level light shift at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelShiftResult {
    pub level: LevelId,
    pub position: Vector3<f64>,
    /// Scalar shift (J).
    pub scalar: f64,
    /// Eigenvalues of the Stark operator on the 2F+1 sublevels (J), ascending.
    pub sublevels: Option<Vec<f64>>,
}

impl LevelShiftResult {
    fn planck() -> f64 {
        AtomicData::rb87().constants.planck
    }

    pub fn scalar_hz(&self) -> f64 {
        self.scalar / Self::planck()
    }

    pub fn scalar_mhz(&self) -> f64 {
        self.scalar_hz() * 1e-6
    }

    pub fn sublevels_mhz(&self) -> Option<Vec<f64>> {
        let h = Self::planck();
        self.sublevels
            .as_ref()
            .map(|v| v.iter().map(|e| e / h * 1e-6).collect())
    }

    /// max − min sublevel shift (J); zero without sublevel data.
    pub fn spread(&self) -> f64 {
        match &self.sublevels {
            Some(v) if !v.is_empty() => {
                let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
                max - min
            }
            _ => 0.0,
        }
    }

    pub fn spread_mhz(&self) -> f64 {
        self.spread() / Self::planck() * 1e-6
    }
}

fn scalar_coefficients(level: Level, tones: &[ToneField]) -> Result<Vec<f64>> {
    let data = AtomicData::rb87();
    tones
        .iter()
        .map(|t| {
            t.validate()?;
            let alpha = data.scalar_polarizability(level, t.wavelength)?;
            Ok(data.constants.light_shift(alpha, 1.0))
        })
        .collect()
}

/// Scalar light shift of `level` (sum over tones of −α_s I/(2ε₀c)).
///
/// With an F label the sublevel list holds 2F+1 copies of the scalar shift;
/// use [`super::sublevel_shifts`] for the tensor splitting.
pub fn level_shift(level: LevelId, tones: &[ToneField], point: &Vector3<f64>) -> Result<LevelShiftResult> {
    let coeffs = scalar_coefficients(level.level, tones)?;
    let scalar = tones.iter().zip(&coeffs).map(|(t, c)| c * t.intensity_at(point)).sum();
    Ok(LevelShiftResult {
        level,
        position: *point,
        scalar,
        sublevels: level.f.map(|f| vec![scalar; 2 * f as usize + 1]),
    })
}

/// Cooling-transition (5S₁/₂ → 5P₃/₂) scalar shift in Hz. Positive means
/// the transition frequency moves up.
pub fn differential_shift(tones: &[ToneField], point: &Vector3<f64>) -> Result<f64> {
    Ok(ShiftMap::new(tones)?.differential_hz(point))
}

/// Ground and excited scalar light shifts of a fixed tone set, with the
/// polarizabilities resolved once. Used in inner loops.
#[derive(Debug, Clone)]
pub struct ShiftMap {
    tones: Vec<ToneField>,
    ground: Vec<f64>,
    excited: Vec<f64>,
    planck: f64,
}

impl ShiftMap {
    pub fn new(tones: &[ToneField]) -> Result<Self> {
        Ok(Self {
            tones: tones.to_vec(),
            ground: scalar_coefficients(Level::S5Half, tones)?,
            excited: scalar_coefficients(Level::P5ThreeHalves, tones)?,
            planck: AtomicData::rb87().constants.planck,
        })
    }

    pub fn tones(&self) -> &[ToneField] {
        &self.tones
    }

    /// Changes one tone's power; polarizabilities stay valid.
    pub fn set_power(&mut self, index: usize, power: f64) {
        self.tones[index].power = power;
    }

    /// Ground potential (J), its gradient (J/m) and the differential shift (Hz).
    pub fn local(&self, point: &Vector3<f64>) -> (f64, Vector3<f64>, f64) {
        let mut u = 0.0;
        let mut grad = Vector3::zeros();
        let mut excited = 0.0;
        for ((t, cg), ce) in self.tones.iter().zip(&self.ground).zip(&self.excited) {
            let (i, gi) = t.intensity_and_gradient(point);
            u += cg * i;
            grad += gi * *cg;
            excited += ce * i;
        }
        (u, grad, (excited - u) / self.planck)
    }

    pub fn ground(&self, point: &Vector3<f64>) -> f64 {
        self.tones
            .iter()
            .zip(&self.ground)
            .map(|(t, c)| c * t.intensity_at(point))
            .sum()
    }

    pub fn excited(&self, point: &Vector3<f64>) -> f64 {
        self.tones
            .iter()
            .zip(&self.excited)
            .map(|(t, c)| c * t.intensity_at(point))
            .sum()
    }

    pub fn differential_hz(&self, point: &Vector3<f64>) -> f64 {
        let (mut g, mut e) = (0.0, 0.0);
        for ((t, cg), ce) in self.tones.iter().zip(&self.ground).zip(&self.excited) {
            let i = t.intensity_at(point);
            g += cg * i;
            e += ce * i;
        }
        (e - g) / self.planck
    }
}

/// Default compensation tone: 1527 nm, 155 µm waist, counter-propagating
/// and polarized orthogonally to a z-polarized trap.
pub fn compensation_template() -> ToneField {
    ToneField::new(1527e-9, 0.0, 155e-6)
        .with_polarization(Vector3::y())
        .with_propagation(Propagation::Backward)
}

/// Power of [`compensation_template`] that nulls the 5P₃/₂ scalar shift at
/// the focus of `trap`.
pub fn solve_compensation(trap: &ToneField) -> Result<ToneField> {
    solve_compensation_with(trap, &compensation_template())
}

/// As [`solve_compensation`] with a caller-supplied compensation geometry;
/// only the power of `template` is changed.
pub fn solve_compensation_with(trap: &ToneField, template: &ToneField) -> Result<ToneField> {
    trap.validate()?;
    let data = AtomicData::rb87();
    let a_trap = data.scalar_polarizability(Level::P5ThreeHalves, trap.wavelength)?;
    let a_comp = data.scalar_polarizability(Level::P5ThreeHalves, template.wavelength)?;
    if trap.power == 0.0 {
        return Ok(template.clone().with_power(0.0));
    }
    if a_trap.signum() == a_comp.signum() {
        return Err(Error::InvalidInput(format!(
            "{:.0} nm cannot cancel the excited-state shift of {:.0} nm",
            template.wavelength * 1e9,
            trap.wavelength * 1e9
        )));
    }
    let origin = Vector3::zeros();
    let target = trap.intensity_at(&origin) * a_trap;
    let residual = |p: f64| target + template.clone().with_power(p).intensity_at(&origin) * a_comp;
    let mut upper = trap.power.max(1e-12);
    while residual(upper).signum() == residual(0.0).signum() {
        upper *= 2.0;
        if !upper.is_finite() {
            return Err(Error::NonConvergence(0));
        }
    }
    let power = brent_root(residual, 0.0, upper, 1e-10, 1e-300)?;
    Ok(template.clone().with_power(power))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trap(p: f64) -> ToneField {
        ToneField::new(1560e-9, p, 157e-6)
    }

    fn comp(p: f64) -> ToneField {
        compensation_template().with_power(p)
    }

    #[test]
    fn ground_shift_of_full_trap() {
        let r = level_shift(Level::S5Half.into(), &[trap(36.0)], &Vector3::zeros()).unwrap();
        // oracle: −α I₀/(2ε₀c h) with I₀ = 9.2979e8 W/m²
        assert!((r.scalar_mhz() + 1.7985).abs() < 1e-3, "{}", r.scalar_mhz());
        assert!(r.sublevels.is_none());
    }

    #[test]
    fn no_tones_no_shift() {
        for level in [Level::S5Half, Level::P5ThreeHalves] {
            let r = level_shift(level.into(), &[], &Vector3::new(1e-4, 0.0, 0.0)).unwrap();
            assert_eq!(r.scalar, 0.0);
        }
    }

    #[test]
    fn unknown_level_propagates() {
        let err = level_shift(Level::S6Half.into(), &[trap(1.0)], &Vector3::zeros());
        assert!(matches!(err, Err(Error::UnknownLevel { .. })), "{err:?}");
    }

    #[test]
    fn f_label_gives_degenerate_copies() {
        let id = LevelId::new(Level::P5ThreeHalves).with_f(3, 3).unwrap();
        let r = level_shift(id, &[trap(36.0)], &Vector3::zeros()).unwrap();
        let subs = r.sublevels.unwrap();
        assert_eq!(subs.len(), 7);
        assert!(subs.iter().all(|&s| s == r.scalar));
    }

    #[test]
    fn differential_shifts_at_focus() {
        let o = Vector3::zeros();
        let d0 = differential_shift(&[trap(36.0), comp(0.0)], &o).unwrap() * 1e-6;
        assert!((d0 + 84.34).abs() < 0.05, "{d0}");
        let d5 = differential_shift(&[trap(36.0), comp(5.2)], &o).unwrap() * 1e-6;
        assert!((d5 - 69.80).abs() < 0.05, "{d5}");
        let far = differential_shift(&[trap(36.0), comp(5.2)], &Vector3::new(0.0, 0.01, 0.0)).unwrap();
        assert_eq!(far, 0.0);
    }

    #[test]
    fn compensation_nulls_excited_shift() {
        let t = trap(36.0);
        let c = solve_compensation(&t).unwrap();
        assert!((c.power - 2.911).abs() < 2e-3, "{}", c.power);
        let o = Vector3::zeros();
        let ratio = c.intensity_at(&o) / t.intensity_at(&o);
        assert!((1.0 / ratio - 12.053).abs() < 0.01, "{}", 1.0 / ratio);
        let bare = level_shift(Level::P5ThreeHalves.into(), std::slice::from_ref(&t), &o)
            .unwrap()
            .scalar;
        let left = level_shift(Level::P5ThreeHalves.into(), &[t, c], &o).unwrap().scalar;
        assert!(left.abs() < 1e-6 * bare.abs());
    }

    #[test]
    fn zero_power_trap_needs_no_compensation() {
        assert_eq!(solve_compensation(&trap(0.0)).unwrap().power, 0.0);
    }

    #[test]
    fn same_sign_tones_cannot_compensate() {
        let err = solve_compensation_with(&trap(36.0), &ToneField::new(1560e-9, 0.0, 157e-6));
        assert!(err.is_err());
    }

    #[test]
    fn shift_map_matches_free_functions() {
        let tones = [trap(36.0), comp(2.8)];
        let map = ShiftMap::new(&tones).unwrap();
        let p = Vector3::new(2e-3, 3e-5, -4e-5);
        let (u, _, d) = map.local(&p);
        let g = level_shift(Level::S5Half.into(), &tones, &p).unwrap().scalar;
        assert!((u - g).abs() <= 1e-12 * g.abs());
        assert!((d - differential_shift(&tones, &p).unwrap()).abs() < 1e-6);
    }
}
