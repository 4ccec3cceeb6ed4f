use std::io::Write;

use nalgebra::{Complex, DMatrix, SymmetricEigen, Vector3};

use super::shifts::LevelShiftResult;
use crate::atomic_data::{AtomicData, Level, LevelId};
use crate::trap_optics::ToneField;
use crate::{Error, Result};

type C64 = Complex<f64>;

/// Spin-F matrices (Fx, Fy, Fz) in the basis m = F, F−1, …, −F.
fn spin_matrices(f: u32) -> [DMatrix<C64>; 3] {
    let n = 2 * f as usize + 1;
    let ff = f as f64;
    let m = |i: usize| ff - i as f64;
    let mut fz = DMatrix::zeros(n, n);
    let mut fplus = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        fz[(i, i)] = C64::new(m(i), 0.0);
        if i > 0 {
            // ⟨m+1|F₊|m⟩ with m = m(i)
            let mi = m(i);
            fplus[(i - 1, i)] = C64::new((ff * (ff + 1.0) - mi * (mi + 1.0)).sqrt(), 0.0);
        }
    }
    let fminus = fplus.adjoint();
    let fx = (&fplus + &fminus) * C64::new(0.5, 0.0);
    let fy = (&fplus - &fminus) * C64::new(0.0, -0.5);
    [fx, fy, fz]
}

/// Stark operator of one 5P₃/₂ hyperfine level, per unit intensity of each
/// tone: −(1/2ε₀c)[α_s + α_t(3(F̂·ε̂)² − F̂²)/(F(2F−1))].
#[derive(Debug, Clone)]
pub struct SublevelOperator {
    f: u32,
    per_tone: Vec<DMatrix<C64>>,
    tones: Vec<ToneField>,
}

impl SublevelOperator {
    pub fn new(f: u32, tones: &[ToneField]) -> Result<Self> {
        Self::with_tensor(f, tones, true)
    }

    /// With `tensor == false` the operator keeps only the scalar part.
    pub fn with_tensor(f: u32, tones: &[ToneField], tensor: bool) -> Result<Self> {
        let data = AtomicData::rb87();
        let id = LevelId::new(Level::P5ThreeHalves).with_f(f, data.constants.nuclear_spin_twice)?;
        let n = 2 * f as usize + 1;
        let spin = spin_matrices(f);
        let ff = f as f64;
        let f2 = ff * (ff + 1.0);
        let mut per_tone = Vec::with_capacity(tones.len());
        for t in tones {
            t.validate()?;
            let e = data.entry(id, t.wavelength)?;
            let mut op = DMatrix::<C64>::identity(n, n) * C64::new(e.scalar, 0.0);
            if tensor && f >= 1 && e.tensor != 0.0 {
                let pol = t.polarization;
                let fe =
                    &spin[0] * C64::new(pol.x, 0.0) + &spin[1] * C64::new(pol.y, 0.0) + &spin[2] * C64::new(pol.z, 0.0);
                let rank2 = (&fe * &fe) * C64::new(3.0, 0.0) - DMatrix::<C64>::identity(n, n) * C64::new(f2, 0.0);
                op += rank2 * C64::new(e.tensor / (ff * (2.0 * ff - 1.0)), 0.0);
            }
            per_tone.push(op * C64::new(data.constants.light_shift(1.0, 1.0), 0.0));
        }
        Ok(Self {
            f,
            per_tone,
            tones: tones.to_vec(),
        })
    }

    pub fn f(&self) -> u32 {
        self.f
    }

    /// Hermitian Stark operator (J) at `point` in the m basis along z.
    pub fn matrix(&self, point: &Vector3<f64>) -> DMatrix<C64> {
        let n = 2 * self.f as usize + 1;
        let mut h = DMatrix::<C64>::zeros(n, n);
        for (t, op) in self.tones.iter().zip(&self.per_tone) {
            let i = t.intensity_at(point);
            if i != 0.0 {
                h += op * C64::new(i, 0.0);
            }
        }
        h
    }

    /// Sublevel energies (J) at `point`, ascending.
    pub fn eigenvalues(&self, point: &Vector3<f64>) -> Vec<f64> {
        let h = self.matrix(point);
        let mut values: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        values.sort_by(f64::total_cmp);
        values
    }

    /// Whether every lit tone shares one polarization axis, so the
    /// eigenstates are m_F states along it.
    pub fn common_axis(&self) -> Option<Vector3<f64>> {
        let mut lit = self.tones.iter().filter(|t| t.power > 0.0);
        let first = lit.next()?.polarization;
        lit.all(|t| t.polarization.cross(&first).norm() < 1e-9).then_some(first)
    }
}

/// Eigenvalues of the full scalar + tensor Stark operator of 5P₃/₂ F′.
pub fn sublevel_shifts(f: u32, tones: &[ToneField], point: &Vector3<f64>) -> Result<LevelShiftResult> {
    let op = SublevelOperator::new(f, tones)?;
    let values = op.eigenvalues(point);
    let data = AtomicData::rb87();
    let scalar = values.iter().sum::<f64>() / values.len() as f64;
    let level = LevelId::new(Level::P5ThreeHalves).with_f(f, data.constants.nuclear_spin_twice)?;
    if values.len() != 2 * f as usize + 1 {
        return Err(Error::InvalidInput("sublevel count mismatch".into()));
    }
    Ok(LevelShiftResult {
        level,
        position: *point,
        scalar,
        sublevels: Some(values),
    })
}

/// Writes a sublevel table. The first column is m_F when all tones share a
/// polarization axis and the eigenvalue index otherwise.
pub fn write_sublevel_csv<W: Write>(f: u32, tones: &[ToneField], point: &Vector3<f64>, mut out: W) -> Result<()> {
    let op = SublevelOperator::new(f, tones)?;
    let result = sublevel_shifts(f, tones, point)?;
    let shifts = result.sublevels_mhz().unwrap_or_default();
    for t in tones {
        writeln!(out, "# tone {:.1} nm {:.4} W", t.wavelength * 1e9, t.power)?;
    }
    match op.common_axis() {
        Some(_) => {
            // rotate the common axis onto z so the operator is diagonal in m
            let aligned: Vec<ToneField> = tones
                .iter()
                .cloned()
                .map(|t| t.with_polarization(Vector3::z()))
                .collect();
            let h = SublevelOperator::new(f, &aligned)?.matrix(point);
            let planck = AtomicData::rb87().constants.planck;
            writeln!(out, "m_F,shift_MHz")?;
            for i in (0..h.nrows()).rev() {
                let m = f as i32 - i as i32;
                writeln!(out, "{m},{:.6}", h[(i, i)].re / planck * 1e-6)?;
            }
        }
        None => {
            writeln!(out, "eigen_index,shift_MHz")?;
            for (i, s) in shifts.iter().enumerate() {
                writeln!(out, "{i},{s:.6}")?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightshift::compensation_template;

    fn tones(comp: f64) -> Vec<ToneField> {
        vec![
            ToneField::new(1560e-9, 36.0, 157e-6),
            compensation_template().with_power(comp),
        ]
    }

    #[test]
    fn spin_algebra() {
        let [fx, fy, fz] = spin_matrices(3);
        let comm = &fx * &fy - &fy * &fx;
        let target = &fz * C64::new(0.0, 1.0);
        assert!((comm - target).norm() < 1e-12);
        let casimir = &fx * &fx + &fy * &fy + &fz * &fz;
        assert!((casimir - DMatrix::identity(7, 7) * C64::new(12.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn spreads_grow_with_compensation() {
        let o = Vector3::zeros();
        // frozen from an independent dense-matrix evaluation
        let expected = [(0.0, 21.07), (2.8, 30.72), (5.2, 40.92)];
        let mut last = 0.0;
        for (p, spread) in expected {
            let r = sublevel_shifts(3, &tones(p), &o).unwrap();
            assert_eq!(r.sublevels.as_ref().unwrap().len(), 7);
            assert!((r.spread_mhz() - spread).abs() < 0.05, "{p}: {}", r.spread_mhz());
            assert!(r.spread_mhz() > last);
            last = r.spread_mhz();
        }
    }

    #[test]
    fn trace_equals_scalar_shift() {
        let o = Vector3::new(1e-3, 2e-5, 0.0);
        let t = tones(2.8);
        let r = sublevel_shifts(3, &t, &o).unwrap();
        let scalar = crate::lightshift::level_shift(Level::P5ThreeHalves.into(), &t, &o)
            .unwrap()
            .scalar;
        assert!((r.scalar - scalar).abs() < 1e-9 * scalar.abs().max(1e-30));
    }

    #[test]
    fn scalar_only_is_degenerate() {
        let op = SublevelOperator::with_tensor(3, &tones(0.0)[..1], false).unwrap();
        let v = op.eigenvalues(&Vector3::zeros());
        assert!(v.iter().all(|&e| (e - v[0]).abs() < 1e-12 * v[0].abs()));
    }

    #[test]
    fn f2_has_no_tensor_splitting() {
        let r = sublevel_shifts(2, &tones(5.2), &Vector3::zeros()).unwrap();
        assert_eq!(r.sublevels.as_ref().unwrap().len(), 5);
        assert!(r.spread_mhz() < 1e-9);
    }

    #[test]
    fn parallel_tones_label_by_m() {
        let mut t = tones(2.8);
        t[1].polarization = Vector3::z();
        let mut buf = Vec::new();
        write_sublevel_csv(3, &t, &Vector3::zeros(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("m_F,shift_MHz"));
        assert!(text.lines().any(|l| l.starts_with("-3,")));
        let mut buf = Vec::new();
        write_sublevel_csv(3, &tones(2.8), &Vector3::zeros(), &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("eigen_index,shift_MHz"));
    }
}
