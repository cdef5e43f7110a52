//! Frame-major spectral containers and the polar/cartesian conversions between them.

use crate::dsp::phase::phi;
use crate::error::{Error, Result};
use crate::float::Float;

/// Floor applied to every magnitude before taking a logarithm.
pub const AMP_FLOOR: f64 = 1e-5;

/// Dense row-major `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Float> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape("matrix", &[rows, cols], &[data.len()]));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Float>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `frames × bins` complex STFT values stored as two real planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram<T: Float = f32> {
    real: Matrix<T>,
    imag: Matrix<T>,
}

impl<T: Float> ComplexSpectrogram<T> {
    pub fn from_parts(frames: usize, bins: usize, real: Vec<T>, imag: Vec<T>) -> Result<Self> {
        let real = Matrix::new(frames, bins, real)?;
        let imag = Matrix::new(frames, bins, imag)?;
        Self::new(real, imag)
    }

    pub fn new(real: Matrix<T>, imag: Matrix<T>) -> Result<Self> {
        if real.shape() != imag.shape() {
            return Err(Error::shape("complex spectrogram", &real.shape(), &imag.shape()));
        }
        Ok(ComplexSpectrogram { real, imag })
    }

    pub fn zeros(frames: usize, bins: usize) -> Self {
        ComplexSpectrogram {
            real: Matrix::zeros(frames, bins),
            imag: Matrix::zeros(frames, bins),
        }
    }

    pub fn frames(&self) -> usize {
        self.real.rows()
    }

    pub fn bins(&self) -> usize {
        self.real.cols()
    }

    pub fn real(&self) -> &[T] {
        self.real.as_slice()
    }

    pub fn imag(&self) -> &[T] {
        self.imag.as_slice()
    }

    pub fn real_matrix(&self) -> &Matrix<T> {
        &self.real
    }

    pub fn imag_matrix(&self) -> &Matrix<T> {
        &self.imag
    }

    pub fn magnitude(&self) -> Matrix<T> {
        let data = self
            .real()
            .iter()
            .zip(self.imag())
            .map(|(&r, &i)| (r * r + i * i).sqrt())
            .collect();
        Matrix {
            rows: self.frames(),
            cols: self.bins(),
            data,
        }
    }
}

/// Natural-log magnitudes, floored at `log(AMP_FLOOR)` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LogAmplitudeSpectrogram<T: Float = f32>(pub Matrix<T>);

/// Wrapped phase in `(-π, π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpectrogram<T: Float = f32>(pub Matrix<T>);

pub fn log_amplitude<T: Float>(spec: &ComplexSpectrogram<T>, amp_floor: T) -> Result<LogAmplitudeSpectrogram<T>> {
    if !(amp_floor > T::zero()) {
        return Err(Error::InvalidArgument("amp_floor must be positive".into()));
    }
    Ok(LogAmplitudeSpectrogram(spec.magnitude().map(|m| m.max(amp_floor).ln())))
}

pub fn phase_of<T: Float>(spec: &ComplexSpectrogram<T>) -> PhaseSpectrogram<T> {
    let data = spec.real().iter().zip(spec.imag()).map(|(&r, &i)| phi(r, i)).collect();
    PhaseSpectrogram(Matrix {
        rows: spec.frames(),
        cols: spec.bins(),
        data,
    })
}

/// `e^a · (cos p, sin p)` element-wise.
pub fn reconstruct_complex<T: Float>(
    log_amp: &LogAmplitudeSpectrogram<T>,
    phase: &PhaseSpectrogram<T>,
) -> Result<ComplexSpectrogram<T>> {
    let (a, p) = (&log_amp.0, &phase.0);
    if a.shape() != p.shape() {
        return Err(Error::shape("reconstruct_complex", &a.shape(), &p.shape()));
    }
    let (re, im): (Vec<T>, Vec<T>) = a
        .as_slice()
        .iter()
        .zip(p.as_slice())
        .map(|(&a, &p)| {
            let m = a.exp();
            (m * p.cos(), m * p.sin())
        })
        .unzip();
    ComplexSpectrogram::from_parts(a.rows(), a.cols(), re, im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn single(re: f64, im: f64) -> ComplexSpectrogram<f64> {
        ComplexSpectrogram::from_parts(1, 1, vec![re], vec![im]).unwrap()
    }

    #[test]
    fn log_amplitude_examples() {
        let floor = AMP_FLOOR;
        assert_eq!(log_amplitude(&single(1.0, 0.0), floor).unwrap().0.get(0, 0), 0.0);
        let silent = log_amplitude(&single(0.0, 0.0), floor).unwrap().0.get(0, 0);
        assert!((silent - (-11.512925464970229)).abs() < 1e-12);
        let five = log_amplitude(&single(3.0, 4.0), floor).unwrap().0.get(0, 0);
        assert!((five - 5f64.ln()).abs() < 1e-15);
        assert!(log_amplitude(&single(1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn reconstruct_examples() {
        let a = LogAmplitudeSpectrogram(Matrix::new(1, 2, vec![0.0, 2f64.ln()]).unwrap());
        let p = PhaseSpectrogram(Matrix::new(1, 2, vec![0.0, PI / 2.0]).unwrap());
        let s = reconstruct_complex(&a, &p).unwrap();
        assert_eq!((s.real()[0], s.imag()[0]), (1.0, 0.0));
        assert!(s.real()[1].abs() < 1e-7 && (s.imag()[1] - 2.0).abs() < 1e-7);

        let bad = PhaseSpectrogram(Matrix::<f64>::zeros(2, 2));
        assert!(reconstruct_complex(&a, &bad).is_err());
    }

    #[test]
    fn mismatched_planes_rejected() {
        assert!(ComplexSpectrogram::new(Matrix::<f32>::zeros(2, 3), Matrix::zeros(3, 2)).is_err());
    }

    proptest! {
        #[test]
        fn polar_roundtrip(values in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..64)) {
            let values: Vec<(f64, f64)> = values
                .into_iter()
                .filter(|(r, i)| (r * r + i * i).sqrt() > 1e-3)
                .collect();
            prop_assume!(!values.is_empty());
            let (re, im): (Vec<f64>, Vec<f64>) = values.iter().cloned().unzip();
            let s = ComplexSpectrogram::from_parts(1, re.len(), re, im).unwrap();
            let back = reconstruct_complex(&log_amplitude(&s, AMP_FLOOR).unwrap(), &phase_of(&s)).unwrap();
            for (a, b) in s.real().iter().zip(back.real()).chain(s.imag().iter().zip(back.imag())) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn phase_of_stays_in_principal_interval(re in -1e3f64..1e3, im in -1e3f64..1e3) {
            let p = phase_of(&single(re, im)).0.get(0, 0);
            prop_assert!(p > -PI && p <= PI);
        }
    }
}
