use nalgebra::{Cholesky, DMatrix, DVector, Dyn, RealField};

use super::measurement::MeasurementSet;
use super::EstimationError;

/// Filter estimate and its error covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState<T: RealField + Copy> {
    pub x: DVector<T>,
    pub p: DMatrix<T>,
}

impl<T: RealField + Copy> KalmanState<T> {
    pub fn new(x: DVector<T>, p: DMatrix<T>) -> Result<Self, EstimationError> {
        if p.nrows() != x.len() || p.ncols() != x.len() {
            return Err(EstimationError::Dimension {
                expected: x.len(),
                found: p.nrows(),
            });
        }
        Ok(Self { x, p })
    }

    /// Starts at `x` with covariance `variance * I`.
    pub fn diffuse(x: DVector<T>, variance: T) -> Self {
        let n = x.len();
        Self {
            x,
            p: DMatrix::identity(n, n) * variance,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// How the measurement update is computed. Both forms give the same
/// posterior in exact arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateForm {
    /// Gain form with a Joseph-stabilised covariance update.
    Gain,
    /// Information form: `P = (P^-1 + H' R^-1 H)^-1`.
    Information,
    /// Information form when there are at least as many rows as states,
    /// gain form otherwise.
    #[default]
    Auto,
}

/// Result of one predict/update cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T: RealField + Copy> {
    pub state: KalmanState<T>,
    /// `z - H x_pred`.
    pub innovation: DVector<T>,
}

fn spd_inverse<T: RealField + Copy>(m: DMatrix<T>) -> Result<DMatrix<T>, EstimationError> {
    match Cholesky::<T, Dyn>::new(m.clone()) {
        Some(ch) => Ok(ch.inverse()),
        None => m.try_inverse().ok_or(EstimationError::Singular),
    }
}

fn symmetrize<T: RealField + Copy>(p: &mut DMatrix<T>) {
    let half = T::from_subset(&0.5);
    let n = p.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = (p[(i, j)] + p[(j, i)]) * half;
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

/// Random-walk predict (`F = I`, process noise `q`) followed by the
/// measurement update. Covariances are kept exactly symmetric.
pub fn kalman_step<T: RealField + Copy>(
    prior: &KalmanState<T>,
    meas: &MeasurementSet<T>,
    h: &DMatrix<T>,
    q: &DMatrix<T>,
) -> Result<StepOutput<T>, EstimationError> {
    kalman_step_with(prior, meas, h, q, UpdateForm::Auto)
}

pub fn kalman_step_with<T: RealField + Copy>(
    prior: &KalmanState<T>,
    meas: &MeasurementSet<T>,
    h: &DMatrix<T>,
    q: &DMatrix<T>,
    form: UpdateForm,
) -> Result<StepOutput<T>, EstimationError> {
    let n = prior.dim();
    let m = meas.z.len();
    if h.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(EstimationError::Dimension {
            expected: n,
            found: h.ncols(),
        });
    }
    if h.nrows() != m || meas.r_diag.len() != m {
        return Err(EstimationError::Dimension {
            expected: h.nrows(),
            found: m,
        });
    }
    if meas.r_diag.iter().any(|r| *r <= T::zero()) {
        return Err(EstimationError::Singular);
    }

    let x_pred = prior.x.clone();
    let mut p_pred = &prior.p + q;
    symmetrize(&mut p_pred);
    let innovation = &meas.z - h * &x_pred;

    let form = match form {
        UpdateForm::Auto if m >= n => UpdateForm::Information,
        UpdateForm::Auto => UpdateForm::Gain,
        f => f,
    };
    let r_inv = meas.r_diag.map(|r| T::one() / r);

    let (x, mut p) = match form {
        UpdateForm::Information => {
            let mut ht_rinv = h.transpose();
            for (j, w) in r_inv.iter().enumerate() {
                ht_rinv.column_mut(j).scale_mut(*w);
            }
            let mut info = spd_inverse(p_pred)?;
            info += &ht_rinv * h;
            symmetrize(&mut info);
            let p = spd_inverse(info)?;
            let x = &x_pred + &p * (&ht_rinv * &innovation);
            (x, p)
        }
        _ => {
            let r = meas.r();
            let pht = &p_pred * h.transpose();
            let mut s = h * &pht + &r;
            symmetrize(&mut s);
            let s_inv = spd_inverse(s)?;
            let k = &pht * s_inv;
            let x = &x_pred + &k * &innovation;
            let ikh = DMatrix::<T>::identity(n, n) - &k * h;
            let p = &ikh * &p_pred * ikh.transpose() + &k * r * k.transpose();
            (x, p)
        }
    };
    symmetrize(&mut p);
    Ok(StepOutput {
        state: KalmanState { x, p },
        innovation,
    })
}

/// Sum of squared component errors.
pub fn squared_error<T: RealField + Copy>(estimate: &DVector<T>, truth: &DVector<f64>) -> f64 {
    estimate
        .iter()
        .zip(truth.iter())
        .map(|(e, t)| {
            let d = to_f64(*e) - t;
            d * d
        })
        .sum()
}

pub fn max_abs_error<T: RealField + Copy>(estimate: &DVector<T>, truth: &DVector<f64>) -> f64 {
    estimate
        .iter()
        .zip(truth.iter())
        .map(|(e, t)| (to_f64(*e) - t).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn to_f64<T: RealField + Copy>(v: T) -> f64 {
    v.to_subset().unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::grid::GridCase;
    use crate::estimation::measurement::{build_measurement_matrix, synthesize};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (GridCase, DMatrix<f64>) {
        let case = GridCase::builtin("case5").unwrap();
        let model = build_measurement_matrix::<f64>(&case, &case.agent_list()).unwrap();
        (case, model.h)
    }

    #[test]
    fn diffuse_prior_matches_weighted_least_squares() {
        let (case, h) = setup();
        let model = build_measurement_matrix::<f64>(&case, &case.agent_list()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let meas = synthesize(&model, &case.base_state(), 0.01, &[], 0.0, &mut rng);
        let prior = KalmanState::diffuse(DVector::zeros(case.state_dim()), 1e12);
        let q = DMatrix::zeros(case.state_dim(), case.state_dim());
        let out = kalman_step(&prior, &meas, &h, &q).unwrap();

        // independent normal-equation solve
        let w = DMatrix::from_diagonal(&meas.r_diag.map(|r| 1.0 / r));
        let g = h.transpose() * &w * &h;
        let rhs = h.transpose() * &w * &meas.z;
        let wls = g.lu().solve(&rhs).unwrap();
        assert!((&out.state.x - &wls).amax() < 1e-8);
    }

    #[test]
    fn zero_innovation_leaves_estimate() {
        let (case, h) = setup();
        let x = case.base_state();
        let meas = MeasurementSet {
            z: &h * &x,
            r_diag: DVector::from_element(h.nrows(), 1e-4),
        };
        let prior = KalmanState::diffuse(x.clone(), 1.0);
        let q = DMatrix::identity(x.len(), x.len()) * 1e-6;
        let out = kalman_step(&prior, &meas, &h, &q).unwrap();
        assert!(out.innovation.amax() < 1e-14);
        assert!((&out.state.x - &x).amax() < 1e-14);
    }

    #[test]
    fn update_does_not_grow_covariance() {
        let (case, h) = setup();
        let model = build_measurement_matrix::<f64>(&case, &case.agent_list()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let meas = synthesize(&model, &case.base_state(), 0.01, &[], 0.0, &mut rng);
        let prior = KalmanState::diffuse(case.base_state(), 0.5);
        let q = DMatrix::identity(h.ncols(), h.ncols()) * 1e-6;
        let out = kalman_step(&prior, &meas, &h, &q).unwrap();
        assert!(out.state.p.trace() <= (&prior.p + &q).trace());
    }

    #[test]
    fn forms_agree() {
        let (case, h) = setup();
        let model = build_measurement_matrix::<f64>(&case, &case.agent_list()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let meas = synthesize(&model, &case.base_state(), 0.01, &[], 0.0, &mut rng);
        let prior = KalmanState::diffuse(DVector::zeros(h.ncols()), 1.0);
        let q = DMatrix::identity(h.ncols(), h.ncols()) * 1e-6;
        let a = kalman_step_with(&prior, &meas, &h, &q, UpdateForm::Gain).unwrap();
        let b = kalman_step_with(&prior, &meas, &h, &q, UpdateForm::Information).unwrap();
        assert!((&a.state.x - &b.state.x).amax() < 1e-9);
        assert!((&a.state.p - &b.state.p).amax() < 1e-9);
    }

    #[test]
    fn covariance_stays_symmetric_over_many_steps() {
        let (case, h) = setup();
        let model = build_measurement_matrix::<f64>(&case, &case.agent_list()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = DMatrix::identity(h.ncols(), h.ncols()) * 1e-6;
        let mut st = KalmanState::diffuse(DVector::zeros(h.ncols()), 1e6);
        for _ in 0..1000 {
            let meas = synthesize(&model, &case.base_state(), 0.01, &[], 0.0, &mut rng);
            st = kalman_step(&st, &meas, &h, &q).unwrap().state;
            assert_eq!(st.p, st.p.transpose());
        }
        assert!(max_abs_error(&st.x, &case.base_state()) < 0.01);
    }

    #[test]
    fn innovations_are_white_at_steady_state() {
        let (case, h) = setup();
        let model = build_measurement_matrix::<f64>(&case, &case.agent_list()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = DMatrix::identity(h.ncols(), h.ncols()) * 1e-6;
        let mut st = KalmanState::diffuse(DVector::zeros(h.ncols()), 1e6);
        let x = case.base_state();
        let mut series = Vec::new();
        for step in 0..2000 {
            let meas = synthesize(&model, &x, 0.01, &[], 0.0, &mut rng);
            let out = kalman_step(&st, &meas, &h, &q).unwrap();
            st = out.state;
            if step >= 100 {
                series.push(out.innovation[0]);
            }
        }
        let n = series.len() as f64;
        let mean = series.iter().sum::<f64>() / n;
        let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let lag1 = series
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum::<f64>()
            / (n - 1.0);
        let rho = lag1 / var;
        // 4 standard errors of a white-noise lag-1 autocorrelation
        assert!(rho.abs() < 4.0 / n.sqrt(), "rho = {rho}");
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (_, h) = setup();
        let meas = MeasurementSet {
            z: DVector::zeros(3),
            r_diag: DVector::from_element(3, 1.0),
        };
        let st = KalmanState::diffuse(DVector::zeros(h.ncols()), 1.0);
        let q = DMatrix::zeros(h.ncols(), h.ncols());
        assert!(matches!(
            kalman_step(&st, &meas, &h, &q),
            Err(EstimationError::Dimension { .. })
        ));
    }

    #[test]
    fn errors_metrics() {
        let e = DVector::from_vec(vec![1.0, 2.0]);
        let t = DVector::from_vec(vec![0.5, 2.0]);
        assert_eq!(squared_error(&e, &t), 0.25);
        assert_eq!(max_abs_error(&e, &t), 0.5);
    }

    #[test]
    fn works_in_single_precision() {
        let case = GridCase::builtin("case5").unwrap();
        let model = build_measurement_matrix::<f32>(&case, &case.agent_list()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let meas = synthesize(&model, &case.base_state(), 0.01, &[], 0.0, &mut rng);
        let st = KalmanState::<f32>::diffuse(DVector::zeros(case.state_dim()), 10.0);
        let q = DMatrix::identity(case.state_dim(), case.state_dim()) * 1e-6;
        let out = kalman_step(&st, &meas, &model.h, &q).unwrap();
        assert!(max_abs_error(&out.state.x, &case.base_state()) < 0.05);
    }
}
