use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::grid::GridCase;
use super::EstimationError;
use crate::agent::AgentIndex;

/// Rows contributed by one reporting agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowBlock {
    pub agent: AgentIndex,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Voltage { bus: usize },
    Current { branch: usize, at_bus: usize },
}

/// Linear PMU model `z = H x` over rectangular bus voltages
/// `x = [Re V1, Im V1, Re V2, Im V2, ...]`. Every complex measurement
/// occupies two consecutive rows (real, imaginary).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel<T: RealField + Copy> {
    pub h: DMatrix<T>,
    pub blocks: Vec<RowBlock>,
    /// One entry per complex measurement, i.e. per row pair.
    pub kinds: Vec<RowKind>,
}

impl<T: RealField + Copy> MeasurementModel<T> {
    pub fn rows(&self) -> usize {
        self.h.nrows()
    }

    pub fn block_of(&self, agent: AgentIndex) -> Option<&RowBlock> {
        self.blocks.iter().find(|b| b.agent == agent)
    }

    pub fn is_voltage_row(&self, row: usize) -> bool {
        matches!(self.kinds[row / 2], RowKind::Voltage { .. })
    }
}

fn stamp<T: RealField + Copy>(h: &mut DMatrix<T>, row: usize, bus: usize, c: Complex64) {
    let (re, im) = (T::from_subset(&c.re), T::from_subset(&c.im));
    let col = 2 * (bus - 1);
    h[(row, col)] += re;
    h[(row, col + 1)] -= im;
    h[(row + 1, col)] += im;
    h[(row + 1, col + 1)] += re;
}

/// Stacks, per reporting agent (in the given order), its bus voltages and
/// the currents of every incident branch measured at its end.
pub fn build_measurement_matrix<T: RealField + Copy>(
    case: &GridCase,
    reporting: &[AgentIndex],
) -> Result<MeasurementModel<T>, EstimationError> {
    if reporting.is_empty() {
        return Err(EstimationError::CannotEstimate);
    }
    let mut kinds = Vec::new();
    let mut blocks = Vec::with_capacity(reporting.len());
    for &agent in reporting {
        let buses = case.buses_of(agent);
        if buses.is_empty() {
            return Err(EstimationError::InvalidAgent(agent));
        }
        let start = 2 * kinds.len();
        for bus in buses {
            kinds.push(RowKind::Voltage { bus });
            for (idx, br) in case.branches.iter().enumerate() {
                if br.from == bus || br.to == bus {
                    kinds.push(RowKind::Current { branch: idx, at_bus: bus });
                }
            }
        }
        blocks.push(RowBlock {
            agent,
            start,
            len: 2 * kinds.len() - start,
        });
    }
    let mut h = DMatrix::<T>::zeros(2 * kinds.len(), case.state_dim());
    for (m, kind) in kinds.iter().enumerate() {
        let row = 2 * m;
        match *kind {
            RowKind::Voltage { bus } => stamp(&mut h, row, bus, Complex64::new(1.0, 0.0)),
            RowKind::Current { branch, at_bus } => {
                let br = &case.branches[branch];
                let other = if br.from == at_bus { br.to } else { br.from };
                stamp(&mut h, row, at_bus, br.series() + br.end_shunt());
                stamp(&mut h, row, other, -br.series());
            }
        }
    }
    Ok(MeasurementModel { h, blocks, kinds })
}

/// Measurement vector with diagonal noise covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet<T: RealField + Copy> {
    pub z: DVector<T>,
    pub r_diag: DVector<T>,
}

impl<T: RealField + Copy> MeasurementSet<T> {
    pub fn r(&self) -> DMatrix<T> {
        DMatrix::from_diagonal(&self.r_diag)
    }
}

/// PMU readings for `x_true`: Gaussian noise of `sigma` on every real
/// component, plus `bias` added to the voltage rows of `biased` agents.
pub fn synthesize<T: RealField + Copy, R: Rng + ?Sized>(
    model: &MeasurementModel<T>,
    x_true: &DVector<f64>,
    sigma: f64,
    biased: &[AgentIndex],
    bias: f64,
    rng: &mut R,
) -> MeasurementSet<T> {
    let x: DVector<T> = x_true.map(|v| T::from_subset(&v));
    let mut z = &model.h * x;
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        for v in z.iter_mut() {
            *v += T::from_subset(&normal.sample(rng));
        }
    }
    for block in model.blocks.iter().filter(|b| biased.contains(&b.agent)) {
        for row in block.start..block.start + block.len {
            if model.is_voltage_row(row) {
                z[row] += T::from_subset(&bias);
            }
        }
    }
    let var = T::from_subset(&(sigma * sigma));
    MeasurementSet {
        r_diag: DVector::from_element(z.len(), var),
        z,
    }
}
