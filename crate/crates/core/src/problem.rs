//! The inversion cost as a black box: DoF values in, data mismatch out.

use crate::error::{Error, Result};
use crate::forward::{CMatrix, ForwardSolver, Grid, ScatteringDataset};
use crate::geometry::{decode_to_contrast, ContrastMap, DofSpace, DofVector};
use crate::metrics::cost_phi_samples;

/// Something that maps a DoF vector to a nonnegative cost.
pub trait CostOracle {
    fn cost(&self, x: &[f64]) -> Result<f64>;
}

impl<F: Fn(&[f64]) -> Result<f64>> CostOracle for F {
    fn cost(&self, x: &[f64]) -> Result<f64> {
        self(x)
    }
}

/// Full forward pipeline: decode the DoFs on the inversion grid, solve for
/// the scattered field, compare against the measured data.
pub struct InversionProblem {
    space: DofSpace,
    solver: ForwardSolver,
    measured: CMatrix,
}

impl InversionProblem {
    pub fn new(space: DofSpace, grid: Grid, dataset: &ScatteringDataset) -> Result<Self> {
        if (grid.side() - dataset.side).abs() > 1e-12 * dataset.side {
            return Err(Error::Config(format!(
                "inversion domain side {} differs from the dataset's {}",
                grid.side(),
                dataset.side
            )));
        }
        if dataset.scattered.iter().all(|s| s.norm() == 0.0) {
            return Err(Error::DegenerateDataset);
        }
        Ok(Self {
            space,
            solver: ForwardSolver::new(grid, dataset.setup)?,
            measured: dataset.scattered.clone(),
        })
    }

    pub fn space(&self) -> &DofSpace {
        &self.space
    }

    pub fn grid(&self) -> &Grid {
        self.solver.grid()
    }

    pub fn measured(&self) -> &CMatrix {
        &self.measured
    }

    pub fn dof(&self, x: &[f64]) -> Result<DofVector> {
        self.space.vector(x.to_vec())
    }

    pub fn decode(&self, x: &[f64]) -> Result<ContrastMap> {
        decode_to_contrast(&self.dof(x)?, self.solver.grid())
    }

    /// Predicted scattered field (`M x V`) for the DoF vector `x`.
    pub fn predicted(&self, x: &[f64]) -> Result<CMatrix> {
        self.solver.scattered(&self.decode(x)?)
    }
}

impl CostOracle for InversionProblem {
    fn cost(&self, x: &[f64]) -> Result<f64> {
        let predicted = self.predicted(x).map_err(|e| Error::Oracle(e.to_string()))?;
        cost_phi_samples(&self.measured, &predicted)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{synthesize_dataset, MeasurementSetup, Scene};
    use crate::geometry::{DofLayout, Point, RoleBounds};
    use num_complex::Complex64;

    #[test]
    fn true_profile_has_small_cost() {
        let setup = MeasurementSetup::new(8, 8, 3.0).unwrap();
        let inv = Grid::new(2.0, 20).unwrap();
        let truth = DofVector::single(Point::new(0.0, 0.0), Complex64::new(2.0, 0.0), &[0.5; 4]).unwrap();
        let data = synthesize_dataset(&Scene::Dofs(truth.clone()), &inv, &inv, &setup, None, 0, true).unwrap();
        let space = DofSpace::from_roles(DofLayout::Single { q: 4 }, &RoleBounds::default()).unwrap();
        let problem = InversionProblem::new(space, inv, &data).unwrap();
        assert!(problem.cost(truth.values()).unwrap() < 1e-24);
        let off = [0.3, -0.2, 1.0, 0.2, 0.3, 0.3, 0.3, 0.3];
        assert!(problem.cost(&off).unwrap() > 0.05);
        assert!(problem.cost(&off[..7]).is_err());
    }

    #[test]
    fn rejects_mismatched_domain_and_zero_data() {
        let setup = MeasurementSetup::new(4, 4, 3.0).unwrap();
        let space = DofSpace::from_roles(DofLayout::Single { q: 4 }, &RoleBounds::default()).unwrap();
        let zero = ScatteringDataset::new(2.0, 0, setup, CMatrix::zeros(4, 4), None, 0).unwrap();
        assert!(matches!(
            InversionProblem::new(space.clone(), Grid::new(2.0, 10).unwrap(), &zero),
            Err(Error::DegenerateDataset)
        ));
        let mut data = zero.clone();
        data.scattered[(0, 0)] = Complex64::new(1.0, 0.0);
        assert!(InversionProblem::new(space, Grid::new(3.0, 10).unwrap(), &data).is_err());
    }
}
