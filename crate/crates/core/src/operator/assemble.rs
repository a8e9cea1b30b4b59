//! Finite-difference assembly of divergence-form operators -div(a grad) on
//! 1D/2D grids, optionally masked to a sub-domain, under Dirichlet, Neumann
//! or periodic conditions. The assembled object is the form matrix S with
//! <Lf, g>_mu = g^T S f, so L = D_mu^{-1} S.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::MetricMeasureSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
    Periodic,
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BoundaryCondition::Dirichlet => "dirichlet",
            BoundaryCondition::Neumann => "neumann",
            BoundaryCondition::Periodic => "periodic",
        };
        f.write_str(s)
    }
}

/// Scalar coefficient field a(x); the operator is -div(a grad) with
/// A(x) = a(x) I, elliptic with constant lambda when a ranges in
/// [lambda, 1/lambda].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum CoefficientField {
    Identity,
    Constant { value: f64 },
    /// a alternates between lambda and 1/lambda by cell parity.
    Checkerboard { lambda: f64 },
    PerPoint { values: Vec<f64> },
}

impl CoefficientField {
    fn value_at(&self, idx: usize, parity: usize) -> f64 {
        match self {
            CoefficientField::Identity => 1.0,
            CoefficientField::Constant { value } => *value,
            CoefficientField::Checkerboard { lambda } => {
                if parity % 2 == 0 {
                    *lambda
                } else {
                    1.0 / *lambda
                }
            }
            CoefficientField::PerPoint { values } => values[idx],
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridSpec {
    pub dim: usize,
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub bc: BoundaryCondition,
    /// Row-major mask (dim 2 only): retained cells. None keeps the full grid.
    pub mask: Option<Vec<bool>>,
}

impl GridSpec {
    pub fn line(n: usize, h: f64, bc: BoundaryCondition) -> Self {
        GridSpec {
            dim: 1,
            nx: n,
            ny: 1,
            h,
            bc,
            mask: None,
        }
    }

    pub fn square(nx: usize, ny: usize, h: f64, bc: BoundaryCondition) -> Self {
        GridSpec {
            dim: 2,
            nx,
            ny,
            h,
            bc,
            mask: None,
        }
    }
}

/// Assembled operator pieces: the point space, the form matrix, and the
/// per-point coefficient values used (for ellipticity reporting).
pub struct Assembly {
    pub space: MetricMeasureSpace,
    pub form: DMatrix<f64>,
    pub coeff_values: Vec<f64>,
    /// grid index (full-grid coordinates) of each retained point
    pub grid_index: Vec<(usize, usize)>,
}

/// Validate the ellipticity bracket for the coefficient field.
pub fn validate_ellipticity(values: &[f64], lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(CoreError::InvalidCoefficients(format!(
            "ellipticity constant must lie in (0,1], got {lambda}"
        )));
    }
    for (i, &a) in values.iter().enumerate() {
        if !(a >= lambda && a <= 1.0 / lambda) || !a.is_finite() {
            return Err(CoreError::InvalidCoefficients(format!(
                "coefficient {a} at point {i} violates [{lambda}, {}]",
                1.0 / lambda
            )));
        }
    }
    Ok(())
}

pub fn assemble_divergence_form(
    grid: &GridSpec,
    coeff: &CoefficientField,
    lambda: f64,
) -> Result<Assembly> {
    if grid.dim != 1 && grid.dim != 2 {
        return Err(CoreError::InvalidArgument("grid must be 1D or 2D".into()));
    }
    if grid.dim == 1 && grid.mask.is_some() {
        return Err(CoreError::InvalidArgument("masks are 2D only".into()));
    }
    let (nx, ny) = (grid.nx, if grid.dim == 1 { 1 } else { grid.ny });
    let full = nx * ny;
    let mask = grid
        .mask
        .clone()
        .unwrap_or_else(|| vec![true; full]);
    if mask.len() != full {
        return Err(CoreError::InvalidArgument("mask length mismatch".into()));
    }
    if grid.mask.is_some() && grid.bc == BoundaryCondition::Periodic {
        return Err(CoreError::InvalidArgument(
            "periodic conditions do not combine with a mask".into(),
        ));
    }

    // Retained points and their ids.
    let mut id_of = vec![usize::MAX; full];
    let mut grid_index = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if mask[j * nx + i] {
                id_of[j * nx + i] = grid_index.len();
                grid_index.push((i, j));
            }
        }
    }
    let n = grid_index.len();
    if n == 0 {
        return Err(CoreError::InvalidDomain("mask retains no cells".into()));
    }
    // Connectivity of the masked domain.
    if grid.mask.is_some() {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(p) = stack.pop() {
            let (i, j) = grid_index[p];
            let mut push = |ii: i64, jj: i64| {
                if ii >= 0 && jj >= 0 && (ii as usize) < nx && (jj as usize) < ny {
                    let q = id_of[jj as usize * nx + ii as usize];
                    if q != usize::MAX && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            };
            push(i as i64 - 1, j as i64);
            push(i as i64 + 1, j as i64);
            push(i as i64, j as i64 - 1);
            push(i as i64, j as i64 + 1);
        }
        if seen.iter().any(|&s| !s) {
            return Err(CoreError::InvalidDomain("mask is disconnected".into()));
        }
    }

    let coeff_values: Vec<f64> = grid_index
        .iter()
        .enumerate()
        .map(|(p, &(i, j))| {
            let _ = p;
            coeff.value_at(id_of[j * nx + i], i + j)
        })
        .collect();
    validate_ellipticity(&coeff_values, lambda)?;

    let h = grid.h;
    let mu_cell = h.powi(grid.dim as i32);
    let edge_w = mu_cell / (h * h);
    let mut s = DMatrix::<f64>::zeros(n, n);
    let periodic = grid.bc == BoundaryCondition::Periodic;

    fn add_edge(s: &mut DMatrix<f64>, p: usize, q: usize, w: f64) {
        s[(p, p)] += w;
        s[(q, q)] += w;
        s[(p, q)] -= w;
        s[(q, p)] -= w;
    }
    fn add_boundary(s: &mut DMatrix<f64>, p: usize, w: f64, bc: BoundaryCondition) {
        if bc == BoundaryCondition::Dirichlet {
            s[(p, p)] += w;
        }
    }

    for (p, &(i, j)) in grid_index.iter().enumerate() {
        let ap = coeff_values[p];
        // +x and +y edges only, so each interior edge is visited once.
        for (di, dj) in [(1usize, 0usize), (0, 1)] {
            if grid.dim == 1 && dj == 1 {
                continue;
            }
            let (ii, jj) = (i + di, j + dj);
            if ii < nx && jj < ny {
                let q = id_of[jj * nx + ii];
                if q != usize::MAX {
                    add_edge(&mut s, p, q, 0.5 * (ap + coeff_values[q]) * edge_w);
                } else {
                    add_boundary(&mut s, p, ap * edge_w, grid.bc);
                }
            } else if periodic {
                let q = id_of[(jj % ny) * nx + (ii % nx)];
                // Wrap edge; skip the degenerate self-edge on a 1-cell axis.
                if q != p {
                    add_edge(&mut s, p, q, 0.5 * (ap + coeff_values[q]) * edge_w);
                }
            } else {
                add_boundary(&mut s, p, ap * edge_w, grid.bc);
            }
        }
        // -x / -y sides only contribute boundary terms (interior edges were
        // added from the other side).
        if !periodic {
            if i == 0 {
                add_boundary(&mut s, p, ap * edge_w, grid.bc);
            }
            if grid.dim == 2 && j == 0 {
                add_boundary(&mut s, p, ap * edge_w, grid.bc);
            }
            // Mask boundaries on the negative sides.
            if i > 0 && id_of[j * nx + (i - 1)] == usize::MAX {
                add_boundary(&mut s, p, ap * edge_w, grid.bc);
            }
            if grid.dim == 2 && j > 0 && id_of[(j - 1) * nx + i] == usize::MAX {
                add_boundary(&mut s, p, ap * edge_w, grid.bc);
            }
        }
    }

    // Point space over the retained cells.
    let coords: Vec<Vec<f64>> = grid_index
        .iter()
        .map(|&(i, j)| {
            if grid.dim == 1 {
                vec![i as f64 * h]
            } else {
                vec![i as f64 * h, j as f64 * h]
            }
        })
        .collect();
    let metric = if periodic {
        crate::geometry::Metric::Periodic {
            period: if grid.dim == 1 {
                vec![nx as f64 * h]
            } else {
                vec![nx as f64 * h, ny as f64 * h]
            },
        }
    } else {
        crate::geometry::Metric::Euclidean
    };
    let space = MetricMeasureSpace::new(coords, vec![mu_cell; n], metric)?;

    Ok(Assembly {
        space,
        form: s,
        coeff_values,
        grid_index,
    })
}

/// Piecewise-linear epigraph mask {(x, y) : y > Phi(x)} on an nx-by-ny grid.
/// `phi` holds the boundary heights at the nx column positions, in the same
/// length units as the grid.
pub fn epigraph_mask(nx: usize, ny: usize, h: f64, phi: &[f64]) -> Result<(Vec<bool>, f64)> {
    if phi.len() != nx {
        return Err(CoreError::InvalidArgument(
            "phi must give one height per column".into(),
        ));
    }
    let mut mask = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            mask[j * nx + i] = j as f64 * h > phi[i];
        }
    }
    // Lipschitz bound of the piecewise-linear boundary.
    let m = phi
        .windows(2)
        .map(|w| ((w[1] - w[0]) / h).abs())
        .fold(0.0f64, f64::max);
    Ok((mask, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_1d_form_is_tridiagonal() {
        let g = GridSpec::line(4, 0.5, BoundaryCondition::Dirichlet);
        let a = assemble_divergence_form(&g, &CoefficientField::Identity, 1.0).unwrap();
        // edge weight = mu/h^2 = h/h^2 = 1/h = 2
        assert_eq!(a.form[(0, 0)], 2.0 * 2.0);
        assert_eq!(a.form[(0, 1)], -2.0);
        assert_eq!(a.form[(1, 1)], 4.0);
        assert_eq!(a.form[(0, 2)], 0.0);
    }

    #[test]
    fn neumann_rows_sum_to_zero() {
        let g = GridSpec::square(5, 4, 1.0, BoundaryCondition::Neumann);
        let a = assemble_divergence_form(&g, &CoefficientField::Identity, 1.0).unwrap();
        for i in 0..a.form.nrows() {
            let row_sum: f64 = a.form.row(i).iter().sum();
            assert!(row_sum.abs() < 1e-12);
        }
    }

    #[test]
    fn ellipticity_violation_is_rejected() {
        let g = GridSpec::line(4, 1.0, BoundaryCondition::Dirichlet);
        let bad = CoefficientField::PerPoint {
            values: vec![1.0, -0.5, 1.0, 1.0],
        };
        assert!(matches!(
            assemble_divergence_form(&g, &bad, 0.5),
            Err(CoreError::InvalidCoefficients(_))
        ));
    }

    #[test]
    fn disconnected_mask_is_rejected() {
        let mut mask = vec![true; 5 * 3];
        for j in 0..3 {
            mask[j * 5 + 2] = false;
        }
        let g = GridSpec {
            dim: 2,
            nx: 5,
            ny: 3,
            h: 1.0,
            bc: BoundaryCondition::Dirichlet,
            mask: Some(mask),
        };
        assert!(matches!(
            assemble_divergence_form(&g, &CoefficientField::Identity, 1.0),
            Err(CoreError::InvalidDomain(_))
        ));
    }

    #[test]
    fn epigraph_mask_respects_boundary_and_reports_lipschitz() {
        let (mask, m) = epigraph_mask(4, 5, 1.0, &[0.5, 1.5, 2.5, 1.5]).unwrap();
        assert!(!mask[0]);
        assert!(mask[4 * 4]); // (0, 4): 4 > 0.5
        assert!((m - 1.0).abs() < 1e-12);
    }
}
