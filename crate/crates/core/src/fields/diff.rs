use super::{FieldError, GridField};
use rayon::prelude::*;

/// Nodal derivative tensor `D^j u`: per node `nu * m^j` numbers, laid out as
/// `[component][axis_1]...[axis_j]`, plus a validity flag per node.
#[derive(Debug, Clone)]
pub struct Derivative {
    pub order: usize,
    pub ncomp: usize,
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl Derivative {
    pub fn at(&self, node: usize) -> &[f64] {
        &self.data[node * self.ncomp..(node + 1) * self.ncomp]
    }

    /// Frobenius norm at a node.
    pub fn norm_at(&self, node: usize) -> f64 {
        self.at(node).iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Second-order accurate first derivative along every axis of a nodal
/// array with `ncomp` components: central differences inside, one-sided
/// three-point stencils at the boundary. A node is valid only when every
/// stencil node is valid.
fn gradient(grid: &super::Grid, ncomp: usize, data: &[f64], valid: &[bool]) -> (Vec<f64>, Vec<bool>) {
    let m = grid.dim();
    let n = grid.len();
    let out_comp = ncomp * m;
    let rows: Vec<(Vec<f64>, bool)> = (0..n)
        .into_par_iter()
        .map(|node| {
            let mut idx = vec![0usize; m];
            grid.multi_index(node, &mut idx);
            let mut out = vec![0.0; out_comp];
            let mut ok = valid[node];
            for a in 0..m {
                let d = grid.dims()[a];
                let s = grid.strides()[a];
                let h = grid.h()[a];
                let i = idx[a];
                let (nodes, coefs): ([usize; 3], [f64; 3]) = if i == 0 {
                    ([node, node + s, node + 2 * s], [-1.5, 2.0, -0.5])
                } else if i == d - 1 {
                    ([node, node - s, node - 2 * s], [1.5, -2.0, 0.5])
                } else {
                    ([node - s, node + s, node], [-0.5, 0.5, 0.0])
                };
                for (k, &nb) in nodes.iter().enumerate() {
                    if coefs[k] != 0.0 && !valid[nb] {
                        ok = false;
                    }
                }
                if !ok {
                    continue;
                }
                for c in 0..ncomp {
                    let mut acc = 0.0;
                    for k in 0..3 {
                        if coefs[k] != 0.0 {
                            acc += coefs[k] * data[nodes[k] * ncomp + c];
                        }
                    }
                    out[c * m + a] = acc / h;
                }
            }
            if !ok {
                out.fill(f64::NAN);
            }
            (out, ok)
        })
        .collect();
    let mut d = Vec::with_capacity(n * out_comp);
    let mut v = Vec::with_capacity(n);
    for (row, ok) in rows {
        d.extend(row);
        v.push(ok);
    }
    (d, v)
}

/// Finite-difference derivative of order 1 or 2. Order 2 applies the
/// first-order operator twice, so its stencil reaches two nodes away.
pub fn finite_difference(u: &GridField, order: usize) -> Result<Derivative, FieldError> {
    if order == 0 || order > 2 {
        return Err(FieldError::InvalidField(format!(
            "derivative order {order} not supported"
        )));
    }
    let grid = u.grid();
    if grid.dims().iter().any(|&d| d < 2 * order + 1) {
        return Err(FieldError::GridTooCoarse(format!(
            "order {order} needs {} nodes per axis, dims are {:?}",
            2 * order + 1,
            grid.dims()
        )));
    }
    let valid: Vec<bool> = u.mask().iter().map(|m| !m).collect();
    let (mut data, mut valid) = gradient(grid, u.nu(), u.values(), &valid);
    let mut ncomp = u.nu() * grid.dim();
    for _ in 1..order {
        let (d, v) = gradient(grid, ncomp, &data, &valid);
        data = d;
        valid = v;
        ncomp *= grid.dim();
    }
    Ok(Derivative {
        order,
        ncomp,
        data,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Grid, Target};
    use crate::geometry::AxisBox;

    #[test]
    fn exact_on_affine_fields() {
        let g = Grid::new(&AxisBox::centered_cube(2, 1.0).unwrap(), &[11, 13]).unwrap();
        let u = GridField::sample(g, 2, Target::Unconstrained, None, |x| {
            Some(vec![1.0 + 2.0 * x[0] - 3.0 * x[1], -0.5 * x[0] + 0.25 * x[1]])
        })
        .unwrap();
        let d = finite_difference(&u, 1).unwrap();
        let expect = [2.0, -3.0, -0.5, 0.25];
        for node in 0..u.grid().len() {
            for (a, b) in d.at(node).iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let d2 = finite_difference(&u, 2).unwrap();
        assert!(d2.data.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn second_derivative_of_quadratic() {
        let g = Grid::new(&AxisBox::centered_cube(2, 1.0).unwrap(), &[21, 21]).unwrap();
        let u = GridField::sample(g, 1, Target::Unconstrained, None, |x| {
            Some(vec![x[0] * x[0] + 3.0 * x[0] * x[1]])
        })
        .unwrap();
        let d2 = finite_difference(&u, 2).unwrap();
        let node = u.grid().flat(&[10, 10]);
        let expect = [2.0, 3.0, 3.0, 0.0];
        for (a, b) in d2.at(node).iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn masked_nodes_invalidate_neighbours() {
        let g = Grid::new(&AxisBox::centered_cube(2, 1.0).unwrap(), &[9, 9]).unwrap();
        let mut mask = vec![false; 81];
        mask[g.flat(&[4, 4])] = true;
        let u = GridField::from_values(g.clone(), 1, Target::Unconstrained, vec![0.0; 81], mask).unwrap();
        let d = finite_difference(&u, 1).unwrap();
        assert!(!d.valid[g.flat(&[4, 5])]);
        assert!(!d.valid[g.flat(&[3, 4])]);
        assert!(d.valid[g.flat(&[3, 3])]);
    }

    #[test]
    fn too_coarse_for_second_order() {
        let g = Grid::new(&AxisBox::centered_cube(2, 1.0).unwrap(), &[4, 4]).unwrap();
        let u = GridField::sample(g, 1, Target::Unconstrained, None, |_| Some(vec![0.0])).unwrap();
        assert!(finite_difference(&u, 1).is_ok());
        assert!(matches!(finite_difference(&u, 2), Err(FieldError::GridTooCoarse(_))));
    }
}
