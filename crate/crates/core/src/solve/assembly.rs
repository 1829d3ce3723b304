//! Residual, Jacobian and mass-matrix assembly over interior dofs.

use crate::error::{Error, Result};
use crate::grid::{FeFunction, Mesh};
use crate::linalg::BandMatrix;
use crate::scalar::{dot, mat_vec, Real, Vec2};
use crate::structural::CoefficientField;

/// Extra `stab * xi` added to the flux during regularization sweeps.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stabilization<T> {
    pub stab: T,
}

impl<T: Real> Default for Stabilization<T> {
    fn default() -> Self {
        Stabilization { stab: T::zero() }
    }
}

fn check_finite<T: Real>(cell: usize, v: T, what: &str, x: &Vec2<T>, s: T, xi: &Vec2<T>) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            cell,
            detail: format!("{what} = {v} at x = {x:?}, u = {s}, grad u = {xi:?}"),
        })
    }
}

/// `R_i = int a(x, grad u) . grad phi_i + int b(x, u, grad u) phi_i - L_i`
/// over interior dofs; `load` is indexed by node.
pub fn assemble_residual<T: Real>(field: &CoefficientField<T>, load: &[T], u: &FeFunction<T>) -> Result<Vec<T>> {
    residual_with(field, load, u, Stabilization::default())
}

pub(crate) fn residual_with<T: Real>(
    field: &CoefficientField<T>,
    load: &[T],
    u: &FeFunction<T>,
    st: Stabilization<T>,
) -> Result<Vec<T>> {
    let mesh = u.mesh();
    let values = u.values();
    let mut r = vec![T::zero(); mesh.n_dofs()];
    let has_b = field.has_lower_order_term();
    for (ci, c) in mesh.cells().iter().enumerate() {
        let xi = c.gradient(values);
        let nodes = c.local_nodes();
        let mut local = [T::zero(); 3];
        for q in c.quad() {
            let mut a = field.a.eval(&q.x, &xi);
            a = [a[0] + st.stab * xi[0], a[1] + st.stab * xi[1]];
            let s = c.value_at(q, values);
            check_finite(ci, a[0] + a[1], "a", &q.x, s, &xi)?;
            let b = if has_b { field.b.eval(&q.x, s, &xi) } else { T::zero() };
            check_finite(ci, b, "b", &q.x, s, &xi)?;
            for k in 0..nodes.len() {
                local[k] = local[k] + q.weight * (dot(&a, &c.grads[k]) + b * q.shape[k]);
            }
        }
        for (k, &n) in nodes.iter().enumerate() {
            if let Some(i) = mesh.dof(n) {
                r[i] = r[i] + local[k];
            }
        }
    }
    for (n, &l) in load.iter().enumerate() {
        if let Some(i) = mesh.dof(n) {
            r[i] = r[i] - l;
        }
    }
    Ok(r)
}

/// Jacobian of the residual; analytic for built-in fields, finite differences
/// of the pointwise coefficients otherwise.
pub fn assemble_jacobian<T: Real>(field: &CoefficientField<T>, u: &FeFunction<T>) -> Result<BandMatrix<T>> {
    jacobian_with(field, u, Stabilization::default())
}

pub(crate) fn jacobian_with<T: Real>(
    field: &CoefficientField<T>,
    u: &FeFunction<T>,
    st: Stabilization<T>,
) -> Result<BandMatrix<T>> {
    let mesh = u.mesh();
    let values = u.values();
    let mut j = BandMatrix::symmetric_band(mesh.n_dofs(), mesh.dof_bandwidth());
    let has_b = field.has_lower_order_term();
    for (ci, c) in mesh.cells().iter().enumerate() {
        let xi = c.gradient(values);
        let nodes = c.local_nodes();
        let m = nodes.len();
        let mut local = [[T::zero(); 3]; 3];
        for q in c.quad() {
            let mut da = field.a.jacobian(&q.x, &xi);
            da[0][0] = da[0][0] + st.stab;
            da[1][1] = da[1][1] + st.stab;
            let s = c.value_at(q, values);
            check_finite(ci, da[0][0] + da[0][1] + da[1][0] + da[1][1], "da/dxi", &q.x, s, &xi)?;
            let (bs, bxi) = if has_b { field.b.partials(&q.x, s, &xi) } else { (T::zero(), [T::zero(); 2]) };
            check_finite(ci, bs + bxi[0] + bxi[1], "db", &q.x, s, &xi)?;
            for k in 0..m {
                for l in 0..m {
                    let flux = dot(&c.grads[k], &mat_vec(&da, &c.grads[l]));
                    let low = q.shape[k] * (bs * q.shape[l] + dot(&bxi, &c.grads[l]));
                    local[k][l] = local[k][l] + q.weight * (flux + low);
                }
            }
        }
        scatter(mesh, nodes, &local, &mut j);
    }
    Ok(j)
}

fn scatter<T: Real>(mesh: &Mesh<T>, nodes: &[usize], local: &[[T; 3]; 3], j: &mut BandMatrix<T>) {
    for (k, &nk) in nodes.iter().enumerate() {
        let Some(i) = mesh.dof(nk) else { continue };
        for (l, &nl) in nodes.iter().enumerate() {
            if let Some(jj) = mesh.dof(nl) {
                j.add(i, jj, local[k][l]);
            }
        }
    }
}

/// Frozen-coefficient (Kačanov) matrix: `int c(x) grad phi_j . grad phi_i` with
/// the secant coefficient `c = a(x, xi) . xi / |xi|^2`.
pub(crate) fn kacanov_matrix<T: Real>(
    field: &CoefficientField<T>,
    u: &FeFunction<T>,
    st: Stabilization<T>,
) -> Result<BandMatrix<T>> {
    let mesh = u.mesh();
    let values = u.values();
    let mut j = BandMatrix::symmetric_band(mesh.n_dofs(), mesh.dof_bandwidth());
    for (ci, c) in mesh.cells().iter().enumerate() {
        let xi = c.gradient(values);
        let nodes = c.local_nodes();
        let m = nodes.len();
        let mut local = [[T::zero(); 3]; 3];
        for q in c.quad() {
            let n2 = dot(&xi, &xi);
            let coef = if n2 > T::min_positive_value().sqrt() {
                dot(&field.a.eval(&q.x, &xi), &xi) / n2
            } else {
                let da = field.a.jacobian(&q.x, &xi);
                (da[0][0] + da[1][1]) * T::lit(0.5)
            } + st.stab;
            check_finite(ci, coef, "secant coefficient", &q.x, c.value_at(q, values), &xi)?;
            for k in 0..m {
                for l in 0..m {
                    local[k][l] = local[k][l] + q.weight * coef * dot(&c.grads[k], &c.grads[l]);
                }
            }
        }
        scatter(mesh, nodes, &local, &mut j);
    }
    Ok(j)
}

/// Lower-order contribution `int b(x, u, grad u) phi_i` alone.
pub(crate) fn source_vector<T: Real>(field: &CoefficientField<T>, u: &FeFunction<T>) -> Vec<T> {
    let mesh = u.mesh();
    let values = u.values();
    let mut r = vec![T::zero(); mesh.n_dofs()];
    if !field.has_lower_order_term() {
        return r;
    }
    for c in mesh.cells() {
        let xi = c.gradient(values);
        for q in c.quad() {
            let b = field.b.eval(&q.x, c.value_at(q, values), &xi);
            for (k, &n) in c.local_nodes().iter().enumerate() {
                if let Some(i) = mesh.dof(n) {
                    r[i] = r[i] + q.weight * b * q.shape[k];
                }
            }
        }
    }
    r
}

/// Consistent P1 mass matrix over interior dofs.
pub fn assemble_mass<T: Real>(mesh: &Mesh<T>) -> BandMatrix<T> {
    let mut j = BandMatrix::symmetric_band(mesh.n_dofs(), mesh.dof_bandwidth());
    for c in mesh.cells() {
        let mut local = [[T::zero(); 3]; 3];
        let m = c.local_nodes().len();
        for q in c.quad() {
            for k in 0..m {
                for l in 0..m {
                    local[k][l] = local[k][l] + q.weight * q.shape[k] * q.shape[l];
                }
            }
        }
        scatter(mesh, c.local_nodes(), &local, &mut j);
    }
    j
}

/// P1 stiffness matrix `int grad phi_j . grad phi_i` over interior dofs.
pub fn assemble_stiffness<T: Real>(mesh: &Mesh<T>) -> BandMatrix<T> {
    let mut j = BandMatrix::symmetric_band(mesh.n_dofs(), mesh.dof_bandwidth());
    for c in mesh.cells() {
        let mut local = [[T::zero(); 3]; 3];
        let m = c.local_nodes().len();
        for q in c.quad() {
            for k in 0..m {
                for l in 0..m {
                    local[k][l] = local[k][l] + q.weight * dot(&c.grads[k], &c.grads[l]);
                }
            }
        }
        scatter(mesh, c.local_nodes(), &local, &mut j);
    }
    j
}
