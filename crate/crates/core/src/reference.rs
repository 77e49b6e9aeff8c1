//! Serial reference integrator.
//!
//! Evaluates `e = Σ_q B_qᵀ (w_q detJ f0) + Σ_k D_kᵀ (w_q detJ f1ᵏ)` cell by
//! cell in `f64`. It is the correctness oracle for the transposed executor and
//! also handles the remainder cells that do not fill a chunk.

use crate::element::{QuadratureRule, Tabulation};
use crate::mesh::{scatter_add_element_vectors, CellGeometry, FieldLayout, GeometrySlice, Mesh};
use crate::physics::{AuxField, AuxSlice, AuxSpace, PhysicsForm, PointState};
use crate::{Error, Result};

/// Per-cell residual contributions, `[cell][basis][component]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementVectorSet {
    pub n_cells: usize,
    pub n_b: usize,
    pub n_comp: usize,
    pub values: Vec<f64>,
}

impl ElementVectorSet {
    pub fn cell(&self, c: usize) -> &[f64] {
        let w = self.n_b * self.n_comp;
        &self.values[c * w..(c + 1) * w]
    }
}

/// Checks that all integration inputs agree on shape.
pub(crate) fn check_inputs(
    tab: &Tabulation,
    rule: &QuadratureRule,
    geom_dim: usize,
    n_cells: usize,
    form: &PhysicsForm,
    coeffs: &[f64],
    aux: Option<&AuxField>,
) -> Result<()> {
    let d = tab.dim();
    for (what, actual) in [
        ("quadrature rule dimension", rule.dim()),
        ("geometry dimension", geom_dim),
        ("form dimension", form.dim()),
    ] {
        if actual != d {
            return Err(Error::Shape {
                what,
                expected: d,
                actual,
            });
        }
    }
    if rule.n_points() != tab.n_q() {
        return Err(Error::Shape {
            what: "quadrature points",
            expected: tab.n_q(),
            actual: rule.n_points(),
        });
    }
    let expected = n_cells * tab.n_b() * form.n_comp();
    if coeffs.len() != expected {
        return Err(Error::Shape {
            what: "cell coefficients",
            expected,
            actual: coeffs.len(),
        });
    }
    match (form.n_aux(), aux) {
        (0, None) => {}
        (0, Some(_)) => return Err(Error::UnexpectedAuxiliary(form.name().into())),
        (_, None) => return Err(Error::MissingAuxiliary(form.name().into())),
        (n_aux, Some(a)) => {
            if a.n_aux != n_aux {
                return Err(Error::Shape {
                    what: "auxiliary components",
                    expected: n_aux,
                    actual: a.n_aux,
                });
            }
            let expected = n_cells * a.per_cell(tab.n_b());
            if a.values.len() != expected {
                return Err(Error::Shape {
                    what: "auxiliary values",
                    expected,
                    actual: a.values.len(),
                });
            }
        }
    }
    Ok(())
}

/// Integrates every cell of `geom`.
pub fn integrate_reference(
    tab: &Tabulation,
    rule: &QuadratureRule,
    geom: &CellGeometry,
    form: &PhysicsForm,
    coeffs: &[f64],
    aux: Option<&AuxField>,
) -> Result<ElementVectorSet> {
    let n_cells = geom.n_cells();
    check_inputs(tab, rule, geom.dim(), n_cells, form, coeffs, aux)?;
    let mut values = vec![0.0; coeffs.len()];
    let aux = aux.map(|a| a.slice(tab.n_b(), 0..n_cells));
    integrate_cells(tab, rule, geom.as_slice(), form, coeffs, aux, &mut values)?;
    Ok(ElementVectorSet {
        n_cells,
        n_b: tab.n_b(),
        n_comp: form.n_comp(),
        values,
    })
}

/// Integrates a contiguous cell range; inputs are assumed already checked.
pub(crate) fn integrate_cells(
    tab: &Tabulation,
    rule: &QuadratureRule,
    geom: GeometrySlice<'_>,
    form: &PhysicsForm,
    coeffs: &[f64],
    aux: Option<AuxSlice<'_>>,
    out: &mut [f64],
) -> Result<()> {
    let d = tab.dim();
    let n_b = tab.n_b();
    let n_q = tab.n_q();
    let nc = form.n_comp();
    let n_aux = form.n_aux();
    let has_f0 = form.has_f0();

    let mut u = vec![0.0; nc];
    let mut grad_u = vec![0.0; nc * d];
    let mut a = vec![0.0; n_aux];
    let mut grad_a = vec![0.0; n_aux * d];
    let mut g = vec![0.0; d];
    let mut f1 = vec![0.0; d];
    // scaled pointwise values for one cell, [q][comp] and [q][comp][k]
    let mut f0s = vec![0.0; n_q * nc];
    let mut f1s = vec![0.0; n_q * nc * d];

    for cell in 0..geom.n_cells() {
        let inv_j = geom.inv_jacobian(cell);
        let det_j = geom.determinants[cell];
        let cf = &coeffs[cell * n_b * nc..(cell + 1) * n_b * nc];

        for q in 0..n_q {
            let w = rule.weight(q);
            u.fill(0.0);
            grad_u.fill(0.0);
            a.fill(0.0);
            grad_a.fill(0.0);
            for b in 0..n_b {
                let phi = tab.value(q, b);
                pull_back(d, inv_j, tab.derivative(q, b), &mut g);
                for c in 0..nc {
                    let coef = cf[b * nc + c];
                    u[c] += coef * phi;
                    for k in 0..d {
                        grad_u[c * d + k] += coef * g[k];
                    }
                }
                if let Some(ax) = aux.filter(|ax| ax.space == AuxSpace::SameSpace) {
                    let av = &ax.values[(cell * n_b + b) * n_aux..(cell * n_b + b + 1) * n_aux];
                    for i in 0..n_aux {
                        a[i] += av[i] * phi;
                        for k in 0..d {
                            grad_a[i * d + k] += av[i] * g[k];
                        }
                    }
                }
            }
            if let Some(ax) = aux.filter(|ax| ax.space == AuxSpace::Cellwise) {
                a.copy_from_slice(&ax.values[cell * n_aux..(cell + 1) * n_aux]);
            }

            let state = PointState {
                dim: d,
                u: &u,
                grad_u: &grad_u,
                a: &a,
                grad_a: &grad_a,
            };
            for c in 0..nc {
                if has_f0 {
                    f0s[q * nc + c] = form.eval_f0(&state, c)? * det_j * w;
                }
                form.eval_f1(&state, c, &mut f1)?;
                for k in 0..d {
                    f1s[(q * nc + c) * d + k] = f1[k] * det_j * w;
                }
            }
        }

        let e = &mut out[cell * n_b * nc..(cell + 1) * n_b * nc];
        for b in 0..n_b {
            for c in 0..nc {
                let mut acc = 0.0;
                for q in 0..n_q {
                    if has_f0 {
                        acc += tab.value(q, b) * f0s[q * nc + c];
                    }
                    pull_back(d, inv_j, tab.derivative(q, b), &mut g);
                    for k in 0..d {
                        acc += g[k] * f1s[(q * nc + c) * d + k];
                    }
                }
                e[b * nc + c] = acc;
            }
        }
    }
    Ok(())
}

/// `out = invJᵀ · ref_grad`.
#[inline]
fn pull_back(d: usize, inv_j: &[f64], ref_grad: &[f64], out: &mut [f64]) {
    for i in 0..d {
        let mut acc = 0.0;
        for j in 0..d {
            acc += inv_j[j * d + i] * ref_grad[j];
        }
        out[i] = acc;
    }
}

/// Sums element vectors into the global residual.
pub fn assemble_residual(
    mesh: &Mesh,
    layout: &FieldLayout,
    elem_vecs: &ElementVectorSet,
) -> Result<Vec<f64>> {
    scatter_add_element_vectors(mesh, layout, &elem_vecs.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::{quadrature_rule, tabulate};
    use crate::mesh::{compute_geometry, gather_coefficients, generate_unit_simplex_mesh};
    use crate::physics::{elasticity_form, poisson_form, poisson_varcoef_form};

    fn reference_triangle() -> (Tabulation, QuadratureRule, CellGeometry) {
        let rule = quadrature_rule(2, 1).unwrap();
        let tab = tabulate(2, &rule).unwrap();
        let geom = CellGeometry::from_parts(2, vec![1.0, 0.0, 0.0, 1.0], vec![1.0]).unwrap();
        (tab, rule, geom)
    }

    #[test]
    fn poisson_u_equals_x_on_reference_cell() {
        let (tab, rule, geom) = reference_triangle();
        let form = poisson_form(2).unwrap();
        // hand quadrature: grad u = (1, 0), e_b = w * grad(phi_b) . (1, 0), w = 1/2
        let e = integrate_reference(&tab, &rule, &geom, &form, &[0.0, 1.0, 0.0], None).unwrap();
        assert_eq!(e.values, vec![-0.5, 0.5, 0.0]);
    }

    #[test]
    fn elasticity_u_equals_x_on_reference_cell() {
        let (tab, rule, geom) = reference_triangle();
        let form = elasticity_form(2).unwrap();
        // u = (x, 0): eps = [[1, 0], [0, 0]], e[b][c] = w * grad(phi_b) . eps_row(c)
        let coeffs = [0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let e = integrate_reference(&tab, &rule, &geom, &form, &coeffs, None).unwrap();
        assert_eq!(e.values, vec![-0.5, 0.0, 0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_field_has_zero_residual() {
        let mesh = generate_unit_simplex_mesh(2, 3).unwrap();
        let geom = compute_geometry(&mesh).unwrap();
        let rule = quadrature_rule(2, 1).unwrap();
        let tab = tabulate(2, &rule).unwrap();
        let form = poisson_form(2).unwrap();
        let layout = FieldLayout::new(1);
        let cf = gather_coefficients(&mesh, &layout, &vec![3.5; mesh.n_vertices()]).unwrap();
        let e = integrate_reference(&tab, &rule, &geom, &form, &cf, None).unwrap();
        assert!(e.values.iter().all(|&x| x == 0.0));
        let r = assemble_residual(&mesh, &layout, &e).unwrap();
        assert!(r.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_element_vectors_assemble_to_zero() {
        let mesh = generate_unit_simplex_mesh(2, 2).unwrap();
        let e = ElementVectorSet {
            n_cells: mesh.n_cells(),
            n_b: 3,
            n_comp: 1,
            values: vec![0.0; mesh.n_cells() * 3],
        };
        let r = assemble_residual(&mesh, &FieldLayout::new(1), &e).unwrap();
        assert_eq!(r, vec![0.0; mesh.n_vertices()]);
    }

    #[test]
    fn shape_and_aux_errors() {
        let (tab, rule, geom) = reference_triangle();
        let poisson = poisson_form(2).unwrap();
        assert!(matches!(
            integrate_reference(&tab, &rule, &geom, &poisson, &[0.0; 2], None),
            Err(Error::Shape { .. })
        ));
        let aux = AuxField::cellwise(1, vec![1.0]);
        assert!(matches!(
            integrate_reference(&tab, &rule, &geom, &poisson, &[0.0; 3], Some(&aux)),
            Err(Error::UnexpectedAuxiliary(_))
        ));
        let varcoef = poisson_varcoef_form(2).unwrap();
        assert!(matches!(
            integrate_reference(&tab, &rule, &geom, &varcoef, &[0.0; 3], None),
            Err(Error::MissingAuxiliary(_))
        ));
        let short = AuxField::same_space(1, vec![1.0]);
        assert!(matches!(
            integrate_reference(&tab, &rule, &geom, &varcoef, &[0.0; 3], Some(&short)),
            Err(Error::Shape { .. })
        ));
        let poisson3 = poisson_form(3).unwrap();
        assert!(integrate_reference(&tab, &rule, &geom, &poisson3, &[0.0; 3], None).is_err());
    }

    #[test]
    fn varcoef_p0_and_p1_agree_for_constant_coefficient() {
        let mesh = generate_unit_simplex_mesh(2, 2).unwrap();
        let geom = compute_geometry(&mesh).unwrap();
        let rule = quadrature_rule(2, 1).unwrap();
        let tab = tabulate(2, &rule).unwrap();
        let layout = FieldLayout::new(1);
        let u: Vec<f64> = (0..mesh.n_vertices()).map(|v| (v as f64).sin()).collect();
        let cf = gather_coefficients(&mesh, &layout, &u).unwrap();
        let form = poisson_varcoef_form(2).unwrap();
        let p0 = AuxField::cellwise(1, vec![2.0; mesh.n_cells()]);
        let p1 = AuxField::same_space(1, vec![2.0; mesh.n_cells() * 3]);
        let e0 = integrate_reference(&tab, &rule, &geom, &form, &cf, Some(&p0)).unwrap();
        let e1 = integrate_reference(&tab, &rule, &geom, &form, &cf, Some(&p1)).unwrap();
        let plain =
            integrate_reference(&tab, &rule, &geom, &poisson_form(2).unwrap(), &cf, None).unwrap();
        for ((a, b), p) in e0.values.iter().zip(&e1.values).zip(&plain.values) {
            assert!((a - 2.0 * p).abs() < 1e-14);
            assert!((b - 2.0 * p).abs() < 1e-14);
        }
    }
}
