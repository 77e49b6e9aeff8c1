#![allow(dead_code)]

use quadfem::element::{quadrature_rule, tabulate, QuadratureRule, Tabulation};
use quadfem::executor::{integrate_transposed, ExecParams, TransposedResult};
use quadfem::mesh::{
    compute_geometry, gather_coefficients, generate_unit_simplex_mesh, FieldLayout, Mesh,
};
use quadfem::physics::{
    elasticity_form, poisson_form, poisson_varcoef_form, AuxField, F0Kernel, KernelScalar,
    PhysicsForm, PointState,
};
use quadfem::reference::{assemble_residual, integrate_reference};
use quadfem::{Real, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Setup {
    pub mesh: Mesh,
    pub layout: FieldLayout,
    pub rule: QuadratureRule,
    pub tab: Tabulation,
    pub form: PhysicsForm,
    pub field: Vec<f64>,
    pub aux: Option<AuxField>,
}

pub fn forms(dim: usize) -> Vec<PhysicsForm> {
    vec![
        poisson_form(dim).unwrap(),
        poisson_varcoef_form(dim).unwrap(),
        elasticity_form(dim).unwrap(),
    ]
}

/// The barycenter twice with half weights each.
pub fn two_point_rule(dim: usize) -> QuadratureRule {
    let one = quadrature_rule(dim, 1).unwrap();
    let mut points = one.point(0).to_vec();
    points.extend_from_slice(one.point(0));
    let w = one.weight(0) / 2.0;
    QuadratureRule::new(dim, points, vec![w, w]).unwrap()
}

fn mass_f0<S: Real>(state: &PointState<'_, S>, comp: usize) -> Result<S> {
    Ok(state.u[comp])
}

/// Elasticity plus a reaction term `f0 = u`.
pub fn reaction_elasticity(dim: usize) -> PhysicsForm {
    elasticity_form(dim)
        .unwrap()
        .with_f0(
            F0Kernel {
                single: mass_f0::<f32>,
                double: mass_f0::<f64>,
            },
            0,
        )
        .with_f0_source("realType f0_mass(realType u[], vecType gradU[], realType a[], vecType gradA[], int comp)\n{\n  return u[comp];\n}\n")
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn setup(dim: usize, n: usize, form: PhysicsForm, rule: QuadratureRule, seed: u64) -> Setup {
    let mesh = generate_unit_simplex_mesh(dim, n).unwrap();
    let layout = FieldLayout::new(form.n_comp());
    let tab = tabulate(dim, &rule).unwrap();
    let field = random_vec(layout.global_len(&mesh), seed);
    let aux = (form.n_aux() > 0).then(|| {
        let nodal: Vec<f64> = random_vec(mesh.n_vertices() * form.n_aux(), seed + 1)
            .into_iter()
            .map(|v| 1.5 + 0.5 * v)
            .collect();
        let cells = gather_coefficients(&mesh, &FieldLayout::new(form.n_aux()), &nodal).unwrap();
        AuxField::same_space(form.n_aux(), cells)
    });
    Setup {
        mesh,
        layout,
        rule,
        tab,
        form,
        field,
        aux,
    }
}

impl Setup {
    pub fn reference(&self) -> Vec<f64> {
        let geom = compute_geometry(&self.mesh).unwrap();
        let coeffs = gather_coefficients(&self.mesh, &self.layout, &self.field).unwrap();
        let e = integrate_reference(
            &self.tab,
            &self.rule,
            &geom,
            &self.form,
            &coeffs,
            self.aux.as_ref(),
        )
        .unwrap();
        assemble_residual(&self.mesh, &self.layout, &e).unwrap()
    }

    pub fn transposed<S: KernelScalar>(&self, params: &ExecParams) -> TransposedResult {
        integrate_transposed::<S>(
            &self.mesh,
            &self.layout,
            &self.tab,
            &self.rule,
            params,
            &self.form,
            &self.field,
            self.aux.as_ref(),
        )
        .unwrap()
    }
}

pub fn max_rel_err(x: &[f64], y: &[f64]) -> f64 {
    let diff = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Subdivisions giving at least `cells` cells.
pub fn refine_for(dim: usize, cells: usize) -> usize {
    let per_box = if dim == 2 { 2 } else { 6 };
    let mut n: usize = 1;
    while n.pow(dim as u32) * per_box < cells {
        n += 1;
    }
    n
}
