//! Pointwise weak-form kernels.
//!
//! A residual is `∫ φ·f0(u, ∇u, a, ∇a) + ∇φ : f1(u, ∇u, a, ∇a)`. A
//! [`PhysicsForm`] bundles native `f0`/`f1` evaluators (one per device
//! precision) with their flop counts. It may also carry the kernel-source text
//! consumed by [`crate::codegen`].
//!
//! Flop convention: every scalar arithmetic operation counts one, while copies
//! and sign flips are free.

use crate::mesh::check_dim;
use crate::{Error, Real, Result};

/// Field data at one quadrature point.
///
/// `grad_u` is `[component][k]` and `grad_a` is `[aux][k]`.
#[derive(Debug, Clone, Copy)]
pub struct PointState<'a, S> {
    pub dim: usize,
    pub u: &'a [S],
    pub grad_u: &'a [S],
    pub a: &'a [S],
    pub grad_a: &'a [S],
}

impl<S> PointState<'_, S> {
    #[inline]
    pub fn grad(&self, comp: usize) -> &[S] {
        &self.grad_u[comp * self.dim..(comp + 1) * self.dim]
    }
}

pub type F0Fn<S> = fn(&PointState<'_, S>, usize) -> Result<S>;
pub type F1Fn<S> = fn(&PointState<'_, S>, usize, &mut [S]) -> Result<()>;

/// An `f0` evaluator instantiated for both device precisions.
#[derive(Clone, Copy)]
pub struct F0Kernel {
    pub single: F0Fn<f32>,
    pub double: F0Fn<f64>,
}

/// An `f1` evaluator instantiated for both device precisions.
#[derive(Clone, Copy)]
pub struct F1Kernel {
    pub single: F1Fn<f32>,
    pub double: F1Fn<f64>,
}

/// Picks the kernel instance for a scalar type.
pub trait KernelScalar: Real {
    fn f0_fn(k: &F0Kernel) -> F0Fn<Self>;
    fn f1_fn(k: &F1Kernel) -> F1Fn<Self>;
}

impl KernelScalar for f32 {
    fn f0_fn(k: &F0Kernel) -> F0Fn<f32> {
        k.single
    }
    fn f1_fn(k: &F1Kernel) -> F1Fn<f32> {
        k.single
    }
}

impl KernelScalar for f64 {
    fn f0_fn(k: &F0Kernel) -> F0Fn<f64> {
        k.double
    }
    fn f1_fn(k: &F1Kernel) -> F1Fn<f64> {
        k.double
    }
}

#[derive(Clone)]
pub struct PhysicsForm {
    name: String,
    dim: usize,
    n_comp: usize,
    n_aux: usize,
    f0: Option<F0Kernel>,
    f1: F1Kernel,
    flops_f0: u64,
    flops_f1: u64,
    source_f0: Option<String>,
    source_f1: Option<String>,
}

impl std::fmt::Debug for PhysicsForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PhysicsForm")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("n_comp", &self.n_comp)
            .field("n_aux", &self.n_aux)
            .field("has_f0", &self.has_f0())
            .field("flops_f0", &self.flops_f0)
            .field("flops_f1", &self.flops_f1)
            .finish_non_exhaustive()
    }
}

impl PhysicsForm {
    /// A user form with only an `f1` term. Add `f0` and source text with the
    /// `with_*` builders.
    pub fn custom(
        name: impl Into<String>,
        dim: usize,
        n_comp: usize,
        n_aux: usize,
        f1: F1Kernel,
        flops_f1: u64,
    ) -> Result<Self> {
        check_dim(dim)?;
        if n_comp == 0 {
            return Err(Error::Configuration(
                "a form needs at least one component".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            dim,
            n_comp,
            n_aux,
            f0: None,
            f1,
            flops_f0: 0,
            flops_f1,
            source_f0: None,
            source_f1: None,
        })
    }

    pub fn with_f0(mut self, f0: F0Kernel, flops_f0: u64) -> Self {
        self.f0 = Some(f0);
        self.flops_f0 = flops_f0;
        self
    }

    pub fn with_f1_source(mut self, src: impl Into<String>) -> Self {
        self.source_f1 = Some(src.into());
        self
    }

    pub fn with_f0_source(mut self, src: impl Into<String>) -> Self {
        self.source_f0 = Some(src.into());
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_comp(&self) -> usize {
        self.n_comp
    }

    pub fn n_aux(&self) -> usize {
        self.n_aux
    }

    pub fn has_f0(&self) -> bool {
        self.f0.is_some()
    }

    pub fn flops_f0(&self) -> u64 {
        self.flops_f0
    }

    pub fn flops_f1(&self) -> u64 {
        self.flops_f1
    }

    pub fn source_f0(&self) -> Option<&str> {
        self.source_f0.as_deref()
    }

    pub fn source_f1(&self) -> Option<&str> {
        self.source_f1.as_deref()
    }

    /// Evaluates `f0` for one component; zero when the form has none.
    #[inline]
    pub fn eval_f0<S: KernelScalar>(&self, state: &PointState<'_, S>, comp: usize) -> Result<S> {
        match &self.f0 {
            Some(k) => S::f0_fn(k)(state, comp),
            None => Ok(S::ZERO),
        }
    }

    /// Evaluates `f1` for one component into `out` (length `dim`).
    #[inline]
    pub fn eval_f1<S: KernelScalar>(
        &self,
        state: &PointState<'_, S>,
        comp: usize,
        out: &mut [S],
    ) -> Result<()> {
        S::f1_fn(&self.f1)(state, comp, out)
    }
}

/// Where an auxiliary coefficient field lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxSpace {
    /// One constant per cell (`P0`); its gradient is zero.
    Cellwise,
    /// Same P1 space as the solution, stored per cell as `[basis][aux]`.
    SameSpace,
}

/// Auxiliary field data laid out per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxField {
    pub space: AuxSpace,
    pub n_aux: usize,
    pub values: Vec<f64>,
}

impl AuxField {
    pub fn cellwise(n_aux: usize, values: Vec<f64>) -> Self {
        Self {
            space: AuxSpace::Cellwise,
            n_aux,
            values,
        }
    }

    pub fn same_space(n_aux: usize, values: Vec<f64>) -> Self {
        Self {
            space: AuxSpace::SameSpace,
            n_aux,
            values,
        }
    }

    /// Scalars stored per cell.
    pub fn per_cell(&self, n_b: usize) -> usize {
        match self.space {
            AuxSpace::Cellwise => self.n_aux,
            AuxSpace::SameSpace => self.n_aux * n_b,
        }
    }

    pub fn slice(&self, n_b: usize, cells: std::ops::Range<usize>) -> AuxSlice<'_> {
        let w = self.per_cell(n_b);
        AuxSlice {
            space: self.space,
            n_aux: self.n_aux,
            values: &self.values[cells.start * w..cells.end * w],
        }
    }
}

/// Borrowed auxiliary data for a contiguous cell range.
#[derive(Debug, Clone, Copy)]
pub struct AuxSlice<'a> {
    pub space: AuxSpace,
    pub n_aux: usize,
    pub values: &'a [f64],
}

fn check_comp(comp: usize, n_comp: usize) -> Result<()> {
    if comp >= n_comp {
        return Err(Error::ComponentIndex {
            index: comp,
            n_comp,
        });
    }
    Ok(())
}

const AXES: [char; 3] = ['x', 'y', 'z'];

fn laplacian_f1<S: Real>(state: &PointState<'_, S>, comp: usize, out: &mut [S]) -> Result<()> {
    check_comp(comp, 1)?;
    out.copy_from_slice(state.grad(comp));
    Ok(())
}

/// Laplacian: `f1 = ∇u`, no `f0`. The copy costs no flops.
pub fn poisson_form(dim: usize) -> Result<PhysicsForm> {
    let src = "vecType f1_laplacian(realType u[], vecType gradU[], realType a[], vecType gradA[], int comp)\n\
               {\n  return gradU[comp];\n}\n";
    Ok(PhysicsForm::custom(
        "poisson",
        dim,
        1,
        0,
        F1Kernel {
            single: laplacian_f1::<f32>,
            double: laplacian_f1::<f64>,
        },
        0,
    )?
    .with_f1_source(src))
}

fn coefficient_laplacian_f1<S: Real>(
    state: &PointState<'_, S>,
    comp: usize,
    out: &mut [S],
) -> Result<()> {
    check_comp(comp, 1)?;
    let Some(&kappa) = state.a.first() else {
        return Err(Error::MissingAuxiliary("poisson-varcoef".into()));
    };
    for (o, &g) in out.iter_mut().zip(state.grad(comp)) {
        *o = kappa * g;
    }
    Ok(())
}

/// Variable-coefficient Laplacian: `f1 = a₀ ∇u`. One multiply per gradient
/// component, so `d` flops.
pub fn poisson_varcoef_form(dim: usize) -> Result<PhysicsForm> {
    let src = "vecType f1_coefficient_laplacian(realType u[], vecType gradU[], realType a[], vecType gradA[], int comp)\n\
               {\n  return a[0]*gradU[comp];\n}\n";
    Ok(PhysicsForm::custom(
        "poisson-varcoef",
        dim,
        1,
        1,
        F1Kernel {
            single: coefficient_laplacian_f1::<f32>,
            double: coefficient_laplacian_f1::<f64>,
        },
        dim as u64,
    )?
    .with_f1_source(src))
}

fn elasticity_f1<S: Real>(state: &PointState<'_, S>, comp: usize, out: &mut [S]) -> Result<()> {
    let d = state.dim;
    check_comp(comp, d)?;
    let half = S::from_f64(0.5);
    for (k, o) in out.iter_mut().enumerate().take(d) {
        *o = half * (state.grad_u[comp * d + k] + state.grad_u[k * d + comp]);
    }
    Ok(())
}

/// Symmetric gradient: `f1(·, c)` is row `c` of `½(∇u + ∇uᵀ)`. Each of the `d`
/// entries is one add and one multiply, so `2d` flops per component.
pub fn elasticity_form(dim: usize) -> Result<PhysicsForm> {
    check_dim(dim)?;
    let mut src = String::from(
        "vecType f1_elasticity(realType u[], vecType gradU[], realType a[], vecType gradA[], int comp)\n\
         {\n  vecType f1;\n\n  switch(comp) {\n",
    );
    for (c, c_axis) in AXES.iter().enumerate().take(dim) {
        src.push_str(&format!("  case {c}:\n"));
        for (k, axis) in AXES.iter().enumerate().take(dim) {
            src.push_str(&format!(
                "    f1.{axis} = 0.5*(gradU[{c}].{axis} + gradU[{k}].{c_axis});\n"
            ));
        }
        if c + 1 < dim {
            src.push_str("    break;\n");
        }
    }
    src.push_str("  }\n  return f1;\n}\n");
    Ok(PhysicsForm::custom(
        "elasticity",
        dim,
        dim,
        0,
        F1Kernel {
            single: elasticity_f1::<f32>,
            double: elasticity_f1::<f64>,
        },
        2 * dim as u64,
    )?
    .with_f1_source(src))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state<'a>(dim: usize, u: &'a [f64], g: &'a [f64], a: &'a [f64]) -> PointState<'a, f64> {
        PointState {
            dim,
            u,
            grad_u: g,
            a,
            grad_a: &[],
        }
    }

    fn f1(form: &PhysicsForm, s: &PointState<'_, f64>, comp: usize) -> Vec<f64> {
        let mut out = vec![0.0; s.dim];
        form.eval_f1(s, comp, &mut out).unwrap();
        out
    }

    #[test]
    fn poisson_returns_gradient() {
        let p = poisson_form(2).unwrap();
        assert!(!p.has_f0());
        assert_eq!(
            (p.n_comp(), p.n_aux(), p.flops_f1(), p.flops_f0()),
            (1, 0, 0, 0)
        );
        assert_eq!(
            f1(&p, &state(2, &[7.0], &[3.0, -2.0], &[]), 0),
            vec![3.0, -2.0]
        );
        assert_eq!(
            f1(&p, &state(2, &[-4.0], &[1.0, 0.0], &[]), 0),
            vec![1.0, 0.0]
        );
        let p3 = poisson_form(3).unwrap();
        assert_eq!(f1(&p3, &state(3, &[0.0], &[0.0; 3], &[]), 0), vec![0.0; 3]);
        assert_eq!(p.eval_f0(&state(2, &[5.0], &[0.0; 2], &[]), 0), Ok(0.0));
        assert!(p.source_f1().unwrap().contains("return gradU[comp];"));
    }

    #[test]
    fn varcoef_scales_gradient() {
        let p = poisson_varcoef_form(2).unwrap();
        assert_eq!((p.n_aux(), p.flops_f1()), (1, 2));
        let g = [3.0, -2.0];
        assert_eq!(f1(&p, &state(2, &[0.0], &g, &[1.0]), 0), vec![3.0, -2.0]);
        assert_eq!(
            f1(&p, &state(2, &[0.0], &[1.0, 1.0], &[2.0]), 0),
            vec![2.0, 2.0]
        );
        assert_eq!(f1(&p, &state(2, &[0.0], &g, &[0.0]), 0), vec![0.0, 0.0]);
        let mut out = [0.0; 2];
        assert_eq!(
            p.eval_f1(&state(2, &[0.0], &g, &[]), 0, &mut out),
            Err(Error::MissingAuxiliary("poisson-varcoef".into()))
        );
    }

    #[test]
    fn elasticity_symmetric_gradient() {
        let e = elasticity_form(2).unwrap();
        assert_eq!((e.n_comp(), e.flops_f1()), (2, 4));
        let g = [1.0, 2.0, 3.0, 4.0];
        let s = state(2, &[0.0, 0.0], &g, &[]);
        assert_eq!(f1(&e, &s, 0), vec![1.0, 2.5]);
        assert_eq!(f1(&e, &s, 1), vec![2.5, 4.0]);

        let rot = [0.0, 1.0, -1.0, 0.0];
        let s = state(2, &[0.0, 0.0], &rot, &[]);
        assert_eq!(f1(&e, &s, 0), vec![0.0, 0.0]);
        assert_eq!(f1(&e, &s, 1), vec![0.0, 0.0]);

        let e3 = elasticity_form(3).unwrap();
        assert_eq!(e3.flops_f1(), 6);
        let id = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let s = state(3, &[0.0; 3], &id, &[]);
        for c in 0..3 {
            let mut unit = vec![0.0; 3];
            unit[c] = 1.0;
            assert_eq!(f1(&e3, &s, c), unit);
        }
        let mut out = [0.0; 3];
        assert!(matches!(
            e3.eval_f1(&s, 3, &mut out),
            Err(Error::ComponentIndex {
                index: 3,
                n_comp: 3
            })
        ));
    }

    #[test]
    fn elasticity_sources() {
        let s2 = elasticity_form(2).unwrap();
        let src = s2.source_f1().unwrap();
        for line in [
            "f1.x = 0.5*(gradU[0].x + gradU[0].x);",
            "f1.y = 0.5*(gradU[0].y + gradU[1].x);",
            "f1.x = 0.5*(gradU[1].x + gradU[0].y);",
            "f1.y = 0.5*(gradU[1].y + gradU[1].y);",
        ] {
            assert!(src.contains(line), "{line}");
        }
        let src3 = elasticity_form(3).unwrap();
        assert!(src3
            .source_f1()
            .unwrap()
            .contains("f1.z = 0.5*(gradU[2].z + gradU[2].z);"));
    }

    #[test]
    fn f32_instances_agree() {
        let e = elasticity_form(2).unwrap();
        let g = [1.0f32, 2.0, 3.0, 4.0];
        let s = PointState {
            dim: 2,
            u: &[0.0f32, 0.0][..],
            grad_u: &g[..],
            a: &[][..],
            grad_a: &[][..],
        };
        let mut out = [0.0f32; 2];
        e.eval_f1(&s, 0, &mut out).unwrap();
        assert_eq!(out, [1.0, 2.5]);
    }

    #[test]
    fn invalid_dimension() {
        assert!(poisson_form(1).is_err());
        assert!(elasticity_form(4).is_err());
    }
}
