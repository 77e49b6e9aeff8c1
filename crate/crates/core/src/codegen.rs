//! Runtime assembly of compute-kernel source.
//!
//! The emitted text is an OpenCL C kernel specialised for one execution
//! geometry and scalar type, with the form's `f0`/`f1` source strings inlined.
//! All sizes are compile-time constants; the tabulation and quadrature
//! weights are passed as buffers. Generation is deterministic.

use std::fmt::Write as _;

use crate::executor::ExecutionGeometry;
use crate::physics::PhysicsForm;
use crate::real::Precision;
use crate::{Error, Result};

pub const ENTRY_NAME: &str = "integrateElementQuadrature";

/// Values baked into a kernel as compile-time constants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Specialization {
    pub dim: usize,
    pub n_b: usize,
    pub n_comp: usize,
    pub n_q: usize,
    pub n_bl: usize,
    pub n_cb: usize,
    pub n_aux: usize,
    pub scalar: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelSource {
    pub text: String,
    pub entry_name: String,
    pub specialization: Specialization,
}

/// Name of the first function defined in `src`.
fn function_name(src: &str) -> Option<&str> {
    let open = src.find('(')?;
    let head = src[..open].trim_end();
    let start = head
        .rfind(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .map_or(0, |i| i + 1);
    let name = &head[start..];
    (!name.is_empty() && !name.starts_with(|c: char| c.is_ascii_digit())).then_some(name)
}

/// Components of `invJᵀ · v` for a `vecType v`, reading `invJ` row-major.
fn pull_back_expr(dim: usize, inv_j: &str, v: &str) -> String {
    const AXES: [&str; 3] = ["x", "y", "z"];
    let comps: Vec<String> = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| format!("{inv_j}[{}]*{v}.{}", j * dim + i, AXES[j]))
                .collect::<Vec<_>>()
                .join(" + ")
        })
        .collect();
    format!("(vecType)({})", comps.join(", "))
}

pub fn generate_kernel_source(
    geom: &ExecutionGeometry,
    form: &PhysicsForm,
    scalar: Precision,
) -> Result<KernelSource> {
    if form.dim() != geom.dim || form.n_comp() != geom.n_comp {
        return Err(Error::Codegen(format!(
            "form `{}` (dim {}, {} components) does not match geometry (dim {}, {} components)",
            form.name(),
            form.dim(),
            form.n_comp(),
            geom.dim,
            geom.n_comp
        )));
    }
    let f1_src = form
        .source_f1()
        .ok_or_else(|| Error::Codegen(format!("form `{}` has no f1 source", form.name())))?;
    let f1_name = function_name(f1_src)
        .ok_or_else(|| Error::Codegen("cannot find the f1 function name".into()))?;
    let f0 = if form.has_f0() {
        let src = form
            .source_f0()
            .ok_or_else(|| Error::Codegen(format!("form `{}` has no f0 source", form.name())))?;
        let name = function_name(src)
            .ok_or_else(|| Error::Codegen("cannot find the f0 function name".into()))?;
        Some((src, name))
    } else {
        None
    };

    let d = geom.dim;
    let n_aux = form.n_aux();
    let real = match scalar {
        Precision::Single => "float",
        Precision::Double => "double",
    };
    let mut t = String::new();
    macro_rules! line {
        ($($arg:tt)*) => { writeln!(t, $($arg)*).unwrap() };
    }

    line!(
        "/* {ENTRY_NAME}: physics `{}`, generated at runtime */",
        form.name()
    );
    if scalar == Precision::Double {
        line!("#pragma OPENCL EXTENSION cl_khr_fp64 : enable");
    }
    line!("typedef {real} realType;");
    line!("typedef {real}{d} vecType;");
    line!();
    line!("#define dim    {d}  // Spatial dimensions");
    line!("#define N_b    {}  // Basis functions", geom.n_b);
    line!(
        "#define N_comp {}  // Basis function components",
        geom.n_comp
    );
    line!("#define N_q    {}  // Quadrature points", geom.n_q);
    line!(
        "#define N_bl   {}  // Number of concurrent blocks",
        geom.n_bl
    );
    line!(
        "#define N_cb   {}  // Number of serial cell batches",
        geom.n_cb
    );
    line!(
        "#define N_aux  {}  // Auxiliary field components",
        n_aux.max(1)
    );
    line!("#define N_bt   (N_b*N_comp)          // Total scalar basis funcs");
    line!("#define N_bs   (N_b*N_q)             // Cells per block");
    line!("#define N_bst  (N_bt*N_q)            // Block size");
    line!("#define N_t    (N_bst*N_bl)          // Threads");
    line!("#define N_bc   (N_t/N_comp)          // Cells/batch");
    line!("#define N_c    (N_cb*N_bc)           // Total cells");
    line!("#define N_sbc  (N_bst/(N_q*N_comp))  // Serial basis cells");
    line!("#define N_sqc  (N_bst/N_bt)          // Serial quad cells");
    line!("#define N_cbc  (N_bl*N_q)            // Concurrently written cells");
    line!();
    if let Some((src, _)) = f0 {
        t.push_str(src.trim_end());
        line!();
        line!();
    }
    t.push_str(f1_src.trim_end());
    line!();
    line!();

    line!("__kernel void {ENTRY_NAME}(__global const realType *coefficients,");
    if n_aux > 0 {
        line!("    __global const realType *auxCoefficients,");
    }
    line!("    __global const realType *jacobianInverses, __global const realType *jacobianDeterminants,");
    line!("    __global const realType *weights_0, __global const realType *Basis_0,");
    line!("    __global const realType *BasisDerivatives_0, __global realType *elemVec)");
    line!("{{");
    line!("  const int tidx    = get_local_id(0);");
    line!("  const int Goffset = get_group_id(0)*N_c;");
    line!("  const int blidx   = tidx/(N_bs*N_comp);            // block within the batch");
    line!("  const int qslot   = (tidx%(N_bs*N_comp))/(N_q*N_comp);");
    line!("  const int bslot   = (tidx%(N_bs*N_comp))/N_bt;");
    line!("  const int qidx    = (tidx/N_comp)%N_q;              // quadrature point");
    line!("  const int bidx    = (tidx/N_comp)%N_b;              // basis function");
    line!("  const int comp    = tidx%N_comp;");
    line!();
    line!("  __local vecType  phiDer_i[N_q*N_bt];");
    if f0.is_some() {
        line!("  __local realType phi_i[N_q*N_bt];");
    }
    line!("  __local realType invJ_i[N_t*dim*dim];");
    line!("  __local realType detJ_i[N_t];");
    line!("  __local realType u_i[N_t*N_bt];");
    if n_aux > 0 {
        line!("  __local realType a_i[N_bc*N_b*N_aux];");
    }
    if f0.is_some() {
        line!("  __local realType f_0[N_t*N_sqc];");
    }
    line!("  __local vecType  f_1[N_t*N_sqc];");
    line!("  realType phiq_i[N_b];");
    line!();
    line!("  /* Load quadrature weights */");
    line!("  const realType w = weights_0[qidx];");
    line!("  /* Load basis tabulation phi_i for this cell */");
    line!("  for (int b = 0; b < N_b; ++b) phiq_i[b] = Basis_0[qidx*N_b + b];");
    line!("  if (tidx < N_q*N_bt) {{");
    line!("    const int tq = tidx/N_bt, tb = (tidx%N_bt)/N_comp;");
    let der: Vec<String> = (0..d)
        .map(|k| format!("BasisDerivatives_0[(tq*N_b + tb)*dim + {k}]"))
        .collect();
    line!("    phiDer_i[tidx] = (vecType)({});", der.join(", "));
    if f0.is_some() {
        line!("    phi_i[tidx] = Basis_0[tq*N_b + tb];");
    }
    line!("  }}");
    line!();
    line!(
        "  for (int batch = 0; batch < {}; ++batch) {{  // N_cb",
        geom.n_cb
    );
    line!("    const int cell0 = Goffset + batch*N_bc;");
    line!("    const int lcell = tidx/N_comp;");
    line!("    /* Load geometry */");
    line!("    detJ_i[tidx] = jacobianDeterminants[cell0 + lcell];");
    line!("    for (int n = 0; n < dim*dim; ++n) invJ_i[tidx*dim*dim + n] = jacobianInverses[(cell0 + lcell)*dim*dim + n];");
    line!("    /* Load coefficients u_i for this cell */");
    line!("    for (int n = 0; n < N_bt; ++n) u_i[tidx*N_bt + n] = coefficients[(cell0 + lcell)*N_bt + n];");
    if n_aux > 0 {
        line!("    if (comp == 0) for (int n = 0; n < N_b*N_aux; ++n) a_i[lcell*N_b*N_aux + n] = auxCoefficients[(cell0 + lcell)*N_b*N_aux + n];");
    }
    line!();
    line!("    /* Map coefficients to values at quadrature points */");
    line!("    for (int c = 0; c < {}; ++c) {{  // N_sqc", geom.n_sqc);
    line!("      const int cell = blidx*N_bs + c*N_b + qslot;");
    line!("      const int slot = cell*N_comp + comp;");
    line!("      __local const realType *invJ = &invJ_i[slot*dim*dim];");
    line!("      realType u[N_comp];     // u(x_q), value of the field at x_q");
    line!("      vecType  gradU[N_comp]; // du/dx(x_q), value of the gradient at x_q");
    line!("      realType a[N_aux];");
    line!("      vecType  gradA[N_aux];");
    line!("      for (int d = 0; d < N_comp; ++d) {{ u[d] = 0.0; gradU[d] = (vecType)(0.0); }}");
    line!("      for (int d = 0; d < N_aux; ++d) {{ a[d] = 0.0; gradA[d] = (vecType)(0.0); }}");
    line!("      /* Get field and derivatives at this quadrature point */");
    line!("      for (int b = 0; b < N_b; ++b) {{");
    line!(
        "        const vecType realGrad = {};",
        pull_back_expr(d, "invJ", "phiDer_i[qidx*N_bt + b*N_comp + comp]")
    );
    line!("        for (int d = 0; d < N_comp; ++d) {{");
    line!("          u[d]     += u_i[slot*N_bt + b*N_comp + d]*phiq_i[b];");
    line!("          gradU[d] += u_i[slot*N_bt + b*N_comp + d]*realGrad;");
    line!("        }}");
    if n_aux > 0 {
        line!("        for (int d = 0; d < N_aux; ++d) {{");
        line!("          a[d]     += a_i[(cell*N_b + b)*N_aux + d]*phiq_i[b];");
        line!("          gradA[d] += a_i[(cell*N_b + b)*N_aux + d]*realGrad;");
        line!("        }}");
    }
    line!("      }}");
    line!("      /* Process values at quadrature points */");
    line!("      const int rec = (cell*N_q + qidx)*N_comp + comp;");
    if let Some((_, name)) = f0 {
        line!("      f_0[rec] = {name}(u, gradU, a, gradA, comp)*detJ_i[slot]*w;");
    }
    line!("      f_1[rec] = {f1_name}(u, gradU, a, gradA, comp)*detJ_i[slot]*w;");
    line!("    }}");
    line!();
    line!("    /* ==== TRANSPOSE THREADS ==== */");
    line!("    barrier(CLK_LOCAL_MEM_FENCE);");
    line!();
    line!("    /* Map values at quadrature points to coefficients */");
    line!("    for (int c = 0; c < {}; ++c) {{  // N_sbc", geom.n_sbc);
    line!("      const int cell = blidx*N_bs + c*N_q + bslot;");
    line!("      const int slot = cell*N_comp + comp;");
    line!("      __local const realType *invJ = &invJ_i[slot*dim*dim];");
    line!("      realType e_i = 0.0;");
    line!("      for (int q = 0; q < N_q; ++q) {{");
    line!("        const int rec = (cell*N_q + q)*N_comp + comp;");
    if f0.is_some() {
        line!("        e_i += phi_i[q*N_bt + bidx*N_comp + comp]*f_0[rec];");
    }
    line!(
        "        const vecType realGrad = {};",
        pull_back_expr(d, "invJ", "phiDer_i[q*N_bt + bidx*N_comp + comp]")
    );
    line!("        e_i += dot(realGrad, f_1[rec]);");
    line!("      }}");
    line!("      /* Write element vector for N_cbc cells at a time */");
    line!("      elemVec[(cell0 + cell)*N_bt + bidx*N_comp + comp] = e_i;");
    line!("    }}");
    line!("  }}");
    line!("}}");

    Ok(KernelSource {
        text: t,
        entry_name: ENTRY_NAME.to_string(),
        specialization: Specialization {
            dim: d,
            n_b: geom.n_b,
            n_comp: geom.n_comp,
            n_q: geom.n_q,
            n_bl: geom.n_bl,
            n_cb: geom.n_cb,
            n_aux,
            scalar: real,
        },
    })
}
