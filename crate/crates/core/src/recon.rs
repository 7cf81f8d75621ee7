//! Solver output shared by the ℓ1 and TV solvers.

use std::io::Write;

use crate::geometry::ImageGrid;

/// One row of a solver's convergence log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Data residual `E(x) = ‖Ax − b‖₂`.
    pub residual: f64,
    /// `‖x‖₁` for the ℓ1 solver, exact TV for the TV solver.
    pub objective: f64,
    pub c_alpha: Option<f64>,
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconResult {
    pub image: ImageGrid,
    pub iterations: usize,
    pub residual_norm: f64,
    pub objective: f64,
    pub converged: bool,
    pub diagnostics: Vec<IterationRecord>,
}

impl ReconResult {
    pub fn last(&self) -> Option<&IterationRecord> {
        self.diagnostics.last()
    }

    /// Writes the log as CSV with columns
    /// `iteration,residual,objective,c_alpha,beta,alpha`; absent values are empty.
    pub fn write_diagnostics_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,residual,objective,c_alpha,beta,alpha")?;
        let opt = |v: Option<f64>| v.map(crate::io::fmt_sig).unwrap_or_default();
        for r in &self.diagnostics {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.iteration,
                crate::io::fmt_sig(r.residual),
                crate::io::fmt_sig(r.objective),
                opt(r.c_alpha),
                opt(r.beta),
                opt(r.alpha)
            )?;
        }
        Ok(())
    }
}
