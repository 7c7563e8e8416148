//! Levenberg-Marquardt over the factor graph with a sparse Cholesky solve.
//!
//! The first keyframe is held fixed to remove the gauge freedom. Variables
//! are ordered keyframes first and landmarks last, which keeps the factor
//! of the normal equations close to the arrowhead pattern of the Hessian.

use std::collections::BTreeMap;

use nalgebra::DVector;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use serde::{Deserialize, Serialize};

use super::config::OptimizerConfig;
use super::graph::{Graph, VarRef};
use super::SlamError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Cost after the step if accepted, otherwise the cost it would have had.
    pub cost: f64,
    pub lambda: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    NoVariables,
    SmallCostDecrease,
    SmallStep,
    MaxIterations,
    TooManyRejections,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub variables: usize,
    pub factors: usize,
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
}

impl OptimizerReport {
    /// Costs of the accepted steps, preceded by the initial cost.
    pub fn accepted_costs(&self) -> Vec<f64> {
        std::iter::once(self.initial_cost)
            .chain(self.iterations.iter().filter(|i| i.accepted).map(|i| i.cost))
            .collect()
    }
}

struct Layout {
    offsets: BTreeMap<VarRef, usize>,
    size: usize,
}

impl Layout {
    fn new(graph: &Graph) -> Self {
        let mut vars = std::collections::BTreeSet::new();
        for f in &graph.factors {
            for v in f.vars() {
                if v != VarRef::Keyframe(0) {
                    vars.insert(v);
                }
            }
        }
        let mut offsets = BTreeMap::new();
        let mut size = 0;
        for v in vars {
            offsets.insert(v, size);
            size += v.dim();
        }
        Self { offsets, size }
    }
}

struct NormalEquations {
    hessian: CooMatrix<f64>,
    diagonal: Vec<f64>,
    gradient: DVector<f64>,
}

fn assemble(graph: &Graph, layout: &Layout) -> Result<NormalEquations, SlamError> {
    let n = layout.size;
    let mut hessian = CooMatrix::new(n, n);
    let mut diagonal = vec![0.0; n];
    let mut gradient = DVector::zeros(n);
    for f in &graph.factors {
        let lin = graph.linearize(f)?;
        let info = f.info_diagonal();
        let blocks: Vec<_> = lin.blocks.iter().filter_map(|(v, j)| layout.offsets.get(v).map(|o| (*o, j))).collect();
        for &(oa, ja) in &blocks {
            let weighted = ja.transpose() * nalgebra::DMatrix::from_diagonal(&info);
            let g = &weighted * &lin.residual;
            for (k, value) in g.iter().enumerate() {
                gradient[oa + k] += value;
            }
            for &(ob, jb) in &blocks {
                let h = &weighted * jb;
                for c in 0..h.ncols() {
                    for r in 0..h.nrows() {
                        let value = h[(r, c)];
                        if oa + r == ob + c {
                            diagonal[oa + r] += value;
                        } else if value != 0.0 {
                            hessian.push(oa + r, ob + c, value);
                        }
                    }
                }
            }
        }
    }
    Ok(NormalEquations { hessian, diagonal, gradient })
}

fn solve_damped(eq: &NormalEquations, lambda: f64) -> Option<DVector<f64>> {
    let mut coo = eq.hessian.clone();
    for (i, d) in eq.diagonal.iter().enumerate() {
        coo.push(i, i, d + lambda * d.max(1e-6));
    }
    let csc = CscMatrix::from(&coo);
    let chol = CscCholesky::factor(&csc).ok()?;
    let rhs = -&eq.gradient;
    let step = chol.solve(&rhs).column(0).into_owned();
    step.iter().all(|v| v.is_finite()).then_some(step)
}

fn apply(graph: &Graph, layout: &Layout, step: &DVector<f64>) -> Graph {
    let mut out = graph.clone();
    for (v, &o) in &layout.offsets {
        out.retract(*v, &step.as_slice()[o..o + v.dim()]);
    }
    out
}

/// Minimizes the total weighted squared residual in place.
pub fn optimize(graph: &mut Graph, config: &OptimizerConfig) -> Result<OptimizerReport, SlamError> {
    let layout = Layout::new(graph);
    let initial_cost = graph.cost()?;
    let mut report = OptimizerReport {
        initial_cost,
        final_cost: initial_cost,
        variables: layout.size,
        factors: graph.factors.len(),
        iterations: Vec::new(),
        termination: Termination::MaxIterations,
    };
    if layout.size == 0 {
        report.termination = Termination::NoVariables;
        return Ok(report);
    }

    let mut cost = initial_cost;
    let mut lambda = config.lambda0;
    let mut escalations = 0;
    let mut rejections = 0;
    let mut eq = assemble(graph, &layout)?;
    let mut iteration = 0;
    while iteration < config.max_iterations {
        let Some(step) = solve_damped(&eq, lambda) else {
            escalations += 1;
            if escalations >= config.max_escalations {
                return Err(SlamError::Singular { escalations, lambda });
            }
            lambda *= 10.0;
            continue;
        };
        escalations = 0;
        iteration += 1;
        let step_norm = step.norm();
        if step_norm < config.step_tol {
            report.termination = Termination::SmallStep;
            break;
        }
        let candidate = apply(graph, &layout, &step);
        let new_cost = candidate.cost()?;
        let accepted = new_cost <= cost;
        report.iterations.push(IterationRecord { iteration, cost: new_cost, lambda, step_norm, accepted });
        if accepted {
            let decrease = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
            *graph = candidate;
            cost = new_cost;
            rejections = 0;
            lambda = (lambda / 10.0).max(1e-15);
            if decrease < config.rel_cost_tol {
                report.termination = Termination::SmallCostDecrease;
                break;
            }
            eq = assemble(graph, &layout)?;
        } else {
            rejections += 1;
            lambda *= 10.0;
            if rejections >= config.max_rejections {
                report.termination = Termination::TooManyRejections;
                break;
            }
        }
    }
    report.final_cost = cost;
    Ok(report)
}
