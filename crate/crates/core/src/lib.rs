//! Numerical probes for parametric feasible-set maps: symbolic constraint
//! systems, constraint-qualification checks, error-bound and semicontinuity
//! probes, marginal-function scans, and bilevel calmness diagnostics.

pub mod bilevel;
pub mod cq;
pub mod expr;
pub mod geom;
pub mod kernel;
pub mod parametric;
pub mod report;
pub mod sampling;
pub mod solver;
pub mod system;
