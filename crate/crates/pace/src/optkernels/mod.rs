//! Small, dense, deterministic convex solvers used by every other module:
//! a simplex-constrained QP, LP feasibility, and a multi-block primal-dual
//! interior-point SDP solver.

mod lp;
mod sdp;
mod simplex_qp;

pub use lp::{lp_feasible, LpFeasibility};
pub use sdp::{solve_sdp, BlockSym, KktResiduals, SdpProblem, SdpSolution, SdpStatus, SymMat};
pub use simplex_qp::{solve_simplex_qp, SimplexQp};
