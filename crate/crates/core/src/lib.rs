//! Small convex polygons (diameter at most one) of maximum perimeter.
//!
//! The search runs in two phases. Phase I picks a combinatorial code whose
//! regular-polygon embedding nearly closes, reducing to a subset-sum search
//! over cosine weights for axially symmetric codes. Phase II fixes the code
//! and refines the angles with a Lagrange-Newton iteration in MPFR
//! arithmetic. Results are reconstructed as polygons and verified
//! geometrically and algebraically.

pub mod codes;
pub mod geometry;
pub mod mp;
pub mod phase1;
pub mod phase2;
pub mod pipeline;
