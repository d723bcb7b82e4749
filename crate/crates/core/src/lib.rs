pub mod adaptivity;
pub mod assembly;
pub mod bddc;
pub mod basis;
pub mod dofs;
pub mod forest;
pub mod krylov;
pub mod linalg;
pub mod problems;
pub mod solver;
pub mod substructuring;
