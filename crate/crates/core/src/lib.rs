pub mod basis;
pub mod error;
pub mod model;
pub mod stoq;

pub use basis::{enumerate_sector, sector_index, BasisSector, SectorKind, SpinConfig};
pub use error::{Error, Result};
pub use model::{make_model, matvec, Coupling, ModelName, ModelSpec, XyzChain};
pub use stoq::{
    classify_txyz_region, find_stoquastic_transformation, Permutation, SignedPermutation,
    StoqVerdict,
};
pub mod rbm;
pub mod sampling;
pub mod linalg;
pub mod ed;
pub mod config;
pub mod optimizer;
pub mod supervised;
pub mod experiment;
