//! Closed-loop transition blocks of the estimator error dynamics.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::estimator::GainSet;
use crate::model::{build_topology, LisModel};

use super::GammaBlocks;

/// Closed-loop prediction-error blocks `Γᵢⱼ(k) = Aᵢⱼ(k)(I − Kⱼ(k)Cⱼ(k))` of
/// a model under local gains; the blocks driving the one-step prediction
/// error of the distributed estimator.
pub fn closed_loop_blocks(model: &LisModel, k: usize, gains: &GainSet) -> Result<GammaBlocks> {
    let pattern = model.pattern();
    let topo = build_topology(model, k)?;
    let mut blocks = GammaBlocks::new();
    for i in 0..model.s() {
        for &j in topo.in_neighbors(i).iter().chain(std::iter::once(&i)) {
            if let Some(a_ij) = model.a_block(k, i, j) {
                let nj = pattern.state_dim(j);
                let closed = a_ij * (DMatrix::identity(nj, nj) - gains.block(j) * model.c_block(k, j));
                blocks.insert((i, j), closed);
            }
        }
    }
    Ok(blocks)
}
