use crate::densela::ComplexMatrix;
use crate::error::{Error, Result};

/// A q×q tiling of a square matrix; block `(i, j)` belongs to worker `P_{i,j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrid {
    q: usize,
    block_dim: usize,
    blocks: Vec<Option<ComplexMatrix>>,
}

impl BlockGrid {
    /// Grid side `q`.
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    /// Dimension of the tiled matrix.
    pub fn dim(&self) -> usize {
        self.q * self.block_dim
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&ComplexMatrix> {
        self.blocks[i * self.q + j].as_ref()
    }

    pub fn take_block(&mut self, i: usize, j: usize) -> Option<ComplexMatrix> {
        self.blocks[i * self.q + j].take()
    }

    pub fn set_block(&mut self, i: usize, j: usize, block: ComplexMatrix) -> Result<()> {
        if block.dim() != self.block_dim {
            return Err(Error::DimensionMismatch {
                left: self.block_dim,
                right: block.dim(),
            });
        }
        self.blocks[i * self.q + j] = Some(block);
        Ok(())
    }

    pub(crate) fn empty(q: usize, block_dim: usize) -> Self {
        Self {
            q,
            block_dim,
            blocks: vec![None; q * q],
        }
    }
}

fn check_divides(q: usize, dim: usize) -> Result<()> {
    if q == 0 || !dim.is_multiple_of(q) {
        return Err(Error::Indivisible { q, dim });
    }
    Ok(())
}

/// Splits `m` into a q×q grid of `(N/q)×(N/q)` blocks. No padding: `q` must
/// divide `N`.
pub fn partition(m: &ComplexMatrix, q: usize) -> Result<BlockGrid> {
    let n = m.dim();
    check_divides(q, n)?;
    let bd = n / q;
    let src = m.as_slice();
    let mut grid = BlockGrid::empty(q, bd);
    for bi in 0..q {
        for bj in 0..q {
            let mut block = ComplexMatrix::zeros(bd);
            let dst = block.as_mut_slice();
            for r in 0..bd {
                let start = (bi * bd + r) * n + bj * bd;
                dst[r * bd..(r + 1) * bd].copy_from_slice(&src[start..start + bd]);
            }
            grid.blocks[bi * q + bj] = Some(block);
        }
    }
    Ok(grid)
}

/// Reassembles the full matrix; the inverse of [`partition`].
pub fn gather(grid: &BlockGrid) -> Result<ComplexMatrix> {
    let q = grid.q;
    let bd = grid.block_dim;
    let n = q * bd;
    let mut m = ComplexMatrix::zeros(n);
    let dst = m.as_mut_slice();
    for bi in 0..q {
        for bj in 0..q {
            let block = grid.block(bi, bj).ok_or(Error::MissingBlock { row: bi, col: bj })?;
            let src = block.as_slice();
            for r in 0..bd {
                let start = (bi * bd + r) * n + bj * bd;
                dst[start..start + bd].copy_from_slice(&src[r * bd..(r + 1) * bd]);
            }
        }
    }
    Ok(m)
}

/// Origin of the A-block held by worker `(i, j)` after alignment: row `i`
/// shifted left by `i`.
#[inline]
pub fn aligned_a_source(i: usize, j: usize, q: usize) -> (usize, usize) {
    (i, (j + i) % q)
}

/// Origin of the B-block held by worker `(i, j)` after alignment: column `j`
/// shifted up by `j`.
#[inline]
pub fn aligned_b_source(i: usize, j: usize, q: usize) -> (usize, usize) {
    ((i + j) % q, j)
}

/// Initial skew, applied as one direct permutation of the blocks.
pub fn initial_alignment(ga: &BlockGrid, gb: &BlockGrid) -> Result<(BlockGrid, BlockGrid)> {
    if ga.q != gb.q || ga.block_dim != gb.block_dim {
        return Err(Error::GridMismatch(format!(
            "A is {0}x{0} blocks of {1}, B is {2}x{2} blocks of {3}",
            ga.q, ga.block_dim, gb.q, gb.block_dim
        )));
    }
    let q = ga.q;
    let mut a = BlockGrid::empty(q, ga.block_dim);
    let mut b = BlockGrid::empty(q, gb.block_dim);
    for i in 0..q {
        for j in 0..q {
            let (ai, aj) = aligned_a_source(i, j, q);
            let (bi, bj) = aligned_b_source(i, j, q);
            a.blocks[i * q + j] = Some(ga.block(ai, aj).ok_or(Error::MissingBlock { row: ai, col: aj })?.clone());
            b.blocks[i * q + j] = Some(gb.block(bi, bj).ok_or(Error::MissingBlock { row: bi, col: bj })?.clone());
        }
    }
    Ok((a, b))
}
