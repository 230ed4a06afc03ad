//! Non-overlapping square patches for the patched input modes.
//!
//! Patches are scanned row-major over the input grid; patch `k` becomes
//! column `k` of the output, holding the patch flattened row-major.

use ndarray::{Array2, ArrayView2, Axis};

use super::{InputMode, Linear, Scalar};
use crate::error::{Error, Result};

fn check(rows: usize, cols: usize, patch: usize) -> Result<()> {
    if patch == 0 || rows % patch != 0 || cols % patch != 0 {
        return Err(Error::InvalidConfig(format!(
            "patch size {patch} does not divide {rows}x{cols}"
        )));
    }
    Ok(())
}

/// Rearranges `x` into `patch^2` x `n_patches` columns. Pure permutation.
pub fn patch_reshape<T: Scalar>(x: ArrayView2<T>, patch: usize) -> Result<Array2<T>> {
    let (rows, cols) = x.dim();
    check(rows, cols, patch)?;
    let per_row = cols / patch;
    Ok(Array2::from_shape_fn(
        (patch * patch, (rows / patch) * per_row),
        |(r, k)| {
            let (pr, pc) = (k / per_row, k % per_row);
            let (i, j) = (r / patch, r % patch);
            x[[pr * patch + i, pc * patch + j]]
        },
    ))
}

/// Inverse of [`patch_reshape`] for an original `rows` x `cols` grid.
pub fn patch_unreshape<T: Scalar>(p: ArrayView2<T>, patch: usize, rows: usize, cols: usize) -> Result<Array2<T>> {
    check(rows, cols, patch)?;
    if p.dim() != (patch * patch, (rows / patch) * (cols / patch)) {
        return Err(Error::ShapeMismatch(format!("patch grid {:?}", p.dim())));
    }
    let per_row = cols / patch;
    Ok(Array2::from_shape_fn((rows, cols), |(r, c)| {
        let k = (r / patch) * per_row + c / patch;
        p[[(r % patch) * patch + c % patch, k]]
    }))
}

/// Applies the shared patch embedding to every column.
pub fn patch_embed<T: Scalar>(patches: ArrayView2<T>, embed: &Linear<T>) -> Array2<T> {
    embed.weight.dot(&patches) + &embed.bias.view().insert_axis(Axis(1))
}

/// Maps the raw input to the matrix the mixer blocks consume.
pub fn patchify<T: Scalar>(
    x: ArrayView2<T>,
    mode: InputMode,
    patch: usize,
    embed: Option<&Linear<T>>,
) -> Result<Array2<T>> {
    match mode {
        InputMode::Direct => Ok(x.to_owned()),
        InputMode::PatchReshape => patch_reshape(x, patch),
        InputMode::PatchEmbed => {
            let embed = embed.ok_or_else(|| Error::ShapeMismatch("missing patch embedding".into()))?;
            let p = patch_reshape(x, patch)?;
            if embed.in_dim() != p.nrows() {
                return Err(Error::ShapeMismatch(format!(
                    "patch embedding expects {} inputs, patches have {}",
                    embed.in_dim(),
                    p.nrows()
                )));
            }
            Ok(patch_embed(p.view(), embed))
        }
    }
}
