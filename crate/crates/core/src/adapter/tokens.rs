use super::{AdapterError, Matrix, TokenMatrix};

/// Number of consecutive visual tokens concatenated into one embedding.
pub const TOKEN_GROUP: usize = 4;

/// Concatenates every `group` consecutive rows into one row.
///
/// A `n×d` input becomes `(n/group)×(d·group)`. Because the data is
/// row-major this is a pure reshape: the flat buffer is unchanged.
pub fn merge_tokens(x: &TokenMatrix, group: usize) -> Result<TokenMatrix, AdapterError> {
    if group == 0 || !x.rows().is_multiple_of(group) {
        return Err(AdapterError::Indivisible {
            rows: x.rows(),
            group,
        });
    }
    Matrix::new(x.rows() / group, x.cols() * group, x.data().to_vec())
}

/// `y = x·Wᵀ + bias`, applied row by row.
pub fn project(x: &TokenMatrix, w: &Matrix, bias: &[f64]) -> Result<TokenMatrix, AdapterError> {
    if x.cols() != w.cols() {
        return Err(AdapterError::Shape(format!(
            "input width {} does not match projection input {}",
            x.cols(),
            w.cols()
        )));
    }
    if bias.len() != w.rows() {
        return Err(AdapterError::Shape(format!(
            "bias length {} does not match projection output {}",
            bias.len(),
            w.rows()
        )));
    }
    let mut y = x.matmul_t(w)?;
    let out = w.rows();
    for (i, v) in y.data_mut().iter_mut().enumerate() {
        *v += bias[i % out];
    }
    Ok(y)
}
