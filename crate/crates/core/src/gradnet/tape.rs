use crate::error::{Error, Result};
use crate::ndcore::{Matrix, Vector};

use super::net::{dense, Layer, NetParams};

struct Record {
    input: Matrix,
    output: Matrix,
}

/// Saved intermediates of one forward pass, good for exactly one reverse sweep.
pub struct Tape<'a> {
    params: &'a NetParams,
    records: Option<Vec<Record>>,
}

/// Run the network on a batch (one row per example) and record a tape.
pub fn forward<'a>(params: &'a NetParams, x: &Matrix) -> Result<(Matrix, Tape<'a>)> {
    params.check_input(x)?;
    let mut records = Vec::with_capacity(params.layers().len());
    let mut h = x.clone();
    for l in params.layers() {
        let out = dense(&h, l);
        records.push(Record { input: h, output: out.clone() });
        h = out;
    }
    if h.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network output"));
    }
    Ok((h, Tape { params, records: Some(records) }))
}

impl Tape<'_> {
    pub fn is_consumed(&self) -> bool {
        self.records.is_none()
    }

    /// Gradients of `Σ upstream ⊙ outputs` with respect to the parameters and
    /// the inputs. A second call returns [`Error::TapeConsumed`].
    pub fn backward(&mut self, upstream: &Matrix) -> Result<(NetParams, Matrix)> {
        let records = self.records.as_ref().ok_or(Error::TapeConsumed)?;
        let last = records.last().expect("non-empty network");
        if upstream.rows() != last.output.rows() || upstream.cols() != last.output.cols() {
            return Err(Error::DimensionMismatch(format!(
                "upstream {}x{} for outputs {}x{}",
                upstream.rows(),
                upstream.cols(),
                last.output.rows(),
                last.output.cols()
            )));
        }
        let records = self.records.take().expect("checked above");
        let layers = self.params.layers();
        let mut grads: Vec<Layer> = Vec::with_capacity(layers.len());
        let mut delta = upstream.clone();
        for (layer, rec) in layers.iter().zip(&records).rev() {
            // delta := ∂/∂(pre-activation)
            for (d, &o) in delta.data_mut().iter_mut().zip(rec.output.data()) {
                *d *= layer.activation.derivative_from_output(o);
            }
            let grad_w = delta.t_matmul(&rec.input)?;
            let mut grad_b = vec![0.0; layer.out_dim()];
            for row in delta.row_iter() {
                for (g, v) in grad_b.iter_mut().zip(row) {
                    *g += v;
                }
            }
            let next = delta.matmul(&layer.weight)?;
            grads.push(Layer { weight: grad_w, bias: Vector::from_raw(grad_b), activation: layer.activation });
            delta = next;
        }
        grads.reverse();
        Ok((NetParams::new(grads)?, delta))
    }
}
