//! 2-D NPY arrays on disk.
//!
//! Everything is written as NPY v1.0, little-endian `float32`, C order.
//! Reading also accepts `float64` so user-supplied images load directly.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use calred_core::{ImageGrid, Sinogram};
use npyz::{NpyFile, Order, WriterBuilder};

use crate::error::CliError;
use crate::fsutil::write_atomic;

/// A row-major matrix read from disk, widened to `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

pub fn encode_f32<W: Write>(w: W, rows: usize, cols: usize, data: &[f64]) -> io::Result<()> {
    assert_eq!(rows * cols, data.len(), "shape does not match data length");
    let mut writer = npyz::WriteOptions::<f32>::new()
        .default_dtype()
        .shape(&[rows as u64, cols as u64])
        .writer(w)
        .begin_nd()?;
    writer.extend(data.iter().map(|&v| v as f32))?;
    writer.finish()
}

pub fn write_matrix(path: &Path, rows: usize, cols: usize, data: &[f64]) -> Result<(), CliError> {
    write_atomic(path, |f| {
        let mut w = BufWriter::new(f);
        encode_f32(&mut w, rows, cols, data)?;
        w.flush()
    })
}

pub fn read_matrix(path: &Path) -> Result<Matrix, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let npy = NpyFile::new(BufReader::new(file)).map_err(|e| CliError::format(path, e.to_string()))?;
    let shape = npy.shape().to_vec();
    if shape.len() != 2 {
        return Err(CliError::format(path, format!("expected a 2-D array, found shape {shape:?}")));
    }
    if npy.order() != Order::C && shape.iter().all(|&d| d > 1) {
        return Err(CliError::format(path, "Fortran-ordered arrays are not supported"));
    }
    let descr = match npy.dtype() {
        npyz::DType::Plain(ts) => ts.to_string(),
        other => other.descr(),
    };
    let data: Vec<f64> = if descr.ends_with("f4") {
        let v: Vec<f32> = npy.into_vec().map_err(|e| CliError::format(path, e.to_string()))?;
        v.into_iter().map(f64::from).collect()
    } else if descr.ends_with("f8") {
        npy.into_vec().map_err(|e| CliError::format(path, e.to_string()))?
    } else {
        return Err(CliError::format(path, format!("unsupported dtype {descr}, expected float32 or float64")));
    };
    Ok(Matrix {
        rows: shape[0] as usize,
        cols: shape[1] as usize,
        data,
    })
}

pub fn read_image(path: &Path) -> Result<ImageGrid, CliError> {
    let m = read_matrix(path)?;
    if m.rows != m.cols {
        return Err(CliError::format(path, format!("image must be square, found {}x{}", m.rows, m.cols)));
    }
    ImageGrid::from_vec(m.rows, m.data).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_image(path: &Path, image: &ImageGrid) -> Result<(), CliError> {
    write_matrix(path, image.n(), image.n(), image.values())
}

pub fn read_sinogram(path: &Path) -> Result<Sinogram, CliError> {
    let m = read_matrix(path)?;
    Sinogram::from_vec(m.rows, m.cols, m.data).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_sinogram(path: &Path, sino: &Sinogram) -> Result<(), CliError> {
    write_matrix(path, sino.num_angles(), sino.num_detectors(), sino.values())
}
