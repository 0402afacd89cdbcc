//! Client for denoisers that run as a separate process.
//!
//! The child is invoked as `command... <input.npy> <output.npy> <sigma>`.
//! It must read the input image, write a denoised image of the same shape to
//! the output path and exit with status 0. Both files are NPY v1.0 `<f4`.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use calred_core::denoise::EXTERNAL_DEFAULT_TIMEOUT_MS;
use calred_core::{DenoiseError, Denoiser, DenoiserSpec, ImageGrid};
use wait_timeout::ChildExt;

use crate::error::CliError;
use crate::npy;

#[derive(Debug, thiserror::Error)]
pub enum ExternalError {
    #[error("could not start `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("denoiser exited with code {0}")]
    ExitCode(i32),
    #[error("denoiser was terminated by a signal")]
    Killed,
    #[error("denoiser timed out after {0} ms")]
    Timeout(u64),
    #[error("denoiser produced no output file at {}", .0.display())]
    MissingOutput(PathBuf),
    #[error("denoiser output has shape {actual:?}, expected {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("unreadable denoiser output: {0}")]
    BadOutput(String),
    #[error("temporary file error: {0}")]
    Io(#[from] std::io::Error),
}

/// One external denoiser. Calls run one at a time; each gets fresh files in
/// a private temporary directory that is removed on drop.
#[derive(Debug)]
pub struct ExternalDenoiser {
    command: Vec<String>,
    sigma: f64,
    timeout: Duration,
    dir: tempfile::TempDir,
    calls: u64,
}

impl ExternalDenoiser {
    pub fn new(command: Vec<String>, sigma: f64, timeout: Duration) -> std::io::Result<Self> {
        assert!(!command.is_empty(), "external denoiser command must not be empty");
        Ok(Self {
            command,
            sigma,
            timeout,
            dir: tempfile::Builder::new().prefix("calred-denoise").tempdir()?,
            calls: 0,
        })
    }

    pub fn from_spec(spec: &DenoiserSpec) -> Result<Self, CliError> {
        match spec {
            DenoiserSpec::External {
                sigma,
                command,
                timeout_ms,
            } => {
                if command.is_empty() {
                    return Err(CliError::usage("external denoiser needs a command"));
                }
                Self::new(command.clone(), *sigma, Duration::from_millis(*timeout_ms))
                    .map_err(|e| CliError::io(Path::new("<temp dir>"), e))
            }
            _ => Err(CliError::usage("not an external denoiser spec")),
        }
    }

    pub fn with_default_timeout(command: Vec<String>, sigma: f64) -> std::io::Result<Self> {
        Self::new(command, sigma, Duration::from_millis(EXTERNAL_DEFAULT_TIMEOUT_MS))
    }

    pub fn run(&mut self, x: &ImageGrid) -> Result<ImageGrid, ExternalError> {
        self.calls += 1;
        let input = self.dir.path().join(format!("in-{}.npy", self.calls));
        let output = self.dir.path().join(format!("out-{}.npy", self.calls));
        {
            let mut f = std::io::BufWriter::new(std::fs::File::create(&input)?);
            npy::encode_f32(&mut f, x.n(), x.n(), x.values())?;
            std::io::Write::flush(&mut f)?;
        }

        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .arg(&input)
            .arg(&output)
            .arg(self.sigma.to_string())
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .spawn()
            .map_err(|source| ExternalError::Spawn {
                program: self.command[0].clone(),
                source,
            })?;
        let status = match child.wait_timeout(self.timeout)? {
            Some(status) => status,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(ExternalError::Timeout(self.timeout.as_millis() as u64));
            }
        };
        let _ = std::fs::remove_file(&input);
        if !status.success() {
            return Err(match status.code() {
                Some(code) => ExternalError::ExitCode(code),
                None => ExternalError::Killed,
            });
        }
        if !output.exists() {
            return Err(ExternalError::MissingOutput(output));
        }
        let m = npy::read_matrix(&output).map_err(|e| ExternalError::BadOutput(e.to_string()))?;
        let _ = std::fs::remove_file(&output);
        if (m.rows, m.cols) != (x.n(), x.n()) {
            return Err(ExternalError::ShapeMismatch {
                expected: (x.n(), x.n()),
                actual: (m.rows, m.cols),
            });
        }
        ImageGrid::from_vec(m.rows, m.data).map_err(|e| ExternalError::BadOutput(e.to_string()))
    }
}

impl Denoiser for ExternalDenoiser {
    fn denoise(&mut self, x: &ImageGrid) -> Result<ImageGrid, DenoiseError> {
        self.run(x).map_err(|e| DenoiseError::External(Box::new(e)))
    }
}
