use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Config { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] premi_core::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Stable category name used in the error line.
    pub fn kind(&self) -> &'static str {
        use premi_core::Error as E;
        match self {
            Self::Config { .. } => "config",
            Self::Usage(_) => "usage",
            Self::Io { .. } => "io",
            Self::Core(e) => match e {
                E::InvalidConfig(_) => "config",
                E::Io(_) | E::Csv(_) => "io",
                E::Parse(_)
                | E::NonRectangularOutcomeForMvn { .. }
                | E::CategoryOutOfRange { .. }
                | E::UnsortedTimes { .. }
                | E::LengthMismatch(_)
                | E::InsufficientData(_) => "data",
                E::InvalidGrid(_) => "grid",
                E::DegenerateSimilarity | E::EmptyFinalCluster(_) | E::EmptyPosterior => "postprocess",
                E::NonSpdCovariance
                | E::SingularScatter
                | E::SingularSchurComplement
                | E::SingularGridKernel
                | E::AllComponentsZeroMass { .. } => "numerical",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" => 2,
            "config" => 3,
            "io" => 4,
            "data" => 5,
            "grid" => 6,
            "numerical" => 7,
            "postprocess" => 8,
            _ => 1,
        }
    }

    /// Single-line `error kind=... code=... message="..."` report.
    pub fn report_line(&self) -> String {
        let msg = self.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        format!("error kind={} code={} message=\"{msg}\"", self.kind(), self.exit_code())
    }
}
