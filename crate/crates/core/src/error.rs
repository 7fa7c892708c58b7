use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular design: column {column} is linearly dependent on earlier columns")]
    SingularDesign { column: usize },

    #[error("logistic fit did not converge ({reason}) after {iterations} iterations")]
    Separation { reason: String, iterations: usize },

    #[error("arm {arm} has no subjects")]
    EmptyArm { arm: u8 },

    #[error("all super-learner members failed to fit: {0}")]
    AllMembersFailed(String),

    #[error("schema error: missing columns {0:?}")]
    Schema(Vec<String>),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
