use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing slot `{0}`")]
    MissingSlot(String),

    #[error("unknown emotion label `{0}`")]
    UnknownEmotion(String),

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("could not parse complaint chain from backend output after {attempts} attempts")]
    ChainParse { attempts: usize },

    #[error("no event in the corpus matches the seeker profile")]
    NoMatchingEvent,

    #[error("no open session")]
    NoOpenSession,

    #[error("a session is already open")]
    SessionAlreadyOpen,

    #[error("no archived session to probe")]
    NoArchivedSession,

    #[error("judge output could not be parsed as a 1-5 score: {0:?}")]
    JudgeParse(String),

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document {path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, with stage context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn format(path: impl AsRef<std::path::Path>, message: impl ToString) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            message: message.to_string(),
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
