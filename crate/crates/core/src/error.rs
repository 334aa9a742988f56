use std::io;

use thiserror::Error;

use crate::sim::SimTime;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event scheduled in the past: now={now}, fire_at={fire_at}")]
    ScheduleInPast { now: SimTime, fire_at: SimTime },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("protocol violation on conn {conn}: {msg}")]
    Protocol { conn: usize, msg: String },

    #[error("logic error: {0}")]
    Logic(String),

    #[error(transparent)]
    Ensemble(#[from] EnsembleError),

    #[error("simulation did not finish by {deadline}: {detail}")]
    Stalled { deadline: SimTime, detail: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnsembleError {
    #[error("connection {conn} already belongs to an ensemble")]
    AlreadyMember { conn: usize },

    #[error("connection {conn} is not a member of ensemble {pair:?}")]
    NotMember { conn: usize, pair: (u32, u32) },
}

/// Errors surfaced by config parsing and the experiment runner.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("{}", match .line { Some(l) => format!("config line {l}: {msg}"), None => format!("config: {msg}") })]
    Config { line: Option<usize>, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Sim(#[from] SimError),
}

impl RunError {
    pub fn config(msg: impl Into<String>) -> Self {
        RunError::Config {
            line: None,
            msg: msg.into(),
        }
    }

    pub fn at_line(line: usize, msg: impl Into<String>) -> Self {
        RunError::Config {
            line: Some(line),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: io::Error) -> Self {
        RunError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the command-line tools.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config { .. } => 2,
            RunError::Sim(SimError::Config(_)) => 2,
            RunError::Io { .. } => 3,
            RunError::Sim(_) => 1,
        }
    }
}
