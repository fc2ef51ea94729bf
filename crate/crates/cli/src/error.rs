use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error{}{}: {message}", at_path(.path), at_line(.line))]
    Config { path: String, line: Option<usize>, message: String },

    #[error(transparent)]
    Core(#[from] histent_core::Error),

    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },

    #[error("writing {file}: {message}")]
    Output { file: String, message: String },

    /// A check ran to completion and failed.
    #[error("{0}")]
    Failed(String),
}

fn at_path(p: &str) -> String {
    if p.is_empty() {
        String::new()
    } else {
        format!(" at {p}")
    }
}

fn at_line(l: &Option<usize>) -> String {
    l.map(|l| format!(" (line {l})")).unwrap_or_default()
}

impl CliError {
    /// 1 for bad input, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Failed(_) => 2,
            _ => 1,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }
}
