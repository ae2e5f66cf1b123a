use std::fmt;
use std::path::Path;

use commentary_core::Error;

pub const EXIT_INTERNAL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_FORMAT: u8 = 4;
pub const EXIT_INVALID: u8 = 5;

pub const EXIT_CODES_HELP: &str = "\
Exit codes:
  0  success
  1  internal error
  2  usage error (unknown flag, missing argument, bad config file)
  3  I/O error (missing or unreadable input, unwritable output); the path is named
  4  malformed input (transcript, JSONL, JSON, image)
  5  invalid parameter or incompatible inputs (e.g. vocabulary mismatch)";

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Failure::new(EXIT_INVALID, message)
    }

    /// Prefix the message with the file it concerns.
    pub fn in_file(mut self, path: &Path) -> Self {
        let shown = path.display().to_string();
        if !self.message.contains(&shown) {
            self.message = format!("{shown}: {}", self.message);
        }
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } => EXIT_IO,
            Error::Parse { .. } | Error::Schema { .. } | Error::Json(_) | Error::Csv(_) | Error::Image { .. } => {
                EXIT_FORMAT
            }
            Error::InvalidParameter(_)
            | Error::VocabularyMismatch { .. }
            | Error::OutOfVocabulary(_)
            | Error::Empty(_) => EXIT_INVALID,
        };
        Failure::new(code, e.to_string())
    }
}
