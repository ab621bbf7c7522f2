//! Errors mapped to process exit codes.

use std::fmt;

pub const USAGE: i32 = 2;
pub const DATA: i32 = 3;
pub const NUMERICAL: i32 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub msg: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Failure { code: USAGE, msg: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Failure { code: DATA, msg: msg.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<rcf::Error> for Failure {
    fn from(e: rcf::Error) -> Self {
        use rcf::Error::*;
        let code = match &e {
            InvalidArgument(_) => USAGE,
            Numerical(_) => NUMERICAL,
            _ => DATA,
        };
        Failure { code, msg: e.to_string() }
    }
}
