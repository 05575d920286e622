use thiserror::Error;

/// Validation and runtime failures of the physics and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("time {t} s outside profile range [0, {duration}] s")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("state is not normalized: |a|^2 + |b|^2 = {norm}")]
    NotNormalized { norm: f64 },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, name: &'static str, value: f64, reason: &'static str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason,
        })
    }
}
