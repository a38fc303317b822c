use std::fmt;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed network document: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invalid network:\n{}", ViolationList(.0))]
    Validation(Vec<Violation>),

    #[error("degenerate link: distance {distance_miles} mi at {v_max} mph rounds to a zero minimum travel time")]
    DegenerateLink { distance_miles: f64, v_max: f64 },

    #[error("duration {minutes} min is not a nonnegative integer multiple of the time step {delta_t} min")]
    OffGrid { minutes: f64, delta_t: f64 },

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("unknown link `{0}`")]
    UnknownLink(String),

    #[error("invalid demand: {0}")]
    InvalidDemand(String),

    #[error("invalid route: {0}")]
    InvalidRoute(String),

    #[error("route is not safe: link `{0}` violates the worst-case battery bound")]
    UnsafeRoute(String),

    #[error(
        "node `{node}`: {vectors} charge-duration vectors exceed the enumeration cap of {cap}; \
         use the dynamic-programming wait distribution instead"
    )]
    EnumerationCap { node: String, vectors: u128, cap: u128 },

    #[error("node `{0}` has no landing spots; the queue wait is undefined")]
    ZeroCapacity(String),

    #[error("dead end: state {0} has no available action")]
    DeadEnd(String),

    #[error("action {action} is not available in state {state}")]
    ActionUnavailable { state: String, action: String },

    #[error("transition row of state {state} under {action} sums to {sum}")]
    NotStochastic { state: String, action: String, sum: f64 },

    #[error("successor {0} is not part of the enumerated state space")]
    UnknownState(String),

    #[error("link `{link}`: final hazard probability is {value}, expected 1")]
    OpenHazard { link: String, value: f64 },

    #[error("policy undefined at state {0}")]
    PolicyUndefined(String),

    #[error("trajectory did not arrive at the destination")]
    NotArrived,

    #[error("invalid configuration: {0}")]
    Config(String),
}

struct ViolationList<'a>(&'a [Violation]);

impl fmt::Display for ViolationList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {v}")?;
        }
        Ok(())
    }
}
