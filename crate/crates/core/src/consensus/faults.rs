use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::sim::{NodeId, SimTime};

/// One fault-script directive. Times are simulated milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    Crash {
        node: NodeId,
        t: SimTime,
    },
    Recover {
        node: NodeId,
        t: SimTime,
    },
    /// Audit votes are inverted for `t1 <= now <= t2`.
    ByzantineAudit {
        node: NodeId,
        t1: SimTime,
        t2: SimTime,
    },
}

impl Fault {
    /// Time the directive takes effect.
    pub fn at(&self) -> SimTime {
        match *self {
            Fault::Crash { t, .. } | Fault::Recover { t, .. } => t,
            Fault::ByzantineAudit { t1, .. } => t1,
        }
    }

    pub fn node(&self) -> NodeId {
        match *self {
            Fault::Crash { node, .. }
            | Fault::Recover { node, .. }
            | Fault::ByzantineAudit { node, .. } => node,
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::Crash { node, t } => write!(f, "crash {node} {t}"),
            Fault::Recover { node, t } => write!(f, "recover {node} {t}"),
            Fault::ByzantineAudit { node, t1, t2 } => write!(f, "byzantine-audit {node} {t1} {t2}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("fault script line {line}: {msg}")]
pub struct FaultParseError {
    pub line: usize,
    pub msg: String,
}

/// Line-oriented fault directives; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultScript {
    pub faults: Vec<Fault>,
}

impl FaultScript {
    pub fn new(faults: Vec<Fault>) -> Self {
        FaultScript { faults }
    }

    pub fn is_byzantine(&self, node: NodeId, now: SimTime) -> bool {
        self.faults.iter().any(|f| {
            matches!(*f, Fault::ByzantineAudit { node: n, t1, t2 } if n == node && t1 <= now && now <= t2)
        })
    }
}

impl fmt::Display for FaultScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fault in &self.faults {
            writeln!(f, "{fault}")?;
        }
        Ok(())
    }
}

impl FromStr for FaultScript {
    type Err = FaultParseError;

    fn from_str(text: &str) -> Result<Self, FaultParseError> {
        let mut faults = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let err = |msg: String| FaultParseError { line, msg };
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let words: Vec<&str> = body.split_whitespace().collect();
            let num = |i: usize, what: &str| -> Result<u64, FaultParseError> {
                let w = words.get(i).ok_or_else(|| err(format!("missing {what}")))?;
                w.parse()
                    .map_err(|_| err(format!("{what} `{w}` is not a non-negative integer")))
            };
            let node = |i: usize| -> Result<NodeId, FaultParseError> {
                let n = num(i, "node")?;
                u32::try_from(n)
                    .map(NodeId)
                    .map_err(|_| err(format!("node {n} out of range")))
            };
            let (fault, arity) = match words[0] {
                "crash" => (
                    Fault::Crash {
                        node: node(1)?,
                        t: num(2, "time")?,
                    },
                    3,
                ),
                "recover" => (
                    Fault::Recover {
                        node: node(1)?,
                        t: num(2, "time")?,
                    },
                    3,
                ),
                "byzantine-audit" => {
                    let (t1, t2) = (num(2, "start time")?, num(3, "end time")?);
                    if t1 > t2 {
                        return Err(err(format!("window {t1}..{t2} is empty")));
                    }
                    (
                        Fault::ByzantineAudit {
                            node: node(1)?,
                            t1,
                            t2,
                        },
                        4,
                    )
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            };
            if words.len() != arity {
                return Err(err(format!(
                    "expected {arity} fields, found {}",
                    words.len()
                )));
            }
            faults.push(fault);
        }
        Ok(FaultScript { faults })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_directives() {
        let s: FaultScript =
            "# demo\ncrash 3 20000\n\nbyzantine-audit 31 0 50000 # window\nrecover 3 70000\n"
                .parse()
                .unwrap();
        assert_eq!(
            s.faults,
            vec![
                Fault::Crash {
                    node: NodeId(3),
                    t: 20_000
                },
                Fault::ByzantineAudit {
                    node: NodeId(31),
                    t1: 0,
                    t2: 50_000
                },
                Fault::Recover {
                    node: NodeId(3),
                    t: 70_000
                },
            ]
        );
        assert!(s.is_byzantine(NodeId(31), 50_000));
        assert!(!s.is_byzantine(NodeId(31), 50_001));
        assert_eq!(s.to_string().parse::<FaultScript>().unwrap(), s);
    }

    #[test]
    fn reports_line_numbers() {
        let e = "crash 1 5\nexplode 2 3".parse::<FaultScript>().unwrap_err();
        assert_eq!(e.line, 2);
        let e = "crash 1".parse::<FaultScript>().unwrap_err();
        assert_eq!(e.line, 1);
        assert!("crash 1 2 3".parse::<FaultScript>().is_err());
        assert!("byzantine-audit 1 9 3".parse::<FaultScript>().is_err());
        assert!("crash -1 3".parse::<FaultScript>().is_err());
    }
}
