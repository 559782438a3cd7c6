//! Plain-text scenarios: one `verb key=value ...` directive per line.
//!
//! Values containing spaces are written in double quotes. `#` starts a
//! comment line. Every name a directive refers to must have been declared
//! by an earlier directive.

mod fixtures;
mod run;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::calendar::SimDate;
use crate::registry::RegistryError;

pub use fixtures::{bundled, bundled_names};
pub use run::{run, DirectiveOutcome, EvidenceCounts, RunOptions, RunReport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {kind} `{name}` used before it is declared")]
    ForwardReference { line: usize, kind: &'static str, name: String },
    #[error("line {line}: {message}")]
    Config { line: usize, message: String },
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

impl ScenarioError {
    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Directive {
    pub line: usize,
    pub verb: String,
    pub args: BTreeMap<String, String>,
}

impl Directive {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.args.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub clock: SimDate,
    pub directives: Vec<Directive>,
}

pub const DEFAULT_CLOCK: (i32, u32, u32) = (2019, 6, 1);

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "unnamed".into(),
            seed: 0,
            clock: SimDate::ymd(DEFAULT_CLOCK.0, DEFAULT_CLOCK.1, DEFAULT_CLOCK.2),
            directives: Vec::new(),
        }
    }
}

/// How a key relates to entity names.
#[derive(Clone, Copy)]
enum Role {
    Plain,
    Declares(&'static str),
    Refers(&'static str),
    /// Comma-separated references.
    RefersMany(&'static str),
}

use Role::*;

struct VerbShape {
    verb: &'static str,
    required: &'static [&'static str],
    keys: &'static [(&'static str, Role)],
}

const VERBS: &[VerbShape] = &[
    VerbShape { verb: "scenario", required: &[], keys: &[("name", Plain), ("seed", Plain), ("clock", Plain)] },
    VerbShape { verb: "policy", required: &[], keys: &[("recognition", Plain), ("relay", Plain)] },
    VerbShape { verb: "node", required: &["state", "kind"], keys: &[("state", Plain), ("kind", Plain)] },
    VerbShape { verb: "advance", required: &["days"], keys: &[("days", Plain)] },
    VerbShape {
        verb: "sp",
        required: &["id", "home"],
        keys: &[("id", Declares("sp")), ("home", Plain), ("loa", Plain), ("sector", Plain), ("request", Plain), ("require", Plain)],
    },
    VerbShape {
        verb: "citizen",
        required: &["id", "origin", "family", "first", "dob"],
        keys: &[
            ("id", Declares("citizen")),
            ("origin", Plain),
            ("family", Plain),
            ("first", Plain),
            ("dob", Plain),
            ("credential", Plain),
            ("birth-name", Plain),
            ("birth-place", Plain),
            ("address", Plain),
            ("gender", Plain),
        ],
    },
    VerbShape {
        verb: "auth",
        required: &["sp", "citizen"],
        keys: &[
            ("sp", Refers("sp")),
            ("citizen", Refers("citizen")),
            ("credential", Plain),
            ("expect", Plain),
            ("hops", Plain),
            ("absent", Plain),
            ("present", Plain),
        ],
    },
    VerbShape {
        verb: "recognition",
        required: &["state", "at", "expect"],
        keys: &[("state", Plain), ("at", Plain), ("expect", Plain)],
    },
    VerbShape {
        verb: "tsp",
        required: &["id", "state"],
        keys: &[("id", Declares("tsp")), ("state", Plain), ("qualified", Plain)],
    },
    VerbShape {
        verb: "tsa",
        required: &["id"],
        keys: &[("id", Declares("tsa")), ("qualified", Plain), ("months", Plain)],
    },
    VerbShape {
        verb: "signer",
        required: &["id", "tsp"],
        keys: &[
            ("id", Declares("signer")),
            ("tsp", Refers("tsp")),
            ("kind", Plain),
            ("subject", Plain),
            ("qualified", Plain),
            ("device", Plain),
            ("from", Plain),
            ("until", Plain),
        ],
    },
    VerbShape {
        verb: "sign",
        required: &["doc", "signer", "content"],
        keys: &[("doc", Declares("doc")), ("signer", Refers("signer")), ("content", Plain), ("on", Plain), ("expect", Plain)],
    },
    VerbShape { verb: "tamper", required: &["doc"], keys: &[("doc", Refers("doc"))] },
    VerbShape {
        verb: "tamper-suite",
        required: &["doc"],
        keys: &[("doc", Refers("doc")), ("cases", Plain), ("at", Plain)],
    },
    VerbShape {
        verb: "extend",
        required: &["doc", "tsa"],
        keys: &[("doc", Refers("doc")), ("tsa", Refers("tsa")), ("on", Plain), ("expect", Plain)],
    },
    VerbShape {
        verb: "validate",
        required: &["doc", "expect"],
        keys: &[("doc", Refers("doc")), ("at", Plain), ("expect", Plain)],
    },
    VerbShape { verb: "level", required: &["doc", "expect"], keys: &[("doc", Refers("doc")), ("expect", Plain)] },
    VerbShape {
        verb: "option",
        required: &["n"],
        keys: &[("n", Plain), ("expect-level", Plain), ("expect-left", Plain), ("expect-listed", Plain)],
    },
    VerbShape {
        verb: "transport",
        required: &[],
        keys: &[
            ("loss", Plain),
            ("dup", Plain),
            ("corruption", Plain),
            ("delay", Plain),
            ("downtime", Plain),
            ("retries", Plain),
            ("timeout", Plain),
            ("cap", Plain),
            ("retention", Plain),
            ("qualified", Plain),
            ("seed", Plain),
        ],
    },
    VerbShape {
        verb: "ap",
        required: &["id"],
        keys: &[("id", Declares("ap")), ("address", Plain), ("pki", Plain)],
    },
    VerbShape {
        verb: "participant",
        required: &["id", "ap"],
        keys: &[("id", Declares("participant")), ("ap", Refers("ap")), ("smp", Plain)],
    },
    VerbShape {
        verb: "send",
        required: &["from", "to"],
        keys: &[("from", Refers("participant")), ("to", Refers("participant")), ("count", Plain), ("size", Plain)],
    },
    VerbShape { verb: "deliver", required: &[], keys: &[("expect-delivered", Plain), ("expect-undelivered", Plain)] },
    VerbShape { verb: "audit", required: &[], keys: &[("exactly-once", Plain)] },
    VerbShape {
        verb: "platform",
        required: &["participant", "ap"],
        keys: &[("participant", Declares("participant")), ("ap", Refers("ap")), ("smp", Plain), ("seal-policy", Plain), ("consent", Plain), ("age-gate", Plain)],
    },
    VerbShape {
        verb: "account",
        required: &["id"],
        keys: &[
            ("id", Declares("account")),
            ("email", Plain),
            ("phone", Plain),
            ("eid-sp", Refers("sp")),
            ("eid-citizen", Refers("citizen")),
            ("expect", Plain),
        ],
    },
    VerbShape {
        verb: "upload",
        required: &["account", "record"],
        keys: &[("account", Refers("account")), ("record", Declares("record")), ("content", Plain), ("markers", Plain), ("size", Plain)],
    },
    VerbShape {
        verb: "share",
        required: &["owner", "grantee", "records"],
        keys: &[
            ("owner", Refers("account")),
            ("grantee", Refers("account")),
            ("records", RefersMany("record")),
            ("mode", Plain),
            ("pin", Plain),
            ("grant", Declares("grant")),
            ("expect", Plain),
        ],
    },
    VerbShape {
        verb: "revoke",
        required: &["owner", "grant"],
        keys: &[("owner", Refers("account")), ("grant", Refers("grant"))],
    },
    VerbShape {
        verb: "read",
        required: &["account", "record", "expect"],
        keys: &[("account", Refers("account")), ("record", Refers("record")), ("expect", Plain)],
    },
    VerbShape {
        verb: "hcp",
        required: &["id", "tsp"],
        keys: &[("id", Declares("source")), ("tsp", Refers("tsp"))],
    },
    VerbShape {
        verb: "ingest",
        required: &["source", "account"],
        keys: &[
            ("source", Refers("source")),
            ("account", Refers("account")),
            ("record", Declares("record")),
            ("content", Plain),
            ("markers", Plain),
            ("sealed", Plain),
            ("tamper", Plain),
            ("expect", Plain),
        ],
    },
    VerbShape {
        verb: "ncp",
        required: &["id", "ap"],
        keys: &[("id", Declares("source")), ("ap", Refers("ap")), ("smp", Plain)],
    },
    VerbShape {
        verb: "fetch",
        required: &["ncp", "account"],
        keys: &[
            ("ncp", Refers("source")),
            ("account", Refers("account")),
            ("record", Declares("record")),
            ("content", Plain),
            ("markers", Plain),
            ("expect", Plain),
        ],
    },
    VerbShape {
        verb: "donate",
        required: &["account", "record"],
        keys: &[
            ("account", Refers("account")),
            ("record", Refers("record")),
            ("consent", Plain),
            ("signer", Refers("signer")),
            ("expect", Plain),
        ],
    },
    VerbShape { verb: "scan", required: &[], keys: &[("expect", Plain)] },
];

fn tokenize(text: &str, line: usize) -> Result<Vec<String>, ScenarioError> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut any = false;
    for c in text.chars() {
        match c {
            '"' => {
                quoted = !quoted;
                any = true;
            }
            c if c.is_whitespace() && !quoted => {
                if any {
                    out.push(std::mem::take(&mut cur));
                    any = false;
                }
            }
            c => {
                cur.push(c);
                any = true;
            }
        }
    }
    if quoted {
        return Err(ScenarioError::Parse {
            line,
            message: "unterminated quote".into(),
        });
    }
    if any {
        out.push(cur);
    }
    Ok(out)
}

/// Parses and checks a scenario. The `scenario` header directive, when
/// present, sets name, seed and clock and is not kept in `directives`.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut sc = Scenario::default();
    let mut declared: BTreeMap<&'static str, BTreeSet<String>> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens = tokenize(trimmed, line)?;
        let verb = tokens[0].clone();
        let spec = VERBS.iter().find(|v| v.verb == verb).ok_or_else(|| ScenarioError::Parse {
            line,
            message: format!("unknown directive `{verb}`"),
        })?;
        let mut args = BTreeMap::new();
        for tok in &tokens[1..] {
            let (k, v) = tok.split_once('=').ok_or_else(|| ScenarioError::Parse {
                line,
                message: format!("expected key=value, got `{tok}`"),
            })?;
            if !spec.keys.iter().any(|(name, _)| *name == k) {
                return Err(ScenarioError::Parse {
                    line,
                    message: format!("`{verb}` takes no key `{k}`"),
                });
            }
            if args.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ScenarioError::Parse {
                    line,
                    message: format!("key `{k}` given twice"),
                });
            }
        }
        for req in spec.required {
            if !args.contains_key(*req) {
                return Err(ScenarioError::Parse {
                    line,
                    message: format!("`{verb}` needs `{req}`"),
                });
            }
        }
        for (key, role) in spec.keys {
            let Some(value) = args.get(*key) else { continue };
            let names: Vec<&str> = match role {
                Plain | Declares(_) => vec![value.as_str()],
                Refers(_) => vec![value.as_str()],
                RefersMany(_) => value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect(),
            };
            match role {
                Refers(kind) | RefersMany(kind) => {
                    for n in names {
                        if !declared.get(kind).is_some_and(|s| s.contains(n)) {
                            return Err(ScenarioError::ForwardReference {
                                line,
                                kind,
                                name: n.to_string(),
                            });
                        }
                    }
                }
                _ => {}
            }
        }
        for (key, role) in spec.keys {
            if let (Declares(kind), Some(value)) = (role, args.get(*key)) {
                if !declared.entry(kind).or_default().insert(value.clone()) {
                    return Err(ScenarioError::Parse {
                        line,
                        message: format!("{kind} `{value}` declared twice"),
                    });
                }
            }
        }
        if verb == "scenario" {
            if !sc.directives.is_empty() {
                return Err(ScenarioError::Parse {
                    line,
                    message: "`scenario` must come first".into(),
                });
            }
            if let Some(n) = args.get("name") {
                sc.name = n.clone();
            }
            if let Some(s) = args.get("seed") {
                sc.seed = s.parse().map_err(|_| ScenarioError::Parse {
                    line,
                    message: format!("bad seed `{s}`"),
                })?;
            }
            if let Some(c) = args.get("clock") {
                sc.clock = c.parse().map_err(|e| ScenarioError::Parse {
                    line,
                    message: format!("bad clock: {e}"),
                })?;
            }
            continue;
        }
        sc.directives.push(Directive { line, verb, args });
    }
    Ok(sc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_is_empty_scenario() {
        let sc = parse_scenario("").unwrap();
        assert!(sc.directives.is_empty());
        let sc = parse_scenario("# only a comment\n\n").unwrap();
        assert!(sc.directives.is_empty());
    }

    #[test]
    fn header_and_quotes() {
        let sc = parse_scenario(
            "scenario name=t seed=9 clock=2020-02-29\nsp id=portal home=AT\ncitizen id=c origin=DE family=\"van der Berg\" first=A dob=1990-01-01\n",
        )
        .unwrap();
        assert_eq!((sc.name.as_str(), sc.seed), ("t", 9));
        assert_eq!(sc.clock, SimDate::ymd(2020, 2, 29));
        assert_eq!(sc.directives[1].get("family"), Some("van der Berg"));
        assert_eq!(sc.directives[1].line, 3);
    }

    #[test]
    fn forward_reference_is_reported_with_line() {
        let err = parse_scenario("sp id=portal home=AT\nauth sp=portal citizen=ghost\n").unwrap_err();
        assert_eq!(
            err,
            ScenarioError::ForwardReference {
                line: 2,
                kind: "citizen",
                name: "ghost".into()
            }
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert!(matches!(parse_scenario("\nfly to=moon"), Err(ScenarioError::Parse { line: 2, .. })));
        assert!(matches!(parse_scenario("sp id=x"), Err(ScenarioError::Parse { line: 1, .. })));
        assert!(matches!(parse_scenario("sp id=x home=AT bogus"), Err(ScenarioError::Parse { line: 1, .. })));
        assert!(matches!(
            parse_scenario("sp id=x home=AT\nsp id=x home=DE"),
            Err(ScenarioError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn every_bundled_fixture_parses() {
        for name in bundled_names() {
            parse_scenario(bundled(name).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
