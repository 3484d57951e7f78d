//! Scenario documents: actors, consortium, grants, faults and a timeline.
//!
//! Times are simulated milliseconds throughout.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use bpds_core::ces::{Ceas, IndexSet};
use bpds_core::cloud::AccessPolicy;
use bpds_core::consensus::FaultScript;
use bpds_core::group::GroupProfile;
use bpds_core::ledger::Action;
use bpds_core::sim::SimTime;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Test,
    Production,
}

impl From<Profile> for GroupProfile {
    fn from(p: Profile) -> Self {
        match p {
            Profile::Test => GroupProfile::Test,
            Profile::Production => GroupProfile::Production,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub profile: Profile,
    #[serde(default)]
    pub seed: u64,
    /// End of the simulated run.
    pub until: SimTime,
    /// Default mandatory index set for visits.
    #[serde(default)]
    pub ceas: Vec<u8>,
    #[serde(default)]
    pub net: NetSection,
    #[serde(default)]
    pub nodes: NodeSection,
    #[serde(default)]
    pub doctors: Vec<ActorSpec>,
    #[serde(default)]
    pub patients: Vec<ActorSpec>,
    #[serde(default)]
    pub users: Vec<UserSpec>,
    #[serde(default)]
    pub grants: Vec<GrantSpec>,
    #[serde(default)]
    pub faults: FaultSection,
    pub tamper: Option<TamperSpec>,
    #[serde(default)]
    pub timeline: Vec<Event>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetSection {
    pub base_delay: SimTime,
    pub jitter: SimTime,
    pub drop_rate: f64,
}

impl Default for NetSection {
    fn default() -> Self {
        NetSection {
            base_delay: 50,
            jitter: 20,
            drop_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NodeSection {
    pub count: u32,
    pub credit: u64,
    pub overrides: Vec<CreditOverride>,
}

impl Default for NodeSection {
    fn default() -> Self {
        NodeSection {
            count: 50,
            credit: 100,
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreditOverride {
    pub node: u32,
    pub credit: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub name: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub name: String,
    #[serde(default)]
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrantSpec {
    pub patient: String,
    pub grantee: String,
    pub parts: Vec<u8>,
    pub actions: Vec<String>,
    pub valid_from: SimTime,
    pub valid_until: SimTime,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSection {
    #[serde(default)]
    pub script: String,
}

/// Flips one bit of a committed block after the run, before dumping.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TamperSpec {
    pub height: u64,
    pub byte: usize,
    pub bit: u8,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Event {
    /// Doctor examines a patient, signs the record and hands it over; the
    /// patient extracts, stores and releases the chosen parts.
    Visit {
        t: SimTime,
        doctor: String,
        patient: String,
        extract: Vec<u8>,
        policy: String,
        ceas: Option<Vec<u8>>,
        emr: Option<Vec<String>>,
    },
    Request {
        t: SimTime,
        user: String,
        patient: String,
        part: u8,
        #[serde(default = "default_action")]
        action: String,
    },
    Grant {
        t: SimTime,
        patient: String,
        grantee: String,
        parts: Vec<u8>,
        actions: Vec<String>,
        valid_from: SimTime,
        valid_until: SimTime,
    },
    Revoke {
        t: SimTime,
        patient: String,
        grantee: String,
    },
}

fn default_action() -> String {
    "read".into()
}

impl Event {
    /// The grant carried by a `grant` event.
    pub fn grant_spec(&self) -> Option<GrantSpec> {
        match self {
            Event::Grant {
                patient,
                grantee,
                parts,
                actions,
                valid_from,
                valid_until,
                ..
            } => Some(GrantSpec {
                patient: patient.clone(),
                grantee: grantee.clone(),
                parts: parts.clone(),
                actions: actions.clone(),
                valid_from: *valid_from,
                valid_until: *valid_until,
            }),
            _ => None,
        }
    }

    pub fn t(&self) -> SimTime {
        match self {
            Event::Visit { t, .. }
            | Event::Request { t, .. }
            | Event::Grant { t, .. }
            | Event::Revoke { t, .. } => *t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ActorRole {
    Doctor,
    Patient,
    User,
}

impl ActorRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ActorRole::Doctor => "doctor",
            ActorRole::Patient => "patient",
            ActorRole::User => "user",
        }
    }
}

/// A grant with every field checked and converted.
#[derive(Debug, Clone)]
pub struct ResolvedGrant {
    pub patient: String,
    pub grantee: String,
    pub parts: IndexSet,
    pub actions: BTreeSet<Action>,
    pub valid_from: SimTime,
    pub valid_until: SimTime,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let s: Scenario = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Parse(msg) => CliError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Every actor label with its role, in declaration order per role.
    pub fn actors(&self) -> BTreeMap<&str, ActorRole> {
        let mut m = BTreeMap::new();
        for d in &self.doctors {
            m.insert(d.name.as_str(), ActorRole::Doctor);
        }
        for p in &self.patients {
            m.insert(p.name.as_str(), ActorRole::Patient);
        }
        for u in &self.users {
            m.insert(u.name.as_str(), ActorRole::User);
        }
        m
    }

    pub fn fault_script(&self) -> Result<FaultScript, CliError> {
        self.faults
            .script
            .parse()
            .map_err(|e| CliError::Parse(format!("faults.script: {e}")))
    }

    pub fn resolve_grant(&self, g: &GrantSpec, at: &str) -> Result<ResolvedGrant, CliError> {
        let err = |field: &str, msg: String| CliError::Parse(format!("{at}.{field}: {msg}"));
        self.expect_role(&g.patient, ActorRole::Patient)
            .map_err(|m| err("patient", m))?;
        if !self.actors().contains_key(g.grantee.as_str()) {
            return Err(err("grantee", format!("unknown actor `{}`", g.grantee)));
        }
        let parts =
            IndexSet::new(g.parts.iter().copied()).map_err(|e| err("parts", e.to_string()))?;
        if parts.is_empty() {
            return Err(err("parts", "must name at least one part".into()));
        }
        let actions = g
            .actions
            .iter()
            .map(|a| a.parse::<Action>())
            .collect::<Result<BTreeSet<_>, _>>()
            .map_err(|e| err("actions", e.to_string()))?;
        if actions.is_empty() {
            return Err(err("actions", "must name at least one action".into()));
        }
        if g.valid_from >= g.valid_until {
            return Err(err(
                "valid_until",
                format!("must exceed valid_from ({})", g.valid_from),
            ));
        }
        Ok(ResolvedGrant {
            patient: g.patient.clone(),
            grantee: g.grantee.clone(),
            parts,
            actions,
            valid_from: g.valid_from,
            valid_until: g.valid_until,
        })
    }

    fn expect_role(&self, name: &str, role: ActorRole) -> Result<(), String> {
        match self.actors().get(name) {
            Some(&r) if r == role => Ok(()),
            Some(r) => Err(format!(
                "`{name}` is a {}, expected a {}",
                r.as_str(),
                role.as_str()
            )),
            None => Err(format!("unknown actor `{name}`")),
        }
    }

    /// Mandatory set for a visit, falling back to the scenario default.
    pub fn visit_ceas(&self, own: &Option<Vec<u8>>) -> Result<Ceas, String> {
        let list = own.as_ref().unwrap_or(&self.ceas);
        Ceas::from_indices(list.iter().copied()).map_err(|e| e.to_string())
    }

    fn validate(&self) -> Result<(), CliError> {
        let p = |msg: String| CliError::Parse(msg);
        let mut seen = BTreeSet::new();
        let names = self
            .doctors
            .iter()
            .map(|a| &a.name)
            .chain(self.patients.iter().map(|a| &a.name))
            .chain(self.users.iter().map(|u| &u.name));
        for name in names {
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(p(format!("actor name `{name}` must be a non-empty word")));
            }
            if !seen.insert(name) {
                return Err(p(format!("actor name `{name}` is declared twice")));
            }
        }
        if self.nodes.count < 50 {
            return Err(p(format!(
                "nodes.count: {} nodes cannot fill 30 producer and 20 auditor roles",
                self.nodes.count
            )));
        }
        for (k, o) in self.nodes.overrides.iter().enumerate() {
            if o.node >= self.nodes.count {
                return Err(p(format!("nodes.overrides[{k}].node: no node {}", o.node)));
            }
        }
        if !(0.0..=1.0).contains(&self.net.drop_rate) {
            return Err(p(format!(
                "net.drop_rate: {} outside [0, 1]",
                self.net.drop_rate
            )));
        }
        let faults = self.fault_script()?;
        for f in &faults.faults {
            if f.node().0 >= self.nodes.count {
                return Err(p(format!("faults.script: no node {}", f.node())));
            }
        }
        if self.tamper.is_some_and(|t| t.bit > 7) {
            return Err(p("tamper.bit: must be in 0..=7".into()));
        }
        for (k, g) in self.grants.iter().enumerate() {
            self.resolve_grant(g, &format!("grants[{k}]"))?;
        }
        let mut last = 0;
        for (k, ev) in self.timeline.iter().enumerate() {
            let at = format!("timeline[{k}]");
            let err = |field: &str, msg: String| CliError::Parse(format!("{at}.{field}: {msg}"));
            if ev.t() < last {
                return Err(err(
                    "t",
                    format!("{} precedes the previous event at {last}", ev.t()),
                ));
            }
            if ev.t() > self.until {
                return Err(err("t", format!("{} is after the end of the run", ev.t())));
            }
            last = ev.t();
            match ev {
                Event::Visit {
                    doctor,
                    patient,
                    extract,
                    policy,
                    ceas,
                    emr,
                    ..
                } => {
                    self.expect_role(doctor, ActorRole::Doctor)
                        .map_err(|m| err("doctor", m))?;
                    self.expect_role(patient, ActorRole::Patient)
                        .map_err(|m| err("patient", m))?;
                    let ceas = self.visit_ceas(ceas).map_err(|m| err("ceas", m))?;
                    let chosen = IndexSet::new(extract.iter().copied())
                        .map_err(|e| err("extract", e.to_string()))?;
                    if !ceas.indices().is_subset(chosen) {
                        return Err(err(
                            "extract",
                            format!("must include every mandatory index {}", ceas.indices()),
                        ));
                    }
                    AccessPolicy::parse(policy).map_err(|e| err("policy", e.to_string()))?;
                    if let Some(parts) = emr {
                        if parts.len() != 7 || parts.iter().any(String::is_empty) {
                            return Err(err("emr", "needs exactly 7 non-empty parts".into()));
                        }
                    }
                }
                Event::Request {
                    user,
                    patient,
                    part,
                    action,
                    ..
                } => {
                    if !self.actors().contains_key(user.as_str()) {
                        return Err(err("user", format!("unknown actor `{user}`")));
                    }
                    self.expect_role(patient, ActorRole::Patient)
                        .map_err(|m| err("patient", m))?;
                    if !(1..=7).contains(part) {
                        return Err(err("part", format!("{part} outside [1, 7]")));
                    }
                    action
                        .parse::<Action>()
                        .map_err(|e| err("action", e.to_string()))?;
                }
                Event::Grant { .. } => {
                    let grant = ev.grant_spec().expect("grant event");
                    self.resolve_grant(&grant, &at)?;
                }
                Event::Revoke {
                    patient, grantee, ..
                } => {
                    self.expect_role(patient, ActorRole::Patient)
                        .map_err(|m| err("patient", m))?;
                    if !self.actors().contains_key(grantee.as_str()) {
                        return Err(err("grantee", format!("unknown actor `{grantee}`")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
until = 60000
ceas = [2, 3, 5]

[[doctors]]
name = "d"

[[patients]]
name = "p"

[[users]]
name = "u"
attributes = ["a"]

[[timeline]]
event = "visit"
t = 1000
doctor = "d"
patient = "p"
extract = [2, 3, 5]
policy = "a"
"#;

    #[test]
    fn minimal_parses() {
        let s = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(s.nodes.count, 50);
        assert_eq!(s.timeline.len(), 1);
    }

    fn parse_err(text: &str) -> String {
        match Scenario::parse(text) {
            Err(CliError::Parse(m)) => m,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn toml_errors_carry_position() {
        let m = parse_err("until = \n");
        assert!(m.contains("line 1"), "{m}");
        let m = parse_err("until = 5\nbogus = 1\n");
        assert!(m.contains("bogus"), "{m}");
    }

    #[test]
    fn unresolved_references_name_the_field() {
        let text = MINIMAL.replace("patient = \"p\"\nextract", "patient = \"q\"\nextract");
        assert!(parse_err(&text).starts_with("timeline[0].patient"));
        let text = MINIMAL.replace("extract = [2, 3, 5]", "extract = [2, 3]");
        assert!(parse_err(&text).starts_with("timeline[0].extract"));
        let text = format!("{MINIMAL}\n[[timeline]]\nevent = \"revoke\"\nt = 10\npatient = \"p\"\ngrantee = \"u\"\n");
        assert!(parse_err(&text).starts_with("timeline[1].t"));
    }

    #[test]
    fn grant_window_must_be_positive() {
        let text = MINIMAL.replace(
            "[[timeline]]",
            "[[grants]]\npatient = \"p\"\ngrantee = \"u\"\nparts = [2]\nactions = [\"read\"]\nvalid_from = 5\nvalid_until = 5\n\n[[timeline]]",
        );
        assert!(parse_err(&text).starts_with("grants[0].valid_until"));
    }

    #[test]
    fn too_few_nodes_rejected() {
        let text = MINIMAL.replace(
            "ceas = [2, 3, 5]",
            "ceas = [2, 3, 5]\n[nodes]\ncount = 49\n",
        );
        assert!(parse_err(&text).starts_with("nodes.count"));
    }
}
