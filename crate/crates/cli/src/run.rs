//! Executes a scenario end to end and renders the artifact set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use bpds_core::account::{asym_encrypt, AccountId, AccountKeyPair, Role};
use bpds_core::ces::{
    self, extract, hash_submessage, keygen, verify_extracted, verify_full, CesKeyPair, CesTag,
    ExtractedSignature, Submessages,
};
use bpds_core::cloud::{AccessPolicy, AttributeKey, CloudStore};
use bpds_core::consensus::{Consortium, ConsortiumConfig, NodeSetup};
use bpds_core::contract::{open_message, Contract, ContractError, Outcome, PermissionGrant};
use bpds_core::emr::{build_index, open_info, package_info, EmrDocument, EmrIndex, PART_NAMES};
use bpds_core::group::GroupProfile;
use bpds_core::hash::Hash32;
use bpds_core::ledger::{
    chain_verify, AccessTx, Action, Block, DumpRecord, ReleaseTx, Tx, SLOT_MS,
};
use bpds_core::sim::{NetConfig, NodeId, SimTime};
use bpds_core::sym::SymKey;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::artifacts::{
    Artifacts, ACCESS_LOG, ACTORS, CHAIN, CREDITS, EVENTS, EXECUTION_LOG, NET_TRACE, ROSTER,
    SCHEDULES, SHARING, STORE, SUMMARY, TRACE,
};
use crate::error::CliError;
use crate::scenario::{ActorRole, Event, Profile, ResolvedGrant, Scenario};

/// Command-line overrides of scenario settings.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub profile: Option<Profile>,
}

/// What one user could reassemble from one patient's extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharingResult {
    pub user: String,
    pub patient: String,
    pub parts: Vec<u8>,
    pub required: Vec<u8>,
    /// `None` until every extracted part has been retrieved.
    pub verified: Option<bool>,
    pub signer: Option<String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub artifacts: Artifacts,
    pub violations: Vec<String>,
    pub sharing: Vec<SharingResult>,
    pub blocks: usize,
}

struct Actor {
    label: String,
    role: ActorRole,
    acct: AccountKeyPair,
    attrs: Option<AttributeKey>,
}

struct Doctor {
    actor: usize,
    ces: CesKeyPair,
    k_doc: SymKey,
}

struct PendingRelease {
    patient: usize,
    part: u8,
    index: EmrIndex,
    tx: ReleaseTx,
}

struct PendingRequest {
    user: usize,
    patient: usize,
    tx: AccessTx,
}

#[derive(Default)]
struct Collected {
    parts: Submessages,
    esig: Option<ExtractedSignature>,
}

struct World<'s> {
    scenario: &'s Scenario,
    profile: GroupProfile,
    rng: ChaCha20Rng,
    actors: Vec<Actor>,
    by_label: BTreeMap<String, usize>,
    doctors: BTreeMap<usize, Doctor>,
    contracts: BTreeMap<usize, Contract>,
    cloud: CloudStore,
    consortium: Consortium,
    releases: BTreeMap<Hash32, PendingRelease>,
    requests: BTreeMap<Hash32, PendingRequest>,
    collected: BTreeMap<(usize, usize, [u8; 10]), Collected>,
    processed: usize,
    visits: usize,
    contract_calls: usize,
    cloud_calls: usize,
    events: Vec<String>,
    violations: Vec<String>,
}

fn csv(items: impl IntoIterator<Item = impl ToString>) -> String {
    items
        .into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl<'s> World<'s> {
    fn setup(scenario: &'s Scenario, seed: u64, profile: GroupProfile) -> Result<Self, CliError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let overrides: BTreeMap<u32, u64> = scenario
            .nodes
            .overrides
            .iter()
            .map(|o| (o.node, o.credit))
            .collect();
        let nodes: Vec<NodeSetup> = (0..scenario.nodes.count)
            .map(|n| NodeSetup {
                id: NodeId(n),
                keys: AccountKeyPair::generate(profile, Role::Node, &mut rng),
                credit: overrides.get(&n).copied().unwrap_or(scenario.nodes.credit),
            })
            .collect();

        let mut actors = Vec::new();
        let mut add = |label: &str, role: ActorRole, attrs: &[String], rng: &mut ChaCha20Rng| {
            let acct_role = match role {
                ActorRole::Doctor => Role::Doctor,
                ActorRole::Patient => Role::Patient,
                ActorRole::User => Role::User,
            };
            let acct = AccountKeyPair::generate(profile, acct_role, rng);
            let attrs = AttributeKey::new(acct.id(), attrs.iter().cloned()).ok();
            actors.push(Actor {
                label: label.to_owned(),
                role,
                acct,
                attrs,
            });
            actors.len() - 1
        };
        let mut doctors = BTreeMap::new();
        for d in &scenario.doctors {
            let a = add(&d.name, ActorRole::Doctor, &[], &mut rng);
            doctors.insert(
                a,
                Doctor {
                    actor: a,
                    ces: keygen(profile.params(), &mut rng),
                    k_doc: SymKey::random(&mut rng),
                },
            );
        }
        let mut patients = Vec::new();
        for p in &scenario.patients {
            patients.push(add(&p.name, ActorRole::Patient, &[], &mut rng));
        }
        for u in &scenario.users {
            add(&u.name, ActorRole::User, &u.attributes, &mut rng);
        }
        let mut contracts = BTreeMap::new();
        for p in patients {
            let pk = actors[p].acct.public().clone();
            contracts.insert(p, Contract::deploy(pk, profile, &mut rng));
        }
        let by_label = actors
            .iter()
            .enumerate()
            .map(|(i, a)| (a.label.clone(), i))
            .collect();
        let cloud = CloudStore::new(&mut rng);

        let config = ConsortiumConfig {
            net: NetConfig {
                seed,
                base_delay: scenario.net.base_delay,
                jitter: scenario.net.jitter,
                drop_rate: scenario.net.drop_rate,
            },
            ..ConsortiumConfig::default()
        };
        let consortium = Consortium::new(config, nodes, scenario.fault_script()?)
            .map_err(|e| CliError::Parse(format!("nodes: {e}")))?;

        let mut world = World {
            scenario,
            profile,
            rng,
            actors,
            by_label,
            doctors,
            contracts,
            cloud,
            consortium,
            releases: BTreeMap::new(),
            requests: BTreeMap::new(),
            collected: BTreeMap::new(),
            processed: 0,
            visits: 0,
            contract_calls: 0,
            cloud_calls: 0,
            events: Vec::new(),
            violations: Vec::new(),
        };
        world.event(
            0,
            format!(
                "setup profile={} nodes={} doctors={} patients={} users={}",
                profile.name(),
                scenario.nodes.count,
                scenario.doctors.len(),
                scenario.patients.len(),
                scenario.users.len()
            ),
        );
        for (k, g) in scenario.grants.iter().enumerate() {
            let g = scenario.resolve_grant(g, &format!("grants[{k}]"))?;
            world.grant(&g, 0);
        }
        Ok(world)
    }

    fn event(&mut self, t: SimTime, line: String) {
        self.events.push(format!("{t} {line}"));
    }

    fn id(&self, actor: usize) -> AccountId {
        self.actors[actor].acct.id()
    }

    fn actor(&self, label: &str) -> usize {
        self.by_label[label]
    }

    fn grant(&mut self, g: &ResolvedGrant, t: SimTime) {
        let patient = self.actor(&g.patient);
        let grantee = self.id(self.actor(&g.grantee));
        let grant = PermissionGrant::new(
            grantee.clone(),
            g.parts,
            g.actions.iter().copied(),
            g.valid_from,
            g.valid_until,
        )
        .expect("scenario validation checks grants");
        self.contract_calls += 1;
        let contract = self
            .contracts
            .get_mut(&patient)
            .expect("patients own contracts");
        let result = contract.set_permissions(&self.actors[patient].acct, vec![grant], t);
        let pid = self.id(patient);
        match result {
            Ok(()) => self.event(
                t,
                format!(
                    "grant patient={pid} grantee={grantee} parts={} actions={} window={}..{}",
                    g.parts.to_decimal_list(),
                    csv(g.actions.iter().map(|a| a.as_str())),
                    g.valid_from,
                    g.valid_until
                ),
            ),
            Err(e) => self.violations.push(format!("grant by {pid}: {e}")),
        }
    }

    fn revoke(&mut self, patient: usize, grantee: usize, t: SimTime) {
        let gid = self.id(grantee);
        self.contract_calls += 1;
        let contract = self
            .contracts
            .get_mut(&patient)
            .expect("patients own contracts");
        let result = contract.revoke(&self.actors[patient].acct, &gid, t);
        let pid = self.id(patient);
        match result {
            Ok(()) => self.event(t, format!("revoke patient={pid} grantee={gid}")),
            Err(e) => self.violations.push(format!("revoke by {pid}: {e}")),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn visit(
        &mut self,
        t: SimTime,
        doctor: usize,
        patient: usize,
        extract_set: &[u8],
        policy: &str,
        ceas: ces::Ceas,
        emr: Option<&Vec<String>>,
    ) -> Result<(), String> {
        self.visits += 1;
        let parts: Vec<Vec<u8>> = match emr {
            Some(p) => p.iter().map(|s| s.as_bytes().to_vec()).collect(),
            None => PART_NAMES
                .iter()
                .map(|name| format!("{name} (visit {})", self.visits).into_bytes())
                .collect(),
        };
        let emr = EmrDocument::new(parts).map_err(|e| e.to_string())?;
        let policy = AccessPolicy::parse(policy).map_err(|e| e.to_string())?;
        let params = self.profile.params();

        // Doctor side: sign every part and seal the bundle to the patient.
        let d = &self.doctors[&doctor];
        let tag = CesTag::random(&mut self.rng);
        let full =
            ces::sign(&d.ces, emr.parts(), ceas, tag, &mut self.rng).map_err(|e| e.to_string())?;
        let digests = (1..=7u8)
            .map(|i| hash_submessage(params, emr.part(i).expect("seven parts"), ceas, &tag, i))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let envelope = package_info(
            &d.k_doc,
            self.actors[patient].acct.public(),
            &emr,
            &digests,
            &full,
            ceas,
            tag,
            &mut self.rng,
        )
        .map_err(|e| e.to_string())?;

        // Patient side: open, check against the doctor's registered key,
        // extract and store each kept part.
        let info = open_info(&self.actors[patient].acct, &envelope).map_err(|e| e.to_string())?;
        let doctor_pk = self.doctors[&doctor].ces.public().clone();
        if !verify_full(&doctor_pk, info.emr.parts(), &info.full_sig) {
            return Err("full signature from doctor does not verify".into());
        }
        let (kept, esig) = extract(&doctor_pk, info.emr.parts(), &info.full_sig, extract_set)
            .map_err(|e| e.to_string())?;
        let (did, pid) = (self.id(doctor), self.id(patient));
        self.event(
            t,
            format!(
                "visit doctor={did} patient={pid} ceas={} extract={} policy={policy}",
                ceas.indices().to_decimal_list(),
                esig.ci.to_decimal_list()
            ),
        );
        for (i, m_i) in kept {
            let h_i = &info.digests[i as usize - 1];
            self.cloud_calls += 1;
            let url = self
                .cloud
                .store(
                    &pid,
                    i,
                    &m_i,
                    h_i,
                    &info.tag,
                    &policy,
                    &esig,
                    &mut self.rng,
                    t,
                )
                .map_err(|e| e.to_string())?;
            let index = build_index(&url, h_i, t).map_err(|e| e.to_string())?;
            let tx = ReleaseTx::create(&self.actors[patient].acct, &index, t, &mut self.rng);
            let id = Tx::Release(tx.clone()).id();
            self.consortium.submit_tx(&Tx::Release(tx.clone()));
            self.event(t, format!("release patient={pid} part={i} tx={id}"));
            self.releases.insert(
                id,
                PendingRelease {
                    patient,
                    part: i,
                    index,
                    tx,
                },
            );
        }
        Ok(())
    }

    fn request(&mut self, t: SimTime, user: usize, patient: usize, part: u8, action: Action) {
        let tx = AccessTx::create(&self.actors[user].acct, self.id(patient), part, action, t);
        let id = Tx::Access(tx.clone()).id();
        self.consortium.submit_tx(&Tx::Access(tx.clone()));
        let (uid, pid) = (self.id(user), self.id(patient));
        self.event(
            t,
            format!("request user={uid} patient={pid} part={part} action={action} tx={id}"),
        );
        self.requests
            .insert(id, PendingRequest { user, patient, tx });
    }

    fn apply(&mut self, ev: &Event) -> Result<(), CliError> {
        let t = ev.t();
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
                let ceas = self.scenario.visit_ceas(ceas).map_err(CliError::Parse)?;
                let (d, p) = (self.actor(doctor), self.actor(patient));
                if let Err(e) = self.visit(t, d, p, extract, policy, ceas, emr.as_ref()) {
                    self.violations.push(format!("visit at {t}: {e}"));
                }
            }
            Event::Request {
                user,
                patient,
                part,
                action,
                ..
            } => {
                let action: Action = action.parse().map_err(CliError::Parse)?;
                let (u, p) = (self.actor(user), self.actor(patient));
                self.request(t, u, p, *part, action);
            }
            Event::Grant { .. } => {
                let spec = ev.grant_spec().expect("grant event");
                let g = self.scenario.resolve_grant(&spec, "timeline")?;
                self.grant(&g, t);
            }
            Event::Revoke {
                patient, grantee, ..
            } => {
                let (p, g) = (self.actor(patient), self.actor(grantee));
                self.revoke(p, g, t);
            }
        }
        Ok(())
    }

    /// Advances the consortium and runs contract logic for every block
    /// committed since the last call, in chain order.
    fn advance(&mut self, t: SimTime) {
        self.consortium.run_until(t);
        let fresh: Vec<Block> =
            self.consortium.reference().chain.blocks()[self.processed..].to_vec();
        self.processed += fresh.len();
        for block in fresh {
            for adm in &block.d_set {
                let id = adm.tx.id();
                if let Some(rel) = self.releases.remove(&id) {
                    self.deposit(t, block.height, rel);
                } else if let Some(req) = self.requests.remove(&id) {
                    self.evaluate(t, block.height, id, req);
                }
            }
        }
    }

    fn deposit(&mut self, t: SimTime, height: u64, rel: PendingRelease) {
        let pid = self.id(rel.patient);
        let contract = self
            .contracts
            .get_mut(&rel.patient)
            .expect("patients own contracts");
        let sealed = asym_encrypt(contract.delegate_pk(), &rel.index.to_bytes(), &mut self.rng);
        match contract.deposit(rel.part, &rel.tx, sealed) {
            Ok(()) => self.event(
                t,
                format!("deposit patient={pid} part={} height={height}", rel.part),
            ),
            Err(e) => self
                .violations
                .push(format!("deposit of part {} for {pid}: {e}", rel.part)),
        }
    }

    fn evaluate(&mut self, t: SimTime, height: u64, id: Hash32, req: PendingRequest) {
        let (uid, pid) = (self.id(req.user), self.id(req.patient));
        let head = format!("user={uid} patient={pid} part={} height={height}", req.tx.i);
        self.contract_calls += 1;
        let contract = self
            .contracts
            .get_mut(&req.patient)
            .expect("patients own contracts");
        let chain = self.consortium.reference().chain;
        let result = contract.handle_request(&req.tx, chain, t, &mut self.rng);
        let recorded = chain.contains_tx(&id);
        let ct = match result {
            Ok(Outcome::Granted(ct)) => ct,
            Ok(Outcome::Denied(reason)) => {
                self.event(
                    t,
                    format!("request-denied {head} reason={}", reason.as_str()),
                );
                return;
            }
            Err(ContractError::NotReleased(i)) => {
                self.event(
                    t,
                    format!("request-error {head} reason=part-{i}-not-released"),
                );
                return;
            }
            Err(e) => {
                self.violations.push(format!("contract for {pid}: {e}"));
                return;
            }
        };
        if !recorded {
            self.violations
                .push(format!("request {id} granted without a ledger record"));
        }
        let index = match open_message(&self.actors[req.user].acct, &ct) {
            Ok((index, _)) => index,
            Err(e) => {
                self.violations.push(format!("message for {uid}: {e}"));
                return;
            }
        };
        self.event(t, format!("request-granted {head}"));
        if req.tx.action != Action::Read {
            return;
        }
        let Some(key) = self.actors[req.user].attrs.clone() else {
            self.event(t, format!("retrieve-skipped {head} reason=no-attributes"));
            return;
        };
        self.cloud_calls += 1;
        match self.cloud.retrieve(&index.url, &key, t) {
            Ok(got) => {
                if got.h_i != index.h {
                    self.violations.push(format!(
                        "retrieved part {} digest differs from its index",
                        req.tx.i
                    ));
                    return;
                }
                self.event(t, format!("retrieve-granted {head}"));
                let slot = self
                    .collected
                    .entry((req.user, req.patient, *got.tag.as_bytes()))
                    .or_default();
                slot.parts.insert(req.tx.i, got.m_i);
                slot.esig = Some(got.esig);
            }
            Err(e) => self.event(t, format!("retrieve-failed {head} reason={e}")),
        }
    }

    fn sharing(&mut self) -> Vec<SharingResult> {
        let mut out = Vec::new();
        for ((user, patient, _), c) in &self.collected {
            let esig = c.esig.as_ref().expect("collected parts carry a signature");
            let have: Vec<u8> = c.parts.keys().copied().collect();
            let required: Vec<u8> = esig.ci.iter().collect();
            let (verified, signer) = if have == required {
                let signer = self
                    .doctors
                    .values()
                    .find(|d| verify_extracted(d.ces.public(), &c.parts, esig))
                    .map(|d| self.actors[d.actor].label.clone());
                (Some(signer.is_some()), signer)
            } else {
                (None, None)
            };
            out.push(SharingResult {
                user: self.actors[*user].label.clone(),
                patient: self.actors[*patient].label.clone(),
                parts: have,
                required,
                verified,
                signer,
            });
        }
        for r in &out {
            if r.verified == Some(false) {
                self.violations.push(format!(
                    "extracted signature over parts {} from {} failed verification",
                    csv(&r.parts),
                    r.patient
                ));
            }
        }
        out
    }

    fn final_checks(&mut self) {
        if let Err(e) = self.consortium.check_replicas() {
            self.violations.push(format!("replicas: {e}"));
        }
        let reference = self.consortium.reference();
        if let Err(f) = chain_verify(reference.chain.blocks(), reference.membership) {
            self.violations.push(format!("chain: {f}"));
        }
        let logged: usize = self
            .contracts
            .values()
            .map(|c| c.execution_log().len())
            .sum();
        if logged != self.contract_calls {
            self.violations.push(format!(
                "contract log holds {logged} entries for {} calls",
                self.contract_calls
            ));
        }
        if self.cloud.log().len() != self.cloud_calls {
            self.violations.push(format!(
                "access log holds {} entries for {} calls",
                self.cloud.log().len(),
                self.cloud_calls
            ));
        }
    }
}

fn lines(v: impl IntoIterator<Item = impl AsRef<str>>) -> String {
    let mut s = String::new();
    for l in v {
        s.push_str(l.as_ref());
        s.push('\n');
    }
    s
}

/// Flips one bit inside the encoded block at `height` in a chain dump.
pub fn tamper_dump(chain_dump: &str, height: u64, byte: usize, bit: u8) -> Result<String, String> {
    let mut found = false;
    let mut out = String::new();
    for line in chain_dump.lines() {
        let rec = DumpRecord::parse(line).map_err(|e| e.to_string())?;
        if rec.height == height {
            found = true;
            let mut bytes = rec.block;
            let len = bytes.len();
            let b = bytes
                .get_mut(byte)
                .ok_or_else(|| format!("byte {byte} beyond block length {len}"))?;
            *b ^= 1 << bit;
            let (head, _) = line.rsplit_once(' ').expect("dump lines have fields");
            let _ = writeln!(out, "{head} {}", hex::encode(&bytes));
        } else {
            out.push_str(line);
            out.push('\n');
        }
    }
    if found {
        Ok(out)
    } else {
        Err(format!("no block at height {height}"))
    }
}

/// Runs the scenario in memory.
pub fn run_scenario(scenario: &Scenario, opts: RunOptions) -> Result<RunOutcome, CliError> {
    let seed = opts.seed.unwrap_or(scenario.seed);
    let profile: GroupProfile = opts.profile.unwrap_or(scenario.profile).into();
    let mut w = World::setup(scenario, seed, profile)?;

    // Stop once each slot's commit has had time to propagate, and at every
    // event.
    let hop = scenario.net.base_delay + scenario.net.jitter;
    let settle = (ConsortiumConfig::default().audit_timeout + 2 * hop).min(SLOT_MS - 1);
    let mut stops: BTreeSet<SimTime> = scenario.timeline.iter().map(Event::t).collect();
    stops.extend(
        (0..=scenario.until / SLOT_MS)
            .map(|k| k * SLOT_MS + settle)
            .filter(|&t| t <= scenario.until),
    );
    stops.insert(scenario.until);
    let mut pending = scenario.timeline.iter().peekable();
    for stop in stops {
        w.advance(stop);
        while let Some(ev) = pending.next_if(|e| e.t() == stop) {
            w.apply(ev)?;
        }
    }

    let sharing = w.sharing();
    w.final_checks();

    let reference = w.consortium.reference();
    let blocks = reference.chain.len();
    let mut chain_dump = lines(reference.chain.dump_lines());
    let credits = lines(reference.credits.dump_lines());
    let roster = lines(
        reference
            .membership
            .keys()
            .iter()
            .map(|(n, pk)| format!("{n} {}", hex::encode(pk.to_bytes()))),
    );
    let schedules = lines(reference.membership.schedules().iter().map(|s| {
        format!(
            "{} {} {} {}",
            s.cycle_start,
            s.slot_ms,
            csv(&s.rpns),
            csv(&s.atns)
        )
    }));
    let head = reference.chain.head_hash();
    let uncommitted = w.releases.len() + w.requests.len();

    if let Some(tp) = scenario.tamper {
        match tamper_dump(&chain_dump, tp.height, tp.byte, tp.bit) {
            Ok(d) => {
                chain_dump = d;
                w.event(
                    scenario.until,
                    format!(
                        "tamper height={} byte={} bit={}",
                        tp.height, tp.byte, tp.bit
                    ),
                );
            }
            Err(e) => w.violations.push(format!("tamper: {e}")),
        }
    }

    let mut artifacts = Artifacts::default();
    artifacts.insert(
        ACTORS,
        lines(
            w.actors
                .iter()
                .map(|a| format!("{} {} {}", a.role.as_str(), a.label, a.acct.id())),
        ),
    );
    artifacts.insert(ROSTER, roster);
    artifacts.insert(SCHEDULES, schedules);
    artifacts.insert(CHAIN, chain_dump);
    artifacts.insert(CREDITS, credits);
    artifacts.insert(ACCESS_LOG, lines(w.cloud.log_lines()));
    artifacts.insert(STORE, lines(w.cloud.dump_lines()));
    artifacts.insert(
        EXECUTION_LOG,
        lines(w.contracts.values().flat_map(|c| {
            let p = c.patient();
            c.execution_log()
                .iter()
                .map(move |e| format!("{p} {e}"))
                .collect::<Vec<_>>()
        })),
    );
    artifacts.insert(EVENTS, lines(&w.events));
    artifacts.insert(TRACE, lines(w.consortium.trace()));
    artifacts.insert(
        NET_TRACE,
        lines(w.consortium.net_trace().iter().map(ToString::to_string)),
    );
    artifacts.insert(
        SHARING,
        lines(sharing.iter().map(|r| {
            let (u, p) = (w.id(w.actor(&r.user)), w.id(w.actor(&r.patient)));
            let status = match (r.verified, &r.signer) {
                (Some(true), Some(s)) => format!("verified signer={}", w.id(w.actor(s))),
                (Some(_), _) => "failed".to_owned(),
                (None, _) => format!("incomplete need={}", csv(&r.required)),
            };
            format!("{u} {p} parts={} {status}", csv(&r.parts))
        })),
    );
    let mut summary = String::new();
    let _ = writeln!(summary, "profile {}", profile.name());
    let _ = writeln!(summary, "seed {seed}");
    let _ = writeln!(summary, "until {}", scenario.until);
    let _ = writeln!(summary, "blocks {blocks}");
    let _ = writeln!(summary, "head {head}");
    let _ = writeln!(summary, "uncommitted {uncommitted}");
    let _ = writeln!(summary, "violations {}", w.violations.len());
    for v in &w.violations {
        let _ = writeln!(summary, "violation {v}");
    }
    artifacts.insert(SUMMARY, summary);

    Ok(RunOutcome {
        artifacts,
        violations: w.violations,
        sharing,
        blocks,
    })
}
