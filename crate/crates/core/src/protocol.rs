//! In-process simulation of the record sharing flow between a patient, a
//! physician, a diagnostic center, blockchain storage and an authorized
//! entity.
//!
//! Actors are addressed by pseudonyms only. Messages go through per-actor
//! inboxes in program order, time is a logical clock, and all randomness comes
//! from one seeded stream, so a run is fully reproducible.

use std::fmt;

use rand::RngCore;

use crate::chain::Chain;
use crate::container;
use crate::elgamal::{keygen, CipherPair, GroupParams, KeyPair, PrivateKey, PublicKey};
use crate::emr::{EmrPayload, Raster};
use crate::pipeline::{self, max_chunk_width, PayloadLayout, PipelineConfig, DEFAULT_CHUNK_WIDTH};
use crate::{seeded_rng, Error, Result, Rng, Stage};

/// Start of the logical clock, in unix seconds.
pub const EPOCH: u64 = 1_700_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Patient,
    Physician,
    DiagnosticCenter,
    BlockchainStorage,
    AuthorizedEntity,
}

impl Role {
    fn holds_keys(self) -> bool {
        matches!(self, Role::Patient | Role::AuthorizedEntity)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Patient => "patient",
            Role::Physician => "physician",
            Role::DiagnosticCenter => "diagnostic-center",
            Role::BlockchainStorage => "blockchain-storage",
            Role::AuthorizedEntity => "authorized-entity",
        })
    }
}

/// Opaque pseudonym; carries no real identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActorId(String);

impl ActorId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Single-fold ciphertext for the authorized entity: ElGamal chunks only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareCipher {
    pub params: GroupParams,
    pub layout: PayloadLayout,
    pub key_fingerprint: [u8; 32],
    pub chunks: Vec<CipherPair>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    PublicKey(PublicKey),
    BlockIndex(u64),
    Share(ShareCipher),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub from: ActorId,
    pub at: u64,
    pub message: Message,
}

#[derive(Debug)]
pub struct Actor {
    pub role: Role,
    pub id: ActorId,
    pub keys: Option<KeyPair>,
    pub inbox: Vec<Delivery>,
}

/// Handle to an actor registered in a [`Simulation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActorRef(usize);

/// Encrypts `payload` for the holder of `key` without the DNA stage.
pub fn share_encrypt<R: RngCore + ?Sized>(payload: &EmrPayload, key: &PublicKey, rng: &mut R) -> Result<ShareCipher> {
    let width = max_chunk_width(key.params()).min(DEFAULT_CHUNK_WIDTH);
    let (layout, chunks) = pipeline::encrypt_chunks(payload, key, width, 1, rng)?;
    Ok(ShareCipher { params: key.params().clone(), layout, key_fingerprint: key.fingerprint(), chunks })
}

/// Inverse of [`share_encrypt`].
pub fn share_decrypt(share: &ShareCipher, key: &PrivateKey) -> Result<EmrPayload> {
    if share.chunks.is_empty() {
        return Err(Error::domain(Stage::Protocol, "empty share"));
    }
    if key.public_key().fingerprint() != share.key_fingerprint || *key.params() != share.params {
        return Err(Error::wrong_key(Stage::Protocol, "share was not encrypted for this key"));
    }
    pipeline::decrypt_chunks(&share.layout, &share.chunks, key, 1)
}

pub struct Simulation {
    chain: Chain,
    rng: Rng,
    key_bits: u64,
    step: u64,
    actors: Vec<Actor>,
    transcript: Vec<String>,
}

impl Simulation {
    /// Keys for patients and authorized entities are `key_bits` wide; each
    /// gets its own freshly generated group.
    pub fn new(chain: Chain, seed: u64, key_bits: u64) -> Self {
        Simulation { chain, rng: seeded_rng(seed), key_bits, step: 0, actors: Vec::new(), transcript: Vec::new() }
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn transcript(&self) -> &[String] {
        &self.transcript
    }

    pub fn actor(&self, r: ActorRef) -> &Actor {
        &self.actors[r.0]
    }

    fn tick(&mut self) -> u64 {
        self.step += 1;
        EPOCH + self.step
    }

    fn note(&mut self, line: String) {
        let at = EPOCH + self.step;
        self.transcript.push(format!("[{at}] {line}"));
    }

    fn deliver(&mut self, from: ActorRef, to: ActorRef, message: Message) {
        let at = self.tick();
        let from = self.actors[from.0].id.clone();
        self.actors[to.0].inbox.push(Delivery { from, at, message });
    }

    fn expect_role(&self, r: ActorRef, role: Role) -> Result<()> {
        let actor = self
            .actors
            .get(r.0)
            .ok_or_else(|| Error::Refused { stage: Stage::Protocol, detail: format!("unknown actor #{}", r.0) })?;
        if actor.role != role {
            return Err(Error::Refused {
                stage: Stage::Protocol,
                detail: format!("{} is a {}, expected a {role}", actor.id, actor.role),
            });
        }
        Ok(())
    }

    fn private_key(&self, r: ActorRef) -> Result<&PrivateKey> {
        let actor = &self.actors[r.0];
        actor.keys.as_ref().map(|k| &k.private).ok_or_else(|| Error::Refused {
            stage: Stage::Protocol,
            detail: format!("{} {} holds no private key", actor.role, actor.id),
        })
    }

    fn storage(&self) -> Result<ActorRef> {
        self.actors
            .iter()
            .position(|a| a.role == Role::BlockchainStorage)
            .map(ActorRef)
            .ok_or_else(|| Error::Refused { stage: Stage::Protocol, detail: "no blockchain storage registered".into() })
    }

    /// Registers an actor under a fresh pseudonym. Patients and authorized
    /// entities get a key pair over a newly generated group.
    pub fn register(&mut self, role: Role) -> Result<ActorRef> {
        let id = loop {
            let candidate = ActorId(format!("pn-{:016x}", self.rng.next_u64()));
            if self.actors.iter().all(|a| a.id != candidate) {
                break candidate;
            }
        };
        let keys = if role.holds_keys() {
            let params = GroupParams::generate(self.key_bits, &mut self.rng)?;
            Some(keygen(&params, &mut self.rng))
        } else {
            None
        };
        self.note(format!("register {role} as {id}"));
        self.actors.push(Actor { role, id, keys, inbox: Vec::new() });
        Ok(ActorRef(self.actors.len() - 1))
    }

    /// The patient consults the physician, who writes `notes`; the diagnostic
    /// center, when present, supplies an image. The patient's public key is
    /// handed to the physician.
    pub fn consult(&mut self, patient: ActorRef, physician: ActorRef, dc: Option<ActorRef>, notes: &str) -> Result<EmrPayload> {
        self.expect_role(patient, Role::Patient)?;
        self.expect_role(physician, Role::Physician)?;
        if let Some(dc) = dc {
            self.expect_role(dc, Role::DiagnosticCenter)?;
        }
        if notes.is_empty() && dc.is_none() {
            return Err(Error::domain(Stage::Protocol, "consultation produced neither notes nor an image"));
        }
        let image = dc.map(|_| {
            let (w, h) = (8, 8);
            let mut rgb = vec![0u8; w * h * 3];
            self.rng.fill_bytes(&mut rgb);
            Raster::new(w as u32, h as u32, rgb).expect("dimensions match")
        });
        let public = self.actors[patient.0].keys.as_ref().expect("patients hold keys").public.clone();
        self.deliver(patient, physician, Message::PublicKey(public));
        let payload = EmrPayload::new(notes, image);
        let (p, d) = (&self.actors[patient.0].id, &self.actors[physician.0].id);
        let line = match dc {
            Some(dc) => format!(
                "consult: {p} -> {d}; {} supplies an image; {} text bytes, {} pixels",
                self.actors[dc.0].id,
                payload.text.len(),
                payload.image.as_ref().map_or(0, |i| i.pixel_count())
            ),
            None => format!("consult: {p} -> {d}; {} text bytes, no image", payload.text.len()),
        };
        self.note(line);
        Ok(payload)
    }

    /// The physician encrypts `payload` under the patient's public key from
    /// its inbox, storage appends it as a block, and the patient receives the
    /// block index.
    pub fn publish(&mut self, physician: ActorRef, patient: ActorRef, payload: &EmrPayload) -> Result<u64> {
        self.expect_role(physician, Role::Physician)?;
        self.expect_role(patient, Role::Patient)?;
        let bs = self.storage()?;
        let patient_id = self.actors[patient.0].id.clone();
        let key = self.actors[physician.0]
            .inbox
            .iter()
            .rev()
            .find_map(|d| match &d.message {
                Message::PublicKey(k) if d.from == patient_id => Some(k.clone()),
                _ => None,
            })
            .ok_or_else(|| Error::Refused {
                stage: Stage::Protocol,
                detail: format!("physician has no public key from {patient_id}"),
            })?;
        let config = PipelineConfig::for_key(&key);
        let enc = pipeline::encrypt_emr(payload, &key, &config, &mut self.rng)?;
        let txs = container::to_transactions(&enc)?;
        let tx_count = txs.len();
        let timestamp = self.tick();
        let index = self.chain.append_block(txs, timestamp)?;
        self.note(format!(
            "publish: {} -> {}: {} chunks, {} bases, block {index} with {tx_count} transactions",
            self.actors[physician.0].id,
            self.actors[bs.0].id,
            enc.envelope.layout.n_chunks,
            enc.payload.len()
        ));
        self.deliver(bs, patient, Message::BlockIndex(index));
        self.note(format!("notify: {} -> {patient_id}: index {index}", self.actors[bs.0].id));
        Ok(index)
    }

    /// Latest block index the patient has been told about.
    pub fn latest_index(&self, patient: ActorRef) -> Option<u64> {
        self.actors[patient.0].inbox.iter().rev().find_map(|d| match d.message {
            Message::BlockIndex(i) => Some(i),
            _ => None,
        })
    }

    /// Fetches block `index` (logging the access under the patient's
    /// pseudonym) and decrypts it with the patient's private key.
    pub fn retrieve(&mut self, patient: ActorRef, index: u64) -> Result<EmrPayload> {
        self.expect_role(patient, Role::Patient)?;
        let block = self.fetch(patient, index)?;
        let enc = container::from_transactions(&block.body)?;
        let payload = pipeline::decrypt_emr(&enc, self.private_key(patient)?)?;
        self.note(format!("retrieve: {} decrypted block {index}", self.actors[patient.0].id));
        Ok(payload)
    }

    fn fetch(&mut self, who: ActorRef, index: u64) -> Result<crate::chain::Block> {
        let at = self.tick();
        let id = self.actors[who.0].id.clone();
        self.chain.log_access(index, id.as_str(), at)?;
        self.note(format!("access: {id} reads block {index}"));
        self.chain.get_block(index)
    }

    /// Single-fold re-encryption of `payload` for the authorized entity,
    /// delivered to its inbox.
    pub fn share_with_ae(&mut self, patient: ActorRef, ae: ActorRef, payload: &EmrPayload) -> Result<ShareCipher> {
        self.expect_role(patient, Role::Patient)?;
        self.expect_role(ae, Role::AuthorizedEntity)?;
        let ae_pub = self.actors[ae.0].keys.as_ref().expect("authorized entities hold keys").public.clone();
        let patient_params = self.private_key(patient)?.params();
        if patient_params == ae_pub.params() {
            return Err(Error::Refused {
                stage: Stage::Protocol,
                detail: "authorized entity must use a group distinct from the patient's".into(),
            });
        }
        let share = share_encrypt(payload, &ae_pub, &mut self.rng)?;
        self.note(format!(
            "share: {} -> {}: {} single-fold chunks under a separate {}-bit group",
            self.actors[patient.0].id,
            self.actors[ae.0].id,
            share.chunks.len(),
            ae_pub.params().bits()
        ));
        self.deliver(patient, ae, Message::Share(share.clone()));
        Ok(share)
    }

    /// The authorized entity decrypts a share with its private key.
    pub fn ae_receive(&mut self, ae: ActorRef, share: &ShareCipher) -> Result<EmrPayload> {
        self.expect_role(ae, Role::AuthorizedEntity)?;
        let payload = share_decrypt(share, self.private_key(ae)?)?;
        self.note(format!("ae: {} decrypted the share", self.actors[ae.0].id));
        Ok(payload)
    }

    /// What `who` can recover from block `index` using only its own state.
    ///
    /// Actors with keys use them. Actors without a private key have at most
    /// the patient's public key; they try it with a guessed exponent, which
    /// is the best that state allows.
    pub fn attempt_decrypt_as(&mut self, who: ActorRef, index: u64) -> Result<EmrPayload> {
        let block = self.fetch(who, index)?;
        let enc = container::from_transactions(&block.body)?;
        let actor = &self.actors[who.0];
        let key = match &actor.keys {
            Some(keys) => keys.private.clone(),
            None => {
                let known = actor.inbox.iter().find_map(|d| match &d.message {
                    Message::PublicKey(k) => Some(k.params().clone()),
                    _ => None,
                });
                let params = known.ok_or_else(|| Error::Refused {
                    stage: Stage::Protocol,
                    detail: format!("{} {} holds no key material", actor.role, actor.id),
                })?;
                keygen(&params, &mut self.rng).private
            }
        };
        pipeline::decrypt_unchecked_key(&enc, &key, 1)
    }
}

/// Outcome of [`run_demo`].
#[derive(Debug)]
pub struct DemoReport {
    pub transcript: Vec<String>,
    pub original: EmrPayload,
    pub retrieved: EmrPayload,
    pub shared: EmrPayload,
}

impl DemoReport {
    pub fn matched(&self) -> bool {
        self.retrieved == self.original && self.shared == self.original
    }
}

pub const DEMO_NOTES: &str = "Diagnosis: seasonal influenza. Medication: oseltamivir 75 mg twice daily for 5 days.";

/// The full flow: consult, publish, retrieve, share with the authorized
/// entity, and the failed attempts by the actors without keys.
pub fn run_demo(chain: Chain, seed: u64, key_bits: u64) -> Result<DemoReport> {
    let mut sim = Simulation::new(chain, seed, key_bits);
    let patient = sim.register(Role::Patient)?;
    let physician = sim.register(Role::Physician)?;
    let dc = sim.register(Role::DiagnosticCenter)?;
    let bs = sim.register(Role::BlockchainStorage)?;
    let ae = sim.register(Role::AuthorizedEntity)?;

    let original = sim.consult(patient, physician, Some(dc), DEMO_NOTES)?;
    sim.publish(physician, patient, &original)?;
    let index = sim.latest_index(patient).expect("publish notifies the patient");
    let retrieved = sim.retrieve(patient, index)?;
    let share = sim.share_with_ae(patient, ae, &retrieved)?;
    let shared = sim.ae_receive(ae, &share)?;

    for outsider in [physician, dc, bs] {
        let outcome = match sim.attempt_decrypt_as(outsider, index) {
            Ok(p) if p == original => "RECOVERED THE RECORD".to_string(),
            Ok(_) => "decrypted to garbage".to_string(),
            Err(e) => format!("failed ({e})"),
        };
        let actor = sim.actor(outsider);
        let line = format!("attempt: {} {} on block {index}: {outcome}", actor.role, actor.id);
        sim.note(line);
    }
    let verdict = sim.chain().verify_chain()?;
    sim.note(format!("chain: {} blocks, valid = {}", sim.chain().len(), verdict.is_valid()));

    let report = DemoReport { transcript: Vec::new(), original, retrieved, shared };
    let matched = report.matched();
    sim.note(format!("payload match: {}", if matched { "yes" } else { "NO" }));
    Ok(DemoReport { transcript: sim.transcript, ..report })
}
