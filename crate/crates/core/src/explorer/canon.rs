use std::collections::VecDeque;
use std::fmt;
use std::hash::{Hash, Hasher};

use sha2::{Digest, Sha256};

use crate::semantics::{Configuration, Frame, LockState, ObjId, Pid, Status, Value};

/// Digest of a configuration's canonical serialization. Equality and
/// hashing use the digest only.
#[derive(Clone, Debug)]
pub struct CanonicalKey {
    pub digest: u128,
    pub serialization: Option<Vec<u8>>,
}

impl PartialEq for CanonicalKey {
    fn eq(&self, other: &Self) -> bool {
        self.digest == other.digest
    }
}

impl Eq for CanonicalKey {}

impl Hash for CanonicalKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.digest.hash(state);
    }
}

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.digest)
    }
}

const NONE: u32 = u32::MAX;

#[derive(Clone)]
struct Renaming {
    pid: Vec<u32>,
    oid: Vec<u32>,
    pid_order: Vec<Pid>,
    oid_order: Vec<ObjId>,
    procs: VecDeque<Pid>,
    objs: VecDeque<ObjId>,
}

impl Renaming {
    fn proc_(&mut self, p: Pid) {
        if self.pid[p as usize] == NONE {
            self.pid[p as usize] = self.pid_order.len() as u32;
            self.pid_order.push(p);
            self.procs.push_back(p);
        }
    }

    fn obj(&mut self, config: &Configuration, o: ObjId) {
        if self.oid[o as usize] == NONE {
            self.oid[o as usize] = self.oid_order.len() as u32;
            self.oid_order.push(o);
            self.objs.push_back(o);
            self.proc_(config.handler(o));
        }
    }

    fn value(&mut self, config: &Configuration, v: Value) {
        if let Value::Ref(Some(o)) = v {
            self.obj(config, o);
        }
    }

    fn frame(&mut self, config: &Configuration, f: &Frame) {
        self.obj(config, f.current);
        for v in f.formals.iter().chain(&f.locals).chain([&f.result]).chain(&f.memo) {
            self.value(config, *v);
        }
        for p in f.controls.iter().chain(&f.acquired).chain(&f.passed_locks).chain(&f.restore_to).chain(&f.reply_to) {
            self.proc_(*p);
        }
    }

    /// Scans objects reached so far, following their reference slots.
    fn drain_objects(&mut self, config: &Configuration) {
        while let Some(o) = self.objs.pop_front() {
            for v in &config.object(o).slots {
                self.value(config, *v);
            }
        }
    }
}

impl Renaming {
    /// Visits everything reachable from the queued processors.
    fn drain(&mut self, config: &Configuration) {
        let n = config.processors.len();
        while let Some(p) = self.procs.pop_front() {
            let proc_ = config.processor(p);
            for f in proc_.stack.iter().rev() {
                self.frame(config, f);
            }
            self.drain_objects(config);
            for &o in &proc_.region {
                self.obj(config, o);
                self.drain_objects(config);
            }
            for req in &proc_.queue {
                self.frame(config, &req.frame);
                if let Some(p) = &req.reply_to {
                    self.proc_(*p);
                }
            }
            self.drain_objects(config);
            match proc_.lock {
                LockState::LockedBy(h) | LockState::CreationLockedBy(h) => self.proc_(h),
                LockState::Unlocked => {}
            }
            if let Status::AwaitingLocks(ws) = &proc_.status {
                for w in ws {
                    self.proc_(*w);
                }
            }
            if config.options.token && (p as usize) + 1 < n {
                self.proc_(p + 1);
            }
        }
    }
}

/// Renumbers processors and objects in first-occurrence order: starting at
/// the first processor, each processor contributes its frames (top down),
/// the objects reachable from them, the rest of its region, its queued
/// requests, its lock holder and, with the token discipline, its list
/// successor. Parts not reachable from the first processor are started
/// from the processor whose part serializes smallest, so the numbering
/// does not depend on processor ids.
fn renaming(config: &Configuration) -> Renaming {
    let n = config.processors.len();
    let mut r = Renaming {
        pid: vec![NONE; n],
        oid: vec![NONE; config.objects.len()],
        pid_order: Vec::with_capacity(n),
        oid_order: Vec::with_capacity(config.objects.len()),
        procs: VecDeque::new(),
        objs: VecDeque::new(),
    };
    r.proc_(config.first_processor);
    r.drain(config);
    while r.pid_order.len() < n {
        let mut best: Option<(Vec<u8>, Renaming)> = None;
        for p in (0..n as Pid).filter(|&p| r.pid[p as usize] == NONE) {
            let mut trial = r.clone();
            trial.proc_(p);
            trial.drain(config);
            let sig = {
                let mut w = Writer { out: Vec::new(), r: &trial };
                for &q in &trial.pid_order[r.pid_order.len()..] {
                    w.processor(config, q);
                }
                for &o in &trial.oid_order[r.oid_order.len()..] {
                    w.object(config, o);
                }
                w.out
            };
            if best.as_ref().is_none_or(|(b, _)| sig < *b) {
                best = Some((sig, trial));
            }
        }
        r = best.expect("an unvisited processor").1;
    }
    r
}

struct Writer<'a> {
    out: Vec<u8>,
    r: &'a Renaming,
}

impl Writer<'_> {
    fn u8(&mut self, v: u8) {
        self.out.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }

    fn i64(&mut self, v: i64) {
        self.out.extend_from_slice(&v.to_le_bytes());
    }

    fn pid(&mut self, p: Pid) {
        let v = self.r.pid[p as usize];
        self.u32(v);
    }

    fn opt_pid(&mut self, p: Option<Pid>) {
        match p {
            Some(p) => self.pid(p),
            None => self.u32(NONE),
        }
    }

    fn pid_set(&mut self, ps: &[Pid]) {
        let mut v: Vec<u32> = ps.iter().map(|p| self.r.pid[*p as usize]).collect();
        v.sort_unstable();
        self.u32(v.len() as u32);
        for x in v {
            self.u32(x);
        }
    }

    fn value(&mut self, v: Value) {
        match v {
            Value::Int(i) => {
                self.u8(0);
                self.i64(i);
            }
            Value::Bool(b) => {
                self.u8(1);
                self.u8(b as u8);
            }
            Value::Ref(None) => self.u8(2),
            Value::Ref(Some(o)) => {
                self.u8(3);
                let c = self.r.oid[o as usize];
                self.u32(c);
            }
        }
    }

    fn values(&mut self, vs: &[Value]) {
        self.u32(vs.len() as u32);
        for v in vs {
            self.value(*v);
        }
    }

    fn processor(&mut self, config: &Configuration, p: Pid) {
        let proc_ = config.processor(p);
        match proc_.lock {
            LockState::Unlocked => self.u8(0),
            LockState::LockedBy(h) => {
                self.u8(1);
                self.pid(h);
            }
            LockState::CreationLockedBy(h) => {
                self.u8(2);
                self.pid(h);
            }
        }
        match &proc_.status {
            Status::Idle => self.u8(0),
            Status::Running => self.u8(1),
            Status::AwaitingResult => self.u8(2),
            Status::AwaitingLockRestore => self.u8(3),
            Status::AwaitingLocks(ws) => {
                self.u8(4);
                self.pid_set(ws);
            }
        }
        if config.options.token {
            self.u8(proc_.has_token as u8);
            let next = ((p as usize) + 1 < config.processors.len()).then_some(p + 1);
            self.opt_pid(next);
        }
        let mut region: Vec<u32> = proc_.region.iter().map(|o| self.r.oid[*o as usize]).collect();
        region.sort_unstable();
        self.u32(region.len() as u32);
        for o in region {
            self.u32(o);
        }
        self.u32(proc_.stack.len() as u32);
        for f in &proc_.stack {
            self.frame(f);
        }
        self.u32(proc_.queue.len() as u32);
        for req in &proc_.queue {
            self.u32(req.feature);
            self.u8(req.kind as u8);
            self.opt_pid(req.reply_to);
            self.frame(&req.frame);
        }
    }

    fn object(&mut self, config: &Configuration, o: ObjId) {
        let obj = config.object(o);
        self.u32(obj.class);
        self.pid(obj.handler);
        self.values(&obj.slots);
    }

    fn frame(&mut self, f: &Frame) {
        self.u32(f.feature);
        let c = self.r.oid[f.current as usize];
        self.u32(c);
        self.values(&f.formals);
        self.values(&f.locals);
        self.value(f.result);
        self.u32(f.state);
        self.u32(f.return_state.unwrap_or(NONE));
        self.values(&f.memo);
        self.pid_set(&f.controls);
        self.pid_set(&f.acquired);
        self.opt_pid(f.restore_to);
        self.pid_set(&f.passed_locks);
        self.opt_pid(f.reply_to);
        self.u8(f.creation as u8);
    }
}

/// Deterministic byte serialization of `config` under canonical numbering.
pub fn canonical_form(config: &Configuration) -> Vec<u8> {
    let r = renaming(config);
    let mut w = Writer { out: Vec::with_capacity(256), r: &r };
    let token = config.options.token;
    w.u32(config.processors.len() as u32);
    w.u32(config.objects.len() as u32);
    if token {
        w.pid(config.first_processor);
        w.u8(config.action_executed_indicator as u8);
        w.u8(config.reset_token_flag as u8);
    }
    for &p in &r.pid_order {
        w.processor(config, p);
    }
    for &o in &r.oid_order {
        w.object(config, o);
    }
    match &config.error {
        None => w.u8(0),
        Some(e) => {
            w.u8(1);
            w.u8(e.class as u8);
            w.opt_pid(e.pid);
            let feature = e.feature.clone().unwrap_or_default();
            w.u32(feature.len() as u32);
            w.out.extend_from_slice(feature.as_bytes());
            let tag = e.tag.clone().unwrap_or_default();
            w.u32(tag.len() as u32);
            w.out.extend_from_slice(tag.as_bytes());
        }
    }
    w.out
}

pub fn canonical_key(config: &Configuration) -> CanonicalKey {
    key_of(canonical_form(config), false)
}

pub fn canonical_key_debug(config: &Configuration) -> CanonicalKey {
    key_of(canonical_form(config), true)
}

fn key_of(bytes: Vec<u8>, keep: bool) -> CanonicalKey {
    let d = Sha256::digest(&bytes);
    let mut head = [0u8; 16];
    head.copy_from_slice(&d[..16]);
    CanonicalKey { digest: u128::from_be_bytes(head), serialization: keep.then_some(bytes) }
}
