//! Canonical keys are invariant under renaming processors and objects.

use coopcheck::corpus::Benchmark;
use coopcheck::explorer::{canonical_key, explore, ExploreOptions};
use coopcheck::model::lower_sources;
use coopcheck::semantics::{Configuration, Frame, LockState, Options, Status, Value};

struct Perm {
    pid: Vec<u32>,
    oid: Vec<u32>,
}

impl Perm {
    fn rotate(n: usize, by: usize) -> Vec<u32> {
        (0..n).map(|i| ((i + by) % n) as u32).collect()
    }

    fn reverse(n: usize) -> Vec<u32> {
        (0..n).rev().map(|i| i as u32).collect()
    }

    fn value(&self, v: Value) -> Value {
        match v {
            Value::Ref(Some(o)) => Value::Ref(Some(self.oid[o as usize])),
            v => v,
        }
    }

    fn pids(&self, ps: &[u32]) -> Vec<u32> {
        ps.iter().map(|&p| self.pid[p as usize]).collect()
    }

    fn frame(&self, f: &Frame) -> Frame {
        let values = |vs: &[Value]| vs.iter().map(|&v| self.value(v)).collect::<Vec<_>>();
        Frame {
            current: self.oid[f.current as usize],
            formals: values(&f.formals),
            locals: values(&f.locals),
            result: self.value(f.result),
            memo: values(&f.memo),
            controls: self.pids(&f.controls),
            acquired: self.pids(&f.acquired),
            restore_to: f.restore_to.map(|p| self.pid[p as usize]),
            passed_locks: self.pids(&f.passed_locks),
            reply_to: f.reply_to.map(|p| self.pid[p as usize]),
            ..f.clone()
        }
    }

    fn apply(&self, c: &Configuration) -> Configuration {
        let mut out = c.clone();
        for p in &c.processors {
            let mut q = p.clone();
            q.id = self.pid[p.id as usize];
            q.region = p.region.iter().map(|&o| self.oid[o as usize]).collect();
            q.stack = p.stack.iter().map(|f| self.frame(f)).collect();
            for r in &mut q.queue {
                r.frame = self.frame(&r.frame);
                r.reply_to = r.reply_to.map(|p| self.pid[p as usize]);
            }
            q.lock = match p.lock {
                LockState::Unlocked => LockState::Unlocked,
                LockState::LockedBy(h) => LockState::LockedBy(self.pid[h as usize]),
                LockState::CreationLockedBy(h) => LockState::CreationLockedBy(self.pid[h as usize]),
            };
            if let Status::AwaitingLocks(ws) = &p.status {
                q.status = Status::AwaitingLocks(self.pids(ws));
            }
            let at = q.id as usize;
            out.processors[at] = q;
        }
        for o in &c.objects {
            let mut x = o.clone();
            x.id = self.oid[o.id as usize];
            x.handler = self.pid[o.handler as usize];
            x.slots = o.slots.iter().map(|&v| self.value(v)).collect();
            let at = x.id as usize;
            out.objects[at] = x;
        }
        out.first_processor = self.pid[c.first_processor as usize];
        if let Some(e) = &mut out.error {
            e.pid = e.pid.map(|p| self.pid[p as usize]);
        }
        out
    }
}

fn configurations(name: &str) -> Vec<Configuration> {
    let b: Benchmark = name.parse().unwrap();
    let p = lower_sources(&b.instantiate(), &b.root()).unwrap();
    let opts = ExploreOptions {
        engine: Options { token: false, ..Options::default() },
        keep_configs: true,
        ..ExploreOptions::default()
    };
    explore(&p, &opts).lts.states.into_iter().filter_map(|s| s.config).collect()
}

/// Number of states whose key changes under some renaming.
fn residual(name: &str) -> (usize, usize) {
    let configs = configurations(name);
    let mut missed = 0;
    for c in &configs {
        let (n, m) = (c.processors.len(), c.objects.len());
        let perms = [
            Perm { pid: Perm::reverse(n), oid: Perm::reverse(m) },
            Perm { pid: Perm::rotate(n, 1), oid: Perm::rotate(m, 2) },
            Perm { pid: Perm::rotate(n, n / 2 + 1), oid: Perm::reverse(m) },
        ];
        let key = canonical_key(c);
        if perms.iter().any(|p| canonical_key(&p.apply(c)) != key) {
            missed += 1;
        }
    }
    (missed, configs.len())
}

#[test]
fn renaming_invariance_on_philosophers() {
    let (missed, total) = residual("DP(3,1,eat)");
    assert!(total > 100);
    assert_eq!(missed, 0, "{missed} of {total} states change key under renaming");
}

#[test]
fn renaming_invariance_on_savages() {
    let (missed, total) = residual("DS(1,2,1,bad)");
    assert_eq!(missed, 0, "{missed} of {total} states change key under renaming");
}
