use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::circuit::{Gate, GateKind};
use crate::math::{Mat2, Mat4};

use super::memo::{fnv1a, load_namespace, save_namespace, Namespace, UnitaryKey};
use super::{is_clifford_t_1q, kak, rz_enum, sk, synth_u3_clifford_t, OneQubitMethod, SynthError, SynthesisResult};

/// Local synthesis procedure for one- and two-qubit unitaries.
pub trait SynthBackend: Send + Sync {
    /// Stable identifier, e.g. `kak+enum`.
    fn id(&self) -> String;
    fn epsilon(&self) -> f64;
    /// Word over the target set approximating `u` (gates on qubit 0).
    fn synth_1q(&self, u: &Mat2) -> Result<Arc<SynthesisResult>, SynthError>;
    /// CX + U3 decomposition of `u`, gates on local qubits 0 and 1.
    fn synth_2q(&self, u: &Mat4) -> Result<Arc<Vec<Gate>>, SynthError>;
    /// Whether a single-qubit gate is already in the target set.
    fn is_target_1q(&self, kind: &GateKind) -> bool;
    fn stats(&self) -> BackendStats;
    /// Hash of everything that affects outputs; used to version persisted caches.
    fn config_hash(&self) -> u64;
}

/// Instrumented call counts at the backend boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendStats {
    pub requests_1q: u64,
    pub synth_calls_1q: u64,
    pub requests_2q: u64,
    pub synth_calls_2q: u64,
}

impl BackendStats {
    /// Invocations of an underlying synthesis routine (cache misses).
    pub fn synth_calls(&self) -> u64 {
        self.synth_calls_1q + self.synth_calls_2q
    }

    pub fn since(&self, earlier: &BackendStats) -> BackendStats {
        BackendStats {
            requests_1q: self.requests_1q - earlier.requests_1q,
            synth_calls_1q: self.synth_calls_1q - earlier.synth_calls_1q,
            requests_2q: self.requests_2q - earlier.requests_2q,
            synth_calls_2q: self.synth_calls_2q - earlier.synth_calls_2q,
        }
    }
}

#[derive(Default, Debug)]
struct Counters {
    requests_1q: AtomicU64,
    synth_calls_1q: AtomicU64,
    requests_2q: AtomicU64,
    synth_calls_2q: AtomicU64,
}

/// One- and two-qubit memo levels.
#[derive(Default, Debug)]
pub struct SynthMemo {
    pub one_qubit: Namespace<UnitaryKey, SynthesisResult>,
    pub two_qubit: Namespace<UnitaryKey, Vec<Gate>>,
}

/// Backend selector: KAK for two-qubit blocks, then enumeration or SK.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BackendKind {
    KakEnum,
    KakSk,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::KakEnum => "kak+enum",
            BackendKind::KakSk => "kak+sk",
        })
    }
}

impl TryFrom<String> for BackendKind {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<BackendKind> for String {
    fn from(k: BackendKind) -> String {
        k.to_string()
    }
}

impl FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "kak+enum" => Ok(BackendKind::KakEnum),
            "kak+sk" => Ok(BackendKind::KakSk),
            _ => Err(format!("unknown backend '{s}' (expected kak+enum or kak+sk)")),
        }
    }
}

/// The shipped backend: memoized KAK plus a single-qubit method.
pub struct LocalBackend {
    kind: BackendKind,
    method: OneQubitMethod,
    eps: f64,
    memoize: bool,
    memo: Arc<SynthMemo>,
    counters: Counters,
}

impl LocalBackend {
    pub fn new(kind: BackendKind, eps: f64) -> LocalBackend {
        let method = match kind {
            BackendKind::KakEnum => OneQubitMethod::Enum {
                budget: rz_enum::DEFAULT_BUDGET,
            },
            BackendKind::KakSk => OneQubitMethod::Sk {
                depth: sk::DEFAULT_DEPTH,
                base_length: sk::DEFAULT_BASE_LENGTH,
            },
        };
        LocalBackend::with_method(kind, method, eps)
    }

    pub fn with_method(kind: BackendKind, method: OneQubitMethod, eps: f64) -> LocalBackend {
        LocalBackend {
            kind,
            method,
            eps,
            memoize: true,
            memo: Arc::new(SynthMemo::default()),
            counters: Counters::default(),
        }
    }

    /// Share a memo with other backends of the same configuration.
    pub fn with_memo(mut self, memo: Arc<SynthMemo>) -> LocalBackend {
        self.memo = memo;
        self
    }

    pub fn without_memo(mut self) -> LocalBackend {
        self.memoize = false;
        self
    }

    pub fn memo(&self) -> &Arc<SynthMemo> {
        &self.memo
    }

    pub fn method(&self) -> OneQubitMethod {
        self.method
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    /// Persists both unitary-level memo namespaces under `dir`.
    pub fn save_cache(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let h = self.config_hash();
        save_namespace(&self.memo.one_qubit, h, &dir.join(format!("memo1q-{h:016x}.json")))?;
        save_namespace(&self.memo.two_qubit_json(), h, &dir.join(format!("memo2q-{h:016x}.json")))
    }

    /// Loads caches saved by a backend with the same configuration; returns entry count.
    pub fn load_cache(&self, dir: &Path) -> std::io::Result<usize> {
        let h = self.config_hash();
        let mut n = 0;
        let p1 = dir.join(format!("memo1q-{h:016x}.json"));
        if p1.exists() {
            n += load_namespace(&self.memo.one_qubit, h, &p1)?;
        }
        let p2 = dir.join(format!("memo2q-{h:016x}.json"));
        if p2.exists() {
            let tmp: Namespace<UnitaryKey, crate::circuit::json::CircuitJson> = Namespace::default();
            n += load_namespace(&tmp, h, &p2)?;
            for (k, v) in tmp.entries() {
                if let Ok(c) = crate::circuit::Circuit::try_from(&*v) {
                    self.memo.two_qubit.put(k, Arc::new(c.into_gates()));
                }
            }
        }
        Ok(n)
    }
}

impl SynthMemo {
    fn two_qubit_json(&self) -> Namespace<UnitaryKey, crate::circuit::json::CircuitJson> {
        let ns = Namespace::default();
        for (k, v) in self.two_qubit.entries() {
            let c = crate::circuit::Circuit::from_parts(2, (*v).clone());
            ns.put(k, Arc::new(crate::circuit::json::CircuitJson::from(&c)));
        }
        ns
    }
}

impl SynthBackend for LocalBackend {
    fn id(&self) -> String {
        self.kind.to_string()
    }

    fn epsilon(&self) -> f64 {
        self.eps
    }

    fn synth_1q(&self, u: &Mat2) -> Result<Arc<SynthesisResult>, SynthError> {
        self.counters.requests_1q.fetch_add(1, Ordering::Relaxed);
        let key = UnitaryKey::from_mat2(u);
        if self.memoize {
            if let Some(r) = self.memo.one_qubit.get(&key) {
                return Ok(r);
            }
        }
        self.counters.synth_calls_1q.fetch_add(1, Ordering::Relaxed);
        let mut r = synth_u3_clifford_t(u, self.eps, self.method)?;
        r.backend_id = self.id();
        let r = Arc::new(r);
        if self.memoize {
            self.memo.one_qubit.put(key, r.clone());
        }
        Ok(r)
    }

    fn synth_2q(&self, u: &Mat4) -> Result<Arc<Vec<Gate>>, SynthError> {
        self.counters.requests_2q.fetch_add(1, Ordering::Relaxed);
        let key = UnitaryKey::from_mat4(u);
        if self.memoize {
            if let Some(r) = self.memo.two_qubit.get(&key) {
                return Ok(r);
            }
        }
        self.counters.synth_calls_2q.fetch_add(1, Ordering::Relaxed);
        let r = Arc::new(kak::kak_decompose(u)?.gates);
        if self.memoize {
            self.memo.two_qubit.put(key, r.clone());
        }
        Ok(r)
    }

    fn is_target_1q(&self, kind: &GateKind) -> bool {
        is_clifford_t_1q(kind)
    }

    fn stats(&self) -> BackendStats {
        BackendStats {
            requests_1q: self.counters.requests_1q.load(Ordering::Relaxed),
            synth_calls_1q: self.counters.synth_calls_1q.load(Ordering::Relaxed),
            requests_2q: self.counters.requests_2q.load(Ordering::Relaxed),
            synth_calls_2q: self.counters.synth_calls_2q.load(Ordering::Relaxed),
        }
    }

    fn config_hash(&self) -> u64 {
        let desc = format!("v1|{}|{:?}|{:e}", self.kind, self.method, self.eps);
        fnv1a(desc.into_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;

    fn small() -> LocalBackend {
        LocalBackend::with_method(BackendKind::KakEnum, OneQubitMethod::Enum { budget: 16 }, 0.1)
    }

    #[test]
    fn memo_avoids_repeat_calls() {
        let b = small();
        let u = math::rz(0.3);
        let r1 = b.synth_1q(&u).unwrap();
        let r2 = b.synth_1q(&(u * math::cis(0.4))).unwrap();
        assert_eq!(r1, r2);
        let s = b.stats();
        assert_eq!((s.requests_1q, s.synth_calls_1q), (2, 1));
        // rotations differing by less than the key grid share an entry
        b.synth_1q(&math::rz(0.3 + 1e-10)).unwrap();
        assert_eq!(b.stats().synth_calls_1q, 1);
    }

    #[test]
    fn unmemoized_gives_identical_words() {
        let a = small();
        let b = small().without_memo();
        for t in [0.1, 0.2, 0.1, 1.7] {
            let u = math::u3(t, 0.5, -t);
            assert_eq!(a.synth_1q(&u).unwrap().word, b.synth_1q(&u).unwrap().word);
        }
        assert_eq!(b.stats().synth_calls_1q, 4);
        assert_eq!(a.stats().synth_calls_1q, 3);
    }

    #[test]
    fn backend_names_parse() {
        assert_eq!("kak+enum".parse::<BackendKind>().unwrap(), BackendKind::KakEnum);
        assert_eq!("kak+sk".parse::<BackendKind>().unwrap().to_string(), "kak+sk");
        assert!("gridsynth".parse::<BackendKind>().is_err());
    }

    #[test]
    fn cache_persists_across_backends() {
        let a = small();
        a.synth_1q(&math::rz(0.7)).unwrap();
        a.synth_2q(&kak::n_gate(&[0.3, 0.1, 0.0])).unwrap();
        let dir = std::env::temp_dir().join(format!("presynth-cache-{}", std::process::id()));
        a.save_cache(&dir).unwrap();
        let b = small();
        assert_eq!(b.load_cache(&dir).unwrap(), 2);
        b.synth_1q(&math::rz(0.7)).unwrap();
        b.synth_2q(&kak::n_gate(&[0.3, 0.1, 0.0])).unwrap();
        assert_eq!(b.stats().synth_calls(), 0);
        let other = LocalBackend::with_method(BackendKind::KakEnum, OneQubitMethod::Enum { budget: 16 }, 0.01);
        assert_eq!(other.load_cache(&dir).unwrap(), 0);
        std::fs::remove_dir_all(&dir).ok();
    }
}
