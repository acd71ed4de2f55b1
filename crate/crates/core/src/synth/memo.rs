//! Memoization keyed by phase-canonical, grid-quantized unitaries.

use std::hash::Hash;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::math::{self, Mat2, Mat4, C64};

/// Quantization grid of [`UnitaryKey`] entries.
pub const KEY_GRID: f64 = 1e-8;
/// Entries within this of the largest magnitude are candidates for the phase anchor.
const ANCHOR_TOL: f64 = 1e-6;

/// Fingerprint of a unitary up to global phase.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnitaryKey {
    pub dim: u32,
    pub entries: Vec<(i64, i64)>,
}

impl UnitaryKey {
    /// Rotates the phase so that the first (row-major) entry within 1e-6 of the largest
    /// magnitude is real positive, then rounds to the 1e-8 grid.
    pub fn from_dmatrix(u: &DMatrix<C64>) -> UnitaryKey {
        let n = u.nrows();
        let vals: Vec<C64> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| u[(i, j)]).collect();
        let max = vals.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let anchor = vals.iter().find(|z| z.norm() >= max - ANCHOR_TOL).copied().unwrap_or(C64::new(1.0, 0.0));
        let rot = if anchor.norm() > 0.0 { anchor.conj() / anchor.norm() } else { C64::new(1.0, 0.0) };
        let q = |x: f64| {
            let r = (x / KEY_GRID).round() as i64;
            // fold -0 into 0
            if r == 0 { 0 } else { r }
        };
        UnitaryKey {
            dim: n as u32,
            entries: vals.iter().map(|z| { let w = z * rot; (q(w.re), q(w.im)) }).collect(),
        }
    }

    pub fn from_mat2(u: &Mat2) -> UnitaryKey {
        UnitaryKey::from_dmatrix(&math::to_dmatrix2(u))
    }

    pub fn from_mat4(u: &Mat4) -> UnitaryKey {
        UnitaryKey::from_dmatrix(&math::to_dmatrix4(u))
    }

    /// 64-bit digest, used for plan-level keys and config hashes.
    pub fn digest(&self) -> u64 {
        fnv1a(self.entries.iter().flat_map(|(a, b)| a.to_le_bytes().into_iter().chain(b.to_le_bytes())))
    }
}

/// FNV-1a over a byte stream; stable across runs and platforms.
pub fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// One memo level: a concurrent map plus hit/miss counters.
#[derive(Debug)]
pub struct Namespace<K: Eq + Hash, V> {
    map: DashMap<K, Arc<V>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<K: Eq + Hash, V> Default for Namespace<K, V> {
    fn default() -> Self {
        Namespace {
            map: DashMap::new(),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }
}

impl<K: Eq + Hash + Clone, V> Namespace<K, V> {
    pub fn get(&self, k: &K) -> Option<Arc<V>> {
        match self.map.get(k) {
            Some(v) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                Some(v.clone())
            }
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    /// Last writer wins; values for equal keys are identical by determinism.
    pub fn put(&self, k: K, v: Arc<V>) {
        self.map.insert(k, v);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn clear(&self) {
        self.map.clear();
    }

    pub fn entries(&self) -> Vec<(K, Arc<V>)> {
        self.map.iter().map(|e| (e.key().clone(), e.value().clone())).collect()
    }
}

/// Serialized form of a memo level, tagged with the producing configuration.
#[derive(Serialize, Deserialize)]
struct Persisted<V> {
    config_hash: u64,
    entries: Vec<(UnitaryKey, V)>,
}

/// Writes `ns` to `path` as JSON tagged with `config_hash`.
pub fn save_namespace<V: Serialize + Clone>(
    ns: &Namespace<UnitaryKey, V>,
    config_hash: u64,
    path: &Path,
) -> std::io::Result<()> {
    let mut entries: Vec<(UnitaryKey, V)> = ns.entries().into_iter().map(|(k, v)| (k, (*v).clone())).collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let text = serde_json::to_string(&Persisted { config_hash, entries })?;
    std::fs::write(path, text)
}

/// Loads entries saved by [`save_namespace`]. Returns how many were loaded; a file
/// written under a different configuration is ignored.
pub fn load_namespace<V: for<'de> Deserialize<'de>>(
    ns: &Namespace<UnitaryKey, V>,
    config_hash: u64,
    path: &Path,
) -> std::io::Result<usize> {
    let text = std::fs::read_to_string(path)?;
    let p: Persisted<V> = serde_json::from_str(&text)?;
    if p.config_hash != config_hash {
        return Ok(0);
    }
    let n = p.entries.len();
    for (k, v) in p.entries {
        ns.put(k, Arc::new(v));
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_then_get() {
        let ns: Namespace<UnitaryKey, u32> = Namespace::default();
        let k = UnitaryKey::from_mat2(&math::hadamard());
        assert!(ns.get(&k).is_none());
        ns.put(k.clone(), Arc::new(7));
        assert_eq!(*ns.get(&k).unwrap(), 7);
        assert_eq!((ns.hits(), ns.misses()), (1, 1));
        let other = UnitaryKey::from_mat2(&math::pauli_x());
        assert!(ns.get(&other).is_none());
    }

    #[test]
    fn key_is_phase_invariant() {
        let u = math::u3(0.3, 1.2, -0.7);
        let k1 = UnitaryKey::from_mat2(&u);
        let k2 = UnitaryKey::from_mat2(&(u * math::cis(2.1)));
        assert_eq!(k1, k2);
        assert_eq!(k1.dim, 2);
    }

    #[test]
    fn nearby_rotations_share_a_key() {
        // away from grid boundaries, a 1e-10 angle change stays in the same cell
        let a = UnitaryKey::from_mat2(&math::rz(0.25));
        let b = UnitaryKey::from_mat2(&math::rz(0.25 + 5e-10));
        assert_eq!(a, b);
        let c = UnitaryKey::from_mat2(&math::rz(0.2500001));
        assert_ne!(a, c);
    }

    #[test]
    fn equal_keys_imply_close_unitaries() {
        let u = math::u3(1.0, 0.5, 0.25);
        let v = u * math::rz(3e-9);
        if UnitaryKey::from_mat2(&u) == UnitaryKey::from_mat2(&v) {
            assert!(math::distance2(&u, &v) <= 4.0 * 2.0 * KEY_GRID);
        }
    }

    #[test]
    fn persistence_round_trip() {
        let ns: Namespace<UnitaryKey, String> = Namespace::default();
        ns.put(UnitaryKey::from_mat2(&math::hadamard()), Arc::new("h".into()));
        let dir = std::env::temp_dir().join(format!("presynth-memo-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("memo.json");
        save_namespace(&ns, 42, &path).unwrap();
        let fresh: Namespace<UnitaryKey, String> = Namespace::default();
        assert_eq!(load_namespace(&fresh, 41, &path).unwrap(), 0);
        assert_eq!(load_namespace(&fresh, 42, &path).unwrap(), 1);
        assert_eq!(fresh.len(), 1);
        std::fs::remove_dir_all(&dir).ok();
    }
}
