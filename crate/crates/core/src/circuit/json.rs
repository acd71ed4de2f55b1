//! Native JSON circuit format. Raw unitary blocks carry their matrix as `[re, im]` rows.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Circuit, CircuitError, Gate, GateKind};
use crate::math::{Mat2, Mat4, C64};

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct CircuitJson {
    pub n_qubits: usize,
    pub gates: Vec<GateJson>,
}

#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct GateJson {
    pub kind: String,
    pub qubits: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<[f64; 2]>>>,
}

fn bad(message: String) -> CircuitError {
    CircuitError::Parse {
        line: 0,
        column: 0,
        message,
    }
}

impl From<&Gate> for GateJson {
    fn from(g: &Gate) -> Self {
        let matrix = match &g.kind {
            GateKind::Unitary1(m) => Some(rows(m.nrows(), |i, j| m[(i, j)])),
            GateKind::Unitary2(m) => Some(rows(m.nrows(), |i, j| m[(i, j)])),
            _ => None,
        };
        GateJson {
            kind: g.kind.name().to_string(),
            qubits: g.qubits.to_vec(),
            params: g.kind.params(),
            matrix,
        }
    }
}

fn rows(n: usize, f: impl Fn(usize, usize) -> C64) -> Vec<Vec<[f64; 2]>> {
    (0..n)
        .map(|i| (0..n).map(|j| { let z = f(i, j); [z.re, z.im] }).collect())
        .collect()
}

fn read_matrix(m: &[Vec<[f64; 2]>], n: usize) -> Result<Vec<C64>, CircuitError> {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(bad(format!("expected a {n}x{n} matrix")));
    }
    // row-major values
    Ok(m.iter().flat_map(|r| r.iter().map(|&[re, im]| C64::new(re, im))).collect())
}

impl TryFrom<&GateJson> for Gate {
    type Error = CircuitError;

    fn try_from(j: &GateJson) -> Result<Gate, CircuitError> {
        let kind = match j.kind.as_str() {
            "unitary1" => {
                let m = j.matrix.as_ref().ok_or_else(|| bad("unitary1 needs a matrix".into()))?;
                GateKind::Unitary1(Arc::new(Mat2::from_row_slice(&read_matrix(m, 2)?)))
            }
            "unitary2" => {
                let m = j.matrix.as_ref().ok_or_else(|| bad("unitary2 needs a matrix".into()))?;
                GateKind::Unitary2(Arc::new(Mat4::from_row_slice(&read_matrix(m, 4)?)))
            }
            name => GateKind::from_name(name, &j.params)
                .ok_or_else(|| bad(format!("unknown gate '{name}' or wrong parameter count")))?,
        };
        Gate::new(kind, &j.qubits)
    }
}

impl From<&Circuit> for CircuitJson {
    fn from(c: &Circuit) -> Self {
        CircuitJson {
            n_qubits: c.n_qubits(),
            gates: c.gates().iter().map(GateJson::from).collect(),
        }
    }
}

impl TryFrom<&CircuitJson> for Circuit {
    type Error = CircuitError;

    fn try_from(j: &CircuitJson) -> Result<Circuit, CircuitError> {
        let gates = j.gates.iter().map(Gate::try_from).collect::<Result<Vec<_>, _>>()?;
        Circuit::new(j.n_qubits, gates)
    }
}

/// `#[serde(with = ...)]` adapter storing a [`Circuit`] in the JSON format.
pub mod serde_circuit {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(c: &Circuit, s: S) -> Result<S::Ok, S::Error> {
        CircuitJson::from(c).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Circuit, D::Error> {
        let j = CircuitJson::deserialize(d)?;
        Circuit::try_from(&j).map_err(serde::de::Error::custom)
    }
}

pub fn to_json(c: &Circuit) -> String {
    serde_json::to_string(&CircuitJson::from(c)).expect("circuit serializes")
}

pub fn to_json_pretty(c: &Circuit) -> String {
    serde_json::to_string_pretty(&CircuitJson::from(c)).expect("circuit serializes")
}

pub fn from_json(text: &str) -> Result<Circuit, CircuitError> {
    let j: CircuitJson = serde_json::from_str(text).map_err(|e| CircuitError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Circuit::try_from(&j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;

    #[test]
    fn round_trip_with_raw_blocks() {
        let k = math::kron2(&math::u3(0.3, 0.2, 0.1), &math::hadamard());
        let c = Circuit::new(
            3,
            vec![
                Gate::rz(0.123456789, 0),
                Gate::unitary2(k, 2, 0).unwrap(),
                Gate::unitary1(math::u3(1.0, 2.0, 3.0), 1).unwrap(),
                Gate::u3(1.5, -0.25, 0.75, 2),
                Gate::cx(1, 2),
            ],
        )
        .unwrap();
        let back = from_json(&to_json(&c)).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(from_json("{\"n_qubits\": 1, \"gates\": [{\"kind\": \"foo\", \"qubits\": [0]}]}").is_err());
        assert!(from_json("{\"n_qubits\": 1, \"gates\": [{\"kind\": \"rz\", \"qubits\": [0]}]}").is_err());
        let nonunitary = "{\"n_qubits\": 1, \"gates\": [{\"kind\": \"unitary1\", \"qubits\": [0], \"matrix\": [[[1,0],[1,0]],[[0,0],[1,0]]]}]}";
        assert!(matches!(from_json(nonunitary), Err(CircuitError::NotUnitary { .. })));
        assert!(from_json("not json").is_err());
    }
}
