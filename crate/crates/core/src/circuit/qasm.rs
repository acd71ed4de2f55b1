//! OpenQASM 2.0 subset: one `qreg`, gates `h s sdg t tdg x y z cx rz rx ry rxx crx u3`.
//! Comments, `include`, `barrier` and `creg` are ignored.

use std::f64::consts::PI;
use std::fmt::Write as _;

use super::{Circuit, CircuitError, Gate, GateKind};

fn perr(line: usize, column: usize, message: impl Into<String>) -> CircuitError {
    CircuitError::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// A statement with the 1-based position of its first character.
struct Stmt {
    text: String,
    line: usize,
    column: usize,
}

fn statements(src: &str) -> Result<Vec<Stmt>, CircuitError> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut start: Option<(usize, usize)> = None;
    for (ln, raw) in src.lines().enumerate() {
        let line = match raw.find("//") {
            Some(p) => &raw[..p],
            None => raw,
        };
        for (col, ch) in line.chars().enumerate() {
            if ch == ';' {
                let (l, c) = start.unwrap_or((ln + 1, col + 1));
                out.push(Stmt {
                    text: cur.trim().to_string(),
                    line: l,
                    column: c,
                });
                cur.clear();
                start = None;
            } else {
                if start.is_none() && !ch.is_whitespace() {
                    start = Some((ln + 1, col + 1));
                }
                cur.push(ch);
            }
        }
        cur.push(' ');
    }
    if !cur.trim().is_empty() {
        let (l, c) = start.unwrap_or((1, 1));
        return Err(perr(l, c, "missing ';'"));
    }
    Ok(out)
}

pub fn parse_qasm(src: &str) -> Result<Circuit, CircuitError> {
    let stmts = statements(src)?;
    let mut reg: Option<(String, usize)> = None;
    let mut gates = Vec::new();
    for (k, st) in stmts.iter().enumerate() {
        let t = st.text.as_str();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix("OPENQASM") {
            if k != 0 || rest.trim() != "2.0" {
                return Err(perr(st.line, st.column, "expected header 'OPENQASM 2.0'"));
            }
            continue;
        }
        if t.starts_with("include") || t.starts_with("barrier") || t.starts_with("creg") {
            continue;
        }
        if let Some(rest) = t.strip_prefix("qreg") {
            if reg.is_some() {
                return Err(perr(st.line, st.column, "only one qreg is supported"));
            }
            let (name, size) = parse_ref(rest.trim())
                .ok_or_else(|| perr(st.line, st.column, "malformed qreg declaration"))?;
            if size == 0 {
                return Err(perr(st.line, st.column, "qreg needs at least one qubit"));
            }
            reg = Some((name, size));
            continue;
        }
        let (rname, n) = reg
            .as_ref()
            .ok_or_else(|| perr(st.line, st.column, "gate before qreg declaration"))?;
        gates.push(parse_gate(t, rname, *n, st)?);
    }
    let (_, n) = reg.ok_or_else(|| perr(1, 1, "no qreg declaration"))?;
    Circuit::new(n, gates)
}

/// `name[idx]` -> (name, idx).
fn parse_ref(s: &str) -> Option<(String, usize)> {
    let open = s.find('[')?;
    let close = s.find(']')?;
    if close != s.len() - 1 || close < open {
        return None;
    }
    let name = s[..open].trim();
    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
        return None;
    }
    let idx = s[open + 1..close].trim().parse().ok()?;
    Some((name.to_string(), idx))
}

fn parse_gate(t: &str, reg: &str, n: usize, st: &Stmt) -> Result<Gate, CircuitError> {
    let err = |m: &str| perr(st.line, st.column, m.to_string());
    let name_end = t
        .find(|c: char| c == '(' || c.is_whitespace())
        .ok_or_else(|| err("gate without operands"))?;
    let name = &t[..name_end];
    let mut rest = t[name_end..].trim_start();
    let mut params = Vec::new();
    if rest.starts_with('(') {
        let close = matching_paren(rest).ok_or_else(|| err("unbalanced parentheses"))?;
        for p in split_top_level(&rest[1..close]) {
            let v = Expr::new(&p)
                .parse()
                .map_err(|m| perr(st.line, st.column, format!("bad parameter '{p}': {m}")))?;
            params.push(v);
        }
        rest = rest[close + 1..].trim_start();
    }
    let mut qubits = Vec::new();
    for arg in rest.split(',') {
        let (r, q) = parse_ref(arg.trim()).ok_or_else(|| err("malformed qubit operand"))?;
        if r != reg {
            return Err(err("unknown register"));
        }
        if q >= n {
            return Err(err("qubit index out of range"));
        }
        qubits.push(q);
    }
    let kind = GateKind::from_name(name, &params)
        .ok_or_else(|| perr(st.line, st.column, format!("unsupported gate '{name}'")))?;
    Gate::new(kind, &qubits).map_err(|e| perr(st.line, st.column, e.to_string()))
}

fn matching_paren(s: &str) -> Option<usize> {
    let mut depth = 0i32;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn split_top_level(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut cur));
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    out.push(cur);
    out
}

/// Recursive-descent evaluator for parameter expressions over `pi`, numbers, `+ - * /`.
struct Expr<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Expr<'a> {
    fn new(s: &'a str) -> Self {
        Expr { s: s.as_bytes(), pos: 0 }
    }

    fn parse(mut self) -> Result<f64, String> {
        let v = self.sum()?;
        self.ws();
        if self.pos != self.s.len() {
            return Err("trailing characters".into());
        }
        Ok(v)
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.pos).copied()
    }

    fn sum(&mut self) -> Result<f64, String> {
        let mut v = self.product()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let r = self.product()?;
            v = if op == b'+' { v + r } else { v - r };
        }
        Ok(v)
    }

    fn product(&mut self) -> Result<f64, String> {
        let mut v = self.unary()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let r = self.unary()?;
            v = if op == b'*' { v * r } else { v / r };
        }
        Ok(v)
    }

    fn unary(&mut self) -> Result<f64, String> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<f64, String> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let v = self.sum()?;
                if self.peek() != Some(b')') {
                    return Err("expected ')'".into());
                }
                self.pos += 1;
                Ok(v)
            }
            Some(b'p') => {
                if self.s[self.pos..].starts_with(b"pi") {
                    self.pos += 2;
                    Ok(PI)
                } else {
                    Err("unknown identifier".into())
                }
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let start = self.pos;
                while self.pos < self.s.len() {
                    let c = self.s[self.pos];
                    let exp_sign = (c == b'-' || c == b'+')
                        && self.pos > start
                        && matches!(self.s[self.pos - 1], b'e' | b'E');
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let lit = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
                lit.parse::<f64>().map_err(|_| format!("bad number '{lit}'"))
            }
            _ => Err("expected a value".into()),
        }
    }
}

/// Emits the circuit; angles are printed with round-trip precision.
pub fn emit_qasm(c: &Circuit) -> Result<String, CircuitError> {
    let mut out = String::from("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    let _ = writeln!(out, "qreg q[{}];", c.n_qubits());
    for g in c.gates() {
        if g.kind.is_raw() {
            return Err(CircuitError::UnrepresentableGate(g.kind.name().to_string()));
        }
        out.push_str(g.kind.name());
        let p = g.kind.params();
        if !p.is_empty() {
            let s: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
            let _ = write!(out, "({})", s.join(","));
        }
        let q: Vec<String> = g.qubits.iter().map(|q| format!("q[{q}]")).collect();
        let _ = writeln!(out, " {};", q.join(","));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_minimal_program() {
        let c = parse_qasm("qreg q[2]; h q[0]; cx q[0],q[1];").unwrap();
        assert_eq!(c.n_qubits(), 2);
        assert_eq!(c.gates(), &[Gate::h(0), Gate::cx(0, 1)]);
    }

    #[test]
    fn parses_expressions_and_ignores_noise() {
        let src = "OPENQASM 2.0;\ninclude \"qelib1.inc\";\n// comment\nqreg r[3];\ncreg c[3];\nrz(-pi/4) r[2];\nbarrier r[0],r[1];\nu3(2*(pi-1), 1e-3, -.5) r[1];\n";
        let c = parse_qasm(src).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.gates()[0], Gate::rz(-PI / 4.0, 2));
        assert_eq!(c.gates()[1], Gate::u3(2.0 * (PI - 1.0), 1e-3, -0.5, 1));
    }

    #[test]
    fn malformed_header_is_an_error() {
        let e = parse_qasm("OPENQASM 3.0;\nqreg q[1];").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 1, column: 1, .. }));
        let e = parse_qasm("qreg q[1];\nfoo q[0];").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 2, .. }));
        assert!(parse_qasm("qreg q[1]; h q[3];").is_err());
        assert!(parse_qasm("h q[0];").is_err());
    }

    #[test]
    fn round_trip_random_named_circuit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut gates = Vec::new();
        for _ in 0..50 {
            let a = rng.gen_range(0..4);
            let b = (a + rng.gen_range(1..4)) % 4;
            let t: f64 = rng.gen_range(0.0..6.3);
            gates.push(match rng.gen_range(0..8) {
                0 => Gate::h(a),
                1 => Gate::sdg(a),
                2 => Gate::tdg(a),
                3 => Gate::cx(a, b),
                4 => Gate::rz(t, a),
                5 => Gate::crx(t, a, b),
                6 => Gate::rxx(t, a, b),
                _ => Gate::u3(t, t * 0.3, -t, a),
            });
        }
        let c = Circuit::new(4, gates).unwrap();
        let back = parse_qasm(&emit_qasm(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn raw_blocks_cannot_be_emitted() {
        let g = Gate::unitary1(crate::math::hadamard(), 0).unwrap();
        let c = Circuit::new(1, vec![g]).unwrap();
        assert!(matches!(emit_qasm(&c), Err(CircuitError::UnrepresentableGate(_))));
    }
}
