//! Binary and JSON serialization of cavity and decision tables.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! magic "BCAV" | version u16 | kind u8 (0 cavity, 1 decision) | 0u8
//! scope: tag u32, a u32, b u32
//! cavity:   actions, observed_alphabet, horizon, states, scenarios,
//!           conditioned (u32 each) | count u64 | count f64 values
//! decision: signals, actions, observed_alphabet, horizon, degree
//!           (u32 each) | count u64 | count u32 codes
//!           | mixed u64 | per mixed entry: index u64, len u32,
//!             len x (code u32, probability f64)
//! ```

use std::collections::HashMap;
use std::io::{Read, Write};

use super::tables::{CavityTable, DecisionTable, Scope, MIXED};
use crate::error::{Error, Result};
use crate::num::Real;

pub const MAGIC: &[u8; 4] = b"BCAV";
pub const VERSION: u16 = 1;

const KIND_CAVITY: u8 = 0;
const KIND_DECISION: u8 = 1;

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u64<W: Write>(w: &mut W, v: usize) -> Result<()> {
    w.write_all(&(v as u64).to_le_bytes())?;
    Ok(())
}

fn get<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn get_u32<R: Read>(r: &mut R) -> Result<usize> {
    Ok(u32::from_le_bytes(get(r)?) as usize)
}

fn get_u64<R: Read>(r: &mut R) -> Result<usize> {
    usize::try_from(u64::from_le_bytes(get(r)?)).map_err(|_| Error::Format("length overflow".into()))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(get(r)?))
}

fn header<W: Write>(w: &mut W, kind: u8, scope: Scope) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[kind, 0])?;
    let (tag, a, b) = match scope {
        Scope::Homogeneous => (0, 0, 0),
        Scope::Edge { sender, receiver } => (1, sender, receiver),
        Scope::Node(i) => (2, i, 0),
        Scope::Class(k) => (3, k, 0),
    };
    put_u32(w, tag)?;
    put_u32(w, a)?;
    put_u32(w, b)
}

fn read_header<R: Read>(r: &mut R, kind: u8) -> Result<Scope> {
    if &get::<4, _>(r)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes(get(r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let [k, _] = get::<2, _>(r)?;
    if k != kind {
        return Err(Error::Format(format!("expected table kind {kind}, found {k}")));
    }
    let (tag, a, b) = (get_u32(r)?, get_u32(r)?, get_u32(r)?);
    Ok(match tag {
        0 => Scope::Homogeneous,
        1 => Scope::Edge {
            sender: a,
            receiver: b,
        },
        2 => Scope::Node(a),
        3 => Scope::Class(a),
        _ => return Err(Error::Format(format!("unknown scope tag {tag}"))),
    })
}

pub fn write_cavity_table<T: Real, W: Write>(w: &mut W, table: &CavityTable<T>) -> Result<()> {
    header(w, KIND_CAVITY, table.scope)?;
    for v in [
        table.actions,
        table.observed_alphabet,
        table.horizon,
        table.states,
        table.scenarios,
        usize::from(table.conditioned),
    ] {
        put_u32(w, v)?;
    }
    put_u64(w, table.values.len())?;
    for v in &table.values {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_cavity_table<T: Real, R: Read>(r: &mut R) -> Result<CavityTable<T>> {
    let scope = read_header(r, KIND_CAVITY)?;
    let actions = get_u32(r)?;
    let observed_alphabet = get_u32(r)?;
    let horizon = get_u32(r)?;
    let states = get_u32(r)?;
    let scenarios = get_u32(r)?;
    let conditioned = get_u32(r)? != 0;
    let mut table = CavityTable::zeros(horizon, scope, actions, observed_alphabet, states, scenarios, conditioned);
    let count = get_u64(r)?;
    if count != table.len() {
        return Err(Error::Format(format!("expected {} entries, header says {count}", table.len())));
    }
    for v in table.values.iter_mut() {
        *v = T::lit(get_f64(r)?);
    }
    Ok(table)
}

pub fn write_decision_table<T: Real, W: Write>(w: &mut W, table: &DecisionTable<T>) -> Result<()> {
    header(w, KIND_DECISION, table.scope)?;
    for v in [
        table.signals,
        table.actions,
        table.observed_alphabet,
        table.horizon,
        table.degree,
    ] {
        put_u32(w, v)?;
    }
    put_u64(w, table.codes.len())?;
    for c in &table.codes {
        w.write_all(&c.to_le_bytes())?;
    }
    let mut mixed: Vec<_> = table.mixed.iter().collect();
    mixed.sort_by_key(|(idx, _)| **idx);
    put_u64(w, mixed.len())?;
    for (idx, outcomes) in mixed {
        put_u64(w, *idx)?;
        put_u32(w, outcomes.len())?;
        for (code, p) in outcomes {
            w.write_all(&code.to_le_bytes())?;
            w.write_all(&p.as_f64().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_decision_table<T: Real, R: Read>(r: &mut R) -> Result<DecisionTable<T>> {
    let scope = read_header(r, KIND_DECISION)?;
    let signals = get_u32(r)?;
    let actions = get_u32(r)?;
    let observed_alphabet = get_u32(r)?;
    let horizon = get_u32(r)?;
    let degree = get_u32(r)?;
    let expected = observed_alphabet
        .checked_pow((horizon * degree) as u32)
        .and_then(|n| n.checked_mul(signals))
        .ok_or_else(|| Error::Format("table too large".into()))?;
    let count = get_u64(r)?;
    if count != expected {
        return Err(Error::Format(format!("expected {expected} entries, header says {count}")));
    }
    let codes = (0..count)
        .map(|_| Ok(u32::from_le_bytes(get(r)?)))
        .collect::<Result<Vec<u32>>>()?;
    let mut mixed = HashMap::new();
    for _ in 0..get_u64(r)? {
        let idx = get_u64(r)?;
        let len = get_u32(r)?;
        let outcomes = (0..len)
            .map(|_| Ok((u32::from_le_bytes(get(r)?), T::lit(get_f64(r)?))))
            .collect::<Result<Vec<_>>>()?;
        if codes.get(idx) != Some(&MIXED) {
            return Err(Error::Format(format!("kernel for non-mixed entry {idx}")));
        }
        mixed.insert(idx, outcomes);
    }
    Ok(DecisionTable {
        horizon,
        scope,
        signals,
        actions,
        observed_alphabet,
        degree,
        codes,
        mixed,
    })
}

pub fn cavity_table_to_json<T: Real + serde::Serialize>(table: &CavityTable<T>) -> Result<String> {
    Ok(serde_json::to_string(table)?)
}

pub fn cavity_table_from_json<T: Real + serde::de::DeserializeOwned>(text: &str) -> Result<CavityTable<T>> {
    Ok(serde_json::from_str(text)?)
}

pub fn decision_table_to_json<T: Real + serde::Serialize>(table: &DecisionTable<T>) -> Result<String> {
    Ok(serde_json::to_string(table)?)
}

pub fn decision_table_from_json<T: Real + serde::de::DeserializeOwned>(text: &str) -> Result<DecisionTable<T>> {
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::CavityEngine;
    use crate::model::{Decider, SignalModel, TieBreakRule, UpdateRule};

    fn engine(tie: TieBreakRule) -> CavityEngine<f64> {
        let m = SignalModel::binary_symmetric(0.3).unwrap();
        let d = Decider::identity(&m, tie).unwrap();
        let mut e = CavityEngine::regular(3, m, d, UpdateRule::Bayesian).unwrap();
        e.advance_to(2).unwrap();
        e
    }

    #[test]
    fn binary_round_trip() {
        let e = engine(TieBreakRule::UniformRandom);
        let q = e.cavity_table(1, 0).unwrap();
        let mut buf = Vec::new();
        write_cavity_table(&mut buf, q).unwrap();
        assert_eq!(&buf[..4], MAGIC);
        let back: CavityTable<f64> = read_cavity_table(&mut buf.as_slice()).unwrap();
        assert_eq!(&back, q);

        let g = e.decision_table(2, 0).unwrap();
        assert!(!g.is_deterministic());
        let mut buf = Vec::new();
        write_decision_table(&mut buf, g).unwrap();
        let back: DecisionTable<f64> = read_decision_table(&mut buf.as_slice()).unwrap();
        assert_eq!(&back, g);
    }

    #[test]
    fn json_round_trip() {
        let e = engine(TieBreakRule::OwnSignal);
        let q = e.cavity_table(1, 0).unwrap();
        let back: CavityTable<f64> = cavity_table_from_json(&cavity_table_to_json(q).unwrap()).unwrap();
        assert_eq!(&back, q);
        let g = e.decision_table(1, 0).unwrap();
        let back: DecisionTable<f64> = decision_table_from_json(&decision_table_to_json(g).unwrap()).unwrap();
        assert_eq!(&back, g);
    }

    #[test]
    fn rejects_wrong_kind_and_magic() {
        let e = engine(TieBreakRule::OwnSignal);
        let mut buf = Vec::new();
        write_cavity_table(&mut buf, e.cavity_table(0, 0).unwrap()).unwrap();
        assert!(read_decision_table::<f64, _>(&mut buf.as_slice()).is_err());
        buf[0] = b'X';
        assert!(read_cavity_table::<f64, _>(&mut buf.as_slice()).is_err());
    }
}
