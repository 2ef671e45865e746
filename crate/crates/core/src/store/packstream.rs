//! PackStream v1 values and their binary encoding.

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Bytes(Vec<u8>),
    String(String),
    List(Vec<Value>),
    Map(BTreeMap<String, Value>),
    Struct { tag: u8, fields: Vec<Value> },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PackError {
    #[error("unexpected end of data")]
    Eof,
    #[error("unknown marker 0x{0:02X}")]
    Marker(u8),
    #[error("invalid UTF-8 in string")]
    Utf8,
    #[error("map key is not a string")]
    MapKey,
    #[error("{0} too large to encode")]
    TooLarge(&'static str),
}

impl Value {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&BTreeMap<String, Value>> {
        match self {
            Value::Map(m) => Some(m),
            _ => None,
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::String(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::String(s)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

/// Converts JSON to PackStream. Integers that fit in i64 stay integers.
pub fn from_json(v: &serde_json::Value) -> Value {
    match v {
        serde_json::Value::Null => Value::Null,
        serde_json::Value::Bool(b) => Value::Bool(*b),
        serde_json::Value::Number(n) => match n.as_i64() {
            Some(i) => Value::Int(i),
            None => Value::Float(n.as_f64().unwrap_or(f64::NAN)),
        },
        serde_json::Value::String(s) => Value::String(s.clone()),
        serde_json::Value::Array(a) => Value::List(a.iter().map(from_json).collect()),
        serde_json::Value::Object(o) => Value::Map(o.iter().map(|(k, v)| (k.clone(), from_json(v))).collect()),
    }
}

/// Converts PackStream to JSON. Bytes become arrays of numbers and
/// structures become `{"tag": .., "fields": [..]}`.
pub fn to_json(v: &Value) -> serde_json::Value {
    match v {
        Value::Null => serde_json::Value::Null,
        Value::Bool(b) => (*b).into(),
        Value::Int(i) => (*i).into(),
        Value::Float(f) => serde_json::Number::from_f64(*f).map_or(serde_json::Value::Null, Into::into),
        Value::Bytes(b) => b.iter().map(|x| serde_json::Value::from(*x)).collect(),
        Value::String(s) => s.clone().into(),
        Value::List(l) => l.iter().map(to_json).collect(),
        Value::Map(m) => m.iter().map(|(k, v)| (k.clone(), to_json(v))).collect::<serde_json::Map<_, _>>().into(),
        Value::Struct { tag, fields } => serde_json::json!({ "tag": tag, "fields": fields.iter().map(to_json).collect::<Vec<_>>() }),
    }
}

fn size_header(out: &mut Vec<u8>, len: usize, tiny: u8, m8: Option<u8>, m16: u8, m32: u8) -> Result<(), PackError> {
    match (len, m8) {
        (0..=15, _) if tiny != 0 => out.push(tiny | len as u8),
        (0..=0xFF, Some(m)) => out.extend([m, len as u8]),
        (0..=0xFFFF, _) => {
            out.push(m16);
            out.extend((len as u16).to_be_bytes());
        }
        _ if len <= u32::MAX as usize => {
            out.push(m32);
            out.extend((len as u32).to_be_bytes());
        }
        _ => return Err(PackError::TooLarge("collection")),
    }
    Ok(())
}

pub fn encode(v: &Value, out: &mut Vec<u8>) -> Result<(), PackError> {
    match v {
        Value::Null => out.push(0xC0),
        Value::Bool(b) => out.push(if *b { 0xC3 } else { 0xC2 }),
        Value::Int(i) => {
            let i = *i;
            if (-16..=127).contains(&i) {
                out.push(i as i8 as u8);
            } else if i8::try_from(i).is_ok() {
                out.extend([0xC8, i as i8 as u8]);
            } else if let Ok(x) = i16::try_from(i) {
                out.push(0xC9);
                out.extend(x.to_be_bytes());
            } else if let Ok(x) = i32::try_from(i) {
                out.push(0xCA);
                out.extend(x.to_be_bytes());
            } else {
                out.push(0xCB);
                out.extend(i.to_be_bytes());
            }
        }
        Value::Float(f) => {
            out.push(0xC1);
            out.extend(f.to_be_bytes());
        }
        Value::Bytes(b) => {
            size_header(out, b.len(), 0, Some(0xCC), 0xCD, 0xCE)?;
            out.extend(b);
        }
        Value::String(s) => {
            size_header(out, s.len(), 0x80, Some(0xD0), 0xD1, 0xD2)?;
            out.extend(s.as_bytes());
        }
        Value::List(l) => {
            size_header(out, l.len(), 0x90, Some(0xD4), 0xD5, 0xD6)?;
            for x in l {
                encode(x, out)?;
            }
        }
        Value::Map(m) => {
            size_header(out, m.len(), 0xA0, Some(0xD8), 0xD9, 0xDA)?;
            for (k, x) in m {
                encode(&Value::String(k.clone()), out)?;
                encode(x, out)?;
            }
        }
        Value::Struct { tag, fields } => {
            if fields.len() > 15 {
                return Err(PackError::TooLarge("structure"));
            }
            out.push(0xB0 | fields.len() as u8);
            out.push(*tag);
            for x in fields {
                encode(x, out)?;
            }
        }
    }
    Ok(())
}

pub struct Decoder<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Decoder { data, pos: 0 }
    }

    pub fn is_done(&self) -> bool {
        self.pos >= self.data.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], PackError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len()).ok_or(PackError::Eof)?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn byte(&mut self) -> Result<u8, PackError> {
        Ok(self.take(1)?[0])
    }

    fn be<const N: usize>(&mut self) -> Result<[u8; N], PackError> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn len(&mut self, marker: u8, base8: u8) -> Result<usize, PackError> {
        Ok(match marker - base8 {
            0 => self.byte()? as usize,
            1 => u16::from_be_bytes(self.be()?) as usize,
            _ => u32::from_be_bytes(self.be()?) as usize,
        })
    }

    fn string(&mut self, n: usize) -> Result<String, PackError> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| PackError::Utf8)
    }

    fn list(&mut self, n: usize) -> Result<Value, PackError> {
        (0..n).map(|_| self.value()).collect::<Result<_, _>>().map(Value::List)
    }

    fn map(&mut self, n: usize) -> Result<Value, PackError> {
        let mut m = BTreeMap::new();
        for _ in 0..n {
            let Value::String(k) = self.value()? else {
                return Err(PackError::MapKey);
            };
            let v = self.value()?;
            m.insert(k, v);
        }
        Ok(Value::Map(m))
    }

    pub fn value(&mut self) -> Result<Value, PackError> {
        let m = self.byte()?;
        match m {
            0x00..=0x7F => Ok(Value::Int(m as i64)),
            0xF0..=0xFF => Ok(Value::Int(m as i8 as i64)),
            0x80..=0x8F => self.string((m & 0x0F) as usize).map(Value::String),
            0x90..=0x9F => self.list((m & 0x0F) as usize),
            0xA0..=0xAF => self.map((m & 0x0F) as usize),
            0xB0..=0xBF => {
                let tag = self.byte()?;
                let fields = (0..(m & 0x0F)).map(|_| self.value()).collect::<Result<_, _>>()?;
                Ok(Value::Struct { tag, fields })
            }
            0xC0 => Ok(Value::Null),
            0xC1 => Ok(Value::Float(f64::from_be_bytes(self.be()?))),
            0xC2 => Ok(Value::Bool(false)),
            0xC3 => Ok(Value::Bool(true)),
            0xC8 => Ok(Value::Int(self.byte()? as i8 as i64)),
            0xC9 => Ok(Value::Int(i16::from_be_bytes(self.be()?) as i64)),
            0xCA => Ok(Value::Int(i32::from_be_bytes(self.be()?) as i64)),
            0xCB => Ok(Value::Int(i64::from_be_bytes(self.be()?))),
            0xCC..=0xCE => {
                let n = self.len(m, 0xCC)?;
                Ok(Value::Bytes(self.take(n)?.to_vec()))
            }
            0xD0..=0xD2 => {
                let n = self.len(m, 0xD0)?;
                self.string(n).map(Value::String)
            }
            0xD4..=0xD6 => {
                let n = self.len(m, 0xD4)?;
                self.list(n)
            }
            0xD8..=0xDA => {
                let n = self.len(m, 0xD8)?;
                self.map(n)
            }
            _ => Err(PackError::Marker(m)),
        }
    }
}

pub fn decode(data: &[u8]) -> Result<Value, PackError> {
    Decoder::new(data).value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bytes(v: &Value) -> Vec<u8> {
        let mut out = Vec::new();
        encode(v, &mut out).unwrap();
        out
    }

    #[test]
    fn known_encodings() {
        // byte layouts from the PackStream v1 reference tables
        assert_eq!(bytes(&Value::Null), [0xC0]);
        assert_eq!(bytes(&Value::Bool(true)), [0xC3]);
        assert_eq!(bytes(&Value::Int(1)), [0x01]);
        assert_eq!(bytes(&Value::Int(-16)), [0xF0]);
        assert_eq!(bytes(&Value::Int(-17)), [0xC8, 0xEF]);
        assert_eq!(bytes(&Value::Int(128)), [0xC9, 0x00, 0x80]);
        assert_eq!(bytes(&Value::Int(32768)), [0xCA, 0x00, 0x00, 0x80, 0x00]);
        assert_eq!(bytes(&Value::Int(i64::from(i32::MAX) + 1))[0], 0xCB);
        assert_eq!(bytes(&Value::Float(1.1)), [0xC1, 0x3F, 0xF1, 0x99, 0x99, 0x99, 0x99, 0x99, 0x9A]);
        assert_eq!(bytes(&"a".into()), [0x81, 0x61]);
        assert_eq!(bytes(&Value::String("x".repeat(16)))[..2], [0xD0, 0x10]);
        assert_eq!(bytes(&Value::List(vec![Value::Int(1), Value::Int(2)])), [0x92, 0x01, 0x02]);
        let m = Value::Map(BTreeMap::from([("one".to_string(), Value::from("eins"))]));
        assert_eq!(bytes(&m), [0xA1, 0x83, 0x6F, 0x6E, 0x65, 0x84, 0x65, 0x69, 0x6E, 0x73]);
        let s = Value::Struct { tag: 0x0F, fields: vec![] };
        assert_eq!(bytes(&s), [0xB0, 0x0F]);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(decode(&[0x82, 0x61]), Err(PackError::Eof));
        assert_eq!(decode(&[0xC4]), Err(PackError::Marker(0xC4)));
        assert_eq!(decode(&[0xA1, 0x01, 0x01]), Err(PackError::MapKey));
    }

    fn value() -> impl Strategy<Value = Value> {
        let leaf = prop_oneof![
            Just(Value::Null),
            any::<bool>().prop_map(Value::Bool),
            any::<i64>().prop_map(Value::Int),
            any::<f64>().prop_filter("NaN has no equality", |f| !f.is_nan()).prop_map(Value::Float),
            ".{0,40}".prop_map(Value::String),
            proptest::collection::vec(any::<u8>(), 0..300).prop_map(Value::Bytes),
        ];
        leaf.prop_recursive(3, 64, 20, |inner| {
            prop_oneof![
                proptest::collection::vec(inner.clone(), 0..20).prop_map(Value::List),
                proptest::collection::btree_map(".{0,8}", inner.clone(), 0..20).prop_map(Value::Map),
                (any::<u8>(), proptest::collection::vec(inner, 0..4)).prop_map(|(tag, fields)| Value::Struct { tag, fields }),
            ]
        })
    }

    proptest! {
        #[test]
        fn round_trip(v in value()) {
            let data = bytes(&v);
            let mut d = Decoder::new(&data);
            prop_assert_eq!(d.value().unwrap(), v);
            prop_assert!(d.is_done());
        }
    }
}
