//! JSON documents for operators, sequences and filtrations (schema `ncmax/1`).
//!
//! ```json
//! {"schema":"ncmax/1","algebra":{"blocks":[[2,1.0]]},"blocks":[[[1,0],[0,0],[0,0],[1,0]]]}
//! ```
//!
//! Each block is a row-major list of `[re, im]` pairs. A sequence replaces
//! `blocks` by `terms`, a list of such block lists; a filtration carries
//! `levels` instead.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::algebra::{Algebra, Block, Mat, Operator, C64};
use crate::error::{NcError, Result};
use crate::lambda::OperatorSequence;
use crate::oracle::{Filtration, Level};

pub const SCHEMA: &str = "ncmax/1";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlgebraDoc {
    pub blocks: Vec<(usize, f64)>,
}

impl AlgebraDoc {
    pub fn of(a: &Algebra) -> Self {
        Self { blocks: a.blocks().iter().map(|b| (b.dim, b.weight)).collect() }
    }

    pub fn build(&self) -> Result<Algebra> {
        Algebra::new(self.blocks.iter().map(|&(dim, weight)| Block { dim, weight }).collect())
            .map_err(|e| NcError::invalid("algebra.blocks", e.to_string()))
    }
}

type BlocksDoc = Vec<Vec<(f64, f64)>>;

fn blocks_doc(x: &Operator) -> BlocksDoc {
    x.blocks()
        .iter()
        .map(|m| {
            let mut out = Vec::with_capacity(m.len());
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    out.push((m[(r, c)].re, m[(r, c)].im));
                }
            }
            out
        })
        .collect()
}

fn operator_of(a: &Algebra, blocks: &BlocksDoc, field: &str) -> Result<Operator> {
    if blocks.len() != a.blocks().len() {
        return Err(NcError::invalid(field, format!("expected {} blocks, got {}", a.blocks().len(), blocks.len())));
    }
    let mats = blocks
        .iter()
        .zip(a.blocks())
        .enumerate()
        .map(|(b, (entries, blk))| {
            let d = blk.dim;
            if entries.len() != d * d {
                return Err(NcError::invalid(
                    format!("{field}[{b}]"),
                    format!("expected {} entries for a {d}x{d} block, got {}", d * d, entries.len()),
                ));
            }
            if let Some(k) = entries.iter().position(|(re, im)| !re.is_finite() || !im.is_finite()) {
                return Err(NcError::invalid(format!("{field}[{b}][{k}]"), "non-finite entry"));
            }
            Ok(Mat::from_fn(d, d, |r, c| {
                let (re, im) = entries[r * d + c];
                C64::new(re, im)
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Operator::from_blocks(a, mats)
}

fn check_schema(v: &Value) -> Result<()> {
    match v.get("schema").and_then(Value::as_str) {
        Some(SCHEMA) => Ok(()),
        Some(other) => Err(NcError::invalid("schema", format!("expected \"{SCHEMA}\", got \"{other}\""))),
        None => Err(NcError::invalid("schema", "missing")),
    }
}

fn field<T: for<'de> Deserialize<'de>>(v: &Value, name: &str) -> Result<T> {
    let raw = v.get(name).ok_or_else(|| NcError::invalid(name, "missing"))?;
    T::deserialize(raw).map_err(|e| NcError::invalid(name, e.to_string()))
}

fn algebra_field(v: &Value) -> Result<Algebra> {
    field::<AlgebraDoc>(v, "algebra")?.build()
}

pub fn operator_to_json(x: &Operator) -> Value {
    serde_json::json!({
        "schema": SCHEMA,
        "algebra": AlgebraDoc::of(x.algebra()),
        "blocks": blocks_doc(x),
    })
}

pub fn operator_from_json(v: &Value) -> Result<Operator> {
    check_schema(v)?;
    let a = algebra_field(v)?;
    operator_of(&a, &field(v, "blocks")?, "blocks")
}

pub fn sequence_to_json(x: &OperatorSequence) -> Value {
    serde_json::json!({
        "schema": SCHEMA,
        "algebra": AlgebraDoc::of(x.algebra()),
        "terms": x.terms().iter().map(blocks_doc).collect::<Vec<_>>(),
    })
}

pub fn sequence_from_json(v: &Value) -> Result<OperatorSequence> {
    check_schema(v)?;
    let a = algebra_field(v)?;
    let terms: Vec<BlocksDoc> = field(v, "terms")?;
    if terms.is_empty() {
        return Err(NcError::invalid("terms", "empty sequence"));
    }
    let ops = terms
        .iter()
        .enumerate()
        .map(|(n, t)| operator_of(&a, t, &format!("terms[{n}]")))
        .collect::<Result<Vec<_>>>()?;
    OperatorSequence::new(ops)
}

pub fn filtration_to_json(f: &Filtration) -> Value {
    serde_json::json!({
        "schema": SCHEMA,
        "algebra": AlgebraDoc::of(f.algebra()),
        "levels": f.levels,
    })
}

pub fn filtration_from_json(v: &Value) -> Result<Filtration> {
    check_schema(v)?;
    let a = algebra_field(v)?;
    let levels: Vec<Level> = field(v, "levels")?;
    Filtration::new(&a, levels)
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;

    #[test]
    fn operator_round_trip_is_exact() {
        let mut r = random::rng(5);
        let a = random::random_algebra(&mut r, 3, 4);
        let x = random::random_operator(&mut r, &a);
        let text = serde_json::to_string(&operator_to_json(&x)).unwrap();
        let back = operator_from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn documented_example_parses() {
        let v: Value = serde_json::from_str(
            r#"{"schema":"ncmax/1","algebra":{"blocks":[[2,1.0]]},"blocks":[[[1,0],[0,2],[0,-2],[1,0]]]}"#,
        )
        .unwrap();
        let x = operator_from_json(&v).unwrap();
        assert_eq!(x.block(0)[(0, 1)], C64::new(0.0, 2.0));
        assert_eq!(x.block(0)[(1, 0)], C64::new(0.0, -2.0));
    }

    #[test]
    fn errors_name_the_field() {
        let bad = serde_json::json!({"schema":"ncmax/1","algebra":{"blocks":[[2,1.0]]},"blocks":[[[1,0]]]});
        let msg = operator_from_json(&bad).unwrap_err().to_string();
        assert!(msg.contains("blocks[0]"), "{msg}");
        let bad = serde_json::json!({"schema":"ncmax/0","algebra":{"blocks":[]},"blocks":[]});
        assert!(operator_from_json(&bad).unwrap_err().to_string().contains("schema"));
        let bad = serde_json::json!({"schema":"ncmax/1","algebra":{"blocks":[[2,1.0]]},"terms":[[[[1,0],[0,0],[0,0]]]]});
        assert!(sequence_from_json(&bad).unwrap_err().to_string().contains("terms[0][0]"));
        let bad = serde_json::json!({"schema":"ncmax/1","algebra":{"blocks":[[2,-1.0]]},"blocks":[]});
        assert!(operator_from_json(&bad).unwrap_err().to_string().contains("algebra.blocks"));
    }

    #[test]
    fn sequence_and_filtration_round_trip() {
        let mut r = random::rng(6);
        let a = random::random_algebra(&mut r, 2, 4);
        let seq = OperatorSequence::new((0..3).map(|_| random::random_hermitian(&mut r, &a)).collect()).unwrap();
        let back = sequence_from_json(&sequence_to_json(&seq)).unwrap();
        assert_eq!(back.terms(), seq.terms());
        let f = Filtration::random(&mut r, &a, 3);
        let g = filtration_from_json(&filtration_to_json(&f)).unwrap();
        assert_eq!(g.levels, f.levels);
    }
}
