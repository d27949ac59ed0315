//! Word embedding tables, averaged plot vectors and nearest-word lookup.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn from_rows(rows: Vec<(String, Vec<f64>)>) -> Result<EmbeddingTable> {
        let dim = rows
            .first()
            .map(|(_, v)| v.len())
            .ok_or_else(|| Error::validation("embedding table is empty"))?;
        if dim == 0 {
            return Err(Error::validation("embedding dimension must be at least 1"));
        }
        let mut table = EmbeddingTable {
            dim,
            tokens: Vec::with_capacity(rows.len()),
            index: HashMap::with_capacity(rows.len()),
            data: Vec::with_capacity(rows.len() * dim),
        };
        for (token, v) in rows {
            table.push(token, v, None)?;
        }
        Ok(table)
    }

    fn push(&mut self, token: String, v: Vec<f64>, line: Option<usize>) -> Result<()> {
        let at = |msg: String| match line {
            Some(line) => Error::Parse { line, message: msg },
            None => Error::validation(msg),
        };
        if v.len() != self.dim {
            return Err(at(format!(
                "expected {} values for `{token}`, found {}",
                self.dim,
                v.len()
            )));
        }
        if self.index.contains_key(&token) {
            return Err(at(format!("duplicate token `{token}`")));
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.data.extend(v);
        Ok(())
    }

    /// Parses the text format: `token v1 .. vd` per line, with an optional
    /// leading `count dim` header line.
    pub fn parse(text: &str) -> Result<EmbeddingTable> {
        let mut table: Option<EmbeddingTable> = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let rest: Vec<&str> = fields.collect();
            if table.is_none()
                && rest.len() == 1
                && token.parse::<u64>().is_ok()
                && rest[0].parse::<u64>().is_ok()
            {
                continue;
            }
            let values = rest
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            match table.as_mut() {
                Some(t) => t.push(token.to_owned(), values, Some(line_no))?,
                None => {
                    if values.is_empty() {
                        return Err(Error::Parse {
                            line: line_no,
                            message: "row has no vector values".into(),
                        });
                    }
                    let mut t = EmbeddingTable {
                        dim: values.len(),
                        tokens: Vec::new(),
                        index: HashMap::new(),
                        data: Vec::new(),
                    };
                    t.push(token.to_owned(), values, Some(line_no))?;
                    table = Some(t);
                }
            }
        }
        table.ok_or_else(|| Error::validation("embedding file has no rows"))
    }

    pub fn load(path: &Path) -> Result<EmbeddingTable> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Mean of the vectors of covered tokens; `None` when nothing is covered.
    pub fn plot_vector<S: AsRef<str>>(&self, tokens: &[S]) -> Option<Vec<f64>> {
        let mut sum = vec![0.0; self.dim];
        let mut n = 0usize;
        for v in tokens.iter().filter_map(|t| self.get(t.as_ref())) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        let inv = n as f64;
        sum.iter_mut().for_each(|s| *s /= inv);
        Some(sum)
    }

    /// The `k` tokens closest to `query` by cosine distance, excluding the
    /// query. Ties break lexicographically; zero vectors are never returned.
    pub fn nearest_words(&self, query: &str, k: usize) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(Error::validation("k must be at least 1"));
        }
        let q = self
            .get(query)
            .ok_or_else(|| Error::validation(format!("`{query}` is not in the embedding table")))?;
        let qn = norm(q);
        if qn == 0.0 {
            return Err(Error::validation(format!("`{query}` has a zero vector")));
        }
        let mut scored: Vec<(&str, f64)> = (0..self.len())
            .filter(|&i| self.tokens[i] != query)
            .filter_map(|i| {
                let v = self.row(i);
                let vn = norm(v);
                (vn > 0.0).then(|| {
                    let dot: f64 = q.iter().zip(v).map(|(a, b)| a * b).sum();
                    (self.tokens[i].as_str(), 1.0 - dot / (qn * vn))
                })
            })
            .collect();
        scored.sort_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.0.cmp(b.0))
        });
        scored.truncate(k);
        Ok(scored.into_iter().map(|(t, d)| (t.to_owned(), d)).collect())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_simple() {
        let t = EmbeddingTable::parse("a 1.0 0.0\nb 0.0 1.0").unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("b"), Some(&[0.0, 1.0][..]));
    }

    #[test]
    fn parse_with_header() {
        let t = EmbeddingTable::parse("2 3\na 1 2 3\nb 4 5 6\n").unwrap();
        assert_eq!((t.len(), t.dim()), (2, 3));
    }

    #[test]
    fn parse_errors() {
        match EmbeddingTable::parse("a 1 2\nb 1 2 3") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(EmbeddingTable::parse("a 1 2\na 3 4").is_err());
        assert!(EmbeddingTable::parse("").is_err());
        assert!(EmbeddingTable::parse("a 1 x").is_err());
    }

    #[test]
    fn plot_vector_mean() {
        let t = EmbeddingTable::parse("a 1 0\nb 0 1").unwrap();
        assert_eq!(t.plot_vector(&["a", "b", "zzz"]), Some(vec![0.5, 0.5]));
        assert_eq!(t.plot_vector(&["a", "a", "a"]), Some(vec![1.0, 0.0]));
        assert_eq!(t.plot_vector(&["zzz"]), None);
        assert_eq!(t.plot_vector::<&str>(&[]), None);
    }

    #[test]
    fn nearest_basics() {
        let t = EmbeddingTable::parse("a 1 0\nb 1 0\nc 0 1\nz 0 0").unwrap();
        let n = t.nearest_words("a", 10).unwrap();
        assert_eq!(n.len(), 2);
        assert_eq!(n[0].0, "b");
        assert!(n[0].1.abs() < 1e-15);
        assert_eq!(n[1], ("c".to_string(), 1.0));
        assert!(t.nearest_words("missing", 1).is_err());
        assert!(t.nearest_words("z", 1).is_err());
    }

    #[test]
    fn nearest_ties_lexicographic() {
        let t = EmbeddingTable::parse("q 1 0\nm 0 1\nd 0 2\nk 0 -1").unwrap();
        let n = t.nearest_words("q", 2).unwrap();
        assert_eq!(
            n.iter().map(|x| x.0.as_str()).collect::<Vec<_>>(),
            vec!["d", "k"]
        );
    }

    fn arb_table() -> impl Strategy<Value = EmbeddingTable> {
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..15).prop_map(|rows| {
            EmbeddingTable::from_rows(
                rows.into_iter()
                    .enumerate()
                    .map(|(i, v)| (format!("w{i}"), v))
                    .collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn nearest_scale_invariant(t in arb_table(), scale in 0.01f64..100.0) {
            prop_assume!(norm(t.get("w0").unwrap()) > 1e-6);
            let scaled = EmbeddingTable::from_rows(
                t.tokens.iter().map(|w| (w.clone(), t.get(w).unwrap().iter().map(|x| x * scale).collect())).collect(),
            ).unwrap();
            let a: Vec<String> = t.nearest_words("w0", 5).unwrap().into_iter().map(|x| x.0).collect();
            let b: Vec<String> = scaled.nearest_words("w0", 5).unwrap().into_iter().map(|x| x.0).collect();
            prop_assert!(a.iter().all(|w| w != "w0"));
            // Near-ties can reorder under rounding; compare as sets of distances.
            let da: Vec<f64> = t.nearest_words("w0", 5).unwrap().into_iter().map(|x| x.1).collect();
            let db: Vec<f64> = scaled.nearest_words("w0", 5).unwrap().into_iter().map(|x| x.1).collect();
            for (x, y) in da.iter().zip(&db) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            prop_assert_eq!(a.len(), b.len());
        }

        #[test]
        fn plot_vector_permutation(t in arb_table(), idx in prop::collection::vec(0usize..15, 1..10)) {
            let toks: Vec<String> = idx.iter().map(|i| format!("w{i}")).collect();
            let mut rev = toks.clone();
            rev.reverse();
            match (t.plot_vector(&toks), t.plot_vector(&rev)) {
                (Some(a), Some(b)) => for (x, y) in a.iter().zip(&b) { prop_assert!((x - y).abs() < 1e-12) },
                (None, None) => {}
                _ => prop_assert!(false),
            }
        }
    }
}
