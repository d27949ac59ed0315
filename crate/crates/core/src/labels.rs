//! The fixed genre universe, genre sets and per-movie score vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const N_GENRES: usize = 20;

/// Genre names in index order.
pub const GENRE_NAMES: [&str; N_GENRES] = [
    "drama",
    "comedy",
    "thriller",
    "romance",
    "action",
    "family",
    "horror",
    "crime",
    "adventure",
    "animation",
    "fantasy",
    "sci-fi",
    "mystery",
    "biography",
    "music",
    "history",
    "war",
    "western",
    "sport",
    "musical",
];

/// One of the 20 genres, identified by its index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Genre(u8);

impl Genre {
    pub fn from_index(index: usize) -> Option<Genre> {
        (index < N_GENRES).then_some(Genre(index as u8))
    }

    pub fn from_name(name: &str) -> Option<Genre> {
        GENRE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| Genre(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        GENRE_NAMES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = Genre> {
        (0..N_GENRES as u8).map(Genre)
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Genre {
    type Err = Error;

    fn from_str(s: &str) -> Result<Genre> {
        Genre::from_name(s).ok_or_else(|| Error::validation(format!("unknown genre `{s}`")))
    }
}

impl Serialize for Genre {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Genre {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Genre, D::Error> {
        let name = String::deserialize(d)?;
        Genre::from_name(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown genre `{name}`")))
    }
}

/// A subset of the genre universe stored as a 20-bit mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GenreSet(u32);

impl GenreSet {
    const FULL_MASK: u32 = (1 << N_GENRES) - 1;

    pub fn empty() -> GenreSet {
        GenreSet(0)
    }

    pub fn full() -> GenreSet {
        GenreSet(Self::FULL_MASK)
    }

    pub fn from_mask(mask: u32) -> Option<GenreSet> {
        (mask & !Self::FULL_MASK == 0).then_some(GenreSet(mask))
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn insert(&mut self, g: Genre) {
        self.0 |= 1 << g.index();
    }

    pub fn remove(&mut self, g: Genre) {
        self.0 &= !(1 << g.index());
    }

    pub fn contains(self, g: Genre) -> bool {
        self.0 & (1 << g.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_full(self) -> bool {
        self.0 == Self::FULL_MASK
    }

    pub fn intersection(self, other: GenreSet) -> GenreSet {
        GenreSet(self.0 & other.0)
    }

    pub fn union(self, other: GenreSet) -> GenreSet {
        GenreSet(self.0 | other.0)
    }

    pub fn complement(self) -> GenreSet {
        GenreSet(!self.0 & Self::FULL_MASK)
    }

    /// Members in index order.
    pub fn iter(self) -> impl Iterator<Item = Genre> {
        Genre::all().filter(move |g| self.contains(*g))
    }

    pub fn names(self) -> Vec<&'static str> {
        self.iter().map(Genre::name).collect()
    }

    /// 0/1 membership indicator per genre.
    pub fn indicator(self) -> [f64; N_GENRES] {
        let mut out = [0.0; N_GENRES];
        for g in self.iter() {
            out[g.index()] = 1.0;
        }
        out
    }
}

impl FromIterator<Genre> for GenreSet {
    fn from_iter<I: IntoIterator<Item = Genre>>(iter: I) -> Self {
        let mut set = GenreSet::empty();
        for g in iter {
            set.insert(g);
        }
        set
    }
}

impl fmt::Display for GenreSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.names().join(", "))
    }
}

impl Serialize for GenreSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.names().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GenreSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<GenreSet, D::Error> {
        let genres = Vec::<Genre>::deserialize(d)?;
        Ok(genres.into_iter().collect())
    }
}

/// What the 20 values of a [`ScoreVector`] mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// A categorical distribution: nonnegative, sums to 1.
    Probability,
    /// Independent per-genre probabilities in (0, 1).
    Sigmoid,
    /// Unbounded rank values; only their order matters.
    Rank,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub values: [f64; N_GENRES],
    pub kind: ScoreKind,
}

impl ScoreVector {
    pub fn new(values: [f64; N_GENRES], kind: ScoreKind) -> ScoreVector {
        ScoreVector { values, kind }
    }

    pub fn get(&self, g: Genre) -> f64 {
        self.values[g.index()]
    }

    /// Checks the value constraints implied by `kind`.
    pub fn validate(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("score vector has non-finite values"));
        }
        match self.kind {
            ScoreKind::Probability => {
                let sum: f64 = self.values.iter().sum();
                if self.values.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::validation(format!(
                        "probability scores must be nonnegative and sum to 1 (sum {sum})"
                    )));
                }
            }
            ScoreKind::Sigmoid => {
                if self.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::validation("sigmoid scores must lie in [0, 1]"));
                }
            }
            ScoreKind::Rank => {}
        }
        Ok(())
    }
}
