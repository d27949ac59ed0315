//! Writes the bundled synthetic corpus and a matching text embedding file.
//!
//! ```text
//! cargo run -p genretag --example make_fixture -- fixtures
//! ```
//!
//! Each genre owns a handful of cue words; a plot mixes filler with cues
//! from its genres and the occasional stray cue from another genre.

use std::fmt::Write as _;
use std::path::PathBuf;

use genretag::corpus::{write_corpus, MovieRecord};
use genretag::{Genre, GenreSet, N_GENRES};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const N_MOVIES: usize = 200;
const CUES_PER_GENRE: usize = 2;
const N_FILLER: usize = 120;
const DIM: usize = 16;

/// Relative genre popularity, roughly the shape of real catalogues.
const WEIGHTS: [f64; N_GENRES] = [
    30.0, 22.0, 10.0, 9.0, 9.0, 6.0, 6.0, 6.0, 5.0, 4.0, 4.0, 4.0, 3.0, 3.0, 3.0, 3.0, 2.0, 2.0,
    2.0, 2.0,
];

fn cue(g: Genre, i: usize) -> String {
    format!(
        "{}{}",
        g.name().replace('-', ""),
        ["", "ish", "ful", "ness", "ly", "ing"][i]
    )
}

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(20_190_101);
    let filler: Vec<String> = (0..N_FILLER).map(|i| format!("w{i:03}")).collect();
    let pick = WeightedIndex::new(WEIGHTS).expect("positive weights");

    let mut records = Vec::with_capacity(N_MOVIES);
    for m in 0..N_MOVIES {
        let n_genres = *[1usize, 1, 2, 2, 3].choose(&mut rng).expect("nonempty");
        let mut genres = GenreSet::empty();
        while genres.len() < n_genres {
            genres.insert(Genre::from_index(pick.sample(&mut rng)).expect("index"));
        }
        let len = rng.gen_range(10..30);
        let mut words: Vec<String> = (0..len)
            .map(|_| filler.choose(&mut rng).expect("nonempty").clone())
            .collect();
        for g in genres.iter() {
            for _ in 0..rng.gen_range(3..7) {
                words.push(cue(g, rng.gen_range(0..CUES_PER_GENRE)));
            }
        }
        if rng.gen_bool(0.3) {
            let stray = Genre::from_index(rng.gen_range(0..N_GENRES)).expect("index");
            words.push(cue(stray, rng.gen_range(0..CUES_PER_GENRE)));
        }
        words.shuffle(&mut rng);
        records.push(MovieRecord {
            id: format!("m{m:04}"),
            title: format!("Synthetic Movie {m}"),
            plot: words.join(" "),
            genres,
        });
    }
    write_corpus(&dir.join("mini_corpus.jsonl"), &records).map_err(std::io::Error::other)?;

    // Cue words sit near their genre's axis; filler is small noise.
    let mut emb = format!("{} {DIM}\n", N_GENRES * CUES_PER_GENRE + N_FILLER);
    let mut row = |name: &str, center: Option<usize>, rng: &mut ChaCha8Rng| {
        let mut line = name.to_owned();
        for d in 0..DIM {
            let mut v: f64 = rng.gen_range(-0.1..0.1);
            if let Some(c) = center {
                if d == c % DIM {
                    v += 1.0;
                }
                if c >= DIM && d == (c * 7) % DIM {
                    v += 0.6;
                }
            }
            let _ = write!(line, " {v:.5}");
        }
        emb.push_str(&line);
        emb.push('\n');
    };
    for g in Genre::all() {
        for i in 0..CUES_PER_GENRE {
            row(&cue(g, i), Some(g.index()), &mut rng);
        }
    }
    for w in &filler {
        row(w, None, &mut rng);
    }
    std::fs::write(dir.join("mini_embeddings.txt"), emb)
}
