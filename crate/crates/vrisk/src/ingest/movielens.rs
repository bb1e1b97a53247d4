//! MovieLens-style loader: each sufficiently active user becomes one
//! instance, genres become intents, and per-intent relevance is the
//! rating split across the item's genres so that marginalizing over the
//! user's genre distribution recovers the raw rating exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use crate::error::Error;
use crate::instance::{IntentDistribution, QueryInstance, RelevanceTable};

/// MovieLens marker for items without genre labels.
const NO_GENRES: &str = "(no genres listed)";

#[derive(Debug, Clone, Copy)]
pub struct MovieLensOptions {
    /// Keep users with strictly more than this many ratings.
    pub min_ratings: usize,
}

impl Default for MovieLensOptions {
    fn default() -> Self {
        Self { min_ratings: 200 }
    }
}

#[derive(Debug, Clone)]
pub struct RatingRow {
    pub user: String,
    pub item: String,
    pub rating: f64,
}

#[derive(Debug, Clone)]
pub struct MovieRow {
    pub item: String,
    pub title: String,
    pub genres: Vec<String>,
}

/// Parses `user,item,rating,timestamp` rows (header required).
pub fn parse_movielens_ratings(input: &str) -> Result<Vec<RatingRow>, Error> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input.as_bytes());
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: idx + 2,
            message: e.to_string(),
        })?;
        if record.len() < 3 {
            return Err(Error::Parse {
                line: idx + 2,
                message: format!("expected at least 3 columns, got {}", record.len()),
            });
        }
        let rating: f64 = record[2].parse().map_err(|_| Error::Parse {
            line: idx + 2,
            message: format!("non-numeric rating {}", &record[2]),
        })?;
        if !rating.is_finite() || rating < 0.0 {
            return Err(Error::Parse {
                line: idx + 2,
                message: format!("invalid rating {rating}"),
            });
        }
        rows.push(RatingRow {
            user: record[0].to_string(),
            item: record[1].to_string(),
            rating,
        });
    }
    Ok(rows)
}

/// Parses `item,title,genres` rows with pipe-separated genres (header
/// required). The "(no genres listed)" marker maps to an empty set.
pub fn parse_movielens_movies(input: &str) -> Result<Vec<MovieRow>, Error> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input.as_bytes());
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: idx + 2,
            message: e.to_string(),
        })?;
        if record.len() < 3 {
            return Err(Error::Parse {
                line: idx + 2,
                message: format!("expected 3 columns, got {}", record.len()),
            });
        }
        let genres: Vec<String> = if record[2].is_empty() || &record[2] == NO_GENRES {
            Vec::new()
        } else {
            record[2].split('|').map(|g| g.to_string()).collect()
        };
        rows.push(MovieRow {
            item: record[0].to_string(),
            title: record[1].to_string(),
            genres,
        });
    }
    Ok(rows)
}

/// Builds one instance per kept user.
///
/// The user's intent distribution comes from their rating history: each
/// rating contributes `1/|genres(item)|` to each of its item's genres,
/// normalized over all contributions. Per-intent relevance allocates the
/// rating as `rating / sum of the item's genre probabilities`, so the
/// intent-marginalized relevance equals the raw rating. Items with zero
/// genre mass (no genres, or no metadata) are dropped from the user's
/// candidates.
pub fn build_movielens(
    ratings: &[RatingRow],
    movies: &[MovieRow],
    opts: &MovieLensOptions,
) -> Result<Vec<QueryInstance>, Error> {
    if opts.min_ratings == 0 {
        return Err(Error::InvalidConfig(
            "min_ratings must be at least 1".to_string(),
        ));
    }
    let by_item: BTreeMap<&str, &MovieRow> =
        movies.iter().map(|m| (m.item.as_str(), m)).collect();

    // user -> item -> max rating (duplicates merge by max)
    let mut by_user: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for row in ratings {
        let slot = by_user
            .entry(row.user.as_str())
            .or_default()
            .entry(row.item.as_str())
            .or_insert(0.0);
        *slot = slot.max(row.rating);
    }

    let mut instances = Vec::new();
    for (user, items) in by_user {
        if items.len() <= opts.min_ratings {
            continue;
        }
        // Fractional genre attribution: 1/|genres| per rating event.
        let mut genre_mass: BTreeMap<&str, f64> = BTreeMap::new();
        let mut total_mass = 0.0f64;
        for item in items.keys() {
            if let Some(movie) = by_item.get(item) {
                if movie.genres.is_empty() {
                    continue;
                }
                let share = 1.0 / movie.genres.len() as f64;
                for genre in &movie.genres {
                    *genre_mass.entry(genre.as_str()).or_insert(0.0) += share;
                    total_mass += share;
                }
            }
        }
        if total_mass <= 0.0 {
            return Err(Error::Dataset(format!(
                "user {user} has zero genre mass"
            )));
        }
        let genres: Vec<String> = genre_mass.keys().map(|g| g.to_string()).collect();
        let probs: Vec<f64> = genre_mass.values().map(|m| m / total_mass).collect();
        let genre_index: BTreeMap<&str, usize> = genres
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_str(), i))
            .collect();

        let mut doc_ids = Vec::new();
        let mut rows = Vec::new();
        let mut texts = Vec::new();
        let mut rel_max = 0.0f64;
        for (item, &rating) in &items {
            let Some(movie) = by_item.get(item) else {
                continue;
            };
            if movie.genres.is_empty() {
                continue;
            }
            let item_mass: f64 = movie
                .genres
                .iter()
                .map(|g| probs[genre_index[g.as_str()]])
                .sum();
            if item_mass <= 0.0 {
                continue;
            }
            let allocated = rating / item_mass;
            let mut row = vec![0.0f64; genres.len()];
            for genre in &movie.genres {
                row[genre_index[genre.as_str()]] = allocated;
            }
            rel_max = rel_max.max(allocated);
            doc_ids.push(item.to_string());
            rows.push(row);
            texts.push(format!("{} {}", movie.title, movie.genres.join(" ")));
        }
        if doc_ids.is_empty() || rel_max <= 0.0 {
            return Err(Error::Dataset(format!(
                "user {user} has no usable rated items"
            )));
        }
        let dist = IntentDistribution::new(genres, probs).map_err(|e| e.for_query(user))?;
        let rel =
            RelevanceTable::new(doc_ids, rows, rel_max).map_err(|e| e.for_query(user))?;
        instances.push(
            QueryInstance::new(user, dist, rel, Some(texts)).map_err(|e| e.for_query(user))?,
        );
    }
    instances.sort_by(|a, b| a.query_id().cmp(b.query_id()));
    Ok(instances)
}

/// Loads ratings and movies files and builds per-user instances.
pub fn load_movielens(
    ratings_path: &Path,
    movies_path: &Path,
    opts: &MovieLensOptions,
) -> Result<Vec<QueryInstance>, Error> {
    let ratings = parse_movielens_ratings(&read(ratings_path)?)?;
    let movies = parse_movielens_movies(&read(movies_path)?)?;
    build_movielens(&ratings, &movies, opts)
}

fn read(path: &Path) -> Result<String, Error> {
    use std::io::Read;
    let mut buf = String::new();
    File::open(path)?.read_to_string(&mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rating(user: &str, item: &str, rating: f64) -> RatingRow {
        RatingRow {
            user: user.into(),
            item: item.into(),
            rating,
        }
    }

    fn movie(item: &str, title: &str, genres: &[&str]) -> MovieRow {
        MovieRow {
            item: item.into(),
            title: title.into(),
            genres: genres.iter().map(|g| g.to_string()).collect(),
        }
    }

    fn opts(min_ratings: usize) -> MovieLensOptions {
        MovieLensOptions { min_ratings }
    }

    #[test]
    fn rating_allocation_matches_hand_computation() {
        // Two genres with equal history mass; a two-genre item rated 4
        // allocates 4 / (0.5 + 0.5) = 4 to each of its genres.
        let ratings = vec![
            rating("u", "m1", 4.0),
            rating("u", "m2", 2.0),
            rating("u", "m3", 1.0),
        ];
        let movies = vec![
            movie("m1", "Both", &["A", "B"]),
            movie("m2", "OnlyA", &["A"]),
            movie("m3", "OnlyB", &["B"]),
        ];
        let instances = build_movielens(&ratings, &movies, &opts(2)).unwrap();
        assert_eq!(instances.len(), 1);
        let inst = &instances[0];
        assert_eq!(inst.intents().probs(), &[0.5, 0.5]);
        let m1 = inst.doc_index("m1").unwrap();
        assert!((inst.grade(m1, 0) - 4.0).abs() < 1e-12);
        assert!((inst.grade(m1, 1) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_genre_item_satisfies_consistency_identity() {
        let ratings = vec![
            rating("u", "m1", 3.0),
            rating("u", "m2", 5.0),
            rating("u", "m3", 1.0),
        ];
        let movies = vec![
            movie("m1", "A1", &["A"]),
            movie("m2", "A2", &["A"]),
            movie("m3", "B1", &["B"]),
        ];
        let instances = build_movielens(&ratings, &movies, &opts(2)).unwrap();
        let inst = &instances[0];
        // rel = rating / p, so p * rel recovers the rating.
        for (item, rating) in [("m1", 3.0), ("m2", 5.0), ("m3", 1.0)] {
            let d = inst.doc_index(item).unwrap();
            assert!((inst.raw_relevance_at(d) - rating).abs() < 1e-9);
        }
    }

    #[test]
    fn genreless_items_are_dropped() {
        let ratings = vec![
            rating("u", "m1", 4.0),
            rating("u", "m2", 3.0),
            rating("u", "m3", 2.0),
        ];
        let movies = vec![
            movie("m1", "Tagged", &["A"]),
            movie("m2", "Untagged", &[]),
            movie("m3", "AlsoTagged", &["A"]),
        ];
        let instances = build_movielens(&ratings, &movies, &opts(2)).unwrap();
        let inst = &instances[0];
        assert!(inst.doc_index("m2").is_none());
        assert_eq!(inst.n_docs(), 2);
    }

    #[test]
    fn min_ratings_filters_users() {
        let ratings = vec![
            rating("keep", "m1", 4.0),
            rating("keep", "m2", 3.0),
            rating("keep", "m3", 2.0),
            rating("drop", "m1", 4.0),
        ];
        let movies = vec![
            movie("m1", "A", &["A"]),
            movie("m2", "B", &["A"]),
            movie("m3", "C", &["A"]),
        ];
        let instances = build_movielens(&ratings, &movies, &opts(2)).unwrap();
        assert_eq!(instances.len(), 1);
        assert_eq!(instances[0].query_id(), "keep");
    }

    #[test]
    fn zero_genre_mass_user_is_an_error() {
        let ratings = vec![rating("u", "m1", 4.0), rating("u", "m2", 3.0)];
        let movies = vec![movie("m1", "X", &[]), movie("m2", "Y", &[])];
        let err = build_movielens(&ratings, &movies, &opts(1)).unwrap_err();
        assert!(err.to_string().contains("zero genre mass"));
    }

    #[test]
    fn csv_parsers_handle_quoted_titles_and_report_errors() {
        let movies = parse_movielens_movies(
            "movieId,title,genres\n1,\"Comma, The (1995)\",Comedy|Drama\n2,Plain,(no genres listed)\n",
        )
        .unwrap();
        assert_eq!(movies[0].title, "Comma, The (1995)");
        assert_eq!(movies[0].genres, vec!["Comedy", "Drama"]);
        assert!(movies[1].genres.is_empty());

        let err =
            parse_movielens_ratings("userId,movieId,rating,timestamp\n1,2,high,0\n").unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("non-numeric rating"));
            }
            other => panic!("unexpected {other}"),
        }
    }
}
