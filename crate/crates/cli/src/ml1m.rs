//! Converter for the MovieLens-1M release layout into the toolkit's input
//! schemas. The raw `users.dat` carries gender between the id and the age
//! code, and the age itself is a bucket code; this stage rewrites it to the
//! plain `user_id, age` schema and emits the 18-genre vocabulary. The
//! ratings and movies files already conform (`::`-separated, genres in the
//! last field) and are normalized to tab-separated copies alongside.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::Context;

/// The 18 MovieLens-1M genre labels, in release order.
pub const ML1M_GENRES: [&str; 18] = [
    "Action",
    "Adventure",
    "Animation",
    "Children's",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "Film-Noir",
    "Horror",
    "Musical",
    "Mystery",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "War",
    "Western",
];

/// Representative ages for the release's seven age-bucket codes. The
/// under-18 bucket maps to 15 so it lands inside the audited 12-65 range;
/// the remaining codes already name the bucket's lower bound.
pub const ML1M_AGE_CODES: [(u32, u32); 7] = [
    (1, 15),
    (18, 18),
    (25, 25),
    (35, 35),
    (45, 45),
    (50, 50),
    (56, 56),
];

fn read_latin1_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    let bytes =
        std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    // The release is ISO-8859-1; ids and genres are ASCII, titles are not.
    let text: String = bytes.iter().map(|&b| b as char).collect();
    Ok(text.lines().map(str::to_string).collect())
}

/// Converts an `ml-1m` release directory into ready-to-ingest files:
/// `events.tsv`, `users.tsv`, `genres.tsv`, `vocabulary.txt`.
pub fn prepare_ml1m(source: &Path, dest: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dest)?;

    // users.dat: UserID::Gender::Age::Occupation::Zip -> user_id, age.
    let mut users_out = BufWriter::new(File::create(dest.join("users.tsv"))?);
    let mut converted = 0u64;
    for line in read_latin1_lines(&source.join("users.dat"))? {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        anyhow::ensure!(fields.len() >= 3, "malformed users.dat row: '{line}'");
        let code: u32 = fields[2]
            .parse()
            .with_context(|| format!("bad age code in '{line}'"))?;
        let age = ML1M_AGE_CODES
            .iter()
            .find(|(c, _)| *c == code)
            .map(|(_, age)| *age)
            .with_context(|| format!("unknown age code {code}"))?;
        writeln!(users_out, "{}\t{}", fields[0], age)?;
        converted += 1;
    }
    users_out.flush()?;

    // ratings.dat: UserID::MovieID::Rating::Timestamp -> tab-separated.
    let ratings = File::open(source.join("ratings.dat"))
        .with_context(|| format!("cannot open {}", source.join("ratings.dat").display()))?;
    let mut events_out = BufWriter::new(File::create(dest.join("events.tsv"))?);
    let mut n_events = 0u64;
    for line in BufReader::new(ratings).lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        anyhow::ensure!(fields.len() == 4, "malformed ratings.dat row: '{line}'");
        writeln!(
            events_out,
            "{}\t{}\t{}\t{}",
            fields[0], fields[1], fields[2], fields[3]
        )?;
        n_events += 1;
    }
    events_out.flush()?;

    // movies.dat: MovieID::Title::Genre|Genre -> item_id, genres.
    let mut genres_out = BufWriter::new(File::create(dest.join("genres.tsv"))?);
    let mut n_items = 0u64;
    for line in read_latin1_lines(&source.join("movies.dat"))? {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        anyhow::ensure!(fields.len() >= 3, "malformed movies.dat row: '{line}'");
        writeln!(genres_out, "{}\t{}", fields[0], fields[fields.len() - 1])?;
        n_items += 1;
    }
    genres_out.flush()?;

    let mut vocab_out = BufWriter::new(File::create(dest.join("vocabulary.txt"))?);
    for genre in ML1M_GENRES {
        writeln!(vocab_out, "{genre}")?;
    }
    vocab_out.flush()?;

    println!(
        "prepare-ml1m: {converted} users, {n_items} movies, {n_events} ratings -> {}",
        dest.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converts_the_release_layout() {
        let tmp = tempfile::TempDir::new().unwrap();
        let src = tmp.path().join("ml-1m");
        std::fs::create_dir_all(&src).unwrap();
        std::fs::write(src.join("users.dat"), "1::F::1::10::48067\n2::M::56::16::70072\n").unwrap();
        std::fs::write(
            src.join("ratings.dat"),
            "1::1193::5::978300760\n2::1193::4::978298413\n",
        )
        .unwrap();
        std::fs::write(
            src.join("movies.dat"),
            "1193::One Flew Over the Cuckoo's Nest (1975)::Drama\n",
        )
        .unwrap();
        let dest = tmp.path().join("prepared");
        prepare_ml1m(&src, &dest).unwrap();
        let users = std::fs::read_to_string(dest.join("users.tsv")).unwrap();
        assert_eq!(users, "1\t15\n2\t56\n");
        let genres = std::fs::read_to_string(dest.join("genres.tsv")).unwrap();
        assert_eq!(genres, "1193\tDrama\n");
        let vocab = std::fs::read_to_string(dest.join("vocabulary.txt")).unwrap();
        assert_eq!(vocab.lines().count(), 18);
    }
}
