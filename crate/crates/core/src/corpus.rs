//! Forum data model and corpus ingestion.
//!
//! A corpus is a strict tree: forums contain boards, boards contain threads,
//! threads contain posts. Dumps arrive either as JSON-lines (one record per
//! entity, tagged by a `kind` field) or as a CSV bundle (one file per entity
//! in a directory). Unresolved parent references are collected as warnings
//! rather than silently dropped; too many of them abort the load.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no records in {0}")]
    NoRecords(String),
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{count} dangling references exceed the configured threshold {max}; first: {first}")]
    TooManyDangling {
        count: usize,
        max: usize,
        first: String,
    },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: String },
}

/// Input serialization of a dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    /// One JSON object per line, tagged by a `kind` field.
    Jsonl,
    /// A directory holding forums.csv, boards.csv, threads.csv, posts.csv.
    Csv,
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format {other:?} (expected jsonl or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Forum {
    pub forum_id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Board {
    pub board_id: String,
    pub forum_id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thread {
    pub thread_id: String,
    pub board_id: String,
    pub title: Option<String>,
    /// Post ids ordered by (created_at, post_id); populated during linking.
    #[serde(default)]
    pub post_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub thread_id: String,
    pub author: Option<String>,
    pub created_at: DateTime<Utc>,
    pub body: Option<String>,
}

/// An unresolved parent reference found while linking the hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DanglingRef {
    pub kind: String,
    pub id: String,
    pub missing_parent: String,
}

impl fmt::Display for DanglingRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} references missing parent {}", self.kind, self.id, self.missing_parent)
    }
}

/// A fully linked, immutable forum corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    forums: BTreeMap<String, Forum>,
    boards: BTreeMap<String, Board>,
    threads: BTreeMap<String, Thread>,
    posts: BTreeMap<String, Post>,
    warnings: Vec<DanglingRef>,
}

impl Corpus {
    pub fn forums(&self) -> impl Iterator<Item = &Forum> {
        self.forums.values()
    }

    pub fn boards(&self) -> impl Iterator<Item = &Board> {
        self.boards.values()
    }

    /// Threads in ascending thread_id order.
    pub fn threads(&self) -> impl Iterator<Item = &Thread> {
        self.threads.values()
    }

    pub fn posts(&self) -> impl Iterator<Item = &Post> {
        self.posts.values()
    }

    pub fn forum(&self, id: &str) -> Option<&Forum> {
        self.forums.get(id)
    }

    pub fn board(&self, id: &str) -> Option<&Board> {
        self.boards.get(id)
    }

    pub fn thread(&self, id: &str) -> Option<&Thread> {
        self.threads.get(id)
    }

    pub fn post(&self, id: &str) -> Option<&Post> {
        self.posts.get(id)
    }

    /// Posts of a thread in their canonical (created_at, post_id) order.
    pub fn thread_posts(&self, thread: &Thread) -> Vec<&Post> {
        thread.post_ids.iter().filter_map(|id| self.posts.get(id)).collect()
    }

    /// Dangling-reference warnings collected during linking.
    pub fn warnings(&self) -> &[DanglingRef] {
        &self.warnings
    }

    pub fn num_forums(&self) -> usize {
        self.forums.len()
    }

    pub fn num_boards(&self) -> usize {
        self.boards.len()
    }

    pub fn num_threads(&self) -> usize {
        self.threads.len()
    }

    pub fn num_posts(&self) -> usize {
        self.posts.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub format: CorpusFormat,
    /// Abort the load when more than this many dangling references are found.
    pub max_dangling: usize,
}

impl LoadOptions {
    pub fn new(format: CorpusFormat) -> Self {
        LoadOptions { format, max_dangling: 100 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Record {
    Forum {
        forum_id: String,
        name: String,
    },
    Board {
        board_id: String,
        forum_id: String,
        name: String,
    },
    Thread {
        thread_id: String,
        board_id: String,
        title: Option<String>,
    },
    Post {
        post_id: String,
        thread_id: String,
        author: Option<String>,
        created_at: DateTime<Utc>,
        body: Option<String>,
    },
}

/// Load a dump and link the hierarchy.
pub fn load_corpus(path: &Path, opts: &LoadOptions) -> Result<Corpus, CorpusError> {
    let records = match opts.format {
        CorpusFormat::Jsonl => read_jsonl(path)?,
        CorpusFormat::Csv => read_csv_bundle(path)?,
    };
    if records.is_empty() {
        return Err(CorpusError::NoRecords(path.display().to_string()));
    }
    link(records, opts)
}

fn read_jsonl(path: &Path) -> Result<Vec<Record>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

fn read_csv_bundle(dir: &Path) -> Result<Vec<Record>, CorpusError> {
    let mut records = Vec::new();
    read_csv_file(&dir.join("forums.csv"), &mut records, parse_forum_row)?;
    read_csv_file(&dir.join("boards.csv"), &mut records, parse_board_row)?;
    read_csv_file(&dir.join("threads.csv"), &mut records, parse_thread_row)?;
    read_csv_file(&dir.join("posts.csv"), &mut records, parse_post_row)?;
    Ok(records)
}

fn read_csv_file(
    path: &Path,
    out: &mut Vec<Record>,
    parse: fn(&csv::StringRecord) -> Result<Record, String>,
) -> Result<(), CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    for result in reader.records() {
        let row = result.map_err(|e| CorpusError::Malformed {
            path: path.display().to_string(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let record = parse(&row).map_err(|message| CorpusError::Malformed {
            path: path.display().to_string(),
            line,
            message,
        })?;
        out.push(record);
    }
    Ok(())
}

fn field<'a>(row: &'a csv::StringRecord, idx: usize, name: &str) -> Result<&'a str, String> {
    row.get(idx).ok_or_else(|| format!("missing column {name}"))
}

fn optional(value: &str) -> Option<String> {
    if value.is_empty() {
        None
    } else {
        Some(value.to_string())
    }
}

fn parse_forum_row(row: &csv::StringRecord) -> Result<Record, String> {
    Ok(Record::Forum {
        forum_id: field(row, 0, "forum_id")?.to_string(),
        name: field(row, 1, "name")?.to_string(),
    })
}

fn parse_board_row(row: &csv::StringRecord) -> Result<Record, String> {
    Ok(Record::Board {
        board_id: field(row, 0, "board_id")?.to_string(),
        forum_id: field(row, 1, "forum_id")?.to_string(),
        name: field(row, 2, "name")?.to_string(),
    })
}

fn parse_thread_row(row: &csv::StringRecord) -> Result<Record, String> {
    Ok(Record::Thread {
        thread_id: field(row, 0, "thread_id")?.to_string(),
        board_id: field(row, 1, "board_id")?.to_string(),
        title: optional(field(row, 2, "title")?),
    })
}

fn parse_post_row(row: &csv::StringRecord) -> Result<Record, String> {
    let created_at = field(row, 3, "created_at")?
        .parse::<DateTime<Utc>>()
        .map_err(|e| format!("bad created_at: {e}"))?;
    Ok(Record::Post {
        post_id: field(row, 0, "post_id")?.to_string(),
        thread_id: field(row, 1, "thread_id")?.to_string(),
        author: optional(field(row, 2, "author")?),
        created_at,
        body: optional(field(row, 4, "body")?),
    })
}

fn link(records: Vec<Record>, opts: &LoadOptions) -> Result<Corpus, CorpusError> {
    let mut forums = BTreeMap::new();
    let mut boards = BTreeMap::new();
    let mut threads = BTreeMap::new();
    let mut posts = BTreeMap::new();

    for record in records {
        match record {
            Record::Forum { forum_id, name } => {
                if forums
                    .insert(forum_id.clone(), Forum { forum_id: forum_id.clone(), name })
                    .is_some()
                {
                    return Err(CorpusError::DuplicateId { kind: "forum", id: forum_id });
                }
            }
            Record::Board { board_id, forum_id, name } => {
                if boards
                    .insert(
                        board_id.clone(),
                        Board { board_id: board_id.clone(), forum_id, name },
                    )
                    .is_some()
                {
                    return Err(CorpusError::DuplicateId { kind: "board", id: board_id });
                }
            }
            Record::Thread { thread_id, board_id, title } => {
                if threads
                    .insert(
                        thread_id.clone(),
                        Thread {
                            thread_id: thread_id.clone(),
                            board_id,
                            title,
                            post_ids: Vec::new(),
                        },
                    )
                    .is_some()
                {
                    return Err(CorpusError::DuplicateId { kind: "thread", id: thread_id });
                }
            }
            Record::Post { post_id, thread_id, author, created_at, body } => {
                if posts
                    .insert(
                        post_id.clone(),
                        Post { post_id: post_id.clone(), thread_id, author, created_at, body },
                    )
                    .is_some()
                {
                    return Err(CorpusError::DuplicateId { kind: "post", id: post_id });
                }
            }
        }
    }

    let mut warnings = Vec::new();
    for board in boards.values() {
        if !forums.contains_key(&board.forum_id) {
            warnings.push(DanglingRef {
                kind: "board".into(),
                id: board.board_id.clone(),
                missing_parent: board.forum_id.clone(),
            });
        }
    }
    for thread in threads.values() {
        if !boards.contains_key(&thread.board_id) {
            warnings.push(DanglingRef {
                kind: "thread".into(),
                id: thread.thread_id.clone(),
                missing_parent: thread.board_id.clone(),
            });
        }
    }

    // Attach posts to threads in (created_at, post_id) order.
    let mut by_thread: BTreeMap<String, Vec<(DateTime<Utc>, String)>> = BTreeMap::new();
    for post in posts.values() {
        if threads.contains_key(&post.thread_id) {
            by_thread
                .entry(post.thread_id.clone())
                .or_default()
                .push((post.created_at, post.post_id.clone()));
        } else {
            warnings.push(DanglingRef {
                kind: "post".into(),
                id: post.post_id.clone(),
                missing_parent: post.thread_id.clone(),
            });
        }
    }
    for (thread_id, mut keyed) in by_thread {
        keyed.sort();
        let thread = threads.get_mut(&thread_id).expect("keys come from the map");
        thread.post_ids = keyed.into_iter().map(|(_, id)| id).collect();
    }

    if warnings.len() > opts.max_dangling {
        return Err(CorpusError::TooManyDangling {
            count: warnings.len(),
            max: opts.max_dangling,
            first: warnings[0].to_string(),
        });
    }

    Ok(Corpus { forums, boards, threads, posts, warnings })
}

/// Per-forum counters for the statistics table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForumStats {
    pub forum_id: String,
    pub name: String,
    pub users: u64,
    pub boards: u64,
    pub threads: u64,
    pub posts: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Anomalies {
    pub null_titles: u64,
    pub empty_posts: u64,
    pub null_authors: u64,
}

/// Corpus statistics: per-forum rows ranked by thread count, plus totals and
/// data-quality anomaly counters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    /// Sorted descending by thread count, ties broken by forum_id.
    pub per_forum: Vec<ForumStats>,
    /// Field-wise sums of the per-forum rows.
    pub totals: ForumStats,
    pub anomalies: Anomalies,
}

/// Compute corpus statistics. Users are counted as distinct non-null authors
/// per forum; entities with unresolved parents are not attributable to any
/// forum and are excluded (they are reported by `Corpus::warnings`).
pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    struct Acc<'a> {
        name: &'a str,
        users: BTreeSet<&'a str>,
        boards: u64,
        threads: u64,
        posts: u64,
    }

    let mut acc: BTreeMap<&str, Acc<'_>> = corpus
        .forums()
        .map(|f| {
            (
                f.forum_id.as_str(),
                Acc { name: &f.name, users: BTreeSet::new(), boards: 0, threads: 0, posts: 0 },
            )
        })
        .collect();

    let mut board_forum: BTreeMap<&str, &str> = BTreeMap::new();
    for board in corpus.boards() {
        if let Some(a) = acc.get_mut(board.forum_id.as_str()) {
            a.boards += 1;
            board_forum.insert(&board.board_id, &board.forum_id);
        }
    }
    let mut thread_forum: BTreeMap<&str, &str> = BTreeMap::new();
    for thread in corpus.threads() {
        if let Some(forum_id) = board_forum.get(thread.board_id.as_str()) {
            thread_forum.insert(&thread.thread_id, forum_id);
            acc.get_mut(forum_id).expect("forum exists").threads += 1;
        }
    }

    let mut anomalies = Anomalies::default();
    for thread in corpus.threads() {
        if thread.title.is_none() {
            anomalies.null_titles += 1;
        }
    }
    for post in corpus.posts() {
        match &post.body {
            None => anomalies.empty_posts += 1,
            Some(b) if b.trim().is_empty() => anomalies.empty_posts += 1,
            Some(_) => {}
        }
        if post.author.is_none() {
            anomalies.null_authors += 1;
        }
        if let Some(forum_id) = thread_forum.get(post.thread_id.as_str()) {
            let a = acc.get_mut(forum_id).expect("forum exists");
            a.posts += 1;
            if let Some(author) = &post.author {
                a.users.insert(author);
            }
        }
    }

    let mut per_forum: Vec<ForumStats> = acc
        .into_iter()
        .map(|(forum_id, a)| ForumStats {
            forum_id: forum_id.to_string(),
            name: a.name.to_string(),
            users: a.users.len() as u64,
            boards: a.boards,
            threads: a.threads,
            posts: a.posts,
        })
        .collect();
    per_forum.sort_by(|x, y| y.threads.cmp(&x.threads).then_with(|| x.forum_id.cmp(&y.forum_id)));

    let totals = ForumStats {
        forum_id: "total".into(),
        name: "total".into(),
        users: per_forum.iter().map(|f| f.users).sum(),
        boards: per_forum.iter().map(|f| f.boards).sum(),
        threads: per_forum.iter().map(|f| f.threads).sum(),
        posts: per_forum.iter().map(|f| f.posts).sum(),
    };

    CorpusStats { per_forum, totals, anomalies }
}

/// Load and link a JSON-lines dump from an arbitrary reader; `label` stands
/// in for the path in error messages.
pub fn load_corpus_from_reader<R: Read>(
    reader: R,
    opts: &LoadOptions,
    label: &str,
) -> Result<Corpus, CorpusError> {
    let buf = BufReader::new(reader);
    let mut records = Vec::new();
    for (idx, line) in buf.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io { path: label.to_string(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: label.to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(CorpusError::NoRecords(label.to_string()));
    }
    link(records, opts)
}
