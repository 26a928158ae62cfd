//! Grading records, label encoding, cross-validation plans and the
//! rule-labeled synthetic corpus.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result, RowError};
use crate::rng::SeededRng;
use crate::tokenizer::{encode, lex, EncodedStatement, Vocabulary};

/// Column order of the dataset CSV.
pub const CSV_HEADER: [&str; 6] = ["submission_id", "query_id", "submitted_answer", "is_correct", "remark", "grade"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Remark {
    Correct,
    PartiallyCorrect,
    Uninterpretable,
    Cheating,
}

impl Remark {
    /// One-hot order used by head R.
    pub const ALL: [Remark; 4] = [
        Remark::Correct,
        Remark::PartiallyCorrect,
        Remark::Uninterpretable,
        Remark::Cheating,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Remark> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Remark::Correct => "Correct",
            Remark::PartiallyCorrect => "Partially Correct",
            Remark::Uninterpretable => "Uninterpretable",
            Remark::Cheating => "Cheating",
        }
    }

    pub fn one_hot(self) -> [f64; 4] {
        let mut v = [0.0; 4];
        v[self.index()] = 1.0;
        v
    }
}

impl fmt::Display for Remark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Remark {
    type Err = Error;

    /// Case-insensitive, with runs of whitespace collapsed.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        match norm.as_str() {
            "correct" => Ok(Remark::Correct),
            "partially correct" => Ok(Remark::PartiallyCorrect),
            "uninterpretable" => Ok(Remark::Uninterpretable),
            "cheating" => Ok(Remark::Cheating),
            _ => Err(Error::Input(format!("unknown remark {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmissionRecord {
    pub submission_id: String,
    pub query_id: String,
    pub submitted_answer: String,
    pub is_correct: bool,
    pub remark: Remark,
    /// Points earned as a percentage of the points possible, in `[0, 100]`.
    pub grade_percent: f64,
}

impl SubmissionRecord {
    /// Label inconsistencies that real gradebooks contain; reported, not
    /// rejected.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.remark == Remark::Correct && !self.is_correct {
            w.push(format!("{}: remark is Correct but is_correct is false", self.submission_id));
        }
        if self.is_correct && self.grade_percent != 100.0 {
            w.push(format!(
                "{}: is_correct is true but grade is {}",
                self.submission_id, self.grade_percent
            ));
        }
        w
    }
}

/// Records read from a CSV file plus any consistency warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub records: Vec<SubmissionRecord>,
    pub warnings: Vec<String>,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

/// Reads the dataset CSV. Columns are located by header name. Every bad
/// row is collected and reported; any error fails the whole load.
pub fn read_csv<R: Read>(reader: R) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Malformed(e.to_string()))?.clone();
    let mut cols = [0usize; 6];
    let mut missing = Vec::new();
    for (slot, name) in cols.iter_mut().zip(CSV_HEADER) {
        match headers.iter().position(|h| h.trim() == name) {
            Some(i) => *slot = i,
            None => missing.push(RowError {
                line: 1,
                message: format!("missing header column {name:?}"),
            }),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Rows(missing));
    }

    let mut records = Vec::new();
    let mut errors = Vec::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(cols[i]).unwrap_or("");
        let mut problems = Vec::new();
        let is_correct = parse_bool(field(3));
        if is_correct.is_none() {
            problems.push(format!("is_correct {:?} is not one of 0, 1, true, false", field(3)));
        }
        let remark = field(4).parse::<Remark>();
        if remark.is_err() {
            problems.push(format!("unknown remark {:?}", field(4)));
        }
        let grade = match field(5).trim().parse::<f64>() {
            Ok(g) if g.is_finite() && (0.0..=100.0).contains(&g) => Some(g),
            Ok(g) => {
                problems.push(format!("grade {g} outside [0, 100]"));
                None
            }
            Err(_) => {
                problems.push(format!("grade {:?} is not a number", field(5)));
                None
            }
        };
        if problems.is_empty() {
            records.push(SubmissionRecord {
                submission_id: field(0).to_string(),
                query_id: field(1).to_string(),
                submitted_answer: field(2).to_string(),
                is_correct: is_correct.unwrap(),
                remark: remark.unwrap(),
                grade_percent: grade.unwrap(),
            });
        } else {
            errors.extend(problems.into_iter().map(|message| RowError { line, message }));
        }
    }
    if !errors.is_empty() {
        return Err(Error::Rows(errors));
    }
    let warnings = records.iter().flat_map(SubmissionRecord::warnings).collect();
    Ok(Loaded { records, warnings })
}

/// Reads `(submission_id, submitted_answer)` pairs from a CSV with at least
/// those two columns; label columns are not required.
pub fn read_answers<R: Read>(reader: R) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Malformed(e.to_string()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
            Error::Rows(vec![RowError {
                line: 1,
                message: format!("missing header column {name:?}"),
            }])
        })
    };
    let (id, answer) = (col("submission_id")?, col("submitted_answer")?);
    let mut out = Vec::new();
    let mut errors = Vec::new();
    for row in rdr.records() {
        match row {
            Ok(r) => out.push((r.get(id).unwrap_or("").to_string(), r.get(answer).unwrap_or("").to_string())),
            Err(e) => errors.push(RowError {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            }),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(Error::Rows(errors))
    }
}

pub fn load_csv(path: &Path) -> Result<Loaded> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file))
}

pub fn write_csv<W: Write>(records: &[SubmissionRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Malformed(e.to_string());
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in records {
        w.write_record([
            r.submission_id.as_str(),
            r.query_id.as_str(),
            r.submitted_answer.as_str(),
            if r.is_correct { "1" } else { "0" },
            r.remark.name(),
            &r.grade_percent.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Malformed(e.to_string()))
}

pub fn save_csv(records: &[SubmissionRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(records, std::io::BufWriter::new(file))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub submission_id: String,
    pub x: EncodedStatement,
    pub y_correct: f64,
    pub y_remark: [f64; 4],
    /// Grade as a fraction of the points possible.
    pub y_grade: f64,
}

impl LabeledExample {
    pub fn remark(&self) -> Remark {
        let i = self.y_remark.iter().position(|&v| v == 1.0).unwrap_or(0);
        Remark::ALL[i]
    }
}

pub fn to_example(rec: &SubmissionRecord, vocab: &Vocabulary) -> Result<LabeledExample> {
    let tokens = lex(&rec.submitted_answer).map_err(|e| Error::Submission {
        id: rec.submission_id.clone(),
        source: Box::new(e),
    })?;
    Ok(example_from_tokens(rec, &tokens, vocab))
}

/// [`to_example`] for a record whose answer is already lexed.
pub fn example_from_tokens<S: AsRef<str>>(rec: &SubmissionRecord, tokens: &[S], vocab: &Vocabulary) -> LabeledExample {
    LabeledExample {
        submission_id: rec.submission_id.clone(),
        x: encode(tokens, vocab),
        y_correct: if rec.is_correct { 1.0 } else { 0.0 },
        y_remark: rec.remark.one_hot(),
        y_grade: rec.grade_percent / 100.0,
    }
}

/// Lexes every record, attaching the submission id to any lex error.
pub fn lex_records(records: &[SubmissionRecord]) -> Result<Vec<Vec<String>>> {
    records
        .iter()
        .map(|r| {
            lex(&r.submitted_answer).map_err(|e| Error::Submission {
                id: r.submission_id.clone(),
                source: Box::new(e),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Cross-validation plans

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    KFold(usize),
    LeaveOneOut,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
    pub scheme: Scheme,
    pub seed: u64,
    pub n: usize,
}

impl FoldPlan {
    fn from_assignment(n: usize, k: usize, fold_of: &[usize], scheme: Scheme, seed: u64) -> Self {
        let folds = (0..k)
            .map(|f| {
                let (val, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold_of[i] == f);
                Fold { train, val }
            })
            .collect();
        Self { folds, scheme, seed, n }
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    /// Fold index that validates each example.
    pub fn fold_of(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.n];
        for (f, fold) in self.folds.iter().enumerate() {
            for &i in &fold.val {
                out[i] = f;
            }
        }
        out
    }
}

/// Shuffles `0..n` with `seed` and deals the indices round-robin into `k`
/// validation sets.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::Parameter(format!("k-fold needs 2 <= k <= n, got k={k}, n={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    Ok(FoldPlan::from_assignment(n, k, &fold_of, Scheme::KFold(k), seed))
}

/// `n` folds; fold `i` validates index `i` alone.
pub fn loo_split(n: usize) -> Result<FoldPlan> {
    if n < 2 {
        return Err(Error::Parameter(format!("leave-one-out needs n >= 2, got {n}")));
    }
    let fold_of: Vec<usize> = (0..n).collect();
    Ok(FoldPlan::from_assignment(n, n, &fold_of, Scheme::LeaveOneOut, 0))
}

// ---------------------------------------------------------------------------
// Class weights

#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    /// Indexed by the correctness label (0, 1).
    pub correctness: [f64; 2],
    /// Indexed by [`Remark::index`].
    pub remark: [f64; 4],
    pub warnings: Vec<String>,
}

/// `n_total / (classes · n_class)` per class; absent classes get 0.
pub fn class_weights(examples: &[LabeledExample]) -> Result<ClassWeights> {
    if examples.is_empty() {
        return Err(Error::Input("class weights of an empty set".into()));
    }
    let n = examples.len() as f64;
    let mut c_counts = [0usize; 2];
    let mut r_counts = [0usize; 4];
    for e in examples {
        c_counts[usize::from(e.y_correct >= 0.5)] += 1;
        r_counts[e.remark().index()] += 1;
    }
    let mut warnings = Vec::new();
    let mut weigh = |count: usize, classes: f64, name: String| {
        if count == 0 {
            warnings.push(format!("no examples of class {name}; weight set to 0"));
            0.0
        } else {
            n / (classes * count as f64)
        }
    };
    let correctness = [
        weigh(c_counts[0], 2.0, "incorrect".into()),
        weigh(c_counts[1], 2.0, "correct".into()),
    ];
    let remark = std::array::from_fn(|i| weigh(r_counts[i], 4.0, Remark::ALL[i].name().into()));
    Ok(ClassWeights {
        correctness,
        remark,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Synthetic corpus

/// Version of the labeling rules used by [`generate_synthetic`].
///
/// Rule set v1. Each record picks a class with probabilities
/// Correct 0.40, Partially Correct 0.35, Uninterpretable 0.20,
/// Cheating 0.05, then renders one of six query templates over toy
/// schemas (professors/courses, people, TV shows, students):
///
/// * Correct: the template as written, every join predicate present;
///   `is_correct = 1`, grade 100.
/// * Partially Correct: a multi-table template in comma-join form with at
///   least one required join predicate removed; `is_correct = 0`, grade
///   drawn uniformly from [40, 80] and rounded to two decimals.
/// * Uninterpretable: a correct rendering whose SQL keywords are permuted
///   among their own positions (so SELECT, FROM, WHERE, AND, ... appear in
///   a garbled order); `is_correct = 0`, grade 0.
/// * Cheating: a correct rendering duplicated verbatim, joined by `;`
///   (the same answer pasted twice); `is_correct = 0`, grade 0.
///
/// Aliases, selected columns, extra filter predicates, literal values,
/// keyword case and line breaks vary at random.
pub const SYNTHETIC_RULESET_VERSION: u32 = 1;

pub const SYNTHETIC_MIX: [f64; 4] = [0.40, 0.35, 0.20, 0.05];

struct Table {
    name: &'static str,
    aliases: &'static [&'static str],
}

struct Template {
    tables: &'static [Table],
    /// `(select item, table index)`; `{n}` is replaced by the table alias.
    select: &'static [(&'static str, usize)],
    /// Join predicates `(left table, left column, right table, right column)`.
    joins: &'static [(usize, &'static str, usize, &'static str)],
    /// Optional filters `(table, column, literal kind)`; kind 's' string, 'n' number.
    filters: &'static [(usize, &'static str, char)],
    tail: &'static str,
}

const TEMPLATES: &[Template] = &[
    Template {
        tables: &[
            Table { name: "professor", aliases: &["p", "prof", "p1"] },
            Table { name: "teaches", aliases: &["t", "te", "t1"] },
            Table { name: "course", aliases: &["c", "crs", "c1"] },
        ],
        select: &[("{0}.name", 0), ("{0}.dept", 0), ("{0}.prof_id", 0)],
        joins: &[(0, "prof_id", 1, "prof_id"), (1, "course_id", 2, "course_id")],
        filters: &[(2, "title", 's'), (2, "credits", 'n')],
        tail: "",
    },
    Template {
        tables: &[Table { name: "person", aliases: &["p", "per", "x"] }],
        select: &[("{0}.id", 0), ("{0}.first_name", 0), ("{0}.last_name", 0)],
        joins: &[],
        filters: &[(0, "year_born", 'n'), (0, "last_name", 's')],
        tail: "ORDER BY {0}.last_name",
    },
    Template {
        tables: &[
            Table { name: "ztvshow", aliases: &["ztv", "s", "tv"] },
            Table { name: "zprodby", aliases: &["zprb", "pb", "b"] },
            Table { name: "zplay", aliases: &["zply", "pl", "y"] },
        ],
        select: &[("{0}.show_name", 0), ("SUM({1}.prod_salary)", 1), ("SUM({2}.actor_salary)", 2)],
        joins: &[(1, "show_num", 0, "show_num"), (2, "show_num", 0, "show_num")],
        filters: &[(0, "network", 's')],
        tail: "GROUP BY {0}.show_name",
    },
    Template {
        tables: &[
            Table { name: "student", aliases: &["s", "st", "s1"] },
            Table { name: "enrolled", aliases: &["e", "en", "e1"] },
        ],
        select: &[("{0}.name", 0), ("{0}.major", 0), ("{1}.grade", 1)],
        joins: &[(0, "student_id", 1, "student_id")],
        filters: &[(1, "course_id", 's'), (1, "grade", 'n')],
        tail: "",
    },
    Template {
        tables: &[Table { name: "course", aliases: &["c", "co", "cr"] }],
        select: &[("{0}.title", 0), ("{0}.credits", 0), ("{0}.course_id", 0)],
        joins: &[],
        filters: &[(0, "credits", 'n'), (0, "dept", 's')],
        tail: "ORDER BY {0}.title",
    },
    Template {
        tables: &[
            Table { name: "zactor", aliases: &["a", "act", "za"] },
            Table { name: "zplay", aliases: &["p", "zp", "pl"] },
            Table { name: "ztvshow", aliases: &["s", "sh", "tv"] },
        ],
        select: &[("{0}.actor_name", 0), ("{1}.actor_salary", 1), ("{2}.show_name", 2)],
        joins: &[(0, "actor_num", 1, "actor_num"), (1, "show_num", 2, "show_num")],
        filters: &[(2, "show_name", 's'), (1, "actor_salary", 'n')],
        tail: "",
    },
];

const WORDS: &[&str] = &["Introduction to Programming", "Databases", "Drama", "Comedy", "CS101", "Smith", "MATH", "News"];

struct Rendered {
    select: String,
    from: String,
    preds: Vec<String>,
    tail: String,
}

fn pick<'a, T>(rng: &mut SeededRng, items: &'a [T]) -> &'a T {
    &items[rng.below(items.len())]
}

fn render(t: &Template, rng: &mut SeededRng, drop_joins: bool, join_syntax: bool) -> Rendered {
    let aliases: Vec<&str> = t.tables.iter().map(|tb| *pick(rng, tb.aliases)).collect();
    let sub = |s: &str| {
        let mut out = s.to_string();
        for (i, a) in aliases.iter().enumerate() {
            out = out.replace(&format!("{{{i}}}"), a);
        }
        out
    };

    let mut items: Vec<String> = t
        .select
        .iter()
        .filter(|_| rng.uniform() < 0.7)
        .map(|(s, _)| sub(s))
        .collect();
    if items.is_empty() {
        items.push(sub(t.select[0].0));
    }
    let distinct = if rng.uniform() < 0.2 { "DISTINCT " } else { "" };
    let select = format!("SELECT {distinct}{}", items.join(", "));

    let mut joins: Vec<String> = t
        .joins
        .iter()
        .map(|&(l, lc, r, rc)| format!("{}.{lc} = {}.{rc}", aliases[l], aliases[r]))
        .collect();
    if drop_joins {
        // Remove at least one required join predicate.
        let keep_mask: Vec<bool> = (0..joins.len()).map(|_| rng.uniform() < 0.3).collect();
        let mut dropped = false;
        let mut kept = Vec::new();
        for (j, keep) in joins.into_iter().zip(keep_mask) {
            if keep {
                kept.push(j);
            } else {
                dropped = true;
            }
        }
        if !dropped {
            kept.remove(rng.below(kept.len()));
        }
        joins = kept;
    }

    let mut filters = Vec::new();
    for &(tb, col, kind) in t.filters {
        if rng.uniform() < 0.5 {
            let lit = if kind == 's' {
                format!("'{}'", pick(rng, WORDS))
            } else {
                format!("{}", 1 + rng.below(2000))
            };
            let op = if kind == 's' { "=" } else { *pick(rng, &["=", ">", "<", ">="]) };
            filters.push(format!("{}.{col} {op} {lit}", aliases[tb]));
        }
    }

    let (from, preds) = if join_syntax && !drop_joins && t.tables.len() > 1 {
        let mut from = format!("FROM {} {}", t.tables[0].name, aliases[0]);
        for (i, j) in joins.iter().enumerate() {
            from.push_str(&format!(" JOIN {} {} ON {j}", t.tables[i + 1].name, aliases[i + 1]));
        }
        (from, filters)
    } else {
        let from = format!(
            "FROM {}",
            t.tables
                .iter()
                .zip(&aliases)
                .map(|(tb, a)| format!("{} {a}", tb.name))
                .collect::<Vec<_>>()
                .join(", ")
        );
        let mut preds = joins;
        preds.extend(filters);
        (from, preds)
    };
    Rendered {
        select,
        from,
        preds,
        tail: sub(t.tail),
    }
}

fn assemble(parts: &[String], rng: &mut SeededRng) -> String {
    let sep = if rng.uniform() < 0.5 { " " } else { "\n" };
    let mut sql = parts.iter().filter(|p| !p.is_empty()).cloned().collect::<Vec<_>>().join(sep);
    sql.push(';');
    if rng.uniform() < 0.5 {
        sql = sql.to_lowercase();
    }
    sql
}

fn where_clause(preds: &[String]) -> String {
    if preds.is_empty() {
        String::new()
    } else {
        format!("WHERE {}", preds.join(" AND "))
    }
}

fn correct_sql(t: &Template, rng: &mut SeededRng) -> String {
    let join_syntax = rng.uniform() < 0.3;
    let r = render(t, rng, false, join_syntax);
    assemble(&[r.select, r.from, where_clause(&r.preds), r.tail], rng)
}

const KEYWORDS: &[&str] = &["select", "from", "where", "and", "join", "on", "group", "order", "by", "distinct"];

/// Permutes the SQL keywords of `sql` among their own positions so that
/// their order differs from the original.
fn garble_keywords(sql: &str, rng: &mut SeededRng) -> String {
    let body = sql.trim_end_matches(';');
    // Each piece is a word plus the whitespace character that follows it.
    let pieces: Vec<(&str, &str)> = body
        .split_inclusive(char::is_whitespace)
        .map(|p| p.split_at(p.trim_end().len()))
        .collect();
    let slots: Vec<usize> = (0..pieces.len())
        .filter(|&i| KEYWORDS.contains(&pieces[i].0.to_ascii_lowercase().as_str()))
        .collect();
    let lower = |order: &[usize]| -> Vec<String> { order.iter().map(|&i| pieces[i].0.to_ascii_lowercase()).collect() };
    let mut perm = slots.clone();
    let distinct = {
        let mut l = lower(&slots);
        l.sort();
        l.dedup();
        l.len()
    };
    if distinct > 1 {
        while lower(&perm) == lower(&slots) {
            rng.shuffle(&mut perm);
        }
    }
    let mut words: Vec<&str> = pieces.iter().map(|p| p.0).collect();
    for (&slot, &from) in slots.iter().zip(&perm) {
        words[slot] = pieces[from].0;
    }
    let mut out: String = words.iter().zip(&pieces).map(|(w, p)| format!("{w}{}", p.1)).collect();
    out.push(';');
    out
}

/// Deterministic rule-labeled corpus; see [`SYNTHETIC_RULESET_VERSION`].
pub fn generate_synthetic(n: usize, seed: u64) -> Result<Vec<SubmissionRecord>> {
    if n < 8 {
        return Err(Error::Parameter(format!("synthetic corpus needs n >= 8, got {n}")));
    }
    let mut rng = SeededRng::new(seed);
    let multi: Vec<usize> = (0..TEMPLATES.len()).filter(|&i| !TEMPLATES[i].joins.is_empty()).collect();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut remark = Remark::Cheating;
        for (r, p) in Remark::ALL.iter().zip(SYNTHETIC_MIX) {
            acc += p;
            if u < acc {
                remark = *r;
                break;
            }
        }
        let (template, sql, grade) = match remark {
            Remark::Correct => {
                let ti = rng.below(TEMPLATES.len());
                (ti, correct_sql(&TEMPLATES[ti], &mut rng), 100.0)
            }
            Remark::PartiallyCorrect => {
                let ti = *pick(&mut rng, &multi);
                let r = render(&TEMPLATES[ti], &mut rng, true, false);
                let sql = assemble(&[r.select, r.from, where_clause(&r.preds), r.tail], &mut rng);
                let grade = (rng.uniform_range(40.0, 80.0) * 100.0).round() / 100.0;
                (ti, sql, grade)
            }
            Remark::Uninterpretable => {
                let ti = rng.below(TEMPLATES.len());
                let sql = garble_keywords(&correct_sql(&TEMPLATES[ti], &mut rng), &mut rng);
                (ti, sql, 0.0)
            }
            Remark::Cheating => {
                let ti = rng.below(TEMPLATES.len());
                let sql = correct_sql(&TEMPLATES[ti], &mut rng);
                (ti, format!("{sql}\n{sql}"), 0.0)
            }
        };
        out.push(SubmissionRecord {
            submission_id: format!("S{i:05}"),
            query_id: format!("Q{}", template + 1),
            submitted_answer: sql,
            is_correct: remark == Remark::Correct,
            remark,
            grade_percent: grade,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE: &str = "submission_id,query_id,submitted_answer,is_correct,remark,grade\n\
S1,Q7,\"SELECT DISTINCT ztv.show_name\nFROM ztvshow ztv\",0,Partially Correct,66.66\n\
S2,Q1,SELECT 1,1,correct,100\n";

    #[test]
    fn reads_records_with_quoted_newlines() {
        let loaded = read_csv(SAMPLE.as_bytes()).unwrap();
        assert_eq!(loaded.records.len(), 2);
        let r = &loaded.records[0];
        assert_eq!(r.grade_percent, 66.66);
        assert_eq!(r.remark, Remark::PartiallyCorrect);
        assert!(r.submitted_answer.contains('\n'));
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn remark_parsing_is_lenient_about_case_and_spacing() {
        assert_eq!("  PARTIALLY   correct ".parse::<Remark>().unwrap(), Remark::PartiallyCorrect);
        assert_eq!("Cheating".parse::<Remark>().unwrap(), Remark::Cheating);
        assert!("Creative".parse::<Remark>().is_err());
    }

    #[test]
    fn bad_rows_are_all_reported_with_lines() {
        let text = "submission_id,query_id,submitted_answer,is_correct,remark,grade\n\
S1,Q1,SELECT 1,1,Correct,100\n\
S2,Q1,SELECT 2,1,Creative,100\n\
S3,Q1,SELECT 3,maybe,Correct,140\n";
        match read_csv(text.as_bytes()) {
            Err(Error::Rows(rows)) => {
                assert_eq!(rows.len(), 3);
                assert_eq!(rows[0].line, 3);
                assert!(rows[0].message.contains("Creative"));
                assert!(rows.iter().skip(1).all(|r| r.line == 4));
            }
            other => panic!("unexpected {other:?}"),
        }
        match read_csv("submission_id,query_id,submitted_answer,is_correct,grade\n".as_bytes()) {
            Err(Error::Rows(rows)) => assert!(rows[0].message.contains("remark")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inconsistent_labels_warn() {
        let text = "submission_id,query_id,submitted_answer,is_correct,remark,grade\nS1,Q1,x,1,Correct,90\n";
        let loaded = read_csv(text.as_bytes()).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
    }

    #[test]
    fn to_example_examples() {
        let vocab = Vocabulary::from_tokens(["select"]).unwrap();
        let mut rec = SubmissionRecord {
            submission_id: "S".into(),
            query_id: "Q".into(),
            submitted_answer: "SELECT x".into(),
            is_correct: false,
            remark: Remark::PartiallyCorrect,
            grade_percent: 40.0,
        };
        let e = to_example(&rec, &vocab).unwrap();
        assert!((e.y_grade - 0.40).abs() < 1e-15);
        assert_eq!(e.y_remark, [0.0, 1.0, 0.0, 0.0]);
        rec.grade_percent = 100.0;
        rec.remark = Remark::Cheating;
        let e = to_example(&rec, &vocab).unwrap();
        assert_eq!(e.y_grade, 1.0);
        assert_eq!(e.y_remark, [0.0, 0.0, 0.0, 1.0]);
        assert_eq!(to_example(&rec, &vocab).unwrap(), e);

        rec.submitted_answer = "SELECT 'oops".into();
        match to_example(&rec, &vocab) {
            Err(Error::Submission { id, .. }) => assert_eq!(id, "S"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kfold_examples() {
        let plan = kfold_split(10, 10, 1).unwrap();
        assert!(plan.folds.iter().all(|f| f.val.len() == 1));
        let plan = kfold_split(7, 3, 1).unwrap();
        let mut sizes: Vec<usize> = plan.folds.iter().map(|f| f.val.len()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![2, 2, 3]);
        assert_eq!(kfold_split(7, 3, 1).unwrap(), plan);
        assert!(kfold_split(3, 4, 1).is_err());
        assert!(kfold_split(3, 1, 1).is_err());
    }

    #[test]
    fn loo_examples() {
        let plan = loo_split(3).unwrap();
        assert_eq!(
            plan.folds,
            vec![
                Fold { train: vec![1, 2], val: vec![0] },
                Fold { train: vec![0, 2], val: vec![1] },
                Fold { train: vec![0, 1], val: vec![2] },
            ]
        );
        assert_eq!(loo_split(2700).unwrap().len(), 2700);
        assert!(loo_split(1).is_err());
    }

    fn example(correct: bool, remark: Remark) -> LabeledExample {
        LabeledExample {
            submission_id: String::new(),
            x: EncodedStatement::from_ids(vec![crate::tokenizer::TokenId::PAD]).unwrap(),
            y_correct: if correct { 1.0 } else { 0.0 },
            y_remark: remark.one_hot(),
            y_grade: 0.0,
        }
    }

    #[test]
    fn class_weight_examples() {
        let balanced: Vec<_> = (0..4)
            .flat_map(|i| [example(true, Remark::ALL[i]), example(false, Remark::ALL[i])])
            .collect();
        let w = class_weights(&balanced).unwrap();
        assert_eq!(w.correctness, [1.0, 1.0]);
        assert_eq!(w.remark, [1.0; 4]);

        let skewed: Vec<_> = (0..100).map(|i| example(i < 90, Remark::Correct)).collect();
        let w = class_weights(&skewed).unwrap();
        assert!((w.correctness[1] - 100.0 / 180.0).abs() < 1e-12);
        assert!((w.correctness[1] - 0.5556).abs() < 1e-4);
        assert!((w.correctness[0] - 5.0).abs() < 1e-12);
        assert_eq!(w.remark[Remark::Cheating.index()], 0.0);
        assert!(w.warnings.iter().any(|m| m.contains("Cheating")));
    }

    #[test]
    fn synthetic_is_deterministic_and_reloads() {
        let a = generate_synthetic(60, 11).unwrap();
        assert_eq!(a, generate_synthetic(60, 11).unwrap());
        let mut buf = Vec::new();
        write_csv(&a, &mut buf).unwrap();
        let loaded = read_csv(buf.as_slice()).unwrap();
        assert_eq!(loaded.records, a);
        assert!(loaded.warnings.is_empty());
        assert!(generate_synthetic(7, 1).is_err());
        for r in &a {
            assert!(lex(&r.submitted_answer).is_ok());
        }
    }

    #[test]
    fn synthetic_class_mix_is_frozen() {
        let recs = generate_synthetic(400, 7).unwrap();
        let mut counts = [0usize; 4];
        for r in &recs {
            counts[r.remark.index()] += 1;
            match r.remark {
                Remark::Correct => assert!(r.is_correct && r.grade_percent == 100.0),
                Remark::PartiallyCorrect => assert!(!r.is_correct && (40.0..=80.0).contains(&r.grade_percent)),
                _ => assert!(!r.is_correct && r.grade_percent == 0.0),
            }
        }
        assert_eq!(SYNTHETIC_RULESET_VERSION, 1);
        assert_eq!(counts, [163, 140, 80, 17]);
    }

    proptest! {
        #[test]
        fn kfold_partition_laws(n in 2usize..60, k_raw in 2usize..60, seed in any::<u64>()) {
            let k = 2 + k_raw % (n - 1);
            let plan = kfold_split(n, k, seed).unwrap();
            prop_assert_eq!(plan.len(), k);
            let mut seen = vec![0usize; n];
            for f in &plan.folds {
                for &i in &f.val { seen[i] += 1; }
                let mut all: Vec<usize> = f.train.iter().chain(&f.val).copied().collect();
                all.sort();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<usize> = plan.folds.iter().map(|f| f.val.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn csv_round_trip(seed in any::<u64>(), n in 8usize..30) {
            let recs = generate_synthetic(n, seed).unwrap();
            let mut buf = Vec::new();
            write_csv(&recs, &mut buf).unwrap();
            prop_assert_eq!(read_csv(buf.as_slice()).unwrap().records, recs);
        }
    }
}
