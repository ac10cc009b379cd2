//! Trace ingestion: parsing post/retweet logs and labels into a [`DatasetBundle`].
//!
//! Two on-disk layouts are accepted for traces. JSONL carries one object per
//! line with the [`TraceRecord`] field names. CSV uses the same names as
//! headers, with list fields (`urls`, `hashtags`) separated by `|`.
//! Labels always come as a CSV file with header `user_id,label`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Share of malformed lines above which parsing aborts.
pub const MAX_MALFORMED_FRACTION: f64 = 0.10;

/// One post or retweet event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub post_id: String,
    pub user_id: String,
    pub timestamp: i64,
    pub text: String,
    pub urls: Vec<String>,
    pub hashtags: Vec<String>,
    pub retweeted_post_id: Option<String>,
    pub retweeted_user_id: Option<String>,
    /// Seconds between the original post and this retweet.
    pub retweet_latency: Option<u64>,
    pub popularity: u64,
}

impl TraceRecord {
    pub fn is_retweet(&self) -> bool {
        self.retweeted_post_id.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Jsonl,
    Csv,
}

impl TraceFormat {
    /// Guess from the file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => TraceFormat::Csv,
            _ => TraceFormat::Jsonl,
        }
    }
}

/// Outcome of [`parse_traces`]: records in file order plus malformed-line bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct ParsedTraces {
    pub records: Vec<TraceRecord>,
    /// 1-based line numbers (CSV: data row number + 1 for the header).
    pub malformed_lines: Vec<usize>,
    pub total_lines: usize,
}

#[derive(Debug, Deserialize)]
struct RawJsonRecord {
    post_id: String,
    user_id: String,
    timestamp: i64,
    #[serde(default)]
    text: String,
    #[serde(default)]
    urls: Vec<String>,
    #[serde(default)]
    hashtags: Vec<String>,
    #[serde(default)]
    retweeted_post_id: Option<String>,
    #[serde(default)]
    retweeted_user_id: Option<String>,
    #[serde(default)]
    retweet_latency: Option<i64>,
    #[serde(default)]
    popularity: Option<i64>,
    #[serde(default)]
    retweet_count: Option<i64>,
    #[serde(default)]
    like_count: Option<i64>,
}

#[derive(Debug, Deserialize)]
struct RawCsvRecord {
    post_id: String,
    user_id: String,
    timestamp: i64,
    #[serde(default)]
    text: String,
    #[serde(default)]
    urls: String,
    #[serde(default)]
    hashtags: String,
    #[serde(default)]
    retweeted_post_id: String,
    #[serde(default)]
    retweeted_user_id: String,
    #[serde(default)]
    retweet_latency: String,
    #[serde(default)]
    popularity: String,
    #[serde(default)]
    retweet_count: String,
    #[serde(default)]
    like_count: String,
}

fn non_empty(s: String) -> Option<String> {
    if s.is_empty() {
        None
    } else {
        Some(s)
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split('|')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::to_owned)
        .collect()
}

fn parse_opt_int(s: &str, field: &str) -> std::result::Result<Option<i64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<i64>()
        .map(Some)
        .map_err(|_| format!("{field} is not an integer: {s:?}"))
}

impl TryFrom<RawCsvRecord> for RawJsonRecord {
    type Error = String;

    fn try_from(row: RawCsvRecord) -> std::result::Result<Self, String> {
        Ok(RawJsonRecord {
            post_id: row.post_id,
            user_id: row.user_id,
            timestamp: row.timestamp,
            text: row.text,
            urls: split_list(&row.urls),
            hashtags: split_list(&row.hashtags),
            retweeted_post_id: non_empty(row.retweeted_post_id),
            retweeted_user_id: non_empty(row.retweeted_user_id),
            retweet_latency: parse_opt_int(&row.retweet_latency, "retweet_latency")?,
            popularity: parse_opt_int(&row.popularity, "popularity")?,
            retweet_count: parse_opt_int(&row.retweet_count, "retweet_count")?,
            like_count: parse_opt_int(&row.like_count, "like_count")?,
        })
    }
}

/// Lowercase and strip a leading `#`.
pub fn normalize_hashtag(tag: &str) -> String {
    tag.trim().trim_start_matches('#').to_lowercase()
}

/// Reduce a URL to `scheme://host/path`: query and fragment dropped, host
/// lowercased, trailing slash removed.
pub fn canonicalize_url(url: &str) -> String {
    let url = url.trim();
    let cut = url.find(['?', '#']).unwrap_or(url.len());
    let url = &url[..cut];
    let (scheme, rest) = match url.find("://") {
        Some(pos) => (Some(url[..pos].to_ascii_lowercase()), &url[pos + 3..]),
        None => (None, url),
    };
    let (host, path) = match rest.find('/') {
        Some(pos) => (&rest[..pos], &rest[pos..]),
        None => (rest, ""),
    };
    let path = path.trim_end_matches('/');
    let host = host.to_ascii_lowercase();
    match scheme {
        Some(s) => format!("{s}://{host}{path}"),
        None => format!("{host}{path}"),
    }
}

impl RawJsonRecord {
    fn validate(self) -> std::result::Result<TraceRecord, String> {
        if self.post_id.is_empty() || self.user_id.is_empty() {
            return Err("empty post_id or user_id".into());
        }
        if self.timestamp <= 0 {
            return Err(format!("non-positive timestamp {}", self.timestamp));
        }
        let retweet_latency = match self.retweet_latency {
            Some(l) if l < 0 => return Err(format!("negative retweet_latency {l}")),
            Some(l) => Some(l as u64),
            None => None,
        };
        if retweet_latency.is_some() != self.retweeted_post_id.is_some() {
            return Err("retweet_latency must be present exactly when retweeted_post_id is".into());
        }
        let popularity = self
            .popularity
            .or(self.retweet_count)
            .or(self.like_count)
            .unwrap_or(0);
        if popularity < 0 {
            return Err(format!("negative popularity {popularity}"));
        }
        Ok(TraceRecord {
            post_id: self.post_id,
            user_id: self.user_id,
            timestamp: self.timestamp,
            text: self.text,
            urls: self.urls.iter().map(|u| canonicalize_url(u)).collect(),
            hashtags: self
                .hashtags
                .iter()
                .map(|h| normalize_hashtag(h))
                .filter(|h| !h.is_empty())
                .collect(),
            retweeted_post_id: self.retweeted_post_id,
            retweeted_user_id: self.retweeted_user_id,
            retweet_latency,
            popularity: popularity as u64,
        })
    }
}

fn finish(path: &Path, parsed: ParsedTraces) -> Result<ParsedTraces> {
    let malformed = parsed.malformed_lines.len();
    if parsed.total_lines == 0 {
        log::warn!("{}: no trace records", path.display());
    } else if malformed as f64 > MAX_MALFORMED_FRACTION * parsed.total_lines as f64 {
        return Err(Error::TooManyMalformed {
            path: path.to_path_buf(),
            malformed,
            total: parsed.total_lines,
            lines: parsed.malformed_lines,
        });
    } else if malformed > 0 {
        log::warn!(
            "{}: skipped {malformed} malformed lines {:?}",
            path.display(),
            parsed.malformed_lines
        );
    }
    Ok(parsed)
}

/// Parse a trace file. Malformed lines are skipped and reported; more than
/// 10% malformed is an error.
pub fn parse_traces(path: &Path, format: TraceFormat) -> Result<ParsedTraces> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let parsed = match format {
        TraceFormat::Jsonl => parse_jsonl_bytes(&bytes),
        TraceFormat::Csv => parse_csv_bytes(&bytes),
    };
    finish(path, parsed)
}

fn parse_jsonl_bytes(bytes: &[u8]) -> ParsedTraces {
    let mut out = ParsedTraces::default();
    for (idx, line) in bytes.split(|&b| b == b'\n').enumerate() {
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        out.total_lines += 1;
        let rec = serde_json::from_slice::<RawJsonRecord>(line)
            .map_err(|e| e.to_string())
            .and_then(RawJsonRecord::validate);
        match rec {
            Ok(r) => out.records.push(r),
            Err(_) => out.malformed_lines.push(idx + 1),
        }
    }
    out
}

fn parse_csv_bytes(bytes: &[u8]) -> ParsedTraces {
    let mut out = ParsedTraces::default();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(_) => return out,
    };
    for (idx, row) in reader.records().enumerate() {
        out.total_lines += 1;
        let rec = row
            .map_err(|e| e.to_string())
            .and_then(|r| {
                r.deserialize::<RawCsvRecord>(Some(&headers))
                    .map_err(|e| e.to_string())
            })
            .and_then(RawJsonRecord::try_from)
            .and_then(RawJsonRecord::validate);
        match rec {
            Ok(r) => out.records.push(r),
            Err(_) => out.malformed_lines.push(idx + 2),
        }
    }
    out
}

/// Read a `user_id,label` CSV. Repeated identical labels are accepted,
/// conflicting ones are an error.
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let mut labels = BTreeMap::new();
    for row in reader.deserialize::<(String, u8)>() {
        let (user, label) = row?;
        if label > 1 {
            return Err(Error::Format(format!(
                "label for {user} must be 0 or 1, got {label}"
            )));
        }
        match labels.get(&user) {
            Some(&prev) if prev != label => return Err(Error::ConflictingLabel(user)),
            _ => {
                labels.insert(user, label);
            }
        }
    }
    Ok(labels)
}

/// All traces and labels for one campaign, with a fixed node indexing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub name: String,
    pub records: Vec<TraceRecord>,
    /// Sorted unique user ids; position is the node index.
    pub users: Vec<String>,
    pub labels: BTreeMap<String, u8>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl DatasetBundle {
    /// Assemble a bundle. Users are the sorted union of record authors and
    /// labeled ids; users without a label are rejected unless `allow_unlabeled`.
    pub fn new(
        name: impl Into<String>,
        records: Vec<TraceRecord>,
        labels: BTreeMap<String, u8>,
        allow_unlabeled: bool,
    ) -> Result<Self> {
        let users: BTreeSet<&str> = records
            .iter()
            .map(|r| r.user_id.as_str())
            .chain(labels.keys().map(String::as_str))
            .collect();
        let users: Vec<String> = users.into_iter().map(str::to_owned).collect();
        if !allow_unlabeled {
            let missing: Vec<&String> = users.iter().filter(|u| !labels.contains_key(*u)).collect();
            if let Some(first) = missing.first() {
                return Err(Error::Unlabeled {
                    count: missing.len(),
                    first: (*first).clone(),
                });
            }
        }
        let mut bundle = DatasetBundle {
            name: name.into(),
            records,
            users,
            labels,
            index: HashMap::new(),
        };
        bundle.reindex();
        Ok(bundle)
    }

    fn reindex(&mut self) {
        self.index = self
            .users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i))
            .collect();
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.index.get(user_id).copied()
    }

    /// Label per node index.
    pub fn label_vec(&self) -> Vec<Option<u8>> {
        self.users.iter().map(|u| self.labels.get(u).copied()).collect()
    }

    /// Record indices grouped by author node index.
    pub fn posts_by_user(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.users.len()];
        for (i, r) in self.records.iter().enumerate() {
            out[self.index[&r.user_id]].push(i);
        }
        out
    }

    pub fn io_count(&self) -> usize {
        self.labels.values().filter(|&&l| l == 1).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut bundle: DatasetBundle = serde_json::from_str(s)?;
        bundle.reindex();
        Ok(bundle)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Parse traces and labels from disk into a bundle.
pub fn build_bundle(
    records: Vec<TraceRecord>,
    labels_path: &Path,
    name: &str,
    allow_unlabeled: bool,
) -> Result<DatasetBundle> {
    let labels = read_labels(labels_path)?;
    DatasetBundle::new(name, records, labels, allow_unlabeled)
}

#[derive(Serialize)]
struct JsonOut<'a> {
    post_id: &'a str,
    user_id: &'a str,
    timestamp: i64,
    text: &'a str,
    urls: &'a [String],
    hashtags: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    retweeted_post_id: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    retweeted_user_id: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    retweet_latency: Option<u64>,
    popularity: u64,
}

/// Write records as JSONL in the canonical ingestion schema.
pub fn write_traces_jsonl(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let out = JsonOut {
            post_id: &r.post_id,
            user_id: &r.user_id,
            timestamp: r.timestamp,
            text: &r.text,
            urls: &r.urls,
            hashtags: &r.hashtags,
            retweeted_post_id: r.retweeted_post_id.as_deref(),
            retweeted_user_id: r.retweeted_user_id.as_deref(),
            retweet_latency: r.retweet_latency,
            popularity: r.popularity,
        };
        serde_json::to_writer(&mut w, &out)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_labels_csv(path: &Path, labels: &BTreeMap<String, u8>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["user_id", "label"])?;
    for (user, label) in labels {
        w.write_record([user.as_str(), &label.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp_with(content: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn hashtag_is_lowercased() {
        let f = tmp_with(
            r#"{"post_id":"p1","user_id":"u1","timestamp":100,"text":"hi","urls":[],"hashtags":["X"]}"#,
            ".jsonl",
        );
        let parsed = parse_traces(f.path(), TraceFormat::Jsonl).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.records[0].hashtags, vec!["x".to_string()]);
        assert!(parsed.malformed_lines.is_empty());
    }

    #[test]
    fn empty_file_gives_no_records() {
        let f = tmp_with("", ".jsonl");
        let parsed = parse_traces(f.path(), TraceFormat::Jsonl).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.total_lines, 0);
    }

    #[test]
    fn retweet_without_latency_is_malformed() {
        let mut lines = String::new();
        for i in 0..20 {
            lines.push_str(&format!(
                r#"{{"post_id":"p{i}","user_id":"u1","timestamp":100}}"#
            ));
            lines.push('\n');
        }
        lines.push_str(r#"{"post_id":"rt","user_id":"u2","timestamp":100,"retweeted_post_id":"p1"}"#);
        let f = tmp_with(&lines, ".jsonl");
        let parsed = parse_traces(f.path(), TraceFormat::Jsonl).unwrap();
        assert_eq!(parsed.records.len(), 20);
        assert_eq!(parsed.malformed_lines, vec![21]);
    }

    #[test]
    fn too_many_malformed_is_fatal() {
        let content = "{\"post_id\":\"p\",\"user_id\":\"u\",\"timestamp\":1}\nnot json\n";
        let f = tmp_with(content, ".jsonl");
        match parse_traces(f.path(), TraceFormat::Jsonl) {
            Err(Error::TooManyMalformed { lines, .. }) => assert_eq!(lines, vec![2]),
            other => panic!("expected fatal, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_fatal() {
        assert!(matches!(
            parse_traces(Path::new("/nonexistent/traces.jsonl"), TraceFormat::Jsonl),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn csv_list_fields_and_popularity_fallback() {
        let content = "post_id,user_id,timestamp,text,urls,hashtags,retweeted_post_id,retweeted_user_id,retweet_latency,like_count\n\
                       p1,u1,5,hello,https://A.com/x/?q=1|http://b.org,#Foo|bar,,,,7\n\
                       p2,u2,9,,,,p1,u1,3,\n";
        let f = tmp_with(content, ".csv");
        let parsed = parse_traces(f.path(), TraceFormat::Csv).unwrap();
        assert_eq!(parsed.records.len(), 2);
        let r = &parsed.records[0];
        assert_eq!(r.urls, vec!["https://a.com/x", "http://b.org"]);
        assert_eq!(r.hashtags, vec!["foo", "bar"]);
        assert_eq!(r.popularity, 7);
        assert_eq!(parsed.records[1].retweet_latency, Some(3));
    }

    #[test]
    fn url_canonical_form() {
        assert_eq!(canonicalize_url("HTTPS://Example.COM/Path/?utm=1#frag"), "https://example.com/Path");
        assert_eq!(canonicalize_url("https://example.com/"), "https://example.com");
        assert_eq!(canonicalize_url("example.com/a?b"), "example.com/a");
    }

    fn rec(post: &str, user: &str) -> TraceRecord {
        TraceRecord {
            post_id: post.into(),
            user_id: user.into(),
            timestamp: 1,
            text: String::new(),
            urls: vec![],
            hashtags: vec![],
            retweeted_post_id: None,
            retweeted_user_id: None,
            retweet_latency: None,
            popularity: 0,
        }
    }

    #[test]
    fn users_sorted_and_indexed() {
        let labels = BTreeMap::from([("u1".to_string(), 1), ("u2".to_string(), 0)]);
        let b = DatasetBundle::new("t", vec![rec("a", "u2"), rec("b", "u1")], labels, false).unwrap();
        assert_eq!(b.users, vec!["u1", "u2"]);
        assert_eq!(b.user_index("u1"), Some(0));
        assert_eq!(b.user_index("u2"), Some(1));
    }

    #[test]
    fn labeled_user_without_records_becomes_isolated_node() {
        let labels = BTreeMap::from([
            ("u1".to_string(), 1),
            ("u2".to_string(), 0),
            ("u3".to_string(), 0),
        ]);
        let b = DatasetBundle::new("t", vec![rec("a", "u2"), rec("b", "u1")], labels, false).unwrap();
        assert_eq!(b.users, vec!["u1", "u2", "u3"]);
        assert!(b.posts_by_user()[2].is_empty());
    }

    #[test]
    fn conflicting_labels_are_fatal() {
        let f = tmp_with("user_id,label\nu1,1\nu1,0\n", ".csv");
        assert!(matches!(read_labels(f.path()), Err(Error::ConflictingLabel(u)) if u == "u1"));
    }

    #[test]
    fn unlabeled_users_rejected_by_default() {
        let labels = BTreeMap::from([("u1".to_string(), 1)]);
        let recs = vec![rec("a", "u1"), rec("b", "u9")];
        assert!(matches!(
            DatasetBundle::new("t", recs.clone(), labels.clone(), false),
            Err(Error::Unlabeled { count: 1, .. })
        ));
        assert!(DatasetBundle::new("t", recs, labels, true).is_ok());
    }

    #[test]
    fn jsonl_write_then_parse_roundtrip() {
        let mut r = rec("p1", "u1");
        r.retweeted_post_id = Some("p0".into());
        r.retweeted_user_id = Some("u0".into());
        r.retweet_latency = Some(4);
        r.urls = vec!["https://a.com/x".into()];
        r.hashtags = vec!["tag".into()];
        r.popularity = 3;
        let f = tempfile::Builder::new().suffix(".jsonl").tempfile().unwrap();
        write_traces_jsonl(f.path(), &[r.clone(), rec("p2", "u2")]).unwrap();
        let parsed = parse_traces(f.path(), TraceFormat::Jsonl).unwrap();
        assert_eq!(parsed.records, vec![r, rec("p2", "u2")]);
    }
}
