use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::EpisodeRecord;
use crate::error::{Error, Result};

/// Trailing mean; the first `window - 1` entries average what is available.
pub fn rolling_mean(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Config("rolling mean of an empty series".into()));
    }
    if window == 0 {
        return Err(Error::Config("rolling window must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    Ok(out)
}

/// Counts per bin `[i*w, (i+1)*w)` from 0 up to the bin holding the maximum.
pub fn histogram(values: &[u64], bin_width: u64) -> Result<Vec<u64>> {
    if values.is_empty() {
        return Err(Error::Config("histogram of an empty series".into()));
    }
    if bin_width == 0 {
        return Err(Error::Config("bin width must be >= 1".into()));
    }
    let max = *values.iter().max().expect("non-empty");
    let mut counts = vec![0u64; (max / bin_width) as usize + 1];
    for &v in values {
        counts[(v / bin_width) as usize] += 1;
    }
    Ok(counts)
}

/// 1-based index of the first point where `series >= threshold`.
pub fn episodes_to_threshold(series: &[f64], threshold: f64) -> Option<u64> {
    series.iter().position(|&v| v >= threshold).map(|i| i as u64 + 1)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Reproducibility stamp written into every output file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub mode: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl RunMeta {
    pub fn comment_line(&self) -> String {
        format!(
            "# mode={} config_hash={} seed={} version={}",
            self.mode, self.config_hash, self.seed, self.version
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: u64,
    pub mean_lifetime: f64,
    /// Over the final 20% of episodes.
    pub tail_episodes: u64,
    pub tail_mean_lifetime: f64,
    pub tail_median_lifetime: f64,
    pub mean_return: f64,
    pub lifetime_threshold: Option<f64>,
    /// First episode whose rolling mean reaches the threshold.
    pub episodes_to_threshold: Option<u64>,
    /// How often each policy index was followed.
    pub policy_counts: Vec<u64>,
}

impl Summary {
    pub fn from_records(records: &[EpisodeRecord], window: usize, threshold: Option<f64>) -> Result<Self> {
        let lifetimes: Vec<f64> = records.iter().map(|r| r.lifetime as f64).collect();
        if lifetimes.is_empty() {
            return Err(Error::Config("no episodes to summarise".into()));
        }
        let tail_n = (lifetimes.len() / 5).max(1);
        let tail = &lifetimes[lifetimes.len() - tail_n..];
        let rolling = rolling_mean(&lifetimes, window)?;
        let kmax = records.iter().map(|r| r.policy).max().unwrap_or(0);
        let mut policy_counts = vec![0u64; kmax + 1];
        for r in records {
            policy_counts[r.policy] += 1;
        }
        Ok(Self {
            episodes: records.len() as u64,
            mean_lifetime: mean(&lifetimes),
            tail_episodes: tail_n as u64,
            tail_mean_lifetime: mean(tail),
            tail_median_lifetime: median(tail),
            mean_return: records.iter().map(|r| r.total_reward).sum::<f64>() / records.len() as f64,
            lifetime_threshold: threshold,
            episodes_to_threshold: threshold.and_then(|t| episodes_to_threshold(&rolling, t)),
            policy_counts,
        })
    }
}

pub const EPISODES_FILE: &str = "episodes.csv";
pub const ROLLING_FILE: &str = "rolling_mean.csv";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Serialize, Deserialize)]
struct Row {
    episode: u64,
    k: usize,
    #[serde(rename = "return")]
    total_reward: f64,
    lifetime: u64,
    psi_end: f64,
    epsilon: f64,
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn csv_with_comment(path: &Path, meta: &RunMeta) -> Result<csv::Writer<File>> {
    let mut f = create(path)?;
    writeln!(f, "{}", meta.comment_line()).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

pub fn write_episodes(path: &Path, meta: &RunMeta, records: &[EpisodeRecord]) -> Result<()> {
    let mut w = csv_with_comment(path, meta)?;
    for r in records {
        w.serialize(Row {
            episode: r.episode,
            k: r.policy,
            total_reward: r.total_reward,
            lifetime: r.lifetime,
            psi_end: r.psi_end,
            epsilon: r.epsilon,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`write_episodes`]; returns the stamp and records.
pub fn read_episodes(path: &Path) -> Result<(Option<String>, Vec<EpisodeRecord>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(&file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    let stamp = first.starts_with('#').then(|| first.trim_end().to_string());
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let records = reader
        .deserialize::<Row>()
        .map(|row| {
            row.map(|r| EpisodeRecord {
                episode: r.episode,
                policy: r.k,
                total_reward: r.total_reward,
                lifetime: r.lifetime,
                psi_end: r.psi_end,
                epsilon: r.epsilon,
            })
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((stamp, records))
}

pub fn write_rolling(path: &Path, meta: &RunMeta, lifetimes: &[u64], window: usize) -> Result<()> {
    let series: Vec<f64> = lifetimes.iter().map(|&l| l as f64).collect();
    let rolling = rolling_mean(&series, window)?;
    let mut w = csv_with_comment(path, meta)?;
    w.write_record(["episode", "rolling_mean_lifetime"])?;
    for (i, v) in rolling.iter().enumerate() {
        w.write_record([(i + 1).to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_histogram(path: &Path, meta: &RunMeta, lifetimes: &[u64], bin_width: u64) -> Result<()> {
    let counts = histogram(lifetimes, bin_width)?;
    let mut w = csv_with_comment(path, meta)?;
    w.write_record(["bin_start", "bin_end", "count"])?;
    for (i, c) in counts.iter().enumerate() {
        let lo = i as u64 * bin_width;
        w.write_record([lo.to_string(), (lo + bin_width).to_string(), c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Rolling-mean and histogram files regenerated from an episodes file.
pub fn plot_data(episodes_csv: &Path, out_dir: &Path, window: usize, bin_width: u64) -> Result<()> {
    let (stamp, records) = read_episodes(episodes_csv)?;
    let meta = stamp
        .as_deref()
        .and_then(parse_stamp)
        .ok_or_else(|| Error::Corrupt {
            path: episodes_csv.to_path_buf(),
            reason: "missing reproducibility stamp".into(),
        })?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let lifetimes: Vec<u64> = records.iter().map(|r| r.lifetime).collect();
    write_rolling(&out_dir.join(ROLLING_FILE), &meta, &lifetimes, window)?;
    write_histogram(&out_dir.join(HISTOGRAM_FILE), &meta, &lifetimes, bin_width)
}

pub fn parse_stamp(line: &str) -> Option<RunMeta> {
    let body = line.strip_prefix('#')?;
    let mut mode = None;
    let mut hash = None;
    let mut seed = None;
    let mut version = None;
    for part in body.split_whitespace() {
        let (k, v) = part.split_once('=')?;
        match k {
            "mode" => mode = Some(v.to_string()),
            "config_hash" => hash = Some(v.to_string()),
            "seed" => seed = v.parse().ok(),
            "version" => version = Some(v.to_string()),
            _ => {}
        }
    }
    Some(RunMeta {
        mode: mode?,
        config_hash: hash?,
        seed: seed?,
        version: version?,
    })
}
