//! Seeded generator of labeled synthetic campaigns.
//!
//! IO users are split into cells of varying size. Each cell draws URLs,
//! hashtags and post templates from its own small pools and amplifies its own
//! posts, often within seconds, with occasional crossover between cells. Organic users
//! belong to topical communities and draw from large Zipf-distributed pools.
//! Template words mix a narrative lexicon shared by every campaign with a
//! campaign-specific one, so content transfers across campaigns only partly.
//! A noise rate makes IO users post like organic users part of the time.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simnet::FAST_RETWEET_MAX_LATENCY;
use crate::trace::{DatasetBundle, TraceRecord};

const CONSONANTS: &[u8; 20] = b"bcdfghjklmnpqrstvwxz";
const VOWELS: &[u8; 5] = b"aeiou";
const NARRATIVE_BASE: u64 = 0;
const CAMPAIGN_BASE: u64 = 100_000;
const GENERAL_BASE: u64 = 1_000_000;
const TOPIC_BASE: u64 = 2_000_000;
const EPOCH_START: i64 = 1_600_000_000;
const SPAN_SECS: i64 = 30 * 86_400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_organic: usize,
    pub n_io: usize,
    /// Selects the IO pools; distinct campaigns share only the narrative lexicon.
    pub campaign: u64,
    pub seed: u64,
    pub io_url_pool: usize,
    pub io_hashtag_pool: usize,
    pub io_template_pool: usize,
    /// IO originals that the campaign amplifies through retweets.
    pub io_amplified_pool: usize,
    /// Cell sizes are drawn uniformly from `[io_cell_min, io_cell_max]`; each
    /// cell has its own URL, hashtag, template and amplified pools.
    /// `io_cell_max = 0` puts the whole campaign in one cell.
    pub io_cell_min: usize,
    pub io_cell_max: usize,
    /// Probability that an IO post or retweet draws on another cell's pools.
    pub io_cross_cell: f64,
    pub narrative_lexicon: usize,
    pub campaign_lexicon: usize,
    /// Share of template words drawn from the shared narrative lexicon.
    pub narrative_share: f64,
    pub organic_topics: usize,
    pub organic_url_pool: usize,
    pub organic_hashtag_pool: usize,
    pub organic_vocab: usize,
    pub topic_vocab: usize,
    pub zipf_exponent: f64,
    /// Probability that an IO retweet lands within the fast-retweet window.
    pub p_fast: f64,
    /// Probability that an organic retweet is fast.
    pub organic_fast: f64,
    /// Probability that an organic retweet amplifies a campaign post.
    pub organic_io_retweet: f64,
    pub posts_min: usize,
    pub posts_max: usize,
    pub retweet_prob: f64,
    pub io_url_prob: f64,
    pub io_hashtag_prob: f64,
    pub organic_url_prob: f64,
    pub organic_hashtag_prob: f64,
    /// Per-token replacement probability in IO templates.
    pub token_noise: f64,
    /// Mean share of an IO user's posts that look organic; per-user rates are
    /// uniform on `[0, 2·noise]`.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_organic: 1800,
            n_io: 200,
            campaign: 0,
            seed: 0,
            io_url_pool: 40,
            io_hashtag_pool: 20,
            io_template_pool: 8,
            io_amplified_pool: 60,
            io_cell_min: 10,
            io_cell_max: 120,
            io_cross_cell: 0.1,
            narrative_lexicon: 80,
            campaign_lexicon: 200,
            narrative_share: 0.75,
            organic_topics: 16,
            organic_url_pool: 3000,
            organic_hashtag_pool: 400,
            organic_vocab: 20000,
            topic_vocab: 3000,
            zipf_exponent: 1.1,
            p_fast: 0.6,
            organic_fast: 0.02,
            organic_io_retweet: 0.01,
            posts_min: 8,
            posts_max: 24,
            retweet_prob: 0.35,
            io_url_prob: 0.5,
            io_hashtag_prob: 0.6,
            organic_url_prob: 0.15,
            organic_hashtag_prob: 0.15,
            token_noise: 0.1,
            noise: 0.2,
        }
    }
}

pub const PRESETS: [&str; 8] = [
    "uae-like",
    "cuba-like",
    "russia-like",
    "venezuela-like",
    "iran-like",
    "china-like",
    "tiny",
    "bench",
];

/// Node counts and IO shares scaled to at most 2,000 nodes.
pub fn preset(name: &str) -> Result<SynthConfig> {
    let (nodes, io_share, campaign) = match name {
        "uae-like" => (2000, 0.357, 1),
        "cuba-like" => (2000, 0.023, 2),
        "russia-like" => (666, 0.384, 3),
        "venezuela-like" => (2000, 0.106, 4),
        "iran-like" => (2000, 0.322, 5),
        "china-like" => (2000, 0.033, 6),
        "tiny" => (60, 8.0 / 60.0, 7),
        "bench" => (2000, 0.10, 8),
        other => return Err(Error::Config(format!("unknown preset {other:?}"))),
    };
    let n_io = (io_share * nodes as f64).round() as usize;
    let mut cfg = SynthConfig {
        n_organic: nodes - n_io,
        n_io,
        campaign,
        ..SynthConfig::default()
    };
    if name == "russia-like" {
        cfg.organic_io_retweet = 0.5;
    }
    if name == "tiny" {
        cfg.organic_topics = 3;
        cfg.posts_min = 4;
        cfg.posts_max = 10;
        cfg.io_amplified_pool = 10;
    }
    Ok(cfg)
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_io == 0 || self.n_organic == 0 {
            return err("need at least one IO and one organic user");
        }
        if self.posts_min == 0 || self.posts_min > self.posts_max {
            return err("posts per user range is empty");
        }
        let pools = [
            self.io_url_pool,
            self.io_hashtag_pool,
            self.io_template_pool,
            self.io_amplified_pool,
            self.narrative_lexicon,
            self.campaign_lexicon,
            self.organic_topics,
            self.organic_url_pool,
            self.organic_hashtag_pool,
            self.organic_vocab,
            self.topic_vocab,
        ];
        if pools.contains(&0) {
            return err("every pool needs at least one entry");
        }
        // amplified posts are distinct IO posts
        if self.io_amplified_pool > self.n_io * self.posts_min {
            return err("io_amplified_pool exceeds the IO posting budget");
        }
        let probs = [
            self.narrative_share,
            self.io_cross_cell,
            self.p_fast,
            self.organic_fast,
            self.organic_io_retweet,
            self.retweet_prob,
            self.io_url_prob,
            self.io_hashtag_prob,
            self.organic_url_prob,
            self.organic_hashtag_prob,
            self.token_noise,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || !(0.0..=0.5).contains(&self.noise) {
            return err("probabilities must lie in [0, 1] and noise in [0, 0.5]");
        }
        if self.io_cell_max > 0 && (self.io_cell_min == 0 || self.io_cell_min > self.io_cell_max) {
            return err("IO cell size range is empty");
        }
        if self.zipf_exponent <= 0.0 {
            return err("zipf exponent must be positive");
        }
        Ok(())
    }

}

const CODAS: &[u8] = b"nrstlkmp";

/// Deterministic pseudo-word for a lexicon slot.
fn word(idx: u64) -> String {
    let mut h = crate::train::derive_seed(idx, 0x5157);
    let len = 2 + (h % 3) as usize;
    h /= 3;
    let mut w = String::with_capacity(3 * len);
    for _ in 0..len {
        w.push(CONSONANTS[(h % 20) as usize] as char);
        w.push(VOWELS[(h / 20 % 5) as usize] as char);
        if let Some(&c) = CODAS.get((h / 100 % 12) as usize) {
            w.push(c as char);
        }
        h /= 1200;
    }
    w
}

struct Zipfs {
    vocab: Zipf<f64>,
    topic_vocab: Zipf<f64>,
    urls: Zipf<f64>,
    hashtags: Zipf<f64>,
}

fn zipf_index<R: Rng>(z: &Zipf<f64>, rng: &mut R) -> u64 {
    z.sample(rng) as u64 - 1
}

struct Gen<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    zipfs: Zipfs,
    templates: Vec<Vec<u64>>,
    cells: usize,
}

impl Gen<'_> {
    fn organic_word(&mut self, topic: usize) -> String {
        if self.rng.random_bool(0.5) {
            let k = zipf_index(&self.zipfs.topic_vocab, &mut self.rng);
            word(TOPIC_BASE + topic as u64 * 10_000 + k)
        } else {
            word(GENERAL_BASE + zipf_index(&self.zipfs.vocab, &mut self.rng))
        }
    }

    fn organic_text(&mut self, topic: usize) -> String {
        let len = self.rng.random_range(8..=14);
        (0..len).map(|_| self.organic_word(topic)).collect::<Vec<_>>().join(" ")
    }

    /// Cell whose pools a post by a member of `home` draws on.
    fn pick_cell(&mut self, home: usize) -> usize {
        let cells = self.cells;
        if cells > 1 && self.rng.random_bool(self.cfg.io_cross_cell) {
            self.rng.random_range(0..cells)
        } else {
            home
        }
    }

    fn io_text(&mut self, cell: usize) -> String {
        let pool = self.cfg.io_template_pool;
        let t = cell * pool + self.rng.random_range(0..pool);
        let tokens = self.templates[t].clone();
        tokens
            .into_iter()
            .map(|slot| {
                if self.rng.random_bool(self.cfg.token_noise) {
                    word(GENERAL_BASE + zipf_index(&self.zipfs.vocab, &mut self.rng))
                } else {
                    word(slot)
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn organic_entities(&mut self, topic: usize) -> (Vec<String>, Vec<String>) {
        let mut urls = Vec::new();
        let mut tags = Vec::new();
        if self.rng.random_bool(self.cfg.organic_url_prob) {
            let k = zipf_index(&self.zipfs.urls, &mut self.rng);
            urls.push(format!("https://t{topic}.news.example/a/{k}"));
        }
        if self.rng.random_bool(self.cfg.organic_hashtag_prob) {
            let k = zipf_index(&self.zipfs.hashtags, &mut self.rng);
            tags.push(format!("#t{topic}{}", word(TOPIC_BASE + 900_000 + topic as u64 * 10_000 + k)));
        }
        (urls, tags)
    }

    fn io_entities(&mut self, cell: usize) -> (Vec<String>, Vec<String>) {
        let c = self.cfg.campaign;
        let suffix = if cell == 0 { String::new() } else { cell.to_string() };
        let mut urls = Vec::new();
        let mut tags = Vec::new();
        if self.rng.random_bool(self.cfg.io_url_prob) {
            let k = cell * self.cfg.io_url_pool + self.rng.random_range(0..self.cfg.io_url_pool);
            urls.push(format!("https://c{c}-outlet.example/story/{k}"));
        }
        if self.rng.random_bool(self.cfg.io_hashtag_prob) {
            let count = self.rng.random_range(1..=2);
            for _ in 0..count {
                let k = self.rng.random_range(0..self.cfg.io_hashtag_pool) as u64;
                tags.push(format!("#{}{suffix}", word(CAMPAIGN_BASE + 50_000 + c * 1000 + k)));
            }
        }
        (urls, tags)
    }

    fn popularity(&mut self) -> u64 {
        let u: f64 = self.rng.random_range(1e-3..1.0);
        (u.powf(-1.2) - 1.0).min(1e6) as u64
    }
}

struct Original {
    idx: usize,
    topic: Option<usize>,
    /// Cell of an IO-style original.
    cell: Option<usize>,
}

/// Generate one labeled bundle. Same config, same bytes.
pub fn generate(cfg: &SynthConfig) -> Result<DatasetBundle> {
    cfg.validate()?;
    let z = |n: usize| Zipf::new(n as f64, cfg.zipf_exponent).map_err(|e| Error::Config(e.to_string()));
    let zipfs = Zipfs {
        vocab: Zipf::new(cfg.organic_vocab as f64, 0.7).map_err(|e| Error::Config(e.to_string()))?,
        topic_vocab: Zipf::new(cfg.topic_vocab as f64, 0.7).map_err(|e| Error::Config(e.to_string()))?,
        urls: z(cfg.organic_url_pool)?,
        hashtags: z(cfg.organic_hashtag_pool)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(crate::train::derive_seed(cfg.seed, 0x5e_0000 + cfg.campaign));
    let mut cell_of = Vec::with_capacity(cfg.n_io);
    let mut cells = 0;
    while cell_of.len() < cfg.n_io {
        let size = if cfg.io_cell_max == 0 {
            cfg.n_io
        } else {
            rng.random_range(cfg.io_cell_min..=cfg.io_cell_max)
        };
        cell_of.extend(std::iter::repeat_n(cells, size.min(cfg.n_io - cell_of.len())));
        cells += 1;
    }
    let templates: Vec<Vec<u64>> = (0..cfg.io_template_pool * cells)
        .map(|_| {
            let len = rng.random_range(9..=13);
            (0..len)
                .map(|_| {
                    if rng.random_bool(cfg.narrative_share) {
                        NARRATIVE_BASE + rng.random_range(0..cfg.narrative_lexicon) as u64
                    } else {
                        CAMPAIGN_BASE + cfg.campaign * 1000 + rng.random_range(0..cfg.campaign_lexicon) as u64
                    }
                })
                .collect()
        })
        .collect();
    let mut g = Gen {
        cfg,
        rng,
        zipfs,
        templates,
        cells,
    };

    let n = cfg.n_io + cfg.n_organic;
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut g.rng);
    // user k is IO iff k < n_io; ids[k] is its public number
    let user_id = |k: usize| format!("u{:05}", ids[k]);
    let topics: Vec<usize> = (0..n).map(|_| g.rng.random_range(0..cfg.organic_topics)).collect();
    let noise_rate: Vec<f64> = (0..n)
        .map(|k| {
            if k < cfg.n_io {
                g.rng.random_range(0.0..=2.0 * cfg.noise)
            } else {
                1.0
            }
        })
        .collect();
    let posts: Vec<usize> = (0..n).map(|_| g.rng.random_range(cfg.posts_min..=cfg.posts_max)).collect();

    let mut records: Vec<TraceRecord> = Vec::new();
    let mut originals: Vec<Original> = Vec::new();
    let mut retweet_slots: Vec<(usize, bool)> = Vec::new();
    for k in 0..n {
        for _ in 0..posts[k] {
            let organic_like = g.rng.random_bool(noise_rate[k]);
            if g.rng.random_bool(cfg.retweet_prob) {
                retweet_slots.push((k, organic_like));
                continue;
            }
            let cell = (!organic_like).then(|| g.pick_cell(cell_of[k]));
            let (text, (urls, hashtags)) = match cell {
                None => (g.organic_text(topics[k]), g.organic_entities(topics[k])),
                Some(c) => (g.io_text(c), g.io_entities(c)),
            };
            let timestamp = EPOCH_START + g.rng.random_range(0..SPAN_SECS);
            let popularity = g.popularity();
            originals.push(Original {
                idx: records.len(),
                topic: organic_like.then_some(topics[k]),
                cell,
            });
            records.push(TraceRecord {
                post_id: String::new(),
                user_id: user_id(k),
                timestamp,
                text,
                urls,
                hashtags,
                retweeted_post_id: None,
                retweeted_user_id: None,
                retweet_latency: None,
                popularity,
            });
        }
    }

    let per_cell = cfg.io_amplified_pool.div_ceil(cells);
    let mut amplified: Vec<Vec<usize>> = vec![Vec::new(); cells];
    for o in &originals {
        if let Some(c) = o.cell {
            if amplified[c].len() < per_cell {
                amplified[c].push(o.idx);
            }
        }
    }
    let all_amplified: Vec<usize> = amplified.concat();
    let mut by_topic: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for o in &originals {
        if let Some(t) = o.topic {
            by_topic.entry(t).or_default().push(o.idx);
        }
    }
    for (k, organic_like) in retweet_slots {
        let engaged = organic_like && g.rng.random_bool(cfg.organic_io_retweet);
        let target_io = (!organic_like || engaged) && !all_amplified.is_empty();
        let source = if target_io {
            let cell = if engaged { None } else { Some(g.pick_cell(cell_of[k])) };
            match cell.map(|c| &amplified[c]).filter(|p| !p.is_empty()) {
                Some(pool) => pool[g.rng.random_range(0..pool.len())],
                None => all_amplified[g.rng.random_range(0..all_amplified.len())],
            }
        } else {
            match by_topic.get(&topics[k]) {
                Some(pool) => pool[g.rng.random_range(0..pool.len())],
                None => continue,
            }
        };
        let fast = if target_io && !engaged { cfg.p_fast } else { cfg.organic_fast };
        let latency = if g.rng.random_bool(fast) {
            g.rng.random_range(1..=FAST_RETWEET_MAX_LATENCY)
        } else {
            g.rng.random_range(FAST_RETWEET_MAX_LATENCY + 1..=86_400)
        };
        let orig = &records[source];
        let rec = TraceRecord {
            post_id: String::new(),
            user_id: user_id(k),
            timestamp: orig.timestamp + latency as i64,
            text: orig.text.clone(),
            urls: Vec::new(),
            hashtags: Vec::new(),
            retweeted_post_id: Some(format!("#{source}")),
            retweeted_user_id: Some(orig.user_id.clone()),
            retweet_latency: Some(latency),
            popularity: 0,
        };
        records.push(rec);
    }

    // stable public post ids in time order
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| (records[i].timestamp, i));
    let mut post_id = vec![String::new(); records.len()];
    for (rank, &i) in order.iter().enumerate() {
        post_id[i] = format!("p{rank:07}");
    }
    for i in 0..records.len() {
        records[i].post_id = post_id[i].clone();
        if let Some(src) = records[i].retweeted_post_id.as_ref() {
            let s: usize = src[1..].parse().expect("internal source index");
            records[i].retweeted_post_id = Some(post_id[s].clone());
        }
    }
    let sorted: Vec<TraceRecord> = order.into_iter().map(|i| records[i].clone()).collect();

    let labels: BTreeMap<String, u8> = (0..n).map(|k| (user_id(k), u8::from(k < cfg.n_io))).collect();
    DatasetBundle::new(format!("synth-c{}-s{}", cfg.campaign, cfg.seed), sorted, labels, false)
}
