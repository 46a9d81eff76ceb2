//! Synthetic review-data generator with known isolated and relational
//! ground-truth effects.
//!
//! Each submission has one writing author; interference flows through an
//! explicit collaboration network, so the effect of setting all of a
//! unit's collaborators treated versus none is `rel_effect` exactly, and
//! the own-treatment effect is the per-venue-type isolated effect exactly.
//! Prestige is confounded with qualification, and collaboration is
//! assortative in prestige, so naive and universal-table estimates are
//! biased while covariate adjustment recovers the truth.

use std::collections::BTreeSet;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{CarlError, Result};
use crate::linalg;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_authors: usize,
    pub n_institutions: usize,
    pub n_papers: usize,
    pub n_venues: usize,
    pub seed: u64,
    pub iso_effect_single: f64,
    pub iso_effect_double: f64,
    pub rel_effect: f64,
    pub noise_sd: f64,
    /// Controls collaboration density: expected collaborators per author
    /// is roughly this value.
    pub mean_authors_per_paper: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_authors: 1000,
            n_institutions: 20,
            n_papers: 7500,
            n_venues: 10,
            seed: 0,
            iso_effect_single: 1.0,
            iso_effect_double: 0.0,
            rel_effect: 0.5,
            noise_sd: 1.0,
            mean_authors_per_paper: 2.5,
        }
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CarlError::Domain(format!("bad synth config: {e}")))
    }

    fn validate(&self) -> Result<()> {
        if self.n_authors == 0
            || self.n_papers == 0
            || self.n_venues == 0
            || self.n_institutions == 0
        {
            return Err(CarlError::Domain("all synth counts must be >= 1".into()));
        }
        if self.noise_sd < 0.0 {
            return Err(CarlError::Domain("noise_sd must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectTriple {
    pub aie: f64,
    pub are: f64,
    pub aoe: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub single: EffectTriple,
    pub double: EffectTriple,
    pub config_echo: SynthConfig,
}

/// The schema the generator writes alongside its data.
pub const SYNTH_SCHEMA: &str = "\
entity Person
entity Submission
entity Conference
relationship Author(Person, Submission)
relationship Collab(Person, Person)
relationship Submitted(Submission, Conference)
attribute Prestige over Person domain binary
attribute Qualification over Person domain real
attribute Score over Submission domain real
attribute Blind over Conference domain categorical(Single, Double)
attribute Quality over Submission domain real unobserved
";

/// The causal rules matching the generator's structural equations.
pub const SYNTH_MODEL: &str = "\
Prestige[A] <= Qualification[A] WHERE Person(A)
Quality[S] <= Qualification[A] WHERE Author(A,S)
Score[S] <= Quality[S] WHERE Submission(S)
Score[S] <= Prestige[A] WHERE Author(A,S)
Score[S] <= Prestige[B] WHERE Author(A,S), Collab(A,B)
Score[S] <= Qualification[B] WHERE Author(A,S), Collab(A,B)
";

/// Weight of the best collaborator's qualification in a score. The channel
/// confounds the peer-treatment effect (collaborator prestige tracks
/// collaborator qualification), and being a maximum it rewards embeddings
/// that keep per-position information.
const COLLAB_QUAL_EFFECT: f64 = 0.8;

/// How a peer-treatment vector enters a score: mostly the treated
/// fraction, partly whether any peer is treated at all. The all-vs-none
/// contrast is 1 regardless, so the declared relational truth is exact,
/// while the nonlinear component separates richer embeddings from the
/// plain mean in finite samples.
fn peer_term(treated: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let frac = treated as f64 / total as f64;
    let any = f64::from(treated > 0);
    0.6 * frac + 0.4 * any
}

struct Generated {
    qualification: Vec<f64>,
    prestige: Vec<u8>,
    collaborators: Vec<Vec<usize>>,
    paper_author: Vec<usize>,
    paper_venue: Vec<usize>,
    scores: Vec<f64>,
}

fn generate_data(config: &SynthConfig) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_authors;

    // Qualifications cluster by institution and follow a (mild) lognormal
    // law.
    let inst_effect: Vec<f64> = {
        let normal = Normal::new(0.0, 0.15).unwrap();
        (0..config.n_institutions)
            .map(|_| normal.sample(&mut rng))
            .collect()
    };
    let noise = Normal::new(0.0, 0.2).unwrap();
    let institution: Vec<usize> = (0..n)
        .map(|_| rng.gen_range(0..config.n_institutions))
        .collect();
    let qualification: Vec<f64> = (0..n)
        .map(|i| (3.0 + inst_effect[institution[i]] + noise.sample(&mut rng)).exp())
        .collect();

    // Quality is linear in the observed qualification (standardized for
    // scale), so conditioning on qualification blocks the confounding
    // exactly; the treatment probability is linear in the same scale,
    // which keeps peer exposures mean-independent of how the collaborator
    // qualifications are arranged around their average.
    let q_mu = linalg::mean(&qualification);
    let q_sd = {
        let v = linalg::pop_variance(&qualification);
        if v > 0.0 {
            v.sqrt()
        } else {
            1.0
        }
    };
    let quality: Vec<f64> = qualification.iter().map(|q| (q - q_mu) / q_sd).collect();
    let prestige: Vec<u8> = quality
        .iter()
        .map(|&z| u8::from(rng.gen_bool((0.5 + 0.25 * z).clamp(0.02, 0.98))))
        .collect();

    // Collaboration network: a near-regular graph built from repeated
    // rounds of assortative matching. Each round sorts authors by prestige
    // plus jitter (so most adjacent pairs share prestige) and pairs
    // neighbors. Every author gets at least one collaborator, and the
    // shared degree keeps peer-set sizes homogeneous.
    let degree = (config.mean_authors_per_paper.round() as usize).max(1);
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    if n > 1 {
        for _ in 0..degree {
            let mut order: Vec<(f64, usize)> = (0..n)
                .map(|x| (f64::from(prestige[x]) + rng.gen_range(0.0..2.0), x))
                .collect();
            order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let mut i = 0;
            while i + 1 < n {
                let (a, b) = (order[i].1, order[i + 1].1);
                let key = (a.min(b), a.max(b));
                if edges.contains(&key) && i + 2 < n {
                    // Swap in the next candidate to avoid a duplicate edge.
                    let c = order[i + 2].1;
                    let alt = (a.min(c), a.max(c));
                    if !edges.contains(&alt) {
                        edges.insert(alt);
                        order.swap(i + 1, i + 2);
                        i += 2;
                        continue;
                    }
                }
                edges.insert(key);
                i += 2;
            }
        }
    }
    let mut collaborators: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in &edges {
        collaborators[a].push(b);
        collaborators[b].push(a);
    }
    if n > 1 {
        for x in 0..n {
            if collaborators[x].is_empty() {
                let y = if x == 0 { 1 } else { x - 1 };
                collaborators[x].push(y);
                collaborators[y].push(x);
            }
        }
    }
    for c in &mut collaborators {
        c.sort_unstable();
        c.dedup();
    }

    let paper_author: Vec<usize> = (0..config.n_papers).map(|_| rng.gen_range(0..n)).collect();
    let paper_venue: Vec<usize> = (0..config.n_papers)
        .map(|_| rng.gen_range(0..config.n_venues))
        .collect();

    let peer_terms: Vec<f64> = (0..n)
        .map(|x| {
            let treated = collaborators[x]
                .iter()
                .filter(|&&p| prestige[p] == 1)
                .count();
            peer_term(treated, collaborators[x].len())
        })
        .collect();

    // Best collaborator's qualification, standardized on the same raw
    // scale so linear adjustment on the padded (sorted) channel is exact.
    let collab_best: Vec<f64> = (0..n)
        .map(|x| {
            let best = collaborators[x]
                .iter()
                .map(|&b| (qualification[b] - q_mu) / q_sd)
                .fold(f64::NEG_INFINITY, f64::max);
            if best.is_finite() {
                best
            } else {
                0.0 // isolated unit; cannot occur for n > 1
            }
        })
        .collect();

    let score_noise = Normal::new(0.0, config.noise_sd.max(1e-12)).unwrap();
    let scores: Vec<f64> = (0..config.n_papers)
        .map(|s| {
            let a = paper_author[s];
            let iso = if venue_is_single(paper_venue[s], config.n_venues) {
                config.iso_effect_single
            } else {
                config.iso_effect_double
            };
            let mut score = quality[a]
                + COLLAB_QUAL_EFFECT * collab_best[a]
                + iso * f64::from(prestige[a])
                + config.rel_effect * peer_terms[a]
                + if config.noise_sd > 0.0 {
                    score_noise.sample(&mut rng)
                } else {
                    0.0
                };
            if config.noise_sd <= 0.1 {
                score = score.clamp(0.0, 1.0);
            }
            score
        })
        .collect();

    Generated {
        qualification,
        prestige,
        collaborators,
        paper_author,
        paper_venue,
        scores,
    }
}

fn venue_is_single(venue: usize, n_venues: usize) -> bool {
    venue < n_venues.div_ceil(2)
}

fn author_name(i: usize) -> String {
    format!("a{i:05}")
}

fn paper_name(i: usize) -> String {
    format!("p{i:06}")
}

fn venue_name(i: usize) -> String {
    format!("v{i:03}")
}

/// Writes the full data directory (skeleton and attribute CSVs, schema,
/// model, `ground_truth.json`) and returns the declared ground truth.
pub fn generate(config: &SynthConfig, out_dir: &Path) -> Result<GroundTruth> {
    config.validate()?;
    let data = generate_data(config);
    std::fs::create_dir_all(out_dir)?;

    let write = |name: &str, content: String| -> Result<()> {
        std::fs::write(out_dir.join(name), content)?;
        Ok(())
    };

    let mut person = String::from("Person\n");
    let mut prestige = String::from("Person,value\n");
    let mut qualification = String::from("Person,value\n");
    for i in 0..config.n_authors {
        person.push_str(&format!("{}\n", author_name(i)));
        prestige.push_str(&format!("{},{}\n", author_name(i), data.prestige[i]));
        qualification.push_str(&format!(
            "{},{:.6}\n",
            author_name(i),
            data.qualification[i]
        ));
    }
    write("Person.csv", person)?;
    write("Prestige.csv", prestige)?;
    write("Qualification.csv", qualification)?;

    let mut submission = String::from("Submission\n");
    let mut score = String::from("Submission,value\n");
    let mut author = String::from("Person,Submission\n");
    let mut submitted = String::from("Submission,Conference\n");
    for s in 0..config.n_papers {
        submission.push_str(&format!("{}\n", paper_name(s)));
        score.push_str(&format!("{},{:.9}\n", paper_name(s), data.scores[s]));
        author.push_str(&format!(
            "{},{}\n",
            author_name(data.paper_author[s]),
            paper_name(s)
        ));
        submitted.push_str(&format!(
            "{},{}\n",
            paper_name(s),
            venue_name(data.paper_venue[s])
        ));
    }
    write("Submission.csv", submission)?;
    write("Score.csv", score)?;
    write("Author.csv", author)?;
    write("Submitted.csv", submitted)?;

    let mut conference = String::from("Conference\n");
    let mut blind = String::from("Conference,value\n");
    for v in 0..config.n_venues {
        conference.push_str(&format!("{}\n", venue_name(v)));
        blind.push_str(&format!(
            "{},{}\n",
            venue_name(v),
            if venue_is_single(v, config.n_venues) {
                "Single"
            } else {
                "Double"
            }
        ));
    }
    write("Conference.csv", conference)?;
    write("Blind.csv", blind)?;

    let mut collab = String::from("Person,Person\n");
    for (x, peers) in data.collaborators.iter().enumerate() {
        for &y in peers {
            collab.push_str(&format!("{},{}\n", author_name(x), author_name(y)));
        }
    }
    write("Collab.csv", collab)?;

    write("schema.carlschema", SYNTH_SCHEMA.to_string())?;
    write("model.carl", SYNTH_MODEL.to_string())?;

    let truth = GroundTruth {
        single: EffectTriple {
            aie: config.iso_effect_single,
            are: config.rel_effect,
            aoe: config.iso_effect_single + config.rel_effect,
        },
        double: EffectTriple {
            aie: config.iso_effect_double,
            are: config.rel_effect,
            aoe: config.iso_effect_double + config.rel_effect,
        },
        config_echo: config.clone(),
    };
    write(
        "ground_truth.json",
        serde_json::to_string_pretty(&truth).expect("ground truth serializes") + "\n",
    )?;

    Ok(truth)
}
