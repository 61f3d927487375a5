//! Seeded synthetic data with planted ground truth, for simulation checks of
//! the estimators and for offline end-to-end runs.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{LureLabel, Narrative, ProbeItem, PROBES_PER_SESSION};
use crate::recognition::RecognitionTrial;

/// Participants by clauses; participant `p` recalls clause `c` with
/// probability `q[c]`, independently.
pub fn bernoulli_matrix(q: &[f64], n_participants: usize, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_participants)
        .map(|_| {
            q.iter()
                .map(|&p| rng.random_bool(p.clamp(0.0, 1.0)))
                .collect()
        })
        .collect()
}

/// Recognition trials from the two-state model: each participant retains a
/// uniformly random `m_star`-subset of the `l` clauses, says yes to retained
/// clauses and guesses yes with probability `g` for everything else (lures
/// included). Probes are 10 distinct items from the `2l` pool, so behavior is
/// independent of probe position.
pub fn recognition_sessions(
    narrative_id: &str,
    l: usize,
    m_star: usize,
    g: f64,
    n_participants: usize,
    seed: u64,
) -> Vec<RecognitionTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_participants * PROBES_PER_SESSION);
    for p in 0..n_participants {
        let retained = sample(&mut rng, l, m_star.min(l)).into_vec();
        let picks = sample(&mut rng, 2 * l, PROBES_PER_SESSION.min(2 * l));
        for (i, pos) in picks.iter().zip(1u8..) {
            let (item, is_old, known) = if i < l {
                let clause_index = i as u32 + 1;
                (ProbeItem::Old { clause_index }, true, retained.contains(&i))
            } else {
                let label = LureLabel((i - l) as u32 + 1);
                (ProbeItem::New { label }, false, false)
            };
            let response_yes = known || rng.random_bool(g);
            out.push(RecognitionTrial {
                participant_id: alloc::format!("p{p:04}"),
                narrative_id: narrative_id.to_string(),
                probe_position: pos,
                item,
                is_old,
                response_yes,
                timestamp: String::new(),
            });
        }
    }
    out
}

/// `a * x + b + u` with `u` uniform on `[-half_width, half_width]`.
pub fn planted_linear(x: &[f64], a: f64, b: f64, half_width: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    x.iter()
        .map(|&v| a * v + b + half_width * (2.0 * rng.random::<f64>() - 1.0))
        .collect()
}

/// Standard normal draws (Box-Muller).
pub fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random();
            crate::math::sqrt(-2.0 * crate::math::ln(u1))
                * libm::cos(2.0 * core::f64::consts::PI * u2)
        })
        .collect()
}

/// A recall text that repeats the clauses with the given original indices
/// verbatim, in original order.
pub fn verbatim_recall(narrative: &Narrative, recalled: &[u32]) -> String {
    let mut idx: Vec<u32> = recalled.to_vec();
    idx.sort_unstable();
    idx.dedup();
    let parts: Vec<&str> = idx
        .iter()
        .filter_map(|&k| narrative.clause(k).map(|c| c.text.as_str()))
        .collect();
    parts.join(" ")
}

/// Recall texts for a population whose recall probability falls linearly from
/// `q_first` to `q_last` over the presentation order.
pub fn recall_population(
    narrative: &Narrative,
    q_first: f64,
    q_last: f64,
    n_participants: usize,
    seed: u64,
) -> Vec<String> {
    let l = narrative.len();
    let q: Vec<f64> = (0..l)
        .map(|i| {
            let t = if l > 1 {
                i as f64 / (l - 1) as f64
            } else {
                0.0
            };
            q_first + (q_last - q_first) * t
        })
        .collect();
    let order = narrative.presentation_map();
    bernoulli_matrix(&q, n_participants, seed)
        .into_iter()
        .map(|row| {
            let picked: Vec<u32> = row
                .iter()
                .zip(&order)
                .filter(|(r, _)| **r)
                .map(|(_, &k)| k)
                .collect();
            verbatim_recall(narrative, &picked)
        })
        .collect()
}
