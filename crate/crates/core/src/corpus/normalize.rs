use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Conversation, Corpus};

/// Which turns share normalization statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    /// All turns of a speaker id across the whole corpus.
    #[default]
    Speaker,
    /// Turns of a speaker within a single conversation.
    SpeakerPerConversation,
}

#[derive(Default)]
struct Moments {
    n: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

/// Z-scores every feature dimension over the turns of each speaker using the
/// population variance. Zero-variance dimensions map to 0.
pub fn normalize_per_speaker(corpus: &Corpus, mode: NormMode) -> Corpus {
    let dim = corpus.feat_dim();
    let key = |c: &Conversation, speaker: &str| stat_key(mode, &c.conv_id, speaker);

    // Two passes over the data: mean first, then centered second moment, so
    // large offsets do not cancel catastrophically.
    let mut means: HashMap<String, Moments> = HashMap::new();
    for c in corpus.conversations() {
        for t in &c.turns {
            let m = means.entry(key(c, &t.speaker)).or_insert_with(|| Moments {
                n: 0,
                sum: vec![0.0; dim],
                sum_sq: vec![0.0; dim],
            });
            m.n += 1;
            for (s, &x) in m.sum.iter_mut().zip(&t.features) {
                *s += x;
            }
        }
    }
    for m in means.values_mut() {
        let n = m.n as f64;
        m.sum.iter_mut().for_each(|s| *s /= n);
    }
    for c in corpus.conversations() {
        for t in &c.turns {
            let m = means.get_mut(&key(c, &t.speaker)).expect("speaker seen");
            for k in 0..dim {
                let d = t.features[k] - m.sum[k];
                m.sum_sq[k] += d * d;
            }
        }
    }
    let stats: HashMap<String, (Vec<f64>, Vec<f64>)> = means
        .into_iter()
        .map(|(k, m)| {
            let n = m.n as f64;
            let sd = m.sum_sq.iter().map(|s| (s / n).sqrt()).collect();
            (k, (m.sum, sd))
        })
        .collect();

    corpus.map_conversations(|convs| {
        convs
            .iter()
            .map(|c| {
                let mut c = c.clone();
                let id = c.conv_id.clone();
                for t in &mut c.turns {
                    let (mean, sd) = &stats[&stat_key(mode, &id, &t.speaker)];
                    for (j, x) in t.features.iter_mut().enumerate() {
                        *x = if sd[j] > 1e-12 * (1.0 + mean[j].abs()) {
                            (*x - mean[j]) / sd[j]
                        } else {
                            0.0
                        };
                    }
                }
                c
            })
            .collect()
    })
}

fn stat_key(mode: NormMode, conv_id: &str, speaker: &str) -> String {
    match mode {
        NormMode::Speaker => speaker.to_string(),
        NormMode::SpeakerPerConversation => format!("{conv_id}\u{0}{speaker}"),
    }
}
