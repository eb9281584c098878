//! N-way K-shot episode sampling.

use crate::data::synthetic::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::sample::LabeledSample;

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    /// `N * K` samples ordered by episode label, labels remapped into `0..N`.
    pub support: Vec<LabeledSample>,
    /// `N * Q` samples ordered by episode label.
    pub query: Vec<LabeledSample>,
    /// `classes[i]` is the dataset class behind episode label `i`.
    pub classes: Vec<usize>,
    pub support_ids: Vec<usize>,
    pub query_ids: Vec<usize>,
}

impl Episode {
    pub fn n_way(&self) -> usize {
        self.classes.len()
    }

    /// Episode label of a dataset class, if the class is in this episode.
    pub fn remap(&self, original: usize) -> Option<usize> {
        self.classes.iter().position(|&c| c == original)
    }
}

/// Draws `n_way` distinct classes, then `k_shot + query` distinct samples per
/// class, split into support and query.
pub fn sample_episode(
    dataset: &Dataset,
    n_way: usize,
    k_shot: usize,
    query: usize,
    rng: &mut RngStream,
) -> Result<Episode> {
    if n_way == 0 || k_shot == 0 {
        return Err(Error::invalid("episodes need n_way >= 1 and k_shot >= 1"));
    }
    let by_class = dataset.class_indices();
    let eligible: Vec<usize> = (0..by_class.len())
        .filter(|&c| by_class[c].len() >= k_shot + query)
        .collect();
    if eligible.len() < n_way {
        return Err(Error::InsufficientSamples(format!(
            "{} classes have {} samples, {n_way} needed",
            eligible.len(),
            k_shot + query
        )));
    }
    let classes: Vec<usize> = rng
        .choose_distinct(eligible.len(), n_way)?
        .into_iter()
        .map(|i| eligible[i])
        .collect();

    let mut episode = Episode {
        support: Vec::with_capacity(n_way * k_shot),
        query: Vec::with_capacity(n_way * query),
        classes: classes.clone(),
        support_ids: Vec::with_capacity(n_way * k_shot),
        query_ids: Vec::with_capacity(n_way * query),
    };
    for (label, &class) in classes.iter().enumerate() {
        let pool = &by_class[class];
        let picks = rng.choose_distinct(pool.len(), k_shot + query)?;
        for (j, &p) in picks.iter().enumerate() {
            let id = pool[p];
            let sample = LabeledSample::real(dataset.samples[id].x.clone(), label);
            if j < k_shot {
                episode.support.push(sample);
                episode.support_ids.push(id);
            } else {
                episode.query.push(sample);
                episode.query_ids.push(id);
            }
        }
    }
    Ok(episode)
}
