//! Rank-based discrimination: Harrell's concordance, its truncated
//! variant, and the horizon AUROC.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Concordance {
    pub c: f64,
    pub comparable: u64,
    pub concordant: u64,
    pub tied: u64,
}

/// Fenwick tree of counts over score ranks.
struct Fenwick(Vec<u64>);

impl Fenwick {
    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count at ranks < i.
    fn prefix(&self, mut i: usize) -> u64 {
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

fn dense_ranks(v: &[f64]) -> (Vec<usize>, usize) {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let ranks = v
        .iter()
        .map(|x| sorted.partition_point(|s| s.total_cmp(x).is_lt()))
        .collect();
    (ranks, sorted.len())
}

/// Harrell's C; higher scores mean longer predicted survival.
pub fn harrell_c(scores: &[f64], times: &[f64], events: &[bool]) -> Result<Concordance> {
    let n = scores.len();
    if times.len() != n || events.len() != n {
        return Err(Error::InvalidInput("concordance needs matching inputs".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("concordance scores contain NaN".into()));
    }
    let (ranks, n_ranks) = dense_ranks(scores);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
    let mut tree = Fenwick(vec![0; n_ranks + 1]);
    let (mut comparable, mut concordant, mut tied) = (0u64, 0u64, 0u64);
    let mut inserted = 0u64;
    let mut i = 0;
    // Walk from the longest time down; the tree holds strictly later times.
    while i < n {
        let t = times[order[i]];
        let mut j = i;
        while j < n && times[order[j]] == t {
            j += 1;
        }
        for &p in &order[i..j] {
            if events[p] {
                let below = tree.prefix(ranks[p]);
                let upto = tree.prefix(ranks[p] + 1);
                comparable += inserted;
                concordant += inserted - upto;
                tied += upto - below;
            }
        }
        for &p in &order[i..j] {
            tree.add(ranks[p]);
            inserted += 1;
        }
        i = j;
    }
    if comparable == 0 {
        return Err(Error::InvalidInput("no comparable pairs".into()));
    }
    Ok(Concordance {
        c: (concordant as f64 + 0.5 * tied as f64) / comparable as f64,
        comparable,
        concordant,
        tied,
    })
}

/// Harrell's C after administrative censoring at `tau`.
pub fn c_tau(scores: &[f64], times: &[f64], events: &[bool], tau: f64) -> Result<Concordance> {
    let t: Vec<f64> = times.iter().map(|&x| x.min(tau)).collect();
    let e: Vec<bool> = times.iter().zip(events).map(|(&x, &d)| d && x <= tau).collect();
    harrell_c(scores, &t, &e)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Auroc {
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// Area under the ROC curve for events by `tau_star`, via the Mann-Whitney
/// statistic with average ranks. Patients censored by `tau_star` are
/// excluded.
pub fn horizon_auroc(event_probs: &[f64], times: &[f64], events: &[bool], tau_star: f64) -> Result<Auroc> {
    let n = event_probs.len();
    if times.len() != n || events.len() != n {
        return Err(Error::InvalidInput("AUROC needs matching inputs".into()));
    }
    let mut kept: Vec<(f64, bool)> = vec![];
    for i in 0..n {
        if times[i] > tau_star {
            kept.push((event_probs[i], false));
        } else if events[i] {
            kept.push((event_probs[i], true));
        }
    }
    let pos = kept.iter().filter(|k| k.1).count();
    let neg = kept.len() - pos;
    if pos == 0 {
        return Err(Error::InvalidInput(
            "AUROC: no positive (event by horizon) patients".into(),
        ));
    }
    if neg == 0 {
        return Err(Error::InvalidInput(
            "AUROC: no negative (event-free past horizon) patients".into(),
        ));
    }
    if kept.iter().any(|k| k.0.is_nan()) {
        return Err(Error::InvalidInput("AUROC scores contain NaN".into()));
    }
    kept.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < kept.len() {
        let mut j = i;
        while j < kept.len() && kept[j].0 == kept[i].0 {
            j += 1;
        }
        // Ranks i+1..=j share their average.
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg * kept[i..j].iter().filter(|k| k.1).count() as f64;
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(Auroc {
        auc: u / (pos as f64 * neg as f64),
        positives: pos,
        negatives: neg,
    })
}
