/// Twice the Mann–Whitney U statistic (positive-over-negative wins count 2,
/// ties 1) together with the positive and negative counts.
pub fn mann_whitney_2u(scores: &[f64], labels: &[bool]) -> (u128, u64, u64) {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut two_u, mut neg_below, mut pos_total) = (0u128, 0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]].total_cmp(&scores[order[i]]).is_eq() {
            if labels[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        two_u += 2 * u128::from(pos) * u128::from(neg_below) + u128::from(pos) * u128::from(neg);
        neg_below += neg;
        pos_total += pos;
        i = j;
    }
    (two_u, pos_total, neg_below)
}

/// Probability that a random positive outranks a random negative, ties
/// counted one half. `None` unless both classes are present.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let (two_u, pos, neg) = mann_whitney_2u(scores, labels);
    if pos == 0 || neg == 0 {
        return None;
    }
    Some(two_u as f64 / (2 * u128::from(pos) * u128::from(neg)) as f64)
}
