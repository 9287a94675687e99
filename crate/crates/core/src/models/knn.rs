use crate::data::Bag;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::pooling::bag_hausdorff;

/// Fraction of the `k` nearest training bags (Hausdorff distance) that carry
/// each class. Equal distances go to the lower training index.
pub fn knn_predict(train: &[Bag], query: &Matrix, k: usize) -> Result<Vec<f64>> {
    if train.is_empty() {
        return Err(Error::Config(
            "nearest-neighbour search over no training bags".into(),
        ));
    }
    if k == 0 || k > train.len() {
        return Err(Error::Config(format!(
            "k = {k} must lie in 1..={} (training bags)",
            train.len()
        )));
    }
    let mut dist = train
        .iter()
        .enumerate()
        .map(|(i, b)| Ok((bag_hausdorff(&b.instances, query)?, i)))
        .collect::<Result<Vec<_>>>()?;
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let classes = train[0].labels.len();
    let mut votes = vec![0usize; classes];
    for &(_, i) in &dist[..k] {
        for (v, &l) in votes.iter_mut().zip(&train[i].labels) {
            *v += l as usize;
        }
    }
    Ok(votes.into_iter().map(|v| v as f64 / k as f64).collect())
}
