use std::fmt::Write as _;

use super::BagDataset;

/// Label-count histogram and per-class bag counts of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetStats {
    /// `labels_per_bag[i]` is the number of bags carrying `i + 1` labels.
    pub labels_per_bag: Vec<usize>,
    /// `(class index, bag count)`, most frequent first; ties by index.
    pub class_counts: Vec<(usize, usize)>,
}

pub fn dataset_stats(dataset: &BagDataset) -> DatasetStats {
    let mut labels_per_bag = Vec::new();
    for bag in dataset.bags() {
        let n = bag.label_count();
        if labels_per_bag.len() < n {
            labels_per_bag.resize(n, 0);
        }
        labels_per_bag[n - 1] += 1;
    }
    let mut class_counts: Vec<(usize, usize)> =
        dataset.class_counts().into_iter().enumerate().collect();
    class_counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    DatasetStats {
        labels_per_bag,
        class_counts,
    }
}

impl DatasetStats {
    /// `labels_per_bag,bags` rows.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("labels_per_bag,bags\n");
        for (i, n) in self.labels_per_bag.iter().enumerate() {
            writeln!(out, "{},{n}", i + 1).unwrap();
        }
        out
    }

    /// `rank,class_index,class_name,bags` rows, most frequent first.
    pub fn class_counts_csv(&self, classes: &[String]) -> String {
        let mut out = String::from("rank,class_index,class_name,bags\n");
        for (rank, (k, n)) in self.class_counts.iter().enumerate() {
            writeln!(out, "{},{k},{},{n}", rank + 1, classes[*k]).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_class_names, Bag};
    use crate::numerics::Matrix;

    fn ds(labels: &[&[bool]]) -> BagDataset {
        let k = labels[0].len();
        let bags = labels
            .iter()
            .enumerate()
            .map(|(i, l)| Bag::new(format!("b{i}"), Matrix::zeros(1, 1), l.to_vec()).unwrap())
            .collect();
        BagDataset::new(default_class_names(k), 1, bags).unwrap()
    }

    #[test]
    fn single_label_mass_at_one() {
        let s = dataset_stats(&ds(&[&[true, false], &[false, true], &[true, false]]));
        assert_eq!(s.labels_per_bag, vec![3]);
        assert_eq!(s.class_counts, vec![(0, 2), (1, 1)]);
    }

    #[test]
    fn one_two_three_labels() {
        let s = dataset_stats(&ds(&[
            &[true, false, false],
            &[true, true, false],
            &[true, true, true],
        ]));
        assert_eq!(s.labels_per_bag, vec![1, 1, 1]);
        assert_eq!(s.class_counts, vec![(0, 3), (1, 2), (2, 1)]);
        assert_eq!(s.histogram_csv(), "labels_per_bag,bags\n1,1\n2,1\n3,1\n");
        assert_eq!(
            s.class_counts_csv(&default_class_names(3)),
            "rank,class_index,class_name,bags\n1,0,class_0,3\n2,1,class_1,2\n3,2,class_2,1\n"
        );
    }
}
