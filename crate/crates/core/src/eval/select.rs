use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::manifest::Split;
use crate::store::Dataset;
use crate::train::Task;

use super::metrics::{auroc, predict};

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate<T> {
    pub epoch: usize,
    pub val_auroc: f64,
    pub item: T,
}

/// Highest validation AUROC; ties go to the earliest epoch.
pub fn select_best<T>(candidates: Vec<Candidate<T>>) -> Result<Candidate<T>> {
    let mut best: Option<Candidate<T>> = None;
    for c in candidates {
        let better = match &best {
            None => true,
            Some(b) => c.val_auroc > b.val_auroc || (c.val_auroc == b.val_auroc && c.epoch < b.epoch),
        };
        if better {
            best = Some(c);
        }
    }
    best.ok_or_else(|| Error::Metric("no checkpoints to select from".into()))
}

/// Validation AUROC of every classifier checkpoint on `task`.
pub fn score_checkpoints<'a>(
    checkpoints: &'a [Checkpoint],
    data: &Dataset,
    task: &Task,
) -> Result<Vec<Candidate<&'a Checkpoint>>> {
    let val = task.records(&data.manifest, Split::Val);
    let labels = task.labels(&val)?;
    checkpoints
        .iter()
        .map(|ck| {
            let clf = ck.restore_classifier::<f32>()?;
            let val_auroc = auroc(&predict(&clf, data, &val)?, &labels)?;
            Ok(Candidate {
                epoch: ck.epoch as usize,
                val_auroc,
                item: ck,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(epoch: usize, val_auroc: f64) -> Candidate<usize> {
        Candidate {
            epoch,
            val_auroc,
            item: epoch,
        }
    }

    #[test]
    fn single_candidate_is_chosen() {
        assert_eq!(select_best(vec![c(3, 50.0)]).unwrap().epoch, 3);
    }

    #[test]
    fn increasing_scores_pick_the_last() {
        assert_eq!(select_best(vec![c(1, 60.0), c(2, 70.0), c(3, 80.0)]).unwrap().epoch, 3);
    }

    #[test]
    fn ties_pick_the_earliest_epoch_in_any_order() {
        assert_eq!(select_best(vec![c(4, 80.0), c(2, 80.0), c(3, 70.0)]).unwrap().epoch, 2);
    }

    #[test]
    fn empty_list_is_an_error() {
        assert!(select_best::<usize>(vec![]).is_err());
    }
}
