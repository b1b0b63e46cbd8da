use rosepoint_core::{argmax_row, ClassScores, PartLabel, NUM_CLASSES};

use crate::{PreprocessError, Result, SampledBlock};

/// Assigns each source point the argmax of the element-wise maximum over
/// every score row recorded for it.
pub fn merge_predictions(cloud_size: usize, per_block_scores: &[(SampledBlock, ClassScores)]) -> Result<Vec<PartLabel>> {
    let mut best: Vec<Option<[f64; NUM_CLASSES]>> = vec![None; cloud_size];
    for (b, (block, scores)) in per_block_scores.iter().enumerate() {
        if scores.len() != block.source_indices.len() {
            return Err(PreprocessError::Argument(format!(
                "block {b}: {} score rows for {} points",
                scores.len(),
                block.source_indices.len()
            )));
        }
        for (&i, row) in block.source_indices.iter().zip(scores.rows()) {
            let slot = best.get_mut(i).ok_or_else(|| {
                PreprocessError::Argument(format!("block {b}: source index {i} out of range for {cloud_size} points"))
            })?;
            *slot = Some(match *slot {
                None => *row,
                Some(acc) => std::array::from_fn(|k| acc[k].max(row[k])),
            });
        }
    }
    let missing: Vec<usize> = best.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(i, _)| i).collect();
    if !missing.is_empty() {
        return Err(PreprocessError::Coverage { missing });
    }
    Ok(best.into_iter().map(|r| argmax_row(&r.expect("checked"))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(sources: Vec<usize>) -> SampledBlock {
        SampledBlock {
            positions: vec![[0.0; 3]; sources.len()],
            source_indices: sources,
            labels: None,
            block_origin: [0.0; 3],
            edge: 10.0,
            offset: 0.0,
        }
    }

    #[test]
    fn single_row_argmax() {
        let scores = ClassScores::new(vec![[0.1, 0.7, 0.2]]).unwrap();
        assert_eq!(merge_predictions(1, &[(block(vec![0]), scores)]).unwrap(), vec![PartLabel::Leaf]);
    }

    #[test]
    fn max_then_argmax_across_offsets() {
        let a = ClassScores::new(vec![[0.6, 0.3, 0.1]]).unwrap();
        let b = ClassScores::new(vec![[0.1, 0.2, 0.7]]).unwrap();
        let out = merge_predictions(1, &[(block(vec![0]), a), (block(vec![0]), b)]).unwrap();
        assert_eq!(out, vec![PartLabel::Stem]);
    }

    #[test]
    fn ties_go_to_lowest_code() {
        let scores = ClassScores::new(vec![[0.5, 0.5, 0.0]]).unwrap();
        assert_eq!(merge_predictions(1, &[(block(vec![0]), scores)]).unwrap(), vec![PartLabel::Flower]);
    }

    #[test]
    fn uncovered_points_are_reported() {
        let scores = ClassScores::new(vec![[1.0, 0.0, 0.0]]).unwrap();
        match merge_predictions(3, &[(block(vec![1]), scores)]) {
            Err(PreprocessError::Coverage { missing }) => assert_eq!(missing, vec![0, 2]),
            other => panic!("{other:?}"),
        }
    }
}
