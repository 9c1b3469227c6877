use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Conv1x1, FeatureMap};

/// Top-down propagation over fused pyramid levels (finest first).
///
/// Walking from the coarsest level down, each finer level becomes
/// `lateral[l](upsample(refined[l + 1])) + levels[l]`. The coarsest level is
/// returned unchanged. `lateral[l]` maps level `l + 1` channels to level `l`
/// channels. When a finer level has odd size, the upsampled map is cropped
/// to it.
pub fn pyramid_propagate<T: Scalar>(
    levels: &[FeatureMap<T>],
    lateral: &[Conv1x1<T>],
) -> Result<Vec<FeatureMap<T>>> {
    if levels.is_empty() {
        return Ok(Vec::new());
    }
    if lateral.len() + 1 != levels.len() {
        return Err(Error::PyramidShape(format!(
            "{} levels need {} lateral convs, got {}",
            levels.len(),
            levels.len() - 1,
            lateral.len()
        )));
    }
    for l in 0..levels.len() - 1 {
        let (fine, coarse) = (&levels[l], &levels[l + 1]);
        if coarse.height() != fine.height().div_ceil(2)
            || coarse.width() != fine.width().div_ceil(2)
        {
            return Err(Error::PyramidShape(format!(
                "level {} is {}x{}, cannot upsample onto {}x{}",
                l + 1,
                coarse.height(),
                coarse.width(),
                fine.height(),
                fine.width()
            )));
        }
        let conv = &lateral[l];
        if conv.in_channels() != coarse.channels() || conv.out_channels() != fine.channels() {
            return Err(Error::PyramidShape(format!(
                "lateral conv {l} maps {}->{} channels, levels have {}->{}",
                conv.in_channels(),
                conv.out_channels(),
                coarse.channels(),
                fine.channels()
            )));
        }
    }

    let mut refined = levels.to_vec();
    for l in (0..levels.len() - 1).rev() {
        let fine = &levels[l];
        let mut up = refined[l + 1].upsample_nearest2x();
        if up.height() != fine.height() || up.width() != fine.width() {
            up = up.crop(fine.height(), fine.width())?;
        }
        refined[l] = lateral[l].apply(&up)?.add(fine)?;
    }
    Ok(refined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_map, seeded};

    #[test]
    fn single_level_unchanged() {
        let mut rng = seeded(4);
        let f: FeatureMap<f64> = random_map(&mut rng, 2, 3, 3);
        assert_eq!(
            pyramid_propagate(std::slice::from_ref(&f), &[]).unwrap(),
            vec![f]
        );
    }

    #[test]
    fn zero_lateral_keeps_levels() {
        let mut rng = seeded(9);
        let levels: Vec<FeatureMap<f64>> = vec![
            random_map(&mut rng, 2, 8, 6),
            random_map(&mut rng, 3, 4, 3),
            random_map(&mut rng, 3, 2, 2),
        ];
        let lateral = vec![Conv1x1::zeros(2, 3).unwrap(), Conv1x1::zeros(3, 3).unwrap()];
        assert_eq!(pyramid_propagate(&levels, &lateral).unwrap(), levels);
    }

    #[test]
    fn two_level_hand_evaluation() {
        let coarse = FeatureMap::from_vec(1, 1, 1, vec![2.0f64]).unwrap();
        let fine = FeatureMap::new(1, 2, 2, 1.0).unwrap();
        let out =
            pyramid_propagate(&[fine, coarse.clone()], &[Conv1x1::identity(1).unwrap()]).unwrap();
        assert_eq!(out[0].data(), &[3.0; 4]);
        assert_eq!(out[1], coarse);
    }

    #[test]
    fn cascades_from_the_top() {
        // 4x4 <- 2x2 <- 1x1, identity convs: the top value reaches level 0
        let l2 = FeatureMap::from_vec(1, 1, 1, vec![5.0f64]).unwrap();
        let l1 = FeatureMap::new(1, 2, 2, 1.0).unwrap();
        let l0 = FeatureMap::new(1, 4, 4, 0.5).unwrap();
        let id = Conv1x1::identity(1).unwrap();
        let out = pyramid_propagate(&[l0, l1, l2], &[id.clone(), id]).unwrap();
        assert_eq!(out[1].data(), &[6.0; 4]);
        assert_eq!(out[0].data(), &[6.5; 16]);
    }

    #[test]
    fn odd_sizes_crop() {
        let l0 = FeatureMap::<f64>::new(1, 3, 5, 1.0).unwrap();
        let l1 = FeatureMap::<f64>::new(1, 2, 3, 2.0).unwrap();
        let out = pyramid_propagate(&[l0, l1], &[Conv1x1::identity(1).unwrap()]).unwrap();
        assert_eq!(out[0].shape(), (1, 3, 5));
        assert!(out[0].data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn mismatches_rejected() {
        let l0 = FeatureMap::<f64>::zeros(1, 4, 4).unwrap();
        let l1 = FeatureMap::<f64>::zeros(1, 3, 2).unwrap();
        let id = Conv1x1::identity(1).unwrap();
        assert!(matches!(
            pyramid_propagate(&[l0.clone(), l1], std::slice::from_ref(&id)),
            Err(Error::PyramidShape(_))
        ));
        let l1 = FeatureMap::<f64>::zeros(2, 2, 2).unwrap();
        assert!(matches!(
            pyramid_propagate(&[l0.clone(), l1.clone()], &[id]),
            Err(Error::PyramidShape(_))
        ));
        assert!(pyramid_propagate(&[l0, l1], &[]).is_err());
    }
}
