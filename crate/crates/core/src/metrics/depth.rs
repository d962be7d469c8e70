//! Statistical depth of an embedding relative to a reference set, and the
//! Q-value comparing two sets.
//!
//! `D(x; F) = 2 - mean_{y in F}(1 - cos(x, y))`, in `[0, 2]`. A point that is
//! itself in `F` is included in the mean.
//!
//! `Q(F, G)` is the fraction of pairs `(x in F, y in G)` with
//! `D(x; F) < D(y; F)`, counting near-ties (within 1e-12) as one half.

use super::{EmbeddingVector, MetricsError};

const TIE_TOLERANCE: f64 = 1e-12;

fn check_dims(points: &[&EmbeddingVector], reference: &[EmbeddingVector]) -> Result<(), MetricsError> {
    let dim = reference[0].dimension();
    for p in points.iter().copied().chain(reference) {
        if p.dimension() != dim {
            return Err(MetricsError::DimensionMismatch(dim, p.dimension()));
        }
    }
    Ok(())
}

fn depth_unchecked(x: &EmbeddingVector, reference: &[EmbeddingVector]) -> f64 {
    let total: f64 = reference.iter().map(|y| 1.0 - x.cosine(y)).sum();
    2.0 - total / reference.len() as f64
}

pub fn depth(x: &EmbeddingVector, reference: &[EmbeddingVector]) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    check_dims(&[x], reference)?;
    Ok(depth_unchecked(x, reference))
}

pub fn q_value(reference: &[EmbeddingVector], other: &[EmbeddingVector]) -> Result<f64, MetricsError> {
    if reference.is_empty() || other.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    check_dims(&other.iter().collect::<Vec<_>>(), reference)?;
    let ref_depths: Vec<f64> = reference.iter().map(|x| depth_unchecked(x, reference)).collect();
    let other_depths: Vec<f64> = other.iter().map(|y| depth_unchecked(y, reference)).collect();
    // half-units keep the sum exact
    let mut half_units: u64 = 0;
    for &dx in &ref_depths {
        for &dy in &other_depths {
            if (dx - dy).abs() <= TIE_TOLERANCE {
                half_units += 1;
            } else if dx < dy {
                half_units += 2;
            }
        }
    }
    let pairs = (reference.len() as u64) * (other.len() as u64);
    Ok(half_units as f64 / (2 * pairs) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::normalized(values.to_vec()).unwrap()
    }

    #[test]
    fn self_depth_is_two() {
        let x = v(&[0.3, 0.4, 0.5]);
        assert!((depth(&x, std::slice::from_ref(&x)).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn axis_examples() {
        let f = [v(&[1.0, 0.0]), v(&[0.0, 1.0])];
        assert_eq!(depth(&v(&[1.0, 0.0]), &f).unwrap(), 1.5);
        assert_eq!(depth(&v(&[-1.0, 0.0]), &f).unwrap(), 0.5);
        assert_eq!(q_value(&f, &[v(&[-1.0, 0.0])]).unwrap(), 0.0);
        assert_eq!(q_value(&f, &f).unwrap(), 0.5);
    }

    #[test]
    fn errors() {
        let x = v(&[1.0, 0.0]);
        assert!(matches!(depth(&x, &[]), Err(MetricsError::EmptyReference)));
        assert!(matches!(
            q_value(&[], std::slice::from_ref(&x)),
            Err(MetricsError::EmptyReference)
        ));
        assert!(matches!(
            q_value(std::slice::from_ref(&x), &[]),
            Err(MetricsError::EmptyReference)
        ));
        assert!(matches!(
            depth(&x, &[v(&[1.0, 0.0, 0.0])]),
            Err(MetricsError::DimensionMismatch(3, 2))
        ));
    }
}
