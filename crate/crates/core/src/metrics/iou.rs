use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::raster::Mask;
use crate::tiling::TileId;

/// |A ∩ B| / |A ∪ B|, defined as 1 when both masks are empty.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64, MetricsError> {
    let (inter, union) = iou_counts(a, b)?;
    Ok(ratio(inter, union))
}

pub fn iou_counts(a: &Mask, b: &Mask) -> Result<(u64, u64), MetricsError> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(MetricsError::Dimension(format!(
            "masks {}x{} and {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(a.overlap(b))
}

fn ratio(inter: u64, union: u64) -> f64 {
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileIou {
    pub tile: TileId,
    pub intersection: u64,
    pub union: u64,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiouResult {
    pub miou: f64,
    pub per_tile: Vec<TileIou>,
}

/// Mean IoU over mask pairs matched by tile address.
pub fn miou(a: &[(TileId, Mask)], b: &[(TileId, Mask)]) -> Result<MiouResult, MetricsError> {
    let left: BTreeMap<TileId, &Mask> = a.iter().map(|(t, m)| (*t, m)).collect();
    let right: BTreeMap<TileId, &Mask> = b.iter().map(|(t, m)| (*t, m)).collect();
    let mut unpaired: Vec<TileId> = left.keys().filter(|t| !right.contains_key(t)).copied().collect();
    unpaired.extend(right.keys().filter(|t| !left.contains_key(t)));
    if !unpaired.is_empty() {
        unpaired.sort();
        return Err(MetricsError::Unpaired(unpaired));
    }
    if left.is_empty() {
        return Err(MetricsError::TooFewSamples(0));
    }
    let mut per_tile = Vec::with_capacity(left.len());
    for (tile, ma) in &left {
        let (intersection, union) = iou_counts(ma, right[tile])?;
        per_tile.push(TileIou { tile: *tile, intersection, union, iou: ratio(intersection, union) });
    }
    let miou = per_tile.iter().map(|p| p.iou).sum::<f64>() / per_tile.len() as f64;
    Ok(MiouResult { miou, per_tile })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x0: u32, x1: u32) -> Mask {
        Mask::from_fn(20, 20, |x, y| x >= x0 && x < x1 && y < 10)
    }

    #[test]
    fn basic_cases() {
        let a = rect(0, 10);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &rect(10, 20)).unwrap(), 0.0);
        // 100 and 100 pixels overlapping in 50.
        assert_eq!(iou(&a, &rect(5, 15)).unwrap(), 50.0 / 150.0);
        let empty = Mask::new(20, 20);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
        assert_eq!(iou(&a, &empty).unwrap(), 0.0);
        assert!(iou(&a, &Mask::new(10, 10)).is_err());
    }

    #[test]
    fn pairs_by_address() {
        let t = |x| TileId::new(3, x, 1).unwrap();
        let a = vec![(t(0), rect(0, 10)), (t(1), rect(0, 10))];
        let b = vec![(t(1), rect(10, 20)), (t(0), rect(0, 10))];
        let r = miou(&a, &b).unwrap();
        assert_eq!(r.miou, 0.5);
        assert_eq!(r.per_tile[0].tile, t(0));
        let c = vec![(t(0), rect(0, 10)), (t(2), rect(0, 10))];
        match miou(&a, &c) {
            Err(MetricsError::Unpaired(v)) => assert_eq!(v, vec![t(1), t(2)]),
            other => panic!("{other:?}"),
        }
    }
}
