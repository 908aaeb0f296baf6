//! Masked low-pass filters for parameter maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ParamMap;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    Median,
    Average,
}

impl FilterKind {
    pub fn label(&self) -> &'static str {
        match self {
            FilterKind::Median => "median",
            FilterKind::Average => "average",
        }
    }
}

/// Filter over the valid pixels of each `side`×`side` neighbourhood (clipped
/// at the borders). Masked pixels take the neighbourhood statistic; a pixel
/// stays masked only when its whole neighbourhood is masked. The median of an
/// even count is the mean of the two central values.
pub fn low_pass(map: &ParamMap, kind: FilterKind, side: usize) -> Result<ParamMap> {
    if side < 3 || side % 2 == 0 {
        return Err(Error::InvalidArgument(format!("filter side must be odd and >= 3, got {side}")));
    }
    let (width, height) = map.dims();
    let half = side / 2;
    let (values, valid) = (map.values(), map.valid());
    let mut out = vec![(f64::NAN, false); width * height];
    par::fill_rows(&mut out, width, |y, row| {
        let mut buf = Vec::with_capacity(side * side);
        let (y0, y1) = (y.saturating_sub(half), (y + half).min(height - 1));
        for (x, cell) in row.iter_mut().enumerate() {
            let (x0, x1) = (x.saturating_sub(half), (x + half).min(width - 1));
            buf.clear();
            for yy in y0..=y1 {
                for xx in x0..=x1 {
                    let i = yy * width + xx;
                    if valid[i] {
                        buf.push(values[i]);
                    }
                }
            }
            if buf.is_empty() {
                continue;
            }
            let v = match kind {
                FilterKind::Average => running_mean(&buf),
                FilterKind::Median => median(&mut buf),
            };
            *cell = (v, true);
        }
    });
    let (values, valid) = out.into_iter().unzip();
    let mut meta = map.meta.clone();
    meta.estimator = format!("{}+{}{side}", meta.estimator, kind.label());
    ParamMap::new(width, height, values, valid, meta)
}

// exact on constant neighbourhoods, unlike sum / n
fn running_mean(buf: &[f64]) -> f64 {
    buf.iter()
        .enumerate()
        .fold(0.0, |mean, (k, v)| mean + (v - mean) / (k + 1) as f64)
}

fn median(buf: &mut [f64]) -> f64 {
    let n = buf.len();
    let mid = n / 2;
    let (_, upper, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = buf[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::MapMeta;

    fn map(w: usize, h: usize, values: Vec<f64>) -> ParamMap {
        ParamMap::from_values(w, h, values, MapMeta::default()).unwrap()
    }

    #[test]
    fn constant_map_is_a_fixed_point() {
        let m = map(10, 8, vec![1.7; 80]);
        for kind in [FilterKind::Median, FilterKind::Average] {
            for side in [3, 5, 7] {
                let f = low_pass(&m, kind, side).unwrap();
                assert!(f.values().iter().all(|v| *v == 1.7));
            }
        }
    }

    #[test]
    fn median_removes_single_outlier() {
        let mut v = vec![1.0; 15 * 15];
        v[7 * 15 + 7] = 10.0;
        let f = low_pass(&map(15, 15, v), FilterKind::Median, 7).unwrap();
        assert!(f.values().iter().all(|v| *v == 1.0));
        assert_eq!(f.valid_count(), 225);
    }

    #[test]
    fn average_three_matches_hand_means() {
        let v: Vec<f64> = (1..=25).map(f64::from).collect();
        let f = low_pass(&map(5, 5, v), FilterKind::Average, 3).unwrap();
        // corner (0,0): {1,2,6,7}; centre: 9 values around 13; edge (2,0): {2,3,4,7,8,9}
        assert!((f.values()[0] - 4.0).abs() < 1e-15);
        assert!((f.values()[12] - 13.0).abs() < 1e-15);
        assert!((f.values()[2] - 5.5).abs() < 1e-15);
        assert!((f.values()[24] - 22.0).abs() < 1e-15);
    }

    #[test]
    fn masked_pixels_are_filled_from_neighbours() {
        let values = vec![1.0, 2.0, 3.0, f64::NAN, 5.0, 6.0, 7.0, 8.0, 9.0];
        let mut valid = vec![true; 9];
        valid[3] = false;
        let m = ParamMap::new(3, 3, values, valid, MapMeta::default()).unwrap();
        let f = low_pass(&m, FilterKind::Median, 3).unwrap();
        assert_eq!(f.valid_count(), 9);
        // neighbours of (0,1): {1,2,5,7,8} → 5
        assert_eq!(f.values()[3], 5.0);
        // centre: 8 valid values {1,2,3,5,6,7,8,9} → (5+6)/2
        assert_eq!(f.values()[4], 5.5);

        let none = ParamMap::new(3, 3, vec![f64::NAN; 9], vec![false; 9], MapMeta::default()).unwrap();
        assert_eq!(low_pass(&none, FilterKind::Average, 3).unwrap().valid_count(), 0);
    }

    #[test]
    fn median_is_idempotent_on_piecewise_constant_maps() {
        let v: Vec<f64> = (0..20 * 20).map(|i| if i % 20 < 10 { 0.5 } else { 2.0 }).collect();
        let once = low_pass(&map(20, 20, v), FilterKind::Median, 7).unwrap();
        let twice = low_pass(&once, FilterKind::Median, 7).unwrap();
        assert_eq!(once.values(), twice.values());
    }

    #[test]
    fn rejects_bad_sides() {
        let m = map(3, 3, vec![1.0; 9]);
        assert!(low_pass(&m, FilterKind::Median, 4).is_err());
        assert!(low_pass(&m, FilterKind::Median, 1).is_err());
    }
}
