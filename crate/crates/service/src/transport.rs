//! Stride-uniform downsampling of long point lists for transport.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TransportInfo {
    pub method: &'static str,
    pub total: usize,
    pub returned: usize,
    /// Index step between returned points; only the final gap may be shorter.
    pub stride: usize,
    pub first_and_last_preserved: bool,
}

/// Every `stride`-th point starting at the first, plus the last, with at most `max` points.
pub fn downsample<T: Copy>(points: &[T], max: usize) -> (Vec<T>, TransportInfo) {
    let max = max.max(2);
    let total = points.len();
    let stride = if total <= max {
        1
    } else {
        (total - 1).div_ceil(max - 1)
    };
    let kept: Vec<T> = if stride == 1 {
        points.to_vec()
    } else {
        let mut v: Vec<T> = points[..total - 1]
            .iter()
            .step_by(stride)
            .copied()
            .collect();
        v.push(points[total - 1]);
        v
    };
    let info = TransportInfo {
        method: "stride-uniform",
        total,
        returned: kept.len(),
        stride,
        first_and_last_preserved: true,
    };
    (kept, info)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn short_lists_pass_through() {
        let (v, info) = downsample(&[1, 2, 3], 10);
        assert_eq!(v, vec![1, 2, 3]);
        assert_eq!(info.stride, 1);
    }

    #[test]
    fn exact_fit_keeps_the_ends() {
        let pts: Vec<usize> = (0..=100).collect();
        let (v, info) = downsample(&pts, 11);
        assert_eq!(v, (0..=100).step_by(10).collect::<Vec<_>>());
        assert_eq!(info.returned, 11);
    }

    proptest! {
        #[test]
        fn respects_the_cap_and_the_ends(total in 1usize..5000, max in 2usize..600) {
            let pts: Vec<usize> = (0..total).collect();
            let (v, info) = downsample(&pts, max);
            prop_assert!(v.len() <= max);
            prop_assert_eq!(v.len(), info.returned);
            prop_assert_eq!(v[0], 0);
            prop_assert_eq!(*v.last().unwrap(), total - 1);
            // uniform stride up to the final point
            for w in v[..v.len() - 1].windows(2) {
                prop_assert_eq!(w[1] - w[0], info.stride);
            }
            prop_assert!(v[v.len() - 1] - v[v.len().saturating_sub(2)] <= info.stride);
        }
    }
}
