//! Document encoding: token segmentation, per-segment embedding and the
//! bi-LSTM integration layer producing `H` (`2u x N`).

mod embed;
mod lstm;

pub use embed::{encode_segment, EncoderKind, SegmentEncoderSpec, SegmentMix};
pub use lstm::{bilstm_forward, bilstm_on_tape, dropout_mask, BiLstmNodes, BiLstmParams, LstmDirection};

use crate::error::{Error, Result};

/// Contiguous, non-overlapping, non-empty half-open ranges covering `[0, N)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentBoundaries {
    ranges: Vec<(usize, usize)>,
}

impl SegmentBoundaries {
    pub fn new(ranges: Vec<(usize, usize)>) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::Contract("at least one segment required".into()));
        }
        let mut expected_start = 0;
        for &(start, end) in &ranges {
            if start != expected_start {
                return Err(Error::Contract(format!(
                    "segment starting at {start} leaves a gap or overlap (expected {expected_start})"
                )));
            }
            if end <= start {
                return Err(Error::Contract(format!("empty segment [{start}, {end})")));
            }
            expected_start = end;
        }
        Ok(SegmentBoundaries { ranges })
    }

    /// A single segment spanning everything.
    pub fn whole(n_tokens: usize) -> Result<Self> {
        Self::new(vec![(0, n_tokens)])
    }

    pub fn ranges(&self) -> &[(usize, usize)] {
        &self.ranges
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn n_tokens(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.1)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.ranges.iter().map(|(s, e)| e - s).collect()
    }

    /// Index of the segment containing token position `pos`.
    pub fn segment_of(&self, pos: usize) -> Option<usize> {
        self.ranges.iter().position(|&(s, e)| pos >= s && pos < e)
    }
}

/// Splits `n_tokens` positions into `min(n, n_tokens)` contiguous segments
/// whose sizes differ by at most one; earlier segments take the remainder.
pub fn segment_tokens(n_tokens: usize, n: usize) -> Result<SegmentBoundaries> {
    if n_tokens == 0 {
        return Err(Error::Input("cannot segment an empty token sequence".into()));
    }
    if n == 0 {
        return Err(Error::Input("segment count must be at least 1".into()));
    }
    let count = n.min(n_tokens);
    let base = n_tokens / count;
    let extra = n_tokens % count;
    let mut ranges = Vec::with_capacity(count);
    let mut start = 0;
    for k in 0..count {
        let size = base + usize::from(k < extra);
        ranges.push((start, start + size));
        start += size;
    }
    SegmentBoundaries::new(ranges)
}

/// Splits before every occurrence of `header_id` (except at position 0).
/// When that yields more than `n` sections, everything from the `n`-th
/// section onward is merged into the last segment.
pub fn segment_at_headers(tokens: &[u32], header_id: u32, n: usize) -> Result<SegmentBoundaries> {
    if tokens.is_empty() {
        return Err(Error::Input("cannot segment an empty token sequence".into()));
    }
    if n == 0 {
        return Err(Error::Input("segment count must be at least 1".into()));
    }
    let mut starts: Vec<usize> = std::iter::once(0)
        .chain(
            tokens
                .iter()
                .enumerate()
                .skip(1)
                .filter(|&(_, &t)| t == header_id)
                .map(|(i, _)| i),
        )
        .collect();
    starts.truncate(n);
    let ranges = starts
        .iter()
        .enumerate()
        .map(|(k, &s)| (s, starts.get(k + 1).copied().unwrap_or(tokens.len())))
        .collect();
    SegmentBoundaries::new(ranges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_into_three() {
        assert_eq!(segment_tokens(10, 3).unwrap().sizes(), vec![4, 3, 3]);
    }

    #[test]
    fn single_segment() {
        let b = segment_tokens(5, 1).unwrap();
        assert_eq!(b.ranges(), &[(0, 5)]);
    }

    #[test]
    fn clamps_to_token_count() {
        assert_eq!(segment_tokens(2, 6).unwrap().sizes(), vec![1, 1]);
    }

    #[test]
    fn empty_is_an_input_error() {
        assert!(matches!(segment_tokens(0, 2), Err(Error::Input(_))));
    }

    #[test]
    fn header_split() {
        let toks = [5, 6, 2, 7, 8, 2, 9, 2, 4];
        let b = segment_at_headers(&toks, 2, 6).unwrap();
        assert_eq!(b.ranges(), &[(0, 2), (2, 5), (5, 7), (7, 9)]);
        let b = segment_at_headers(&toks, 2, 2).unwrap();
        assert_eq!(b.ranges(), &[(0, 2), (2, 9)]);
        let b = segment_at_headers(&[2, 1, 1], 2, 4).unwrap();
        assert_eq!(b.ranges(), &[(0, 3)]);
    }

    #[test]
    fn rejects_gaps() {
        assert!(SegmentBoundaries::new(vec![(0, 2), (3, 4)]).is_err());
        assert!(SegmentBoundaries::new(vec![(0, 0)]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn sizes_balanced_and_covering(n_tokens in 1usize..2000, n in 1usize..40) {
            let b = segment_tokens(n_tokens, n).unwrap();
            let sizes = b.sizes();
            proptest::prop_assert_eq!(sizes.len(), n.min(n_tokens));
            proptest::prop_assert_eq!(sizes.iter().sum::<usize>(), n_tokens);
            let max = *sizes.iter().max().unwrap();
            let min = *sizes.iter().min().unwrap();
            proptest::prop_assert!(max - min <= 1);
            proptest::prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
