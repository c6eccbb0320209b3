use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open time interval `[start_s, end_s)` of one audio split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkBoundary {
    pub start_s: f64,
    pub end_s: f64,
}

impl ChunkBoundary {
    pub fn length_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Splits `[0, duration_s]` into `n_chunks` equal-length intervals where each
/// consecutive pair overlaps by half a chunk.
///
/// With hop `H = L/2` the coverage constraint `(N-1)·H + L = T` gives
/// `L = 2T/(N+1)`. Chunk `i` spans `[i·T/(N+1), (i+2)·T/(N+1))`; the last end
/// is pinned to `duration_s` exactly.
pub fn chunk_boundaries(duration_s: f64, n_chunks: usize) -> Result<Vec<ChunkBoundary>> {
    if n_chunks == 0 {
        return Err(Error::Domain("number of chunks must be at least 1".into()));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::Domain(format!(
            "duration must be positive and finite, got {duration_s}"
        )));
    }
    let denom = (n_chunks + 1) as f64;
    let mut out: Vec<ChunkBoundary> = (0..n_chunks)
        .map(|i| ChunkBoundary {
            start_s: i as f64 * duration_s / denom,
            end_s: (i + 2) as f64 * duration_s / denom,
        })
        .collect();
    if let Some(last) = out.last_mut() {
        last.end_s = duration_s;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(v: &[ChunkBoundary]) -> Vec<(f64, f64)> {
        v.iter().map(|c| (c.start_s, c.end_s)).collect()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(
            pairs(&chunk_boundaries(8.0, 3).unwrap()),
            vec![(0.0, 4.0), (2.0, 6.0), (4.0, 8.0)]
        );
        assert_eq!(pairs(&chunk_boundaries(10.0, 1).unwrap()), vec![(0.0, 10.0)]);
        assert_eq!(
            pairs(&chunk_boundaries(6.0, 5).unwrap()),
            vec![(0.0, 2.0), (1.0, 3.0), (2.0, 4.0), (3.0, 5.0), (4.0, 6.0)]
        );
    }

    #[test]
    fn zero_chunks_is_a_domain_error() {
        assert_eq!(chunk_boundaries(1.0, 0).unwrap_err().category(), "domain");
        assert_eq!(chunk_boundaries(0.0, 3).unwrap_err().category(), "domain");
    }
}
