/// Fixed-capacity history of the most recent values of one series.
///
/// `lag(1)` is the newest value. Only the last `capacity` values are ever
/// reachable.
#[derive(Debug, Clone)]
pub struct RingBuffer {
    data: Vec<f64>,
    head: usize,
    len: usize,
}

impl RingBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ring buffer capacity must be positive");
        RingBuffer {
            data: vec![0.0; capacity],
            head: 0,
            len: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.data.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn push(&mut self, value: f64) {
        self.data[self.head] = value;
        self.head += 1;
        if self.head == self.data.len() {
            self.head = 0;
        }
        if self.len < self.data.len() {
            self.len += 1;
        }
    }

    /// Value `k` steps back, `1 <= k <= len`.
    #[inline]
    pub fn lag(&self, k: usize) -> f64 {
        debug_assert!(k >= 1 && k <= self.len, "lag {k} outside 1..={}", self.len);
        let idx = if self.head >= k {
            self.head - k
        } else {
            self.head + self.data.len() - k
        };
        self.data[idx]
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        (k >= 1 && k <= self.len).then(|| self.lag(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wraps_around() {
        let mut r = RingBuffer::new(3);
        assert!(r.is_empty());
        for v in 1..=5 {
            r.push(f64::from(v));
        }
        assert_eq!(r.len(), 3);
        assert_eq!((r.lag(1), r.lag(2), r.lag(3)), (5.0, 4.0, 3.0));
        assert_eq!(r.get(4), None);
        assert_eq!(r.get(0), None);
    }

    proptest! {
        #[test]
        fn matches_a_plain_history(values in prop::collection::vec(-1e6f64..1e6, 1..200), cap in 1usize..20) {
            let mut r = RingBuffer::new(cap);
            for (i, v) in values.iter().enumerate() {
                r.push(*v);
                let seen = &values[..=i];
                for k in 1..=cap {
                    let expected = if k <= seen.len() { Some(seen[seen.len() - k]) } else { None };
                    prop_assert_eq!(r.get(k), expected);
                }
            }
        }
    }
}
