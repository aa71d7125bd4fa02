use crate::trace::Sample;

/// Shift register of `stages` blocks, `block` samples each.
///
/// Stage 0 holds the newest block. Backed by a mirrored ring so the whole
/// register is readable as one contiguous slice in arrival order.
#[derive(Debug, Clone)]
pub struct ShiftRegister {
    block: usize,
    stages: usize,
    ring: Vec<Sample>,
    // Start of the oldest stage inside the first half of `ring`.
    head: usize,
}

impl ShiftRegister {
    pub fn new(block: usize, stages: usize, fill: Sample) -> Self {
        assert!(
            block > 0 && stages > 0,
            "shift register needs a non-empty shape"
        );
        ShiftRegister {
            block,
            stages,
            ring: vec![fill; 2 * block * stages],
            head: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.block * self.stages
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    /// Shifts every stage by one and inserts `samples` as stage 0; the oldest block is dropped.
    pub fn push(&mut self, samples: &[Sample]) {
        assert_eq!(samples.len(), self.block, "block width mismatch");
        let cap = self.capacity();
        let at = self.head;
        self.ring[at..at + self.block].copy_from_slice(samples);
        self.ring[at + cap..at + cap + self.block].copy_from_slice(samples);
        self.head = (at + self.block) % cap;
    }

    /// All held samples, oldest first.
    pub fn window(&self) -> &[Sample] {
        &self.ring[self.head..self.head + self.capacity()]
    }

    /// Stage `k`, where 0 is the newest block.
    pub fn stage(&self, k: usize) -> &[Sample] {
        assert!(k < self.stages);
        let from = (self.stages - 1 - k) * self.block;
        &self.window()[from..from + self.block]
    }

    pub fn oldest(&self) -> &[Sample] {
        self.stage(self.stages - 1)
    }
}
