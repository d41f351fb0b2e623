use rand::RngCore;

/// Generator that replays a fixed list of 32-bit words, cycling when exhausted.
pub(crate) struct ScriptedRng {
    words: Vec<u32>,
    pos: usize,
}

impl ScriptedRng {
    pub(crate) fn new(words: Vec<u32>) -> Self {
        assert!(!words.is_empty());
        Self { words, pos: 0 }
    }
}

impl RngCore for ScriptedRng {
    fn next_u32(&mut self) -> u32 {
        let w = self.words[self.pos % self.words.len()];
        self.pos += 1;
        w
    }

    fn next_u64(&mut self) -> u64 {
        let lo = self.next_u32() as u64;
        let hi = self.next_u32() as u64;
        (hi << 32) | lo
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(4) {
            let w = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
    }
}
