//! Brute-force interpolated Kneser-Ney, evaluated straight from the padded
//! sentences. Token layout: words `0..V`, BOS `V`, EOS `V + 1`.

use std::cell::RefCell;
use std::collections::HashMap;

pub struct NaiveKn {
    n: usize,
    v: u32,
    windows: HashMap<Vec<u32>, u64>,
    adjusted_memo: RefCell<HashMap<Vec<u32>, u64>>,
    pub discounts: Vec<f64>,
}

impl NaiveKn {
    pub fn new(sentences: &[Vec<u32>], v: usize, n: usize, discounts: Option<Vec<f64>>) -> Self {
        let v = v as u32;
        let mut windows = HashMap::new();
        for s in sentences {
            let mut padded = vec![v; n - 1];
            padded.extend(s);
            padded.push(v + 1);
            for start in 0..padded.len() {
                for k in 1..=n {
                    if start + k <= padded.len() {
                        *windows.entry(padded[start..start + k].to_vec()).or_insert(0) += 1;
                    }
                }
            }
        }
        let mut me = NaiveKn {
            n,
            v,
            windows,
            adjusted_memo: RefCell::new(HashMap::new()),
            discounts: vec![],
        };
        me.discounts = match discounts {
            Some(d) => d,
            None => (1..=n).map(|k| me.estimate(k)).collect(),
        };
        me
    }

    pub fn raw(&self, g: &[u32]) -> u64 {
        self.windows.get(g).copied().unwrap_or(0)
    }

    pub fn adjusted(&self, g: &[u32]) -> u64 {
        if let Some(&a) = self.adjusted_memo.borrow().get(g) {
            return a;
        }
        let a = if g.len() == self.n || g[0] == self.v {
            self.raw(g)
        } else {
            (0..=self.v + 1)
                .filter(|&x| {
                    let mut ext = vec![x];
                    ext.extend(g);
                    self.raw(&ext) > 0
                })
                .count() as u64
        };
        self.adjusted_memo.borrow_mut().insert(g.to_vec(), a);
        a
    }

    fn estimate(&self, k: usize) -> f64 {
        let grams: Vec<Vec<u32>> = self
            .windows
            .keys()
            .filter(|g| g.len() == k && *g.last().unwrap() != self.v)
            .cloned()
            .collect();
        let n1 = grams.iter().filter(|g| self.adjusted(g) == 1).count() as f64;
        let n2 = grams.iter().filter(|g| self.adjusted(g) == 2).count() as f64;
        let d = n1 / (n1 + 2.0 * n2);
        if d > 0.0 && d < 1.0 { d } else { 0.75 }
    }

    pub fn events(&self) -> Vec<u32> {
        (0..self.v).chain([self.v + 1]).collect()
    }

    /// p(w | h) with `h` of length at most n - 1.
    pub fn prob(&self, w: u32, h: &[u32]) -> f64 {
        let lower = if h.is_empty() {
            1.0 / (self.v as f64 + 1.0)
        } else {
            self.prob(w, &h[1..])
        };
        let d = self.discounts[h.len()];
        let with = |e: u32| {
            let mut g = h.to_vec();
            g.push(e);
            self.adjusted(&g)
        };
        let adj: Vec<u64> = self.events().into_iter().map(with).collect();
        let total: u64 = adj.iter().sum();
        if total == 0 {
            return lower;
        }
        let types = adj.iter().filter(|&&a| a > 0).count() as f64;
        ((with(w) as f64 - d).max(0.0) + d * types * lower) / total as f64
    }

    /// Trigram-style histories (length n - 1) seen in the corpus.
    pub fn histories(&self) -> Vec<Vec<u32>> {
        let mut hs: Vec<Vec<u32>> = self
            .windows
            .keys()
            .filter(|g| g.len() == self.n - 1 && !g.contains(&(self.v + 1)))
            .cloned()
            .collect();
        hs.sort();
        hs
    }
}
