//! Dense channel-major (C x H x W) tensors.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Copy + Default> Tensor<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor { c, h, w, data: vec![T::default(); c * h * w] }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * h * w, "tensor data length does not match {c}x{h}x{w}");
        Tensor { c, h, w, data }
    }

    pub fn filled(c: usize, h: usize, w: usize, v: T) -> Self {
        Tensor { c, h, w, data: vec![v; c * h * w] }
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        debug_assert!(c < self.c && y < self.h && x < self.w);
        (c * self.h + y) * self.w + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.h * self.w;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn map<U: Copy + Default>(&self, f: impl Fn(T) -> U) -> Tensor<U> {
        Tensor { c: self.c, h: self.h, w: self.w, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Stack along the channel axis.
    pub fn concat_channels(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
        assert_eq!((a.h, a.w), (b.h, b.w), "concat needs equal spatial dims");
        let mut data = Vec::with_capacity(a.len() + b.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Tensor { c: a.c + b.c, h: a.h, w: a.w, data }
    }

    /// Split into the first `c0` channels and the rest.
    pub fn split_channels(&self, c0: usize) -> (Tensor<T>, Tensor<T>) {
        assert!(c0 <= self.c);
        let n = c0 * self.h * self.w;
        (Tensor { c: c0, h: self.h, w: self.w, data: self.data[..n].to_vec() }, Tensor { c: self.c - c0, h: self.h, w: self.w, data: self.data[n..].to_vec() })
    }
}

impl<T: Copy + Default + PartialEq> Tensor<T> {
    pub fn count_eq(&self, v: T) -> usize {
        self.data.iter().filter(|&&d| d == v).count()
    }
}
