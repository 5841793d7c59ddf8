//! Per-(node, world) index of the timepoints at which a state chunk exists.
//!
//! The tree is an insert-only red-black tree laid out in a single flat vector:
//! children and parents are slot indices rather than pointers, so a tree of any
//! size is one allocation and serializes as a plain sorted list.

use std::cmp::Ordering;

use crate::codec::{put_time, put_varint, Reader};
use crate::error::{Error, Result};
use crate::model::{NodeId, Timepoint, WorldId};

const NIL: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct Slot {
    key: Timepoint,
    left: u32,
    right: u32,
    parent: u32,
    red: bool,
}

#[derive(Clone, Debug)]
pub struct TimeTree {
    owner: (NodeId, WorldId),
    slots: Vec<Slot>,
    root: u32,
    dirty: bool,
}

impl PartialEq for TimeTree {
    fn eq(&self, other: &Self) -> bool {
        self.owner == other.owner && self.iter().eq(other.iter())
    }
}

impl TimeTree {
    pub fn new(node: NodeId, world: WorldId) -> Self {
        TimeTree {
            owner: (node, world),
            slots: Vec::new(),
            root: NIL,
            dirty: false,
        }
    }

    pub fn owner(&self) -> (NodeId, WorldId) {
        self.owner
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_dirty(&self) -> bool {
        self.dirty
    }

    pub(crate) fn mark_clean(&mut self) {
        self.dirty = false;
    }

    fn slot(&self, i: u32) -> &Slot {
        &self.slots[i as usize]
    }

    fn slot_mut(&mut self, i: u32) -> &mut Slot {
        &mut self.slots[i as usize]
    }

    fn is_red(&self, i: u32) -> bool {
        i != NIL && self.slot(i).red
    }

    /// Adds `t`. Returns `false` when it was already present; the tree is
    /// marked dirty either way.
    pub fn insert(&mut self, t: Timepoint) -> bool {
        self.dirty = true;
        let mut parent = NIL;
        let mut cur = self.root;
        let mut went_left = false;
        while cur != NIL {
            parent = cur;
            let slot = self.slot(cur);
            match t.cmp(&slot.key) {
                Ordering::Less => {
                    went_left = true;
                    cur = slot.left;
                }
                Ordering::Greater => {
                    went_left = false;
                    cur = slot.right;
                }
                Ordering::Equal => return false,
            }
        }
        let idx = u32::try_from(self.slots.len())
            .ok()
            .filter(|&i| i != NIL)
            .expect("time tree is limited to u32::MAX - 1 entries");
        self.slots.push(Slot {
            key: t,
            left: NIL,
            right: NIL,
            parent,
            red: true,
        });
        if parent == NIL {
            self.root = idx;
        } else if went_left {
            self.slot_mut(parent).left = idx;
        } else {
            self.slot_mut(parent).right = idx;
        }
        self.fix_after_insert(idx);
        true
    }

    fn fix_after_insert(&mut self, mut z: u32) {
        while self.is_red(self.slot(z).parent) {
            let p = self.slot(z).parent;
            // p is red, so it is not the root and has a parent.
            let g = self.slot(p).parent;
            if p == self.slot(g).left {
                let uncle = self.slot(g).right;
                if self.is_red(uncle) {
                    self.slot_mut(p).red = false;
                    self.slot_mut(uncle).red = false;
                    self.slot_mut(g).red = true;
                    z = g;
                } else {
                    if z == self.slot(p).right {
                        z = p;
                        self.rotate_left(z);
                    }
                    let p = self.slot(z).parent;
                    self.slot_mut(p).red = false;
                    self.slot_mut(g).red = true;
                    self.rotate_right(g);
                }
            } else {
                let uncle = self.slot(g).left;
                if self.is_red(uncle) {
                    self.slot_mut(p).red = false;
                    self.slot_mut(uncle).red = false;
                    self.slot_mut(g).red = true;
                    z = g;
                } else {
                    if z == self.slot(p).left {
                        z = p;
                        self.rotate_right(z);
                    }
                    let p = self.slot(z).parent;
                    self.slot_mut(p).red = false;
                    self.slot_mut(g).red = true;
                    self.rotate_left(g);
                }
            }
        }
        let root = self.root;
        self.slot_mut(root).red = false;
    }

    fn replace_child(&mut self, parent: u32, old: u32, new: u32) {
        if parent == NIL {
            self.root = new;
        } else if self.slot(parent).left == old {
            self.slot_mut(parent).left = new;
        } else {
            self.slot_mut(parent).right = new;
        }
    }

    fn rotate_left(&mut self, x: u32) {
        let y = self.slot(x).right;
        let y_left = self.slot(y).left;
        self.slot_mut(x).right = y_left;
        if y_left != NIL {
            self.slot_mut(y_left).parent = x;
        }
        let xp = self.slot(x).parent;
        self.slot_mut(y).parent = xp;
        self.replace_child(xp, x, y);
        self.slot_mut(y).left = x;
        self.slot_mut(x).parent = y;
    }

    fn rotate_right(&mut self, x: u32) {
        let y = self.slot(x).left;
        let y_right = self.slot(y).right;
        self.slot_mut(x).left = y_right;
        if y_right != NIL {
            self.slot_mut(y_right).parent = x;
        }
        let xp = self.slot(x).parent;
        self.slot_mut(y).parent = xp;
        self.replace_child(xp, x, y);
        self.slot_mut(y).right = x;
        self.slot_mut(x).parent = y;
    }

    pub fn contains(&self, t: Timepoint) -> bool {
        self.floor(t) == Some(t)
    }

    /// Greatest entry `<= t`.
    pub fn floor(&self, t: Timepoint) -> Option<Timepoint> {
        let mut best = None;
        let mut cur = self.root;
        while cur != NIL {
            let slot = self.slot(cur);
            if slot.key <= t {
                best = Some(slot.key);
                cur = slot.right;
            } else {
                cur = slot.left;
            }
        }
        best
    }

    pub fn first(&self) -> Option<Timepoint> {
        let mut cur = self.root;
        let mut best = None;
        while cur != NIL {
            best = Some(self.slot(cur).key);
            cur = self.slot(cur).left;
        }
        best
    }

    /// Entries in `[from, to]`, ascending.
    pub fn range(&self, from: Timepoint, to: Timepoint) -> Result<Vec<Timepoint>> {
        if from > to {
            return Err(Error::InvalidArgument(format!(
                "empty time range: {from} > {to}"
            )));
        }
        let mut out = Vec::new();
        let mut stack = Vec::new();
        let mut cur = self.root;
        loop {
            while cur != NIL {
                let slot = self.slot(cur);
                if slot.key >= from {
                    stack.push(cur);
                    cur = slot.left;
                } else {
                    cur = slot.right;
                }
            }
            let Some(top) = stack.pop() else { break };
            let slot = self.slot(top);
            if slot.key > to {
                break;
            }
            out.push(slot.key);
            cur = slot.right;
        }
        Ok(out)
    }

    pub fn iter(&self) -> Iter<'_> {
        let mut iter = Iter {
            tree: self,
            stack: Vec::new(),
        };
        iter.push_left(self.root);
        iter
    }

    /// Longest root-to-leaf path, counted in entries.
    pub fn height(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(self.root, 0usize)];
        while let Some((i, depth)) = stack.pop() {
            if i == NIL {
                max = max.max(depth);
                continue;
            }
            let slot = self.slot(i);
            stack.push((slot.left, depth + 1));
            stack.push((slot.right, depth + 1));
        }
        max
    }

    /// Checks the red-black and ordering invariants; returns the black height.
    #[cfg(test)]
    pub(crate) fn check_invariants(&self) -> usize {
        fn walk(tree: &TimeTree, i: u32, lo: Option<Timepoint>, hi: Option<Timepoint>) -> usize {
            if i == NIL {
                return 1;
            }
            let s = tree.slot(i);
            assert!(lo.is_none_or(|lo| s.key > lo), "order violated");
            assert!(hi.is_none_or(|hi| s.key < hi), "order violated");
            if s.red {
                assert!(!tree.is_red(s.left) && !tree.is_red(s.right), "red-red");
            }
            for child in [s.left, s.right] {
                if child != NIL {
                    assert_eq!(tree.slot(child).parent, i, "parent link");
                }
            }
            let l = walk(tree, s.left, lo, Some(s.key));
            let r = walk(tree, s.right, Some(s.key), hi);
            assert_eq!(l, r, "black height");
            l + usize::from(!s.red)
        }
        assert!(!self.is_red(self.root), "red root");
        walk(self, self.root, None, None)
    }

    /// `varint count ‖ sorted timepoints (8-byte biased big-endian)`.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + 8 * self.len());
        put_varint(&mut out, self.len() as u64);
        for t in self.iter() {
            put_time(&mut out, t);
        }
        out
    }

    pub fn decode(node: NodeId, world: WorldId, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let n = r.len(8)?;
        let mut tree = TimeTree::new(node, world);
        tree.slots.reserve_exact(n);
        let mut prev = None;
        for _ in 0..n {
            let t = r.time()?;
            if prev.is_some_and(|p| p >= t) {
                return Err(Error::decode("time tree entries not strictly increasing"));
            }
            prev = Some(t);
            tree.insert(t);
        }
        r.finish()?;
        tree.dirty = false;
        Ok(tree)
    }
}

pub struct Iter<'a> {
    tree: &'a TimeTree,
    stack: Vec<u32>,
}

impl Iter<'_> {
    fn push_left(&mut self, mut i: u32) {
        while i != NIL {
            self.stack.push(i);
            i = self.tree.slot(i).left;
        }
    }
}

impl Iterator for Iter<'_> {
    type Item = Timepoint;

    fn next(&mut self) -> Option<Timepoint> {
        let i = self.stack.pop()?;
        let slot = *self.tree.slot(i);
        self.push_left(slot.right);
        Some(slot.key)
    }
}
