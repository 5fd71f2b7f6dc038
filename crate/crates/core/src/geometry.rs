//! Integer pixel geometry: points, rectangles and exact rectilinear regions.
//!
//! A [`Region`] is stored in y-x banded form: horizontal bands sorted top to
//! bottom, each holding sorted, disjoint, non-touching x spans. Vertically
//! adjacent bands never carry identical spans (they would have been merged),
//! so every point set has exactly one representation. All intervals are
//! half-open, `[x, x + w)`.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

/// Signed relative pointer motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct Delta {
    pub dx: i32,
    pub dy: i32,
}

impl Delta {
    pub const fn new(dx: i32, dy: i32) -> Self {
        Self { dx, dy }
    }

    pub const fn is_zero(self) -> bool {
        self.dx == 0 && self.dy == 0
    }
}

impl std::ops::Add for Delta {
    type Output = Delta;
    fn add(self, o: Delta) -> Delta {
        Delta::new(self.dx + o.dx, self.dy + o.dy)
    }
}

impl std::ops::Neg for Delta {
    type Output = Delta;
    fn neg(self) -> Delta {
        Delta::new(-self.dx, -self.dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct Rect {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

impl Rect {
    pub const fn new(x: i32, y: i32, w: i32, h: i32) -> Self {
        Self { x, y, w, h }
    }

    pub const fn right(&self) -> i32 {
        self.x + self.w
    }

    pub const fn bottom(&self) -> i32 {
        self.y + self.h
    }

    pub const fn is_empty(&self) -> bool {
        self.w <= 0 || self.h <= 0
    }

    pub fn area(&self) -> u64 {
        if self.is_empty() {
            0
        } else {
            self.w as u64 * self.h as u64
        }
    }

    /// Half-open containment.
    pub const fn contains(&self, p: Point) -> bool {
        p.x >= self.x && p.x < self.x + self.w && p.y >= self.y && p.y < self.y + self.h
    }

    pub fn contains_rect(&self, o: &Rect) -> bool {
        o.is_empty()
            || (o.x >= self.x && o.right() <= self.right() && o.y >= self.y && o.bottom() <= self.bottom())
    }

    pub fn intersects(&self, o: &Rect) -> bool {
        !self.is_empty()
            && !o.is_empty()
            && self.x < o.right()
            && o.x < self.right()
            && self.y < o.bottom()
            && o.y < self.bottom()
    }

    pub fn intersection(&self, o: &Rect) -> Rect {
        let x0 = self.x.max(o.x);
        let y0 = self.y.max(o.y);
        let x1 = self.right().min(o.right());
        let y1 = self.bottom().min(o.bottom());
        if x1 <= x0 || y1 <= y0 {
            Rect::default()
        } else {
            Rect::new(x0, y0, x1 - x0, y1 - y0)
        }
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2, self.y + self.h / 2)
    }

    /// Saturates `p` into the rectangle, per axis.
    pub fn clamp_point(&self, p: Point) -> Point {
        Point::new(
            p.x.clamp(self.x, self.right() - 1),
            p.y.clamp(self.y, self.bottom() - 1),
        )
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}

type Span = (i32, i32);

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Band {
    top: i32,
    bottom: i32,
    spans: Vec<Span>,
}

/// A finite set of pixels represented as a union of disjoint rectangles.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Region {
    bands: Vec<Band>,
}

#[derive(Clone, Copy)]
enum SetOp {
    Union,
    Intersect,
    Subtract,
}

impl SetOp {
    fn keep(self, a: bool, b: bool) -> bool {
        match self {
            SetOp::Union => a || b,
            SetOp::Intersect => a && b,
            SetOp::Subtract => a && !b,
        }
    }
}

fn combine_spans(a: &[Span], b: &[Span], op: SetOp) -> Vec<Span> {
    let mut xs: Vec<i32> = Vec::with_capacity(2 * (a.len() + b.len()));
    for &(l, r) in a.iter().chain(b) {
        xs.push(l);
        xs.push(r);
    }
    xs.sort_unstable();
    xs.dedup();
    let mut out: Vec<Span> = Vec::new();
    let (mut ia, mut ib) = (0usize, 0usize);
    for w in xs.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        while ia < a.len() && a[ia].1 <= x0 {
            ia += 1;
        }
        while ib < b.len() && b[ib].1 <= x0 {
            ib += 1;
        }
        let in_a = ia < a.len() && a[ia].0 <= x0;
        let in_b = ib < b.len() && b[ib].0 <= x0;
        if op.keep(in_a, in_b) {
            match out.last_mut() {
                Some(last) if last.1 == x0 => last.1 = x1,
                _ => out.push((x0, x1)),
            }
        }
    }
    out
}

fn push_band(bands: &mut Vec<Band>, top: i32, bottom: i32, spans: Vec<Span>) {
    if spans.is_empty() || bottom <= top {
        return;
    }
    if let Some(last) = bands.last_mut() {
        if last.bottom == top && last.spans == spans {
            last.bottom = bottom;
            return;
        }
    }
    bands.push(Band { top, bottom, spans });
}

fn band_spans<'a>(bands: &'a [Band], idx: &mut usize, y: i32) -> &'a [Span] {
    while *idx < bands.len() && bands[*idx].bottom <= y {
        *idx += 1;
    }
    match bands.get(*idx) {
        Some(b) if b.top <= y => &b.spans,
        _ => &[],
    }
}

impl Region {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_rect(r: Rect) -> Self {
        if r.is_empty() {
            return Self::empty();
        }
        Self {
            bands: vec![Band {
                top: r.y,
                bottom: r.bottom(),
                spans: vec![(r.x, r.right())],
            }],
        }
    }

    pub fn point(p: Point) -> Self {
        Self::from_rect(Rect::new(p.x, p.y, 1, 1))
    }

    /// Union of arbitrary (possibly overlapping) rectangles.
    pub fn from_rects<I: IntoIterator<Item = Rect>>(rects: I) -> Self {
        let rects: Vec<Rect> = rects.into_iter().filter(|r| !r.is_empty()).collect();
        if rects.is_empty() {
            return Self::empty();
        }
        let mut ys: Vec<i32> = rects.iter().flat_map(|r| [r.y, r.bottom()]).collect();
        ys.sort_unstable();
        ys.dedup();
        let mut bands = Vec::new();
        let mut row: Vec<Span> = Vec::new();
        for w in ys.windows(2) {
            let (y0, y1) = (w[0], w[1]);
            row.clear();
            row.extend(
                rects
                    .iter()
                    .filter(|r| r.y <= y0 && r.bottom() > y0)
                    .map(|r| (r.x, r.right())),
            );
            if row.is_empty() {
                continue;
            }
            row.sort_unstable();
            let mut merged: Vec<Span> = Vec::with_capacity(row.len());
            for &(l, r) in &row {
                match merged.last_mut() {
                    Some(last) if l <= last.1 => last.1 = last.1.max(r),
                    _ => merged.push((l, r)),
                }
            }
            push_band(&mut bands, y0, y1, merged);
        }
        Self { bands }
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    /// Exact pixel count.
    pub fn area(&self) -> u64 {
        self.bands
            .iter()
            .map(|b| {
                let h = (b.bottom - b.top) as u64;
                b.spans.iter().map(|&(l, r)| (r - l) as u64).sum::<u64>() * h
            })
            .sum()
    }

    /// Canonical rectangle list, sorted by `(y, x)`.
    pub fn rects(&self) -> Vec<Rect> {
        self.rect_iter().collect()
    }

    pub fn rect_iter(&self) -> impl Iterator<Item = Rect> + '_ {
        self.bands.iter().flat_map(|b| {
            b.spans
                .iter()
                .map(move |&(l, r)| Rect::new(l, b.top, r - l, b.bottom - b.top))
        })
    }

    pub fn rect_count(&self) -> usize {
        self.bands.iter().map(|b| b.spans.len()).sum()
    }

    pub fn bounding_box(&self) -> Option<Rect> {
        let first = self.bands.first()?;
        let last = self.bands.last()?;
        let x0 = self.bands.iter().map(|b| b.spans[0].0).min()?;
        let x1 = self.bands.iter().map(|b| b.spans[b.spans.len() - 1].1).max()?;
        Some(Rect::new(x0, first.top, x1 - x0, last.bottom - first.top))
    }

    pub fn contains(&self, p: Point) -> bool {
        self.bands
            .iter()
            .find(|b| b.top <= p.y && p.y < b.bottom)
            .is_some_and(|b| b.spans.iter().any(|&(l, r)| l <= p.x && p.x < r))
    }

    pub fn intersects_rect(&self, rect: &Rect) -> bool {
        if rect.is_empty() {
            return false;
        }
        self.bands.iter().any(|b| {
            b.top < rect.bottom()
                && rect.y < b.bottom
                && b.spans.iter().any(|&(l, r)| l < rect.right() && rect.x < r)
        })
    }

    /// True iff every pixel of `self` lies in `rect`.
    pub fn is_within(&self, rect: &Rect) -> bool {
        self.bounding_box().map_or(true, |bb| rect.contains_rect(&bb))
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.subtract_region(other).is_empty()
    }

    /// If the region is a single pixel, returns it.
    pub fn as_point(&self) -> Option<Point> {
        match self.bands.as_slice() {
            [b] if b.bottom - b.top == 1 && b.spans.len() == 1 && b.spans[0].1 - b.spans[0].0 == 1 => {
                Some(Point::new(b.spans[0].0, b.top))
            }
            _ => None,
        }
    }

    fn combine(&self, other: &Region, op: SetOp) -> Region {
        let mut ys: Vec<i32> = self
            .bands
            .iter()
            .chain(&other.bands)
            .flat_map(|b| [b.top, b.bottom])
            .collect();
        ys.sort_unstable();
        ys.dedup();
        let mut bands = Vec::new();
        let (mut ia, mut ib) = (0usize, 0usize);
        for w in ys.windows(2) {
            let (y0, y1) = (w[0], w[1]);
            let sa = band_spans(&self.bands, &mut ia, y0);
            let sb = band_spans(&other.bands, &mut ib, y0);
            if sa.is_empty() && sb.is_empty() {
                continue;
            }
            let spans = match op {
                SetOp::Union if sb.is_empty() => sa.to_vec(),
                SetOp::Union if sa.is_empty() => sb.to_vec(),
                SetOp::Subtract if sb.is_empty() => sa.to_vec(),
                _ => combine_spans(sa, sb, op),
            };
            push_band(&mut bands, y0, y1, spans);
        }
        Region { bands }
    }

    pub fn union(&self, other: &Region) -> Region {
        if self.is_empty() {
            return other.clone();
        }
        if other.is_empty() {
            return self.clone();
        }
        self.combine(other, SetOp::Union)
    }

    pub fn intersect_region(&self, other: &Region) -> Region {
        if self.is_empty() || other.is_empty() {
            return Region::empty();
        }
        self.combine(other, SetOp::Intersect)
    }

    pub fn subtract_region(&self, other: &Region) -> Region {
        if self.is_empty() || other.is_empty() {
            return self.clone();
        }
        self.combine(other, SetOp::Subtract)
    }

    /// Exact point-set intersection with a rectangle.
    pub fn intersect(&self, rect: &Rect) -> Region {
        if rect.is_empty() || !self.intersects_rect(rect) {
            return Region::empty();
        }
        let mut bands = Vec::new();
        for b in &self.bands {
            let top = b.top.max(rect.y);
            let bottom = b.bottom.min(rect.bottom());
            if bottom <= top {
                continue;
            }
            let spans: Vec<Span> = b
                .spans
                .iter()
                .filter_map(|&(l, r)| {
                    let (l, r) = (l.max(rect.x), r.min(rect.right()));
                    (l < r).then_some((l, r))
                })
                .collect();
            push_band(&mut bands, top, bottom, spans);
        }
        Region { bands }
    }

    /// Exact point-set difference `self \ (h1 ∪ h2 ∪ ...)`.
    pub fn subtract(&self, holes: &[Rect]) -> Region {
        let relevant: Vec<Rect> = holes
            .iter()
            .copied()
            .filter(|h| self.intersects_rect(h))
            .collect();
        if relevant.is_empty() {
            return self.clone();
        }
        self.subtract_region(&Region::from_rects(relevant))
    }

    /// Image of the region under relative pointer motion `d` with per-axis
    /// saturation at the edges of `screen`.
    ///
    /// Clamping is monotone and separable, so the image of each member
    /// rectangle is again a rectangle; the result is their union.
    pub fn translate_clip(&self, d: Delta, screen: &Rect) -> Region {
        if self.is_empty() || screen.is_empty() {
            return Region::empty();
        }
        let clamp_iv = |lo: i32, hi: i32, off: i32, slo: i32, shi: i32| -> (i32, i32) {
            // [lo, hi) shifted then saturated into [slo, shi)
            let a = (lo + off).clamp(slo, shi - 1);
            let b = (hi - 1 + off).clamp(slo, shi - 1);
            (a, b + 1)
        };
        let inside = self
            .bounding_box()
            .is_some_and(|bb| {
                let moved = Rect::new(bb.x + d.dx, bb.y + d.dy, bb.w, bb.h);
                screen.contains_rect(&moved)
            });
        if inside {
            return self.translate(d);
        }
        let mut out = Vec::with_capacity(self.rect_count());
        for r in self.rect_iter() {
            let (x0, x1) = clamp_iv(r.x, r.right(), d.dx, screen.x, screen.right());
            let (y0, y1) = clamp_iv(r.y, r.bottom(), d.dy, screen.y, screen.bottom());
            out.push(Rect::new(x0, y0, x1 - x0, y1 - y0));
        }
        Region::from_rects(out)
    }

    /// Pure translation, no clipping.
    pub fn translate(&self, d: Delta) -> Region {
        Region {
            bands: self
                .bands
                .iter()
                .map(|b| Band {
                    top: b.top + d.dy,
                    bottom: b.bottom + d.dy,
                    spans: b.spans.iter().map(|&(l, r)| (l + d.dx, r + d.dx)).collect(),
                })
                .collect(),
        }
    }

    /// Launch-accuracy test: the region is no larger than `rect` in area and
    /// its bounding box fits in a `rect`-sized window.
    pub fn fits_within(&self, rect: &Rect) -> bool {
        match self.bounding_box() {
            None => true,
            Some(bb) => self.area() <= rect.area() && bb.w <= rect.w && bb.h <= rect.h,
        }
    }

    /// Compact text form, `x,y,w,h;x,y,w,h;...` in canonical order.
    pub fn to_compact(&self) -> String {
        let mut s = String::new();
        for (i, r) in self.rect_iter().enumerate() {
            if i > 0 {
                s.push(';');
            }
            s.push_str(&r.to_string());
        }
        s
    }
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Region[{}]", self.to_compact())
    }
}

impl From<Rect> for Region {
    fn from(r: Rect) -> Self {
        Region::from_rect(r)
    }
}

impl Serialize for Region {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rects().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Region {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rects = Vec::<Rect>::deserialize(d)?;
        Ok(Region::from_rects(rects))
    }
}
