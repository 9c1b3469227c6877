//! Independent reference implementations used by the integration tests.
//! Each one is a direct loop over the definition, sharing no code with the
//! library beyond its public accessors.

#![allow(dead_code, clippy::needless_range_loop, clippy::too_many_arguments)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use corrtrack::io::MotRow;
use corrtrack::tensor::FeatureMap;
use corrtrack::tracker::BBox;

/// Local correlation in `(y, x, k)` order, channels summed from 0 upward.
pub fn local_correlation_oracle(
    fq: &FeatureMap<f64>,
    fr: &FeatureMap<f64>,
    r: usize,
    d: usize,
) -> Vec<f64> {
    let (c, h, w) = fq.shape();
    let r = r as isize;
    let mut out = Vec::new();
    for y in 0..h as isize {
        for x in 0..w as isize {
            for dy in -r..=r {
                for dx in -r..=r {
                    let (sx, sy) = (x + d as isize * dx, y + d as isize * dy);
                    if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                        out.push(0.0);
                        continue;
                    }
                    let mut acc = 0.0;
                    for ch in 0..c {
                        acc += fq.get(ch, y as usize, x as usize)
                            * fr.get(ch, sy as usize, sx as usize);
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

/// Channel-major aggregate: each in-bounds tap adds `(corr / N) * fr`.
pub fn temporal_aggregate_oracle(
    fq: &FeatureMap<f64>,
    fr: &FeatureMap<f64>,
    r: usize,
    d: usize,
) -> Vec<f64> {
    let (c, h, w) = fq.shape();
    let corr = local_correlation_oracle(fq, fr, r, d);
    let side = 2 * r + 1;
    let n = (side * side) as f64;
    let ri = r as isize;
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -ri..=ri {
                    for dx in -ri..=ri {
                        let (sx, sy) = (x as isize + d as isize * dx, y as isize + d as isize * dy);
                        if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                            continue;
                        }
                        let k = ((dy + ri) as usize) * side + (dx + ri) as usize;
                        let weight = corr[(y * w + x) * side * side + k] / n;
                        acc += weight * fr.get(ch, sy as usize, sx as usize);
                    }
                }
                out[(ch * h + y) * w + x] = acc;
            }
        }
    }
    out
}

/// Labels in `(y, x, k)` order: -1 ignore, 1 same identity, 0 different.
pub fn labels_oracle(yq: &[i64], yr: &[i64], h: usize, w: usize, r: usize, d: usize) -> Vec<i8> {
    let r = r as isize;
    let mut out = Vec::new();
    for y in 0..h as isize {
        for x in 0..w as isize {
            let q = yq[(y * w as isize + x) as usize];
            for dy in -r..=r {
                for dx in -r..=r {
                    let (sx, sy) = (x + d as isize * dx, y + d as isize * dy);
                    let inside = sx >= 0 && sy >= 0 && sx < w as isize && sy < h as isize;
                    out.push(if q < 0 || !inside {
                        -1
                    } else if yr[(sy * w as isize + sx) as usize] == q {
                        1
                    } else {
                        0
                    });
                }
            }
        }
    }
    out
}

/// Minimum total over all injections of the smaller side into the larger.
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    fn rec(
        cost: &[Vec<f64>],
        transpose: bool,
        i: usize,
        used: &mut [bool],
        acc: f64,
        best: &mut f64,
    ) {
        let n = if transpose { cost[0].len() } else { cost.len() };
        if i == n {
            *best = best.min(acc);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                let v = if transpose { cost[j][i] } else { cost[i][j] };
                rec(cost, transpose, i + 1, used, acc + v, best);
                used[j] = false;
            }
        }
    }
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let transpose = rows > cols;
    let mut used = vec![false; if transpose { rows } else { cols }];
    let mut best = f64::INFINITY;
    rec(cost, transpose, 0, &mut used, 0.0, &mut best);
    best
}

type Mat = Vec<Vec<f64>>;

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for k in 0..m {
            for j in 0..p {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

fn transpose(a: &Mat) -> Mat {
    (0..a[0].len())
        .map(|j| a.iter().map(|row| row[j]).collect())
        .collect()
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

fn diag(v: &[f64]) -> Mat {
    (0..v.len())
        .map(|i| {
            (0..v.len())
                .map(|j| if i == j { v[i] } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Gauss-Jordan inverse with partial pivoting.
fn inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut m: Mat = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        for v in &mut m[col] {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let pivot_row = m[col].clone();
                for (v, pv) in m[r].iter_mut().zip(pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Textbook constant-velocity Kalman filter on `(cx, cy, a, h)` with
/// height-scaled noise, using the plain `(I - K H) P` covariance update.
pub struct TextbookKalman {
    pub mean: Vec<f64>,
    pub cov: Mat,
    sp: f64,
    sv: f64,
}

impl TextbookKalman {
    pub fn new(b: &BBox) -> Self {
        let (sp, sv) = (1.0 / 20.0, 1.0 / 160.0);
        let h = b.h;
        let z = [b.x + b.w / 2.0, b.y + b.h / 2.0, b.w / b.h, b.h];
        let std = [
            2.0 * sp * h,
            2.0 * sp * h,
            1e-2,
            2.0 * sp * h,
            10.0 * sv * h,
            10.0 * sv * h,
            1e-5,
            10.0 * sv * h,
        ];
        let mut mean = z.to_vec();
        mean.extend([0.0; 4]);
        Self {
            mean,
            cov: diag(&std.map(|s| s * s)),
            sp,
            sv,
        }
    }

    pub fn predict(&mut self) {
        let h = self.mean[3].abs();
        let f: Mat = (0..8)
            .map(|i| {
                (0..8)
                    .map(|j| if i == j || j == i + 4 { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let (sp, sv) = (self.sp, self.sv);
        let q = diag(&[sp * h, sp * h, 1e-2, sp * h, sv * h, sv * h, 1e-5, sv * h].map(|s| s * s));
        self.mean = (0..8)
            .map(|i| (0..8).map(|j| f[i][j] * self.mean[j]).sum())
            .collect();
        self.cov = add(&matmul(&matmul(&f, &self.cov), &transpose(&f)), &q);
    }

    pub fn update(&mut self, b: &BBox) {
        let h = self.mean[3].abs();
        let sp = self.sp;
        let r = diag(&[sp * h, sp * h, 1e-1, sp * h].map(|s| s * s));
        let hm: Mat = (0..4)
            .map(|i| (0..8).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let s = add(&matmul(&matmul(&hm, &self.cov), &transpose(&hm)), &r);
        let k = matmul(&matmul(&self.cov, &transpose(&hm)), &inverse(&s));
        let z = [b.x + b.w / 2.0, b.y + b.h / 2.0, b.w / b.h, b.h];
        let innov: Vec<f64> = (0..4).map(|i| z[i] - self.mean[i]).collect();
        for i in 0..8 {
            self.mean[i] += (0..4).map(|j| k[i][j] * innov[j]).sum::<f64>();
        }
        let kh = matmul(&k, &hm);
        let ikh: Mat = (0..8)
            .map(|i| {
                (0..8)
                    .map(|j| if i == j { 1.0 } else { 0.0 } - kh[i][j])
                    .collect()
            })
            .collect();
        self.cov = matmul(&ikh, &self.cov);
    }
}

fn iou(a: &MotRow, b: &MotRow) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a.w * a.h + b.w * b.h - inter)
}

/// Counts from an exhaustive evaluator: `(fp, fn, idsw, idtp)`.
///
/// Per frame, continuity matches are kept first; the rest is the matching
/// with the most pairs, then the least total `1 - IoU`, found by
/// enumeration. Identity true positives maximize over every injective map
/// of ground-truth ids to hypothesis ids.
pub fn brute_force_metrics(gt: &[MotRow], hyp: &[MotRow], thr: f64) -> (u64, u64, u64, u64) {
    let mut frames: BTreeSet<u32> = gt.iter().map(|r| r.frame).collect();
    frames.extend(hyp.iter().map(|r| r.frame));
    let (mut fp, mut fn_, mut idsw) = (0, 0, 0);
    let mut last: HashMap<i64, i64> = HashMap::new();
    let mut overlap: BTreeMap<(i64, i64), u64> = BTreeMap::new();
    for f in frames {
        let gs: Vec<&MotRow> = gt.iter().filter(|r| r.frame == f).collect();
        let hs: Vec<&MotRow> = hyp.iter().filter(|r| r.frame == f).collect();
        for g in &gs {
            for h in &hs {
                if iou(g, h) >= thr {
                    *overlap.entry((g.id, h.id)).or_default() += 1;
                }
            }
        }
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (gi, g) in gs.iter().enumerate() {
            if let Some(hi) = last
                .get(&g.id)
                .and_then(|p| hs.iter().position(|h| h.id == *p))
            {
                if iou(g, hs[hi]) >= thr && !pairs.iter().any(|p| p.1 == hi) {
                    pairs.push((gi, hi));
                }
            }
        }
        let free_g: Vec<usize> = (0..gs.len())
            .filter(|i| !pairs.iter().any(|p| p.0 == *i))
            .collect();
        let free_h: Vec<usize> = (0..hs.len())
            .filter(|i| !pairs.iter().any(|p| p.1 == *i))
            .collect();
        let mut best: (usize, f64, Vec<(usize, usize)>) = (0, 0.0, Vec::new());
        fn rec(
            k: usize,
            fg: &[usize],
            fh: &[usize],
            used: &mut Vec<bool>,
            cur: &mut Vec<(usize, usize)>,
            cost: f64,
            gs: &[&MotRow],
            hs: &[&MotRow],
            thr: f64,
            best: &mut (usize, f64, Vec<(usize, usize)>),
        ) {
            if k == fg.len() {
                if cur.len() > best.0 || (cur.len() == best.0 && cost < best.1) {
                    *best = (cur.len(), cost, cur.clone());
                }
                return;
            }
            rec(k + 1, fg, fh, used, cur, cost, gs, hs, thr, best);
            for (j, &h) in fh.iter().enumerate() {
                let v = iou(gs[fg[k]], hs[h]);
                if !used[j] && v >= thr {
                    used[j] = true;
                    cur.push((fg[k], h));
                    rec(k + 1, fg, fh, used, cur, cost + 1.0 - v, gs, hs, thr, best);
                    cur.pop();
                    used[j] = false;
                }
            }
        }
        rec(
            0,
            &free_g,
            &free_h,
            &mut vec![false; free_h.len()],
            &mut Vec::new(),
            0.0,
            &gs,
            &hs,
            thr,
            &mut best,
        );
        pairs.extend(best.2);
        for (gi, g) in gs.iter().enumerate() {
            match pairs.iter().find(|p| p.0 == gi) {
                Some(&(_, hi)) => {
                    if let Some(prev) = last.insert(g.id, hs[hi].id) {
                        if prev != hs[hi].id {
                            idsw += 1;
                        }
                    }
                }
                None => fn_ += 1,
            }
        }
        fp += (hs.len() - pairs.len()) as u64;
    }
    let gids: Vec<i64> = gt
        .iter()
        .map(|r| r.id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let hids: Vec<i64> = hyp
        .iter()
        .map(|r| r.id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    fn idrec(
        i: usize,
        gids: &[i64],
        hids: &[i64],
        used: &mut Vec<bool>,
        acc: u64,
        ov: &BTreeMap<(i64, i64), u64>,
        best: &mut u64,
    ) {
        if i == gids.len() {
            *best = (*best).max(acc);
            return;
        }
        idrec(i + 1, gids, hids, used, acc, ov, best);
        for j in 0..hids.len() {
            if !used[j] {
                used[j] = true;
                let v = ov.get(&(gids[i], hids[j])).copied().unwrap_or(0);
                idrec(i + 1, gids, hids, used, acc + v, ov, best);
                used[j] = false;
            }
        }
    }
    let mut idtp = 0;
    idrec(
        0,
        &gids,
        &hids,
        &mut vec![false; hids.len()],
        0,
        &overlap,
        &mut idtp,
    );
    (fp, fn_, idsw, idtp)
}

pub fn gt_row(frame: u32, id: i64, x: f64, y: f64, w: f64, h: f64) -> MotRow {
    MotRow {
        frame,
        id,
        x,
        y,
        w,
        h,
        conf: 1.0,
        class: 1,
        visibility: 1.0,
    }
}

/// Exhaustively drives a tracker for `frames` frames with at most
/// `max_tracks` live tracks. Every frame, each subset of live tracks is
/// matched and any number of fresh detections may appear. Returns the number
/// of explored steps and a description of every violated rule.
pub fn lifecycle_model_check(
    tau_loss: u32,
    max_tracks: usize,
    frames: u32,
) -> (usize, Vec<String>) {
    use corrtrack::tracker::{Assignment, Detection, TrackState, Tracker, TrackerConfig};

    fn det(frame: u32, slot: usize) -> Detection {
        let b = BBox::new(10.0 + 100.0 * slot as f64, 20.0, 30.0, 60.0).unwrap();
        Detection::new(frame, b, 0.9, None).unwrap()
    }

    #[allow(clippy::too_many_arguments)]
    fn explore(
        t: &Tracker,
        tau_loss: u32,
        frame: u32,
        frames: u32,
        max_tracks: usize,
        max_id: u64,
        steps: &mut usize,
        bad: &mut Vec<String>,
    ) {
        if frame > frames {
            return;
        }
        let live = t.tracks().len();
        for mask in 0u32..(1 << live) {
            let matched: Vec<usize> = (0..live).filter(|i| mask & (1 << i) != 0).collect();
            for fresh in 0..=(max_tracks - live) {
                let mut dets: Vec<Detection> = matched.iter().map(|&i| det(frame, i)).collect();
                dets.extend((0..fresh).map(|j| det(frame, live + j)));
                let assignment = Assignment {
                    pairs: matched.iter().enumerate().map(|(d, &tr)| (d, tr)).collect(),
                    unmatched_rows: (matched.len()..dets.len()).collect(),
                    unmatched_cols: (0..live).filter(|i| !matched.contains(i)).collect(),
                };
                let before: HashMap<u64, TrackState> =
                    t.tracks().iter().map(|x| (x.id, x.state)).collect();
                let mut next = t.clone();
                let rows = match next.lifecycle_step(frame, &dets, &assignment) {
                    Ok(r) => r,
                    Err(e) => {
                        bad.push(format!("frame {frame}: {e}"));
                        continue;
                    }
                };
                *steps += 1;
                let after: HashMap<u64, TrackState> =
                    next.tracks().iter().map(|x| (x.id, x.state)).collect();
                for (id, s) in &before {
                    let to = after.get(id).copied().unwrap_or(TrackState::Removed);
                    if !s.can_transition_to(to) {
                        bad.push(format!("frame {frame}: track {id} moved {s:?} -> {to:?}"));
                    }
                }
                let mut new_max = max_id;
                for x in next.tracks() {
                    if !before.contains_key(&x.id) {
                        if x.state != TrackState::Inactive || x.id <= max_id {
                            bad.push(format!(
                                "frame {frame}: new track {} is {:?}",
                                x.id, x.state
                            ));
                        }
                        new_max = new_max.max(x.id);
                    }
                    if x.state == TrackState::Active && x.t_loss != 0 {
                        bad.push(format!(
                            "frame {frame}: active track {} has t_loss {}",
                            x.id, x.t_loss
                        ));
                    }
                    if x.state == TrackState::Lost && x.t_loss > tau_loss.max(1) {
                        bad.push(format!("frame {frame}: lost track {} kept past tau", x.id));
                    }
                }
                let active: BTreeSet<u64> = next
                    .tracks()
                    .iter()
                    .filter(|x| x.state == TrackState::Active)
                    .map(|x| x.id)
                    .collect();
                let emitted: BTreeSet<u64> = rows.iter().map(|r| r.id as u64).collect();
                if emitted.len() != rows.len() || !emitted.is_subset(&active) {
                    bad.push(format!(
                        "frame {frame}: rows {emitted:?} not a subset of active {active:?}"
                    ));
                }
                explore(
                    &next,
                    tau_loss,
                    frame + 1,
                    frames,
                    max_tracks,
                    new_max,
                    steps,
                    bad,
                );
            }
        }
    }

    let cfg = TrackerConfig {
        tau_loss,
        ..TrackerConfig::default()
    };
    let t = Tracker::new(cfg).unwrap();
    let (mut steps, mut bad) = (0, Vec::new());
    explore(&t, tau_loss, 1, frames, max_tracks, 0, &mut steps, &mut bad);
    (steps, bad)
}

/// Up to 3 objects over up to 12 frames; hypotheses jitter, drop, swap ids,
/// and add clutter.
pub fn random_metric_instance(rng: &mut impl rand::Rng) -> (Vec<MotRow>, Vec<MotRow>) {
    let frames = rng.gen_range(1..=12);
    let objects = rng.gen_range(1..=3);
    let mut gt = Vec::new();
    let mut hyp = Vec::new();
    let starts: Vec<(f64, f64)> = (0..objects)
        .map(|_| (rng.gen_range(0.0..60.0), rng.gen_range(0.0..60.0)))
        .collect();
    for f in 1..=frames {
        for (o, &(x0, y0)) in starts.iter().enumerate() {
            if rng.gen_bool(0.1) {
                continue;
            }
            let (x, y) = (x0 + 3.0 * f as f64, y0);
            gt.push(gt_row(f, o as i64 + 1, x, y, 20.0, 20.0));
            if rng.gen_bool(0.8) {
                let id = if rng.gen_bool(0.15) {
                    rng.gen_range(1..=3)
                } else {
                    o as i64 + 1
                };
                if !hyp.iter().any(|h: &MotRow| h.frame == f && h.id == id) {
                    hyp.push(gt_row(
                        f,
                        id,
                        x + rng.gen_range(-6.0..6.0),
                        y + rng.gen_range(-6.0..6.0),
                        20.0,
                        20.0,
                    ));
                }
            }
        }
        if rng.gen_bool(0.2) && !hyp.iter().any(|h| h.frame == f && h.id == 9) {
            hyp.push(gt_row(
                f,
                9,
                rng.gen_range(0.0..80.0),
                rng.gen_range(0.0..80.0),
                20.0,
                20.0,
            ));
        }
    }
    (gt, hyp)
}

pub fn relabel(rows: &[MotRow], map: &HashMap<i64, i64>) -> Vec<MotRow> {
    rows.iter()
        .map(|r| MotRow {
            id: map[&r.id],
            ..*r
        })
        .collect()
}

pub fn shuffled_ids(rng: &mut impl rand::Rng, rows: &[MotRow]) -> HashMap<i64, i64> {
    let mut ids: Vec<i64> = rows.iter().map(|r| r.id).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut targets: Vec<i64> = (100..100 + ids.len() as i64).collect();
    rand::seq::SliceRandom::shuffle(targets.as_mut_slice(), rng);
    ids.into_iter().zip(targets).collect()
}
