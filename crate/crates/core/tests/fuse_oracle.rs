use fovea_core::detector::Detection;
use fovea_core::fuse::{build_matrix, iou, overlap_filter, overlap_filter_per_class, Box2D};
use proptest::prelude::*;

/// IoU from corner coordinates, written independently of the library.
fn iou_oracle(a: &Box2D, b: &Box2D) -> f64 {
    let (ax1, ay1) = (a.x + a.w, a.y + a.h);
    let (bx1, by1) = (b.x + b.w, b.y + b.h);
    let iw = (ax1.min(bx1) - a.x.max(b.x)).max(0.0);
    let ih = (ay1.min(by1) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    inter / (a.w * a.h + b.w * b.h - inter)
}

/// Literal re-trace of the filter: walk the lines in order; the first line that
/// holds anything is copied whole; every later box joins the list unless it
/// overlaps (IoU > thresh) a box already in it.
fn filter_oracle(rows: &[(u32, Vec<Detection>)], thresh: f64) -> Vec<Detection> {
    let mut sorted: Vec<&(u32, Vec<Detection>)> = rows.iter().collect();
    sorted.sort_by_key(|(j, _)| *j);
    let mut list: Vec<Detection> = Vec::new();
    let mut first_line_done = false;
    for (_, line) in sorted {
        if line.is_empty() {
            continue;
        }
        if !first_line_done {
            list.extend(line.iter().cloned());
            first_line_done = true;
            continue;
        }
        for d in line {
            let mut overlapped = false;
            for kept in &list {
                if iou_oracle(&kept.bbox, &d.bbox) > thresh {
                    overlapped = true;
                }
            }
            if !overlapped {
                list.push(d.clone());
            }
        }
    }
    list
}

fn det(x: f64, y: f64, w: f64, h: f64, source: u32) -> Detection {
    Detection::new("car", 0.5, Box2D::new(x, y, w, h).unwrap(), source)
}

/// Boxes on a coarse grid so that exact IoU ties are common.
fn grid_box() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0u32..6, 0u32..6, 1u32..5, 1u32..5).prop_map(|(x, y, w, h)| (x as f64 * 5.0, y as f64 * 5.0, w as f64 * 5.0, h as f64 * 5.0))
}

fn matrix_rows() -> impl Strategy<Value = Vec<(u32, Vec<Detection>)>> {
    (1usize..=6)
        .prop_flat_map(|n_rows| prop::collection::vec(prop::collection::vec(grid_box(), 0..4), n_rows))
        .prop_map(|rows| {
            let mut total = 0;
            let mut rows: Vec<(u32, Vec<Detection>)> = rows
                .into_iter()
                .zip(0u32..)
                .map(|(boxes, j)| {
                    let row: Vec<Detection> = boxes
                        .into_iter()
                        .take(12usize.saturating_sub(total))
                        .map(|(x, y, w, h)| det(x, y, w, h, j))
                        .collect();
                    total += row.len();
                    (j, row)
                })
                .collect();
            // hand the rows over out of order
            rows.reverse();
            rows
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn iou_matches_oracle((ax, ay, aw, ah) in grid_box(), (bx, by, bw, bh) in grid_box()) {
        let a = Box2D::new(ax, ay, aw, ah).unwrap();
        let b = Box2D::new(bx, by, bw, bh).unwrap();
        let v = iou(&a, &b);
        prop_assert!((v - iou_oracle(&a, &b)).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(&b, &a));
    }

    #[test]
    fn filter_matches_oracle(rows in matrix_rows()) {
        let expected = filter_oracle(&rows, 0.5);
        let m = build_matrix(rows).unwrap();
        prop_assert_eq!(&overlap_filter(&m, 0.5).accepted, &expected);
    }

    #[test]
    fn filter_output_properties(rows in matrix_rows()) {
        let m = build_matrix(rows).unwrap();
        let out = overlap_filter(&m, 0.5).accepted;
        prop_assert!(out.len() <= m.detection_count());
        let first = m.rows().iter().find(|(_, r)| !r.is_empty());
        if let Some((j, row)) = first {
            // the whole first non-empty line survives, in order, at the front
            prop_assert_eq!(&out[..row.len()], &row[..]);
            for (i, a) in out.iter().enumerate() {
                for b in &out[i + 1..] {
                    if b.source != *j {
                        prop_assert!(iou(&a.bbox, &b.bbox) <= 0.5);
                    }
                }
            }
        } else {
            prop_assert!(out.is_empty());
        }
        // idempotent when fed back as a single line
        let again = build_matrix(vec![(0, out.clone())]).unwrap();
        prop_assert_eq!(overlap_filter(&again, 0.5).accepted, out);
    }

    #[test]
    fn per_class_equals_filter_on_each_class(rows in matrix_rows(), flips in prop::collection::vec(any::<bool>(), 12)) {
        let mut k = 0;
        let rows: Vec<(u32, Vec<Detection>)> = rows
            .into_iter()
            .map(|(j, r)| {
                let r = r.into_iter().map(|mut d| {
                    if flips[k % flips.len()] {
                        d.class_label = "truck".into();
                    }
                    k += 1;
                    d
                }).collect();
                (j, r)
            })
            .collect();
        let m = build_matrix(rows.clone()).unwrap();
        let fused = overlap_filter_per_class(&m, 0.5).accepted;
        for class in ["car", "truck"] {
            let only: Vec<(u32, Vec<Detection>)> = rows
                .iter()
                .map(|(j, r)| (*j, r.iter().filter(|d| d.class_label == class).cloned().collect()))
                .collect();
            let expected = filter_oracle(&only, 0.5);
            let got: Vec<Detection> = fused.iter().filter(|d| d.class_label == class).cloned().collect();
            prop_assert_eq!(got, expected);
        }
    }
}

#[test]
fn first_nonempty_line_is_exempt() {
    // Full image empty; crop 1 holds two boxes with IoU 0.8.
    let rows = vec![
        (0, vec![]),
        (1, vec![det(0.0, 0.0, 10.0, 10.0, 1), det(0.0, 0.0, 10.0, 8.0, 1)]),
        (2, vec![det(0.0, 0.0, 10.0, 9.0, 2)]),
    ];
    assert!((iou_oracle(&rows[1].1[0].bbox, &rows[1].1[1].bbox) - 0.8).abs() < 1e-12);
    let out = overlap_filter(&build_matrix(rows.clone()).unwrap(), 0.5).accepted;
    assert_eq!(out, filter_oracle(&rows, 0.5));
    assert_eq!(out.len(), 2);
    assert!(out.iter().all(|d| d.source == 1));
}

#[test]
fn iou_exactly_half_is_kept() {
    // (0,0,20,10) vs (0,0,10,10): 100 / 200
    let rows = vec![(0, vec![det(0.0, 0.0, 20.0, 10.0, 0)]), (1, vec![det(0.0, 0.0, 10.0, 10.0, 1)])];
    assert_eq!(iou_oracle(&rows[0].1[0].bbox, &rows[1].1[0].bbox), 0.5);
    let out = overlap_filter(&build_matrix(rows).unwrap(), 0.5).accepted;
    assert_eq!(out.len(), 2);
}

#[test]
fn rows_are_sorted_by_source() {
    let m = build_matrix(vec![(3, vec![]), (0, vec![]), (1, vec![])]).unwrap();
    let order: Vec<u32> = m.rows().iter().map(|(j, _)| *j).collect();
    assert_eq!(order, vec![0, 1, 3]);
    assert!(build_matrix(vec![(1, vec![]), (1, vec![])]).is_err());
    assert!(build_matrix(vec![]).unwrap().is_empty());
}
