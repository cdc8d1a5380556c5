//! Network-kernel oracles: brute-force assignment, independently derived
//! convolution references, finite-difference gradients, hand-counted
//! parameter tables, and deterministic end-to-end training.

use hexlat::hexgrid;
use hexlat::hexnn::{
    adam_step, assignment_solve, dense_backward, dense_forward, dropout_backward,
    dropout_forward, evaluate, glorot_init, group_thousands, hconv2d_backward, hconv2d_forward,
    hconv2d_output_dims, hmaxpool_backward, hmaxpool_forward, hmaxpool_output_dims, load_weights,
    pool_offsets, pooling_assignment, relu_backward, relu_forward, save_weights,
    sconv2d_backward, sconv2d_forward, smaxpool_backward, smaxpool_forward, softmax_cross_entropy,
    summary_table, train, AdamConfig, AdamState, Dataset, DenseParams, HexKernelPair, LayerKind,
    LayerSpec, Model, ModelSpec, Parity, Shape, SquareKernel, Tensor4, TrainConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn xorshift_stream(mut state: u64) -> impl FnMut() -> f64 {
    move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state % 1000) as f64 / 500.0 - 1.0
    }
}

// ---------------------------------------------------------------- assignment

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    fn heap(k: usize, arr: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(arr.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, arr, out);
            if k.is_multiple_of(2) {
                arr.swap(i, k - 1);
            } else {
                arr.swap(0, k - 1);
            }
        }
    }
    heap(n, &mut current, &mut out);
    out
}

#[test]
fn assignment_matches_exhaustive_search() {
    let mut next = xorshift_stream(0xfeed);
    for n in 1..=7usize {
        for _ in 0..6 {
            let cost: Vec<Vec<f64>> =
                (0..n).map(|_| (0..n).map(|_| next() * 10.0).collect()).collect();
            let (perm, total) = assignment_solve(&cost).unwrap();
            let recomputed: f64 = perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            assert!((recomputed - total).abs() < 1e-9);
            let mut seen = vec![false; n];
            for &j in &perm {
                assert!(!seen[j], "column used twice");
                seen[j] = true;
            }
            let best = permutations(n)
                .iter()
                .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert!(
                (total - best).abs() <= 1e-9 * (1.0 + best.abs()),
                "n={n}: solver {total}, exhaustive {best}"
            );
        }
    }
}

#[test]
fn assignment_ties_resolve_to_the_smallest_permutation() {
    // among equal-cost optima the lexicographically smallest wins
    let flat = vec![vec![1.0; 4]; 4];
    let (perm, total) = assignment_solve(&flat).unwrap();
    assert_eq!(perm, vec![0, 1, 2, 3]);
    assert!((total - 4.0).abs() < 1e-12);

    // randomized tie-heavy matrices, verified exhaustively
    let mut next = xorshift_stream(0xbead);
    for n in 2..=6usize {
        for _ in 0..4 {
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| (next() * 1.5).round().abs()).collect())
                .collect();
            let (perm, total) = assignment_solve(&cost).unwrap();
            let mut optima: Vec<Vec<usize>> = permutations(n)
                .into_iter()
                .filter(|p| {
                    let c: f64 = p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
                    (c - total).abs() <= 1e-9 * (1.0 + total.abs())
                })
                .collect();
            optima.sort();
            assert_eq!(perm, optima[0], "cost matrix {cost:?}");
        }
    }
}

#[test]
fn assignment_solves_the_worked_example() {
    let cost = vec![vec![4.0, 1.0], vec![2.0, 3.0]];
    let (perm, total) = assignment_solve(&cost).unwrap();
    assert_eq!(perm, vec![1, 0]);
    assert!((total - 3.0).abs() < 1e-12);
}

#[test]
fn assignment_rejects_malformed_matrices() {
    let empty: &[Vec<f64>] = &[];
    assert!(assignment_solve(empty).is_err());
    assert!(assignment_solve(&[vec![1.0, 2.0]]).is_err());
    assert!(assignment_solve(&[vec![1.0, f64::NAN], vec![1.0, 2.0]]).is_err());
    assert!(assignment_solve(&[vec![1.0, f64::INFINITY], vec![1.0, 2.0]]).is_err());
}

// -------------------------------------------------------------- pool offsets

#[test]
fn pool_offsets_follow_the_derived_assignment() {
    for parity in [Parity::Even, Parity::Odd] {
        let a = pooling_assignment(parity);
        // digit 0 is the window center
        assert_eq!(a.candidates[a.assignment[0]], (0, 0));
        // every ideal target must land on its geometrically nearest
        // candidate: the scaled cluster rotation is well under the 30-degree
        // ambiguity margin, so nearest-neighbor and optimal agree
        for (digit, &chosen) in a.assignment.iter().enumerate() {
            let (ix, iy) = a.ideal[digit];
            let nearest = a
                .candidate_positions
                .iter()
                .enumerate()
                .min_by(|(_, p), (_, q)| {
                    let dp = (p.0 - ix).powi(2) + (p.1 - iy).powi(2);
                    let dq = (q.0 - ix).powi(2) + (q.1 - iy).powi(2);
                    dp.partial_cmp(&dq).unwrap()
                })
                .unwrap()
                .0;
            assert_eq!(chosen, nearest, "{parity:?} digit {digit}");
        }
        // all seven offsets distinct and inside the masked 3x3 window
        let offsets = pool_offsets(parity);
        let mask = parity.mask();
        let mut seen = std::collections::HashSet::new();
        for &(dr, dc) in &offsets {
            assert!((-1..=1).contains(&dr) && (-1..=1).contains(&dc));
            assert!(mask[(dr + 1) as usize][(dc + 1) as usize]);
            assert!(seen.insert((dr, dc)));
        }
    }
}

#[test]
fn pool_offsets_match_the_hexagonal_neighborhood_order() {
    // the assignment reproduces the center-then-counterclockwise layout of
    // the convolution taps for both parities
    assert_eq!(pool_offsets(Parity::Even).to_vec(), Parity::Even.tap_offsets().to_vec());
    assert_eq!(pool_offsets(Parity::Odd).to_vec(), Parity::Odd.tap_offsets().to_vec());
}

#[test]
fn parity_masks_have_the_reference_shape() {
    assert_eq!(
        Parity::Even.mask(),
        [[true, true, false], [true, true, true], [true, true, false]]
    );
    assert_eq!(
        Parity::Odd.mask(),
        [[false, true, true], [true, true, true], [false, true, true]]
    );
}

// -------------------------------------------------------------- convolutions

#[test]
fn hex_conv_against_an_independent_neighbor_walk() {
    // reference built on hexgrid::neighbors, which the kernels never touch
    let mut next = xorshift_stream(0x51ca);
    let (rows, cols, c_in, c_out) = (7, 6, 2, 3);
    let x = Tensor4::from_fn(2, rows, cols, c_in, |_, _, _, _| next());
    let taps: Vec<f64> = (0..7 * c_in * c_out).map(|_| next()).collect();
    let bias: Vec<f64> = (0..c_out).map(|_| next()).collect();
    let kernel = HexKernelPair::from_parts(c_in, c_out, taps.clone(), bias.clone()).unwrap();
    let out = hconv2d_forward(&x, &kernel, 1).unwrap();
    assert_eq!(out.dims(), (2, rows, cols, c_out));
    for b in 0..2 {
        for i in 0..rows {
            for j in 0..cols {
                let ring = hexgrid::neighbors(i as i64, j as i64);
                for co in 0..c_out {
                    let mut acc = bias[co];
                    for ci in 0..c_in {
                        acc += x.at(b, i, j, ci) * taps[ci * c_out + co];
                        for (k, &(rr, cc)) in ring.iter().enumerate() {
                            if rr >= 0 && cc >= 0 && rr < rows as i64 && cc < cols as i64 {
                                let t = (k + 1) * c_in + ci;
                                acc += x.at(b, rr as usize, cc as usize, ci)
                                    * taps[t * c_out + co];
                            }
                        }
                    }
                    let got = out.at(b, i, j, co);
                    assert!(
                        (got - acc).abs() < 1e-9,
                        "({b}, {i}, {j}, {co}): {got} vs {acc}"
                    );
                }
            }
        }
    }
}

#[test]
fn hex_conv_identity_tap_copies_the_input() {
    let mut next = xorshift_stream(0xabba);
    let x = Tensor4::from_fn(1, 5, 4, 1, |_, _, _, _| next());
    let mut taps = vec![0.0; 7];
    taps[0] = 1.0;
    let kernel = HexKernelPair::from_parts(1, 1, taps, vec![0.25]).unwrap();
    let out = hconv2d_forward(&x, &kernel, 1).unwrap();
    for (a, b) in x.data().iter().zip(out.data()) {
        assert!((a + 0.25 - b).abs() < 1e-12);
    }
}

#[test]
fn hex_conv_counts_its_in_raster_neighbors() {
    let x = Tensor4::from_fn(4, 4, 5, 1, |_, _, _, _| 1.0);
    let kernel = HexKernelPair::from_parts(1, 1, vec![1.0; 7], vec![0.0]).unwrap();
    let out = hconv2d_forward(&x, &kernel, 1).unwrap();
    // corner (0, 0) is an even row: only center, east, and digit-2 survive
    assert_eq!(out.at(0, 0, 0, 0), 3.0);
    // interior cell sees the full seven
    assert_eq!(out.at(0, 1, 2, 0), 7.0);
}

#[test]
fn stride_two_subsamples_rows_and_columns() {
    assert_eq!(hconv2d_output_dims(34, 30, 2).unwrap(), (18, 15));
    assert_eq!(hconv2d_output_dims(30, 26, 2).unwrap(), (16, 13));
    assert_eq!(hconv2d_output_dims(7, 7, 1).unwrap(), (7, 7));
    assert!(hconv2d_output_dims(4, 1, 2).is_err());
    assert!(hconv2d_output_dims(4, 4, 3).is_err());

    // output (i, j) is centered on input (2i, 2j)
    let mut x = Tensor4::zeros(1, 8, 8, 1);
    *x.at_mut(0, 4, 6, 0) = 1.0;
    let mut taps = vec![0.0; 7];
    taps[0] = 1.0;
    let kernel = HexKernelPair::from_parts(1, 1, taps, vec![0.0]).unwrap();
    let out = hconv2d_forward(&x, &kernel, 2).unwrap();
    assert_eq!(out.dims(), (1, 5, 4, 1));
    for i in 0..5 {
        for j in 0..4 {
            let expected = if (i, j) == (2, 3) { 1.0 } else { 0.0 };
            assert_eq!(out.at(0, i, j, 0), expected);
        }
    }

    // the appended final row center lies one row past the raster and only
    // its upward taps can land in bounds
    let ones = Tensor4::from_fn(1, 4, 4, 1, |_, _, _, _| 1.0);
    let sum7 = HexKernelPair::from_parts(1, 1, vec![1.0; 7], vec![0.0]).unwrap();
    let out = hconv2d_forward(&ones, &sum7, 2).unwrap();
    assert_eq!(out.dims(), (1, 3, 2, 1));
    assert_eq!(out.at(0, 2, 0, 0), 1.0);
    assert_eq!(out.at(0, 2, 1, 0), 2.0);
}

fn fd_tolerance(a: f64, f: f64) -> f64 {
    1e-4 * a.abs().max(f.abs()) + 1e-8
}

#[test]
fn hex_conv_gradients_match_finite_differences() {
    let mut next = xorshift_stream(0xd00d);
    let (batch, rows, cols, c_in, c_out) = (1, 5, 4, 2, 3);
    for stride in [1usize, 2] {
        let x = Tensor4::from_fn(batch, rows, cols, c_in, |_, _, _, _| next());
        let taps: Vec<f64> = (0..7 * c_in * c_out).map(|_| next()).collect();
        let bias: Vec<f64> = (0..c_out).map(|_| next()).collect();
        let (ro, co_dim) = hconv2d_output_dims(rows, cols, stride).unwrap();
        let w: Vec<f64> = (0..batch * ro * co_dim * c_out).map(|_| next()).collect();

        let loss = |taps: &[f64], bias: &[f64], xd: &[f64]| -> f64 {
            let x = Tensor4::from_data(batch, rows, cols, c_in, xd.to_vec()).unwrap();
            let k = HexKernelPair::from_parts(c_in, c_out, taps.to_vec(), bias.to_vec()).unwrap();
            let out = hconv2d_forward(&x, &k, stride).unwrap();
            out.data().iter().zip(&w).map(|(o, wv)| o * wv).sum()
        };

        let kernel = HexKernelPair::from_parts(c_in, c_out, taps.clone(), bias.clone()).unwrap();
        let grad_out = Tensor4::from_data(batch, ro, co_dim, c_out, w.clone()).unwrap();
        let (grad_x, grad_k) = hconv2d_backward(&x, &kernel, stride, &grad_out).unwrap();

        let h = 1e-5;
        for idx in 0..x.data().len() {
            let mut lo = x.data().to_vec();
            let mut hi = lo.clone();
            lo[idx] -= h;
            hi[idx] += h;
            let fd = (loss(&taps, &bias, &hi) - loss(&taps, &bias, &lo)) / (2.0 * h);
            let a = grad_x.data()[idx];
            assert!((a - fd).abs() <= fd_tolerance(a, fd), "stride {stride} input {idx}: {a} vs {fd}");
        }
        for idx in 0..taps.len() {
            let mut lo = taps.clone();
            let mut hi = taps.clone();
            lo[idx] -= h;
            hi[idx] += h;
            let fd = (loss(&hi, &bias, x.data()) - loss(&lo, &bias, x.data())) / (2.0 * h);
            let a = grad_k.taps[idx];
            assert!((a - fd).abs() <= fd_tolerance(a, fd), "stride {stride} tap {idx}: {a} vs {fd}");
        }
        for idx in 0..bias.len() {
            let mut lo = bias.clone();
            let mut hi = bias.clone();
            lo[idx] -= h;
            hi[idx] += h;
            let fd = (loss(&taps, &hi, x.data()) - loss(&taps, &lo, x.data())) / (2.0 * h);
            let a = grad_k.bias[idx];
            assert!((a - fd).abs() <= fd_tolerance(a, fd), "stride {stride} bias {idx}: {a} vs {fd}");
        }
    }
}

#[test]
fn square_conv_keeps_tensorflow_same_geometry() {
    // stride 1: identity kernel reproduces the input
    let mut next = xorshift_stream(0x900d);
    let x = Tensor4::from_fn(1, 5, 5, 1, |_, _, _, _| next());
    let mut weights = vec![0.0; 9];
    weights[4] = 1.0; // center of the 3x3
    let kernel = SquareKernel::from_parts(3, 1, 1, weights.clone(), vec![0.0]).unwrap();
    let out = sconv2d_forward(&x, &kernel, 1).unwrap();
    for (a, b) in x.data().iter().zip(out.data()) {
        assert!((a - b).abs() < 1e-12);
    }

    // stride 2 over odd length: centers at 0, 2, 4
    let ramp = Tensor4::from_fn(1, 1, 5, 1, |_, _, c, _| c as f64);
    let kernel = SquareKernel::from_parts(3, 1, 1, weights.clone(), vec![0.0]).unwrap();
    let out = sconv2d_forward(&ramp, &kernel, 2).unwrap();
    assert_eq!(out.dims(), (1, 1, 3, 1));
    assert_eq!(out.data(), &[0.0, 2.0, 4.0]);

    // stride 2 over even length: one leading pad short, centers at 1, 3, ...
    let ramp = Tensor4::from_fn(1, 1, 6, 1, |_, _, c, _| c as f64);
    let kernel = SquareKernel::from_parts(3, 1, 1, weights, vec![0.0]).unwrap();
    let out = sconv2d_forward(&ramp, &kernel, 2).unwrap();
    assert_eq!(out.dims(), (1, 1, 3, 1));
    assert_eq!(out.data(), &[1.0, 3.0, 5.0]);
}

#[test]
fn square_conv_gradients_match_finite_differences() {
    let mut next = xorshift_stream(0xcafe);
    let (batch, rows, cols, c_in, c_out) = (1, 4, 5, 2, 2);
    for stride in [1usize, 2] {
        let x = Tensor4::from_fn(batch, rows, cols, c_in, |_, _, _, _| next());
        let weights: Vec<f64> = (0..9 * c_in * c_out).map(|_| next()).collect();
        let bias: Vec<f64> = (0..c_out).map(|_| next()).collect();
        let ro = rows.div_ceil(stride);
        let co_dim = cols.div_ceil(stride);
        let w: Vec<f64> = (0..batch * ro * co_dim * c_out).map(|_| next()).collect();

        let loss = |wt: &[f64], bias: &[f64], xd: &[f64]| -> f64 {
            let x = Tensor4::from_data(batch, rows, cols, c_in, xd.to_vec()).unwrap();
            let k = SquareKernel::from_parts(3, c_in, c_out, wt.to_vec(), bias.to_vec()).unwrap();
            let out = sconv2d_forward(&x, &k, stride).unwrap();
            out.data().iter().zip(&w).map(|(o, wv)| o * wv).sum()
        };

        let kernel =
            SquareKernel::from_parts(3, c_in, c_out, weights.clone(), bias.clone()).unwrap();
        let grad_out = Tensor4::from_data(batch, ro, co_dim, c_out, w.clone()).unwrap();
        let (grad_x, grad_k) = sconv2d_backward(&x, &kernel, stride, &grad_out).unwrap();

        let h = 1e-5;
        for idx in 0..x.data().len() {
            let mut lo = x.data().to_vec();
            let mut hi = lo.clone();
            lo[idx] -= h;
            hi[idx] += h;
            let fd = (loss(&weights, &bias, &hi) - loss(&weights, &bias, &lo)) / (2.0 * h);
            let a = grad_x.data()[idx];
            assert!((a - fd).abs() <= fd_tolerance(a, fd));
        }
        for idx in 0..weights.len() {
            let mut lo = weights.clone();
            let mut hi = weights.clone();
            lo[idx] -= h;
            hi[idx] += h;
            let fd = (loss(&hi, &bias, x.data()) - loss(&lo, &bias, x.data())) / (2.0 * h);
            let a = grad_k.weights[idx];
            assert!((a - fd).abs() <= fd_tolerance(a, fd));
        }
        for idx in 0..bias.len() {
            let mut lo = bias.clone();
            let mut hi = bias.clone();
            lo[idx] -= h;
            hi[idx] += h;
            let fd = (loss(&weights, &hi, x.data()) - loss(&weights, &lo, x.data())) / (2.0 * h);
            let a = grad_k.bias[idx];
            assert!((a - fd).abs() <= fd_tolerance(a, fd));
        }
    }
}

// ------------------------------------------------------------------- pooling

#[test]
fn square_pooling_picks_window_maxima() {
    let x = Tensor4::from_fn(1, 4, 4, 1, |_, r, c, _| (r * 4 + c) as f64);
    let (out, argmax) = smaxpool_forward(&x, 2, 2).unwrap();
    assert_eq!(out.dims(), (1, 2, 2, 1));
    assert_eq!(out.data(), &[5.0, 7.0, 13.0, 15.0]);

    // gradients land on the winners
    let grad_out = Tensor4::from_data(1, 2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let gx = smaxpool_backward((1, 4, 4, 1), 2, 2, &argmax, &grad_out).unwrap();
    assert_eq!(gx.at(0, 1, 1, 0), 1.0);
    assert_eq!(gx.at(0, 1, 3, 0), 2.0);
    assert_eq!(gx.at(0, 3, 1, 0), 3.0);
    assert_eq!(gx.at(0, 3, 3, 0), 4.0);
    assert_eq!(gx.data().iter().sum::<f64>(), 10.0);

    // truncated last window: ceil(5 / 2) = 3 windows, the last a single cell
    let x = Tensor4::from_fn(1, 1, 5, 1, |_, _, c, _| c as f64);
    let (out, _) = smaxpool_forward(&x, 2, 2).unwrap();
    assert_eq!(out.dims(), (1, 1, 3, 1));
    assert_eq!(out.data(), &[1.0, 3.0, 4.0]);

    // ties go to the first cell in scan order
    let flat = Tensor4::from_fn(1, 2, 2, 1, |_, _, _, _| 9.0);
    let (_, argmax) = smaxpool_forward(&flat, 2, 2).unwrap();
    assert_eq!(argmax, vec![0]);
}

#[test]
fn hex_pooling_dims_follow_the_reference_chain() {
    assert_eq!(hmaxpool_output_dims(18, 15).unwrap(), (8, 5));
    assert_eq!(hmaxpool_output_dims(16, 13).unwrap(), (7, 5));
    assert_eq!(hmaxpool_output_dims(3, 3).unwrap(), (1, 1));
    assert!(hmaxpool_output_dims(2, 5).is_err());
    assert!(hmaxpool_output_dims(5, 2).is_err());
}

#[test]
fn hex_pooling_window_centers_spread_to_the_edges() {
    // one hot spot at (10, 4): with centers {1,3,5,7,10,12,14,16} exactly the
    // window centered there sees it; evenly *strided* centers would let two
    // neighboring windows catch it instead
    let mut x = Tensor4::zeros(1, 18, 15, 1);
    *x.at_mut(0, 10, 4, 0) = 100.0;
    let (out, argmax) = hmaxpool_forward(&x).unwrap();
    assert_eq!(out.dims(), (1, 8, 5, 1));
    let hot = x.index(0, 10, 4, 0);
    let winners: Vec<usize> = argmax
        .iter()
        .enumerate()
        .filter_map(|(o, &s)| (s == Some(hot)).then_some(o))
        .collect();
    assert_eq!(winners, vec![out.index(0, 4, 1, 0)]);
    assert_eq!(out.at(0, 4, 1, 0), 100.0);

    // first and last windows hug the raster: row 1 and row 16
    let mut x = Tensor4::zeros(1, 18, 15, 1);
    *x.at_mut(0, 0, 1, 0) = 7.0; // reachable only from center row 1 (dr = -1)
    *x.at_mut(0, 17, 1, 0) = 9.0; // reachable only from center row 16
    let (out, _) = hmaxpool_forward(&x).unwrap();
    assert_eq!(out.at(0, 0, 0, 0), 7.0);
    assert_eq!(out.at(0, 7, 0, 0), 9.0);
}

#[test]
fn hex_pooling_pads_with_zero_and_drops_those_gradients() {
    // 3x4 raster: the second window (center column 4) pokes out of the
    // raster; with all-negative inputs the zero padding wins the maximum
    let x = Tensor4::from_fn(1, 3, 4, 1, |_, _, _, _| -5.0);
    let (out, argmax) = hmaxpool_forward(&x).unwrap();
    assert_eq!(out.dims(), (1, 1, 2, 1));
    assert_eq!(out.at(0, 0, 1, 0), 0.0);
    assert_eq!(argmax[out.index(0, 0, 1, 0)], None);

    let grad_out = Tensor4::from_data(1, 1, 2, 1, vec![3.0, 4.0]).unwrap();
    let gx = hmaxpool_backward((1, 3, 4, 1), &argmax, &grad_out).unwrap();
    // the padded window's gradient vanishes; the interior one lands whole
    assert_eq!(gx.data().iter().sum::<f64>(), 3.0);

    // stale argmax from some other shape is rejected
    assert!(hmaxpool_backward((1, 18, 15, 1), &argmax, &grad_out).is_err());
}

#[test]
fn hex_pooling_routes_gradients_to_the_winners() {
    let mut next = xorshift_stream(0x7001);
    let x = Tensor4::from_fn(1, 9, 9, 2, |_, _, _, _| next());
    let (out, argmax) = hmaxpool_forward(&x).unwrap();
    let g: Vec<f64> = (0..out.len()).map(|_| next()).collect();
    let grad_out = Tensor4::from_data(1, out.rows(), out.cols(), 2, g.clone()).unwrap();
    let gx = hmaxpool_backward(x.dims(), &argmax, &grad_out).unwrap();
    let mut expected = vec![0.0; x.len()];
    for (slot, &gv) in argmax.iter().zip(&g) {
        if let Some(idx) = slot {
            expected[*idx] += gv;
        }
    }
    assert_eq!(gx.data(), &expected[..]);
}

// -------------------------------------------------------- dense, activations

#[test]
fn dense_layer_matches_a_hand_product_and_finite_differences() {
    let params = {
        let mut p = DenseParams::new(2, 3).unwrap();
        p.weights_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        p.bias_mut().copy_from_slice(&[0.5, -0.5, 0.0]);
        p
    };
    let x = Tensor4::from_data(1, 1, 1, 2, vec![2.0, -1.0]).unwrap();
    let out = dense_forward(&x, &params).unwrap();
    // [2, -1] * [[1,2,3],[4,5,6]] + [0.5, -0.5, 0] = [-1.5, -1.5, 0.0]
    assert_eq!(out.data(), &[-1.5, -1.5, 0.0]);

    let mut next = xorshift_stream(0xdead);
    let x = Tensor4::from_fn(3, 1, 1, 4, |_, _, _, _| next());
    let mut params = DenseParams::new(4, 2).unwrap();
    for v in params.weights_mut() {
        *v = next();
    }
    for v in params.bias_mut() {
        *v = next();
    }
    let w: Vec<f64> = (0..6).map(|_| next()).collect();
    let loss = |wd: &[f64], bd: &[f64], xd: &[f64]| -> f64 {
        let mut p = DenseParams::new(4, 2).unwrap();
        p.weights_mut().copy_from_slice(wd);
        p.bias_mut().copy_from_slice(bd);
        let x = Tensor4::from_data(3, 1, 1, 4, xd.to_vec()).unwrap();
        dense_forward(&x, &p).unwrap().data().iter().zip(&w).map(|(o, wv)| o * wv).sum()
    };
    let grad_out = Tensor4::from_data(3, 1, 1, 2, w.clone()).unwrap();
    let (gx, gp) = dense_backward(&x, &params, &grad_out).unwrap();
    let h = 1e-5;
    let weights = params.weights().to_vec();
    let bias = params.bias().to_vec();
    for idx in 0..x.len() {
        let mut lo = x.data().to_vec();
        let mut hi = lo.clone();
        lo[idx] -= h;
        hi[idx] += h;
        let fd = (loss(&weights, &bias, &hi) - loss(&weights, &bias, &lo)) / (2.0 * h);
        assert!((gx.data()[idx] - fd).abs() <= fd_tolerance(gx.data()[idx], fd));
    }
    for idx in 0..weights.len() {
        let mut lo = weights.clone();
        let mut hi = weights.clone();
        lo[idx] -= h;
        hi[idx] += h;
        let fd = (loss(&hi, &bias, x.data()) - loss(&lo, &bias, x.data())) / (2.0 * h);
        assert!((gp.weights[idx] - fd).abs() <= fd_tolerance(gp.weights[idx], fd));
    }
    for idx in 0..bias.len() {
        let mut lo = bias.clone();
        let mut hi = bias.clone();
        lo[idx] -= h;
        hi[idx] += h;
        let fd = (loss(&weights, &hi, x.data()) - loss(&weights, &lo, x.data())) / (2.0 * h);
        assert!((gp.bias[idx] - fd).abs() <= fd_tolerance(gp.bias[idx], fd));
    }
}

#[test]
fn rectifier_zeroes_negatives_and_their_gradients() {
    let x = Tensor4::from_data(1, 1, 1, 4, vec![-2.0, 0.0, 0.5, 3.0]).unwrap();
    let y = relu_forward(&x);
    assert_eq!(y.data(), &[0.0, 0.0, 0.5, 3.0]);
    let g = Tensor4::from_data(1, 1, 1, 4, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
    let gx = relu_backward(&x, &g).unwrap();
    assert_eq!(gx.data(), &[0.0, 0.0, 1.0, 1.0]);
}

#[test]
fn dropout_scales_survivors_and_is_free_at_rate_zero() {
    let x = Tensor4::from_fn(1, 1, 1, 10_000, |_, _, _, ch| 1.0 + (ch % 3) as f64);
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let (y, mask) = dropout_forward(&x, 0.25, &mut rng).unwrap();
    let mut dropped = 0usize;
    for (i, (&m, &v)) in mask.iter().zip(y.data()).enumerate() {
        assert!(m == 0.0 || (m - 1.0 / 0.75).abs() < 1e-12);
        assert!((v - x.data()[i] * m).abs() < 1e-12);
        if m == 0.0 {
            dropped += 1;
        }
    }
    let rate = dropped as f64 / mask.len() as f64;
    assert!((rate - 0.25).abs() < 0.02, "observed drop rate {rate}");
    // survivors are scaled so the expected sum is preserved
    let ratio = y.data().iter().sum::<f64>() / x.data().iter().sum::<f64>();
    assert!((ratio - 1.0).abs() < 0.03, "expectation drifted: {ratio}");

    let g = Tensor4::from_fn(1, 1, 1, 10_000, |_, _, _, _| 1.0);
    let gx = dropout_backward(&mask, &g).unwrap();
    for (gv, m) in gx.data().iter().zip(&mask) {
        assert_eq!(gv, m);
    }

    // rate zero must not consume randomness
    let mut a = ChaCha20Rng::seed_from_u64(1);
    let mut b = ChaCha20Rng::seed_from_u64(1);
    let (y0, m0) = dropout_forward(&x, 0.0, &mut a).unwrap();
    assert_eq!(y0.data(), x.data());
    assert!(m0.iter().all(|&m| m == 1.0));
    use rand::Rng as _;
    assert_eq!(a.random::<u64>(), b.random::<u64>());

    assert!(dropout_forward(&x, 1.0, &mut a).is_err());
    assert!(dropout_forward(&x, -0.1, &mut a).is_err());
}

#[test]
fn softmax_loss_matches_hand_values_and_finite_differences() {
    let logits = Tensor4::from_data(2, 1, 1, 2, vec![0.0, 0.0, 2.0, -1.0]).unwrap();
    let (loss, grad, predictions) = softmax_cross_entropy(&logits, &[0, 1]).unwrap();
    // first row: ln 2; second: -ln(softmax[1]) with logits (2, -1)
    let p1 = (-1.0f64 - 2.0).exp() / (1.0 + (-3.0f64).exp());
    let expected = (2.0f64.ln() + -(p1.ln())) / 2.0;
    assert!((loss - expected).abs() < 1e-12);
    assert_eq!(predictions, vec![0, 0]);
    assert!((grad.at(0, 0, 0, 0) - (0.5 - 1.0) / 2.0).abs() < 1e-12);

    assert!(softmax_cross_entropy(&logits, &[0, 2]).is_err());
    assert!(softmax_cross_entropy(&logits, &[0]).is_err());

    let mut next = xorshift_stream(0xf00d);
    let logits = Tensor4::from_fn(3, 1, 1, 5, |_, _, _, _| next() * 3.0);
    let labels = [4usize, 0, 2];
    let (_, grad, _) = softmax_cross_entropy(&logits, &labels).unwrap();
    let h = 1e-6;
    for idx in 0..logits.len() {
        let mut lo = logits.data().to_vec();
        let mut hi = lo.clone();
        lo[idx] -= h;
        hi[idx] += h;
        let f = |d: Vec<f64>| {
            let t = Tensor4::from_data(3, 1, 1, 5, d).unwrap();
            softmax_cross_entropy(&t, &labels).unwrap().0
        };
        let fd = (f(hi) - f(lo)) / (2.0 * h);
        let a = grad.data()[idx];
        assert!((a - fd).abs() <= fd_tolerance(a, fd), "logit {idx}: {a} vs {fd}");
    }
}

#[test]
fn glorot_samples_respect_the_fan_limit() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let fan_in = 30;
    let fan_out = 18;
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let values = glorot_init(fan_in, fan_out, 20_000, &mut rng);
    assert!(values.iter().all(|v| (-limit..limit).contains(v)));
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    assert!(mean.abs() < limit / 20.0, "mean {mean} is suspiciously off-center");
    // deterministic per seed
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    assert_eq!(glorot_init(fan_in, fan_out, 20_000, &mut rng), values);
}

#[test]
fn adam_follows_the_reference_recurrence() {
    let cfg = AdamConfig::default();
    let mut params = vec![0.0f64];
    let mut state = AdamState::new(1);
    let (mut m, mut v) = (0.0f64, 0.0f64);
    let mut reference = 0.0f64;
    for step in 1..=5 {
        let g = step as f64; // arbitrary deterministic gradient stream
        adam_step(&mut params, &[g], &mut state, &cfg).unwrap();
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        let m_hat = m / (1.0 - cfg.beta1.powi(step));
        let v_hat = v / (1.0 - cfg.beta2.powi(step));
        reference -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        assert!((params[0] - reference).abs() < 1e-15);
    }
    assert!(adam_step(&mut params, &[1.0, 2.0], &mut state, &cfg).is_err());
}

// --------------------------------------------------- models and param counts

#[test]
fn reference_architectures_count_the_reference_parameters() {
    let (rows, total) = hexlat::hexnn::count_params(&ModelSpec::s_cnn()).unwrap();
    let params: Vec<usize> = rows.iter().map(|r| r.params).collect();
    assert_eq!(params, vec![896, 9248, 0, 18496, 0, 0, 0, 524_416, 0, 12_900]);
    assert_eq!(total, 565_956);
    assert_eq!(rows[4].output_shape, Shape::Spatial(8, 8, 64));
    assert_eq!(rows[6].output_shape, Shape::Flat(4096));

    let (rows, total) = hexlat::hexnn::count_params(&ModelSpec::h_cnn()).unwrap();
    let params: Vec<usize> = rows.iter().map(|r| r.params).collect();
    assert_eq!(params, vec![704, 7200, 0, 14_400, 0, 0, 0, 327_808, 0, 12_900]);
    assert_eq!(total, 363_012);
    assert_eq!(rows[1].output_shape, Shape::Spatial(18, 15, 32));
    assert_eq!(rows[4].output_shape, Shape::Spatial(8, 5, 64));
    assert_eq!(rows[6].output_shape, Shape::Flat(2560));
}

#[test]
fn the_wider_square_pooling_variant_counts_as_documented() {
    let mut layers: Vec<LayerSpec> = ModelSpec::s_cnn().layers().to_vec();
    let pool = layers.iter_mut().find(|l| l.name == "pool").unwrap();
    pool.kind = LayerKind::SquareMaxPool { size: 3, stride: 3 };
    let spec = ModelSpec::new((32, 32, 3), layers).unwrap();
    let (rows, total) = hexlat::hexnn::count_params(&spec).unwrap();
    assert_eq!(total, 336_580);
    assert_eq!(rows[4].output_shape, Shape::Spatial(6, 6, 64));
}

#[test]
fn summary_tables_are_stable_and_group_digits() {
    assert_eq!(group_thousands(0), "0");
    assert_eq!(group_thousands(896), "896");
    assert_eq!(group_thousands(9248), "9 248");
    assert_eq!(group_thousands(565_956), "565 956");
    assert_eq!(group_thousands(1_234_567), "1 234 567");

    let s = summary_table(&ModelSpec::s_cnn()).unwrap();
    assert!(s.contains("Layer"));
    assert!(s.contains("Size / rate"));
    assert!(s.contains("conv1"));
    assert!(s.contains("SConv2D"));
    assert!(s.contains("3 x 3"));
    assert!(s.contains("(16, 16, 32)"));
    assert!(s.contains("9 248"));
    assert!(s.trim_end().ends_with("Total trainable params: 565 956"));
    assert_eq!(s, summary_table(&ModelSpec::s_cnn()).unwrap());

    let h = summary_table(&ModelSpec::h_cnn()).unwrap();
    assert!(h.contains("HConv2D"));
    assert!(h.contains("7^1"));
    assert!(h.contains("HMaxPool2D"));
    assert!(h.contains("(18, 15, 32)"));
    assert!(h.trim_end().ends_with("Total trainable params: 363 012"));
}

#[test]
fn model_builders_rescale_cleanly() {
    let spec = ModelSpec::h_cnn().with_input(30, 26, 1).unwrap().with_classes(10).unwrap();
    assert_eq!(spec.input(), (30, 26, 1));
    assert_eq!(spec.classes(), 10);
    let shapes = spec.shapes().unwrap();
    assert_eq!(shapes[1], Shape::Spatial(16, 13, 32));
    assert_eq!(shapes[4], Shape::Spatial(7, 5, 64));
    assert_eq!(shapes[6], Shape::Flat(2240));
    assert_eq!(*shapes.last().unwrap(), Shape::Flat(10));
    let (_, total) = hexlat::hexnn::count_params(&spec).unwrap();
    // 7*1*32+32, 7*32*32+32, 7*32*64+64, 2240*128+128, 128*10+10
    assert_eq!(total, 256 + 7200 + 14_400 + 286_848 + 1290);
}

#[test]
fn inconsistent_chains_are_rejected() {
    // dense straight on a spatial activation
    assert!(ModelSpec::new(
        (8, 8, 1),
        vec![LayerSpec::new("dense", LayerKind::Dense { units: 4, relu: false })],
    )
    .is_err());
    // pooling an input too small for a single window
    assert!(ModelSpec::new((2, 2, 1), vec![LayerSpec::new("pool", LayerKind::HexMaxPool)]).is_err());
    // dropout rate at the closed end
    assert!(ModelSpec::new(
        (8, 8, 1),
        vec![LayerSpec::new("d", LayerKind::Dropout { rate: 1.0 })],
    )
    .is_err());
    assert!(ModelSpec::h_cnn().with_classes(0).is_err());
    assert!(ModelSpec::h_cnn().with_input(0, 4, 1).is_err());
}

// -------------------------------------------------------- training & weights

/// Two linearly separable classes on a small raster: bright left half versus
/// bright right half, with deterministic per-sample jitter.
fn two_class_dataset(rows: usize, cols: usize, n_train: usize, n_test: usize) -> Dataset {
    let mut next = xorshift_stream(0x5eed);
    let mut make = |count: usize| {
        let mut samples = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        for i in 0..count {
            let class = i % 2;
            let mut data = Vec::with_capacity(rows * cols);
            for _r in 0..rows {
                for c in 0..cols {
                    let bright = if class == 0 { c < cols / 2 } else { c >= cols / 2 };
                    let base = if bright { 0.8 } else { 0.1 };
                    data.push((base + 0.1 * next()).clamp(0.0, 1.0));
                }
            }
            samples.push(data);
            labels.push(class);
        }
        (samples, labels)
    };
    let (train_s, train_l) = make(n_train);
    let (test_s, test_l) = make(n_test);
    Dataset::new(rows, cols, 1, 2, train_s, train_l, test_s, test_l).unwrap()
}

fn tiny_hex_spec() -> ModelSpec {
    ModelSpec::new(
        (12, 10, 1),
        vec![
            LayerSpec::new("conv", LayerKind::HexConv { filters: 4, stride: 1, relu: true }),
            LayerSpec::new("pool", LayerKind::HexMaxPool),
            LayerSpec::new("flatten", LayerKind::Flatten),
            LayerSpec::new("dense", LayerKind::Dense { units: 2, relu: false }),
        ],
    )
    .unwrap()
}

#[test]
fn training_learns_a_separable_task_deterministically() {
    let data = two_class_dataset(12, 10, 64, 32);
    let spec = tiny_hex_spec();
    let mut config = TrainConfig::new(6, 42);
    config.batch_size = 8;
    config.adam.learning_rate = 0.01;

    let outcome = train(&spec, &data, &config).unwrap();
    assert_eq!(outcome.history.len(), 6);
    let last = outcome.history.last().unwrap();
    assert!(
        last.train_accuracy >= 0.9,
        "did not learn: {:?}",
        outcome.history
    );
    assert!(outcome.test_accuracy >= 0.9, "test accuracy {}", outcome.test_accuracy);

    // bitwise determinism: same seed, same history, same weights
    let again = train(&spec, &data, &config).unwrap();
    for (a, b) in outcome.history.iter().zip(&again.history) {
        assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
        assert_eq!(a.train_accuracy.to_bits(), b.train_accuracy.to_bits());
    }
    for ((na, _, ta), (nb, _, tb)) in outcome
        .model
        .named_tensors()
        .iter()
        .zip(again.model.named_tensors().iter())
    {
        assert_eq!(na, nb);
        assert!(ta.iter().zip(tb.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    // a different seed diverges
    let mut other = config;
    other.seed = 43;
    let third = train(&spec, &data, &other).unwrap();
    assert_ne!(
        third.history.last().unwrap().train_loss.to_bits(),
        last.train_loss.to_bits()
    );

    // the returned model evaluates to the reported numbers
    let (loss, acc) = evaluate(&outcome.model, &data).unwrap();
    assert_eq!(loss.to_bits(), outcome.test_loss.to_bits());
    assert_eq!(acc.to_bits(), outcome.test_accuracy.to_bits());
}

#[test]
fn square_counterpart_learns_the_same_task() {
    let data = two_class_dataset(12, 10, 64, 32);
    let spec = ModelSpec::new(
        (12, 10, 1),
        vec![
            LayerSpec::new("conv", LayerKind::SquareConv { filters: 4, stride: 1, relu: true }),
            LayerSpec::new("pool", LayerKind::SquareMaxPool { size: 2, stride: 2 }),
            LayerSpec::new("flatten", LayerKind::Flatten),
            LayerSpec::new("dense", LayerKind::Dense { units: 2, relu: false }),
        ],
    )
    .unwrap();
    let mut config = TrainConfig::new(6, 7);
    config.batch_size = 8;
    config.adam.learning_rate = 0.01;
    let outcome = train(&spec, &data, &config).unwrap();
    assert!(outcome.test_accuracy >= 0.9, "test accuracy {}", outcome.test_accuracy);
}

#[test]
fn masked_tap_positions_stay_exactly_zero_through_training() {
    let data = two_class_dataset(12, 10, 32, 8);
    let spec = tiny_hex_spec();
    let mut config = TrainConfig::new(2, 1);
    config.batch_size = 8;
    let outcome = train(&spec, &data, &config).unwrap();
    let tensors = outcome.model.named_tensors();
    let (_, dims, taps) = tensors.iter().find(|(n, _, _)| n == "conv.taps").unwrap();
    assert_eq!(dims, &vec![7, 1, 4]);
    let kernel = HexKernelPair::from_parts(1, 4, taps.to_vec(), vec![0.0; 4]).unwrap();
    for parity in [Parity::Even, Parity::Odd] {
        let w = kernel.parity_weights(parity);
        let mask = parity.mask();
        let mut zeros = 0;
        for ky in 0..3 {
            for kx in 0..3 {
                if !mask[ky][kx] {
                    for v in &w[(ky * 3 + kx) * 4..(ky * 3 + kx + 1) * 4] {
                        assert_eq!(*v, 0.0);
                        zeros += 1;
                    }
                }
            }
        }
        assert_eq!(zeros, 8); // two masked-off cells, four filters
    }
}

#[test]
fn weight_snapshots_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.hxnn");
    let spec = tiny_hex_spec();
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let trained = Model::init(&spec, &mut rng).unwrap();
    save_weights(&trained, &path).unwrap();

    // a differently initialized model converges to the exact same tensors
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let mut restored = Model::init(&spec, &mut rng).unwrap();
    load_weights(&mut restored, &path).unwrap();
    for ((na, da, ta), (nb, db, tb)) in
        trained.named_tensors().iter().zip(restored.named_tensors().iter())
    {
        assert_eq!((na, da), (nb, db));
        assert!(ta.iter().zip(tb.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    // and produces identical logits
    let probe = Tensor4::from_fn(2, 12, 10, 1, |b, r, c, _| ((b + r * c) % 7) as f64 / 7.0);
    let a = trained.forward_eval(&probe).unwrap();
    let b = restored.forward_eval(&probe).unwrap();
    assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));

    // architecture mismatch is caught by name/shape, not silently accepted
    let other = ModelSpec::new(
        (12, 10, 1),
        vec![
            LayerSpec::new("conv", LayerKind::HexConv { filters: 8, stride: 1, relu: true }),
            LayerSpec::new("flatten", LayerKind::Flatten),
            LayerSpec::new("dense", LayerKind::Dense { units: 2, relu: false }),
        ],
    )
    .unwrap();
    let mut wrong = Model::init(&other, &mut rng).unwrap();
    assert!(load_weights(&mut wrong, &path).is_err());

    // corruption is reported with an offset
    let bytes = std::fs::read(&path).unwrap();
    let truncated_path = dir.path().join("truncated.hxnn");
    std::fs::write(&truncated_path, &bytes[..bytes.len() / 2]).unwrap();
    let mut fresh = Model::init(&spec, &mut rng).unwrap();
    match load_weights(&mut fresh, &truncated_path) {
        Err(hexlat::Error::Format { offset, .. }) => assert!(offset > 0),
        other => panic!("expected a format error, got {other:?}"),
    }
    let bad_magic_path = dir.path().join("bad.hxnn");
    let mut bad = bytes.clone();
    bad[0] = b'Z';
    std::fs::write(&bad_magic_path, &bad).unwrap();
    assert!(matches!(
        load_weights(&mut fresh, &bad_magic_path),
        Err(hexlat::Error::Format { offset: 0, .. })
    ));
}

#[test]
fn tensors_validate_their_shape() {
    assert!(Tensor4::from_data(1, 2, 2, 1, vec![0.0; 3]).is_err());
    assert!(Tensor4::from_data(0, 2, 2, 1, vec![]).is_err());
    let t = Tensor4::from_fn(2, 3, 4, 5, |b, r, c, ch| (b * 1000 + r * 100 + c * 10 + ch) as f64);
    assert_eq!(t.at(1, 2, 3, 4), 1234.0);
    assert_eq!(t.len(), 2 * 3 * 4 * 5);
    let flat = t.flattened();
    assert_eq!(flat.dims(), (2, 1, 1, 60));
    assert_eq!(flat.data(), t.data());
}
