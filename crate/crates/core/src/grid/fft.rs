// SPDX-License-Identifier: Apache-2.0

//! Multi-axis complex FFTs on row-major tensors.

use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::C64;

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut p = planner().lock().expect("fft planner poisoned");
    if inverse {
        p.plan_fft_inverse(len)
    } else {
        p.plan_fft_forward(len)
    }
}

/// Transform `data` (row-major with the given `shape`) along each of `axes`.
///
/// The forward transform divides by the axis length; the inverse does not.
/// Each line is transformed independently, so the result does not depend on
/// the thread count.
pub fn transform_axes(data: &mut [C64], shape: &[usize], axes: &[usize], inverse: bool) {
    let total: usize = shape.iter().product();
    assert_eq!(data.len(), total, "tensor size does not match shape");
    for &axis in axes {
        let len = shape[axis];
        let stride: usize = shape[axis + 1..].iter().product();
        let fft = plan(len, inverse);
        let scale = if inverse { 1.0 } else { 1.0 / len as f64 };
        if stride == 1 {
            data.par_chunks_mut(len).for_each(|line| {
                fft.process(line);
                if !inverse {
                    line.iter_mut().for_each(|c| *c *= scale);
                }
            });
        } else {
            // lines are strided; each outer block of size len*stride is independent
            data.par_chunks_mut(len * stride).for_each(|block| {
                let mut line = vec![C64::new(0.0, 0.0); len];
                for s in 0..stride {
                    for (k, c) in line.iter_mut().enumerate() {
                        *c = block[k * stride + s];
                    }
                    fft.process(&mut line);
                    for (k, c) in line.iter().enumerate() {
                        block[k * stride + s] = *c * scale;
                    }
                }
            });
        }
    }
}
