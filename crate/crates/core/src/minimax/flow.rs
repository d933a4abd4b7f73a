//! One node update shared by the path and mesh flows: maximize along the
//! local tangent directions, then take an Armijo step down the gradient
//! component orthogonal to them.

use super::ray::golden_max;
use crate::coef::CoefVec;
use crate::functional::Functional;
use crate::optim::LineSearch;

pub(crate) struct NodeUpdate {
    pub point: CoefVec,
    pub value: f64,
    /// `‖∇f‖` at the node after the tangent maximization.
    pub residual: f64,
    /// Norm of the transverse gradient that was descended.
    pub transverse: f64,
    pub moved: bool,
}

/// H-orthonormalizes `vectors`, dropping near-dependent ones.
fn orthonormalize(f: &Functional, vectors: &[CoefVec]) -> Vec<CoefVec> {
    let b = f.basis();
    let mut out: Vec<CoefVec> = Vec::new();
    for v in vectors {
        let scale = b.h_norm(v);
        if scale == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for q in &out {
            let c = b.h_inner(&w, q);
            w = w.axpy(-c, q);
        }
        let n = b.h_norm(&w);
        if n > 1e-10 * scale {
            out.push(w.scaled(1.0 / n));
        }
    }
    out
}

pub(crate) fn update_node(f: &Functional, node: &CoefVec, tangents: &[CoefVec], ls: LineSearch) -> NodeUpdate {
    let b = f.basis();
    let mut u = node.clone();
    let mut value = f.energy(&u);
    for t in tangents {
        let phi = |s: f64| f.energy(&u.axpy(s, t));
        let s = golden_max(&phi, -1.0, 1.0, 1e-10);
        let v = phi(s);
        if v > value {
            u = u.axpy(s, t);
            value = v;
        }
    }
    let basis_t = orthonormalize(f, tangents);
    let grad = f.gradient(&u);
    let residual = b.h_norm(&grad);
    let mut g = grad;
    for q in &basis_t {
        let c = b.h_inner(&g, q);
        g = g.axpy(-c, q);
    }
    let transverse = b.h_norm(&g);
    let g2 = transverse * transverse;
    let mut s = ls.initial_step;
    for _ in 0..=ls.max_halvings {
        let trial = u.axpy(-s, &g);
        let tv = f.energy(&trial);
        if tv <= value - ls.c * s * g2 {
            return NodeUpdate {
                point: trial,
                value: tv,
                residual,
                transverse,
                moved: true,
            };
        }
        s *= 0.5;
    }
    NodeUpdate {
        point: u,
        value,
        residual,
        transverse,
        moved: false,
    }
}
